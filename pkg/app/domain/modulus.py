from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.domain.base import BasePoint, iter_orbit_blocks
from app.domain.circlemap import CocycleFamily, RotationCurve, rotation_curve, trajectory
from app.domain.errors import DomainError, PreconditionError
from app.domain.schrodinger import PotentialModel, schrodinger_family

logger = logging.getLogger(__name__)

# 보조정리 부등식 허용 오차
LEMMA_SLACK = 1e-9

# n_j = min{n : x′_n − x_n ≥ j − CROSSING_TOL}
CROSSING_TOL = 1e-9

# 기본 가정: δ = C|a′ − a| ≤ DELTA_MAX, |a′ − a| < C
DELTA_MAX = 0.1

MIN_R_STEPS = 1000

# 교차 빈도 검사: (j/n_j)·log(1/2δ) ≤ R/4 · (1 + 0.5)
CROSSING_RATE_SLACK = 1.5

STANDING_HYPOTHESIS = "delta = C|a' - a| < 0.1 and |a' - a| < C"


# ===== Domain Types =====

@dataclass(frozen=True)
class CrossingRecord:
    j: int
    n_j: int
    # Σ_{l=n_j+1}^{n_{j+1}} log M_{σ^{l−1}ω}; 다음 교차가 없으면 None
    segment_log_sum: Optional[float] = None


@dataclass(frozen=True)
class CrossingTimes:
    records: List[CrossingRecord]
    swapped: bool
    n_max: int
    diagnostic: Optional[str] = None

    def __iter__(self) -> Iterator[CrossingRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    @property
    def times(self) -> List[int]:
        return [r.n_j for r in self.records]


@dataclass(frozen=True)
class StepLemmaResult:
    passed: bool
    min_margin: float
    worst: Tuple[int, int]  # (n, j)
    corollary_passed: bool
    corollary_min_margin: float
    delta: float
    swapped: bool
    n: int
    j_range: Tuple[int, int]


@dataclass(frozen=True)
class SegmentCheck:
    j: int
    n_start: int
    n_end: int
    log_sum: float
    margin: float


@dataclass(frozen=True)
class SegmentLemmaResult:
    verdict: str  # pass | fail | inconclusive
    segments: List[SegmentCheck]
    min_margin: Optional[float]
    threshold: float  # log(1/(2δ))
    delta: float
    swapped: bool
    crossing_rate: Optional[Dict[str, Any]] = None
    diagnostic: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"


@dataclass(frozen=True)
class LemmaReport:
    a: float
    a2: float
    n: int
    step: StepLemmaResult
    segment: SegmentLemmaResult
    crossings: CrossingTimes
    R: float
    family: Dict[str, Any]
    seed: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.step.passed and self.step.corollary_passed and self.segment.verdict != "fail"


@dataclass(frozen=True)
class REstimate:
    value: float
    # Birkhoff 꼬리 허용치 |8·A_n − 8·A_{2n}|
    allowance: float
    n: int


@dataclass(frozen=True)
class PairRecord:
    a: float
    a2: float
    drho: float
    product: float  # |Δρ|·log(1/|Δa|)
    allowance: float
    certified: bool  # |Δa| ≤ threshold
    ok: bool


@dataclass(frozen=True)
class ModulusReport:
    pairs: List[PairRecord]
    observed_sup: float
    distant_sup: float
    R: float
    R_allowance: float
    bound: float  # 보고 단위의 상수: factor·rotation_scale·R
    C: float
    threshold: float
    verdict: str  # certified | violated | inconclusive
    n: int
    quantity: str = "rho"
    factor: float = 1.0
    delta_form_ok: Optional[bool] = None
    diagnostic: Optional[str] = None
    family: Dict[str, Any] = field(default_factory=dict)
    grid: Dict[str, Any] = field(default_factory=dict)
    omega0: Any = None
    seed: Optional[int] = None

    @property
    def certified(self) -> bool:
        return self.verdict == "certified"

    def summary(self) -> str:
        lines = [
            f"verdict: {self.verdict}",
            f"quantity: {self.quantity} (factor {self.factor:g})",
            f"observed sup |d{self.quantity}|*log(1/|da|): {self.observed_sup:.6g}",
            f"bound: {self.bound:.6g} (R={self.R:.6g} +/- {self.R_allowance:.3g}, C={self.C:.6g})",
            f"pair threshold |da| <= {self.threshold:.6g}",
            f"distant pairs (reported only): sup {self.distant_sup:.6g}",
        ]
        if self.delta_form_ok is not None:
            lines.append(f"delta-form bound holds: {self.delta_form_ok}")
        if self.diagnostic:
            lines.append(f"note: {self.diagnostic}")
        return "\n".join(lines)


# ===== pair runs =====

@dataclass(frozen=True)
class _PairRun:
    gap: np.ndarray     # (N+1,) 방향을 맞춘 x′_k − x_k (fiber 단위)
    log_m: np.ndarray   # (N,) log M_{σ^{l−1}ω}
    m: np.ndarray       # (N,)
    delta: float
    swapped: bool


def _delta(fam: CocycleFamily, a: float, a2: float) -> float:
    return fam.C * abs(float(a2) - float(a))


def _check_hypothesis(fam: CocycleFamily, a: float, a2: float) -> float:
    delta = _delta(fam, a, a2)
    da = abs(float(a2) - float(a))
    if delta > DELTA_MAX or da >= fam.C:
        raise PreconditionError(
            f"standing hypothesis violated: {STANDING_HYPOTHESIS} "
            f"(C={fam.C:.6g}, |a'-a|={da:.6g}, delta={delta:.6g})"
        )
    return delta


def _pair_run(fam: CocycleFamily, a: float, a2: float, omega0: BasePoint, n: int) -> _PairRun:
    if n < 1:
        raise DomainError(f"N must be >= 1, got {n}")
    traj = trajectory(fam, [float(a), float(a2)], omega0, int(n), x0=0.0)
    gap = traj.gap(1, 0)
    # ρ(a′) < ρ(a) 이면 역할을 바꾼다
    swapped = bool(gap[-1] < 0.0)
    if swapped:
        gap = -gap
    m = np.asarray(fam.M_of(traj.fiber), dtype=np.float64)
    return _PairRun(gap=gap, log_m=np.log(m), m=m, delta=_delta(fam, a, a2), swapped=swapped)


def _crossings(run: _PairRun, n_max: int) -> CrossingTimes:
    lead = np.maximum.accumulate(run.gap)
    top = int(math.floor(lead[-1] + CROSSING_TOL))
    times = [int(np.searchsorted(lead, j - CROSSING_TOL, side="left")) for j in range(max(top, 0) + 1)]

    prefix = np.concatenate(([0.0], np.cumsum(run.log_m)))
    records = []
    for j, n_j in enumerate(times):
        seg = float(prefix[times[j + 1]] - prefix[n_j]) if j + 1 < len(times) else None
        records.append(CrossingRecord(j=j, n_j=n_j, segment_log_sum=seg))

    diagnostic = None
    if len(times) < 2:
        diagnostic = (
            f"no crossing within N_max={n_max} for j=1; "
            "consistent with equal rotation numbers at a and a'"
        )
        logger.info("[crossing] %s", diagnostic)
    return CrossingTimes(records=records, swapped=run.swapped, n_max=n_max, diagnostic=diagnostic)


# ===== Operations =====

def crossing_times(fam: CocycleFamily, a: float, a2: float, omega0: BasePoint, n_max: int) -> CrossingTimes:
    """n_j = min{n ≥ 0 | x′_n ≥ x_n + j}, x0 = 0, 같은 ω0. j=0은 항상 기록된다."""
    return _crossings(_pair_run(fam, a, a2, omega0, n_max), int(n_max))


def _step_margins(run: _PairRun, js: np.ndarray, chunk: int = 1 << 14):
    """
    margin   = δ + M·max(0, g_{n−1} − j) − (g_n − j)
    corollary: M·d_{n−1,j} − d_{n,j}, d_{n,j} = δ + max(0, g_n − j)
    """
    delta = run.delta
    g = run.gap
    n_total = g.shape[0] - 1
    best = (math.inf, 0, 0)
    best_cor = math.inf
    jj = js[None, :].astype(np.float64)
    for s in range(0, n_total, chunk):
        e = min(n_total, s + chunk)
        prev = g[s:e, None] - jj
        cur = g[s + 1:e + 1, None] - jj
        m = run.m[s:e, None]
        margin = delta + m * np.maximum(0.0, prev) - cur
        idx = np.unravel_index(int(np.argmin(margin)), margin.shape)
        if margin[idx] < best[0]:
            best = (float(margin[idx]), s + int(idx[0]) + 1, int(js[idx[1]]))
        d_prev = delta + np.maximum(0.0, prev)
        d_cur = delta + np.maximum(0.0, cur)
        best_cor = min(best_cor, float(np.min(m * d_prev - d_cur)))
    return best, best_cor


def verify_step_lemma(
    fam: CocycleFamily,
    a: float,
    a2: float,
    omega0: BasePoint,
    n: int,
    j_range: Sequence[int] = range(0, 51),
) -> StepLemmaResult:
    """
    x′_n − x_n − j ≤ δ + M_{σ^{n−1}ω}·max(0, x′_{n−1} − x_{n−1} − j), 모든 n ≤ N, j ∈ j_range.
    같은 궤도에서 따름정리 d_{n,j} ≤ M·d_{n−1,j} 도 확인한다.
    """
    _check_hypothesis(fam, a, a2)
    run = _pair_run(fam, a, a2, omega0, n)
    return _step_result(run, j_range, n)


def _step_result(run: _PairRun, j_range: Sequence[int], n: int) -> StepLemmaResult:
    js = np.asarray(list(j_range), dtype=np.int64)
    if js.size == 0:
        raise DomainError("j range is empty")
    (margin, worst_n, worst_j), cor = _step_margins(run, js)
    return StepLemmaResult(
        passed=margin >= -LEMMA_SLACK,
        min_margin=margin,
        worst=(worst_n, worst_j),
        corollary_passed=cor >= -LEMMA_SLACK,
        corollary_min_margin=cor,
        delta=run.delta,
        swapped=run.swapped,
        n=int(n),
        j_range=(int(js.min()), int(js.max())),
    )


def verify_segment_lemma(
    fam: CocycleFamily, a: float, a2: float, omega0: BasePoint, n_max: int
) -> SegmentLemmaResult:
    """
    연속한 교차 n_j < n_{j+1} 마다 Σ log M ≥ log(1/(2δ)).
    교차가 둘 미만이면 inconclusive.
    """
    _check_hypothesis(fam, a, a2)
    run = _pair_run(fam, a, a2, omega0, n_max)
    crossings = _crossings(run, int(n_max))
    return _segment_result(run, crossings)


def _segment_result(run: _PairRun, crossings: CrossingTimes) -> SegmentLemmaResult:
    delta = run.delta
    threshold = math.log(1.0 / (2.0 * delta)) if delta > 0 else math.inf
    found = [r for r in crossings.records if r.j >= 1]
    if len(found) < 2:
        return SegmentLemmaResult(
            verdict="inconclusive",
            segments=[],
            min_margin=None,
            threshold=threshold,
            delta=delta,
            swapped=run.swapped,
            diagnostic=crossings.diagnostic or f"only {len(found)} crossing(s) within N_max={crossings.n_max}",
        )

    recs = crossings.records
    segments = [
        SegmentCheck(
            j=r.j,
            n_start=r.n_j,
            n_end=recs[i + 1].n_j,
            log_sum=float(r.segment_log_sum),
            margin=float(r.segment_log_sum) - threshold,
        )
        for i, r in enumerate(recs[:-1])
    ]
    min_margin = min(s.margin for s in segments)

    last = recs[-1]
    r_along = 8.0 * float(np.mean(run.log_m[: last.n_j])) if last.n_j > 0 else math.nan
    lhs = last.j / last.n_j * threshold
    rhs = 0.25 * r_along * CROSSING_RATE_SLACK
    rate = {"j": float(last.j), "n_j": float(last.n_j), "lhs": lhs, "rhs": rhs, "ok": bool(lhs <= rhs)}

    verdict = "pass" if min_margin >= -LEMMA_SLACK and lhs <= rhs else "fail"
    return SegmentLemmaResult(
        verdict=verdict,
        segments=segments,
        min_margin=min_margin,
        threshold=threshold,
        delta=delta,
        swapped=run.swapped,
        crossing_rate=rate,
    )


def check_lemmas(
    fam: CocycleFamily,
    a: float,
    a2: float,
    omega0: BasePoint,
    n: int,
    j_range: Optional[Sequence[int]] = None,
    seed: Optional[int] = None,
) -> LemmaReport:
    """한 궤도 쌍에서 단계 보조정리, 따름정리, 구간 보조정리, 교차 빈도를 모두 확인."""
    _check_hypothesis(fam, a, a2)
    run = _pair_run(fam, a, a2, omega0, n)
    crossings = _crossings(run, int(n))
    if j_range is None:
        j_range = range(0, max(1, len(crossings.records)) + 1)
    step = _step_result(run, j_range, n)
    segment = _segment_result(run, crossings)
    logger.debug(
        "[lemmas] family=%s, a=%s, a2=%s, n=%d, step_margin=%.3g, segment=%s",
        fam.name, a, a2, n, step.min_margin, segment.verdict,
    )
    return LemmaReport(
        a=float(a),
        a2=float(a2),
        n=int(n),
        step=step,
        segment=segment,
        crossings=crossings,
        R=8.0 * float(np.mean(run.log_m)),
        family=fam.describe(),
        seed=seed,
    )


def _log_m_average(fam: CocycleFamily, omega0: BasePoint, n: int, block: int = 1 << 16) -> float:
    partial = []
    for _, pts in iter_orbit_blocks(fam.base, omega0, n, block):
        partial.append(math.fsum(np.log(fam.M_of(fam.fiber_data(pts))).tolist()))
    return math.fsum(partial) / n


def estimate_R(fam: CocycleFamily, omega0: BasePoint, n: int) -> float:
    """R = 8 ∫ log M dμ 의 Birkhoff 추정."""
    if n < MIN_R_STEPS:
        raise PreconditionError(f"estimate_R needs n >= {MIN_R_STEPS}, got {n}")
    return 8.0 * _log_m_average(fam, omega0, int(n))


def r_estimate(fam: CocycleFamily, omega0: BasePoint, n: int) -> REstimate:
    """R_n 과 꼬리 허용치 |R_n − R_{2n}|."""
    if n < MIN_R_STEPS:
        raise PreconditionError(f"estimate_R needs n >= {MIN_R_STEPS}, got {n}")
    r_n = estimate_R(fam, omega0, n)
    r_2n = estimate_R(fam, omega0, 2 * n)
    return REstimate(value=r_n, allowance=abs(r_n - r_2n), n=int(n))


def _check_grid(fam: CocycleFamily, grid: Sequence[float]) -> np.ndarray:
    g = fam.interval.check(np.asarray(grid, dtype=np.float64).reshape(-1))
    if g.size < 2:
        raise DomainError("certificate grid needs at least two points")
    if np.any(np.diff(g) <= 0):
        raise DomainError("certificate grid must be strictly increasing")
    return g


def certificate_from_curve(
    fam: CocycleFamily,
    curve: RotationCurve,
    r: REstimate,
    factor: float = 1.0,
    quantity: str = "rho",
    seed: Optional[int] = None,
) -> ModulusReport:
    """
    이미 계산된 회전수 곡선으로 인증서를 만든다.

    |Δq|·log(1/|Δa|) ≤ bound + R 허용치 + 2·(r_i + r_j)·log(1/|Δa|)   (|Δa| ≤ min(1/2, e^{−4C}))
    q = factor·ρ, bound = factor·rotation_scale·R
    """
    grid = curve.parameters
    vals = factor * curve.values
    errs = factor * curve.error_radii
    C = fam.C
    threshold = min(0.5, math.exp(-4.0 * C))
    unit = factor * fam.rotation_scale
    bound = unit * r.value
    r_allow = unit * r.allowance

    pairs: List[PairRecord] = []
    observed = 0.0
    distant = 0.0
    violated = False
    delta_ok: Optional[bool] = None
    any_certified = False

    for s in range(1, grid.size):
        da = grid[s:] - grid[:-s]
        near = da <= 0.5
        if not np.any(near):
            break
        drho = np.abs(vals[s:] - vals[:-s])
        log_inv = np.log(1.0 / da)
        product = drho * log_inv
        allowance = 2.0 * (errs[s:] + errs[:-s]) * log_inv + r_allow
        cert = near & (da <= threshold)
        ok = product <= bound + allowance

        if np.any(cert):
            any_certified = True
            observed = max(observed, float(np.max(product[cert])))
            if np.any(~ok[cert]):
                violated = True
            delta = C * da
            small = cert & (delta > 0.0) & (delta < 0.1)
            if np.any(small):
                lim = 0.5 * (bound + r_allow) / np.log(1.0 / (2.0 * delta[small]))
                holds = bool(np.all(drho[small] <= lim + 2.0 * (errs[s:][small] + errs[:-s][small])))
                delta_ok = holds if delta_ok is None else (delta_ok and holds)
        far = near & ~cert
        if np.any(far):
            distant = max(distant, float(np.max(product[far])))

        i = int(np.argmax(np.where(near, product, -np.inf)))
        pairs.append(
            PairRecord(
                a=float(grid[i]),
                a2=float(grid[i + s]),
                drho=float(drho[i]),
                product=float(product[i]),
                allowance=float(allowance[i]),
                certified=bool(cert[i]),
                ok=bool(ok[i]),
            )
        )

    diagnostic = None
    if not any_certified:
        verdict = "inconclusive"
        diagnostic = (
            f"no grid pair with |da| <= min(1/2, exp(-4C)) = {threshold:.6g}; "
            "refine the grid spacing below this threshold"
        )
    else:
        verdict = "violated" if violated else "certified"

    logger.debug("[modulus] family=%s, verdict=%s, observed=%.6g, bound=%.6g", fam.name, verdict, observed, bound)
    return ModulusReport(
        pairs=pairs,
        observed_sup=observed,
        distant_sup=distant,
        R=r.value,
        R_allowance=r.allowance,
        bound=bound,
        C=C,
        threshold=threshold,
        verdict=verdict,
        n=curve.n,
        quantity=quantity,
        factor=factor,
        delta_form_ok=delta_ok,
        diagnostic=diagnostic,
        family=fam.describe(),
        grid={"min": float(grid[0]), "max": float(grid[-1]), "points": int(grid.size)},
        omega0=curve.omega0,
        seed=seed,
    )


def modulus_certificate(
    fam: CocycleFamily,
    grid: Sequence[float],
    omega0: BasePoint,
    n: int,
    seed: Optional[int] = None,
    factor: float = 1.0,
    quantity: str = "rho",
) -> ModulusReport:
    """격자 위 ρ(같은 ω0, x0 = 0에서 한꺼번에) → 로그-횔더 인증서."""
    g = _check_grid(fam, grid)
    curve = rotation_curve(fam, g, omega0, n)
    r = r_estimate(fam, omega0, max(int(n), MIN_R_STEPS))
    return certificate_from_curve(fam, curve, r, factor=factor, quantity=quantity, seed=seed)


def craig_simon_check(
    model: PotentialModel,
    energies: Sequence[float],
    omega0: BasePoint,
    n: int,
    seed: Optional[int] = None,
) -> ModulusReport:
    """N = 1 − 2ρ 에 대한 로그-횔더 확인 (상수에 2를 흡수)."""
    if not model.log_integrable:
        raise PreconditionError(f"model {model.name} does not assert integrability of log(1+|f|)")
    e = np.asarray(energies, dtype=np.float64).reshape(-1)
    if e.size < 2:
        raise DomainError("energy grid needs at least two points")
    fam = schrodinger_family(model, (float(e[0]), float(e[-1])))
    return modulus_certificate(fam, e, omega0, n, seed=seed, factor=2.0, quantity="ids")
