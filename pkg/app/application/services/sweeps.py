from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.application.catalog import start_point
from app.application.ports import ResultCachePort
from app.domain.base import BasePoint
from app.domain.circlemap import CocycleFamily, RotationCurve, locked_intervals, rotation_curve
from app.domain.modulus import (
    MIN_R_STEPS,
    LemmaReport,
    ModulusReport,
    certificate_from_curve,
    check_lemmas,
    r_estimate,
)
from app.domain.errors import DomainError, PreconditionError
from app.domain.schrodinger import (
    IDSCurve,
    PotentialModel,
    RotationIDS,
    ids_empirical,
    rotation_ids,
    schrodinger_family,
)

logger = logging.getLogger(__name__)

# 워커 하나가 맡는 최소 격자 점 수
MIN_CHUNK = 8


# ===== 결과 타입 =====

@dataclass(frozen=True)
class RotnumResult:
    curve: RotationCurve
    plateaus: List[Tuple[float, float, float]]


@dataclass(frozen=True)
class IdsResult:
    curves: List[IDSCurve]
    e_ref: Optional[float] = None
    lower_value: Optional[float] = None
    lower_error: Optional[float] = None


@dataclass(frozen=True)
class CompareRun:
    seed: int
    eigencount: IDSCurve
    rotation: IDSCurve
    max_gap: float  # 격자 양 끝을 뺀 내부 점에서 |N_eig − N_rot|의 최대
    lower_value: Optional[float] = None
    lower_error: Optional[float] = None


@dataclass(frozen=True)
class CompareResult:
    runs: List[CompareRun]
    e_ref: float


# ===== 직렬화 (캐시 payload) =====

def _plain(v: Any) -> Any:
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_plain(x) for x in v.tolist()]
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _canonical(doc: Any) -> str:
    return json.dumps(_plain(doc), sort_keys=True, separators=(",", ":"))


def curve_digest(
    family: CocycleFamily,
    grid: np.ndarray,
    n: int,
    x0: float,
    omega0: BasePoint,
    reference: Optional[float],
) -> str:
    doc = {
        "family": family.describe(),
        "grid": [float(v) for v in grid],
        "n": int(n),
        "x0": float(x0),
        "omega0": omega0,
        "reference": reference,
    }
    return hashlib.sha256(_canonical(doc).encode("utf-8")).hexdigest()


def curve_to_payload(curve: RotationCurve) -> str:
    return _canonical(
        {
            "parameters": curve.parameters,
            "values": curve.values,
            "error_radii": curve.error_radii,
            "n": curve.n,
            "x0": curve.x0,
            "omega0": curve.omega0,
            "rotation_scale": curve.rotation_scale,
            "family": curve.family,
            "reference": curve.reference,
            "seed": curve.seed,
        }
    )


def curve_from_payload(payload: str) -> RotationCurve:
    d = json.loads(payload)
    omega0 = d["omega0"]
    if isinstance(omega0, list):
        omega0 = np.asarray(omega0, dtype=np.float64)
    ref = d.get("reference")
    return RotationCurve(
        parameters=np.asarray(d["parameters"], dtype=np.float64),
        values=np.asarray(d["values"], dtype=np.float64),
        error_radii=np.asarray(d["error_radii"], dtype=np.float64),
        n=int(d["n"]),
        x0=float(d["x0"]),
        omega0=omega0,
        rotation_scale=float(d["rotation_scale"]),
        family=d["family"],
        reference=tuple(ref) if ref is not None else None,
        seed=d.get("seed"),
    )


# ===== 병렬 스윕 =====

def sweep_curve(
    *,
    family: CocycleFamily,
    grid: Sequence[float],
    omega0: BasePoint,
    n: int,
    x0: float = 0.0,
    reference: Optional[float] = None,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
    seed: Optional[int] = None,
) -> RotationCurve:
    """
    [유스케이스] 격자를 연속 블록으로 나눠 스레드 풀에서 회전수 곡선 계산

    - 모든 블록이 같은 (ω0, x0)에서 출발하고 lift 대표는 J의 왼쪽 끝에서 정해지므로
      이어 붙인 곡선은 한 번에 돌린 곡선과 같다
    - cache가 있으면 digest 키로 먼저 찾는다
    """
    g = np.asarray(grid, dtype=np.float64).reshape(-1)
    if g.size == 0:
        raise DomainError("grid is empty")

    key = curve_digest(family, g, n, x0, omega0, reference)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            logger.info("[sweep] cache hit: family=%s, points=%d, n=%d", family.name, g.size, n)
            return curve_from_payload(hit)

    # 스레드들이 cached_property를 동시에 채우지 않도록 미리 계산
    _ = family.C

    workers = max(1, min(int(threads), g.size // MIN_CHUNK or 1))
    chunks = [c for c in np.array_split(g, workers) if c.size]
    logger.info("[sweep] family=%s, points=%d, n=%d, workers=%d", family.name, g.size, n, len(chunks))

    if len(chunks) == 1:
        parts = [rotation_curve(family, chunks[0], omega0, n, x0=x0, reference=reference)]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as ex:
            futures = [
                ex.submit(rotation_curve, family, c, omega0, n, x0, reference if i == 0 else None)
                for i, c in enumerate(chunks)
            ]
            parts = [f.result() for f in futures]

    curve = RotationCurve(
        parameters=np.concatenate([p.parameters for p in parts]),
        values=np.concatenate([p.values for p in parts]),
        error_radii=np.concatenate([p.error_radii for p in parts]),
        n=int(n),
        x0=float(x0),
        omega0=omega0,
        rotation_scale=family.rotation_scale,
        family=family.describe(),
        reference=parts[0].reference,
        seed=seed,
    )
    if cache is not None:
        cache.set(key, curve_to_payload(curve))
    return curve


# ===== 커맨드별 유스케이스 =====

def run_rotnum(
    *,
    family: CocycleFamily,
    grid: Sequence[float],
    n: int,
    seed: int,
    x0: float = 0.0,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
) -> RotnumResult:
    omega0 = start_point(family.base, seed)
    curve = sweep_curve(
        family=family, grid=grid, omega0=omega0, n=n, x0=x0, threads=threads, cache=cache, seed=seed
    )
    return RotnumResult(curve=curve, plateaus=locked_intervals(curve))


def _rotation_route(
    model: PotentialModel,
    energies: np.ndarray,
    n: int,
    seed: int,
    e_ref: Optional[float],
    threads: int,
    cache: Optional[ResultCachePort],
) -> RotationIDS:
    def sweep(fam: CocycleFamily, params: np.ndarray, omega0: BasePoint, steps: int, reference: float) -> RotationCurve:
        return sweep_curve(
            family=fam, grid=params, omega0=omega0, n=steps, reference=reference,
            threads=threads, cache=cache, seed=seed,
        )

    omega0 = start_point(model.base, seed)
    return rotation_ids(model, energies, omega0, n, e_ref=e_ref, seed=seed, sweep=sweep)


def run_ids(
    *,
    model: PotentialModel,
    grid: Sequence[float],
    n: int,
    seed: int,
    method: str = "both",
    e_ref: Optional[float] = None,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
) -> IdsResult:
    """
    [유스케이스] IDS 곡선

    - eigencount: V_ω(1..n) Sturm 개수 / n
    - rotation: N = 1 − 2(ρ(E) − ρ(E_ref)), n = fiber 스텝 수
    """
    if method not in ("eigencount", "rotation", "both"):
        raise DomainError(f"unknown IDS method {method!r}")
    energies = np.asarray(grid, dtype=np.float64).reshape(-1)
    curves: List[IDSCurve] = []
    anchor = lower_value = lower_error = None

    if method in ("eigencount", "both"):
        omega = start_point(model.base, seed)
        curves.append(ids_empirical(model, omega, n, energies, seed=seed))
    if method in ("rotation", "both"):
        route = _rotation_route(model, energies, n, seed, e_ref, threads, cache)
        curves.append(route.curve)
        anchor, lower_value, lower_error = route.e_ref, route.lower_value, route.lower_error

    return IdsResult(curves=curves, e_ref=anchor, lower_value=lower_value, lower_error=lower_error)


def run_compare(
    *,
    model_for_seed: Callable[[int], PotentialModel],
    grid: Sequence[float],
    n: int,
    seeds: Sequence[int],
    n_rotation: Optional[int] = None,
    e_ref: Optional[float] = None,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
) -> CompareResult:
    """
    [유스케이스] 두 IDS 경로 비교 (시드마다)

    eigencount는 n×n 절단, rotation은 n_rotation fiber 스텝(기본 n).
    """
    energies = np.asarray(grid, dtype=np.float64).reshape(-1)
    n_rot = int(n_rotation or n)
    runs: List[CompareRun] = []
    anchor = None

    for seed in seeds:
        model = model_for_seed(int(seed))
        omega = start_point(model.base, int(seed))
        eig = ids_empirical(model, omega, n, energies, seed=int(seed))
        route = _rotation_route(model, energies, n_rot, int(seed), e_ref, threads, cache)
        rot, anchor = route.curve, route.e_ref
        gaps = np.abs(eig.values - rot.values)
        interior = gaps[1:-1] if gaps.size > 2 else gaps
        run = CompareRun(
            seed=int(seed),
            eigencount=eig,
            rotation=rot,
            max_gap=float(np.max(interior)),
            lower_value=route.lower_value,
            lower_error=route.lower_error,
        )
        logger.info("[compare] model=%s, seed=%d, max_gap=%.3g", model.name, seed, run.max_gap)
        runs.append(run)

    return CompareResult(runs=runs, e_ref=float(anchor))


def run_modulus(
    *,
    family: CocycleFamily,
    grid: Sequence[float],
    n: int,
    seed: int,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
    factor: float = 1.0,
    quantity: str = "rho",
) -> ModulusReport:
    """[유스케이스] 로그-횔더 인증서: 병렬 회전수 곡선 + R 추정 + 쌍 비교."""
    g = family.interval.check(np.asarray(grid, dtype=np.float64).reshape(-1))
    if g.size < 2 or np.any(np.diff(g) <= 0):
        raise DomainError("certificate grid must have at least two strictly increasing points")
    omega0 = start_point(family.base, seed)
    curve = sweep_curve(family=family, grid=g, omega0=omega0, n=n, threads=threads, cache=cache, seed=seed)
    r = r_estimate(family, omega0, max(int(n), MIN_R_STEPS))
    report = certificate_from_curve(family, curve, r, factor=factor, quantity=quantity, seed=seed)
    logger.info("[modulus] family=%s, verdict=%s, observed=%.6g, bound=%.6g",
                family.name, report.verdict, report.observed_sup, report.bound)
    return report


def run_craig_simon(
    *,
    model: PotentialModel,
    grid: Sequence[float],
    n: int,
    seed: int,
    threads: int = 1,
    cache: Optional[ResultCachePort] = None,
) -> ModulusReport:
    """[유스케이스] N = 1 − 2ρ 의 로그-횔더 확인 (상수 ×2)."""
    if not model.log_integrable:
        raise PreconditionError(f"model {model.name} does not assert integrability of log(1+|f|)")
    e = np.asarray(grid, dtype=np.float64).reshape(-1)
    if e.size < 2:
        raise DomainError("energy grid needs at least two points")
    fam = schrodinger_family(model, (float(e[0]), float(e[-1])))
    return run_modulus(
        family=fam, grid=e, n=n, seed=seed, threads=threads, cache=cache, factor=2.0, quantity="ids"
    )


def run_lemmas(
    *,
    family_for_seed: Callable[[int], CocycleFamily],
    pairs: Sequence[Tuple[float, float]],
    n: int,
    seeds: Sequence[int],
    j_max: Optional[int] = None,
    threads: int = 1,
) -> List[LemmaReport]:
    """
    [유스케이스] (a, a′) 쌍 × 시드 마다 보조정리 묶음 확인

    쌍/시드끼리 독립이라 스레드 풀에 그대로 뿌린다. 결과 순서는 입력 순서.
    """
    tasks: List[Tuple[int, float, float]] = [(int(s), float(a), float(b)) for s in seeds for a, b in pairs]
    if not tasks:
        raise DomainError("no (a, a') pairs to check")

    families: Dict[int, CocycleFamily] = {}
    for s in {t[0] for t in tasks}:
        fam = family_for_seed(s)
        _ = fam.C
        families[s] = fam

    def one(task: Tuple[int, float, float]) -> LemmaReport:
        s, a, b = task
        fam = families[s]
        j_range = range(0, j_max + 1) if j_max is not None else None
        return check_lemmas(fam, a, b, start_point(fam.base, s), n, j_range=j_range, seed=s)

    workers = max(1, min(int(threads), len(tasks)))
    if workers == 1:
        reports = [one(t) for t in tasks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            reports = list(ex.map(one, tasks))

    failed = sum(1 for r in reports if not r.passed)
    logger.info("[lemmas] tasks=%d, failed=%d", len(reports), failed)
    return reports
