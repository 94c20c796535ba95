from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from app.domain.base import (
    GOLDEN,
    BasePoint,
    BaseSystem,
    Distribution,
    IIDShift,
    IrrationalRotation,
    Observable,
    SubstitutionSubshift,
    iter_orbit_blocks,
)
from app.domain.circlemap import (
    MIN_ROTATION_STEPS,
    CocycleFamily,
    LiftMap,
    ParameterInterval,
    RotationCurve,
    rotation_curve,
)
from app.domain.errors import (
    ConfigurationError,
    DomainError,
    EvaluationError,
    InvalidMatrixError,
    PreconditionError,
)
from app.domain.projective import (
    ProjectiveFamily,
    operator_norm_sq,
    projective_dx,
    projective_lift,
)

logger = logging.getLogger(__name__)

# TransferMatrix 불변식 / projectivize 입력 검사의 det 허용 오차
TRANSFER_DET_TOL = 1e-12
PROJECTIVE_DET_TOL = 1e-9

# Sturm 재귀의 0 피벗 대체값
PIVOT_FLOOR = 1e-300

# 균일 쌍곡 영역까지의 여유: E_ref = 2 + sup|f| + ANCHOR_MARGIN
ANCHOR_MARGIN = 1.0


# ===== Domain Types =====

@dataclass(frozen=True)
class PotentialModel:
    """
    V_ω(n) = f(σⁿω).

    - sup_bound=None 이면 유계가 아닌 모델(log-적분가능성은 선언만 하고 검증하지 않음)
    - 유계 모델은 표본 궤도 위에서 |f| ≤ sup_bound 를 검사한다
    """
    base: BaseSystem
    f: Observable
    sup_bound: Optional[float] = None
    log_integrable: bool = True
    name: str = "model"
    params: Dict[str, Any] = field(default_factory=dict)

    @property
    def bounded(self) -> bool:
        return self.sup_bound is not None

    def potential(self, points: np.ndarray, offset: int = 0) -> np.ndarray:
        vals = self.f.evaluate(self.base, points)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            k = offset + int(bad[0])
            raise EvaluationError(f"potential {self.name} is not finite at orbit index {k}", index=k)
        if self.sup_bound is not None:
            over = np.flatnonzero(np.abs(vals) > self.sup_bound + 1e-12)
            if over.size:
                k = offset + int(over[0])
                raise EvaluationError(
                    f"potential {self.name} exceeds its declared bound {self.sup_bound} at orbit index {k}",
                    index=k,
                )
        return vals

    def sequence(self, omega: BasePoint, n: int, block: int = 1 << 16) -> np.ndarray:
        """V_ω(1..n) = f(σ¹ω), …, f(σⁿω)."""
        if n < 1:
            raise DomainError(f"n must be >= 1, got {n}")
        out = np.empty(n + 1, dtype=np.float64)
        for start, pts in iter_orbit_blocks(self.base, omega, n + 1, block):
            out[start:start + len(pts)] = self.potential(pts, offset=start)
        return out[1:]

    def anchor(self) -> Optional[float]:
        """균일 쌍곡 영역의 기준 에너지 2 + sup|f| + 1 (유계일 때만)."""
        if self.sup_bound is None:
            return None
        return 2.0 + self.sup_bound + ANCHOR_MARGIN

    def lower_anchor(self) -> Optional[float]:
        if self.sup_bound is None:
            return None
        return -(2.0 + self.sup_bound + ANCHOR_MARGIN)

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "params": dict(self.params),
            "base": self.base.describe(),
            "sup_bound": self.sup_bound,
            "log_integrable": self.log_integrable,
        }


@dataclass(frozen=True)
class TransferMatrix:
    """((E − f(ω), −1), (1, 0)) 같은 2×2 실행렬, det = 1."""
    entries: Tuple[float, float, float, float]

    def __post_init__(self):
        e = tuple(float(v) for v in self.entries)
        if len(e) != 4 or not all(math.isfinite(v) for v in e):
            raise InvalidMatrixError(f"transfer matrix needs 4 finite entries, got {self.entries!r}")
        object.__setattr__(self, "entries", e)
        if abs(self.det - 1.0) > TRANSFER_DET_TOL:
            raise InvalidMatrixError(f"transfer matrix must have det 1, got {self.det!r}")

    @property
    def det(self) -> float:
        m11, m12, m21, m22 = self.entries
        return m11 * m22 - m12 * m21

    @property
    def trace(self) -> float:
        return self.entries[0] + self.entries[3]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.entries, dtype=np.float64).reshape(2, 2)


@dataclass(frozen=True)
class IDSCurve:
    """
    N(E) 표본.
    - method: eigencount | rotation
    - error_radii: rotation 경로에서만 (2·(r(E) + r(E_ref)))
    """
    energies: np.ndarray
    values: np.ndarray
    method: str
    n: int
    seed: Optional[int] = None
    model: Dict[str, Any] = field(default_factory=dict)
    error_radii: Optional[np.ndarray] = None


# ===== transfer matrices / projectivization =====

def transfer_matrix(model: PotentialModel, E: float, omega: BasePoint) -> TransferMatrix:
    pts = model.base.orbit(omega, 1)
    fv = float(model.potential(pts)[0])
    return TransferMatrix((float(E) - fv, -1.0, 1.0, 0.0))


def projectivize(A: Union[TransferMatrix, np.ndarray, Sequence[Sequence[float]]]) -> LiftMap:
    """
    SL(2,R) 행렬 → RP¹ 위 사영 맵의 정규(canonical) lift.

    원 좌표 x = (방향각)/π mod 1, eval(0) ∈ [0,1).
    """
    m = A.as_array() if isinstance(A, TransferMatrix) else np.asarray(A, dtype=np.float64)
    if m.shape != (2, 2) or not np.all(np.isfinite(m)):
        raise InvalidMatrixError(f"projectivize needs a finite 2x2 matrix, got shape {m.shape}")
    det = float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if abs(det - 1.0) > PROJECTIVE_DET_TOL:
        raise InvalidMatrixError(f"projectivize needs det 1 (to {PROJECTIVE_DET_TOL}), got {det!r}")

    m11, m12, m21, m22 = (float(v) for v in m.reshape(-1))
    shift = -math.floor(float(projective_lift(m11, m12, m21, m22, 0.0)))
    return LiftMap(
        fn=lambda x: projective_lift(m11, m12, m21, m22, x) + shift,
        derivative=lambda x: projective_dx(m11, m12, m21, m22, x),
    )


# ===== Schrödinger family =====

class SchrodingerFamily(ProjectiveFamily):
    """
    E ↦ A_E(ω)의 사영화.

    - 분기 기준 방향 A_E·(0,−1) = (1, 0)이 E와 무관해서 정규 대표가
      이미 E에 대해 연속 → 걷기 보정은 0
    - M_of는 해석적 상계 max(2, sup_{E∈J} ‖A_E(ω)‖²)
    """

    name = "schrodinger"

    def __init__(self, model: PotentialModel, interval: ParameterInterval):
        super().__init__(
            base=model.base,
            interval=interval,
            matrix=_schrodinger_matrix,
            matrix_da=_schrodinger_matrix_da,
            name=f"schrodinger-{model.name}",
        )
        self.model = model

    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        return self.model.potential(points)

    def offsets(self, a, w) -> np.ndarray:
        return np.zeros(np.shape(a), dtype=np.float64)

    def walk_offsets(self, a, w) -> np.ndarray:
        """일반 사영 가족의 걷기 보정(검증용; 항상 0이어야 한다)."""
        return super().offsets(a, w)

    def M_of(self, w: np.ndarray) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        c = np.maximum(np.abs(self.interval.lo - w), np.abs(self.interval.hi - w))
        return np.maximum(2.0, operator_norm_sq(c, -1.0, 1.0, 0.0))

    def describe(self) -> Dict[str, Any]:
        d = super().describe()
        d["kind"] = "schrodinger"
        d["model"] = self.model.describe()
        return d


def _schrodinger_matrix(E: np.ndarray, w: Any):
    return (E - w, -1.0, 1.0, 0.0)


def _schrodinger_matrix_da(E: np.ndarray, w: Any):
    return (np.ones_like(E), 0.0, 0.0, 0.0)


def schrodinger_family(model: PotentialModel, J: Union[ParameterInterval, Tuple[float, float]]) -> SchrodingerFamily:
    interval = J if isinstance(J, ParameterInterval) else ParameterInterval(*J)
    return SchrodingerFamily(model, interval)


# ===== eigenvalue counting =====

def eigen_counts(V: Sequence[float], energies: Sequence[float], offdiag: Optional[Sequence[float]] = None) -> np.ndarray:
    """
    대각 V, 비대각 offdiag(기본 1)인 대칭 삼중대각 행렬의 E 이하 고유값 개수.
    Sturm/inertia: q₁ = V₁ − E, q_k = V_k − E − b²_{k−1}/q_{k−1}, q_k ≤ 0 개수.
    E 격자 전체를 한 번에 벡터로 돌린다.
    """
    v = np.asarray(V, dtype=np.float64).reshape(-1)
    e = np.asarray(energies, dtype=np.float64)
    if v.size < 1:
        raise DomainError("eigen count needs n >= 1")
    if not np.all(np.isfinite(v)) or not np.all(np.isfinite(e)):
        raise EvaluationError("eigen count needs finite potential and energies")
    if offdiag is None:
        b2 = np.ones(max(v.size - 1, 0))
    else:
        b = np.asarray(offdiag, dtype=np.float64).reshape(-1)
        if b.size != v.size - 1 or not np.all(np.isfinite(b)):
            raise DomainError(f"off-diagonal must have {v.size - 1} finite entries, got {b.size}")
        b2 = b * b

    flat = e.reshape(-1)
    count = np.zeros(flat.shape, dtype=np.int64)
    q = v[0] - flat
    count += q <= 0.0
    for k in range(1, v.size):
        tiny = np.abs(q) < PIVOT_FLOOR
        if np.any(tiny):
            q = np.where(tiny, np.where(q > 0.0, PIVOT_FLOOR, -PIVOT_FLOOR), q)
        q = v[k] - flat - b2[k - 1] / q
        count += q <= 0.0
    return count.reshape(e.shape)


def eigen_count_leq(V: Sequence[float], E: float) -> int:
    return int(eigen_counts(V, np.array([float(E)]))[0])


def ids_empirical(
    model: PotentialModel,
    omega: BasePoint,
    n: int,
    energies: Sequence[float],
    seed: Optional[int] = None,
) -> IDSCurve:
    """N_n(E) = #{H_{ω,[1,n]}의 고유값 ≤ E} / n (Dirichlet)."""
    if n < MIN_ROTATION_STEPS:
        raise PreconditionError(f"ids_empirical needs n >= {MIN_ROTATION_STEPS}, got {n}")
    e = _check_energies(energies)
    V = model.sequence(omega, n)
    values = eigen_counts(V, e) / float(n)
    logger.debug("[ids] method=eigencount, model=%s, n=%d, points=%d", model.name, n, e.size)
    return IDSCurve(
        energies=e,
        values=values,
        method="eigencount",
        n=int(n),
        seed=seed,
        model=model.describe(),
    )


def _check_energies(energies: Sequence[float]) -> np.ndarray:
    e = np.asarray(energies, dtype=np.float64).reshape(-1)
    if e.size == 0:
        raise DomainError("energy grid is empty")
    if not np.all(np.isfinite(e)):
        raise DomainError("energy grid has non-finite values")
    if np.any(np.diff(e) < 0):
        raise DomainError("energy grid must be sorted")
    return e


# ===== rotation route =====

def resolve_anchor(model: PotentialModel, e_ref: Optional[float]) -> float:
    """E_ref: 유계면 기본 2 + sup + 1, 유계 아니면 사용자 지정 필수."""
    default = model.anchor()
    if e_ref is None:
        if default is None:
            raise ConfigurationError(
                f"model {model.name} is unbounded; the uniformly hyperbolic anchor is unknown, "
                "supply a reference energy E_ref"
            )
        return default
    e_ref = float(e_ref)
    if default is not None and e_ref < default - 1e-12:
        raise PreconditionError(
            f"E_ref={e_ref} is below 2 + sup|f| + 1 = {default}; "
            "the anchor must lie in the uniformly hyperbolic regime"
        )
    return e_ref


def ids_from_rotation(
    curve: RotationCurve,
    model: PotentialModel,
    e_ref: Optional[float] = None,
    seed: Optional[int] = None,
) -> IDSCurve:
    """
    N(E) = 1 − 2·(ρ(E) − ρ(E_ref)).
    curve는 같은 (ω0, x0)에서 E_ref를 reference로 함께 돌린 곡선이어야 한다.
    """
    anchor = resolve_anchor(model, e_ref)
    if curve.reference is None or abs(curve.reference[0] - anchor) > 1e-12:
        raise PreconditionError(
            f"rotation curve carries no estimate at E_ref={anchor}; sweep it with reference=E_ref"
        )
    _, rho_ref, err_ref = curve.reference
    e = _check_energies(curve.parameters)
    raw = 1.0 - 2.0 * (curve.values - rho_ref)
    return IDSCurve(
        energies=e,
        values=np.clip(raw, 0.0, 1.0),
        method="rotation",
        n=curve.n,
        seed=seed,
        model=model.describe(),
        error_radii=2.0 * (curve.error_radii + err_ref),
    )


Sweep = Callable[[CocycleFamily, np.ndarray, BasePoint, int, float], RotationCurve]


def _direct_sweep(fam: CocycleFamily, params: np.ndarray, omega0: BasePoint, n: int, reference: float) -> RotationCurve:
    return rotation_curve(fam, params, omega0, n, x0=0.0, reference=reference)


@dataclass(frozen=True)
class RotationIDS:
    curve: IDSCurve
    rotation: RotationCurve
    e_ref: float
    # 아래 기준점 E_low에서의 N (유계 모델만; 0이어야 한다)
    lower_value: Optional[float] = None
    lower_error: Optional[float] = None


def rotation_ids(
    model: PotentialModel,
    energies: Sequence[float],
    omega0: BasePoint,
    n: int,
    e_ref: Optional[float] = None,
    seed: Optional[int] = None,
    sweep: Optional[Sweep] = None,
) -> RotationIDS:
    """
    E 격자 + E_ref (+ E_low)를 한 번에 돌려 회전수 경로의 N(E)를 만든다.
    sweep(family, params, ω0, n, reference)을 주면 그걸로 곡선을 계산한다(병렬/캐시).
    """
    e = _check_energies(energies)
    anchor = resolve_anchor(model, e_ref)
    low = model.lower_anchor()

    lo = float(min(e[0], low if low is not None else e[0]))
    hi = float(max(e[-1], anchor))
    fam = schrodinger_family(model, (lo, hi))

    params = e if low is None else np.append(e, low)
    rc = (sweep or _direct_sweep)(fam, params, omega0, n, anchor)

    lower_value = lower_error = None
    if low is not None:
        rho_ref, err_ref = rc.reference[1], rc.reference[2]
        lower_value = float(1.0 - 2.0 * (rc.values[-1] - rho_ref))
        lower_error = float(2.0 * (rc.error_radii[-1] + err_ref))
        rc = RotationCurve(
            parameters=rc.parameters[:-1],
            values=rc.values[:-1],
            error_radii=rc.error_radii[:-1],
            n=rc.n,
            x0=rc.x0,
            omega0=rc.omega0,
            rotation_scale=rc.rotation_scale,
            family=rc.family,
            reference=rc.reference,
            seed=seed,
        )

    ids = ids_from_rotation(rc, model, anchor, seed=seed)
    logger.debug("[ids] method=rotation, model=%s, n=%d, E_ref=%s", model.name, n, anchor)
    return RotationIDS(curve=ids, rotation=rc, e_ref=anchor, lower_value=lower_value, lower_error=lower_error)


def free_laplacian_ids(E):
    """0 (E ≤ −2), (1/π)arccos(−E/2) (−2 < E < 2), 1 (E ≥ 2)."""
    e = np.asarray(E, dtype=np.float64)
    out = np.arccos(np.clip(-e / 2.0, -1.0, 1.0)) / np.pi
    out = np.where(e <= -2.0, 0.0, np.where(e >= 2.0, 1.0, out))
    return float(out) if out.ndim == 0 else out


# ===== model catalog =====

def free_model() -> PotentialModel:
    base = IrrationalRotation(GOLDEN)
    return PotentialModel(base=base, f=Observable.constant(0.0), sup_bound=0.0, name="free")


def anderson_bernoulli(coupling: float = 1.0, seed: int = 0, p: float = 0.5) -> PotentialModel:
    lam = float(coupling)
    base = IIDShift(Distribution.bernoulli(p), seed)
    return PotentialModel(
        base=base,
        f=Observable(fn=lambda s: lam * s, name=f"{lam}*bernoulli"),
        sup_bound=abs(lam),
        name="anderson-bernoulli",
        params={"coupling": lam, "p": float(p), "seed": base.seed},
    )


def anderson_uniform(coupling: float = 1.0, seed: int = 0) -> PotentialModel:
    """V = λ·u, u ~ uniform[−1/2, 1/2]."""
    lam = float(coupling)
    base = IIDShift(Distribution.uniform(-0.5, 0.5), seed)
    return PotentialModel(
        base=base,
        f=Observable(fn=lambda s: lam * s, name=f"{lam}*uniform"),
        sup_bound=0.5 * abs(lam),
        name="anderson-uniform",
        params={"coupling": lam, "seed": base.seed},
    )


def almost_mathieu(coupling: float = 1.0, alpha: float = GOLDEN) -> PotentialModel:
    """f(θ) = 2λ cos(2πθ) over θ ↦ θ + α."""
    lam = float(coupling)
    base = IrrationalRotation(alpha)
    return PotentialModel(
        base=base,
        f=Observable(fn=lambda t: 2.0 * lam * np.cos(2.0 * np.pi * t), name=f"2*{lam}*cos"),
        sup_bound=2.0 * abs(lam),
        name="almost-mathieu",
        params={"coupling": lam, "alpha": base.alpha},
    )


def fibonacci(coupling: float = 1.0) -> PotentialModel:
    """회전 코딩 λ·χ_[1−α,1)(θ), α = 황금비 켤레."""
    lam = float(coupling)
    base = SubstitutionSubshift("fibonacci")
    return PotentialModel(
        base=base,
        f=Observable(fn=lambda s: lam * s, name=f"{lam}*fibonacci"),
        sup_bound=abs(lam),
        name="fibonacci",
        params={"coupling": lam},
    )


def lloyd(scale: float = 1.0, seed: int = 0) -> PotentialModel:
    """iid Cauchy(γ) 퍼텐셜: 유계 아님, ∫ log(1+|f|) dμ < ∞."""
    gamma = float(scale)
    base = IIDShift(Distribution.cauchy(gamma), seed)
    return PotentialModel(
        base=base,
        f=Observable(fn=lambda s: s, integrability="log-integrable-asserted", name=f"cauchy({gamma})"),
        sup_bound=None,
        log_integrable=True,
        name="lloyd",
        params={"scale": gamma, "seed": base.seed},
    )
