from __future__ import annotations

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import settings
from app.domain import streams
from app.domain.base import BaseSystem, BasePoint, iter_orbit_blocks
from app.domain.errors import (
    DomainError,
    EvaluationError,
    ParameterRangeError,
    PreconditionError,
    PrecisionError,
)

logger = logging.getLogger(__name__)

# lift 좌표(정수 winding)가 이 값을 넘으면 double 변환이 정확하지 않다
PRECISION_LIMIT = 2 ** 52

# 수치 sup에 곱하는 패딩: (1 + SUP_PADDING / grid)
SUP_PADDING = 10.0

MIN_SUP_GRID = 64
MIN_ROTATION_STEPS = 100

# 파라미터가 J 안인지 볼 때 허용하는 반올림 오차
PARAM_TOL = 1e-12


def sup_padding(grid: int) -> float:
    return 1.0 + SUP_PADDING / grid


# ===== Domain Types =====

@dataclass(frozen=True)
class ParameterInterval:
    """닫힌 파라미터 구간 J = [lo, hi]."""
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
            raise ParameterRangeError(f"parameter interval must be closed and bounded, got [{self.lo}, {self.hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def check(self, a) -> np.ndarray:
        arr = np.asarray(a, dtype=np.float64)
        bad = (arr < self.lo - PARAM_TOL) | (arr > self.hi + PARAM_TOL) | ~np.isfinite(arr)
        if np.any(bad):
            first = arr.reshape(-1)[np.flatnonzero(bad.reshape(-1))[0]]
            raise ParameterRangeError(f"parameter {first!r} is outside J = [{self.lo}, {self.hi}]")
        return arr

    def lattice(self, count: int) -> np.ndarray:
        return np.linspace(self.lo, self.hi, count)

    def describe(self) -> List[float]:
        return [self.lo, self.hi]


@dataclass(frozen=True)
class LiftMap:
    """
    원 위 향보존 위상동형의 degree-one lift g̃: R → R.
    - fn: 벡터화된 g̃
    - derivative: x-도함수 (비매끈이면 None, 대신 lipschitz)
    - da_bound: |∂g̃/∂a| 상계
    """
    fn: Callable[[np.ndarray], np.ndarray]
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz: Optional[float] = None
    da_bound: float = 0.0

    def eval(self, x):
        return self.fn(np.asarray(x, dtype=np.float64))

    def dx(self, x):
        if self.derivative is None:
            raise EvaluationError("lift declares only a Lipschitz constant, no derivative")
        return self.derivative(np.asarray(x, dtype=np.float64))

    def __call__(self, x):
        return self.eval(x)


@dataclass(frozen=True)
class RotationEstimate:
    value: float
    n: int
    error_radius: float
    x0: float
    omega0: Any
    a: float


@dataclass(frozen=True)
class RotationCurve:
    """
    파라미터 격자 위의 회전수 추정.
    - values / error_radii: rotation_scale이 이미 곱해진 보고 단위
    - reference: 기준 파라미터(예: E_ref)에서의 (a, value, error_radius)
    """
    parameters: np.ndarray
    values: np.ndarray
    error_radii: np.ndarray
    n: int
    x0: float
    omega0: Any
    rotation_scale: float
    family: Dict[str, Any]
    reference: Optional[Tuple[float, float, float]] = None
    seed: Optional[int] = None


# ===== CocycleFamily =====

class CocycleFamily(ABC):
    """
    (a, ω) ↦ g̃_{a,ω} 의 가족.

    - fiber_data(points): 각 ω에서 fiber 맵이 필요로 하는 스칼라(퍼텐셜 값, 위상 …)
    - apply(a, w, x): g̃_{a,ω}(x) (a, x는 broadcast되는 배열)
    - dx / da: 편도함수
    - C, M_of: 정리의 두 가정에 나오는 상수
    - rotation_scale: fiber 한 바퀴가 보고 단위로 몇 바퀴인지 (사영 가족은 1/2)
    """

    name: str = "family"
    rotation_scale: float = 1.0
    declared_C: Optional[float] = None
    declared_lipschitz: Optional[float] = None

    def __init__(self, base: BaseSystem, interval: ParameterInterval):
        self.base = base
        self.interval = interval

    # ---------- fiber maps ----------
    @abstractmethod
    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def apply(self, a, w, x) -> np.ndarray:
        ...

    def dx(self, a, w, x) -> np.ndarray:
        raise EvaluationError(f"family {self.name} declares no x-derivative")

    def da(self, a, w, x) -> np.ndarray:
        h = 1e-6 * max(1.0, self.interval.width)
        a = np.asarray(a, dtype=np.float64)
        return (self.apply(a + h, w, x) - self.apply(a - h, w, x)) / (2.0 * h)

    # ---------- constants of the theorem ----------
    @cached_property
    def C(self) -> float:
        if self.declared_C is not None:
            return float(self.declared_C)
        return param_bound(self, settings.numerics.sup_grid)

    def M_of(self, w: np.ndarray) -> np.ndarray:
        """max(2, sup_{x,a} |∂g̃/∂x|); 기본은 fiber 값마다 격자 sup."""
        w = np.asarray(w, dtype=np.float64)
        if self.declared_lipschitz is not None:
            return np.full(w.shape, max(2.0, float(self.declared_lipschitz)))
        uniq, inv = np.unique(w, return_inverse=True)
        sups = np.array([_grid_sup_dx(self, float(u), settings.numerics.sup_grid) for u in uniq])
        return sups[inv].reshape(w.shape)

    # ---------- helpers ----------
    def fiber_at(self, omega: BasePoint) -> float:
        pts = self.base.orbit(omega, 1)
        return float(self.fiber_data(pts)[0])

    def lift_at(self, a: float, omega: BasePoint) -> LiftMap:
        self.interval.check(a)
        w = self.fiber_at(omega)
        a = float(a)
        derivative = None
        if self.declared_lipschitz is None:
            derivative = lambda x: self.dx(a, w, x)  # noqa: E731
        return LiftMap(
            fn=lambda x: self.apply(a, w, x),
            derivative=derivative,
            lipschitz=self.declared_lipschitz,
            da_bound=self.C,
        )

    def describe(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "base": self.base.describe(),
            "J": self.interval.describe(),
            "rotation_scale": self.rotation_scale,
        }


def _grid_sup_dx(family: CocycleFamily, w: float, grid: int) -> float:
    x = np.arange(grid, dtype=np.float64) / grid
    a = family.interval.lattice(grid)
    A, X = np.meshgrid(a, x, indexing="ij")
    d = np.asarray(family.dx(A, w, X), dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise EvaluationError(f"x-derivative of {family.name} is not finite on the grid")
    return max(2.0, float(np.max(np.abs(d))) * sup_padding(grid))


# ===== orbit engine: (winding, frac) 좌표 =====

@dataclass
class LiftState:
    """
    lift 좌표를 (정수 winding, [0,1) 소수부)로 들고 다닌다.
    n이 커도 소수부 정밀도가 유지된다.
    """
    winding: np.ndarray
    frac: np.ndarray

    @classmethod
    def start(cls, x0: float, size: int) -> "LiftState":
        if not math.isfinite(x0) or abs(x0) > PRECISION_LIMIT:
            raise PrecisionError(
                f"start point x0={x0!r} is outside |x| <= 2**52; renormalize the lift "
                "(subtract the integer part) before iterating"
            )
        k = math.floor(x0)
        return cls(
            winding=np.full(size, k, dtype=np.int64),
            frac=np.full(size, x0 - k, dtype=np.float64),
        )

    def copy(self) -> "LiftState":
        return LiftState(self.winding.copy(), self.frac.copy())

    def displacement(self, origin: "LiftState") -> np.ndarray:
        return (self.winding - origin.winding).astype(np.float64) + (self.frac - origin.frac)

    def check_precision(self) -> None:
        if np.any(np.abs(self.winding) > PRECISION_LIMIT):
            raise PrecisionError(
                "lift coordinate exceeded 2**52; renormalize the lift "
                "(subtract the integer part) or reduce n"
            )

    def value(self) -> np.ndarray:
        self.check_precision()
        return self.winding.astype(np.float64) + self.frac


def _step(family: CocycleFamily, params: np.ndarray, w: float, state: LiftState) -> None:
    # degree-one: g̃(k + f) = k + g̃(f), 그래서 소수부만 넣는다
    y = family.apply(params, w, state.frac)
    fl = np.floor(y)
    if not np.all(np.isfinite(fl)):
        raise EvaluationError(f"lift of {family.name} produced a non-finite value")
    state.winding += fl.astype(np.int64)
    state.frac = y - fl


def advance(
    family: CocycleFamily,
    params: np.ndarray,
    omega0: BasePoint,
    state: LiftState,
    n: int,
    observer: Optional[Callable[[int, LiftState], None]] = None,
) -> BasePoint:
    """
    state를 n 스텝 전진(제자리 갱신). 돌려주는 값은 σⁿ(ω0).
    observer(k, state)는 k번째 스텝 직후 호출된다(k = 1..n).
    """
    block = settings.numerics.block
    omega = family.base.validate(omega0)
    if n == 0:
        return omega
    for start, pts in iter_orbit_blocks(family.base, omega, n + 1, block):
        w = family.fiber_data(pts)
        stop = min(len(pts), n - start)
        for i in range(stop):
            _step(family, params, float(w[i]), state)
            if observer is not None:
                observer(start + i + 1, state)
        if start + len(pts) > n:
            return _point(pts[n - start])
    return omega  # pragma: no cover


def _point(p) -> BasePoint:
    if isinstance(p, np.ndarray) and p.ndim > 0:
        return p.copy()
    return p.item() if hasattr(p, "item") else p


@dataclass(frozen=True)
class Trajectory:
    """짧은 파라미터 묶음의 전체 궤도 기록(보조정리 검사용)."""
    winding: np.ndarray  # (n+1, P)
    frac: np.ndarray     # (n+1, P)
    fiber: np.ndarray    # (n,) : σ^{l−1}ω 의 fiber 값, l = 1..n

    def gap(self, i: int = 1, j: int = 0) -> np.ndarray:
        """x^{(i)}_k − x^{(j)}_k, k = 0..n."""
        return (self.winding[:, i] - self.winding[:, j]).astype(np.float64) + (self.frac[:, i] - self.frac[:, j])


def trajectory(
    family: CocycleFamily, params: Sequence[float], omega0: BasePoint, n: int, x0: float = 0.0
) -> Trajectory:
    p = family.interval.check(np.asarray(params, dtype=np.float64))
    state = LiftState.start(x0, p.shape[0])
    winding = np.empty((n + 1, p.shape[0]), dtype=np.int64)
    frac = np.empty((n + 1, p.shape[0]), dtype=np.float64)
    winding[0], frac[0] = state.winding, state.frac
    fiber = np.empty(n, dtype=np.float64)

    block = settings.numerics.block
    done = 0
    for start, pts in iter_orbit_blocks(family.base, omega0, n, block):
        w = family.fiber_data(pts)
        fiber[start:start + len(pts)] = w
        for i in range(len(pts)):
            _step(family, p, float(w[i]), state)
            done = start + i + 1
            winding[done], frac[done] = state.winding, state.frac
    state.check_precision()
    return Trajectory(winding=winding, frac=frac, fiber=fiber)


# ===== Operations =====

def compose_lift(family: CocycleFamily, a: float, omega0: BasePoint, n: int, x: float) -> float:
    """G̃_{n,a,ω0}(x); 안쪽 맵이 ω0 (base-first)."""
    family.interval.check(a)
    if n < 0:
        raise DomainError(f"n must be nonnegative, got {n}")
    if n == 0:
        family.base.validate(omega0)
        return float(x)
    state = LiftState.start(float(x), 1)
    advance(family, np.array([float(a)]), omega0, state, n)
    return float(state.value()[0])


def _estimate(
    family: CocycleFamily, params: np.ndarray, omega0: BasePoint, x0: float, n: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    회전수 값 + 오차 반경(보고 단위).

    error_radius = (max − min {G̃_k(x0) − x0 − k·value : k ∈ 마지막 n/2 스텝} + 1) / n
    value를 알아야 진동폭을 잴 수 있어서, 후반부를 한 번 더 돌린다(궤도는 결정적).
    """
    origin = LiftState.start(x0, params.shape[0])
    state = origin.copy()
    half = n // 2
    k_s = n - half

    # 1) 0 → k_s → n
    omega_s = advance(family, params, omega0, state, k_s)
    saved = state.copy()
    advance(family, params, omega_s, state, half)
    state.check_precision()
    raw = state.displacement(origin) / n

    # 2) k_s → n 재생하면서 진동폭
    hi = saved.displacement(origin) - k_s * raw
    lo = hi.copy()

    def observe(k: int, st: LiftState) -> None:
        e = st.displacement(origin) - (k_s + k) * raw
        np.maximum(hi, e, out=hi)
        np.minimum(lo, e, out=lo)

    replay = saved.copy()
    advance(family, params, omega_s, replay, half, observer=observe)

    scale = family.rotation_scale
    return scale * raw, scale * ((hi - lo) + 1.0) / n


def rotation_number(
    family: CocycleFamily, a: float, omega0: BasePoint, x0: float, n: int
) -> RotationEstimate:
    family.interval.check(a)
    if n < MIN_ROTATION_STEPS:
        raise PreconditionError(f"rotation_number needs n >= {MIN_ROTATION_STEPS}, got {n}")
    values, radii = _estimate(family, np.array([float(a)]), omega0, float(x0), int(n))
    return RotationEstimate(
        value=float(values[0]),
        n=int(n),
        error_radius=float(radii[0]),
        x0=float(x0),
        omega0=omega0,
        a=float(a),
    )


def rotation_curve(
    family: CocycleFamily,
    params: Sequence[float],
    omega0: BasePoint,
    n: int,
    x0: float = 0.0,
    reference: Optional[float] = None,
) -> RotationCurve:
    """
    격자 전체를 같은 (ω0, x0)에서 한꺼번에 돌린다.
    같은 궤도를 공유하므로 점들 사이 차이는 lift 선택과 무관한 rotation_difference와 같다.
    """
    p = family.interval.check(np.asarray(params, dtype=np.float64).reshape(-1))
    if n < MIN_ROTATION_STEPS:
        raise PreconditionError(f"rotation sweeps need n >= {MIN_ROTATION_STEPS}, got {n}")

    all_params = p if reference is None else np.append(p, float(reference))
    family.interval.check(all_params)
    values, radii = _estimate(family, all_params, omega0, float(x0), int(n))

    ref = None
    if reference is not None:
        ref = (float(reference), float(values[-1]), float(radii[-1]))
        values, radii = values[:-1], radii[:-1]

    logger.debug("[rotation] family=%s, points=%d, n=%d", family.name, p.shape[0], n)
    return RotationCurve(
        parameters=p.copy(),
        values=values,
        error_radii=radii,
        n=int(n),
        x0=float(x0),
        omega0=omega0,
        rotation_scale=family.rotation_scale,
        family=family.describe(),
        reference=ref,
    )


def rotation_difference(
    family: CocycleFamily, a: float, a2: float, omega0: BasePoint, n: int
) -> float:
    """(x′_n − x_n)/n, 두 궤도 모두 x0 = 0, 같은 ω0."""
    params = family.interval.check(np.array([float(a), float(a2)]))
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if params[0] == params[1]:
        family.base.validate(omega0)
        return 0.0
    state = LiftState.start(0.0, 2)
    advance(family, params, omega0, state, n)
    state.check_precision()
    gap = float(state.winding[1] - state.winding[0]) + float(state.frac[1] - state.frac[0])
    return family.rotation_scale * gap / n


def lipschitz_bound(family: CocycleFamily, omega: BasePoint, grid: int) -> float:
    """M_ω = max(2, 격자 sup |∂g̃/∂x| · (1 + 10/grid)); Lipschitz 가족은 선언값."""
    if grid < MIN_SUP_GRID:
        raise PreconditionError(f"lipschitz_bound needs grid >= {MIN_SUP_GRID}, got {grid}")
    if family.declared_lipschitz is not None:
        family.base.validate(omega)
        return max(2.0, float(family.declared_lipschitz))
    return _grid_sup_dx(family, family.fiber_at(omega), grid)


def param_bound(family: CocycleFamily, grid: int) -> float:
    """sup |∂g̃/∂a| over (x, a, 표본 ω), 패딩 포함."""
    if grid < MIN_SUP_GRID:
        raise PreconditionError(f"param_bound needs grid >= {MIN_SUP_GRID}, got {grid}")
    num = settings.numerics
    omegas = [family.base.sample(streams.generator(num.sample_seed, task)) for task in range(num.omega_samples)]

    x = np.arange(grid, dtype=np.float64) / grid
    a = family.interval.lattice(grid)
    A, X = np.meshgrid(a, x, indexing="ij")

    sup = 0.0
    for omega in omegas:
        d = np.asarray(family.da(A, family.fiber_at(omega), X), dtype=np.float64)
        if not np.all(np.isfinite(d)):
            raise EvaluationError(f"a-derivative of {family.name} is not finite on the grid")
        sup = max(sup, float(np.max(np.abs(d))))
    return sup * sup_padding(grid)


def continuity_offsets(raw_at_anchor: np.ndarray) -> np.ndarray:
    """
    파라미터 격자를 따라 lift 대표를 고르는 정수 보정.
    - 시작점은 정규 대표(g̃(기준점) ∈ [0,1))
    - 이후 이웃한 대표끼리 기준점에서의 차이가 1/2 이하가 되도록
    """
    raw = np.asarray(raw_at_anchor, dtype=np.float64)
    first = -math.floor(raw[0])
    steps = -np.rint(np.diff(raw))
    return (first + np.concatenate(([0.0], np.cumsum(steps)))).astype(np.int64)


def locked_intervals(
    curve: RotationCurve, tolerance: float = 0.0, min_points: int = 3
) -> List[Tuple[float, float, float]]:
    """
    ρ가 (오차 반경 안에서) 일정한 연속 구간들: (a_start, a_end, 평균 ρ).
    ρ 차이는 lift 선택과 무관하므로 구간도 lift와 무관하다.
    """
    vals, errs, ps = curve.values, curve.error_radii, curve.parameters
    out: List[Tuple[float, float, float]] = []
    i = 0
    m = len(vals)
    while i < m:
        j = i
        lo = hi = vals[i]
        budget = errs[i]
        while j + 1 < m:
            nlo, nhi = min(lo, vals[j + 1]), max(hi, vals[j + 1])
            nbudget = max(budget, errs[j + 1])
            if nhi - nlo > 2.0 * nbudget + tolerance:
                break
            lo, hi, budget = nlo, nhi, nbudget
            j += 1
        if j - i + 1 >= min_points:
            out.append((float(ps[i]), float(ps[j]), float(np.mean(vals[i:j + 1]))))
        i = j + 1
    return out
