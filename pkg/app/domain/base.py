from __future__ import annotations

import logging
import math
import warnings
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterator, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from app.domain import streams
from app.domain.errors import ConfigurationError, DomainError, EvaluationError

logger = logging.getLogger(__name__)

# 회전: 정수/실수, torus: 벡터, iid: 정수 인덱스
BasePoint = Union[float, int, np.ndarray]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

# 유리수 근접 경고 기준
RATIONAL_TOL = 1e-12
RATIONAL_MAX_DENOMINATOR = 1000


class RationalRotationWarning(UserWarning):
    """회전각이 분모 ≤ 1000인 유리수에 1e-12 이내로 붙어 있음(에르고딕이 아님)."""


class AtypicalOrbitWarning(UserWarning):
    """double로는 μ-전형적인 궤도를 표현할 수 없는 경우(doubling map 등)."""


def rational_neighbor(alpha: float) -> Optional[Fraction]:
    r = Fraction(alpha).limit_denominator(RATIONAL_MAX_DENOMINATOR)
    if abs(alpha - float(r)) <= RATIONAL_TOL:
        return r
    return None


def _check_angle(alpha: float, what: str) -> float:
    a = float(alpha)
    if not (0.0 < a < 1.0) or not math.isfinite(a):
        raise DomainError(f"{what} must lie in (0,1), got {alpha!r}")
    r = rational_neighbor(a)
    if r is not None:
        warnings.warn(
            f"{what}={a!r} is within {RATIONAL_TOL} of the rational {r}; "
            "the rotation is not ergodic",
            RationalRotationWarning,
            stacklevel=3,
        )
    return a


# ===== Distribution (iid shift의 한 자리 분포) =====

@dataclass(frozen=True)
class Distribution:
    """
    iid shift 한 자리의 분포. uniform u∈[0,1)을 역CDF로 보낸다.
    - bernoulli(p): {0,1}, P(1)=p
    - uniform(lo, hi)
    - cauchy(scale): 중심 0 (유계 아님, log-적분가능)
    """
    name: Literal["bernoulli", "uniform", "cauchy"]
    params: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.name == "bernoulli":
            (p,) = self.params
            if not 0.0 <= p <= 1.0:
                raise ConfigurationError(f"bernoulli p must be in [0,1], got {p}")
        elif self.name == "uniform":
            lo, hi = self.params
            if not lo < hi:
                raise ConfigurationError(f"uniform needs lo < hi, got {lo}, {hi}")
        elif self.name == "cauchy":
            (scale,) = self.params
            if not scale > 0:
                raise ConfigurationError(f"cauchy scale must be positive, got {scale}")
        else:
            raise ConfigurationError(f"unknown distribution {self.name!r}")

    @classmethod
    def bernoulli(cls, p: float = 0.5) -> "Distribution":
        return cls("bernoulli", (float(p),))

    @classmethod
    def uniform(cls, lo: float = 0.0, hi: float = 1.0) -> "Distribution":
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def cauchy(cls, scale: float = 1.0) -> "Distribution":
        return cls("cauchy", (float(scale),))

    def transform(self, u: np.ndarray) -> np.ndarray:
        if self.name == "bernoulli":
            return (u < self.params[0]).astype(np.float64)
        if self.name == "uniform":
            lo, hi = self.params
            return lo + (hi - lo) * u
        return self.params[0] * np.tan(np.pi * (u - 0.5))

    def describe(self) -> Dict[str, Any]:
        return {"name": self.name, "params": list(self.params)}


# ===== BaseSystem =====

class BaseSystem(ABC):
    """
    에르고딕 바닥계 (σ, μ).

    - step: σ 한 번 (벡터화)
    - coordinate: 관측량이 보는 좌표 (회전각 θ, iid의 심볼 값, 코딩 심볼 …)
    - sample: μ-전형적인 점 하나
    """

    kind: str = "base"
    state_dimension: int = 1

    @abstractmethod
    def validate(self, omega: BasePoint) -> BasePoint:
        ...

    @abstractmethod
    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        ...

    @abstractmethod
    def coordinate(self, points: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> BasePoint:
        ...

    @abstractmethod
    def describe(self) -> Dict[str, Any]:
        ...

    def check_orbit_length(self, n: int) -> None:
        """길이 n 궤도가 이 바닥계에서 전형적인지 본다. 기본은 통과."""

    def orbit_block(self, omega0: BasePoint, n: int) -> np.ndarray:
        """경고 없이 궤도 조각 하나. 길이 점검은 호출 쪽에서 한 번만 한다."""
        return self.orbit(omega0, n)

    def shift(self, omega0: BasePoint, n: int) -> BasePoint:
        """σⁿ(ω0)."""
        if n == 0:
            return self.validate(omega0)
        return _last(self.orbit(omega0, n + 1))


def _last(points: np.ndarray) -> BasePoint:
    last = points[-1]
    if isinstance(last, np.ndarray):
        return last.copy()
    return last.item()


def _check_n(n: int) -> int:
    if n < 1:
        raise DomainError(f"orbit length must be >= 1, got {n}")
    return int(n)


def _check_unit_interval(omega: BasePoint, kind: str) -> float:
    try:
        x = float(omega)
    except (TypeError, ValueError):
        raise DomainError(f"{kind} point must be a real number, got {omega!r}") from None
    if not (0.0 <= x < 1.0):
        raise DomainError(f"{kind} point must lie in [0,1), got {omega!r}")
    return x


def _iterate_scalar(step: Callable[[float], float], x0: float, n: int) -> np.ndarray:
    out = np.empty(n, dtype=np.float64)
    x = x0
    for k in range(n):
        out[k] = x
        x = step(x)
    return out


@dataclass(frozen=True)
class IrrationalRotation(BaseSystem):
    alpha: float

    kind = "irrational-rotation"
    state_dimension = 1

    def __post_init__(self):
        object.__setattr__(self, "alpha", _check_angle(self.alpha, "alpha"))

    def validate(self, omega: BasePoint) -> float:
        return _check_unit_interval(omega, self.kind)

    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        alpha = self.alpha
        # 매 스텝 mod 1 (드리프트 방지, 반군 성질이 비트 단위로 성립)
        return _iterate_scalar(lambda x: (x + alpha) % 1.0, self.validate(omega0), _check_n(n))

    def coordinate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.random())

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alpha": self.alpha}


@dataclass(frozen=True)
class TorusShift(BaseSystem):
    alphas: Tuple[float, ...]

    kind = "torus-shift"

    def __post_init__(self):
        if len(self.alphas) == 0:
            raise DomainError("torus-shift needs at least one frequency")
        object.__setattr__(
            self,
            "alphas",
            tuple(_check_angle(a, f"alpha[{i}]") for i, a in enumerate(self.alphas)),
        )

    @property
    def state_dimension(self) -> int:  # type: ignore[override]
        return len(self.alphas)

    def validate(self, omega: BasePoint) -> np.ndarray:
        v = np.asarray(omega, dtype=np.float64).reshape(-1)
        if v.shape[0] != len(self.alphas):
            raise DomainError(f"torus point must have {len(self.alphas)} coordinates, got {v.shape[0]}")
        if np.any((v < 0.0) | (v >= 1.0)):
            raise DomainError(f"torus point must lie in [0,1)^d, got {omega!r}")
        return v

    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        n = _check_n(n)
        alphas = np.asarray(self.alphas)
        out = np.empty((n, alphas.shape[0]), dtype=np.float64)
        x = self.validate(omega0).copy()
        for k in range(n):
            out[k] = x
            x = np.mod(x + alphas, 1.0)
        return out

    def coordinate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(len(self.alphas))

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "alphas": list(self.alphas)}


# double로 2x mod 1을 돌리면 최대 53스텝 뒤 0에 고정된다
_DOUBLING_MANTISSA = 53


@dataclass(frozen=True)
class DoublingMap(BaseSystem):
    kind = "doubling-map"
    state_dimension = 1

    def validate(self, omega: BasePoint) -> float:
        return _check_unit_interval(omega, self.kind)

    def check_orbit_length(self, n: int) -> None:
        if n > _DOUBLING_MANTISSA:
            warnings.warn(
                "binary64 orbits of the doubling map reach the fixed point 0 "
                f"within {_DOUBLING_MANTISSA} steps; orbit of length {n} is atypical",
                AtypicalOrbitWarning,
                stacklevel=3,
            )

    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        self.check_orbit_length(_check_n(n))
        return self.orbit_block(omega0, n)

    def orbit_block(self, omega0: BasePoint, n: int) -> np.ndarray:
        return _iterate_scalar(lambda x: (2.0 * x) % 1.0, self.validate(omega0), _check_n(n))

    def coordinate(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.random())

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind}


# iid sampler가 새 창(window)을 고를 범위
_IID_SAMPLE_SPAN = 1 << 48


@dataclass(frozen=True)
class IIDShift(BaseSystem):
    """
    양방향 iid 수열 위의 shift.
    - 점 ω는 정수 인덱스 i, σ(i) = i + 1
    - 심볼 값 = distribution(uniform(seed, i)) : (seed, i)만으로 결정
    """
    distribution: Distribution
    seed: int

    kind = "iid-shift"
    state_dimension = 1

    def __post_init__(self):
        object.__setattr__(self, "seed", streams.check_seed(self.seed))

    def validate(self, omega: BasePoint) -> int:
        if isinstance(omega, (bool, np.bool_)) or not isinstance(omega, (int, np.integer)):
            raise DomainError(f"iid-shift point must be an integer index, got {omega!r}")
        return int(omega)

    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        start = self.validate(omega0)
        return np.arange(start, start + _check_n(n), dtype=np.int64)

    def coordinate(self, points: np.ndarray) -> np.ndarray:
        return self.distribution.transform(streams.uniforms(self.seed, np.asarray(points, dtype=np.int64)))

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(0, _IID_SAMPLE_SPAN))

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "distribution": self.distribution.describe(), "seed": self.seed}


SUBSTITUTION_RULES = ("fibonacci",)


@dataclass(frozen=True)
class SubstitutionSubshift(BaseSystem):
    """
    Sturmian subshift를 회전 코딩으로 구현: V(n) = χ_[1−α,1)(θ + nα mod 1).
    fibonacci: α = (√5−1)/2.
    """
    rule: str = "fibonacci"

    kind = "substitution-subshift"
    state_dimension = 1

    def __post_init__(self):
        if self.rule not in SUBSTITUTION_RULES:
            raise ConfigurationError(
                f"unknown substitution rule {self.rule!r}; known: {', '.join(SUBSTITUTION_RULES)}"
            )

    @property
    def alpha(self) -> float:
        return GOLDEN

    def validate(self, omega: BasePoint) -> float:
        return _check_unit_interval(omega, self.kind)

    def orbit(self, omega0: BasePoint, n: int) -> np.ndarray:
        alpha = self.alpha
        return _iterate_scalar(lambda x: (x + alpha) % 1.0, self.validate(omega0), _check_n(n))

    def coordinate(self, points: np.ndarray) -> np.ndarray:
        theta = np.asarray(points, dtype=np.float64)
        return (theta >= 1.0 - self.alpha).astype(np.float64)

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.random())

    def describe(self) -> Dict[str, Any]:
        return {"kind": self.kind, "rule": self.rule}


# ===== Observable =====

@dataclass(frozen=True)
class Observable:
    """
    바닥계 위의 실수값 함수 φ.
    - 기본은 coordinate(ω)를 받는다; on_points=True면 점 자체를 받는다
    - integrability: bounded | log-integrable-asserted (후자는 검증하지 않음)
    """
    fn: Callable[[np.ndarray], np.ndarray]
    integrability: Literal["bounded", "log-integrable-asserted"] = "bounded"
    name: str = "observable"
    on_points: bool = False

    def evaluate(self, system: BaseSystem, points: np.ndarray) -> np.ndarray:
        arg = points if self.on_points else system.coordinate(points)
        return np.broadcast_to(np.asarray(self.fn(arg), dtype=np.float64), (len(points),))

    @classmethod
    def constant(cls, c: float) -> "Observable":
        return cls(fn=lambda x: np.full(len(x), float(c)), name=f"constant({c})")

    @classmethod
    def identity(cls) -> "Observable":
        return cls(fn=lambda x: x, name="identity")


# ===== 연산 =====

def orbit(system: BaseSystem, omega0: BasePoint, n: int) -> np.ndarray:
    """[σ⁰ω0, σ¹ω0, …, σⁿ⁻¹ω0]."""
    return system.orbit(omega0, n)


def iter_orbit_blocks(
    system: BaseSystem, omega0: BasePoint, n: int, block: int
) -> Iterator[Tuple[int, np.ndarray]]:
    """
    길이 n 궤도를 block 단위로 잘라서 (시작 인덱스, 점 배열)로 흘려보낸다.
    반군 성질 orbit(n+m) = orbit(n) ++ orbit(σⁿω0, m)에 기대서 이어 붙인다.
    """
    start = 0
    omega = system.validate(omega0)
    system.check_orbit_length(n)
    while start < n:
        m = min(block, n - start)
        pts = system.orbit_block(omega, m + 1)
        yield start, pts[:m]
        omega = _last(pts)
        start += m


def birkhoff_average(
    system: BaseSystem,
    phi: Observable,
    omega0: BasePoint,
    n: int,
    block: int = 1 << 16,
) -> float:
    """(1/n) Σ_{l=1}^{n} φ(σ^{l−1} ω0)."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")

    partial = []
    for start, pts in iter_orbit_blocks(system, omega0, n, block):
        vals = phi.evaluate(system, pts)
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            k = start + int(bad[0])
            raise EvaluationError(f"observable {phi.name} is not finite at orbit index {k}", index=k)
        partial.append(math.fsum(vals.tolist()))
    return math.fsum(partial) / n


def sample_point(system: BaseSystem, seed: int, task: int = 0) -> BasePoint:
    return system.sample(streams.generator(seed, task))
