from __future__ import annotations

import math
from typing import Callable, Dict, List, Optional, Tuple

from app.application.ports import TableSourcePort
from app.domain.base import (
    GOLDEN,
    BasePoint,
    BaseSystem,
    Distribution,
    DoublingMap,
    IIDShift,
    IrrationalRotation,
    TorusShift,
    sample_point,
)
from app.domain.circlemap import CocycleFamily, ParameterInterval
from app.domain.errors import ConfigurationError
from app.domain.families import RigidFamily, SinePerturbedFamily, TabulatedFamily
from app.domain import schrodinger
from app.domain.schrodinger import PotentialModel

SCHRODINGER_PREFIX = "schrodinger-"

# 이름 → (coupling, seed, alpha) 로 모델 생성
MODELS: Dict[str, Callable[[float, int, Optional[float]], PotentialModel]] = {
    "free": lambda c, s, al: schrodinger.free_model(),
    "anderson-bernoulli": lambda c, s, al: schrodinger.anderson_bernoulli(c, s),
    "anderson-uniform": lambda c, s, al: schrodinger.anderson_uniform(c, s),
    "almost-mathieu": lambda c, s, al: schrodinger.almost_mathieu(c, GOLDEN if al is None else al),
    "fibonacci": lambda c, s, al: schrodinger.fibonacci(c),
    "lloyd": lambda c, s, al: schrodinger.lloyd(c, s),
}

BASES = ("rotation", "torus", "iid", "doubling")

CIRCLE_FAMILIES = ("rigid", "sine-perturbed", "tabulated")


def family_names() -> List[str]:
    return list(CIRCLE_FAMILIES) + [SCHRODINGER_PREFIX + m for m in MODELS]


def model_names() -> List[str]:
    return list(MODELS)


def build_model(name: str, coupling: float = 1.0, seed: int = 0, alpha: Optional[float] = None) -> PotentialModel:
    builder = MODELS.get(name)
    if builder is None:
        raise ConfigurationError(f"unknown model {name!r}; catalog: {', '.join(model_names())}")
    return builder(float(coupling), int(seed), alpha)


def build_base(name: str, seed: int = 0, alpha: Optional[float] = None) -> BaseSystem:
    """circle-map 가족이 올라탈 바닥계."""
    if name == "rotation":
        return IrrationalRotation(GOLDEN if alpha is None else alpha)
    if name == "torus":
        return TorusShift((GOLDEN if alpha is None else alpha, math.sqrt(2.0) - 1.0))
    if name == "iid":
        return IIDShift(Distribution.uniform(0.0, 1.0), seed)
    if name == "doubling":
        return DoublingMap()
    raise ConfigurationError(f"unknown base {name!r}; catalog: {', '.join(BASES)}")


def build_family(
    name: str,
    interval: Optional[Tuple[float, float]] = None,
    *,
    base: str = "rotation",
    seed: int = 0,
    alpha: Optional[float] = None,
    kappa: float = 0.1,
    coupling: float = 1.0,
    table: Optional[TableSourcePort] = None,
) -> CocycleFamily:
    """
    이름 + 파라미터 → CocycleFamily.
    - tabulated: J는 표의 a 범위 (interval은 그 안에 있어야 함)
    - 그 외: interval 필수
    """
    if name == "tabulated":
        if table is None:
            raise ConfigurationError("family 'tabulated' needs a table file")
        rows = [(r.a, r.x, r.h) for r in table.list_rows()]
        fam = TabulatedFamily.from_rows(build_base(base, seed, alpha), rows, source=str(getattr(table, "path", "")))
        if interval is not None:
            fam.interval.check(list(interval))
        return fam

    if interval is None:
        raise ConfigurationError(f"family {name!r} needs a parameter interval")
    J = ParameterInterval(*interval)

    if name == "rigid":
        return RigidFamily(build_base(base, seed, alpha), J)
    if name == "sine-perturbed":
        return SinePerturbedFamily(build_base(base, seed, alpha), J, kappa=kappa, random_phases=True)
    if name.startswith(SCHRODINGER_PREFIX):
        model = build_model(name[len(SCHRODINGER_PREFIX):], coupling, seed, alpha)
        return schrodinger.schrodinger_family(model, J)
    raise ConfigurationError(f"unknown family {name!r}; catalog: {', '.join(family_names())}")


def start_point(base: BaseSystem, seed: int) -> BasePoint:
    """ω0: 시드에서 μ-표본 (task 0)."""
    return sample_point(base, seed, 0)
