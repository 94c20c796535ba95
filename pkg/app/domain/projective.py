from __future__ import annotations

import math
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np

from app.config import settings
from app.domain.base import BaseSystem
from app.domain.circlemap import (
    CocycleFamily,
    ParameterInterval,
    continuity_offsets,
    sup_padding,
)
from app.domain.errors import PreconditionError

Entries = Tuple[Any, Any, Any, Any]
MatrixFn = Callable[[np.ndarray, Any], Entries]

# 방향각 θ ∈ [−π/2, π/2) 위에서 Au의 각도 증가량은 [0, π) 안에 있다.
# 반올림으로 0 근처가 2π 근처로 튀는 것만 되돌린다.
_WRAP_CUT = 1.5 * np.pi


def projective_lift(m11, m12, m21, m22, x) -> np.ndarray:
    """
    A = ((m11, m12), (m21, m22)) ∈ SL(2,R)가 RP¹ 위에 유도하는 사영 맵의 연속 degree-one lift.

    - 원 좌표: x = (방향각)/π, 한 바퀴 = RP¹ 한 바퀴
    - x = k + s/π, s ∈ [−π/2, π/2) 로 쪼개서 Au(s)의 각도를
      기준 방향 A·(0,−1)의 각도 φ0 에서부터 연속으로 잰다
    - 정규화 전(raw) 대표: 단위행렬이면 정확히 x ↦ x
    """
    x = np.asarray(x, dtype=np.float64)
    k = np.floor(x + 0.5)
    s = np.pi * (x - k)
    c, sn = np.cos(s), np.sin(s)
    vx = m11 * c + m12 * sn
    vy = m21 * c + m22 * sn
    phi0 = np.arctan2(-np.asarray(m22, dtype=np.float64), -np.asarray(m12, dtype=np.float64))
    delta = np.mod(np.arctan2(vy, vx) - phi0, 2.0 * np.pi)
    delta = np.where(delta > _WRAP_CUT, delta - 2.0 * np.pi, delta)
    return k + (phi0 + delta) / np.pi


def projective_dx(m11, m12, m21, m22, x) -> np.ndarray:
    """det = 1 이면 사영 맵의 도함수는 1/‖A u(πx)‖²."""
    s = np.pi * np.asarray(x, dtype=np.float64)
    c, sn = np.cos(s), np.sin(s)
    vx = m11 * c + m12 * sn
    vy = m21 * c + m22 * sn
    return 1.0 / (vx * vx + vy * vy)


def projective_da(m: Entries, dm: Entries, x) -> np.ndarray:
    """∂g̃/∂a = cross(Au, A′u) / (π ‖Au‖²); 분기(branch)와 무관하다."""
    s = np.pi * np.asarray(x, dtype=np.float64)
    c, sn = np.cos(s), np.sin(s)
    vx = m[0] * c + m[1] * sn
    vy = m[2] * c + m[3] * sn
    dvx = dm[0] * c + dm[1] * sn
    dvy = dm[2] * c + dm[3] * sn
    return (vx * dvy - vy * dvx) / (np.pi * (vx * vx + vy * vy))


def operator_norm_sq(m11, m12, m21, m22) -> np.ndarray:
    """2×2 행렬의 ‖A‖² (최대 특이값 제곱); det = 1 이면 (F + √(F² − 4))/2, F = ‖A‖_F²."""
    fro = m11 * m11 + m12 * m12 + m21 * m21 + m22 * m22
    det = m11 * m22 - m12 * m21
    return 0.5 * (fro + np.sqrt(np.maximum(fro * fro - 4.0 * det * det, 0.0)))


def _coordinate_fiber(base: BaseSystem, points: np.ndarray) -> np.ndarray:
    coord = base.coordinate(points)
    return coord[:, 0] if coord.ndim > 1 else coord


def _callable_tag(fn: Callable[..., Any]) -> str:
    """캐시 키에 들어갈 함수 식별자. 지역 함수나 lambda는 객체 id까지 붙인다."""
    qual = getattr(fn, "__qualname__", None) or type(fn).__qualname__
    tag = f"{getattr(fn, '__module__', None) or type(fn).__module__}.{qual}"
    if "<" in qual:
        tag += f"@{id(fn):x}"
    return tag


class ProjectiveFamily(CocycleFamily):
    """
    SL(2,R) 값 cocycle A(a, ω)의 사영화로 얻는 원 cocycle 가족.

    - lift 대표는 a-격자를 a_min의 정규 대표에서부터 걸어가며 고른다
      (이웃 대표 사이 간격 h는 C·h < 1/2)
    - 보고 단위 회전수는 fiber 회전수의 1/2 (RP¹ 한 바퀴 = 각도 반 바퀴)
    """

    name = "projective"
    rotation_scale = 0.5

    def __init__(
        self,
        base: BaseSystem,
        interval: ParameterInterval,
        matrix: MatrixFn,
        matrix_da: Optional[MatrixFn] = None,
        fiber: Callable[[BaseSystem, np.ndarray], np.ndarray] = _coordinate_fiber,
        name: Optional[str] = None,
        walk_step: Optional[float] = None,
        tag: Optional[str] = None,
    ):
        super().__init__(base, interval)
        self._matrix = matrix
        self._tag = tag
        self._matrix_da = matrix_da
        self._fiber = fiber
        if name is not None:
            self.name = name
        self._walk_step = walk_step

    # ---------- matrices ----------
    def matrix(self, a, w) -> Entries:
        return self._matrix(np.asarray(a, dtype=np.float64), w)

    def matrix_da(self, a, w) -> Entries:
        if self._matrix_da is not None:
            return self._matrix_da(np.asarray(a, dtype=np.float64), w)
        h = 1e-6 * max(1.0, self.interval.width)
        a = np.asarray(a, dtype=np.float64)
        plus, minus = self.matrix(a + h, w), self.matrix(a - h, w)
        return tuple((p - q) / (2.0 * h) for p, q in zip(plus, minus))  # type: ignore[return-value]

    # ---------- E-continuity walk ----------
    @property
    def walk_step(self) -> float:
        C = self.C
        if self._walk_step is None:
            return 0.25 / C if C > 0 else max(self.interval.width, 1.0)
        if C * self._walk_step >= 0.5:
            raise PreconditionError(
                f"walk spacing h={self._walk_step} violates C*h < 1/2 (C={C})"
            )
        return float(self._walk_step)

    def walk_nodes(self) -> np.ndarray:
        lo, hi = self.interval.lo, self.interval.hi
        h = self.walk_step
        count = max(2, int(math.ceil((hi - lo) / h)) + 1)
        return np.minimum(lo + h * np.arange(count), hi)

    def raw(self, a, w, x) -> np.ndarray:
        return projective_lift(*self.matrix(a, w), x)

    def offsets(self, a, w) -> np.ndarray:
        a = np.asarray(a, dtype=np.float64)
        nodes = self.walk_nodes()
        raw_nodes = self.raw(nodes, w, 0.0)
        aligned = raw_nodes + continuity_offsets(raw_nodes)
        h = self.walk_step
        idx = np.clip(np.floor((a - self.interval.lo) / h).astype(np.int64), 0, len(nodes) - 1)
        return np.rint(aligned[idx] - self.raw(a, w, 0.0))

    # ---------- CocycleFamily ----------
    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self._fiber(self.base, points), dtype=np.float64)

    def apply(self, a, w, x) -> np.ndarray:
        return self.raw(a, w, x) + self.offsets(a, w)

    def dx(self, a, w, x) -> np.ndarray:
        return projective_dx(*self.matrix(a, w), x)

    def da(self, a, w, x) -> np.ndarray:
        return projective_da(self.matrix(a, w), self.matrix_da(a, w), x)

    def M_of(self, w: np.ndarray) -> np.ndarray:
        """max(2, sup_a ‖A(a,ω)‖²), a 격자 sup에 패딩."""
        w = np.asarray(w, dtype=np.float64)
        grid = settings.numerics.sup_grid
        a = self.interval.lattice(grid)
        out = np.empty(w.shape, dtype=np.float64)
        for i, wi in enumerate(w.reshape(-1)):
            sup = float(np.max(operator_norm_sq(*self.matrix(a, wi)))) * sup_padding(grid)
            out.reshape(-1)[i] = max(2.0, sup)
        return out

    def describe(self) -> Dict[str, Any]:
        d = super().describe()
        d["kind"] = "projective"
        d["matrix"] = self._tag if self._tag is not None else _callable_tag(self._matrix)
        d["fiber"] = _callable_tag(self._fiber)
        return d
