from __future__ import annotations

import hashlib
import logging
import math
import warnings
from typing import Any, Dict, Iterable, Optional, Tuple

import numpy as np

from app.domain.base import BaseSystem
from app.domain.circlemap import CocycleFamily, ParameterInterval
from app.domain.errors import ConfigurationError

logger = logging.getLogger(__name__)


class MonotonicityWarning(UserWarning):
    """fiber 맵이 경계에서 겨우 단조(도함수가 0에 닿음)."""


# 2π|κ| = 1 판정 허용 오차
SLOPE_TOL = 1e-12


# ===== rigid =====

class RigidFamily(CocycleFamily):
    """g̃_{a,ω}(x) = x + a. ρ(a) = a, C = 1, M ≡ 2."""

    name = "rigid"
    declared_C = 1.0

    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(points), dtype=np.float64)

    def apply(self, a, w, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) + np.asarray(a, dtype=np.float64)

    def dx(self, a, w, x) -> np.ndarray:
        return np.ones(np.broadcast(np.asarray(a), np.asarray(x)).shape)

    def da(self, a, w, x) -> np.ndarray:
        return np.ones(np.broadcast(np.asarray(a), np.asarray(x)).shape)

    def M_of(self, w: np.ndarray) -> np.ndarray:
        return np.full(np.shape(w), 2.0)


# ===== sine-perturbed rigid =====

class SinePerturbedFamily(CocycleFamily):
    """
    g̃_{a,ω}(x) = x + a + κ sin(2π(x − φ_ω)).

    - random_phases=True: φ_ω = 바닥계 좌표(torus면 첫 성분)
    - 2π|κ| < 1 이어야 향보존 미분동형; = 1 이면 경고만
    - ∂g̃/∂a ≡ 1 이라 C = 1, M = max(2, 1 + 2π|κ|)
    """

    name = "sine-perturbed"
    declared_C = 1.0

    def __init__(
        self,
        base: BaseSystem,
        interval: ParameterInterval,
        kappa: float = 0.1,
        random_phases: bool = True,
    ):
        super().__init__(base, interval)
        kappa = float(kappa)
        slope = 2.0 * math.pi * abs(kappa)
        if not math.isfinite(kappa) or slope > 1.0 + SLOPE_TOL:
            raise ConfigurationError(
                f"sine-perturbed family needs 2*pi*|kappa| <= 1 to stay monotone, got kappa={kappa}"
            )
        if abs(slope - 1.0) <= SLOPE_TOL:
            warnings.warn(
                f"kappa={kappa} puts a critical point on the fiber maps (2*pi*|kappa| = 1)",
                MonotonicityWarning,
                stacklevel=2,
            )
        self.kappa = kappa
        self.random_phases = bool(random_phases)

    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        if not self.random_phases:
            return np.zeros(len(points), dtype=np.float64)
        coord = self.base.coordinate(points)
        return np.asarray(coord[:, 0] if coord.ndim > 1 else coord, dtype=np.float64)

    def apply(self, a, w, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return x + np.asarray(a, dtype=np.float64) + self.kappa * np.sin(2.0 * np.pi * (x - w))

    def dx(self, a, w, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        d = 1.0 + 2.0 * np.pi * self.kappa * np.cos(2.0 * np.pi * (x - w))
        return np.broadcast_to(d, np.broadcast(np.asarray(a), x).shape)

    def da(self, a, w, x) -> np.ndarray:
        return np.ones(np.broadcast(np.asarray(a), np.asarray(x)).shape)

    def M_of(self, w: np.ndarray) -> np.ndarray:
        return np.full(np.shape(w), max(2.0, 1.0 + 2.0 * math.pi * abs(self.kappa)))

    def describe(self) -> Dict[str, Any]:
        d = super().describe()
        d.update(kappa=self.kappa, random_phases=self.random_phases)
        return d


# ===== tabulated (Lipschitz) =====

class TabulatedFamily(CocycleFamily):
    """
    g̃_a(x) = x + h(a, x), h는 (a, x) 직사각 격자 표.

    - x 방향: 주기 1의 구간별 선형, a 방향: 선형 (셀마다 bilinear)
    - 셀 안에서 ∂h/∂x 는 a에 대해 선형이라 극값이 격자 행에서 나온다
      → Lipschitz 상수와 C를 표에서 정확히 계산해 선언한다
    - 바닥계에 의존하지 않음(fiber 값은 0)
    """

    name = "tabulated"

    def __init__(
        self,
        base: BaseSystem,
        a_nodes: Iterable[float],
        x_nodes: Iterable[float],
        values: np.ndarray,
        source: Optional[str] = None,
    ):
        a_nodes = np.asarray(list(a_nodes), dtype=np.float64)
        x_nodes = np.asarray(list(x_nodes), dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)

        if a_nodes.size < 2 or np.any(np.diff(a_nodes) <= 0):
            raise ConfigurationError("table needs at least two strictly increasing a values")
        if x_nodes.size < 2 or np.any(np.diff(x_nodes) <= 0):
            raise ConfigurationError("table needs at least two strictly increasing x values")
        if x_nodes[0] < 0.0 or x_nodes[-1] >= 1.0:
            raise ConfigurationError("table x values must lie in [0,1) (h is 1-periodic in x)")
        if values.shape != (a_nodes.size, x_nodes.size):
            raise ConfigurationError(
                f"table values must have shape {(a_nodes.size, x_nodes.size)}, got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ConfigurationError("table contains non-finite values")

        super().__init__(base, ParameterInterval(float(a_nodes[0]), float(a_nodes[-1])))
        self.a_nodes = a_nodes
        self.x_nodes = x_nodes
        self.values = values
        self.source = source

        # 주기 확장: 마지막 셀은 x_{m-1} → x_0 + 1
        self._xs = np.append(x_nodes, x_nodes[0] + 1.0)
        self._hs = np.concatenate([values, values[:, :1]], axis=1)

        slopes = np.diff(self._hs, axis=1) / np.diff(self._xs)
        if np.any(1.0 + slopes <= 0.0):
            raise ConfigurationError("table is not monotone: some cell has slope <= -1 in x")
        self.declared_lipschitz = float(np.max(1.0 + slopes))
        self.declared_C = float(np.max(np.abs(np.diff(values, axis=0)) / np.diff(a_nodes)[:, None]))

    @classmethod
    def from_rows(
        cls, base: BaseSystem, rows: Iterable[Tuple[float, float, float]], source: Optional[str] = None
    ) -> "TabulatedFamily":
        """(a, x, h) 행들 → 직사각 표. 빠진 칸이나 중복은 ConfigurationError."""
        rows = list(rows)
        if not rows:
            raise ConfigurationError("table is empty")
        a_nodes = sorted({float(r[0]) for r in rows})
        x_nodes = sorted({float(r[1]) for r in rows})
        ia = {a: i for i, a in enumerate(a_nodes)}
        ix = {x: j for j, x in enumerate(x_nodes)}
        values = np.full((len(a_nodes), len(x_nodes)), np.nan)
        for a, x, h in rows:
            i, j = ia[float(a)], ix[float(x)]
            if not np.isnan(values[i, j]):
                raise ConfigurationError(f"table has a duplicate cell at a={a}, x={x}")
            values[i, j] = float(h)
        if np.any(np.isnan(values)):
            raise ConfigurationError("table is not rectangular: some (a, x) cells are missing")
        return cls(base, a_nodes, x_nodes, values, source=source)

    def _locate(self, a, x):
        a, x = np.broadcast_arrays(np.asarray(a, dtype=np.float64), np.asarray(x, dtype=np.float64))
        ia = np.clip(np.searchsorted(self.a_nodes, a, side="right") - 1, 0, self.a_nodes.size - 2)
        t = (a - self.a_nodes[ia]) / (self.a_nodes[ia + 1] - self.a_nodes[ia])

        xm = np.mod(x, 1.0)
        xm = np.where(xm < self.x_nodes[0], xm + 1.0, xm)
        jx = np.clip(np.searchsorted(self._xs, xm, side="right") - 1, 0, self.x_nodes.size - 1)
        s = (xm - self._xs[jx]) / (self._xs[jx + 1] - self._xs[jx])
        return x, ia, t, jx, s

    def fiber_data(self, points: np.ndarray) -> np.ndarray:
        return np.zeros(len(points), dtype=np.float64)

    def apply(self, a, w, x) -> np.ndarray:
        x, ia, t, jx, s = self._locate(a, x)
        H = self._hs
        lower = (1.0 - s) * H[ia, jx] + s * H[ia, jx + 1]
        upper = (1.0 - s) * H[ia + 1, jx] + s * H[ia + 1, jx + 1]
        return x + (1.0 - t) * lower + t * upper

    def da(self, a, w, x) -> np.ndarray:
        _, ia, _, jx, s = self._locate(a, x)
        H = self._hs
        width = self.a_nodes[ia + 1] - self.a_nodes[ia]
        return ((1.0 - s) * (H[ia + 1, jx] - H[ia, jx]) + s * (H[ia + 1, jx + 1] - H[ia, jx + 1])) / width

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.a_nodes, self.x_nodes, self.values):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()[:16]

    def describe(self) -> Dict[str, Any]:
        d = super().describe()
        d.update(
            source=self.source,
            shape=[int(self.a_nodes.size), int(self.x_nodes.size)],
            lipschitz=self.declared_lipschitz,
            C=self.declared_C,
            digest=self.digest(),
        )
        return d
