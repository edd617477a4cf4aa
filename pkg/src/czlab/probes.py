"""テスト関数（プローブ）の生成"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from czlab.errors import ProbeSpecError
from czlab.grid_core import Grid, GridFunction, bump
from czlab.spaces import holder_norm, project_mean_zero

logger = logging.getLogger("czlab")

FAMILIES = ("bump", "holder_random", "oscillation", "mean_zero_pair")


@dataclass(frozen=True)
class ProbeSpec:
    family: str
    count: int = 4
    seed: int = 0
    params: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ProbeSpecError(f"未知のプローブ族です: {self.family}")
        if self.count < 0:
            raise ProbeSpecError(f"count に負の値は指定できません: {self.count}")
        if self.family == "holder_random":
            delta = self.delta
            if not 0 < delta <= 1:
                raise ProbeSpecError(f"Hölder 指数 δ は (0, 1] の範囲で指定してください: {delta}")

    @property
    def delta(self) -> float:
        return float(self.params.get("delta", 0.5))

    def to_dict(self) -> dict[str, Any]:
        return {"family": self.family, "count": self.count, "seed": self.seed,
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ProbeSpec":
        try:
            return cls(
                family=str(data["family"]),
                count=int(data.get("count", 4)),
                seed=int(data.get("seed", 0)),
                params={k: float(v) for k, v in data.get("params", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProbeSpecError(f"プローブ指定が不正です: {e}") from e


@dataclass(frozen=True)
class SmoothBump:
    """解析的な導関数をもつバンプ a·exp(1 − 1/(1 − t²))、t = (x − c)/r"""

    center: float = 0.0
    radius: float = 1.0
    amplitude: complex = 1.0

    def on(self, grid: Grid) -> GridFunction:
        return GridFunction(grid, self.amplitude * bump(grid.points, self.center, self.radius))

    def derivative_on(self, grid: Grid) -> GridFunction:
        t = (grid.points - self.center) / self.radius
        out = np.zeros(grid.n_points)
        inside = np.abs(t) < 1
        ti = t[inside]
        out[inside] = (
            np.exp(1.0 - 1.0 / (1.0 - ti**2)) * (-2.0 * ti / (1.0 - ti**2) ** 2) / self.radius
        )
        return GridFunction(grid, self.amplitude * out)


def _rng(spec: ProbeSpec, index: int) -> np.random.Generator:
    return np.random.default_rng([spec.seed, index])


def _fractional_noise(grid: Grid, delta: float, rng: np.random.Generator) -> np.ndarray:
    """白色雑音のフーリエ係数に |ξ|^{−(δ+½)} を掛けて平滑化し、コンパクト台の窓を掛ける（sup = 1）

    係数は周波数の低い順に引くので、同じ seed なら細かい格子は粗い格子の全モードを共有する。
    """
    n = grid.n_points
    modes = n // 2 + 1
    noise = rng.standard_normal((modes, 2))
    xi = math.pi * np.arange(modes) / grid.half_width
    gain = np.zeros(modes)
    gain[1:] = xi[1:] ** -(delta + 0.5)
    values = np.fft.irfft((noise[:, 0] + 1j * noise[:, 1]) * gain, n) * n
    values *= bump(grid.points, 0.0, 0.8 * grid.half_width)
    return values / np.abs(values).max()


def gen_probes(spec: ProbeSpec, grid: Grid, b: GridFunction | None = None) -> list[GridFunction]:
    L = grid.half_width
    probes: list[GridFunction] = []
    for i in range(spec.count):
        rng = _rng(spec, i)
        if spec.family == "bump":
            center = float(rng.uniform(-L / 2, L / 2))
            radius = float(rng.uniform(L / 16, L / 4))
            probes.append(SmoothBump(center, radius).on(grid))
        elif spec.family == "oscillation":
            freq = float(spec.params.get("freq", 4.0))
            phase = float(rng.uniform(0.0, 2.0 * math.pi))
            window = bump(grid.points, 0.0, L / 2)
            probes.append(GridFunction(grid, window * np.exp(1j * (freq * grid.points + phase))))
        elif spec.family == "holder_random":
            f = GridFunction(grid, _fractional_noise(grid, spec.delta, rng))
            logger.debug("Hölder プローブ %d: ‖·‖_δ = %.4g", i, holder_norm(f, spec.delta))
            probes.append(f)
        else:
            weight = b if b is not None else GridFunction.constant(grid)
            center = float(rng.uniform(-L / 2, L / 2))
            radius = float(rng.uniform(L / 16, L / 8))
            probes.append(project_mean_zero(SmoothBump(center, radius).on(grid), weight))
    return probes


def refinement_ratio(spec: ProbeSpec, grid: Grid, levels: int = 10, delta: float = 0.9) -> float:
    """同じ seed の holder_random プローブを格子 n と n·2^levels で生成し、‖·‖_δ の増加率を返す

    商は粗い格子の 1 セル以内の距離で測る。指数 δ がプローブの指数を超えると 2^{levels(δ − δ_probe)} 程度で発散する。
    """
    if spec.family != "holder_random":
        raise ProbeSpecError(f"refinement_ratio は holder_random 専用です: {spec.family}")
    if levels < 1:
        raise ProbeSpecError(f"levels は 1 以上が必要です: {levels}")
    fine_grid = Grid(grid.half_width, grid.n_points * 2**levels)
    one = ProbeSpec(spec.family, count=1, seed=spec.seed, params=dict(spec.params))
    (coarse,) = gen_probes(one, grid)
    (fine,) = gen_probes(one, fine_grid)
    near = grid.spacing
    base = holder_norm(coarse, delta, near_distance=near, far_samples=0)
    ratio = holder_norm(fine, delta, near_distance=near, far_samples=0) / base
    logger.debug("Hölder プローブの細分比 (n=%d → %d): %.4g", grid.n_points, fine_grid.n_points, ratio)
    return ratio
