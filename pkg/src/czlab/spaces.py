"""関数空間の汎関数（H¹・BMO・Hölder・Carleson）と収束実験"""

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field
from itertools import product
from typing import TYPE_CHECKING

import numpy as np
from scipy.stats import qmc

from czlab.errors import GridError, MeanZeroProjectionError, UnresolvableScaleError
from czlab.grid_core import (
    DenseOperator,
    Grid,
    GridFunction,
    PhiKernel,
    bump,
    fit_line,
    fit_log2_slope,
    hilbert_transform,
    lp_norm,
    pairing,
)

if TYPE_CHECKING:
    from czlab.accretive import ReproducingFamily

logger = logging.getLogger("czlab")


@dataclass(frozen=True)
class DyadicFamily:
    grid: Grid
    min_cells: int = 2

    @property
    def sizes(self) -> list[int]:
        """区間のセル数（2 のべき乗、min_cells 以上）"""
        sizes = []
        size = 1
        while size <= self.grid.n_points:
            if size >= self.min_cells:
                sizes.append(size)
            size *= 2
        return sizes

    def intervals(self) -> Iterator[tuple[int, int]]:
        """(先頭セル, セル数)"""
        for size in self.sizes:
            for start in range(0, self.grid.n_points, size):
                yield start, size

    def blocks(self, values: np.ndarray, size: int) -> np.ndarray:
        return values.reshape(self.grid.n_points // size, size)


@dataclass(frozen=True)
class H1Norm:
    value: float
    truncated: bool

    def __float__(self) -> float:
        return self.value


def h1_norm(f: GridFunction) -> H1Norm:
    """‖f‖_1 + ‖Hf‖_1。平均 0 でなければ truncated フラグを立てる"""
    l1 = lp_norm(f, 1)
    mean = abs(pairing(f, GridFunction.constant(f.grid)))
    truncated = mean > 1e-6 * l1
    value = l1 + lp_norm(hilbert_transform(f), 1)
    return H1Norm(value, truncated)


@dataclass
class H1GrowthReport:
    rows: list[dict[str, float]]
    exponent: float
    passed: bool


def h1_test_function(grid: Grid, j: int, k: int, N: float, offset: float = 1.0) -> GridFunction:
    """f_{j,k} = Φ_j^N(x) − c Φ_k^N(x − offset)、c は格子上で平均 0 にする定数"""
    first = PhiKernel(j, N).on(grid)
    second = PhiKernel(k, N).on(grid, center=offset)
    one = GridFunction.constant(grid)
    c = pairing(first, one) / pairing(second, one)
    return first - c * second


def h1_growth_experiment(
    grid: Grid,
    j_range: list[int],
    k_range: list[int],
    N: float = 2.0,
    threshold: float = 1.15,
) -> H1GrowthReport:
    finest = max(max(j_range), max(k_range))
    if 2.0**-finest < 2.0 * grid.spacing:
        raise UnresolvableScaleError(
            f"スケール k={finest} は格子 h={grid.spacing:.4g} で解像できません",
            math.floor(math.log2(1.0 / (2.0 * grid.spacing))),
        )
    rows = []
    by_gap: dict[int, float] = {}
    for j, k in product(j_range, k_range):
        norm = h1_norm(h1_test_function(grid, j, k, N))
        gap = abs(j - k)
        rows.append({"j": j, "k": k, "gap": gap, "h1": norm.value,
                     "truncated": float(norm.truncated)})
        by_gap[gap] = max(by_gap.get(gap, 0.0), norm.value)
    gaps = sorted(by_gap)
    slope, _, _ = fit_line(np.log(1.0 + np.asarray(gaps, dtype=float)),
                           np.log([by_gap[g] for g in gaps]))
    exponent = slope if math.isfinite(slope) else 0.0
    logger.debug("H1 成長指数: %.4f", exponent)
    return H1GrowthReport(rows, exponent, exponent <= threshold)


def bmo_norm(f: GridFunction, min_cells: int = 2) -> float:
    """二進区間上の平均振動の上限"""
    family = DyadicFamily(f.grid, min_cells)
    best = 0.0
    for size in family.sizes:
        blocks = family.blocks(f.values, size)
        averages = blocks.mean(axis=1, keepdims=True)
        best = max(best, float(np.abs(blocks - averages).mean(axis=1).max()))
    return best


@dataclass(frozen=True, eq=False)
class CarlesonMeasure:
    grid: Grid
    densities: dict[int, np.ndarray]
    norm: float

    @classmethod
    def from_densities(
        cls, grid: Grid, densities: dict[int, np.ndarray | GridFunction]
    ) -> "CarlesonMeasure":
        arrays = {
            k: np.real(d.values) if isinstance(d, GridFunction) else np.asarray(d, dtype=float)
            for k, d in densities.items()
        }
        return cls(grid, arrays, carleson_norm(grid, arrays))


def carleson_norm(grid: Grid, densities: dict[int, np.ndarray | GridFunction]) -> float:
    """sup_I (1/|I|) Σ_{2^{-k} ≤ |I|} h Σ_{x_i ∈ I} a_k(x_i)"""
    arrays = {}
    for k, d in densities.items():
        values = np.real(d.values) if isinstance(d, GridFunction) else np.asarray(d, dtype=float)
        if np.any(values < 0):
            raise GridError(f"Carleson 密度が負の値を含みます (k={k})")
        arrays[k] = values
    family = DyadicFamily(grid, min_cells=1)
    h = grid.spacing
    best = 0.0
    for size in family.sizes:
        length = size * h
        included = [a for k, a in arrays.items() if 2.0**-k <= length]
        if not included:
            continue
        total = np.sum(included, axis=0)
        best = max(best, float(family.blocks(total, size).sum(axis=1).max()) * h / length)
    return best


def holder_norm(
    g: GridFunction,
    delta: float,
    near_distance: float = 1.0,
    far_samples: int = 256,
    seed: int = 0,
) -> float:
    """距離 near_distance 以内の全ペアと低食い違い列の遠方ペアでの |g(x)−g(y)|/|x−y|^δ の最大"""
    values = g.values
    n = values.shape[0]
    h = g.grid.spacing
    max_offset = min(n - 1, max(1, int(near_distance / h)))
    best = 0.0
    for m in range(1, max_offset + 1):
        diff = float(np.abs(values[m:] - values[:-m]).max())
        best = max(best, diff / (m * h) ** delta)
    if far_samples > 0 and max_offset < n - 1:
        sampler = qmc.Halton(d=2, scramble=False)
        sampler.fast_forward(seed)
        idx = np.minimum((sampler.random(far_samples) * n).astype(int), n - 1)
        i, j = idx[:, 0], idx[:, 1]
        far = np.abs(i - j) > max_offset
        if np.any(far):
            i, j = i[far], j[far]
            ratios = np.abs(values[i] - values[j]) / (np.abs(i - j) * h) ** delta
            best = max(best, float(ratios.max()))
    return best


def default_projector(grid: Grid) -> GridFunction:
    return GridFunction(grid, bump(grid.points, 0.0, grid.half_width / 4))


def project_mean_zero(
    phi: GridFunction, b: GridFunction, psi: GridFunction | None = None
) -> GridFunction:
    """φ − (⟨b,φ⟩/⟨b,ψ⟩) ψ により ⟨b, ·⟩ = 0 に射影する"""
    if psi is None:
        psi = default_projector(phi.grid)
    denominator = pairing(b, psi)
    scale = lp_norm(b, 1) * lp_norm(psi, math.inf)
    if abs(denominator) <= 1e-12 * max(scale, 1e-300):
        raise MeanZeroProjectionError("射影用のバンプと b のペアリングが 0 です")
    return phi - (pairing(b, phi) / denominator) * psi


def duality_ratio(f: GridFunction, g: GridFunction) -> float:
    """|⟨f, g⟩| / (‖f‖_{H¹} ‖g‖_{BMO})"""
    denominator = h1_norm(f).value * bmo_norm(g)
    if denominator == 0:
        return 0.0
    return abs(pairing(f, g)) / denominator


def _trend_decreasing(scales: list[int], values: list[float], direction: int) -> bool:
    """direction=+1 なら k ↑ で、-1 なら k ↓ で減少傾向か"""
    if max(values, default=0.0) == 0:
        return True
    slope, _, _ = fit_log2_slope(scales, values, floor=1e-300)
    return bool(math.isfinite(slope) and direction * slope < 0)


@dataclass
class ApproxIdentityConvergence:
    scales: list[int]
    fine_errors: list[float]
    coarse_norms: list[float]
    sup_ratios: list[float]
    fine_decreasing: bool
    coarse_decreasing: bool

    @property
    def passed(self) -> bool:
        return self.fine_decreasing and self.coarse_decreasing


def approx_identity_convergence(
    mollifiers: dict[int, DenseOperator], f: GridFunction, p: float = 2.0, q: float = 1.0
) -> ApproxIdentityConvergence:
    """‖P_k f − f‖_p（k ↑）と ‖P_k f‖_p（k ↓）の推移"""
    scales = sorted(mollifiers)
    images = [mollifiers[k].apply(f) for k in scales]
    fine = [lp_norm(img - f, p) for img in images]
    coarse = [lp_norm(img, p) for img in images]
    sup_ratios = [lp_norm(img, math.inf) / 2.0 ** (k / q) for k, img in zip(scales, images)]
    return ApproxIdentityConvergence(
        scales=scales,
        fine_errors=fine,
        coarse_norms=coarse,
        sup_ratios=sup_ratios,
        fine_decreasing=_trend_decreasing(scales, fine, +1),
        coarse_decreasing=_trend_decreasing(scales, coarse, -1),
    )


@dataclass
class ReproducingConvergence:
    mode: str
    M_values: list[int]
    errors: list[float]
    decreasing: bool
    final: float
    per_scale: dict[int, float] = field(default_factory=dict)
    gamma_fit: float = math.nan


def _norm_in_mode(f: GridFunction, mode: str, p: float) -> float:
    if mode == "H1":
        return h1_norm(f).value
    return lp_norm(f, p)


def reproducing_convergence(
    fam: "ReproducingFamily", phi: GridFunction, mode: str = "L2", p: float = 2.0
) -> ReproducingConvergence:
    """部分和 Σ_{|k|≤M} D̃_k M_b D_k M_b φ の bφ への相対誤差"""
    if mode not in {"L2", "Lp", "H1"}:
        raise GridError(f"未対応のモードです: {mode}")
    if mode == "L2":
        p = 2.0
    b = fam.b.b
    target = b * phi
    scale = lp_norm(target, 1)
    if abs(pairing(b, phi)) > 1e-8 * max(scale, 1e-300) and scale > 0:
        raise MeanZeroProjectionError("bφ が平均 0 ではありません")

    terms = {k: fam.term(k, phi) for k in fam.scales}
    reference = _norm_in_mode(target, mode, p)
    M_values = list(range(0, max(abs(k) for k in fam.scales) + 1))
    errors = []
    partial = GridFunction.zeros(fam.grid)
    included: set[int] = set()
    for M in M_values:
        for k in fam.scales:
            if abs(k) <= M and k not in included:
                partial = partial + terms[k]
                included.add(k)
        error = _norm_in_mode(partial - target, mode, p)
        errors.append(error / reference if reference > 0 else error)
    tolerance = 1e-12 * max(max(errors, default=0.0), 1e-300)
    decreasing = bool(np.all(np.diff(errors) <= tolerance))

    per_scale: dict[int, float] = {}
    gamma_fit = math.nan
    if mode == "H1":
        per_scale = {k: h1_norm(t).value for k, t in terms.items()}
        ks = np.array(sorted(per_scale))
        envelope = np.array([per_scale[k] / (1 + abs(k)) for k in ks])
        slope, _, _ = fit_log2_slope(np.abs(ks), envelope, floor=1e-300)
        gamma_fit = -slope if math.isfinite(slope) else math.nan
    return ReproducingConvergence(
        mode=mode,
        M_values=M_values,
        errors=errors,
        decreasing=decreasing,
        final=errors[-1] if errors else 0.0,
        per_scale=per_scale,
        gamma_fit=gamma_fit,
    )
