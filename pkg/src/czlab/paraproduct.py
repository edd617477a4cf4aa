"""テスト条件を指定して構成する双線形パラプロダクト L とその核"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from czlab.accretive import ApproxIdentity, ParaAccretive, ReproducingFamily
from czlab.errors import (
    DegenerateTripleError,
    DomainTooSmallError,
    FamilyMismatchError,
    HolderTripleError,
    InvalidArgumentError,
)
from czlab.grid_core import (
    Grid,
    GridFunction,
    bump,
    fit_log2_slope,
    lp_norm,
    pairing,
    parallel_map,
)
from czlab.lp_kernels import BilinearKernelFamily
from czlab.spaces import CarlesonMeasure, project_mean_zero

logger = logging.getLogger("czlab")

PROFILES = ("cos2", "smooth")


def _smooth_step(u: np.ndarray) -> np.ndarray:
    """u ≤ 0 で 1、u ≥ 1 で 0 となる C^∞ の階段"""
    def f(t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    return f(1.0 - u) / (f(1.0 - u) + f(u))


def cutoff(grid: Grid, R: float, profile: str = "cos2") -> GridFunction:
    """|x| ≤ R で 1、|x| ≥ 2R で 0 の切り落とし関数 η_R"""
    if profile not in PROFILES:
        raise InvalidArgumentError(f"未知の切り落としプロファイルです: {profile}")
    t = np.abs(grid.points) / R
    u = np.clip(t - 1.0, 0.0, 1.0)
    if profile == "cos2":
        values = np.cos(0.5 * math.pi * u) ** 2
    else:
        values = _smooth_step(u)
    values[t >= 2.0] = 0.0
    return GridFunction(grid, values)


def check_holder_triple(p: float, p1: float, p2: float) -> None:
    if not (p1 > 1 and p2 > 1 and p >= 1):
        raise HolderTripleError(f"指数が範囲外です: p={p}, p1={p1}, p2={p2}")
    if abs(1.0 / p - 1.0 / p1 - 1.0 / p2) > 1e-12:
        raise HolderTripleError(f"1/p = 1/p1 + 1/p2 を満たしません: p={p}, p1={p1}, p2={p2}")


@dataclass(frozen=True, eq=False)
class Paraproduct:
    """L(f1, f2) = Σ_k D_k M_{b0}[w_k (S_k^{b1} f1)(S_k^{b2} f2)]、w_k = W_kᵀ(b0 β)"""

    b0: ParaAccretive
    b1: ParaAccretive
    b2: ParaAccretive
    beta: GridFunction
    family0: ReproducingFamily
    approx1: ApproxIdentity
    approx2: ApproxIdentity
    weights: dict[int, GridFunction]
    carleson: CarlesonMeasure
    _symbols: dict[int, GridFunction] = field(repr=False, default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.b0.grid

    @property
    def scales(self) -> list[int]:
        return self.family0.scales

    def symbol(self, k: int) -> GridFunction:
        """b0 w_k"""
        return self._symbols[k]

    def _sum(self, term: Callable[[int], GridFunction]) -> GridFunction:
        parts = parallel_map(term, self.scales)
        total = GridFunction.zeros(self.grid)
        for part in parts:
            total = total + part
        return total

    def __call__(self, f1: GridFunction, f2: GridFunction) -> GridFunction:
        def term(k: int) -> GridFunction:
            inner = self.symbol(k) * self.approx1.operators[k].apply(f1)
            inner = inner * self.approx2.operators[k].apply(f2)
            return self.family0.differences[k].apply(inner)

        return self._sum(term)

    def transpose1(self, f0: GridFunction, f2: GridFunction) -> GridFunction:
        """⟨L^{*1}(f0, f2), f1⟩ = ⟨L(f1, f2), f0⟩"""
        def term(k: int) -> GridFunction:
            inner = self.symbol(k) * self.family0.differences[k].transpose().apply(f0)
            inner = inner * self.approx2.operators[k].apply(f2)
            return self.approx1.operators[k].transpose().apply(inner)

        return self._sum(term)

    def transpose2(self, f1: GridFunction, f0: GridFunction) -> GridFunction:
        """⟨L^{*2}(f1, f0), f2⟩ = ⟨L(f1, f2), f0⟩"""
        def term(k: int) -> GridFunction:
            inner = self.symbol(k) * self.family0.differences[k].transpose().apply(f0)
            inner = inner * self.approx1.operators[k].apply(f1)
            return self.approx2.operators[k].transpose().apply(inner)

        return self._sum(term)


def _check_families(family0: ReproducingFamily, approx1: ApproxIdentity, approx2: ApproxIdentity) -> None:
    grid = family0.grid
    if approx1.grid != grid or approx2.grid != grid:
        raise FamilyMismatchError("パラプロダクトの族が異なる格子上にあります")
    missing = [k for k in family0.scales if k not in approx1.operators or k not in approx2.operators]
    if missing:
        raise FamilyMismatchError(f"S_k の族にスケール {missing} がありません")


def build_paraproduct(
    family0: ReproducingFamily,
    approx1: ApproxIdentity,
    approx2: ApproxIdentity,
    beta: GridFunction,
) -> Paraproduct:
    _check_families(family0, approx1, approx2)
    if beta.grid != family0.grid:
        raise FamilyMismatchError("β の格子が族と一致しません")
    b0 = family0.b
    target = b0.b * beta
    weights = {k: W.transpose().apply(target) for k, W in family0.companions.items()}
    symbols = {k: b0.b * w for k, w in weights.items()}
    carleson = CarlesonMeasure.from_densities(
        family0.grid, {k: w.abs() ** 2 for k, w in weights.items()}
    )
    logger.debug("パラプロダクトを構成: Carleson ノルム %.4g", carleson.norm)
    return Paraproduct(
        b0=b0,
        b1=approx1.b,
        b2=approx2.b,
        beta=beta,
        family0=family0,
        approx1=approx1,
        approx2=approx2,
        weights=weights,
        carleson=carleson,
        _symbols=symbols,
    )


def beta_library(grid: Grid) -> dict[str, GridFunction]:
    """有界な振動と正則化した log|x − a|"""
    x = grid.points
    eps = 4.0 * grid.spacing
    return {
        "oscillation": GridFunction(grid, np.cos(x) + 0.5 * np.sin(3.0 * x)),
        "slow": GridFunction(grid, np.sin(0.5 * x)),
        "log": GridFunction(grid, np.log(np.sqrt((x - 0.5) ** 2 + eps**2))),
        "log_far": GridFunction(grid, 0.5 * np.log(np.sqrt((x + 2.0) ** 2 + eps**2))),
    }


def _kernel_weights(P: Paraproduct, k: int, i: int) -> np.ndarray:
    """u ↦ h d_k(x_i, u) b0(u) w_k(u)"""
    h = P.grid.spacing
    return h * P.family0.differences[k].coeffs[i, :] * P.symbol(k).values


def _check_triple(grid: Grid, x: float, y1: float, y2: float) -> None:
    spread = max(x, y1, y2) - min(x, y1, y2)
    if spread < grid.spacing:
        raise DegenerateTripleError(
            f"三つ組が同じセル内にあります: ({x:.6g}, {y1:.6g}, {y2:.6g})"
        )


def kernel_slice(P: Paraproduct, x: float) -> np.ndarray:
    """ℓ(x, y1, y2) を格子全体の (y1, y2) について並べた行列"""
    i = P.grid.index_of(x)
    out = np.zeros((P.grid.n_points, P.grid.n_points), dtype=complex)
    for k in P.scales:
        c = _kernel_weights(P, k, i)
        s1 = P.approx1.operators[k].coeffs
        s2 = P.approx2.operators[k].coeffs
        out += (s1 * c[:, None]).T @ s2
    return out


def paraproduct_kernel(P: Paraproduct, x: float, y1: float, y2: float) -> complex:
    """Σ_k h Σ_u d_k(x,u) b0(u) w_k(u) s_k^{b1}(u,y1) s_k^{b2}(u,y2)"""
    grid = P.grid
    _check_triple(grid, x, y1, y2)
    i, j1, j2 = grid.index_of(x), grid.index_of(y1), grid.index_of(y2)
    total = 0j
    for k in P.scales:
        c = _kernel_weights(P, k, i)
        s1 = P.approx1.operators[k].coeffs[:, j1]
        s2 = P.approx2.operators[k].coeffs[:, j2]
        total += complex(np.sum(c * s1 * s2))
    return total


def kernel_family(P: Paraproduct, N: float = 2.0, gamma: float = 1.0) -> BilinearKernelFamily:
    """スケールごとの核 ℓ_k を双線形核族として返す"""
    grid = P.grid

    def index(x: np.ndarray) -> np.ndarray:
        i = np.rint(np.asarray(x) / grid.spacing + (grid.n_points - 1) / 2).astype(int)
        return np.clip(i, 0, grid.n_points - 1)

    def evaluator(k: int, x: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        c = grid.spacing * P.family0.differences[k].coeffs[index(x), :] * P.symbol(k).values
        s1 = P.approx1.operators[k].coeffs[:, index(y1)].T
        s2 = P.approx2.operators[k].coeffs[:, index(y2)].T
        return np.sum(c * s1 * s2, axis=1)

    return BilinearKernelFamily(
        "paraproduct", evaluator, tuple(P.scales), N, gamma, smooth=True,
        domain=grid.half_width / 2,
    )


def kernel_size_constant(P: Paraproduct, n_samples: int = 256, seed: int = 0) -> float:
    """|ℓ(x,y1,y2)| (|x−y1| + |x−y2|)² の標本上の最大"""
    grid = P.grid
    rng = np.random.default_rng(seed)
    L = grid.half_width
    best = 0.0
    xs = rng.uniform(-L / 2, L / 2, n_samples)
    spread = 2.0 ** (1 - min(P.scales))
    for x in xs:
        y1, y2 = x + rng.uniform(-spread, spread, 2)
        if max(x, y1, y2) - min(x, y1, y2) < 2 * grid.spacing:
            continue
        value = abs(paraproduct_kernel(P, float(x), float(y1), float(y2)))
        best = max(best, value * (abs(x - y1) + abs(x - y2)) ** 2)
    return best


@dataclass
class TestingReport:
    R_values: list[float]
    e0: list[float]
    e1: list[float]
    e2: list[float]
    target: float
    e0_decreasing: bool
    slopes: dict[str, float]
    profile: str = "cos2"


def _non_increasing(values: list[float]) -> bool:
    scale = max(values, default=0.0)
    return all(b <= a + 1e-9 * scale + 1e-14 for a, b in zip(values, values[1:]))


def decay_slope(R_values: list[float], values: list[float], scale: float) -> float:
    """log2 e vs log2 R の傾き。丸め誤差以下の値は除外し、残りが 2 点未満なら −∞"""
    floor = 1e-13 * max(scale, 1e-300)
    if sum(1 for v in values if v > floor) < 2:
        return -math.inf
    slope, _, _ = fit_log2_slope(np.log2(R_values), values, floor=floor)
    return slope


def check_R_values(grid: Grid, R_values: list[float]) -> None:
    limit = grid.half_width / 4
    too_big = [R for R in R_values if R > limit * (1 + 1e-12) or R <= 0]
    if too_big:
        raise DomainTooSmallError(f"R={too_big} は領域に対して大きすぎます (R ≤ L/4 = {limit:.4g})")


def verify_testing_conditions(
    P: Paraproduct,
    R_values: list[float],
    probes: list[GridFunction],
    profile: str = "cos2",
) -> TestingReport:
    check_R_values(P.grid, R_values)
    b0, b1, b2 = P.b0.b, P.b1.b, P.b2.b
    phis = [
        (project_mean_zero(phi, b0), project_mean_zero(phi, b1), project_mean_zero(phi, b2))
        for phi in probes
    ]
    target = max((abs(pairing(P.beta, b0 * p0)) for p0, _, _ in phis), default=0.0)

    def sweep(R: float) -> tuple[float, float, float]:
        eta = cutoff(P.grid, R, profile)
        image = P(b1 * eta, b2 * eta)
        t1 = P.transpose1(b0 * eta, b2 * eta)
        t2 = P.transpose2(b1 * eta, b0 * eta)
        e0 = e1 = e2 = 0.0
        for p0, p1, p2 in phis:
            e0 = max(e0, abs(pairing(image, b0 * p0) - pairing(P.beta, b0 * p0)))
            e1 = max(e1, abs(pairing(t1, b1 * p1)))
            e2 = max(e2, abs(pairing(t2, b2 * p2)))
        logger.debug("R=%.4g: e0=%.3g e1=%.3g e2=%.3g", R, e0, e1, e2)
        return e0, e1, e2

    rows = [sweep(R) for R in R_values]
    e0 = [r[0] for r in rows]
    e1 = [r[1] for r in rows]
    e2 = [r[2] for r in rows]
    scale = max(target, lp_norm(P.beta, math.inf))
    return TestingReport(
        R_values=list(R_values),
        e0=e0,
        e1=e1,
        e2=e2,
        target=target,
        e0_decreasing=_non_increasing(e0),
        slopes={
            "e0": decay_slope(R_values, e0, scale),
            "e1": decay_slope(R_values, e1, scale),
            "e2": decay_slope(R_values, e2, scale),
        },
        profile=profile,
    )


def boundedness_probes(grid: Grid, trials: int, seed: int = 0) -> list[GridFunction]:
    """バンプ・振動・窓付き乱数からなる試行関数"""
    rng = np.random.default_rng(seed)
    L = grid.half_width
    x = grid.points
    probes = []
    for i in range(trials):
        center = float(rng.uniform(-L / 2, L / 2))
        radius = float(rng.uniform(L / 32, L / 4))
        window = bump(x, center, radius)
        kind = i % 3
        if kind == 0:
            values = window
        elif kind == 1:
            values = window * np.exp(1j * float(rng.uniform(1.0, 8.0)) * x)
        else:
            values = window * (rng.standard_normal(grid.n_points) + 1j * rng.standard_normal(grid.n_points))
        probes.append(GridFunction(grid, values))
    return probes


def boundedness_ratio(
    P: Paraproduct, p1: float = 4.0, p2: float = 4.0, trials: int = 12, seed: int = 0, p: float = 2.0
) -> float:
    """max ‖L(f1, f2)‖_p / (‖f1‖_{p1} ‖f2‖_{p2})"""
    check_holder_triple(p, p1, p2)
    probes = boundedness_probes(P.grid, trials, seed)
    best = 0.0
    for i, f1 in enumerate(probes):
        f2 = probes[(i + 1) % len(probes)]
        denominator = lp_norm(f1, p1) * lp_norm(f2, p2)
        if denominator > 0:
            best = max(best, lp_norm(P(f1, f2), p) / denominator)
    return best


def ratio_over_sqrt_carleson(P: Paraproduct, ratio: float) -> float:
    norm = P.carleson.norm
    if norm == 0:
        return 0.0
    return ratio / math.sqrt(norm)
