"""三重線形形式に対する Tb 条件の監査（WBP・θ_k 抽出・双対和・パラプロダクトによる還元）"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from czlab.accretive import ParaAccretive, ReproducingFamily
from czlab.errors import (
    DomainTooSmallError,
    InvalidArgumentError,
    NonConvergentSweepError,
    UnresolvableScaleError,
)
from czlab.grid_core import (
    DenseOperator,
    Grid,
    GridFunction,
    PhiKernel,
    bump,
    fit_line,
    lp_norm,
    pairing,
    parallel_map,
)
from czlab.lp_kernels import (
    BilinearKernelFamily,
    BilinearOperatorFamily,
    KernelReport,
    envelope_slope,
    verify_kernel_family,
)
from czlab.paraproduct import (
    Paraproduct,
    build_paraproduct,
    check_holder_triple,
    check_R_values,
    cutoff,
)
from czlab.spaces import bmo_norm, h1_norm, project_mean_zero

logger = logging.getLogger("czlab")

Evaluator = Callable[[GridFunction, GridFunction, GridFunction], complex]
Bilinear = Callable[[GridFunction, GridFunction], GridFunction]
Kernel = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class TrilinearForm:
    """⟨T(f1, f2), f0⟩。operator・adjoint1・adjoint2 は分かっていれば与える"""

    name: str
    evaluator: Evaluator
    operator: Bilinear | None = None
    adjoint1: Bilinear | None = None
    adjoint2: Bilinear | None = None
    kernel: Kernel | None = None
    gamma: float = 1.0

    @classmethod
    def from_operator(
        cls,
        name: str,
        operator: Bilinear,
        adjoint1: Bilinear | None = None,
        adjoint2: Bilinear | None = None,
        kernel: Kernel | None = None,
        gamma: float = 1.0,
    ) -> "TrilinearForm":
        def evaluator(f1: GridFunction, f2: GridFunction, f0: GridFunction) -> complex:
            return pairing(operator(f1, f2), f0)

        return cls(name, evaluator, operator, adjoint1, adjoint2, kernel, gamma)

    def __call__(self, f1: GridFunction, f2: GridFunction, f0: GridFunction) -> complex:
        return self.evaluator(f1, f2, f0)

    def pairings(self, f1: GridFunction, f2: GridFunction, f0s: list[GridFunction]) -> np.ndarray:
        """複数の f0 に対する ⟨T(f1, f2), f0⟩（作用素があれば像を一度だけ計算する）"""
        if self.operator is not None:
            image = self.operator(f1, f2)
            return np.array([pairing(image, f0) for f0 in f0s], dtype=complex)
        return np.array([self.evaluator(f1, f2, f0) for f0 in f0s], dtype=complex)

    def transpose1(self) -> "TrilinearForm":
        """⟨T^{*1}(f0, f2), f1⟩ = ⟨T(f1, f2), f0⟩"""
        T = self
        adjoint2 = None
        if T.adjoint2 is not None:
            a2 = T.adjoint2
            adjoint2 = lambda a, c: a2(c, a)
        kernel = None
        if T.kernel is not None:
            K = T.kernel
            kernel = lambda x, y1, y2: K(y1, x, y2)
        return TrilinearForm(
            f"{T.name}*1",
            lambda f1, f2, f0: T.evaluator(f0, f2, f1),
            T.adjoint1,
            T.operator,
            adjoint2,
            kernel,
            T.gamma,
        )

    def transpose2(self) -> "TrilinearForm":
        """⟨T^{*2}(f1, f0), f2⟩ = ⟨T(f1, f2), f0⟩"""
        T = self
        adjoint1 = None
        if T.adjoint1 is not None:
            a1 = T.adjoint1
            adjoint1 = lambda a, b: a1(b, a)
        kernel = None
        if T.kernel is not None:
            K = T.kernel
            kernel = lambda x, y1, y2: K(y2, y1, x)
        return TrilinearForm(
            f"{T.name}*2",
            lambda f1, f2, f0: T.evaluator(f1, f0, f2),
            T.adjoint2,
            adjoint1,
            T.operator,
            kernel,
            T.gamma,
        )

    def __sub__(self, other: "TrilinearForm") -> "TrilinearForm":
        def combine(a: Bilinear | None, b: Bilinear | None) -> Bilinear | None:
            if a is None or b is None:
                return None
            return lambda f, g: a(f, g) - b(f, g)

        return TrilinearForm(
            f"{self.name}-{other.name}",
            lambda f1, f2, f0: self.evaluator(f1, f2, f0) - other.evaluator(f1, f2, f0),
            combine(self.operator, other.operator),
            combine(self.adjoint1, other.adjoint1),
            combine(self.adjoint2, other.adjoint2),
            None,
            min(self.gamma, other.gamma),
        )


def pointwise_product_form() -> TrilinearForm:
    """⟨f1 f2, f0⟩"""

    def operator(f1: GridFunction, f2: GridFunction) -> GridFunction:
        return f1 * f2

    return TrilinearForm.from_operator("product", operator, operator, operator)


def paraproduct_form(P: Paraproduct) -> TrilinearForm:
    return TrilinearForm.from_operator("paraproduct", P, P.transpose1, P.transpose2)


def zero_form() -> TrilinearForm:
    def operator(f1: GridFunction, f2: GridFunction) -> GridFunction:
        return GridFunction.zeros(f1.grid)

    return TrilinearForm.from_operator("zero", operator, operator, operator)


def check_trilinear(T: TrilinearForm, probes: list[GridFunction], seed: int = 0) -> float:
    """各スロットの加法性と斉次性の相対欠損の最大"""
    rng = np.random.default_rng(seed)
    worst = 0.0
    n = len(probes)
    for i in range(n):
        f = [probes[(i + m) % n] for m in range(4)]
        c = complex(rng.standard_normal(), rng.standard_normal())
        base = [f[0], f[1], f[2]]
        for slot in range(3):
            moved = list(base)
            moved[slot] = c * base[slot] + f[3]
            other = list(base)
            other[slot] = f[3]
            lhs = T(*moved)
            rhs = c * T(*base) + T(*other)
            scale = abs(c * T(*base)) + abs(T(*other))
            if scale > 0:
                worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def kernel_consistency(
    T: TrilinearForm, f1: GridFunction, f2: GridFunction, f0: GridFunction
) -> float:
    """台が互いに離れた入力での ⟨T(f1,f2),f0⟩ と核の三重求積の相対差"""
    if T.kernel is None:
        raise InvalidArgumentError("核が宣言されていない形式です")
    grid = f0.grid
    h = grid.spacing
    x = grid.points
    s0, s1, s2 = (np.flatnonzero(f.values) for f in (f0, f1, f2))
    X, Y1, Y2 = np.meshgrid(x[s0], x[s1], x[s2], indexing="ij")
    values = T.kernel(X, Y1, Y2)
    quadrature = h**3 * np.einsum(
        "ijk,i,j,k->", values, f0.values[s0], f1.values[s1], f2.values[s2]
    )
    direct = T(f1, f2, f0)
    scale = max(abs(direct), abs(quadrature), 1e-300)
    return float(abs(direct - quadrature) / scale)


PROFILE_NAMES = ("bump", "squared", "tapered", "shifted", "odd")
_REFERENCE_POINTS = 4097


def _profile(name: str, t: np.ndarray) -> np.ndarray:
    if name == "bump":
        return bump(t)
    if name == "squared":
        return bump(t) ** 2
    if name == "tapered":
        return bump(t) * (1.0 - t**2)
    if name == "shifted":
        return bump(t, 0.3, 0.7)
    if name == "odd":
        return t * bump(t)
    raise InvalidArgumentError(f"未知のバンプ形状です: {name}")


@lru_cache(maxsize=32)
def _derivative_bound(name: str, order: int) -> float:
    """参照格子上の |∂^j ψ| (j ≤ order) の最大"""
    t = np.linspace(-1.0, 1.0, _REFERENCE_POINTS)
    values = _profile(name, t)
    dt = t[1] - t[0]
    bound = float(np.abs(values).max())
    for _ in range(order):
        values = np.gradient(values, dt)
        bound = max(bound, float(np.abs(values).max()))
    return bound


@dataclass(frozen=True)
class NormalizedBump:
    """台 B(center, radius)、sup_{j ≤ order} R^j ‖∂^j φ‖_∞ ≤ 1 のバンプ"""

    center: float
    radius: float
    order: int = 1
    profile: str = "bump"

    def on(self, grid: Grid) -> GridFunction:
        if self.radius < 8 * grid.spacing:
            raise UnresolvableScaleError(
                f"半径 R={self.radius:.4g} のバンプは格子 h={grid.spacing:.4g} で解像できません",
                math.floor(math.log2(1.0 / (8 * grid.spacing))),
            )
        if abs(self.center) + self.radius > grid.half_width:
            raise DomainTooSmallError(f"バンプ B({self.center:.4g}, {self.radius:.4g}) が領域をはみ出します")
        t = (grid.points - self.center) / self.radius
        values = _profile(self.profile, t) / _derivative_bound(self.profile, self.order)
        values[np.abs(t) >= 1] = 0.0
        return GridFunction(grid, values)


def bump_library(order: int) -> list[tuple[str, str, str]]:
    """(φ1, φ2, φ0) の形状の組。5 形状を巡回させる"""
    n = len(PROFILE_NAMES)
    return [
        (PROFILE_NAMES[i], PROFILE_NAMES[(i + 1) % n], PROFILE_NAMES[(i + 2) % n])
        for i in range(n)
    ]


@dataclass
class WBPReport:
    C_wbp: float
    scatter: float
    by_R: dict[float, float]
    order: int


def wbp_constant(
    T: TrilinearForm,
    b0: ParaAccretive,
    b1: ParaAccretive,
    b2: ParaAccretive,
    R_list: list[float],
    m: int = 1,
    centers: list[float] | None = None,
) -> WBPReport:
    """|⟨T(M_{b1}φ1, M_{b2}φ2), M_{b0}φ0⟩| / R の最大（n = 1）"""
    grid = b0.grid
    if centers is None:
        centers = [0.0, grid.half_width / 8, -grid.half_width / 8]

    def at_radius(R: float) -> float:
        best = 0.0
        for x in centers:
            for p1, p2, p0 in bump_library(m):
                phi1 = NormalizedBump(x, R, m, p1).on(grid)
                phi2 = NormalizedBump(x, R, m, p2).on(grid)
                phi0 = NormalizedBump(x, R, m, p0).on(grid)
                value = T(b1.b * phi1, b2.b * phi2, b0.b * phi0)
                best = max(best, abs(value) / R)
        return best

    values = parallel_map(at_radius, R_list)
    by_R = dict(zip(R_list, values))
    positive = [v for v in values if v > 0]
    scatter = max(positive) / min(positive) if positive else 1.0
    C = max(values, default=0.0)
    logger.debug("WBP 定数 %s: C=%.4g scatter=%.3g", T.name, C, scatter)
    return WBPReport(C, scatter, by_R, m)


@dataclass
class DisplacedGrowth:
    t_values: list[float]
    ratios: list[float]
    exponent: float
    bound: float


def displaced_bump_growth(
    T: TrilinearForm,
    b0: ParaAccretive,
    b1: ParaAccretive,
    b2: ParaAccretive,
    R: float,
    t_values: list[float],
    m: int = 1,
) -> DisplacedGrowth:
    """中心を tR ずらしたバンプでのペアリング / R の (1 + t) に対する増大指数"""
    grid = b0.grid
    ratios = []
    for t in t_values:
        best = 0.0
        for p1, p2, p0 in bump_library(m):
            phi1 = NormalizedBump(t * R / 2, R, m, p1).on(grid)
            phi2 = NormalizedBump(-t * R / 2, R, m, p2).on(grid)
            phi0 = NormalizedBump(0.0, R, m, p0).on(grid)
            best = max(best, abs(T(b1.b * phi1, b2.b * phi2, b0.b * phi0)) / R)
        ratios.append(best)
    keep = [(t, r) for t, r in zip(t_values, ratios) if r > 0]
    slope, _, _ = fit_line([math.log(1 + t) for t, _ in keep], [math.log(r) for _, r in keep])
    exponent = slope if math.isfinite(slope) else -math.inf
    return DisplacedGrowth(list(t_values), ratios, exponent, 1 + 3 * m + 0.5)


@dataclass
class ThetaSlice:
    k: int
    xs: np.ndarray
    y1s: np.ndarray
    y2s: np.ndarray
    values: np.ndarray = field(repr=False)
    A_fit: float = 0.0
    N_fit: float = math.nan
    cancel_residual: float = 0.0
    kernel_report: KernelReport | None = None

    def as_family(self, N: float, gamma: float) -> BilinearKernelFamily:
        """標本格子上の最近傍値で評価する単一スケールの核族"""
        xs, y1s, y2s, values = self.xs, self.y1s, self.y2s, self.values

        def nearest(grid_points: np.ndarray, t: np.ndarray) -> np.ndarray:
            return np.abs(grid_points[None, :] - np.asarray(t)[:, None]).argmin(axis=1)

        def evaluator(k: int, x: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
            out = values[nearest(xs, x), nearest(y1s, y1), nearest(y2s, y2)]
            inside = (
                (np.abs(x) <= np.abs(xs).max())
                & (np.abs(y1) <= np.abs(y1s).max())
                & (np.abs(y2) <= np.abs(y2s).max())
            )
            return np.where(inside, out, 0.0)

        half = float(min(np.abs(xs).max(), np.abs(y1s).max(), np.abs(y2s).max()))
        return BilinearKernelFamily(
            "theta", evaluator, (self.k,), N, gamma, smooth=True, domain=half / 2
        )


def extract_theta(
    T: TrilinearForm,
    family0: ReproducingFamily,
    approx1: dict[int, DenseOperator],
    approx2: dict[int, DenseOperator],
    b1: ParaAccretive,
    b2: ParaAccretive,
    k: int,
    n_y: int = 8,
    y_window: float | None = None,
    N: float = 1.25,
    verify_samples: int = 64,
) -> ThetaSlice:
    """θ_k(x,y1,y2) = ⟨T(b1 s_k(·,y1), b2 s_k(·,y2)), b0 d_k(x,·)⟩"""
    grid = family0.grid
    b0 = family0.b.b
    D = family0.differences[k]
    window = y_window if y_window is not None else grid.half_width / 4
    idx = np.unique([grid.index_of(float(y)) for y in np.linspace(-window, window, n_y)])
    y_points = grid.points[idx]
    x_mask = grid.interior_mask(grid.half_width / 2)
    x_idx = np.flatnonzero(x_mask)
    S1 = approx1[k].coeffs
    S2 = approx2[k].coeffs

    pairs = [(a, c) for a in range(idx.size) for c in range(idx.size)]

    def column(pair: tuple[int, int]) -> np.ndarray:
        a, c = pair
        f1 = b1.b * GridFunction(grid, S1[:, idx[a]])
        f2 = b2.b * GridFunction(grid, S2[:, idx[c]])
        if T.operator is not None:
            return D.apply(b0 * T.operator(f1, f2)).values
        rows = [b0 * GridFunction(grid, D.coeffs[i, :]) for i in range(grid.n_points)]
        return T.pairings(f1, f2, rows)

    columns = parallel_map(column, pairs)
    full = np.zeros((grid.n_points, idx.size, idx.size), dtype=complex)
    for (a, c), col in zip(pairs, columns):
        full[:, a, c] = col

    h = grid.spacing
    weighted = h * np.abs(full) * np.abs(b0.values)[:, None, None]
    cancel = np.abs(h * np.einsum("iac,i->ac", full, b0.values))
    scale = weighted.sum(axis=0)
    ok = scale > 0
    cancel_residual = float((cancel[ok] / scale[ok]).max()) if np.any(ok) else 0.0

    values = full[x_idx]
    xs = grid.points[x_idx]
    X, Y1, Y2 = np.meshgrid(xs, y_points, y_points, indexing="ij")
    phi = PhiKernel(k, N)
    majorant = phi(X - Y1) * phi(X - Y2)
    A_fit = float((np.abs(values) / majorant).max())
    scale_k = 2.0**k
    distance = np.log((1 + scale_k * np.abs(X - Y1)) * (1 + scale_k * np.abs(X - Y2)))
    slope = envelope_slope(distance.ravel(), (np.abs(values) / scale_k**2).ravel())
    zero = np.abs(values) == 0
    if np.any(zero) and np.any(~zero) and distance[zero].min() >= distance[~zero].max():
        N_fit = math.inf
    else:
        N_fit = -slope if math.isfinite(slope) else math.nan

    result = ThetaSlice(k, xs, y_points, y_points, values, A_fit, N_fit, cancel_residual)
    if verify_samples > 0:
        result.kernel_report = verify_kernel_family(
            result.as_family(N, T.gamma), n_samples=verify_samples
        )
    logger.debug("θ_%d: A=%.4g N=%.3g 相殺残差 %.3g", k, A_fit, N_fit, cancel_residual)
    return result


@dataclass
class DualSumReport:
    sums: list[float]
    bound_ratio: float
    hypotheses_ok: bool
    tags: list[str] = field(default_factory=list)


def check_dual_hypotheses(
    theta: BilinearOperatorFamily,
    b0: GridFunction,
    b1: GridFunction,
    b2: GridFunction,
    probes: list[GridFunction],
    tol: float = 1e-4,
) -> list[str]:
    tags = []
    norm_b = lp_norm(b1, 2) * lp_norm(b2, 2)
    for k in theta.scales:
        image = theta.apply(k, b1, b2)
        if lp_norm(image, 2) > tol * max(norm_b, 1e-300):
            tags.append(f"Theta_{k}(b1, b2) != 0")
        for f in probes[:2]:
            value = abs(pairing(theta.apply(k, f, f), b0))
            scale = lp_norm(theta.apply(k, f, f), 1) * lp_norm(b0, math.inf)
            if value > tol * max(scale, 1e-300):
                tags.append(f"int theta_{k} b0 dx != 0")
                break
    return tags


def dual_sum_bound(
    theta: BilinearOperatorFamily,
    b0: ParaAccretive,
    b1: ParaAccretive,
    b2: ParaAccretive,
    p: float,
    p1: float,
    p2: float,
    probes: list[GridFunction],
    tol: float = 1e-4,
) -> DualSumReport:
    """Σ_k |⟨Θ_k(f1, f2), f0⟩| / (‖f0‖_{p'} ‖f1‖_{p1} ‖f2‖_{p2})"""
    check_holder_triple(p, p1, p2)
    p0 = math.inf if p == 1 else p / (p - 1)
    tags = check_dual_hypotheses(theta, b0.b, b1.b, b2.b, probes, tol)
    n = len(probes)
    sums = []
    ratio = 0.0
    for i in range(n):
        f1, f2, f0 = probes[i], probes[(i + 1) % n], probes[(i + 2) % n]
        total = sum(abs(pairing(theta.apply(k, f1, f2), f0)) for k in theta.scales)
        sums.append(total)
        denominator = lp_norm(f0, p0) * lp_norm(f1, p1) * lp_norm(f2, p2)
        if denominator > 0:
            ratio = max(ratio, total / denominator)
    if tags:
        logger.warning("双対和の仮定が満たされていません: %s", "; ".join(tags))
    return DualSumReport(sums, ratio, not tags, tags)


def difference_family(
    family: ReproducingFamily, approx1: dict[int, DenseOperator], approx2: dict[int, DenseOperator]
) -> BilinearOperatorFamily:
    """Θ_k(f1, f2) = D_k M_b[(S_k f1)(S_k f2)]"""
    return BilinearOperatorFamily(
        outer=family.differences,
        inner1={k: approx1[k] for k in family.scales},
        inner2={k: approx2[k] for k in family.scales},
        weight=family.b.b,
    )


@dataclass
class TbPairing:
    R_values: list[float]
    values: list[complex]
    limit: complex
    error: float
    accepted: bool
    correction: complex = 0j


def _kernel_correction(
    T: TrilinearForm,
    b0f0: GridFunction,
    g1: GridFunction,
    g2: GridFunction,
) -> complex:
    """(∫ b0 f0) · ∫∫ K(0, y1, y2) g1(y1) g2(y2)"""
    mean = pairing(b0f0, GridFunction.constant(b0f0.grid))
    if T.kernel is None or mean == 0:
        return 0j
    grid = b0f0.grid
    h = grid.spacing
    s1, s2 = np.flatnonzero(g1.values), np.flatnonzero(g2.values)
    if s1.size == 0 or s2.size == 0:
        return 0j
    y = grid.points
    Y1, Y2 = np.meshgrid(y[s1], y[s2], indexing="ij")
    off = (Y1 != 0) | (Y2 != 0)
    K = np.zeros(Y1.shape, dtype=complex)
    K[off] = T.kernel(np.zeros(np.count_nonzero(off)), Y1[off], Y2[off])
    return complex(mean * h * h * (g1.values[s1] @ K @ g2.values[s2]))


def tb_pairing(
    T: TrilinearForm,
    b0: ParaAccretive,
    b1: ParaAccretive,
    b2: ParaAccretive,
    f0s: list[GridFunction],
    R_values: list[float],
    profile: str = "cos2",
    tol: float = 1e-3,
    strict: bool = True,
) -> list[TbPairing]:
    """⟨T(b1, b2), b0 f0⟩ を η_R の R → ∞ 極限（核による補正項つき）で評価する"""
    grid = b0.grid
    check_R_values(grid, R_values)
    R0 = R_values[0]
    eta0 = cutoff(grid, R0, profile)
    targets = [b0.b * f0 for f0 in f0s]
    raw = []
    corrections = []
    for R in R_values:
        eta = cutoff(grid, R, profile)
        raw.append(T.pairings(b1.b * eta, b2.b * eta, targets))
        g1 = b1.b * (eta - eta0)
        g2 = b2.b * (eta - eta0)
        corrections.append([_kernel_correction(T, t, g1, g2) for t in targets])
    results = []
    for i, target in enumerate(targets):
        values = [complex(raw[r][i] - corrections[r][i]) for r in range(len(R_values))]
        diffs = [abs(b - a) for a, b in zip(values, values[1:])]
        scale = max(lp_norm(target, 1) * lp_norm(b1.b, math.inf) * lp_norm(b2.b, math.inf),
                    max(abs(v) for v in values), 1e-300)
        error = diffs[-1] if diffs else math.inf
        accepted = bool(diffs) and error <= tol * scale
        if not accepted and strict:
            raise NonConvergentSweepError(
                f"η_R による極限が収束しません ({T.name})", [d / scale for d in diffs[-3:]]
            )
        results.append(
            TbPairing(list(R_values), values, values[-1], error, accepted, corrections[-1][i])
        )
    return results


def profile_swap_defect(
    T: TrilinearForm,
    b0: ParaAccretive,
    b1: ParaAccretive,
    b2: ParaAccretive,
    f0s: list[GridFunction],
    R_values: list[float],
) -> float:
    """切り落としの形状を取り替えたときの極限値の相対差"""
    first = tb_pairing(T, b0, b1, b2, f0s, R_values, "cos2", strict=False)
    second = tb_pairing(T, b0, b1, b2, f0s, R_values, "smooth", strict=False)
    worst = 0.0
    for a, b, f0 in zip(first, second, f0s):
        scale = max(abs(a.limit), abs(b.limit), lp_norm(b0.b * f0, 1) * 1e-12, 1e-300)
        worst = max(worst, abs(a.limit - b.limit) / scale)
    return worst


def telescoping_check(
    T: TrilinearForm,
    family0: ReproducingFamily,
    family1: ReproducingFamily,
    family2: ReproducingFamily,
    f1: GridFunction,
    f2: GridFunction,
    f0: GridFunction,
) -> float:
    """最細と最粗の差が各スケールの三つの Θ ペアリングの和に一致するか（相対誤差）"""
    scales = family0.approx.scales

    def smoothed(family: ReproducingFamily, k: int, f: GridFunction) -> GridFunction:
        b = family.b.b
        return b * family.approx.operators[k].apply(b * f)

    a = {k: smoothed(family1, k, f1) for k in scales}
    b = {k: smoothed(family2, k, f2) for k in scales}
    c = {k: smoothed(family0, k, f0) for k in scales}
    lo, hi = scales[0], scales[-1]
    lhs = T(a[hi], b[hi], c[hi]) - T(a[lo], b[lo], c[lo])
    rhs = 0j
    for k in scales[:-1]:
        rhs += T(a[k + 1] - a[k], b[k + 1], c[k + 1])
        rhs += T(a[k], b[k + 1] - b[k], c[k + 1])
        rhs += T(a[k], b[k], c[k + 1] - c[k])
    scale = max(abs(T(a[hi], b[hi], c[hi])), abs(T(a[lo], b[lo], c[lo])), abs(lhs), 1e-300)
    return float(abs(lhs - rhs) / scale)


def mean_zero_dictionary(b: ParaAccretive, size: int = 32) -> list[GridFunction]:
    """b に関して平均 0 のバンプ族"""
    grid = b.grid
    L = grid.half_width
    centers = np.linspace(-L / 4, L / 4, size)
    radii = (L / 32, L / 16, L / 8)
    probes = []
    for i, c in enumerate(centers):
        phi = GridFunction(grid, bump(grid.points, float(c), radii[i % len(radii)]))
        probes.append(project_mean_zero(phi, b.b))
    return probes


def fit_beta(
    probes: list[GridFunction], b: ParaAccretive, values: np.ndarray, rcond: float = 1e-10
) -> GridFunction:
    """⟨β, b φ_i⟩ = values_i を満たす最小ノルムの β"""
    h = b.grid.spacing
    A = np.stack([h * (b.b * phi).values for phi in probes])
    beta, *_ = np.linalg.lstsq(A, np.asarray(values, dtype=complex), rcond=rcond)
    return GridFunction(b.grid, beta)


@dataclass
class ReductionReport:
    betas: dict[str, GridFunction] = field(repr=False)
    residuals: dict[str, float]
    ratios: dict[str, float]
    beta_errors: dict[str, float]
    paraproducts: dict[str, Paraproduct] = field(repr=False, default_factory=dict)
    remainder: TrilinearForm | None = field(repr=False, default=None)


def _testing_values(
    T: TrilinearForm,
    families: tuple[ReproducingFamily, ReproducingFamily, ReproducingFamily],
    probes: tuple[list[GridFunction], list[GridFunction], list[GridFunction]],
    R_values: list[float],
    tol: float,
    strict: bool,
) -> dict[str, np.ndarray]:
    """⟨T(b1,b2), b0φ⟩、⟨T^{*1}(b0,b2), b1φ⟩、⟨T^{*2}(b1,b0), b2φ⟩"""
    a0, a1, a2 = (fam.b for fam in families)
    forms = {"T": (T, a0, a1, a2, probes[0]),
             "T*1": (T.transpose1(), a1, a0, a2, probes[1]),
             "T*2": (T.transpose2(), a2, a1, a0, probes[2])}
    out = {}
    for key, (form, c0, c1, c2, phis) in forms.items():
        pairs = tb_pairing(form, c0, c1, c2, phis, R_values, tol=tol, strict=strict)
        out[key] = np.array([p.limit for p in pairs])
    return out


def bilinear_ratio(
    T: TrilinearForm, probes: list[GridFunction], p1: float = 4.0, p2: float = 4.0, p: float = 2.0
) -> float:
    """max ‖T(f1, f2)‖_p / (‖f1‖_{p1} ‖f2‖_{p2})。作用素がなければ双対で下から評価する"""
    check_holder_triple(p, p1, p2)
    n = len(probes)
    best = 0.0
    q = math.inf if p == 1 else p / (p - 1)
    for i in range(n):
        f1, f2 = probes[i], probes[(i + 1) % n]
        denominator = lp_norm(f1, p1) * lp_norm(f2, p2)
        if denominator == 0:
            continue
        if T.operator is not None:
            best = max(best, lp_norm(T.operator(f1, f2), p) / denominator)
        else:
            for f0 in probes:
                norm0 = lp_norm(f0, q)
                if norm0 > 0:
                    best = max(best, abs(T(f1, f2, f0)) / (norm0 * denominator))
    return best


def reduce_and_test(
    T: TrilinearForm,
    family0: ReproducingFamily,
    family1: ReproducingFamily,
    family2: ReproducingFamily,
    R_values: list[float],
    dictionary_size: int = 32,
    tol: float = 1e-3,
    ratio_probes: list[GridFunction] | None = None,
) -> ReductionReport:
    """S = T − L0 − L1 − L2 を構成し、S のテスト条件の残差と有界性比を測る"""
    if dictionary_size < 32:
        raise InvalidArgumentError("β の当てはめには 32 個以上の試験関数が必要です")
    families = (family0, family1, family2)
    probes = tuple(mean_zero_dictionary(fam.b, dictionary_size) for fam in families)
    measured = _testing_values(T, families, probes, R_values, tol, strict=True)

    beta0 = fit_beta(probes[0], family0.b, measured["T"])
    beta1 = fit_beta(probes[1], family1.b, measured["T*1"])
    beta2 = fit_beta(probes[2], family2.b, measured["T*2"])

    S0, S1, S2 = (fam.approx for fam in families)
    P0 = build_paraproduct(family0, S1, S2, beta0)
    # L1 は T^{*1} の役割で b1 に付随するパラプロダクトを置く
    P1 = build_paraproduct(family1, S0, S2, beta1)
    P2 = build_paraproduct(family2, S1, S0, beta2)
    L0 = paraproduct_form(P0)
    L1 = paraproduct_form(P1).transpose1()
    L2 = paraproduct_form(P2).transpose2()
    remainder = T - L0 - L1 - L2

    residual_values = _testing_values(remainder, families, probes, R_values, tol, strict=False)
    residuals = {}
    beta_errors = {}
    for key, fam, beta, phis in (
        ("T", family0, beta0, probes[0]),
        ("T*1", family1, beta1, probes[1]),
        ("T*2", family2, beta2, probes[2]),
    ):
        residuals[key] = float(np.abs(residual_values[key]).max(initial=0.0))
        worst = 0.0
        for phi, target in zip(phis, measured[key]):
            scale = h1_norm(fam.b.b * phi).value * max(bmo_norm(beta), 1e-300)
            worst = max(worst, abs(pairing(beta, fam.b.b * phi) - target) / scale)
        beta_errors[key] = worst

    if ratio_probes is None:
        ratio_probes = mean_zero_dictionary(family0.b, 8)
    ratios = {"T": bilinear_ratio(T, ratio_probes), "S": bilinear_ratio(remainder, ratio_probes)}
    logger.info("還元: 残差 %s", ", ".join(f"{k}={v:.3g}" for k, v in residuals.items()))
    return ReductionReport(
        betas={"T": beta0, "T*1": beta1, "T*2": beta2},
        residuals=residuals,
        ratios=ratios,
        beta_errors=beta_errors,
        paraproducts={"L0": P0, "L1": P1, "L2": P2},
        remainder=remainder,
    )


def planted_beta_error(report: ReductionReport, beta: GridFunction, family0: ReproducingFamily,
                       probes: list[GridFunction]) -> float:
    """|⟨β0 − β, b0 φ⟩| / (‖b0 φ‖_{H¹} ‖β‖_BMO) の最大"""
    b0 = family0.b.b
    diff = report.betas["T"] - beta
    scale_beta = max(bmo_norm(beta), 1e-300)
    worst = 0.0
    for phi in probes:
        worst = max(worst, abs(pairing(diff, b0 * phi)) / (h1_norm(b0 * phi).value * scale_beta))
    return worst
