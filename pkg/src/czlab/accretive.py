"""準増大関数と、それに付随する近似単位元 S_k・差分 D_k・再生公式の伴作用素"""

import hashlib
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from czlab.errors import (
    FamilyMismatchError,
    GridError,
    NotParaAccretiveError,
    RankCollapseError,
    SmallAverageError,
    UnresolvableScaleError,
)
from czlab.grid_core import (
    DenseOperator,
    Grid,
    GridFunction,
    PhiKernel,
    bump,
    fit_log2_slope,
    lp_norm,
    parallel_map,
)
from czlab.spaces import holder_norm, project_mean_zero

logger = logging.getLogger("czlab")

MOLLIFIER_SUPPORT = 1.0 / 8.0


@dataclass(frozen=True, eq=False)
class ParaAccretive:
    b: GridFunction
    sup_norm: float
    inv_sup_norm: float
    c0: float

    @classmethod
    def certify(cls, b: GridFunction, min_subinterval_cells: int = 1) -> "ParaAccretive":
        mags = b.abs()
        c0 = para_accretivity_constant(b, min_subinterval_cells)
        return cls(b, float(mags.max()), float((1.0 / mags).max()), c0)

    @property
    def grid(self) -> Grid:
        return self.b.grid

    def digest(self) -> str:
        """格子と値から決まるハッシュ（キャッシュのキー）"""
        h = hashlib.sha256()
        # S_k の組み立て方を変えたら更新する
        h.update(b"toeplitz-boundary-closure")
        h.update(repr(self.grid.to_dict()).encode("utf-8"))
        h.update(np.ascontiguousarray(self.b.values).tobytes())
        return h.hexdigest()


def para_accretivity_constant(b: GridFunction, min_subinterval_cells: int = 1) -> float:
    """min_Q max_{R⊂Q} |∫_R b| / |Q| を二進区間 Q について計算する"""
    values = b.values
    zeros = np.flatnonzero(values == 0)
    if zeros.size:
        x = b.grid.points[zeros[0]]
        raise NotParaAccretiveError(f"b が格子点 x={x:.6g} で 0 になっています")
    n = values.shape[0]
    min_cells = max(int(min_subinterval_cells), 1)
    prefix = np.concatenate([[0.0], np.cumsum(values)])

    best = math.inf
    size = 1
    while size <= n:
        if size >= min_cells:
            starts = np.arange(0, n, size)
            offsets = np.arange(size + 1)
            local = prefix[starts[:, None] + offsets[None, :]] - prefix[starts][:, None]
            sums = np.abs(local[:, None, :] - local[:, :, None])
            valid = (offsets[None, :] - offsets[:, None]) >= min_cells
            sums = np.where(valid[None, :, :], sums, 0.0)
            per_cube = sums.reshape(starts.size, -1).max(axis=1) / size
            best = min(best, float(per_cube.min()))
        size *= 2

    if not best > 0:
        raise NotParaAccretiveError("準増大定数 c0 が 0 です")
    logger.debug("準増大定数 c0 = %.6g", best)
    return best


def max_resolvable_scale(grid: Grid) -> int:
    """台の半径 2^{-k}/8 が 2h 以上となる最大の k"""
    return math.floor(math.log2(1.0 / (16.0 * grid.spacing)))


def _mollifier_profile(k: int, distances: np.ndarray) -> np.ndarray:
    t = np.abs(distances) * (2.0**k) / MOLLIFIER_SUPPORT
    out = np.zeros_like(t, dtype=float)
    inside = t < 1
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


def _check_resolvable(grid: Grid, k: int) -> None:
    if 2.0**-k * MOLLIFIER_SUPPORT < 2.0 * grid.spacing:
        raise UnresolvableScaleError(
            f"スケール k={k} の軟化子は格子 h={grid.spacing:.4g} で解像できません",
            max_resolvable_scale(grid),
        )


def build_mollifier(grid: Grid, k: int) -> GridFunction:
    """φ_k(x) = 2^k φ(2^k x)、h Σ φ_k = 1 に正規化"""
    _check_resolvable(grid, k)
    values = _mollifier_profile(k, grid.points)
    values /= grid.spacing * values.sum()
    return GridFunction(grid, values)


def mollifier_operator(grid: Grid, k: int) -> DenseOperator:
    """P_k f = φ_k * f（領域外はゼロ延長、核は整数オフセットで標本化した Toeplitz 行列）"""
    _check_resolvable(grid, k)
    column = _mollifier_profile(k, np.arange(grid.n_points) * grid.spacing)
    column /= grid.spacing * (2.0 * column.sum() - column[0])
    return DenseOperator(grid, linalg.toeplitz(column))


def _boundary_closure(S: DenseOperator, b: GridFunction, width: int, k: int, eps_floor: float) -> DenseOperator:
    """端から width セルの境界層ごとに対称な階数 1 の補正を加え、全格子点で S(b) = 1 とする（層幅 < 台の半径）"""
    grid = S.grid
    n = grid.n_points
    h = grid.spacing
    if 2 * width >= n:
        raise GridError(f"スケール k={k} の軟化子の台が領域幅を超えています (n={n})")
    deficit = 1.0 - S.apply(b).values
    coeffs = S.coeffs.copy()
    for layer in (np.arange(width), np.arange(n - width, n)):
        u = deficit[layer]
        mass = np.sum(u * b.values[layer])
        scale = np.sum(np.abs(u))
        if scale == 0:
            continue
        if abs(mass) < eps_floor * scale:
            edge = int(layer[0])
            raise SmallAverageError(k, float(grid.points[edge]), abs(mass) / scale, eps_floor)
        coeffs[np.ix_(layer, layer)] += np.outer(u, u) / (h * mass)
    return DenseOperator(grid, (coeffs + coeffs.T) / 2)


@dataclass(frozen=True, eq=False)
class ApproxIdentity:
    b: ParaAccretive
    k_min: int
    k_max: int
    operators: dict[int, DenseOperator]
    mollifiers: dict[int, DenseOperator]
    eps_floor: float = 0.1

    @property
    def grid(self) -> Grid:
        return self.b.grid

    @property
    def scales(self) -> list[int]:
        return list(range(self.k_min, self.k_max + 1))

    @property
    def interior_margin(self) -> float:
        # 粗いスケールでは領域の半分で打ち切る
        return min(2.0**-self.k_min, self.grid.half_width / 2)

    def interior_mask(self) -> np.ndarray:
        return self.grid.interior_mask(self.interior_margin)


def build_approx_identity(
    b: ParaAccretive, k_min: int, k_max: int, eps_floor: float = 0.1
) -> ApproxIdentity:
    grid = b.grid
    if k_min > k_max:
        raise GridError(f"スケール範囲が不正です: [{k_min}, {k_max}]")
    _check_resolvable(grid, k_max)

    def assemble(k: int) -> tuple[DenseOperator, DenseOperator]:
        P = mollifier_operator(grid, k)
        Pb = P.apply(b.b)
        mags = Pb.abs()
        worst = int(np.argmin(mags))
        if mags[worst] < eps_floor:
            raise SmallAverageError(k, float(grid.points[worst]), float(mags[worst]), eps_floor)
        S = P.compose(DenseOperator.multiplication(Pb.reciprocal())).compose(P)
        # 自己転置性を丸め誤差まで揃える
        S = DenseOperator(grid, (S.coeffs + S.coeffs.T) / 2)
        width = int(np.flatnonzero(P.coeffs[:, 0])[-1])
        return _boundary_closure(S, b.b, width, k, eps_floor), P

    scales = list(range(k_min, k_max + 1))
    built = parallel_map(assemble, scales)
    logger.debug("近似単位元を構成: k = %d..%d (n=%d)", k_min, k_max, grid.n_points)
    return ApproxIdentity(
        b=b,
        k_min=k_min,
        k_max=k_max,
        operators={k: S for k, (S, _) in zip(scales, built)},
        mollifiers={k: P for k, (_, P) in zip(scales, built)},
        eps_floor=eps_floor,
    )


def build_differences(S: ApproxIdentity) -> dict[int, DenseOperator]:
    """D_k = S_{k+1} - S_k（k = k_min .. k_max-1）"""
    if S.k_max <= S.k_min:
        raise FamilyMismatchError("差分には連続する 2 つ以上のスケールが必要です")
    return {k: S.operators[k + 1] - S.operators[k] for k in range(S.k_min, S.k_max)}


@dataclass(frozen=True, eq=False)
class ReproducingFamily:
    b: ParaAccretive
    approx: ApproxIdentity
    differences: dict[int, DenseOperator]
    companions: dict[int, DenseOperator]
    dtilde: dict[int, DenseOperator]
    pseudo_inverse: DenseOperator
    rank: int
    residual: float
    transpose_defect: float
    regularization: float
    singular_values: np.ndarray = field(repr=False)

    @property
    def grid(self) -> Grid:
        return self.b.grid

    @property
    def scales(self) -> list[int]:
        return sorted(self.differences)

    def term(self, k: int, f: GridFunction) -> GridFunction:
        """D̃_k M_b D_k M_b f"""
        b = self.b.b
        return self.dtilde[k].apply(b * self.differences[k].apply(b * f))

    def reproduce(self, f: GridFunction) -> GridFunction:
        total = GridFunction.zeros(self.grid)
        for k in self.scales:
            total = total + self.term(k, f)
        return total


def default_residual_probes(b: ParaAccretive, count: int = 8) -> list[GridFunction]:
    """b で重み付けした平均 0 のバンプ"""
    grid = b.grid
    L = grid.half_width
    centers = np.linspace(-L / 2, L / 2, count)
    radii = [min(r, L / 8) for r in (0.5, 1.0, 2.0)]
    probes = []
    for i, c in enumerate(centers):
        phi = GridFunction(grid, bump(grid.points, float(c), radii[i % len(radii)]))
        probes.append(project_mean_zero(phi, b.b))
    return probes


def build_reproducing_family(
    S: ApproxIdentity,
    regularization: float | None = None,
    probes: list[GridFunction] | None = None,
    min_rank_fraction: float = 0.9,
) -> ReproducingFamily:
    """D̃_k = M_b E⁺ D_k（E⁺ は b 平均 0 部分空間上の正則化擬似逆）"""
    b = S.b
    grid = b.grid
    h = grid.spacing
    D = build_differences(S)

    E = np.zeros((grid.n_points, grid.n_points), dtype=complex)
    for k in sorted(D):
        DMb = D[k].right_multiply(b.b)
        E += DMb.compose(DMb).matrix

    Q = linalg.null_space(b.b.values[None, :])
    EQ = Q.conj().T @ E @ Q
    U, s, Vh = linalg.svd(EQ)
    alpha = regularization if regularization is not None else 1e-6 * float(s[0])
    rank = int(np.count_nonzero(s > alpha))
    required = math.ceil(min_rank_fraction * Q.shape[1])
    logger.debug("E の数値ランク: %d / %d (alpha=%.3g)", rank, Q.shape[1], alpha)
    if rank < required:
        raise RankCollapseError(rank, required)

    filtered = s / (s**2 + alpha**2)
    EQ_pinv = (Vh.conj().T * filtered) @ U.conj().T
    pinv = DenseOperator.from_matrix(grid, Q @ EQ_pinv @ Q.conj().T)

    companions = {k: pinv.compose(D[k]) for k in sorted(D)}
    dtilde = {k: W.left_multiply(b.b) for k, W in companions.items()}

    if probes is None:
        probes = default_residual_probes(b)
    E_op = DenseOperator.from_matrix(grid, E)
    residual = 0.0
    for f in probes:
        bf = b.b * f
        denominator = lp_norm(bf, 2)
        if denominator == 0:
            continue
        reproduced = b.b * pinv.apply(E_op.apply(f))
        residual = max(residual, lp_norm(reproduced - bf, 2) / denominator)

    b_norm = lp_norm(b.b, 2)
    transpose_defect = max(
        lp_norm(Dt.transpose().apply(b.b), 2) / b_norm for Dt in dtilde.values()
    )
    logger.debug(
        "再生公式の残差 %.3g、転置欠損 %.3g (h=%.4g)", residual, transpose_defect, h
    )
    return ReproducingFamily(
        b=b,
        approx=S,
        differences=D,
        companions=companions,
        dtilde=dtilde,
        pseudo_inverse=pinv,
        rank=rank,
        residual=residual,
        transpose_defect=transpose_defect,
        regularization=alpha,
        singular_values=s,
    )


@dataclass
class ConvergenceReport:
    scales: list[int]
    errors: list[float]
    slope: float
    decreasing: bool
    coarse_norms: list[float] = field(default_factory=list)


def accretive_convergence(S: ApproxIdentity, f: GridFunction, p: float = 2.0) -> ConvergenceReport:
    """‖S_k M_b f − f‖_p（k ↑）と ‖S_k M_b f‖_p（k ↓）の推移"""
    b = S.b.b
    scales = S.scales
    images = {k: S.operators[k].apply(b * f) for k in scales}
    errors = [lp_norm(images[k] - f, p) for k in scales]
    coarse = [lp_norm(images[k], p) for k in scales]
    slope, _, _ = fit_log2_slope(scales, errors, floor=1e-300)
    decreasing = bool(np.all(np.diff(errors) <= 1e-12 * max(max(errors), 1e-300)))
    return ConvergenceReport(scales, errors, slope, decreasing, coarse)


def holder_convergence(
    S: ApproxIdentity, f: GridFunction, delta: float, seed: int = 0
) -> ConvergenceReport:
    """‖S_k M_b f − f‖_δ の log2 傾き"""
    b = S.b.b
    scales = S.scales
    errors = [holder_norm(S.operators[k].apply(b * f) - f, delta, seed=seed) for k in scales]
    slope, _, _ = fit_log2_slope(scales, errors, floor=1e-300)
    decreasing = bool(slope < 0)
    return ConvergenceReport(scales, errors, slope, decreasing)


def double_difference_constant(
    S: ApproxIdentity,
    k: int,
    gamma: float = 1.0,
    N: float = 2.0,
    n_samples: int = 256,
    seed: int = 0,
) -> float:
    """s_k の混合二重差分に対する最小定数 A の標本推定"""
    grid = S.grid
    h = grid.spacing
    coeffs = S.operators[k].coeffs
    rng = np.random.default_rng(seed)
    n = grid.n_points
    width = max(int(2.0**-k / h), 1)
    i = rng.integers(0, n, n_samples)
    j = np.clip(i + rng.integers(-2 * width, 2 * width + 1, n_samples), 0, n - 1)
    ip = np.clip(i + rng.integers(1, width + 1, n_samples), 0, n - 1)
    jp = np.clip(j + rng.integers(1, width + 1, n_samples), 0, n - 1)
    x, xp, y, yp = (grid.points[a] for a in (i, ip, j, jp))
    lhs = np.abs(coeffs[i, j] - coeffs[ip, j] - coeffs[i, jp] + coeffs[ip, jp])
    phi = PhiKernel(k, N + gamma)
    scale = 2.0**k
    rhs = (
        scale
        * (scale * np.abs(x - xp)) ** gamma
        * (scale * np.abs(y - yp)) ** gamma
        * (phi(x - y) + phi(xp - y) + phi(x - yp) + phi(xp - yp))
    )
    ok = rhs > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(lhs[ok] / rhs[ok]))
