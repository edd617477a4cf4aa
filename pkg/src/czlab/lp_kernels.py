"""Littlewood–Paley 型核のクラス判定・定数推定と概直交性"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from czlab.errors import InvalidArgumentError
from czlab.grid_core import (
    DenseOperator,
    Grid,
    GridFunction,
    PhiKernel,
    bump,
    fit_line,
    fit_log2_slope,
    lp_norm,
    maximal_function,
    pairing,
    parallel_map,
)

logger = logging.getLogger("czlab")

LinearEvaluator = Callable[[int, np.ndarray, np.ndarray], np.ndarray]
BilinearEvaluator = Callable[[int, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class LinearKernelFamily:
    name: str
    evaluator: LinearEvaluator
    scales: tuple[int, ...]
    N: float
    gamma: float
    A: float = 1.0
    smooth: bool = False
    domain: float | None = None

    def evaluate(self, k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(k, np.asarray(x), np.asarray(y)))

    @classmethod
    def from_operators(
        cls,
        operators: dict[int, DenseOperator],
        N: float,
        gamma: float,
        name: str = "operators",
        A: float = 1.0,
        smooth: bool = True,
    ) -> "LinearKernelFamily":
        grid = next(iter(operators.values())).grid

        def evaluator(k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
            return operators[k].coeffs[_nearest(grid, x), _nearest(grid, y)]

        return cls(name, evaluator, tuple(sorted(operators)), N, gamma, A, smooth,
                   domain=grid.half_width / 2)


@dataclass(frozen=True)
class BilinearKernelFamily:
    name: str
    evaluator: BilinearEvaluator
    scales: tuple[int, ...]
    N: float
    gamma: float
    A: float = 1.0
    smooth: bool = False
    domain: float | None = None

    def evaluate(self, k: int, x: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return np.asarray(self.evaluator(k, np.asarray(x), np.asarray(y1), np.asarray(y2)))


def _nearest(grid: Grid, x: np.ndarray) -> np.ndarray:
    i = np.rint(np.asarray(x) / grid.spacing + (grid.n_points - 1) / 2).astype(int)
    return np.clip(i, 0, grid.n_points - 1)


def phi_family(N: float, gamma: float, scales: list[int]) -> LinearKernelFamily:
    """θ_k(x, y) = Φ_k^{N+γ}(x − y)"""

    def evaluator(k: int, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return PhiKernel(k, N + gamma)(x - y)

    return LinearKernelFamily("phi", evaluator, tuple(scales), N, gamma, smooth=True)


def gaussian_family(scales: list[int], N: float = 2.0, gamma: float = 1.0) -> BilinearKernelFamily:
    """θ_k(x, y1, y2) = 2^{2k} exp(−(2^k(x−y1))²) exp(−(2^k(x−y2))²)"""

    def evaluator(k: int, x: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        s = 2.0**k
        return s * s * np.exp(-((s * (x - y1)) ** 2)) * np.exp(-((s * (x - y2)) ** 2))

    return BilinearKernelFamily("gaussian", evaluator, tuple(scales), N, gamma, smooth=True)


def product_family(first: LinearKernelFamily, second: LinearKernelFamily) -> BilinearKernelFamily:
    """θ_k(x, y1, y2) = λ_k^1(x, y1) λ_k^2(x, y2)"""

    def evaluator(k: int, x: np.ndarray, y1: np.ndarray, y2: np.ndarray) -> np.ndarray:
        return first.evaluate(k, x, y1) * second.evaluate(k, x, y2)

    scales = tuple(k for k in first.scales if k in second.scales)
    return BilinearKernelFamily(
        f"{first.name}*{second.name}",
        evaluator,
        scales,
        min(first.N, second.N),
        min(first.gamma, second.gamma),
        first.A * second.A,
        smooth=False,
    )


@dataclass
class KernelReport:
    name: str
    kernel_class: str
    A_size: float
    A_y: float
    A_x: float
    A_fit: float
    N_fit: float
    gamma_fit: float
    worst_violation: float
    compact: bool
    flat_A: float
    backward_N: float
    backward_gamma: float
    backward_A: float
    equivalent: bool


@dataclass
class _Samples:
    k: np.ndarray
    x: np.ndarray
    xp: np.ndarray
    ys: list[np.ndarray]
    yps: list[np.ndarray]


def _draw_samples(
    scales: tuple[int, ...], n_vars: int, n_samples: int, span: float, window: float, seed: int
) -> _Samples:
    # 次元の並びは (x, t1, δ, t2) とし、線形と双線形で先頭 3 次元を共有する
    sampler = qmc.Halton(d=2 + n_vars, scramble=False)
    sampler.fast_forward(seed + 1)
    ks, xs, xps, ys, yps = [], [], [], [[] for _ in range(n_vars)], [[] for _ in range(n_vars)]
    for k in scales:
        u = sampler.random(n_samples)
        width = 2.0**-k
        x = (2 * u[:, 0] - 1) * window
        delta = (2 * u[:, 2] - 1) * width
        delta = np.where(delta == 0, width / 2, delta)
        offsets = [u[:, 1]] + [u[:, 3 + i] for i in range(n_vars - 1)]
        for i, t in enumerate(offsets):
            y = x + (2 * t - 1) * span * width
            ys[i].append(y)
            yps[i].append(y + delta)
        ks.append(np.full(n_samples, k))
        xs.append(x)
        xps.append(x + delta)
    return _Samples(
        k=np.concatenate(ks),
        x=np.concatenate(xs),
        xp=np.concatenate(xps),
        ys=[np.concatenate(y) for y in ys],
        yps=[np.concatenate(y) for y in yps],
    )


def _phi(k: np.ndarray, exponent: float, t: np.ndarray) -> np.ndarray:
    s = 2.0 ** k.astype(float)
    return s / (1.0 + s * np.abs(t)) ** exponent


def _safe_max(numerator: np.ndarray, denominator: np.ndarray) -> float:
    ok = denominator > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(numerator[ok] / denominator[ok]))


def envelope_slope(t: np.ndarray, values: np.ndarray, bins: int = 8) -> float:
    """各ビンの最大値に対する log の最小二乗傾き"""
    keep = (values > 0) & np.isfinite(t)
    if np.count_nonzero(keep) < 2:
        return math.nan
    t, logv = t[keep], np.log(values[keep])
    edges = np.linspace(t.min(), t.max(), bins + 1)
    centers, maxima = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = (t >= lo) & (t <= hi)
        if np.any(inside):
            top = int(np.argmax(np.where(inside, logv, -np.inf)))
            centers.append(t[top])
            maxima.append(logv[top])
    slope, _, _ = fit_line(centers, maxima)
    return slope


def _eval(fam: LinearKernelFamily | BilinearKernelFamily, s: _Samples,
          x: np.ndarray, ys: list[np.ndarray]) -> np.ndarray:
    out = np.empty(s.k.shape, dtype=complex)
    for k in np.unique(s.k):
        idx = s.k == k
        args = [a[idx] for a in [x, *ys]]
        out[idx] = fam.evaluate(int(k), *args)  # type: ignore[arg-type]
    return out


def verify_kernel_family(
    fam: LinearKernelFamily | BilinearKernelFamily,
    n_samples: int = 512,
    seed: int = 0,
    span: float = 8.0,
) -> KernelReport:
    bilinear = isinstance(fam, BilinearKernelFamily)
    n_vars = 2 if bilinear else 1
    window = fam.domain if fam.domain is not None else 1.0
    s = _draw_samples(fam.scales, n_vars, n_samples, span, window, seed)
    if fam.domain is not None:
        limit = 2 * fam.domain
        s.ys = [np.clip(y, -limit, limit) for y in s.ys]
        s.yps = [np.clip(y, -limit, limit) for y in s.yps]
    k = s.k
    power = n_vars
    M = fam.N + fam.gamma
    N2 = M
    scale = 2.0 ** k.astype(float)

    theta = np.abs(_eval(fam, s, s.x, s.ys))
    phis = [_phi(k, M, s.x - y) for y in s.ys]
    size_rhs = np.prod(phis, axis=0)
    A_size = _safe_max(theta, size_rhs)

    reg_y, flat_y, back_y = [], [], []
    eta = (N2 - 1) / (2 * (N2 + fam.gamma))
    N1 = N2 * (1 - eta) - eta * fam.gamma
    g1 = eta * fam.gamma
    for i in range(n_vars):
        moved = list(s.ys)
        moved[i] = s.yps[i]
        diff = np.abs(_eval(fam, s, s.x, s.ys) - _eval(fam, s, s.x, moved))
        step = (scale * np.abs(s.yps[i] - s.ys[i]))
        others = np.prod([phis[m] for m in range(n_vars) if m != i], axis=0) if n_vars > 1 else 1.0
        pair = _phi(k, M, s.x - s.ys[i]) + _phi(k, M, s.x - s.yps[i])
        reg_y.append((diff, step**fam.gamma * others * pair, step, others * pair))
        flat_y.append(_safe_max(diff, scale**power * step**fam.gamma))
        back_others = (
            np.prod([_phi(k, N1 + g1, s.x - s.ys[m]) for m in range(n_vars) if m != i], axis=0)
            if n_vars > 1 else 1.0
        )
        back_pair = _phi(k, N1 + g1, s.x - s.ys[i]) + _phi(k, N1 + g1, s.x - s.yps[i])
        back_y.append(_safe_max(diff, step**g1 * back_others * back_pair))
    A_y = max(_safe_max(d, r) for d, r, _, _ in reg_y)

    A_x = math.nan
    flat_x = 0.0
    back_x = 0.0
    if fam.smooth:
        diff = np.abs(_eval(fam, s, s.x, s.ys) - _eval(fam, s, s.xp, s.ys))
        step = scale * np.abs(s.xp - s.x)
        pair = np.prod([_phi(k, M, s.x - y) + _phi(k, M, s.xp - y) for y in s.ys], axis=0)
        A_x = _safe_max(diff, step**fam.gamma * pair)
        flat_x = _safe_max(diff, scale**power * step**fam.gamma)
        back_pair = np.prod(
            [_phi(k, N1 + g1, s.x - y) + _phi(k, N1 + g1, s.xp - y) for y in s.ys], axis=0
        )
        back_x = _safe_max(diff, step**g1 * back_pair)

    A_fit = max(A_size, A_y, 0.0 if math.isnan(A_x) else A_x)

    # 台が有界なら任意の N で減衰条件が成り立つ
    distance = np.sum([np.log(1.0 + scale * np.abs(s.x - y)) for y in s.ys], axis=0)
    zero = theta == 0
    compact = bool(np.any(zero) and np.any(~zero)
                   and distance[zero].min() >= distance[~zero].max() - 1e-12)
    if compact:
        N_fit = math.inf
    else:
        slope = envelope_slope(distance, theta / scale**power)
        N_fit = -slope - fam.gamma if math.isfinite(slope) else math.nan

    gamma_fits = []
    for diff, _, step, pair in reg_y:
        small = step < 1
        ratio = np.where(pair > 0, diff / np.where(pair > 0, pair, 1.0), 0.0)
        slope = envelope_slope(np.log(step[small]), ratio[small])
        if math.isfinite(slope):
            gamma_fits.append(slope)
    gamma_fit = min(min(gamma_fits), 1.0) if gamma_fits else math.nan

    flat_size = _safe_max(theta, np.prod([_phi(k, N2, s.x - y) for y in s.ys], axis=0))
    flat_A = max(flat_size, *flat_y, flat_x)
    back_size = _safe_max(theta, np.prod([_phi(k, N1 + g1, s.x - y) for y in s.ys], axis=0))
    backward_A = max(back_size, *back_y, back_x)
    equivalent = flat_A <= 2 * A_fit * (1 + 1e-9) and backward_A <= flat_A * (1 + 1e-9)

    if bilinear:
        kernel_class = "SBLPK" if fam.smooth else "BLPK"
    else:
        kernel_class = "SLPK" if fam.smooth else "LPK"
    report = KernelReport(
        name=fam.name,
        kernel_class=kernel_class,
        A_size=A_size,
        A_y=A_y,
        A_x=A_x,
        A_fit=A_fit,
        N_fit=N_fit,
        gamma_fit=gamma_fit,
        worst_violation=A_fit / fam.A,
        compact=compact,
        flat_A=flat_A,
        backward_N=N1,
        backward_gamma=g1,
        backward_A=backward_A,
        equivalent=equivalent,
    )
    logger.debug("核族 %s: A=%.4g N=%.3g γ=%.3g", fam.name, A_fit, N_fit, gamma_fit)
    return report


def kernel_ao_integral(
    fam: BilinearKernelFamily,
    j: int,
    k: int,
    x: float,
    y1: float,
    y2: float,
    points_per_scale: int = 16,
    width: float = 16.0,
) -> float:
    """∫ |θ_j(x,y1,y2) − θ_j(x,u,y2)| Φ_k^{N+γ}(u − y1) du"""
    half = width * 2.0 ** -min(j, k)
    du = 2.0 ** -max(j, k) / points_per_scale
    count = int(math.ceil(2 * half / du))
    u = y1 - half + (np.arange(count) + 0.5) * du
    xs = np.full_like(u, x)
    base = fam.evaluate(j, np.array([x]), np.array([y1]), np.array([y2]))[0]
    moved = fam.evaluate(j, xs, u, np.full_like(u, y2))
    weight = PhiKernel(k, fam.N + fam.gamma)(u - y1)
    return float(du * np.sum(np.abs(base - moved) * weight))


def ao_majorant(fam: BilinearKernelFamily, j: int, k: int, x: float, y1: float, y2: float) -> float:
    """2^{γ(j−k)} (Φ_j^N + Φ_k^N)(x − y1) Φ_j^N(x − y2)"""
    phi_j = PhiKernel(j, fam.N)
    phi_k = PhiKernel(k, fam.N)
    value = (phi_j(x - y1) + phi_k(x - y1)) * phi_j(x - y2)
    return float(2.0 ** (fam.gamma * (j - k)) * np.asarray(value))


@dataclass(frozen=True, eq=False)
class BilinearOperatorFamily:
    """Θ_k(f1, f2) = outer_k[weight_k · (inner1_k f1)(inner2_k f2)]"""

    outer: dict[int, DenseOperator]
    inner1: dict[int, DenseOperator]
    inner2: dict[int, DenseOperator]
    weight: GridFunction | dict[int, GridFunction] | None = None

    @property
    def scales(self) -> list[int]:
        return sorted(self.outer)

    def weight_at(self, k: int) -> GridFunction | None:
        if isinstance(self.weight, dict):
            return self.weight[k]
        return self.weight

    def apply(self, k: int, f1: GridFunction, f2: GridFunction) -> GridFunction:
        product = self.inner1[k].apply(f1) * self.inner2[k].apply(f2)
        weight = self.weight_at(k)
        if weight is not None:
            product = weight * product
        return self.outer[k].apply(product)

    def restrict(self, scales: list[int]) -> "BilinearOperatorFamily":
        keep = [k for k in scales if k in self.outer]
        weight = self.weight
        if isinstance(weight, dict):
            weight = {k: weight[k] for k in keep}
        return BilinearOperatorFamily(
            {k: self.outer[k] for k in keep},
            {k: self.inner1[k] for k in keep},
            {k: self.inner2[k] for k in keep},
            weight,
        )


@dataclass
class AODecayReport:
    mode: str
    gaps: list[int]
    ratios: list[float]
    norms: list[float]
    slope: float
    norm_slope: float
    hypotheses_ok: bool
    tags: list[str] = field(default_factory=list)


def _default_probes(grid: Grid) -> list[GridFunction]:
    L = grid.half_width
    probes = []
    for i, center in enumerate(np.linspace(-L / 4, L / 4, 4)):
        radius = L / 8 * (1 + i % 2)
        base = bump(grid.points, float(center), radius)
        probes.append(GridFunction(grid, base))
        probes.append(GridFunction(grid, base * np.cos(2 * math.pi * (i + 1) * grid.points / L)))
    return probes


def _relative(value: float, scale: float) -> float:
    return value / scale if scale > 0 else value


def _check_linear_cancellation(
    ops: dict[int, DenseOperator], b: GridFunction, tol: float, label: str
) -> list[str]:
    tags = []
    scale = lp_norm(b, 2)
    for k, op in ops.items():
        if _relative(lp_norm(op.apply(b), 2), scale) > tol:
            tags.append(f"{label}_{k}(b) != 0")
        if _relative(lp_norm(op.transpose().apply(b), 2), scale) > tol:
            tags.append(f"{label}_{k}^T(b) != 0")
    return tags


def operator_ao_decay(
    theta: dict[int, DenseOperator] | BilinearOperatorFamily,
    lam: dict[int, DenseOperator],
    b: GridFunction,
    mode: str = "linear",
    probes: list[GridFunction] | None = None,
    tol: float = 1e-6,
    interior: float = 0.5,
) -> AODecayReport:
    """Θ と Λ の合成の各スケール差での大きさと減衰傾き"""
    if mode not in {"linear", "adjoint_bilinear", "bilinear"}:
        raise InvalidArgumentError(f"未対応のモードです: {mode}")
    grid = b.grid
    if probes is None:
        probes = _default_probes(grid)
    mask = grid.interior_mask(interior * grid.half_width)
    maximal = [maximal_function(f) for f in probes]

    tags = _check_linear_cancellation(lam, b, tol, "Lambda")
    if isinstance(theta, BilinearOperatorFamily):
        theta_scales = theta.scales
        scale = lp_norm(b, 2) ** 2
        for k in theta_scales:
            for f in probes[:2]:
                if mode == "adjoint_bilinear":
                    value = abs(pairing(b, theta.apply(k, f, f)))
                    if _relative(value, lp_norm(f, 2) ** 2) > tol:
                        tags.append(f"int theta_{k} b dx != 0")
                        break
            if mode == "bilinear" and _relative(lp_norm(theta.apply(k, b, b), 2), scale) > tol:
                tags.append(f"Theta_{k}(b, b) != 0")
    else:
        theta_scales = sorted(theta)
        tags += _check_linear_cancellation(theta, b, tol, "Theta")

    pairs = [(j, k) for j in theta_scales for k in sorted(lam)]

    def measure(pair: tuple[int, int]) -> tuple[float, float]:
        j, k = pair
        ratio = 0.0
        norm = 0.0
        for idx, f in enumerate(probes):
            if mode == "linear":
                assert not isinstance(theta, BilinearOperatorFamily)
                out = theta[j].apply(b * lam[k].transpose().apply(f))
                majorant = maximal[idx].values.real
                denominator = lp_norm(f, 2)
            elif mode == "adjoint_bilinear":
                assert isinstance(theta, BilinearOperatorFamily)
                g = probes[(idx + 1) % len(probes)]
                out = lam[k].apply(b * theta.apply(j, f, g))
                inner = GridFunction(grid, maximal[idx].values * maximal[(idx + 1) % len(probes)].values)
                majorant = maximal_function(inner).values.real
                denominator = lp_norm(f, 4) * lp_norm(g, 4)
            else:
                assert isinstance(theta, BilinearOperatorFamily)
                g = probes[(idx + 1) % len(probes)]
                lt = lam[k].transpose()
                out = theta.apply(j, b * lt.apply(f), b * lt.apply(g))
                majorant = (maximal[idx].values * maximal[(idx + 1) % len(probes)].values).real
                denominator = lp_norm(f, 4) * lp_norm(g, 4)
            values = np.abs(out.values[mask])
            ok = majorant[mask] > 0
            if np.any(ok):
                ratio = max(ratio, float(np.max(values[ok] / majorant[mask][ok])))
            if denominator > 0:
                norm = max(norm, lp_norm(out, 2) / denominator)
        return ratio, norm

    measured = parallel_map(measure, pairs)
    by_gap: dict[int, tuple[float, float]] = {}
    for (j, k), (ratio, norm) in zip(pairs, measured):
        gap = abs(j - k)
        old = by_gap.get(gap, (0.0, 0.0))
        by_gap[gap] = (max(old[0], ratio), max(old[1], norm))
    gaps = sorted(by_gap)
    ratios = [by_gap[g][0] for g in gaps]
    norms = [by_gap[g][1] for g in gaps]
    positive = [r for r in ratios if r > 0]
    slope = fit_log2_slope(gaps, ratios)[0] if len(positive) >= 2 else math.nan
    norm_slope = fit_log2_slope(gaps, norms)[0] if sum(1 for v in norms if v > 0) >= 2 else math.nan
    if tags:
        logger.debug("概直交性の仮定違反: %s", "; ".join(tags))
    return AODecayReport(mode, gaps, ratios, norms, slope, norm_slope, not tags, tags)
