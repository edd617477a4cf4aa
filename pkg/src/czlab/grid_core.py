"""格子関数・密行列作用素・求積・ノルムなど数値計算の基盤"""

import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, TypeVar

import numpy as np
from scipy import linalg

from czlab import config
from czlab.errors import GridError, GridMismatchError

logger = logging.getLogger("czlab")

T = TypeVar("T")
R = TypeVar("R")

Number = int | float | complex


@dataclass(frozen=True)
class Grid:
    half_width: float
    n_points: int

    def __post_init__(self) -> None:
        if not (self.half_width > 0 and math.isfinite(self.half_width)):
            raise GridError(f"half_width は正の有限値が必要です: {self.half_width}")
        n = self.n_points
        if n < 2 or n & (n - 1):
            raise GridError(f"n_points は 2 以上の 2 のべき乗が必要です: {n}")

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def points(self) -> np.ndarray:
        return _points(self)

    def interior_mask(self, margin: float) -> np.ndarray:
        """境界から margin 以上離れた格子点"""
        return np.abs(self.points) <= self.half_width - margin

    def index_of(self, x: float) -> int:
        """x に最も近い格子点の添字"""
        i = round(x / self.spacing + (self.n_points - 1) / 2)
        return min(max(i, 0), self.n_points - 1)

    def to_dict(self) -> dict[str, Any]:
        return {"L": self.half_width, "n_points": self.n_points}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "Grid":
        return cls(float(data["L"]), int(data["n_points"]))


@lru_cache(maxsize=32)
def _points(grid: Grid) -> np.ndarray:
    # 中点則: x_i = -L + (i + 1/2) h を原点対称に計算する
    n = grid.n_points
    pts = (np.arange(n, dtype=float) - (n - 1) / 2) * grid.spacing
    pts.flags.writeable = False
    return pts


def _frozen(values: Any, dtype: Any = complex) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _frozen(self.values)
        if values.shape != (self.grid.n_points,):
            raise GridError(
                f"値の長さが格子と一致しません: {values.shape} != ({self.grid.n_points},)"
            )
        if not np.all(np.isfinite(values)):
            raise GridError("格子関数に有限でない値が含まれています")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_callable(
        cls, grid: Grid, fn: Callable[[np.ndarray], np.ndarray]
    ) -> "GridFunction":
        return cls(grid, fn(grid.points))

    @classmethod
    def constant(cls, grid: Grid, value: Number = 1.0) -> "GridFunction":
        return cls(grid, np.full(grid.n_points, value, dtype=complex))

    @classmethod
    def zeros(cls, grid: Grid) -> "GridFunction":
        return cls.constant(grid, 0.0)

    def _check(self, other: "GridFunction") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"格子が一致しません: {self.grid} / {other.grid}")

    def _operand(self, other: "GridFunction | Number") -> np.ndarray | Number:
        if isinstance(other, GridFunction):
            self._check(other)
            return other.values
        return other

    def __add__(self, other: "GridFunction | Number") -> "GridFunction":
        return GridFunction(self.grid, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other: "GridFunction | Number") -> "GridFunction":
        return GridFunction(self.grid, self.values - self._operand(other))

    def __rsub__(self, other: Number) -> "GridFunction":
        return GridFunction(self.grid, other - self.values)

    def __mul__(self, other: "GridFunction | Number") -> "GridFunction":
        return GridFunction(self.grid, self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Number) -> "GridFunction":
        return GridFunction(self.grid, self.values / other)

    def __neg__(self) -> "GridFunction":
        return GridFunction(self.grid, -self.values)

    def conj(self) -> "GridFunction":
        return GridFunction(self.grid, np.conj(self.values))

    def abs(self) -> np.ndarray:
        return np.abs(self.values)

    def reciprocal(self) -> "GridFunction":
        if np.any(self.values == 0):
            raise GridError("0 を含む格子関数の逆数は取れません")
        return GridFunction(self.grid, 1.0 / self.values)

    def shift(self, cells: int) -> "GridFunction":
        """格子に沿った平行移動 f(x - cells*h)。はみ出した部分は 0"""
        out = np.zeros_like(self.values)
        n = self.grid.n_points
        if abs(cells) < n:
            if cells >= 0:
                out[cells:] = self.values[: n - cells]
            else:
                out[:cells] = self.values[-cells:]
        return GridFunction(self.grid, out)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": self.grid.to_dict(),
            "values": [[float(v.real), float(v.imag)] for v in self.values],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GridFunction":
        grid = Grid.from_dict(data["grid"])
        pairs = np.asarray(data["values"], dtype=float).reshape(-1, 2)
        return cls(grid, pairs[:, 0] + 1j * pairs[:, 1])


@dataclass(frozen=True, eq=False)
class DenseOperator:
    """作用 (Af)(x_i) = h * sum_j coeffs[i, j] f(x_j) をもつ密行列作用素"""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        raw = np.asarray(self.coeffs)
        dtype = complex if np.iscomplexobj(raw) else float
        coeffs = _frozen(raw, dtype)
        n = self.grid.n_points
        if coeffs.shape != (n, n):
            raise GridError(f"係数行列の形が不正です: {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise GridError("係数行列に有限でない値が含まれています")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_matrix(cls, grid: Grid, matrix: np.ndarray) -> "DenseOperator":
        """作用行列 (h を含む) から作用素を作る"""
        return cls(grid, np.asarray(matrix) / grid.spacing)

    @classmethod
    def identity(cls, grid: Grid) -> "DenseOperator":
        return cls(grid, np.eye(grid.n_points) / grid.spacing)

    @classmethod
    def zeros(cls, grid: Grid) -> "DenseOperator":
        return cls(grid, np.zeros((grid.n_points, grid.n_points)))

    @classmethod
    def multiplication(cls, f: GridFunction) -> "DenseOperator":
        return cls(f.grid, np.diag(f.values) / f.grid.spacing)

    @property
    def matrix(self) -> np.ndarray:
        return self.grid.spacing * self.coeffs

    @property
    def T(self) -> "DenseOperator":
        return self.transpose()

    def transpose(self) -> "DenseOperator":
        return DenseOperator(self.grid, self.coeffs.T)

    def _check(self, grid: Grid) -> None:
        if grid != self.grid:
            raise GridMismatchError(f"格子が一致しません: {self.grid} / {grid}")

    def apply(self, f: GridFunction) -> GridFunction:
        self._check(f.grid)
        return GridFunction(self.grid, self.matrix @ f.values)

    __call__ = apply

    def compose(self, other: "DenseOperator") -> "DenseOperator":
        """self ∘ other"""
        self._check(other.grid)
        return DenseOperator(self.grid, self.grid.spacing * (self.coeffs @ other.coeffs))

    __matmul__ = compose

    def left_multiply(self, f: GridFunction) -> "DenseOperator":
        """M_f ∘ A"""
        self._check(f.grid)
        return DenseOperator(self.grid, f.values[:, None] * self.coeffs)

    def right_multiply(self, f: GridFunction) -> "DenseOperator":
        """A ∘ M_f"""
        self._check(f.grid)
        return DenseOperator(self.grid, self.coeffs * f.values[None, :])

    def __add__(self, other: "DenseOperator") -> "DenseOperator":
        self._check(other.grid)
        return DenseOperator(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "DenseOperator") -> "DenseOperator":
        self._check(other.grid)
        return DenseOperator(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar: Number) -> "DenseOperator":
        return DenseOperator(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "DenseOperator":
        return DenseOperator(self.grid, -self.coeffs)


@dataclass(frozen=True)
class PhiKernel:
    """Φ_k^N(x) = 2^{kn} / (1 + 2^k|x|)^N"""

    k: int
    N: float
    n: int = 1

    def __post_init__(self) -> None:
        if not self.N > self.n:
            raise GridError(f"減衰指数 N は次元 n より大きい必要があります: N={self.N}")

    def __call__(self, x: np.ndarray | float) -> np.ndarray:
        scale = 2.0**self.k
        return scale**self.n / (1.0 + scale * np.abs(x)) ** self.N

    def on(self, grid: Grid, center: float = 0.0) -> GridFunction:
        return GridFunction(grid, self(grid.points - center))


def _check_same_grid(f: GridFunction, g: GridFunction) -> None:
    if f.grid != g.grid:
        raise GridMismatchError(f"格子が一致しません: {f.grid} / {g.grid}")


def _norm_of(values: np.ndarray, h: float, p: float) -> float:
    mags = np.abs(values)
    if math.isinf(p):
        return float(mags.max(initial=0.0))
    return float((h * np.sum(mags**p)) ** (1.0 / p))


def lp_norm(f: GridFunction, p: float) -> float:
    if not p >= 1:
        raise GridError(f"lp_norm は p >= 1 のみ対応します: p={p}")
    return _norm_of(f.values, f.grid.spacing, p)


def pairing(f: GridFunction, g: GridFunction) -> complex:
    """共役を取らない双線形ペアリング h Σ f g"""
    _check_same_grid(f, g)
    return complex(f.grid.spacing * np.sum(f.values * g.values))


def _sample_half_offsets(values: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    """格子値から整数オフセット m*h での値を 4 点補間する（範囲外は 0）"""
    n = values.shape[0]
    padded = np.concatenate([np.zeros(n + 2, dtype=values.dtype), values,
                             np.zeros(n + 2, dtype=values.dtype)])
    base = offsets + n // 2 - 1 + n + 2
    return (
        -padded[base - 1] + 9.0 * padded[base] + 9.0 * padded[base + 1] - padded[base + 2]
    ) / 16.0


def convolve(f: GridFunction, g: GridFunction) -> GridFunction:
    _check_same_grid(f, g)
    n = f.grid.n_points
    m = np.arange(n)
    column = _sample_half_offsets(g.values, m)
    row = _sample_half_offsets(g.values, -m)
    matrix = linalg.toeplitz(column, row)
    return GridFunction(f.grid, f.grid.spacing * (matrix @ f.values))


@lru_cache(maxsize=8)
def _hilbert_matrix(grid: Grid) -> np.ndarray:
    n = grid.n_points
    m = np.arange(n, dtype=float)
    c = np.zeros(n)
    c[1:] = 1.0 / (math.pi * m[1:])
    # 除外セルの寄与を隣接セルの重み 3/2 で補う
    c[1] *= 1.5
    matrix = linalg.toeplitz(c, -c)
    matrix.flags.writeable = False
    return matrix


def hilbert_transform(f: GridFunction) -> GridFunction:
    """(1/π) p.v.∫ f(y)/(x−y) dy（対角セルは対称除外）"""
    return GridFunction(f.grid, _hilbert_matrix(f.grid) @ f.values)


def maximal_function(f: GridFunction) -> GridFunction:
    """格子に沿った区間上の |f| の平均の上限（非中心型）"""
    mags = np.abs(f.values)
    n = mags.shape[0]
    prefix = np.concatenate([[0.0], np.cumsum(mags)])
    start = np.arange(n)[:, None]
    end = np.arange(n)[None, :]
    lengths = (end - start + 1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        averages = (prefix[None, 1:] - prefix[:-1, None]) / lengths
    averages[end < start] = -np.inf
    # best[s, i] = max_{e >= i} avg[s, e]
    best = np.flip(np.maximum.accumulate(np.flip(averages, axis=1), axis=1), axis=1)
    best = np.maximum.accumulate(best, axis=0)
    return GridFunction(f.grid, np.diag(best).copy())


def operator_norm(
    A: DenseOperator, p: float, q: float, trials: int, seed: int = 0
) -> float:
    """L^p -> L^q 作用素ノルムの下からの推定"""
    if trials < 1:
        raise GridError(f"trials は 1 以上が必要です: {trials}")
    grid = A.grid
    h = grid.spacing
    n = grid.n_points
    M = A.matrix
    rng = np.random.default_rng(seed)

    probes = [rng.standard_normal((n, trials)) + 1j * rng.standard_normal((n, trials))]
    column_norms = np.linalg.norm(M, axis=0)
    spikes = np.argsort(column_norms)[::-1][: min(trials, n)]
    spike_block = np.zeros((n, spikes.size), dtype=complex)
    spike_block[spikes, np.arange(spikes.size)] = 1.0
    probes.append(spike_block)
    probes.append(np.stack([np.ones(n), (-1.0) ** np.arange(n)], axis=1).astype(complex))
    block = np.concatenate(probes, axis=1)

    images = M @ block
    best = 0.0
    for j in range(block.shape[1]):
        denominator = _norm_of(block[:, j], h, p)
        if denominator > 0:
            best = max(best, _norm_of(images[:, j], h, q) / denominator)

    if p == 2 and q == 2:
        v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        gram = M.conj().T @ M
        value = 0.0
        for _ in range(100):
            w = gram @ v
            norm = np.linalg.norm(w)
            if norm == 0:
                break
            v = w / norm
            value = math.sqrt(float(np.real(np.vdot(v, gram @ v))))
        best = max(best, value)
    logger.debug("作用素ノルム推定 (p=%s, q=%s): %.6g", p, q, best)
    return best


def parallel_map(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """順序を保つ並列 map（並列数は CZLAB_THREADS で制限）"""
    seq = list(items)
    workers = min(config.max_workers(), len(seq))
    if workers <= 1:
        return [fn(item) for item in seq]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seq))


def fit_line(xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray) -> tuple[float, float, float]:
    """最小二乗直線 (slope, intercept, r2)。点が 2 未満なら nan"""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    x, y = x[ok], y[ok]
    if x.size < 2 or np.ptp(x) == 0:
        return math.nan, math.nan, math.nan
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - float(np.sum(residual**2) / total) if total > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_log2_slope(
    xs: Sequence[float] | np.ndarray, values: Sequence[float] | np.ndarray, floor: float = 0.0
) -> tuple[float, float, float]:
    """log2(values) を xs に対して直線フィット（floor 以下の値は除外）"""
    x = np.asarray(xs, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > floor
    return fit_line(x[keep], np.log2(v[keep]))


def bump(x: np.ndarray | float, center: float = 0.0, radius: float = 1.0) -> np.ndarray:
    """台 [center-radius, center+radius] の C^∞ バンプ（頂点の値 1）"""
    t = np.atleast_1d((np.asarray(x, dtype=float) - center) / radius)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out
