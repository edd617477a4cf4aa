"""実験設定（JSON）の読み込みと検証、スイートごとの既定値"""

import copy
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from czlab.accretive import max_resolvable_scale
from czlab.errors import ConfigError, CurveError, GridError, ProbeSpecError
from czlab.grid_core import Grid, GridFunction
from czlab.probes import ProbeSpec
from czlab.riesz_curve import LipschitzCurve

logger = logging.getLogger("czlab")

SUITES = (
    "approx_identity",
    "almost_orthogonality",
    "h1_growth",
    "reproducing",
    "dual_bound",
    "paraproduct",
    "tb_audit",
    "riesz_curve",
)

B_TYPES = ("one", "oscillating", "curve")

# 軟化子を使わないスイートはスケールを切り詰めない
_UNCLIPPED = frozenset({"h1_growth", "riesz_curve"})

# b を一つ以上必要とするスイート
_NEEDS_B = frozenset(SUITES) - {"h1_growth", "riesz_curve"}

_THREE_B = [
    {"type": "one"},
    {"type": "oscillating", "amplitude": 0.4, "frequency": 1.0},
    {"type": "curve", "curve": {"type": "sawtooth", "lambda": 0.4}},
]

DEFAULTS: dict[str, dict[str, Any]] = {
    "approx_identity": {
        "grid": {"L": 4.0, "n_points": 1024},
        "scales": [-2, 3],
        "b": _THREE_B,
        "probes": {"family": "bump", "count": 4},
        "tolerances": {"identity": 1e-8, "cancellation": 1e-8, "holder_slack": 0.25},
        "params": {"delta": 0.5, "delta0": 1.0},
    },
    "almost_orthogonality": {
        "grid": {"L": 2.0, "n_points": 1024},
        "scales": [-1, 4],
        "b": _THREE_B,
        "probes": {"family": "bump", "count": 4},
        "tolerances": {"slope_slack": 0.2, "cancellation": 1e-6},
        "params": {"gamma": 1.0},
    },
    "h1_growth": {
        "grid": {"L": 8.0, "n_points": 2048},
        "scales": [-2, 6],
        "tolerances": {"exponent": 1.15},
        "params": {"N": 2.0},
    },
    "reproducing": {
        "grid": {"L": 4.0, "n_points": 512},
        "scales": [-2, 2],
        "b": [{"type": "oscillating", "amplitude": 0.4, "frequency": 1.0}],
        "probes": {"family": "mean_zero_pair", "count": 6},
        "tolerances": {"residual": 0.05, "gamma_slack": 0.2},
        "params": {"gamma_family": 1.0},
    },
    "dual_bound": {
        "grid": {"L": 8.0, "n_points": 512},
        "scales": [-2, 1],
        "b": [{"type": "oscillating", "amplitude": 0.4, "frequency": 1.0}],
        "probes": {"family": "bump", "count": 6},
        "tolerances": {"stability": 0.25, "hypotheses": 1e-4},
        "params": {"triples": [[2, 4, 4], [2, 3, 6]], "refine": 2},
    },
    "paraproduct": {
        "grid": {"L": 8.0, "n_points": 512},
        "scales": [-2, 1],
        "b": [{"type": "oscillating", "amplitude": 0.4, "frequency": 1.0}],
        "probes": {"family": "bump", "count": 4},
        "tolerances": {"testing_fraction": 0.02, "slope_slack": 0.25, "N_min": 2.0,
                       "carleson_spread": 10.0},
        "params": {"R_values": [0.5, 1.0, 2.0], "gamma": 1.0, "trials": 12},
    },
    "tb_audit": {
        "grid": {"L": 8.0, "n_points": 256},
        "scales": [-2, 0],
        "b": [{"type": "oscillating", "amplitude": 0.4, "frequency": 1.0}],
        "probes": {"family": "bump", "count": 4},
        "tolerances": {"wbp_scatter": 4.0, "theta_cancel": 1e-4, "growth_slack": 0.5,
                       "beta_error": 0.05, "residual_factor": 10.0},
        "params": {"R_values": [0.5, 1.0, 2.0], "t_values": [0.0, 1.0, 2.0, 4.0],
                   "dictionary_size": 32, "order": 1},
    },
    "riesz_curve": {
        "grid": {"L": 8.0, "n_points": 1024},
        "scales": [0, 0],
        "curves": [{"type": "sawtooth", "lambda": lam} for lam in (0.0, 0.2, 0.4, 0.6)],
        "probes": {"family": "bump", "count": 4},
        "tolerances": {"agreement": 0.01, "identity": 1e-13, "testing": 0.02,
                       "cauchy": 0.02, "transfer": 1e-10},
        "params": {"sweep_grid": {"L": 32.0, "n_points": 1024},
                   "R_values": [2.0, 4.0, 8.0], "p": [2.0, 4.0, 4.0], "trials": 4},
    },
}


@dataclass
class ExperimentConfig:
    suite: str
    grid: Grid
    k_min: int
    k_max: int
    b_specs: list[dict[str, Any]] = field(default_factory=list)
    curve_specs: list[dict[str, Any]] = field(default_factory=list)
    probes: ProbeSpec = field(default_factory=lambda: ProbeSpec("bump"))
    tolerances: dict[str, float] = field(default_factory=dict)
    params: dict[str, Any] = field(default_factory=dict)
    output_dir: Path | None = None
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "suite": self.suite,
            "grid": self.grid.to_dict(),
            "scales": [self.k_min, self.k_max],
            "b": self.b_specs,
            "curves": self.curve_specs,
            "probes": self.probes.to_dict(),
            "tolerances": self.tolerances,
            "params": self.params,
            "seed": self.seed,
        }

    def sha256(self) -> str:
        """出力ディレクトリを除いた設定の正規化 JSON のハッシュ"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                               ensure_ascii=False)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def tolerance(self, key: str) -> float:
        return float(self.tolerances[key])

    def with_grid(self, grid: Grid) -> "ExperimentConfig":
        """格子だけを差し替えた設定（スケール範囲は解像可能な範囲に切り詰める）"""
        clone = copy.copy(self)
        clone.grid = grid
        clone.k_max = min(self.k_max, max_resolvable_scale(grid))
        return clone


def _merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _check_b_spec(spec: Any) -> None:
    if not isinstance(spec, dict) or spec.get("type") not in B_TYPES:
        raise ConfigError(f"b の指定が不正です: {spec!r}")
    if spec["type"] == "curve":
        LipschitzCurve.from_dict(spec.get("curve", {}))


def build_b(spec: dict[str, Any], grid: Grid) -> GridFunction:
    """b の指定から格子関数を作る"""
    x = grid.points
    kind = spec.get("type")
    if kind == "one":
        return GridFunction.constant(grid)
    if kind == "oscillating":
        amplitude = float(spec.get("amplitude", 0.4))
        frequency = float(spec.get("frequency", 1.0))
        return GridFunction(grid, 1.0 + 1j * amplitude * np.sin(frequency * x))
    if kind == "curve":
        curve = LipschitzCurve.from_dict(spec.get("curve", {}), support=grid.half_width / 4)
        return curve.gamma_prime_on(grid)
    raise ConfigError(f"未知の b の種類です: {kind}")


def from_dict(data: dict[str, Any], seed: int | None = None, n_points: int | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("設定の最上位は JSON オブジェクトである必要があります")
    suite = data.get("suite")
    if suite not in SUITES:
        raise ConfigError(f"未知のスイートです: {suite!r}（{', '.join(SUITES)}）")
    merged = _merge(DEFAULTS[suite], data)
    if n_points is not None:
        merged["grid"]["n_points"] = n_points

    try:
        grid = Grid.from_dict(merged["grid"])
    except (GridError, KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"格子の指定が不正です: {e}") from e

    scales = merged.get("scales", [0, 0])
    if (not isinstance(scales, list) or len(scales) != 2
            or not all(isinstance(k, int) and not isinstance(k, bool) for k in scales)):
        raise ConfigError(f"scales は整数 2 つのリストで指定してください: {scales!r}")
    k_min, k_max = scales
    if k_min > k_max:
        raise ConfigError(f"スケール範囲が不正です: [{k_min}, {k_max}]")
    limit = max_resolvable_scale(grid)
    if suite not in _UNCLIPPED and k_max > limit:
        logger.info("k_max=%d を解像可能な上限 %d に切り詰めます", k_max, limit)
        k_max = limit
    if k_min > k_max:
        raise ConfigError(f"格子 n={grid.n_points} ではスケール k_min={k_min} を解像できません")

    b_specs = merged.get("b", [])
    curve_specs = merged.get("curves", [])
    if not isinstance(b_specs, list) or not isinstance(curve_specs, list):
        raise ConfigError("b と curves はリストで指定してください")
    if suite in _NEEDS_B and not b_specs:
        raise ConfigError(f"スイート {suite} には b を一つ以上指定してください")
    if suite == "riesz_curve" and not curve_specs:
        raise ConfigError("riesz_curve には curves を一つ以上指定してください")
    if not isinstance(merged.get("params", {}), dict):
        raise ConfigError("params はオブジェクトで指定してください")
    try:
        for spec in b_specs:
            _check_b_spec(spec)
        for spec in curve_specs:
            LipschitzCurve.from_dict(spec)
        probes = ProbeSpec.from_dict(merged.get("probes", {"family": "bump"}))
    except (CurveError, ProbeSpecError) as e:
        raise ConfigError(str(e)) from e

    tolerances = merged.get("tolerances", {})
    if not isinstance(tolerances, dict) or not all(
        isinstance(v, (int, float)) and math.isfinite(v) and v >= 0 for v in tolerances.values()
    ):
        raise ConfigError(f"tolerances は非負の数値で指定してください: {tolerances!r}")

    raw_seed = seed if seed is not None else merged.get("seed", 0)
    if not isinstance(raw_seed, int) or isinstance(raw_seed, bool) or raw_seed < 0:
        raise ConfigError(f"seed は非負の整数で指定してください: {raw_seed!r}")

    output = merged.get("output_dir")
    return ExperimentConfig(
        suite=suite,
        grid=grid,
        k_min=k_min,
        k_max=k_max,
        b_specs=b_specs,
        curve_specs=curve_specs,
        probes=probes,
        tolerances={k: float(v) for k, v in tolerances.items()},
        params=merged.get("params", {}),
        output_dir=Path(output) if output else None,
        seed=raw_seed,
    )


def default_config(suite: str, seed: int | None = None, n_points: int | None = None) -> ExperimentConfig:
    return from_dict({"suite": suite}, seed=seed, n_points=n_points)


def load(path: Path, suite: str | None = None, seed: int | None = None,
         n_points: int | None = None) -> ExperimentConfig:
    """JSON 設定を読み込む。suite を指定した場合はファイルの値より優先する"""
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise ConfigError(f"設定ファイルが見つかりません: {path}") from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigError(f"設定ファイルを JSON として読めません: {path}: {e}") from e
    if suite is not None:
        if not isinstance(data, dict):
            raise ConfigError("設定の最上位は JSON オブジェクトである必要があります")
        data = {**data, "suite": suite}
    return from_dict(data, seed=seed, n_points=n_points)
