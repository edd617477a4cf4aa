import json
import logging
from pathlib import Path

import numpy as np

from czlab import config
from czlab.accretive import ApproxIdentity, ReproducingFamily, build_differences
from czlab.grid_core import DenseOperator

logger = logging.getLogger("czlab")

_HEADER_KEYS = {
    "b_hash": str,
    "k_min": int,
    "k_max": int,
    "n_points": int,
    "rank": int,
    "residual": float,
    "transpose_defect": float,
    "regularization": float,
}


def _cache_dir() -> Path:
    return config.get_cache_dir()


def _cache_path(b_hash: str, k_min: int, k_max: int) -> Path:
    """b のハッシュとスケール範囲ごとのファイル (e.g., '.../3fa2…_-2_2.json')"""
    return _cache_dir() / f"{b_hash[:16]}_{k_min}_{k_max}.json"


def _validate_cache(data: dict) -> bool:
    """ヘッダ JSON の構造を検証"""
    if not isinstance(data, dict):
        return False
    for key, kind in _HEADER_KEYS.items():
        if key not in data:
            return False
        value = data[key]
        if kind is float and not isinstance(value, (int, float)):
            return False
        if kind is not float and not isinstance(value, kind):
            return False
    if "singular_values" in data and not isinstance(data["singular_values"], list):
        return False
    return True


def load(b_hash: str, k_min: int, k_max: int) -> tuple[dict, np.ndarray] | None:
    """ヘッダと擬似逆行列を返す。欠けている・壊れている・キーが合わなければ None。"""
    path = _cache_path(b_hash, k_min, k_max)
    matrix_path = path.with_suffix(".npy")
    if not path.exists() or not matrix_path.exists():
        return None
    try:
        header = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        return None
    if not _validate_cache(header):
        return None
    if header["b_hash"] != b_hash or header["k_min"] != k_min or header["k_max"] != k_max:
        return None
    try:
        matrix = np.load(matrix_path, allow_pickle=False)
    except (OSError, ValueError):
        return None
    n = header["n_points"]
    if matrix.shape != (n, n):
        return None
    return header, matrix


def save(family: ReproducingFamily) -> Path:
    """族の擬似逆行列 (.npy) とヘッダ (.json) を保存"""
    cache_dir = _cache_dir()
    cache_dir.mkdir(parents=True, exist_ok=True)

    approx = family.approx
    b_hash = family.b.digest()
    header = {
        "b_hash": b_hash,
        "k_min": approx.k_min,
        "k_max": approx.k_max,
        "n_points": family.grid.n_points,
        "rank": family.rank,
        "residual": family.residual,
        "transpose_defect": family.transpose_defect,
        "regularization": family.regularization,
        "singular_values": [float(s) for s in family.singular_values],
    }
    path = _cache_path(b_hash, approx.k_min, approx.k_max)
    np.save(path.with_suffix(".npy"), family.pseudo_inverse.matrix, allow_pickle=False)
    path.write_text(json.dumps(header, ensure_ascii=False, indent=2), encoding="utf-8")
    return path


def load_family(S: ApproxIdentity) -> ReproducingFamily | None:
    """キャッシュから再生公式の族を組み立てる。なければ None。"""
    cached = load(S.b.digest(), S.k_min, S.k_max)
    if cached is None:
        return None
    header, matrix = cached
    grid = S.grid
    b = S.b
    D = build_differences(S)
    pinv = DenseOperator.from_matrix(grid, matrix)
    companions = {k: pinv.compose(D[k]) for k in sorted(D)}
    logger.debug("キャッシュヒット: %s", _cache_path(header["b_hash"], S.k_min, S.k_max).name)
    return ReproducingFamily(
        b=b,
        approx=S,
        differences=D,
        companions=companions,
        dtilde={k: W.left_multiply(b.b) for k, W in companions.items()},
        pseudo_inverse=pinv,
        rank=header["rank"],
        residual=float(header["residual"]),
        transpose_defect=float(header["transpose_defect"]),
        regularization=float(header["regularization"]),
        singular_values=np.asarray(header.get("singular_values", []), dtype=float),
    )
