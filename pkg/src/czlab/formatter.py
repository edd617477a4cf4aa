import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Any

from czlab.experiment import ExperimentConfig
from czlab.suites import SuiteResult

SCHEMA_VERSION = 1
MANIFEST_NAME = "MANIFEST"


def _flatten(row: dict[str, Any]) -> dict[str, Any]:
    """複素数を name_re / name_im の 2 列に分ける"""
    flat: dict[str, Any] = {}
    for key, value in row.items():
        if isinstance(value, complex):
            flat[f"{key}_re"] = value.real
            flat[f"{key}_im"] = value.imag
        else:
            flat[key] = value
    return flat


def _fieldnames(rows: list[dict[str, Any]]) -> list[str]:
    names: list[str] = []
    for row in rows:
        for key in row:
            if key not in names:
                names.append(key)
    return names


def write_csv(path: Path, rows: list[dict[str, Any]]) -> Path:
    flat = [_flatten(row) for row in rows]
    fieldnames = _fieldnames(flat)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        for row in flat:
            w.writerow({k: row.get(k, "") for k in fieldnames})
    return path


def _json_safe(value: Any) -> Any:
    """JSON に書けない値（inf, nan, 複素数, numpy スカラー）を変換"""
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, complex):
        return {"re": _json_safe(value.real), "im": _json_safe(value.imag)}
    if hasattr(value, "item"):
        value = value.item()
        if isinstance(value, complex):
            return _json_safe(value)
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def build_summary(result: SuiteResult, config: ExperimentConfig) -> dict[str, Any]:
    return {
        "schema": SCHEMA_VERSION,
        "suite": result.suite,
        "seed": config.seed,
        "config_sha256": config.sha256(),
        "criteria": {
            key: {"value": c.value, "threshold": c.threshold, "passed": c.passed}
            for key, c in result.criteria.items()
        },
        "extras": result.extras,
        "passed": result.passed,
    }


def write_summary(path: Path, result: SuiteResult, config: ExperimentConfig) -> Path:
    summary = _json_safe(build_summary(result, config))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(summary, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return path


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(output_dir: Path, config: ExperimentConfig, files: list[Path]) -> Path:
    """設定のハッシュ・seed・各ファイルの sha256 を記録"""
    lines = [f"config_sha256 {config.sha256()}", f"seed {config.seed}"]
    for path in sorted(files, key=lambda p: p.name):
        lines.append(f"{_sha256_file(path)}  {path.name}")
    path = output_dir / MANIFEST_NAME
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_artifacts(result: SuiteResult, config: ExperimentConfig, output_dir: Path) -> list[Path]:
    """表ごとの CSV、summary.json、MANIFEST を書き出して、書いたファイルを返す"""
    output_dir.mkdir(parents=True, exist_ok=True)
    written = [write_csv(output_dir / f"{name}.csv", rows) for name, rows in result.tables.items()]
    written.append(write_summary(output_dir / "summary.json", result, config))
    written.append(write_manifest(output_dir, config, written))
    return written
