import hashlib
import json
import math

import numpy as np

from czlab.experiment import default_config
from czlab.formatter import (
    MANIFEST_NAME,
    _flatten,
    _json_safe,
    build_summary,
    write_artifacts,
    write_csv,
)
from czlab.suites import Criterion, SuiteResult


def make_result(**overrides) -> SuiteResult:
    defaults = dict(
        suite="reproducing",
        tables={"errors": [{"M": 0, "error": 0.5}, {"M": 1, "error": 0.25}]},
        criteria={"residual": Criterion(0.01, 0.05, True)},
    )
    defaults.update(overrides)
    return SuiteResult(**defaults)


class TestFlatten:
    def test_splits_complex(self):
        assert _flatten({"k": 1, "value": 1 + 2j}) == {"k": 1, "value_re": 1.0, "value_im": 2.0}

    def test_keeps_real(self):
        assert _flatten({"error": 0.5}) == {"error": 0.5}


class TestJsonSafe:
    def test_non_finite(self):
        assert _json_safe([math.inf, -math.inf, math.nan]) == ["inf", "-inf", "nan"]

    def test_numpy_scalars(self):
        assert _json_safe({"a": np.float64(1.5), "b": np.int64(3)}) == {"a": 1.5, "b": 3}

    def test_complex(self):
        assert _json_safe(np.complex128(1 - 1j)) == {"re": 1.0, "im": -1.0}

    def test_bool_and_none(self):
        assert _json_safe({"ok": True, "none": None}) == {"ok": True, "none": None}


class TestWriteCsv:
    def test_union_of_columns(self, tmp_path):
        path = write_csv(tmp_path / "t.csv", [{"a": 1}, {"a": 2, "b": 1j}])
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "a,b_re,b_im"
        assert lines[1] == "1,,"
        assert lines[2] == "2,0.0,1.0"

    def test_creates_parent(self, tmp_path):
        path = write_csv(tmp_path / "nested" / "t.csv", [{"a": 1}])
        assert path.exists()


class TestSummary:
    def test_fields(self):
        cfg = default_config("reproducing", seed=4)
        summary = build_summary(make_result(), cfg)
        assert summary["suite"] == "reproducing"
        assert summary["seed"] == 4
        assert summary["config_sha256"] == cfg.sha256()
        assert summary["criteria"]["residual"]["passed"] is True
        assert summary["passed"] is True

    def test_failed_criterion(self):
        result = make_result(criteria={"residual": Criterion(math.nan, 0.05, False)})
        summary = build_summary(result, default_config("reproducing"))
        assert summary["passed"] is False


class TestWriteArtifacts:
    def test_files_and_manifest(self, tmp_path):
        cfg = default_config("reproducing")
        result = make_result(extras={"slope": -math.inf})
        written = write_artifacts(result, cfg, tmp_path / "out")

        assert [p.name for p in written] == ["errors.csv", "summary.json", MANIFEST_NAME]
        summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
        assert summary["extras"]["slope"] == "-inf"

        manifest = (tmp_path / "out" / MANIFEST_NAME).read_text(encoding="utf-8").splitlines()
        assert manifest[0] == f"config_sha256 {cfg.sha256()}"
        assert manifest[1] == "seed 0"
        digest = hashlib.sha256((tmp_path / "out" / "errors.csv").read_bytes()).hexdigest()
        assert f"{digest}  errors.csv" in manifest
        assert len(manifest) == 4

    def test_identical_inputs_give_identical_files(self, tmp_path):
        cfg = default_config("reproducing")
        write_artifacts(make_result(), cfg, tmp_path / "a")
        write_artifacts(make_result(), cfg, tmp_path / "b")
        for name in ("errors.csv", "summary.json", MANIFEST_NAME):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
