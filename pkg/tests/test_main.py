import json
from unittest.mock import patch

import pytest

from czlab import main
from czlab.errors import InvalidArgumentError
from czlab.main import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, parse_args, resolve_output_dir
from czlab.suites import Criterion, SuiteResult


def fake_runner(passed: bool):
    def run(config, refresh=False):
        return SuiteResult(
            suite=config.suite,
            tables={"rows": [{"x": 1}]},
            criteria={"check": Criterion(1.0, 2.0, passed)},
        )

    return run


def raising_runner(error):
    def run(config, refresh=False):
        raise error

    return run


def h1_config(tmp_path):
    path = tmp_path / "h1.json"
    path.write_text(
        json.dumps({"suite": "h1_growth", "grid": {"L": 8.0, "n_points": 512}, "scales": [-2, 1]}),
        encoding="utf-8",
    )
    return path


class TestParseArgs:
    def test_run_options(self):
        args = parse_args(["run", "--suite", "reproducing", "--seed", "3", "--n-points", "256"])
        assert args.command == "run"
        assert args.suite == "reproducing"
        assert args.seed == 3
        assert args.n_points == 256
        assert not args.refresh

    def test_unknown_suite(self):
        with pytest.raises(SystemExit):
            parse_args(["run", "--suite", "nope"])


class TestResolveOutputDir:
    def test_cli_out_wins(self, tmp_path):
        args = parse_args(["run", "--suite", "reproducing", "--out", str(tmp_path / "x")])
        cfg = main.load_config(args)
        assert resolve_output_dir(args, cfg) == tmp_path / "x"

    def test_default_is_per_suite(self):
        args = parse_args(["run", "--suite", "paraproduct"])
        cfg = main.load_config(args)
        assert resolve_output_dir(args, cfg).name == "paraproduct"


class TestRunSuite:
    def test_writes_artifacts(self, tmp_path):
        cfg = main.load_config(parse_args(["run", "--suite", "dual_bound"]))
        with patch.dict(main.RUNNERS, {"dual_bound": fake_runner(True)}):
            assert main.run_suite(cfg, tmp_path) == EXIT_OK
        assert sorted(p.name for p in tmp_path.iterdir()) == ["MANIFEST", "rows.csv", "summary.json"]


class TestMain:
    def test_requires_suite_or_config(self, isolated_dirs):
        assert main.main(["run"]) == EXIT_CONFIG

    def test_malformed_config(self, isolated_dirs):
        path = isolated_dirs / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        assert main.main(["run", "--config", str(path)]) == EXIT_CONFIG

    def test_passing_runner(self, isolated_dirs):
        out = isolated_dirs / "out"
        with patch.dict(main.RUNNERS, {"reproducing": fake_runner(True)}):
            code = main.main(["run", "--suite", "reproducing", "--out", str(out)])
        assert code == EXIT_OK
        assert (out / "rows.csv").exists()
        assert (out / "MANIFEST").exists()

    def test_failing_runner(self, isolated_dirs):
        out = isolated_dirs / "out"
        with patch.dict(main.RUNNERS, {"reproducing": fake_runner(False)}):
            code = main.main(["run", "--suite", "reproducing", "--out", str(out)])
        assert code == EXIT_FAILED
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["passed"] is False

    def test_invalid_argument_is_reported_as_failure(self, isolated_dirs):
        out = isolated_dirs / "out"
        error = InvalidArgumentError("未対応のモードです: trilinear")
        with patch.dict(main.RUNNERS, {"reproducing": raising_runner(error)}):
            code = main.main(["run", "--suite", "reproducing", "--out", str(out)])
        assert code == EXIT_FAILED

    def test_real_run_is_deterministic(self, isolated_dirs):
        config_path = h1_config(isolated_dirs)
        first, second = isolated_dirs / "first", isolated_dirs / "second"
        code1 = main.main(["run", "--config", str(config_path), "--out", str(first)])
        code2 = main.main(["run", "--config", str(config_path), "--out", str(second)])

        assert code1 == code2
        assert code1 in (EXIT_OK, EXIT_FAILED)
        for name in ("h1.csv", "summary.json", "MANIFEST"):
            assert (first / name).read_bytes() == (second / name).read_bytes()
        rows = (first / "h1.csv").read_text(encoding="utf-8").splitlines()
        assert rows[0].startswith("j,k,gap,h1")
        assert len(rows) == 1 + 16
