import argparse
import logging
from datetime import datetime
from pathlib import Path

from czlab import config, experiment
from czlab.errors import ConfigError, CzlabError
from czlab.experiment import ExperimentConfig
from czlab.formatter import write_artifacts
from czlab.suites import RUNNERS

logger = logging.getLogger("czlab")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _setup_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.INFO
    fmt = "%(asctime)s [%(levelname)s] %(message)s"
    datefmt = "%Y-%m-%d %H:%M:%S"

    logger.setLevel(logging.DEBUG)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    # コンソール出力
    console = logging.StreamHandler()
    console.setLevel(level)
    console.setFormatter(logging.Formatter(fmt, datefmt=datefmt))
    logger.addHandler(console)

    # ファイル出力（常に DEBUG レベル）
    log_dir = config.get_log_dir()
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / f"{datetime.now():%Y-%m-%d}.log"
    file_handler = logging.FileHandler(log_file, encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(logging.Formatter(fmt, datefmt=datefmt))
    logger.addHandler(file_handler)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(
        prog="czlab", description="双線形 Tb 定理の数値実験スイートを実行"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="スイートを実行して CSV / JSON / MANIFEST を出力")
    run.add_argument("--suite", choices=experiment.SUITES, help="スイート名。省略時は設定ファイルの suite")
    run.add_argument("--config", type=Path, help="実験設定 (JSON)。省略時はスイートの既定値")
    run.add_argument("--out", type=Path, help="出力ディレクトリ。省略時は CZLAB_OUTPUT_DIR/<suite>")
    run.add_argument("--seed", type=int, help="乱数 seed（設定より優先）")
    run.add_argument("--n-points", type=int, dest="n_points", help="格子点数（設定より優先）")
    run.add_argument(
        "--refresh", action="store_true", help="作用素族のキャッシュを無視して再構成"
    )
    run.add_argument("--verbose", "-v", action="store_true", help="詳細ログを表示")
    return parser.parse_args(argv)


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        return experiment.load(args.config, suite=args.suite, seed=args.seed, n_points=args.n_points)
    if args.suite is None:
        raise ConfigError("--suite か --config のどちらかを指定してください")
    return experiment.default_config(args.suite, seed=args.seed, n_points=args.n_points)


def resolve_output_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    if args.out is not None:
        return args.out
    if cfg.output_dir is not None:
        return cfg.output_dir
    return config.get_output_dir() / cfg.suite


def run_suite(cfg: ExperimentConfig, output_dir: Path, refresh: bool = False) -> int:
    """スイートを実行して成果物を書き出し、終了コードを返す"""
    logger.info("スイート: %s (n=%d, L=%g, seed=%d)", cfg.suite, cfg.grid.n_points,
                cfg.grid.half_width, cfg.seed)
    result = RUNNERS[cfg.suite](cfg, refresh)
    for path in write_artifacts(result, cfg, output_dir):
        logger.info("出力先: %s", path)

    for key, c in result.criteria.items():
        mark = "OK" if c.passed else "NG"
        logger.info("[%s] %s: %.6g (閾値 %.6g)", mark, key, c.value, c.threshold)
    failed = result.failed()
    if failed:
        logger.error("不合格の判定基準: %s", ", ".join(failed))
        return EXIT_FAILED
    logger.info("完了")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    config.validate()
    _setup_logging(verbose=args.verbose)

    try:
        cfg = load_config(args)
    except ConfigError as e:
        logger.error("設定エラー: %s", e)
        return EXIT_CONFIG

    try:
        return run_suite(cfg, resolve_output_dir(args, cfg), refresh=args.refresh)
    except CzlabError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return EXIT_FAILED
