import os
import sys
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

# 並列数の上限（0 なら CPU 数）
CZLAB_THREADS: str = os.getenv("CZLAB_THREADS", "0")

# 出力・キャッシュ・ログディレクトリ
CZLAB_OUTPUT_DIR: str = os.getenv("CZLAB_OUTPUT_DIR", "czlab-out")
CZLAB_CACHE_DIR: str = os.getenv("CZLAB_CACHE_DIR", "")
CZLAB_LOG_DIR: str = os.getenv("CZLAB_LOG_DIR", "")

# デバッグモード（カーネル評価ごとの上界チェック）
CZLAB_DEBUG: str = os.getenv("CZLAB_DEBUG", "0")


def get_output_dir() -> Path:
    return Path(CZLAB_OUTPUT_DIR)


def get_cache_dir() -> Path:
    if CZLAB_CACHE_DIR:
        return Path(CZLAB_CACHE_DIR)
    return get_output_dir() / ".cache"


def get_log_dir() -> Path:
    if CZLAB_LOG_DIR:
        return Path(CZLAB_LOG_DIR)
    return get_output_dir() / ".logs"


def max_workers() -> int:
    """CZLAB_THREADS を解釈した並列数（不正値は 1）"""
    try:
        threads = int(CZLAB_THREADS)
    except ValueError:
        return 1
    if threads <= 0:
        return os.cpu_count() or 1
    return threads


def debug_enabled() -> bool:
    return CZLAB_DEBUG.strip().lower() in {"1", "true", "yes", "on"}


def validate() -> None:
    try:
        threads = int(CZLAB_THREADS)
    except ValueError:
        print(
            f"エラー: CZLAB_THREADS は整数で指定してください: {CZLAB_THREADS!r}",
            file=sys.stderr,
        )
        sys.exit(2)
    if threads < 0:
        print("エラー: CZLAB_THREADS に負の値は指定できません。", file=sys.stderr)
        sys.exit(2)
