"""テスト用の共通ファクトリ"""

import numpy as np
import pytest

from czlab.accretive import ParaAccretive
from czlab.grid_core import Grid, GridFunction, bump
from czlab.riesz_curve import LipschitzCurve


def make_grid(L: float = 4.0, n_points: int = 128) -> Grid:
    return Grid(L, n_points)


def make_bump(grid: Grid, center: float = 0.0, radius: float = 1.0, amplitude: complex = 1.0) -> GridFunction:
    return GridFunction(grid, amplitude * bump(grid.points, center, radius))


def make_b(grid: Grid, kind: str = "oscillating", amplitude: float = 0.4, frequency: float = 1.0) -> ParaAccretive:
    if kind == "one":
        return ParaAccretive.certify(GridFunction.constant(grid))
    values = 1.0 + 1j * amplitude * np.sin(frequency * grid.points)
    return ParaAccretive.certify(GridFunction(grid, values))


def make_curve(kind: str = "sawtooth", lam: float = 0.4, c0: float = 0.0, support: float = 1.0) -> LipschitzCurve:
    return LipschitzCurve(kind, lam, c0=c0, support=support)


@pytest.fixture()
def grid():
    return make_grid()


@pytest.fixture()
def isolated_dirs(tmp_path, monkeypatch):
    """キャッシュ・ログを tmp 以下に向ける"""
    from czlab import config

    monkeypatch.setattr(config, "CZLAB_CACHE_DIR", str(tmp_path / ".cache"))
    monkeypatch.setattr(config, "CZLAB_LOG_DIR", str(tmp_path / ".logs"))
    monkeypatch.setattr(config, "CZLAB_THREADS", "1")
    return tmp_path
