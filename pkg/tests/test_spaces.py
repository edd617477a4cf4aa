import numpy as np
import pytest

from czlab.accretive import build_approx_identity, build_reproducing_family
from czlab.errors import GridError, MeanZeroProjectionError, UnresolvableScaleError
from czlab.grid_core import GridFunction, pairing
from czlab.spaces import (
    DyadicFamily,
    approx_identity_convergence,
    bmo_norm,
    carleson_norm,
    duality_ratio,
    h1_growth_experiment,
    h1_norm,
    h1_test_function,
    holder_norm,
    project_mean_zero,
    reproducing_convergence,
)

from .conftest import make_b, make_bump, make_grid


class TestDyadicFamily:
    def test_sizes_respect_min_cells(self):
        family = DyadicFamily(make_grid(4.0, 16), min_cells=4)
        assert family.sizes == [4, 8, 16]

    def test_intervals_tile_each_level(self):
        family = DyadicFamily(make_grid(4.0, 8), min_cells=2)
        intervals = list(family.intervals())
        assert intervals.count((0, 8)) == 1
        assert sum(size for _, size in intervals if size == 2) == 8


class TestH1:
    def test_truncated_flag(self, grid):
        assert h1_norm(make_bump(grid)).truncated
        odd = GridFunction(grid, grid.points * np.exp(-(grid.points**2)))
        assert not h1_norm(odd).truncated

    def test_test_function_is_mean_zero(self):
        grid = make_grid(8.0, 512)
        f = h1_test_function(grid, 0, 2, N=2.0)
        one = GridFunction.constant(grid)
        assert abs(pairing(f, one)) <= 1e-10

    def test_growth_experiment_rows(self):
        grid = make_grid(8.0, 512)
        report = h1_growth_experiment(grid, [0, 1], [0, 1, 2])
        assert len(report.rows) == 6
        assert {row["gap"] for row in report.rows} == {0, 1, 2}
        assert np.isfinite(report.exponent)

    def test_growth_experiment_unresolvable(self, grid):
        with pytest.raises(UnresolvableScaleError):
            h1_growth_experiment(grid, [0], [4])


class TestBmoAndCarleson:
    def test_bmo_of_constant(self, grid):
        assert bmo_norm(GridFunction.constant(grid, 3.0)) <= 1e-12

    def test_bmo_of_step_is_positive(self, grid):
        step = GridFunction(grid, (grid.points > 0).astype(float))
        assert bmo_norm(step) == pytest.approx(0.5)

    def test_carleson_of_single_scale(self, grid):
        assert carleson_norm(grid, {0: np.ones(grid.n_points)}) == pytest.approx(1.0)

    def test_carleson_rejects_negative_density(self, grid):
        density = np.ones(grid.n_points)
        density[0] = -1.0
        with pytest.raises(GridError):
            carleson_norm(grid, {0: density})

    def test_duality_ratio_with_constant(self, grid):
        assert duality_ratio(make_bump(grid), GridFunction.constant(grid)) == 0.0


class TestHolder:
    def test_constant(self, grid):
        assert holder_norm(GridFunction.constant(grid), 0.5) == 0.0

    def test_linear_function_lipschitz(self, grid):
        assert holder_norm(GridFunction(grid, grid.points), 1.0) == pytest.approx(1.0)


class TestMeanZeroProjection:
    def test_projection_is_orthogonal_to_b(self, grid):
        b = make_b(grid).b
        phi = project_mean_zero(make_bump(grid, 0.5, 0.7), b)
        assert abs(pairing(b, phi)) <= 1e-12

    def test_vanishing_pairing_raises(self, grid):
        one = GridFunction.constant(grid)
        odd = GridFunction(grid, grid.points * make_bump(grid).values)
        with pytest.raises(MeanZeroProjectionError):
            project_mean_zero(make_bump(grid), one, psi=odd)


class TestConvergence:
    def test_mollifier_convergence(self):
        grid = make_grid(4.0, 256)
        S = build_approx_identity(make_b(grid), -2, 1)
        report = approx_identity_convergence(S.mollifiers, make_bump(grid))
        assert report.scales == [-2, -1, 0, 1]
        assert report.fine_decreasing
        assert len(report.sup_ratios) == 4

    def test_reproducing_convergence_shapes(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        fam = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        phi = project_mean_zero(make_bump(grid, 0.3, 0.6), b.b)
        report = reproducing_convergence(fam, phi, mode="H1")
        assert report.M_values == [0, 1, 2]
        assert len(report.errors) == 3
        assert sorted(report.per_scale) == [-2, -1]

    def test_reproducing_convergence_rejects_non_mean_zero(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        fam = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        with pytest.raises(MeanZeroProjectionError):
            reproducing_convergence(fam, make_bump(grid))

    def test_unknown_mode(self):
        grid = make_grid(4.0, 128)
        fam = build_reproducing_family(build_approx_identity(make_b(grid), -2, 0), min_rank_fraction=0.0)
        with pytest.raises(GridError):
            reproducing_convergence(fam, make_bump(grid), mode="BMO")
