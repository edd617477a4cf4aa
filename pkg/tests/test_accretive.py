import math

import numpy as np
import pytest

from czlab.accretive import (
    MOLLIFIER_SUPPORT,
    ParaAccretive,
    accretive_convergence,
    build_approx_identity,
    build_differences,
    build_mollifier,
    build_reproducing_family,
    double_difference_constant,
    max_resolvable_scale,
    mollifier_operator,
    para_accretivity_constant,
)
from czlab.errors import (
    FamilyMismatchError,
    GridError,
    NotParaAccretiveError,
    RankCollapseError,
    SmallAverageError,
    UnresolvableScaleError,
)
from czlab.grid_core import GridFunction, lp_norm

from .conftest import make_b, make_bump, make_grid


class TestParaAccretive:
    def test_constant_one(self, grid):
        b = make_b(grid, "one")
        assert b.c0 == pytest.approx(1.0)
        assert b.sup_norm == pytest.approx(1.0)
        assert b.inv_sup_norm == pytest.approx(1.0)

    def test_oscillating_is_certified(self, grid):
        b = make_b(grid)
        assert 0 < b.c0 <= b.sup_norm

    def test_vanishing_b_raises(self, grid):
        values = np.ones(grid.n_points)
        values[10] = 0.0
        with pytest.raises(NotParaAccretiveError):
            ParaAccretive.certify(GridFunction(grid, values))

    def test_digest_depends_on_values(self, grid):
        assert make_b(grid).digest() != make_b(grid, "one").digest()
        assert make_b(grid).digest() == make_b(grid).digest()

    def test_alternating_sign_has_small_constant(self, grid):
        alternating = GridFunction(grid, (-1.0) ** np.arange(grid.n_points))
        assert para_accretivity_constant(alternating) < para_accretivity_constant(GridFunction.constant(grid))


class TestMollifier:
    def test_unit_mass(self, grid):
        phi = build_mollifier(grid, 0)
        assert grid.spacing * phi.values.sum().real == pytest.approx(1.0)

    def test_support_radius(self, grid):
        phi = build_mollifier(grid, -1)
        outside = np.abs(grid.points) >= 2.0 * MOLLIFIER_SUPPORT
        assert np.all(phi.values[outside] == 0)

    def test_max_resolvable_scale(self):
        assert max_resolvable_scale(make_grid(4.0, 256)) == 1
        assert max_resolvable_scale(make_grid(4.0, 512)) == 2

    def test_unresolvable_scale_reports_limit(self, grid):
        with pytest.raises(UnresolvableScaleError) as exc:
            build_mollifier(grid, 5)
        assert exc.value.max_k == max_resolvable_scale(grid)


class TestApproxIdentity:
    @pytest.mark.parametrize("kind", ["one", "oscillating"])
    def test_reproduces_b(self, kind):
        grid = make_grid(4.0, 256)
        b = make_b(grid, kind)
        S = build_approx_identity(b, -2, 1)
        interior = S.interior_mask()
        assert interior.any()
        for k in S.scales:
            image = S.operators[k].apply(b.b)
            assert np.abs(image.values[interior] - 1).max() <= 1e-8

    def test_reproduces_b_up_to_the_boundary(self):
        grid = make_grid(8.0, 256)
        b = make_b(grid)
        S = build_approx_identity(b, -2, 0)
        for k in S.scales:
            image = S.operators[k].apply(b.b)
            assert np.abs(image.values - 1).max() <= 1e-8

    def test_kernel_support(self):
        grid = make_grid(8.0, 256)
        S = build_approx_identity(make_b(grid), -2, 0)
        dist = np.abs(grid.points[:, None] - grid.points[None, :])
        for k in S.scales:
            coeffs = S.operators[k].coeffs
            assert np.all(coeffs[dist > 2.0**-k] == 0)
            assert np.all(coeffs[dist > 2.0**-k / 4] == 0)
            assert np.any(coeffs[dist > 2.0**-k / 16] != 0)

    def test_mollifier_operator_is_not_periodic(self):
        grid = make_grid(8.0, 256)
        P = mollifier_operator(grid, -2)
        assert P.coeffs[0, -1] == 0
        assert P.coeffs[-1, 0] == 0
        assert np.array_equal(P.coeffs, P.coeffs.T)
        rows = grid.spacing * P.coeffs.sum(axis=1).real
        assert rows[grid.n_points // 2] == pytest.approx(1.0)
        assert rows[0] < 0.75

    def test_self_transpose(self):
        grid = make_grid(4.0, 256)
        S = build_approx_identity(make_b(grid), -1, 1)
        for op in S.operators.values():
            assert np.array_equal(op.coeffs, op.coeffs.T)

    def test_differences_annihilate_b(self):
        grid = make_grid(4.0, 256)
        b = make_b(grid)
        S = build_approx_identity(b, -2, 1)
        interior = S.interior_mask()
        D = build_differences(S)
        assert sorted(D) == [-2, -1, 0]
        for op in D.values():
            assert np.abs(op.apply(b.b).values[interior]).max() <= 1e-8
            assert np.abs(op.transpose().apply(b.b).values[interior]).max() <= 1e-8

    def test_differences_annihilate_b_up_to_the_boundary(self):
        grid = make_grid(8.0, 256)
        b = make_b(grid)
        for op in build_differences(build_approx_identity(b, -2, 0)).values():
            assert np.abs(op.apply(b.b).values).max() <= 1e-8
            assert np.abs(op.transpose().apply(b.b).values).max() <= 1e-8

    def test_coarse_scale_wider_than_domain(self):
        grid = make_grid(0.5, 64)
        with pytest.raises(GridError):
            build_approx_identity(make_b(grid, "one"), -3, -2)

    def test_single_scale_has_no_differences(self, grid):
        S = build_approx_identity(make_b(grid), 0, 0)
        with pytest.raises(FamilyMismatchError):
            build_differences(S)

    def test_small_average_raises(self, grid):
        alternating = ParaAccretive.certify(GridFunction(grid, (-1.0) ** np.arange(grid.n_points)))
        with pytest.raises(SmallAverageError) as exc:
            build_approx_identity(alternating, -1, 0)
        assert exc.value.k in (-1, 0)

    def test_convergence_trend(self):
        grid = make_grid(4.0, 256)
        b = make_b(grid)
        S = build_approx_identity(b, -2, 1)
        report = accretive_convergence(S, make_bump(grid, 0.0, 1.0))
        assert report.errors[-1] < report.errors[0]
        assert report.slope < 0

    def test_double_difference_constant(self):
        grid = make_grid(4.0, 256)
        S = build_approx_identity(make_b(grid), -2, 1)
        A = double_difference_constant(S, 0, n_samples=64)
        assert 0 <= A < math.inf
        assert double_difference_constant(S, 0, n_samples=64) == A


class TestReproducingFamily:
    def test_dtilde_annihilates_b(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        family = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        scale = lp_norm(b.b, 2)
        for op in family.dtilde.values():
            assert lp_norm(op.apply(b.b), 2) <= 1e-6 * scale
        assert family.residual >= 0
        assert math.isfinite(family.transpose_defect)

    def test_rank_threshold(self):
        grid = make_grid(4.0, 128)
        S = build_approx_identity(make_b(grid), -2, 0)
        with pytest.raises(RankCollapseError) as exc:
            build_reproducing_family(S, min_rank_fraction=1.01)
        assert exc.value.required > exc.value.rank

    def test_term_sum_is_reproduce(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        family = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        f = make_bump(grid, 0.2, 0.5)
        total = family.term(-2, f) + family.term(-1, f)
        assert np.allclose(family.reproduce(f).values, total.values)
