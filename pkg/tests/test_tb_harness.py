import math

import numpy as np
import pytest

from czlab.accretive import build_approx_identity, build_reproducing_family
from czlab.errors import (
    DomainTooSmallError,
    HolderTripleError,
    InvalidArgumentError,
    NonConvergentSweepError,
    UnresolvableScaleError,
)
from czlab.grid_core import GridFunction, pairing
from czlab.tb_harness import (
    PROFILE_NAMES,
    NormalizedBump,
    TrilinearForm,
    bump_library,
    check_trilinear,
    difference_family,
    displaced_bump_growth,
    dual_sum_bound,
    extract_theta,
    fit_beta,
    kernel_consistency,
    mean_zero_dictionary,
    pointwise_product_form,
    profile_swap_defect,
    reduce_and_test,
    tb_pairing,
    telescoping_check,
    wbp_constant,
    zero_form,
)

from .conftest import make_b, make_bump, make_grid


def make_family(grid, kind="oscillating"):
    b = make_b(grid, kind)
    return build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)


def gaussian_form(grid) -> TrilinearForm:
    x = grid.points
    G = np.exp(-((x[:, None] - x[None, :]) ** 2))
    h = grid.spacing

    def operator(f1, f2):
        return GridFunction(grid, (h * G @ f1.values) * (h * G @ f2.values))

    def kernel(X, Y1, Y2):
        return np.exp(-((X - Y1) ** 2)) * np.exp(-((X - Y2) ** 2))

    return TrilinearForm.from_operator("gaussian", operator, kernel=kernel)


class TestTrilinearForm:
    def test_product_is_trilinear(self, grid):
        probes = [make_bump(grid, c, 0.8) for c in (-0.5, 0.0, 0.4, 0.9)]
        assert check_trilinear(pointwise_product_form(), probes) <= 1e-12

    def test_quadratic_form_is_detected(self, grid):
        form = TrilinearForm("square", lambda f1, f2, f0: pairing(f1 * f1 * f2, f0))
        probes = [make_bump(grid, c, 0.8) for c in (-0.5, 0.0, 0.4, 0.9)]
        assert check_trilinear(form, probes) > 0.1

    def test_transposes_permute_slots(self, grid):
        T = gaussian_form(grid)
        f1, f2, f0 = make_bump(grid, -0.3), make_bump(grid, 0.2, 0.5), make_bump(grid, 0.6, 0.7)
        assert T.transpose1()(f0, f2, f1) == pytest.approx(T(f1, f2, f0))
        assert T.transpose2()(f1, f0, f2) == pytest.approx(T(f1, f2, f0))
        assert T.transpose1().transpose1()(f1, f2, f0) == pytest.approx(T(f1, f2, f0))

    def test_difference_of_equal_forms(self, grid):
        T = pointwise_product_form()
        diff = T - T
        f = make_bump(grid)
        assert diff(f, f, f) == 0
        assert np.all(diff.operator(f, f).values == 0)

    def test_zero_form(self, grid):
        f = make_bump(grid)
        assert zero_form()(f, f, f) == 0


class TestKernelConsistency:
    def test_gaussian_kernel(self, grid):
        T = gaussian_form(grid)
        f1, f2, f0 = make_bump(grid, -2.0, 0.5), make_bump(grid, 2.0, 0.5), make_bump(grid, 0.0, 0.5)
        assert kernel_consistency(T, f1, f2, f0) <= 1e-10

    def test_missing_kernel(self, grid):
        f = make_bump(grid)
        with pytest.raises(InvalidArgumentError):
            kernel_consistency(pointwise_product_form(), f, f, f)


class TestNormalizedBump:
    def test_sup_is_at_most_one(self, grid):
        for name in PROFILE_NAMES:
            phi = NormalizedBump(0.0, 1.0, 1, name).on(grid)
            assert np.abs(phi.values).max() <= 1.0

    def test_too_small_radius(self, grid):
        with pytest.raises(UnresolvableScaleError):
            NormalizedBump(0.0, 4 * grid.spacing).on(grid)

    def test_outside_domain(self, grid):
        with pytest.raises(DomainTooSmallError):
            NormalizedBump(3.5, 1.0).on(grid)

    def test_unknown_profile(self, grid):
        with pytest.raises(InvalidArgumentError):
            NormalizedBump(0.0, 1.0, 1, "square").on(grid)

    def test_library_cycles_profiles(self):
        library = bump_library(1)
        assert len(library) == len(PROFILE_NAMES)
        assert {triple[0] for triple in library} == set(PROFILE_NAMES)


class TestWeakBoundedness:
    def test_product_form_constant(self):
        grid = make_grid(8.0, 256)
        one = make_b(grid, "one")
        report = wbp_constant(pointwise_product_form(), one, one, one, [0.5, 1.0])
        assert 0 < report.C_wbp <= 2.0
        assert sorted(report.by_R) == [0.5, 1.0]

    def test_zero_form(self):
        grid = make_grid(8.0, 256)
        one = make_b(grid, "one")
        report = wbp_constant(zero_form(), one, one, one, [0.5, 1.0])
        assert report.C_wbp == 0.0
        assert report.scatter == 1.0

    def test_displaced_growth_of_zero_form(self):
        grid = make_grid(8.0, 256)
        one = make_b(grid, "one")
        growth = displaced_bump_growth(zero_form(), one, one, one, 0.5, [0.0, 1.0, 2.0])
        assert growth.exponent == -math.inf
        assert growth.bound == pytest.approx(4.5)

    def test_displaced_growth_of_product_is_bounded(self):
        grid = make_grid(8.0, 256)
        one = make_b(grid, "one")
        growth = displaced_bump_growth(pointwise_product_form(), one, one, one, 1.0, [0.0, 0.5, 1.0])
        assert len(growth.ratios) == 3
        assert all(0 < r <= 2.0 for r in growth.ratios)
        assert growth.exponent <= growth.bound


class TestThetaAndDualSum:
    def test_extracted_theta_cancels_against_b0(self, grid):
        fam = make_family(grid)
        S = fam.approx.operators
        b = fam.b
        theta = extract_theta(pointwise_product_form(), fam, S, S, b, b, -1, n_y=4, verify_samples=0)
        assert theta.values.shape[1:] == (theta.y1s.size, theta.y2s.size)
        assert theta.cancel_residual <= 1e-6
        assert theta.A_fit > 0
        assert theta.kernel_report is None

    def test_dual_sum_hypotheses_hold_for_difference_family(self, grid):
        fam = make_family(grid)
        S = fam.approx.operators
        theta = difference_family(fam, S, S)
        assert theta.scales == fam.scales
        probes = [make_bump(grid, c, 0.5) for c in (-0.5, 0.0, 0.5)]
        report = dual_sum_bound(theta, fam.b, fam.b, fam.b, 2.0, 4.0, 4.0, probes)
        assert report.hypotheses_ok
        assert 0 < report.bound_ratio < math.inf
        assert len(report.sums) == 3

    def test_dual_sum_holder_check(self, grid):
        fam = make_family(grid)
        S = fam.approx.operators
        with pytest.raises(HolderTripleError):
            dual_sum_bound(difference_family(fam, S, S), fam.b, fam.b, fam.b, 2.0, 3.0, 3.0, [])


class TestTbPairing:
    def test_product_limit_is_exact(self, grid):
        one = make_b(grid, "one")
        f0 = make_bump(grid, 0.0, 0.25)
        (result,) = tb_pairing(pointwise_product_form(), one, one, one, [f0], [0.5, 1.0])
        assert result.accepted
        assert result.error == 0.0
        assert result.limit == pytest.approx(pairing(f0, GridFunction.constant(grid)))

    def test_growing_form_does_not_converge(self, grid):
        one = make_b(grid, "one")
        ones = GridFunction.constant(grid)
        form = TrilinearForm("mass", lambda f1, f2, f0: pairing(f1, f2) * pairing(f0, ones))
        f0 = make_bump(grid, 0.0, 0.25)
        with pytest.raises(NonConvergentSweepError):
            tb_pairing(form, one, one, one, [f0], [0.5, 1.0])
        (result,) = tb_pairing(form, one, one, one, [f0], [0.5, 1.0], strict=False)
        assert not result.accepted

    def test_profile_swap_for_local_form(self, grid):
        one = make_b(grid, "one")
        f0 = make_bump(grid, 0.0, 0.25)
        assert profile_swap_defect(pointwise_product_form(), one, one, one, [f0], [0.5, 1.0]) <= 1e-12


class TestReduction:
    def test_telescoping_identity(self, grid):
        fam = make_family(grid)
        f1, f2, f0 = make_bump(grid, -0.3), make_bump(grid, 0.2, 0.5), make_bump(grid, 0.6, 0.7)
        assert telescoping_check(pointwise_product_form(), fam, fam, fam, f1, f2, f0) <= 1e-10

    def test_dictionary_is_mean_zero(self, grid):
        b = make_b(grid)
        dictionary = mean_zero_dictionary(b, 32)
        assert len(dictionary) == 32
        assert max(abs(pairing(b.b, phi)) for phi in dictionary) <= 1e-12

    def test_fit_beta_reproduces_pairings(self):
        grid = make_grid(4.0, 256)
        b = make_b(grid)
        probes = mean_zero_dictionary(b, 32)
        beta = GridFunction(grid, np.cos(grid.points))
        values = np.array([pairing(beta, b.b * phi) for phi in probes])
        fitted = fit_beta(probes, b, values)
        recovered = np.array([pairing(fitted, b.b * phi) for phi in probes])
        assert np.allclose(recovered, values, rtol=1e-8, atol=1e-10)

    def test_dictionary_size_floor(self, grid):
        fam = make_family(grid)
        with pytest.raises(InvalidArgumentError):
            reduce_and_test(pointwise_product_form(), fam, fam, fam, [0.5, 1.0], dictionary_size=8)
