import math

import numpy as np
import pytest

from czlab.accretive import build_approx_identity, build_reproducing_family
from czlab.errors import (
    DegenerateTripleError,
    DomainTooSmallError,
    FamilyMismatchError,
    HolderTripleError,
    InvalidArgumentError,
)
from czlab.grid_core import GridFunction, pairing
from czlab.paraproduct import (
    beta_library,
    boundedness_ratio,
    build_paraproduct,
    check_holder_triple,
    check_R_values,
    cutoff,
    decay_slope,
    kernel_size_constant,
    kernel_slice,
    paraproduct_kernel,
    ratio_over_sqrt_carleson,
    verify_testing_conditions,
)

from .conftest import make_b, make_bump, make_grid


def make_paraproduct(beta: str | None = "oscillation", n_points: int = 128):
    grid = make_grid(4.0, n_points)
    b0 = make_b(grid)
    b1 = make_b(grid, "one")
    family0 = build_reproducing_family(build_approx_identity(b0, -2, 0), min_rank_fraction=0.0)
    approx1 = build_approx_identity(b1, -2, 0)
    approx2 = build_approx_identity(b0, -2, 0)
    values = beta_library(grid)[beta] if beta else GridFunction.zeros(grid)
    return build_paraproduct(family0, approx1, approx2, values)


class TestCutoff:
    @pytest.mark.parametrize("profile", ["cos2", "smooth"])
    def test_plateau_and_support(self, profile):
        grid = make_grid(4.0, 256)
        eta = cutoff(grid, 1.0, profile).values.real
        x = np.abs(grid.points)
        assert np.all(eta[x <= 1.0] == 1.0)
        assert np.all(eta[x >= 2.0] == 0.0)
        assert np.all((eta >= 0) & (eta <= 1))

    def test_unknown_profile(self, grid):
        with pytest.raises(InvalidArgumentError):
            cutoff(grid, 1.0, "linear")


class TestChecks:
    def test_holder_triple(self):
        check_holder_triple(2.0, 4.0, 4.0)
        with pytest.raises(HolderTripleError):
            check_holder_triple(2.0, 4.0, 3.0)
        with pytest.raises(HolderTripleError):
            check_holder_triple(1.0, 1.0, math.inf)

    def test_R_values(self, grid):
        check_R_values(grid, [0.25, 0.5, 1.0])
        with pytest.raises(DomainTooSmallError):
            check_R_values(grid, [0.5, 1.5])
        with pytest.raises(DomainTooSmallError):
            check_R_values(grid, [0.0])

    def test_decay_slope_of_zeros(self):
        assert decay_slope([1.0, 2.0, 4.0], [0.0, 0.0, 0.0], 1.0) == -math.inf

    def test_decay_slope_of_power_law(self):
        R = [1.0, 2.0, 4.0, 8.0]
        assert decay_slope(R, [1.0 / r for r in R], 1.0) == pytest.approx(-1.0)


class TestParaproduct:
    def test_transposes_are_consistent(self):
        P = make_paraproduct()
        grid = P.grid
        f0 = make_bump(grid, 0.1, 1.0)
        f1 = make_bump(grid, -0.3, 0.8, amplitude=1 + 0.5j)
        f2 = make_bump(grid, 0.4, 1.2)
        value = pairing(P(f1, f2), f0)
        assert pairing(P.transpose1(f0, f2), f1) == pytest.approx(value, rel=1e-10, abs=1e-14)
        assert pairing(P.transpose2(f1, f0), f2) == pytest.approx(value, rel=1e-10, abs=1e-14)

    def test_kernel_matches_operator(self):
        P = make_paraproduct()
        grid = P.grid
        f1 = make_bump(grid, -0.2, 0.9)
        f2 = make_bump(grid, 0.3, 1.1)
        i = grid.index_of(0.5)
        ell = kernel_slice(P, float(grid.points[i]))
        expected = grid.spacing**2 * (f1.values @ ell @ f2.values)
        assert P(f1, f2).values[i] == pytest.approx(expected, rel=1e-10)

    def test_pointwise_kernel_matches_slice(self):
        P = make_paraproduct()
        x = P.grid.points
        ell = kernel_slice(P, float(x[70]))
        assert paraproduct_kernel(P, float(x[70]), float(x[60]), float(x[90])) == pytest.approx(ell[60, 90])

    def test_degenerate_triple(self):
        P = make_paraproduct()
        with pytest.raises(DegenerateTripleError):
            paraproduct_kernel(P, 0.01, 0.02, 0.0)

    def test_zero_beta_gives_zero_operator(self):
        P = make_paraproduct(beta=None)
        grid = P.grid
        assert P.carleson.norm == 0.0
        assert np.all(P(make_bump(grid), make_bump(grid)).values == 0)
        assert ratio_over_sqrt_carleson(P, 1.0) == 0.0
        assert kernel_size_constant(P, n_samples=16) == 0.0

    def test_kernel_size_constant_is_finite(self):
        value = kernel_size_constant(make_paraproduct(), n_samples=32)
        assert 0 < value < math.inf

    def test_beta_on_other_grid(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        family0 = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        S = build_approx_identity(b, -2, 0)
        with pytest.raises(FamilyMismatchError):
            build_paraproduct(family0, S, S, GridFunction.constant(make_grid(4.0, 64)))

    def test_missing_scales(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        family0 = build_reproducing_family(build_approx_identity(b, -2, 0), min_rank_fraction=0.0)
        short = build_approx_identity(b, -1, 0)
        with pytest.raises(FamilyMismatchError):
            build_paraproduct(family0, short, short, GridFunction.constant(grid))

    def test_boundedness_ratio_is_finite(self):
        P = make_paraproduct()
        ratio = boundedness_ratio(P, trials=6)
        assert 0 < ratio < math.inf
        with pytest.raises(HolderTripleError):
            boundedness_ratio(P, p1=3.0, p2=3.0, p=2.0)


class TestTestingConditions:
    def test_report_shapes(self):
        P = make_paraproduct()
        probes = [make_bump(P.grid, c, 0.4) for c in (-0.5, 0.0, 0.5)]
        report = verify_testing_conditions(P, [0.25, 0.5, 1.0], probes)
        assert len(report.e0) == len(report.e1) == len(report.e2) == 3
        assert report.target > 0
        assert set(report.slopes) == {"e0", "e1", "e2"}

    def test_e0_reproduces_beta_pairing_scale(self):
        P = make_paraproduct()
        probes = [make_bump(P.grid, 0.0, 0.5)]
        report = verify_testing_conditions(P, [0.5, 1.0], probes, profile="smooth")
        assert report.profile == "smooth"
        assert all(math.isfinite(e) for e in report.e0 + report.e1 + report.e2)

    def test_domain_check(self):
        P = make_paraproduct()
        with pytest.raises(DomainTooSmallError):
            verify_testing_conditions(P, [2.0], [make_bump(P.grid)])
