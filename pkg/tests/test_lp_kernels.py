import math

import numpy as np
import pytest

from czlab.accretive import build_approx_identity, build_differences
from czlab.errors import InvalidArgumentError
from czlab.grid_core import DenseOperator, GridFunction, bump
from czlab.lp_kernels import (
    BilinearOperatorFamily,
    LinearKernelFamily,
    ao_majorant,
    envelope_slope,
    gaussian_family,
    kernel_ao_integral,
    operator_ao_decay,
    phi_family,
    product_family,
    verify_kernel_family,
)

from .conftest import make_b, make_bump, make_grid


def _compact_family() -> LinearKernelFamily:
    def evaluator(k, x, y):
        return 2.0**k * bump(2.0**k * (x - y))

    return LinearKernelFamily("bump", evaluator, (0, 1, 2), N=2.0, gamma=1.0)


class TestVerifyKernelFamily:
    def test_phi_family_is_its_own_majorant(self):
        report = verify_kernel_family(phi_family(2.0, 1.0, [0, 1, 2]), n_samples=128)
        assert report.kernel_class == "SLPK"
        assert report.A_size == pytest.approx(1.0)
        assert not report.compact
        assert report.backward_gamma < 1.0

    def test_gaussian_is_smooth_bilinear(self):
        report = verify_kernel_family(gaussian_family([0, 1]), n_samples=128)
        assert report.kernel_class == "SBLPK"
        assert 0 < report.A_fit < math.inf
        assert math.isfinite(report.A_x)

    def test_compact_support_gives_infinite_decay(self):
        report = verify_kernel_family(_compact_family(), n_samples=128)
        assert report.kernel_class == "LPK"
        assert report.compact
        assert report.N_fit == math.inf
        assert math.isnan(report.A_x)

    def test_product_family(self):
        fam = product_family(phi_family(2.0, 1.0, [0, 1, 2]), phi_family(3.0, 0.5, [1, 2, 3]))
        assert fam.scales == (1, 2)
        assert fam.N == 2.0
        assert fam.gamma == 0.5
        x = np.array([0.1])
        assert fam.evaluate(1, x, x, x)[0] == pytest.approx(2.0 * 2.0)


class TestEnvelopeSlope:
    def test_exponential_envelope(self):
        t = np.linspace(0.0, 4.0, 64)
        assert envelope_slope(t, np.exp(-2.0 * t)) == pytest.approx(-2.0)

    def test_too_few_points(self):
        assert math.isnan(envelope_slope(np.array([0.0, 1.0]), np.array([1.0, 0.0])))


class TestAOIntegral:
    def test_integral_is_non_negative(self):
        fam = gaussian_family([0, 2])
        assert kernel_ao_integral(fam, 0, 2, 0.0, 0.1, -0.2) >= 0.0

    def test_integral_vanishes_for_kernel_independent_of_y1(self):
        fam = gaussian_family([0])
        flat = type(fam)("flat", lambda k, x, y1, y2: np.exp(-((x - y2) ** 2)), (0,), 2.0, 1.0)
        assert kernel_ao_integral(flat, 0, 1, 0.0, 0.3, 0.1) == 0.0

    def test_majorant_decays_with_gap(self):
        fam = gaussian_family([0])
        near = ao_majorant(fam, 0, 1, 0.0, 0.0, 0.0)
        far = ao_majorant(fam, 0, 4, 0.0, 0.0, 0.0)
        assert far < near


class TestBilinearOperatorFamily:
    def test_identity_operators_give_weighted_product(self, grid):
        ident = {0: DenseOperator.identity(grid), 1: DenseOperator.identity(grid)}
        weight = make_bump(grid, 0.0, 2.0)
        fam = BilinearOperatorFamily(ident, ident, ident, weight)
        f1 = make_bump(grid, 0.2, 1.0)
        f2 = make_bump(grid, -0.1, 1.5)
        assert np.allclose(fam.apply(1, f1, f2).values, (weight * f1 * f2).values)

    def test_restrict_keeps_known_scales(self, grid):
        ident = {k: DenseOperator.identity(grid) for k in (0, 1, 2)}
        weights = {k: GridFunction.constant(grid, float(k)) for k in (0, 1, 2)}
        fam = BilinearOperatorFamily(ident, ident, ident, weights).restrict([1, 2, 5])
        assert fam.scales == [1, 2]
        assert sorted(fam.weight) == [1, 2]


class TestOperatorAODecay:
    def test_linear_mode_with_differences(self):
        grid = make_grid(4.0, 256)
        b = make_b(grid)
        D = build_differences(build_approx_identity(b, -2, 1))
        report = operator_ao_decay(D, D, b.b, mode="linear")
        assert report.hypotheses_ok
        assert report.gaps == [0, 1, 2]
        assert all(r >= 0 for r in report.ratios)

    def test_missing_cancellation_is_tagged(self):
        grid = make_grid(4.0, 128)
        b = make_b(grid)
        ident = {0: DenseOperator.identity(grid)}
        report = operator_ao_decay(ident, ident, b.b, mode="linear")
        assert not report.hypotheses_ok
        assert "Lambda_0(b) != 0" in report.tags

    def test_unknown_mode(self, grid):
        ident = {0: DenseOperator.identity(grid)}
        with pytest.raises(InvalidArgumentError):
            operator_ao_decay(ident, ident, make_b(grid).b, mode="trilinear")
