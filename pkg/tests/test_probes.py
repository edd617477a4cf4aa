import numpy as np
import pytest

from czlab.errors import ProbeSpecError
from czlab.grid_core import pairing
from czlab.probes import ProbeSpec, SmoothBump, gen_probes, refinement_ratio
from czlab.spaces import holder_norm

from .conftest import make_b, make_grid


class TestProbeSpec:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"family": "wavelet"},
            {"family": "bump", "count": -1},
            {"family": "holder_random", "params": {"delta": 0.0}},
            {"family": "holder_random", "params": {"delta": 1.5}},
        ],
    )
    def test_rejects_bad_spec(self, kwargs):
        with pytest.raises(ProbeSpecError):
            ProbeSpec(**kwargs)

    def test_dict_round_trip(self):
        spec = ProbeSpec("holder_random", count=3, seed=7, params={"delta": 0.25})
        assert ProbeSpec.from_dict(spec.to_dict()) == spec

    def test_from_dict_without_family(self):
        with pytest.raises(ProbeSpecError):
            ProbeSpec.from_dict({"count": 2})


class TestGenProbes:
    def test_zero_count(self, grid):
        assert gen_probes(ProbeSpec("bump", count=0), grid) == []

    @pytest.mark.parametrize("family", ["bump", "holder_random", "oscillation", "mean_zero_pair"])
    def test_same_seed_same_output(self, grid, family):
        spec = ProbeSpec(family, count=3, seed=11)
        first = gen_probes(spec, grid)
        second = gen_probes(spec, grid)
        assert len(first) == 3
        for a, b in zip(first, second):
            assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self, grid):
        a = gen_probes(ProbeSpec("bump", count=1, seed=1), grid)[0]
        b = gen_probes(ProbeSpec("bump", count=1, seed=2), grid)[0]
        assert not np.array_equal(a.values, b.values)

    def test_mean_zero_pair_against_b(self, grid):
        b = make_b(grid).b
        for phi in gen_probes(ProbeSpec("mean_zero_pair", count=4), grid, b):
            assert abs(pairing(b, phi)) <= 1e-10

    def test_holder_probe_is_windowed(self):
        grid = make_grid(4.0, 512)
        (f,) = gen_probes(ProbeSpec("holder_random", count=1, params={"delta": 0.3}), grid)
        assert np.all(f.values[np.abs(grid.points) >= 0.8 * grid.half_width] == 0)
        assert np.abs(f.values).max() == pytest.approx(1.0)


class TestSmoothBump:
    def test_derivative_matches_finite_difference(self):
        grid = make_grid(4.0, 1024)
        bump = SmoothBump(0.3, 1.2, amplitude=2.0)
        numeric = np.gradient(bump.on(grid).values.real, grid.spacing)
        exact = bump.derivative_on(grid).values.real
        assert np.abs(numeric - exact).max() <= 0.02 * np.abs(exact).max()

    def test_support(self, grid):
        values = SmoothBump(0.0, 0.5).on(grid).values
        assert np.all(values[np.abs(grid.points) >= 0.5] == 0)


class TestRefinementRatio:
    def test_half_holder_probe_blows_up_at_exponent_point_nine(self):
        grid = make_grid(4.0, 64)
        spec = ProbeSpec("holder_random", count=1, seed=3, params={"delta": 0.5})
        (f,) = gen_probes(spec, grid)
        assert np.isfinite(holder_norm(f, 0.5))
        assert refinement_ratio(spec, grid, levels=10, delta=0.9) > 10.0

    def test_lipschitz_probe_stays_bounded(self):
        grid = make_grid(4.0, 64)
        spec = ProbeSpec("holder_random", count=1, seed=3, params={"delta": 1.0})
        assert refinement_ratio(spec, grid, levels=10, delta=0.9) < 10.0

    def test_is_deterministic(self):
        grid = make_grid(4.0, 64)
        spec = ProbeSpec("holder_random", count=2, seed=5, params={"delta": 0.5})
        assert refinement_ratio(spec, grid, levels=2) == refinement_ratio(spec, grid, levels=2)

    @pytest.mark.parametrize("spec,levels", [(ProbeSpec("bump"), 2), (ProbeSpec("holder_random"), 0)])
    def test_rejects_bad_arguments(self, spec, levels):
        with pytest.raises(ProbeSpecError):
            refinement_ratio(spec, make_grid(4.0, 64), levels=levels)
