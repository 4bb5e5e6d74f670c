import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qforge.engineer import (
    BandpassSpec,
    DomainError,
    InfeasibleSpecError,
    alpha_for_min_purity,
    bandpass,
    engineer_training_set,
    filtered_ma_states,
)
from qforge.ensembles import ma_mean_purity, sample_ma
from qforge.qcore import DensityMatrix, concurrence, purity


V_C_BAND = BandpassSpec(p_min=0.68, p_max=0.96, c_min=0.0, c_max=0.86)


class TestAlphaInversion:
    def test_reference_value(self):
        # alpha = D(1 - p)/(D(Dp - 1) - D + 1) at D=4, p=0.68 -> 1.28/3.88
        assert alpha_for_min_purity(0.68, 4) == pytest.approx(1.28 / 3.88, abs=1e-12)

    def test_unit_alpha_point(self):
        # p = (3D - 1)/(D^2 + D) = 0.55 inverts to alpha = 1
        assert alpha_for_min_purity(0.55, 4) == pytest.approx(1.0, abs=1e-12)

    def test_out_of_domain(self):
        with pytest.raises(DomainError):
            alpha_for_min_purity(0.40, 4)
        with pytest.raises(DomainError):
            alpha_for_min_purity(7 / 16, 4)  # boundary excluded
        with pytest.raises(DomainError):
            alpha_for_min_purity(1.0, 4)

    def test_roundtrip_through_purity_expectation(self, rng):
        # inverse composed with the K=D purity expectation is the identity
        lo = (2 * 4 - 1) / 16
        for p_min in rng.uniform(lo + 1e-6, 1 - 1e-6, 100):
            alpha = alpha_for_min_purity(p_min, 4)
            assert alpha > 0
            assert ma_mean_purity(alpha, 4, 4) == pytest.approx(p_min, abs=1e-10)

    @given(st.floats(0.44, 0.999))
    @settings(max_examples=100, deadline=None)
    def test_roundtrip_property(self, p_min):
        alpha = alpha_for_min_purity(p_min, 4)
        assert ma_mean_purity(alpha, 4, 4) == pytest.approx(p_min, abs=1e-10)


class TestBandpassSpec:
    def test_validation(self):
        with pytest.raises(ValueError):
            BandpassSpec(0.9, 0.7, 0.0, 1.0)   # p_min > p_max
        with pytest.raises(ValueError):
            BandpassSpec(0.1, 0.9, 0.0, 1.0)   # below 1/D
        with pytest.raises(ValueError):
            BandpassSpec(0.5, 0.9, 0.5, 0.2)   # c_min > c_max
        with pytest.raises(ValueError):
            BandpassSpec(0.5, 0.9, 0.0, 1.2)


class TestBandpass:
    def test_bell_retained(self, bell):
        spec = BandpassSpec(0.9, 1.0, 0.9, 1.0)
        assert bandpass([bell], spec) == [bell]

    def test_mixed_rejected(self, mixed4):
        spec = BandpassSpec(0.5, 1.0, 0.0, 1.0)
        assert bandpass([mixed4], spec) == []

    def test_endpoints_inclusive(self, mixed4):
        # purity(I/4) = 0.25 and concurrence(I/4) = 0 exactly; closed
        # intervals keep boundary states
        spec = BandpassSpec(0.25, 0.25, 0.0, 0.0)
        assert bandpass([mixed4], spec) == [mixed4]

    def test_survivors_within_bounds(self, rng):
        states = [sample_ma(0.3394, 6, 4, rng) for _ in range(2000)]
        kept = bandpass(states, V_C_BAND)
        assert 0 < len(kept) < len(states)
        for s in kept:
            assert 0.68 <= purity(s) <= 0.96
            assert 0.0 <= concurrence(s) <= 0.86

    def test_idempotent(self, rng):
        states = [sample_ma(0.3394, 6, 4, rng) for _ in range(500)]
        once = bandpass(states, V_C_BAND)
        assert bandpass(once, V_C_BAND) == once

    def test_order_preserved(self, rng):
        states = [sample_ma(0.3394, 6, 4, rng) for _ in range(200)]
        kept = bandpass(states, V_C_BAND)
        indices = [states.index(s) for s in kept]
        assert indices == sorted(indices)


class TestEngineering:
    def test_exact_count_all_in_band(self, rng):
        states = engineer_training_set(V_C_BAND, k=6, n_target=3000, rng=rng)
        assert len(states) == 3000
        for s in states[::17]:
            assert 0.68 <= purity(s) <= 0.96
            assert concurrence(s) <= 0.86

    def test_measure_zero_band_infeasible(self, rng):
        with pytest.raises(InfeasibleSpecError):
            engineer_training_set(BandpassSpec(1.0, 1.0, 1.0, 1.0), k=4, n_target=10, rng=rng)

    def test_k_below_dimension_rejected(self, rng):
        with pytest.raises(ValueError):
            engineer_training_set(V_C_BAND, k=3, n_target=10, rng=rng)

    def test_weighted_toward_mixed(self, rng):
        # the engineered set sits below the band midpoint on average
        states = engineer_training_set(V_C_BAND, k=6, n_target=4000, rng=rng)
        mean_p = np.mean([purity(s) for s in states])
        assert mean_p < 0.5 * (0.68 + 0.96)

    def test_deterministic(self):
        a = engineer_training_set(V_C_BAND, 6, 50, np.random.default_rng(3))
        b = engineer_training_set(V_C_BAND, 6, 50, np.random.default_rng(3))
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.matrix, y.matrix)

    def test_filtered_ma_uses_given_alpha(self, rng):
        states = filtered_ma_states(0.6, V_C_BAND, 6, 200, rng)
        assert len(states) == 200
        assert all(isinstance(s, DensityMatrix) for s in states)
