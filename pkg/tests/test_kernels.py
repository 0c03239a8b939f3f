import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coagsed import (ConstantKernel, DomainError, RainKernel, ScaledKernel, SumKernel,
                     check_structural_assumptions, eval_kernel, truncate)
from coagsed.kernels import chi_ramp, fit_upper_bound_constant

volumes = st.floats(min_value=1e-4, max_value=1e4, allow_nan=False)
kernels = st.sampled_from([SumKernel(1.2), SumKernel(1.45), RainKernel(0.5), RainKernel(0.3),
                           ConstantKernel(2.0), ScaledKernel(0.5, SumKernel(1.3))])


class TestEvalKernel:
    def test_sum_kernel_unit_volumes(self):
        assert eval_kernel(SumKernel(2.0), 1.0, 1.0) == 2.0

    @pytest.mark.parametrize("v0", [1e-3, 0.7, 1.0, 42.0])
    def test_rain_kernel_vanishes_on_diagonal(self, v0):
        assert eval_kernel(RainKernel(0.5), v0, v0) == 0.0

    def test_rain_kernel_hand_value(self):
        expected = abs(2.0 - 1.0) * (4.0 ** (1 / 3) + 1.0) ** 2
        assert eval_kernel(RainKernel(0.5), 4.0, 1.0) == pytest.approx(expected, rel=1e-14)
        assert eval_kernel(RainKernel(0.5), 4.0, 1.0) == pytest.approx(6.6946, abs=1e-4)

    @pytest.mark.parametrize("v, w", [(0.0, 1.0), (1.0, -2.0), (float("nan"), 1.0)])
    def test_nonpositive_volume_rejected(self, v, w):
        with pytest.raises(DomainError):
            eval_kernel(SumKernel(1.2), v, w)

    def test_vectorized_call_keeps_shape(self):
        v = np.linspace(0.1, 2.0, 7)
        out = eval_kernel(SumKernel(1.2), v[:, None], v[None, :])
        assert out.shape == (7, 7)

    def test_scaled_kernel(self):
        k = ScaledKernel(0.25, SumKernel(2.0))
        assert eval_kernel(k, 1.0, 1.0) == 0.5
        assert k.K0 == 0.25


class TestTruncation:
    def test_inactive_cutoff(self):
        assert eval_kernel(truncate(SumKernel(2.0), 4.0), 1.0, 1.0) == 2.0

    def test_full_cutoff(self):
        assert eval_kernel(truncate(SumKernel(2.0), 4.0), 3.0, 2.0) == 0.0

    def test_ramp_midpoint(self):
        assert eval_kernel(truncate(SumKernel(2.0), 4.0), 2.0, 1.0) == 2.5

    @pytest.mark.parametrize("N", [0.0, -1.0])
    def test_nonpositive_N_rejected(self, N):
        with pytest.raises(DomainError):
            truncate(SumKernel(1.2), N)

    def test_ramp_shape(self):
        assert chi_ramp(np.array([0.0, 2.0, 3.0, 4.0, 9.0]), 4.0).tolist() == [1, 1, 0.5, 0, 0]

    @given(kernels, volumes, volumes, st.floats(min_value=1e-2, max_value=1e4))
    def test_sandwich(self, k, v, w, N):
        full = k(v, w)
        cut = truncate(k, N)(v, w)
        assert 0.0 <= cut <= full
        if v + w <= N / 2:
            assert cut == full
        if v + w >= N:
            assert cut == 0.0

    @given(kernels, volumes, volumes, st.floats(min_value=1e-2, max_value=1e4),
           st.floats(min_value=1.0, max_value=100.0))
    def test_cutoff_nondecreasing_in_N(self, k, v, w, N, grow):
        assert truncate(k, N)(v, w) <= truncate(k, N * grow)(v, w)


class TestKernelProperties:
    @given(kernels, volumes, volumes)
    def test_symmetric(self, k, v, w):
        assert k(v, w) == k(w, v)

    @given(kernels, volumes, volumes)
    def test_nonnegative(self, k, v, w):
        assert k(v, w) >= 0.0

    @given(st.floats(min_value=1.01, max_value=1.49), volumes, volumes,
           st.floats(min_value=0.01, max_value=100.0))
    def test_sum_kernel_homogeneity(self, gamma, v, w, lam):
        k = SumKernel(gamma)
        assert k(lam * v, lam * w) == pytest.approx(lam**gamma * k(v, w), rel=1e-12)


class TestStructuralAssumptions:
    def test_sum_kernel_clean(self):
        rep = check_structural_assumptions(SumKernel(1.2), 100_000, seed=1)
        assert rep["violations"] == []

    @pytest.mark.parametrize("k", [SumKernel(1.2), RainKernel(0.5)])
    def test_zero_samples_is_vacuous(self, k):
        assert check_structural_assumptions(k, 0)["violations"] == []

    def test_rain_kernel_with_fitted_K0(self):
        k = RainKernel(0.5)
        K0 = fit_upper_bound_constant(k, sample_count=50_000, seed=3)
        # the fitted constant admits the sample it came from
        rep = check_structural_assumptions(k, 50_000, seed=3, K0=K0)
        assert rep["bound_violations"] == []
        assert 0.0 < K0 <= 2.0

    def test_oversmall_K0_is_reported(self):
        rep = check_structural_assumptions(SumKernel(1.2), 1000, seed=0, K0=0.5)
        assert len(rep["bound_violations"]) == 1000

    def test_deterministic_in_seed(self):
        a = check_structural_assumptions(RainKernel(0.5), 2000, seed=7, K0=0.1)
        b = check_structural_assumptions(RainKernel(0.5), 2000, seed=7, K0=0.1)
        assert a == b

    def test_rain_kernel_bound_holds_with_K0_two(self):
        # |v^a - w^a| <= v^a + w^a and (v^(1/3) + w^(1/3))^2 <= 2(v^(2/3) + w^(2/3))
        rep = check_structural_assumptions(RainKernel(0.5), 20_000, seed=2)
        assert rep["bound_violations"] == []
        assert math.isclose(rep["gamma"], 0.5 + 2 / 3)
