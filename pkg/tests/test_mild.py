import numpy as np
import pytest

from coagsed import DomainError, Field2D, Grid2D, ScaledKernel, SumKernel, init_field, moment_k
from coagsed.diagnostics import envelope_check
from coagsed.mild import (FieldHistory, damping_D, initial_iterate, mild_residual, picard_solve,
                          picard_step, rate_a)
from coagsed.transport import semigroup_apply


@pytest.fixture
def tiny_grid():
    return Grid2D.from_box((-2.0, 6.0), (2.0**-3, 2.0**3), 25, 2)


class TestRateA:
    def test_zero_field(self, small_grid):
        assert rate_a(Field2D.zeros(small_grid), 0.0, 1.0, SumKernel(1.2)) == 0.0

    def test_sum_kernel_moment_identity(self, small_grid, params):
        f = init_field(small_grid, params)
        y, v, g = small_grid.y[10], 2.0, 1.2
        expected = v**g * moment_k(f, 0.0, y) + moment_k(f, g, y)
        assert rate_a(f, y, v, SumKernel(g)) == pytest.approx(expected, rel=1e-13)

    def test_decay_in_y(self, params):
        grid = Grid2D.from_box((-30.0, 6.0), (2.0**-3, 2.0**3), 181, 4)
        f = init_field(grid, params)
        ys = grid.y[grid.y < -5]
        a = np.array([rate_a(f, y, 1.0, SumKernel(1.2)) for y in ys])
        # far below the curve the row mass decays like |y|^-m
        slope = np.polyfit(np.log(-ys), np.log(a), 1)[0]
        assert slope < -(params.m - 1)


class TestDamping:
    def test_empty_interval(self, small_grid, params):
        f = init_field(small_grid, params)
        assert damping_D(f, 0.5, 1.0, 0.2, 0.2, params, SumKernel(1.2)) == 1.0

    def test_zero_field(self, small_grid, params):
        assert damping_D(Field2D.zeros(small_grid), 0.5, 1.0, 0.0, 0.2, params,
                         SumKernel(1.2)) == 1.0

    def test_monotone_in_s(self, small_grid, params):
        f = init_field(small_grid, params)
        Ds = [damping_D(f, 0.9, 1.0, s, 0.1, params, SumKernel(1.2))
              for s in (0.0, 0.03, 0.06, 0.09)]
        assert all(0 < d <= 1 for d in Ds)
        assert np.all(np.diff(Ds) > 0)

    def test_multiplicative_along_characteristic(self, small_grid, params):
        f = init_field(small_grid, params)
        k = SumKernel(1.2)
        y, v, s, u, t = 0.9, 1.0, 0.0, 0.04, 0.1
        c = v**params.alpha
        y_u = c + np.exp((t - u) / params.epsilon) * (y - c)
        lhs = damping_D(f, y_u, v, s, u, params, k) * damping_D(f, y, v, u, t, params, k)
        assert lhs == pytest.approx(damping_D(f, y, v, s, t, params, k), rel=1e-8)

    def test_bad_order(self, small_grid, params):
        with pytest.raises(DomainError):
            damping_D(init_field(small_grid, params), 0.0, 1.0, 0.3, 0.2, params,
                      SumKernel(1.2))


class TestPicardStep:
    def test_zero_kernel_gives_transported_data(self, tiny_grid, params):
        t_grid = np.linspace(0.0, 0.2, 5)
        H0 = init_field(tiny_grid, params)
        prev = initial_iterate(tiny_grid, params, t_grid)
        out = picard_step(prev, H0, t_grid, ScaledKernel(0.0, SumKernel(1.2)), params)
        for k, t in enumerate(t_grid):
            ref = semigroup_apply(H0, t, params).values if t > 0 else H0.values
            assert np.allclose(out.values[k], ref, rtol=1e-12, atol=0)

    def test_rejects_unsorted_times(self, tiny_grid, params):
        t_grid = np.array([0.0, 0.2, 0.1])
        prev = FieldHistory.constant(init_field(tiny_grid, params), t_grid)
        with pytest.raises(DomainError):
            picard_step(prev, init_field(tiny_grid, params), t_grid, SumKernel(1.2), params)

    def test_iterates_nonnegative(self, tiny_grid, params):
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.2, max_iter=4, n_t=11,
                             keep_iterates=True)
        assert all(np.all(h.values >= 0) for h in state.iterates)

    def test_first_iterate_within_envelope(self, tiny_grid, params):
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.2, max_iter=1, n_t=11)
        H = state.solution
        for k in range(H.times.size):
            rep = envelope_check(H.field(k), H.times[k], params)
            assert rep["passed"], rep["max_ratio"]


class TestPicardSolve:
    def test_huge_tolerance_stops_after_one_iteration(self, tiny_grid, params):
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.1, tol=1e9, n_t=5)
        assert len(state.residuals) == 1 and state.converged

    def test_nonconvergence_is_a_status(self, tiny_grid, params):
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.2, tol=0.0, max_iter=3, n_t=5)
        assert not state.converged and state.status == "max_iter reached"
        assert len(state.residuals) == 3

    def test_nonpositive_horizon(self, tiny_grid, params):
        with pytest.raises(DomainError):
            picard_solve(params, tiny_grid, SumKernel(1.2), 0.0)

    def test_contraction_and_resubstitution(self, tiny_grid, params):
        tol = 1e-12
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.2, tol=tol, n_t=11)
        assert state.converged
        assert max(state.ratios) <= 0.5
        res = mild_residual(state.solution, init_field(tiny_grid, params), state.kernel, params)
        assert res < 10 * tol

    def test_converged_mass_drift_shrinks_with_time_step(self, params):
        grid = Grid2D.from_box((-2.0, 6.0), (2.0**-3, 2.0**3), 161, 2)
        drifts = []
        for n_t in (11, 21):
            m = picard_solve(params, grid, SumKernel(1.2), 0.05, n_t=n_t).mass_series()
            drifts.append(np.max(np.abs(m - m[0])) / m[0])
        # the left-endpoint Duhamel rule is first order in the time step
        assert drifts[1] < 1e-2
        assert 1.7 < drifts[0] / drifts[1] < 2.3

    def test_residual_rows(self, tiny_grid, params):
        state = picard_solve(params, tiny_grid, SumKernel(1.2), 0.1, max_iter=3, n_t=5)
        rows = state.residual_rows()
        assert [r[0] for r in rows] == [0, 1, 2]
        assert np.isnan(rows[0][2])
        assert rows[1][2] == pytest.approx(state.ratios[0])
        assert state.contraction_constant() > 0
