import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from coagsed import ConstantKernel, DomainError, Field2D, Grid2D, RainKernel, SumKernel, init_field
from coagsed.coagulation import apply_bilinear, apply_symmetric, rate_a_rows
from coagsed.grid import row_moments
from coagsed.splitting import coag_substep


def row_mass_rate(rates, grid):
    return (rates.gain - rates.loss) @ (grid.v * grid.wv)


class TestSymmetric:
    def test_zero_field(self, small_grid):
        r = apply_symmetric(Field2D.zeros(small_grid), SumKernel(1.2))
        assert not r.gain.any() and not r.loss.any()

    @pytest.mark.parametrize("kernel", [SumKernel(1.2), RainKernel(0.5), ConstantKernel(1.0)])
    def test_row_mass_balance(self, small_grid, params, kernel):
        f = init_field(small_grid, params)
        r = apply_symmetric(f, kernel)
        lhs = row_mass_rate(r, small_grid)
        scale = (r.loss @ (small_grid.v * small_grid.wv))
        assert np.all(np.abs(lhs + r.boundary_mass_rate) <= 1e-12 * scale)

    def test_two_point_field(self):
        g = Grid2D.from_box((0.0, 1.0), (2.0**-3, 2.0**3), 2, 4)
        j0 = 8                                   # v0 = 0.5, 2 v0 = v[12]
        H = np.zeros((g.ny, g.nv))
        H[0, j0] = 3.0
        H[0, j0 + 4] = 1.0
        k = SumKernel(1.2)
        r = apply_symmetric(Field2D(H, g), k)
        n0 = 3.0 * g.wv[j0]
        expected = 0.5 * k(g.v[j0], g.v[j0]) * n0**2 / g.wv[j0 + 4]
        assert r.gain[0, j0 + 4] == pytest.approx(expected, rel=1e-13)
        assert not r.gain[1].any()

    def test_constant_kernel_number_decay(self):
        # total number obeys N' = -N^2 / 2 for K = 1 while products stay on the grid
        g = Grid2D.from_box((0.0, 1.0), (2.0**-8, 2.0**8), 2, 8)
        H = np.zeros((g.ny, g.nv))
        H[:, 8] = 1.0 / g.wv[8]
        N0 = 1.0
        dt, n = 1e-3, 1000
        for _ in range(n):
            H, _ = coag_substep(H, dt, ConstantKernel(1.0), g)
        N = H[0] @ g.wv
        assert N == pytest.approx(N0 / (1 + 0.5 * N0 * dt * n), rel=1e-6)
        assert H[0] @ (g.v * g.wv) == pytest.approx(g.v[8], rel=1e-12)

    def test_rows_commute_with_permutation(self, small_grid, params):
        f = init_field(small_grid, params)
        perm = np.random.default_rng(0).permutation(small_grid.ny)
        a = apply_symmetric(f, SumKernel(1.2)).gain[perm]
        b = apply_symmetric(f.with_values(f.values[perm]), SumKernel(1.2)).gain
        assert np.array_equal(a, b)

    @given(arrays(np.float64, (3, 17), elements=st.floats(0.0, 10.0)))
    def test_conservation_and_positivity_property(self, H):
        g = Grid2D.from_box((0.0, 1.0), (2.0**-2, 2.0**2), 3, 4)
        r = apply_symmetric(Field2D(H, g), SumKernel(1.3))
        assert np.all(r.gain >= 0) and np.all(r.loss >= 0)
        scale = r.loss @ (g.v * g.wv)
        assert np.all(np.abs(row_mass_rate(r, g) + r.boundary_mass_rate) <= 1e-12 * scale + 1e-300)


class TestBilinear:
    def test_zero_partner(self, small_grid, params):
        f = init_field(small_grid, params)
        r = apply_bilinear(f, Field2D.zeros(small_grid), SumKernel(1.2))
        assert not r.gain.any() and not r.loss.any()

    def test_equal_arguments_match_symmetric(self, small_grid, params):
        f = init_field(small_grid, params)
        a = apply_bilinear(f, f, SumKernel(1.2))
        b = apply_symmetric(f, SumKernel(1.2))
        assert np.array_equal(a.gain, b.gain) and np.array_equal(a.loss, b.loss)

    def test_grid_mismatch(self, small_grid, params):
        other = Grid2D.from_box((-2.0, 6.0), (2.0**-4, 2.0**4), 17, 4)
        with pytest.raises(DomainError):
            apply_bilinear(init_field(small_grid, params), init_field(other, params),
                           SumKernel(1.2))

    def test_dirac_columns_gain_near_double(self):
        g = Grid2D.from_box((0.0, 1.0), (2.0**-3, 2.0**3), 2, 4)
        j0 = 8
        a = np.zeros((g.ny, g.nv))
        a[:, j0] = 1.0
        r = apply_bilinear(Field2D(a, g), Field2D(a.copy(), g), SumKernel(1.2))
        assert np.flatnonzero(r.gain[0]).tolist() == [j0 + 4]

    def test_loss_uses_larger_partner_only(self, small_grid, params):
        f = init_field(small_grid, params)
        z = Field2D.zeros(small_grid)
        r = apply_bilinear(z, f, SumKernel(1.2))
        assert not r.loss.any()


class TestRateA:
    def test_sum_kernel_moment_identity(self, small_grid, params):
        f = init_field(small_grid, params)
        g = 1.2
        a = rate_a_rows(f, SumKernel(g))
        expected = small_grid.v[None, :] ** g * row_moments(f, 0.0)[:, None] \
            + row_moments(f, g)[:, None]
        assert np.allclose(a, expected, rtol=1e-13)

    def test_zero_field(self, small_grid):
        assert not rate_a_rows(Field2D.zeros(small_grid), SumKernel(1.2)).any()

    def test_loss_tail_small_for_decaying_field(self, small_grid, params):
        r = apply_symmetric(init_field(small_grid, params), SumKernel(1.2))
        assert np.all(r.loss_tail >= 0)
        assert r.loss_tail.sum() < 1e-3 * r.loss.sum()
