import numpy as np
import pytest

from causalsvie import (Constant, FractionalConvolution, Function, GridError, KernelError,
                        KernelSet, PiPair, PyrTensor, Sum, Tabulated, TimeGrid, TriField, Zero,
                        sample_kernel)
from causalsvie.kernels import fractional_cell_average

from families import random_pair


class TestTimeGrid:
    def test_nodes_and_step(self):
        g = TimeGrid(0.5, 2.0, 6)
        assert g.h == pytest.approx(0.25)
        assert g.nodes[0] == 0.5 and g.nodes[-1] == 2.0
        assert np.allclose(np.diff(g.nodes), 0.25)

    def test_last_node_is_T_exactly(self):
        g = TimeGrid(0.0, 0.3, 7)
        assert g.nodes[-1] == 0.3

    @pytest.mark.parametrize("args", [(0.0, 1.0, 0), (1.0, 1.0, 4), (0.0, np.inf, 4), (0, 1, 2.5)])
    def test_rejects_bad_grids(self, args):
        with pytest.raises(GridError):
            TimeGrid(*args)

    def test_from_nodes_rejects_non_uniform(self):
        with pytest.raises(GridError):
            TimeGrid.from_nodes([0.0, 0.1, 0.3])
        assert TimeGrid.from_nodes(np.linspace(0, 1, 5)) == TimeGrid(0.0, 1.0, 4)

    def test_refine(self):
        assert TimeGrid(0, 1, 4).refine().N == 8


class TestTriField:
    def test_out_of_domain_access(self):
        f = TriField.zeros(3, 2)
        f[2, 1] = [1.0, 2.0]
        assert np.all(f[2, 1] == [1.0, 2.0])
        with pytest.raises(GridError):
            f[1, 1]
        with pytest.raises(GridError):
            f[1, 2]
        g = TriField.zeros(3, diagonal=True)
        g[1, 1] = 3.0
        assert g[1, 1] == 3.0

    def test_storage_is_zero_outside_domain(self):
        f = TriField(np.ones((4, 4, 2)))
        assert np.all(f.values[np.triu_indices(4)] == 0)
        assert np.all(f.values[np.tril_indices(4, -1)] == 1)

    def test_arithmetic_and_transpose(self):
        f = TriField(np.arange(2 * 2 * 2 * 3, dtype=float).reshape(2, 2, 2, 3))
        assert f.transpose().shape == (3, 2)
        assert np.all((2 * f + f).values == 3 * f.values)


class TestPyrTensor:
    def test_mask_and_access(self):
        P = PyrTensor(np.ones((3, 3, 3, 1, 1)))
        assert P[2, 1, 1] == 1.0
        assert P.values[1, 2, 2, 0, 0] == 0.0
        with pytest.raises(GridError):
            P[1, 2, 2]

    def test_symmetrize(self):
        rng = np.random.default_rng(0)
        P = PyrTensor(rng.normal(size=(4, 4, 4, 2, 2)))
        assert P.symmetry_residual() > 0.1
        P.symmetrize()
        assert P.symmetry_residual() == 0.0


class TestPiPair:
    def test_p1_symmetrized(self):
        rng = np.random.default_rng(1)
        P = PiPair(rng.normal(size=(5, 2, 2)))
        assert P.symmetry_residual() <= 1e-12

    def test_p2dot_backward_difference(self):
        # P2 = t_k on the pyramid: interior derivative is 1
        N, h = 4, 0.25
        k = np.arange(N + 1) * h
        P2 = np.broadcast_to(k[None, None, :, None, None], (N + 1,) * 3 + (1, 1)).copy()
        P = PiPair(np.zeros((N + 1, 1, 1)), PyrTensor(P2, symmetric=True))
        dot = P.P2dot(h)
        assert dot[3, 4, 2, 0, 0] == pytest.approx(1.0)
        assert dot[3, 4, 3, 0, 0] == 0.0  # boundary level has no interior derivative

    def test_pi_norm_finite(self):
        P = random_pair(0, 8, d=2)
        assert np.isfinite(P.pi_norm(TimeGrid(0, 1, 8)))
        assert PiPair.zeros(4, 1).pi_norm(TimeGrid(0, 1, 4)) == 0.0


class TestSampling:
    def test_zero(self):
        assert not np.any(sample_kernel(Zero(2, 3), TimeGrid(0, 1, 5)).values)

    def test_constant_n2(self):
        f = sample_kernel(Constant(1.0), TimeGrid(0, 1, 2))
        assert f[1, 0] == f[2, 0] == f[2, 1] == 1.0

    def test_fractional_cell_average_example(self):
        f = sample_kernel(FractionalConvolution(1.0, 0.3), TimeGrid(0, 1, 2), "cell_avg")
        expected = 0.5**0.8 / (0.8 * 0.5)  # independent closed form
        assert f[1, 0][0, 0] == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(1.4358729, abs=1e-7)

    def test_fractional_cell_average_matches_quadrature(self):
        from scipy.integrate import quad
        grid = TimeGrid(0.0, 1.0, 8)
        t, h = grid.nodes, grid.h
        vals = fractional_cell_average(0.7, 0.3, grid)
        for i, j in [(1, 0), (5, 4), (8, 0), (8, 3)]:
            ref = quad(lambda s: 0.7 * (t[i] - s) ** -0.2, t[j], t[j + 1])[0] / h
            assert vals[i, j] == pytest.approx(ref, rel=1e-10)

    def test_fractional_modulation_callable(self):
        spec = FractionalConvolution(1.0, 0.4, lambda s: (1 + s)[:, None, None])
        f = sample_kernel(spec, TimeGrid(0, 1, 4), "point")
        assert f[3, 1][0, 0] == pytest.approx((0.5) ** -0.1 * 1.25)

    def test_cell_avg_equals_point_for_constant(self):
        g = TimeGrid(0, 2, 16)
        a = sample_kernel(Constant([[1.0, 2.0], [3.0, 4.0]]), g, "cell_avg").values
        b = sample_kernel(Constant([[1.0, 2.0], [3.0, 4.0]]), g, "point").values
        assert np.allclose(a, b, rtol=1e-6, atol=0)

    def test_function_and_sum(self):
        g = TimeGrid(0, 1, 4)
        f = Function(lambda T, S: (T - S)[..., None, None], 1, 1)
        s = sample_kernel(Sum([f, Constant(1.0)]), g)
        assert s[3, 1][0, 0] == pytest.approx(1.5)

    def test_tabulated_grid_mismatch(self):
        tab = Tabulated(np.ones((5, 5, 1, 1)))
        assert sample_kernel(tab, TimeGrid(0, 1, 4))[4, 0] == 1.0
        with pytest.raises(GridError):
            sample_kernel(tab, TimeGrid(0, 1, 8))

    @pytest.mark.parametrize("bad", [dict(c=1.0, H=1.0), dict(c=1.0, H=0.0), dict(c=np.nan, H=0.3)])
    def test_fractional_errors(self, bad):
        with pytest.raises(KernelError):
            FractionalConvolution(**bad)

    def test_unknown_mode(self):
        with pytest.raises(KernelError):
            sample_kernel(Constant(1.0), TimeGrid(0, 1, 2), "midpoint")


class TestKernelSet:
    def test_shapes_checked(self):
        with pytest.raises(KernelError):
            KernelSet(Zero(2, 2), Zero(2, 1), Zero(2, 2), Zero(1, 1))
        with pytest.raises(KernelError):
            Sum([Zero(1, 1), Zero(2, 2)])

    def test_sample_vector_terms(self):
        ks = KernelSet(Zero(2, 2), Zero(2, 1), Zero(2, 2), Zero(2, 1), b=Constant([1.0, 2.0]))
        gk = ks.sample(TimeGrid(0, 1, 3))
        assert gk.b.shape == (2,) and gk.sigma.shape == (2,)
        assert np.all(gk.b[2, 1] == [1.0, 2.0])
        assert not gk.homogeneous
        assert gk.scaled(0.0).homogeneous
