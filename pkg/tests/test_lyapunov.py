import numpy as np
import pytest

from causalsvie import (InputCondition, PiPair, PyrTensor, QuadraticWeights, TimeGrid, TriField,
                        solve_lyapunov)
from causalsvie.forward import closed_loop_batch
from causalsvie.lyapunov import (assemble_F, ito_identity, operator_matrix, representation_gap,
                                 representation_lhs_exact, representation_rhs)

import oracles
from families import FRACTIONAL, MIXED, SMOOTH, Family, random_pair, zero_kernels


def setup(seed, N=6, **kw):
    fam = Family(seed, **kw)
    kernels, strat, inp = fam.build(N)
    return kernels, strat, inp, fam.weights(N)


class TestAssembly:
    @pytest.mark.parametrize("d, l", [(1, 1), (2, 1), (2, 3)])
    def test_F_matches_defining_formulas(self, d, l):
        N = 5
        kernels, strat, _, _ = setup(1, N, d=d, l=l, kind=MIXED)
        P = random_pair(2, N, d)
        h = kernels.grid.h
        vals = [getattr(kernels, n).values for n in "ABCD"]
        for k in range(N):
            L = P.P2.values[:, :, k + 1]
            F = assemble_F(P.P1, L, kernels, strat, k)
            F1, F2, F3 = oracles.F_terms(P.P1, L, *vals, strat.Xi, strat.Gamma.values, k, h)
            assert np.allclose(F.F1, 0.5 * (F1 + F1.T), atol=1e-13)
            assert np.allclose(F.F2, F2, atol=1e-13)
            assert np.allclose(F.F3, F3, atol=1e-13)

    def test_F_vanishes_for_zero_pair(self):
        kernels, strat, _, _ = setup(3, 4, d=2)
        F = assemble_F(np.zeros((5, 2, 2)), np.zeros((5, 5, 2, 2)), kernels, strat, 1)
        for term in (F.F1, F.F2, F.F3, F.H1, F.H2, F.H3):
            assert not np.any(term)


class TestSolver:
    @pytest.mark.parametrize("scheme", ["exact", "explicit"])
    def test_zero_weights(self, scheme):
        kernels, strat, inp, _ = setup(0, d=2, l=2)
        P = solve_lyapunov(kernels, strat, QuadraticWeights.zero(6, 2), kernels.grid, scheme=scheme)
        assert not np.any(P.P1) and not np.any(P.P2.values)

    def test_explicit_constant_example_matches_loops(self):
        N = 4
        g = TimeGrid(0, 1, N)
        fam = Family(0, kind=SMOOTH, strategy=False)
        kernels = fam.kernels(N)
        for name in "ABCD":
            getattr(kernels, name).values[np.tril_indices(N + 1, -1)] = 1.0
        Q = QuadraticWeights(np.ones((N + 1, 1, 1)), TriField.zeros(N, (1, 1)), PyrTensor.zeros(N, 1))
        strat = fam.strategy(N)
        P = solve_lyapunov(kernels, strat, Q, g, scheme="explicit")
        ref = oracles.lyapunov_explicit(*(getattr(kernels, n).values for n in "ABCD"), strat.Xi,
                                        strat.Gamma.values, Q.Q1, Q.Q2.values, Q.Q3.values, g.h, 0)
        assert np.allclose(P.P1, ref[0], rtol=1e-13, atol=1e-13)
        assert np.allclose(P.P2.values, ref[1], rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize("kind, d, l, start", [(SMOOTH, 2, 1, 0.0), (FRACTIONAL, 1, 2, 0.25)])
    def test_explicit_random_matches_loops(self, kind, d, l, start):
        kernels, strat, inp, Q = setup(4, 5, d=d, l=l, kind=kind, start_frac=start)
        g = kernels.grid
        P = solve_lyapunov(kernels, strat, Q, g, start=inp.start, scheme="explicit")
        ref = oracles.lyapunov_explicit(*(getattr(kernels, n).values for n in "ABCD"), strat.Xi,
                                        strat.Gamma.values, Q.Q1, Q.Q2.values, Q.Q3.values, g.h,
                                        inp.start)
        m0 = inp.start
        assert np.allclose(P.P1[m0:], ref[0][m0:], rtol=1e-13, atol=1e-13)
        assert np.allclose(P.P2.values[:, :, m0:], ref[1][:, :, m0:], rtol=1e-13, atol=1e-13)

    @pytest.mark.parametrize("scheme", ["exact", "explicit"])
    def test_decoupled_closed_forms(self, scheme):
        N, d = 5, 2
        fam = Family(5, d=d, l=1, kind=SMOOTH)
        kernels = zero_kernels(N, d, 1)
        Q = fam.weights(N)
        P = solve_lyapunov(kernels, fam.strategy(N), Q, kernels.grid, scheme=scheme)
        h, Q2, Q3 = kernels.grid.h, Q.Q2.values, Q.Q3.values
        exact = scheme == "exact"
        assert np.allclose(P.P1[:N], Q.Q1[:N], atol=1e-15)
        assert np.allclose(P.P1[N], 0.0 if exact else Q.Q1[N])
        for k in range(N):
            for i in range(k + 1, N + 1):
                for j in range(k + 1, N + 1):
                    m = min(i, j)
                    if i == j:
                        base = np.zeros((d, d))
                    else:
                        base = Q2[i, m] if i > j else Q2[j, m].T
                    levels = range(k, m) if exact else range(k + 1, m + 1)
                    ref = base + h * sum((Q3[i, j, r] for r in levels), np.zeros((d, d)))
                    assert np.allclose(P.P2[i, j, k], ref, atol=1e-14)

    def test_no_diffusion_no_feedback_keeps_pointwise_weight(self):
        N = 6
        fam = Family(6, d=2, l=2, kind=SMOOTH, strategy=False)
        kernels = fam.kernels(N)
        kernels.C.values[:] = 0.0
        kernels.D.values[:] = 0.0
        Q = fam.weights(N)
        for scheme in ("exact", "explicit"):
            P = solve_lyapunov(kernels, fam.strategy(N), Q, kernels.grid, scheme=scheme)
            assert np.allclose(P.P1[:N], Q.Q1[:N], atol=1e-14)

    @pytest.mark.parametrize("scheme", ["exact", "explicit"])
    def test_symmetry(self, scheme):
        kernels, strat, inp, Q = setup(7, 8, d=2, l=2, kind=MIXED)
        P = solve_lyapunov(kernels, strat, Q, kernels.grid, scheme=scheme)
        assert P.symmetry_residual() <= 1e-12
        M = operator_matrix(P, 0, kernels.grid)
        assert np.max(np.abs(M - M.T)) <= 1e-12

    def test_linear_in_weights(self):
        kernels, strat, inp, Q = setup(8, 6, d=2, l=1)
        Q2 = Family(9, d=2).weights(6)
        comb = QuadraticWeights(2 * Q.Q1 - Q2.Q1, 2 * Q.Q2 + (-1) * Q2.Q2,
                                PyrTensor(2 * Q.Q3.values - Q2.Q3.values, symmetric=True))
        Ps = [solve_lyapunov(kernels, strat, q, kernels.grid) for q in (Q, Q2, comb)]
        assert np.allclose(Ps[2].P1, 2 * Ps[0].P1 - Ps[1].P1, atol=1e-12)
        assert np.allclose(Ps[2].P2.values, 2 * Ps[0].P2.values - Ps[1].P2.values, atol=1e-12)

    def test_bad_scheme(self):
        kernels, strat, inp, Q = setup(0, 4)
        with pytest.raises(ValueError):
            solve_lyapunov(kernels, strat, Q, kernels.grid, scheme="implicit")


class TestRepresentation:
    def test_rhs_examples(self):
        N = 8
        g = TimeGrid(0, 1, N)
        P = PiPair.zeros(N, 1)
        P.P1[:] = 1.0
        assert representation_rhs(P, InputCondition(0, np.ones((N + 1, 1))), g) == pytest.approx(1.0)
        assert representation_rhs(random_pair(0, N), InputCondition(0, np.zeros((N + 1, 1))), g) == 0.0

    def test_rhs_is_operator_quadratic_form(self):
        kernels, strat, inp, Q = setup(10, 8, d=2, l=1, start_frac=0.25)
        g = kernels.grid
        P = solve_lyapunov(kernels, strat, Q, g, start=inp.start)
        M = operator_matrix(P, inp.start, g)
        z = inp.x[inp.start:].ravel()
        assert representation_rhs(P, inp, g) == pytest.approx(g.h * z @ M @ z, rel=1e-13)

    @pytest.mark.parametrize("seed, kind, d, l, start", [(0, SMOOTH, 1, 1, 0.0), (1, MIXED, 2, 1, 0.25),
                                                         (2, FRACTIONAL, 2, 2, 0.5)])
    def test_exact_scheme_matches_enumerated_cost(self, seed, kind, d, l, start):
        N = 6
        kernels, strat, inp, Q = setup(seed, N, d=d, l=l, kind=kind, start_frac=start)
        g = kernels.grid
        theta, _ = closed_loop_batch(kernels, strat, inp.x, oracles.rademacher_paths(N, g.h), inp.start)
        costs = [oracles.quadratic_cost(Q.Q1, Q.Q2.values, Q.Q3.values, th, g.h, inp.start)
                 for th in theta]
        ref = float(np.mean(costs))
        assert representation_lhs_exact(kernels, strat, Q, inp, g) == pytest.approx(ref, rel=1e-12)
        P = solve_lyapunov(kernels, strat, Q, g, start=inp.start)
        assert representation_rhs(P, inp, g) == pytest.approx(ref, rel=1e-12)

    def test_explicit_scheme_first_order(self):
        rep = representation_gap(Family(3, kind=SMOOTH).representation_builder(), 32, scheme="explicit")
        assert 0.8 <= rep.order <= 1.3

    def test_exact_scheme_gap_converged(self):
        rep = representation_gap(Family(4, d=2, l=2, kind=FRACTIONAL).representation_builder(), 8)
        assert rep.converged


class TestItoIdentity:
    def test_zero_pair(self):
        kernels, strat, inp, _ = setup(0, 8)
        value, cost = ito_identity(PiPair.zeros(8, 1), kernels, strat, inp, kernels.grid)
        assert value == 0.0 and cost == 0.0

    def test_converges_first_order(self):
        fam = Family(3, kind=SMOOTH)
        gaps = []
        for N in (32, 64):
            kernels, strat, inp = fam.build(N)
            value, cost = ito_identity(random_pair(3, N), kernels, strat, inp, kernels.grid)
            gaps.append(abs(value - cost))
        assert np.log2(gaps[0] / gaps[1]) >= 0.8
