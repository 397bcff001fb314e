"""Solver tests: initializer, assembly, Newton loop, continuation."""

import numpy as np
import pytest

from sumhess.errors import ConeBreachError, DomainError
from sumhess.fdgrid import Grid, GridField
from sumhess.solver import (
    ProblemSpec,
    SolveConfig,
    _NodeState,
    assemble_newton,
    continuation_solve,
    initial_guess,
    isotropic_level,
    prolong,
    solve,
)
from sumhess.symfun import SumHessianOp


def grid2(cells):
    return Grid((-1.0, -1.0), (1.0, 1.0), (cells, cells))


def const_rhs(value):
    return lambda x, u, p: np.full(len(x), value)


U_STAR = staticmethod(lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0))


class TestIsotropicLevel:
    def test_quadratic_root(self):
        # c^2 + 2c = 6 has root -1 + sqrt(7)
        op = SumHessianOp(2, 2, 1.0)
        assert isotropic_level(op, 6.0) == pytest.approx(-1.0 + np.sqrt(7.0), abs=1e-10)

    def test_cubic_root(self):
        # c^3 + 3c^2 = 2 by bisection
        op = SumHessianOp(3, 3, 1.0)
        c = isotropic_level(op, 2.0)
        assert c**3 + 3 * c**2 == pytest.approx(2.0, abs=1e-9)


class TestInitialGuess:
    def test_admissible_for_constant_rhs_zero_boundary(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0))
        u0 = initial_guess(spec)
        state = _NodeState(spec, u0, check_rhs=False)
        assert state.worst_margin > 0
        # boundary data reproduced exactly
        assert np.abs(u0.values[0, :]).max() == 0.0

    def test_matches_boundary_trace(self):
        op = SumHessianOp(2, 2, 1.0)
        ustar = lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0), boundary=ustar)
        u0 = initial_guess(spec)
        bc = GridField.from_function(grid2(15), ustar)
        assert u0.values[0, 3] == pytest.approx(bc.values[0, 3], abs=1e-14)
        assert _NodeState(spec, u0, check_rhs=False).worst_margin > 0

    def test_rejects_nonpositive_rhs(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(-1.0))
        with pytest.raises(DomainError):
            initial_guess(spec)


class TestAssembly:
    def test_k1_jacobian_is_laplacian(self):
        # S_1 linearizes to the 5-point Laplacian
        op = SumHessianOp(2, 1, 1.0)
        g = grid2(7)
        spec = ProblemSpec(op, g, rhs=const_rhs(3.0))
        u = GridField.from_interior(g, np.zeros(g.shape))
        _, J = assemble_newton(spec, u)
        h2 = g.h[0] ** 2
        row = J.getrow(3 * 7 + 3).toarray().ravel()
        assert row[3 * 7 + 3] == pytest.approx(-4.0 / h2)
        assert row[3 * 7 + 4] == pytest.approx(1.0 / h2)
        assert row[2 * 7 + 3] == pytest.approx(1.0 / h2)

    def test_residual_constant_at_isotropic_start(self):
        # pure quadratic field (no lift): residual = S_k(cI) - f everywhere
        op = SumHessianOp(2, 2, 1.0)
        g = grid2(9)
        spec = ProblemSpec(
            op, g, rhs=const_rhs(3.0), boundary=lambda x: 0.5 * (x**2).sum(axis=-1)
        )
        c = 1.3
        u = GridField.from_function(g, lambda x: 0.5 * c * (x**2).sum(axis=-1))
        state = _NodeState(spec, u)
        expected = (c * c + 2 * c) - 3.0
        assert np.allclose(state.residual, expected, atol=1e-11)

    def test_cone_breach_raises(self):
        op = SumHessianOp(2, 2, 1.0)
        g = grid2(7)
        spec = ProblemSpec(op, g, rhs=const_rhs(3.0))
        u = GridField.from_function(g, lambda x: -0.5 * (x**2).sum(axis=-1))
        with pytest.raises(ConeBreachError):
            assemble_newton(spec, u)

    def test_jacobian_matches_directional_differences(self):
        op = SumHessianOp(2, 2, 1.0)
        g = grid2(11)
        spec = ProblemSpec(
            op, g, rhs=lambda x, u, p: 3.0 + 0.1 * (p**2).sum(axis=-1) + 0.05 * u
        )
        u0 = initial_guess(spec)
        state, J = assemble_newton(spec, u0)
        rng = np.random.default_rng(70)
        v = rng.normal(size=g.n_interior)
        errs = []
        for t in (1e-6, 1e-7):
            shifted = _NodeState(spec, u0.with_interior(u0.interior_flat + t * v), check_rhs=False)
            fd = (shifted.residual - state.residual) / t
            errs.append(np.abs(fd - J @ v).max() / (1.0 + np.abs(J @ v).max()))
        assert errs[0] <= 1e-3
        # error is O(t): shrinking t by 10 shrinks the error
        assert errs[1] <= 0.5 * errs[0]


class TestSolve:
    def test_manufactured_quadratic_machine_exact(self):
        op = SumHessianOp(2, 2, 1.0)
        ustar = lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0)
        for cells in (15, 31):
            g = grid2(cells)
            spec = ProblemSpec(op, g, rhs=const_rhs(3.0), boundary=ustar)
            rep = solve(spec, SolveConfig(rtol=1e-12))
            assert rep.converged
            exact = GridField.from_function(g, ustar)
            assert np.abs(rep.final_field.interior - exact.interior).max() <= 1e-11

    def test_k1_converges_in_one_step(self):
        op = SumHessianOp(2, 1, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0))
        rep = solve(spec, SolveConfig(rtol=1e-10))
        assert rep.converged
        assert rep.iterations == 1

    def test_gradient_rhs_converges_with_decreasing_residuals(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(
            op,
            grid2(31),
            rhs=lambda x, u, p: 3.0 + 0.1 * (p**2).sum(axis=-1),
            rhs_p=lambda x, u, p: 0.2 * p,
        )
        rep = solve(spec)
        assert rep.converged
        hist = rep.residual_history
        assert all(b < a for a, b in zip(hist[2:], hist[3:]))

    def test_maximum_principle_sign(self):
        # f > 0 with zero boundary data forces u <= 0 inside
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(31), rhs=const_rhs(3.0))
        rep = solve(spec)
        assert rep.converged
        assert rep.final_field.interior.max() < 0

    def test_iterates_stay_admissible(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0))
        rep = solve(spec)
        assert rep.converged
        assert all(m > 0 for m in rep.cone_margin_history)

    def test_converged_invariants(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0))
        cfg = SolveConfig()
        rep = solve(spec, cfg)
        state = _NodeState(spec, rep.final_field)
        assert rep.converged
        assert state.res_norm <= cfg.rtol * (1.0 + np.abs(state.f).max())
        assert state.worst_margin > 0

    def test_three_dim_manufactured(self):
        op = SumHessianOp(3, 3, 1.0)
        g = Grid((-1.0,) * 3, (1.0,) * 3, (7, 7, 7))
        ustar = lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0)
        spec = ProblemSpec(op, g, rhs=const_rhs(4.0), boundary=ustar)
        rep = solve(spec, SolveConfig(rtol=1e-12))
        assert rep.converged
        exact = GridField.from_function(g, ustar)
        assert np.abs(rep.final_field.interior - exact.interior).max() <= 1e-11

    def test_report_serializes(self):
        import json

        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(7), rhs=const_rhs(3.0))
        rep = solve(spec)
        text = json.dumps(rep.to_json_dict(), sort_keys=True)
        assert "converged" in text


class TestProlong:
    def test_exact_on_bilinear(self):
        g = grid2(7)
        f = GridField.from_function(g, lambda x: 1.0 + x[..., 0] - 2.0 * x[..., 1])
        fine = g.refine()
        pf = prolong(f, fine)
        exact = GridField.from_function(fine, lambda x: 1.0 + x[..., 0] - 2.0 * x[..., 1])
        assert np.abs(pf.values - exact.values).max() <= 1e-14

    def test_boundary_replacement(self):
        g = grid2(7)
        f = GridField.from_function(g, lambda x: (x**2).sum(axis=-1))
        fine = g.refine()
        pf = prolong(f, fine, boundary=lambda x: (x**2).sum(axis=-1))
        exact = GridField.from_function(fine, lambda x: (x**2).sum(axis=-1))
        assert np.abs(pf.values[0, :] - exact.values[0, :]).max() == 0.0

    def test_wrong_target_grid(self):
        g = grid2(7)
        f = GridField.from_function(g, lambda x: x[..., 0])
        with pytest.raises(ValueError):
            prolong(f, grid2(14))


class TestContinuation:
    def test_constant_path_identical_to_solve(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(op, grid2(15), rhs=const_rhs(3.0))
        direct = solve(spec)
        cont = continuation_solve(spec, path=lambda t: spec)
        assert cont.converged
        assert np.array_equal(cont.final_field.values, direct.final_field.values)

    def test_default_path_converges(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(
            op,
            grid2(15),
            rhs=lambda x, u, p: 3.0 + 0.1 * (p**2).sum(axis=-1),
            rhs_p=lambda x, u, p: 0.2 * p,
        )
        rep = continuation_solve(spec)
        assert rep.converged
        assert rep.extras["continuation_ts"][-1] == 1.0

    def test_rescues_stalled_direct_solve(self):
        # strongly gradient-dependent right side: the Newton path from the
        # admissible start exceeds the iteration budget, the homotopy does not
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(
            op,
            grid2(31),
            rhs=lambda x, u, p: 0.5 + 13.0 * (p**2).sum(axis=-1),
            rhs_p=lambda x, u, p: 26.0 * p,
        )
        cfg = SolveConfig(max_iter=10)
        direct = solve(spec, cfg)
        assert direct.status == "stalled"
        cont = continuation_solve(spec, config=cfg)
        assert cont.converged

    def test_failure_records_t(self):
        op = SumHessianOp(2, 2, 1.0)
        spec = ProblemSpec(
            op,
            grid2(15),
            rhs=lambda x, u, p: 0.5 + 40.0 * (p**2).sum(axis=-1),
            rhs_p=lambda x, u, p: 80.0 * p,
        )
        rep = continuation_solve(spec, config=SolveConfig(max_iter=12))
        assert rep.status != "converged"
        assert 0.0 < rep.extras["failed_t"] <= 1.0
