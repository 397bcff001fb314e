"""Weighted-quantity and refinement-stability tests."""

import numpy as np
import pytest

from sumhess.errors import DomainError
from sumhess.estimates import (
    EstimateReport,
    eigenvalue_test_function,
    log_power_test_function,
    pogorelov_quantity,
    quantity_tag,
    refinement_study,
    rhs_gradient_convexity_probe,
)
from sumhess.fdgrid import Grid, GridField, laplacian_field
from sumhess.solver import ProblemSpec
from sumhess.symfun import SumHessianOp

OP22 = SumHessianOp(2, 2, 1.0)


def paraboloid_field(cells=15, lo=-0.7, hi=0.7):
    # 0.5*(|x|^2 - 1) stays strictly negative on this box
    g = Grid((lo, lo), (hi, hi), (cells, cells))
    return GridField.from_function(g, lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0))


class TestPogorelovQuantity:
    def test_paraboloid_value_at_origin(self):
        u = paraboloid_field()
        q = pogorelov_quantity(u, 1.0)
        assert q.interior[7, 7] == pytest.approx(1.0, abs=1e-12)

    def test_exponent_zero_is_laplacian_bit_exact(self):
        rng = np.random.default_rng(80)
        g = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))
        u = GridField.from_interior(g, -rng.uniform(0.1, 1.0, size=(9, 9)), boundary=0.0)
        q = pogorelov_quantity(u, 0.0)
        assert np.array_equal(q.interior, laplacian_field(u).interior)

    def test_weight_vanishes_toward_boundary(self):
        g = Grid((-1.0, -1.0), (1.0, 1.0), (31, 31))
        u = GridField.from_function(g, lambda x: (x[..., 0] ** 2 - 1) * (x[..., 1] ** 2 - 1) * -0.2)
        q = pogorelov_quantity(u, 2.0)
        assert abs(q.interior[0, 15]) < abs(q.interior[15, 15])

    def test_positive_node_rejected(self):
        g = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))
        u = GridField.from_interior(g, np.full((9, 9), 0.3), boundary=0.0)
        with pytest.raises(DomainError):
            pogorelov_quantity(u, 1.0)

    def test_closed_form_supremum_of_quadratic(self):
        # (-u)*Lap(u) = (-u)*n*c, so the sup is n*c*sup(-u)
        c = 0.8
        g = Grid((-0.7, -0.7), (0.7, 0.7), (15, 15))
        u = GridField.from_function(g, lambda x: 0.5 * c * ((x**2).sum(axis=-1) - 1.0))
        q = pogorelov_quantity(u, 1.0)
        expected = 2.0 * c * (-u.interior).max()
        assert q.interior.max() == pytest.approx(expected, abs=1e-12)

    def test_suprema_weakly_decreasing_in_exponent(self):
        u = paraboloid_field()  # sup(-u) = 0.5 < 1
        sups = [pogorelov_quantity(u, b).interior.max() for b in (1.0, 2.0, 4.0)]
        assert sups[0] >= sups[1] >= sups[2]


class TestEigenvalueTestFunction:
    def test_unit_hessian_reduces_to_depth(self):
        u = paraboloid_field()
        phi, arg = eigenvalue_test_function(u, 1.0, 0.0, 0.0)
        assert arg == (7, 7)
        assert phi.interior[7, 7] == pytest.approx(0.5, abs=1e-12)

    def test_exponent_collapse_gives_top_eigenvalue(self):
        u = paraboloid_field()
        phi, _ = eigenvalue_test_function(u, 0.0, 0.0, 0.0)
        assert np.allclose(phi.interior, 1.0, atol=1e-10)

    def test_growing_weight_moves_argmax_outward(self):
        # slightly asymmetric bowl: argmax sits near the center for a = 0
        # and jumps to the most negative-x corner for large a
        g = Grid((-1.0, -1.0), (1.0, 1.0), (15, 15))
        u = GridField.from_function(
            g, lambda x: 0.5 * (x**2).sum(axis=-1) - 1.2 + 0.1 * x[..., 0]
        )
        _, arg0 = eigenvalue_test_function(u, 1.0, 0.0, 0.0)
        _, arg_big = eigenvalue_test_function(u, 1.0, 0.0, 12.0)
        center = np.array([7.0, 7.0])
        assert np.linalg.norm(np.array(arg_big) - center) > np.linalg.norm(
            np.array(arg0) - center
        )
        assert arg_big[0] == 0  # most negative x side
        assert arg_big[1] in (0, 14)


class TestLogPowerTestFunction:
    def test_shift_and_value_at_origin(self):
        u = paraboloid_field()
        for m in (1, 3, 10):
            res = log_power_test_function(u, OP22, m=m, big_n=0.0, f_sup=3.0)
            assert res.k0 == pytest.approx(6.0)
            expected = m * np.log(0.5) + np.log(2.0 * 7.0**m)
            assert res.field.interior[7, 7] == pytest.approx(expected, rel=1e-12)
            assert not res.flagged

    def test_single_power_reduction(self):
        # m=1, N=0: phi = log(-u) + log(sigma_1 + n*K0)
        u = paraboloid_field()
        res = log_power_test_function(u, OP22, m=1, big_n=0.0, f_sup=3.0)
        lap = laplacian_field(u).interior
        expected = np.log(-u.interior) + np.log(lap + 2.0 * 6.0)
        assert np.allclose(res.field.interior, expected, atol=1e-12)

    def test_gradient_term_additivity(self):
        u = paraboloid_field()
        base = log_power_test_function(u, OP22, m=4, big_n=0.0, f_sup=3.0)
        with_n = log_power_test_function(u, OP22, m=4, big_n=2.0, f_sup=3.0)
        from sumhess.fdgrid import gradient_field_array

        grad2 = (gradient_field_array(u) ** 2).sum(axis=-1)
        assert np.allclose(
            with_n.field.interior - base.field.interior, 0.5 * 4 * 2.0 * grad2, atol=1e-12
        )

    def test_large_power_argmax_dominated_by_top_eigenvalue(self):
        g = Grid((-0.7, -0.7), (0.7, 0.7), (15, 15))
        u = GridField.from_function(
            g,
            lambda x: 0.5 * ((x**2).sum(axis=-1) - 1.0)
            + 0.02 * np.sin(2.0 * x[..., 0]) * np.sin(1.0 * x[..., 1]),
        )
        res = log_power_test_function(u, OP22, m=64, big_n=0.0, f_sup=3.0)
        from sumhess.fdgrid import eigh_batch, hessian_field_array

        lams, _ = eigh_batch(hessian_field_array(u).reshape(-1, 2, 2))
        kap_max = lams[:, 0].reshape(u.grid.shape) + res.k0
        limit_field = np.log(-u.interior) + np.log(kap_max)
        limit_arg = np.unravel_index(int(np.argmax(limit_field)), u.grid.shape)
        assert res.argmax == tuple(int(i) for i in limit_arg)

    def test_vanishing_u_rejected(self):
        g = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))
        vals = -np.ones((9, 9))
        vals[4, 4] = 0.0
        u = GridField.from_interior(g, vals, boundary=0.0)
        with pytest.raises(DomainError):
            log_power_test_function(u, OP22, m=2, big_n=0.0, f_sup=3.0)

    def test_k1_rejected(self):
        u = paraboloid_field()
        with pytest.raises(ValueError):
            log_power_test_function(u, SumHessianOp(2, 1, 1.0), m=2, big_n=0.0, f_sup=3.0)


class TestGradientConvexityProbe:
    def test_convex_declaration_confirmed(self):
        # f = 3 + 0.1|p|^2 has f^{1/2} = |(sqrt3, sqrt0.1 p)|, convex in p
        grid = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))
        spec = ProblemSpec(OP22, grid, rhs=lambda x, u, p: 3.0 + 0.1 * (p**2).sum(axis=-1))
        margin = rhs_gradient_convexity_probe(spec, np.random.default_rng(0))
        assert margin >= -1e-12

    def test_nonconvex_rhs_disproved(self):
        # sqrt(1 + g2 - 0.24 g2^2) bends concave along rays inside |p|<=1
        grid = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))

        def rhs(x, u, p):
            g2 = (p**2).sum(axis=-1)
            return 1.0 + g2 - 0.24 * g2 * g2

        spec = ProblemSpec(OP22, grid, rhs=rhs)
        margin = rhs_gradient_convexity_probe(
            spec, np.random.default_rng(1), samples=500, radius=1.0
        )
        assert margin < -1e-6


class TestQuantityTag:
    def test_tags(self):
        assert quantity_tag(1.0) == "linear"
        assert quantity_tag(1.1) == "near_linear"
        assert quantity_tag(2.0) == "power"
        assert quantity_tag(8.0) == "power"


class TestRefinementStudy:
    @staticmethod
    def quadratic_problem(cells=9):
        grid = Grid((-1.0, -1.0), (1.0, 1.0), (cells, cells))
        ustar = lambda x: 0.5 * ((x**2).sum(axis=-1) - 2.5)
        return ProblemSpec(
            OP22, grid, rhs=lambda x, u, p: np.full(len(x), 3.0), boundary=ustar
        )

    def test_quadratic_fixture_supremum_level_independent(self):
        # the quadratic solution is stencil-exact at every level, so the
        # core suprema agree to machine precision
        rep = refinement_study(self.quadratic_problem(), 1.0, levels=3)
        sups = [e["sup"] for e in rep.per_refinement]
        assert rep.stable
        # the core region grows with refinement, so suprema are only
        # comparable up to the argmax drift of the exact field
        assert abs(sups[-1] - sups[-2]) <= 0.01 * sups[-1]

    def test_stability_monotone_under_level_extension(self):
        rep3 = refinement_study(self.quadratic_problem(), 1.0, levels=3)
        rep4 = refinement_study(self.quadratic_problem(), 1.0, levels=4)
        assert not (rep3.stable and not rep4.stable)

    def test_gradient_rhs_study_is_stable(self):
        grid = Grid((-1.0, -1.0), (1.0, 1.0), (9, 9))
        spec = ProblemSpec(
            OP22,
            grid,
            rhs=lambda x, u, p: 3.0 + 0.1 * (p**2).sum(axis=-1),
            rhs_p=lambda x, u, p: 0.2 * p,
        )
        rep = refinement_study(spec, 1.0, levels=3)
        assert rep.stable
        assert len(rep.per_refinement) == 3

    def test_report_round_trips_to_dict(self):
        rep = refinement_study(self.quadratic_problem(), 2.0, levels=2)
        d = rep.to_dict()
        assert d["quantity"] == "power"
        assert isinstance(d["per_refinement"], list)
        assert EstimateReport(**d).to_dict() == d
