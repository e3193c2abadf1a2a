import numpy as np
import pytest

from bgsindy import DatasetError, least_squares, residual


class TestLeastSquares:
    def test_identity_matrix(self, rng):
        y = rng.standard_normal(6)
        fit = least_squares(np.eye(6), y)
        assert np.allclose(fit.coefficients, y)
        assert fit.residual < 1e-28
        assert fit.rank == 6

    def test_column_of_ones_closed_form(self):
        phi = np.ones((2, 1))
        fit = least_squares(phi, np.array([1.0, 3.0]))
        assert np.isclose(fit.coefficients[0], 2.0)
        assert np.isclose(fit.residual, 1.0)

    def test_normal_equations_oracle_100_systems(self):
        # independent oracle: solve (phi^T phi) xi = phi^T y directly
        rng = np.random.default_rng(99)
        for _ in range(100):
            phi = rng.standard_normal((50, 5))
            y = rng.standard_normal(50)
            xi_oracle = np.linalg.solve(phi.T @ phi, phi.T @ y)
            fit = least_squares(phi, y)
            assert np.abs(fit.coefficients - xi_oracle).max() < 1e-8

    def test_rank_deficient_minimum_norm(self):
        phi = np.column_stack([np.ones(8), np.ones(8)])
        fit = least_squares(phi, np.full(8, 2.0))
        # minimum-norm solution splits the coefficient equally
        assert np.allclose(fit.coefficients, [1.0, 1.0])
        assert fit.rank == 1

    def test_errors(self):
        with pytest.raises(DatasetError):
            least_squares(np.ones((3, 0)), np.ones(3))
        with pytest.raises(DatasetError):
            least_squares(np.ones((2, 5)), np.ones(2))
        bad = np.ones((4, 2))
        bad[0, 0] = np.nan
        with pytest.raises(DatasetError):
            least_squares(bad, np.ones(4))


class TestResidual:
    def test_exact_solution_zero(self, rng):
        phi = rng.standard_normal((20, 3))
        xi = rng.standard_normal(3)
        assert residual(phi, xi, phi @ xi) < 1e-28

    def test_ones_case(self):
        assert np.isclose(residual(np.ones((2, 1)), np.array([2.0]),
                                   np.array([1.0, 3.0])), 1.0)

    def test_consistency_with_fit(self, rng):
        phi = rng.standard_normal((40, 4))
        y = rng.standard_normal(40)
        fit = least_squares(phi, y)
        assert np.isclose(residual(phi, fit.coefficients, y), fit.residual,
                          rtol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DatasetError):
            residual(np.ones((3, 2)), np.ones(3), np.ones(3))


class TestProperties:
    def test_nested_monotonicity(self, rng):
        # dropping a column from an optimal fit never decreases the residual
        for trial in range(20):
            phi = rng.standard_normal((60, 6))
            y = rng.standard_normal(60)
            full = least_squares(phi, y)
            for j in range(6):
                sub = least_squares(np.delete(phi, j, axis=1), y)
                assert sub.residual >= full.residual - 1e-12

    def test_column_scaling(self, rng):
        phi = rng.standard_normal((50, 4))
        y = rng.standard_normal(50)
        base = least_squares(phi, y)
        scaled = phi.copy()
        scaled[:, 2] *= 8.0
        fit = least_squares(scaled, y)
        expect = base.coefficients.copy()
        expect[2] /= 8.0
        assert np.allclose(fit.coefficients, expect, rtol=1e-9)
        assert np.isclose(fit.residual, base.residual, rtol=1e-9)
