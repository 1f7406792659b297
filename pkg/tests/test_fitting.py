import numpy as np
import pytest

from spindemon.fitting import (
    FitConvergenceError,
    fidelity_model,
    fit_fidelity_curve,
)

T_GRID = np.geomspace(3e-4, 2.5e-2, 12)
TRUTH = dict(prior=0.78, rate_gap=970.0, p_miss=0.003)


def synthetic_rows(shots=None, seed=None):
    """Data rows on the model manifold, optionally binomial-sampled."""
    probs = fidelity_model(T_GRID, TRUTH["prior"], TRUTH["rate_gap"], TRUTH["p_miss"])
    if shots is None:
        return [(t, p, 1.0) for t, p in zip(T_GRID, probs)]
    rng = np.random.default_rng(seed)
    counts = rng.binomial(shots, np.clip(probs, 0.0, 1.0))
    return [(t, int(k), shots) for t, k in zip(T_GRID, counts)]


class TestNoiseFreeFit:
    def test_exact_recovery(self):
        fit = fit_fidelity_curve(synthetic_rows())
        assert fit.prior == pytest.approx(TRUTH["prior"], abs=1e-7)
        assert fit.rate_gap == pytest.approx(TRUTH["rate_gap"], rel=1e-6)
        assert fit.missed_probability == pytest.approx(TRUTH["p_miss"], abs=1e-7)

    def test_residual_norm_tiny(self):
        fit = fit_fidelity_curve(synthetic_rows())
        assert fit.residual_norm < 1e-9

    def test_deterministic(self):
        rows = synthetic_rows(shots=10000, seed=1)
        a = fit_fidelity_curve(rows)
        b = fit_fidelity_curve(rows)
        assert (a.prior, a.rate_gap, a.missed_probability) == (
            b.prior,
            b.rate_gap,
            b.missed_probability,
        )


class TestNoisyFit:
    def test_recovery_within_errors(self):
        fit = fit_fidelity_curve(synthetic_rows(shots=10000, seed=2))
        # Single-seed smoke check at a loose multiple; the formal coverage
        # statement lives in the acceptance suite.
        assert abs(fit.prior - TRUTH["prior"]) < 4 * fit.std_errors["prior"]
        assert abs(fit.rate_gap - TRUTH["rate_gap"]) < 4 * fit.std_errors["rate_gap"]
        assert (
            abs(fit.missed_probability - TRUTH["p_miss"])
            < 4 * fit.std_errors["missed_probability"]
        )

    def test_zero_loss_data_consistent_with_zero(self):
        probs = fidelity_model(T_GRID, 0.78, 970.0, 0.0)
        rng = np.random.default_rng(3)
        rows = [(t, int(rng.binomial(20000, p)), 20000) for t, p in zip(T_GRID, probs)]
        fit = fit_fidelity_curve(rows)
        assert fit.missed_probability <= max(
            2.0 * fit.std_errors["missed_probability"], 1e-6
        )

    def test_std_errors_scale_with_shots(self):
        small = fit_fidelity_curve(synthetic_rows(shots=2000, seed=4))
        large = fit_fidelity_curve(synthetic_rows(shots=50000, seed=4))
        assert large.std_errors["prior"] < small.std_errors["prior"]
        assert large.std_errors["rate_gap"] < small.std_errors["rate_gap"]


class TestValidation:
    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_fidelity_curve(synthetic_rows()[:3])

    def test_bad_shots(self):
        rows = [(1e-3, 5.0, 0.0), (2e-3, 5.0, 10.0), (3e-3, 5.0, 10.0), (4e-3, 5.0, 10.0)]
        with pytest.raises(ValueError):
            fit_fidelity_curve(rows)

    def test_convergence_error_type(self):
        assert issubclass(FitConvergenceError, RuntimeError)
