import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from src.core.config import factor_config
from src.core.errors import DegenerateFactorError, InputError
from src.core.factor import (
    PanelMatrix,
    estimate_num_factors,
    extract_factors,
    factor_count_diagnostics,
)
from src.data.data_generator import DgpSpec, generate
from tests.conftest import planted_factor_panel


def test_extract_factors_normalization(planted_panel):
    x, _, _ = planted_panel
    fit = extract_factors(x, 2)
    assert fit.f_hat.shape == (x.T, 2)
    assert fit.lambda_hat.shape == (x.L, 2)
    assert_allclose(fit.f_hat.T @ fit.f_hat / x.T, np.eye(2), atol=1e-10)
    assert_allclose(fit.lambda_hat, x.values.T @ fit.f_hat / x.T, atol=1e-12)
    assert_allclose(fit.e_hat, x.values - fit.f_hat @ fit.lambda_hat.T, atol=1e-12)


def test_common_component_matches_truncated_svd(rng):
    x, _, _ = planted_factor_panel(rng, T=50, L=70, R=3, noise=0.3)
    u, s, vt = np.linalg.svd(x.values, full_matrices=False)
    for r in (1, 2, 3, 5):
        oracle = u[:, :r] * s[:r] @ vt[:r]
        assert_allclose(extract_factors(x, r).common_component, oracle, atol=1e-10)


def test_d_hat_holds_scaled_singular_values(planted_panel):
    x, _, _ = planted_panel
    fit = extract_factors(x, 2)
    s = np.linalg.svd(x.values, compute_uv=False)
    assert_allclose(np.diag(fit.d_hat), s[:2] / np.sqrt(x.T * x.L))


def test_largest_loading_is_positive(rng):
    x, _, _ = planted_factor_panel(rng, T=40, L=30, R=3, noise=0.1)
    fit = extract_factors(x, 3)
    for column in fit.lambda_hat.T:
        assert column[np.argmax(np.abs(column))] > 0


def test_negated_panel_keeps_loadings_and_negates_factors(planted_panel):
    x, _, _ = planted_panel
    fit = extract_factors(x, 2)
    negated = extract_factors(x.scaled(-1.0), 2)
    assert_allclose(negated.lambda_hat, fit.lambda_hat, atol=1e-10)
    assert_allclose(negated.f_hat, -fit.f_hat, atol=1e-10)


def test_positive_scaling_only_scales_loadings(planted_panel):
    x, _, _ = planted_panel
    fit = extract_factors(x, 2)
    scaled = extract_factors(x.scaled(3.0), 2)
    assert_allclose(scaled.f_hat, fit.f_hat, atol=1e-10)
    assert_allclose(scaled.lambda_hat, 3.0 * fit.lambda_hat, atol=1e-10)


def test_flipped_keeps_common_component(planted_panel):
    x, _, _ = planted_panel
    fit = extract_factors(x, 2)
    flipped = fit.flipped([1])
    assert_allclose(flipped.f_hat[:, 1], -fit.f_hat[:, 1])
    assert_allclose(flipped.common_component, fit.common_component, atol=1e-12)


def test_invalid_factor_count(planted_panel):
    x, _, _ = planted_panel
    with pytest.raises(InputError):
        extract_factors(x, 0)
    with pytest.raises(InputError):
        extract_factors(x, x.L + 1)


def test_factor_beyond_rank_is_degenerate(planted_panel):
    x, _, _ = planted_panel  # exact rank 2
    with pytest.raises(DegenerateFactorError):
        extract_factors(x, 3)


def test_zero_panel_is_degenerate():
    with pytest.raises(DegenerateFactorError):
        extract_factors(PanelMatrix(np.zeros((10, 6))), 1)


def test_panel_matrix_validation():
    values = np.ones((5, 4))
    values[2, 3] = np.nan
    with pytest.raises(InputError, match="date 2, series 3"):
        PanelMatrix(values)
    with pytest.raises(InputError):
        PanelMatrix(np.ones(5))
    with pytest.raises(InputError):
        PanelMatrix(np.ones((1, 4)))


def test_panel_matrix_is_read_only():
    x = PanelMatrix(np.arange(12.0).reshape(4, 3))
    with pytest.raises(ValueError):
        x.values[0, 0] = 1.0


def test_centered_panel_has_zero_means(planted_panel):
    x, _, _ = planted_panel
    assert_allclose(x.centered().values.mean(axis=0), 0.0, atol=1e-12)


def test_growth_ratio_finds_planted_rank(rng):
    x, _, _ = planted_factor_panel(rng, T=120, L=100, R=3, noise=0.3)
    result = factor_count_diagnostics(x)
    assert result.count == 3
    assert result.method == "gr"
    assert result.statistics.size == factor_config.default_r_max(120, 100)
    assert not result.ambiguous


def test_eigenvalue_ratio_finds_planted_rank(rng):
    x, _, _ = planted_factor_panel(rng, T=120, L=100, R=3, noise=0.3)
    assert estimate_num_factors(x, method="er") == 3


def test_exact_low_rank_panel_returns_rank(planted_panel):
    x, _, _ = planted_panel
    result = factor_count_diagnostics(x)
    assert result.count == 2
    assert np.isinf(result.statistics[1])


def test_rank_one_panel(rng):
    x = PanelMatrix(np.outer(rng.normal(size=30), rng.normal(size=20)))
    assert estimate_num_factors(x) == 1


def test_default_r_max():
    assert factor_config.default_r_max(200, 200) == 8
    assert factor_config.default_r_max(6, 10) == 3
    assert factor_config.default_r_max(3, 50) == 1


def test_invalid_r_max_and_method(planted_panel):
    x, _, _ = planted_panel
    with pytest.raises(InputError):
        factor_count_diagnostics(x, r_max=0)
    with pytest.raises(InputError):
        factor_count_diagnostics(x, r_max=x.L)
    with pytest.raises(InputError):
        factor_count_diagnostics(x, method="ic")


_NOISY_PANEL, _, _ = planted_factor_panel(np.random.default_rng(7), T=60, L=50, R=2, noise=0.5)
_NOISY_RESULT = factor_count_diagnostics(_NOISY_PANEL)


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e3))
def test_factor_count_is_scale_free(scale):
    result = factor_count_diagnostics(_NOISY_PANEL.scaled(scale))
    assert result.count == _NOISY_RESULT.count
    assert_allclose(result.statistics, _NOISY_RESULT.statistics, rtol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.permutations(list(range(50))))
def test_column_permutation_leaves_factors_unchanged(order):
    x = PanelMatrix(_NOISY_PANEL.values[:, order])
    base = extract_factors(_NOISY_PANEL, 2)
    permuted = extract_factors(x, 2)
    # Factors are fixed up to column signs
    signs = np.sign(np.sum(permuted.f_hat * base.f_hat, axis=0))
    assert_allclose(permuted.f_hat * signs, base.f_hat, atol=1e-8)
    assert factor_count_diagnostics(x).count == _NOISY_RESULT.count


def test_growth_ratio_recovers_two_factors_in_simulated_designs():
    hits = [
        estimate_num_factors(generate(DgpSpec.single(T=200, L=200, seed=31), replication).panel) == 2
        for replication in range(500)
    ]
    assert np.mean(hits) >= 0.99


def test_pure_noise_panel_still_returns_an_admissible_count(rng):
    x = PanelMatrix(rng.normal(size=(60, 40)))
    for method in ("gr", "er"):
        assert 1 <= estimate_num_factors(x, r_max=5, method=method) <= 5


def test_common_component_error_shrinks_with_panel_size():
    def relative_error(size):
        errors = []
        for replication in range(5):
            sample = generate(DgpSpec.single(T=size, L=size, seed=32), replication)
            truth = sample.factors @ sample.loadings.T
            estimate = extract_factors(sample.panel, 2).common_component
            errors.append(np.linalg.norm(estimate - truth) / np.linalg.norm(truth))
        return np.mean(errors)

    small, large = relative_error(50), relative_error(200)
    assert large < small
    assert large < 0.25
