import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.basis import MonomialBasis
from src.core.errors import InputError
from src.core.estimands import (
    Scope,
    ame_overall,
    ame_time,
    ame_unit,
    compute_estimands,
    counterfactual_curve,
    marginal_effect_curve,
    z_matrix,
    z_vector,
)
from src.core.factor import extract_factors
from src.core.second_stage import UnitData, fit_units
from tests.conftest import noiseless_panel, planted_factor_panel


def _noisy_panel(rng, T=90, N=6, J=2):
    x, _, _ = planted_factor_panel(rng, T=T, L=40, R=2, noise=0.3)
    fit = extract_factors(x, 2)
    basis = MonomialBasis(J)
    units = [
        UnitData(
            y=rng.normal(size=T),
            d=rng.normal(size=T),
            c=rng.normal(size=(T, 2)),
            unit_id=f"u{i}",
        )
        for i in range(N)
    ]
    return fit, basis, units, fit_units(fit, units, basis)


def test_z_vector_layout():
    f_t = np.array([0.5, -2.0])
    z = z_vector(f_t, 3.0, MonomialBasis(2), d_c=2)
    assert_allclose(z, [0, 0, 0.5, -2.0, 3.0, -12.0, 0, 0])


def test_z_matrix_rows_match_z_vector(noiseless):
    _, fit, basis, units, _ = noiseless
    unit = units[1]
    z = z_matrix(fit, unit.d, basis, unit.d_c)
    for t in (0, 7, fit.T - 1):
        assert_allclose(z[t], z_vector(fit.f_hat[t], unit.d[t], basis, unit.d_c))
    with pytest.raises(InputError):
        z_matrix(fit, unit.d[:-1], basis, unit.d_c)


def test_noiseless_unit_effects_are_exact(rng):
    _, fit, basis, units, gammas = noiseless_panel(rng, J=2)
    unit_fits = fit_units(fit, units, basis)
    estimands = compute_estimands(fit, units, unit_fits, basis)
    for i, (unit, gamma) in enumerate(zip(units, gammas)):
        truth = gamma @ z_matrix(fit, unit.d, basis, unit.d_c).mean(axis=0)
        assert_allclose(estimands.delta_i[i], truth, atol=1e-10)


def test_overall_effect_is_mean_of_unit_effects(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng)
    estimands = compute_estimands(fit, units, unit_fits, basis)
    assert estimands.delta == np.mean(estimands.delta_i)
    assert estimands.delta_t.shape == (fit.T,)
    assert estimands.unit_ids == tuple(u.unit_id for u in units)
    assert estimands.r_hat == 2


def test_date_effect_uses_gamma_bar(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng)
    estimands = compute_estimands(fit, units, unit_fits, basis)
    gamma_bar = np.mean([uf.gamma_hat for uf in unit_fits], axis=0)
    t = 11
    z_bar_t = np.mean([z_vector(fit.f_hat[t], u.d[t], basis, u.d_c) for u in units], axis=0)
    assert_allclose(estimands.delta_t[t], ame_time(gamma_bar, z_bar_t), atol=1e-12)


def test_estimands_invariant_to_factor_sign_flips(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng)
    base = compute_estimands(fit, units, unit_fits, basis)
    flipped_fit = fit.flipped([0, 1])
    flipped = compute_estimands(flipped_fit, units, fit_units(flipped_fit, units, basis), basis)
    assert_allclose(flipped.delta_i, base.delta_i, atol=1e-10)
    assert_allclose(flipped.delta_t, base.delta_t, atol=1e-10)
    assert_allclose(flipped.delta, base.delta, atol=1e-10)


def test_small_estimand_errors(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, N=2)
    with pytest.raises(InputError):
        ame_unit(unit_fits[0], np.zeros(3))
    with pytest.raises(InputError):
        ame_time(np.zeros(3), np.zeros(4))
    with pytest.raises(InputError):
        ame_overall([])
    with pytest.raises(InputError):
        compute_estimands(fit, units[:1], unit_fits, basis)


def test_marginal_effect_curve_is_derivative_of_counterfactual_curve(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, J=2)
    grid = np.linspace(-1.5, 1.5, 13)
    step = 1e-5
    for scope, index in ((Scope.OVERALL, None), (Scope.UNIT, 2), (Scope.DATE, 5)):
        up = counterfactual_curve(scope, grid + step, unit_fits, fit, basis, index)
        down = counterfactual_curve(scope, grid - step, unit_fits, fit, basis, index)
        numeric = (np.array([v for _, v in up]) - np.array([v for _, v in down])) / (2 * step)
        analytic = np.array([v for _, v in marginal_effect_curve(scope, grid, unit_fits, fit, basis, index)])
        assert_allclose(numeric, analytic, rtol=1e-6, atol=1e-8)


def test_linear_basis_gives_flat_marginal_effects(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, J=1)
    curve = marginal_effect_curve("unit", [-1.0, 0.0, 2.0], unit_fits, fit, basis, index=0)
    values = [v for _, v in curve]
    assert_allclose(values, values[0], rtol=1e-10, atol=1e-14)
    gamma = unit_fits[0].gamma_hat
    assert_allclose(values[0], gamma[2:4] @ fit.f_hat.mean(axis=0), rtol=1e-10, atol=1e-14)


def test_observed_controls_shift_the_curve(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, J=1)
    zero = counterfactual_curve(Scope.UNIT, [0.0, 1.0], unit_fits, fit, basis, 1, units)
    observed = counterfactual_curve(Scope.UNIT, [0.0, 1.0], unit_fits, fit, basis, 1, units, "observed")
    shift = unit_fits[1].gamma_hat[-2:] @ units[1].c.mean(axis=0)
    assert_allclose(np.array(observed)[:, 1] - np.array(zero)[:, 1], shift, atol=1e-12)


def test_curve_errors(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, N=2)
    with pytest.raises(InputError):
        counterfactual_curve(Scope.UNIT, [], unit_fits, fit, basis, 0)
    with pytest.raises(InputError):
        counterfactual_curve(Scope.UNIT, [0.0], unit_fits, fit, basis, 5)
    with pytest.raises(InputError):
        counterfactual_curve(Scope.DATE, [0.0], unit_fits, fit, basis, fit.T)
    with pytest.raises(InputError):
        counterfactual_curve(Scope.OVERALL, [0.0], unit_fits, fit, basis, controls="observed")
    with pytest.raises(ValueError):
        counterfactual_curve("region", [0.0], unit_fits, fit, basis)


def test_iv_fits_feed_the_estimands(rng):
    x, _, _ = planted_factor_panel(rng, T=80, L=30, R=2, noise=0.2)
    fit = extract_factors(x, 2)
    basis = MonomialBasis(1)
    units = []
    for i in range(3):
        d = rng.normal(size=80)
        units.append(UnitData(y=rng.normal(size=80), d=d, s=d + rng.normal(size=80), unit_id=str(i)))
    estimands = compute_estimands(fit, units, fit_units(fit, units, basis, method="iv"), basis)
    assert estimands.method == "iv"
    assert np.all(np.isfinite(estimands.delta_i))


def test_shifting_the_treatment_shifts_the_curves(rng):
    fit, basis, units, unit_fits = _noisy_panel(rng, J=2)
    shift = 1.7
    moved = [UnitData(y=u.y, d=u.d + shift, c=u.c, unit_id=u.unit_id) for u in units]
    moved_fits = fit_units(fit, moved, basis)
    grid = np.linspace(-1.0, 1.0, 5)
    for scope, index in ((Scope.OVERALL, None), (Scope.UNIT, 3), (Scope.DATE, 11)):
        for curve in (counterfactual_curve, marginal_effect_curve):
            base = [v for _, v in curve(scope, grid, unit_fits, fit, basis, index)]
            shifted = [v for _, v in curve(scope, grid + shift, moved_fits, fit, basis, index)]
            assert_allclose(shifted, base, rtol=1e-8, atol=1e-8)
    assert_allclose(
        compute_estimands(fit, moved, moved_fits, basis).delta_i,
        compute_estimands(fit, units, unit_fits, basis).delta_i,
        rtol=1e-8,
        atol=1e-10,
    )
