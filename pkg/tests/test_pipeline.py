import numpy as np
import pytest
from numpy.testing import assert_allclose

from src.core.basis import MonomialBasis
from src.core.errors import InputError
from src.core.estimands import Scope, counterfactual_curve
from src.core.inference import KernelSpec
from src.core.pipeline import EstimationOptions, estimate_panel
from src.core.second_stage import UnitData
from src.data.data_generator import DgpSpec, generate


@pytest.fixture(scope="module")
def panel_sample():
    return generate(DgpSpec.panel(T=100, N=30, seed=3), 0)


def test_estimate_panel_produces_all_targets(panel_sample):
    options = EstimationOptions(kernels=(KernelSpec.hc(), KernelSpec.quadratic_spectral()), d_grid=[0.0, 1.0])
    result = estimate_panel(panel_sample.panel, panel_sample.units, MonomialBasis(1), options)
    assert result.N == 30
    assert result.count is not None and result.count.count == result.factor_fit.r_hat
    assert set(result.unit_intervals) == {"HC", "QS"}
    assert len(result.unit_intervals["HC"]) == 30
    assert sorted(result.date_intervals) == list(range(100))
    assert set(result.overall_intervals) == {"HC", "QS"}
    assert result.overall_intervals["HC"].point == result.estimands.delta
    assert_allclose(result.estimands.delta, np.mean(result.estimands.delta_i), rtol=1e-10, atol=1e-15)
    # overall and per-unit level and slope curves on a two-point grid
    assert len(result.curves) == (1 + 30) * 2 * 2


def test_fixed_factor_count_skips_selection(panel_sample):
    options = EstimationOptions(num_factors=3, dates=[0, 5], unit_inference=False)
    result = estimate_panel(panel_sample.panel, panel_sample.units, MonomialBasis(1), options)
    assert result.count is None
    assert result.factor_fit.r_hat == 3
    assert sorted(result.date_intervals) == [0, 5]
    assert result.unit_intervals == {}


def test_single_unit_has_only_unit_intervals():
    sample = generate(DgpSpec.single(T=80, L=60, seed=4), 0)
    result = estimate_panel(sample.panel, sample.units, MonomialBasis(1))
    assert len(result.unit_intervals["HC"]) == 1
    assert result.date_intervals == {}
    assert result.overall_intervals == {}


def test_centering_is_opt_in(panel_sample):
    plain = estimate_panel(panel_sample.panel, panel_sample.units, MonomialBasis(1), EstimationOptions(num_factors=2))
    centered = estimate_panel(
        panel_sample.panel, panel_sample.units, MonomialBasis(1), EstimationOptions(num_factors=2, center=True)
    )
    assert not np.allclose(plain.factor_fit.f_hat, centered.factor_fit.f_hat)
    assert_allclose(centered.factor_fit.f_hat.mean(axis=0), 0.0, atol=1e-10)


def test_input_checks(panel_sample):
    with pytest.raises(InputError):
        estimate_panel(panel_sample.panel, [], MonomialBasis(1))
    short = UnitData(y=np.ones(10), d=np.arange(10.0))
    with pytest.raises(InputError):
        estimate_panel(panel_sample.panel, [short], MonomialBasis(1))


def test_curve_dates_add_date_level_curves(panel_sample):
    options = EstimationOptions(num_factors=2, unit_inference=False, d_grid=[0.0, 1.0, 2.0], curve_dates=[0, 7])
    result = estimate_panel(panel_sample.panel, panel_sample.units, MonomialBasis(2), options)
    assert len(result.curves) == (1 + 30 + 2) * 3 * 2
    dated = [point for point in result.curves if point.scope == "date"]
    assert sorted({point.index for point in dated}) == [0, 7]
    levels = [point.value for point in dated if point.index == 7 and point.kind == "level"]
    expected = counterfactual_curve(
        Scope.DATE, [0.0, 1.0, 2.0], result.unit_fits, result.factor_fit, MonomialBasis(2),
        index=7, units=panel_sample.units,
    )
    assert_allclose(levels, [value for _, value in expected], rtol=1e-12, atol=1e-14)


def test_curve_dates_are_checked(panel_sample):
    basis = MonomialBasis(1)
    with pytest.raises(InputError, match="treatment grid"):
        estimate_panel(panel_sample.panel, panel_sample.units, basis, EstimationOptions(curve_dates=[1]))
    with pytest.raises(InputError, match="outside"):
        estimate_panel(
            panel_sample.panel, panel_sample.units, basis, EstimationOptions(d_grid=[0.0], curve_dates=[100])
        )


def test_iv_is_consistent_under_endogeneity():
    options = EstimationOptions(method="iv", num_factors=2, unit_inference=False)

    def median_error(T):
        errors = []
        for replication in range(30):
            spec = DgpSpec.single(T=T, L=100, endogeneity=0.8, with_instrument=True, seed=41)
            sample = generate(spec, replication)
            result = estimate_panel(sample.panel, sample.units, MonomialBasis(1), options)
            assert not result.unit_fits[0].weak_instrument
            errors.append(abs(result.estimands.delta_i[0] - sample.truth.delta_i[0]))
        return np.median(errors)

    short, long = median_error(100), median_error(1000)
    assert long < short
    assert long < 0.15
