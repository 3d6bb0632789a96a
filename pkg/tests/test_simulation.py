import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from src.core.config import simulation_config
from src.core.errors import ConfigError, InputError
from src.data.data_generator import (
    DgpSpec,
    generate,
    generator_description,
    replication_rng,
    simulate_factors,
)


def test_draws_are_keyed_by_seed_and_replication():
    spec = DgpSpec.panel(T=30, N=5, seed=9)
    a, b = generate(spec, 3), generate(spec, 3)
    assert_array_equal(a.panel.values, b.panel.values)
    assert_array_equal(a.units[2].y, b.units[2].y)
    assert not np.array_equal(generate(spec, 4).panel.values, a.panel.values)
    other_seed = DgpSpec.panel(T=30, N=5, seed=10)
    assert not np.array_equal(generate(other_seed, 3).panel.values, a.panel.values)


def test_replication_streams_do_not_depend_on_order():
    first = replication_rng(1, 5).standard_normal(4)
    replication_rng(1, 4).standard_normal(100)
    assert_array_equal(replication_rng(1, 5).standard_normal(4), first)


def test_bit_generator_comes_from_config(monkeypatch):
    assert isinstance(replication_rng(1, 0).bit_generator, np.random.Philox)
    philox = replication_rng(1, 0).standard_normal(3)
    monkeypatch.setattr(simulation_config, "bit_generator", "PCG64")
    assert isinstance(replication_rng(1, 0).bit_generator, np.random.PCG64)
    assert "PCG64" in generator_description()
    assert not np.array_equal(replication_rng(1, 0).standard_normal(3), philox)
    monkeypatch.setattr(simulation_config, "bit_generator", "default_rng")
    with pytest.raises(ConfigError):
        replication_rng(1, 0)


def test_spec_validation():
    with pytest.raises(InputError):
        DgpSpec(mode="panel", T=50, N=10, L=30)
    with pytest.raises(InputError):
        DgpSpec(mode="single", T=50, N=2, L=30)
    with pytest.raises(InputError):
        DgpSpec.single(T=50, L=50, J=3)
    with pytest.raises(InputError):
        DgpSpec.single(T=50, L=50, rho_f=1.0)
    with pytest.raises(InputError):
        DgpSpec.single(T=50, L=50, R=3)
    with pytest.raises(InputError):
        DgpSpec(mode="grid", T=50, L=50)
    with pytest.raises(InputError):
        generate(DgpSpec.single(T=20, L=20), -1)


def test_single_unit_truths():
    for J, truth in ((1, 0.5), (2, 2.0)):
        sample = generate(DgpSpec.single(T=40, L=30, J=J), 0)
        assert len(sample.units) == 1
        assert sample.panel.values.shape == (40, 30)
        assert sample.truth.delta_i[0] == truth
        assert sample.truth.delta == truth


def test_date_truths_follow_the_factors():
    sample = generate(DgpSpec.panel(T=25, N=4, J=1), 1)
    f = sample.factors
    assert_allclose(sample.truth.delta_t, 0.5 * (f[:, 0] + f[:, 1]), atol=1e-12)
    sample = generate(DgpSpec.panel(T=25, N=4, J=2), 1)
    f = sample.factors
    expected = 0.5 * (f[:, 0] + f[:, 1]) + 2 * 0.5 * (f[:, 0] ** 2 + f[:, 0] * f[:, 1])
    assert_allclose(sample.truth.delta_t, expected, atol=1e-12)


def test_panel_units_own_two_series():
    sample = generate(DgpSpec.panel(T=20, N=6), 0)
    assert sample.panel.L == 12
    for i, unit in enumerate(sample.units):
        assert_array_equal(unit.c, sample.panel.values[:, [2 * i, 2 * i + 1]])
        assert unit.unit_id == f"unit{i + 1}"
        assert unit.s is None


def test_single_unit_outcome_equation():
    # y - lambda*(d)'f + 0.5 c1 + 0.5 c2 is the outcome shock, which is standard normal
    sample = generate(DgpSpec.single(T=4000, L=10, J=2), 0)
    unit, f = sample.units[0], sample.factors
    loading = 0.5 + 0.5 * unit.d + 0.5 * unit.d ** 2
    shock = unit.y - loading * f.sum(axis=1) + 0.5 * unit.c.sum(axis=1)
    assert abs(shock.mean()) < 0.1
    assert abs(shock.std() - 1.0) < 0.1


def test_instrument_and_endogeneity():
    spec = DgpSpec.panel(T=2000, N=2, seed=1, endogeneity=0.8, with_instrument=True)
    sample = generate(spec, 0)
    unit = sample.units[0]
    assert unit.s is not None
    assert np.corrcoef(unit.s, unit.d)[0, 1] > 0.5


def test_stationary_factor_marginals():
    factors = simulate_factors(np.random.default_rng(0), 1_000_000, 2, 0.5)
    assert_allclose(factors.mean(axis=0), 0.5, atol=0.01)
    assert_allclose(factors.std(axis=0), 1.0, atol=0.01)


def test_factors_are_independent_over_time_when_rho_is_zero():
    factors = simulate_factors(np.random.default_rng(1), 1_000_000, 2, 0.0)
    centered = factors - factors.mean(axis=0)
    lag_one = (centered[1:] * centered[:-1]).mean(axis=0) / centered.var(axis=0)
    assert np.all(np.abs(lag_one) < 0.01)
