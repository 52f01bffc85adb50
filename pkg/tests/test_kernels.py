import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gfspec.kernels import (Z_GRID, FragmentationModel, OffspringDist, TotalRate,
                            age_structured_model, cell_division_model, critical_exponent,
                            mitosis_model, offspring_count, offspring_density_variation,
                            offspring_moment, self_similar_model)

LAWS = [OffspringDist.mitosis(), OffspringDist.uniform(), OffspringDist.power(1.0),
        OffspringDist.power(3.5), OffspringDist.binary(0.3)]


def test_moment_examples():
    assert offspring_moment(OffspringDist.mitosis(), 1.0) == 1.0
    assert offspring_moment(OffspringDist.mitosis(), 0.0) == 2.0
    assert offspring_moment(OffspringDist.uniform(), 2.0) == pytest.approx(2.0 / 3.0, abs=1e-13)


def test_critical_exponent_examples():
    assert critical_exponent(OffspringDist.mitosis(), 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)
    # 2 / (alpha + 1) = 1/2 and = 1
    assert critical_exponent(OffspringDist.uniform(), 0.5, 1.0) == pytest.approx(3.0, abs=1e-10)
    assert critical_exponent(OffspringDist.uniform(), 1.0, 1.0) == pytest.approx(1.0, abs=1e-10)


def test_critical_exponent_errors():
    with pytest.raises(ValueError):
        critical_exponent(OffspringDist.from_atoms([(1.0, 1.0)]), 0.5, 1.0)
    with pytest.raises(ValueError):
        critical_exponent(OffspringDist.uniform(), 2.0, 1.0)
    # p_alpha never gets as small as 1e-300 below alpha = 200
    with pytest.raises(ValueError):
        critical_exponent(OffspringDist.uniform(), 1e-300, 1.0)


def test_offspring_count_examples():
    assert offspring_count(OffspringDist.mitosis()) == 2.0
    assert offspring_count(OffspringDist.uniform()) == pytest.approx(2.0, abs=1e-13)
    assert offspring_count(OffspringDist.binary(0.3)) == 2.0


def test_density_variation_examples():
    assert offspring_density_variation(OffspringDist.uniform()) == 0.0
    # p(z) = 3z: total variation p(1) - p(0)
    assert offspring_density_variation(OffspringDist.power(1.0)) == pytest.approx(3.0, abs=1e-12)
    with pytest.raises(ValueError):
        offspring_density_variation(OffspringDist.mitosis())


def test_compatibility_enforced():
    with pytest.raises(ValueError):
        OffspringDist.from_atoms([(0.5, 1.0)])
    with pytest.raises(ValueError):
        OffspringDist.from_density(lambda z: np.ones_like(z))
    with pytest.raises(ValueError):
        OffspringDist.from_atoms([(0.5, 3.0), (1.0, -0.5)])
    with pytest.raises(ValueError):
        OffspringDist.from_atoms([(1.5, 2.0 / 3.0)])


def test_tabulated_density_matches_callable():
    with pytest.raises(ValueError):
        OffspringDist.from_table(4.0 * Z_GRID ** 2)  # trapezoid error ~6e-8
    p = OffspringDist.from_table(4.0 * Z_GRID ** 2, normalize=True)
    assert abs(offspring_moment(p, 1.0) - 1.0) <= 1e-12
    assert offspring_count(p) == pytest.approx(4.0 / 3.0, abs=1e-6)
    assert p(0.5) == pytest.approx(1.0, rel=1e-6)


def test_z0():
    assert OffspringDist.mitosis().z0 == 0.5
    assert OffspringDist.binary(0.3).z0 == 0.3
    assert OffspringDist.uniform().z0 == 0.0
    for p in LAWS:
        assert 0.0 <= p.z0 < 1.0


@pytest.mark.parametrize("p", LAWS, ids=lambda p: p.label)
def test_moment_monotone_in_alpha(p):
    alphas = np.linspace(0.0, 8.0, 33)
    m = np.array([offspring_moment(p, a) for a in alphas])
    assert np.all(np.diff(m) < 0.0)
    assert offspring_moment(p, 1.0) == pytest.approx(1.0, abs=1e-10)


@given(st.floats(0.05, 1.0))
def test_critical_exponent_at_least_one(ratio):
    a = critical_exponent(OffspringDist.uniform(), ratio, 1.0)
    assert a >= 1.0 - 1e-10
    assert abs(offspring_moment(OffspringDist.uniform(), a) - ratio) <= 1e-10


RATES = [TotalRate.constant(1.3), TotalRate.power(1.0), TotalRate.power(2.0, 0.5),
         TotalRate.bounded_power(1.0, 0.5, 2.0, 0.5, 2.0), TotalRate.exponential(3.0, 1.0),
         TotalRate.indicator(2.0, 0.0, 1.0)]


@pytest.mark.parametrize("K", RATES, ids=lambda K: K.kind)
def test_rate_sandwich(K):
    assert K.check_bounds(samples=1000)


def test_rate_constructors_reject():
    with pytest.raises(ValueError):
        TotalRate.constant(0.0)
    with pytest.raises(ValueError):
        TotalRate.power(-1.0)
    with pytest.raises(ValueError):
        TotalRate("constant", 2.0, 1.0)


def test_laplace_closed_forms():
    assert TotalRate.exponential(3.0).laplace(2.0) == pytest.approx(1.0, abs=1e-15)
    assert TotalRate.indicator(2.0, 0.0, 1.0).l1_norm() == 2.0
    assert TotalRate.constant(2.0).laplace(4.0) == 0.5


def test_model_validation():
    K = TotalRate.constant(1.0)
    assert mitosis_model(K).kind == "mitosis"
    assert cell_division_model(K, OffspringDist.uniform()).kind == "smooth_cell_division"
    with pytest.raises(ValueError):
        FragmentationModel("mitosis", K, OffspringDist.uniform())
    with pytest.raises(ValueError):
        FragmentationModel("self_similar", K, OffspringDist.uniform())
    with pytest.raises(ValueError):
        self_similar_model(1.0, OffspringDist.mitosis())
    with pytest.raises(ValueError):
        age_structured_model(TotalRate.exponential(0.5))
    with pytest.raises(ValueError):
        FragmentationModel("coagulation", K, None)


def test_model_growth_and_damping():
    x = np.linspace(0.0, 3.0, 7)
    ss = self_similar_model(1.0, OffspringDist.uniform())
    age = age_structured_model(TotalRate.exponential(3.0))
    assert np.array_equal(ss.tau(x), x) and ss.nu == 0.0
    assert np.array_equal(age.tau(x), np.ones_like(x)) and age.nu == 1.0
