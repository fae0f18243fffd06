import numpy as np
import pytest

from errors import CapacityError, ParameterDomainError, ScenarioError
from source_model import (
    ConsumerClass,
    Population,
    build_generator_multi,
    build_generator_single,
    mean_demand,
    peak_demand,
    stationary_by_linear_solve,
    stationary_distribution,
)


def test_consumer_rejects_nonpositive_rates():
    with pytest.raises(ParameterDomainError):
        ConsumerClass(lam=0.0, mu=1.0, peak_demand=1.0)
    with pytest.raises(ParameterDomainError):
        ConsumerClass(lam=0.3, mu=-1.0, peak_demand=1.0)
    with pytest.raises(ParameterDomainError):
        ConsumerClass(lam=0.3, mu=1.0, peak_demand=float("nan"))


def test_population_validation():
    consumer = ConsumerClass.normalized(0.3)
    with pytest.raises(ParameterDomainError):
        Population(classes=(consumer,), counts=(1, 2))
    with pytest.raises(ParameterDomainError):
        Population(classes=(consumer,), counts=(0,))
    with pytest.raises(ParameterDomainError):
        Population(classes=(consumer,), counts=(-1,))


def test_mean_demand_single_consumer():
    pop = Population.single(1, ConsumerClass.normalized(0.3))
    assert mean_demand(pop) == pytest.approx(0.3 / 1.3, abs=1e-5)
    assert peak_demand(pop) == 1.0


def test_stationary_distribution_is_binomial():
    consumer = ConsumerClass(lam=0.5, mu=2.0, peak_demand=1.0)
    pi = stationary_distribution(1, consumer)
    assert pi == pytest.approx([0.8, 0.2])
    pi = stationary_distribution(30, consumer)
    assert pi.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.argmax(pi) == 6


def test_generator_invariants(two_class):
    model = build_generator_multi(two_class)
    dense = model.dense_generator()
    off_diagonal = dense - np.diag(np.diag(dense))

    assert model.n_states == 5 * 4
    assert np.abs(dense.sum(axis=1)).max() <= 1e-10
    assert off_diagonal.min() >= 0.0
    assert model.stationary.min() >= 0.0
    assert model.stationary.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.abs(model.stationary @ dense).max() <= 1e-8


def test_product_form_matches_linear_solve(four_class_classes):
    pop = Population(classes=four_class_classes, counts=(2, 2, 2, 2))
    model = build_generator_multi(pop)
    direct = stationary_by_linear_solve(model.dense_generator())
    assert np.abs(direct - model.stationary).max() <= 1e-10


def test_states_are_mixed_radix_with_first_class_fastest(two_class):
    model = build_generator_multi(two_class)
    assert tuple(model.states[0]) == (0, 0)
    assert tuple(model.states[1]) == (1, 0)
    assert tuple(model.states[5]) == (0, 1)
    assert tuple(model.states[-1]) == (4, 3)
    assert model.loads[-1] == pytest.approx(peak_demand(two_class))


def test_only_neighbouring_transitions(two_class):
    dense = build_generator_multi(two_class).dense_generator()
    states = build_generator_multi(two_class).states
    rows, cols = np.nonzero(dense)
    for i, j in zip(rows, cols):
        if i != j:
            assert np.abs(states[i] - states[j]).sum() == 1


def test_single_class_generator_rates():
    consumer = ConsumerClass(lam=0.3, mu=1.0, peak_demand=2.0)
    dense = build_generator_single(3, consumer).dense_generator()
    assert dense[0, 1] == pytest.approx(0.9)
    assert dense[1, 0] == pytest.approx(1.0)
    assert dense[3, 2] == pytest.approx(3.0)
    assert dense[2, 3] == pytest.approx(0.3)


def test_state_space_cap():
    pop = Population.single(50, ConsumerClass.normalized(0.3))
    with pytest.raises(CapacityError):
        build_generator_multi(pop, max_states=10)


def test_state_space_cap_from_environment(monkeypatch):
    monkeypatch.setenv("STORAGE_SIZING_MAX_STATES", "20")
    with pytest.raises(CapacityError):
        build_generator_multi(Population.single(25, ConsumerClass.normalized(0.3)))


def test_large_population_tail_does_not_underflow():
    model = build_generator_multi(Population.single(2000, ConsumerClass.normalized(0.3)))
    assert np.all(np.isfinite(model.log_stationary))
    assert model.stationary.sum() == pytest.approx(1.0)


def test_from_dict_normalized_defaults():
    pop = Population.from_dict({"classes": [{"lambda": 0.3}], "counts": [350]}, normalized=True)
    assert pop.classes[0] == ConsumerClass(0.3, 1.0, 1.0)
    assert pop.state_space_size == 351
    assert Population.from_dict(pop.to_dict()) == pop


def test_from_dict_physical_needs_every_rate():
    with pytest.raises(ScenarioError) as info:
        Population.from_dict({"classes": [{"lambda": 0.3}], "counts": [3]})
    assert info.value.field == "classes[0].mu"


def test_with_counts_keeps_classes(two_class):
    bigger = two_class.with_counts((10, 1))
    assert bigger.classes == two_class.classes
    assert bigger.state_space_size == 22
