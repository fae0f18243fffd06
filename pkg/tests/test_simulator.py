import math

import numpy as np
import pytest

import simulator
import spectral_solver
from closed_forms import CapacityDistribution
from errors import DomainError, EstimatorError, ParameterDomainError
from simulator import SimConfig
from source_model import ConsumerClass, Population, build_generator_multi, mean_demand, peak_demand


def _config(pop, grid_power=0.5, **overrides):
    settings = {"horizon": 500.0, "replications": 4, "seed": 11}
    settings.update(overrides)
    return SimConfig(population=pop, grid_power=grid_power, **settings)


def test_config_validation(single_user):
    with pytest.raises(ParameterDomainError):
        _config(single_user, horizon=0.0)
    with pytest.raises(ParameterDomainError):
        _config(single_user, efficiency=0.0)
    with pytest.raises(ParameterDomainError):
        _config(single_user, eta_mode="discharge_only")
    with pytest.raises(ParameterDomainError):
        _config(single_user, warmup=600.0)
    with pytest.raises(ParameterDomainError):
        _config(single_user, replications=0)
    with pytest.raises(ParameterDomainError):
        _config(single_user, charge_rate_cap=0.0)


def test_default_warmup(single_user):
    config = _config(single_user)
    assert config.warmup == pytest.approx(50.0)
    assert config.observed_time == pytest.approx(450.0)


def test_same_seed_same_result(single_user):
    first = simulator.simulate(_config(single_user), [0.0, 1.0])
    second = simulator.simulate(_config(single_user), [0.0, 1.0])
    assert first.to_dict() == second.to_dict()
    other = simulator.simulate(_config(single_user, seed=12), [0.0, 1.0])
    assert other.to_dict()["estimates"] != first.to_dict()["estimates"]


def test_results_do_not_depend_on_worker_count(two_class):
    config = _config(two_class, grid_power=3.2, horizon=200.0, replications=6)
    serial = simulator.run_replications(config, [0.0, 0.5], max_workers=1)
    parallel = simulator.run_replications(config, [0.0, 0.5], max_workers=4)
    assert [r.index for r in parallel] == list(range(6))
    for a, b in zip(serial, parallel):
        assert np.array_equal(a.time_above, b.time_above)
        assert a.events == b.events


def test_occupancy_is_a_distribution(two_class):
    summary = simulator.simulate(_config(two_class, grid_power=3.2, horizon=300.0))
    assert sum(summary.occupancy) == pytest.approx(1.0, abs=1e-9)
    assert len(summary.occupancy_std_error) == two_class.state_space_size


def test_efficiency_scales_the_deficit(single_user):
    full = simulator.run_replications(_config(single_user), [0.0, 1.0, 2.0])
    half = simulator.run_replications(_config(single_user, efficiency=0.5), [0.0, 0.5, 1.0])
    for a, b in zip(full, half):
        assert b.mean_deficit == pytest.approx(0.5 * a.mean_deficit, rel=1e-9)
        assert b.second_moment == pytest.approx(0.25 * a.second_moment, rel=1e-9)
        assert b.time_above == pytest.approx(a.time_above, rel=1e-9, abs=1e-12)


def test_charge_only_efficiency_slows_recharge(single_user):
    full = simulator.simulate(_config(single_user))
    lossy = simulator.simulate(_config(single_user, efficiency=0.5, eta_mode="charge_only"))
    assert lossy.mean_deficit > full.mean_deficit


def test_discharge_cap_limits_the_deficit(single_user):
    free = simulator.simulate(_config(single_user))
    capped = simulator.simulate(_config(single_user, discharge_rate_cap=0.2))
    assert capped.mean_deficit < free.mean_deficit
    assert capped.events == free.events


def test_capacity_resampled_per_replication(single_user):
    law = CapacityDistribution(capacities=(0.5, 0.8), probabilities=(0.5, 0.5))
    config = _config(single_user, replications=12, capacity_distribution=law)
    results = simulator.run_replications(config, [0.0])
    assert {r.grid_power for r in results} <= {0.5, 0.8}


def test_unstable_configuration_warns(single_user):
    with pytest.warns(RuntimeWarning, match="no steady state"):
        simulator.simulate(_config(single_user, grid_power=0.2, horizon=50.0))


def test_single_replication(single_user):
    summary = simulator.simulate(_config(single_user, replications=1))
    assert summary.survivor[0].std_error is None
    assert any("single replication" in note for note in summary.notes)
    with pytest.raises(EstimatorError):
        simulator.estimate_survivor(_config(single_user, replications=1), [0.0])


def test_negative_level_rejected(single_user):
    with pytest.raises(DomainError):
        simulator.simulate(_config(single_user), [-1.0])


def test_summary_fields(single_user):
    data = simulator.simulate(_config(single_user), [0.0, 2.0]).to_dict()
    assert data["levels"] == [0.0, 2.0]
    assert data["replications"] == 4
    assert data["events"] > 0
    assert set(data) >= {"estimates", "std_errors", "occupancy", "mean_deficit", "second_moment"}


@pytest.mark.slow
def test_standard_error_shrinks_with_horizon(single_user):
    short = simulator.estimate_survivor(_config(single_user, horizon=1000.0, replications=20), [0.0])
    long = simulator.estimate_survivor(_config(single_user, horizon=4000.0, replications=20), [0.0])
    ratio = long[0].std_error / short[0].std_error
    assert 0.2 <= ratio <= 1.0


@pytest.mark.slow
def test_single_user_oracle(single_user):
    config = _config(single_user, horizon=40000.0, replications=40, seed=7)
    summary = simulator.simulate(config, [0.0, 2.0])
    assert summary.events >= 1_000_000
    zero, two = summary.survivor
    assert abs(two.estimate - 2.0 / 3.0 * math.exp(-2.0)) <= 3.0 * two.std_error
    assert abs(zero.estimate - 2.0 / 3.0) <= 3.0 * zero.std_error


def _random_small_model(seed):
    """Up to 12 consumers in one or two classes, with a stable grid power"""
    rng = np.random.default_rng(seed)
    if rng.random() < 0.5:
        counts = (int(rng.integers(2, 13)),)
    else:
        counts = tuple(int(n) for n in rng.integers(1, 7, size=2))
    classes = tuple(
        ConsumerClass(
            lam=float(rng.uniform(0.3, 1.0)),
            mu=float(rng.uniform(0.5, 1.5)),
            peak_demand=float(rng.uniform(0.3, 1.0)),
        )
        for _ in counts
    )
    pop = Population(classes=classes, counts=counts)
    low, high = mean_demand(pop), peak_demand(pop)
    return pop, low + float(rng.uniform(0.2, 0.45)) * (high - low)


@pytest.mark.slow
def test_randomized_models_match_spectral():
    models_off = 0
    worst = 0.0
    for seed in range(5):
        pop, grid_power = _random_small_model(seed)
        model = build_generator_multi(pop)
        sol = spectral_solver.solve(model, grid_power)
        slowest = -float(sol.eigenvalues.real.max())
        levels = [0.0] + [f / slowest for f in (0.5, 1.0, 2.0, 3.0)]

        config = _config(pop, grid_power=grid_power, horizon=1500.0, replications=30, seed=100 + seed)
        summary = simulator.simulate(config, levels)

        exact = spectral_solver.survivor_curve(sol, np.array(levels))
        errors = [
            abs(s.estimate - g) / s.std_error for s, g in zip(summary.survivor, exact)
        ]
        worst = max(worst, max(errors))
        if max(errors) > 3.0:
            models_off += 1

        occupancy = np.array(summary.occupancy)
        spread = np.array(summary.occupancy_std_error)
        compared = model.stationary >= 5e-3
        z = np.abs(occupancy - model.stationary)[compared] / spread[compared]
        assert (z > 3.0).sum() <= 5 + compared.sum() // 50
        assert z.max() <= 6.0

    # one model may miss the 3 SE band by chance; none may be far off
    assert models_off <= 1
    assert worst <= 5.0
