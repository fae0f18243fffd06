import pytest

from errors import ScenarioError, StabilityError
from run_log import RunLog
from sizing import Engine, epsilon_outage_capacity
from source_model import ConsumerClass, Population
from sweep import SweepPipeline, build_grid


@pytest.fixture
def base():
    return Population.single(10, ConsumerClass.normalized(0.3))


def test_grid_order(base):
    points = build_grid(base, {"counts": [[10], [20]], "grid_power_per_user": [0.35, 0.45], "epsilon": [0.01]})
    assert [p.index for p in points] == [0, 1, 2, 3]
    assert [(p.counts, p.grid_power) for p in points] == [
        ((10,), pytest.approx(3.5)),
        ((10,), pytest.approx(4.5)),
        ((20,), pytest.approx(7.0)),
        ((20,), pytest.approx(9.0)),
    ]


def test_grid_defaults_and_errors(base):
    points = build_grid(base, {"grid_power": [4.5]}, default_epsilon=0.05)
    assert points[0].counts == (10,) and points[0].epsilon == 0.05
    with pytest.raises(ScenarioError):
        build_grid(base, {"epsilon": [0.01]})
    with pytest.raises(ScenarioError):
        build_grid(base, {"grid_power": [4.5]})
    with pytest.raises(ScenarioError):
        build_grid(base, {"grid_power": [4.5], "counts": [[1, 2]], "epsilon": [0.1]})


def test_execute_matches_direct_sizing(base, tmp_path):
    points = build_grid(base, {"grid_power": [3.5, 4.5, 5.5], "epsilon": [0.01, 0.001]})
    pipeline = SweepPipeline(base, Engine.SPECTRAL, RunLog(str(tmp_path)))
    seen = []
    rows = pipeline.execute(points, max_workers=3, progress_callback=lambda done, total, p: seen.append(done))
    assert len(rows) == 6
    assert sorted(seen) == list(range(1, 7))
    for point, row in zip(points, rows):
        direct = epsilon_outage_capacity(base, point.grid_power, point.epsilon)
        assert row["B"] == pytest.approx(direct.storage, abs=1e-9)
        assert row["C"] == point.grid_power
        assert row["N"] == "10"


def test_execute_raises_first_failure(base, tmp_path):
    points = build_grid(base, {"grid_power": [4.5, 2.0, 1.0], "epsilon": [0.01]})
    log = RunLog(str(tmp_path))
    with pytest.raises(StabilityError) as info:
        SweepPipeline(base, Engine.SPECTRAL, log).execute(points)
    assert info.value.grid_power == 2.0
    with open(log.error_log_file, encoding="utf-8") as f:
        assert f.read().count("ERROR: StabilityError") == 2
