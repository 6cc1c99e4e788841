import numpy as np
import pytest

from jamsim.model import (AttackStrategy, Budget, BudgetKind, ChannelParams, DisturbanceKind, DisturbanceModel,
                          ModelError, PlantModel, Trajectory, constant_disturbance, gaussian_disturbance,
                          no_disturbance, uniform_disturbance)


def test_plant_shapes_and_closed_loop(bench_plant):
    assert bench_plant.n == 2 and bench_plant.m == 1
    np.testing.assert_allclose(bench_plant.closed_loop, [[0.1, -1.0], [0.1723, 0.5385]], atol=1e-12)


@pytest.mark.parametrize("A,B,K,x0,msg", [
    ([[1.0, 0.0]], [[1.0]], [[1.0]], [1.0], "A must be"),
    ([[1.0]], [[1.0]], [[1.0, 2.0]], [1.0], "K must be"),
    ([[1.0]], [[1.0]], [[1.0]], [1.0, 2.0], "x0 must"),
])
def test_plant_rejects_mismatched_dimensions(A, B, K, x0, msg):
    with pytest.raises(ModelError, match=msg):
        PlantModel(A, B, K, x0)


def test_plant_arrays_are_read_only(bench_plant):
    with pytest.raises(ValueError):
        bench_plant.A[0, 0] = 5.0


def test_channel_names_bad_field():
    with pytest.raises(ModelError, match="channel.sigma"):
        ChannelParams(1.0, 3.0, 0.0)
    assert ChannelParams(1, 3, 0.4).with_power(6).xi == 6.0


def test_budget_validation():
    with pytest.raises(ModelError):
        Budget(-1.0, 1.0, BudgetKind.CUMULATIVE)
    assert Budget(0.0, 1.0, "assumption2").kind is BudgetKind.WINDOWED


def test_attack_rejects_negative_power():
    s = AttackStrategy(lambda t: -np.ones(t.shape))
    with pytest.raises(ModelError):
        s.trace(3)
    with pytest.raises(ModelError):
        AttackStrategy(lambda t: t * 1.0).powers([-1])


def test_scalar_schedule_is_broadcast():
    s = AttackStrategy(lambda t: 2.0)
    np.testing.assert_array_equal(s.trace(4), [2.0] * 4)


def test_disturbance_bounds():
    assert uniform_disturbance(2, 0.5).bound == pytest.approx(0.5 * np.sqrt(2))
    assert gaussian_disturbance(3, 0.2).bound == pytest.approx(3 * 0.04)
    assert gaussian_disturbance(1, 0.2, mean=[1.0]).bound == pytest.approx(1.04)
    assert constant_disturbance([3.0, 4.0]).bound == 5.0
    assert no_disturbance(2).is_zero


def test_disturbance_sampler_shape_checked():
    bad = DisturbanceModel(DisturbanceKind.BOUNDED, 2, lambda t, rng: np.zeros((t.size, 3)))
    with pytest.raises(ModelError):
        bad.sample(np.arange(4), np.random.default_rng(0))
    with pytest.raises(ModelError):
        DisturbanceModel(DisturbanceKind.BOUNDED, 2)


def test_uniform_samples_stay_in_box():
    w = uniform_disturbance(2, 0.5).sample(np.arange(10000), np.random.default_rng(1))
    assert np.abs(w).max() <= 0.5
    assert abs(w.mean()) < 0.02


def test_gaussian_samples_moments():
    w = gaussian_disturbance(1, 0.3).sample(np.arange(200000), np.random.default_rng(2))
    assert np.all(np.isfinite(w))
    assert w.std() == pytest.approx(0.3, rel=0.01)


def test_trajectory_validates_lengths():
    with pytest.raises(ModelError):
        Trajectory(np.zeros((3, 1)), np.zeros(2), [0, 2], np.ones(2), np.zeros((2, 1)), seed=0)
    with pytest.raises(ModelError):
        Trajectory(np.zeros((3, 1)), np.zeros(3), [0, 1], np.ones(2), np.zeros((2, 1)), seed=0)


def test_trajectory_replay_matches_recursion():
    plant = PlantModel([[1.2]], [[1.0]], [[-0.7]], [1.0])
    l = np.array([1, 0, 1])
    w = np.array([[0.1], [-0.2], [0.3]])
    x = [np.array([1.0])]
    for t in range(3):
        x.append(plant.A @ x[-1] + (1 - l[t]) * plant.B @ plant.K @ x[-1] + w[t])
    traj = Trajectory(np.array(x), np.zeros(3), l, np.ones(3), w, seed=0)
    np.testing.assert_allclose(traj.replay(plant), traj.x, atol=1e-15)
    assert len(traj.steps) == 3 and traj.steps[1][3] == 0
