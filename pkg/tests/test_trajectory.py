import numpy as np
import pytest

from trajforge.errors import EmptyDataset, InvalidTrajectory
from trajforge.trajectory import TrajPoint, Trajectory, TrajectoryDataset


def test_invariants():
    with pytest.raises(InvalidTrajectory):
        Trajectory("one", [[0.0, 0.0, 0.0]])
    with pytest.raises(InvalidTrajectory):
        Trajectory("back", [[0.0, 0.0, 5.0], [0.0, 0.0, 5.0]])
    with pytest.raises(InvalidTrajectory):
        Trajectory("far", [[0.0, 95.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(InvalidTrajectory):
        Trajectory("nan", [[0.0, float("nan"), 0.0], [0.0, 0.0, 1.0]])


def test_points_are_read_only():
    traj = Trajectory("a", [[1.0, 2.0, 0.0], [1.5, 2.5, 1.0]], {"mode": "bus"})
    with pytest.raises(ValueError):
        traj.data[0, 0] = 9.0
    assert traj[1] == TrajPoint.of(1.5, 2.5, 1.0)
    assert Trajectory.from_points("a", traj.points, traj.meta) == traj


def test_select_keeps_meta():
    traj = Trajectory("a", [[0.0, 0.0, t] for t in range(5)], {"mode": "walk"})
    sub = traj.select([0, 2, 4], traj_id="a/sub")
    assert sub.id == "a/sub" and sub.meta == {"mode": "walk"}
    assert sub.t.tolist() == [0.0, 2.0, 4.0]


def test_dataset_split_is_seeded_and_disjoint():
    ds = TrajectoryDataset(tuple(Trajectory(f"t{i}", [[0, 0, 0], [0, 0, 1]]) for i in range(10)))
    rest, held = ds.split(0.3, seed=1)
    assert len(held) == 3 and len(rest) == 7
    assert set(rest.ids()).isdisjoint(held.ids())
    assert ds.split(0.3, seed=1)[1].ids() == held.ids()
    assert ds.n_points == 20
    assert np.array_equal(ds.all_points()[:2], ds[0].data)


def test_dataset_split_needs_two_trajectories():
    single = TrajectoryDataset((Trajectory("only", [[0, 0, 0], [0, 0, 1]]),))
    with pytest.raises(EmptyDataset):
        single.split(0.5, seed=0)


def test_dataset_rejects_duplicate_ids():
    traj = Trajectory("a", [[0, 0, 0], [0, 0, 1]])
    with pytest.raises(InvalidTrajectory):
        TrajectoryDataset((traj, traj))
