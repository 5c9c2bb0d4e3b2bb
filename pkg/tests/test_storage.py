import numpy as np
import pytest

from horizonlab import dynamics
from horizonlab.errors import IngestionError
from horizonlab.storage import read_trajectory, sidecar_path, write_table, write_trajectory


@pytest.fixture
def traj():
    spec = dynamics.make_system("lorenz")
    return dynamics.add_observation_noise(dynamics.simulate(spec, 50, seed=4), 0.1, 4)


def test_roundtrip_bitwise(traj, tmp_path):
    path = tmp_path / "a.csv"
    write_trajectory(traj, path)
    back = read_trajectory(path)
    assert np.array_equal(back.states, traj.states)
    assert back.dt == traj.dt and back.seed == 4 and back.noise_sigma == 0.1
    assert back.system == "lorenz" and back.params == traj.params


def test_normalization_survives_roundtrip(traj, tmp_path):
    norm = dynamics.normalize(traj)
    write_trajectory(norm, tmp_path / "n.csv")
    back = read_trajectory(tmp_path / "n.csv")
    np.testing.assert_array_equal(back.normalization[0], norm.normalization[0])
    np.testing.assert_allclose(back.raw_states(), traj.states, rtol=1e-12, atol=1e-12)


def test_no_temporary_files_left(traj, tmp_path):
    write_trajectory(traj, tmp_path / "a.csv")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.csv", "a.json"]
    assert sidecar_path(tmp_path / "a.csv").name == "a.json"


def _write(path, text):
    path.write_text(text)
    return path


@pytest.mark.parametrize(
    "body, row",
    [
        ("t,x0,x1\n0,1,2\n1,nan,2\n2,1,2\n", 2),
        ("t,x0,x1\n0,1,2\n1,1\n2,1,2\n", 2),
        ("t,x0,x1\n0,1,2\n1,1,2\n2,abc,2\n", 3),
        ("t,x0,x1\n0,1,2\n1,1,2\n2.5,1,2\n3,1,2\n", 3),
        ("t,x0,x1\n0,1,2\n1,inf,2\n", 2),
        ("time,x0\n0,1\n1,1\n", 0),
    ],
)
def test_bad_files_name_first_bad_row(tmp_path, body, row):
    with pytest.raises(IngestionError) as info:
        read_trajectory(_write(tmp_path / "bad.csv", body))
    assert info.value.row == row
    if row:
        assert f"row {row}" in str(info.value)


def test_plain_csv_without_sidecar(tmp_path):
    t = read_trajectory(_write(tmp_path / "p.csv", "t,x0\n1.0,3\n1.5,4\n2.0,5\n"))
    assert t.dt == 0.5 and t.t0 == 1.0 and t.states.shape == (3, 1)


def test_write_table_formats(tmp_path):
    write_table(tmp_path / "t.csv", ("a", "b"), [(1, 0.1), (2, float("nan"))])
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,0.10000000000000001\n2,nan\n"
