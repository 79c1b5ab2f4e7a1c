import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from appca.data_io import (
    SyntheticSpec,
    generate_synthetic,
    load_matrix_csv,
    orient_observations,
    read_manifest,
    save_matrix_csv,
    spec_manifest,
    write_manifest,
)


def test_synthetic_shapes_and_structure():
    spec = SyntheticSpec(D=15, K_plus=4, N=1000, sigma_x=1.5, sigma_y=0.5, seed=3)
    d = generate_synthetic(spec)
    assert d.Y.shape == (15, 1000) and d.W.shape == (15, 4)
    assert d.X.shape == d.Z.shape == (4, 1000)
    assert np.allclose(d.W.T @ d.W, np.eye(4), atol=1e-12)
    assert np.all(d.Z.sum(axis=0) >= 1)
    noise = d.Y - d.W @ (d.X * d.Z)
    assert noise.std() == pytest.approx(0.5, rel=0.05)
    assert d.X.std() == pytest.approx(1.5, rel=0.05)


def test_synthetic_seed_determinism():
    a = generate_synthetic(SyntheticSpec(seed=9))
    b = generate_synthetic(SyntheticSpec(seed=9))
    c = generate_synthetic(SyntheticSpec(seed=10))
    assert np.array_equal(a.Y, b.Y)
    assert not np.array_equal(a.Y, c.Y)


@pytest.mark.parametrize(
    "kwargs", [{"K_plus": 20, "D": 15}, {"N": 0}, {"sigma_y": -1.0}, {"z_rate": 0.0}]
)
def test_synthetic_spec_validation(kwargs):
    with pytest.raises(ValueError):
        SyntheticSpec(**kwargs)


@settings(max_examples=30, deadline=None)
@given(
    arr=st.integers(1, 6).flatmap(
        lambda r: st.lists(
            st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=3),
            min_size=r, max_size=r,
        )
    )
)
def test_csv_roundtrip_is_exact(tmp_path_factory, arr):
    path = tmp_path_factory.mktemp("csv") / "m.csv"
    m = np.array(arr)
    save_matrix_csv(m, path)
    assert np.array_equal(load_matrix_csv(path), m)


def test_csv_header_detected(tmp_path):
    p = tmp_path / "h.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    assert np.array_equal(load_matrix_csv(p), [[1, 2], [3, 4]])


def test_csv_integer_matrix_written_plainly(tmp_path):
    p = tmp_path / "z.csv"
    save_matrix_csv(np.array([[1, 0], [0, 1]], dtype=np.int8), p)
    assert p.read_text() == "1,0\n0,1\n"


def test_csv_errors_name_location(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,x\n")
    with pytest.raises(ValueError, match="row 2, column 2"):
        load_matrix_csv(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(ValueError, match="row 2 has 1 cells"):
        load_matrix_csv(p)
    p.write_text("")
    with pytest.raises(ValueError, match="no data"):
        load_matrix_csv(p)


def test_orientation():
    m = np.arange(6).reshape(2, 3)
    assert orient_observations(m, "dims_by_points") is m
    assert np.array_equal(orient_observations(m, "points_by_dims"), m.T)
    with pytest.raises(ValueError):
        orient_observations(m, "sideways")


def test_manifest_roundtrip(tmp_path):
    p = tmp_path / "manifest.txt"
    entries = spec_manifest(SyntheticSpec(sigma_x=1.5, sigma_y=0.5, N=1000))
    write_manifest(p, entries)
    back = read_manifest(p)
    assert back["sigma_x"] == "1.5" and back["sigma_y"] == "0.5" and back["N"] == "1000"
    lines = p.read_text().splitlines()
    assert lines == sorted(lines)


def test_orientation_double_flip_is_identity():
    m = np.arange(12.0).reshape(3, 4)
    twice = orient_observations(orient_observations(m, "points_by_dims"), "points_by_dims")
    assert np.array_equal(twice, m)
