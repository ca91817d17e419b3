import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brushopt import io

designs = arrays(np.int8, st.tuples(st.integers(1, 12), st.integers(1, 12)), elements=st.sampled_from([-1, 1]))


@given(designs, st.booleans())
def test_pgm_round_trip(tmp_path_factory, x, binary):
    path = tmp_path_factory.mktemp("pgm") / "d.pgm"
    io.write_pgm(path, x, binary=binary)
    np.testing.assert_array_equal(io.read_pgm(path), x)


@given(designs)
def test_csv_round_trip(tmp_path_factory, x):
    path = tmp_path_factory.mktemp("csv") / "d.csv"
    io.write_csv(path, x)
    np.testing.assert_array_equal(io.read_csv(path), x)


def test_pgm_with_comments_and_custom_maxval(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_text("P2\n# a comment\n3 2\n# another\n1\n0 1 0\n1 1 0\n")
    np.testing.assert_array_equal(io.read_pgm(path), [[-1, 1, -1], [1, 1, -1]])


def test_pgm_rejects_gray_values(tmp_path):
    path = tmp_path / "g.pgm"
    path.write_text("P2\n2 1\n255\n0 128\n")
    with pytest.raises(io.DesignFormatError):
        io.read_pgm(path)


def test_pgm_rejects_truncation_and_magic(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(io.DesignFormatError):
        io.read_pgm(path)
    path.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(io.DesignFormatError):
        io.read_pgm(path)


def test_csv_accepts_zero_one(tmp_path):
    path = tmp_path / "z.csv"
    path.write_text("0,1\n1,1\n")
    np.testing.assert_array_equal(io.read_csv(path), [[-1, 1], [1, 1]])
    path.write_text("0,2\n")
    with pytest.raises(io.DesignFormatError):
        io.read_csv(path)


def test_read_design_dispatch(tmp_path):
    with pytest.raises(io.DesignFormatError):
        io.read_design(tmp_path / "d.png")
    x = np.array([[1, -1]])
    io.write_design(tmp_path / "d.csv", x)
    np.testing.assert_array_equal(io.read_design(tmp_path / "d.csv"), x)


def test_write_rejects_non_binary(tmp_path):
    with pytest.raises(ValueError):
        io.write_pgm(tmp_path / "x.pgm", np.array([[0, 1]]))


def test_contours_of_single_block():
    x = -np.ones((4, 4), np.int8)
    x[1:3, 1:3] = 1
    loops = io.pixel_contours(x, 10.0)
    assert len(loops) == 1
    assert sorted(loops[0]) == sorted([(10.0, 10.0), (30.0, 10.0), (30.0, 30.0), (10.0, 30.0)])


def test_contours_hole_orientation():
    x = np.ones((5, 5), np.int8)
    x[2, 2] = -1
    doc = io.contours_to_json(x, 1.0)
    assert sorted(l["orientation"] for l in doc["loops"]) == ["ccw", "cw"]


def test_diagonal_contact_gives_two_loops():
    x = np.array([[1, -1], [-1, 1]], np.int8)
    assert len(io.pixel_contours(x)) == 2


@given(designs)
def test_contours_rasterize_back(x):
    loops = io.pixel_contours(x, 2.0)
    np.testing.assert_array_equal(io.rasterize_contours(loops, x.shape, 2.0), x)


def test_field_magnitude_writes_pgm(tmp_path):
    io.write_field_magnitude(tmp_path / "f.pgm", np.array([[0, 1j], [2, 0]]))
    assert (tmp_path / "f.pgm").read_bytes().startswith(b"P5\n2 2\n255\n")
