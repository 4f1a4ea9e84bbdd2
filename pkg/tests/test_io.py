import numpy as np
import pytest

from gcosamp.io import quantize8, read_mask_csv, read_matrix_csv, read_pgm, write_mask_csv, write_matrix_csv, write_pgm
from gcosamp.operators import variable_density_mask


def test_matrix_csv_round_trip(tmp_path):
    M = np.random.default_rng(0).standard_normal((3, 4))
    path = tmp_path / "m.csv"
    write_matrix_csv(path, M)
    assert path.read_text().splitlines()[0] == "3,4"
    assert np.array_equal(read_matrix_csv(path), M)


def test_matrix_csv_header_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("2,2\n1,2\n")
    with pytest.raises(ValueError):
        read_matrix_csv(path)


def test_mask_csv_round_trip(tmp_path):
    mask = variable_density_mask(8, 8, 0.3, seed=1)
    write_mask_csv(tmp_path / "mask.csv", mask)
    assert np.array_equal(read_mask_csv(tmp_path / "mask.csv").selected, mask.selected)


def test_pgm_round_trip_quantizes(tmp_path):
    img = np.array([[-5.0, 0.4, 127.6], [255.2, 300.0, 12.0]])
    write_pgm(tmp_path / "a.pgm", img)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    back = read_pgm(tmp_path / "a.pgm")
    assert np.array_equal(back, quantize8(img).astype(float))
    assert np.array_equal(back, [[0, 0, 128], [255, 255, 12]])
