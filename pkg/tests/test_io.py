import csv

import numpy as np
import pytest

from thzmimo.io import read_matrix, write_matrix, write_trace_csv


@pytest.mark.parametrize("shape", [(3,), (2, 4), (2, 3, 2), (0, 3)])
def test_matrix_round_trip_exact(tmp_path, shape):
    rng = np.random.default_rng(0)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    p = tmp_path / "m.txt"
    write_matrix(p, a)
    assert open(p).readline().split() == ["shape"] + [str(d) for d in shape]
    b = read_matrix(p)
    assert b.shape == a.shape and np.array_equal(a, b)


def test_matrix_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("rows 2\n1 0\n")
    with pytest.raises(ValueError, match="shape"):
        read_matrix(p)
    p.write_text("shape 3\n1 0\n2 0\n")
    with pytest.raises(ValueError, match="expected 3"):
        read_matrix(p)


def test_trace_csv(tmp_path):
    p = tmp_path / "trace.csv"
    write_trace_csv(p, [(1, 0.5, -10.0), (2, 0.01, -9.5)])
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["iteration", "delta_gamma_sq", "log_evidence"]
    assert int(rows[2][0]) == 2 and float(rows[2][2]) == -9.5
