"""Plain-text matrix exchange and small CSV helpers."""

from __future__ import annotations

import csv

import numpy as np


def write_matrix(path, array) -> None:
    """Write a complex array as ``shape d1 d2 ...`` followed by one ``re im`` pair per line.

    Entries are listed in row-major (C) order with round-trip precision.
    """
    a = np.asarray(array, dtype=complex)
    with open(path, "w") as fh:
        fh.write("shape " + " ".join(str(d) for d in a.shape) + "\n")
        for z in a.ravel():
            fh.write(f"{float(z.real)!r} {float(z.imag)!r}\n")


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if not header or header[0] != "shape":
            raise ValueError(f"{path}: missing 'shape' header")
        shape = tuple(int(d) for d in header[1:])
        data = np.loadtxt(fh, ndmin=2) if np.prod(shape) else np.zeros((0, 2))
    if data.shape != (int(np.prod(shape)), 2):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} entries, found {data.shape[0]}")
    return (data[:, 0] + 1j * data[:, 1]).reshape(shape)


def write_trace_csv(path, trace) -> None:
    """Convergence trace rows ``(iteration, delta_gamma_sq, log_evidence)``."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iteration", "delta_gamma_sq", "log_evidence"])
        for it, delta, ev in trace:
            wr.writerow([it, f"{delta:.9e}", f"{ev:.9e}"])
