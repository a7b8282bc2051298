"""CSV reading and writing.

Reals are written with 17 significant digits so that a write/read cycle
reproduces every float64 bit for bit. Index lists are 0-based and joined
with semicolons.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import TrajectoryRecord

TRAJECTORY_COLUMNS = ("k", "f", "support", "grad_norm_sq_restricted", "batch")
SUMMARY_COLUMNS = ("seed", "final_f", "iterations", "stop_reason", "support")


def fmt(v: float) -> str:
    return f"{float(v):.17g}"


def join_indices(idx: Iterable[int]) -> str:
    return ";".join(str(int(i)) for i in idx)


def split_indices(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in text.split(";")) if text else ()


def write_matrix(path: Path, A: np.ndarray):
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        for row in A:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_matrix(path: Path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(t) for t in line.split(",")])
    if not rows:
        raise ValueError(f"{path} is empty")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path} has rows of different lengths")
    return np.array(rows, dtype=np.float64)


def write_vector(path: Path, v: np.ndarray):
    with open(path, "w", newline="") as fh:
        for x in np.asarray(v, dtype=np.float64):
            fh.write(fmt(x) + "\n")


def read_vector(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        vals = [float(line) for line in fh if line.strip()]
    return np.array(vals, dtype=np.float64)


def write_trajectory(path: Path, record: TrajectoryRecord):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJECTORY_COLUMNS)
        for k in range(len(record)):
            w.writerow(
                [
                    k,
                    fmt(record.f[k]),
                    join_indices(record.support[k]),
                    fmt(record.grad_norm_sq[k]),
                    join_indices(record.batch[k]),
                ]
            )


def read_trajectory(path: Path, seed: int = 0) -> TrajectoryRecord:
    f, support, gnorm, batch = [], [], [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            f.append(float(row["f"]))
            support.append(split_indices(row["support"]))
            gnorm.append(float(row["grad_norm_sq_restricted"]))
            batch.append(split_indices(row["batch"]))
    return TrajectoryRecord(tuple(f), tuple(support), tuple(gnorm), tuple(batch), seed)


def write_rows(path: Path, header: Sequence[str], rows: Iterable[Sequence]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)
