"""Synthetic data generation, CSV input/output and run manifests."""

from __future__ import annotations

import csv
import os
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class SyntheticSpec:
    D: int = 15
    K_plus: int = 4
    N: int = 1000
    sigma_x: float = 1.5
    sigma_y: float = 0.5
    seed: int = 0
    z_rate: float = 0.5

    def __post_init__(self):
        if min(self.D, self.K_plus, self.N) < 1:
            raise ValueError("D, K_plus and N must all be at least 1")
        if self.K_plus > self.D:
            raise ValueError(f"K_plus = {self.K_plus} exceeds D = {self.D}")
        if self.sigma_x < 0 or self.sigma_y < 0:
            raise ValueError("scales must be non-negative")
        if not 0 < self.z_rate <= 1:
            raise ValueError("z_rate must lie in (0, 1]")


@dataclass
class SyntheticData:
    Y: np.ndarray
    W: np.ndarray
    X: np.ndarray
    Z: np.ndarray


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Y = W (X * Z) + noise with unit-norm perpendicular columns in W.

    Z entries are Bernoulli(z_rate); any column without a one is redrawn.
    """
    rng = np.random.default_rng(spec.seed)
    D, K, N = spec.D, spec.K_plus, spec.N
    W, _ = np.linalg.qr(rng.standard_normal((D, K)))
    X = spec.sigma_x * rng.standard_normal((K, N))
    Z = (rng.random((K, N)) < spec.z_rate).astype(np.int8)
    empty = np.flatnonzero(Z.sum(axis=0) == 0)
    while empty.size:
        Z[:, empty] = rng.random((K, empty.size)) < spec.z_rate
        empty = empty[Z[:, empty].sum(axis=0) == 0]
    noise = spec.sigma_y * rng.standard_normal((D, N))
    return SyntheticData(Y=W @ (X * Z) + noise, W=W, X=X, Z=Z)


def _parse_row(row, lineno):
    values = []
    for col, cell in enumerate(row):
        try:
            values.append(float(cell))
        except ValueError:
            raise ValueError(
                f"non-numeric cell {cell!r} at row {lineno}, column {col + 1}"
            ) from None
    return values


def load_matrix_csv(path) -> np.ndarray:
    """Read a rectangular numeric CSV; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    start = 0
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        start = 1
    body = rows[start:]
    if not body:
        raise ValueError(f"{path}: header but no data rows")
    width = len(body[0])
    data = []
    for i, row in enumerate(body, start=start + 1):
        if len(row) != width:
            raise ValueError(f"{path}: row {i} has {len(row)} cells, expected {width}")
        data.append(_parse_row(row, i))
    return np.array(data, dtype=float)


def save_matrix_csv(matrix, path, header=None) -> None:
    matrix = np.atleast_2d(np.asarray(matrix))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if header is not None:
            writer.writerow(header)
        if np.issubdtype(matrix.dtype, np.integer):
            writer.writerows([[str(v) for v in row] for row in matrix.tolist()])
        else:
            writer.writerows([["%.17g" % v for v in row] for row in matrix.tolist()])


def orient_observations(matrix, orientation: str = "dims_by_points") -> np.ndarray:
    """Return the matrix laid out as D x N."""
    matrix = np.asarray(matrix)
    if orientation == "dims_by_points":
        return matrix
    if orientation == "points_by_dims":
        return matrix.T
    raise ValueError(f"unknown orientation {orientation!r}")


def write_manifest(path, entries: dict) -> None:
    """Flat ``key = value`` text, one entry per line, keys sorted."""
    with open(path, "w") as fh:
        for key in sorted(entries):
            value = entries[key]
            if isinstance(value, float):
                value = repr(value)
            fh.write(f"{key} = {value}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            if "=" in line:
                key, value = line.split("=", 1)
                out[key.strip()] = value.strip()
    return out


def spec_manifest(spec: SyntheticSpec) -> dict:
    entries = asdict(spec)
    entries["w_true_columns"] = "unit norm, mutually orthogonal"
    entries["z_true"] = f"iid Bernoulli({spec.z_rate}), empty columns redrawn"
    return entries


def ensure_dir(path) -> None:
    os.makedirs(path, exist_ok=True)
