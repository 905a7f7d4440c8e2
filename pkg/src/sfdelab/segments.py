"""History segments: the state space of a delay equation.

A :class:`Segment` is a discretized continuous function on ``[-r, 0]`` with
values in ``R^dim``, stored at ``n_grid + 1`` uniformly spaced nodes.  It is
the Markov state of a stochastic delay equation: the trailing window of the
path.  All norms and the diameter are taken over grid nodes only, which is a
grid approximation of the function-space quantities with O(h) bias; the
integrator only ever produces grid-valued states, so no refinement is applied.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class SegmentError(ValueError):
    """Raised for invalid segment construction or mismatched operands."""


@dataclass(frozen=True)
class Grid:
    """Uniform time grid on ``[-r, 0]`` with ``n_grid`` subintervals.

    ``r`` is stored; the mesh ``h = r / n_grid`` is derived, so
    ``h * n_grid == r`` holds exactly by construction.
    """

    r: float
    n_grid: int

    def __post_init__(self):
        if not (self.r > 0 and np.isfinite(self.r)):
            raise SegmentError(f"memory length r must be positive and finite, got {self.r}")
        if self.n_grid < 1:
            raise SegmentError(f"n_grid must be >= 1, got {self.n_grid}")

    @property
    def h(self) -> float:
        return self.r / self.n_grid

    @property
    def n_nodes(self) -> int:
        return self.n_grid + 1

    def times(self) -> np.ndarray:
        """Node times -r, -r + h, ..., 0."""
        return -self.r + self.h * np.arange(self.n_nodes)


@dataclass(frozen=True)
class Segment:
    """A grid-valued history window: values[i] holds x(-r + i*h) in R^dim."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2:
            raise SegmentError(f"values must be 1-d or 2-d, got shape {np.shape(self.values)}")
        if vals.shape[0] != self.grid.n_nodes:
            raise SegmentError(
                f"values length {vals.shape[0]} != n_grid + 1 = {self.grid.n_nodes}"
            )
        if not np.all(np.isfinite(vals)):
            raise SegmentError("segment values must all be finite")
        vals = np.ascontiguousarray(vals)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def endpoint(self) -> np.ndarray:
        """Most recent value x(0)."""
        return self.values[-1].copy()

    def eval_at(self, t: float) -> np.ndarray:
        """Value at time t in [-r, 0], linearly interpolated between nodes."""
        r, h = self.grid.r, self.grid.h
        if not (-r - 1e-12 * r <= t <= 1e-12 * r):
            raise SegmentError(f"t={t} outside [-{r}, 0]")
        pos = (t + r) / h
        i = int(np.floor(pos))
        i = min(max(i, 0), self.grid.n_grid)
        frac = pos - i
        if frac <= 0 or i == self.grid.n_grid:
            return self.values[i].copy()
        return (1.0 - frac) * self.values[i] + frac * self.values[i + 1]

    def shift_append(self, new_values: np.ndarray) -> "Segment":
        """Advance the window: drop the oldest k values, append k new ones."""
        new = np.asarray(new_values, dtype=float)
        if new.ndim == 1 and self.dim == 1:
            new = new[:, None]
        elif new.ndim == 1 and len(new) == self.dim:
            new = new[None, :]
        k = new.shape[0]
        if k > self.grid.n_grid:
            raise SegmentError(f"cannot append {k} values to a window of {self.grid.n_grid} cells")
        if new.shape[1] != self.dim:
            raise SegmentError(f"dim mismatch: {new.shape[1]} != {self.dim}")
        return Segment(self.grid, np.vstack([self.values[k:], new]))


def constant_segment(grid: Grid, value, dim: int | None = None) -> Segment:
    """Segment holding a constant value (scalar or vector) at every node."""
    v = np.atleast_1d(np.asarray(value, dtype=float))
    if dim is not None and v.size == 1:
        v = np.full(dim, v[0])
    return Segment(grid, np.tile(v, (grid.n_nodes, 1)))


def linear_segment(grid: Grid, start, end) -> Segment:
    """Segment interpolating linearly from start (at -r) to end (at 0)."""
    a = np.atleast_1d(np.asarray(start, dtype=float))
    b = np.atleast_1d(np.asarray(end, dtype=float))
    w = np.linspace(0.0, 1.0, grid.n_nodes)[:, None]
    return Segment(grid, (1.0 - w) * a[None, :] + w * b[None, :])


def _check_compatible(x: Segment, y: Segment):
    if x.grid != y.grid or x.dim != y.dim:
        raise SegmentError(
            f"segments incompatible: grids {x.grid} vs {y.grid}, dims {x.dim} vs {y.dim}"
        )


def sup_norm(x: Segment) -> float:
    """Max over grid nodes of the Euclidean norm |x(t_i)|."""
    return float(np.sqrt((x.values**2).sum(axis=1)).max())


def sup_dist(x: Segment, y: Segment) -> float:
    """Sup-norm distance max_i |x(t_i) - y(t_i)| on a shared grid."""
    _check_compatible(x, y)
    return float(np.sqrt(((x.values - y.values) ** 2).sum(axis=1)).max())


def diameter(x: Segment) -> float:
    """Diameter of the range: max over node pairs of |x(t_i) - x(t_j)|.

    For dim 1 this is max - min (linear time); higher dimensions fall back to
    the exact pairwise scan, fine at desk scale (n_grid <= ~1000).
    """
    return float(diameter_of_values(x.values))


def diameter_of_values(values: np.ndarray) -> float:
    vals = np.asarray(values, dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[1] == 1:
        return float(vals.max() - vals.min())
    diff = vals[:, None, :] - vals[None, :, :]
    return float(np.sqrt((diff**2).sum(axis=2)).max())


def truncated_distance(x: Segment, y: Segment, rho: float) -> float:
    """The bounded metric min(sup_dist(x, y) / rho, 1) on a shared grid."""
    if rho <= 0:
        raise SegmentError(f"rho must be positive, got {rho}")
    return min(sup_dist(x, y) / rho, 1.0)


# ---------------------------------------------------------------------------
# Serialization: flat row -- r, n_grid, dim, then values in time-ascending
# order, dimension-major (all of coordinate 0, then coordinate 1, ...).
# ---------------------------------------------------------------------------

def segment_to_row(x: Segment) -> list[float]:
    flat = x.values.T.reshape(-1)  # dimension-major
    return [x.grid.r, float(x.grid.n_grid), float(x.dim)] + [float(v) for v in flat]


def segment_from_row(row) -> Segment:
    row = list(map(float, row))
    if len(row) < 3:
        raise SegmentError("segment row needs at least r, n_grid, dim")
    r, n_grid, dim = row[0], int(row[1]), int(row[2])
    vals = np.asarray(row[3:], dtype=float)
    if vals.size != (n_grid + 1) * dim:
        raise SegmentError(
            f"segment row has {vals.size} values, expected {(n_grid + 1) * dim}"
        )
    return Segment(Grid(r, n_grid), vals.reshape(dim, n_grid + 1).T)


def segment_to_json(x: Segment) -> str:
    return json.dumps({"row": segment_to_row(x)})


def segment_from_json(text: str) -> Segment:
    return segment_from_row(json.loads(text)["row"])


def save_segments_csv(path, segments):
    """Write one segment per line, comma-separated flat rows."""
    with open(path, "w") as fh:
        for seg in segments:
            fh.write(",".join(repr(v) for v in segment_to_row(seg)) + "\n")


def load_segments_csv(path) -> list[Segment]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(segment_from_row(line.split(",")))
    return out
