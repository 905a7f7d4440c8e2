"""Euler stepping of delay equations over segment states.

The history is kept at dt resolution: the step dt must subdivide the segment
mesh exactly (dt = h / k_sub), sub-grid values are buffered, and the drift is
always evaluated on the grid-snapped window (the most recent n_grid + 1 node
values), which is exactly what the Segment data model stores.

Ensembles advance all paths in lock step through the selected backend.  Paths
are tiled in fixed blocks and each path draws from its own counter-based
stream, so results are bitwise reproducible for a given (master_seed, dt, T,
n_paths) no matter how many workers run the tiles.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _backend, rng
from .models import ModelSpec
from .segments import Grid, Segment, diameter

TILE = 128  # fixed path-tile width; workers only change tile scheduling

DEFAULT_EXPLODE_THRESHOLD = 1e12


class IntegrationError(RuntimeError):
    pass


def _describe_state(values: np.ndarray) -> str:
    x0 = values[-1]
    return f"state with x(0)={np.array2string(x0, precision=4)}, spread D={diameter_of(values):.4g}"


def diameter_of(values: np.ndarray) -> float:
    from .segments import diameter_of_values

    return diameter_of_values(values)


def resolve_substeps(grid: Grid, dt: float) -> int:
    """Number of Euler sub-steps per grid cell; errors unless dt divides h."""
    if dt <= 0:
        raise IntegrationError(f"dt must be positive, got {dt}")
    k = int(round(grid.h / dt))
    if k < 1 or abs(k * dt - grid.h) > 1e-9 * max(1.0, grid.h):
        raise IntegrationError(
            f"dt={dt} must subdivide the segment mesh h={grid.h} exactly"
        )
    return k


def steps_for(T: float, dt: float) -> int:
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, abs(T)) or n < 0:
        raise IntegrationError(f"horizon T={T} must be a multiple of dt={dt}")
    return n


def snapshot_steps(times: Sequence[float], dt: float, n_steps: int) -> np.ndarray:
    steps = []
    for t in times:
        s = int(round(t / dt))
        if abs(s * dt - t) > 1e-9 * max(1.0, abs(t)) or not (0 <= s <= n_steps):
            raise IntegrationError(
                f"snapshot time {t} is not a multiple of dt={dt} inside [0, {n_steps * dt}]"
            )
        steps.append(s)
    if sorted(steps) != steps:
        raise IntegrationError("snapshot times must be increasing")
    return np.asarray(steps, dtype=np.int64)


def initial_history(x0: Segment, k_sub: int) -> np.ndarray:
    """dt-resolution window from a segment, linear between nodes; exact at
    grid nodes."""
    vals = x0.values
    if k_sub == 1:
        return vals.copy()
    n_grid = x0.grid.n_grid
    n_hist = n_grid * k_sub + 1
    j = np.arange(n_hist)
    idx = np.minimum(j // k_sub, n_grid - 1)
    frac = (j - idx * k_sub) / k_sub
    return (1.0 - frac)[:, None] * vals[idx] + frac[:, None] * vals[idx + 1]


# ---------------------------------------------------------------------------
# Single-step API
# ---------------------------------------------------------------------------

@dataclass
class PathState:
    """Stepping state between grid nodes: a dt-resolution window plus the
    number of buffered sub-steps past the last full node."""

    grid: Grid
    k_sub: int
    hist: np.ndarray  # (n_hist, dim)
    phase: int = 0

    def snapped_segment(self) -> Segment:
        return Segment(self.grid, self.hist[:: self.k_sub])


def em_step(model: ModelSpec, x: Union[Segment, PathState], dt: float, xi):
    """One explicit Euler step: X+ = x(0) + f(x) dt + g(x) sqrt(dt) xi.

    Advances the window by dt.  Returns a Segment whenever the step lands on
    a grid node (always, when dt = h); otherwise the buffered PathState.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if isinstance(x, Segment):
        model.check_segment(x)
        k = resolve_substeps(x.grid, dt)
        state = PathState(x.grid, k, initial_history(x, k), 0)
    else:
        state = PathState(x.grid, x.k_sub, x.hist.copy(), x.phase)
        if abs(state.grid.h / state.k_sub - dt) > 1e-9 * dt:
            raise IntegrationError("dt changed between buffered sub-steps")
    if xi.shape != (model.dim_m,):
        raise IntegrationError(f"need {model.dim_m} Gaussian draws, got shape {xi.shape}")

    window = state.hist[:: state.k_sub]
    f = np.asarray(model.drift_batch(window[None]), dtype=float)[0]
    g = np.asarray(model.diffusion_batch(window[None]), dtype=float)[0]
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise IntegrationError(
            f"non-finite drift/diffusion at {_describe_state(window)}"
        )
    xnew = state.hist[-1] + f * dt + (g @ xi) * np.sqrt(dt)
    state.hist[:-1] = state.hist[1:]
    state.hist[-1] = xnew
    state.phase = (state.phase + 1) % state.k_sub
    if state.phase == 0:
        return state.snapped_segment()
    return state


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

@dataclass
class Ensemble:
    """Snapshots of n_paths independent paths at the requested times.

    values[s, p] holds the grid-snapped window of path p at snapshot_times[s];
    w_sums[s, p] the accumulated driving noise; exploded_step[p] the first
    Euler step at which path p crossed the explosion threshold (-1 if never).
    """

    model_name: str
    model_params: dict
    grid: Grid
    dim: int
    dt: float
    T: float
    n_paths: int
    master_seed: int
    stream_offset: int
    snapshot_times: tuple[float, ...]
    values: np.ndarray = field(repr=False)     # (S, P, n_nodes, d)
    w_sums: np.ndarray = field(repr=False)     # (S, P, m)
    exploded_step: np.ndarray = field(repr=False)  # (P,)

    @property
    def exploded(self) -> np.ndarray:
        return self.exploded_step >= 0

    def n_exploded(self) -> int:
        return int(self.exploded.sum())

    def time_index(self, t: float) -> int:
        for i, s in enumerate(self.snapshot_times):
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return i
        raise KeyError(f"no snapshot at t={t}; have {self.snapshot_times}")

    def segment(self, t: float, path: int) -> Segment:
        return Segment(self.grid, self.values[self.time_index(t), path])

    def segments_at(self, t: float, include_exploded: bool = False) -> list[Segment]:
        i = self.time_index(t)
        keep = slice(None) if include_exploded else ~self.exploded
        return [Segment(self.grid, v) for v in self.values[i][keep]]

    def endpoints_at(self, t: float) -> np.ndarray:
        """(P, d) endpoint values at a snapshot time, exploded paths included."""
        return self.values[self.time_index(t), :, -1, :]

    def manifest(self) -> dict:
        return {
            "model": self.model_name,
            "params": self.model_params,
            "master_seed": self.master_seed,
            "stream_offset": self.stream_offset,
            "dt": self.dt,
            "T": self.T,
            "n_paths": self.n_paths,
            "r": self.grid.r,
            "n_grid": self.grid.n_grid,
            "snapshot_times": list(self.snapshot_times),
            "n_exploded": self.n_exploded(),
        }


@dataclass
class Trajectory:
    """A single path: segments at the requested snapshot times."""

    model_name: str
    dt: float
    times: tuple[float, ...]
    segments: list[Segment]
    stream: rng.RngStreamSpec
    w_sums: np.ndarray
    exploded_at: Optional[float] = None

    @property
    def exploded(self) -> bool:
        return self.exploded_at is not None


def _resolve_initials(init, n_paths: int) -> Callable[[int], Segment]:
    if isinstance(init, Segment):
        return lambda i: init
    if callable(init):
        return init
    init = list(init)
    if len(init) != n_paths:
        raise IntegrationError(f"need {n_paths} initial segments, got {len(init)}")
    return lambda i: init[i]


def simulate_ensemble(
    model: ModelSpec,
    init,
    T: float,
    dt: float,
    n_paths: int,
    master_seed: int,
    snapshot_times: Sequence[float],
    stream_offset: int = 0,
    workers: int = 1,
    explode_threshold: float = DEFAULT_EXPLODE_THRESHOLD,
    force_python: bool = False,
) -> Ensemble:
    """Simulate n_paths independent paths and snapshot the listed times.

    init may be a Segment (shared by all paths), a list of Segments, or a
    deterministic callable i -> Segment.  Exploded paths are flagged, never
    fatal.
    """
    if n_paths < 1:
        raise IntegrationError("n_paths must be >= 1")
    seg_of = _resolve_initials(init, n_paths)
    first = seg_of(0)
    model.check_segment(first)
    grid = first.grid
    k_sub = resolve_substeps(grid, dt)
    n_steps = steps_for(T, dt)
    snap = snapshot_steps(snapshot_times, dt, n_steps)

    n_nodes = grid.n_nodes
    values = np.empty((len(snap), n_paths, n_nodes, model.dim_d))
    w_sums = np.empty((len(snap), n_paths, model.dim_m))
    exploded = np.empty(n_paths, dtype=np.int64)

    def run_tile(lo: int) -> None:
        hi = min(lo + TILE, n_paths)
        hist0 = np.empty((hi - lo, grid.n_grid * k_sub + 1, model.dim_d))
        for p in range(lo, hi):
            seg = seg_of(p)
            if seg.grid != grid or seg.dim != model.dim_d:
                raise IntegrationError(f"initial segment {p} uses a different grid")
            hist0[p - lo] = initial_history(seg, k_sub)
        noise = rng.path_noise(
            master_seed, range(stream_offset + lo, stream_offset + hi),
            n_steps, model.dim_m,
        )
        snaps, wsn, expl = _backend.run_ensemble(
            model, hist0, k_sub, dt, noise, snap, explode_threshold,
            force_python=force_python,
        )
        values[:, lo:hi] = snaps
        w_sums[:, lo:hi] = wsn
        exploded[lo:hi] = expl

    tiles = list(range(0, n_paths, TILE))
    if workers <= 1 or len(tiles) == 1:
        for lo in tiles:
            run_tile(lo)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, tiles))

    return Ensemble(
        model_name=model.name,
        model_params=dict(model.metadata),
        grid=grid,
        dim=model.dim_d,
        dt=dt,
        T=T,
        n_paths=n_paths,
        master_seed=master_seed,
        stream_offset=stream_offset,
        snapshot_times=tuple(float(t) for t in snapshot_times),
        values=values,
        w_sums=w_sums,
        exploded_step=exploded,
    )


def simulate_path(
    model: ModelSpec,
    x0: Segment,
    T: float,
    dt: float,
    stream: rng.RngStreamSpec,
    snapshot_times: Sequence[float],
    explode_threshold: float = DEFAULT_EXPLODE_THRESHOLD,
    force_python: bool = False,
) -> Trajectory:
    """One path driven by the given stream; equals path stream_id of the
    corresponding ensemble."""
    ens = simulate_ensemble(
        model, x0, T, dt, 1, stream.master_seed, snapshot_times,
        stream_offset=stream.stream_id, explode_threshold=explode_threshold,
        force_python=force_python,
    )
    exploded_at = None
    if ens.exploded_step[0] >= 0:
        exploded_at = float(ens.exploded_step[0] * dt)
    return Trajectory(
        model_name=model.name,
        dt=dt,
        times=ens.snapshot_times,
        segments=[Segment(ens.grid, v) for v in ens.values[:, 0]],
        stream=stream,
        w_sums=ens.w_sums[:, 0],
        exploded_at=exploded_at,
    )


# ---------------------------------------------------------------------------
# Dumps
# ---------------------------------------------------------------------------

def dump_ensemble_csv(ens: Ensemble, path) -> None:
    """Snapshot table: path, time, grid index, dim index, value."""
    with open(path, "w") as fh:
        fh.write("path,time,grid_index,dim_index,value\n")
        for s, t in enumerate(ens.snapshot_times):
            for p in range(ens.n_paths):
                for i in range(ens.grid.n_nodes):
                    for k in range(ens.dim):
                        fh.write(f"{p},{t!r},{i},{k},{ens.values[s, p, i, k]!r}\n")


def dump_ensemble_manifest(ens: Ensemble, path) -> None:
    with open(path, "w") as fh:
        json.dump(ens.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
