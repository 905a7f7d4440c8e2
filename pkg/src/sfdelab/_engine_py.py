"""Pure-numpy lock-step ensemble stepping.

This is the reference implementation of the hot loop: all paths advance one
Euler step per iteration, the drift and diffusion are evaluated through the
model's batch callables on the grid-snapped window, and sub-grid steps live
in a dt-resolution history buffer (no interpolation once stepping starts).

The compiled kernel (`sfdelab._kernels`) implements the same loop in C for
the registered scalar models; this module is the fallback and the engine for
custom or multi-dimensional models.
"""

from __future__ import annotations

import numpy as np


def run_ensemble(
    model,
    hist0: np.ndarray,
    k_sub: int,
    dt: float,
    noise: np.ndarray,
    snap_steps: np.ndarray,
    explode_threshold: float,
):
    """Advance all paths through len(noise[0]) Euler steps.

    Parameters
    ----------
    hist0 : (P, n_hist, d) initial dt-resolution windows, n_hist = n_grid*k_sub + 1.
    noise : (P, n_steps, m) standard normal draws.
    snap_steps : sorted unique step indices in [0, n_steps] to snapshot.

    Returns
    -------
    snaps : (S, P, n_nodes, d) grid-snapped windows at the snapshot steps.
    wsnaps : (S, P, m) accumulated Brownian motion at the snapshot steps.
    exploded_step : (P,) first step index whose update crossed the threshold
        or went non-finite, -1 if none.  Exploded paths hold their last value,
        so their window flattens; downstream statistics must mask them.
    """
    hist = np.array(hist0, dtype=float, copy=True)
    P, n_hist, d = hist.shape
    n_steps, m = noise.shape[1], noise.shape[2]
    sqrt_dt = np.sqrt(dt)
    snap_steps = np.asarray(snap_steps, dtype=np.int64)
    n_nodes = (n_hist - 1) // k_sub + 1

    snaps = np.empty((len(snap_steps), P, n_nodes, d))
    wsnaps = np.zeros((len(snap_steps), P, m))
    exploded_step = np.full(P, -1, dtype=np.int64)
    active = np.ones(P, dtype=bool)
    wsum = np.zeros((P, m))

    snap_idx = 0
    while snap_idx < len(snap_steps) and snap_steps[snap_idx] == 0:
        snaps[snap_idx] = hist[:, ::k_sub, :]
        snap_idx += 1

    for step in range(n_steps):
        window = hist[:, ::k_sub, :]
        f = np.asarray(model.drift_batch(window), dtype=float)
        g = np.asarray(model.diffusion_batch(window), dtype=float)
        xi = noise[:, step, :]
        xlast = hist[:, -1, :]
        xnew = xlast + f * dt + np.einsum("pdm,pm->pd", g, xi) * sqrt_dt
        wsum = wsum + xi * sqrt_dt

        finite = np.isfinite(xnew).all(axis=1)
        with np.errstate(over="ignore", invalid="ignore"):
            norm = np.sqrt((xnew * xnew).sum(axis=1))
        bad = ~finite | (norm > explode_threshold)
        newly = active & bad
        exploded_step[newly] = step + 1
        active &= ~bad
        xnew = np.where(active[:, None], xnew, xlast)

        hist[:, :-1, :] = hist[:, 1:, :]
        hist[:, -1, :] = xnew

        while snap_idx < len(snap_steps) and snap_steps[snap_idx] == step + 1:
            snaps[snap_idx] = hist[:, ::k_sub, :]
            wsnaps[snap_idx] = wsum
            snap_idx += 1

    return snaps, wsnaps, exploded_step
