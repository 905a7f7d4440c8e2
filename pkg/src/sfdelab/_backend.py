"""Backend selection: compiled stepping kernels with a pure-numpy fallback.

The compiled extension is picked at import when available; set
``SFDELAB_BACKEND=python`` to force the fallback or ``=compiled`` to require
the extension (ImportError if missing).  Models outside the compiled kernel's
reach (custom callables, dim > 1) always run through the numpy engine,
whichever backend is selected.
"""

from __future__ import annotations

import os

import numpy as np

from . import _engine_py

_choice = os.environ.get("SFDELAB_BACKEND", "auto").lower()
if _choice not in ("auto", "python", "compiled"):
    raise ValueError(f"SFDELAB_BACKEND must be auto|python|compiled, got {_choice!r}")

_kernels = None
if _choice in ("auto", "compiled"):
    try:
        from . import _kernels as _kernels  # noqa: F401
    except ImportError:
        if _choice == "compiled":
            raise
        _kernels = None


def backend_name() -> str:
    return "compiled" if _kernels is not None else "python"


def has_compiled() -> bool:
    return _kernels is not None


def kernel_supported(model) -> bool:
    return model.kernel is not None and model.dim_d == 1 and model.dim_m == 1


def run_ensemble(
    model,
    hist0: np.ndarray,
    k_sub: int,
    dt: float,
    noise: np.ndarray,
    snap_steps: np.ndarray,
    explode_threshold: float,
    force_python: bool = False,
):
    """Dispatch one lock-step ensemble run to the best available engine."""
    if not force_python and _kernels is not None and kernel_supported(model):
        desc = model.kernel
        snaps, wsnaps, exploded = _kernels.run_ensemble_desc(
            desc.drift_kind,
            np.ascontiguousarray(desc.drift_params, dtype=float),
            desc.diff_kind,
            np.ascontiguousarray(desc.diff_params, dtype=float),
            np.ascontiguousarray(desc.node_weights or (), dtype=float),
            np.ascontiguousarray(hist0[:, :, 0]),
            int(k_sub),
            float(dt),
            np.ascontiguousarray(noise[:, :, 0]),
            np.ascontiguousarray(snap_steps, dtype=np.int64),
            float(explode_threshold),
        )
        return snaps[:, :, :, None], wsnaps[:, :, None], exploded
    return _engine_py.run_ensemble(
        model, hist0, k_sub, dt, noise, snap_steps, explode_threshold
    )


def pairwise_supdist(A: np.ndarray, B: np.ndarray, force_python: bool = False) -> np.ndarray:
    """Matrix of sup-norm distances between two stacks of windows.

    A: (nA, n_nodes, d), B: (nB, n_nodes, d) -> (nA, nB).  The numpy fallback
    chunks rows to bound the broadcast memory.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if not force_python and _kernels is not None:
        return _kernels.pairwise_supdist(
            np.ascontiguousarray(A), np.ascontiguousarray(B)
        )
    nA = A.shape[0]
    out = np.empty((nA, B.shape[0]))
    chunk = max(1, int(2e7 // max(1, B.shape[0] * A.shape[1])))
    for lo in range(0, nA, chunk):
        hi = min(lo + chunk, nA)
        diff = A[lo:hi, None, :, :] - B[None, :, :, :]
        out[lo:hi] = np.sqrt((diff * diff).sum(axis=3)).max(axis=2)
    return out
