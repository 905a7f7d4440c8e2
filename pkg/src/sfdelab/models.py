"""Delay-equation model zoo with declared drift-condition parameters.

Each builder returns an immutable :class:`ModelSpec` whose drift and diffusion
are total on finite segments.  Models that are expressible in the compiled
stepping kernel carry a :class:`KernelDescriptor`; everything else runs
through the generic batch callables.

The power-law drifts are only pinned for |z| >= 1; inside |z| < 1 we use the
odd C^1 blend h(z) = -z * q(|z|) with q(u) = 1 + (1 - gamma) * u^2 * (1 - u),
which matches value and slope at |z| = 1 (q(1) = 1, q'(1) = gamma - 1) and
keeps h(0) = 0.  The kicked models are explicit Lipschitz constructions from
smoothstep blends of the diameter functional and the clamped endpoint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .segments import Segment, diameter_of_values

__all__ = [
    "ModelError",
    "KappaSpec",
    "MeasureSpec",
    "DeclaredParams",
    "KernelDescriptor",
    "ModelSpec",
    "MonotoneMap",
    "tanh_map",
    "table_map",
    "const_diffusion",
    "scalar_map_diffusion",
    "kappa_eval",
    "smoothstep",
    "power_drift_1d",
    "make_power_delay_model",
    "make_distributed_delay_model",
    "make_delayed_ou",
    "make_diameter_kick_model",
    "make_scaled_kick_model",
    "check_kick_spread_bound",
    "make_reconstruction_model",
    "MODEL_REGISTRY",
    "build_model",
]


class ModelError(ValueError):
    """Invalid model parameters or incompatible model/segment usage."""


# drift kinds understood by the stepping kernels
DRIFT_ZERO = 0
DRIFT_LINEAR_ENDPOINT = 1  # f = -a * x(0)
DRIFT_POWER_OLDEST = 2     # f = h(x(-r)), h the blended power law
DRIFT_DISTRIBUTED = 3      # f = h(sum_i w_i x(t_i))
DRIFT_DELAYED_OU = 4       # f = -lam * x(-r)
DRIFT_DIAMETER_KICK = 5    # kick A when the window spread exceeds N+1
DRIFT_SCALED_KICK = 6      # kick 5N x(0)^beta when spread exceeds N x(0)^beta

# diffusion kinds
DIFF_CONST = 0             # scalar constant
DIFF_TANH_ENDPOINT = 1     # base + amp*tanh(scale * x(0))
DIFF_TANH_OLDEST = 2       # base + amp*tanh(scale * x(-r))
DIFF_TABLE_ENDPOINT = 3    # piecewise-linear table of x(0)
DIFF_TABLE_OLDEST = 4      # piecewise-linear table of x(-r)


@dataclass(frozen=True)
class KappaSpec:
    """Increasing concave bound kappa(z) = coeff * z**exponent on diameters."""

    coeff: float
    exponent: float

    def __post_init__(self):
        if self.coeff <= 0:
            raise ModelError(f"kappa coefficient must be positive, got {self.coeff}")
        if not (0.0 <= self.exponent <= 1.0):
            raise ModelError(f"kappa exponent must lie in [0, 1], got {self.exponent}")


def kappa_eval(spec: KappaSpec, z) -> np.ndarray | float:
    z_arr = np.asarray(z, dtype=float)
    if np.any(z_arr < 0):
        raise ModelError("kappa is defined on z >= 0")
    out = spec.coeff * np.power(z_arr, spec.exponent)
    return float(out) if np.isscalar(z) or out.ndim == 0 else out


@dataclass(frozen=True)
class MeasureSpec:
    """Finite signed measure on [-r, 0]: point atoms plus an optional
    piecewise-constant density given by cell edges and cell values."""

    atoms: tuple[tuple[float, float], ...] = ()
    density_edges: Optional[tuple[float, ...]] = None
    density_values: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if (self.density_edges is None) != (self.density_values is None):
            raise ModelError("density needs both edges and values")
        if self.density_edges is not None:
            edges = np.asarray(self.density_edges, dtype=float)
            if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
                raise ModelError("density edges must be strictly increasing")
            if len(self.density_values) != len(edges) - 1:
                raise ModelError("density needs one value per cell")
        if self.total_mass() <= 0:
            raise ModelError(
                f"measure must have positive total mass, got {self.total_mass()}"
            )

    def total_mass(self) -> float:
        mass = sum(w for _, w in self.atoms)
        if self.density_edges is not None:
            widths = np.diff(np.asarray(self.density_edges, dtype=float))
            mass += float(np.dot(widths, np.asarray(self.density_values, dtype=float)))
        return float(mass)

    def node_weights(self, r: float, n_grid: int) -> np.ndarray:
        """Quadrature weights w such that integral x dmu ~= sum_i w_i x(t_i).

        Atoms are applied exactly at their location through the segment's
        linear interpolant; the density part uses the trapezoid rule with the
        density sampled at cell midpoints (exact when its breakpoints align
        with grid nodes).
        """
        h = r / n_grid
        w = np.zeros(n_grid + 1)
        for loc, weight in self.atoms:
            if not (-r - 1e-12 <= loc <= 1e-12):
                raise ModelError(f"atom location {loc} outside [-{r}, 0]")
            pos = (loc + r) / h
            i = min(max(int(math.floor(pos)), 0), n_grid)
            frac = pos - i
            if frac <= 0 or i == n_grid:
                w[i] += weight
            else:
                w[i] += weight * (1.0 - frac)
                w[i + 1] += weight * frac
        if self.density_edges is not None:
            density_edges = np.asarray(self.density_edges, dtype=float)
            density_values = np.asarray(self.density_values, dtype=float)
            for i in range(n_grid):
                mid = -r + (i + 0.5) * h
                j = int(np.searchsorted(density_edges, mid, side="right")) - 1
                if 0 <= j < len(density_values):
                    w[i] += density_values[j] * h / 2.0
                    w[i + 1] += density_values[j] * h / 2.0
        return w


@dataclass(frozen=True)
class DeclaredParams:
    """Condition parameters a model claims about itself.

    sigma and big_m are deliberately absent for the zoo: they are outputs of
    the margin scanner, not model inputs.
    """

    beta: Optional[float] = None
    alpha: Optional[float] = None
    sigma: Optional[float] = None
    big_m: Optional[float] = None
    kappa: Optional[KappaSpec] = None
    diffusion_past_independent: bool = False

    def __post_init__(self):
        if self.beta is not None and not (0.0 <= self.beta < 1.0):
            raise ModelError(f"beta must lie in [0, 1), got {self.beta}")
        if self.alpha is not None and not (0.0 < self.alpha <= 1.0):
            raise ModelError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.sigma is not None and self.sigma <= 0:
            raise ModelError("sigma must be positive")
        if self.big_m is not None and self.big_m <= 0:
            raise ModelError("big_m must be positive")


@dataclass(frozen=True)
class KernelDescriptor:
    """Flat description of a model for the compiled stepping kernel."""

    drift_kind: int
    drift_params: tuple[float, ...]
    diff_kind: int
    diff_params: tuple[float, ...]
    node_weights: Optional[tuple[float, ...]] = None


@dataclass(frozen=True)
class ModelSpec:
    """A delay equation dX = f(X_t) dt + g(X_t) dW on histories of length r.

    drift and diffusion act on a single Segment; drift_batch / diffusion_batch
    act on stacked node-value arrays of shape (paths, n_nodes, dim) and are
    what the integrator calls in the hot loop.
    """

    name: str
    r: float
    dim_d: int
    dim_m: int
    drift: Callable[[Segment], np.ndarray] = field(repr=False)
    diffusion: Callable[[Segment], np.ndarray] = field(repr=False)
    drift_batch: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    diffusion_batch: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    declared: DeclaredParams = DeclaredParams()
    metadata: dict = field(default_factory=dict)
    kernel: Optional[KernelDescriptor] = None

    def check_segment(self, x: Segment):
        if abs(x.grid.r - self.r) > 1e-9 * max(1.0, self.r):
            raise ModelError(
                f"segment memory {x.grid.r} does not match model memory {self.r}"
            )
        if x.dim != self.dim_d:
            raise ModelError(f"segment dim {x.dim} != model dim {self.dim_d}")


def _batch_model(
    name: str,
    r: float,
    dim_d: int,
    dim_m: int,
    drift_batch,
    diffusion_batch,
    declared: DeclaredParams,
    metadata=None,
    kernel=None,
) -> ModelSpec:
    """Assemble a ModelSpec whose single-segment callables go through the
    batch implementations (single source of truth for the dynamics)."""

    def drift(x: Segment) -> np.ndarray:
        spec.check_segment(x)
        return np.asarray(drift_batch(x.values[None]))[0]

    def diffusion(x: Segment) -> np.ndarray:
        spec.check_segment(x)
        return np.asarray(diffusion_batch(x.values[None]))[0]

    spec = ModelSpec(
        name=name,
        r=r,
        dim_d=dim_d,
        dim_m=dim_m,
        drift=drift,
        diffusion=diffusion,
        drift_batch=drift_batch,
        diffusion_batch=diffusion_batch,
        declared=declared,
        metadata=dict(metadata or {}),
        kernel=kernel,
    )
    return spec


# ---------------------------------------------------------------------------
# Scalar building blocks
# ---------------------------------------------------------------------------

def smoothstep(u):
    """Cubic ramp: 0 for u <= 0, 3u^2 - 2u^3 on (0, 1), 1 for u >= 1."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


def _power_factor(rho: np.ndarray, gamma: float) -> np.ndarray:
    """Radial factor of the blended power drift: |z|^(gamma-1) outside the
    unit ball, the cubic q(|z|) inside."""
    rho = np.asarray(rho, dtype=float)
    inner = 1.0 + (1.0 - gamma) * rho * rho * (1.0 - rho)
    outer = np.power(np.maximum(rho, 1.0), gamma - 1.0)
    return np.where(rho >= 1.0, outer, inner)


def power_drift_1d(z, gamma: float):
    """The odd drift h with h(z) = -|z|^gamma sign(z) for |z| >= 1 and the
    C^1 cubic blend -z q(|z|) inside."""
    z_arr = np.asarray(z, dtype=float)
    out = -z_arr * _power_factor(np.abs(z_arr), gamma)
    return float(out) if np.isscalar(z) or out.ndim == 0 else out


def _power_drift_vec(I: np.ndarray, gamma: float) -> np.ndarray:
    """Vector version -z |z|^(gamma-1) for |z| >= 1 with the same blend."""
    rho = np.sqrt((I * I).sum(axis=-1))
    return -I * _power_factor(rho, gamma)[..., None]


# ---------------------------------------------------------------------------
# Monotone scalar maps (used as diffusions and by the reconstruction demo)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotoneMap:
    """Strictly increasing bounded map of a scalar, invertible on its range.

    kind "tanh": base + amp * tanh(scale * z), range (base - amp, base + amp).
    kind "table": piecewise-linear through (zs, gs), held flat outside.
    """

    kind: str
    params: tuple[float, ...] = ()
    zs: Optional[tuple[float, ...]] = None
    gs: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind == "tanh":
            base, amp, scale = self.params
            if amp <= 0 or scale <= 0:
                raise ModelError("tanh map needs amp > 0 and scale > 0")
        elif self.kind == "table":
            zs = np.asarray(self.zs, dtype=float)
            gs = np.asarray(self.gs, dtype=float)
            if len(zs) < 2 or np.any(np.diff(zs) <= 0):
                raise ModelError("table abscissae must be strictly increasing")
            if np.any(np.diff(gs) <= 0):
                raise ModelError(f"non-monotone table: values {self.gs} must strictly increase")
        else:
            raise ModelError(f"unknown map kind {self.kind!r}")

    @property
    def lo(self) -> float:
        if self.kind == "tanh":
            base, amp, _ = self.params
            return base - amp
        return float(self.gs[0])

    @property
    def hi(self) -> float:
        if self.kind == "tanh":
            base, amp, _ = self.params
            return base + amp
        return float(self.gs[-1])

    def __call__(self, z):
        z_arr = np.asarray(z, dtype=float)
        if self.kind == "tanh":
            base, amp, scale = self.params
            out = base + amp * np.tanh(scale * z_arr)
        else:
            out = np.interp(z_arr, self.zs, self.gs)
        return float(out) if np.isscalar(z) or out.ndim == 0 else out

    def invert(self, y: float, tol: float = 1e-12, max_iter: int = 200) -> float:
        """Bisection inverse on the open range (lo, hi)."""
        if not (self.lo < y < self.hi):
            raise ModelError(f"value {y} outside the map range ({self.lo}, {self.hi})")
        if self.kind == "table":
            a, b = float(self.zs[0]), float(self.zs[-1])
        else:
            a, b = -1.0, 1.0
            while self(a) > y:
                a *= 2.0
            while self(b) < y:
                b *= 2.0
        for _ in range(max_iter):
            mid = 0.5 * (a + b)
            if self(mid) < y:
                a = mid
            else:
                b = mid
            if b - a < tol * max(1.0, abs(mid)):
                break
        return 0.5 * (a + b)


def tanh_map(base: float, amp: float, scale: float = 1.0) -> MonotoneMap:
    return MonotoneMap(kind="tanh", params=(base, amp, scale))


def table_map(zs: Sequence[float], gs: Sequence[float]) -> MonotoneMap:
    return MonotoneMap(kind="table", zs=tuple(map(float, zs)), gs=tuple(map(float, gs)))


# ---------------------------------------------------------------------------
# Diffusion specs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionSpec:
    """Diffusion factory: constant matrix, or a bounded positive monotone map
    applied to one scalar coordinate of the history (endpoint or oldest)."""

    kind: str  # "const" | "map"
    matrix: Optional[tuple[tuple[float, ...], ...]] = None
    map: Optional[MonotoneMap] = None
    at: str = "endpoint"  # "endpoint" (= x(0)) or "oldest" (= x(-r))

    def __post_init__(self):
        if self.kind == "const":
            mat = np.asarray(self.matrix, dtype=float)
            if mat.ndim != 2:
                raise ModelError("constant diffusion needs a 2-d matrix")
            if np.linalg.matrix_rank(mat) < mat.shape[0]:
                raise ModelError("constant diffusion matrix has no right inverse")
        elif self.kind == "map":
            if self.map is None:
                raise ModelError("map diffusion needs a MonotoneMap")
            if self.map.lo <= 0:
                raise ModelError(
                    f"diffusion map must be bounded away from 0, lower bound {self.map.lo}"
                )
            if self.at not in ("endpoint", "oldest"):
                raise ModelError(f"unknown evaluation point {self.at!r}")
        else:
            raise ModelError(f"unknown diffusion kind {self.kind!r}")

    @property
    def past_independent(self) -> bool:
        return self.kind == "const" or self.at == "endpoint"

    def shape(self) -> tuple[int, int]:
        if self.kind == "const":
            mat = np.asarray(self.matrix, dtype=float)
            return mat.shape
        return (1, 1)

    def batch_fn(self):
        if self.kind == "const":
            mat = np.asarray(self.matrix, dtype=float)

            def diffusion_batch(vals: np.ndarray) -> np.ndarray:
                return np.broadcast_to(mat, (vals.shape[0],) + mat.shape).copy()

        else:
            node = -1 if self.at == "endpoint" else 0
            mono = self.map

            def diffusion_batch(vals: np.ndarray) -> np.ndarray:
                g = np.asarray(mono(vals[:, node, 0]))
                return g.reshape(-1, 1, 1)

        return diffusion_batch

    def kernel_part(self) -> Optional[tuple[int, tuple[float, ...]]]:
        """(diff_kind, params) when expressible in the compiled kernel."""
        if self.kind == "const":
            mat = np.asarray(self.matrix, dtype=float)
            if mat.shape == (1, 1):
                return DIFF_CONST, (float(mat[0, 0]),)
            return None
        if self.map.kind == "tanh":
            kind = DIFF_TANH_ENDPOINT if self.at == "endpoint" else DIFF_TANH_OLDEST
            return kind, self.map.params
        kind = DIFF_TABLE_ENDPOINT if self.at == "endpoint" else DIFF_TABLE_OLDEST
        n = len(self.map.zs)
        return kind, (float(n),) + tuple(self.map.zs) + tuple(self.map.gs)


def const_diffusion(matrix) -> DiffusionSpec:
    mat = np.atleast_2d(np.asarray(matrix, dtype=float))
    return DiffusionSpec(kind="const", matrix=tuple(map(tuple, mat)))


def scalar_map_diffusion(mono: MonotoneMap, at: str = "endpoint") -> DiffusionSpec:
    return DiffusionSpec(kind="map", map=mono, at=at)


def _resolve_diffusion(diffusion_spec, dim_d: int) -> DiffusionSpec:
    if diffusion_spec is None:
        return const_diffusion(np.eye(dim_d))
    if isinstance(diffusion_spec, DiffusionSpec):
        return diffusion_spec
    if np.isscalar(diffusion_spec):
        return const_diffusion(np.eye(dim_d) * float(diffusion_spec))
    return const_diffusion(diffusion_spec)


# ---------------------------------------------------------------------------
# The zoo
# ---------------------------------------------------------------------------

def make_power_delay_model(
    gamma: float,
    r: float = 1.0,
    diffusion_spec=None,
    n_grid_hint: int = 100,
) -> ModelSpec:
    """Scalar drift h(x(-r)) with the power law softening toward the origin.

    Pull strength |h(z)| = |z|^gamma for |z| >= 1, so gamma in (-1, 0) gives a
    bounded, weakening pull and gamma in [0, 1) a sublinear one.
    """
    if not (-1.0 < gamma < 1.0):
        raise ModelError(f"gamma must lie in (-1, 1), got {gamma}")
    diff = _resolve_diffusion(diffusion_spec, 1)
    if diff.shape() != (1, 1):
        raise ModelError("power delay model is scalar; diffusion must be 1x1")

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        return power_drift_1d(vals[:, 0, 0], gamma).reshape(-1, 1)

    declared = DeclaredParams(
        beta=max(gamma, 0.0),
        alpha=(gamma + 1.0) if gamma <= 0.0 else None,
        kappa=KappaSpec(coeff=1.0, exponent=(1.0 + gamma) / 2.0),
        diffusion_past_independent=diff.past_independent,
    )
    kpart = diff.kernel_part()
    kernel = None
    if kpart is not None:
        kernel = KernelDescriptor(DRIFT_POWER_OLDEST, (gamma,), kpart[0], kpart[1])
    return _batch_model(
        "power-delay", r, 1, 1, drift_batch, diff.batch_fn(), declared,
        metadata={"gamma": gamma, "n_grid_hint": n_grid_hint}, kernel=kernel,
    )


def make_distributed_delay_model(
    gamma: float,
    mu: MeasureSpec,
    r: float = 1.0,
    dim: int = 1,
    diffusion_spec=None,
    n_grid: int = 100,
) -> ModelSpec:
    """Drift h(integral of x over the window against a signed measure).

    The quadrature weights are frozen against the (r, n_grid) simulation grid,
    so segments fed to this model must use exactly that grid.
    """
    if not (-1.0 < gamma < 1.0):
        raise ModelError(f"gamma must lie in (-1, 1), got {gamma}")
    if not isinstance(mu, MeasureSpec):
        raise ModelError("mu must be a MeasureSpec")
    diff = _resolve_diffusion(diffusion_spec, dim)
    if diff.shape()[0] != dim:
        raise ModelError("diffusion rows must match model dimension")
    weights = mu.node_weights(r, n_grid)

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        if vals.shape[1] != len(weights):
            raise ModelError(
                f"distributed-delay model is bound to n_grid={len(weights) - 1}, "
                f"got a window of {vals.shape[1]} nodes"
            )
        I = np.einsum("pnd,n->pd", vals, weights)
        return _power_drift_vec(I, gamma)

    declared = DeclaredParams(
        beta=max(gamma, 0.0),
        alpha=(gamma + 1.0) if gamma <= 0.0 else None,
        kappa=KappaSpec(coeff=1.0, exponent=(1.0 + gamma) / 2.0),
        diffusion_past_independent=diff.past_independent,
    )
    kernel = None
    kpart = diff.kernel_part()
    if dim == 1 and kpart is not None:
        kernel = KernelDescriptor(
            DRIFT_DISTRIBUTED, (gamma,), kpart[0], kpart[1],
            node_weights=tuple(float(w) for w in weights),
        )
    return _batch_model(
        "distributed-delay", r, dim, diff.shape()[1], drift_batch, diff.batch_fn(),
        declared, metadata={"gamma": gamma, "n_grid": n_grid,
                            "total_mass": mu.total_mass()},
        kernel=kernel,
    )


def make_delayed_ou(lam: float) -> ModelSpec:
    """dX(t) = -lam X(t-1) dt + dW(t): linear pull on the delayed coordinate.

    Loses its invariant measure at lam = pi/2 (recorded in metadata); used as
    the boundary case that no endpoint-style drift condition can cover.
    """
    if lam <= 0:
        raise ModelError(f"lam must be positive, got {lam}")

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        return (-lam * vals[:, 0, 0]).reshape(-1, 1)

    def diffusion_batch(vals: np.ndarray) -> np.ndarray:
        return np.ones((vals.shape[0], 1, 1))

    return _batch_model(
        "delayed-ou", 1.0, 1, 1, drift_batch, diffusion_batch,
        DeclaredParams(diffusion_past_independent=True),
        metadata={"lam": lam, "stability_threshold": math.pi / 2.0},
        kernel=KernelDescriptor(DRIFT_DELAYED_OU, (lam,), DIFF_CONST, (1.0,)),
    )


def make_diameter_kick_model(N: float, A: float) -> ModelSpec:
    """Bounded scalar drift that points inward on small-spread windows but
    fires a kick of size A once the window spread reaches N + 1.

    f(x) = A*s(D(x) - N) - (1 - s(D(x) - N)) * clamp(x(0), -1, 1) with s the
    cubic smoothstep, so exactly f = A when D(x) >= N + 1, and
    f(x) x(0) = -|x(0)| when D(x) <= N and |x(0)| >= 1.  Memory r = 2.
    """
    if N <= 0 or A <= 0:
        raise ModelError("N and A must be positive")

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        v = vals[:, :, 0]
        D = v.max(axis=1) - v.min(axis=1)
        x0 = v[:, -1]
        s = smoothstep(D - N)
        f = A * s - (1.0 - s) * np.clip(x0, -1.0, 1.0)
        return f.reshape(-1, 1)

    def diffusion_batch(vals: np.ndarray) -> np.ndarray:
        return np.ones((vals.shape[0], 1, 1))

    return _batch_model(
        "diameter-kick", 2.0, 1, 1, drift_batch, diffusion_batch,
        DeclaredParams(beta=0.0, kappa=KappaSpec(coeff=N, exponent=0.0),
                       diffusion_past_independent=True),
        metadata={"N": N, "A": A},
        kernel=KernelDescriptor(DRIFT_DIAMETER_KICK, (N, A), DIFF_CONST, (1.0,)),
    )


def make_scaled_kick_model(N: float, beta: float) -> ModelSpec:
    """Scalar drift that fires a kick 5N x(0)^beta once the window spread
    exceeds N x(0)^beta (and x(0) is above 1), otherwise points inward.

    The kick region and the inward region are joined by smoothstep blends in
    x(0) - 1 and D(x) - N max(x(0), 1)^beta; the blend is one valid Lipschitz
    completion of the prescribed regional behavior.  Memory r = 2.
    """
    if N <= 1:
        raise ModelError(f"N must exceed 1, got {N}")
    if not (0.0 < beta < 1.0):
        raise ModelError(f"beta must lie in (0, 1), got {beta}")

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        v = vals[:, :, 0]
        D = v.max(axis=1) - v.min(axis=1)
        x0 = v[:, -1]
        b = np.power(np.maximum(x0, 1.0), beta)
        w = smoothstep(x0 - 1.0) * smoothstep(D - N * b)
        f = 5.0 * N * b * w - (1.0 - w) * np.clip(x0, -1.0, 1.0)
        return f.reshape(-1, 1)

    def diffusion_batch(vals: np.ndarray) -> np.ndarray:
        return np.ones((vals.shape[0], 1, 1))

    z0 = (2.0 * N) ** (1.0 / (1.0 - beta))
    return _batch_model(
        "scaled-diameter-kick", 2.0, 1, 1, drift_batch, diffusion_batch,
        DeclaredParams(beta=beta, kappa=KappaSpec(coeff=N - 1.0, exponent=beta),
                       diffusion_past_independent=True),
        metadata={"N": N, "beta": beta, "z0": z0},
        kernel=KernelDescriptor(DRIFT_SCALED_KICK, (N, beta), DIFF_CONST, (1.0,)),
    )


def check_kick_spread_bound(
    x: Segment, N: float, beta: float, t1: float, t2: float,
    atol: float = 1e-9,
) -> bool:
    """Window-spread lower bound behind the scaled-kick runaway argument.

    Preconditions (checked, error if violated): x is scalar with memory 2,
    t1, t2 in [-2, 0], x(t2) >= z0 = (2N)^(1/(1-beta)) and
    x(t1) >= x(t2) + 2N x(t2)^beta.  Returns whether D(x) >= N |x(0)|^beta,
    which the construction guarantees; a False return is a counterexample.
    """
    if N <= 1 or not (0.0 < beta < 1.0):
        raise ModelError("need N > 1 and beta in (0, 1)")
    if abs(x.grid.r - 2.0) > 1e-9 or x.dim != 1:
        raise ModelError("segment must be scalar with memory r = 2")
    if not (-2.0 <= t1 <= 0.0 and -2.0 <= t2 <= 0.0):
        raise ModelError("t1, t2 must lie in [-2, 0]")
    z0 = (2.0 * N) ** (1.0 / (1.0 - beta))
    v2 = float(x.eval_at(t2)[0])
    v1 = float(x.eval_at(t1)[0])
    if v2 < z0:
        raise ModelError(f"x(t2) = {v2} below the threshold {z0}")
    if v1 < v2 + 2.0 * N * v2**beta:
        raise ModelError("x(t1) must exceed x(t2) + 2N x(t2)^beta")
    x0 = abs(float(x.endpoint()[0]))
    from .segments import diameter

    return diameter(x) + atol >= N * x0**beta


@dataclass(frozen=True)
class ScalarDriftSpec:
    """One-dimensional drift of the delayed coordinate for the reconstruction
    model: kind "power" (blended power pull, param = gamma), "linear"
    (param = rate of -rate*z) or "zero"."""

    kind: str
    param: float = 0.0

    def fn(self):
        if self.kind == "power":
            gamma = self.param
            if not (-1.0 < gamma < 1.0):
                raise ModelError(f"gamma must lie in (-1, 1), got {gamma}")
            return lambda z: power_drift_1d(z, gamma)
        if self.kind == "linear":
            rate = self.param
            return lambda z: -rate * np.asarray(z, dtype=float)
        if self.kind == "zero":
            return lambda z: np.zeros_like(np.asarray(z, dtype=float))
        raise ModelError(f"unknown scalar drift kind {self.kind!r}")


def make_reconstruction_model(
    drift_1d: ScalarDriftSpec, g_mono: MonotoneMap
) -> ModelSpec:
    """Scalar model driven entirely by the delayed coordinate:
    dX(t) = f(X(t-1)) dt + g(X(t-1)) dW(t) with g positive, strictly
    increasing and bounded.

    Because the noise level reveals X(t-1), an observed window determines the
    window one memory-length earlier; the diffusion is declared
    past-dependent.
    """
    if g_mono.lo <= 0:
        raise ModelError(f"g must be positive; lower bound {g_mono.lo}")
    diff = scalar_map_diffusion(g_mono, at="oldest")
    h = drift_1d.fn()

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        return np.asarray(h(vals[:, 0, 0])).reshape(-1, 1)

    beta = None
    if drift_1d.kind == "power":
        beta = max(drift_1d.param, 0.0)
    elif drift_1d.kind == "zero":
        beta = 0.0
    kernel = None
    kpart = diff.kernel_part()
    if kpart is not None:
        if drift_1d.kind == "power":
            kernel = KernelDescriptor(DRIFT_POWER_OLDEST, (drift_1d.param,), *kpart)
        elif drift_1d.kind == "linear":
            kernel = KernelDescriptor(DRIFT_DELAYED_OU, (drift_1d.param,), *kpart)
        else:
            kernel = KernelDescriptor(DRIFT_ZERO, (), *kpart)
    return _batch_model(
        "reconstruction", 1.0, 1, 1, drift_batch, diff.batch_fn(),
        DeclaredParams(beta=beta, diffusion_past_independent=False),
        metadata={"drift_kind": drift_1d.kind, "drift_param": drift_1d.param,
                  "g_lo": g_mono.lo, "g_hi": g_mono.hi},
        kernel=kernel,
    )


def make_linear_endpoint_model(rate: float = 1.0, noise: float = 0.0,
                               r: float = 1.0) -> ModelSpec:
    """Test model f(x) = -rate * x(0) with constant scalar noise; decays to 0
    deterministically when noise = 0."""
    if rate <= 0:
        raise ModelError("rate must be positive")

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        return -rate * vals[:, -1, :]

    def diffusion_batch(vals: np.ndarray) -> np.ndarray:
        return np.full((vals.shape[0], 1, 1), noise)

    kernel = None
    if noise > 0:
        kernel = KernelDescriptor(DRIFT_LINEAR_ENDPOINT, (rate,), DIFF_CONST, (noise,))
    return _batch_model(
        "linear-endpoint", r, 1, 1, drift_batch, diffusion_batch,
        DeclaredParams(diffusion_past_independent=True),
        metadata={"rate": rate, "noise": noise}, kernel=kernel,
    )


def make_frozen_model(r: float = 1.0, noise: float = 0.0) -> ModelSpec:
    """Test model with zero drift; noise = 0 freezes the path entirely."""

    def drift_batch(vals: np.ndarray) -> np.ndarray:
        return np.zeros((vals.shape[0], 1))

    def diffusion_batch(vals: np.ndarray) -> np.ndarray:
        return np.full((vals.shape[0], 1, 1), noise)

    return _batch_model(
        "frozen", r, 1, 1, drift_batch, diffusion_batch,
        DeclaredParams(beta=0.0, diffusion_past_independent=True),
        metadata={"noise": noise},
        kernel=KernelDescriptor(DRIFT_ZERO, (), DIFF_CONST, (noise,)),
    )


# ---------------------------------------------------------------------------
# Registry / config loading
# ---------------------------------------------------------------------------

def _build_power_delay(params: dict) -> ModelSpec:
    diff = _diffusion_from_config(params.pop("diffusion", None))
    return make_power_delay_model(
        gamma=params.pop("gamma"), r=params.pop("r", 1.0), diffusion_spec=diff,
        n_grid_hint=params.pop("n_grid_hint", 100),
    )


def _build_distributed(params: dict) -> ModelSpec:
    diff = _diffusion_from_config(params.pop("diffusion", None))
    mu_cfg = params.pop("mu")
    mu = MeasureSpec(
        atoms=tuple((float(a), float(w)) for a, w in mu_cfg.get("atoms", [])),
        density_edges=tuple(mu_cfg["density_edges"]) if "density_edges" in mu_cfg else None,
        density_values=tuple(mu_cfg["density_values"]) if "density_values" in mu_cfg else None,
    )
    return make_distributed_delay_model(
        gamma=params.pop("gamma"), mu=mu, r=params.pop("r", 1.0),
        dim=params.pop("dim", 1), diffusion_spec=diff,
        n_grid=params.pop("n_grid", 100),
    )


def _build_reconstruction(params: dict) -> ModelSpec:
    g_cfg = params.pop("g")
    if g_cfg.get("kind", "tanh") == "tanh":
        mono = tanh_map(g_cfg["base"], g_cfg["amp"], g_cfg.get("scale", 1.0))
    else:
        mono = table_map(g_cfg["zs"], g_cfg["gs"])
    drift_cfg = params.pop("drift", {"kind": "power", "param": 0.0})
    return make_reconstruction_model(
        ScalarDriftSpec(drift_cfg["kind"], drift_cfg.get("param", 0.0)), mono
    )


def _diffusion_from_config(cfg):
    if cfg is None:
        return None
    if np.isscalar(cfg):
        return const_diffusion([[float(cfg)]])
    if cfg.get("kind") == "const":
        return const_diffusion(cfg["matrix"])
    mono = (
        tanh_map(cfg["base"], cfg["amp"], cfg.get("scale", 1.0))
        if cfg.get("map", "tanh") == "tanh"
        else table_map(cfg["zs"], cfg["gs"])
    )
    return scalar_map_diffusion(mono, at=cfg.get("at", "endpoint"))


MODEL_REGISTRY: dict[str, Callable[[dict], ModelSpec]] = {
    "power-delay": _build_power_delay,
    "distributed-delay": _build_distributed,
    "delayed-ou": lambda p: make_delayed_ou(lam=p.pop("lam")),
    "diameter-kick": lambda p: make_diameter_kick_model(N=p.pop("N"), A=p.pop("A")),
    "scaled-diameter-kick": lambda p: make_scaled_kick_model(
        N=p.pop("N"), beta=p.pop("beta")
    ),
    "reconstruction": _build_reconstruction,
    "linear-endpoint": lambda p: make_linear_endpoint_model(
        rate=p.pop("rate", 1.0), noise=p.pop("noise", 0.0), r=p.pop("r", 1.0)
    ),
    "frozen": lambda p: make_frozen_model(
        r=p.pop("r", 1.0), noise=p.pop("noise", 0.0)
    ),
}


def build_model(name: str, params: Optional[dict] = None) -> ModelSpec:
    """Instantiate a registered model by name; unknown names list the registry."""
    if name not in MODEL_REGISTRY:
        raise ModelError(
            f"unknown model {name!r}; registered models: {sorted(MODEL_REGISTRY)}"
        )
    params = dict(params or {})
    try:
        model = MODEL_REGISTRY[name](params)
    except KeyError as exc:
        raise ModelError(f"model {name!r} is missing parameter {exc}") from exc
    if params:
        raise ModelError(f"model {name!r} got unknown parameters {sorted(params)}")
    return model
