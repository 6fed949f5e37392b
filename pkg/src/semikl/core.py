"""Core state containers for the periodic simulation box.

Quantum states are finite-rank mixtures rho = sum_j lambda_j |psi_j><psi_j|
with orthonormal components stored on a uniform periodic grid; classical
states are weighted particle ensembles.  All user-facing coordinates
(packet centers, moment weights, kernel distances) are box-centered: the
box [0, L)^d is addressed by x_c = x - L/2 in [-L/2, L/2)^d, with the
minimal-image convention for displacements.

The periodic box is a computational stand-in for free space, so every
run has a validity horizon: once more than ``HORIZON_THRESHOLD`` of the
mass sits in the outermost ``SHELL_CELLS`` grid cells, observables are
no longer trusted and runs truncate with a warning.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import HorizonError, HorizonWarning, RankDeficiencyError, ResolutionError

# Width of the boundary shell used for horizon checks, in grid cells.
SHELL_CELLS = 2
# Relative boundary mass beyond which a run aborts.
HORIZON_THRESHOLD = 1e-6
# Boundary mass allowed for freshly constructed localized states.
CONSTRUCTION_BOUNDARY_TOL = 1e-10

_GRAM_TOL = 1e-10


@dataclass(frozen=True)
class SimParams:
    """Discretization parameters: d dimensions, N^d periodic grid of side L."""

    d: int
    grid_points: int
    box_length: float
    hbar: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"d must be 1, 2 or 3, got {self.d}")
        n = self.grid_points
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError(f"grid_points must be a power of two >= 4, got {n}")
        if not self.box_length > 0:
            raise ValueError("box_length must be positive")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")

    @property
    def dx(self) -> float:
        return self.box_length / self.grid_points

    @property
    def cell_volume(self) -> float:
        return self.dx**self.d

    @property
    def shape(self) -> tuple:
        return (self.grid_points,) * self.d


@lru_cache(maxsize=None)
def centered_axis(params: SimParams) -> np.ndarray:
    """Grid coordinates measured from the box center, in [-L/2, L/2)."""
    n = params.grid_points
    return np.arange(n) * params.dx - params.box_length / 2.0


@lru_cache(maxsize=None)
def centered_grids(params: SimParams) -> tuple:
    """Broadcastable centered coordinate arrays, one per axis."""
    ax = centered_axis(params)
    out = []
    for i in range(params.d):
        shape = [1] * params.d
        shape[i] = params.grid_points
        out.append(ax.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=None)
def wavenumber_grids(params: SimParams) -> tuple:
    """Broadcastable angular wavenumber arrays k_i = 2*pi*freq."""
    k = 2.0 * np.pi * np.fft.fftfreq(params.grid_points, d=params.dx)
    out = []
    for i in range(params.d):
        shape = [1] * params.d
        shape[i] = params.grid_points
        out.append(k.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=None)
def k_squared(params: SimParams) -> np.ndarray:
    ks = wavenumber_grids(params)
    out = np.zeros(params.shape)
    for k in ks:
        out = out + k**2
    return out


@lru_cache(maxsize=None)
def radius_squared(params: SimParams) -> np.ndarray:
    """|x_c|^2 on the grid (distance from box center)."""
    xs = centered_grids(params)
    out = np.zeros(params.shape)
    for x in xs:
        out = out + x**2
    return out


@lru_cache(maxsize=None)
def boundary_mask(params: SimParams) -> np.ndarray:
    """True on the outermost SHELL_CELLS cells of any axis."""
    edge = params.box_length / 2.0 - SHELL_CELLS * params.dx
    mask = np.zeros(params.shape, dtype=bool)
    for x in centered_grids(params):
        mask |= np.broadcast_to(np.abs(x) >= edge, params.shape)
    return mask


def wrap_positions(x: np.ndarray, box_length: float) -> np.ndarray:
    """Wrap raw positions into [0, L)."""
    return np.mod(x, box_length)


def wrap_centered(u: np.ndarray, box_length: float) -> np.ndarray:
    """Minimal-image representative of a displacement, in [-L/2, L/2)."""
    half = box_length / 2.0
    return np.mod(u + half, box_length) - half


@dataclass
class DensityField:
    """Nonnegative position density on the grid; integral equals mass."""

    params: SimParams
    values: np.ndarray

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.params.cell_volume)

    def boundary_fraction(self) -> float:
        total = self.values.sum()
        if total <= 0.0:
            return 0.0
        return float(self.values[boundary_mask(self.params)].sum() / total)


@dataclass
class QuantumMixedState:
    """Finite-rank mixture with L2-normalized, mutually orthogonal components.

    ``weights`` carries the mass bookkeeping (sum lambda_j = mass); each
    row of ``psi`` is one component on the grid, normalized so that
    sum |psi_j|^2 * dx^d = 1.
    """

    params: SimParams
    weights: np.ndarray
    psi: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.psi = np.asarray(self.psi, dtype=complex)
        if self.weights.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if self.psi.shape != (self.weights.size,) + self.params.shape:
            raise ValueError(
                f"psi shape {self.psi.shape} does not match "
                f"(J,) + grid shape {(self.weights.size,) + self.params.shape}"
            )
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def rank(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def hbar(self) -> float:
        return self.params.hbar

    def density(self) -> DensityField:
        vals = np.einsum("j,j...->...", self.weights, np.abs(self.psi) ** 2)
        return DensityField(self.params, vals)

    def inner_products(self) -> np.ndarray:
        """Gram matrix <psi_i, psi_j> under the grid quadrature."""
        flat = self.psi.reshape(self.rank, -1)
        return (flat.conj() @ flat.T) * self.params.cell_volume

    def gram_defect(self) -> float:
        g = self.inner_products()
        return float(np.abs(g - np.eye(self.rank)).max())

    def copy(self) -> "QuantumMixedState":
        return QuantumMixedState(self.params, self.weights.copy(), self.psi.copy())


@dataclass
class ClassicalEnsemble:
    """Weighted particles; positions stored wrapped into [0, L)^d."""

    params: SimParams
    positions: np.ndarray
    velocities: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.positions = wrap_positions(
            np.asarray(self.positions, dtype=float), self.params.box_length
        )
        self.velocities = np.asarray(self.velocities, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        n = self.weights.size
        if self.positions.shape != (n, self.params.d):
            raise ValueError("positions must have shape (count, d)")
        if self.velocities.shape != (n, self.params.d):
            raise ValueError("velocities must have shape (count, d)")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")

    @property
    def count(self) -> int:
        return self.weights.size

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    def centered_positions(self) -> np.ndarray:
        return self.positions - self.params.box_length / 2.0

    def copy(self) -> "ClassicalEnsemble":
        return ClassicalEnsemble(
            self.params,
            self.positions.copy(),
            self.velocities.copy(),
            self.weights.copy(),
        )


def boundary_mass_fraction(obj) -> float:
    """Mass fraction inside the boundary shell, for any state container."""
    if isinstance(obj, DensityField):
        return obj.boundary_fraction()
    if isinstance(obj, QuantumMixedState):
        return obj.density().boundary_fraction()
    if isinstance(obj, ClassicalEnsemble):
        if obj.mass == 0.0:
            return 0.0
        edge = obj.params.box_length / 2.0 - SHELL_CELLS * obj.params.dx
        near = np.any(np.abs(obj.centered_positions()) >= edge, axis=1)
        return float(obj.weights[near].sum() / obj.mass)
    raise TypeError(f"no boundary mass for {type(obj).__name__}")


def check_horizon(obj, threshold: float = HORIZON_THRESHOLD, action: str = "warn") -> float:
    """Check the validity horizon; warn or raise when breached."""
    frac = boundary_mass_fraction(obj)
    if frac > threshold:
        msg = (
            f"boundary shell holds {frac:.3e} of the mass "
            f"(validity horizon {threshold:.1e}); periodic-box results "
            "are no longer a faithful free-space proxy"
        )
        if action == "raise":
            raise HorizonError(msg)
        warnings.warn(msg, HorizonWarning, stacklevel=2)
    return frac


def normalize_components(params: SimParams, psi: np.ndarray) -> np.ndarray:
    """L2-normalize each component under the grid quadrature."""
    psi = np.asarray(psi, dtype=complex)
    flat = psi.reshape(psi.shape[0], -1)
    norms = np.sqrt((np.abs(flat) ** 2).sum(axis=1) * params.cell_volume)
    if np.any(norms == 0):
        j = int(np.argmin(norms))
        raise ValueError(f"component {j} has zero norm")
    return psi / norms.reshape((-1,) + (1,) * params.d)


def orthonormalize(state: QuantumMixedState) -> QuantumMixedState:
    """Re-express the mixture over an orthonormal family.

    The operator sum lambda_j |psi_j><psi_j| built from possibly
    non-orthogonal components is re-diagonalized: the result spans the
    same subspace, has an orthonormal component family and reproduces the
    operator (hence every observable).  Total mass is preserved exactly.
    """
    j = state.rank
    gram = state.inner_products()
    evals, evecs = np.linalg.eigh(gram)
    tol = max(evals.max(), 1.0) * 1e-12
    if evals.min() < tol:
        # name the input component most aligned with the null direction
        null_vec = evecs[:, int(np.argmin(evals))]
        offender = int(np.argmax(np.abs(null_vec)))
        raise RankDeficiencyError(
            offender,
            f"wavefunction family is rank deficient (Gram eigenvalue "
            f"{evals.min():.3e}); component {offender} is linearly "
            "dependent on the others",
        )
    # orthonormal basis e_a = sum_j (U D^-1/2)_{ja} psi_j
    basis_coef = evecs / np.sqrt(evals)
    flat = state.psi.reshape(j, -1)
    basis = basis_coef.T @ flat
    # the mixture operator in that basis, then its spectral decomposition
    half = evecs * np.sqrt(evals)  # D^1/2 in the same convention
    rho = half.T.conj() @ np.diag(state.weights) @ half
    new_w, w_vecs = np.linalg.eigh(rho)
    new_w = np.clip(new_w[::-1], 0.0, None)
    w_vecs = w_vecs[:, ::-1]
    new_flat = w_vecs.T @ basis
    total = new_w.sum()
    if total > 0:
        new_w = new_w * (state.mass / total)  # exact mass bookkeeping
    new_psi = normalize_components(
        state.params, new_flat.reshape((j,) + state.params.shape)
    )
    return QuantumMixedState(state.params, new_w, new_psi)


def mixed_state(
    params: SimParams,
    weights,
    psi,
    orthonormal: bool = False,
) -> QuantumMixedState:
    """Build a state from raw fields, normalizing and optionally orthonormalizing."""
    state = QuantumMixedState(
        params, np.asarray(weights, dtype=float), normalize_components(params, psi)
    )
    if not orthonormal and state.rank > 1 and state.gram_defect() > _GRAM_TOL:
        state = orthonormalize(state)
    return state


def coherent_state(
    params: SimParams,
    center,
    momentum,
    width: float,
    mass: float = 1.0,
) -> QuantumMixedState:
    """Gaussian wave packet with position variance width^2 per coordinate.

    psi propto exp(-|x - x0|^2 / (4 width^2)) * exp(i xi0 . x / hbar),
    normalized on the grid.  Center and momentum are box-centered
    coordinates.  Raises ResolutionError when the grid cannot resolve the
    packet and HorizonError when its tail touches the boundary shell.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    momentum = np.atleast_1d(np.asarray(momentum, dtype=float))
    if center.size != params.d or momentum.size != params.d:
        raise ValueError("center and momentum must have d components")
    if width < 2.0 * params.dx:
        raise ResolutionError(
            f"packet width {width:g} below two grid spacings "
            f"({2 * params.dx:g}); refine the grid or widen the packet"
        )
    xs = centered_grids(params)
    r2 = np.zeros(params.shape)
    phase = np.zeros(params.shape)
    for i in range(params.d):
        r2 = r2 + (xs[i] - center[i]) ** 2
        phase = phase + momentum[i] * xs[i]
    psi = np.exp(-r2 / (4.0 * width**2) + 1j * phase / params.hbar)
    state = QuantumMixedState(
        params,
        np.array([mass], dtype=float),
        normalize_components(params, psi[None, ...]),
    )
    frac = boundary_mass_fraction(state)
    if frac > CONSTRUCTION_BOUNDARY_TOL:
        raise HorizonError(
            f"coherent state leaks {frac:.2e} of its mass into the boundary "
            f"shell (limit {CONSTRUCTION_BOUNDARY_TOL:.0e}); enlarge the box "
            "or recenter the packet"
        )
    return state


def sample_classical_gaussian(
    params: SimParams,
    center,
    momentum,
    sigma_x: float,
    sigma_v: float,
    count: int,
    seed: int,
    mass: float = 1.0,
) -> ClassicalEnsemble:
    """Draw an equal-weight Gaussian phase-space ensemble (deterministic in seed)."""
    center = np.atleast_1d(np.asarray(center, dtype=float))
    momentum = np.atleast_1d(np.asarray(momentum, dtype=float))
    if count < 1:
        raise ValueError("count must be at least 1")
    rng = np.random.default_rng(seed)
    x = center + sigma_x * rng.standard_normal((count, params.d))
    v = momentum + sigma_v * rng.standard_normal((count, params.d))
    w = np.full(count, mass / count)
    return ClassicalEnsemble(params, x + params.box_length / 2.0, v, w)


def random_mixed_state(
    params: SimParams,
    rank: int,
    seed: int,
    x_scale: "float | None" = None,
    k_scale: "float | None" = None,
    mass: float = 1.0,
) -> QuantumMixedState:
    """Smooth localized random mixture, for identity suites and tests.

    Components are band-limited complex noise under a Gaussian envelope,
    then orthonormalized; weights are a random simplex point scaled to
    ``mass``.
    """
    rng = np.random.default_rng(seed)
    if x_scale is None:
        x_scale = params.box_length / 10.0
    if k_scale is None:
        k_scale = 1.0 / x_scale
    noise = rng.standard_normal((rank,) + params.shape) + 1j * rng.standard_normal(
        (rank,) + params.shape
    )
    envelope_k = np.exp(-k_squared(params) / (2.0 * k_scale**2))
    envelope_x = np.exp(-radius_squared(params) / (4.0 * x_scale**2))
    smooth = sfft.ifftn(noise * envelope_k[None, ...], axes=tuple(range(1, params.d + 1)))
    psi = smooth * envelope_x[None, ...]
    w = rng.dirichlet(np.ones(rank)) * mass
    state = mixed_state(params, w, psi)
    if state.rank > 1:
        state = orthonormalize(state)
    return state
