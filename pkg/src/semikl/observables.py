"""Moments, weighted densities, Lebesgue and Schatten norms, moment series.

Conventions
-----------
* Position moments use box-centered coordinates with the minimal-image
  rule, so a packet at the box center has the moments of its free-space
  counterpart.
* Momentum moments are spectral: M_n = sum_j lambda_j <|hbar k|^n>_j.
* Transported moments L_n(t) = Tr(|x - t p|^n rho) are evaluated through
  the impulsion boost identity L_n = t^n M_n(boost(state, 1/t)).  When
  the boost phase oscillates too fast for the grid (small t), the same
  operator is applied directly as products of (x_i - t p_i); the two
  routes agree to rounding in the resolvable regime.
* The scaled operator norm ||rho||_{S^r} carries the h^{-d/r'} prefactor
  (h = 2 pi hbar) so that it is comparable with classical L^r norms of
  phase-space densities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft

from .core import (
    HORIZON_THRESHOLD,
    ClassicalEnsemble,
    DensityField,
    QuantumMixedState,
    SimParams,
    centered_grids,
    check_horizon,
    k_squared,
    radius_squared,
    wavenumber_grids,
    wrap_centered,
)
from .errors import ResolutionError, SemiklError

#: safety factor on the Nyquist wavenumber for the boost-route check
_BOOST_NYQUIST_FRACTION = 0.5


def holder_conjugate(p: float) -> float:
    """p' with 1/p + 1/p' = 1, handling the 1 and infinity endpoints."""
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    if p <= 1:
        raise ValueError(f"exponent must be >= 1, got {p}")
    return p / (p - 1.0)


def moment_M(obj, n: int) -> float:
    """n-th absolute momentum moment."""
    _check_order(n)
    if isinstance(obj, ClassicalEnsemble):
        speed2 = (obj.velocities**2).sum(axis=1)
        return float((obj.weights * speed2 ** (n / 2.0)).sum())
    state: QuantumMixedState = obj
    p = state.params
    axes = tuple(range(1, p.d + 1))
    psi_hat2 = np.abs(sfft.fftn(state.psi, axes=axes)) ** 2
    mult = (p.hbar**2 * k_squared(p)) ** (n / 2.0)
    norm = p.cell_volume / p.grid_points**p.d
    per_comp = (psi_hat2 * mult[None, ...]).sum(axis=axes)
    return float(state.weights @ per_comp * norm)


def moment_N(obj, n: int, horizon_check: bool = True) -> float:
    """n-th absolute position moment about the box center."""
    _check_order(n)
    if horizon_check:
        check_horizon(obj, HORIZON_THRESHOLD, action="warn")
    if isinstance(obj, ClassicalEnsemble):
        r2 = (obj.centered_positions() ** 2).sum(axis=1)
        return float((obj.weights * r2 ** (n / 2.0)).sum())
    state: QuantumMixedState = obj
    rho = state.density()
    wgt = radius_squared(state.params) ** (n / 2.0)
    return float((rho.values * wgt).sum() * state.params.cell_volume)


def moment_L(obj, n: int, t: float, horizon_check: bool = True) -> float:
    """Transported position moment Tr(|x - t p|^n rho); t = 0 reduces to N_n."""
    _check_order(n)
    if t == 0.0:
        return moment_N(obj, n, horizon_check=horizon_check)
    if isinstance(obj, ClassicalEnsemble):
        if horizon_check:
            check_horizon(obj, HORIZON_THRESHOLD, action="warn")
        disp = wrap_centered(
            obj.centered_positions() - t * obj.velocities, obj.params.box_length
        )
        r2 = (disp**2).sum(axis=1)
        return float((obj.weights * r2 ** (n / 2.0)).sum())
    state: QuantumMixedState = obj
    if boost_resolvable(state.params, 1.0 / t):
        from .transport import impulsion_boost

        return t**n * moment_M(impulsion_boost(state, 1.0 / t), n)
    return _moment_L_operator(state, n, t)


def boost_resolvable(params: SimParams, s: float) -> bool:
    """Whether the quadratic boost phase exp(-i s|x|^2/(2 hbar)) fits the grid.

    The phase has local wavenumber |s| |x| / hbar, largest at the box
    edge; it must stay below a fraction of the Nyquist wavenumber for
    spectral momentum quadrature of the boosted state to be trusted.
    """
    k_max = abs(s) * (params.box_length / 2.0) / params.hbar
    return k_max <= _BOOST_NYQUIST_FRACTION * math.pi / params.dx


def _apply_transported(state: QuantumMixedState, psi: np.ndarray, t: float, axis: int):
    """(x_i - t p_i) psi for one axis, spectral derivative, centered x."""
    p = state.params
    k = 2.0 * np.pi * np.fft.fftfreq(p.grid_points, d=p.dx)
    shape = [1] * p.d
    shape[axis] = p.grid_points
    k = k.reshape(shape)
    dpsi = sfft.ifft(sfft.fft(psi, axis=axis) * (1j * k), axis=axis)
    x = centered_grids(p)[axis]
    return x * psi - t * (-1j * p.hbar) * dpsi


def _moment_L_operator(state: QuantumMixedState, n: int, t: float) -> float:
    """L_n by repeated application of A = sum_i (x_i - t p_i)^2."""
    p = state.params
    m = n // 2

    def apply_a(psi):
        out = np.zeros_like(psi)
        for ax in range(p.d):
            out += _apply_transported(state, _apply_transported(state, psi, t, ax), t, ax)
        return out

    total = 0.0
    for lam, psi in zip(state.weights, state.psi):
        if m == 1:
            acc = 0.0
            for ax in range(p.d):
                b = _apply_transported(state, psi, t, ax)
                acc += float((np.abs(b) ** 2).sum()) * p.cell_volume
            total += lam * acc
            continue
        left = psi
        for _ in range(m // 2):
            left = apply_a(left)
        right = left if m % 2 == 0 else apply_a(left)
        val = float(np.real(np.vdot(left, right))) * p.cell_volume
        total += lam * val
    return total


def weighted_density(state: QuantumMixedState, k: int) -> DensityField:
    """Momentum-weighted density rho_k = sum_j lambda_j ||p|^{k/2} psi_j|^2."""
    if k < 0 or k % 2 != 0:
        raise ValueError("weight order k must be a nonnegative even integer")
    p = state.params
    if k == 0:
        return state.density()
    axes = tuple(range(1, p.d + 1))
    mult = (p.hbar**2 * k_squared(p)) ** (k / 4.0)
    filtered = sfft.ifftn(
        sfft.fftn(state.psi, axes=axes) * mult[None, ...], axes=axes
    )
    vals = np.einsum("j,j...->...", state.weights, np.abs(filtered) ** 2)
    return DensityField(p, vals)


def lp_norm(rho: DensityField, p: float) -> float:
    """Grid-quadrature Lebesgue norm of a density field, p in [1, inf]."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    v = np.abs(rho.values)
    if math.isinf(p):
        return float(v.max())
    return float((v**p).sum() * rho.params.cell_volume) ** (1.0 / p)


def schatten_norm(state: QuantumMixedState, r: float) -> float:
    """Scaled operator-space norm h^{-d/r'} (sum lambda^r)^{1/r}.

    Component orthonormality (a type invariant) makes the weights the
    eigenvalues of the mixture.  r = inf gives h^{-d} * max weight and
    r = 1 gives the plain trace (the mass).
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    p = state.params
    h = 2.0 * math.pi * p.hbar
    rp = holder_conjugate(r)
    prefactor = 1.0 if math.isinf(rp) else h ** (-p.d / rp)
    if math.isinf(r):
        core = float(state.weights.max()) if state.rank else 0.0
    else:
        core = float((state.weights**r).sum()) ** (1.0 / r)
    return prefactor * core


def interp_theta(d: int, n: int, k: int, alpha: int, r: float, p: float) -> float:
    """Fractional interpolation exponent theta_{n,k,alpha} at target norm p.

    Implemented exactly as displayed: p'_{n,alpha}/p' + (k-alpha)/(n-alpha).
    Cross-validated against the endpoint derivations only at alpha in
    {0, k}; interior alpha is exposed as stated but carries no extra
    numerical validation.
    """
    if not 0 <= alpha <= k <= n:
        raise ValueError("need 0 <= alpha <= k <= n")
    if alpha == n:
        raise ValueError("alpha must be strictly below n")
    ppn_alpha = p_nk_prime(d, n, alpha, r)
    pp = holder_conjugate(p)
    return ppn_alpha / pp + (k - alpha) / (n - alpha)


def p_n_prime(d: int, n: int, r: float) -> float:
    """Dual target exponent p'_n = r' + d/n."""
    return holder_conjugate(r) + d / n


def p_nk_prime(d: int, n: int, k: int, r: float) -> float:
    """Dual exponent for the k-weighted density, (n/k)' * p'_n."""
    if k == n:
        return math.inf
    return (n / (n - k)) * p_n_prime(d, n, r)


def interpolation_ratio(
    state: QuantumMixedState,
    n: int,
    k: int,
    r: float,
    t: "float | None" = None,
) -> float:
    """Measured-to-bound building block for the kinetic interpolation inequality.

    Returns ||rho_k||_{L^{p_{n,k}}} / (M_n^{1-theta} ||rho||_{S^r}^theta)
    with theta = r'/p'_{n,k}; the inequality asserts this is bounded by a
    dimensional constant, and the quantity is exactly invariant under
    dilations of the state.  With ``t`` given, the transported variant is
    evaluated instead: ||l_k|| picks up t^{d/p'_{n,k}} and M_n is replaced
    by L_n(t).
    """
    if n % 2 != 0 or n < 2:
        raise ValueError("n must be a positive even integer")
    if k % 2 != 0 or not 0 <= k <= n:
        raise ValueError("k must be even with 0 <= k <= n")
    d = state.params.d
    if r == 1:
        theta = (n - k) / n
        p_target = 1.0
    else:
        ppnk = p_nk_prime(d, n, k, r)
        theta = 0.0 if math.isinf(ppnk) else holder_conjugate(r) / ppnk
        p_target = holder_conjugate(ppnk)
    if t is None:
        num = lp_norm(weighted_density(state, k), p_target)
        base = moment_M(state, n)
    else:
        if t == 0.0:
            raise ValueError("t must be nonzero; use t=None for the static ratio")
        if not boost_resolvable(state.params, 1.0 / t):
            raise ResolutionError(
                f"boost phase for t={t:g} is not resolvable on this grid; "
                "use a larger t or a finer grid"
            )
        from .transport import impulsion_boost

        boosted = impulsion_boost(state, 1.0 / t)
        l_k = weighted_density(boosted, k)
        l_k = DensityField(state.params, l_k.values * t**k)
        ppnk_eff = p_nk_prime(d, n, k, r) if r != 1 else math.inf
        scale = t ** (d / ppnk_eff) if not math.isinf(ppnk_eff) else 1.0
        num = lp_norm(l_k, p_target) * scale
        base = moment_L(state, n, t, horizon_check=False)
    den = base ** (1.0 - theta) * schatten_norm(state, r) ** theta
    if den == 0.0:
        raise SemiklError("degenerate interpolation denominator (zero moment)")
    return num / den


def _check_order(n: int):
    if n < 0 or int(n) != n or n % 2 != 0:
        raise ValueError(f"moment order must be a nonnegative even integer, got {n}")


def format_exponent(p: float) -> str:
    """Stable short label for a Lebesgue exponent (CSV column suffix)."""
    if math.isinf(p):
        return "inf"
    if float(p).is_integer():
        return str(int(p))
    return f"{p:.6g}"


@dataclass
class MomentSeries:
    """Columnar record of a run: times plus named observable columns.

    Standard columns: mass, energy, L{n}/M{n}/N{n} per configured order,
    lp_{p} per configured exponent.  ``meta`` carries scenario
    identification, the exponent ledger hash and the truncation flag.
    """

    times: np.ndarray
    data: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        for name, col in self.data.items():
            col = np.asarray(col, dtype=float)
            if col.shape != self.times.shape:
                raise ValueError(f"column {name} length mismatch")
            self.data[name] = col

    @property
    def columns(self) -> list:
        return list(self.data.keys())

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    def scaled(self, name: str, factor: float) -> "MomentSeries":
        """Copy with one column scaled (used for negative-control checks)."""
        data = {k: v.copy() for k, v in self.data.items()}
        data[name] = data[name] * factor
        return MomentSeries(self.times.copy(), data, dict(self.meta))
