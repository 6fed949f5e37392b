"""Interaction kernels, their weak-Lorentz norms, and the mean-field force.

Supported families
------------------
``none``
    Free transport; zero kernel.
``power_law``
    K(x) = sign * scale * |x|^(-a_pow), requires 0 < a_pow < d-1 so the
    force is integrable against bounded densities.  No valid choice
    exists in d = 1.
``truncated_coulomb``
    K(x) = sign * scale * |x|^(-1) inside the unit ball and
    sign * scale * |x|^(-1-eps_tail) outside, continuous at |x| = 1.
    This is the canonical Coulomb-singularity interaction; d = 3 only.

The mean-field potential V = K * rho and force E = -grad V are computed
spectrally.  Symbols are analytic radial Fourier transforms (the
truncated-Coulomb tail uses a rotated Laplace-type quadrature), mollified
by a Gaussian of one grid cell, and cached per (kernel, grid).

The zero mode of the symbol is the kernel's integral when that integral
is finite; otherwise it is set to zero and a NeutralizedModeWarning is
emitted.  Neutralization shifts the potential by a constant times the
mean density, which leaves the force unchanged.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft
from scipy.integrate import quad

from .core import DensityField, SimParams, k_squared, wavenumber_grids
from .errors import (
    AdmissibilityError,
    AdmissibilityWarning,
    NeutralizedModeWarning,
    ResolutionError,
    SingularityError,
    UnsupportedDimensionError,
    WeakNormDivergenceError,
)
from .observables import holder_conjugate

_FAMILIES = ("none", "power_law", "truncated_coulomb")

#: fraction of spectral kernel mass allowed beyond the Nyquist cube
ALIASING_THRESHOLD = 0.10

_LAGUERRE_NODES = 96


@dataclass(frozen=True)
class KernelSpec:
    """Immutable description of an interaction kernel.

    ``besov_bound`` is a user-supplied stand-in for the smoothness norm
    of grad K entering the coupling constant of the phase-space distance
    envelope; no computable recipe exists for it, so it is plain config.
    ``lorentz_b`` is the exponent at which the weak norm is evaluated by
    default.  ``scale`` multiplies the kernel (default 1); it is kept as
    an explicit field so that homogeneity of the weak norm is testable.
    """

    family: str = "none"
    sign: int = -1
    a_pow: float = 1.0
    eps_tail: float = 0.5
    besov_bound: "float | None" = None
    lorentz_b: "float | None" = None
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.sign not in (-1, 1):
            raise ValueError("sign must be +1 or -1")
        if self.family == "power_law" and self.a_pow <= 0:
            raise ValueError("a_pow must be positive")
        if self.family == "truncated_coulomb" and self.eps_tail <= 0:
            raise ValueError("eps_tail must be positive")
        if self.scale <= 0:
            raise ValueError("scale must be positive")
        if self.besov_bound is not None and self.besov_bound < 0:
            raise ValueError("besov_bound must be nonnegative")

    @property
    def interacting(self) -> bool:
        return self.family != "none"


def validate_kernel(spec: KernelSpec, d: int):
    """Check that the family is representable in dimension d."""
    if spec.family == "power_law":
        if d < 2:
            raise AdmissibilityError(
                "power_law needs a_pow in (0, d-1); no valid exponent exists in d=1"
            )
        if not 0.0 < spec.a_pow < d - 1:
            raise AdmissibilityError(
                f"power_law requires a_pow in (0, {d - 1}), got {spec.a_pow}"
            )
    if spec.family == "truncated_coulomb" and d != 3:
        raise UnsupportedDimensionError(
            "truncated_coulomb is defined in d=3 only"
        )


def eval_kernel(spec: KernelSpec, x) -> "float | np.ndarray":
    """Closed-form kernel value at point(s) x, shape (d,) or (m, d)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    validate_kernel(spec, pts.shape[1])
    r = np.sqrt((pts**2).sum(axis=1))
    if np.any(r == 0.0):
        raise SingularityError("kernel evaluated at x = 0")
    if spec.family == "none":
        out = np.zeros_like(r)
    elif spec.family == "power_law":
        out = spec.sign * spec.scale * r**-spec.a_pow
    else:
        inner = r <= 1.0
        out = np.where(inner, r**-1.0, r ** -(1.0 + spec.eps_tail))
        out = spec.sign * spec.scale * out
    return float(out[0]) if single else out


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def lorentz_weak_norm(spec: KernelSpec, d: int, b: "float | None" = None) -> float:
    """sup_t t |{|grad K| > t}|^{1/b}, the weak Lorentz norm of grad K.

    Closed-form level sets are used throughout; the truncated-Coulomb sup
    is taken numerically on a refined log grid (relative accuracy 1e-6).
    Raises WeakNormDivergenceError naming the failing regime when the
    norm is infinite at this b.
    """
    if b is None:
        b = spec.lorentz_b
    if b is None:
        raise ValueError("no exponent given and spec.lorentz_b unset")
    if b < 1:
        raise ValueError(f"Lorentz exponent must be >= 1, got {b}")
    if spec.family == "none":
        return 0.0
    validate_kernel(spec, d)
    if spec.family == "power_law":
        # |grad K| = scale * a * r^(-a-1): one-sided power, finite only
        # at the exact balance exponent b = d/(a+1)
        crit = d / (spec.a_pow + 1.0)
        if math.isclose(b, crit, rel_tol=1e-12):
            return spec.scale * spec.a_pow * unit_ball_volume(d) ** (1.0 / b)
        regime = "origin" if b > crit else "tail"
        raise WeakNormDivergenceError(
            f"weak norm of power_law a_pow={spec.a_pow} diverges at the "
            f"{regime} for b={b} (finite only at b={crit:g})",
            regime,
        )
    # truncated_coulomb, d = 3: |grad K| = scale/r^2 inside, scale(1+eps)/r^(2+eps) outside
    eps = spec.eps_tail
    lo = 3.0 / (2.0 + eps)
    if b > 1.5 and not math.isclose(b, 1.5, rel_tol=1e-12):
        raise WeakNormDivergenceError(
            f"truncated_coulomb weak norm diverges at the origin for b={b} > 3/2",
            "origin",
        )
    if b < lo and not math.isclose(b, lo, rel_tol=1e-12):
        raise WeakNormDivergenceError(
            f"truncated_coulomb weak norm diverges in the tail for b={b} < "
            f"3/(2+eps) = {lo:g}",
            "tail",
        )
    w3 = unit_ball_volume(3)

    def objective(u):
        inner = np.minimum(1.0, u**-0.5) ** 3
        outer = np.maximum(1.0, ((1.0 + eps) / u) ** (1.0 / (2.0 + eps))) ** 3
        mu = w3 * (inner + outer - 1.0)
        return spec.scale * u * mu ** (1.0 / b)

    # dense log sweep then two zoom rounds around the best point
    lo_exp, hi_exp = -10.0, 10.0
    best = 0.0
    for _ in range(3):
        u = np.logspace(lo_exp, hi_exp, 4001)
        f = objective(u)
        i = int(np.argmax(f))
        best = float(f[i])
        step = (hi_exp - lo_exp) / 4000.0
        lo_exp = math.log10(u[max(i - 2, 0)])
        hi_exp = lo_exp + 4.0 * step
    # boundary exponents attain their sup only in the limit
    if math.isclose(b, 1.5, rel_tol=1e-12):
        best = max(best, spec.scale * w3 ** (1.0 / b))
    if math.isclose(b, lo, rel_tol=1e-12):
        best = max(best, spec.scale * (1.0 + eps) * w3 ** (1.0 / b))
    return best


def admissible_window(d: int, n: int, r: float) -> "tuple[float, float]":
    """Open interval of Lorentz exponents b compatible with (d, n, r).

    Lower edge: the largest of d/3 and the drive exponents
    beta_m = (m r' + d)/(m + 1) for m in {4, n}; upper edge d/2 keeps the
    interaction subcritical.  Both edges are excluded.
    """
    rp = holder_conjugate(r)
    if math.isinf(rp):
        lo = math.inf
    else:
        betas = [(m * rp + d) / (m + 1.0) for m in (4, n)]
        lo = max(d / 3.0, *betas)
    return lo, d / 2.0


def check_admissibility(
    spec: KernelSpec, d: int, n: int, r: float, override: bool = False
):
    """Gate a kernel for the (d, n, r) certificate setting.

    Requires lorentz_b strictly inside the admissible window with a
    finite weak norm there.  With ``override`` the failure is downgraded
    to an AdmissibilityWarning.
    """
    if not spec.interacting:
        return
    problem = None
    if spec.lorentz_b is None:
        problem = "lorentz_b is unset"
    else:
        lo, hi = admissible_window(d, n, r)
        if not lo < spec.lorentz_b < hi:
            problem = (
                f"lorentz_b={spec.lorentz_b} outside the open window "
                f"({lo:g}, {hi:g}) for d={d}, n={n}, r={r}"
            )
        else:
            try:
                lorentz_weak_norm(spec, d, spec.lorentz_b)
            except WeakNormDivergenceError as exc:
                problem = str(exc)
    if problem is None:
        return
    if override:
        warnings.warn(
            f"admissibility gate overridden: {problem}",
            AdmissibilityWarning,
            stacklevel=2,
        )
        return
    raise AdmissibilityError(problem)


def _power_law_fourier_constant(d: int, a: float) -> float:
    """FT of |x|^(-a) is C |k|^(a-d) with this C (0 < a < d)."""
    return (
        math.pi ** (d / 2.0)
        * 2.0 ** (d - a)
        * math.gamma((d - a) / 2.0)
        / math.gamma(a / 2.0)
    )


@functools.lru_cache(maxsize=4)
def _laguerre_rule(n: int):
    return np.polynomial.laguerre.laggauss(n)


def _tail_sine_integral(kvals: np.ndarray, eps: float) -> np.ndarray:
    """int_1^inf r^(-eps) sin(k r) dr for k > 0.

    The oscillatory integral is rotated onto the decaying ray
    r = 1 + i t / k, turning it into a smooth Laplace-type integral
    evaluated by Gauss-Laguerre quadrature, vectorized over k.
    """
    t, w = _laguerre_rule(_LAGUERRE_NODES)
    k = kvals[:, None]
    g = (1.0 + 1j * t[None, :] / k) ** (-eps)
    j = g @ w
    return np.imag(1j / kvals * np.exp(1j * kvals) * j)


def _tc_symbol_radial(kmag: np.ndarray, eps: float) -> np.ndarray:
    """Unmollified truncated-Coulomb symbol at |k| > 0 (unit sign/scale)."""
    k = np.asarray(kmag, dtype=float)
    # interior |x| <= 1 part has the closed form (4 pi / k^2)(1 - cos k)
    out = 4.0 * math.pi / k**2 * (1.0 - np.cos(k))
    out += 4.0 * math.pi / k * _tail_sine_integral(k, eps)
    return out


def kernel_integral(spec: KernelSpec) -> "float | None":
    """int K dx when finite (sets the symbol's zero mode), else None."""
    if spec.family == "none":
        return 0.0
    if spec.family == "power_law":
        return None
    eps = spec.eps_tail
    if eps <= 2.0:
        return None
    return spec.sign * spec.scale * 4.0 * math.pi * (0.5 + 1.0 / (eps - 2.0))


def aliasing_metric(spec: KernelSpec, params: SimParams) -> float:
    """Fraction of spectral kernel mass the grid cannot represent.

    Defined for truncated_coulomb only: the unit-ball seam imprints an
    absolute length scale, and the metric is the L^2 mass fraction of the
    (unmollified) symbol lying outside the Nyquist cube, with the seam
    oscillation averaged.  Power-law kernels are scale free, every grid
    resolves them equally well, and the metric is 0 by definition.
    """
    if spec.family != "truncated_coulomb":
        return 0.0
    validate_kernel(spec, params.d)
    kn = math.pi / params.dx
    ksq = k_squared(params)
    kmag = np.sqrt(ksq[ksq > 0.0])
    head = float((_tc_symbol_radial(kmag, spec.eps_tail) ** 2).sum())
    # outside the cube: radial integral of the envelope 24 pi^2 k^-4
    # times the solid-angle fraction outside (spherical caps, capped at 1)
    dens = (params.box_length / (2.0 * math.pi)) ** 3

    def radial(k):
        frac = np.clip(1.5 * (1.0 - kn / k), 0.0, 1.0)
        return 24.0 * math.pi**2 * k**-4.0 * frac * 4.0 * math.pi * k**2

    mid, _ = quad(radial, kn, math.sqrt(3.0) * kn)
    far = 96.0 * math.pi**3 / (math.sqrt(3.0) * kn)
    tail = dens * (mid + far)
    return tail / (head + tail)


@functools.lru_cache(maxsize=32)
def kernel_symbol(
    spec: KernelSpec, params: SimParams, mollify_cells: float = 1.0
) -> np.ndarray:
    """Mollified spectral multiplier of K on the grid, cached, read-only.

    Raises ResolutionError when the aliasing metric exceeds the 10%
    budget (grid too coarse for the singular core).
    """
    validate_kernel(spec, params.d)
    if spec.family == "none":
        sym = np.zeros(params.shape)
        sym.flags.writeable = False
        return sym
    metric = aliasing_metric(spec, params)
    if metric > ALIASING_THRESHOLD:
        raise ResolutionError(
            f"kernel aliasing metric {metric:.3f} exceeds "
            f"{ALIASING_THRESHOLD:.0%}; refine the grid (roughly double "
            "grid_points) to resolve the singular core"
        )
    ksq = k_squared(params)
    kmag = np.sqrt(ksq)
    origin = tuple([0] * params.d)
    if spec.family == "power_law":
        c = _power_law_fourier_constant(params.d, spec.a_pow)
        with np.errstate(divide="ignore"):
            sym = c * kmag ** (spec.a_pow - params.d)
        sym *= spec.sign * spec.scale
    else:
        # evaluate on unique radii, then scatter back
        flat = kmag.ravel()
        uniq, inv = np.unique(flat, return_inverse=True)
        vals = np.zeros_like(uniq)
        pos = uniq > 0.0
        vals[pos] = _tc_symbol_radial(uniq[pos], spec.eps_tail)
        sym = (spec.sign * spec.scale) * vals[inv].reshape(params.shape)
    integral = kernel_integral(spec)
    if integral is None:
        warnings.warn(
            f"{spec.family} kernel has no finite integral; zero mode "
            "neutralized (constant potential offset, force unaffected)",
            NeutralizedModeWarning,
            stacklevel=2,
        )
        sym[origin] = 0.0
    else:
        sym[origin] = integral
    sigma = mollify_cells * params.dx
    sym = sym * np.exp(-0.5 * ksq * sigma**2)
    sym.flags.writeable = False
    return sym


@functools.lru_cache(maxsize=16)
def _cic_window(params: SimParams) -> np.ndarray:
    """Per-axis product of squared sinc factors of the deposition cloud."""
    ks = wavenumber_grids(params)
    w = np.ones(params.shape)
    for k in ks:
        w = w * np.sinc(k * params.dx / (2.0 * math.pi)) ** 2
    w.flags.writeable = False
    return w


def _potential_hat(rho: DensityField, spec: KernelSpec, mollify_cells, deconvolve_cic, workers):
    # with the continuum symbol, V = ifftn(fftn(rho) * sym) carries no
    # extra grid factors (the dV of the forward quadrature cancels the
    # 1/dV of the inverse Riemann sum)
    params = rho.params
    sym = kernel_symbol(spec, params, mollify_cells)
    v_hat = sfft.fftn(rho.values, workers=workers) * sym
    if deconvolve_cic:
        v_hat = v_hat / _cic_window(params) ** deconvolve_cic
    return v_hat


def mean_field_potential(
    rho: DensityField,
    spec: KernelSpec,
    mollify_cells: float = 1.0,
    deconvolve_cic: int = 0,
    workers: int = 1,
) -> DensityField:
    """V = K * rho by spectral multiplication (periodic convolution)."""
    v_hat = _potential_hat(rho, spec, mollify_cells, deconvolve_cic, workers)
    return DensityField(rho.params, np.real(sfft.ifftn(v_hat, workers=workers)))


def mean_field_force(
    rho: DensityField,
    spec: KernelSpec,
    mollify_cells: float = 1.0,
    deconvolve_cic: int = 0,
    workers: int = 1,
) -> np.ndarray:
    """E = -grad(K * rho), shape (d,) + grid shape."""
    params = rho.params
    v_hat = _potential_hat(rho, spec, mollify_cells, deconvolve_cic, workers)
    ks = wavenumber_grids(params)
    out = np.empty((params.d,) + params.shape)
    for i, k in enumerate(ks):
        out[i] = np.real(sfft.ifftn(-1j * k * v_hat, workers=workers))
    return out
