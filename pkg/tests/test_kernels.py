import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.integrate import quad

from semikl.core import DensityField, SimParams, centered_grids
from semikl.errors import (
    AdmissibilityError,
    AdmissibilityWarning,
    NeutralizedModeWarning,
    ResolutionError,
    SingularityError,
    WeakNormDivergenceError,
)
from semikl.kernels import (
    KernelSpec,
    admissible_window,
    aliasing_metric,
    check_admissibility,
    eval_kernel,
    kernel_integral,
    kernel_symbol,
    lorentz_weak_norm,
    mean_field_force,
)

from conftest import rel_err


# ---------------------------------------------------------------- oracles


def rearrangement_weak_norm(profile, b, r_lo=1e-4, r_hi=1e4, samples=400000):
    """Dense-grid decreasing-rearrangement oracle for radial |g| in d=3.

    Samples |g| on a log-spaced radial grid, accumulates shell volumes in
    decreasing order of |g|, and takes sup_t t * mu{|g| > t}^(1/b) over
    the sampled levels.  Independent of any closed-form level sets.
    """
    r = np.logspace(math.log10(r_lo), math.log10(r_hi), samples)
    edges = np.empty(samples + 1)
    edges[1:-1] = np.sqrt(r[1:] * r[:-1])
    edges[0], edges[-1] = r_lo, r_hi
    vol = 4.0 / 3.0 * math.pi * np.diff(edges**3)
    g = profile(r)
    order = np.argsort(g)[::-1]
    mu = np.cumsum(vol[order])
    t = g[order]
    return float(np.max(t * mu ** (1.0 / b)))


def tc_symbol_oracle(k, eps):
    """Radial Fourier transform of the truncated kernel by quadrature.

    4 pi / k * [ (1 - cos k)/k  +  QAWF integral of r^(-eps) sin(kr) on
    (1, inf) ].  The oscillatory tail uses scipy's Fourier-weight rule,
    a different algorithm from the library's contour quadrature.
    """
    tail, _ = quad(lambda r: r**-eps, 1.0, np.inf, weight="sin", wvar=k)
    return 4.0 * math.pi / k * ((1.0 - math.cos(k)) / k + tail)


# ---------------------------------------------------------------- eval


def test_eval_truncated_coulomb_values():
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=0.5)
    assert eval_kernel(spec, [0.5, 0.0, 0.0]) == 2.0
    # continuity at the seam, both branches
    npt.assert_allclose(eval_kernel(spec, [1.0, 0.0, 0.0]), 1.0)
    spec2 = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=4.0)
    npt.assert_allclose(eval_kernel(spec2, [0.0, 1.0, 0.0]), 1.0)


def test_eval_power_law_value():
    spec = KernelSpec(family="power_law", sign=-1, a_pow=1.1)
    val = eval_kernel(spec, [2.0, 0.0, 0.0])
    assert rel_err(val, -(2.0**-1.1)) < 1e-12


def test_eval_at_origin_raises():
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=1.0)
    with pytest.raises(SingularityError):
        eval_kernel(spec, [0.0, 0.0, 0.0])


# ---------------------------------------------------------------- weak norm


def test_weak_norm_power_law_level_set_value():
    # |grad K| = r^-2 in d=3; level-set oracle gives (4 pi / 3)^(2/3)
    spec = KernelSpec(family="power_law", sign=1, a_pow=1.0)
    val = lorentz_weak_norm(spec, 3, 1.5)
    assert rel_err(val, (4.0 * math.pi / 3.0) ** (2.0 / 3.0)) < 1e-12


def test_weak_norm_none_zero():
    assert lorentz_weak_norm(KernelSpec(family="none"), 3, 1.5) == 0.0


def test_weak_norm_tc_vs_rearrangement_oracle():
    eps = 0.1
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=eps)

    def grad_profile(r):
        return np.where(r <= 1.0, r**-2.0, (1.0 + eps) * r ** -(2.0 + eps))

    oracle = rearrangement_weak_norm(grad_profile, 1.45)
    val = lorentz_weak_norm(spec, 3, 1.45)
    assert rel_err(val, oracle) < 1e-4


def test_weak_norm_divergence_regimes():
    spec = KernelSpec(family="power_law", sign=1, a_pow=1.0)
    with pytest.raises(WeakNormDivergenceError) as info:
        lorentz_weak_norm(spec, 3, 1.45)
    assert info.value.regime == "tail"
    with pytest.raises(WeakNormDivergenceError) as info:
        lorentz_weak_norm(spec, 3, 1.6)
    assert info.value.regime == "origin"


def test_weak_norm_scaling_exact():
    a = KernelSpec(family="power_law", sign=1, a_pow=1.0, scale=1.0)
    b = KernelSpec(family="power_law", sign=1, a_pow=1.0, scale=3.0)
    assert lorentz_weak_norm(b, 3, 1.5) == 3.0 * lorentz_weak_norm(a, 3, 1.5)
    c = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5, scale=2.0)
    d = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5, scale=1.0)
    npt.assert_allclose(lorentz_weak_norm(c, 3, 1.45), 2.0 * lorentz_weak_norm(d, 3, 1.45), rtol=1e-12)


# ---------------------------------------------------------------- gates


def test_admissible_window_d3_inf_4():
    lo, hi = admissible_window(3, 4, math.inf)
    npt.assert_allclose([lo, hi], [1.4, 1.5])


def test_admissibility_gate_accept_reject():
    def spec_at(b):
        return KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5, lorentz_b=b)

    check_admissibility(spec_at(1.45), 3, 4, math.inf)  # passes
    with pytest.raises(AdmissibilityError):
        check_admissibility(spec_at(1.5), 3, 4, math.inf)
    with pytest.raises(AdmissibilityError):
        check_admissibility(spec_at(1.39), 3, 4, math.inf)


def test_admissibility_override_warns():
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5, lorentz_b=1.39)
    with pytest.warns(AdmissibilityWarning):
        check_admissibility(spec, 3, 4, math.inf, override=True)


def test_admissibility_degenerate_r1():
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5, lorentz_b=1.45)
    with pytest.raises(AdmissibilityError):
        check_admissibility(spec, 3, 4, 1.0)


def test_aliasing_metric_threshold_example():
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5)
    coarse = SimParams(d=3, grid_points=8, box_length=6.0, hbar=0.1)
    fine = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    assert aliasing_metric(spec, coarse) > 0.10
    assert aliasing_metric(spec, fine) <= 0.10
    with pytest.raises(ResolutionError):
        kernel_symbol(spec, coarse)


# ---------------------------------------------------------------- symbol


def test_tc_symbol_vs_qawf_oracle():
    eps = 0.5
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=eps)
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    with pytest.warns(NeutralizedModeWarning):
        sym = kernel_symbol(spec, p, mollify_cells=0.0)
    dk = 2.0 * math.pi / p.box_length
    for m in (1, 3, 7):
        k = m * dk
        assert rel_err(sym[m, 0, 0], tc_symbol_oracle(k, eps)) < 1e-6


def test_kernel_integral_closed_form():
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=3.0)
    npt.assert_allclose(kernel_integral(spec), 4.0 * math.pi * 1.5)
    assert kernel_integral(KernelSpec(family="truncated_coulomb", sign=1, eps_tail=0.5)) is None
    assert kernel_integral(KernelSpec(family="power_law", sign=1, a_pow=1.5)) is None


def test_zero_mode_handling():
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    heavy = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0)
    sym = kernel_symbol(heavy, p)
    npt.assert_allclose(sym[0, 0, 0], -4.0 * math.pi * 1.5)
    light = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=0.5)
    with pytest.warns(NeutralizedModeWarning):
        sym2 = kernel_symbol(light, p, mollify_cells=0.5)
    assert sym2[0, 0, 0] == 0.0
    pl = KernelSpec(family="power_law", sign=-1, a_pow=1.5)
    with pytest.warns(NeutralizedModeWarning):
        sym3 = kernel_symbol(pl, p, mollify_cells=0.25)
    assert sym3[0, 0, 0] == 0.0


# ---------------------------------------------------------------- force


def blob_density(p, center, sigma):
    xs = centered_grids(p)
    r2 = sum((x - c) ** 2 for x, c in zip(xs, center))
    vals = np.exp(-r2 / (2.0 * sigma**2))
    vals = vals / (vals.sum() * p.cell_volume)
    return DensityField(p, vals)


def test_zero_density_zero_force():
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0)
    rho = DensityField(p, np.zeros(p.shape))
    assert np.abs(mean_field_force(rho, spec)).max() == 0.0


def test_force_matches_direct_convolution():
    """The spectral product equals a direct real-space quadrature of the
    periodized force kernel against the density (16^3, 1e-6 relative)."""
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0)
    rho = blob_density(p, (0.3, -0.2, 0.1), 0.8)
    E = mean_field_force(rho, spec)
    # real-space force tables g_i with E_i = sum_y rho(y) g_i(x - y)
    sym = kernel_symbol(spec, p)
    import scipy.fft as sfft

    ks = np.meshgrid(*[2.0 * math.pi * np.fft.fftfreq(16, d=p.dx)] * 3, indexing="ij")
    direct = np.zeros_like(E)
    n = p.grid_points
    for i in range(3):
        g = np.real(sfft.ifftn(-1j * ks[i] * sym))
        acc = np.zeros(p.shape)
        for a in range(n):
            for bb in range(n):
                for c in range(n):
                    w = rho.values[a, bb, c]
                    if w != 0.0:
                        acc += w * np.roll(g, (a, bb, c), axis=(0, 1, 2))
        direct[i] = acc
    scale = np.abs(E).max()
    assert np.abs(E - direct).max() / scale < 1e-6


def test_two_blob_forces_equal_opposite():
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    spec = KernelSpec(family="truncated_coulomb", sign=1, eps_tail=3.0)
    right = blob_density(p, (0.75, 0.0, 0.0), 0.5).values
    # exact grid mirror x -> -x so the pair is symmetric to roundoff
    left = np.roll(np.flip(right), 1, axis=(0, 1, 2))
    rho = DensityField(p, 0.5 * (left + right))
    E = mean_field_force(rho, spec)
    ex = E[0]
    ileft = 16 // 2 - 2   # node at x = -0.75 (dx = 0.375)
    iright = 16 // 2 + 2
    mid = 16 // 2
    f_left = ex[ileft, mid, mid]
    f_right = ex[iright, mid, mid]
    assert f_right > 0.0 and f_left < 0.0  # repulsive
    assert abs(f_left + f_right) < 1e-10 * abs(f_right)


def test_action_reaction_random_density():
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    spec = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0)
    rng = np.random.default_rng(23)
    vals = np.abs(rng.normal(size=p.shape) + 2.0)
    rho = DensityField(p, vals / (vals.sum() * p.cell_volume))
    E = mean_field_force(rho, spec)
    for i in range(3):
        total = np.sum(rho.values * E[i]) * p.cell_volume
        norm = np.sum(np.abs(rho.values) * np.abs(E[i])) * p.cell_volume
        assert abs(total) < 1e-10 * norm


def test_force_symbol_scale_linearity():
    p = SimParams(d=3, grid_points=16, box_length=6.0, hbar=0.1)
    one = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0, scale=1.0)
    two = KernelSpec(family="truncated_coulomb", sign=-1, eps_tail=3.0, scale=2.0)
    rho = blob_density(p, (0.0, 0.0, 0.0), 0.7)
    npt.assert_allclose(mean_field_force(rho, two), 2.0 * mean_field_force(rho, one), rtol=1e-12)
