"""Free-transport semigroups on quantum mixtures and particle ensembles.

Quantum free flow is exact on the torus: each component is multiplied in
Fourier space by exp(-i t hbar |k|^2 / 2).  The impulsion boost is the
pointwise quadratic phase exp(-i s |x_c|^2 / (2 hbar)); applied with
s = 1/t it converts transported position moments into plain momentum
moments of the boosted state (see observables.moment_L).  Both maps are
mixed-state channels: weights are never touched.
"""

from __future__ import annotations

import numpy as np
import scipy.fft as sfft

from .core import (
    ClassicalEnsemble,
    QuantumMixedState,
    k_squared,
    radius_squared,
    wrap_positions,
)


def free_evolve_quantum(
    state: QuantumMixedState, t: float, workers: int = 1
) -> QuantumMixedState:
    """Evolve by the free Schrodinger group for time t (exact spectral step)."""
    if t == 0.0:
        return state.copy()
    p = state.params
    phase = np.exp(-0.5j * t * p.hbar * k_squared(p))
    axes = tuple(range(1, p.d + 1))
    psi_hat = sfft.fftn(state.psi, axes=axes, workers=workers)
    psi = sfft.ifftn(psi_hat * phase[None, ...], axes=axes, workers=workers)
    return QuantumMixedState(p, state.weights.copy(), psi)


def impulsion_boost(state: QuantumMixedState, s: float) -> QuantumMixedState:
    """Apply the quadratic phase that shifts momentum by -s * x.

    Realizes the position-generated boost: expectation values obey
    <p> -> <p> - s <x> while the position density is untouched.  Boosts
    compose additively in s.
    """
    if s == 0.0:
        return state.copy()
    p = state.params
    phase = np.exp(-0.5j * s * radius_squared(p) / p.hbar)
    return QuantumMixedState(p, state.weights.copy(), state.psi * phase[None, ...])


def free_flow_classical(ens: ClassicalEnsemble, t: float) -> ClassicalEnsemble:
    """Free-stream particles for time t (positions wrap, velocities fixed)."""
    x = wrap_positions(ens.positions + t * ens.velocities, ens.params.box_length)
    return ClassicalEnsemble(ens.params, x, ens.velocities.copy(), ens.weights.copy())
