"""Self-consistent mean-field Schrodinger dynamics of a mixed state.

Strang split-step propagation: half kinetic, full potential phase with
V = K * rho evaluated at the midpoint density, half kinetic.  The same
unitary acts on every component, so the weight vector (and with it every
scaled operator norm) is exactly conserved; the error model is O(dt^2)
per unit time.

The potential substep is gated by a phase budget: dt * max|V| / hbar
must stay below pi, otherwise the potential phase wraps within a single
step and the splitting is meaningless.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .core import (
    HORIZON_THRESHOLD,
    QuantumMixedState,
    boundary_mass_fraction,
)
from .errors import StabilityError
from .kernels import KernelSpec, check_admissibility, mean_field_potential
from .observables import (
    MomentSeries,
    format_exponent,
    lp_norm,
    moment_L,
    moment_M,
    moment_N,
)
from .transport import free_evolve_quantum

log = logging.getLogger(__name__)

#: potential phase budget per step, in radians
PHASE_BUDGET = math.pi


def hartree_energy(state: QuantumMixedState, spec: KernelSpec, workers: int = 1) -> float:
    """Total energy: kinetic Tr(|p|^2 rho)/2 plus mean-field (1/2) int rho V."""
    kinetic = 0.5 * moment_M(state, 2)
    if not spec.interacting:
        return kinetic
    rho = state.density()
    v = mean_field_potential(rho, spec, workers=workers)
    potential = 0.5 * float((rho.values * v.values).sum()) * state.params.cell_volume
    return kinetic + potential


def step_hartree(
    state: QuantumMixedState,
    dt: float,
    spec: KernelSpec,
    workers: int = 1,
) -> QuantumMixedState:
    """One Strang step of the self-consistent evolution."""
    half = free_evolve_quantum(state, 0.5 * dt, workers=workers)
    if spec.interacting:
        v = mean_field_potential(half.density(), spec, workers=workers).values
        vmax = float(np.abs(v).max())
        budget = abs(dt) * vmax / state.params.hbar
        if budget > PHASE_BUDGET:
            suggested = 0.9 * PHASE_BUDGET * state.params.hbar / vmax
            raise StabilityError(
                f"potential phase {budget:.3f} rad exceeds the per-step "
                f"budget {PHASE_BUDGET:.3f}; reduce dt to about {suggested:.3e}",
                suggested_dt=suggested,
            )
        phase = np.exp(-1j * dt / state.params.hbar * v)
        half.psi *= phase[None, ...]
    return free_evolve_quantum(half, 0.5 * dt, workers=workers)


def observable_row(obj, t: float, moment_orders, lp_exponents, density) -> dict:
    """Shared per-record observable columns for both dynamics."""
    row = {"mass": float(density.mass)}
    for n in moment_orders:
        row[f"M{n}"] = moment_M(obj, n)
        row[f"N{n}"] = moment_N(obj, n, horizon_check=False)
        row[f"L{n}"] = moment_L(obj, n, t, horizon_check=False)
    for p in lp_exponents:
        row[f"lp_{format_exponent(p)}"] = lp_norm(density, p)
    return row


def run_hartree(
    state: QuantumMixedState,
    spec: KernelSpec,
    dt: float,
    n_steps: int,
    record_every: int = 1,
    moment_orders=(2, 4),
    lp_exponents=(2.0,),
    cert_n: int = 4,
    cert_r: float = math.inf,
    override_admissibility: bool = False,
    horizon_threshold: float = HORIZON_THRESHOLD,
    workers: int = 1,
    checkpoint_cb=None,
) -> "tuple[MomentSeries, QuantumMixedState]":
    """Propagate and record a moment series at the given cadence.

    The run stops early (series flagged truncated) when the boundary
    shell captures more than ``horizon_threshold`` of the mass, after
    which periodic wrap-around invalidates the position moments.
    ``checkpoint_cb(step, time, state)`` is invoked at every record.
    """
    check_admissibility(
        spec, state.params.d, cert_n, cert_r, override=override_admissibility
    )
    times = []
    rows = []
    truncated = False
    horizon_time = None
    current = state.copy()

    def record(step: int, t: float):
        density = current.density()
        row = observable_row(current, t, moment_orders, lp_exponents, density)
        row["energy"] = hartree_energy(current, spec, workers=workers)
        times.append(t)
        rows.append(row)
        if checkpoint_cb is not None:
            checkpoint_cb(step, t, current)

    record(0, 0.0)
    for step in range(1, n_steps + 1):
        current = step_hartree(current, dt, spec, workers=workers)
        t = step * dt
        if step % record_every == 0 or step == n_steps:
            frac = boundary_mass_fraction(current)
            if frac > horizon_threshold:
                truncated = True
                horizon_time = t
                log.warning(
                    "validity horizon breached at t=%.4g (boundary mass %.2e); "
                    "series truncated",
                    t,
                    frac,
                )
                record(step, t)
                break
            record(step, t)
    data = {key: np.array([r[key] for r in rows]) for key in rows[0]}
    meta = {
        "dynamics": "hartree",
        "dt": dt,
        "truncated": truncated,
        "horizon_time": horizon_time,
        "kernel": spec.family,
    }
    return MomentSeries(np.array(times), data, meta), current
