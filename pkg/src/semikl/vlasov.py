"""Classical mean-field dynamics by a particle-mesh method.

Characteristics x' = xi, xi' = E(x) are advanced with kick-drift-kick
leapfrog.  The density is deposited with cloud-in-cell weights and the
force is evaluated spectrally; the CIC transfer function is divided out
twice (deposit and gather), so the effective pair interaction is the
mollified kernel itself rather than the kernel further smoothed by the
deposition cloud.

Positions are stored in [0, L) per axis; observables are taken about the
box center through the shared core conventions.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from .core import (
    HORIZON_THRESHOLD,
    ClassicalEnsemble,
    DensityField,
    SimParams,
    boundary_mass_fraction,
)
from .kernels import KernelSpec, check_admissibility, mean_field_force, mean_field_potential
from .hartree import observable_row
from .observables import MomentSeries

log = logging.getLogger(__name__)


def _cic_indices(params: SimParams, positions: np.ndarray):
    """Base node index and fractional offset per particle and axis."""
    u = positions / params.dx
    base = np.floor(u).astype(np.int64)
    frac = u - base
    return base, frac


def deposit_density(ensemble: ClassicalEnsemble, params: "SimParams | None" = None) -> DensityField:
    """Cloud-in-cell deposition of particle weights onto the grid."""
    if params is None:
        params = ensemble.params
    n = params.grid_points
    base, frac = _cic_indices(params, ensemble.positions)
    grid = np.zeros(n**params.d)
    strides = n ** np.arange(params.d - 1, -1, -1)
    for corner in range(2**params.d):
        idx = np.zeros(len(ensemble.weights), dtype=np.int64)
        w = ensemble.weights.copy()
        for ax in range(params.d):
            hi = (corner >> ax) & 1
            idx += ((base[:, ax] + hi) % n) * strides[ax]
            w = w * (frac[:, ax] if hi else 1.0 - frac[:, ax])
        grid += np.bincount(idx, weights=w, minlength=n**params.d)
    return DensityField(params, grid.reshape(params.shape) / params.cell_volume)


def gather_field(params: SimParams, field: np.ndarray, positions: np.ndarray) -> np.ndarray:
    """CIC interpolation of a (d,)+grid vector field to particle positions."""
    n = params.grid_points
    base, frac = _cic_indices(params, positions)
    flat = field.reshape(field.shape[0], -1)
    out = np.zeros((positions.shape[0], field.shape[0]))
    strides = n ** np.arange(params.d - 1, -1, -1)
    for corner in range(2**params.d):
        idx = np.zeros(positions.shape[0], dtype=np.int64)
        w = np.ones(positions.shape[0])
        for ax in range(params.d):
            hi = (corner >> ax) & 1
            idx += ((base[:, ax] + hi) % n) * strides[ax]
            w = w * (frac[:, ax] if hi else 1.0 - frac[:, ax])
        out += w[:, None] * flat[:, idx].T
    return out


def _force_at_particles(ens: ClassicalEnsemble, spec: KernelSpec, workers: int) -> np.ndarray:
    rho = deposit_density(ens)
    field = mean_field_force(rho, spec, deconvolve_cic=2, workers=workers)
    return gather_field(ens.params, field, ens.positions)


def step_vlasov(
    ensemble: ClassicalEnsemble,
    dt: float,
    spec: KernelSpec,
    workers: int = 1,
    cfl_warn: bool = True,
) -> ClassicalEnsemble:
    """One kick-drift-kick leapfrog step of the mean-field flow."""
    params = ensemble.params
    if cfl_warn and len(ensemble.weights):
        vmax = float(np.abs(ensemble.velocities).max())
        if abs(dt) * vmax > params.dx:
            warnings.warn(
                f"dt*max|v| = {abs(dt) * vmax:.3g} exceeds one cell "
                f"({params.dx:.3g}); force sampling may be inaccurate",
                stacklevel=2,
            )
    if spec.interacting:
        vel = ensemble.velocities + 0.5 * dt * _force_at_particles(
            ensemble, spec, workers
        )
    else:
        vel = ensemble.velocities.copy()
    pos = ensemble.positions + dt * vel
    out = ClassicalEnsemble(params, pos, vel, ensemble.weights.copy())
    if spec.interacting:
        out.velocities = out.velocities + 0.5 * dt * _force_at_particles(
            out, spec, workers
        )
    return out


def classical_energy(ens: ClassicalEnsemble, spec: KernelSpec, workers: int = 1) -> float:
    """(1/2) sum w |xi|^2 plus the mean-field potential energy."""
    kinetic = 0.5 * float((ens.weights * (ens.velocities**2).sum(axis=1)).sum())
    if not spec.interacting:
        return kinetic
    rho = deposit_density(ens)
    v = mean_field_potential(rho, spec, workers=workers)
    potential = 0.5 * float((rho.values * v.values).sum()) * ens.params.cell_volume
    return kinetic + potential


def run_vlasov(
    ensemble: ClassicalEnsemble,
    spec: KernelSpec,
    dt: float,
    n_steps: int,
    record_every: int = 1,
    moment_orders=(2, 4),
    lp_exponents=(2.0,),
    cert_n: int = 4,
    cert_r: float = np.inf,
    override_admissibility: bool = False,
    horizon_threshold: float = HORIZON_THRESHOLD,
    workers: int = 1,
    checkpoint_cb=None,
) -> "tuple[MomentSeries, ClassicalEnsemble]":
    """Propagate the ensemble, recording the classical moment series."""
    check_admissibility(
        spec, ensemble.params.d, cert_n, cert_r, override=override_admissibility
    )
    times = []
    rows = []
    truncated = False
    horizon_time = None
    current = ClassicalEnsemble(
        ensemble.params,
        ensemble.positions.copy(),
        ensemble.velocities.copy(),
        ensemble.weights.copy(),
    )

    def record(step: int, t: float):
        density = deposit_density(current)
        row = observable_row(current, t, moment_orders, lp_exponents, density)
        row["mass"] = float(current.weights.sum())
        row["energy"] = classical_energy(current, spec, workers=workers)
        mom = current.weights @ current.velocities
        for ax in range(current.params.d):
            row[f"momentum_{ax}"] = float(mom[ax])
        times.append(t)
        rows.append(row)
        if checkpoint_cb is not None:
            checkpoint_cb(step, t, current)

    record(0, 0.0)
    warned_cfl = False
    for step in range(1, n_steps + 1):
        current = step_vlasov(
            current, dt, spec, workers=workers, cfl_warn=not warned_cfl
        )
        warned_cfl = True
        t = step * dt
        if step % record_every == 0 or step == n_steps:
            frac = boundary_mass_fraction(current)
            if frac > horizon_threshold:
                truncated = True
                horizon_time = t
                log.warning(
                    "validity horizon breached at t=%.4g (boundary weight %.2e)",
                    t,
                    frac,
                )
                record(step, t)
                break
            record(step, t)
    data = {key: np.array([r[key] for r in rows]) for key in rows[0]}
    meta = {
        "dynamics": "vlasov",
        "dt": dt,
        "truncated": truncated,
        "horizon_time": horizon_time,
        "kernel": spec.family,
    }
    return MomentSeries(np.array(times), data, meta), current
