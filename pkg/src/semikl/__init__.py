"""Semiclassical mean-field kinetics.

Quantum (mixed-state Hartree) and classical (particle Vlasov) dynamics
on a shared periodic grid, with the moment observables, growth/decay
certificates, and phase-space transport metrics needed to compare the
two regimes quantitatively.
"""

from .core import (
    ClassicalEnsemble,
    DensityField,
    QuantumMixedState,
    SimParams,
    coherent_state,
    mixed_state,
    random_mixed_state,
    sample_classical_gaussian,
)
from .errors import (
    AdmissibilityError,
    AdmissibilityWarning,
    CheckpointCorruptError,
    CheckpointError,
    CheckpointVersionError,
    ConfigError,
    HorizonError,
    HorizonWarning,
    NeutralizedModeWarning,
    ResolutionError,
    SemiklError,
    StabilityError,
    UnsupportedDimensionError,
)
from .kernels import (
    KernelSpec,
    admissible_window,
    check_admissibility,
    lorentz_weak_norm,
    mean_field_force,
    mean_field_potential,
)
from .transport import (
    free_evolve_quantum,
    free_flow_classical,
    impulsion_boost,
)
from .observables import (
    MomentSeries,
    interpolation_ratio,
    lp_norm,
    moment_L,
    moment_M,
    moment_N,
    schatten_norm,
)
from .hartree import hartree_energy, run_hartree, step_hartree
from .vlasov import classical_energy, deposit_density, run_vlasov, step_vlasov
from .certificates import (
    CertificateReport,
    ExponentSet,
    exponents,
    gronwall_envelope,
    short_time_bound,
    smallness_threshold,
    verify_run,
)
from .semimetrics import (
    GapReport,
    PhaseSpaceDensity,
    assemble_lambda,
    deposit_phase_space,
    growth_envelope,
    husimi,
    semiclassical_gap,
    wasserstein2,
    wigner,
)
from .config import RunConfig, bundled_scenario, load_config
from .storage import load_checkpoint, save_checkpoint

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError",
    "AdmissibilityWarning",
    "CertificateReport",
    "CheckpointCorruptError",
    "CheckpointError",
    "CheckpointVersionError",
    "ClassicalEnsemble",
    "ConfigError",
    "DensityField",
    "ExponentSet",
    "GapReport",
    "HorizonError",
    "HorizonWarning",
    "KernelSpec",
    "MomentSeries",
    "NeutralizedModeWarning",
    "PhaseSpaceDensity",
    "QuantumMixedState",
    "ResolutionError",
    "RunConfig",
    "SemiklError",
    "SimParams",
    "StabilityError",
    "UnsupportedDimensionError",
    "admissible_window",
    "assemble_lambda",
    "bundled_scenario",
    "check_admissibility",
    "classical_energy",
    "coherent_state",
    "deposit_density",
    "deposit_phase_space",
    "exponents",
    "free_evolve_quantum",
    "free_flow_classical",
    "gronwall_envelope",
    "growth_envelope",
    "hartree_energy",
    "husimi",
    "impulsion_boost",
    "interpolation_ratio",
    "load_checkpoint",
    "load_config",
    "lp_norm",
    "mean_field_force",
    "mean_field_potential",
    "mixed_state",
    "moment_L",
    "moment_M",
    "moment_N",
    "random_mixed_state",
    "run_hartree",
    "run_vlasov",
    "sample_classical_gaussian",
    "save_checkpoint",
    "schatten_norm",
    "semiclassical_gap",
    "short_time_bound",
    "smallness_threshold",
    "step_hartree",
    "step_vlasov",
    "lorentz_weak_norm",
    "verify_run",
    "wasserstein2",
    "wigner",
]
