"""Run configuration: one INI file fully determines a run.

Sections and keys (flat key-value under each section):

* ``[scenario]`` name, dynamics (hartree | vlasov), dimension, hbar,
  t_final, dt, record_every, seed, initial (coherent | mixture |
  ensemble), width, center, momentum, mass, rank, particle_count,
  velocity_width
* ``[grid]`` points, box_length
* ``[kernel]`` family, sign, a_pow, eps_tail, scale, besov_bound,
  lorentz_b, mollify_cells
* ``[moments]`` orders, lp_exponents
* ``[certificates]`` n, r, b, c4, drive_constant, smoothing_constant,
  override_admissibility
* ``[metrics]`` epsilon, x_stride, xi_stride, xi_count, max_iter, tol

Unknown keys are rejected so typos surface as errors, field-precise.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    SimParams,
    coherent_state,
    random_mixed_state,
    sample_classical_gaussian,
)
from .errors import ConfigError
from .kernels import KernelSpec

_KNOWN_KEYS = {
    "scenario": {
        "name",
        "dynamics",
        "dimension",
        "hbar",
        "t_final",
        "dt",
        "record_every",
        "seed",
        "initial",
        "width",
        "center",
        "momentum",
        "mass",
        "rank",
        "particle_count",
        "velocity_width",
    },
    "grid": {"points", "box_length"},
    "kernel": {
        "family",
        "sign",
        "a_pow",
        "eps_tail",
        "scale",
        "besov_bound",
        "lorentz_b",
        "mollify_cells",
    },
    "moments": {"orders", "lp_exponents"},
    "certificates": {
        "n",
        "r",
        "b",
        "c4",
        "drive_constant",
        "smoothing_constant",
        "override_admissibility",
    },
    "metrics": {"epsilon", "x_stride", "xi_stride", "xi_count", "max_iter", "tol"},
}


@dataclass
class RunConfig:
    """Typed view of a parsed configuration file."""

    name: str
    dynamics: str
    d: int
    hbar: float
    t_final: float
    dt: float
    record_every: int
    seed: int
    initial: str
    width: float
    center: tuple
    momentum: tuple
    mass: float
    rank: int
    particle_count: int
    velocity_width: "float | None"
    grid_points: int
    box_length: float
    kernel: KernelSpec
    mollify_cells: float
    moment_orders: tuple
    lp_exponents: tuple
    cert_n: int
    cert_r: float
    cert_b: "float | None"
    cert_c4: float
    drive_constant: "float | None"
    smoothing_constant: float
    override_admissibility: bool
    metrics: dict = field(default_factory=dict)

    def sim_params(self) -> SimParams:
        return SimParams(
            d=self.d,
            grid_points=self.grid_points,
            box_length=self.box_length,
            hbar=self.hbar,
        )

    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))


def _parse_float(raw: str, where: str) -> float:
    word = raw.strip().lower()
    if word in ("inf", "infinity", "+inf"):
        return math.inf
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(where, f"not a number: {raw!r}") from None


def _parse_vector(raw: str, d: int, where: str) -> tuple:
    parts = [p for p in raw.replace(",", " ").split() if p]
    vals = tuple(_parse_float(p, where) for p in parts)
    if len(vals) == 1:
        vals = vals * d
    if len(vals) != d:
        raise ConfigError(where, f"need {d} components, got {len(vals)}")
    return vals


def _parse_bool(raw: str, where: str) -> bool:
    word = raw.strip().lower()
    if word in ("1", "true", "yes", "on"):
        return True
    if word in ("0", "false", "no", "off"):
        return False
    raise ConfigError(where, f"not a boolean: {raw!r}")


class _SectionView:
    def __init__(self, parser: configparser.ConfigParser, section: str):
        self.section = section
        self.present = parser.has_section(section)
        self.raw = dict(parser.items(section)) if self.present else {}

    def where(self, key: str) -> str:
        return f"{self.section}.{key}"

    def get(self, key: str, default=None, required: bool = False) -> "str | None":
        if key in self.raw:
            return self.raw[key]
        if required:
            raise ConfigError(self.where(key), "required key missing")
        return default

    def get_float(self, key: str, default=None, required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return default
        return _parse_float(raw, self.where(key))

    def get_int(self, key: str, default=None, required=False):
        raw = self.get(key, required=required)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(self.where(key), f"not an integer: {raw!r}") from None

    def get_bool(self, key: str, default=False):
        raw = self.get(key)
        if raw is None:
            return default
        return _parse_bool(raw, self.where(key))


def load_config(path: str) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise ConfigError("file", str(exc)) from None
    if not read:
        raise ConfigError("file", f"cannot read {path}")

    for section in parser.sections():
        if section not in _KNOWN_KEYS:
            raise ConfigError(section, "unknown section")
        for key in parser.options(section):
            if key not in _KNOWN_KEYS[section]:
                raise ConfigError(f"{section}.{key}", "unknown key")

    sc = _SectionView(parser, "scenario")
    gr = _SectionView(parser, "grid")
    ke = _SectionView(parser, "kernel")
    mo = _SectionView(parser, "moments")
    ce = _SectionView(parser, "certificates")
    me = _SectionView(parser, "metrics")
    if not sc.present:
        raise ConfigError("scenario", "required section missing")
    if not gr.present:
        raise ConfigError("grid", "required section missing")

    d = sc.get_int("dimension", required=True)
    if d not in (1, 2, 3):
        raise ConfigError("scenario.dimension", f"must be 1, 2, or 3, got {d}")
    hbar = sc.get_float("hbar", required=True)
    if hbar <= 0:
        raise ConfigError("scenario.hbar", f"must be positive, got {hbar}")
    dynamics = sc.get("dynamics", "hartree").strip().lower()
    if dynamics not in ("hartree", "vlasov"):
        raise ConfigError("scenario.dynamics", f"unknown dynamics {dynamics!r}")
    t_final = sc.get_float("t_final", required=True)
    dt = sc.get_float("dt", required=True)
    if dt <= 0:
        raise ConfigError("scenario.dt", f"must be positive, got {dt}")
    if t_final < dt:
        raise ConfigError("scenario.t_final", f"shorter than one step ({dt})")
    record_every = sc.get_int("record_every", 1)
    if record_every < 1:
        raise ConfigError("scenario.record_every", "must be >= 1")
    seed = sc.get_int("seed", 1234)
    initial = sc.get("initial", "coherent").strip().lower()
    if initial not in ("coherent", "mixture", "ensemble"):
        raise ConfigError("scenario.initial", f"unknown initial data {initial!r}")
    width = sc.get_float("width", required=True)
    if width <= 0:
        raise ConfigError("scenario.width", f"must be positive, got {width}")
    center = _parse_vector(sc.get("center", "0"), d, sc.where("center"))
    momentum = _parse_vector(sc.get("momentum", "0"), d, sc.where("momentum"))
    mass = sc.get_float("mass", 1.0)
    if mass <= 0:
        raise ConfigError("scenario.mass", f"must be positive, got {mass}")
    rank = sc.get_int("rank", 1)
    if rank < 1:
        raise ConfigError("scenario.rank", "must be >= 1")
    particle_count = sc.get_int("particle_count", 10000)
    if particle_count < 1:
        raise ConfigError("scenario.particle_count", "must be >= 1")
    velocity_width = sc.get_float("velocity_width", None)

    points = gr.get_int("points", required=True)
    if points < 4 or points & (points - 1):
        raise ConfigError("grid.points", f"must be a power of two >= 4, got {points}")
    box_length = gr.get_float("box_length", required=True)
    if box_length <= 0:
        raise ConfigError("grid.box_length", f"must be positive, got {box_length}")

    family = (ke.get("family", "none") or "none").strip().lower()
    if family not in ("none", "power_law", "truncated_coulomb"):
        raise ConfigError("kernel.family", f"unknown family {family!r}")
    sign_raw = ke.get("sign", "-1").strip().lower()
    if sign_raw in ("-1", "attractive"):
        sign = -1
    elif sign_raw in ("1", "+1", "repulsive"):
        sign = 1
    else:
        raise ConfigError("kernel.sign", f"must be +1 or -1, got {sign_raw!r}")
    try:
        kernel = KernelSpec(
            family=family,
            sign=sign,
            a_pow=ke.get_float("a_pow", 1.0),
            eps_tail=ke.get_float("eps_tail", 0.5),
            scale=ke.get_float("scale", 1.0),
            besov_bound=ke.get_float("besov_bound", None),
            lorentz_b=ke.get_float("lorentz_b", None),
        )
    except ValueError as exc:
        raise ConfigError("kernel", str(exc)) from None
    mollify_cells = ke.get_float("mollify_cells", 1.0)
    if mollify_cells < 0:
        raise ConfigError("kernel.mollify_cells", "must be nonnegative")

    orders_raw = mo.get("orders", "2, 4")
    try:
        orders = tuple(int(p) for p in orders_raw.replace(",", " ").split() if p)
    except ValueError:
        raise ConfigError("moments.orders", f"not integers: {orders_raw!r}") from None
    for n in orders:
        if n < 2 or n % 2 != 0:
            raise ConfigError("moments.orders", f"orders must be even and >= 2, got {n}")
    lp_raw = mo.get("lp_exponents", "2")
    lp_exponents = tuple(
        _parse_float(p, mo.where("lp_exponents"))
        for p in lp_raw.replace(",", " ").split()
        if p
    )
    for p_val in lp_exponents:
        if p_val <= 1:
            raise ConfigError("moments.lp_exponents", f"need p > 1, got {p_val}")

    cert_n = ce.get_int("n", 4)
    if cert_n < 2 or cert_n % 2:
        raise ConfigError("certificates.n", f"must be even >= 2, got {cert_n}")
    cert_r = ce.get_float("r", math.inf)
    if cert_r < 1:
        raise ConfigError("certificates.r", f"must be >= 1, got {cert_r}")
    cert_b = ce.get_float("b", None)
    cert_c4 = ce.get_float("c4", 0.1)
    drive_constant = ce.get_float("drive_constant", None)
    smoothing_constant = ce.get_float("smoothing_constant", 1.0)
    override = ce.get_bool("override_admissibility", False)

    metrics = {
        "epsilon": me.get_float("epsilon", None),
        "x_stride": me.get_int("x_stride", 1),
        "xi_stride": me.get_int("xi_stride", 1),
        "xi_count": me.get_int("xi_count", None),
        "max_iter": me.get_int("max_iter", 2000),
        "tol": me.get_float("tol", 1e-6),
    }
    if metrics["x_stride"] < 1 or metrics["xi_stride"] < 1:
        raise ConfigError("metrics.x_stride", "strides must be >= 1")

    return RunConfig(
        name=sc.get("name", "unnamed"),
        dynamics=dynamics,
        d=d,
        hbar=hbar,
        t_final=t_final,
        dt=dt,
        record_every=record_every,
        seed=seed,
        initial=initial,
        width=width,
        center=center,
        momentum=momentum,
        mass=mass,
        rank=rank,
        particle_count=particle_count,
        velocity_width=velocity_width,
        grid_points=points,
        box_length=box_length,
        kernel=kernel,
        mollify_cells=mollify_cells,
        moment_orders=orders,
        lp_exponents=lp_exponents,
        cert_n=cert_n,
        cert_r=cert_r,
        cert_b=cert_b,
        cert_c4=cert_c4,
        drive_constant=drive_constant,
        smoothing_constant=smoothing_constant,
        override_admissibility=override,
        metrics=metrics,
    )


def bundled_scenario(name: str) -> str:
    """Filesystem path of a scenario configuration shipped with the package."""
    import importlib.resources as resources

    ref = resources.files("semikl").joinpath(f"scenarios/{name}.cfg")
    if not ref.is_file():
        raise ConfigError("scenario", f"no bundled scenario named {name!r}")
    return str(ref)


def initial_quantum(cfg: RunConfig, seed: "int | None" = None):
    """Initial mixed state described by the scenario section."""
    params = cfg.sim_params()
    if cfg.initial == "coherent":
        return coherent_state(params, cfg.center, cfg.momentum, cfg.width, cfg.mass)
    if cfg.initial == "mixture":
        return random_mixed_state(
            params,
            cfg.rank,
            cfg.seed if seed is None else seed,
            x_scale=cfg.width,
            mass=cfg.mass,
        )
    raise ConfigError("scenario.initial", f"{cfg.initial!r} is not a quantum source")


def initial_classical(cfg: RunConfig, seed: "int | None" = None, matched: bool = False):
    """Initial particle ensemble; ``matched`` samples the phase-space
    Gaussian implied by the coherent scenario (position variance
    width^2 + hbar/2, velocity variance (hbar/2w)^2 + hbar/2), which is
    the classical twin used in paired comparisons."""
    params = cfg.sim_params()
    if matched or cfg.initial == "coherent":
        sigma_x = math.sqrt(cfg.width**2 + cfg.hbar / 2.0)
        sigma_v = math.sqrt((cfg.hbar / (2.0 * cfg.width)) ** 2 + cfg.hbar / 2.0)
    else:
        sigma_x = cfg.width
        sigma_v = cfg.velocity_width if cfg.velocity_width else math.sqrt(cfg.hbar / 2.0)
    return sample_classical_gaussian(
        params,
        np.asarray(cfg.center),
        np.asarray(cfg.momentum),
        sigma_x,
        sigma_v,
        cfg.particle_count,
        cfg.seed if seed is None else seed,
        cfg.mass,
    )
