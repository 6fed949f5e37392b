"""Computable certificate machinery: exponent algebra, Gronwall envelopes,
short-time bounds, smallness thresholds, and run verdicts.

The certificates encode the quantitative content of the moment-propagation
estimates: a drive inequality |dL_n/dt| <= C_drive * t^(-a) * L_n^(1+a/n)
valid for a = d/b - 1 > 1, whose integrated envelope either stays finite
for all time (global-bound), hits a vertical asymptote (blow-up-horizon),
or is not applicable (inconclusive, a <= 1).

Several constants are not fixed by any formula (the short-time horizon T,
the drive constant, C_n, C_d); they enter as explicit parameters and the
reports record which ones were measured or configured rather than derived.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import AdmissibilityError, SemiklError
from .observables import (
    MomentSeries,
    format_exponent,
    holder_conjugate,
    p_n_prime,
    p_nk_prime,
)

#: default growth tolerance for the n=4 momentum moment (can be taken
#: arbitrarily close to zero; this is the configured stand-in)
DEFAULT_C4 = 0.1

#: relative slack granted to fitted slopes in verify_run
SLOPE_TOLERANCE = 0.02

_ODE_LOG_T_END = 25.0
_ODE_FIT_WINDOW = 5.0


def _smallest_even_above(x: float, strict: bool) -> int:
    n = 2 * math.ceil(x / 2.0)
    if strict and n <= x:
        n += 2
    while (n <= x) if strict else (n < x):
        n += 2
    return int(n)


@dataclass(frozen=True)
class ExponentSet:
    """All exponents attached to a (d, n, r, b) certificate setting.

    ``gate_k1`` / ``gate_k2`` report whether b lies strictly inside the
    two admissibility windows; inadmissible inputs still produce a fully
    populated set.  ``c_n`` is the configured c4 for n = 4 and the
    integrated recurrence value for n >= 6 (``c_n_source`` records
    which); n = 2 carries no growth exponent.
    """

    d: int
    n: int
    r: float
    b: float
    r_prime: float
    a: float
    beta_4: float
    beta_n: float
    p_n_prime: float
    theta: float
    Theta: float
    Theta0: float
    Theta1: float
    Theta2: "float | None"
    eps_regu: "float | None"
    c_n: "float | None"
    c_n_source: "str | None"
    n0: int
    n_cv: "int | None"
    gate_k1: bool
    gate_k2: bool

    def p_nk(self, k: int) -> float:
        return p_nk_prime(self.d, self.n, k, self.r)

    @property
    def a_prime(self) -> float:
        return self.a / (self.a - 1.0)


def beta_m(d: int, m: int, r: float) -> float:
    """The drive balance exponent (m r' + d)/(m + 1)."""
    rp = holder_conjugate(r)
    return (m * rp + d) / (m + 1.0)


def growth_exponent_recurrence(d: int, n: int, r: float, b: float, c4: float):
    """c_n for even n >= 6 by integrating the moment-growth recurrence.

    Each stage solves dM/dt = (1 + t^(c_prev))^Theta0 M^Theta in log-log
    variables and reads the late-time slope; the closed-form balance
    (1 + c_prev*Theta0)/(1 - Theta) is what the slope converges to, but
    the integrated value is what gets reported (artifact-derived).
    Returns (c_n, per-stage list).  Theta >= 1 at some stage yields inf.
    """
    rp = holder_conjugate(r)
    c_prev = c4
    stages = []
    for m in range(6, n + 1, 2):
        theta = 1.0 + (m - 1.0) / 2.0 * (beta_m(d, m - 2, r) / b - 1.0)
        eps = ((m * rp + d) / ((m - 2.0) * rp + 3.0 * d)) * (
            ((m - 2.0) * rp + d) / b - (m - 2.0)
        )
        theta0 = (1.0 - eps) * (1.5 - rp / p_n_prime(d, m - 2, r))
        if theta >= 1.0:
            return math.inf, stages + [(m, math.inf)]

        def rhs(s, y, c=c_prev, t0=theta0, th=theta):
            drive = t0 * np.logaddexp(0.0, c * s)
            return [math.exp(min(s + drive + (th - 1.0) * y[0], 50.0))]

        sol = solve_ivp(
            rhs,
            (0.0, _ODE_LOG_T_END),
            [0.0],
            rtol=1e-10,
            atol=1e-12,
            t_eval=[_ODE_LOG_T_END - _ODE_FIT_WINDOW, _ODE_LOG_T_END],
            max_step=0.25,
        )
        if not sol.success:
            raise SemiklError(f"growth recurrence integration failed at m={m}")
        c_prev = float(sol.y[0, 1] - sol.y[0, 0]) / _ODE_FIT_WINDOW
        stages.append((m, c_prev))
    return c_prev, stages


def exponents(d: int, n: int, r: float, b: float, c4: float = DEFAULT_C4) -> ExponentSet:
    """Populate the full exponent set; never raises on inadmissible input."""
    if d < 1 or int(d) != d:
        raise ValueError("d must be a positive integer")
    if n < 2 or n % 2 != 0:
        raise ValueError("n must be an even integer >= 2")
    if r < 1:
        raise ValueError("r must be in [1, inf]")
    if b < 1:
        raise ValueError("b must be >= 1")
    rp = holder_conjugate(r)
    a = d / b - 1.0
    b4 = beta_m(d, 4, r)
    bn = beta_m(d, n, r)
    ppn = p_n_prime(d, n, r)
    theta = 1.0 if math.isinf(rp) else rp / ppn
    Theta = 1.0 + a / n
    Theta0 = 1.0 - a / n - rp / b
    Theta1 = rp / b
    if n >= 4 and not math.isinf(rp):
        eps_regu = ((n * rp + d) / ((n - 2.0) * rp + 3.0 * d)) * (
            ((n - 2.0) * rp + d) / b - (n - 2.0)
        )
        theta0_regu = (1.0 - eps_regu) * (1.5 - rp / p_n_prime(d, n - 2, r))
        Theta2 = 1.5 - Theta1 - theta0_regu
    else:
        eps_regu = None
        Theta2 = None
    gate_k1 = max(d / 3.0, b4, bn) < b < d / 2.0
    d_conj = holder_conjugate(d) if d > 1 else math.inf
    gate_k2 = (max(d / 3.0, b4) < b < d / 2.0) and r >= d_conj and n >= 4
    if n == 2 or (n >= 6 and math.isinf(rp)):
        c_n, source = None, None
    elif n == 4:
        c_n, source = c4, "config"
    else:
        c_n, _ = growth_exponent_recurrence(d, n, r, b, c4)
        source = "recurrence"
    n0 = _smallest_even_above(d, strict=True)
    if b > 1.0:
        n_cv = _smallest_even_above((d + b * (n0 - 1.0)) / (b - 1.0), strict=False)
    else:
        n_cv = None
    return ExponentSet(
        d=d,
        n=n,
        r=r,
        b=b,
        r_prime=rp,
        a=a,
        beta_4=b4,
        beta_n=bn,
        p_n_prime=ppn,
        theta=theta,
        Theta=Theta,
        Theta0=Theta0,
        Theta1=Theta1,
        Theta2=Theta2,
        eps_regu=eps_regu,
        c_n=c_n,
        c_n_source=source,
        n0=n0,
        n_cv=n_cv,
        gate_k1=gate_k1,
        gate_k2=gate_k2,
    )


@dataclass
class GronwallEnvelope:
    """Closed-form moment envelope spawned at (tau, L_tau).

    Callable: env(t) evaluates the envelope (inf past the blow-up time).
    verdict is one of global-bound / blow-up-horizon / inconclusive.
    """

    a: float
    n: int
    A: float
    L_tau: float
    tau: float
    verdict: str
    tau_star: "float | None" = None

    def __call__(self, t):
        scalar = np.isscalar(t)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.verdict == "inconclusive":
            out = np.full(t.shape, np.nan)
        elif math.isinf(self.A):
            out = np.full(t.shape, self.L_tau)
        else:
            bracket = self.L_tau ** (-self.a / self.n) - (1.0 / self.A) * (
                self.tau ** (1.0 - self.a) - t ** (1.0 - self.a)
            )
            out = np.full(t.shape, np.inf)
            ok = bracket > 0.0
            out[ok] = bracket[ok] ** (-self.n / self.a)
        return float(out[0]) if scalar else out

    @property
    def limit(self) -> float:
        """Envelope value as t -> inf (inf when not globally bounded)."""
        if self.verdict != "global-bound":
            return math.inf
        if math.isinf(self.A):
            return self.L_tau
        bracket = self.L_tau ** (-self.a / self.n) - self.tau ** (1.0 - self.a) / self.A
        return math.inf if bracket <= 0.0 else bracket ** (-self.n / self.a)


def gronwall_envelope(
    C_drive: float, exps: ExponentSet, L_tau: float, tau: float
) -> GronwallEnvelope:
    """Integrate the drive inequality from (tau, L_tau) in closed form."""
    if C_drive < 0 or L_tau <= 0 or tau <= 0:
        raise ValueError("need C_drive >= 0, L_tau > 0, tau > 0")
    a, n = exps.a, exps.n
    if a <= 1.0:
        # t^-a is not integrable at infinity; the closed form says nothing
        return GronwallEnvelope(a, n, math.nan, L_tau, tau, "inconclusive")
    if C_drive == 0.0:
        return GronwallEnvelope(a, n, math.inf, L_tau, tau, "global-bound")
    A = (1.0 - 1.0 / a) * n / C_drive
    remainder = tau ** (1.0 - a) - A * L_tau ** (-a / n)
    if remainder > 0.0:
        tau_star = remainder ** (1.0 / (1.0 - a))
        return GronwallEnvelope(a, n, A, L_tau, tau, "blow-up-horizon", tau_star)
    return GronwallEnvelope(a, n, A, L_tau, tau, "global-bound")


def short_time_constant(m: float, M0: float, hbar: float, n: int, d: int) -> float:
    """C_T = m^(1/n) + hbar n (d+n-2) M0^(1/n) of the short-time estimate."""
    return m ** (1.0 / n) + hbar * n * (d + n - 2.0) * M0 ** (1.0 / n)


def short_time_bound(
    N_n_init: float,
    m: float,
    M0: float,
    T: float,
    hbar: float,
    n: int,
    t: float,
    d: int,
    C_n: float = 1.0,
) -> float:
    """Transported-moment bound valid on [0, T].

    ``m`` caps M_n on [0, T]; C_n is the quasi-convexity constant (no
    formula exists; explicit parameter, default 1).
    """
    if not 0.0 <= t <= T:
        raise ValueError(f"t={t} outside the short-time window [0, {T}]")
    ct = short_time_constant(m, M0, hbar, n, d)
    return 2.0**n * (
        N_n_init + t ** (n / 2.0) * ((ct**n + C_n * m) * T ** (n / 2.0) + C_n * hbar * M0)
    )


@dataclass
class CertificateReport:
    """Assembled certificate for one run configuration.

    The envelope (when present) starts at tau0 from the short-time bound
    value; bound_at() splices the short-time polynomial bound on
    [0, tau0] with the Gronwall envelope beyond.
    """

    exps: ExponentSet
    C_drive: float
    C_T: float
    T: float
    A: float
    tau0: float
    threshold: float
    verdict: str
    N_n_init: "float | None" = None
    uniform_bound: "float | None" = None
    envelope: "GronwallEnvelope | None" = None
    m_cap: "float | None" = None
    M0: float = 1.0
    hbar: float = 0.0
    C_n: float = 1.0
    notes: dict = field(default_factory=dict)

    @property
    def _m_effective(self) -> float:
        """Short-time momentum cap, inverted from C_T when not stored."""
        if self.m_cap is not None:
            return self.m_cap
        n, d = self.exps.n, self.exps.d
        root = self.C_T - self.hbar * n * (d + n - 2.0) * self.M0 ** (1.0 / n)
        return max(root, 0.0) ** n

    def bound_at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.N_n_init is None:
            raise SemiklError("bound_at needs N_n_init on the report")
        n = self.exps.n
        m = self._m_effective
        slope = (self.C_T**n + self.C_n * m) * self.T ** (n / 2.0) + self.C_n * self.hbar * self.M0
        out = 2.0**n * (self.N_n_init + t ** (n / 2.0) * slope)
        late = t > self.tau0
        if self.envelope is not None:
            out[late] = self.envelope(t[late])
        else:
            out[late] = np.inf
        return out


def smallness_threshold(
    d: int,
    n: int,
    r: float,
    b: float,
    C_drive: float,
    C_T: float,
    T: float,
    N_n_init: "float | None" = None,
    m_cap: "float | None" = None,
    M0: float = 1.0,
    hbar: float = 0.0,
    C_n: float = 1.0,
    c4: float = DEFAULT_C4,
) -> CertificateReport:
    """tau0 and the smallness threshold, with verdict when N_n_init given.

    Requires the drive exponent a = d/b - 1 in (1, 2).  The verdict is
    global-bound when the initial space moment beats the threshold (the
    uniform bound is then attached); otherwise inconclusive: failing the
    sufficient condition proves nothing.
    """
    exps = exponents(d, n, r, b, c4)
    a = exps.a
    if not 1.0 < a < 2.0:
        raise AdmissibilityError(
            f"smallness certificate needs a = d/b - 1 in (1, 2), got {a:g} "
            f"(b={b}, d={d})"
        )
    if C_T <= 0 or T <= 0:
        raise ValueError("C_T and T must be positive")
    if C_drive == 0.0:
        A = math.inf
        tau0 = T
        threshold = math.inf
    else:
        A = (1.0 - 1.0 / a) * n / C_drive
        tau0 = min(T, (A * C_T ** (-a / n)) ** (2.0 / (2.0 - a)))
        threshold = 2.0**-n * (
            A ** (n / a) * tau0 ** (n / exps.a_prime) - C_T * tau0 ** (n / 2.0)
        )
    report = CertificateReport(
        exps=exps,
        C_drive=C_drive,
        C_T=C_T,
        T=T,
        A=A,
        tau0=tau0,
        threshold=threshold,
        verdict="inconclusive",
        N_n_init=N_n_init,
        m_cap=m_cap,
        M0=M0,
        hbar=hbar,
        C_n=C_n,
    )
    if N_n_init is None:
        report.verdict = "global-bound" if threshold > 0.0 else "inconclusive"
        return report
    if N_n_init < threshold:
        start = 2.0**n * N_n_init + C_T * tau0 ** (n / 2.0)
        denom = start ** (-a / n)
        if not math.isinf(A):
            denom -= 1.0 / (A * tau0 ** (a - 1.0))
        report.uniform_bound = denom ** (-n / a)
        report.envelope = gronwall_envelope(C_drive, exps, start, tau0)
        report.verdict = "global-bound"
    else:
        report.verdict = "inconclusive"
        report.notes["reason"] = (
            f"initial moment {N_n_init:g} not below threshold {threshold:g}"
        )
    return report


@dataclass
class VerdictRow:
    claim: str
    measured: "float | None"
    bound: "float | None"
    margin: "float | None"
    passed: "bool | None"
    note: str = ""


def _tail_slope(times: np.ndarray, values: np.ndarray):
    """Log-log slope over the last decade of positive times; None if the
    series spans less than one decade."""
    pos = (times > 0) & (values > 0)
    t, v = times[pos], values[pos]
    if len(t) < 3 or t.max() / t.min() < 10.0:
        return None
    window = t >= t.max() / 10.0
    if window.sum() < 3:
        return None
    slope = np.polyfit(np.log(t[window]), np.log(v[window]), 1)[0]
    return float(slope)


def drive_constant_estimate(series: MomentSeries, exps: ExponentSet) -> float:
    """Empirical drive constant: max_t |dL_n/dt| t^a / L_n^(1+a/n).

    The prefactor of the drive inequality has no computable formula (it
    lumps an unspecified interpolation constant with kernel norms), so
    certificates built from simulation calibrate it from the measured
    series.
    """
    name = f"L{exps.n}"
    t = series.times
    ln = series.column(name)
    if len(t) < 3:
        raise SemiklError("series too short to estimate the drive constant")
    dl = np.gradient(ln, t)
    pos = t > 0
    ratio = np.abs(dl[pos]) * t[pos] ** exps.a / ln[pos] ** (1.0 + exps.a / exps.n)
    return float(ratio.max())


def verify_run(
    series: MomentSeries,
    report: CertificateReport,
    slope_tolerance: float = SLOPE_TOLERANCE,
) -> "list[VerdictRow]":
    """Per-claim comparison of a measured series against the certificate.

    Rows: the transported moment against the spliced bound, momentum and
    space moment growth slopes against c_n and n(c_n + 1), and the
    Lebesgue-norm decay slope against -d/p' (p' = r' + d/4).  Slope rows
    flag fit-unavailable when the series spans less than a time decade.
    """
    exps = report.exps
    n = exps.n
    rows = []
    t = series.times

    ln = series.column(f"L{n}")
    if report.N_n_init is not None:
        bounds = report.bound_at(t)
        ok = bool(np.all(ln <= bounds))
        worst = float((bounds - ln).min())
        rows.append(
            VerdictRow(
                claim=f"L{n} within envelope",
                measured=float(ln.max()),
                bound=float(bounds.max()),
                margin=worst,
                passed=ok,
            )
        )
    else:
        rows.append(
            VerdictRow(
                claim=f"L{n} within envelope",
                measured=float(ln.max()),
                bound=None,
                margin=None,
                passed=None,
                note="no initial moment on report",
            )
        )

    c_n = exps.c_n
    slope = _tail_slope(t, series.column(f"M{n}"))
    if c_n is None:
        rows.append(VerdictRow(f"M{n} growth", slope, None, None, None, "no c_n for this n"))
    elif slope is None:
        rows.append(VerdictRow(f"M{n} growth", None, c_n, None, None, "fit-unavailable"))
    else:
        margin = c_n + slope_tolerance - slope
        rows.append(
            VerdictRow(f"M{n} growth", slope, c_n, margin, bool(slope <= c_n + slope_tolerance))
        )

    slope = _tail_slope(t, series.column(f"N{n}"))
    if c_n is None:
        rows.append(VerdictRow(f"N{n} growth", slope, None, None, None, "no c_n for this n"))
    elif slope is None:
        rows.append(VerdictRow(f"N{n} growth", None, n * (c_n + 1.0), None, None, "fit-unavailable"))
    else:
        cap = n * (c_n + 1.0)
        rows.append(
            VerdictRow(
                f"N{n} growth", slope, cap, cap + slope_tolerance - slope,
                bool(slope <= cap + slope_tolerance),
            )
        )

    pp4 = p_n_prime(exps.d, 4, exps.r)
    p_target = holder_conjugate(pp4)
    col = f"lp_{format_exponent(p_target)}"
    decay = -exps.d / pp4
    if col not in series.data:
        rows.append(
            VerdictRow(
                "density decay", None, decay, None, None,
                f"column {col} not recorded",
            )
        )
    else:
        slope = _tail_slope(t, series.column(col))
        if slope is None:
            rows.append(VerdictRow("density decay", None, decay, None, None, "fit-unavailable"))
        else:
            tol = slope_tolerance * abs(decay)
            rows.append(
                VerdictRow(
                    "density decay", slope, decay, decay + tol - slope,
                    bool(slope <= decay + tol),
                )
            )
    return rows
