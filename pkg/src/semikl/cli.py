"""Command-line front end.

Subcommands, all driven by one INI configuration file:

* ``simulate-hartree`` / ``simulate-vlasov``: propagate, write the
  moment series CSV plus a JSON summary (and checkpoints on request).
  When the certificate section carries a Lorentz exponent the summary
  also gets the assembled certificate and a verdict table.
* ``certify``: assemble exponents and the smallness certificate from
  the configuration alone, no time stepping.
* ``metrics``: phase-space distance between the configured quantum
  state and its matched classical ensemble.
* ``transport-check``: free-stream the initial data and report the
  drift of the transported moments, which exact transport keeps fixed.
* ``compare``: twin quantum/classical runs from matched initial data,
  cross-dynamics moment gaps, and an envelope check on the final gap.

Exit codes: 0 success (including horizon-truncated runs, which are
flagged in their outputs), 1 runtime failure, 2 configuration error.
The default output directory honors $SEMIKL_OUTPUT_DIR.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from . import certificates as certs
from .config import RunConfig, initial_classical, initial_quantum, load_config
from .errors import (
    AdmissibilityError,
    ConfigError,
    ResolutionError,
    SemiklError,
)
from .hartree import run_hartree
from .kernels import admissible_window
from .observables import format_exponent, moment_L, moment_M, moment_N, p_n_prime
from .semimetrics import assemble_lambda, growth_envelope, semiclassical_gap
from .storage import (
    ledger_hash,
    save_checkpoint,
    write_series_csv,
    write_summary_json,
)
from .transport import free_evolve_quantum, free_flow_classical
from .vlasov import run_vlasov

log = logging.getLogger("semikl.cli")

ENV_OUTPUT_DIR = "SEMIKL_OUTPUT_DIR"


def _output_dir(args) -> str:
    out = args.output_dir or os.environ.get(ENV_OUTPUT_DIR) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed_override is not None:
        cfg.seed = args.seed_override
    if args.override_admissibility:
        cfg.override_admissibility = True
    return cfg


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def _exponent_ledger(cfg: RunConfig) -> dict:
    led = {
        "dimension": cfg.d,
        "order": cfg.cert_n,
        "r": format_exponent(cfg.cert_r),
        "c4": cfg.cert_c4,
    }
    if cfg.cert_b is not None:
        led["b"] = cfg.cert_b
    for n in cfg.moment_orders:
        led[f"p_prime_{n}"] = p_n_prime(cfg.d, n, cfg.cert_r)
    led["lp_columns"] = [format_exponent(p) for p in cfg.lp_exponents]
    return led


def _base_summary(cfg: RunConfig, dynamics: str) -> dict:
    ledger = _exponent_ledger(cfg)
    return {
        "name": cfg.name,
        "dynamics": dynamics,
        "dimension": cfg.d,
        "hbar": cfg.hbar,
        "seed": cfg.seed,
        "grid": {"points": cfg.grid_points, "box_length": cfg.box_length},
        "dt": cfg.dt,
        "t_final": cfg.t_final,
        "kernel": _json_safe(
            {
                "family": cfg.kernel.family,
                "sign": cfg.kernel.sign,
                "a_pow": cfg.kernel.a_pow,
                "eps_tail": cfg.kernel.eps_tail,
                "scale": cfg.kernel.scale,
                "besov_bound": cfg.kernel.besov_bound,
                "lorentz_b": cfg.kernel.lorentz_b,
            }
        ),
        "truncated": False,
        "truncated_at": None,
        "ledger_hash": ledger_hash(ledger),
        "exponents": _json_safe(ledger),
    }


def _verdict_dicts(rows) -> list:
    out = []
    for r in rows:
        parts = []
        if r.measured is not None:
            parts.append(f"measured {r.measured:.6g}")
        if r.bound is not None:
            parts.append(f"bound {r.bound:.6g}")
        if r.note:
            parts.append(r.note)
        out.append({"name": r.claim, "passed": r.passed, "detail": ", ".join(parts)})
    return out


def _print_verdicts(rows: list) -> None:
    if not rows:
        return
    width = max(len(r["name"]) for r in rows)
    print("verdicts:")
    for r in rows:
        status = {True: "PASS", False: "FAIL", None: "INFO"}[r["passed"]]
        line = f"  {r['name']:<{width}}  {status}"
        if r["detail"]:
            line += f"  ({r['detail']})"
        print(line)


def _lorentz_exponent(cfg: RunConfig) -> "float | None":
    if cfg.cert_b is not None:
        return cfg.cert_b
    return cfg.kernel.lorentz_b


def _certificate_from_series(cfg: RunConfig, initial, series):
    """Certificate calibrated from a measured series.

    The momentum cap and its initial value are both taken from the
    initial data (the sup over the window is approximated by its value
    at t = 0); set drive_constant in the configuration to bypass the
    empirical drive estimate.
    """
    b = _lorentz_exponent(cfg)
    n = cfg.cert_n
    exps = certs.exponents(cfg.d, n, cfg.cert_r, b, cfg.cert_c4)
    notes = {}
    m0 = moment_M(initial, n)
    C_T = certs.short_time_constant(m0, m0, cfg.hbar, n, cfg.d)
    C_drive = cfg.drive_constant
    if C_drive is None:
        try:
            C_drive = certs.drive_constant_estimate(series, exps)
            notes["drive_source"] = "estimated from series"
        except (SemiklError, KeyError) as exc:
            notes["drive_source"] = f"unavailable: {exc}"
    block = {
        "b": b,
        "n": n,
        "r": format_exponent(cfg.cert_r),
        "a": exps.a,
        "Theta": exps.Theta,
        "Theta0": exps.Theta0,
        "Theta1": exps.Theta1,
        "c_n": exps.c_n,
        "n0": exps.n0,
        "n_cv": exps.n_cv,
        "C_T": C_T,
        "C_drive": C_drive,
    }
    if C_drive is None:
        block["verdict"] = "inconclusive"
        block["notes"] = notes
        return _json_safe(block), []
    name = f"L{n}"
    N0 = float(series.column(name)[0]) if name in series.data else moment_N(initial, n)
    try:
        report = certs.smallness_threshold(
            cfg.d,
            n,
            cfg.cert_r,
            b,
            C_drive,
            C_T,
            cfg.t_final,
            N_n_init=N0,
            m_cap=m0,
            M0=m0,
            hbar=cfg.hbar,
            C_n=cfg.smoothing_constant,
            c4=cfg.cert_c4,
        )
    except AdmissibilityError as exc:
        notes["threshold"] = str(exc)
        block["verdict"] = "inconclusive"
        block["notes"] = notes
        return _json_safe(block), []
    block.update(
        {
            "A": report.A,
            "tau0": report.tau0,
            "threshold": report.threshold,
            "uniform_bound": report.uniform_bound,
            "verdict": report.verdict,
            "notes": notes,
        }
    )
    return _json_safe(block), certs.verify_run(series, report)


def _run_common(cfg: RunConfig, workers: int):
    return dict(
        record_every=cfg.record_every,
        moment_orders=cfg.moment_orders,
        lp_exponents=cfg.lp_exponents,
        cert_n=cfg.cert_n,
        cert_r=cfg.cert_r,
        override_admissibility=cfg.override_admissibility,
        workers=workers,
    )


def cmd_simulate(args) -> int:
    cfg = _load(args)
    dynamics = "hartree" if args.which == "hartree" else "vlasov"
    if cfg.dynamics != dynamics:
        log.warning(
            "configuration says dynamics=%s; running %s as requested",
            cfg.dynamics,
            dynamics,
        )
    out = _output_dir(args)
    every = args.checkpoint_every
    cb = None
    if every:
        def cb(step, t, obj):
            if step % every == 0:
                save_checkpoint(
                    os.path.join(out, f"{cfg.name}_step{step:06d}.ckpt"), obj
                )
    common = _run_common(cfg, args.workers)
    common["checkpoint_cb"] = cb
    if dynamics == "hartree":
        initial = initial_quantum(cfg)
        series, final = run_hartree(
            initial, cfg.kernel, cfg.dt, cfg.n_steps(), **common
        )
    else:
        initial = initial_classical(cfg)
        series, final = run_vlasov(
            initial, cfg.kernel, cfg.dt, cfg.n_steps(), **common
        )
    if every:
        save_checkpoint(os.path.join(out, f"{cfg.name}_final.ckpt"), final)
    csv_path = os.path.join(out, f"{cfg.name}.csv")
    write_series_csv(csv_path, series, _exponent_ledger(cfg))
    summary = _base_summary(cfg, dynamics)
    summary["steps"] = cfg.n_steps()
    summary["columns"] = ["t"] + series.columns
    summary["csv"] = os.path.basename(csv_path)
    summary["truncated"] = bool(series.meta.get("truncated"))
    summary["truncated_at"] = series.meta.get("horizon_time")
    verdict_rows = []
    if _lorentz_exponent(cfg) is not None:
        summary["certificates"], rows = _certificate_from_series(cfg, initial, series)
        verdict_rows = _verdict_dicts(rows)
    summary["verdicts"] = verdict_rows
    json_path = os.path.join(out, f"{cfg.name}.json")
    write_summary_json(json_path, summary)
    print(f"series: {csv_path}")
    print(f"summary: {json_path}")
    if summary["truncated"]:
        print(f"run truncated at t={summary['truncated_at']:g} (validity horizon)")
    _print_verdicts(verdict_rows)
    return 0


def cmd_certify(args) -> int:
    cfg = _load(args)
    out = _output_dir(args)
    b = _lorentz_exponent(cfg)
    if b is None:
        raise ConfigError("certificates.b", "required for certify")
    n = cfg.cert_n
    exps = certs.exponents(cfg.d, n, cfg.cert_r, b, cfg.cert_c4)
    low, high = admissible_window(cfg.d, n, cfg.cert_r)
    block = {
        "b": b,
        "n": n,
        "r": format_exponent(cfg.cert_r),
        "a": exps.a,
        "beta_4": exps.beta_4,
        "beta_n": exps.beta_n,
        "p_n_prime": exps.p_n_prime,
        "Theta": exps.Theta,
        "Theta0": exps.Theta0,
        "Theta1": exps.Theta1,
        "c_n": exps.c_n,
        "c_n_source": exps.c_n_source,
        "n0": exps.n0,
        "n_cv": exps.n_cv,
        "window_low": low,
        "window_high": high,
        "gate_k1": exps.gate_k1,
        "gate_k2": exps.gate_k2,
    }
    verdict_rows = [
        {
            "name": "b inside admissible window",
            "passed": bool(exps.gate_k1 and exps.gate_k2),
            "detail": f"window ({low:.6g}, {high:.6g})",
        }
    ]
    if cfg.drive_constant is not None:
        initial = (
            initial_quantum(cfg)
            if cfg.dynamics == "hartree"
            else initial_classical(cfg)
        )
        m0 = moment_M(initial, n)
        N0 = moment_N(initial, n)
        C_T = certs.short_time_constant(m0, m0, cfg.hbar, n, cfg.d)
        try:
            report = certs.smallness_threshold(
                cfg.d,
                n,
                cfg.cert_r,
                b,
                cfg.drive_constant,
                C_T,
                cfg.t_final,
                N_n_init=N0,
                m_cap=m0,
                M0=m0,
                hbar=cfg.hbar,
                C_n=cfg.smoothing_constant,
                c4=cfg.cert_c4,
            )
            block.update(
                {
                    "C_T": C_T,
                    "C_drive": cfg.drive_constant,
                    "A": report.A,
                    "tau0": report.tau0,
                    "threshold": report.threshold,
                    "initial_moment": N0,
                    "uniform_bound": report.uniform_bound,
                    "verdict": report.verdict,
                }
            )
            verdict_rows.append(
                {
                    "name": "initial moment below smallness threshold",
                    "passed": report.verdict == "global-bound",
                    "detail": f"N{n}(0)={N0:.6g}, threshold={report.threshold:.6g}",
                }
            )
        except AdmissibilityError as exc:
            block["verdict"] = "inconclusive"
            block["notes"] = {"threshold": str(exc)}
            verdict_rows.append(
                {
                    "name": "smallness threshold assembled",
                    "passed": False,
                    "detail": str(exc),
                }
            )
    summary = _base_summary(cfg, cfg.dynamics)
    summary["certificates"] = _json_safe(block)
    summary["verdicts"] = verdict_rows
    json_path = os.path.join(out, f"{cfg.name}_certificate.json")
    write_summary_json(json_path, summary)
    print(f"summary: {json_path}")
    _print_verdicts(verdict_rows)
    return 0


def cmd_metrics(args) -> int:
    cfg = _load(args)
    out = _output_dir(args)
    state = initial_quantum(cfg)
    ens = initial_classical(cfg, matched=(cfg.initial == "coherent"))
    mk = cfg.metrics
    gap = semiclassical_gap(
        ens,
        state,
        epsilon=mk["epsilon"],
        x_stride=mk["x_stride"],
        xi_stride=mk["xi_stride"],
        xi_count=mk["xi_count"],
        max_iter=mk["max_iter"],
        tol=mk["tol"],
    )
    block = {
        "w2_squared": gap.w2_squared,
        "dhbar": gap.dhbar,
        "window_low": gap.window_low,
        "floor": gap.floor,
        "epsilon": gap.transport.epsilon,
        "iterations": gap.transport.iterations,
        "converged": gap.transport.converged,
        "husimi_defect": gap.husimi_defect,
        "deposit_defect": gap.deposit_defect,
    }
    summary = _base_summary(cfg, cfg.dynamics)
    summary["metrics"] = _json_safe(block)
    json_path = os.path.join(out, f"{cfg.name}_metrics.json")
    write_summary_json(json_path, summary)
    print(f"summary: {json_path}")
    print(
        f"w2^2 = {gap.w2_squared:.6g}  (d*hbar = {gap.dhbar:.6g}, "
        f"floor = {gap.floor:.6g}, {gap.transport.iterations} iterations)"
    )
    return 0


def cmd_transport_check(args) -> int:
    cfg = _load(args)
    out = _output_dir(args)
    n_records = max(1, cfg.n_steps() // cfg.record_every)
    times = [cfg.dt * cfg.record_every * j for j in range(n_records + 1)]
    times = [t for t in times if t <= cfg.t_final + 1e-12]
    if cfg.dynamics == "hartree":
        initial = initial_quantum(cfg)
        evolve = free_evolve_quantum
    else:
        initial = initial_classical(cfg)
        evolve = free_flow_classical
    drifts = {}
    for n in cfg.moment_orders:
        values = []
        for t in times:
            values.append(moment_L(evolve(initial, t), n, t, horizon_check=False))
        values = np.asarray(values)
        base = abs(values[0]) if values[0] != 0 else 1.0
        drifts[n] = float(np.abs(values - values[0]).max() / base)
    verdict_rows = [
        {
            "name": f"L{n} invariant under free transport",
            "passed": drift <= args.tolerance,
            "detail": f"max relative drift {drift:.3e} over {len(times)} times",
        }
        for n, drift in drifts.items()
    ]
    summary = _base_summary(cfg, cfg.dynamics)
    summary["transport"] = _json_safe(
        {
            "times": times,
            "tolerance": args.tolerance,
            "drifts": {f"L{n}": v for n, v in drifts.items()},
        }
    )
    summary["verdicts"] = verdict_rows
    json_path = os.path.join(out, f"{cfg.name}_transport.json")
    write_summary_json(json_path, summary)
    print(f"summary: {json_path}")
    _print_verdicts(verdict_rows)
    return 0 if all(r["passed"] for r in verdict_rows) else 1


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = _output_dir(args)
    qstate = initial_quantum(cfg)
    ens = initial_classical(cfg, matched=(cfg.initial == "coherent"))
    b = _lorentz_exponent(cfg)
    lp_run = tuple(cfg.lp_exponents)
    if b is not None and math.inf not in lp_run:
        lp_run = lp_run + (math.inf,)
    common = _run_common(cfg, args.workers)
    common["lp_exponents"] = lp_run
    series_q, final_q = run_hartree(qstate, cfg.kernel, cfg.dt, cfg.n_steps(), **common)
    series_c, final_c = run_vlasov(ens, cfg.kernel, cfg.dt, cfg.n_steps(), **common)
    ledger = _exponent_ledger(cfg)
    csv_q = os.path.join(out, f"{cfg.name}_quantum.csv")
    csv_c = os.path.join(out, f"{cfg.name}_classical.csv")
    write_series_csv(csv_q, series_q, ledger)
    write_series_csv(csv_c, series_c, ledger)

    k = min(len(series_q.times), len(series_c.times))
    times = series_q.times[:k]
    verdict_rows = []
    moment_gaps = {}
    for n in cfg.moment_orders:
        name = f"L{n}"
        vq = series_q.column(name)[:k]
        vc = series_c.column(name)[:k]
        scale = max(np.abs(vq).max(), 1e-300)
        gap_rel = float(np.abs(vq - vc).max() / scale)
        moment_gaps[name] = gap_rel
        verdict_rows.append(
            {
                "name": f"{name} quantum/classical relative gap",
                "passed": None,
                "detail": f"{gap_rel:.3e}",
            }
        )

    envelope_block = None
    if b is not None and cfg.kernel.besov_bound is not None:
        exps = certs.exponents(cfg.d, cfg.cert_n, cfg.cert_r, b, cfg.cert_c4)
        col = f"lp_{format_exponent(math.inf)}"
        lam = assemble_lambda(
            times,
            series_c.column(col)[:k],
            series_q.column(col)[:k],
            cfg.kernel.besov_bound,
            exps.n0,
            exps.c_n if exps.c_n is not None else cfg.cert_c4,
            b,
        )
        envelope_block = {"lambda": lam, "n0": exps.n0}
        mk = cfg.metrics
        try:
            gap0 = semiclassical_gap(
                ens,
                qstate,
                epsilon=mk["epsilon"],
                x_stride=mk["x_stride"],
                xi_stride=mk["xi_stride"],
                xi_count=mk["xi_count"],
                max_iter=mk["max_iter"],
                tol=mk["tol"],
            )
            gap1 = semiclassical_gap(
                final_c,
                final_q,
                epsilon=mk["epsilon"],
                x_stride=mk["x_stride"],
                xi_stride=mk["xi_stride"],
                xi_count=mk["xi_count"],
                max_iter=mk["max_iter"],
                tol=mk["tol"],
            )
            t_end = float(times[-1])
            env = float(
                growth_envelope(gap0.w2_squared, lam, cfg.hbar, cfg.d, t_end)
            )
            bound = env**2 + gap0.dhbar
            envelope_block.update(
                {
                    "w0_squared": gap0.w2_squared,
                    "w2_squared_final": gap1.w2_squared,
                    "envelope_final": env,
                    "bound_final": bound,
                    "t_final": t_end,
                }
            )
            verdict_rows.append(
                {
                    "name": "final gap within growth envelope",
                    "passed": bool(gap1.w2_squared <= bound),
                    "detail": (
                        f"w2^2(t={t_end:g})={gap1.w2_squared:.6g}, "
                        f"bound={bound:.6g}"
                    ),
                }
            )
        except ResolutionError as exc:
            envelope_block["note"] = f"gap not computed: {exc}"

    summary = _base_summary(cfg, "compare")
    summary["steps"] = cfg.n_steps()
    summary["csv"] = None
    summary["columns"] = ["t"] + series_q.columns
    summary["truncated"] = bool(
        series_q.meta.get("truncated") or series_c.meta.get("truncated")
    )
    summary["truncated_at"] = (
        series_q.meta.get("horizon_time") or series_c.meta.get("horizon_time")
    )
    summary["metrics"] = _json_safe(envelope_block) if envelope_block else None
    summary["transport"] = None
    summary["fitted"] = _json_safe(moment_gaps)
    summary["verdicts"] = verdict_rows
    summary["series"] = {
        "quantum": os.path.basename(csv_q),
        "classical": os.path.basename(csv_c),
    }
    json_path = os.path.join(out, f"{cfg.name}_compare.json")
    write_summary_json(json_path, summary)
    print(f"series: {csv_q}")
    print(f"series: {csv_c}")
    print(f"summary: {json_path}")
    if summary["truncated"]:
        print(f"run truncated at t={summary['truncated_at']:g} (validity horizon)")
    _print_verdicts(verdict_rows)
    return 0


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument(
        "--output-dir",
        default=None,
        help=f"output directory (default: ${ENV_OUTPUT_DIR} or the cwd)",
    )
    parser.add_argument(
        "--seed-override", type=int, default=None, help="replace the configured seed"
    )
    parser.add_argument(
        "--override-admissibility",
        action="store_true",
        help="downgrade admissibility failures to warnings",
    )
    parser.add_argument(
        "--workers", type=int, default=1, help="FFT worker threads"
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="semikl",
        description="mean-field quantum/classical simulator and bound verifier",
    )
    ap.add_argument("--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-hartree", help="propagate the quantum mixture")
    _add_common(p)
    p.add_argument(
        "--checkpoint-every",
        type=int,
        default=0,
        metavar="STEPS",
        help="write a checkpoint every STEPS steps (0 disables)",
    )
    p.set_defaults(func=cmd_simulate, which="hartree")

    p = sub.add_parser("simulate-vlasov", help="propagate the particle ensemble")
    _add_common(p)
    p.add_argument("--checkpoint-every", type=int, default=0, metavar="STEPS")
    p.set_defaults(func=cmd_simulate, which="vlasov")

    p = sub.add_parser("certify", help="assemble exponents and the smallness bound")
    _add_common(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("metrics", help="phase-space distance of matched initial data")
    _add_common(p)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser(
        "transport-check", help="free-stream invariance of transported moments"
    )
    _add_common(p)
    p.add_argument("--tolerance", type=float, default=1e-7)
    p.set_defaults(func=cmd_transport_check)

    p = sub.add_parser("compare", help="twin quantum/classical run from matched data")
    _add_common(p)
    p.set_defaults(func=cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SemiklError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
