"""Command-line frontend.

Usage: ``cyclofeed <command> [flags]``.  Commands emit a structured text
report (verdict / statistics / config sections) on stdout and CSV evidence
files under ``--out``.  Exit codes: 0 pass, 2 fail, 3 inconclusive, 1 on
usage or I/O errors.  Every command is deterministic given the model file,
flags and seed.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import limits, models, structure
from .errors import CyclofeedError, HypothesisGateError, UsageError
from .limits import VerificationReport
from .modelspec import Box, ModelSpec, load_model, serialize_model
from .ode import integrate, trajectory_to_csv
from .signs import (canonical_delta, in_lambda, ntilde, sigma, sigma_min_max)
from .structure import SamplingGrid, canonical_transform, extract_feedback_signs

EXIT_PASS, EXIT_USAGE, EXIT_FAIL, EXIT_INCONCLUSIVE = 0, 1, 2, 3

_VERDICT_CODE = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2; we reserve 2 for FAIL
        raise UsageError(message)


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"expected a comma-separated number list, got {text!r}") from None


def _resolve_model(spec: str) -> ModelSpec:
    if os.path.sep in spec or spec.endswith(".json") or os.path.exists(spec):
        return load_model(spec)
    return models.builtin_model(spec)


def _grid(args) -> SamplingGrid:
    return SamplingGrid(nt=args.nt, nx=args.nx, seed=args.seed)


def _write(args, filename: str, text: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, filename)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return path


def _emit(report: VerificationReport, config: dict) -> int:
    sys.stdout.write(report.to_text(config))
    return _VERDICT_CODE[report.verdict]


def _config(args, **extra) -> dict:
    config = {"command": args.command}
    for key in ("model", "x0", "y0", "t0", "t1", "step", "rtol", "atol",
                "burn_in", "window", "eps", "pairs", "span", "C",
                "nt", "nx", "seed", "out"):
        if hasattr(args, key) and getattr(args, key) is not None:
            config[key] = getattr(args, key)
    config.update(extra)
    return config


def _canonicalised(m: ModelSpec, args):
    """Extract the feedback signature; reflect the model into canonical form
    when the signs demand it.  Returns (model, signature, mu, x0_transform)."""
    sig = extract_feedback_signs(m, grid=_grid(args))
    if sig.Delta != -1:
        raise HypothesisGateError(
            "the loop sign Delta is +1 (positive feedback); this check requires "
            "negative feedback"
        )
    if not sig.violations and not (sig.delta[0] == -1 and (sig.delta[1:] == 1).all()):
        mu = structure.mu_vector(sig.delta)
        mc = canonical_transform(m, sig)
        sig_c = extract_feedback_signs(mc, grid=_grid(args))
        return mc, sig_c, mu, (lambda x: mu * np.asarray(x, dtype=float))
    return m, sig, np.ones(m.n, dtype=int), (lambda x: np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# commands

def _cmd_sigma(args) -> int:
    x = _parse_vector(args.x)
    n = len(x)
    delta = canonical_delta(n) if args.delta is None else _parse_vector(args.delta).astype(int)
    lam = in_lambda(x, delta)
    lo, hi = sigma_min_max(x, delta, zero_vector_full_range=True)
    try:
        value = str(sigma(x, delta))
    except CyclofeedError:
        value = str(lo) if lam else "undefined (off Lambda)"
    report = VerificationReport("pass", {
        "sigma": value,
        "in_lambda": lam,
        "sigma_min": lo,
        "sigma_max": hi,
        "ntilde": ntilde(n),
    })
    return _emit(report, _config(args, x=args.x, delta=args.delta or "canonical"))


def _cmd_simulate(args) -> int:
    m = _resolve_model(args.model)
    x0 = _parse_vector(args.x0)
    t1 = args.t1 if args.t1 is not None else args.t0 + 10.0 * m.period
    kwargs = {"step": args.step} if args.rtol is None else \
        {"rtol": args.rtol, "atol": args.atol}
    if args.rtol is None and args.step is None:
        kwargs = {"step": m.period / 1000.0}
    traj = integrate(m, x0, args.t0, t1, **kwargs)
    path = _write(args, "trajectory.csv", trajectory_to_csv(traj))
    report = VerificationReport("pass", {
        "samples": len(traj.times),
        "t_final": float(traj.times[-1]),
        "x_final": traj.states[-1],
        "method": traj.step_meta["method"],
    }, artifacts=[path])
    return _emit(report, _config(args, t1=t1))


def _cmd_verify_structure(args) -> int:
    m = _resolve_model(args.model)
    sig = extract_feedback_signs(m, grid=_grid(args))
    stats = {
        "delta": sig.delta,
        "Delta": sig.Delta,
        "violations": len(sig.violations),
        "samples_checked": sig.samples_checked,
        "inconclusive_samples": sig.inconclusive,
    }
    verdict = "pass" if sig.ok else "fail"
    if sig.ok:
        mc = canonical_transform(m, sig)
        region = mc.domain or Box((-1.0,) * m.n, (1.0,) * m.n)
        rng = np.random.default_rng(args.seed)
        pattern_bad = metzler_bad = 0
        checked = 0
        for t in np.linspace(0.0, m.period, args.nt):
            for x in region.sample(rng, max(1, args.nx // 4)):
                J = mc.jac(t, x)
                checked += 1
                result = structure.check_linear_two_positive(J, tol=structure.TAU_SIGN)
                if not result.pattern_ok:
                    pattern_bad += 1
                if not structure.is_metzler(structure.additive_compound(J, 2),
                                            tol=structure.TAU_SIGN):
                    metzler_bad += 1
        stats.update({
            "canonical_jacobians_checked": checked,
            "pattern_violations": pattern_bad,
            "compound_metzler_violations": metzler_bad,
            "pattern_metzler_agree": pattern_bad == metzler_bad,
        })
        if pattern_bad or metzler_bad:
            verdict = "fail"
    return _emit(VerificationReport(verdict, stats), _config(args))


def _cmd_transform(args) -> int:
    m = _resolve_model(args.model)
    sig = extract_feedback_signs(m, grid=_grid(args))
    mc = canonical_transform(m, sig)
    path = _write(args, "canonical_model.json", serialize_model(mc) + "\n")
    report = VerificationReport("pass", {
        "delta": sig.delta,
        "Delta": sig.Delta,
        "mu": structure.mu_vector(sig.delta),
    }, artifacts=[path])
    return _emit(report, _config(args))


def _cmd_sigma_trace(args) -> int:
    m = _resolve_model(args.model)
    mc, sig, mu, tf = _canonicalised(m, args)
    x0, y0 = tf(_parse_vector(args.x0)), tf(_parse_vector(args.y0))
    t1 = args.t1 if args.t1 is not None else args.t0 + 20.0 * m.period
    step = args.step if args.step is not None else m.period / 2000.0
    trace = limits.sigma_trace_pair(mc, x0, y0, (args.t0, t1), step=step)
    path = _write(args, "sigma_trace.csv", limits.sigma_trace_to_csv(trace))
    report = limits.verify_sigma_monotone(trace)
    report.artifacts.append(path)
    return _emit(report, _config(args, t1=t1, step=step, mu=mu))


def _cmd_omega(args) -> int:
    m = _resolve_model(args.model)
    x0 = _parse_vector(args.x0)
    step = args.step if args.step is not None else m.period / 500.0
    omega = limits.omega_limit_approx(m, x0, args.burn_in, args.window, args.eps,
                                      step=step)
    path = _write(args, "omega_net.csv", limits.points_to_csv(omega.points))
    report = VerificationReport("pass" if omega.converged else "inconclusive", {
        "net_points": len(omega),
        "converged": omega.converged,
        "burn_in": omega.burn_in,
        "collected": omega.collected,
        "cluster_radius": omega.cluster_radius,
    }, artifacts=[path])
    return _emit(report, _config(args, step=step))


def _omega_from_args(mc, args, step):
    return limits.omega_limit_approx(mc, _parse_vector(args.x0), args.burn_in,
                                     args.window, args.eps, step=step)


def _cmd_theorem41(args) -> int:
    m = _resolve_model(args.model)
    mc, sig, mu, tf = _canonicalised(m, args)
    step = args.step if args.step is not None else m.period / 500.0
    omega = limits.omega_limit_approx(mc, tf(_parse_vector(args.x0)), args.burn_in,
                                      args.window, args.eps, step=step)
    report = limits.verify_sigma_constancy_on_omega(
        mc, omega, args.pairs, (0.0, args.span * m.period), step=step, signature=sig)
    report.statistics["omega_converged"] = omega.converged
    return _emit(report, _config(args, step=step, mu=mu))


def _cmd_theorem42(args) -> int:
    m = _resolve_model(args.model)
    mc, sig, mu, tf = _canonicalised(m, args)
    step = args.step if args.step is not None else m.period / 500.0
    omega = limits.omega_limit_approx(mc, tf(_parse_vector(args.x0)), args.burn_in,
                                      args.window, args.eps, step=step)
    path = _write(args, "embedding.csv", limits.points_to_csv(limits.embed_projection(omega)))
    inj = limits.verify_embedding_injectivity(omega)
    conj = limits.verify_conjugacy(omega, mc, step=step)
    verdict = "pass"
    if "fail" in (inj.verdict, conj.verdict):
        verdict = "fail"
    elif "inconclusive" in (inj.verdict, conj.verdict):
        verdict = "inconclusive"
    stats = {"net_points": len(omega), "omega_converged": omega.converged}
    stats.update({f"injectivity_{k}": v for k, v in inj.statistics.items() if k != "net_points"})
    stats.update({f"conjugacy_{k}": v for k, v in conj.statistics.items() if k != "net_points"})
    report = VerificationReport(verdict, stats, artifacts=[path])
    return _emit(report, _config(args, step=step, mu=mu))


def _cmd_dissipative(args) -> int:
    m = _resolve_model(args.model)
    grid = _grid(args)
    if args.C == "auto":
        C = structure.find_absorbing_bound(m, grid)
    else:
        try:
            C = float(args.C)
        except ValueError:
            raise UsageError(f"--C must be a number or 'auto', got {args.C!r}") from None
    x0s = [_parse_vector(args.x0)] if args.x0 is not None else None
    report_data = structure.check_dissipative_H(m, C, grid, x0s=x0s, span=args.span_time,
                                                step=args.step)
    stats = {
        "C": report_data.C,
        "samples_checked": report_data.samples_checked,
        "violations": len(report_data.violations),
    }
    for k, (x0, entry, retained) in enumerate(report_data.entry_times):
        stats[f"trajectory_{k}_entry_time"] = entry
        stats[f"trajectory_{k}_retained"] = retained
    verdict = "pass" if report_data.ok else "fail"
    return _emit(VerificationReport(verdict, stats), _config(args, C_resolved=C))


# ---------------------------------------------------------------------------
# argument wiring

def _add_common(p, model=True):
    if model:
        p.add_argument("--model", required=True,
                       help="model file path or built-in name "
                            f"({', '.join(models.BUILTIN_NAMES)})")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="directory for evidence files")
    p.add_argument("--nt", type=int, default=16, help="time samples for structural checks")
    p.add_argument("--nx", type=int, default=64, help="state samples for structural checks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cyclofeed", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sigma", help="sign-change count of a vector")
    p.add_argument("--x", required=True, help="comma-separated vector")
    p.add_argument("--delta", help="comma-separated signs (default canonical)")
    _add_common(p, model=False)
    p.set_defaults(fn=_cmd_sigma)

    p = sub.add_parser("simulate", help="integrate a model, emit trajectory CSV")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--rtol", type=float)
    p.add_argument("--atol", type=float)
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("verify-structure", help="feedback signs + 2-cooperativity verdict")
    _add_common(p)
    p.set_defaults(fn=_cmd_verify_structure)

    p = sub.add_parser("transform", help="write the sign-canonical model file")
    _add_common(p)
    p.set_defaults(fn=_cmd_transform)

    p = sub.add_parser("sigma-trace", help="sigma along the difference of two solutions")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--y0", required=True)
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float)
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_sigma_trace)

    p = sub.add_parser("omega", help="approximate the period-map limit set")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_omega)

    p = sub.add_parser("theorem41", help="sigma constancy across omega-net pairs")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--span", type=float, default=5.0, help="trace span in periods")
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_theorem41)

    p = sub.add_parser("theorem42", help="planar embedding of the omega net")
    _add_common(p)
    p.add_argument("--x0", required=True)
    p.add_argument("--burn-in", dest="burn_in", type=int, default=500)
    p.add_argument("--window", type=int, default=200)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_theorem42)

    p = sub.add_parser("dissipative", help="inward boundary condition probe")
    _add_common(p)
    p.add_argument("--C", default="auto", help="absorbing bound, or 'auto' to bisect")
    p.add_argument("--x0", help="optional probe trajectory start")
    p.add_argument("--span-time", dest="span_time", type=float,
                   help="probe trajectory span (time units)")
    p.add_argument("--step", type=float)
    p.set_defaults(fn=_cmd_dissipative)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except UsageError as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE
    except HypothesisGateError as e:
        sys.stderr.write(f"hypothesis not satisfied: {e}\n")
        return EXIT_INCONCLUSIVE
    except (CyclofeedError, OSError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
