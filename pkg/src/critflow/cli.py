"""Command-line front end: ``critflow verify|simulate|probe``.

Output goes to ``--output``, else ``[experiment] output``, else the
``CRITFLOW_OUTPUT`` environment variable, else ``./critflow-out``; each mode
writes into its own subdirectory.  Every mode writes ``manifest.json`` listing
each asserted invariant.  Exit status: 0 when all assertions pass, 1 when any
fails, 2 on usage, parse or validation errors.  Reports carry no timings, so
identical inputs give byte-identical files.
"""

from __future__ import annotations

import argparse
import inspect
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance
from .config import ExperimentSpec, parse_config, parse_text
from .errors import CritflowError, ParseError, ValidationError
from .ns_solver import continuation_monitor, energy_diagnostic, run, twin_run_probe
from .reports import fmt, write_csv
from .spectral_core import save_field

OUTPUT_ENV = "CRITFLOW_OUTPUT"
EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("critflow")


class UsageError(Exception):
    pass


def output_root(spec: ExperimentSpec, override: str | None = None) -> Path:
    root = override or spec.output or os.environ.get(OUTPUT_ENV) or "critflow-out"
    return Path(root) / spec.mode


def _write_manifest(out: Path, spec: ExperimentSpec, assertions: list[tuple[str, bool]], extra=None) -> bool:
    passed = all(ok for _, ok in assertions)
    doc = {
        "mode": spec.mode,
        "suite": spec.suite if spec.mode == "verify" else None,
        "seed": spec.seed,
        "passed": passed,
        "assertions": [{"name": n, "passed": bool(ok)} for n, ok in assertions],
        "failures": [n for n, ok in assertions if not ok],
        "warnings": list(spec.warnings),
    }
    if extra:
        doc.update(extra)
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return passed


# ----------------------------------------------------------------- reports

def _flatten(name: str, value):
    if isinstance(value, (tuple, list)):
        for i, v in enumerate(value):
            yield from _flatten(f"{name}[{i}]", v)
    else:
        yield name, value


def emit_report(results, out: Path, format: str = "csv") -> list[Path]:
    """Write ``summary.csv`` and ``constants.csv`` (csv) or ``summary.txt`` (summary)."""
    out.mkdir(parents=True, exist_ok=True)
    if format == "summary":
        path = out / "summary.txt"
        path.write_text("".join(_summary_line(r) + "\n" for r, _ in results))
        return [path]
    if format != "csv":
        raise ValueError(f"unknown report format {format!r}")
    rows, consts = [], []
    for res, seed in results:
        rows.append((res.number, res.name, "passed", res.passed, seed))
        for key, value in res.metrics.items():
            for k, v in _flatten(key, value):
                rows.append((res.number, res.name, k, v, seed))
        for ident, C, sizes in res.constants:
            consts.append((res.name, ident, C, " ".join(str(s) for s in np.atleast_1d(sizes)), seed))
    write_csv(out / "summary.csv", ["number", "criterion", "metric", "value", "seed"], rows)
    write_csv(out / "constants.csv", ["criterion", "inequality", "C", "grid_sizes", "seed"], consts)
    return [out / "summary.csv", out / "constants.csv"]


def _summary_line(res) -> str:
    status = "PASS" if res.passed else "FAIL"
    shown = ", ".join(f"{k}={fmt(v)}" for k, v in res.metrics.items())
    return f"[{status}] {res.number:2d} {res.name}: {shown}"


# ------------------------------------------------------------------- modes

def _criterion_kwargs(fn, spec: ExperimentSpec) -> tuple[dict, int | None]:
    params = inspect.signature(fn).parameters
    kw = {}
    if spec.seed is not None:
        kw["seed"] = spec.seed
    if spec.samples is not None and "samples" in params:
        kw["samples"] = spec.samples
    seed = kw.get("seed", params["seed"].default if "seed" in params else None)
    return kw, seed


def suite_names(suite: str) -> list[str]:
    suite = (suite or "").strip()
    if suite in ("", "none"):
        return []
    if suite == "all":
        return list(acceptance.CRITERIA)
    names = [s.strip() for s in suite.split(",") if s.strip()]
    unknown = [s for s in names if s not in acceptance.CRITERIA]
    if unknown:
        raise UsageError(f"unknown suite {', '.join(unknown)}; choose from "
                         f"{', '.join(acceptance.CRITERIA)}, all or none")
    return names


def run_verify(spec: ExperimentSpec, out: Path) -> int:
    names = suite_names(spec.suite)
    results = []
    for name in names:
        fn = acceptance.CRITERIA[name]
        kw, seed = _criterion_kwargs(fn, spec)
        res = fn(**kw)
        print(res.line())
        results.append((res, seed))
    emit_report(results, out, "csv")
    assertions = [(f"{r.name}: {d}", ok) for r, _ in results for d, ok in r.gates]
    return EXIT_PASS if _write_manifest(out, spec, assertions) else EXIT_FAIL


def run_simulate(spec: ExperimentSpec, out: Path) -> int:
    cfg = spec.solver_config()
    result = run(cfg, raise_errors=False)
    out.mkdir(parents=True, exist_ok=True)
    result.norms_csv(out / "norms.csv")
    assertions = [("run completes" + (f" ({type(result.error).__name__}: {result.error})"
                                       if result.error else ""), result.completed)]
    mass = result.mass
    drift = float(np.abs(mass - mass[0]).max() / mass[0])
    assertions.append(("mass conserved to 1e-8", drift < 1e-8))
    finite = all(np.isfinite(f.data).all() for f in result.rho.fields + result.u.fields)
    assertions.append(("snapshots finite", finite))
    extra = {"mass_drift": drift, "steps": result.steps}
    if result.monitor is not None:
        mon = result.monitor
        mon.to_csv(out / "monitor.csv")
        write_csv(out / "side_conditions.csv", ["condition", "lhs", "rhs", "holds"],
                  [(k, l, r, ok) for k, (l, r, ok) in sorted(mon.side.items())])
        extra.update(hypotheses_green=mon.all_green, failing=mon.failing(), persistent=mon.persistent)
    if len(result.times) > 1:
        energy = energy_diagnostic(result, p1=cfg.p1)
        write_csv(out / "energy.csv", ["t", "kinetic", "potential", "total", "dissipation", "lhs", "rhs"],
                  [(t, k, p, e, d, l, energy.rhs) for t, k, p, e, d, l in
                   zip(energy.times, energy.kinetic, energy.potential, energy.total,
                       energy.dissipation, energy.lhs)])
        extra["lambda_condition"] = energy.lambda_condition
    verdict = continuation_monitor(result)
    extra.update(continuable=verdict.continuable, continuation_cited=verdict.cited,
                 continuation_degenerate=verdict.degenerate)
    save_field(result.rho.final, out / "rho_final.bin")
    save_field(result.u.final, out / "u_final.bin")
    print(f"simulate: steps={result.steps} t={fmt(float(result.times[-1]))} mass_drift={drift:.3g} "
          f"continuable={verdict.continuable}")
    return EXIT_PASS if _write_manifest(out, spec, assertions, extra) else EXIT_FAIL


def run_probe(spec: ExperimentSpec, out: Path, delta: float | None = None) -> int:
    delta = spec.get("probe", "delta") if delta is None else delta
    cfg = spec.solver_config()
    try:
        rep = twin_run_probe(cfg, delta)
    except CritflowError as exc:
        out.mkdir(parents=True, exist_ok=True)
        _write_manifest(out, spec, [(f"probe runs complete ({type(exc).__name__}: {exc})", False)],
                        {"delta": delta})
        return EXIT_FAIL
    out.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out / "probe.csv")
    assertions = [("divergence finite", bool(np.isfinite(rep.divergence).all()))]
    if delta == 0:
        assertions.append(("zero perturbation gives zero divergence", bool(np.all(rep.divergence == 0))))
    print(f"probe: delta={fmt(delta)} final_divergence={rep.divergence[-1]:.3g} C_fit={rep.C_fit:.3g}")
    return EXIT_PASS if _write_manifest(out, spec, assertions, {"delta": delta, "C_fit": rep.C_fit}) \
        else EXIT_FAIL


def run_experiment(spec: ExperimentSpec, output: str | None = None, delta: float | None = None) -> int:
    out = output_root(spec, output)
    out.mkdir(parents=True, exist_ok=True)
    if spec.mode == "verify":
        return run_verify(spec, out)
    if spec.mode == "simulate":
        return run_simulate(spec, out)
    return run_probe(spec, out, delta)


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="critflow", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = ap.add_subparsers(dest="mode", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", help=f"output root (default: ${OUTPUT_ENV} or ./critflow-out)")
    common.add_argument("--seed", type=int, help="override [experiment] seed")
    v = sub.add_parser("verify", parents=[common], help="run acceptance criteria")
    v.add_argument("--suite", help="criterion name, comma list, 'all' or 'none'")
    v.add_argument("--config", help="INI experiment file (defaults if omitted)")
    s = sub.add_parser("simulate", parents=[common], help="nonlinear run with monitors")
    s.add_argument("--config", required=True)
    p = sub.add_parser("probe", parents=[common], help="twin-run continuous-dependence probe")
    p.add_argument("--config", required=True)
    p.add_argument("--delta", type=float, help="perturbation size (overrides [probe] delta)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = parse_config(args.config, args.mode) if args.config else parse_text("", args.mode)
        if args.seed is not None:
            spec.settings["experiment"]["seed"] = args.seed
        if getattr(args, "suite", None) is not None:
            spec.settings["experiment"]["suite"] = args.suite
        if getattr(args, "delta", None) is not None and not np.isfinite(args.delta):
            raise UsageError("--delta must be finite")
        if spec.mode == "verify":
            suite_names(spec.suite)
        for w in spec.warnings:
            print(f"warning: index condition {w} fails", file=sys.stderr)
        return run_experiment(spec, args.output, getattr(args, "delta", None))
    except (ParseError, ValidationError, UsageError) as exc:
        print(f"critflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
