"""Command line front end.

Exit codes: 0 correct, 1 a task failed without a constraint explaining
it, 2 hard static violation, 3 hard dynamic violation, 4 usage or parse
error.  Warnings never change the exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import catalog
from .cluster import ClusterFileError, load_cluster
from .constraints import PRE_EXECUTION, PropertyEnvironment, check_setup
from .engine import EXIT_CODES, EXIT_USAGE, EngineConfig, Mode, RunStatus, configure_logging, real_defaults
from .engine.explain import explain, explain_report, format_observed
from .engine.posthoc import agreement, digest_checks, posthoc_checks, recheck_posthoc
from .lang import ParseError, compile_file, lint, parse_file
from .sim import FaultScriptError, SimulationError, load_faults

REPORT_SCHEMA = Path(__file__).parent / "data" / "report.schema.json"


class UsageError(Exception):
    pass


def _pairs(items, what: str) -> dict[str, str]:
    out = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise UsageError(f"{what} must look like KEY=VALUE, got {item!r}")
        out[key] = value
    return out


def _workflow(args):
    wf = compile_file(args.workflow, _pairs(getattr(args, "param", None), "--param") or None)
    inputs = _pairs(getattr(args, "input", None), "--input")
    if inputs:
        try:
            wf = wf.with_inputs(inputs)
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    return wf


def _cluster(args, required: bool):
    if args.cluster is None:
        if required:
            raise UsageError("--cluster is required")
        return None
    return load_cluster(args.cluster)


def _emit(args, report: dict, human: str) -> None:
    if args.format == "json":
        sys.stdout.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    else:
        sys.stdout.write(human)
    if getattr(args, "report", None):
        with open(args.report, "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")


# ---- human rendering ------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float) and value.is_integer():
        return str(int(value))
    return str(value)


def render_run(report: dict) -> str:
    lines = [f"workflow {report['workflow']} ({report['mode']}): {report['status']} (exit {report['exit_code']})"]
    step = report.get("first_erroneous_step")
    violations = report.get("violations", [])
    if step is not None:
        lines.append(f"FIRST ERRONEOUS STEP: {step}")
        for v in violations:
            if v["step"] == step and v["verdict"] == "violated":
                lines.append(f"  {v['constraint']}: {v['formula']}")
                lines.append(f"    subject {json.dumps(v['subject'], sort_keys=True)}; "
                             f"observed {format_observed(v['observed'], v['bound'])}, expected {v['bound']}")
                if v.get("detail"):
                    lines.append(f"    {v['detail'].splitlines()[0]}")
    if report.get("failure"):
        lines.append(f"reason: {report['failure']}")
    others = [v for v in violations if not (v["step"] == step and v["verdict"] == "violated")]
    if others:
        lines.append("other reports:")
        for v in others:
            lines.append(f"  [{v['verdict']}] {v['constraint']} at {v['step']}: "
                         f"observed {format_observed(v['observed'], v['bound'])}, expected {v['bound']}")
    trace = report.get("trace") or {}
    for i, s in enumerate(trace.get("steps", []), 1):
        lines.append(f"step {i} t={_fmt(s.get('time'))}: {', '.join(s.get('finished', []))}")
    for label, path in sorted((report.get("results") or {}).items()):
        lines.append(f"result {label}: {path}")
    sav = report.get("savings")
    if sav:
        cf = sav.get("counterfactual_spend_s")
        lines.append(f"compute: spent {_fmt(sav['spend_s'])}s, wasted {_fmt(sav['waste_s'])}s, "
                     f"saved {_fmt(sav['savings_s'])}s" + (f" (baseline {_fmt(cf)}s)" if cf is not None else ""))
    for v in report.get("posthoc") or []:
        lines.append(f"posthoc: {v['constraint']} {v['verdict']}: {v['detail']}")
    if report.get("posthoc") == []:
        lines.append("posthoc: all rechecks agree with the live run")
    if report.get("sandbox_root"):
        lines.append(f"sandbox: {report['sandbox_root']}")
    return "\n".join(lines) + "\n"


# ---- subcommands ------------------------------------------------------------

def cmd_validate(args) -> int:
    wf = _workflow(args)
    cluster = _cluster(args, required=False)
    if cluster is None:
        from .engine.local import local_cluster
        cluster = local_cluster()
    env = PropertyEnvironment(cluster=cluster, daw=wf.daw, params=wf.params, input_paths=wf.resolved_inputs(),
                              assume_installed=args.assume_installed)
    verdict = check_setup(wf.daw, cluster, wf.static_vcs, env)
    status = RunStatus.CORRECT if verdict.correct else RunStatus.ABORTED_STATIC
    report = {"version": 1, "workflow": wf.name, "mode": "validate", "status": status.value,
              "exit_code": EXIT_CODES[status], "first_erroneous_step": None if verdict.correct else PRE_EXECUTION,
              "violations": [v.to_json() for v in verdict.violations]}
    human = f"workflow {wf.name}: setup {'correct' if verdict.correct else 'incorrect'}\n"
    if verdict.violations:
        human += "\n" + explain(verdict.violations)
    _emit(args, report, human)
    return EXIT_CODES[status]


def _config(args, mode: Mode) -> EngineConfig:
    kw = dict(static_checks=not args.no_static_checks, keep_sandbox=args.keep_sandbox, seed=args.seed)
    if args.sandbox:
        kw["sandbox_root"] = args.sandbox
    if args.max_parallel is not None:
        kw["max_parallel_tasks"] = args.max_parallel
    if mode is Mode.REAL:
        return real_defaults(**kw)
    return EngineConfig(mode=Mode.SIMULATED, **kw)


def _finish_run(args, wf, result) -> int:
    report = result.to_json()
    if args.keep_sandbox and result.sandbox_root:
        report["posthoc"] = [r.to_json() for r in recheck_posthoc(result, wf)]
        with open(Path(result.sandbox_root) / "report.json", "w") as fh:
            json.dump(report, fh, sort_keys=True, indent=2)
            fh.write("\n")
    _emit(args, report, render_run(report))
    return result.exit_code


def cmd_run(args) -> int:
    from .engine import run
    wf = _workflow(args)
    cluster = _cluster(args, required=False)
    result = run(wf, cluster, _config(args, Mode.REAL))
    return _finish_run(args, wf, result)


def cmd_simulate(args) -> int:
    from .sim import simulate
    wf = _workflow(args)
    cluster = _cluster(args, required=True)
    faults = load_faults(args.faults) if args.faults else None
    result = simulate(wf, cluster, _config(args, Mode.SIMULATED), faults)
    return _finish_run(args, wf, result)


def cmd_classify(args) -> int:
    if args.all == bool(args.name):
        raise UsageError("give a catalog entry name or --all")
    entries = list(catalog.CATALOG.values()) if args.all else [catalog.entry(args.name)]
    if args.format == "json":
        sys.stdout.write(json.dumps([{"name": e.name, "targets": e.targets, **e.metadata.to_json()}
                                     for e in entries], indent=2) + "\n")
    elif args.all:
        sys.stdout.write(catalog.render_table())
    else:
        sys.stdout.write(catalog.describe(entries[0]))
    return 0


def _load_json(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, ValueError) as exc:
        raise UsageError(f"{path}: not a readable report: {exc}") from None
    if not isinstance(data, (dict, list)):
        raise UsageError(f"{path}: not a report")
    return data


def cmd_explain(args) -> int:
    data = _load_json(args.report)
    try:
        text = explain_report(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.report}: malformed report ({exc})") from None
    sys.stdout.write(text)
    return 0


def cmd_lint(args) -> int:
    doc = parse_file(args.workflow)
    compile_file(args.workflow)  # structural errors are errors here too
    findings = lint(doc)
    if args.format == "json":
        sys.stdout.write(json.dumps([{"code": f.code, "message": f.message, "line": f.pos.line,
                                      "col": f.pos.col, "level": f.level} for f in findings], indent=2) + "\n")
    else:
        for f in findings:
            sys.stdout.write(f.render(args.workflow) + "\n")
        if not findings:
            sys.stdout.write(f"{args.workflow}: no findings\n")
    return 0


def cmd_recheck(args) -> int:
    wf = _workflow(args)
    data = _load_json(args.run_report)
    if not isinstance(data, dict) or "records" not in data:
        raise UsageError(f"{args.run_report}: not a run report")
    try:
        reports = recheck_posthoc(data, wf, args.sandbox)
        total, disagree = agreement(posthoc_checks(data, wf, args.sandbox))
        changed = digest_checks(data, args.sandbox)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{args.run_report}: malformed report ({exc})") from None
    out = {"workflow": wf.name, "posthoc": [r.to_json() for r in reports], "rechecked": total,
           "disagreements": len(disagree), "changed_outputs": len(changed)}
    summary = (f"{total} recheck(s), {len(disagree)} disagree with the live run, "
               f"{len(changed)} output(s) changed since the run\n")
    _emit(args, out, (explain(reports) + "\n" if reports else "") + summary)
    return EXIT_CODES[RunStatus.FAILED] if disagree or changed else 0


# ---- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dawcheck", description="Constraint-checked workflow runs and simulations.")
    p.add_argument("--log-level", help="log level for diagnostics on stderr (default from DAWCHECK_LOG_LEVEL)")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, workflow=True):
        if workflow:
            sp.add_argument("workflow", help="workflow file (.vcw)")
            sp.add_argument("--param", action="append", metavar="KEY=VALUE", help="override a workflow parameter")
            sp.add_argument("--input", action="append", metavar="LABEL=PATH", help="override a workflow input")
        sp.add_argument("--format", choices=("human", "json"), default="human")

    def running(sp):
        common(sp)
        sp.add_argument("--cluster", help="cluster description (JSON)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--no-static-checks", action="store_true", help="skip the setup checks")
        sp.add_argument("--keep-sandbox", action="store_true", help="keep attempt sandboxes and recheck them")
        sp.add_argument("--sandbox", help="directory for attempt sandboxes")
        sp.add_argument("--max-parallel", type=int, help="limit on concurrently running tasks")
        sp.add_argument("--report", help="also write the JSON report to this file")

    sp = sub.add_parser("validate", help="check structure and setup without running")
    common(sp)
    sp.add_argument("--cluster", help="cluster description (JSON); default: this host")
    sp.add_argument("--assume-installed", action="store_true",
                    help="treat programs as installed on nodes that list no executables")
    sp.add_argument("--report", help="also write the JSON report to this file")
    sp.set_defaults(fn=cmd_validate)

    sp = sub.add_parser("run", help="run on this host")
    running(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("simulate", help="simulate on a described cluster")
    running(sp)
    sp.add_argument("--faults", help="fault script (JSON)")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("classify", help="show catalog metadata")
    sp.add_argument("name", nargs="?")
    sp.add_argument("--all", action="store_true")
    common(sp, workflow=False)
    sp.set_defaults(fn=cmd_classify)

    sp = sub.add_parser("explain", help="explain a stored report")
    sp.add_argument("report")
    sp.set_defaults(fn=cmd_explain)

    sp = sub.add_parser("lint", help="point out contracts that are probably mistakes")
    common(sp)
    sp.set_defaults(fn=cmd_lint)

    sp = sub.add_parser("recheck", help="recheck a kept run's evidence against its report")
    common(sp)
    sp.add_argument("run_report", metavar="report", help="report.json written by run/simulate --keep-sandbox")
    sp.add_argument("--sandbox", help="sandbox root, if it moved since the run")
    sp.set_defaults(fn=cmd_recheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else 0
    configure_logging(args.log_level)
    try:
        return args.fn(args)
    except ParseError as exc:
        sys.stderr.write(f"{exc}\n")
    except (UsageError, ClusterFileError, FaultScriptError, SimulationError, catalog.UnknownEntry) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        sys.stderr.write(f"dawcheck: {msg}\n")
    except OSError as exc:
        sys.stderr.write(f"dawcheck: {exc}\n")
    return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
