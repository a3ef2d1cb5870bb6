"""Command-line scenario runner.

    delayedchoice run scenario.yaml [--trials N] [--seed S] [--self-check]
                                    [--diagnostics] [--workers W] [--out DIR]

Exact results are always computed.  With ``trials > 0`` the Monte Carlo
pipeline runs as well and every estimated quantity is reported next to its
exact value with a z-score.  Exit status: 0 success, 1 self-check failure
(some |z| > 5), 2 unreadable or invalid scenario.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import analytics, montecarlo
from .analytics import CorrelationReport
from .config import ScenarioConfig, load_config
from .errors import ConfigParseError, ConfigValidationError, EmptySubensemble, ZeroMarginal
from .qmath import OUTCOME_LABELS, ProductAngles, express_in, product_basis

log = logging.getLogger(__name__)

SELF_CHECK_SIGMA = 5.0
LATER_OUTCOMES = (1, 2, 3, 4)


def _g(x: float) -> str:
    return f"{x:.12g}"


@dataclass
class ScenarioResult:
    status: int
    report: dict
    records: Optional[montecarlo.TrialTable] = None
    files: dict = field(default_factory=dict)


def _exact_step(cfg: ScenarioConfig, angles: ProductAngles) -> dict:
    out: dict = {}
    if cfg.mode == "forward":
        frame = product_basis(angles)
        out["all"] = analytics.whole_ensemble_correlation(cfg.ensemble, angles).correlation
        out["components"] = [analytics.state_correlation(s, angles).correlation for s in cfg.ensemble.states]
        out["joint"] = [
            [c.weight * p for p in (np.abs(frame.matrix.conj() @ c.state.amps) ** 2).tolist()]
            for c in cfg.ensemble.components
        ]
        return out
    alpha = analytics.induced_alpha(cfg.ensemble, angles)
    out["alpha"] = alpha.alpha.tolist()
    out["all"] = CorrelationReport.from_outcomes(alpha.alpha).correlation
    if cfg.later_basis is None:
        return out
    joint = analytics.joint_distribution(alpha, express_in(cfg.later_basis, product_basis(angles)))
    out["joint"] = joint.p.tolist()
    out["marginal"] = analytics.entangled_marginal(joint).tolist()
    conditional = {}
    for a in LATER_OUTCOMES:
        try:
            cond = analytics.retrospective_conditional(joint, a)
        except ZeroMarginal as exc:
            conditional[str(a)] = {"error": "ZeroMarginal", "marginal": exc.marginal}
            continue
        conditional[str(a)] = {
            "distribution": cond.tolist(),
            "correlation": CorrelationReport.from_outcomes(cond).correlation,
        }
    out["conditional"] = conditional
    return out


def _row(settings_id, angles, quantity, exact, est: montecarlo.EstimateReport) -> dict:
    return {
        "settings_id": settings_id,
        "theta": angles.theta,
        "phi": angles.phi,
        "quantity": quantity,
        "exact": exact,
        "estimate": est.correlation,
        "std_error": est.std_error,
        "n": est.n,
        "z": est.z_score(exact),
    }


def _frequency_row(settings_id, angles, quantity, exact_p, count, n) -> dict:
    p = count / n
    se = math.sqrt(p * (1 - p) / n)
    if se == 0.0:
        se = math.sqrt(exact_p * (1 - exact_p) / n)
    diff = p - exact_p
    z = diff / se if se > 0 else (0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff))
    return {
        "settings_id": settings_id,
        "theta": angles.theta,
        "phi": angles.phi,
        "quantity": quantity,
        "exact": exact_p,
        "estimate": p,
        "std_error": se,
        "n": n,
        "z": z,
    }


def _simulate(cfg, angles, settings_id, workers):
    if cfg.mode == "forward":
        return montecarlo.run_forward(cfg.ensemble, angles, cfg.trials, cfg.seed, settings_id=settings_id, workers=workers)
    return montecarlo.run_reverse(
        cfg.ensemble, angles, cfg.later_basis, cfg.trials, cfg.seed, settings_id=settings_id, workers=workers
    )


def _mc_step(cfg, angles, settings_id, exact, records, diagnostics) -> tuple[list, list]:
    rows, errors = [], []
    rows.append(_row(settings_id, angles, "E[all]", exact["all"], montecarlo.estimate_correlation(records)))
    if cfg.mode == "forward":
        if diagnostics:
            groups = montecarlo.group_by_component(records)
            for k, exact_k in enumerate(exact["components"]):
                if k in groups:
                    rows.append(_row(settings_id, angles, f"E[component={k}]", exact_k,
                                     montecarlo.estimate_correlation(groups[k])))
        return rows, errors
    if cfg.later_basis is None:
        return rows, errors
    buckets = montecarlo.sort_subensembles(records)
    n = len(records)
    for a in LATER_OUTCOMES:
        bucket = buckets.get(a, montecarlo.TrialTable.empty())
        rows.append(_frequency_row(settings_id, angles, f"P(A={a})", exact["marginal"][a - 1], len(bucket), n))
        cond = exact["conditional"][str(a)]
        try:
            est = montecarlo.estimate_correlation(bucket)
        except EmptySubensemble:
            errors.append({"settings_id": settings_id, "quantity": f"E[A={a}]", "error": "EmptySubensemble",
                           "exact_error": cond.get("error")})
            continue
        rows.append(_row(settings_id, angles, f"E[A={a}]", cond["correlation"], est))
    return rows, errors


def _chsh_sources(cfg) -> list[str]:
    if cfg.mode == "forward":
        return ["all"] + [f"component={k}" for k in range(len(cfg.ensemble))]
    if cfg.later_basis is None:
        return ["all"]
    return ["all"] + [f"A={a}" for a in LATER_OUTCOMES]


def _exact_source(cfg, source: str):
    if source == "all":
        if cfg.mode == "forward":
            return lambda s: analytics.whole_ensemble_correlation(cfg.ensemble, s)
        return lambda s: CorrelationReport.from_outcomes(analytics.induced_alpha(cfg.ensemble, s).alpha)
    kind, _, idx = source.partition("=")
    if kind == "component":
        state = cfg.ensemble.states[int(idx)]
        return lambda s: analytics.state_correlation(state, s)
    return lambda s: analytics.retrospective_correlation(s, cfg.ensemble, cfg.later_basis, int(idx))


def _mc_source(cfg, source: str, tables: dict):
    def estimate(angles):
        records = tables[(angles.theta, angles.phi)]
        if source == "all":
            return montecarlo.estimate_correlation(records)
        kind, _, idx = source.partition("=")
        if kind == "component":
            return montecarlo.estimate_correlation(montecarlo.group_by_component(records).get(int(idx), []))
        return montecarlo.estimate_correlation(montecarlo.sort_subensembles(records).get(int(idx), []))

    return estimate


def _chsh(cfg, first_settings_id, workers, diagnostics):
    settings = analytics.chsh_settings(*cfg.chsh_settings)
    results, errors, tables = [], [], {}
    if cfg.trials > 0:
        for k, s in enumerate(settings):
            tables[(s.theta, s.phi)] = _simulate(cfg, s, first_settings_id + k, workers)
    for source in _chsh_sources(cfg):
        if source.startswith("component") and not diagnostics:
            continue
        entry = {"source": source}
        try:
            exact = analytics.chsh(settings, _exact_source(cfg, source))
        except ZeroMarginal as exc:
            errors.append({"quantity": f"S[{source}]", "error": "ZeroMarginal", "marginal": exc.marginal})
            continue
        entry.update(exact_correlations=list(exact.correlations), exact_s=exact.s_value)
        if tables:
            try:
                est = analytics.chsh(settings, _mc_source(cfg, source, tables))
            except EmptySubensemble:
                errors.append({"quantity": f"S[{source}]", "error": "EmptySubensemble"})
            else:
                se = est.std_error
                diff = est.s_value - exact.s_value
                z = diff / se if se else (0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff))
                entry.update(estimate_correlations=list(est.correlations), estimate_s=est.s_value,
                             std_error=se, z=z)
        results.append(entry)
    return settings, results, errors, list(tables.values())


def run_scenario(
    cfg: ScenarioConfig,
    out_dir=None,
    *,
    self_check: Optional[bool] = None,
    diagnostics: bool = False,
    workers: int = 1,
    stream=None,
) -> ScenarioResult:
    """Execute a validated scenario and write the requested outputs.

    ZeroMarginal/EmptySubensemble conditions become report entries.  The
    status is 1 only when self-check is on and some |z| exceeds 5.
    """
    self_check = cfg.self_check if self_check is None else self_check
    settings_table, exact_rows, mc_rows, errors, tables = [], [], [], [], []
    for sid, angles in enumerate(cfg.settings):
        settings_table.append({"settings_id": sid, "role": "sweep", "theta": angles.theta, "phi": angles.phi})
        exact = _exact_step(cfg, angles)
        exact_rows.append({"settings_id": sid, "theta": angles.theta, "phi": angles.phi, **exact})
        if cfg.trials > 0:
            records = _simulate(cfg, angles, sid, workers)
            tables.append(records)
            rows, errs = _mc_step(cfg, angles, sid, exact, records, diagnostics)
            mc_rows.extend(rows)
            errors.extend(errs)
        for a, cond in exact.get("conditional", {}).items():
            if "error" in cond:
                errors.append({"settings_id": sid, "quantity": f"E[A={a}]", "error": cond["error"]})

    chsh_results = None
    if cfg.chsh_settings is not None:
        first = len(cfg.settings)
        settings, chsh_results, errs, chsh_tables = _chsh(cfg, first, workers, diagnostics)
        errors.extend(errs)
        tables.extend(chsh_tables)
        for k, s in enumerate(settings):
            settings_table.append({"settings_id": first + k, "role": "chsh", "theta": s.theta, "phi": s.phi})

    z_values = [r["z"] for r in mc_rows] + [c["z"] for c in chsh_results or [] if "z" in c]
    worst = max((abs(z) for z in z_values), default=0.0)
    failed = bool(self_check and worst > SELF_CHECK_SIGMA)

    report = {
        "config": cfg.resolved,
        "diagnostics": diagnostics,
        "settings": settings_table,
        "exact": exact_rows,
        "monte_carlo": mc_rows,
        "chsh": chsh_results,
        "errors": errors,
        "max_abs_z": worst,
        "self_check": {"enabled": self_check, "sigma": SELF_CHECK_SIGMA, "passed": not failed},
    }
    records = montecarlo.TrialTable.concat(tables) if tables else None
    result = ScenarioResult(status=1 if failed else 0, report=report, records=records)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if "report_json" in cfg.outputs:
            result.files["report_json"] = _write(out / "report.json", report_json(report))
        if "joint_csv" in cfg.outputs:
            result.files["joint_csv"] = _write(out / "joint.csv", joint_csv(cfg, exact_rows))
        if "records_csv" in cfg.outputs and records is not None:
            result.files["records_csv"] = _write(out / "records.csv", records_csv(records, diagnostics))
    if "summary_table" in cfg.outputs:
        text = summary_table(cfg, report)
        if out_dir is not None:
            result.files["summary_table"] = _write(Path(out_dir) / "summary.txt", text)
        print(text, file=stream or sys.stdout)
    return result


def _write(path: Path, text: str) -> Path:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def report_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=True) + "\n"


def joint_csv(cfg: ScenarioConfig, exact_rows: list) -> str:
    """One row per setting; the probability columns of each row sum to 1."""
    labels = [f"{i}{j}" for i, j in OUTCOME_LABELS]
    if cfg.mode == "forward":
        cols = [f"p_k{k}_{ij}" for k in range(len(cfg.ensemble)) for ij in labels]
        key = "joint"
    elif cfg.later_basis is None:
        cols = [f"p_{ij}" for ij in labels]
        key = "alpha"
    else:
        cols = [f"p_{ij}_A{a}" for ij in labels for a in LATER_OUTCOMES]
        key = "joint"
    lines = [",".join(["settings_id", "theta", "phi", *cols])]
    for r in exact_rows:
        values = np.ravel(r[key]).tolist()
        lines.append(",".join([str(r["settings_id"]), _g(r["theta"]), _g(r["phi"]), *map(_g, values)]))
    return "\n".join(lines) + "\n"


def records_csv(records: montecarlo.TrialTable, diagnostics: bool = False) -> str:
    header = ["trial_id", "settings_id", "first_i", "first_j", "later_A"]
    if diagnostics:
        header.append("component_index")
    first = records.first.astype(np.int64)
    cols = [
        records.trial_id.tolist(),
        records.settings_id.tolist(),
        (first // 2 + 1).tolist(),
        (first % 2 + 1).tolist(),
        [str(a) if a else "" for a in records.later.tolist()],
    ]
    if diagnostics:
        cols.append(records.component.tolist())
    lines = [",".join(header)]
    lines.extend(",".join(map(str, row)) for row in zip(*cols))
    return "\n".join(lines) + "\n"


def summary_table(cfg: ScenarioConfig, report: dict) -> str:
    out = [f"scenario {cfg.name} ({cfg.mode}, trials={cfg.trials}, seed={cfg.seed})", ""]
    if cfg.mode == "reverse" and cfg.later_basis is not None:
        head = ["id", "theta", "phi", "E[all]"] + [f"E[A={a}]" for a in LATER_OUTCOMES]
    elif cfg.mode == "forward":
        head = ["id", "theta", "phi", "E[all]"] + [f"E[k={k}]" for k in range(len(cfg.ensemble))]
    else:
        head = ["id", "theta", "phi", "E[all]"]
    out.append("exact correlations")
    out.append(" ".join(f"{h:>12}" for h in head))
    for r in report["exact"]:
        vals = [r["all"]]
        if cfg.mode == "forward":
            vals += r["components"]
        elif "conditional" in r:
            vals += [r["conditional"][str(a)].get("correlation", float("nan")) for a in LATER_OUTCOMES]
        cells = [f"{r['settings_id']:>12}"] + [f"{v:>12.6f}" for v in (r["theta"], r["phi"], *vals)]
        out.append(" ".join(cells))
    if report["monte_carlo"]:
        out += ["", "monte carlo vs exact"]
        out.append(" ".join(f"{h:>12}" for h in ("id", "quantity", "exact", "estimate", "std_error", "z")))
        for r in report["monte_carlo"]:
            out.append(
                f"{r['settings_id']:>12} {r['quantity']:>12} {r['exact']:>12.6f} {r['estimate']:>12.6f}"
                f" {r['std_error']:>12.6f} {r['z']:>12.3f}"
            )
    if report["chsh"]:
        out += ["", "CHSH S"]
        for c in report["chsh"]:
            line = f"{c['source']:>14} exact {c['exact_s']:+.6f}"
            if "estimate_s" in c:
                line += f"  estimate {c['estimate_s']:+.6f} +- {c['std_error']:.6f}  z {c['z']:+.3f}"
            out.append(line)
    if report["errors"]:
        out += ["", "conditions"]
        out += [f"  {e}" for e in report["errors"]]
    sc = report["self_check"]
    if sc["enabled"]:
        out += ["", f"self-check ({sc['sigma']:g} sigma): {'PASS' if sc['passed'] else 'FAIL'}"
                    f" (max |z| = {report['max_abs_z']:.3f})"]
    return "\n".join(out) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="delayedchoice", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario file")
    run.add_argument("config", type=Path)
    run.add_argument("--trials", type=int, default=None, help="override the trial count")
    run.add_argument("--seed", type=int, default=None, help="override the seed")
    run.add_argument("--self-check", action="store_true", help="exit 1 if any estimate deviates > 5 sigma")
    run.add_argument("--diagnostics", action="store_true", help="expose the hidden component index")
    run.add_argument("--workers", type=int, default=1, help="threads for Monte Carlo trials")
    run.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config).with_overrides(trials=args.trials, seed=args.seed)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc}", file=sys.stderr)
        return 2
    except ConfigParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    result = run_scenario(
        cfg,
        args.out,
        self_check=True if args.self_check else None,
        diagnostics=args.diagnostics,
        workers=args.workers,
    )
    for kind, path in sorted(result.files.items()):
        log.info("wrote %s: %s", kind, path)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
