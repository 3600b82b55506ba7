"""Command-line harness: ``run``, ``compare``, ``gen-data`` and ``check-grad``.

Exit codes: 0 ok, 1 run error or failed check, 2 configuration or data error.
Verbosity comes from the ``LOG_LEVEL`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .asymm import (
    centralized_mm,
    cyclic_schedule,
    init_states,
    max_iterate_difference,
    mirror_schedule,
    run,
)
from .metrics import compute_metrics, summarize
from .netgraph import GraphError, Schedule, make_graph
from .scenarios import (
    DigitConfig,
    DocumentConfig,
    build_digit_scenario,
    build_document_scenario,
    export_data,
    toy_consensus,
)

log = logging.getLogger("asymmlfc")

SCENARIOS = ("digit_parity", "document", "toy_consensus")
EQUIVALENCE_TOL = 1e-12
F1_TOL = 0.02
HYPER = ("alpha", "gamma", "beta", "eps0", "eps_min", "penalty_cap")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: str = "toy_consensus"
    seed: int = 0
    iterations: int = 5000
    graph: Optional[str] = None  # generator spec or edge-list file; scenario default if None
    data: str = "synthetic"  # "synthetic", a gen-data directory, or "idx:<images>,<labels>"
    alpha: Optional[float] = None
    gamma: Optional[float] = None
    beta: Optional[float] = None
    eps0: Optional[float] = None
    eps_min: Optional[float] = None
    penalty_cap: Optional[float] = None
    weight_decay: Optional[float] = None
    repeats: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        for name in HYPER + ("weight_decay",):
            x = getattr(self, name)
            if x is not None and not x > 0 and not (name == "weight_decay" and x == 0):
                raise ConfigError(f"{name} must be positive")
        if self.gamma is not None and self.gamma < 1:
            raise ConfigError("gamma must be >= 1")


@dataclass
class MetricsReport:
    predictors: dict = field(default_factory=dict)  # name -> {precision, recall, f1, mean, std}
    avg_violation: float = float("nan")
    consensus_disagreement: float = float("nan")

    def to_json(self) -> str:
        doc = dict(self.predictors)
        doc["avg_violation"] = self.avg_violation
        doc["consensus_disagreement"] = self.consensus_disagreement
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- configuration -------------------------------------------------------------

_ALIASES = {"iters": "iterations", "out": "output_dir", "eps-min": "eps_min",
            "penalty-cap": "penalty_cap", "weight-decay": "weight_decay"}


def read_config_file(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key).replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        out[key] = _coerce(key, val, f"{path}:{n}")
    return out


def _coerce(key, val, where):
    if key in ("seed", "iterations", "repeats"):
        conv = int
    elif key in HYPER + ("weight_decay",):
        conv = float
    else:
        conv = str
    try:
        return conv(val)
    except ValueError as e:
        raise ConfigError(f"{where}: bad value {val!r} for {key}") from e


def config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return RunConfig(**values)


# --- scenario construction ---------------------------------------------------------

def build(cfg: RunConfig, seed: int):
    """Scenario for ``cfg`` with data seed ``seed`` and parameter overrides applied."""
    if cfg.scenario == "digit_parity":
        dc = DigitConfig(seed=seed, source=cfg.data, graph=cfg.graph or "ring")
        if cfg.weight_decay is not None:
            dc = replace(dc, weight_decay=cfg.weight_decay)
        sc = build_digit_scenario(dc)
    elif cfg.scenario == "document":
        dc = DocumentConfig(seed=seed, source=cfg.data, graph=cfg.graph or "ring")
        if cfg.weight_decay is not None:
            dc = replace(dc, weight_decay=cfg.weight_decay)
        sc = build_document_scenario(dc)
    else:
        if cfg.data != "synthetic":
            raise ConfigError("toy_consensus takes no data")
        sc = toy_consensus()
        if cfg.graph is not None:
            sc.graph = make_graph(cfg.graph, 2, seed=seed)
    over = {k: getattr(cfg, k) for k in HYPER if getattr(cfg, k) is not None}
    if over:
        sc.params = replace(sc.params, **over)
    return sc


def _evaluate(sc, states) -> dict:
    if sc.evaluate is None:
        return {}
    return {name: compute_metrics(s, y) for name, (s, y) in sc.evaluate(states).items()}


def run_once(cfg: RunConfig, seed: int, record_iterates: bool = False):
    sc = build(cfg, seed)
    states = init_states(sc.graph, sc.problems, sc.params, sc.w0, sc.ws0)
    sched = Schedule(sc.graph.node_count, seed)
    trace = run(sc.graph, sc.problems, sched, cfg.iterations, sc.params, states,
                record_iterates=record_iterates)
    return sc, trace, _evaluate(sc, states)


def _final(trace):
    return trace.records[-1] if trace.records else trace.initial


def _check_finite(trace):
    last = _final(trace)
    if not np.isfinite(last.avg_violation) or not np.isfinite(last.consensus_disagreement):
        raise FloatingPointError("run diverged: non-finite diagnostics; lower --alpha or --penalty-cap")


# --- subcommands ---------------------------------------------------------------

def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scores, viol, gap = [], [], []
    for r in range(cfg.repeats):
        seed = cfg.seed + r
        log.info("repeat %d/%d, seed %d", r + 1, cfg.repeats, seed)
        sc, trace, s = run_once(cfg, seed)
        _check_finite(trace)
        if r == 0:
            (out / "trace.csv").write_text(trace.to_csv())
            (out / "violations.csv").write_text(trace.violations_csv())
        scores.append(s)
        viol.append(_final(trace).avg_violation)
        gap.append(_final(trace).consensus_disagreement)
    report = MetricsReport(summarize(scores), float(np.mean(viol)), float(np.mean(gap)))
    (out / "metrics.json").write_text(report.to_json())
    print(f"avg_violation {report.avg_violation:.3e}  consensus_disagreement "
          f"{report.consensus_disagreement:.3e}")
    for name, m in report.predictors.items():
        print(f"{name:>12s}  P {m['precision']:.3f}  R {m['recall']:.3f}  F1 {m['mean']:.3f} +- {m['std']:.3f}")
    return 0


def compare(cfg: RunConfig, central_schedule: str = "mirrored") -> dict:
    """ASYMM against centralized MM on the same problem.

    With the mirrored schedule the iterates must coincide; with ``cyclic`` the
    block order differs, so only the learned predictors are compared
    (per-predictor F1 within ``F1_TOL``).
    """
    sc, trace, s_asymm = run_once(cfg, cfg.seed, record_iterates=True)
    n = sc.graph.node_count
    if central_schedule == "mirrored":
        central = centralized_mm(sc.problems, sc.graph, mirror_schedule(trace, n), sc.params,
                                 sc.w0, sc.ws0, auto_ascent=False)
    else:
        steps = len(trace.iterates)
        central = centralized_mm(sc.problems, sc.graph, cyclic_schedule(n), sc.params,
                                 sc.w0, sc.ws0, iterations=steps)
    diff = max_iterate_difference(trace, central, n)
    s_central = _evaluate(sc, central.states)
    f1_diff = {k: abs(s_asymm[k].f1 - s_central[k].f1) for k in s_asymm}
    rows = _difference_rows(trace, central) if diff is not None else []
    f1_ok = all(v <= F1_TOL for v in f1_diff.values())
    if central_schedule == "mirrored" and diff is not None:
        verdict = "pass" if diff <= EQUIVALENCE_TOL else "fail"
        reason = f"max |asymm - central| = {diff:.3e} (threshold {EQUIVALENCE_TOL:g})"
    elif central_schedule == "mirrored":
        verdict = "not comparable"
        reason = "per-node step counts differ between the two schedules, so iterates cannot be paired"
    elif f1_diff:
        verdict = "pass" if f1_ok else "fail"
        reason = (f"block orders differ, so only predictors are compared: max F1 gap "
                  f"{max(f1_diff.values()):.4f} (threshold {F1_TOL:g})")
    else:
        verdict = "not comparable"
        reason = "block orders differ and the scenario has no predictors to compare"
    return {
        "verdict": verdict, "reason": reason, "central_schedule": central_schedule,
        "max_iterate_difference": diff, "asymm_steps": len(trace.iterates),
        "central_steps": len(central.iterates), "f1_difference": f1_diff,
        "f1_within_tolerance": f1_ok,
        "rows": rows,
    }


def _difference_rows(trace, central):
    """Per primal step of the ASYMM run: the paired iterate gap."""
    seen, rows = {}, []
    per_node = {}
    for node, w, ws in central.iterates:
        per_node.setdefault(node, []).append((w, ws))
    for k, (node, w, ws) in enumerate(trace.iterates):
        c = seen.get(node, 0)
        seen[node] = c + 1
        cw, cws = per_node[node][c]
        gap = float(np.max([0.0] + [np.max(np.abs(a - b)) for a, b in ((w, cw), (ws, cws)) if a.size]))
        rows.append((k, node, gap))
    return rows


def cmd_compare(cfg: RunConfig, central_schedule: str = "mirrored") -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = compare(cfg, central_schedule)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(("step", "node", "max_abs_difference"))
    for k, node, gap in res["rows"]:
        wr.writerow((k, node, repr(gap)))
    (out / "differences.csv").write_text(buf.getvalue())
    summary = {k: v for k, v in res.items() if k != "rows"}
    (out / "compare.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"verdict: {res['verdict']} ({res['reason']})")
    for name, d in sorted(res["f1_difference"].items()):
        print(f"{name:>12s}  |F1 asymm - F1 central| = {d:.4f}")
    return 0 if res["verdict"] == "pass" else 1


def cmd_gen_data(cfg: RunConfig) -> int:
    if cfg.scenario == "digit_parity":
        paths = export_data(cfg.scenario, DigitConfig(seed=cfg.seed), cfg.output_dir)
    elif cfg.scenario == "document":
        paths = export_data(cfg.scenario, DocumentConfig(seed=cfg.seed), cfg.output_dir)
    else:
        raise ConfigError("toy_consensus has no data to generate")
    print(f"wrote {len(paths)} files to {cfg.output_dir}")
    return 0


def cmd_check_grad(n_states: int, seed: int) -> int:
    from .gradcheck import FAMILIES, check_family

    ok = True
    for fam in FAMILIES:
        r = check_family(fam, n_states, seed)
        ok &= r.passed()
        print(f"{fam:>9s}  states {r.n_states}  max rel err {r.max_rel_err:.2e}  "
              f"near kinks {r.n_kink} (max {r.max_rel_err_kink:.2e})  {'ok' if r.passed() else 'FAIL'}")
    return 0 if ok else 1


# --- entry point ------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="asymm-lfc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value file; flags override it")
        sp.add_argument("--scenario", choices=SCENARIOS)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--iters", dest="iterations", type=int)
        sp.add_argument("--graph", help="ring | path | complete | erdos:<p> | edge-list file")
        sp.add_argument("--data", help="synthetic | gen-data directory | idx:<images>,<labels>")
        for name in HYPER:
            sp.add_argument("--" + name.replace("_", "-"), dest=name, type=float)
        sp.add_argument("--weight-decay", dest="weight_decay", type=float)
        sp.add_argument("--out", dest="output_dir")

    sp = sub.add_parser("run", help="run ASYMM and write trace, violations and metrics")
    common(sp)
    sp.add_argument("--repeats", type=int, help="repeat with seeds seed..seed+k-1")
    sp = sub.add_parser("compare", help="ASYMM against centralized MM")
    common(sp)
    sp.add_argument("--central-schedule", choices=("mirrored", "cyclic"), default="mirrored")
    sp = sub.add_parser("gen-data", help="write synthetic scenario data to --out")
    common(sp)
    sp = sub.add_parser("check-grad", help="finite-difference check of the Lagrangian gradient")
    sp.add_argument("--states", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = _parser().parse_args(argv)
    try:
        if args.command == "check-grad":
            return cmd_check_grad(args.states, args.seed)
        cfg = config_from_args(args)
        log.info("config %s", asdict(cfg))
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.central_schedule)
        return cmd_gen_data(cfg)
    except (ValueError, GraphError, FileNotFoundError, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        log.debug("run failed", exc_info=True)
        print(f"run error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
