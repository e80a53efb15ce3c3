"""Command-line entry point: ``macrostate <command> [options]``.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Exit status: 0 on success, 1 on data/feasibility errors, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import cluster as cl
from . import portfolio as pf
from . import regime as rg
from . import similarity as sim
from .errors import MacrostateError
from .panel import MONTHLY, QUARTERLY, TimeSeriesPanel, read_panel, to_quarterly
from .synthetic import synthetic_panel
from .transform import global_sum

log = logging.getLogger("macrostate")

ANALYSIS_FEATURES = ("cpi", "gdp", "equity")


class Run:
    """Collects written files and produces the run manifest."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.config: dict = {}

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text, encoding="utf-8", newline="\n")
        self.outputs.append(name)

    def write_json(self, name: str, obj) -> None:
        self.write(name, json.dumps(obj, indent=2, sort_keys=False) + "\n")

    def inputs(self) -> dict:
        digests = {}
        for attr in ("panel", "schema", "config"):
            path = getattr(self.args, attr, None)
            if path:
                digests[Path(path).name] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
        return digests

    def finish(self) -> None:
        manifest = {
            "command": self.args.command,
            "config": self.config,
            "inputs": self.inputs(),
            "outputs": sorted(self.outputs),
            "seed": self.args.seed,
        }
        (self.out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8", newline="\n")


def _panel(args) -> TimeSeriesPanel:
    panel = read_panel(args.panel, args.schema)
    freq = getattr(args, "freq", None)
    if freq == QUARTERLY and panel.granularity == MONTHLY:
        panel = to_quarterly(panel)
    elif freq == MONTHLY and panel.granularity == QUARTERLY:
        raise MacrostateError("cannot convert a quarterly panel to monthly")
    return panel


def _present(panel, wanted=ANALYSIS_FEATURES) -> list[str]:
    return [f for f in wanted if f in panel.features]


# -- commands ---------------------------------------------------------------


def cmd_load(args, run: Run):
    panel = _panel(args)
    summary = panel.summary()
    run.config = {"freq": args.freq}
    run.write_json("summary.json", summary)
    print(json.dumps(summary, indent=2))


def cmd_norms(args, run: Run):
    panel = _panel(args)
    feats = [args.feature] if args.feature else _present(panel)
    run.config = {"freq": args.freq, "features": feats}
    for f in feats:
        g = global_sum(panel, f)
        lines = ["date,value"] + [f"{t},{v!r}" for t, v in zip(g.timestamps, g.values.tolist())]
        run.write(f"norms_{f}.csv", "\n".join(lines) + "\n")


def cmd_drivers(args, run: Run):
    panel = _panel(args)
    feats = _present(panel)
    run.config = {"freq": args.freq, "features": feats}
    m = sim.driver_distance_matrix(sim.driver_trajectories(panel, feats))
    run.write("drivers.csv", m.to_csv())
    run.write("drivers.json", m.to_json() + "\n")


def cmd_selfsim(args, run: Run):
    panel = _panel(args)
    run.config = {"freq": args.freq, "feature": args.feature}
    m = sim.temporal_self_similarity(panel, args.feature)
    run.write(f"selfsim_{args.feature}.csv", m.to_csv())
    run.write(f"selfsim_{args.feature}.json", m.to_json() + "\n")


def cmd_states(args, run: Run):
    panel = _panel(args)
    run.config = {"freq": args.freq}
    series = rg.classify_panel(panel)
    for s in series:
        run.write(f"states_{s.country}.csv", s.to_csv())
    run.write("integrals.csv", rg.integral_table(series))


def cmd_transitions(args, run: Run):
    panel = _panel(args)
    run.config = {"freq": args.freq, "country": args.country}
    series = rg.classify_panel(panel)
    if args.country:
        series = [s for s in series if s.country == args.country]
        if not series:
            raise MacrostateError(f"country {args.country!r} has no gdp/cpi pair in the panel")
        run.write_json(f"transitions_{args.country}.json", rg.transition_matrix(series[0]).to_dict())
    else:
        run.write_json("transitions.json", [rg.transition_matrix(s).to_dict() for s in series])


def cmd_cluster(args, run: Run):
    panel = _panel(args)
    run.config = {"freq": args.freq, "linkage": args.linkage, "kmax": args.kmax}
    omega = sim.economic_state_similarity(rg.classify_panel(panel))
    dist = cl.similarity_to_distance(omega)
    dend = cl.hierarchical_cluster(dist, args.linkage)
    k = cl.select_k(dist, dend, args.kmax)
    assignment = cl.cut_tree(dend, k)
    run.write("state_similarity.csv", omega.to_csv())
    run.write("state_similarity.json", omega.to_json() + "\n")
    run.write_json("dendrogram.json", dend.to_dict())
    run.write("clusters.csv", cl.labels_csv(dend, assignment))
    run.write_json("cluster.json", {"linkage": args.linkage, "k": k,
                                    "labels": dict(zip(dend.leaf_labels, assignment.tolist()))})


def _optimizer_config(args) -> pf.OptimizerConfig:
    params: dict = {}
    if args.config:
        params.update(json.loads(Path(args.config).read_text(encoding="utf-8")))
    flags = {"lower_bound": args.lo, "upper_bound": args.hi, "window": args.window,
             "step": args.step, "denominator": args.denominator}
    params.update({k: v for k, v in flags.items() if v is not None})
    params["seed"] = args.seed
    return pf.OptimizerConfig.from_dict(params)


def cmd_optimize(args, run: Run):
    panel = _panel(args)
    cfg = _optimizer_config(args)
    assets = [a.strip() for a in args.assets.split(",")] if args.assets else None
    run.config = {"freq": args.freq, "optimizer": cfg.to_dict(), "assets": assets}
    result = pf.decade_backtest(panel, assets, cfg, threads=args.threads)
    if not result.solutions and result.failures:
        f = result.failures[0]
        raise MacrostateError(f"every window failed; first at {f.window_end}: {f.message}")
    run.write("solutions.csv", pf.solutions_csv(result.solutions))
    run.write("weights.csv", pf.weights_table_csv(result.solutions, result.assets))
    if result.solutions:
        run.write("average_weights.csv", pf.averages_csv(pf.average_weights(result.solutions)))
    run.write_json("windows.json", {
        "solved": [{"window_start": str(s.window_start), "window_end": str(s.window_end),
                    "excluded": s.excluded, "objective": s.objective,
                    "stationarity": s.stationarity} for s in result.solutions],
        "failed": [{"window_end": str(f.window_end), "error": f.message} for f in result.failures],
    })


def cmd_synth(args, run: Run):
    panel = synthetic_panel(args.seed)
    run.config = {}
    run.write("synthetic_panel.csv", panel.to_csv())
    run.write_json("synthetic_schema.json", panel.schema())


# -- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--panel", required=True, help="panel CSV")
    data.add_argument("--schema", help="JSON schema mapping columns to series/feature")
    data.add_argument("--freq", choices=(MONTHLY, QUARTERLY),
                      help="analysis frequency; monthly input is averaged to quarters when 'quarterly' (default: as loaded)")

    p = argparse.ArgumentParser(prog="macrostate", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("load", parents=[common, data], help="validate a panel and print a summary")
    s = sub.add_parser("norms", parents=[common, data], help="signed cross-country sums per feature")
    s.add_argument("--feature")
    sub.add_parser("drivers", parents=[common, data], help="driver distance matrix")
    s = sub.add_parser("selfsim", parents=[common, data], help="temporal self-similarity matrix")
    s.add_argument("--feature", required=True, choices=ANALYSIS_FEATURES)
    sub.add_parser("states", parents=[common, data], help="state series and state integrals")
    s = sub.add_parser("transitions", parents=[common, data], help="empirical transition matrices")
    s.add_argument("--country")
    s = sub.add_parser("cluster", parents=[common, data], help="cluster countries by state similarity")
    s.add_argument("--linkage", choices=cl.LINKAGES, default=cl.DEFAULT_LINKAGE)
    s.add_argument("--kmax", type=int)
    s = sub.add_parser("optimize", parents=[common, data], help="rolling-window portfolio weights")
    s.add_argument("--config", help="optimizer config JSON")
    s.add_argument("--assets", help="comma-separated column ids (default: every non cpi/gdp column)")
    s.add_argument("--window", type=int)
    s.add_argument("--step", type=int)
    s.add_argument("--lo", type=float)
    s.add_argument("--hi", type=float)
    s.add_argument("--denominator", choices=pf.DENOMINATORS)
    sub.add_parser("synth", parents=[common], help="write the seeded synthetic six-decade panel")
    return p


COMMANDS = {
    "load": cmd_load,
    "norms": cmd_norms,
    "drivers": cmd_drivers,
    "selfsim": cmd_selfsim,
    "states": cmd_states,
    "transitions": cmd_transitions,
    "cluster": cmd_cluster,
    "optimize": cmd_optimize,
    "synth": cmd_synth,
}


def _configure_logging():
    level = os.environ.get("MACROSTATE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        run = Run(args)
        COMMANDS[args.command](args, run)
        run.finish()
    except (MacrostateError, OSError, json.JSONDecodeError) as exc:
        print(f"macrostate {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
