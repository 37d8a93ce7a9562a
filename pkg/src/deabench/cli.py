"""Command-line interface.

Subcommands: ``eff`` scores every firm, ``cf`` computes one counterfactual,
``batch`` runs the whole panel and emits the aggregate tables, ``synth``
generates a synthetic panel, and ``serve`` starts the HTTP service.  Report
paths write delimited data plus rendered figures next to each other.

Exit codes: 0 success, 1 solver failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dea
from .analytics import (
    batch_explain,
    change_frequency,
    change_magnitude,
    heatmap_matrix,
    spider_payload,
    stats_to_csv,
    summary_text,
    synth_panel,
)
from .counterfactual import (
    BoundsError,
    CounterfactualRequest,
    SolveFailure,
    TargetError,
    explain,
)
from .figures import render_heatmap, render_spider
from .miqp import MiqpOptions
from .model import (
    COST_PRESETS,
    BigMConfig,
    CostWeights,
    Orientation,
    PanelError,
    Technology,
    read_panel_csv,
    write_panel_csv,
)
from .reporting import (
    batch_payload,
    canonical_json,
    efficiency_csv,
    efficiency_payload,
    result_payload,
    stats_payload,
)

DEFAULT_PORT = int(os.environ.get("DEABENCH_PORT", "8080"))


class UsageError(Exception):
    pass


def _tech(name: str) -> Technology:
    return Technology(name)


def _orient(name: str) -> Orientation:
    return Orientation(name)


def _load_panel(path: str):
    try:
        panel, removed = read_panel_csv(path)
    except (OSError, PanelError) as exc:
        raise UsageError(f"cannot load panel: {exc}") from exc
    if removed:
        print(f"removed {len(removed)} zero-input rows: {', '.join(removed)}",
              file=sys.stderr)
    return panel


def _weights_from_args(args) -> CostWeights:
    if getattr(args, "weights", None):
        try:
            return COST_PRESETS[args.weights]
        except KeyError:
            raise UsageError(f"unknown weight preset {args.weights!r}; "
                             f"choose from {sorted(COST_PRESETS)}") from None
    return CostWeights(args.nu0, args.nu1, args.nu2)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eff(args) -> int:
    panel = _load_panel(args.panel)
    tech, orient = _tech(args.tech), _orient(args.orient)
    results = [dea.efficiency(panel, k, tech, orient) for k in range(panel.n_dmus)]
    out = _outdir(args)
    (out / "efficiency.csv").write_text(efficiency_csv(panel, results))
    payload = efficiency_payload(panel, tech, orient, results)
    (out / "efficiency.json").write_text(canonical_json(payload))
    for row in payload["scores"]:
        print(f"{row['id']}: {row['score']:.4f}")
    return 0


def _request_from_args(panel, args, weights) -> CounterfactualRequest:
    try:
        firm = panel.index_of(args.firm)
    except KeyError:
        raise UsageError(f"unknown firm id {args.firm!r}") from None
    names = (panel.input_names if args.orient == "input" else panel.output_names)
    locked = set()
    for n in args.lock or []:
        if n not in names:
            raise UsageError(f"unknown feature name {n!r}; expected one of {names}")
        locked.add(names.index(n))
    big_m = None
    if args.mzero is not None:
        big_m = BigMConfig(m_zero=args.mzero)
    return CounterfactualRequest(
        firm=firm, e_target=args.estar, weights=weights,
        tech=_tech(args.tech), orient=_orient(args.orient), big_m=big_m,
        locked=frozenset(locked), normalize=not args.no_normalize, metric=args.metric)


def cmd_cf(args) -> int:
    panel = _load_panel(args.panel)
    weights = _weights_from_args(args)
    req = _request_from_args(panel, args, weights)
    options = MiqpOptions(time_limit=args.time_limit)
    try:
        res = explain(panel, req, options=options)
    except TargetError as exc:
        raise UsageError(str(exc)) from exc
    except (BoundsError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    except SolveFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = _outdir(args)
    payload = result_payload(res)
    (out / f"cf_{res.dmu_id}.json").write_text(canonical_json(payload))
    spider = spider_payload(panel, req.firm, {args.weights or "custom": res})
    if req.orient is Orientation.INPUT:
        xhat = dea.farrell_projection(panel, req.firm, req.e_target, req.tech)
        spider["series"]["farrell"] = [float(v) for v in xhat / panel.inputs[req.firm]]
    render_spider(spider, str(out / f"spider_{res.dmu_id}.png"))
    side = payload["plan"]["inputs" if req.orient is Orientation.INPUT else "outputs"]
    print(f"firm {res.dmu_id}: score {res.base_score:.4f} -> {res.achieved:.4f}")
    print("new plan:", ", ".join(f"{v:.4f}" for v in side))
    print(f"cost: l0={res.cost.l0} l1={res.cost.l1:.4f} l2sq={res.cost.l2sq:.4f}")
    print(f"solver: {res.solver_status}, verified: {res.verification.verified}")
    return 0


def cmd_batch(args) -> int:
    panel = _load_panel(args.panel)
    tech, orient = _tech(args.tech), _orient(args.orient)
    out = _outdir(args)
    options = MiqpOptions(time_limit=args.time_limit)
    configs = args.config or ["l0+(l2)", "l0+l2", "l2"]
    failures = 0
    for name in configs:
        if name not in COST_PRESETS:
            raise UsageError(f"unknown weight preset {name!r}")
        weights = COST_PRESETS[name]
        report = batch_explain(panel, args.estar, weights, tech, orient,
                               options=options, workers=args.workers)
        failures += len(report.failures)
        slug = name.replace("+", "_").replace("(", "").replace(")", "")
        (out / f"batch_{slug}.json").write_text(canonical_json(batch_payload(report)))
        heat = heatmap_matrix(report)
        (out / f"heatmap_{slug}.json").write_text(canonical_json(heat))
        render_heatmap(heat, str(out / f"heatmap_{slug}.png"),
                       title=f"{name}, target {args.estar}")
        if report.analyzed:
            freq = change_frequency(report)
            mag = change_magnitude(report, panel)
            csv_f, csv_m = stats_to_csv(freq, mag)
            (out / f"change_frequency_{slug}.csv").write_text(csv_f)
            (out / f"change_magnitude_{slug}.csv").write_text(csv_m)
            (out / f"stats_{slug}.json").write_text(
                canonical_json(stats_payload(freq, mag)))
            print(f"{name}: analyzed {len(report.analyzed)}, skipped "
                  f"{len(report.skipped_ids)}, mean_l0 {freq.mean_l0:.3f}")
        else:
            print(f"{name}: nothing to analyze (all firms at or above target)")
    return 1 if failures else 0


def cmd_synth(args) -> int:
    panel = synth_panel(args.seed, args.firms, args.inputs, args.outputs,
                        spread=args.spread, jitter=args.jitter)
    out = _outdir(args)
    (out / "panel.csv").write_text(write_panel_csv(panel))
    (out / "summary.txt").write_text(summary_text(panel) + "\n")
    print(summary_text(panel))
    print(f"wrote {out / 'panel.csv'}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deabench",
                                description="DEA benchmarking with least-cost "
                                            "counterfactual targets")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, orientation=True):
        sp.add_argument("--panel", required=True, help="panel CSV path")
        sp.add_argument("--tech", choices=["crs", "vrs"], default="crs")
        if orientation:
            sp.add_argument("--orient", choices=["input", "output"], default="input")
        sp.add_argument("--out", default=".", help="output directory")

    sp = sub.add_parser("eff", help="score every firm")
    common(sp)
    sp.set_defaults(func=cmd_eff)

    sp = sub.add_parser("cf", help="one counterfactual target")
    common(sp)
    sp.add_argument("--firm", required=True, help="DMU id")
    sp.add_argument("--estar", type=float, required=True, help="desired efficiency")
    sp.add_argument("--nu0", type=float, default=0.0)
    sp.add_argument("--nu1", type=float, default=0.0)
    sp.add_argument("--nu2", type=float, default=1.0)
    sp.add_argument("--weights", help=f"preset: {sorted(COST_PRESETS)}")
    sp.add_argument("--lock", action="append", help="feature name to lock")
    sp.add_argument("--mzero", type=float, help="override the change cap")
    sp.add_argument("--no-normalize", action="store_true")
    sp.add_argument("--metric", choices=["raw", "normalized"], default="raw")
    sp.add_argument("--time-limit", type=float, default=60.0)
    sp.set_defaults(func=cmd_cf)

    sp = sub.add_parser("batch", help="counterfactuals for every inefficient firm")
    common(sp)
    sp.add_argument("--estar", type=float, required=True)
    sp.add_argument("--config", action="append",
                    help=f"weight preset (repeatable): {sorted(COST_PRESETS)}")
    sp.add_argument("--time-limit", type=float, default=20.0,
                    help="per-firm solver budget in seconds")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_batch)

    sp = sub.add_parser("synth", help="generate a synthetic panel")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--firms", type=int, default=40)
    sp.add_argument("--inputs", type=int, default=5)
    sp.add_argument("--outputs", type=int, default=3)
    sp.add_argument("--spread", type=float, default=0.6)
    sp.add_argument("--jitter", type=float, default=0.1)
    sp.add_argument("--out", default=".")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("serve", help="start the HTTP service")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=DEFAULT_PORT)
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
