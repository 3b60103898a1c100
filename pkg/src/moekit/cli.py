"""Command line front end.

Subcommands: quantize, gen-trace, stats, plan, simulate, sweep, report.
Every parameter can come from a JSON config file (--config) and explicit
flags win over the file. The first line of output restates all effective
parameters so a run can be reproduced from its own log.

Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file-format
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import figures, numkit, placement, quant, sim, trace as trace_mod
from .errors import FormatError


class _Parser(argparse.ArgumentParser):
    # usage problems exit 1, not argparse's default 2 (2 is for I/O here)
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


_DEFAULTS: dict[str, dict] = {
    "quantize": {
        "weights": None,
        "calib": None,
        "out_dir": None,
        "bits": 8,
        "symmetric": False,
        "granularity": quant.PER_TENSOR,
        "grid_steps": quant.DEFAULT_GRID_STEPS,
        "ordering": quant.ORDER_NONE,
    },
    "gen-trace": {
        "out": None,
        "layers": 32,
        "experts": 8,
        "top_k": 2,
        "prefill": 0,
        "decode": 0,
        "hot_path_prob": 0.0,
        "zipf_s": 0.0,
        "seed": 0,
    },
    "stats": {"trace": None, "out_dir": None, "top": 10},
    "plan": {
        "trace": None,
        "strategy": None,
        "out": None,
        "budget": None,
        "top_k_per_layer": None,
        "supplement_k": None,
    },
    "simulate": {
        "trace": None,
        "plan": None,
        "cost": None,
        "cache_capacity": None,
        "format": sim.FORMAT_TEXT,
        "out": None,
        "figures": False,
    },
    "sweep": {
        "out": None,
        "layers": 32,
        "experts": 8,
        "top_k": 2,
        "strategies": "frequency,path,two_stage",
        "budgets": "128,160",
        "lengths": "25,50,100",
        "decode": 0,
        "hot_path_prob": 0.3,
        "zipf_s": 1.2,
        "seed": 0,
        "jobs": 1,
        "figures": False,
    },
    "report": {
        "trace": None,
        "plan": None,
        "cost": None,
        "cache_capacity": None,
        "out_dir": None,
        "formats": "csv",
        "figures": True,
    },
}

_REQUIRED: dict[str, tuple[str, ...]] = {
    "quantize": ("weights", "calib", "out_dir"),
    "gen-trace": ("out",),
    "stats": ("trace",),
    "plan": ("trace", "strategy", "out"),
    "simulate": ("trace", "plan", "cost"),
    "sweep": ("out",),
    "report": ("trace", "plan", "out_dir"),
}


def _build_parser() -> _Parser:
    parser = _Parser(prog="moekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sup = argparse.SUPPRESS

    p = sub.add_parser("quantize", parents=[], help="quantize one linear layer")
    p.add_argument("--config", default=sup)
    p.add_argument("--weights", default=sup, help="weight matrix (MOEK file)")
    p.add_argument("--calib", default=sup, help="calibration activations (MOEK file)")
    p.add_argument("--out-dir", dest="out_dir", default=sup)
    p.add_argument("--bits", type=int, default=sup)
    p.add_argument("--symmetric", action="store_true", default=sup)
    p.add_argument(
        "--granularity",
        choices=(quant.PER_TENSOR, quant.PER_TOKEN),
        default=sup,
        help="activation quantization granularity",
    )
    p.add_argument("--grid-steps", dest="grid_steps", type=int, default=sup)
    p.add_argument("--ordering", choices=quant.ORDERINGS, default=sup)

    p = sub.add_parser("gen-trace", help="generate a synthetic routing trace")
    p.add_argument("--config", default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--layers", type=int, default=sup)
    p.add_argument("--experts", type=int, default=sup)
    p.add_argument("--top-k", dest="top_k", type=int, default=sup)
    p.add_argument("--prefill", type=int, default=sup)
    p.add_argument("--decode", type=int, default=sup)
    p.add_argument(
        "--hot-path-prob", dest="hot_path_prob", type=float, default=sup
    )
    p.add_argument("--zipf-s", dest="zipf_s", type=float, default=sup)
    p.add_argument("--seed", type=int, default=sup)

    p = sub.add_parser("stats", help="path and expert frequency tables")
    p.add_argument("--config", default=sup)
    p.add_argument("--trace", default=sup)
    p.add_argument("--out-dir", dest="out_dir", default=sup)
    p.add_argument("--top", type=int, default=sup, help="paths to print")

    p = sub.add_parser("plan", help="build a placement plan from a trace")
    p.add_argument("--config", default=sup)
    p.add_argument("--trace", default=sup)
    p.add_argument("--strategy", choices=placement.STRATEGIES, default=sup)
    p.add_argument("--out", default=sup)
    p.add_argument("--budget", type=int, default=sup)
    p.add_argument(
        "--top-k-per-layer", dest="top_k_per_layer", type=int, default=sup
    )
    p.add_argument("--supplement-k", dest="supplement_k", type=int, default=sup)

    p = sub.add_parser("simulate", help="replay a trace against a plan")
    p.add_argument("--config", default=sup)
    p.add_argument("--trace", default=sup)
    p.add_argument("--plan", default=sup)
    p.add_argument("--cost", default=sup, help="cost model JSON")
    p.add_argument(
        "--cache-capacity", dest="cache_capacity", type=int, default=sup
    )
    p.add_argument("--format", choices=sim.REPORT_FORMATS, default=sup)
    p.add_argument("--out", default=sup, help="write the report here instead of stdout")
    p.add_argument("--figures", action="store_true", default=sup)

    p = sub.add_parser("sweep", help="strategy x budget x length grid")
    p.add_argument("--config", default=sup)
    p.add_argument("--out", default=sup, help="combined CSV path")
    p.add_argument("--layers", type=int, default=sup)
    p.add_argument("--experts", type=int, default=sup)
    p.add_argument("--top-k", dest="top_k", type=int, default=sup)
    p.add_argument("--strategies", default=sup, help="comma separated")
    p.add_argument("--budgets", default=sup, help="comma separated")
    p.add_argument("--lengths", default=sup, help="comma separated token counts")
    p.add_argument("--decode", type=int, default=sup)
    p.add_argument(
        "--hot-path-prob", dest="hot_path_prob", type=float, default=sup
    )
    p.add_argument("--zipf-s", dest="zipf_s", type=float, default=sup)
    p.add_argument("--seed", type=int, default=sup)
    p.add_argument("--jobs", type=int, default=sup, help="parallel cells")
    p.add_argument("--figures", action="store_true", default=sup)

    p = sub.add_parser("report", help="compare plans on one trace, with figures")
    p.add_argument("--config", default=sup)
    p.add_argument("--trace", default=sup)
    p.add_argument(
        "--plan", action="append", default=sup, help="plan file, repeatable"
    )
    p.add_argument("--cost", default=sup, help="cost model JSON (enables latency)")
    p.add_argument(
        "--cache-capacity", dest="cache_capacity", type=int, default=sup
    )
    p.add_argument("--out-dir", dest="out_dir", default=sup)
    p.add_argument(
        "--formats", default=sup, help="comma separated: csv,text,plotdata"
    )
    fig = p.add_mutually_exclusive_group()
    fig.add_argument("--figures", dest="figures", action="store_true", default=sup)
    fig.add_argument("--no-figures", dest="figures", action="store_false", default=sup)

    return parser


def _merge_params(command: str, given: dict) -> dict:
    params = dict(_DEFAULTS[command])
    config_path = given.pop("config", None)
    if config_path is not None:
        with open(config_path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{config_path}: bad config JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise FormatError(f"{config_path}: config must be a JSON object")
        unknown = sorted(set(doc) - set(params))
        if unknown:
            raise ValueError(f"unknown config keys {unknown} for {command}")
        params.update(doc)
    params.update(given)
    missing = [k for k in _REQUIRED[command] if params.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ValueError(f"{command}: missing required parameters: {flags}")
    return params


def _echo(command: str, params: dict) -> None:
    def fmt(v) -> str:
        if isinstance(v, (list, tuple)):
            return ",".join(str(x) for x in v)
        return str(v)

    parts = " ".join(f"{k}={fmt(v)}" for k, v in sorted(params.items()))
    print(f"config: command={command} {parts}")


def _csv_ints(value, name: str) -> list[int]:
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    try:
        return [int(part) for part in str(value).split(",") if part != ""]
    except ValueError as exc:
        raise ValueError(f"bad {name} list {value!r}") from exc


def _csv_strs(value) -> list[str]:
    if isinstance(value, (list, tuple)):
        return [str(v) for v in value]
    return [part for part in str(value).split(",") if part != ""]


def _cmd_quantize(params: dict) -> int:
    w = numkit.read_matrix(params["weights"])
    x = numkit.read_matrix(params["calib"])
    cfg = quant.QuantConfig(
        bits=int(params["bits"]),
        symmetric=bool(params["symmetric"]),
        granularity=str(params["granularity"]),
    )
    result = quant.quantize_layer(
        w,
        x,
        cfg,
        grid_steps=int(params["grid_steps"]),
        ordering=str(params["ordering"]),
    )
    quant.save_layer_result(result, params["out_dir"])
    print(
        f"quantized: rows={result.quantized.rows} cols={result.quantized.cols} "
        f"bits={cfg.bits} exponent={result.smoothing.exponent!r} "
        f"output_mse={result.output_mse!r} "
        f"rtn_baseline_mse={result.rtn_baseline_mse!r}"
    )
    print(f"written: {Path(params['out_dir']) / 'result.json'}")
    return 0


def _cmd_gen_trace(params: dict) -> int:
    cfg = trace_mod.GenConfig(
        layers=int(params["layers"]),
        experts_per_layer=int(params["experts"]),
        top_k=int(params["top_k"]),
        n_prefill_tokens=int(params["prefill"]),
        n_decode_tokens=int(params["decode"]),
        hot_path_prob=float(params["hot_path_prob"]),
        zipf_s=float(params["zipf_s"]),
        seed=int(params["seed"]),
    )
    tr = trace_mod.generate_trace(cfg)
    trace_mod.write_trace(params["out"], tr)
    print(f"trace: events={len(tr.events)} written={params['out']}")
    return 0


def _cmd_stats(params: dict) -> int:
    tr = trace_mod.read_trace(params["trace"])
    stats = trace_mod.path_stats(tr)
    freq = trace_mod.expert_freq(tr)
    out_dir = params["out_dir"]
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "path_stats.csv", "w", encoding="utf-8") as fh:
            fh.write("path,count\n")
            for path, count in stats.entries:
                fh.write(f"{trace_mod.format_path(path)},{count}\n")
        with open(out / "expert_freq.csv", "w", encoding="utf-8") as fh:
            fh.write("layer,expert,count\n")
            for layer in range(freq.layers):
                for expert in range(freq.experts_per_layer):
                    fh.write(f"{layer},{expert},{freq.counts[layer, expert]}\n")
        print(f"stats: events={len(tr.events)} distinct_paths={len(stats.entries)} written={out}")
        return 0
    print(f"stats: events={len(tr.events)} distinct_paths={len(stats.entries)}")
    limit = int(params["top"])
    for path, count in stats.entries[:limit]:
        print(f"{count}\t{trace_mod.format_path(path)}")
    return 0


def _two_stage_split(
    budget, top_k_per_layer, supplement_k, layers: int, trace_top_k: int
) -> tuple[int, int]:
    tk = trace_top_k if top_k_per_layer is None else int(top_k_per_layer)
    if supplement_k is not None:
        return tk, int(supplement_k)
    if budget is None:
        raise ValueError("two_stage needs --supplement-k or --budget")
    per_layer = int(budget) // layers
    if per_layer < tk:
        raise ValueError(
            f"budget {budget} leaves {per_layer} residents per layer, "
            f"below top_k_per_layer {tk}"
        )
    return tk, per_layer - tk


def _build_plan(tr: trace_mod.Trace, params: dict) -> placement.PlacementPlan:
    strategy = str(params["strategy"])
    if strategy not in placement.STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == placement.STRATEGY_TWO_STAGE:
        stats = trace_mod.path_stats(tr)
        freq = trace_mod.expert_freq(tr)
        tk, sk = _two_stage_split(
            params.get("budget"),
            params.get("top_k_per_layer"),
            params.get("supplement_k"),
            tr.layers,
            tr.top_k,
        )
        return placement.plan_two_stage(stats, freq, tk, sk)
    if params.get("budget") is None:
        raise ValueError(f"strategy {strategy} needs --budget")
    budget = int(params["budget"])
    if strategy == placement.STRATEGY_FREQUENCY:
        return placement.plan_frequency(trace_mod.expert_freq(tr), budget)
    return placement.plan_path(trace_mod.path_stats(tr), budget)


def _cmd_plan(params: dict) -> int:
    tr = trace_mod.read_trace(params["trace"])
    plan = _build_plan(tr, params)
    placement.write_plan(params["out"], plan)
    report = placement.evaluate_plan(plan, tr)
    print(
        f"plan: strategy={plan.strategy} residents={plan.total_residents} "
        f"budget={plan.budget} mean_hit_rate={report.mean!r} "
        f"std={report.std!r} gap={report.gap!r} written={params['out']}"
    )
    return 0


def _figure_paths(out, fallback_stem: str) -> tuple[Path, Path]:
    if out is not None:
        base = Path(out)
        stem = base.parent / base.stem
    else:
        stem = Path(fallback_stem)
    return Path(f"{stem}_hit_rates.png"), Path(f"{stem}_latency.png")


def _cmd_simulate(params: dict) -> int:
    tr = trace_mod.read_trace(params["trace"])
    plan = placement.read_plan(params["plan"])
    cost, file_capacity = sim.read_cost_model(params["cost"])
    capacity = (
        file_capacity
        if params["cache_capacity"] is None
        else int(params["cache_capacity"])
    )
    report = sim.simulate(tr, plan, cost, capacity)
    rendered = sim.render_report(report, str(params["format"]), label=plan.strategy)
    if params["out"] is not None:
        with open(params["out"], "w", encoding="utf-8") as fh:
            fh.write(rendered)
        print(f"report written: {params['out']}")
    else:
        sys.stdout.write(rendered)
    if params["figures"]:
        hit_path, lat_path = _figure_paths(params["out"], "simulate")
        figures.save_hit_rate_figure(
            {plan.strategy: report.per_layer_hit_rate}, hit_path
        )
        figures.save_latency_figure({plan.strategy: report}, lat_path)
        print(f"figures written: {hit_path} {lat_path}")
    return 0


_SWEEP_HEADER = "strategy,budget,tokens,mean_hit_rate,std_hit_rate,max_min_gap"


def _sweep_rows(params: dict) -> list[dict]:
    strategies = _csv_strs(params["strategies"])
    for s in strategies:
        if s not in placement.STRATEGIES:
            raise ValueError(f"unknown strategy {s!r}")
    budgets = _csv_ints(params["budgets"], "budgets")
    lengths = _csv_ints(params["lengths"], "lengths")
    if not strategies or not budgets or not lengths:
        raise ValueError("strategies, budgets and lengths must be non-empty")
    layers = int(params["layers"])

    per_length: dict[int, tuple] = {}
    for length in lengths:
        cfg = trace_mod.GenConfig(
            layers=layers,
            experts_per_layer=int(params["experts"]),
            top_k=int(params["top_k"]),
            n_prefill_tokens=length,
            n_decode_tokens=int(params["decode"]),
            hot_path_prob=float(params["hot_path_prob"]),
            zipf_s=float(params["zipf_s"]),
            seed=int(params["seed"]),
        )
        tr = trace_mod.generate_trace(cfg)
        per_length[length] = (tr, trace_mod.path_stats(tr), trace_mod.expert_freq(tr))

    cells = [
        (strategy, budget, length)
        for strategy in strategies
        for budget in budgets
        for length in lengths
    ]

    def run_cell(cell) -> dict:
        strategy, budget, length = cell
        tr, stats, freq = per_length[length]
        if strategy == placement.STRATEGY_TWO_STAGE:
            tk, sk = _two_stage_split(budget, None, None, layers, tr.top_k)
            plan = placement.plan_two_stage(stats, freq, tk, sk)
        elif strategy == placement.STRATEGY_FREQUENCY:
            plan = placement.plan_frequency(freq, budget)
        else:
            plan = placement.plan_path(stats, budget)
        report = placement.evaluate_plan(plan, tr)
        return {
            "strategy": strategy,
            "budget": budget,
            "tokens": length,
            "mean_hit_rate": report.mean,
            "std_hit_rate": report.std,
            "max_min_gap": report.gap,
        }

    jobs = max(1, int(params["jobs"]))
    if jobs == 1:
        return [run_cell(cell) for cell in cells]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_cell, cells))


def _cmd_sweep(params: dict) -> int:
    rows = _sweep_rows(params)
    lines = [_SWEEP_HEADER]
    for row in rows:
        lines.append(
            f"{row['strategy']},{row['budget']},{row['tokens']},"
            f"{row['mean_hit_rate']!r},{row['std_hit_rate']!r},"
            f"{row['max_min_gap']!r}"
        )
    text = "\n".join(lines) + "\n"
    with open(params["out"], "w", encoding="utf-8") as fh:
        fh.write(text)
    print(f"sweep: cells={len(rows)} written={params['out']}")
    if params["figures"]:
        fig_path = Path(params["out"]).with_suffix(".png")
        figures.save_sweep_figure(rows, fig_path)
        print(f"figure written: {fig_path}")
    return 0


def _dedup_labels(labels: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for label in labels:
        seen[label] = seen.get(label, 0) + 1
        out.append(label if seen[label] == 1 else f"{label}-{seen[label]}")
    return out


def _static_csv(report: placement.PlanReport) -> str:
    lines = [sim._CSV_HEADER]
    for layer, rate in enumerate(report.per_layer):
        lines.append(f"{layer},{float(rate)!r},,,,")
    lines.append(f"summary,{report.mean!r},,{report.std!r},{report.gap!r},")
    return "\n".join(lines) + "\n"


def _cmd_report(params: dict) -> int:
    tr = trace_mod.read_trace(params["trace"])
    plan_paths = params["plan"] if isinstance(params["plan"], list) else [params["plan"]]
    plans = [placement.read_plan(p) for p in plan_paths]
    labels = _dedup_labels([p.strategy for p in plans])
    formats = _csv_strs(params["formats"])
    for fmt in formats:
        if fmt not in sim.REPORT_FORMATS:
            raise ValueError(f"unknown report format {fmt!r}")
    out = Path(params["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    cost = None
    capacity = 0
    if params["cost"] is not None:
        cost, capacity = sim.read_cost_model(params["cost"])
        if params["cache_capacity"] is not None:
            capacity = int(params["cache_capacity"])

    ext = {sim.FORMAT_TEXT: "txt", sim.FORMAT_CSV: "csv", sim.FORMAT_PLOTDATA: "plotdata.csv"}
    series: dict[str, np.ndarray] = {}
    sim_reports: dict[str, sim.SimReport] = {}
    written: list[Path] = []
    for label, plan in zip(labels, plans):
        if cost is not None:
            report = sim.simulate(tr, plan, cost, capacity)
            series[label] = report.per_layer_hit_rate
            sim_reports[label] = report
            for fmt in formats:
                path = out / f"report_{label}.{ext[fmt]}"
                with open(path, "w", encoding="utf-8") as fh:
                    fh.write(sim.render_report(report, fmt, label=label))
                written.append(path)
        else:
            report = placement.evaluate_plan(plan, tr)
            series[label] = report.per_layer
            path = out / f"report_{label}.csv"
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(_static_csv(report))
            written.append(path)

    combined = out / "plotdata.csv"
    with open(combined, "w", encoding="utf-8") as fh:
        fh.write("layer," + ",".join(labels) + "\n")
        for layer in range(tr.layers):
            row = ",".join(repr(float(series[label][layer])) for label in labels)
            fh.write(f"{layer},{row}\n")
    written.append(combined)

    if params["figures"]:
        hit_path = out / "hit_rates.png"
        figures.save_hit_rate_figure(series, hit_path)
        written.append(hit_path)
        if sim_reports:
            lat_path = out / "latency.png"
            figures.save_latency_figure(sim_reports, lat_path)
            written.append(lat_path)

    print(f"report: plans={len(plans)} out_dir={out}")
    for path in written:
        print(f"written: {path}")
    return 0


_HANDLERS = {
    "quantize": _cmd_quantize,
    "gen-trace": _cmd_gen_trace,
    "stats": _cmd_stats,
    "plan": _cmd_plan,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:  # -h exits 0, usage errors exit 1
        return int(exc.code or 0)
    if ns.command is None:
        parser.print_usage(sys.stderr)
        return 1
    given = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        params = _merge_params(ns.command, given)
        _echo(ns.command, params)
        return _HANDLERS[ns.command](params)
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
