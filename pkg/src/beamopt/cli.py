"""beamopt command line.

Exit codes:
  0  success
  1  validate: dataset is incomplete or malformed
  2  usage error (bad flags or flag combination)
  3  IO or dataset error
  4  algorithm failure
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from .acquisition import AcquisitionParams
from .align import RboConfig, penalty_db, write_trace_jsonl
from .baselines import RompConfig
from .bench import (
    ALGORITHMS,
    AlgorithmSpec,
    ExperimentSpec,
    SynthSource,
    convergence_curves,
    csv_text,
    load_maps,
    refinement_ablation,
    run_algorithm,
    run_experiment,
    sweep_init_iters,
    write_report,
)
from .domain import BeamGrid, DatasetError, FormatSpec, angle_of, load_dataset, save_dataset, true_optimum
from .synth import CampaignRanges, generate_campaign

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO, EXIT_ALGO = 0, 1, 2, 3, 4

EXIT_CODES_HELP = """exit codes:
  0  success
  1  validate found an incomplete or malformed dataset
  2  usage error (bad flags or flag combination)
  3  IO or dataset error
  4  algorithm failure
"""

DEFAULT_SWEEP = "5x10,5x30,5x50,10x10,10x30,10x50,15x10,15x30,15x50,20x10,20x30,20x50,25x10,25x30,25x50"
DEFAULT_BUDGETS = "20,30,40,50,60,80,100,150,200"
RBO_FLAGS = ("n_init", "t_iters", "xi", "ei_stop", "restarts", "refit_every")
BUDGET_FLAGS = ("budget",)
ROMP_FLAGS = ("sparsity_k", "dictionary")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    g.add_argument("--workers", type=int, default=None, help="worker processes for bench runs (default 1)")
    g.add_argument("--out-dir", default=None, help="directory for machine-readable outputs (default beamopt-out)")
    g.add_argument("--format", choices=("json", "csv"), default=None, help="format of tabular side outputs (default json)")
    g.add_argument("--config", default=None, help="JSON file of option defaults; flags override it")


def _dataset(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("dataset")
    g.add_argument("--dataset", default=None, help="canonical dataset dir or CSV file, or raw data with --format-spec")
    g.add_argument("--format-spec", default=None, help="JSON format spec for a raw dataset")
    g.add_argument("--synth", type=int, default=None, metavar="N", help="use an N-location synthetic campaign instead")
    g.add_argument("--synth-seed", type=int, default=None, help="campaign seed for --synth (default 7)")
    g.add_argument("--locations", default=None, help="comma-separated subset of location ids")


def _algo_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("algorithm options")
    g.add_argument("--n-init", type=int, default=None, help="R-BO initial random probes (default 15)")
    g.add_argument("--t-iters", type=int, default=None, help="R-BO iterations (default 50)")
    g.add_argument("--xi", type=float, default=None, help="EI exploration offset (default 0.05)")
    g.add_argument("--ei-stop", type=float, default=None, help="stop BO when max EI drops below this (default 1e-8)")
    g.add_argument("--restarts", type=int, default=None, help="hyperparameter random restarts (default 3)")
    g.add_argument("--refit-every", type=int, default=None, help="re-optimize hyperparameters every k iterations (default 1)")
    g.add_argument("--no-refine", action="store_true", default=None, help="skip the final neighborhood rescan")
    g.add_argument("--refine-tx-deg", type=float, default=None, help="rescan half-width in TX degrees (default 10)")
    g.add_argument("--refine-rx-deg", type=float, default=None, help="rescan half-width in RX degrees (default 10)")
    g.add_argument("--budget", type=int, default=None, help="total probes for random and romp (default 80)")
    g.add_argument("--sparsity-k", type=int, default=None, help="ROMP sparsity (default 8)")
    g.add_argument("--dictionary", choices=("dft2d", "identity"), default=None, help="ROMP dictionary (default dft2d)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beamopt",
        description="Beam alignment with refined Bayesian optimization.",
        epilog=EXIT_CODES_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)

    def add(name, help_):
        p = sub.add_parser(name, help=help_, description=help_, epilog=EXIT_CODES_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
        _common(p)
        return p

    p = add("align", "align one location and print the selected beam pair")
    _dataset(p)
    p.add_argument("--location", default=None, help="location id (optional if the dataset has one location)")
    p.add_argument("--algo", choices=ALGORITHMS, default=None, help="algorithm (default rbo)")
    _algo_flags(p)

    p = add("bench", "run algorithms over every location and seed")
    _dataset(p)
    p.add_argument("--algos", default=None, help="comma-separated algorithms (default rbo,random,romp)")
    p.add_argument("--seeds", type=int, default=None, help="number of seeds, counted up from --seed (default 10)")
    p.add_argument("--keep-traces", action="store_true", default=None, help="write traces/*.jsonl")
    _algo_flags(p)

    p = add("sweep", "R-BO accuracy over a grid of (n_init, T)")
    _dataset(p)
    p.add_argument("--grid", default=None, help=f"cells as NxT, comma separated (default {DEFAULT_SWEEP})")
    p.add_argument("--seeds", type=int, default=None, help="number of seeds (default 10)")
    _algo_flags(p)

    p = add("curves", "mean penalty versus probe count")
    _dataset(p)
    p.add_argument("--algos", default=None, help="comma-separated algorithms (default rbo,random,romp)")
    p.add_argument("--budgets", default=None, help=f"probe counts, comma separated (default {DEFAULT_BUDGETS})")
    p.add_argument("--seeds", type=int, default=None, help="number of seeds (default 10)")
    p.add_argument("--ablation", action="store_true", default=None, help="R-BO with vs without refinement at matched budgets")
    _algo_flags(p)

    p = add("synth", "write a synthetic campaign as a canonical dataset")
    p.add_argument("--locations", type=int, default=None, help="number of locations (default 43)")
    p.add_argument("--tx-antennas", type=int, default=None, help="TX array size (default 16)")
    p.add_argument("--rx-antennas", type=int, default=None, help="RX array size (default 16)")
    p.add_argument("--max-paths", type=int, default=None, help="paths per location, at most (default 4)")
    p.add_argument("--dither-db", type=float, default=None, help="uniform measurement dither half-width (default 0.5)")
    p.add_argument("--phase-error-deg", type=float, default=None, help="element phase error std (default 25)")
    p.add_argument("--gain-error-db", type=float, default=None, help="element gain error std (default 1)")

    p = add("convert", "convert a raw dataset to the canonical layout")
    p.add_argument("--input", required=False, default=None, help="raw data file or directory")
    p.add_argument("--format-spec", default=None, help="JSON format spec describing the raw layout")

    p = add("validate", "check a dataset for missing, duplicate or bad cells")
    p.add_argument("--dataset", default=None, help="canonical dataset dir or CSV file")
    p.add_argument("--format-spec", default=None, help="JSON format spec for a raw dataset")
    return parser


def documented_flags(parser: argparse.ArgumentParser | None = None) -> dict[str, list[str]]:
    """Long option strings per subcommand, as the parser defines them."""
    parser = parser or build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    out = {}
    for name, p in sub.choices.items():
        out[name] = sorted(s for a in p._actions for s in a.option_strings if s.startswith("--"))
    return out


# ---------------------------------------------------------------------------
# option resolution: flags > config file > defaults
# ---------------------------------------------------------------------------


DEFAULTS = {
    "seed": 0,
    "workers": 1,
    "out_dir": "beamopt-out",
    "format": "json",
    "synth_seed": 7,
    "algo": "rbo",
    "algos": "rbo,random,romp",
    "seeds": 10,
    "keep_traces": False,
    "no_refine": False,
    "ablation": False,
    "grid": DEFAULT_SWEEP,
    "budgets": DEFAULT_BUDGETS,
    "locations_count": 43,
}


def resolve(args: argparse.Namespace) -> dict:
    explicit = {k: v for k, v in vars(args).items() if v is not None}
    config = {}
    if args.config:
        try:
            config = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(config, dict):
            raise UsageError("config file must hold a JSON object")
        known = set(vars(args)) - {"command", "config"}
        unknown = sorted(set(k.replace("-", "_") for k in config) - known)
        if unknown:
            raise UsageError(f"unknown config keys for {args.command}: {', '.join(unknown)}")
        config = {k.replace("-", "_"): v for k, v in config.items()}
    opts = {k: None for k in vars(args)}
    for k in opts:
        if k in DEFAULTS:
            opts[k] = DEFAULTS[k]
    if args.command == "synth":
        opts["locations"] = DEFAULTS["locations_count"]
    opts.update(config)
    opts.update(explicit)
    opts["command"] = args.command
    return opts


def _given(opts: dict, names) -> list[str]:
    return ["--" + n.replace("_", "-") for n in names if opts.get(n) is not None]


def _check_algo_flags(opts: dict, algos: list[str]) -> None:
    if not any(a == "rbo" for a in algos) and (bad := _given(opts, RBO_FLAGS)):
        raise UsageError(f"{', '.join(bad)} only apply to --algo rbo")
    if not any(a in ("random", "romp") for a in algos) and (bad := _given(opts, BUDGET_FLAGS)):
        raise UsageError(f"{', '.join(bad)} only apply to random or romp")
    if "romp" not in algos and (bad := _given(opts, ROMP_FLAGS)):
        raise UsageError(f"{', '.join(bad)} only apply to romp")
    if algos == ["exhaustive"] and (opts.get("no_refine") or _given(opts, ("refine_tx_deg", "refine_rx_deg"))):
        raise UsageError("refinement flags do not apply to exhaustive")


def _pick(opts, key, default):
    v = opts.get(key)
    return default if v is None else v


def rbo_config(opts: dict) -> RboConfig:
    d = RboConfig()
    acq = AcquisitionParams(_pick(opts, "xi", d.acquisition.xi), _pick(opts, "ei_stop", d.acquisition.ei_stop_threshold))
    return RboConfig(
        n_init=_pick(opts, "n_init", d.n_init),
        t_iters=_pick(opts, "t_iters", d.t_iters),
        acquisition=acq,
        refine_tx_deg=_pick(opts, "refine_tx_deg", d.refine_tx_deg),
        refine_rx_deg=_pick(opts, "refine_rx_deg", d.refine_rx_deg),
        refine_enabled=not opts.get("no_refine"),
        seed=opts["seed"],
        hyperopt_restarts=_pick(opts, "restarts", d.hyperopt_restarts),
        refit_every=_pick(opts, "refit_every", d.refit_every),
    )


def romp_config(opts: dict) -> RompConfig:
    d = RompConfig()
    return RompConfig(
        budget=_pick(opts, "budget", d.budget),
        sparsity_k=_pick(opts, "sparsity_k", d.sparsity_k),
        dictionary=_pick(opts, "dictionary", d.dictionary),
        refine_enabled=not opts.get("no_refine"),
        seed=opts["seed"],
        refine_tx_deg=_pick(opts, "refine_tx_deg", d.refine_tx_deg),
        refine_rx_deg=_pick(opts, "refine_rx_deg", d.refine_rx_deg),
    )


def algorithm_specs(opts: dict, algos: list[str]) -> tuple[AlgorithmSpec, ...]:
    try:
        rbo, romp = rbo_config(opts), romp_config(opts)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from None
    return tuple(AlgorithmSpec(a, rbo=rbo, romp=romp, budget=_pick(opts, "budget", 80)) for a in algos)


def _split(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


def parse_algos(text: str) -> list[str]:
    algos = _split(text)
    bad = [a for a in algos if a not in ALGORITHMS]
    if bad or not algos:
        raise UsageError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    if len(set(algos)) != len(algos):
        raise UsageError("duplicate algorithms")
    return algos


def parse_int_list(text: str, what: str) -> list[int]:
    try:
        return [int(t) for t in _split(text)]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def parse_sweep(text: str) -> list[tuple[int, int]]:
    cells = []
    for tok in _split(text):
        a, sep, b = tok.lower().partition("x")
        try:
            cells.append((int(a), int(b)))
        except ValueError:
            raise UsageError(f"sweep cell {tok!r} is not NxT") from None
    if not cells:
        raise UsageError("empty sweep grid")
    return cells


def dataset_source(opts: dict):
    if opts.get("synth") is not None and opts.get("dataset") is not None:
        raise UsageError("give either --dataset or --synth, not both")
    if opts.get("synth") is not None:
        if opts["synth"] < 1:
            raise UsageError("--synth must be >= 1")
        return SynthSource(opts["synth"], opts["synth_seed"])
    if opts.get("dataset") is None:
        raise UsageError("--dataset or --synth is required")
    if not Path(opts["dataset"]).exists():
        raise OSError(f"dataset path {opts['dataset']} does not exist")
    return Path(opts["dataset"])


def format_spec(opts: dict) -> FormatSpec | None:
    if opts.get("format_spec") is None:
        return None
    try:
        return FormatSpec.from_json(opts["format_spec"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"bad format spec {opts['format_spec']}: {exc}") from None


def experiment(opts: dict, algos: list[str], **kw) -> ExperimentSpec:
    locs = tuple(_split(opts["locations"])) if opts.get("locations") else None
    seeds = opts.get("seeds") or 1
    if seeds < 1:
        raise UsageError("--seeds must be >= 1")
    if opts["workers"] < 1:
        raise UsageError("--workers must be >= 1")
    return ExperimentSpec(
        dataset_source(opts),
        algorithm_specs(opts, algos),
        seeds=tuple(opts["seed"] + i for i in range(seeds)),
        format_spec=format_spec(opts),
        locations=locs,
        workers=opts["workers"],
        **kw,
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _out(opts) -> Path:
    out = Path(opts["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_run_config(opts: dict, extra: dict | None = None) -> Path:
    """Echo of the resolved options; the only file carrying a timestamp."""
    doc = {
        "beamopt_version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "options": {k: v for k, v in sorted(opts.items())},
        **(extra or {}),
    }
    p = _out(opts) / "run-config.json"
    p.write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")
    return p


def cmd_align(opts: dict) -> int:
    algo = opts["algo"]
    _check_algo_flags(opts, [algo])
    spec = experiment(dict(opts, seeds=1), [algo])
    maps = load_maps(spec)
    if opts.get("location") is None:
        if len(maps) != 1:
            raise UsageError(f"--location is required; dataset has {len(maps)} locations")
        pmap = maps[0]
    else:
        by_id = {m.location_id: m for m in maps}
        if opts["location"] not in by_id:
            raise KeyError(f"unknown location {opts['location']!r}")
        pmap = by_id[opts["location"]]
    alg = spec.algorithms[0]
    write_run_config(opts, {"algorithm": alg.to_dict()})
    try:
        trace = run_algorithm(alg, pmap, opts["seed"])
    except (DatasetError, OSError):
        raise
    except Exception as exc:
        raise AlgorithmFailure(str(exc)) from exc
    opt, best = true_optimum(pmap)
    pen = penalty_db(trace, pmap)
    tx, rx = angle_of(pmap.grid, trace.selected)
    summary = {
        "location": pmap.location_id,
        "algorithm": algo,
        "seed": opts["seed"],
        "selected": list(trace.selected),
        "selected_angles_deg": [tx, rx],
        "selected_power_db": trace.selected_power_db,
        "probes_used": trace.probes_used,
        "penalty_db": pen,
        "exact_match": trace.selected == opt,
        "optimum": list(opt),
        "optimum_power_db": best,
        "stopped_early": trace.stopped_early,
        "flags": list(trace.flags),
    }
    out = _out(opts)
    write_trace_jsonl(trace, out / "trace.jsonl", location=pmap.location_id, seed=opts["seed"])
    if opts["format"] == "csv":
        keys = sorted(summary)
        (out / "summary.csv").write_text(csv_text(keys, [[json.dumps(summary[k]) if isinstance(summary[k], list) else summary[k] for k in keys]]))
    else:
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"location {pmap.location_id}  algorithm {algo}  seed {opts['seed']}")
    print(f"selected tx={trace.selected[0]} ({tx:g} deg)  rx={trace.selected[1]} ({rx:g} deg)  power {trace.selected_power_db:.3f} dB")
    print(f"probes {trace.probes_used}  penalty {pen:.3f} dB  exact {'yes' if summary['exact_match'] else 'no'}")
    if trace.flags:
        print(f"flags {','.join(trace.flags)}")
    return EXIT_OK


class AlgorithmFailure(RuntimeError):
    pass


def _print_aggregates(aggs: dict) -> None:
    print(f"{'algorithm':<12}{'accuracy%':>10}{'penalty dB':>12}{'probes':>9}{'reduction%':>12}{'failed':>8}")
    for name, a in aggs.items():
        print(
            f"{name:<12}{a['accuracy_pct']:>10.2f}{a['mean_penalty_db']:>12.3f}"
            f"{a['mean_probes']:>9.1f}{a['overhead_reduction_pct']:>12.2f}{a['n_failed']:>8d}"
        )


def cmd_bench(opts: dict) -> int:
    algos = parse_algos(opts["algos"])
    _check_algo_flags(opts, algos)
    spec = experiment(opts, algos, keep_traces=bool(opts.get("keep_traces")))
    maps = load_maps(spec)
    write_run_config(opts, {"algorithms": [a.to_dict() for a in spec.algorithms]})
    report = run_experiment(spec, maps)
    write_report(report, opts["out_dir"], opts["format"])
    _print_aggregates(report.aggregates)
    for r in report.failed():
        print(f"failed: {r.algorithm} {r.location} seed {r.seed}: {r.error}", file=sys.stderr)
    return EXIT_ALGO if report.failed() else EXIT_OK


def cmd_sweep(opts: dict) -> int:
    _check_algo_flags(opts, ["rbo"])
    if opts.get("t_iters") is not None or opts.get("n_init") is not None:
        raise UsageError("--n-init/--t-iters are set per cell by --grid")
    cells = parse_sweep(opts["grid"])
    spec = experiment(opts, ["rbo"], init_iter_grid=tuple(cells))
    maps = load_maps(spec)
    write_run_config(opts)
    try:
        hm = sweep_init_iters(spec, maps)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = _out(opts)
    (out / "heatmap.csv").write_text(hm.to_csv())
    if opts["format"] == "json":
        (out / "heatmap.json").write_text(json.dumps({"cells": hm.cells, "best": list(hm.best), "metadata": hm.metadata}, indent=2, sort_keys=True) + "\n")
    print(f"{'n_init':>7}{'T':>5}{'accuracy%':>11}{'penalty dB':>12}")
    for c in hm.cells:
        mark = "  *" if (c["n_init"], c["t_iters"]) == hm.best else ""
        print(f"{c['n_init']:>7}{c['t_iters']:>5}{c['accuracy_pct']:>11.2f}{c['mean_penalty_db']:>12.3f}{mark}")
    print(f"best (n_init, T) = {hm.best}")
    return EXIT_OK


def cmd_curves(opts: dict) -> int:
    budgets = parse_int_list(opts["budgets"], "--budgets")
    if not budgets or min(budgets) < 1:
        raise UsageError("--budgets must be positive integers")
    if opts.get("ablation"):
        if opts.get("algos") not in (None, DEFAULTS["algos"]) and parse_algos(opts["algos"]) != ["rbo"]:
            raise UsageError("--ablation runs R-BO only")
        algos = ["rbo"]
        if opts.get("no_refine"):
            raise UsageError("--ablation already toggles refinement; drop --no-refine")
    else:
        algos = parse_algos(opts["algos"])
    _check_algo_flags(opts, algos)
    if algos != ["rbo"] and opts.get("budget") is not None:
        raise UsageError("--budget is set per point by --budgets")
    if opts.get("t_iters") is not None:
        raise UsageError("--t-iters is set per point by --budgets")
    spec = experiment(opts, algos, budget_grid=tuple(budgets))
    maps = load_maps(spec)
    write_run_config(opts)
    curves = refinement_ablation(spec, maps) if opts.get("ablation") else convergence_curves(spec, maps)
    out = _out(opts)
    (out / "curves.csv").write_text(curves.to_csv())
    if opts["format"] == "json":
        (out / "curves.json").write_text(json.dumps({"points": curves.points, "metadata": curves.metadata}, indent=2, sort_keys=True) + "\n")
    names = curves.names()
    print(f"{'budget':>7}" + "".join(f"{n:>20}" for n in names))
    for b in sorted(set(budgets)):
        print(f"{b:>7}" + "".join(f"{curves.series(n)[b]:>20.3f}" for n in names))
    return EXIT_OK


def cmd_synth(opts: dict) -> int:
    if opts["locations"] < 1:
        raise UsageError("--locations must be >= 1")
    d = CampaignRanges()
    ranges = replace(
        d,
        tx_antennas=_pick(opts, "tx_antennas", d.tx_antennas),
        rx_antennas=_pick(opts, "rx_antennas", d.rx_antennas),
        n_paths=(1, _pick(opts, "max_paths", d.n_paths[1])),
        dither_db=_pick(opts, "dither_db", d.dither_db),
        phase_error_deg=_pick(opts, "phase_error_deg", d.phase_error_deg),
        gain_error_db=_pick(opts, "gain_error_db", d.gain_error_db),
    )
    if ranges.n_paths[1] < 1 or ranges.tx_antennas < 1 or ranges.rx_antennas < 1:
        raise UsageError("--max-paths and antenna counts must be >= 1")
    if ranges.dither_db < 0:
        raise UsageError("--dither-db must be >= 0")
    write_run_config(opts, {"ranges": asdict(ranges)})
    maps = generate_campaign(opts["locations"], BeamGrid.default(), ranges, opts["seed"])
    save_dataset(maps, opts["out_dir"])
    print(f"wrote {len(maps)} locations to {opts['out_dir']}")
    return EXIT_OK


def cmd_convert(opts: dict) -> int:
    if opts.get("input") is None or opts.get("format_spec") is None:
        raise UsageError("convert needs --input and --format-spec")
    if not Path(opts["input"]).exists():
        raise OSError(f"input path {opts['input']} does not exist")
    maps = load_dataset(opts["input"], format_spec(opts))
    write_run_config(opts)
    save_dataset(maps, opts["out_dir"])
    print(f"converted {len(maps)} locations to {opts['out_dir']}")
    return EXIT_OK


def cmd_validate(opts: dict) -> int:
    if opts.get("dataset") is None:
        raise UsageError("--dataset is required")
    if not Path(opts["dataset"]).exists():
        raise OSError(f"dataset path {opts['dataset']} does not exist")
    write_run_config(opts)
    try:
        maps = load_dataset(opts["dataset"], format_spec(opts))
    except DatasetError as exc:
        print(f"invalid: {exc}")
        return EXIT_INVALID
    grid = maps[0].grid if maps else None
    print(f"ok: {len(maps)} location(s), {grid.size if grid else 0} cells each")
    return EXIT_OK


COMMANDS = {
    "align": cmd_align,
    "bench": cmd_bench,
    "sweep": cmd_sweep,
    "curves": cmd_curves,
    "synth": cmd_synth,
    "convert": cmd_convert,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        opts = resolve(args)
        return COMMANDS[args.command](opts)
    except UsageError as exc:
        print(f"beamopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DatasetError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"beamopt {args.command}: {msg}", file=sys.stderr)
        return EXIT_IO
    except (AlgorithmFailure, ValueError, ArithmeticError) as exc:
        print(f"beamopt {args.command}: algorithm failure: {exc}", file=sys.stderr)
        return EXIT_ALGO


if __name__ == "__main__":
    sys.exit(main())
