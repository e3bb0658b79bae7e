"""Command-line front end.

Every subcommand writes its data files plus a manifest recording the
normalised argument list; ``nonuni rerun MANIFEST`` replays it.  Exit
codes: 0 success, 2 bad parameters, 3 a checked invariant failed, 4 an
output path is not writable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import __version__
from .branching import BranchingConfig, gw_extinction_oracle, martingale_diagnostics, run_trials
from .generators import FAMILIES, GeneratorSpec
from .graph_core import GraphPatch, InvariantViolation
from .mass_transport import BallNotInterior, check_eligible, get_rule, mtp_unimodular_check, mtp_weighted_check
from .parallel import default_workers
from .partitions import log_mu_weight, one_partition
from .percolation import SWEEP_COLUMNS, PercConfig, cluster_stats, percolate, sweep, wilson_interval
from .spanning_tree import (GROWTH_COLUMNS, SURVIVAL_COLUMNS, annealed_survival, build_omega,
                            build_upsilon, growth_stats, percolate_omega, verify_spanning_tree)
from .structure_forest import forest_pipeline

EXIT_OK, EXIT_PARAM, EXIT_INVARIANT, EXIT_OUTPUT = 0, 2, 3, 4
OUTPUT_FLAGS = ("out", "json", "csv", "emit")
SEED_ENV = "NONUNI_SEED"


class ParamError(ValueError):
    pass


# --------------------------------------------------------------------------
# formatting

def fmt(v: Any) -> str:
    """Exact values as fraction strings, floats with 12 significant digits."""
    if isinstance(v, bool) or isinstance(v, np.bool_):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer, Fraction)):
        return str(v)
    if isinstance(v, (float, np.floating)):
        return "nan" if math.isnan(v) else format(float(v), ".12g")
    return str(v)


def csv_text(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(x) for x in r])
    return buf.getvalue()


def json_text(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=fmt) + "\n"


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` inclusive of ``stop``, computed in exact decimals."""
    try:
        a, b, s = (Fraction(x) for x in text.split(":"))
    except (ValueError, ZeroDivisionError):
        raise ParamError(f"grid {text!r} is not start:stop:step") from None
    if s <= 0 or b < a:
        raise ParamError(f"grid {text!r} is empty")
    n = int((b - a) / s)
    return [float(a + i * s) for i in range(n + 1)]


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_params(text: str | None, pairs: Sequence[str] | None) -> dict:
    """Generator parameters from JSON or ``k=2,up=3``, plus repeated ``--param key=value``."""
    text = (text or "").strip()
    items = list(pairs or ())
    params = {}
    if text.startswith("{"):
        params = json.loads(text)
    elif text:
        items = text.split(",") + items
    for item in items:
        key, _, val = item.partition("=")
        if not key or not val:
            raise ParamError(f"expected key=value, got {item!r}")
        params[key.strip()] = _value(val.strip())
    return params


# --------------------------------------------------------------------------
# output bookkeeping

class Outputs:
    def __init__(self):
        self.paths: list[str] = []
        self.pending: list[tuple[str, str]] = []

    def claim(self, path: str | None) -> str | None:
        if path is None:
            return None
        parent = Path(path).resolve().parent
        if not parent.is_dir() or not os.access(parent, os.W_OK):
            raise OSError(f"cannot write to {path}")
        self.paths.append(path)
        return path

    def add(self, path: str | None, text: str) -> None:
        if path is not None:
            self.pending.append((path, text))

    def flush(self) -> None:
        for path, text in self.pending:
            with open(path, "w", newline="") as fh:
                fh.write(text)


def load_patch(path: str | None) -> GraphPatch:
    if path is None:
        raise ParamError("--patch is required")
    with open(path) as fh:
        return GraphPatch.from_json(fh.read())


def need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise ParamError(f"--{n.replace('_', '-')} is required")


# --------------------------------------------------------------------------
# subcommands

def cmd_generate(args, out: Outputs) -> int:
    need(args, "family")
    spec = GeneratorSpec(args.family, parse_params(args.params, args.param))
    patch = spec.build()
    path = out.claim(args.out)
    out.add(path, patch.to_json() + "\n")
    print(f"V={patch.n_vertices} E={patch.n_edges} interior={sum(patch.interior)} "
          f"level_ratio={patch.level_ratio}")
    return EXIT_OK


def cmd_percolate(args, out: Outputs) -> int:
    need(args, "p")
    patch = load_patch(args.patch)
    cfg = PercConfig(args.p, args.mode, args.seed, args.trial)
    res = percolate(patch, cfg)
    stats = cluster_stats(patch, res)
    out.add(out.claim(args.json), json_text({
        "p": args.p, "mode": args.mode, "seed": args.seed, "trial_index": args.trial,
        "labels": res.labels.tolist(),
        "open_edges": np.flatnonzero(res.open_edges).tolist(),
        "open_sites": None if res.open_sites is None else np.flatnonzero(res.open_sites).tolist(),
    }))
    rows = [(s.label, s.size, s.min_level, s.max_level, s.touches_boundary,
             ";".join(f"{k}:{v}" for k, v in s.per_level_counts.items())) for s in stats]
    out.add(out.claim(args.csv), csv_text(
        ("label", "size", "min_level", "max_level", "touches_boundary", "per_level_counts"), rows))
    biggest = max((s.size for s in stats), default=0)
    print(f"clusters={len(stats)} largest={biggest}")
    return EXIT_OK


def cmd_sweep(args, out: Outputs) -> int:
    need(args, "p_grid", "depth")
    spec = GeneratorSpec(args.family, parse_params(args.params, args.param) or {"k_plus_1": 3})
    path = out.claim(args.csv)
    rows = sweep(spec, parse_grid(args.p_grid), args.depth, args.trials, args.seed,
                 stats_trials=args.stats_trials, workers=args.workers)
    text = csv_text(SWEEP_COLUMNS, [tuple(getattr(r, c) for c in SWEEP_COLUMNS) for r in rows])
    out.add(path, text)
    if path is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_mtp_check(args, out: Outputs) -> int:
    need(args, "rule")
    patch = load_patch(args.patch)
    rule = get_rule(args.rule)
    check = mtp_weighted_check if args.weighted else mtp_unimodular_check
    recv = "weighted_received" if args.weighted else "received"
    if not args.all:
        v = patch.root if args.vertex is None else args.vertex
        try:
            r = check(patch, rule, v)
        except BallNotInterior as e:
            raise ParamError(str(e)) from None
        print(f"sent={fmt(r[0])} {recv}={fmt(r[1])} equal={fmt(r[2])}")
        out.add(out.claim(args.csv), csv_text(("vertex", "level", "sent", recv, "equal"),
                                              [(v, patch.level[v], *r)]))
        return EXIT_INVARIANT if args.weighted and not r.equal else EXIT_OK
    rows = []
    for v in range(patch.n_vertices):
        if check_eligible(patch, rule, v):
            r = check(patch, rule, v)
            rows.append((v, patch.level[v], *r))
    n_eq = sum(1 for r in rows if r[-1])
    print(f"checked={len(rows)} equal={n_eq}")
    out.add(out.claim(args.csv), csv_text(("vertex", "level", "sent", recv, "equal"), rows))
    return EXIT_INVARIANT if args.weighted and n_eq < len(rows) else EXIT_OK


def cmd_partition(args, out: Outputs) -> int:
    need(args, "u")
    patch = load_patch(args.patch)
    part = one_partition(patch, Fraction(args.u))
    rows = [(lv, log_mu_weight(patch, lv), part.class_of(lv)) for lv in patch.levels_present()]
    text = csv_text(("level", "log_mu_weight", "class"), rows)
    path = out.claim(args.emit)
    out.add(path, text)
    if path is None:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_forest_pipeline(args, out: Outputs) -> int:
    need(args, "p", "class_index", "threshold")
    patch = load_patch(args.patch)
    res = percolate(patch, PercConfig(args.p, "bond", args.seed, args.trial))
    path = out.claim(args.json)
    result = forest_pipeline(patch, res, Fraction(args.u), args.class_index, args.threshold,
                             args.density, args.seed)
    d = result.to_dict()
    d.update(p=args.p, seed=args.seed, trial_index=args.trial, u=args.u, density=args.density)
    out.add(path, json_text(d))
    print(f"W={len(result.gamma.W)} gamma_edges={len(result.gamma.edges)} "
          f"forest_edges={len(result.forest_edges)} leaders={len(result.phi.leaders)} "
          f"phi_edges={len(result.phi.edges)}")
    return EXIT_OK


def cmd_branching(args, out: Outputs) -> int:
    need(args, "k", "p")
    cfg = BranchingConfig.from_alpha(args.alpha, k=args.k, p=args.p, max_generations=args.max_gen,
                                     trials=args.trials, seed=args.seed, cap=args.cap)
    res = run_trials(cfg, args.workers)
    s = int(res.survived.sum())
    lo, hi = wilson_interval(s, cfg.trials)
    line = f"survival={fmt(s / cfg.trials)} ci=[{fmt(lo)},{fmt(hi)}] truncated={int(res.truncated.sum())}"
    if cfg.interaction == "independent":
        line += f" oracle={fmt(1 - gw_extinction_oracle(cfg.k, cfg.p))}"
    print(line)
    cols = ("m", "mean_size", "alive_fraction", "mean_Y", "se_Y", "second_moment_Y",
            "se_second_moment", "bound_alpha", "bound_alpha_self")
    if cfg.p * cfg.k > 1:
        rows = [(r.m, r.mean_size, r.alive_fraction, r.mean_Y, r.se_Y, r.second_moment_Y,
                 r.se_second_moment, r.bound_alpha, r.bound_alpha_self)
                for r in martingale_diagnostics(cfg, res)]
    else:
        nan = math.nan
        rows = [(m, float(res.sizes[:, m].mean()), float((res.sizes[:, m] > 0).mean()),
                 nan, nan, nan, nan, nan, nan) for m in range(res.sizes.shape[1])]
    out.add(out.claim(args.csv), csv_text(cols, rows))
    return EXIT_OK


def cmd_upsilon(args, out: Outputs) -> int:
    need(args, "q")
    ups = build_upsilon(args.q, args.budget, args.seed)
    rows = growth_stats(ups)
    out.add(out.claim(args.csv), csv_text(GROWTH_COLUMNS, [tuple(getattr(r, c) for c in GROWTH_COLUMNS)
                                                          for r in rows]))
    last = rows[-1]
    print(f"blocks={last.n} depth={last.depth} lag_ratio={fmt(float(last.lag_ratio))}")
    return EXIT_OK


def cmd_omega(args, out: Outputs) -> int:
    need(args, "levels", "q", "p")
    depths = parse_grid(args.depth_grid) if args.depth_grid else range(args.levels)
    depths = [int(d) for d in depths]
    csv_path, json_path = out.claim(args.csv), out.claim(args.json)
    status = EXIT_OK
    materialize = args.verify or json_path is not None
    omega = build_omega(args.levels, args.q, args.seed, width=args.width, materialize=materialize)
    if args.verify:
        rep = verify_spanning_tree(omega)
        print(f"spanning_tree={fmt(rep.ok)} V={rep.n_vertices} E={rep.n_edges}")
        if not rep.ok:
            for msg in rep.problems[:10]:
                print(msg, file=sys.stderr)
            status = EXIT_INVARIANT
    if args.annealed:
        curve = annealed_survival(args.levels, args.q, args.p, args.trials, args.seed, depths)
    else:
        curve = percolate_omega(omega, args.p, args.trials, args.seed, depths)
    out.add(csv_path, csv_text(SURVIVAL_COLUMNS, [(c.depth, c.trials, c.survivals, c.rate, c.ci_low,
                                                   c.ci_high) for c in curve]))
    out.add(json_path, json_text(omega.to_dict()))
    print(f"survival_at_{curve[-1].depth}={fmt(curve[-1].rate)}")
    return status


COMMANDS = {
    "generate": cmd_generate,
    "percolate": cmd_percolate,
    "sweep": cmd_sweep,
    "mtp-check": cmd_mtp_check,
    "partition": cmd_partition,
    "forest-pipeline": cmd_forest_pipeline,
    "branching": cmd_branching,
    "upsilon": cmd_upsilon,
    "omega": cmd_omega,
}


# --------------------------------------------------------------------------
# parser

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help=f"master seed ({SEED_ENV} overrides)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--manifest", default=None, help="manifest path (default: next to the first output)")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="nonuni", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="JSON file whose keys mirror the flags")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["generate"] = sub.add_parser("generate", help="build a graph patch")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--params", default=None, help="JSON object or k=2,up=3,down=6")
    p.add_argument("--param", action="append", default=None, help="key=value, repeatable")
    p.add_argument("--out")

    p = subs["percolate"] = sub.add_parser("percolate", help="one percolation configuration")
    p.add_argument("--patch")
    p.add_argument("--p", type=float)
    p.add_argument("--mode", choices=("bond", "site"), default="bond")
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--json")
    p.add_argument("--csv")

    p = subs["sweep"] = sub.add_parser("sweep", help="root-cluster survival against p")
    p.add_argument("--family", default="regular_tree", choices=("regular_tree", "grandmother", "diestel_leader"))
    p.add_argument("--params", default=None)
    p.add_argument("--param", action="append", default=None)
    p.add_argument("--p-grid", dest="p_grid")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--depth", type=int)
    p.add_argument("--stats-trials", dest="stats_trials", type=int, default=0)
    p.add_argument("--csv")

    p = subs["mtp-check"] = sub.add_parser("mtp-check", help="mass transport identity at a vertex")
    p.add_argument("--patch")
    p.add_argument("--rule")
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--vertex", type=int, default=None)
    p.add_argument("--all", action="store_true", help="check every vertex with an interior ball")
    p.add_argument("--csv")

    p = subs["partition"] = sub.add_parser("partition", help="1-partition classes of the levels")
    p.add_argument("--patch")
    p.add_argument("--u")
    p.add_argument("--emit")

    p = subs["forest-pipeline"] = sub.add_parser("forest-pipeline", help="encounter-point forest")
    p.add_argument("--patch")
    p.add_argument("--p", type=float)
    p.add_argument("--class", dest="class_index", type=int)
    p.add_argument("--threshold", type=int)
    p.add_argument("--u", default="0.5")
    p.add_argument("--density", type=float, default=0.3)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--json")

    p = subs["branching"] = sub.add_parser("branching", help="branching process with interactions")
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--alpha", type=int, default=0, help="0: independent; 2a: sliding window a")
    p.add_argument("--trials", type=int, default=10000)
    p.add_argument("--max-gen", dest="max_gen", type=int, default=40)
    p.add_argument("--cap", type=int, default=10 ** 4, help="stop a trial once a generation exceeds this")
    p.add_argument("--csv")

    p = subs["upsilon"] = sub.add_parser("upsilon", help="growth of the random tree Upsilon")
    p.add_argument("--q", type=float)
    p.add_argument("--budget", type=int, default=100000)
    p.add_argument("--csv")

    p = subs["omega"] = sub.add_parser("omega", help="spanning tree omega and its percolation")
    p.add_argument("--levels", type=int)
    p.add_argument("--q", type=float)
    p.add_argument("--p", type=float)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--depth-grid", dest="depth_grid", default=None)
    p.add_argument("--width", type=int, default=4)
    p.add_argument("--annealed", action="store_true", help="fresh gap sequence per trial")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--csv")
    p.add_argument("--json")

    for p in subs.values():
        _common(p)

    p = subs["rerun"] = sub.add_parser("rerun", help="replay a manifest")
    p.add_argument("manifest")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-dir", dest="out_dir", default=None, help="write outputs here instead")
    return parser, subs


SKIP = {"help", "config", "manifest", "workers", "version"}


def normalized_argv(command: str, args, sub: argparse.ArgumentParser) -> list[str]:
    argv = [command]
    for act in sub._actions:
        if act.dest in SKIP or not act.option_strings:
            continue
        val = getattr(args, act.dest)
        flag = act.option_strings[-1]
        if isinstance(act, argparse._StoreTrueAction):
            if val:
                argv.append(flag)
        elif isinstance(act, argparse._AppendAction):
            for item in val or ():
                argv += [flag, str(item)]
        elif val is not None:
            argv += [flag, str(val)]
    return argv


def _parse(argv: Sequence[str]):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config and args.command != "rerun":
        with open(args.config) as fh:
            conf = json.load(fh)
        subs[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in conf.items()})
        args = parser.parse_args(argv)
    return args, subs


def _rerun(args) -> int:
    with open(args.manifest) as fh:
        man = json.load(fh)
    argv = list(man["argv"])
    if args.out_dir:
        out_dir = Path(args.out_dir)
        for i, tok in enumerate(argv[:-1]):
            if tok.lstrip("-") in OUTPUT_FLAGS:
                argv[i + 1] = str(out_dir / Path(argv[i + 1]).name)
    if args.workers is not None:
        argv += ["--workers", str(args.workers)]
    return run(argv)


def run(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args, subs = _parse(argv)
    except SystemExit as e:
        return int(e.code or 0)
    except (OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAM
    if args.command == "rerun":
        try:
            return _rerun(args)
        except (OSError, KeyError, json.JSONDecodeError) as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_PARAM
    if os.environ.get(SEED_ENV):
        args.seed = int(os.environ[SEED_ENV])
    if args.workers is None:
        args.workers = default_workers()
    out = Outputs()
    start = time.perf_counter()
    try:
        status = COMMANDS[args.command](args, out)
        out.flush()
    except InvariantViolation as e:
        print(f"invariant violated: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OUTPUT
    except (ValueError, KeyError, TypeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARAM
    if out.paths:
        manifest = args.manifest or out.paths[0] + ".manifest.json"
        record = {
            "subcommand": args.command,
            "argv": normalized_argv(args.command, args, subs[args.command]),
            "params": {k: v for k, v in vars(args).items() if k not in ("config",)},
            "seed": args.seed,
            "version": __version__,
            "outputs": out.paths,
            "duration_s": round(time.perf_counter() - start, 3),
        }
        try:
            with open(manifest, "w") as fh:
                fh.write(json.dumps(record, indent=2, sort_keys=True, default=str) + "\n")
        except OSError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_OUTPUT
    return status


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
