"""Command-line entry point: ``imptools {generate,deinterleave,analyze,benchmark,calibrate,replay}``.

Exit codes: 0 success, 1 ``--assert`` failure, 2 invalid input, 3 budget exceeded.
``IMPTOOLS_SEED`` overrides the default seed and ``IMPTOOLS_THREADS`` the
worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .deinterleave import SearchParams, deinterleave_exhaustive, deinterleave_heuristic
from .errors import ImpToolsError, ModelError, RejectionBudgetExceeded, SearchSpaceTooLarge
from .harness import ExperimentConfig, parse_base, best_tolerances, calibrate_baseline, run_experiment, trial_rng
from .imp import ImpModel, Partition, count_fsm_params, count_imp_params, interleave_sample, project, switch_sequence
from .io import dump_json, file_digest, imp_to_dict, load_json, load_model, make_manifest, read_tokens, write_tokens
from .markov import Alphabet, MarkovModel, sample
from .structure import canonicalize, domination_report, enumerate_compatible_partitions

log = logging.getLogger("imptools")

EXIT_OK, EXIT_ASSERT, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


class InputError(Exception):
    pass


def _default_seed() -> int:
    return int(os.environ.get("IMPTOOLS_SEED", "0"))


def _default_workers() -> int:
    return int(os.environ.get("IMPTOOLS_THREADS", "1"))


def _write_manifest(out: str | Path, subcommand: str, config: dict, seed, inputs, argv) -> None:
    dump_json(make_manifest(subcommand, config, seed, inputs, argv), f"{out}.manifest.json")


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------


def cmd_generate(args, argv) -> int:
    model = load_model(args.model)
    rng = trial_rng(args.seed)
    if isinstance(model, ImpModel):
        seq, labels = interleave_sample(model, args.n, rng, return_labels=True)
    else:
        seq, labels = sample(model, args.n, rng), None
    alphabet = model.alphabet
    tokens = alphabet.decode(seq)
    if args.chars and any(len(t) != 1 for t in alphabet.labels):
        raise InputError("--chars needs single-character symbol labels")
    write_tokens(args.out, tokens, args.chars)
    if args.truth_dir and isinstance(model, ImpModel):
        _write_streams(Path(args.truth_dir), seq, model.partition, args.chars)
    _write_manifest(args.out, "generate", {"model": args.model, "n": args.n, "chars": args.chars}, args.seed, [args.model], argv)
    return EXIT_OK


def _write_streams(directory: Path, seq: np.ndarray, partition: Partition, chars: bool) -> list[str]:
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    labels = partition.switch_alphabet().labels
    for i, block in enumerate(partition.blocks):
        name = f"stream_{labels[i]}.txt"
        write_tokens(directory / name, partition.alphabet.decode(project(seq, block)), chars)
        names.append(name)
    sw = switch_sequence(seq, partition)
    (directory / "switch.txt").write_text(" ".join(labels[x] for x in sw) + ("\n" if len(sw) else ""), encoding="utf-8")
    return names


# ---------------------------------------------------------------------------
# deinterleave
# ---------------------------------------------------------------------------


def cmd_deinterleave(args, argv) -> int:
    tokens = read_tokens(args.input, args.chars)
    if not tokens:
        result = {
            "partition": [[]],
            "orders": [0, 0],
            "cost": {"entropy_bits": 0.0, "kappa": 0, "penalty_bits": 0.0, "total_bits": 0.0},
        }
        _emit_result(args, result)
        return EXIT_OK
    alphabet = Alphabet.from_sequence(tokens)
    seq = alphabet.encode(tokens)
    if args.mode == "exhaustive":
        part, orders, bd = deinterleave_exhaustive(
            seq, args.beta, args.max_blocks, args.k_cap, alphabet, penalty_base=args.penalty_base
        )
    else:
        params = SearchParams(args.restarts, args.patience, args.t, args.r, args.seed, args.k_cap)
        part, orders, bd = deinterleave_heuristic(seq, args.beta, params, alphabet, penalty_base=args.penalty_base)
    result = {
        "partition": part.labelled_blocks(),
        "orders": list(orders.as_tuple()),
        "cost": {
            "entropy_bits": bd.entropy_bits,
            "kappa": bd.kappa,
            "penalty_bits": bd.penalty_bits,
            "total_bits": bd.total_bits,
        },
    }
    if args.streams_dir:
        result["streams"] = _write_streams(Path(args.streams_dir), seq, part, args.chars)
    _emit_result(args, result)
    if args.out:
        cfg = {k: v for k, v in vars(args).items() if k not in ("func",)}
        _write_manifest(args.out, "deinterleave", cfg, args.seed, [args.input], argv)
    return EXIT_OK


def _emit_result(args, result: dict) -> None:
    text = json.dumps(result, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def analyze_model(model: ImpModel | MarkovModel, max_results: int | None = 1000) -> dict:
    """Structure report of a model file's content."""
    if isinstance(model, MarkovModel):
        # A bare Markov model is read as a switch over its own labels.
        switch = model
        return {"domination": domination_report(switch).to_dict()}
    report = domination_report(model.switch)
    canon = canonicalize(model)
    out = {
        "domination": report.to_dict(),
        "totally_dominant": report.totally_dominant,
        "layers": report.layers,
        "canonical_partition": canon.partition.labelled_blocks(),
        "compatible_partitions": None,
        "domination_free": None,
        "kappa": {
            "imp": count_imp_params(model.partition, model.orders),
            "fsm": count_fsm_params(model.partition, model.orders),
            "canonical_imp": count_imp_params(canon.partition, canon.orders),
        },
    }
    if report.any_domination:
        out["domination_free"] = "no (domination in the given representation)"
    else:
        out["domination_free"] = "domination-free (checked representations)"
        out["compatible_partitions"] = [p.labelled_blocks() for p in enumerate_compatible_partitions(canon, max_results)]
    return out


def cmd_analyze(args, argv) -> int:
    model = load_model(args.model)
    report = analyze_model(model, args.max_results)
    text = json.dumps(report, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
        _write_manifest(args.out, "analyze", {"model": args.model}, None, [args.model], argv)
    else:
        print(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# benchmark / calibrate
# ---------------------------------------------------------------------------


BUNDLED = Path(__file__).with_name("configs")


def resolve_config(path: str) -> Path:
    """A file path, or the name of a bundled config such as ``memoryless_switch``."""
    p = Path(path)
    if p.exists():
        return p
    bundled = BUNDLED / (p.name if p.suffix == ".json" else f"{p.name}.json")
    if bundled.exists():
        return bundled
    raise InputError(f"config {path!r} not found (bundled: {', '.join(sorted(q.stem for q in BUNDLED.glob('*.json')))})")


def load_benchmark_config(path: str) -> tuple[ExperimentConfig, list[dict]]:
    path = str(resolve_config(path))
    data = load_json(path)
    expectations = data.pop("expect", [])
    data.pop("description", None)
    try:
        return ExperimentConfig.from_dict(data), expectations
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def check_expectations(table, expectations: list[dict]) -> list[tuple[dict, float, bool]]:
    """Evaluate ``{"n", "method", "kind", "target"+"tol" | "min" | "max"}`` entries."""
    results = []
    for e in expectations:
        value = table.fraction(int(e["n"]), e.get("method", "ml_heuristic"), e.get("kind", "exact"))
        ok = True
        if "target" in e:
            ok &= abs(value - e["target"]) <= e.get("tol", 0.0) + 1e-12
        if "min" in e:
            ok &= value >= e["min"] - 1e-12
        if "max" in e:
            ok &= value <= e["max"] + 1e-12
        results.append((e, value, bool(ok)))
    return results


def format_table(table) -> str:
    lines = [f"{'n':>8}  {'method':<14} {'exact':>7} {'canon':>7} {'compat':>7}"]
    for r in table.rows:
        lines.append(
            f"{r['n']:>8}  {r['method']:<14} {r['success_exact']:7.3f} "
            f"{r['success_canonical']:7.3f} {r['success_compatible']:7.3f}"
        )
    return "\n".join(lines)


def write_csv(table, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "method", "success_exact", "success_canonical", "success_compatible"])
        for r in table.rows:
            w.writerow([r["n"], r["method"], r["success_exact"], r["success_canonical"], r["success_compatible"]])


def cmd_benchmark(args, argv) -> int:
    config, expectations = load_benchmark_config(args.config)
    if args.seed is not None:
        config.seed = args.seed
    if args.num_sequences is not None:
        config.num_sequences = args.num_sequences

    def progress(recs):
        log.info("trial %d done", recs[0].trial if recs else -1)

    table = run_experiment(config, workers=args.workers, progress=progress)
    print(format_table(table))
    if args.out:
        write_csv(table, args.out)
        figure = args.figure or str(Path(args.out).with_suffix(".png"))
        from .plotting import plot_success

        plot_success(table, figure, title=Path(args.config).stem)
        _write_manifest(args.out, "benchmark", config.to_dict(), config.seed, [str(resolve_config(args.config))], argv)
    status = EXIT_OK
    if args.assert_:
        for e, value, ok in check_expectations(table, expectations):
            print(f"{'PASS' if ok else 'FAIL'} n={e['n']} {e.get('method', 'ml_heuristic')} "
                  f"{e.get('kind', 'exact')}={value:.3f} expect={ {k: v for k, v in e.items() if k in ('target', 'tol', 'min', 'max')} }")
            if not ok:
                status = EXIT_ASSERT
    return status


def cmd_calibrate(args, argv) -> int:
    config, _ = load_benchmark_config(args.config)
    scales = [float(s) for s in args.scales.split(",")]
    grid = calibrate_baseline(config, scales)
    best = best_tolerances(grid)
    for n, row in grid.items():
        cells = " ".join(f"{s:g}:{v:.2f}" for s, v in row.items())
        print(f"n={n:>8} best={best[n]:g}  {cells}")
    if args.out:
        dump_json({"grid": {str(n): {str(s): v for s, v in row.items()} for n, row in grid.items()},
                   "best": {str(n): s for n, s in best.items()}}, args.out)
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = load_json(args.manifest)
    for path, digest in manifest.get("inputs", {}).items():
        if not Path(path).exists() or file_digest(path) != digest:
            raise InputError(f"input {path} is missing or changed since the manifest was written")
    return main(manifest["argv"])


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="imptools", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a sequence from a model file")
    g.add_argument("--model", required=True, help="IMP or Markov model JSON")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=_default_seed())
    g.add_argument("--out", required=True)
    g.add_argument("--chars", action="store_true", help="write symbols contiguously (single-character labels)")
    g.add_argument("--truth-dir", help="also write the hidden component streams and switch sequence here")
    g.set_defaults(func=cmd_generate)

    d = sub.add_parser("deinterleave", help="estimate the partition and orders of a sequence")
    d.add_argument("input", help="sequence file")
    d.add_argument("--chars", action="store_true", help="every non-space character is a symbol")
    d.add_argument("--beta", type=float, default=0.5)
    d.add_argument("--penalty-base", type=parse_base, default=2.0,
                   help="log base of the penalty term: 2 (default, all bits) or 'e'")
    d.add_argument("--mode", choices=("exhaustive", "heuristic"), default="heuristic")
    d.add_argument("--max-blocks", type=int, default=None)
    d.add_argument("--k-cap", type=int, default=None)
    d.add_argument("--seed", type=int, default=_default_seed())
    d.add_argument("--restarts", type=int, default=5)
    d.add_argument("--patience", type=int, default=15)
    d.add_argument("--t", type=int, default=1)
    d.add_argument("--r", type=int, default=2)
    d.add_argument("--out", help="result JSON path (stdout if omitted)")
    d.add_argument("--streams-dir", help="write one file per recovered stream plus switch.txt")
    d.set_defaults(func=cmd_deinterleave)

    a = sub.add_parser("analyze", help="domination, canonical and compatible partitions of a model")
    a.add_argument("model")
    a.add_argument("--max-results", type=int, default=1000)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("benchmark", help="run a synthetic deinterleaving experiment")
    b.add_argument("--config", required=True)
    b.add_argument("--out", help="CSV path; a PNG figure and a manifest are written next to it")
    b.add_argument("--figure", help="figure path (default: CSV path with .png)")
    b.add_argument("--assert", dest="assert_", action="store_true", help="exit 1 when an expectation fails")
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--num-sequences", type=int, default=None)
    b.add_argument("--workers", type=int, default=_default_workers())
    b.set_defaults(func=cmd_benchmark)

    c = sub.add_parser("calibrate", help="sweep baseline tolerance scales using the true partitions")
    c.add_argument("--config", required=True)
    c.add_argument("--scales", default="0.05,0.1,0.15,0.2,0.3,0.4,0.5,0.75,1")
    c.add_argument("--out")
    c.set_defaults(func=cmd_calibrate)

    r = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    r.add_argument("manifest")
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args, argv)
    except (SearchSpaceTooLarge, RejectionBudgetExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ModelError, ImpToolsError, InputError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
