"""JSON model files, sequence files and run manifests."""

from __future__ import annotations

import hashlib
import json
import platform
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .errors import ModelError
from .imp import ImpModel, Partition
from .markov import Alphabet, MarkovModel

RENORMALIZE_TOL = 1e-9
PRNG_NAME = "numpy PCG64 seeded through SeedSequence"


# ---------------------------------------------------------------------------
# Markov and IMP models
# ---------------------------------------------------------------------------


def markov_to_dict(model: MarkovModel) -> dict:
    labels = model.alphabet.labels
    return {
        "alphabet": list(labels),
        "order": model.order,
        "initial_state": [labels[x] for x in model.initial_state],
        "transitions": {
            ",".join(labels[x] for x in state): {labels[a]: float(p) for a, p in enumerate(row) if p > 0}
            for state, row in zip(model.states, model.probs)
        },
    }


def markov_from_dict(data: dict, where: str = "model") -> MarkovModel:
    try:
        alphabet = Alphabet(data["alphabet"])
        order = int(data["order"])
        initial = [alphabet.code(x) for x in data.get("initial_state", [])]
        raw = data["transitions"]
    except KeyError as exc:
        raise ModelError(f"{where}: missing field {exc}") from None
    if not isinstance(raw, dict):
        raise ModelError(f"{where}: transitions must be an object")
    rows = {}
    for ctx, dist in raw.items():
        state = tuple(alphabet.code(x) for x in ctx.split(",")) if ctx != "" else ()
        if len(state) != order:
            raise ModelError(f"{where}: context {ctx!r} does not have {order} symbols")
        row = np.zeros(len(alphabet))
        for label, p in dist.items():
            row[alphabet.code(label)] = float(p)
        if np.any(row < 0):
            raise ModelError(f"{where}: context {ctx!r} has a negative probability")
        total = row.sum()
        if abs(total - 1.0) > RENORMALIZE_TOL:
            raise ModelError(f"{where}: probabilities for context {ctx!r} sum to {total!r}, not 1")
        rows[state] = row / total
    if order > 0 and not initial:
        raise ModelError(f"{where}: initial_state is required for order {order}")
    return MarkovModel(alphabet, order, rows, tuple(initial), allow_periodic=bool(data.get("allow_periodic", False)))


def imp_to_dict(imp: ImpModel) -> dict:
    return {
        "alphabet": list(imp.alphabet.labels),
        "partition": imp.partition.labelled_blocks(),
        "components": [markov_to_dict(c) for c in imp.components],
        "switch": markov_to_dict(imp.switch),
    }


def imp_from_dict(data: dict) -> ImpModel:
    try:
        blocks = data["partition"]
        comps = data["components"]
        switch_data = data["switch"]
    except KeyError as exc:
        raise ModelError(f"IMP model: missing field {exc}") from None
    labels = data.get("alphabet") or sorted(x for b in blocks for x in b)
    alphabet = Alphabet(labels)
    partition = Partition.from_labels(alphabet, blocks)
    if partition.labelled_blocks() != [[str(x) for x in b] for b in blocks]:
        raise ModelError(
            "IMP model: partition blocks must be listed in canonical order "
            f"(symbols in alphabet order, blocks by first symbol): expected {partition.labelled_blocks()}"
        )
    if len(comps) != partition.m:
        raise ModelError(f"IMP model: {len(comps)} components for {partition.m} blocks")
    components = [markov_from_dict(c, f"component {i}") for i, c in enumerate(comps)]
    switch = markov_from_dict(switch_data, "switch")
    return ImpModel(partition, components, switch)


def load_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None


def load_model(path: str | Path) -> ImpModel | MarkovModel:
    """Read an IMP model file, or a plain Markov model file."""
    data = load_json(path)
    if "partition" in data:
        return imp_from_dict(data)
    return markov_from_dict(data, str(path))


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Sequences
# ---------------------------------------------------------------------------


def read_tokens(path: str | Path, chars: bool = False) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    if chars:
        return [c for c in text if not c.isspace()]
    return text.split()


def format_tokens(tokens: Iterable[str], chars: bool = False) -> str:
    tokens = list(tokens)
    if chars:
        return "".join(tokens) + ("\n" if tokens else "")
    return "".join(t + "\n" for t in tokens)


def write_tokens(path: str | Path, tokens: Iterable[str], chars: bool = False) -> None:
    Path(path).write_text(format_tokens(tokens, chars), encoding="utf-8")


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_manifest(subcommand: str, config: dict, seed: int | None, inputs: Iterable[str], argv: list[str]) -> dict:
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "prng": PRNG_NAME,
        "tool_version": __version__,
        "numpy_version": np.__version__,
        "python": platform.python_version(),
        "inputs": {str(p): file_digest(p) for p in inputs},
        "argv": argv,
    }
