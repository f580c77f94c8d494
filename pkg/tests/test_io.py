import json

import numpy as np
import pytest

from conftest import ring_switch, random_imp_model
from imptools.errors import ModelError
from imptools.imp import log_prob_product
from imptools.io import (
    file_digest,
    format_tokens,
    imp_from_dict,
    imp_to_dict,
    load_model,
    make_manifest,
    markov_from_dict,
    markov_to_dict,
    read_tokens,
)


def test_markov_round_trip():
    sw = ring_switch(0.3, 0.6)
    back = markov_from_dict(json.loads(json.dumps(markov_to_dict(sw))))
    assert back.states == sw.states
    assert np.allclose(back.probs, sw.probs)


def test_imp_round_trip(rng):
    imp = random_imp_model(rng, (2, 3), (1, 0), 1)
    back = imp_from_dict(json.loads(json.dumps(imp_to_dict(imp))))
    seq = rng.integers(0, 5, size=40)
    assert log_prob_product(back, seq) == pytest.approx(log_prob_product(imp, seq), abs=1e-12)


def test_renormalizes_tiny_error_and_rejects_large():
    d = {"alphabet": ["a", "b"], "order": 1, "initial_state": ["a"],
         "transitions": {"a": {"a": 0.5, "b": 0.5 + 1e-12}, "b": {"a": 1.0}}}
    m = markov_from_dict(d)
    assert m.probs.sum(axis=1) == pytest.approx([1.0, 1.0], abs=1e-15)
    d["transitions"]["b"] = {"a": 0.7}
    with pytest.raises(ModelError, match="'b'"):
        markov_from_dict(d)


def test_imp_block_order_enforced(rng):
    d = imp_to_dict(random_imp_model(rng, (2, 3), (1, 0), 0))
    d["partition"] = d["partition"][::-1]
    d["components"] = d["components"][::-1]
    with pytest.raises(ModelError, match="canonical"):
        imp_from_dict(d)


def test_tokens(tmp_path):
    p = tmp_path / "s.txt"
    p.write_text("ab c\n d")
    assert read_tokens(p, chars=True) == ["a", "b", "c", "d"]
    assert read_tokens(p) == ["ab", "c", "d"]
    assert format_tokens(["a", "b"], chars=True) == "ab\n"
    assert format_tokens([], chars=True) == ""


def test_manifest(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    m = make_manifest("analyze", {"k": 1}, 3, [str(p)], ["analyze", str(p)])
    assert m["inputs"][str(p)] == file_digest(p)
    assert "PCG64" in m["prng"]
    assert json.loads(json.dumps(m)) == m


def test_load_model_errors(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ModelError, match="line 1"):
        load_model(p)
    p.write_text(json.dumps({"alphabet": ["a"], "order": 0}))
    with pytest.raises(ModelError, match="transitions"):
        load_model(p)
