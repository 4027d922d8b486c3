import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from linkvar.config import ConfigError, RunConfig, load_config, parse_config
from linkvar.errors import ValidationError
from linkvar.io import MAGIC, read_snapshot, to_json, write_json, write_snapshot

BASE = """\
[problem]
N = 3
K = 2
a = 1.0
lambda = 0.0

[potential]
kind = constant
V0 = -9.0

[nonlinearity]
f = power
p = 4
g = power
q = 3

[grid]
Nr = 24
Nz = 24
"""


def test_reference_config_loads(ref_cfg):
    assert ref_cfg.grid.Nr == 96 and ref_cfg.grid.Nz == 96
    assert ref_cfg.seed == 42 and ref_cfg.solver.seed == 42 and ref_cfg.geometry.seed == 42
    assert ref_cfg.problem.nonlinearity.p == 4 and ref_cfg.problem.nonlinearity.q == 3
    assert ref_cfg.problem.potential.V0 == -9.0


def test_half_lambda_config():
    cfg = load_config("configs/reference_half_lambda.ini")
    assert cfg.lambda_fraction == 0.5


def test_defaults_fill_missing_sections():
    cfg = parse_config(BASE)
    assert cfg.solver.tol_solve == 1e-8
    assert cfg.geometry.n_starts == 32
    assert cfg.toy.parsed_cases() == [(1, 1), (2, 2)]


def _line(text, needle):
    return text.splitlines().index(needle) + 1


@pytest.mark.parametrize("text,needle,fragment", [
    (BASE + "[bogus]\nx = 1\n", "[bogus]", "unknown section"),
    (BASE.replace("Nz = 24", "Nz = 24\nNq = 3"), "Nq = 3", "unknown key"),
    (BASE.replace("Nr = 24", "Nr = many"), "Nr = many", "Nr"),
    (BASE.replace("p = 4", "p = four"), "p = four", "p"),
])
def test_malformed_config_names_line(text, needle, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert f"line {_line(text, needle)}" in msg and fragment in msg


@pytest.mark.parametrize("edit", [
    ("Nr = 24", "Nr = 4"),
    ("f = power", "f = cubic"),
    ("K = 2", "K = 1"),
    ("lambda = 0.0", "lambda_fraction = 1.5"),
    ("kind = constant", "kind = periodic"),
])
def test_invalid_values_rejected(edit):
    with pytest.raises(ValidationError):
        parse_config(BASE.replace(*edit))


def test_not_ini_at_all():
    with pytest.raises(ConfigError):
        parse_config("this is = not [ini")


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")


def test_seed_override_propagates():
    cfg = parse_config(BASE).with_seed(7)
    assert (cfg.seed, cfg.solver.seed, cfg.geometry.seed) == (7, 7, 7)


def test_config_hash_ignores_threads():
    a = parse_config(BASE)
    b = parse_config(BASE + "\n[run]\nthreads = 4\n")
    c = parse_config(BASE + "\n[run]\nseed = 1\n")
    assert a.config_hash() == b.config_hash() != c.config_hash()
    assert isinstance(RunConfig().canonical(), dict)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(allow_nan=False, allow_infinity=True)))
def test_snapshot_round_trip(tmp_path_factory, u):
    p = tmp_path_factory.mktemp("snap") / "u.lnkv"
    write_snapshot(p, u)
    back = read_snapshot(p)
    assert back.shape == u.shape
    assert np.array_equal(back, u)
    assert p.read_bytes()[:5] == MAGIC


def test_snapshot_bad_magic(tmp_path):
    p = write_snapshot(tmp_path / "u.lnkv", np.ones((3, 2)))
    raw = bytearray(p.read_bytes())
    raw[:5] = b"XXXX1"
    p.write_bytes(bytes(raw))
    with pytest.raises(ValidationError, match="magic"):
        read_snapshot(p)


def test_snapshot_truncated(tmp_path):
    p = write_snapshot(tmp_path / "u.lnkv", np.ones((3, 2)))
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValidationError):
        read_snapshot(p)
    (tmp_path / "short").write_bytes(b"LN")
    with pytest.raises(ValidationError):
        read_snapshot(tmp_path / "short")


def test_snapshot_needs_2d(tmp_path):
    with pytest.raises(ValidationError):
        write_snapshot(tmp_path / "u.lnkv", np.ones(4))


def test_json_deterministic_and_clean(tmp_path):
    obj = {"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)], "c": math.inf, "d": np.arange(3)}
    s = to_json(obj)
    assert s == to_json(dict(reversed(list(obj.items()))))
    back = json.loads(s)
    assert back == {"a": [2, True], "b": 1.5, "c": "inf", "d": [0, 1, 2]}
    p = write_json(tmp_path / "x" / "r.json", obj)
    assert p.read_text() == s + "\n"
