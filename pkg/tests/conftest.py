import dataclasses
import time
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from linkvar.config import load_config
from linkvar.functional import FunctionalContext
from linkvar.grid import ProblemSpec, assemble_operator, build_grid
from linkvar.pipeline import build_context, constants_stage, solve_stage
from linkvar.spectral import eigendecompose

ROOT = Path(__file__).resolve().parents[1]
REFERENCE = ROOT / "configs" / "reference.ini"

settings.register_profile("linkvar", deadline=None, max_examples=40, print_blob=True)
settings.load_profile("linkvar")

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    res = config.stash.get(_ACCEPTANCE, {})
    if not res:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(res):
        ok, detail = res[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def acceptance(request):
    """Record (and print) one PASS/FAIL line per acceptance criterion."""
    store = request.config.stash[_ACCEPTANCE]

    def record(n, ok, detail=""):
        store[n] = (bool(ok), detail)
        print(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def make_ctx(Nr=24, Nz=24, Rmax=6.0, Zhalf=4.0, lam=0.0, spec=None):
    spec = (spec or ProblemSpec()).with_lambda(lam)
    g = build_grid(spec, Nr, Nz, Rmax, Zhalf)
    op = assemble_operator(spec, g)
    return FunctionalContext(g, eigendecompose(op, g), spec, op)


@pytest.fixture(scope="session")
def small_ctx():
    return make_ctx()


@pytest.fixture(scope="session")
def ref_cfg():
    return load_config(REFERENCE)


@pytest.fixture(scope="session")
def ref_ctx(ref_cfg):
    return build_context(ref_cfg)


@pytest.fixture(scope="session")
def ref_constants(ref_cfg, ref_ctx):
    """(report dict, GeometryConstants, seconds) for the reference config."""
    t0 = time.perf_counter()
    rep, consts = constants_stage(ref_cfg, ref_ctx)
    return rep, consts, time.perf_counter() - t0


def _timed_solve(cfg, ctx, consts):
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        out = solve_stage(cfg, ctx, consts)
    return out, time.perf_counter() - t0


@pytest.fixture(scope="session")
def solved_zero(ref_cfg, ref_ctx, ref_constants):
    """Reference solve at lambda = 0 with its wall time (geometry + solver)."""
    return _timed_solve(ref_cfg, ref_ctx, ref_constants[1])


@pytest.fixture(scope="session")
def solved_half(ref_cfg, ref_ctx, ref_constants):
    """Reference solve at lambda = lambda_max / 2."""
    cfg = dataclasses.replace(ref_cfg, lambda_fraction=0.5)
    return _timed_solve(cfg, ref_ctx, ref_constants[1])


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)
