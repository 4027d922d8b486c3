"""INI run configuration.

Grammar: ``[section]`` headers followed by ``key = value`` lines; ``#`` or ``;``
start comments. Sections and keys (all optional, defaults in brackets):

  [problem]       N [3], K [2], a [1.0], lambda [0.0] or lambda_fraction (of lambda_max)
  [potential]     kind [constant] | periodic, V0 [-9.0], csv (periodic table, header r,z,V)
  [nonlinearity]  f [power] | log-arctan, p [4], g [power] | exp-damped | arctan-damped | zero,
                  q [3], rho [1.0]
  [grid]          Nr [96], Nz [96], Rmax [6.0], Zhalf [4.0]
  [solver]        tol_solve, tol_envelope, max_outer, max_refine, inner_tol, inner_maxit,
                  inner_starts, armijo, direction, max_R_doublings
  [geometry]      n_starts, descent_maxit, descent_tol, start_modes, resample, delta_samples,
                  ray_samples, kappa_samples, bisection_steps, r_min, max_doublings, margin
  [maxwell]       omega [1.0], spacing [0.04], box_frac [0.4], n_phi [16], t_samples [33],
                  export_stride [4]
  [toy]           cases [1+1, 2+2], n_directions [64], samples [10000], grid_density [64], R [4.0]
  [run]           seed [42], threads [1]
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import ValidationError
from .geometry import GeometrySettings
from .grid import Potential, ProblemSpec, load_potential_csv
from .nonlinearity import NonlinearitySpec
from .solver import SolverConfig


class ConfigError(ValidationError):
    pass


@dataclass
class GridConfig:
    Nr: int = 96
    Nz: int = 96
    Rmax: float = 6.0
    Zhalf: float = 4.0


@dataclass
class MaxwellConfig:
    omega: float = 1.0
    spacing: float = 0.04
    box_frac: float = 0.4
    n_phi: int = 16
    t_samples: int = 33
    export_stride: int = 4


@dataclass
class ToyConfig:
    cases: str = "1+1, 2+2"
    n_directions: int = 64
    samples: int = 10_000
    grid_density: int = 64
    R: float = 4.0

    def parsed_cases(self) -> list[tuple[int, int]]:
        out = []
        for item in self.cases.split(","):
            m = re.fullmatch(r"\s*(\d+)\s*\+\s*(\d+)\s*", item)
            if not m:
                raise ConfigError(f"[toy] cases: cannot parse {item!r} (expected n_plus+n_minus)")
            out.append((int(m.group(1)), int(m.group(2))))
        return out


@dataclass
class RunConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    grid: GridConfig = field(default_factory=GridConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    geometry: GeometrySettings = field(default_factory=GeometrySettings)
    maxwell: MaxwellConfig = field(default_factory=MaxwellConfig)
    toy: ToyConfig = field(default_factory=ToyConfig)
    lambda_fraction: Optional[float] = None
    seed: int = 42
    threads: int = 1
    source: Optional[str] = None
    raw: dict = field(default_factory=dict)

    def with_seed(self, seed: int) -> "RunConfig":
        new = dataclasses.replace(self, seed=int(seed))
        new.solver = dataclasses.replace(self.solver, seed=int(seed))
        new.geometry = dataclasses.replace(self.geometry, seed=int(seed))
        return new

    def canonical(self) -> dict:
        """Everything that influences results (output location and thread count excluded)."""
        return {
            "problem": self.problem.describe(),
            "lambda_fraction": self.lambda_fraction,
            "grid": dataclasses.asdict(self.grid),
            "solver": dataclasses.asdict(self.solver),
            "geometry": dataclasses.asdict(self.geometry),
            "maxwell": dataclasses.asdict(self.maxwell),
            "toy": dataclasses.asdict(self.toy),
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_SECTIONS = {"problem", "potential", "nonlinearity", "grid", "solver", "geometry", "maxwell", "toy", "run"}
_PROBLEM_KEYS = {"n", "k", "a", "lambda", "lambda_fraction"}
_POTENTIAL_KEYS = {"kind", "v0", "csv"}
_NL_KEYS = {"f": "family_f", "p": "p", "g": "family_g", "q": "q", "rho": "rho"}
_RUN_KEYS = {"seed", "threads"}


def _line_of(text: str, section: str, key: Optional[str]) -> int:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", s)
        if m:
            cur = m.group(1).strip().lower()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None:
            k = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
            if k == key.lower():
                return i
    return 0


def _convert(text, section, key, raw, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("1", "0", "true", "false", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("1", "true", "yes", "on")
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        return raw.strip()
    except ValueError:
        raise ConfigError(f"line {_line_of(text, section, key)}: [{section}] {key} = {raw!r} "
                          f"is not a valid {typ.__name__}") from None


def _fill(text, cp, section, cls, exclude=()):
    base = cls()
    if not cp.has_section(section):
        return base
    fields = {f.name.lower(): f for f in dataclasses.fields(cls) if f.name not in exclude}
    kwargs = {}
    for key, raw in cp.items(section):
        if key not in fields:
            raise ConfigError(f"line {_line_of(text, section, key)}: unknown key [{section}] {key}")
        f = fields[key]
        kwargs[f.name] = _convert(text, section, f.name, raw, type(getattr(base, f.name)))
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}]: {exc}") from None


def parse_config(text: str, base_dir: Optional[Path] = None, source: Optional[str] = None) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for sec in cp.sections():
        if sec.lower() not in _SECTIONS:
            raise ConfigError(f"line {_line_of(text, sec.lower(), None)}: unknown section [{sec}]")

    def get(section, key, typ, default):
        if cp.has_option(section, key):
            return _convert(text, section, key, cp.get(section, key), typ)
        return default

    def check_keys(section, allowed):
        if cp.has_section(section):
            for key, _ in cp.items(section):
                if key not in allowed:
                    raise ConfigError(f"line {_line_of(text, section, key)}: unknown key [{section}] {key}")

    check_keys("problem", _PROBLEM_KEYS)
    check_keys("potential", _POTENTIAL_KEYS)
    check_keys("nonlinearity", set(_NL_KEYS))
    check_keys("run", _RUN_KEYS)

    kind = get("potential", "kind", str, "constant")
    V0 = get("potential", "v0", float, -9.0)
    try:
        if kind == "constant":
            pot = Potential.constant(V0)
        elif kind == "periodic":
            path = get("potential", "csv", str, None)
            if not path:
                raise ConfigError(f"line {_line_of(text, 'potential', 'kind')}: periodic potential needs csv")
            p = Path(path)
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            pot = load_potential_csv(p, V0)
        else:
            raise ConfigError(f"line {_line_of(text, 'potential', 'kind')}: unsupported potential kind {kind!r}")
        nl_kwargs = {}
        for key, attr in _NL_KEYS.items():
            if cp.has_option("nonlinearity", key):
                typ = str if attr.startswith("family") else float
                nl_kwargs[attr] = _convert(text, "nonlinearity", key, cp.get("nonlinearity", key), typ)
        nls = NonlinearitySpec(**nl_kwargs)
        lam = get("problem", "lambda", float, 0.0)
        frac = get("problem", "lambda_fraction", float, None)
        if frac is not None and cp.has_option("problem", "lambda"):
            raise ConfigError(f"line {_line_of(text, 'problem', 'lambda_fraction')}: "
                              "give either lambda or lambda_fraction, not both")
        if frac is not None and not 0 <= frac < 1:
            raise ConfigError(f"line {_line_of(text, 'problem', 'lambda_fraction')}: lambda_fraction must lie in [0, 1)")
        spec = ProblemSpec(get("problem", "n", int, 3), get("problem", "k", int, 2), get("problem", "a", float, 1.0),
                           pot, lam, nls)
    except ConfigError:
        raise
    except ValidationError as exc:
        raise ConfigError(f"invalid problem definition: {exc}") from None

    cfg = RunConfig(
        problem=spec,
        grid=_fill(text, cp, "grid", GridConfig),
        solver=_fill(text, cp, "solver", SolverConfig, exclude=("seed",)),
        geometry=_fill(text, cp, "geometry", GeometrySettings, exclude=("seed",)),
        maxwell=_fill(text, cp, "maxwell", MaxwellConfig),
        toy=_fill(text, cp, "toy", ToyConfig),
        lambda_fraction=frac,
        threads=get("run", "threads", int, 1),
        source=source,
        raw={s: dict(cp.items(s)) for s in cp.sections()},
    )
    cfg = cfg.with_seed(get("run", "seed", int, 42))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    g = cfg.grid
    if g.Nr < 8 or g.Nz < 8:
        raise ConfigError("[grid] Nr and Nz must be at least 8")
    if not (g.Rmax > 0 and g.Zhalf > 0):
        raise ConfigError("[grid] Rmax and Zhalf must be positive")
    if cfg.threads < 1:
        raise ConfigError("[run] threads must be at least 1")
    if cfg.solver.direction not in ("cg", "gradient"):
        raise ConfigError("[solver] direction must be cg or gradient")
    if cfg.maxwell.omega <= 0 or cfg.maxwell.spacing <= 0:
        raise ConfigError("[maxwell] omega and spacing must be positive")
    if cfg.geometry.n_starts < 1 or cfg.geometry.delta_samples < 1:
        raise ConfigError("[geometry] sample counts must be positive")
    cfg.toy.parsed_cases()


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    return parse_config(path.read_text(), path.parent, str(path))
