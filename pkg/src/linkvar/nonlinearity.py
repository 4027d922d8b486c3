"""Scalar nonlinearities f, g, their primitives and the constants built from them.

Families
--------
f : ``power``       f(u) = |u|^{p-2} u
    ``log-arctan``  |u|^{q-2} u log(1 + |u|^{p-q})          for |u| < rho
                    C (1 + arctan|u|) |u|^{p-2} u            for |u| >= rho
g : ``power``         g(u) = |u|^{q-2} u
    ``exp-damped``    |u|^{q-2} u / (1 + e^{|u|})
    ``arctan-damped`` |u|^{q-2} u / (1 + arctan|u|)
    ``zero``          g = 0

Every bound computed here is certified on the sampling range
|u| in [1e-8, 1e4] (4096 log-spaced samples per sign), see CERT_RANGE.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, asdict
from typing import Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .errors import DegenerateNonlinearity, NonCoerciveF, ValidationError

F_FAMILIES = ("power", "log-arctan")
G_FAMILIES = ("power", "exp-damped", "arctan-damped", "zero")

CERT_RANGE = (1e-8, 1e4)
CERT_SAMPLES = 4096
TABLE_NODES = 2048
SIMPSON_TOL = 1e-12


def critical_exponent(N: int) -> float:
    return math.inf if N <= 2 else 2.0 * N / (N - 2)


@dataclass(frozen=True)
class NonlinearitySpec:
    family_f: str = "power"
    p: float = 4.0
    family_g: str = "power"
    q: float = 3.0
    rho: float = 1.0

    def __post_init__(self):
        if self.family_f not in F_FAMILIES:
            raise ValidationError(f"unknown f family {self.family_f!r}; expected one of {F_FAMILIES}")
        if self.family_g not in G_FAMILIES:
            raise ValidationError(f"unknown g family {self.family_g!r}; expected one of {G_FAMILIES}")
        if not self.rho > 0:
            raise ValidationError("rho must be positive")

    @property
    def matching_constant_C(self) -> float:
        """Constant making the log-arctan f continuous at |u| = rho."""
        p, q, rho = self.p, self.q, self.rho
        return rho ** (q - p) * math.log1p(rho ** (p - q)) / (1.0 + math.atan(rho))

    def exponent_errors(self, N: int = 3) -> list[str]:
        errs = []
        if not self.q > 2:
            errs.append(f"q={self.q} must exceed 2")
        if not self.q < self.p:
            errs.append(f"q={self.q} must be smaller than p={self.p}")
        if not self.p < critical_exponent(N):
            errs.append(f"p={self.p} must be below 2N/(N-2)={critical_exponent(N):g}")
        return errs

    def validate(self, N: int = 3) -> "NonlinearitySpec":
        errs = self.exponent_errors(N)
        if errs:
            raise ValidationError("; ".join(errs))
        return self


# ---------------------------------------------------------------- pointwise


def _pow(a, e):
    """a ** e for a >= 0, by repeated products when e is a small integer (much faster than pow)."""
    if e == int(e) and 0 <= e <= 8:
        n = int(e)
        if n == 0:
            return np.ones_like(a)
        out = a
        for _ in range(n - 1):
            out = out * a
        return out
    return a ** e


def eval_f(spec: NonlinearitySpec, u):
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    p, q = spec.p, spec.q
    if spec.family_f == "power":
        return _pow(a, p - 2) * u
    C = spec.matching_constant_C
    inner = a ** (q - 2) * u * np.log1p(a ** (p - q))
    outer = C * (1.0 + np.arctan(a)) * a ** (p - 2) * u
    return np.where(a < spec.rho, inner, outer)


def eval_df(spec: NonlinearitySpec, u):
    """Derivative f'(u) (used by the Newton-type steps)."""
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    p, q = spec.p, spec.q
    if spec.family_f == "power":
        return (p - 1) * a ** (p - 2)
    C = spec.matching_constant_C
    inner = (q - 1) * a ** (q - 2) * np.log1p(a ** (p - q)) + (p - q) * a ** (p - 2) / (1.0 + a ** (p - q))
    outer = C * ((p - 1) * (1.0 + np.arctan(a)) * a ** (p - 2) + a ** (p - 1) / (1.0 + a * a))
    return np.where(a < spec.rho, inner, outer)


def eval_g(spec: NonlinearitySpec, u):
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    q = spec.q
    fam = spec.family_g
    if fam == "zero":
        return np.zeros_like(u)
    base = _pow(a, q - 2) * u
    if fam == "power":
        return base
    if fam == "exp-damped":
        return base * expit(-a)
    return base / (1.0 + np.arctan(a))


def eval_dg(spec: NonlinearitySpec, u):
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    q = spec.q
    fam = spec.family_g
    if fam == "zero":
        return np.zeros_like(u)
    if fam == "power":
        return (q - 1) * a ** (q - 2)
    if fam == "exp-damped":
        s = expit(-a)
        return (q - 1) * a ** (q - 2) * s - a ** (q - 1) * s * (1.0 - s)
    at = 1.0 + np.arctan(a)
    return (q - 1) * a ** (q - 2) / at - a ** (q - 1) / (at * at * (1.0 + a * a))


def _adaptive_simpson(fun, a, b, tol, depth=50):
    def simpson(fa, fm, fb, a, b):
        return (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = fun(lm), fun(rm)
        left = simpson(fa, flm, fm, a, m)
        right = simpson(fm, frm, fb, m, b)
        delta = left + right - whole
        if depth <= 0 or abs(delta) <= 15.0 * max(tol, 1e-15 * abs(left + right)):
            return left + right + delta / 15.0
        return rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)

    fa, fb, fm = fun(a), fun(b), fun(0.5 * (a + b))
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)


class _PrimitiveTable:
    """Primitive of an odd function h >= 0 on (0, inf), tabulated on log nodes.

    Values between nodes come from a cubic Hermite interpolant of log H
    against log u whose slopes u h(u) / H(u) are exact, so the interpolant
    is monotone for the built-in families and H' = h holds at every node.
    """

    def __init__(self, h, breakpoints=()):
        lo, hi = CERT_RANGE
        nodes = np.geomspace(lo, hi, TABLE_NODES)
        extra = [b for b in breakpoints if lo < b < hi]
        nodes = np.unique(np.concatenate([nodes, extra]))
        vals = np.empty_like(nodes)
        scalar = lambda s: float(h(np.float64(s)))
        acc = _adaptive_simpson(scalar, 0.0, nodes[0], SIMPSON_TOL)
        vals[0] = acc
        for k in range(1, len(nodes)):
            # kinks of h only sit on nodes, so each piece is smooth
            acc += _adaptive_simpson(scalar, nodes[k - 1], nodes[k], SIMPSON_TOL)
            vals[k] = acc
        hv = np.asarray(h(nodes), dtype=float)
        x = np.log(nodes)
        y = np.log(vals)
        slope = nodes * hv / vals
        self._spline = CubicHermiteSpline(x, y, slope)
        self._x0, self._x1 = x[0], x[-1]
        self._y0, self._y1 = y[0], y[-1]
        self._s0, self._s1 = slope[0], slope[-1]

    def __call__(self, u):
        a = np.abs(np.asarray(u, dtype=float))
        out = np.zeros_like(a)
        pos = a > 0
        x = np.log(a[pos])
        y = np.empty_like(x)
        lo, hi = x < self._x0, x > self._x1
        mid = ~(lo | hi)
        y[mid] = self._spline(x[mid])
        y[lo] = self._y0 + self._s0 * (x[lo] - self._x0)
        y[hi] = self._y1 + self._s1 * (x[hi] - self._x1)
        out[pos] = np.exp(y)
        return out


@functools.lru_cache(maxsize=32)
def _f_table(spec: NonlinearitySpec) -> _PrimitiveTable:
    return _PrimitiveTable(lambda s: eval_f(spec, s), breakpoints=(spec.rho,))


@functools.lru_cache(maxsize=32)
def _g_table(spec: NonlinearitySpec) -> _PrimitiveTable:
    return _PrimitiveTable(lambda s: eval_g(spec, s))


def eval_F(spec: NonlinearitySpec, u):
    u = np.asarray(u, dtype=float)
    if spec.family_f == "power":
        return _pow(np.abs(u), spec.p) / spec.p
    return _f_table(spec)(u)


def eval_G(spec: NonlinearitySpec, u):
    u = np.asarray(u, dtype=float)
    if spec.family_g == "zero":
        return np.zeros_like(u)
    if spec.family_g == "power":
        return _pow(np.abs(u), spec.q) / spec.q
    return _g_table(spec)(u)


def eval_F_lamG(spec: NonlinearitySpec, lam: float, u):
    """F(u) - lam G(u), fused for the power/power pair (shares |u|^q)."""
    u = np.asarray(u, dtype=float)
    if spec.family_f == "power" and spec.family_g == "power":
        a = np.abs(u)
        return _pow(a, spec.q) * (_pow(a, spec.p - spec.q) / spec.p - lam / spec.q)
    out = eval_F(spec, u)
    return out - lam * eval_G(spec, u) if lam else out


def eval_f_lamg(spec: NonlinearitySpec, lam: float, u):
    """f(u) - lam g(u), fused like eval_F_lamG."""
    u = np.asarray(u, dtype=float)
    if spec.family_f == "power" and spec.family_g == "power":
        a = np.abs(u)
        return _pow(a, spec.q - 2) * u * (_pow(a, spec.p - spec.q) - lam)
    out = eval_f(spec, u)
    return out - lam * eval_g(spec, u) if lam else out


def eval_Phi(spec: NonlinearitySpec, lam: float, u):
    """Phi(u) = f(u)u/2 - F(u) + lam G(u) - lam g(u)u/2."""
    u = np.asarray(u, dtype=float)
    return 0.5 * eval_f(spec, u) * u - eval_F(spec, u) + lam * eval_G(spec, u) - 0.5 * lam * eval_g(spec, u) * u


# ---------------------------------------------------------------- constants


def cert_samples(n: int = CERT_SAMPLES) -> np.ndarray:
    """Positive certification samples; callers mirror them for the negative side."""
    return np.geomspace(*CERT_RANGE, n)


def _refine_max(fun, x_grid, k, maximize=True):
    """Golden/bounded scalar refinement in log|u| around grid index k."""
    lo = np.log(x_grid[max(k - 1, 0)])
    hi = np.log(x_grid[min(k + 1, len(x_grid) - 1)])
    sign = -1.0 if maximize else 1.0
    if hi <= lo:
        return fun(x_grid[k])
    res = minimize_scalar(lambda t: sign * fun(np.exp(t)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    best = sign * res.fun
    grid_val = fun(x_grid[k])
    return max(best, grid_val) if maximize else min(best, grid_val)


TAIL_PROBES = (1e8, 1e12, 1e15)


def _growth_constant(h, exponent, eps):
    u = cert_samples()
    # far-tail probes catch suprema that are only approached as |u| -> inf
    tail = np.asarray(TAIL_PROBES)
    vals = [float(np.max(np.maximum(np.abs(h(s * tail)) - eps * tail, 0.0) / tail ** (exponent - 1)))
            for s in (1.0, -1.0)]
    for s in (1.0, -1.0):
        us = s * u
        ratio = np.maximum(np.abs(h(us)) - eps * u, 0.0) / u ** (exponent - 1)
        k = int(np.argmax(ratio))
        fun = lambda t, s=s: float(max(abs(h(s * t)) - eps * t, 0.0) / t ** (exponent - 1))
        vals.append(_refine_max(fun, u, k, maximize=True))
    return max(vals)


def growth_constant_f(spec: NonlinearitySpec, eps: float) -> float:
    """Smallest C with |f(u)| <= eps|u| + C|u|^{p-1} on the certification range."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if not np.any(eval_f(spec, cert_samples(64))):
        raise DegenerateNonlinearity("f vanishes identically")
    return _growth_constant(lambda t: eval_f(spec, t), spec.p, eps)


def growth_constant_g(spec: NonlinearitySpec, eps: float) -> float:
    """Smallest C with |g(u)| <= eps|u| + C|u|^{q-1}; zero for the zero family."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    if spec.family_g == "zero":
        return 0.0
    return _growth_constant(lambda t: eval_g(spec, t), spec.q, eps)


def lower_constant_F(spec: NonlinearitySpec, eps: float) -> float:
    """min over u != 0 of (F(u) + eps u^2) / |u|^q."""
    if not eps > 0:
        raise ValidationError("eps must be positive")
    u = cert_samples()
    q = spec.q
    best = math.inf
    for s in (1.0, -1.0):
        A = (eval_F(spec, s * u) + eps * u * u) / u ** q
        k = int(np.argmin(A))
        if not np.all(np.isfinite(A)) or A[k] <= 0:
            raise NonCoerciveF(f"A(u) not bounded below by a positive number (min {A[k]:g})")
        if k == 0 or k == len(u) - 1:
            raise NonCoerciveF("A(u) attains its minimum at the end of the sampling range")
        lo, hi = np.log(u[k - 1]), np.log(u[k + 1])
        fun = lambda t, s=s: float((eval_F(spec, s * math.exp(t)) + eps * math.exp(2 * t)) / math.exp(q * t))
        res = minimize_scalar(fun, bracket=(lo, np.log(u[k]), hi), method="golden", tol=1e-10)
        best = min(best, float(res.fun), float(A[k]))
    return best


def g_over_f(spec: NonlinearitySpec, u: float) -> float:
    fu = float(eval_f(spec, u))
    return float(eval_g(spec, u)) / fu


def f5_constants(spec: NonlinearitySpec, lower: Optional[float] = None) -> tuple[float, float]:
    """(lower, upper) of |f(u)| / |u|^{p-1} over lower <= |u| <= 1e4 (lower defaults to rho)."""
    u = np.geomspace(spec.rho if lower is None else lower, CERT_RANGE[1], CERT_SAMPLES)
    ratio = np.abs(eval_f(spec, u)) / u ** (spec.p - 1)
    return float(ratio.min()), float(ratio.max())


def phi_sup_ratio(spec: NonlinearitySpec, lam: float, rho: float, n: int = 2048) -> float:
    """sup_{0<|t|<=rho} |Phi(t)| / t^2 by a 1D scan (both signs)."""
    # one fixed grid for every rho, so the sampled sets are nested and the sup is monotone in rho
    base = np.geomspace(CERT_RANGE[0], CERT_RANGE[1], n * 3)
    t = np.append(base[base < rho], rho)
    vals = [np.abs(eval_Phi(spec, lam, s * t)) / (t * t) for s in (1.0, -1.0)]
    return float(max(v.max() for v in vals))


@dataclass
class NonlinearityConstants:
    eps: float
    C_f_growth: float
    C_g_growth: float
    C_F_lower: float
    g_over_f_at_rho: float
    cert_range: tuple = CERT_RANGE

    def to_dict(self):
        return asdict(self)


def nonlinearity_constants(spec: NonlinearitySpec, eps: float) -> NonlinearityConstants:
    C_F = lower_constant_F(spec, eps)
    C_g = growth_constant_g(spec, eps)
    return NonlinearityConstants(
        eps=eps,
        C_f_growth=growth_constant_f(spec, eps),
        # C_G >= C_F may be assumed without loss of generality
        C_g_growth=max(C_g, C_F),
        C_F_lower=C_F,
        g_over_f_at_rho=g_over_f(spec, spec.rho),
    )


# ---------------------------------------------------------------- axioms


@dataclass
class AxiomReport:
    checks: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    cert_range: tuple = CERT_RANGE
    samples_per_sign: int = CERT_SAMPLES

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values())

    def failed(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def to_dict(self):
        return {
            "checks": dict(self.checks),
            "all_passed": self.all_passed,
            "details": self.details,
            "cert_range": list(self.cert_range),
            "samples_per_sign": self.samples_per_sign,
        }


def _nondecreasing(y, rtol=1e-10):
    d = np.diff(y)
    scale = np.maximum(np.abs(y[1:]), np.abs(y[:-1])) + 1e-300
    return bool(np.all(d >= -rtol * scale))


def _small_u_is_o_u(ratio, u):
    # o(|u|): ratio h(u)/u positive-sloped in log-log over the first two decades
    m = u <= u[0] * 100
    r = np.abs(ratio[m])
    if np.all(r == 0):
        return True, 0.0
    if np.any(r == 0):
        return False, float("nan")
    slope = np.polyfit(np.log(u[m]), np.log(r), 1)[0]
    return bool(slope > 1e-3 and _nondecreasing(r)), float(slope)


def verify_axioms(spec: NonlinearitySpec, lam: float = 0.0, N: int = 3) -> AxiomReport:
    rep = AxiomReport()
    c, d = rep.checks, rep.details
    p, q = spec.p, spec.q
    errs = spec.exponent_errors(N)
    c["exponent_order"] = not errs
    d["exponent_errors"] = errs

    u = cert_samples()
    both = np.concatenate([-u[::-1], u])
    f, g = eval_f(spec, both), eval_g(spec, both)
    F, G = eval_F(spec, both), eval_G(spec, both)
    fp, gp = eval_f(spec, u), eval_g(spec, u)

    c["odd_f"] = bool(np.all(eval_f(spec, -u) == -fp))
    c["odd_g"] = bool(np.all(eval_g(spec, -u) == -gp))

    tail = u >= u[-1] / 10
    rf = np.abs(fp) / (1 + u ** (p - 1))
    rg = np.abs(gp) / (1 + u ** (q - 1))
    c["F1_growth"] = bool(rf[tail][-1] <= 2 * rf[tail][0] + 1e-300)
    c["G1_growth"] = bool(rg[tail][-1] <= 2 * rg[tail][0] + 1e-300) if spec.family_g != "zero" else True
    d["F1_sup_ratio"] = float(rf.max())
    d["G1_sup_ratio"] = float(rg.max())

    c["F2_small_u"], d["F2_slope"] = _small_u_is_o_u(fp / u, u)
    c["G2_small_u"], d["G2_slope"] = _small_u_is_o_u(gp / u, u)

    upper_half = u >= 1e-2
    Fq = eval_F(spec, u)[upper_half] / u[upper_half] ** q
    c["F3_superlinear"] = bool(np.all(F >= 0) and _nondecreasing(Fq, rtol=1e-8) and Fq[-1] > Fq[0])

    # on (-inf, 0) the abscissa -u increases when u is traversed backwards
    rneg_f = eval_f(spec, -u) / u ** (q - 1)
    c["F4_monotone"] = _nondecreasing(fp / u ** (q - 1), rtol=1e-12) and _nondecreasing(rneg_f[::-1], rtol=1e-12)
    if spec.family_g == "zero":
        c["G3_monotone"] = True
    else:
        rpos = gp / u ** (q - 1)
        rneg = eval_g(spec, -u) / u ** (q - 1)
        # nonincreasing on (0, inf) and on (-inf, 0)
        c["G3_monotone"] = _nondecreasing(-rpos, rtol=1e-12) and _nondecreasing(-rneg[::-1], rtol=1e-12)
    c["G3_sign"] = bool(np.all(g * both >= 0))

    lo, hi = f5_constants(spec)
    c["F5_power_bounds"] = bool(lo > 0 and np.isfinite(hi))
    d["F5_lower"], d["F5_upper"] = lo, hi

    fu, gu = f * both, g * both
    tol_f = 1e-8 * np.abs(fu)
    tol_g = 1e-8 * np.abs(gu)
    c["AR_f"] = bool(np.all(q * F >= -tol_f) and np.all(q * F <= fu + tol_f))
    c["AR_g"] = bool(np.all(gu >= -tol_g) and np.all(gu <= q * G + tol_g))

    # informational: Phi >= 0 wherever lam g(u)u <= f(u)u
    phi = eval_Phi(spec, lam, both)
    region = lam * gu <= fu
    d["phi_nonnegative_where_f_dominates"] = bool(np.all(phi[region] >= -1e-8 * np.abs(fu[region])))
    d["lambda"] = lam
    if spec.family_f == "log-arctan":
        d["matching_constant_C"] = spec.matching_constant_C
    return rep
