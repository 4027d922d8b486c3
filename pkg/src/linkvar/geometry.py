"""Sampling-based verification of the linking geometry of the discretized J.

Every extremal value here is an estimate from multistart descent/ascent plus
random sampling: sphere infima are upper bounds on the true infimum and
boundary suprema are lower bounds on the true supremum, so a passing (A3)
check is heuristic at finite sampling. Sample counts are recorded in reports.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from . import nonlinearity as nl
from .errors import GeometryFailure, NoAnticoercivity, RhoTooLarge, ValidationError
from .functional import FunctionalContext
from .spectral import ModeBlock, kappa_estimate


@dataclass
class GeometrySettings:
    n_starts: int = 32
    descent_maxit: int = 60
    descent_tol: float = 1e-8
    start_modes: int = 64
    resample: int = 1000
    delta_samples: int = 10_000
    ray_samples: int = 1000
    kappa_samples: int = 2000
    bisection_steps: int = 12
    r_min: float = 1e-4
    max_doublings: int = 16
    margin: float = 1e-6
    seed: int = 42


@dataclass
class GeometryConstants:
    mu0: float
    kappa: float
    q: float
    eps: float
    C_F: float
    C_G: float
    lambda_max: float
    kappa_samples: int

    def to_dict(self) -> dict:
        return asdict(self)


def lambda_threshold(consts: GeometryConstants, q: Optional[float] = None) -> float:
    """lambda_max = C_F / (kappa 2^q C_G) with constants taken at eps = mu0/8."""
    q = consts.q if q is None else q
    lam = consts.C_F / (consts.kappa * 2.0 ** q * consts.C_G)
    if consts.C_F <= consts.C_G:
        assert lam <= 1.0
    return lam


def compute_constants(ctx: FunctionalContext, kappa: Optional[float] = None, kappa_samples: int = 2000,
                      seed: int = 42) -> GeometryConstants:
    spec = ctx.spec.nonlinearity
    mu0 = ctx.split.mu0
    eps = mu0 / 8.0
    if kappa is None:
        kappa = kappa_estimate(ctx.split, ctx.grid, spec.q, n_samples=kappa_samples,
                               rng=np.random.default_rng(seed))
    C_F = nl.lower_constant_F(spec, eps)
    C_G = max(nl.growth_constant_g(spec, eps), C_F)
    c = GeometryConstants(mu0, float(kappa), spec.q, eps, C_F, C_G, 0.0, kappa_samples)
    c.lambda_max = lambda_threshold(c)
    return c


# ---------------------------------------------------------------- batched energy


def energy_batch(ctx: FunctionalContext, X: np.ndarray, chunk: int = 250) -> np.ndarray:
    """J at each row of X (x-coordinates)."""
    X = np.atleast_2d(X)
    out = np.empty(len(X))
    w = ctx.w
    for s in range(0, len(X), chunk):
        xs = X[s:s + chunk]
        U = ctx.split.synthesize(xs / ctx.sqrt_abs)
        quad = 0.5 * np.sum(ctx.sign * xs * xs, axis=1)
        out[s:s + chunk] = quad - np.sum(w * ctx.nonlinear_density(U), axis=(-2, -1))
    return out


# ---------------------------------------------------------------- Riemannian optimization


def sphere_optimize(fg: Callable, x0: np.ndarray, radius: float, retract: Callable,
                    maximize: bool = False, maxit: int = 60, tol: float = 1e-8):
    """Polak-Ribiere+ descent (or ascent) of fg on a sphere of given radius.

    fg(x) -> (value, euclidean gradient); retract(y) maps a point back onto the
    admissible part of the sphere. Returns (x, value, iterations).
    """
    sgn = -1.0 if maximize else 1.0
    x = retract(x0)
    v, gr = fg(x)
    v, gr = sgn * v, sgn * gr

    def tangent(x, g):
        return g - (g @ x) / (radius * radius) * x

    G = tangent(x, gr)
    d = G.copy()
    step = 0.1 * radius / max(np.linalg.norm(G), 1e-300)
    its = 0
    for its in range(1, maxit + 1):
        gn = np.linalg.norm(G)
        if gn <= tol * max(1.0, abs(v)):
            break
        slope = float(G @ d)
        if slope <= 0:
            d, slope = G.copy(), float(gn * gn)
        a = 2.0 * step
        while True:
            xt = retract(x - a * d)
            vt, gt = fg(xt)
            vt = sgn * vt
            if vt <= v - 1e-4 * a * slope or a < 1e-16 * radius:
                break
            a *= 0.5
        if vt > v:
            break
        gt = sgn * gt
        Gn = tangent(xt, gt)
        beta = max(0.0, float(Gn @ (Gn - G)) / float(G @ G))
        d = Gn + beta * tangent(xt, d)
        x, v, G, step = xt, vt, Gn, a
    return x, sgn * v, its


# ---------------------------------------------------------------- (A1)-(A3) pieces


@dataclass
class LinkRadiusResult:
    r_link: float
    lower_bound: float
    inf_estimate: float
    minimizer: np.ndarray = field(repr=False)
    tested: list = field(default_factory=list)
    resample_min: float = math.nan
    n_starts: int = 0


def _plus_starts(ctx, n, k_modes, rng):
    m = ctx.split.n_minus
    X = np.zeros((n, len(ctx.split.eigvals)))
    k = min(k_modes, len(ctx.split.eigvals) - m)
    X[:, m:m + k] = rng.standard_normal((n, k))
    X[0] = 0.0
    X[0, m] = 1.0
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def sphere_infimum(ctx: FunctionalContext, r: float, settings: GeometrySettings, rng, warm=None):
    """Estimated inf of J over the sphere of radius r in X+ (an upper bound on the true inf)."""
    m = ctx.split.n_minus

    def retract(y):
        y = y.copy()
        y[:m] = 0.0
        return r * y / np.linalg.norm(y)

    def fg(x):
        e, g, _ = ctx.energy_and_gradient_x(x)
        g[:m] = 0.0
        return e, g

    starts = _plus_starts(ctx, settings.n_starts, settings.start_modes, rng)
    if warm is not None:
        starts[-1] = warm / np.linalg.norm(warm)
    best = (math.inf, None)
    for s in starts:
        x, v, _ = sphere_optimize(fg, r * s, r, retract, maxit=settings.descent_maxit, tol=settings.descent_tol)
        if v < best[0]:
            best = (v, x)
    return best


def find_link_radius(ctx: FunctionalContext, settings: Optional[GeometrySettings] = None, rng=None) -> LinkRadiusResult:
    """Largest tested r in (0, 1] whose estimated sphere infimum is at least r^2/4."""
    st = settings or GeometrySettings()
    rng = np.random.default_rng(st.seed if rng is None else rng)
    tested = []

    def test(r, warm=None):
        v, x = sphere_infimum(ctx, r, st, rng, warm)
        ok = v >= r * r / 4
        tested.append({"r": r, "inf_estimate": v, "pass": bool(ok)})
        return ok, v, x

    ok, v, x = test(1.0)
    best = (1.0, v, x) if ok else None
    if best is None:
        ok, v, x = test(st.r_min)
        if not ok:
            raise GeometryFailure(f"sphere infimum below r^2/4 even at r = {st.r_min:g}")
        lo, hi = st.r_min, 1.0
        best = (lo, v, x)
        for _ in range(st.bisection_steps):
            mid = math.sqrt(lo * hi)
            ok, v, x = test(mid, best[2])
            if ok:
                lo, best = mid, (mid, v, x)
            else:
                hi = mid
    r, v, x = best
    res = LinkRadiusResult(r, r * r / 4, v, x, tested, n_starts=st.n_starts)
    if st.resample:
        P = _plus_starts(ctx, st.resample, len(ctx.split.eigvals), rng)
        res.resample_min = float(energy_batch(ctx, r * P).min())
    return res


@dataclass
class BoundaryResult:
    R_link: float
    sup_ball: float
    sup_sphere: float
    tried: list = field(default_factory=list)
    n_starts: int = 0

    @property
    def sup_boundary(self) -> float:
        return max(self.sup_ball, self.sup_sphere)


def _mode_matrix(ctx: FunctionalContext, idx) -> np.ndarray:
    """Rows are the X-normalized modes listed in idx, flattened."""
    idx = np.atleast_1d(idx)
    return np.stack([(ctx.split.mode(int(i)) / ctx.sqrt_abs[i]).ravel() for i in idx])


def _slice_energy(ctx: FunctionalContext, e: np.ndarray):
    """Value and gradient of z = (t, y) -> J(t e + y) in the (1 + n_minus) slice."""
    m = ctx.split.n_minus
    Ue = ctx.grid_from_x(e).ravel()
    minus = ModeBlock(ctx.split.basis, np.arange(m), 1.0 / ctx.sqrt_abs[:m])
    sgn = np.concatenate([[1.0], -np.ones(m)])
    w = ctx.w.ravel()

    def fg(z):
        u = z[0] * Ue + minus.apply(z[1:])
        v = 0.5 * float(np.sum(sgn * z * z)) - float(np.sum(w * ctx.nonlinear_density(u)))
        r = w * ctx.ftilde(u)
        return v, sgn * z - np.concatenate([[Ue @ r], minus.adjoint(r)])

    return fg


def boundary_sup(ctx: FunctionalContext, e: np.ndarray, R: float, settings: GeometrySettings, rng,
                 stop_above: Optional[float] = None):
    """Estimated sup of J over both pieces of the boundary of M(e) at radius R.

    With ``stop_above`` set, returns as soon as either estimate exceeds it (the
    radius is rejected anyway); the returned values are then partial.
    """
    m = ctx.split.n_minus
    fg = _slice_energy(ctx, e)
    # piece 1: {v- : ||v-|| <= R}, projected ascent
    sup_ball = 0.0  # J(0) = 0
    for k in range(settings.n_starts if m else 0):
        y = rng.standard_normal(m)
        y *= R * rng.uniform() ** (1.0 / m) / np.linalg.norm(y)
        if k == 0:
            y[:] = 0.0
        v, g = fg(np.concatenate([[0.0], y]))
        g = g[1:]
        a = 1.0
        for _ in range(settings.descent_maxit):
            yt = y + a * g
            nt = np.linalg.norm(yt)
            if nt > R:
                yt *= R / nt
            vt, gt = fg(np.concatenate([[0.0], yt]))
            if vt > v:
                y, v, g = yt, vt, gt[1:]
                a *= 1.5
            else:
                a *= 0.5
                if a < 1e-12:
                    break
        sup_ball = max(sup_ball, v)
        if stop_above is not None and sup_ball > stop_above:
            return sup_ball, -math.inf

    # piece 2: {t e + v- : t > 0, ||t e + v-|| = R}, Riemannian ascent on the hemisphere
    def retract(z):
        z = z.copy()
        z[0] = max(z[0], 0.0)
        return R * z / np.linalg.norm(z)

    sup_sphere = -math.inf
    for k in range(settings.n_starts):
        z0 = rng.standard_normal(m + 1)
        z0[0] = abs(z0[0])
        if k == 0:
            z0 = np.zeros(m + 1)
            z0[0] = 1.0
        _, v, _ = sphere_optimize(fg, R * z0 / np.linalg.norm(z0), R, retract, maximize=True,
                                  maxit=settings.descent_maxit, tol=settings.descent_tol)
        sup_sphere = max(sup_sphere, v)
        if stop_above is not None and sup_sphere > stop_above:
            break
    return sup_ball, sup_sphere


def find_R(ctx: FunctionalContext, u_plus, r_link: float, settings: Optional[GeometrySettings] = None,
           rng=None) -> BoundaryResult:
    """First R in the doubling sequence 4 r, 8 r, ... with estimated sup over the boundary of M <= 0."""
    st = settings or GeometrySettings()
    rng = np.random.default_rng(st.seed if rng is None else rng)
    e = np.asarray(u_plus, dtype=float)
    if e.shape == ctx.grid.shape:
        e = ctx.x_from_grid(e)
    m = ctx.split.n_minus
    if np.any(e[:m] != 0) or not np.any(e):
        raise ValidationError("u_plus must be a nonzero element of X+")
    e = e / np.linalg.norm(e)
    tried = []
    R = 4.0 * r_link
    while R <= 2.0 ** st.max_doublings * r_link:
        sb, ss = boundary_sup(ctx, e, R, st, rng, stop_above=0.0)
        tried.append({"R": R, "sup_ball": sb, "sup_sphere": ss if math.isfinite(ss) else None,
                      "stopped_early": bool(max(sb, ss) > 0.0)})
        if max(sb, ss) <= 0.0:
            return BoundaryResult(R, sb, ss, tried, st.n_starts)
        R *= 2.0
    raise NoAnticoercivity(f"sup over the boundary of M stays positive up to R = {R / 2:g}")


@dataclass
class DeltaResult:
    delta: float
    sup_sampled: float
    bound: float
    n_samples: int


def tau_ball_samples(ctx: FunctionalContext, delta: float, n: int, rng, low_modes: int = 64,
                     wide_modes: int = 1024) -> np.ndarray:
    """Random x-coordinates u with |||u||| <= delta.

    Plus parts live on the lowest ``low_modes`` positive modes for half of the
    samples and on the lowest ``wide_modes`` for the rest (higher modes only
    add to the quadratic part at this scale).
    """
    sp_ = ctx.split
    m, dim = sp_.n_minus, len(sp_.eigvals)
    k = min(wide_modes, dim - m)
    X = np.zeros((n, dim))
    P = rng.standard_normal((n, k))
    P[: n // 2, low_modes:] = 0.0
    # radii concentrated toward the sphere, where the quadratic part peaks
    P *= (delta * rng.uniform(size=(n, 1)) ** 0.25) / np.linalg.norm(P, axis=1, keepdims=True)
    X[:, m:m + k] = P
    if m:
        # sum_k 2^-(k+1) |<u-, e_k>| <= delta with the budget split by Dirichlet proportions
        share = rng.dirichlet(np.ones(m + 1), size=n)[:, :m] * rng.uniform(size=(n, 1)) ** 3
        j = np.arange(1, m + 1)
        X[:, sp_.eks] = delta * share * 2.0 ** (j + 1) * rng.choice([-1.0, 1.0], size=(n, m))
    return X


def find_delta(ctx: FunctionalContext, r_link: float, b: float, settings: Optional[GeometrySettings] = None,
               rng=None, chunk: int = 500) -> DeltaResult:
    st = settings or GeometrySettings()
    rng = np.random.default_rng(st.seed if rng is None else rng)
    if not b > 0:
        raise GeometryFailure("sphere infimum estimate must be positive")
    delta = min(math.sqrt(b / 3.0), r_link / 2.0)
    sup = 0.0  # J(0) = 0
    for s in range(0, st.delta_samples, chunk):
        X = tau_ball_samples(ctx, delta, min(chunk, st.delta_samples - s), rng)
        sup = max(sup, float(energy_batch(ctx, X).max()))
    if sup >= b:
        raise GeometryFailure(f"sampled sup {sup:g} over the delta-ball is not below {b:g}")
    return DeltaResult(delta, sup, b, st.delta_samples)


def minus_ray_sup(ctx: FunctionalContext, n_samples: int = 1000, scales=None, rng=None) -> float:
    """max of J(s d) over random X- directions d and scales s (expected <= 0)."""
    rng = np.random.default_rng(rng)
    m = ctx.split.n_minus
    scales = np.geomspace(1e-3, 1e2, 11) if scales is None else np.asarray(scales)
    if m == 0:
        return 0.0
    D = rng.standard_normal((n_samples, m))
    D /= np.linalg.norm(D, axis=1, keepdims=True)
    U1 = D @ _mode_matrix(ctx, np.arange(m))
    w = ctx.w.ravel()
    best = -math.inf
    for s in scales:
        U = s * U1
        vals = -0.5 * s * s - np.sum(w * ctx.nonlinear_density(U), axis=1)
        best = max(best, float(vals.max()))
    return best


def ray_values(ctx: FunctionalContext, u_plus, n_rays: int = 8, scales=None, rng=None) -> np.ndarray:
    """J(s (u_plus + v-)) for n_rays random v- along growing s; rows are rays."""
    rng = np.random.default_rng(rng)
    e = np.asarray(u_plus, dtype=float)
    m = ctx.split.n_minus
    scales = np.geomspace(1.0, 1e3, 10) if scales is None else np.asarray(scales)
    out = np.empty((n_rays, len(scales)))
    for i in range(n_rays):
        d = e.copy()
        d[:m] = rng.standard_normal(m) * (i / max(n_rays - 1, 1))
        out[i] = energy_batch(ctx, scales[:, None] * d[None, :])
    return out


# ---------------------------------------------------------------- Cerami-boundedness constant


@dataclass
class BoundednessResult:
    K: float
    passed: bool
    passed_squared: bool
    eps: float
    rho: float
    lam: float
    terms: dict
    side_ratio: float
    side_ratio_ok: bool
    side_lambda_term: float
    side_lambda_ok: bool

    def to_dict(self) -> dict:
        return asdict(self)


def boundedness_K(spec: nl.NonlinearitySpec, mu0: float, kappa: float, eps: float, rho: float,
                  lam: float) -> BoundednessResult:
    """Assemble K from its displayed terms; pass flags compare K with mu0 and mu0^2."""
    if not (rho > 0 and eps > 0 and lam >= 0):
        raise ValidationError("need rho > 0, eps > 0, lambda >= 0")
    p, q = spec.p, spec.q
    C_f = nl.growth_constant_f(spec, eps)
    C_g = nl.growth_constant_g(spec, eps)
    c_low, c_up = nl.f5_constants(spec, lower=rho)
    gamma = nl.g_over_f(spec, rho)
    if 1.0 - lam * gamma <= 0:
        raise RhoTooLarge(f"1 - lambda g(rho)/f(rho) = {1 - lam * gamma:g} <= 0")
    S = nl.phi_sup_ratio(spec, lam, rho)
    D = c_up * (1.0 + lam * gamma) * 2.0 * kappa
    C2 = 1.0 / ((0.5 - 1.0 / q) * c_low)
    terms = {
        "eps_term": eps * (1.0 + lam),
        "f_growth_term": C_f * rho ** (p - 2),
        "g_growth_term": lam * C_g * rho ** (q - 2),
        "D": D,
        "C_lower": C2,
        "phi_sup_ratio": S,
        "g_over_f_rho": gamma,
        "D_term": D * (rho ** (p - 2) + C2 / (1.0 - lam * gamma) * S),
    }
    K = terms["eps_term"] + terms["f_growth_term"] + terms["g_growth_term"] + terms["D_term"]
    ratio = (1.0 + lam * gamma) / (1.0 - lam * gamma)
    side = c_up * 2.0 * kappa * lam * gamma * rho ** (p - 2)
    return BoundednessResult(K, K < mu0, K < mu0 * mu0, eps, rho, lam, terms, ratio,
                             0.0 <= ratio <= 2.0, side, side < mu0 / 6.0)


def k_search(spec: nl.NonlinearitySpec, mu0: float, kappa: float, lambda_max: float,
             n_eps: int = 6, n_rho: int = 16, n_lam: int = 8, squared: bool = False) -> tuple[Optional[BoundednessResult], int]:
    """Grid search eps in {mu0/12 2^-j, j>=1}, rho in {2^-j}, lambda in {lambda_max 2^-j}.

    Larger lambda is preferred, then larger eps, then larger rho. Returns the
    first passing triple (or None) and the number of triples evaluated.
    """
    tried = 0
    for jl in range(n_lam):
        lam = lambda_max * 2.0 ** -jl
        for je in range(1, n_eps + 1):
            eps = mu0 / 12.0 * 2.0 ** -je
            for jr in range(n_rho):
                rho = 2.0 ** -jr
                tried += 1
                try:
                    res = boundedness_K(spec, mu0, kappa, eps, rho, lam)
                except RhoTooLarge:
                    continue
                if (res.passed_squared if squared else res.passed) and res.side_ratio_ok:
                    return res, tried
    return None, tried


# ---------------------------------------------------------------- composite report


@dataclass
class GeometryReport:
    constants: GeometryConstants
    lam: float
    link: LinkRadiusResult
    boundary: BoundaryResult
    delta: DeltaResult
    minus_ray_sup: float
    settings: GeometrySettings

    @property
    def margin(self) -> float:
        return self.link.inf_estimate - max(self.boundary.sup_boundary, self.delta.sup_sampled)

    @property
    def a3_pass(self) -> bool:
        return self.margin >= self.settings.margin

    @property
    def lambda_ok(self) -> bool:
        return self.lam < self.constants.lambda_max or self.lam == 0.0

    def to_dict(self) -> dict:
        return {
            "constants": self.constants.to_dict(),
            "lambda": self.lam,
            "lambda_below_threshold": self.lambda_ok,
            "r_link": self.link.r_link,
            "sphere_inf_estimate": self.link.inf_estimate,
            "sphere_lower_target": self.link.lower_bound,
            "sphere_resample_min": self.link.resample_min,
            "radius_search": self.link.tested,
            "R_link": self.boundary.R_link,
            "boundary_sup_ball": self.boundary.sup_ball,
            "boundary_sup_sphere": self.boundary.sup_sphere,
            "R_search": self.boundary.tried,
            "delta": self.delta.delta,
            "delta_ball_sup": self.delta.sup_sampled,
            "minus_ray_sup": self.minus_ray_sup,
            "a3_margin": self.margin,
            "a3_pass": self.a3_pass,
            "sample_counts": {
                "multistarts": self.settings.n_starts,
                "descent_maxit": self.settings.descent_maxit,
                "sphere_resample": self.settings.resample,
                "delta_ball": self.settings.delta_samples,
                "minus_rays": self.settings.ray_samples,
            },
            "note": ("estimates are one-sided: sphere infima are upper bounds on the true infimum and "
                     "boundary suprema are lower bounds on the true supremum, so the check is heuristic; "
                     "R is verified for the solver's initial direction only"),
        }


def check_geometry(ctx: FunctionalContext, constants: Optional[GeometryConstants] = None,
                   settings: Optional[GeometrySettings] = None, u_plus=None) -> GeometryReport:
    st = settings or GeometrySettings()
    rng = np.random.default_rng(st.seed)
    if constants is None:
        constants = compute_constants(ctx, kappa_samples=st.kappa_samples, seed=st.seed)
    link = find_link_radius(ctx, st, rng)
    if u_plus is None:
        u_plus = np.zeros(len(ctx.split.eigvals))
        u_plus[ctx.split.n_minus] = 1.0
    bnd = find_R(ctx, u_plus, link.r_link, st, rng)
    dl = find_delta(ctx, link.r_link, link.inf_estimate, st, rng)
    ray = minus_ray_sup(ctx, st.ray_samples, rng=rng)
    return GeometryReport(constants, ctx.lam, link, bnd, dl, ray, st)
