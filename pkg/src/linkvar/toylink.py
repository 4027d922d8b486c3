"""Finite-dimensional model functionals where the linking quantities can be brute-forced.

J(x) = |x+|^2/2 - |x-|^2/2 - sum |x_i|^p / p + lam sum |x_i|^q / q on
R^{n_plus} x R^{n_minus}. The first n_plus coordinates span X+.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import RootFindFailure, ValidationError


@dataclass(frozen=True)
class ToyProblem:
    n_plus: int = 1
    n_minus: int = 1
    p: float = 4.0
    q: float = 3.0
    lam: float = 0.0

    def __post_init__(self):
        if not (1 <= self.n_plus <= 3 and 0 <= self.n_minus <= 3):
            raise ValidationError("toy dimensions are limited to 1..3 plus and 0..3 minus")
        if not 2 < self.q < self.p:
            raise ValidationError("need 2 < q < p")
        if self.lam < 0:
            raise ValidationError("lambda must be nonnegative")

    @property
    def dim(self) -> int:
        return self.n_plus + self.n_minus

    @property
    def signature(self) -> np.ndarray:
        return np.concatenate([np.ones(self.n_plus), -np.ones(self.n_minus)])

    def energy(self, X):
        X = np.asarray(X, dtype=float)
        a = np.abs(X)
        quad = 0.5 * np.sum(self.signature * X * X, axis=-1)
        return quad - np.sum(a ** self.p, axis=-1) / self.p + self.lam * np.sum(a ** self.q, axis=-1) / self.q

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        return self.signature * x - a ** (self.p - 2) * x + self.lam * a ** (self.q - 2) * x

    def hessian(self, x):
        a = np.abs(np.asarray(x, dtype=float))
        d = self.signature - (self.p - 1) * a ** (self.p - 2) + self.lam * (self.q - 1) * a ** (self.q - 2)
        return np.diag(d)

    def dJ(self, x, v) -> float:
        return float(self.gradient(x) @ np.asarray(v, dtype=float))

    def embed(self, u_plus, t, y):
        x = np.zeros(self.dim)
        x[: self.n_plus] = t * np.asarray(u_plus)
        x[self.n_plus:] = y
        return x


def sphere_grid(d: int, n: int, half: bool = False) -> np.ndarray:
    """Unit vectors on S^{d-1} from a hyperspherical angle grid with n+1 nodes per angle.

    With half=True only directions with nonnegative first coordinate are kept.
    Grids with n and 2n nodes are nested.
    """
    if d == 1:
        return np.array([[1.0]]) if half else np.array([[1.0], [-1.0]])
    if d == 2:
        th = np.linspace(-math.pi / 2, math.pi / 2, n + 1) if half else np.linspace(0.0, 2 * math.pi, n + 1)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    axes = [np.linspace(0.0, math.pi / 2 if half else math.pi, n + 1)]
    axes += [np.linspace(0.0, math.pi, n + 1) for _ in range(d - 3)]
    axes += [np.linspace(0.0, 2 * math.pi, n + 1)]
    ang = [a.ravel() for a in np.meshgrid(*axes, indexing="ij")]
    out = np.empty((ang[0].size, d))
    s = np.ones(ang[0].size)
    for j, a in enumerate(ang):
        out[:, j] = s * np.cos(a)
        s = s * np.sin(a)
    out[:, d - 1] = s
    return out


def _max_over(tp: ToyProblem, X_iter) -> tuple[float, np.ndarray]:
    best = (-math.inf, None)
    for X in X_iter:
        v = tp.energy(X)
        k = int(np.argmax(v))
        if v[k] > best[0]:
            best = (float(v[k]), X[k].copy())
    return best


def _m_points(tp: ToyProblem, e, R, n, chunk=200_000):
    dirs = sphere_grid(1 + tp.n_minus, n, half=True)
    radii = np.linspace(0.0, R, n + 1)
    Z = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 1 + tp.n_minus)
    for s in range(0, len(Z), chunk):
        z = Z[s:s + chunk]
        X = np.zeros((len(z), tp.dim))
        X[:, : tp.n_plus] = z[:, :1] * e
        X[:, tp.n_plus:] = z[:, 1:]
        yield X


def toy_c_upper(tp: ToyProblem, u_plus, R: float = 4.0, grid_density: int = 64, polish: bool = True) -> float:
    """sup of J over M(u_plus) = {t e + v- : t >= 0, |t e + v-| <= R} (an upper bound for c)."""
    if grid_density < 64:
        raise ValidationError("grid density must be at least 64 per axis")
    e = np.asarray(u_plus, dtype=float)
    if e.shape != (tp.n_plus,) or not np.any(e):
        raise ValidationError("u_plus must be a nonzero vector in X+")
    e = e / np.linalg.norm(e)
    val, x = _max_over(tp, _m_points(tp, e, R, grid_density))
    if not polish:
        return val
    z0 = np.concatenate([[float(x[: tp.n_plus] @ e)], x[tp.n_plus:]])

    def neg(z):
        w = tp.embed(e, z[0], z[1:])
        g = tp.gradient(w)
        return -float(tp.energy(w)), -np.concatenate([[g[: tp.n_plus] @ e], g[tp.n_plus:]])

    cons = [{"type": "ineq", "fun": lambda z: R * R - z @ z, "jac": lambda z: -2 * z}]
    bounds = [(0.0, None)] + [(None, None)] * tp.n_minus
    res = minimize(neg, z0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"ftol": 1e-15, "maxiter": 500})
    if res.success and R * R - res.x @ res.x >= -1e-12 and res.x[0] >= 0:
        val = max(val, -float(res.fun))
    return val


def toy_sphere_inf(tp: ToyProblem, r: float, grid_density: int = 64, polish: bool = True) -> float:
    """inf of J over the sphere of radius r in X+ (grid plus local polish)."""
    D = r * sphere_grid(tp.n_plus, grid_density)
    X = np.zeros((len(D), tp.dim))
    X[:, : tp.n_plus] = D
    v = tp.energy(X)
    k = int(np.argmin(v))
    val = float(v[k])
    if polish and tp.n_plus > 1:
        cons = [{"type": "eq", "fun": lambda y: y @ y - r * r, "jac": lambda y: 2 * y}]
        f = lambda y: (float(tp.energy(np.concatenate([y, np.zeros(tp.n_minus)]))),
                       tp.gradient(np.concatenate([y, np.zeros(tp.n_minus)]))[: tp.n_plus])
        res = minimize(f, D[k], jac=True, method="SLSQP", constraints=cons, options={"ftol": 1e-15})
        if res.success and abs(res.x @ res.x - r * r) < 1e-10:
            val = min(val, float(res.fun))
    return val


def toy_link_radius(tp: ToyProblem, grid_density: int = 64, steps: int = 20) -> tuple[float, float]:
    """Largest r in {2^(-j/2)} with inf over the r-sphere >= r^2/4; returns (r, inf)."""
    for j in range(steps):
        r = 2.0 ** (-j / 2)
        b = toy_sphere_inf(tp, r, grid_density)
        if b >= r * r / 4:
            return r, b
    raise ValidationError("no admissible toy link radius found")


@dataclass
class NehariResult:
    infimum: float
    best_point: Optional[np.ndarray]
    points: list = field(default_factory=list)
    n_failed: int = 0
    max_stationarity: float = 0.0


def _inner_argmax(tp: ToyProblem, e, R=50.0):
    """Local maximizer of z -> J(t e + y) started from the ray maximum at y = 0."""
    ray = minimize_scalar(lambda t: -float(tp.energy(tp.embed(e, t, np.zeros(tp.n_minus)))),
                          bounds=(0.0, R), method="bounded", options={"xatol": 1e-12})

    def neg(z):
        w = tp.embed(e, z[0], z[1:])
        g = tp.gradient(w)
        return -float(tp.energy(w)), -np.concatenate([[g[: tp.n_plus] @ e], g[tp.n_plus:]])

    z0 = np.concatenate([[ray.x], np.zeros(tp.n_minus)])
    res = minimize(neg, z0, jac=True, method="L-BFGS-B", bounds=[(0.0, None)] + [(None, None)] * tp.n_minus,
                   options={"gtol": 1e-12, "ftol": 1e-15})
    return res.x


def _nehari_system(tp: ToyProblem, e, z):
    n = tp.n_plus
    w = tp.embed(e, z[0], z[1:])
    G, H = tp.gradient(w), tp.hessian(w)
    dw = np.zeros((tp.dim, 1 + tp.n_minus))
    dw[:n, 0] = e
    dw[n:, 1:] = np.eye(tp.n_minus)
    Hdw = H @ dw
    F = np.concatenate([[G @ w], G[n:]])
    Jm = np.vstack([w @ Hdw + G @ dw, Hdw[n:]])
    return F, Jm, w


def nehari_point(tp: ToyProblem, e, tol: float = 1e-12, maxit: int = 100) -> np.ndarray:
    """Damped Newton for dJ(w)(w) = 0, dJ(w)(e_i-) = 0 with w = t e + y, t > 0."""
    z = _inner_argmax(tp, e)
    for _ in range(maxit):
        F, Jm, w = _nehari_system(tp, e, z)
        nF = np.linalg.norm(F)
        if nF < tol and z[0] > 0:
            return w
        try:
            step = np.linalg.solve(Jm, -F)
        except np.linalg.LinAlgError as exc:
            raise RootFindFailure("singular Nehari Jacobian") from exc
        a = 1.0
        while a > 1e-10:
            zt = z + a * step
            if zt[0] > 0 and np.linalg.norm(_nehari_system(tp, e, zt)[0]) < nF:
                break
            a *= 0.5
        else:
            raise RootFindFailure("damped Newton made no progress")
        z = zt
    raise RootFindFailure("Nehari root not reached")


def toy_nehari_infimum(tp: ToyProblem, n_directions: int = 64, rng=None) -> NehariResult:
    """min of J over Nehari-Pankov points found along random X+ directions."""
    rng = np.random.default_rng(rng)
    dirs = rng.standard_normal((n_directions, tp.n_plus))
    # coordinate directions first so the small toys hit their symmetric minimizers
    dirs[: min(tp.n_plus, n_directions)] = np.eye(tp.n_plus)[: min(tp.n_plus, n_directions)]
    out = NehariResult(math.inf, None)
    for d in dirs:
        e = d / np.linalg.norm(d)
        try:
            w = nehari_point(tp, e)
        except RootFindFailure:
            out.n_failed += 1
            continue
        out.points.append(w)
        F, _, _ = _nehari_system(tp, e, np.concatenate([[w[: tp.n_plus] @ e], w[tp.n_plus:]]))
        out.max_stationarity = max(out.max_stationarity, float(np.max(np.abs(F))))
        v = float(tp.energy(w))
        if v < out.infimum:
            out.infimum, out.best_point = v, w
    return out


@dataclass
class A4Report:
    samples: int
    violations: int
    max_excess: float
    max_identity_residual: float

    def to_dict(self) -> dict:
        return asdict(self)


def _tv_samples(tp: ToyProblem, n, rng, t_max=3.0, v_scale=2.0):
    t = rng.uniform(0.0, t_max, n)
    V = np.zeros((n, tp.dim))
    V[:, tp.n_plus:] = v_scale * rng.standard_normal((n, tp.n_minus))
    return t, V


def toy_check_A4(tp: ToyProblem, points, samples: int = 10_000, rng=None, tol: float = 1e-10) -> A4Report:
    """J(u) >= J(t u + v) on Nehari-Pankov points u, plus the vanishing of dJ(u)((t^2-1)/2 u + t v)."""
    rng = np.random.default_rng(rng)
    viol, excess, ident = 0, -math.inf, 0.0
    counts = np.diff(np.linspace(0, samples, len(points) + 1).astype(int))
    total = 0
    for u, per in zip(points, counts):
        if per == 0:
            continue
        t, V = _tv_samples(tp, per, rng)
        X = t[:, None] * u + V
        ex = tp.energy(X) - tp.energy(u)
        viol += int(np.sum(ex > tol))
        excess = max(excess, float(ex.max()))
        g = tp.gradient(u)
        pair = ((t * t - 1) / 2) * float(g @ u) + t * (V @ g)
        ident = max(ident, float(np.max(np.abs(pair))))
        total += int(per)
    return A4Report(total, viol, excess, ident)


def toy_key_inequality(tp: ToyProblem, samples: int = 10_000, rng=None, tol: float = 1e-10) -> A4Report:
    """Count violations of J(u) >= J(t u + v) - dJ(u)((t^2-1)/2 u + t v) for random u, t >= 0, v in X-."""
    rng = np.random.default_rng(rng)
    U = 1.5 * rng.standard_normal((samples, tp.dim))
    t, V = _tv_samples(tp, samples, rng)
    X = t[:, None] * U + V
    G = np.array([tp.gradient(u) for u in U])
    pair = ((t * t - 1) / 2) * np.sum(G * U, axis=1) + t * np.sum(G * V, axis=1)
    ex = tp.energy(X) - pair - tp.energy(U)
    scale = 1.0 + np.abs(tp.energy(X)) + np.abs(pair)
    return A4Report(samples, int(np.sum(ex > tol * scale)), float(np.max(ex / scale)), 0.0)


@dataclass
class ChainReport:
    n_plus: int
    n_minus: int
    lam: float
    r: float
    inf_sphere: float
    c_upper: float
    nehari_inf: float
    nehari_failed: int
    chain_holds: bool
    a4: dict
    key_inequality: dict
    note: str = "c_upper is an upper bound on c from the identity homotopy, never c itself"

    def to_dict(self) -> dict:
        return asdict(self)


def toy_chain(tp: ToyProblem, n_directions: int = 64, samples: int = 10_000, grid_density: int = 64,
              R: float = 4.0, tol: float = 1e-6, rng=None) -> ChainReport:
    """Brute-force inf over S_r+ <= c_upper <= inf over N (lambda = 0 toys)."""
    rng = np.random.default_rng(rng)
    r, b = toy_link_radius(tp, grid_density)
    neh = toy_nehari_infimum(tp, n_directions, rng)
    if neh.best_point is None:
        raise RootFindFailure("no Nehari-Pankov point found")
    e = neh.best_point[: tp.n_plus]
    cu = toy_c_upper(tp, e, R, grid_density)
    a4 = toy_check_A4(tp, neh.points, samples, rng)
    ki = toy_key_inequality(tp, samples, rng)
    ok = b <= cu + tol and cu <= neh.infimum + tol
    return ChainReport(tp.n_plus, tp.n_minus, tp.lam, r, b, cu, neh.infimum, neh.n_failed, bool(ok),
                       a4.to_dict(), ki.to_dict())
