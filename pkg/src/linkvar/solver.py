"""Linking minimax search for nontrivial critical points of J.

phi(e) = max { J(t e + v-) : t >= 0, v- in X-, ||t e + v-|| <= R } is minimized
over unit directions e in X+. The inner maximization runs in the (1 + n_minus)
dimensional slice with Newton ascent on the slice Hessian (falling back to the
X-gradient when the slice Hessian is not negative definite), the outer descent
is a Riemannian step on the X+ unit sphere along the envelope gradient, and the
result is polished by damped Gauss-Newton on the strong residual A u - f~(u).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .errors import (CollapseToZero, InnerDivergence, LineSearchStall, MaxIterExceeded,
                     ValidationError)
from .functional import FunctionalContext, dJ, pde_residual, pde_residual_scale
from .grid import StateVector, quadratic_form_parts
from .spectral import tau_norm_coeffs

log = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    tol_solve: float = 1e-8
    tol_envelope: float = 1e-4
    max_outer: int = 2000
    max_refine: int = 200
    inner_tol: float = 1e-9
    inner_maxit: int = 200
    inner_starts: int = 4
    armijo: float = 1e-4
    direction: str = "cg"  # "cg" (Polak-Ribiere+, restarted) or "gradient"
    max_R_doublings: int = 16
    seed: int = 42


@dataclass
class InnerResult:
    t: float
    y: np.ndarray  # X- part in X-orthonormal coordinates
    value: float
    x: np.ndarray
    u: np.ndarray
    on_boundary: bool
    outward: bool
    iterations: int
    proj_grad_norm: float


@dataclass
class OuterState:
    e: np.ndarray
    inner: InnerResult
    envelope_grad: np.ndarray
    direction: Optional[np.ndarray] = None
    step: float = 1.0


@dataclass
class SolveReport:
    u_star: StateVector
    J_value: float
    residual_X: float
    cerami_residual: float
    tau_norm_value: float
    pde_residual: float
    pde_residual_rel: float
    norm_X: float
    iterations: dict
    identity_checks: dict
    c_upper: float
    delta: float
    inf_sphere: Optional[float]
    R: float
    lam: float
    phi_history: list = field(default_factory=list)
    accepted: bool = False
    checks: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "J_value": self.J_value,
            "residual_X": self.residual_X,
            "cerami_residual": self.cerami_residual,
            "tau_norm": self.tau_norm_value,
            "norm_X": self.norm_X,
            "pde_residual": self.pde_residual,
            "pde_residual_rel": self.pde_residual_rel,
            "c_upper": self.c_upper,
            "c_upper_note": "upper bound on the minimax level from the identity homotopy, not c itself",
            "inf_sphere_estimate": self.inf_sphere,
            "delta": self.delta,
            "R": self.R,
            "iterations": self.iterations,
            "identity_checks": self.identity_checks,
            "checks": self.checks,
            "accepted": self.accepted,
            "residual_norm_convention": "X-dual norm ||gradX J(u)||_X",
            "phi_history_len": len(self.phi_history),
            "phi_first_last": [self.phi_history[0], self.phi_history[-1]] if self.phi_history else [],
        }


class MinimaxSolver:
    def __init__(self, ctx: FunctionalContext, config: Optional[SolverConfig] = None):
        self.ctx = ctx
        self.cfg = config or SolverConfig()
        sp_ = ctx.split
        self.m = sp_.n_minus
        self.n = len(sp_.eigvals)
        # X-normalized negative modes, the fixed part of every slice basis
        self.Um = np.stack([sp_.mode(k) / ctx.sqrt_abs[k] for k in range(self.m)]).reshape(self.m, -1)
        self.w = ctx.grid.weights.ravel()
        self.rng = np.random.default_rng(self.cfg.seed)
        self.inner_iterations = 0

    # ------------------------------------------------------------ helpers
    def lowest_positive_direction(self) -> np.ndarray:
        e = np.zeros(self.n)
        e[self.m] = 1.0
        return e

    def as_x(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape == self.ctx.grid.shape:
            return self.ctx.x_from_grid(u)
        return u

    def point(self, e, t, y):
        x = t * e
        x[: self.m] += y
        return x

    def _slice(self, e):
        Ue = self.ctx.grid_from_x(e).ravel()
        return np.vstack([Ue[None, :], self.Um])

    # ------------------------------------------------------------ inner
    def inner_maximize(self, u_plus, R: float, start=None, n_starts: Optional[int] = None,
                       value_bound: Optional[float] = None) -> InnerResult:
        ctx, m = self.ctx, self.m
        e = self.as_x(u_plus).copy()
        if np.any(e[: m] != 0):
            raise ValidationError("u_plus must lie in X+")
        ne = np.linalg.norm(e)
        if abs(ne - 1.0) > 1e-10:
            raise ValidationError(f"u_plus must be X-normalized (norm {ne:.3e})")
        Q = self._slice(e)
        w = self.w
        sgn = np.concatenate([[1.0], -np.ones(m)])
        shape = ctx.grid.shape

        def value(z):
            u = z @ Q
            return 0.5 * float(np.sum(sgn * z * z)) - float(np.sum(w * ctx.nonlinear_density(u))), u

        def grad(z, u):
            return sgn * z - Q @ (w * ctx.ftilde(u))

        def proj(z):
            z = z.copy()
            z[0] = max(z[0], 0.0)
            nz = np.linalg.norm(z)
            if nz > R:
                z *= R / nz
            return z

        def solve_from(z):
            z = proj(z)
            val, u = value(z)
            pg_norm = np.inf
            for it in range(self.cfg.inner_maxit):
                gr = grad(z, u)
                pg = proj(z + gr) - z
                pg_norm = float(np.linalg.norm(pg))
                if pg_norm < self.cfg.inner_tol:
                    break
                H = np.diag(sgn) - (Q * (w * ctx.dftilde(u))) @ Q.T
                try:
                    np.linalg.cholesky(-H)
                    d = np.linalg.solve(-H, gr)
                except np.linalg.LinAlgError:
                    d = gr
                a = 1.0
                # below this gain the value test only sees rounding, so take the full step
                noise = 1e-13 * max(1.0, abs(val))
                full_step = abs(float(gr @ d)) < noise
                while True:
                    zt = proj(z + a * d)
                    vt, ut = value(zt)
                    if full_step or vt >= val + self.cfg.armijo * float(gr @ (zt - z)) or a < 1e-14:
                        break
                    a *= 0.5
                if vt < val - (noise if full_step else 0.0):
                    break
                z, val, u = zt, vt, ut
            self.inner_iterations += it + 1
            return z, val, u, it + 1, pg_norm

        starts = []
        if start is not None:
            starts.append(np.concatenate([[start[0]], start[1]]))
        if not starts or (n_starts or 1) > 1:
            res = minimize_scalar(lambda t: -value(np.concatenate([[t], np.zeros(m)]))[0],
                                  bounds=(0.0, R), method="bounded", options={"xatol": 1e-10 * R})
            base = np.concatenate([[res.x], np.zeros(m)])
            starts.append(base)
            for _ in range((n_starts or self.cfg.inner_starts) - len(starts)):
                pert = np.concatenate([[0.0], self.rng.standard_normal(m)])
                pert *= 0.25 * max(res.x, 1e-3) / max(np.linalg.norm(pert), 1e-300)
                starts.append(base + pert)
        best = None
        for z0 in starts:
            out = solve_from(z0)
            if best is None or out[1] > best[1]:
                best = out
        z, val, u, its, pgn = best
        if value_bound is not None and val > value_bound:
            raise InnerDivergence(f"inner value {val:g} exceeds bound {value_bound:g}; enlarge R")
        on_boundary = abs(np.linalg.norm(z) - R) <= 1e-9 * R
        gr = grad(z, u)
        outward = bool(on_boundary and float(gr @ z) > 1e-10 * max(1.0, abs(val)))
        return InnerResult(float(z[0]), z[1:].copy(), float(val), self.point(e, z[0], z[1:]),
                           u.reshape(shape), bool(on_boundary), outward, its, pgn)

    # ------------------------------------------------------------ outer
    def envelope_gradient(self, e, inner: InnerResult) -> np.ndarray:
        g = self.ctx.gradient_x(inner.x, inner.u)
        g[: self.m] = 0.0
        g -= float(g @ e) * e
        return inner.t * g

    def outer_state(self, e, R, start=None) -> OuterState:
        inner = self.inner_maximize(e, R, start=start, n_starts=None if start is None else 1)
        return OuterState(np.asarray(e, dtype=float), inner, self.envelope_gradient(e, inner))

    def outer_step(self, state: OuterState, R: float, prev: Optional[OuterState] = None) -> OuterState:
        """One Riemannian descent step on phi over the X+ unit sphere with Armijo control."""
        G = state.envelope_grad
        gn = float(np.linalg.norm(G))
        if gn < self.cfg.tol_envelope * 1e-3:
            return state
        d = G
        if self.cfg.direction == "cg" and prev is not None and prev.direction is not None:
            Gp = prev.envelope_grad
            beta = max(0.0, float(G @ (G - Gp)) / float(Gp @ Gp))
            d = G + beta * prev.direction
            d = d - float(d @ state.e) * state.e
            if float(d @ G) <= 1e-12 * gn * np.linalg.norm(d):
                d = G
        slope = float(G @ d)
        a = 2.0 * state.step if prev is not None else 1.0 / max(gn, 1e-300)
        phi0 = state.inner.value
        warm = (state.inner.t, state.inner.y)
        for _ in range(60):
            en = state.e - a * d
            en /= np.linalg.norm(en)
            inner = self.inner_maximize(en, R, start=warm, n_starts=1)
            if inner.value <= phi0 - self.cfg.armijo * a * slope:
                new = OuterState(en, inner, self.envelope_gradient(en, inner), d, a)
                return new
            a *= 0.5
        raise LineSearchStall(f"no Armijo decrease along the envelope direction (|G|={gn:.3e})")

    def minimax(self, R: float, e0=None) -> tuple[OuterState, float, list]:
        e = self.lowest_positive_direction() if e0 is None else self.as_x(e0)
        e = e / np.linalg.norm(e)
        state = self._stable_state(e, R)
        R = state[1]
        state = state[0]
        history = [state.inner.value]
        prev = None
        for k in range(self.cfg.max_outer):
            gn = float(np.linalg.norm(state.envelope_grad))
            if gn < self.cfg.tol_envelope:
                return state, R, history
            try:
                new = self.outer_step(state, R, prev)
            except LineSearchStall:
                if prev is None:
                    raise
                prev = None  # restart from steepest descent
                state.direction = None
                continue
            if new.inner.outward:
                R *= 2.0
                new, R = self._stable_state(new.e, R)
                prev = None
            else:
                prev = state
            state = new
            history.append(state.inner.value)
        if np.linalg.norm(state.envelope_grad) < self.cfg.tol_envelope:
            return state, R, history
        raise MaxIterExceeded(f"outer loop did not reach envelope tolerance in {self.cfg.max_outer} steps")

    def _stable_state(self, e, R):
        for _ in range(self.cfg.max_R_doublings):
            st = self.outer_state(e, R)
            if not st.inner.outward:
                return st, R
            R *= 2.0
        raise InnerDivergence("inner maximizer keeps touching the ball boundary")

    # ------------------------------------------------------------ refine
    def _residual_metrics(self, u):
        ctx = self.ctx
        x = ctx.x_from_grid(u)
        g = ctx.gradient_x(x, u)
        norm = float(np.linalg.norm(x))
        res = float(np.linalg.norm(g))
        return x, res, (1.0 + norm) * res, norm

    def refine(self, u0, delta: float = 0.0, c_upper: Optional[float] = None,
               inf_sphere: Optional[float] = None, R: float = math.nan) -> SolveReport:
        ctx, cfg = self.ctx, self.cfg
        u = np.array(u0, dtype=float)
        op = ctx.op
        use_grid = op is not None and ctx.split.complete
        w = self.w
        its = 0
        x, res, cer, norm = self._residual_metrics(u)
        while cer >= cfg.tol_solve:
            if its >= cfg.max_refine:
                raise MaxIterExceeded(f"refinement stalled at cerami residual {cer:.3e}")
            its += 1
            if use_grid:
                r = op.matrix @ u.ravel() - ctx.ftilde(u).ravel()
                Jm = (op.matrix - sp.diags(ctx.dftilde(u).ravel())).tocsc()
                step = spla.spsolve(Jm, -r).reshape(u.shape)
                merit = lambda v: float(np.sum(w * (op.matrix @ v.ravel() - ctx.ftilde(v).ravel()) ** 2))
            else:
                sp_ = ctx.split
                c = sp_.analyze(u)
                V = np.stack([sp_.mode(i) for i in range(len(c))]).reshape(len(c), -1)
                r = sp_.eigvals * c - sp_.analyze(ctx.ftilde(u))
                Jm = np.diag(sp_.eigvals) - (V * (w * ctx.dftilde(u).ravel())) @ V.T
                step = sp_.synthesize(np.linalg.solve(Jm, -r))
                merit = lambda v: float(np.sum((sp_.eigvals * sp_.analyze(v) - sp_.analyze(ctx.ftilde(v))) ** 2))
            m0 = merit(u)
            a = 1.0
            while a > 1e-8:
                trial = u + a * step
                if merit(trial) < m0 or a == 1.0 and not np.isfinite(m0):
                    break
                a *= 0.5
            if a <= 1e-8:
                raise MaxIterExceeded(f"damped Gauss-Newton made no progress (cerami {cer:.3e})")
            u = trial
            x, res, cer, norm = self._residual_metrics(u)
        c = ctx.split.analyze(u)
        tau = tau_norm_coeffs(ctx.split, c)
        if tau < delta / 2:
            raise CollapseToZero(f"|||u*||| = {tau:.3e} < delta/2 = {delta / 2:.3e}: trivial limit")
        Jval = ctx.energy_x(x, u)
        pres = pde_residual(ctx, u)
        scale = pde_residual_scale(ctx, u)
        # Nehari-Pankov membership: J'(u)(u) = 0 and J'(u)(e_k) = 0 on the X- basis
        gx = ctx.gradient_x(x, u)
        dJ_uu = float(gx @ x)
        dJ_ek = gx[: self.m]
        qf = quadratic_form_parts(ctx.spec, ctx.grid, u)["total"]
        quad_spec = float(np.sum(ctx.split.eigvals * c * c))
        identity = {
            "quadratic_form_identity_gap": abs(qf - quad_spec) / max(abs(qf), 1e-300) if ctx.split.complete else None,
            "dJ_u_u": dJ_uu,
            "max_abs_dJ_u_ek": float(np.max(np.abs(dJ_ek))) if self.m else 0.0,
            "dJ_u_u_direct": dJ(ctx, u, u),
        }
        checks = {
            "cerami_below_tol": cer < cfg.tol_solve,
            "tau_at_least_half_delta": tau >= delta / 2,
            "pde_residual_rel_below_1e-6": (pres / scale if scale else 0.0) < 1e-6,
        }
        if c_upper is not None:
            checks["J_le_c_upper"] = Jval <= c_upper + 1e-8 * max(1.0, abs(c_upper))
        if inf_sphere is not None:
            checks["J_ge_inf_sphere"] = Jval >= inf_sphere - 1e-8 * max(1.0, abs(inf_sphere))
        rep = SolveReport(
            u_star=StateVector(u, c), J_value=Jval, residual_X=res, cerami_residual=cer,
            tau_norm_value=tau, pde_residual=pres, pde_residual_rel=pres / scale if scale else 0.0,
            norm_X=norm, iterations={"refine": its}, identity_checks=identity,
            c_upper=c_upper if c_upper is not None else math.nan, delta=delta, inf_sphere=inf_sphere,
            R=R, lam=ctx.lam, checks=checks,
        )
        rep.accepted = all(checks.values())
        return rep

    # ------------------------------------------------------------ pipeline
    def solve(self, R: float, delta: float, inf_sphere: Optional[float] = None, e0=None) -> SolveReport:
        inner_before = self.inner_iterations
        state, R, history = self.minimax(R, e0)
        if np.linalg.norm(self.ctx.gradient_x(state.inner.x, state.inner.u)) >= 1e-2 * max(1.0, np.linalg.norm(state.inner.x)):
            log.warning("minimax output has a large residual; refinement may not converge")
        rep = self.refine(state.inner.u, delta=delta, inf_sphere=inf_sphere, R=R)
        # identity homotopy bound: c <= max over M(u+) of J, u+ the direction of u*
        xs = self.ctx.x_from_grid(rep.u_star.values)
        xp = xs.copy()
        xp[: self.m] = 0.0
        e = xp / np.linalg.norm(xp)
        cu = self.inner_maximize(e, R, start=(float(np.linalg.norm(xp)), xs[: self.m]), n_starts=self.cfg.inner_starts)
        rep.c_upper = cu.value
        tol = 1e-8 * max(1.0, abs(cu.value))
        rep.checks["J_le_c_upper"] = rep.J_value <= cu.value + tol
        if inf_sphere is not None:
            rep.checks["J_ge_inf_sphere"] = rep.J_value >= inf_sphere - tol
        rep.checks["J_positive"] = rep.J_value > 0
        rep.checks["phi_monotone"] = bool(np.all(np.diff(history) <= 1e-12 * max(1.0, abs(history[0]))))
        rep.iterations.update({"outer": len(history) - 1, "inner_total": self.inner_iterations - inner_before})
        rep.phi_history = history
        rep.R = R
        rep.accepted = all(rep.checks.values())
        return rep


# module-level API ------------------------------------------------------------


def inner_maximize(ctx: FunctionalContext, u_plus, R: float, config: Optional[SolverConfig] = None, **kw):
    return MinimaxSolver(ctx, config).inner_maximize(u_plus, R, **kw)


def refine(ctx: FunctionalContext, u0, delta: float = 0.0, config: Optional[SolverConfig] = None, **kw):
    return MinimaxSolver(ctx, config).refine(u0, delta=delta, **kw)


def solve(ctx: FunctionalContext, R: float, delta: float, inf_sphere: Optional[float] = None,
          config: Optional[SolverConfig] = None) -> SolveReport:
    return MinimaxSolver(ctx, config).solve(R, delta, inf_sphere)
