"""Energy functional J(u) = ||u+||^2/2 - ||u-||^2/2 - sum w F(u) + lam sum w G(u).

Internally the solver works in X-orthonormal coordinates x_i = sqrt|lam_i| c_i,
where c_i = <u, v_i>_w. There the quadratic part is sum sign(lam_i) x_i^2 / 2
and the X-gradient is the ordinary gradient in x.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nonlinearity as nl
from .errors import LambdaNotZero, ValidationError
from .grid import Grid, ProblemSpec, SymmetricOperator
from .spectral import SpectralSplit


@dataclass(eq=False)
class FunctionalContext:
    grid: Grid
    split: SpectralSplit
    spec: ProblemSpec
    op: Optional[SymmetricOperator] = None
    quadratic_only: bool = False  # test hook: f = g = 0
    evaluations: int = field(default=0, init=False)

    def __post_init__(self):
        if self.split.shape != self.grid.shape:
            raise ValidationError("spectral split does not match the grid")
        lam = self.split.eigvals
        self.sign = np.sign(lam)
        self.sqrt_abs = np.sqrt(np.abs(lam))
        self.w = self.grid.weights

    @property
    def lam(self) -> float:
        return self.spec.lam

    def with_lambda(self, lam: float) -> "FunctionalContext":
        return FunctionalContext(self.grid, self.split, self.spec.with_lambda(lam), self.op, self.quadratic_only)

    # -- pointwise nonlinear pieces
    def nonlinear_density(self, u):
        """F(u) - lam G(u)."""
        if self.quadratic_only:
            return np.zeros_like(u)
        return nl.eval_F_lamG(self.spec.nonlinearity, self.lam, u)

    def ftilde(self, u):
        """f(u) - lam g(u)."""
        if self.quadratic_only:
            return np.zeros_like(u)
        return nl.eval_f_lamg(self.spec.nonlinearity, self.lam, u)

    def dftilde(self, u):
        if self.quadratic_only:
            return np.zeros_like(u)
        s = self.spec.nonlinearity
        out = nl.eval_df(s, u)
        if self.lam:
            out = out - self.lam * nl.eval_dg(s, u)
        return out

    # -- x-coordinate API used by the solvers
    def grid_from_x(self, x):
        return self.split.synthesize(x / self.sqrt_abs)

    def x_from_grid(self, u):
        return self.sqrt_abs * self.split.resolved_coeffs(u)

    def energy_x(self, x, u=None):
        if u is None:
            u = self.grid_from_x(x)
        self.evaluations += 1
        quad = 0.5 * float(np.sum(self.sign * x * x))
        return quad - float(np.sum(self.w * self.nonlinear_density(u)))

    def gradient_x(self, x, u=None):
        """X-gradient of J in x-coordinates (equals gradX in the X-orthonormal basis)."""
        if u is None:
            u = self.grid_from_x(x)
        n = self.split.analyze(self.ftilde(u))
        return self.sign * x - n / self.sqrt_abs

    def energy_and_gradient_x(self, x):
        u = self.grid_from_x(x)
        return self.energy_x(x, u), self.gradient_x(x, u), u


# ---------------------------------------------------------------- public operations


def J(ctx: FunctionalContext, u) -> float:
    c = ctx.split.resolved_coeffs(u)
    lam = ctx.split.eigvals
    quad = 0.5 * float(np.sum(lam * c * c))
    return quad - float(np.sum(ctx.w * ctx.nonlinear_density(np.asarray(u))))


def dJ(ctx: FunctionalContext, u, v) -> float:
    """First variation J'(u)(v) = <u+,v+>_X - <u-,v->_X - sum w f~(u) v."""
    if np.shape(u) != np.shape(v):
        raise ValidationError("u and v must have the same shape")
    cu, cv = ctx.split.analyze(u), ctx.split.analyze(v)
    quad = float(np.sum(ctx.split.eigvals * cu * cv))
    return quad - float(np.sum(ctx.w * ctx.ftilde(np.asarray(u)) * v))


def gradX(ctx: FunctionalContext, u) -> np.ndarray:
    """Riesz representative of J'(u) in the X inner product (grid values)."""
    c = ctx.split.resolved_coeffs(u)
    n = ctx.split.analyze(ctx.ftilde(np.asarray(u)))
    return ctx.split.synthesize((ctx.split.eigvals * c - n) / np.abs(ctx.split.eigvals))


def inner_X(ctx: FunctionalContext, u, v) -> float:
    cu, cv = ctx.split.analyze(u), ctx.split.analyze(v)
    return float(np.sum(np.abs(ctx.split.eigvals) * cu * cv))


def dual_norm(ctx: FunctionalContext, u) -> float:
    """||J'(u)||_{X*} = ||gradX(u)||_X."""
    x = ctx.x_from_grid(u)
    return float(np.linalg.norm(ctx.gradient_x(x)))


def pde_residual(ctx: FunctionalContext, u) -> float:
    """L2w norm of A u - f(u) + lam g(u) on the grid."""
    u = np.asarray(u)
    if ctx.op is not None:
        Au = ctx.op.apply(u)
    else:
        Au = ctx.split.synthesize(ctx.split.eigvals * ctx.split.analyze(u))
    r = Au - ctx.ftilde(u)
    return float(np.sqrt(np.sum(ctx.w * r * r)))


def pde_residual_scale(ctx: FunctionalContext, u) -> float:
    """||A u||_2 + ||f~(u)||_2, the yardstick for relative residuals."""
    u = np.asarray(u)
    Au = ctx.op.apply(u) if ctx.op is not None else ctx.split.synthesize(ctx.split.eigvals * ctx.split.analyze(u))
    fu = ctx.ftilde(u)
    return float(np.sqrt(np.sum(ctx.w * Au * Au)) + np.sqrt(np.sum(ctx.w * fu * fu)))


def key_inequality_gap(ctx: FunctionalContext, u, t: float, v) -> float:
    """J(u) - J(tu + v) + J'(u)((t^2 - 1)/2 u + t v); nonnegative when lam = 0."""
    if ctx.lam != 0:
        raise LambdaNotZero("the inequality is only asserted for lambda = 0")
    if t < 0:
        raise ValidationError("t must be nonnegative")
    u, v = np.asarray(u), np.asarray(v)
    return J(ctx, u) - J(ctx, t * u + v) + dJ(ctx, u, 0.5 * (t * t - 1.0) * u + t * v)
