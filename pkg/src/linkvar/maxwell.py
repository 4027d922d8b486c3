"""Bridge from the scalar profile u(r, z) to the azimuthal field E = (u/r)(-x2, x1, 0).

Energies use the reduced identity |curl E|^2 = |grad u|^2 + u^2/r^2 on the
(r, z) grid, so E(E) and J(u) share one quadrature. The 3D lattices exist for
the divergence check and for export.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import NotMaxwellCase, ValidationError
from .functional import FunctionalContext, J
from .grid import Grid, ProblemSpec, quadratic_form_parts


DEFAULT_SPACING = 0.04


@dataclass
class VectorField3:
    """Cartesian components E[0..2] sampled at lattice points X[0..2] (same shapes)."""
    X: np.ndarray
    E: np.ndarray
    spacing: Optional[float] = None  # set for uniform Cartesian lattices
    r_min: float = 0.0  # divergence mask: stay away from the axis
    omega: float = 1.0

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.E ** 2, axis=0))


def _require_maxwell(g: Grid, spec: Optional[ProblemSpec]):
    if g.K != 2 or (spec is not None and not spec.is_maxwell):
        raise NotMaxwellCase("the field ansatz needs N=3, K=2, a=1")


def profile_spline(g: Grid, u, degree: int = 5) -> RectBivariateSpline:
    """Smooth interpolant of u over the cell centers (C^4 for degree 5)."""
    return RectBivariateSpline(g.r, g.z, np.asarray(u, dtype=float), kx=degree, ky=degree)


def reconstruct_E(g: Grid, u, spec: Optional[ProblemSpec] = None, h: Optional[float] = None,
                  n_phi: int = 16, box_frac: float = 0.4, r_min: float = 0.5, omega: float = 1.0) -> VectorField3:
    """Sample E on a 3D lattice.

    With h=None the lattice is the (r, z) grid rotated through n_phi azimuths, and
    u is used at the nodes. With spacing h the lattice is Cartesian over
    [-box_frac Rmax, box_frac Rmax]^2 x [-box_frac Zhalf, box_frac Zhalf] and u is
    interpolated by a smooth tensor spline.
    """
    _require_maxwell(g, spec)
    u = np.asarray(u, dtype=float)
    if u.shape != g.shape:
        raise ValidationError("u does not match the grid")
    if h is None:
        phi = np.linspace(0.0, 2 * math.pi, n_phi, endpoint=False)
        R, P, Z = np.meshgrid(g.r, phi, g.z, indexing="ij")
        X = np.stack([R * np.cos(P), R * np.sin(P), Z])
        chi = (u / g.r[:, None])[:, None, :]
        E = np.stack([-X[1] * chi, X[0] * chi, np.zeros_like(X[0])])
        return VectorField3(X, E, None, 0.0, omega)
    L, Lz = box_frac * g.Rmax, box_frac * g.Zhalf
    n = int(round(2 * L / h)) + 1
    nz = int(round(2 * Lz / h)) + 1
    x = np.linspace(-L, L, n)
    z = np.linspace(-Lz, Lz, nz)
    X = np.stack(np.meshgrid(x, x, z, indexing="ij"))
    r = np.hypot(X[0], X[1])
    s = profile_spline(g, u).ev(r.ravel(), X[2].ravel()).reshape(r.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        chi = np.where(r > 0, s / r, 0.0)
    E = np.stack([-X[1] * chi, X[0] * chi, np.zeros_like(r)])
    return VectorField3(X, E, float(x[1] - x[0]), r_min, omega)


def divergence_residual(F: VectorField3) -> float:
    """max |central-difference div E| over interior points, relative to max |grad E|."""
    if F.spacing is None:
        raise ValidationError("divergence needs a uniform Cartesian lattice")
    h = F.spacing
    grads = [np.gradient(F.E[i], h, h, h) for i in range(3)]
    div = grads[0][0] + grads[1][1] + grads[2][2]
    r = np.hypot(F.X[0], F.X[1])
    mask = r >= F.r_min
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1, 1:-1] = True
    mask &= interior
    scale = max(float(np.max(np.abs(gc[mask]))) for gr in grads for gc in gr)
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(div[mask]))) / scale


@dataclass
class EnergyMatch:
    E_value: float
    J_value: float
    gap: float

    def to_dict(self) -> dict:
        return {"E_value": self.E_value, "J_value": self.J_value, "relative_gap": self.gap}


def energy_match(ctx: FunctionalContext, u, F: Optional[VectorField3] = None) -> EnergyMatch:
    """E(E) from the reduced curl identity versus J(u); the relative gap should be at rounding level."""
    spec = ctx.spec
    _require_maxwell(ctx.grid, spec)
    u = np.asarray(u, dtype=float)
    parts = quadratic_form_parts(spec, ctx.grid, u)
    curl = parts["gradient"] + parts["singular"]  # a = 1
    alpha = np.abs(u)  # |E| = |u|
    H = float(np.sum(ctx.w * ctx.nonlinear_density(alpha)))
    Ev = 0.5 * (curl + parts["potential"]) - H
    Jv = J(ctx, u)
    gap = abs(Ev - Jv) / abs(Jv) if Jv != 0 else abs(Ev - Jv)
    return EnergyMatch(Ev, Jv, gap)


@dataclass
class LSeries:
    t: np.ndarray
    L: np.ndarray
    cos_term: float
    sin_term: float
    variation_coefficient: float
    omega: float

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.L - self.L[0])))

    @property
    def slack(self) -> float:
        """Largest |L(t) - L(0)| allowed by the stationarity pairing."""
        return abs(self.variation_coefficient) / (2.0 * self.omega ** 2)


def em_energy_L(ctx: FunctionalContext, u, omega: float = 1.0, t_samples=None) -> LSeries:
    """L(t) = (1/2w^2) int (-V u^2 + f~(u) u) cos^2(wt) + (|grad u|^2 + u^2/r^2) sin^2(wt)."""
    _require_maxwell(ctx.grid, ctx.spec)
    if not omega > 0:
        raise ValidationError("omega must be positive")
    if t_samples is None:
        t_samples = np.linspace(0.0, math.pi / omega, 33)
    t = np.asarray(t_samples, dtype=float)
    u = np.asarray(u, dtype=float)
    parts = quadratic_form_parts(ctx.spec, ctx.grid, u)
    fu = float(np.sum(ctx.w * ctx.ftilde(u) * u))
    A = -parts["potential"] + fu
    B = parts["gradient"] + parts["singular"]
    c2, s2 = np.cos(omega * t) ** 2, np.sin(omega * t) ** 2
    L = (A * c2 + B * s2) / (2.0 * omega ** 2)
    coef = B + parts["potential"] - fu
    return LSeries(t, L, A / (2 * omega ** 2), B / (2 * omega ** 2), coef, omega)


def write_field3_csv(path, F: VectorField3, stride: int = 1) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sl = (slice(None, None, stride),) * 3
    X = [c[sl].ravel() for c in F.X]
    E = [c[sl].ravel() for c in F.E]
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["x1", "x2", "x3", "E1", "E2", "E3"])
        for row in zip(*X, *E):
            wr.writerow([f"{v:.17g}" for v in row])
    return path


def write_L_csv(path, S: LSeries) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "L"])
        for a, b in zip(S.t, S.L):
            wr.writerow([f"{a:.17g}", f"{b:.17g}"])
    return path
