"""Reduced (r, z) discretization of -Delta + a/r^2 + V on cylindrically symmetric functions.

Cells are centered in both directions, r_i = (i + 1/2) dr, so no unknown sits on
the axis. The radial part is assembled in conservative flux form
-r^{1-K} d/dr (r^{K-1} du/dr); the axis face carries zero flux and Dirichlet
walls sit on the faces r = Rmax and |z| = Zhalf (ghost value mirrored with a
sign flip). Functions are stored as arrays of shape (Nr, Nz), flattened in C
order when a matrix acts on them.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator
from scipy.special import gamma

from .errors import InvalidResolution, ShapeMismatch, ValidationError
from .nonlinearity import NonlinearitySpec

POTENTIAL_KINDS = ("constant", "periodic", "separable")


@dataclass(frozen=True, eq=False)
class Potential:
    """Bounded potential V(r, z).

    ``constant``  V = V0.
    ``periodic``  V0 + table(r, z mod 1); the table is a tensor grid over
                  r_table x z_table with z_table covering one period [0, 1).
    ``separable`` V0 + V1(r) + V2(z mod 1) from two 1D tables (either may be absent).
    """

    kind: str = "constant"
    V0: float = 0.0
    r_table: Optional[np.ndarray] = None
    z_table: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    r_values: Optional[np.ndarray] = None
    z_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if self.kind == "periodic" and (self.r_table is None or self.z_table is None or self.values is None):
            raise ValidationError("periodic potential needs r_table, z_table and values")
        for arr in (self.values, self.r_values, self.z_values):
            if arr is not None and not np.all(np.isfinite(arr)):
                raise ValidationError("potential table must be finite (V in L^inf)")
        if not math.isfinite(self.V0):
            raise ValidationError("V0 must be finite")

    @classmethod
    def constant(cls, V0: float) -> "Potential":
        return cls("constant", float(V0))

    @property
    def is_separable(self) -> bool:
        return self.kind in ("constant", "separable")

    @property
    def z_periodic(self) -> bool:
        return self.kind == "periodic" or (self.kind == "separable" and self.z_values is not None)

    def radial_part(self, r: np.ndarray) -> np.ndarray:
        out = np.full_like(r, self.V0, dtype=float)
        if self.kind == "separable" and self.r_values is not None:
            out += np.interp(r, self.r_table, self.r_values)
        return out

    def axial_part(self, z: np.ndarray) -> np.ndarray:
        out = np.zeros_like(z, dtype=float)
        if self.kind == "separable" and self.z_values is not None:
            out += _periodic_interp(z, self.z_table, self.z_values)
        return out

    def sample(self, r: np.ndarray, z: np.ndarray) -> np.ndarray:
        """V on the tensor grid r x z, shape (len(r), len(z))."""
        if self.is_separable:
            return self.radial_part(r)[:, None] + self.axial_part(z)[None, :]
        zz = np.mod(z, 1.0)
        zt = np.concatenate([self.z_table, [self.z_table[0] + 1.0]])
        vt = np.concatenate([self.values, self.values[:, :1]], axis=1)
        interp = RegularGridInterpolator((self.r_table, zt), vt, bounds_error=False, fill_value=None)
        rr = np.clip(r, self.r_table[0], self.r_table[-1])
        R, Z = np.meshgrid(rr, zz, indexing="ij")
        return self.V0 + interp(np.stack([R.ravel(), Z.ravel()], axis=1)).reshape(R.shape)

    def sup_norm(self) -> float:
        s = abs(self.V0)
        for arr in (self.values, self.r_values, self.z_values):
            if arr is not None:
                s += float(np.max(np.abs(arr)))
        return s

    def describe(self) -> dict:
        d = {"kind": self.kind, "V0": self.V0}
        if self.values is not None:
            d["table_shape"] = list(np.shape(self.values))
        return d


def _periodic_interp(z, zt, vt):
    zz = np.mod(z, 1.0)
    return np.interp(zz, np.concatenate([zt, [zt[0] + 1.0]]), np.concatenate([vt, [vt[0]]]))


def load_potential_csv(path, V0: float = 0.0) -> Potential:
    """Periodic potential table from a CSV with header ``r,z,V``."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [h.strip() for h in reader.fieldnames] != ["r", "z", "V"]:
            raise ValidationError(f"{path}: expected header 'r,z,V', got {reader.fieldnames}")
        rows = [(float(row["r"]), float(row["z"]), float(row["V"])) for row in reader]
    data = np.array(rows)
    rs, zs = np.unique(data[:, 0]), np.unique(data[:, 1])
    if len(rs) * len(zs) != len(data):
        raise ValidationError(f"{path}: table is not a full tensor grid in (r, z)")
    if zs.min() < 0 or zs.max() >= 1.0:
        raise ValidationError(f"{path}: z values must cover one period within [0, 1)")
    table = np.empty((len(rs), len(zs)))
    ir = np.searchsorted(rs, data[:, 0])
    iz = np.searchsorted(zs, data[:, 1])
    table[ir, iz] = data[:, 2]
    return Potential("periodic", V0, r_table=rs, z_table=zs, values=table)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    N: int = 3
    K: int = 2
    a: float = 1.0
    potential: Potential = field(default_factory=lambda: Potential.constant(-9.0))
    lam: float = 0.0
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)

    def __post_init__(self):
        if self.N < 3:
            raise ValidationError("N must be at least 3")
        if not (2 <= self.K <= self.N and self.N - self.K == 1):
            raise ValidationError("only N - K = 1 with K >= 2 is supported")
        hardy = -((self.K - 2) ** 2) / 4.0
        if not self.a > hardy:
            raise ValidationError(f"a={self.a} violates a > -(K-2)^2/4 = {hardy}")
        if not self.lam >= 0:
            raise ValidationError("lambda must be nonnegative")

    @property
    def is_maxwell(self) -> bool:
        return self.N == 3 and self.K == 2 and self.a == 1.0

    def with_lambda(self, lam: float) -> "ProblemSpec":
        return ProblemSpec(self.N, self.K, self.a, self.potential, float(lam), self.nonlinearity)

    def describe(self) -> dict:
        nl = self.nonlinearity
        return {
            "N": self.N, "K": self.K, "a": self.a, "lambda": self.lam,
            "potential": self.potential.describe(),
            "nonlinearity": {"family_f": nl.family_f, "p": nl.p, "family_g": nl.family_g, "q": nl.q, "rho": nl.rho},
        }


def sphere_measure(K: int) -> float:
    """Surface measure of the unit sphere in R^K (2 pi for K = 2)."""
    return 2.0 * math.pi ** (K / 2) / gamma(K / 2)


@dataclass(frozen=True, eq=False)
class Grid:
    Nr: int
    Nz: int
    Rmax: float
    Zhalf: float
    K: int
    dr: float
    dz: float
    r: np.ndarray
    z: np.ndarray
    r_faces: np.ndarray
    m_r: np.ndarray
    m_z: np.ndarray
    omega: float

    @property
    def shape(self) -> tuple[int, int]:
        return (self.Nr, self.Nz)

    @property
    def size(self) -> int:
        return self.Nr * self.Nz

    @property
    def weights(self) -> np.ndarray:
        return self.omega * self.m_r[:, None] * self.m_z[None, :]

    @property
    def volume(self) -> float:
        return self.omega * self.Rmax ** self.K / self.K * 2.0 * self.Zhalf

    def mesh(self):
        return np.meshgrid(self.r, self.z, indexing="ij")


@dataclass
class StateVector:
    """Nodal values of u on a grid, optionally with eigenbasis coefficients."""

    values: np.ndarray
    coeffs: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)


def build_grid(spec: ProblemSpec, Nr: int, Nz: int, Rmax: float, Zhalf: float) -> Grid:
    if Nr < 8 or Nz < 8:
        raise InvalidResolution(f"need Nr, Nz >= 8 (got {Nr}, {Nz})")
    if not (Rmax > 0 and Zhalf > 0):
        raise InvalidResolution("Rmax and Zhalf must be positive")
    if spec.potential.z_periodic and abs(Zhalf - round(Zhalf)) > 1e-12:
        raise ValidationError("Zhalf must be an integer multiple of the z-period 1")
    K = spec.K
    dr, dz = Rmax / Nr, 2.0 * Zhalf / Nz
    r = (np.arange(Nr) + 0.5) * dr
    z = -Zhalf + (np.arange(Nz) + 0.5) * dz
    faces = np.arange(Nr + 1) * dr
    # exact cell measure of r^{K-1} dr; equals r_i^{K-1} dr for K = 2
    m_r = (faces[1:] ** K - faces[:-1] ** K) / K
    m_z = np.full(Nz, dz)
    return Grid(Nr, Nz, float(Rmax), float(Zhalf), K, dr, dz, r, z, faces, m_r, m_z, sphere_measure(K))


def _check(g: Grid, *arrays):
    for a in arrays:
        if np.shape(a) != g.shape:
            raise ShapeMismatch(f"expected shape {g.shape}, got {np.shape(a)}")


def inner_L2w(g: Grid, u, v) -> float:
    _check(g, u, v)
    return float(np.sum(g.weights * u * v))


def norm_Lk(g: Grid, u, k: float = 2.0) -> float:
    if k < 1:
        raise ValidationError("k must be >= 1")
    _check(g, u)
    return float(np.sum(g.weights * np.abs(u) ** k) ** (1.0 / k))


def boundary_mass_fraction(g: Grid, u) -> float:
    """Share of sum w u^2 living in the outer 10% shell of the truncated domain."""
    _check(g, u)
    w2 = g.weights * u * u
    total = w2.sum()
    if total == 0:
        return 0.0
    shell = (g.r[:, None] > 0.9 * g.Rmax) | (np.abs(g.z)[None, :] > 0.9 * g.Zhalf)
    return float(w2[np.broadcast_to(shell, g.shape)].sum() / total)


def check_decay(g: Grid, u, threshold: float = 1e-6) -> float:
    frac = boundary_mass_fraction(g, u)
    if frac >= threshold:
        warnings.warn(f"{frac:.2e} of the L2 mass sits in the outer 10% shell; enlarge Rmax/Zhalf",
                      RuntimeWarning, stacklevel=2)
    return frac


# ---------------------------------------------------------------- operator


def radial_matrix(g: Grid) -> sp.csr_matrix:
    """-r^{1-K} (r^{K-1} u')' in flux form (no potential)."""
    K, dr = g.K, g.dr
    fw = g.r_faces ** (K - 1) / dr  # face transmissibilities
    fw = fw.copy()
    fw[0] = 0.0  # axis face: zero flux
    fw[-1] *= 2.0  # Dirichlet wall half a cell away
    inv_m = 1.0 / g.m_r
    main = (fw[:-1] + fw[1:]) * inv_m
    off = -fw[1:-1]
    lower = off * inv_m[1:]
    upper = off * inv_m[:-1]
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


def axial_matrix(g: Grid) -> sp.csr_matrix:
    """-d^2/dz^2 with Dirichlet walls on the faces |z| = Zhalf."""
    n, h2 = g.Nz, g.dz ** 2
    main = np.full(n, 2.0 / h2)
    main[0] = main[-1] = 3.0 / h2
    off = np.full(n - 1, -1.0 / h2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Sparse A acting on flattened (Nr, Nz) arrays, symmetric in <.,.>_w.

    When the potential is separable, ``factors`` holds (A_r, A_z, m_r, m_z, omega)
    with A = A_r (x) I + I (x) A_z, which lets the spectral module diagonalize A
    through two 1D eigenproblems.
    """

    matrix: sp.csr_matrix
    weights: np.ndarray
    shape: tuple
    diagonal: np.ndarray
    factors: Optional[tuple] = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        return (self.matrix @ np.asarray(u).ravel()).reshape(self.shape)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def assemble_operator(spec: ProblemSpec, g: Grid) -> SymmetricOperator:
    Ar, Az = radial_matrix(g), axial_matrix(g)
    pot = spec.potential
    sing = spec.a / g.r ** 2
    Vgrid = pot.sample(g.r, g.z)
    diag = sing[:, None] + Vgrid
    Ir, Iz = sp.identity(g.Nr, format="csr"), sp.identity(g.Nz, format="csr")
    A = (sp.kron(Ar, Iz) + sp.kron(Ir, Az) + sp.diags(diag.ravel())).tocsr()
    factors = None
    if pot.is_separable:
        Ar_full = (Ar + sp.diags(sing + pot.radial_part(g.r))).tocsr()
        Az_full = (Az + sp.diags(pot.axial_part(g.z))).tocsr()
        factors = (Ar_full, Az_full, g.m_r, g.m_z, g.omega)
    w = g.weights.ravel()
    # M-symmetry: W A must be symmetric entrywise
    WA = sp.diags(w) @ A
    asym = abs(WA - WA.T).max() if WA.nnz else 0.0
    if asym > 1e-12 * abs(WA).max():
        raise AssertionError(f"assembled operator is not weight-symmetric (defect {asym:g})")
    return SymmetricOperator(A, w, g.shape, diag, factors)


def quadratic_form_parts(spec: ProblemSpec, g: Grid, u) -> dict:
    """Split <Au, u>_w into gradient (face-flux), singular a u^2/r^2 and potential terms."""
    _check(g, u)
    K = g.K
    fr = g.r_faces ** (K - 1) / g.dr
    du_r = np.diff(u, axis=0)
    grad_r = np.sum(fr[1:-1, None] * du_r ** 2 * g.m_z[None, :])
    grad_r += np.sum(2.0 * fr[-1] * u[-1, :] ** 2 * g.m_z)
    du_z = np.diff(u, axis=1)
    grad_z = np.sum(g.m_r[:, None] * du_z ** 2) / g.dz
    grad_z += np.sum(g.m_r * (u[:, 0] ** 2 + u[:, -1] ** 2)) * 2.0 / g.dz
    w = g.weights
    gradient = g.omega * (grad_r + grad_z)
    singular = float(np.sum(w * u ** 2 / g.r[:, None] ** 2))
    potential = float(np.sum(w * spec.potential.sample(g.r, g.z) * u ** 2))
    return {"gradient": float(gradient), "singular": singular, "potential": potential,
            "total": float(gradient + spec.a * singular + potential)}


@dataclass
class HardyReport:
    K: int
    constant: float
    worst_ratio: float
    samples: int
    tol: float
    passed: bool


def hardy_check(g: Grid, K: int, samples: int = 200, tol: float = 0.05, rng=None) -> HardyReport:
    """Discrete check of int u^2/r^2 <= (2/(K-2))^2 int |grad u|^2 on smooth random u."""
    if K <= 2:
        raise ValidationError("the Hardy inequality needs K > 2")
    if g.K != K:
        raise ValidationError("grid was built for a different K")
    rng = np.random.default_rng(rng)
    const = (2.0 / (K - 2)) ** 2
    spec = ProblemSpec(N=K + 1, K=K, a=0.0, potential=Potential.constant(0.0))
    R, Z = g.mesh()
    worst = 0.0
    for _ in range(samples):
        u = np.zeros(g.shape)
        for k in range(4):
            for l in range(1, 5):
                radial = np.cos((k + 0.5) * math.pi * R / g.Rmax)
                axial = np.sin(l * math.pi * (Z + g.Zhalf) / (2 * g.Zhalf))
                u += rng.normal() / (1 + k + l) * radial * axial
        parts = quadratic_form_parts(spec, g, u)
        worst = max(worst, parts["singular"] / parts["gradient"])
    return HardyReport(K, const, worst, samples, tol, worst <= const * (1 + tol))


# ---------------------------------------------------------------- csv io


def write_field_csv(path, g: Grid, u, name: str = "value") -> Path:
    _check(g, u)
    R, Z = g.mesh()
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "z", name])
        for rv, zv, uv in zip(R.ravel(), Z.ravel(), np.asarray(u).ravel()):
            w.writerow([repr(float(rv)), repr(float(zv)), repr(float(uv))])
    return path


def read_field_csv(path, g: Grid) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    if data.shape[0] != g.size:
        raise ShapeMismatch(f"{path}: {data.shape[0]} rows for a grid of {g.size} cells")
    return data[:, 2].reshape(g.shape)
