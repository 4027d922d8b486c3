"""Spectral splitting X = X+ (+) X- of the discretized operator.

Eigenpairs solve A v = lam v with v orthonormal in <.,.>_w. Coefficients of a
grid function u are c_i = <u, v_i>_w, and the energy norm is
||u||^2 = sum |lam_i| c_i^2. Two basis backends exist:

* ``KroneckerBasis``: separable potentials, A = A_r (x) I + I (x) A_z, so the
  complete eigenbasis is the tensor product of two 1D bases. Transforms are a
  pair of small matrix products.
* ``DenseBasis``: explicit eigenvector columns, from a full dense solve when the
  grid has at most ``full_limit`` cells, or a partial shift-invert solve (all
  negative modes plus the lowest ``n_positive`` positive ones) otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize_scalar

from .errors import NoNegativeSpectrum, SpectralGapViolation, UnresolvedComponent, ValidationError

GAP_REL = 1e-6
FULL_LIMIT = 4096
N_POSITIVE = 64


def _sym_eig(A, m):
    """Eigenpairs of a diag(m)-symmetric matrix, eigenvectors m-orthonormal."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A)
    s = np.sqrt(m)
    S = (s[:, None] * A) / s[None, :]
    S = 0.5 * (S + S.T)
    lam, Y = sla.eigh(S)
    return lam, Y / s[:, None]


class KroneckerBasis:
    def __init__(self, Ar, Az, m_r, m_z, omega):
        self.alpha, self.Phi = _sym_eig(Ar, m_r)
        self.beta, self.Psi = _sym_eig(Az, m_z)
        self.m_r, self.m_z = np.asarray(m_r), np.asarray(m_z)
        self.shape = (len(m_r), len(m_z))
        lam = (self.alpha[:, None] + self.beta[None, :]).ravel()
        self.order = np.argsort(lam, kind="stable")
        self.eigvals = lam[self.order]
        self._sqrt_omega = math.sqrt(omega)
        self._mw = self.m_r[:, None] * self.m_z[None, :] * self._sqrt_omega
        self.size = lam.size
        self.complete = True

    def analyze(self, u):
        u = np.asarray(u, dtype=float)
        C = self.Phi.T @ (self._mw * u) @ self.Psi
        flat = C.reshape(C.shape[:-2] + (-1,))
        return flat[..., self.order]

    def synthesize(self, c):
        c = np.asarray(c, dtype=float)
        flat = np.empty_like(c)
        flat[..., self.order] = c
        C = flat.reshape(c.shape[:-1] + self.shape)
        # restrict the products to the leading block that carries nonzero coefficients
        nz = np.any(C != 0, axis=tuple(range(C.ndim - 2)))
        rows, cols = np.flatnonzero(nz.any(axis=1)), np.flatnonzero(nz.any(axis=0))
        if rows.size == 0:
            return np.zeros(c.shape[:-1] + (self.Phi.shape[0], self.Psi.shape[0]))
        k, l = rows[-1] + 1, cols[-1] + 1
        return (self.Phi[:, :k] @ C[..., :k, :l] @ self.Psi[:, :l].T) / self._sqrt_omega

    def mode(self, i):
        k, l = np.unravel_index(self.order[i], self.shape)
        return np.outer(self.Phi[:, k], self.Psi[:, l]) / self._sqrt_omega


class ModeBlock:
    """u = sum_i y_i s_i v_i over a fixed list of modes, flattened, and its transpose.

    For a Kronecker basis the product runs through the leading factor columns
    only, which is much cheaper than a dense (len(idx), n_cells) matrix when
    the modes are low.
    """

    def __init__(self, basis, idx, scale):
        idx = np.asarray(idx, dtype=int)
        s = np.broadcast_to(np.asarray(scale, dtype=float), idx.shape)
        self.n = idx.size
        if isinstance(basis, KroneckerBasis) and idx.size:
            self.ki, self.li = np.unravel_index(basis.order[idx], basis.shape)
            K, L = self.ki.max() + 1, self.li.max() + 1
            self.PhiK, self.PsiL = basis.Phi[:, :K], basis.Psi[:, :L]
            self.s = s / basis._sqrt_omega
            self.shape = basis.shape
            self.M = None
        else:
            self.M = np.stack([basis.mode(int(i)).ravel() * si for i, si in zip(idx, s)]) if idx.size else \
                np.zeros((0, int(np.prod(basis.shape))))

    def apply(self, y):
        if self.M is not None:
            return y @ self.M
        C = np.zeros((self.PhiK.shape[1], self.PsiL.shape[1]))
        C[self.ki, self.li] = y * self.s
        return (self.PhiK @ C @ self.PsiL.T).ravel()

    def adjoint(self, r):
        if self.M is not None:
            return self.M @ r
        B = self.PhiK.T @ r.reshape(self.shape) @ self.PsiL
        return B[self.ki, self.li] * self.s


class DenseBasis:
    def __init__(self, eigvals, vecs, weights, shape, complete):
        self.eigvals = np.asarray(eigvals)
        self.V = np.asarray(vecs)
        self.w = np.asarray(weights).ravel()
        self.shape = tuple(shape)
        self.size = len(self.eigvals)
        self.complete = complete

    def analyze(self, u):
        u = np.asarray(u, dtype=float)
        flat = u.reshape(u.shape[:-2] + (-1,))
        return (flat * self.w) @ self.V

    def synthesize(self, c):
        c = np.asarray(c, dtype=float)
        return (c @ self.V.T).reshape(c.shape[:-1] + self.shape)

    def mode(self, i):
        return self.V[:, i].reshape(self.shape)


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    eigvals: np.ndarray
    basis: object
    n_minus: int
    mu0: float
    gap_tol: float
    weights: np.ndarray

    @property
    def shape(self):
        return self.basis.shape

    @property
    def complete(self) -> bool:
        return self.basis.complete

    @property
    def abs_eigvals(self) -> np.ndarray:
        return np.abs(self.eigvals)

    @property
    def minus(self) -> slice:
        return slice(0, self.n_minus)

    @property
    def plus(self) -> slice:
        return slice(self.n_minus, len(self.eigvals))

    @property
    def eks(self) -> np.ndarray:
        """Indices of the X- basis (e_k): negative modes by descending |lam|."""
        return np.arange(self.n_minus)

    def analyze(self, u):
        return self.basis.analyze(u)

    def synthesize(self, c):
        return self.basis.synthesize(c)

    def mode(self, i: int) -> np.ndarray:
        return self.basis.mode(i)

    def resolved_coeffs(self, u, tol: float = 1e-8) -> np.ndarray:
        """Coefficients of u, refusing functions with mass outside a partial basis."""
        c = self.analyze(u)
        if not self.complete:
            rest = np.asarray(u) - self.synthesize(c)
            num = np.sqrt(np.sum(self.weights * rest ** 2))
            den = np.sqrt(np.sum(self.weights * np.asarray(u) ** 2))
            if den > 0 and num > tol * den:
                raise UnresolvedComponent(f"relative mass {num / den:.2e} outside the resolved eigenspace")
        return c

    def to_x(self, c):
        """Coefficients in the X-orthonormal basis v_i / sqrt|lam_i|."""
        return np.sqrt(self.abs_eigvals) * c

    def from_x(self, x):
        return x / np.sqrt(self.abs_eigvals)

    def metadata(self) -> dict:
        ev = self.eigvals
        return {
            "n_modes": int(len(ev)),
            "complete": bool(self.complete),
            "n_minus": int(self.n_minus),
            "mu0": float(self.mu0),
            "gap_tol": float(self.gap_tol),
            "min_eigval": float(ev[0]),
            "max_eigval": float(ev[-1]),
            "lowest_positive": float(ev[self.n_minus]) if self.n_minus < len(ev) else None,
            "highest_negative": float(ev[self.n_minus - 1]) if self.n_minus else None,
            "backend": type(self.basis).__name__,
        }


def _finish(eigvals, basis, weights, gap_rel):
    lam = np.asarray(eigvals)
    scale = float(np.max(np.abs(lam)))
    gap_tol = gap_rel * scale
    small = np.abs(lam) < gap_tol
    if np.any(small):
        raise SpectralGapViolation(f"eigenvalue {lam[small][0]:.3e} inside the gap (-{gap_tol:.2e}, {gap_tol:.2e})")
    n_minus = int(np.sum(lam < 0))
    if n_minus == 0:
        raise NoNegativeSpectrum("operator is positive definite: no X- directions")
    mu0 = float(np.sqrt(np.min(np.abs(lam))))
    return SpectralSplit(lam, basis, n_minus, mu0, gap_tol, np.asarray(weights).reshape(basis.shape))


def eigendecompose(op, g=None, gap_rel: float = GAP_REL, full_limit: int = FULL_LIMIT,
                   n_positive: int = N_POSITIVE) -> SpectralSplit:
    """Eigen-split of a weight-symmetric operator (``SymmetricOperator``)."""
    if op.factors is not None:
        Ar, Az, m_r, m_z, omega = op.factors
        basis = KroneckerBasis(Ar, Az, m_r, m_z, omega)
        return _finish(basis.eigvals, basis, op.weights, gap_rel)
    w = np.asarray(op.weights).ravel()
    M = w.size
    if M <= full_limit:
        lam, V = _sym_eig(op.matrix, w)
        return _finish(lam, DenseBasis(lam, V, w, op.shape, True), w, gap_rel)
    s = np.sqrt(w)
    S = sp.diags(s) @ op.matrix @ sp.diags(1.0 / s)
    S = (0.5 * (S + S.T)).tocsc()
    lower = float((S.diagonal() - abs(S).sum(axis=1).A1 + abs(S.diagonal())).min())
    k = min(2 * n_positive, M - 2)
    while True:
        lam, Y = spla.eigsh(S, k=k, sigma=lower - 1.0, which="LM")
        idx = np.argsort(lam)
        lam, Y = lam[idx], Y[:, idx]
        if np.sum(lam > 0) >= n_positive or k >= M - 2:
            break
        k = min(2 * k, M - 2)
    n_minus = int(np.sum(lam < 0))
    keep = n_minus + n_positive
    lam, Y = lam[:keep], Y[:, :keep]
    V = Y / s[:, None]
    return _finish(lam, DenseBasis(lam, V, w, op.shape, False), w, gap_rel)


def diagonal_split(eigvals, gap_rel: float = GAP_REL) -> SpectralSplit:
    """Split of the diagonal operator diag(eigvals) with unit weights (test toy)."""
    lam = np.sort(np.asarray(eigvals, dtype=float))
    n = len(lam)
    basis = DenseBasis(lam, np.eye(n), np.ones(n), (n, 1), True)
    return _finish(lam, basis, np.ones(n), gap_rel)


# ---------------------------------------------------------------- projections & norms


def project(split: SpectralSplit, u, sign: int) -> np.ndarray:
    if sign not in (1, -1):
        raise ValidationError("sign must be +1 or -1")
    c = split.analyze(u)
    if sign > 0:
        c[..., split.minus] = 0.0
    else:
        c[..., split.plus] = 0.0
    return split.synthesize(c)


def energy_norm_coeffs(split: SpectralSplit, c) -> tuple[float, float, float]:
    e = split.abs_eigvals * np.asarray(c) ** 2
    plus = float(np.sum(e[..., split.plus]))
    minus = float(np.sum(e[..., split.minus]))
    return math.sqrt(plus + minus), math.sqrt(plus), math.sqrt(minus)


def energy_norm(split: SpectralSplit, u) -> tuple[float, float, float]:
    """(||u||, ||u+||, ||u-||)."""
    return energy_norm_coeffs(split, split.resolved_coeffs(u))


def tau_norm_coeffs(split: SpectralSplit, c) -> float:
    c = np.asarray(c)
    lam = split.abs_eigvals
    plus = math.sqrt(float(np.sum(lam[split.plus] * c[split.plus] ** 2)))
    ek = split.eks
    # <u-, e_k>_X with e_k = v_k / sqrt|lam_k|
    a = np.sqrt(lam[ek]) * np.abs(c[ek])
    weights = 0.5 ** (np.arange(1, len(ek) + 1) + 1)
    return max(plus, float(np.sum(weights * a)))


def tau_norm(split: SpectralSplit, u) -> float:
    return tau_norm_coeffs(split, split.resolved_coeffs(u))


# ---------------------------------------------------------------- kappa


def _lq(w, u, q):
    return np.sum(w * np.abs(u) ** q, axis=(-2, -1)) ** (1.0 / q)


def kappa_estimate(split: SpectralSplit, g, q: float, n_samples: int = 2000, rng=None,
                   ascent_steps: int = 50, safety: float = 1.1, chunk: int = 200) -> float:
    """Sampled lower estimate of the L^q norm of the projections P+ and P-, times ``safety``.

    Random u have standard Gaussian coefficients; the best sample is then
    improved by Gauss-Southwell coordinate ascent on log(|P u|_q / |u|_q),
    renormalizing the coefficient vector after every step.
    """
    rng = np.random.default_rng(rng)
    w = g.weights
    n = len(split.eigvals)
    best = (-np.inf, None, 0)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        C = rng.standard_normal((m, n))
        U = split.synthesize(C)
        Cm = C.copy()
        Cm[:, split.plus] = 0.0
        Um = split.synthesize(Cm)
        nu = _lq(w, U, q)
        for sign, P in ((1, U - Um), (-1, Um)):
            r = _lq(w, P, q) / nu
            k = int(np.argmax(r))
            if r[k] > best[0]:
                best = (float(r[k]), C[k].copy(), sign)
        done += m
    ratio, c, sign = best
    c = c / np.linalg.norm(c)
    mask = np.zeros(n, dtype=bool)
    mask[split.minus if sign < 0 else split.plus] = True

    def parts(c):
        u = split.synthesize(c)
        pu = split.synthesize(np.where(mask, c, 0.0))
        return u, pu

    def log_ratio(c):
        u, pu = parts(c)
        return math.log(_lq(w, pu, q)) - math.log(_lq(w, u, q))

    for _ in range(ascent_steps):
        u, pu = parts(c)
        nu, npu = np.sum(w * np.abs(u) ** q), np.sum(w * np.abs(pu) ** q)
        if npu == 0:
            break
        gu = split.analyze(np.abs(u) ** (q - 2) * u) / nu
        gp = np.where(mask, split.analyze(np.abs(pu) ** (q - 2) * pu), 0.0) / npu
        grad = gp - gu
        i = int(np.argmax(np.abs(grad)))
        if abs(grad[i]) < 1e-14:
            break
        span = 2.0 * max(abs(c[i]), 1.0 / math.sqrt(n))
        e = np.zeros(n)
        e[i] = 1.0
        res = minimize_scalar(lambda t: -log_ratio(c + t * e), bounds=(-span, span), method="bounded",
                              options={"xatol": 1e-10})
        if -res.fun > log_ratio(c):
            c = c + res.x * e
            c /= np.linalg.norm(c)
    ratio = max(ratio, math.exp(log_ratio(c)))
    return safety * max(ratio, 1.0)
