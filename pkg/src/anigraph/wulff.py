"""Anisotropic integrands and the geometry of their Wulff shapes.

An integrand ``Phi`` is the support function of a smooth, bounded, uniformly
convex body ``K`` (the Wulff shape).  Three closed-form families are provided
so that every derivative is exact:

* ``isotropic``:            ``Phi(x) = |x|``                     (K = unit ball)
* ``ellipsoidal``:          ``Phi(x) = sqrt(x^T Q x)``           (K = {y^T Q^-1 y <= 1})
* ``perturbed-isotropic``:  ``Phi(x) = |x| (1 + a cos(m t + c))``, ``t = p.x/|x|``

All evaluation routines broadcast over leading axes: ``x`` has shape
``(..., d)`` with ``d = n + 1`` the ambient dimension.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError, IntegrityError

FAMILIES = ("isotropic", "ellipsoidal", "perturbed-isotropic")

# minimal tangential-Hessian eigenvalue accepted for a perturbed integrand
CONVEXITY_FLOOR = 0.05


def _check_finite(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite input to integrand")
    return x


def _check_nonzero(r):
    if np.any(r == 0.0):
        raise DomainError("derivative of Phi is undefined at the origin")


@dataclass(frozen=True, eq=False)
class AnisotropyIntegrand:
    """One-homogeneous convex integrand with exact first and second derivatives.

    Use the constructors :meth:`isotropic`, :meth:`ellipsoidal` and
    :meth:`perturbed` rather than the raw initializer.
    """

    dim: int
    family: str
    matrix: np.ndarray | None = None
    amplitude: float = 0.0
    frequency: float = 0.0
    axis: np.ndarray | None = None
    phase: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False)

    # -- constructors -----------------------------------------------------

    @classmethod
    def isotropic(cls, dim=3):
        if dim < 2:
            raise ValueError("ambient dimension must be >= 2")
        return cls(dim=int(dim), family="isotropic")

    @classmethod
    def ellipsoidal(cls, matrix):
        Q = np.array(matrix, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or Q.shape[0] < 2:
            raise ValueError("ellipsoidal integrand needs a square matrix of size >= 2")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * np.abs(Q).max()):
            raise ValueError("ellipsoidal matrix must be symmetric")
        Q = 0.5 * (Q + Q.T)
        try:
            chol = np.linalg.cholesky(Q)
        except np.linalg.LinAlgError:
            raise ValueError("ellipsoidal matrix must be positive definite") from None
        Q.setflags(write=False)
        return cls(dim=Q.shape[0], family="ellipsoidal", matrix=Q, _chol=chol)

    @classmethod
    def perturbed(cls, dim=3, amplitude=0.05, frequency=2.0, axis=None, phase=0.0):
        """Isotropic integrand times ``1 + a cos(m t + c)`` with ``t`` the cosine to ``axis``.

        Raises ``ValueError`` if a dense check in ``t`` finds a tangential
        Hessian eigenvalue below :data:`CONVEXITY_FLOOR`.
        """
        if axis is None:
            axis = np.zeros(dim)
            axis[0] = 1.0
        p = np.array(axis, dtype=float)
        if p.shape != (dim,) or np.linalg.norm(p) == 0:
            raise ValueError("axis must be a nonzero vector of length dim")
        p = p / np.linalg.norm(p)
        p.setflags(write=False)
        out = cls(dim=int(dim), family="perturbed-isotropic", amplitude=float(amplitude),
                  frequency=float(frequency), axis=p, phase=float(phase))
        lo = out._profile_eigen_floor()
        if lo < CONVEXITY_FLOOR:
            raise ValueError(
                f"perturbation amplitude {amplitude} breaks uniform convexity "
                f"(min tangential eigenvalue {lo:.3g} < {CONVEXITY_FLOOR})")
        return out

    # -- transforms -------------------------------------------------------

    def transformed(self, S):
        """Integrand ``x -> Phi(S x)`` for an orthogonal ``S``; its Wulff shape is ``S^T K``."""
        S = np.asarray(S, dtype=float)
        if S.shape != (self.dim, self.dim) or not np.allclose(S @ S.T, np.eye(self.dim), atol=1e-12):
            raise ValueError("transform must be an orthogonal matrix of the ambient size")
        if self.family == "isotropic":
            return self
        if self.family == "ellipsoidal":
            return AnisotropyIntegrand.ellipsoidal(S.T @ self.matrix @ S)
        return AnisotropyIntegrand.perturbed(self.dim, self.amplitude, self.frequency,
                                             S.T @ self.axis, self.phase)

    def flipped(self):
        """Integrand of ``-K``: ``x -> Phi(-x)``."""
        return self.transformed(-np.eye(self.dim))

    def reflected(self, axis=-1):
        """Integrand of ``K`` mirrored across the coordinate hyperplane ``{x_axis = 0}``."""
        S = np.eye(self.dim)
        S[axis, axis] = -1.0
        return self.transformed(S)

    def vertical_mirror(self):
        """Integrand whose minimal graphs are the negatives of this one's.

        Reflection over ``{x_{n+1} = 0}`` followed by ``K -> -K``, i.e.
        ``x -> Phi(-x', x_{n+1})``.
        """
        return self.reflected(-1).flipped()

    # -- evaluation -------------------------------------------------------

    def _profile(self, t):
        a, m, c = self.amplitude, self.frequency, self.phase
        g = 1.0 + a * np.cos(m * t + c)
        g1 = -a * m * np.sin(m * t + c)
        g2 = -a * m * m * np.cos(m * t + c)
        return g, g1, g2

    def _profile_eigen_floor(self, samples=4001):
        t = np.linspace(-1.0, 1.0, samples)
        g, g1, g2 = self._profile(t)
        e1 = g - t * g1
        e2 = e1 + g2 * (1.0 - t * t)
        if self.dim == 2:
            # the tangent line at x is spanned by v = p - t x
            return float(min(e2.min(), g.min()))
        return float(min(e1.min(), e2.min(), g.min()))

    def value(self, x):
        x = _check_finite(x)
        if self.family == "isotropic":
            return np.linalg.norm(x, axis=-1)
        if self.family == "ellipsoidal":
            return np.linalg.norm(x @ self._chol, axis=-1)
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(r > 0, (x @ self.axis) / np.where(r > 0, r, 1.0), 0.0)
        return r * self._profile(t)[0]

    def gradient(self, x):
        x = _check_finite(x)
        if self.family == "ellipsoidal":
            Qx = x @ self.matrix
            v = np.linalg.norm(x @ self._chol, axis=-1)
            _check_nonzero(v)
            return Qx / v[..., None]
        r = np.linalg.norm(x, axis=-1)
        _check_nonzero(r)
        xh = x / r[..., None]
        if self.family == "isotropic":
            return xh
        t = xh @ self.axis
        g, g1, _ = self._profile(t)
        return g[..., None] * xh + g1[..., None] * (self.axis - t[..., None] * xh)

    def hessian(self, x):
        x = _check_finite(x)
        d = self.dim
        eye = np.eye(d)
        if self.family == "ellipsoidal":
            Qx = x @ self.matrix
            v = np.linalg.norm(x @ self._chol, axis=-1)
            _check_nonzero(v)
            outer = Qx[..., :, None] * Qx[..., None, :]
            return (self.matrix - outer / (v * v)[..., None, None]) / v[..., None, None]
        r = np.linalg.norm(x, axis=-1)
        _check_nonzero(r)
        xh = x / r[..., None]
        P = eye - xh[..., :, None] * xh[..., None, :]
        if self.family == "isotropic":
            return P / r[..., None, None]
        t = xh @ self.axis
        g, g1, g2 = self._profile(t)
        v = self.axis - t[..., None] * xh
        H = (g - t * g1)[..., None, None] * P + g2[..., None, None] * (v[..., :, None] * v[..., None, :])
        return H / r[..., None, None]

    def to_dict(self):
        out = {"family": self.family, "dim": self.dim}
        if self.family == "ellipsoidal":
            out["matrix"] = self.matrix.tolist()
        if self.family == "perturbed-isotropic":
            out.update(amplitude=self.amplitude, frequency=self.frequency,
                       axis=self.axis.tolist(), phase=self.phase)
        return out

    @classmethod
    def from_dict(cls, spec):
        family = spec.get("family", "isotropic")
        if family == "isotropic":
            return cls.isotropic(int(spec.get("dim", 3)))
        if family == "ellipsoidal":
            return cls.ellipsoidal(spec["matrix"])
        if family == "perturbed-isotropic":
            return cls.perturbed(int(spec.get("dim", 3)), float(spec.get("amplitude", 0.05)),
                                 float(spec.get("frequency", 2.0)), spec.get("axis"),
                                 float(spec.get("phase", 0.0)))
        raise ValueError(f"unknown integrand family {family!r}")


# -- sphere sampling ----------------------------------------------------------

def sphere_lattice(dim, count):
    """Deterministic near-uniform points on the unit sphere in ``R^dim``.

    Equally spaced angles on the circle, a Fibonacci spiral on ``S^2`` and a
    fixed-seed Gaussian sample above that.
    """
    if dim == 2:
        theta = 2.0 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if dim == 3:
        k = np.arange(count) + 0.5
        z = 1.0 - 2.0 * k / count
        rho = np.sqrt(1.0 - z * z)
        golden = np.pi * (3.0 - np.sqrt(5.0))
        phi = golden * k
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    pts = np.random.default_rng(0).standard_normal((count, dim))
    return pts / np.linalg.norm(pts, axis=-1, keepdims=True)


def tangent_basis(nu):
    """Orthonormal basis (rows) of the hyperplane orthogonal to ``nu``."""
    nu = np.asarray(nu, dtype=float)
    _, _, vt = np.linalg.svd(nu[None, :])
    return vt[1:]


def _check_unit(x, tol=1e-12):
    x = _check_finite(x)
    if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > tol):
        raise DomainError("direction is not a unit vector")
    return x


# -- the operations -----------------------------------------------------------

def phi_eval(phi, x):
    """``Phi(x)``; zero at the origin, one-homogeneous elsewhere."""
    return phi.value(x)


def phi_grad(phi, x):
    """``grad Phi(x)``; a point of ``dK`` with outer normal ``x/|x|``."""
    return phi.gradient(x)


def phi_hess(phi, x):
    """``D^2 Phi(x)``; symmetric, ``(-1)``-homogeneous, annihilates ``x``."""
    return phi.hessian(x)


class TangentOperator(NamedTuple):
    matrix: np.ndarray
    basis: np.ndarray


def tangential_hessian(phi, nu):
    """Hessian of ``Phi`` on the tangent plane of the unit sphere at ``nu``.

    Returns the matrix in the orthonormal ``basis`` of ``nu^perp`` (rows),
    so ``matrix = basis @ D^2 Phi(nu) @ basis.T``.
    """
    nu = _check_unit(nu)
    B = tangent_basis(nu)
    H = phi.hessian(nu)
    M = B @ H @ B.T
    return TangentOperator(0.5 * (M + M.T), B)


def wulff_boundary_map(phi, samples):
    """Image of unit directions under ``grad Phi``: points of ``dK``."""
    samples = _check_unit(samples)
    return phi.gradient(samples)


def graph_integrand(phi, z):
    """``phi(z) = Phi(-z, 1)`` with its gradient and Hessian in ``z``.

    ``z`` has shape ``(..., n)`` with ``n = phi.dim - 1``.
    """
    z = _check_finite(z)
    if z.shape[-1] != phi.dim - 1:
        raise DomainError(f"gradient vector must have {phi.dim - 1} components")
    X = np.concatenate([-z, np.ones(z.shape[:-1] + (1,))], axis=-1)
    n = phi.dim - 1
    val = phi.value(X)
    grad = -phi.gradient(X)[..., :n]
    hess = phi.hessian(X)[..., :n, :n]
    return val, grad, hess


def ball_samples(n, radius, radial=41, angular=96):
    """Deterministic samples of the closed ball ``{|z| <= radius}`` in ``R^n``."""
    if n == 1:
        return np.linspace(-radius, radius, 2 * radial - 1)[:, None]
    rs = np.linspace(0.0, radius, radial)[1:]
    dirs = sphere_lattice(n, angular)
    pts = (rs[:, None, None] * dirs[None, :, :]).reshape(-1, n)
    return np.concatenate([np.zeros((1, n)), pts])


class EllipticityBounds(NamedTuple):
    lam_min: float
    lam_max: float

    @property
    def pucci_lambda(self):
        """``min(lam_min, 1/lam_max)``, clipped below 1 so it is a valid Pucci parameter."""
        return float(min(self.lam_min, 1.0 / self.lam_max, 1.0 - 1e-9))


def ellipticity_bounds(phi, gradient_bound, samples=None):
    """Extreme eigenvalues of ``D^2 phi(z)`` over the ball ``|z| <= gradient_bound``."""
    if not gradient_bound > 0:
        raise DomainError("gradient bound must be positive")
    n = phi.dim - 1
    z = ball_samples(n, gradient_bound) if samples is None else np.asarray(samples, dtype=float)
    _, _, H = graph_integrand(phi, z)
    eig = np.linalg.eigvalsh(H)
    lo, hi = float(eig.min()), float(eig.max())
    if lo <= 0.0:
        raise IntegrityError(
            f"D^2 phi has a non-positive eigenvalue {lo:.3g}: integrand is not uniformly convex")
    return EllipticityBounds(lo, hi)


def curvature_radius_bounds(phi, count=2000):
    """Min and max principal radii of curvature of ``dK`` (eigenvalues of the tangential Hessian)."""
    nus = sphere_lattice(phi.dim, count)
    H = phi.hessian(nus)
    eig = np.linalg.eigvalsh(H)
    # one eigenvalue per point is the zero in the radial direction
    eig = np.sort(eig, axis=-1)[:, 1:]
    return float(eig.min()), float(eig.max())


# -- finite-difference geometry of dK (independent checks) -------------------

def _perturbed_direction(nu, offsets, B):
    d = nu + offsets @ B
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def wulff_normal_fd(phi, nu, step=1e-4):
    """Outer normal of ``dK`` at ``grad Phi(nu)`` measured from finite-difference tangents."""
    nu = _check_unit(nu)
    B = tangent_basis(nu)
    n = B.shape[0]
    tangents = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = step
        plus = phi.gradient(_perturbed_direction(nu, e, B))
        minus = phi.gradient(_perturbed_direction(nu, -e, B))
        tangents.append((plus - minus) / (2 * step))
    T = np.array(tangents)
    _, _, vt = np.linalg.svd(T)
    normal = vt[-1]
    return normal if normal @ nu > 0 else -normal


def wulff_second_fundamental_form_fd(phi, nu, step=3e-3, points_per_axis=7):
    """Second fundamental form of ``dK`` at ``grad Phi(nu)`` from a local polynomial fit.

    Boundary points near the base point are written as heights over the
    tangent plane (basis from :func:`tangent_basis`); a quartic least-squares
    fit gives the Hessian of the height, and ``II = -Hessian`` since ``K``
    lies below its tangent plane.
    """
    nu = _check_unit(nu)
    B = tangent_basis(nu)
    n = B.shape[0]
    p0 = phi.gradient(nu)
    ticks = np.linspace(-step, step, points_per_axis)
    offsets = np.stack(np.meshgrid(*([ticks] * n), indexing="ij"), axis=-1).reshape(-1, n)
    pts = phi.gradient(_perturbed_direction(nu, offsets, B)) - p0
    s = pts @ B.T
    hgt = pts @ nu
    scale = np.abs(s).max()
    u = s / scale
    exps = [e for e in np.ndindex(*([5] * n)) if sum(e) <= 4]
    A = np.stack([np.prod(u ** np.array(e), axis=-1) for e in exps], axis=-1)
    coef, *_ = np.linalg.lstsq(A, hgt, rcond=None)
    hess = np.zeros((n, n))
    for c, e in zip(coef, exps):
        if sum(e) != 2:
            continue
        idx = [i for i, k in enumerate(e) for _ in range(k)]
        i, j = idx
        if i == j:
            hess[i, i] = 2 * c
        else:
            hess[i, j] = hess[j, i] = c
    return -hess / scale ** 2
