"""Pucci extremal operator, the radial barrier and vertical sliding of graphs."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class PucciParams:
    lam: float

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError("Pucci parameter must lie in (0, 1)")


def _symmetric(A):
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise DomainError("non-finite matrix entries")
    asym = np.abs(A - np.swapaxes(A, -1, -2)).max() if A.size else 0.0
    if asym > 1e-10:
        warnings.warn(f"symmetrizing matrix with asymmetry {asym:.2e}", RuntimeWarning, stacklevel=3)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def pucci_minus(params, A):
    """``lam * sum(positive eigenvalues) + sum(negative eigenvalues) / lam``.

    ``A`` may carry leading batch axes; the result has the batch shape.
    """
    e = np.linalg.eigvalsh(_symmetric(A))
    lam = params.lam
    return lam * np.where(e > 0, e, 0.0).sum(-1) + np.where(e < 0, e, 0.0).sum(-1) / lam


def pucci_plus(params, A):
    """Maximal Pucci operator, ``-pucci_minus(-A)``."""
    return -pucci_minus(params, -np.asarray(A, dtype=float))


@dataclass(frozen=True)
class BarrierSpec:
    """Radial barrier ``min(|x - c|^-M, delta^-M) - (3/2)^M``."""

    M: float
    delta: float
    center: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("barrier exponent must be >= 1")
        if not 0.0 < self.delta < 1.0 / 3.0:
            raise ValueError("barrier core radius must lie in (0, 1/3)")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))
        if self.radial(1.0 / 3.0) <= 1.0:
            raise ValueError("barrier must exceed 1 on the sphere of radius 1/3")

    @property
    def n(self):
        return len(self.center)

    def radial(self, r):
        r = np.asarray(r, dtype=float)
        return np.minimum(_safe_pow(r, -self.M), self.delta ** -self.M) - 1.5 ** self.M

    def value(self, x):
        r = np.linalg.norm(np.asarray(x, float) - np.asarray(self.center), axis=-1)
        return self.radial(r)

    def gradient(self, x):
        v = np.asarray(x, float) - np.asarray(self.center)
        r = np.linalg.norm(v, axis=-1)
        outside = r > self.delta
        rr = np.where(outside, r, 1.0)
        coef = np.where(outside, -self.M * rr ** (-self.M - 2), 0.0)
        return coef[..., None] * v

    def hessian(self, x):
        """Analytic Hessian: radial eigenvalue ``M(M+1) r^(-M-2)``, tangential ``-M r^(-M-2)``.

        Zero inside the core ``|x - c| <= delta`` (constant branch).
        """
        v = np.asarray(x, float) - np.asarray(self.center)
        r = np.linalg.norm(v, axis=-1)
        outside = r > self.delta
        rr = np.where(outside, r, 1.0)
        M = self.M
        radial = np.where(outside, M * (M + 1) * rr ** (-M - 2), 0.0)
        tangential = np.where(outside, -M * rr ** (-M - 2), 0.0)
        xh = v / rr[..., None]
        outer = xh[..., :, None] * xh[..., None, :]
        eye = np.eye(v.shape[-1])
        return radial[..., None, None] * outer + tangential[..., None, None] * (eye - outer)


def _safe_pow(r, p):
    # tiny radii overflow to inf, which is the intended value
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(r > 0, np.where(r > 0, r, 1.0) ** p, np.inf)


def barrier_phi0(spec, x):
    return spec.value(x)


def barrier_sweep(params, spec, radii=None, count=1000):
    """Radii in ``(delta, 1]`` with the barrier value and Pucci value of its Hessian."""
    if radii is None:
        radii = np.linspace(spec.delta, 1.0, count + 1)[1:]
    radii = np.asarray(radii, float)
    pts = np.zeros((radii.size, spec.n))
    pts[:, 0] = radii
    pts += np.asarray(spec.center)
    return radii, spec.value(pts), pucci_minus(params, spec.hessian(pts))


def _sweep_positive(params, spec, count):
    radii, _, pv = barrier_sweep(params, spec, count=count)
    # exact cancellation at the threshold exponent must not count as positive
    e = spec.M * radii ** (-spec.M - 2)
    scale = params.lam * (spec.M + 1) * e + (spec.n - 1) * e / params.lam
    return bool(np.all(pv > 1e-12 * scale))


def choose_barrier_exponent(params, n, delta, count=1000, max_exponent=10_000):
    """Smallest integer ``M`` making the barrier a strict Pucci subsolution outside ``B_delta``.

    Checked numerically at ``count`` radii in ``(delta, 1]``, together with the
    requirement that the barrier exceed 1 on ``|x| = 1/3``.
    """
    if n < 1 or not 0.0 < delta < 1.0 / 3.0:
        raise DomainError("need n >= 1 and 0 < delta < 1/3")
    center = (0.0,) * n
    for M in range(1, max_exponent + 1):
        if 3.0 ** M - 1.5 ** M <= 1.0:
            continue
        spec = BarrierSpec(M, delta, center)
        if _sweep_positive(params, spec, count):
            return spec
    raise RuntimeError("no admissible barrier exponent found")  # pragma: no cover


def analytic_exponent_threshold(lam, n):
    """Smallest integer ``M >= 1`` with ``M + 1 > (n - 1) / lam^2``."""
    return max(1, int(np.floor((n - 1) / lam ** 2)))


class SlideResult(NamedTuple):
    shift: float
    contact: np.ndarray  # (k, ndim) grid indices, lexicographic order


def slide_until_contact(surface, obstacle, rel_tol=1e-12):
    """Raise ``obstacle`` until it first touches ``surface`` from below.

    ``obstacle`` is an array on the surface's grid, NaN (or ``-inf``) outside
    its subdomain.  Returns the largest shift ``t`` with ``obstacle + t <=
    surface`` on the subdomain and the grid indices where equality holds to
    ``rel_tol`` times the surface's value range there.
    """
    s = surface.values if hasattr(surface, "values") else np.asarray(surface, float)
    o = np.asarray(obstacle, float)
    if o.shape != s.shape:
        raise DomainError("obstacle must live on the surface grid")
    sub = np.isfinite(o)
    if hasattr(surface, "valid"):
        sub &= surface.valid
    if not np.any(sub):
        raise DomainError("obstacle is undefined everywhere")
    if not np.all(np.isfinite(s[sub])):
        raise DomainError("surface is not finite on the obstacle subdomain")
    gap = np.where(sub, s - o, np.inf)
    t = float(gap.min())
    vals = s[sub]
    tol = rel_tol * float(vals.max() - vals.min())
    contact = np.argwhere(sub & (gap - t <= tol))
    return SlideResult(t, contact)


def barrier_epsilon0(phi, spec, h=1.0 / 64, ladder=40):
    """Largest dyadic ``eps`` for which ``eps * phi0`` is a discrete subsolution outside ``B_delta``.

    Conditions: ``eps * max|grad phi0| < 1`` outside the core and the
    discrete residual of ``eps * phi0`` is nonnegative at every node of a
    grid on ``[-1, 1]^n`` whose stencil avoids the closed core.
    """
    from .graph_pde import discretize, rectangle_domain, interval_domain, residual

    n = spec.n
    c = np.asarray(spec.center)
    dom = interval_domain(c[0] - 1, c[0] + 1) if n == 1 else rectangle_domain(c[0] - 1, c[0] + 1, c[1] - 1, c[1] + 1)
    g = discretize(dom, h)
    X = g.coords()
    base = spec.value(X)
    r = np.linalg.norm(X - c, axis=-1)
    far = g.interior & (r > spec.delta + np.sqrt(n) * h * 1.0001)
    grad_max = spec.M * spec.delta ** (-spec.M - 1)
    for k in range(ladder):
        eps = 2.0 ** -k
        if eps * grad_max >= 1.0:
            continue
        g.values[g.valid] = eps * base[g.valid]
        res = residual(phi, g)
        if np.all(res[far] >= 0.0):
            return eps
    return 0.0
