"""Sliding scaled Wulff shapes under a graph: contact records and the measure estimate.

Copies ``y + rK`` are raised from below until they touch the surface.  The
part of ``rK`` that can touch is its upper cap, the graph over the horizontal
projection of ``rK`` of the top boundary.  With ``a`` the slope at a cap
point, the cap is parametrized by

    xi(a) = -r grad phi(a),    top(a) = r (phi(a) - a . grad phi(a)),

where ``phi(z) = Phi(-z, 1)``; the outer normal there is ``(-a, 1)/|(-a, 1)|``
and the point equals ``r grad Phi(nu)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import IntegrityError, SetupError
from .graph_pde import derivatives, discretize, disk_domain, solve_dirichlet
from .wulff import curvature_radius_bounds, graph_integrand, tangent_basis

logger = logging.getLogger(__name__)


class WulffCap:
    """Upper boundary of ``rK`` as a graph over offsets from the center's projection.

    ``depth(eta)`` (also ``__call__``) is the convex profile measured down
    from the apex, ``eta`` being the offset from the apex's projection; for
    ``K`` the unit ball it is ``r - sqrt(r^2 - |eta|^2)``.
    """

    def __init__(self, phi, r, slope_cap=4.0):
        if not r > 0:
            raise ValueError("cap radius must be positive")
        self.phi = phi
        self.r = float(r)
        self.n = phi.dim - 1
        self.slope_cap = float(slope_cap)
        zero = np.zeros((1, self.n))
        val, grad, _ = graph_integrand(phi, zero)
        self.apex_offset = -self.r * grad[0]
        self.apex_height = self.r * float(val[0])

    def slopes(self, xi, iters=60):
        """Slope ``a`` with ``xi(a) = xi``; NaN where unresolved or steeper than ``slope_cap``."""
        xi = np.atleast_2d(np.asarray(xi, float))
        a = np.zeros_like(xi)
        for _ in range(iters):
            _, grad, hess = graph_integrand(self.phi, a)
            F = self.r * grad + xi
            step = -np.linalg.solve(self.r * hess, F[..., None])[..., 0]
            size = np.linalg.norm(step, axis=-1, keepdims=True)
            step = np.where(size > 1.0, step / np.maximum(size, 1e-300), step)
            a = a + step
            size = np.linalg.norm(a, axis=-1, keepdims=True)
            a = a * np.minimum(1.0, 4 * self.slope_cap / np.maximum(size, 1e-300))
        _, grad, _ = graph_integrand(self.phi, a)
        err = np.linalg.norm(self.r * grad + xi, axis=-1)
        bad = (err > 1e-12 * max(self.r, 1.0)) | (np.linalg.norm(a, axis=-1) > self.slope_cap)
        a[bad] = np.nan
        return a

    def top(self, xi):
        """Height of the cap above the center at horizontal offsets ``xi``, with slopes."""
        a = self.slopes(xi)
        ok = np.all(np.isfinite(a), axis=-1)
        h = np.full(a.shape[0], np.nan)
        if np.any(ok):
            val, grad, _ = graph_integrand(self.phi, a[ok])
            h[ok] = self.r * (val - np.einsum("...i,...i->...", a[ok], grad))
        return h, a

    def depth(self, eta):
        eta = np.atleast_2d(np.asarray(eta, float))
        h, _ = self.top(eta + self.apex_offset)
        return self.apex_height - h

    __call__ = depth

    def point(self, a):
        """Ambient cap point ``r grad Phi(-a, 1)`` for slopes ``a``."""
        a = np.atleast_2d(a)
        X = np.concatenate([-a, np.ones(a.shape[:-1] + (1,))], -1)
        return self.r * self.phi.gradient(X)


def lower_wulff_profile(phi, r, slope_cap=4.0):
    """Sliding profile of ``rK`` (see :class:`WulffCap`)."""
    return WulffCap(phi, r, slope_cap)


@dataclass
class ContactRecord:
    center: np.ndarray
    contact: np.ndarray
    normal: np.ndarray
    height: float
    jacobian_det: float
    gradient: float
    node: tuple
    flagged: bool = False
    reason: str = ""

    def row(self):
        return [*self.center, *self.contact, *self.normal, self.height, self.jacobian_det,
                int(self.flagged)]


CSV_HEADER = ["y1", "y2", "y3", "x1", "x2", "x3", "nu1", "nu2", "nu3", "height", "det", "flagged"]


@dataclass
class ContactSummary:
    delta: float
    r: float
    C2: float
    C3: float
    G: np.ndarray = field(repr=False)
    ball_area: float = 0.0
    G_area: float = 0.0
    deficit: float = 0.0
    max_height: float = 0.0
    max_gradient: float = 0.0
    max_normal_dev: float = 0.0
    max_det: float = 0.0
    C0: float = 0.0
    C1: float = 0.0
    flagged: int = 0
    centers: int = 0
    eps: float = 0.0

    def to_dict(self):
        d = {k: v for k, v in self.__dict__.items() if k != "G"}
        d["deficit_over_sqrt_delta"] = self.deficit / np.sqrt(self.delta)
        d["height_over_delta_3_2"] = self.max_height / self.delta ** 1.5
        d["gradient_over_sqrt_delta"] = self.max_gradient / np.sqrt(self.delta)
        return d


class CapStencil(NamedTuple):
    offsets: np.ndarray      # (K, n) integer lattice offsets, lexicographic
    top: np.ndarray          # (K,) cap height above the center
    slopes: np.ndarray       # (K, n)
    rim: np.ndarray          # (K,) offset has a lattice neighbour outside the stencil


def cap_stencil(cap, h):
    """Cap heights on the lattice ``h Z^n`` of offsets from a center node."""
    reach = int(np.ceil(cap.r * 4.0 / h)) + 1
    ticks = np.arange(-reach, reach + 1)
    K = np.stack(np.meshgrid(*([ticks] * cap.n), indexing="ij"), -1).reshape(-1, cap.n)
    top, a = cap.top(K * h)
    ok = np.isfinite(top)
    K, top, a = K[ok], top[ok], a[ok]
    present = {tuple(k) for k in K}
    nbrs = [np.array(o) - 1 for o in np.ndindex(*([3] * cap.n)) if any(x != 1 for x in o)]
    rim = np.array([any(tuple(k + d) not in present for d in nbrs) for k in K], dtype=bool)
    return CapStencil(K, top, a, rim)


def slide_caps(surface, stencil, centers):
    """Vertical contact of the cap at each center node (indices ``(m, n)``).

    Returns the center heights ``y_{n+1}`` and the stencil index of the
    touching offset; ties go to the lexicographically smallest contact node.
    Offsets leaving the surface's domain are ignored.
    """
    w = surface.values
    valid = surface.valid
    shape = np.array(surface.shape)
    best = np.full(len(centers), np.inf)
    arg = np.full(len(centers), -1)
    for k, (off, top) in enumerate(zip(stencil.offsets, stencil.top)):
        idx = centers + off
        inside = np.all((idx >= 0) & (idx < shape), axis=-1)
        tidx = tuple(np.clip(idx, 0, shape - 1).T)
        ok = inside & valid[tidx]
        gap = np.where(ok, w[tidx] - top, np.inf)
        better = gap < best
        best = np.where(better, gap, best)
        arg = np.where(better, k, arg)
    return best, arg


def graph_shape_operator(grad, hess):
    """Shape operator ``-d nu`` of a graph with upward normal, in the basis ``tangent_basis(nu)``.

    Positive definite for convex-up graphs.  Returns ``(nu, basis, S)``.
    """
    grad = np.asarray(grad, float)
    hess = np.asarray(hess, float)
    n = grad.size
    W = np.sqrt(1.0 + grad @ grad)
    nu = np.append(-grad, 1.0) / W
    top = np.vstack([-hess, np.zeros((1, n))]) / W
    dW = hess @ grad / W
    Jnu = top - np.outer(np.append(-grad, 1.0), dW) / W ** 2
    B = tangent_basis(nu)
    S = B @ (-Jnu @ B[:, :n].T)
    return nu, B, 0.5 * (S + S.T)


def contact_jacobian(phi, surface, record, r, tol=1e-8, derivs=None):
    """``det D_x y`` with ``D_x y = I + r D_T^2 Phi(nu) II_S`` on the tangent plane at the contact.

    ``II_S`` comes from central differences of the surface at the contact
    node.  Raises :class:`IntegrityError` if ``D_x y`` has an eigenvalue below
    ``-tol``, which cannot happen at a genuine contact from below.
    ``derivs`` may pass a precomputed ``derivatives(surface)``.
    """
    grad, hess = derivatives(surface) if derivs is None else derivs
    node = tuple(record.node)
    p, H = grad[node], hess[node]
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(H))):
        raise IntegrityError(f"contact node {node} has no full difference stencil")
    nu, B, S = graph_shape_operator(p, H)
    HT = B @ phi.hessian(nu) @ B.T
    D = np.eye(len(S)) + r * HT @ S
    eig = np.linalg.eigvals(D)
    if np.min(eig.real) < -tol:
        raise IntegrityError(
            f"D_x y has eigenvalue {np.min(eig.real):.3e} at node {node}: "
            "surface dips below the sliding Wulff shape")
    return float(np.linalg.det(D))


def center_map(phi, surface, r):
    """Horizontal center positions ``(x - r grad Phi(nu(x)))_h`` at every node (NaN if undefined)."""
    grad, _ = derivatives(surface)
    n = surface.n
    out = np.full(surface.shape + (n,), np.nan)
    ok = np.all(np.isfinite(grad), axis=-1)
    z = grad[ok]
    X = np.concatenate([-z, np.ones(z.shape[:-1] + (1,))], -1)
    out[ok] = surface.coords()[ok] - r * phi.gradient(X)[:, :n]
    return out


def center_map_fd_determinant(phi, surface, node, r):
    """Determinant of the finite-difference Jacobian of the horizontal center map at ``node``."""
    Y = center_map(phi, surface, r)
    n = surface.n
    node = np.asarray(node)
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n, int)
        e[j] = 1
        J[:, j] = (Y[tuple(node + e)] - Y[tuple(node - e)]) / (2 * surface.h)
    return float(np.linalg.det(J))


def default_C3(phi, C2):
    return 2.0 * C2 * curvature_radius_bounds(phi)[1]


def run_contact_experiment(phi, surface, delta, C2=0.1, C3=None, center=None, slope_cap=4.0):
    """Slide ``rK``, ``r = C2 sqrt(delta)``, under ``surface`` from every center over ``B_{1/3 - C3 sqrt(delta)}``.

    Returns the list of :class:`ContactRecord` (center order) and a
    :class:`ContactSummary` whose ``G`` is the grid mask of contact points.
    Contacts on the rim of the resolved cap, or at nodes without a full
    difference stencil, are flagged and excluded from ``G``.

    Raises
    ------
    SetupError
        if the center ball is empty or a contact escapes the cylinder over ``B_{1/3}``.
    """
    if surface.n != phi.dim - 1:
        raise SetupError("integrand and surface dimensions disagree")
    c = np.zeros(surface.n) if center is None else np.asarray(center, float)
    C3 = default_C3(phi, C2) if C3 is None else float(C3)
    r = C2 * np.sqrt(delta)
    rad = 1.0 / 3.0 - C3 * np.sqrt(delta)
    if rad <= 0:
        raise SetupError(f"center ball radius 1/3 - C3 sqrt(delta) = {rad:.3g} is empty")
    X = surface.coords()
    dist = np.linalg.norm(X - c, axis=-1)
    center_mask = surface.valid & (dist < rad)
    ball_mask = surface.valid & (dist < 1.0 / 3.0)
    centers = np.argwhere(center_mask)
    cap = WulffCap(phi, r, slope_cap)
    st = cap_stencil(cap, surface.h)
    heights, arg = slide_caps(surface, st, centers)
    derivs = derivatives(surface)
    grad = derivs[0]
    n = surface.n
    records = []
    G = np.zeros(surface.shape, dtype=bool)
    flagged = 0
    for cidx, yh, k in zip(centers, heights, arg):
        xnode = tuple(cidx + st.offsets[k])
        a = st.slopes[k]
        nu = np.append(-a, 1.0) / np.sqrt(1.0 + a @ a) + 0.0
        x_h = X[xnode]
        if np.linalg.norm(x_h - c) >= 1.0 / 3.0:
            raise SetupError(
                f"contact at {x_h} escaped the cylinder over B_1/3; decrease C2 or increase C3")
        rec = ContactRecord(center=np.append(X[tuple(cidx)], yh),
                            contact=np.append(x_h, surface.values[xnode]), normal=nu,
                            height=float(surface.values[xnode]), jacobian_det=np.nan,
                            gradient=float(np.linalg.norm(grad[xnode])), node=xnode)
        if st.rim[k]:
            rec.flagged, rec.reason = True, "rim"
        elif not surface.interior[xnode]:
            rec.flagged, rec.reason = True, "boundary"
        else:
            rec.jacobian_det = contact_jacobian(phi, surface, rec, r, derivs=derivs)
            G[xnode] = True
        flagged += rec.flagged
        records.append(rec)
    good = [rec for rec in records if not rec.flagged]
    h2 = surface.h ** n
    ball_area = float(ball_mask.sum() * h2)
    G_area = float((G & ball_mask).sum() * h2)
    eps = _center_value(surface, c)
    summary = ContactSummary(
        delta=float(delta), r=float(r), C2=float(C2), C3=C3, G=G, ball_area=ball_area,
        G_area=G_area, deficit=ball_area - G_area,
        max_height=max((rec.height for rec in good), default=0.0),
        max_gradient=max((rec.gradient for rec in good), default=0.0),
        max_normal_dev=max((float(np.linalg.norm(rec.normal - np.eye(n + 1)[-1])) for rec in good),
                           default=0.0),
        max_det=max((rec.jacobian_det for rec in good), default=0.0),
        C0=first_step_constant(surface, delta, c) / eps if eps > 0 else np.inf,
        flagged=int(flagged), centers=len(records), eps=eps)
    summary.C1 = max(summary.max_height / delta ** 1.5, summary.max_gradient / np.sqrt(delta),
                     summary.deficit / np.sqrt(delta))
    return records, summary


def _center_value(surface, c):
    X = surface.coords()
    d = np.linalg.norm(X - c, axis=-1)
    d = np.where(surface.valid, d, np.inf)
    return float(surface.values[np.unravel_index(np.argmin(d), d.shape)])


def first_step_constant(surface, delta, center=None):
    """Max over ``delta``-cells tiling ``B_1/3`` of the minimal surface height in the cell."""
    c = np.zeros(surface.n) if center is None else np.asarray(center, float)
    X = surface.coords()
    rel = X - c
    inball = surface.valid & (np.linalg.norm(rel, axis=-1) < 1.0 / 3.0)
    cell = np.floor(rel[inball] / delta).astype(int)
    vals = surface.values[inball]
    _, inv = np.unique(cell, axis=0, return_inverse=True)
    mins = np.full(inv.max() + 1, np.inf)
    np.minimum.at(mins, inv.ravel(), vals)
    return float(mins.max())


def pinched_test_surface(phi, h, amplitude=1e-3):
    """Solved minimal graph over ``B_1`` with positive boundary data ``amplitude (1/4 + (1 + cos t)^2 / 4)``.

    The surface is positive, small, and lowest near the side ``theta = pi``.
    """
    def data(P):
        th = np.arctan2(P[..., 1], P[..., 0])
        return amplitude * (0.25 + 0.25 * (1.0 + np.cos(th)) ** 2)

    g = discretize(disk_domain(1.0), h, data)
    sol, report = solve_dirichlet(phi, g)
    if not report.converged:
        raise SetupError(f"pinched surface solve failed: {report.message}")
    return sol, report
