"""Finite-difference discretization and solver for anisotropic minimal graphs.

The equation is ``tr(D^2 phi(grad w) D^2 w) = 0`` with ``phi(z) = Phi(-z, 1)``,
discretized with second-order central differences on a uniform grid (3-point
stencil in 1D, 9-point stencil in 2D).  Non-rectangular domains are masked
rectangles: nodes of the closed domain whose full stencil lies in the domain
are unknowns, the rest carry Dirichlet values taken at their nearest boundary
point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, MaskIntegrityError
from .wulff import graph_integrand

logger = logging.getLogger(__name__)

OUTSIDE, INTERIOR, DIRICHLET = 0, 1, 2


@dataclass
class DiscreteGraph:
    """Function sampled on a uniform grid ``origin + h * index`` (``ij`` indexing)."""

    origin: np.ndarray
    h: float
    values: np.ndarray
    mask: np.ndarray
    domain: str = "rectangle"

    def __post_init__(self):
        self.origin = np.atleast_1d(np.asarray(self.origin, dtype=float))
        self.values = np.asarray(self.values, dtype=float)
        self.mask = np.asarray(self.mask, dtype=np.int8)
        if self.values.shape != self.mask.shape:
            raise ValueError("values and mask must have the same shape")
        if self.values.ndim != self.origin.size:
            raise ValueError("origin length must equal the grid dimension")
        if not self.h > 0:
            raise ValueError("grid spacing must be positive")

    @property
    def n(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def interior(self):
        return self.mask == INTERIOR

    @property
    def dirichlet(self):
        return self.mask == DIRICHLET

    @property
    def valid(self):
        return self.mask != OUTSIDE

    def axes(self):
        return [self.origin[i] + self.h * np.arange(s) for i, s in enumerate(self.shape)]

    def coords(self):
        """Node coordinates, shape ``grid.shape + (n,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def copy(self, values=None):
        vals = self.values.copy() if values is None else np.asarray(values, dtype=float)
        return replace(self, origin=self.origin.copy(), values=vals, mask=self.mask.copy())

    def data_range(self):
        v = self.values[self.dirichlet]
        if v.size == 0:
            v = self.values[self.valid]
        return float(v.max() - v.min()) if v.size else 0.0

    def validate(self):
        """Check finiteness on valid nodes and that interior stencils stay in the domain."""
        if not np.all(np.isfinite(self.values[self.valid])):
            raise DomainError("grid values must be finite on interior and Dirichlet nodes")
        bad = self.interior & ~_full_stencil(self.valid)
        if np.any(bad):
            idx = tuple(int(i) for i in np.argwhere(bad)[0])
            raise MaskIntegrityError(f"interior node {idx} has a stencil neighbour outside the domain")
        return self


def _shift(a, offset, fill):
    """``out[p] = a[p + offset]`` with ``fill`` beyond the array edge."""
    out = np.full_like(a, fill)
    src, dst = [], []
    for o, s in zip(offset, a.shape):
        if o >= 0:
            src.append(slice(o, s))
            dst.append(slice(0, s - o))
        else:
            src.append(slice(0, s + o))
            dst.append(slice(-o, s))
    out[tuple(dst)] = a[tuple(src)]
    return out


def _offsets(n):
    return [o for o in np.ndindex(*([3] * n))]


def _full_stencil(valid):
    ok = valid.copy()
    for o in _offsets(valid.ndim):
        off = tuple(k - 1 for k in o)
        ok &= _shift(valid, off, False)
    return ok


# -- domains ------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """Closed planar (or interval) domain realized on a masked bounding box.

    ``contains`` and ``project`` act on arrays of points with shape ``(..., n)``;
    ``project`` returns the nearest boundary point.
    """

    kind: str
    lo: tuple
    hi: tuple
    contains: Callable = field(repr=False, compare=False)
    project: Callable = field(repr=False, compare=False)

    @property
    def n(self):
        return len(self.lo)


def _nearest(points, candidates):
    d = np.stack([np.linalg.norm(points - c, axis=-1) for c in candidates], axis=0)
    k = np.argmin(d, axis=0)
    out = np.empty_like(points)
    for i, c in enumerate(candidates):
        out[k == i] = c[k == i]
    return out


def _project_segment(x, a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    d = b - a
    t = np.clip(((x - a) @ d) / (d @ d), 0.0, 1.0)
    return a + t[..., None] * d


def interval_domain(a, b):
    def contains(x):
        return (x[..., 0] >= a - 1e-12) & (x[..., 0] <= b + 1e-12)

    def project(x):
        return np.where(np.abs(x - a) <= np.abs(x - b), a, b).astype(float)

    return Domain("interval", (a,), (b,), contains, project)


def rectangle_domain(x_lo, x_hi, y_lo, y_hi):
    lo, hi = np.array([x_lo, y_lo], float), np.array([x_hi, y_hi], float)

    def contains(x):
        return np.all((x >= lo - 1e-12) & (x <= hi + 1e-12), axis=-1)

    def project(x):
        x = np.clip(x, lo, hi)
        gaps = np.stack([x[..., 0] - lo[0], hi[0] - x[..., 0], x[..., 1] - lo[1], hi[1] - x[..., 1]], -1)
        k = np.argmin(gaps, axis=-1)
        out = x.copy()
        out[..., 0] = np.where(k == 0, lo[0], np.where(k == 1, hi[0], x[..., 0]))
        out[..., 1] = np.where(k == 2, lo[1], np.where(k == 3, hi[1], x[..., 1]))
        return out

    return Domain("rectangle", tuple(lo), tuple(hi), contains, project)


def disk_domain(radius, center=(0.0, 0.0)):
    c = np.asarray(center, float)

    def contains(x):
        return np.linalg.norm(x - c, axis=-1) <= radius + 1e-12

    def project(x):
        v = x - c
        r = np.linalg.norm(v, axis=-1, keepdims=True)
        v = np.where(r > 0, v / np.where(r > 0, r, 1.0), np.array([1.0, 0.0]))
        return c + radius * v

    return Domain("disk", tuple(c - radius), tuple(c + radius), contains, project)


def half_disk_domain(R):
    """``{x1 >= 0, |x| <= R}``: the half-space truncated at radius ``R``."""
    disk = disk_domain(R)

    def contains(x):
        return (x[..., 0] >= -1e-12) & disk.contains(x)

    def project(x):
        arc = disk.project(np.stack([np.maximum(x[..., 0], 0.0), x[..., 1]], -1))
        flat = _project_segment(x, (0.0, -R), (0.0, R))
        return _nearest(x, [flat, arc])

    return Domain("half-disk", (0.0, -R), (R, R), contains, project)


def slab_domain(width, R):
    """``{0 <= x1 <= width, |x2| <= R}``: the slab truncated at ``|x2| = R``."""
    dom = rectangle_domain(0.0, width, -R, R)
    return Domain("slab-strip", dom.lo, dom.hi, dom.contains, dom.project)


def wedge_domain(opening, R):
    """Sector ``{|theta| <= opening/2, |x| <= R}`` with vertex at the origin."""
    if not 0 < opening < np.pi:
        raise DomainError("wedge opening must lie in (0, pi)")
    half = 0.5 * opening
    ends = [np.array([R * np.cos(half), s * R * np.sin(half)]) for s in (1.0, -1.0)]

    def contains(x):
        r = np.linalg.norm(x, axis=-1)
        th = np.arctan2(x[..., 1], x[..., 0])
        return (r <= R + 1e-12) & ((np.abs(th) <= half + 1e-12) | (r <= 1e-12))

    def project(x):
        r = np.linalg.norm(x, axis=-1)
        th = np.clip(np.arctan2(x[..., 1], x[..., 0]), -half, half)
        arc = R * np.stack([np.cos(th), np.sin(th)], -1)
        rays = [_project_segment(x, (0.0, 0.0), e) for e in ends]
        out = _nearest(x, rays + [arc])
        return np.where((r <= 1e-12)[..., None], 0.0, out)

    ymax = R * np.sin(half)
    return Domain("wedge-sector", (0.0, -ymax), (R, ymax), contains, project)


def discretize(domain, h, data=None, placement="project"):
    """Masked grid on ``domain`` with spacing ``h``; Dirichlet nodes take ``data(project(x))``.

    The grid origin is ``domain.lo`` snapped down to a multiple of ``h`` so
    that coordinate lines such as ``x1 = 0`` are grid lines.  With
    ``placement="node"`` the data is evaluated at the Dirichlet node itself,
    which keeps affine data exact when ``data`` extends off the boundary.
    """
    lo = np.floor(np.asarray(domain.lo) / h + 1e-9) * h
    hi = np.ceil(np.asarray(domain.hi) / h - 1e-9) * h
    shape = tuple(int(round((b - a) / h)) + 1 for a, b in zip(lo, hi))
    axes = [a + h * np.arange(s) for a, s in zip(lo, shape)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    inside = domain.contains(X)
    interior = inside & _full_stencil(inside)
    # a node sitting on the boundary of the closed domain is never an unknown
    P = domain.project(X)
    on_boundary = np.linalg.norm(P - X, axis=-1) <= 1e-9 * h
    interior &= ~on_boundary
    mask = np.where(interior, INTERIOR, np.where(inside, DIRICHLET, OUTSIDE)).astype(np.int8)
    values = np.full(shape, np.nan)
    values[inside] = 0.0
    g = DiscreteGraph(lo, float(h), values, mask, domain.kind)
    if data is not None:
        set_dirichlet(g, domain, data, placement)
    return g


def set_dirichlet(g, domain, data, placement="project"):
    """Fill Dirichlet nodes with ``data`` at their nearest boundary points (or at the nodes)."""
    if placement not in ("project", "node"):
        raise ValueError("placement must be 'project' or 'node'")
    X = g.coords()[g.dirichlet]
    if placement == "project":
        X = domain.project(X)
    g.values[g.dirichlet] = np.asarray(data(X), dtype=float)
    return g


# -- differential operators ---------------------------------------------------

def derivatives(g):
    """Central-difference gradient ``(..., n)`` and Hessian ``(..., n, n)`` on the full grid.

    Entries are NaN wherever the stencil leaves the array or touches NaN values.
    """
    w, h, n = g.values, g.h, g.n
    nan = np.nan

    def at(*off):
        return _shift(w, off, nan)

    if n == 1:
        grad = ((at(1) - at(-1)) / (2 * h))[..., None]
        hess = ((at(1) - 2 * w + at(-1)) / h ** 2)[..., None, None]
        return grad, hess
    if n != 2:
        raise DomainError("only base dimensions 1 and 2 are supported")
    gx = (at(1, 0) - at(-1, 0)) / (2 * h)
    gy = (at(0, 1) - at(0, -1)) / (2 * h)
    hxx = (at(1, 0) - 2 * w + at(-1, 0)) / h ** 2
    hyy = (at(0, 1) - 2 * w + at(0, -1)) / h ** 2
    hxy = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * h ** 2)
    grad = np.stack([gx, gy], axis=-1)
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return grad, hess


def _check_dims(phi, g):
    if phi.dim != g.n + 1:
        raise DomainError(f"integrand of ambient dimension {phi.dim} cannot act on {g.n}D graphs")


def _interior_residual(phi, g):
    grad, hess = derivatives(g)
    z, H = grad[g.interior], hess[g.interior]
    _, _, A = graph_integrand(phi, z)
    return np.einsum("...ij,...ij->...", A, H), z, H, A


def residual(phi, g):
    """``tr(D^2 phi(grad w) D^2 w)`` at interior nodes (NaN elsewhere)."""
    _check_dims(phi, g)
    g.validate()
    out = np.full(g.shape, np.nan)
    out[g.interior] = _interior_residual(phi, g)[0]
    return out


# -- solver -------------------------------------------------------------------

@dataclass
class SolveReport:
    iterations: int
    residual: float
    update: float
    gradient_bound: float
    converged: bool
    gradient_flagged: bool = False
    picard_steps: int = 0
    coef_eig_min: float = np.inf
    coef_eig_max: float = 0.0
    tol_res: float = 0.0
    tol_step: float = 0.0
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def default_tolerances(g):
    scale = g.data_range() or 1.0
    return 1e-9 * scale / g.h ** 2, 1e-10 * scale


def _third_derivative_term(phi, z, H, eta=1e-6):
    """``b_k = sum_ij d/dz_k [D^2 phi(z)]_ij H_ij`` by central differences in ``z``."""
    n = z.shape[-1]
    b = np.empty_like(z)
    step = eta * np.maximum(1.0, np.abs(z).max(axis=-1))
    for k in range(n):
        dz = np.zeros_like(z)
        dz[:, k] = step
        Ap = graph_integrand(phi, z + dz)[2]
        Am = graph_integrand(phi, z - dz)[2]
        b[:, k] = np.einsum("...ij,...ij->...", Ap - Am, H) / (2 * step)
    return b


def _stencil_weights(A, b, h, off):
    """Coefficient of ``w[p + off]`` in the linearized operator at each interior node."""
    n = A.shape[-1]
    c = np.zeros(A.shape[0])
    nz = [i for i in range(n) if off[i] != 0]
    if len(nz) == 0:
        c -= 2.0 * np.trace(A, axis1=-2, axis2=-1) / h ** 2
    elif len(nz) == 1:
        i = nz[0]
        c += A[:, i, i] / h ** 2
        if b is not None:
            c += b[:, i] * off[i] / (2 * h)
    elif len(nz) == 2:
        i, j = nz
        c += 2.0 * A[:, i, j] * off[i] * off[j] / (4 * h ** 2)
    return c


def _assemble(g, A, b):
    """Sparse matrix on interior unknowns and the Dirichlet contribution to ``L w``."""
    interior = g.interior
    idx = np.full(g.shape, -1, dtype=np.int64)
    idx[interior] = np.arange(int(interior.sum()))
    N = int(interior.sum())
    rows, cols, vals = [], [], []
    known = np.zeros(N)
    row_ids = np.arange(N)
    wfix = np.where(g.dirichlet, g.values, 0.0)
    for o in _offsets(g.n):
        off = tuple(k - 1 for k in o)
        c = _stencil_weights(A, b, g.h, off)
        if not np.any(c):
            continue
        nb = _shift(idx, off, -1)[interior]
        inside = nb >= 0
        rows.append(row_ids[inside])
        cols.append(nb[inside])
        vals.append(c[inside])
        known += c * _shift(wfix, off, 0.0)[interior]
    J = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, N))
    return J, known


def _coefficient_eigs(A):
    e = np.linalg.eigvalsh(A)
    return float(e.min()), float(e.max())


def _linear_solve(g, A):
    """Solve ``tr(A D^2 w) = 0`` with ``A`` frozen; returns new interior values."""
    L, known = _assemble(g, A, None)
    return spla.spsolve(L, -known)


def solve_dirichlet(phi, g, initial=None, tol_res=None, tol_step=None, max_iter=60,
                    gradient_cap=1e3, max_halvings=30):
    """Solve the anisotropic minimal graph equation with the Dirichlet values of ``g``.

    Damped Newton on the nodal system: the step is halved until the max-norm
    residual decreases; after ``max_halvings`` failed halvings a Picard step
    (coefficients frozen at the current gradient, linear system solved
    exactly) is taken instead.  The default start solves the Picard system at
    ``grad w = 0`` once.

    Returns
    -------
    (DiscreteGraph, SolveReport)
        The report's ``converged`` flag is false when the tolerances were not
        met within ``max_iter``; the returned grid is then the last iterate.
    """
    _check_dims(phi, g)
    g = g.copy()
    g.validate()
    d_res, d_step = default_tolerances(g)
    tol_res = d_res if tol_res is None else tol_res
    tol_step = d_step if tol_step is None else tol_step
    n = g.n
    interior = g.interior
    report = SolveReport(0, np.inf, np.inf, 0.0, False, tol_res=tol_res, tol_step=tol_step)

    def track(A):
        lo, hi = _coefficient_eigs(A)
        report.coef_eig_min = min(report.coef_eig_min, lo)
        report.coef_eig_max = max(report.coef_eig_max, hi)

    if interior.sum() == 0:
        report.converged, report.residual, report.update = True, 0.0, 0.0
        return g, report

    if initial is None:
        A0 = graph_integrand(phi, np.zeros((int(interior.sum()), n)))[2]
        g.values[interior] = _linear_solve(g, A0)
    else:
        init = initial.values if isinstance(initial, DiscreteGraph) else np.asarray(initial, float)
        g.values[interior] = init[interior]

    F, z, H, A = _interior_residual(phi, g)
    res = float(np.abs(F).max())
    step_norm = np.inf
    for it in range(1, max_iter + 1):
        track(A)
        if res <= tol_res and step_norm <= tol_step:
            break
        report.iterations = it
        b = _third_derivative_term(phi, z, H)
        J, _ = _assemble(g, A, b)
        try:
            delta = spla.spsolve(J, -F)
        except RuntimeError:
            delta = np.full_like(F, np.nan)
        old = g.values[interior].copy()
        accepted = False
        alpha = 1.0
        if np.all(np.isfinite(delta)):
            for _ in range(max_halvings + 1):
                g.values[interior] = old + alpha * delta
                F_try = _interior_residual(phi, g)
                r_try = float(np.abs(F_try[0]).max())
                if np.isfinite(r_try) and (r_try < res or r_try <= tol_res):
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            report.picard_steps += 1
            g.values[interior] = old
            g.values[interior] = _linear_solve(g, A)
            F_try = _interior_residual(phi, g)
            r_try = float(np.abs(F_try[0]).max())
        F, z, H, A = F_try
        step_norm = float(np.abs(g.values[interior] - old).max())
        res = r_try
        report.residual, report.update = res, step_norm
        gmax = float(np.linalg.norm(z, axis=-1).max())
        report.gradient_bound = gmax
        if gmax > gradient_cap:
            report.gradient_flagged = True
            report.message = f"gradient bound {gmax:.3g} exceeds cap {gradient_cap:.3g}"
            logger.warning(report.message)
            break
        logger.debug("iter %d residual %.3e step %.3e alpha %.3g", it, res, step_norm, alpha)
    track(A)
    report.residual = res
    report.update = step_norm if np.isfinite(step_norm) else 0.0
    report.gradient_bound = float(np.linalg.norm(z, axis=-1).max())
    report.converged = bool(res <= tol_res and step_norm <= tol_step and not report.gradient_flagged)
    if not report.converged and not report.message:
        report.message = f"no convergence in {max_iter} iterations (residual {res:.3e})"
    return g, report


def max_principle_excess(g):
    """How far interior values escape the range of the Dirichlet values (<= 0 when the principle holds)."""
    bd = g.values[g.dirichlet]
    inner = g.values[g.interior]
    if inner.size == 0:
        return 0.0
    return float(max(inner.max() - bd.max(), bd.min() - inner.min()))


# -- rescaling ----------------------------------------------------------------

def rescale(g, k, origin=None, h=None, shape=None):
    """``u_k(x) = u(k x) / k`` on a shrunk grid.

    By default the target grid is the source grid divided by ``k`` (spacing
    ``h/k``), so node values are exact.  Passing ``origin``, ``h`` and
    ``shape`` resamples onto an arbitrary grid by multilinear interpolation;
    every target node must fall in a source cell whose corners are all in the
    domain.
    """
    if not k > 0:
        raise DomainError("rescaling factor must be positive")
    if origin is None and h is None and shape is None:
        out = g.copy(values=g.values / k)
        out.origin = g.origin / k
        out.h = g.h / k
        return out
    origin = np.atleast_1d(np.asarray(origin, float))
    axes = [o + h * np.arange(s) for o, s in zip(origin, shape)]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals, ok = interpolate(g, k * X)
    if not np.all(ok):
        bad = tuple(int(i) for i in np.argwhere(~ok)[0])
        raise DomainError(f"target node {bad} maps outside the source domain")
    valid = np.ones(tuple(shape), dtype=bool)
    interior = _full_stencil(valid)
    mask = np.where(interior, INTERIOR, DIRICHLET).astype(np.int8)
    return DiscreteGraph(origin, float(h), vals / k, mask, g.domain)


def interpolate(g, X):
    """Multilinear interpolation of ``g`` at points ``X`` (shape ``(..., n)``).

    Returns values and a boolean array marking points whose cell lies in the domain.
    """
    X = np.asarray(X, float)
    u = (X - g.origin) / g.h
    i0 = np.floor(u + 1e-10).astype(int)
    n = g.n
    shape = np.array(g.shape)
    i0 = np.clip(i0, 0, shape - 1)
    frac = u - i0
    frac = np.where(np.abs(frac) < 1e-10, 0.0, frac)
    ok = np.all((u >= -1e-9) & (u <= shape - 1 + 1e-9), axis=-1)
    vals = np.zeros(X.shape[:-1])
    for corner in np.ndindex(*([2] * n)):
        c = np.array(corner)
        idx = np.clip(i0 + c, 0, shape - 1)
        wgt = np.prod(np.where(c == 1, frac, 1.0 - frac), axis=-1)
        tidx = tuple(idx[..., d] for d in range(n))
        corner_ok = g.valid[tidx] | (wgt == 0.0)
        ok &= corner_ok
        vals = vals + np.where(wgt == 0.0, 0.0, wgt * np.nan_to_num(g.values[tidx]))
    return vals, ok
