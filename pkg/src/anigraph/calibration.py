"""Anisotropic area of graphs, the calibration field, and competitor comparisons.

Energies use graph coordinates: ``Phi(nu) dH^n = Phi(-grad w, 1) dx`` by
one-homogeneity, integrated by the midpoint rule on grid cells (the gradient
at a cell center is the average of the cell's edge differences).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SetupError
from .graph_pde import DiscreteGraph, _shift, derivatives, interpolate
from .wulff import graph_integrand


@dataclass(frozen=True)
class Cylinder:
    """``{s < x_axis < t} x B_radius(center)``, ``center`` in the remaining ambient coordinates."""

    axis: int
    center: tuple
    radius: float
    interval: tuple

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("cylinder radius must be positive")
        s, t = self.interval
        if not s < t:
            raise ValueError("cylinder interval must satisfy s < t")

    @property
    def half_width(self):
        s, t = self.interval
        return 0.5 * (t - s)

    def cross_section_area(self):
        d = len(self.center)
        if d == 1:
            return 2.0 * self.radius
        if d == 2:
            return np.pi * self.radius ** 2
        raise NotImplementedError


def cell_density(phi, g):
    """Cell centers, integrand values ``Phi(-grad w, 1)`` and cell validity."""
    w, h, n = g.values, g.h, g.n
    cells = tuple(s - 1 for s in g.shape)
    if n == 1:
        ok = g.valid[:-1] & g.valid[1:]
        z = ((w[1:] - w[:-1]) / h)[:, None]
        mid = 0.5 * (w[1:] + w[:-1])
    elif n == 2:
        v = g.valid
        ok = v[:-1, :-1] & v[1:, :-1] & v[:-1, 1:] & v[1:, 1:]
        w00, w10, w01, w11 = w[:-1, :-1], w[1:, :-1], w[:-1, 1:], w[1:, 1:]
        z = np.stack([(w10 + w11 - w00 - w01) / (2 * h), (w01 + w11 - w00 - w10) / (2 * h)], -1)
        mid = 0.25 * (w00 + w10 + w01 + w11)
    else:
        raise DomainError("only base dimensions 1 and 2 are supported")
    axes = [g.origin[i] + h * (np.arange(cells[i]) + 0.5) for i in range(n)]
    centers = np.stack(np.meshgrid(*axes, indexing="ij"), -1)
    dens = np.zeros(cells)
    dens[ok] = graph_integrand(phi, z[ok])[0]
    return centers, dens, ok, mid


def _region_mask(region, centers, ok):
    if region is None:
        return ok
    if callable(region):
        sel = np.asarray(region(centers), dtype=bool)
    else:
        sel = np.asarray(region, dtype=bool)
        if sel.shape != ok.shape:
            raise DomainError("region mask must have the cell-grid shape")
    return ok & sel


def anisotropic_area(phi, g, region=None):
    """``int_region Phi(-grad w, 1) dx`` by the midpoint rule over complete cells.

    ``region`` is ``None`` (all cells), a predicate on cell-center
    coordinates, or a boolean array over cells.
    """
    centers, dens, ok, _ = cell_density(phi, g)
    sel = _region_mask(region, centers, ok)
    if not np.any(sel):
        warnings.warn("empty region: anisotropic area is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    return float(np.sum(dens[sel]) * g.h ** g.n)


def coarsen(g):
    """Every other node of ``g`` (spacing ``2h``); used for Richardson error estimates."""
    sl = tuple(slice(0, None, 2) for _ in range(g.n))
    vals = g.values[sl]
    mask = g.mask[sl]
    return DiscreteGraph(g.origin.copy(), 2 * g.h, vals.copy(), mask.copy(), g.domain)


def quadrature_budget(phi, g, region=None):
    """Richardson estimate ``|A_h - A_2h| / 3`` of the midpoint-rule error."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fine = anisotropic_area(phi, g, region)
        coarse = anisotropic_area(phi, coarsen(g), region)
    return abs(fine - coarse) / 3.0


def calibration_field(phi, g):
    """``grad Phi(nu)`` at nodes with central differences (NaN where undefined), shape ``(..., n+1)``."""
    grad, _ = derivatives(g)
    out = np.full(g.shape + (g.n + 1,), np.nan)
    ok = np.all(np.isfinite(grad), axis=-1)
    z = grad[ok]
    X = np.concatenate([-z, np.ones(z.shape[:-1] + (1,))], -1)
    out[ok] = phi.gradient(X)
    return out


def calibration_slack(phi, g, directions):
    """Minimum of ``Phi(a) - grad Phi(nu(x)) . a`` over nodes and unit directions ``a``."""
    field = calibration_field(phi, g)
    F = field[np.all(np.isfinite(field), axis=-1)]
    a = np.asarray(directions, float)
    return float(np.min(phi.value(a)[None, :] - F @ a.T))


def _flux(phi, z):
    """Horizontal part of ``grad Phi(-z, 1)``, i.e. ``-grad phi(z)``."""
    flat = z.reshape(-1, z.shape[-1])
    ok = np.all(np.isfinite(flat), axis=-1)
    out = np.full(flat.shape, np.nan)
    out[ok] = -graph_integrand(phi, flat[ok])[1]
    return out.reshape(z.shape)


def calibration_divergence(phi, g):
    """Discrete divergence of ``x -> (grad Phi(-grad w, 1))_{1..n}`` at interior nodes.

    Fluxes live on cell faces (normal derivative by a one-sided difference,
    tangential derivative by averaged central differences), so the stencil
    is the same 3x3 block as the residual's.  Agrees with ``-residual`` to
    ``O(h^2)``.
    """
    w, h, n = g.values, g.h, g.n
    nan = np.nan

    def at(*off):
        return _shift(w, off, nan)

    out = np.full(g.shape, np.nan)
    if n == 1:
        z = ((at(1) - w) / h)[..., None]
        X = _flux(phi, z)[..., 0]
        div = (X - _shift(X, (-1,), nan)) / h
    elif n == 2:
        zx = np.stack([(at(1, 0) - w) / h,
                       (at(1, 1) - at(1, -1) + at(0, 1) - at(0, -1)) / (4 * h)], -1)
        zy = np.stack([(at(1, 1) - at(-1, 1) + at(1, 0) - at(-1, 0)) / (4 * h),
                       (at(0, 1) - w) / h], -1)
        X1 = _flux(phi, zx)[..., 0]
        X2 = _flux(phi, zy)[..., 1]
        div = (X1 - _shift(X1, (-1, 0), nan)) / h + (X2 - _shift(X2, (0, -1), nan)) / h
    else:
        raise DomainError("only base dimensions 1 and 2 are supported")
    out[g.interior] = div[g.interior]
    return out


def competitor_gap(phi, g, v):
    """``A_Phi(v) - A_Phi(g)`` for a competitor with the same domain and Dirichlet values."""
    if v.shape != g.shape or not np.array_equal(v.mask, g.mask) or v.h != g.h \
            or not np.allclose(v.origin, g.origin, rtol=0, atol=1e-12 * g.h):
        raise DomainError("competitor must live on the same grid and domain")
    if not np.array_equal(v.values[g.dirichlet], g.values[g.dirichlet]):
        raise DomainError("competitor boundary values differ from the solution's")
    return anisotropic_area(phi, v) - anisotropic_area(phi, g)


# -- cylinder excision --------------------------------------------------------

@dataclass
class ExcisionResult:
    sheet_area: float
    replacement_area: float
    face_area: float
    lateral_area: float
    half_width: float
    budget: float

    @property
    def gap(self):
        return self.sheet_area - self.replacement_area

    def to_dict(self):
        return {"sheet_area": self.sheet_area, "replacement_area": self.replacement_area,
                "face_area": self.face_area, "lateral_area": self.lateral_area,
                "gap": self.gap, "h": self.half_width, "budget": self.budget}


def _sheet_region(Q, centers, mid):
    s, t = Q.interval
    c2, c3 = Q.center
    x1, x2 = centers[..., 0], centers[..., 1]
    return (x1 > s) & (x1 < t) & ((x2 - c2) ** 2 + (mid - c3) ** 2 < Q.radius ** 2)


def _below_graph_chord(g, x1, x2, c3, half_chord):
    pts = np.stack([np.full_like(x2, x1), x2], -1)
    w, ok = interpolate(g, pts)
    if not np.all(ok):
        raise SetupError("cylinder face leaves the graph's domain")
    return np.clip(w - (c3 - half_chord), 0.0, 2.0 * half_chord)


def excision_gap(phi, g, Q, samples=4096, axial=64):
    """Anisotropic area of the graph inside ``Q`` versus the cut-and-paste competitor.

    The competitor replaces the subgraph ``E`` by ``E \\ Q``: the graph inside
    ``Q`` is removed and the parts of ``dQ`` inside ``E`` are added, namely the
    two disk faces (outer normals ``+e1`` at ``x1 = s`` and ``-e1`` at
    ``x1 = t``) and the lateral side (inner radial normal), each measured
    against the actual graph trace on ``dQ``.

    Returns an :class:`ExcisionResult`; ``budget`` is a Richardson estimate of
    the sheet-area quadrature error.
    """
    if g.n != 2 or phi.dim != 3:
        raise DomainError("excision is implemented for surfaces in R^3")
    if Q.axis != 0 or len(Q.center) != 2:
        raise SetupError("excision cylinder must have axis e1 and a disk cross-section in (x2, x3)")
    centers, dens, ok, mid = cell_density(phi, g)
    sel = ok & _sheet_region(Q, centers, np.where(ok, mid, np.nan))
    if not np.any(sel):
        raise SetupError("graph does not intersect the cylinder")
    sheet = float(dens[sel].sum() * g.h ** 2)
    cg = coarsen(g)
    c_centers, c_dens, c_ok, c_mid = cell_density(phi, cg)
    c_sel = c_ok & _sheet_region(Q, c_centers, np.where(c_ok, c_mid, np.nan))
    budget = abs(sheet - float(c_dens[c_sel].sum() * cg.h ** 2)) / 3.0

    s, t = Q.interval
    c2, c3 = Q.center
    rho = Q.radius
    e1 = np.array([1.0, 0.0, 0.0])
    u = (np.arange(samples) + 0.5) / samples
    x2 = c2 - rho + 2.0 * rho * u
    half = np.sqrt(np.maximum(rho ** 2 - (x2 - c2) ** 2, 0.0))
    dx2 = 2.0 * rho / samples
    face = (phi.value(e1) * _below_graph_chord(g, s, x2, c3, half).sum()
            + phi.value(-e1) * _below_graph_chord(g, t, x2, c3, half).sum()) * dx2

    theta = 2.0 * np.pi * (np.arange(samples) + 0.5) / samples
    x1 = s + (t - s) * (np.arange(axial) + 0.5) / axial
    T, X1 = np.meshgrid(theta, x1, indexing="ij")
    px2 = c2 + rho * np.cos(T)
    px3 = c3 + rho * np.sin(T)
    w, okw = interpolate(g, np.stack([X1, px2], -1))
    if not np.all(okw):
        raise SetupError("cylinder side leaves the graph's domain")
    inner = -np.stack([np.zeros_like(T), np.cos(T), np.sin(T)], -1)
    weight = phi.value(inner) * (px3 < w)
    lateral = float(weight.sum() * (2.0 * np.pi / samples) * rho * (t - s) / axial)
    return ExcisionResult(sheet, face + lateral, float(face), lateral, Q.half_width, budget)
