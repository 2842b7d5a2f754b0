"""Half-space Bernstein experiments: extremal slopes, Hopf-type slope gains, decay in R.

Domains lie in ``{x1 >= 0}`` with the flat boundary ``Gamma`` through the
origin and ``u = L`` there, ``L`` linear.  Unbounded domains are truncated
at radius ``R`` and carry explicit far-boundary data, so every conclusion is
a trend in ``R``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .calibration import Cylinder, excision_gap
from .elliptic import BarrierSpec, slide_until_contact
from .errors import SetupError
from .graph_pde import (discretize, half_disk_domain, rectangle_domain,
                        rescale, slab_domain, solve_dirichlet, wedge_domain)

logger = logging.getLogger(__name__)

CASES = ("A", "B", "C")
FAR_KINDS = ("none", "bounded", "superlinear")


@dataclass(frozen=True)
class HalfSpaceSetup:
    """Truncated domain and boundary data ``L + A x1 + far``.

    ``far`` is ``amplitude`` times a shape that vanishes on ``Gamma``:
    ``x1/|x|`` (A), ``sin(pi x1 / c)`` (B), ``cos(pi theta / opening)`` (C),
    multiplied by ``|x|^2`` when ``far_kind`` is ``"superlinear"``.  It is
    evaluated at the nearest boundary point of each Dirichlet node; the
    affine part is evaluated at the node itself, so ``far_kind="none"``
    gives exactly affine data.
    """

    case: str
    R: float
    slope: tuple = (0.0, 0.0)
    constant: float = 0.0
    A: float = 0.0
    far_kind: str = "none"
    amplitude: float = 0.0
    width: float = 4.0
    opening: float = np.pi / 2

    def __post_init__(self):
        if self.case not in CASES:
            raise SetupError(f"case must be one of {CASES}")
        if self.constant != 0.0:
            raise SetupError("the boundary linear function must satisfy L(0) = 0")
        if self.far_kind not in FAR_KINDS:
            raise SetupError(f"far_kind must be one of {FAR_KINDS}")
        if not self.R > 0:
            raise SetupError("truncation radius must be positive")
        if self.case == "B" and not self.width > 0:
            raise SetupError("slab width must be positive")
        if self.case == "C" and not 0 < self.opening < np.pi:
            raise SetupError("wedge opening must lie in (0, pi)")
        object.__setattr__(self, "slope", tuple(float(s) for s in self.slope))

    def L(self, x):
        return np.asarray(x, float) @ np.asarray(self.slope)

    def domain(self):
        if self.case == "A":
            return half_disk_domain(self.R)
        if self.case == "B":
            return slab_domain(self.width, self.R)
        return wedge_domain(self.opening, self.R)

    def far_shape(self, P):
        r = np.linalg.norm(P, axis=-1)
        if self.case == "A":
            s = np.where(r > 0, P[..., 0] / np.where(r > 0, r, 1.0), 0.0)
        elif self.case == "B":
            s = np.sin(np.pi * np.clip(P[..., 0], 0.0, self.width) / self.width)
        else:
            th = np.arctan2(P[..., 1], P[..., 0])
            s = np.where(r > 0, np.cos(np.pi * th / self.opening), 0.0)
        if self.far_kind == "superlinear":
            s = s * r ** 2
        return s

    def build(self, h):
        """Masked grid with Dirichlet data filled in."""
        dom = self.domain()
        g = discretize(dom, h)
        X = g.coords()[g.dirichlet]
        vals = self.L(X) + self.A * X[:, 0]
        if self.far_kind != "none" and self.amplitude != 0.0:
            vals = vals + self.amplitude * self.far_shape(dom.project(X))
        g.values[g.dirichlet] = vals
        return g

    def mirrored(self):
        """Setup with negated data (for the reflection symmetry check)."""
        return HalfSpaceSetup(self.case, self.R, tuple(-s for s in self.slope), 0.0, -self.A,
                              self.far_kind, -self.amplitude, self.width, self.opening)

    def to_dict(self):
        return {"case": self.case, "R": self.R, "slope": list(self.slope), "A": self.A,
                "far_kind": self.far_kind, "amplitude": self.amplitude,
                "width": self.width, "opening": self.opening}


@dataclass
class SlopeEnvelope:
    A_minus: float
    A_plus: float
    argmin: tuple
    argmax: tuple
    trend: float = 0.0  # |x| of the maximizer of |u - L|/x1 relative to the farthest node

    @property
    def width(self):
        return self.A_plus - self.A_minus

    def to_dict(self):
        return {"A_minus": self.A_minus, "A_plus": self.A_plus, "argmin": list(self.argmin),
                "argmax": list(self.argmax), "width": self.width, "trend": self.trend}


def extremal_slopes(g, L, region=None):
    """Discrete ``A_+ = max (u - L)/x1`` and ``A_- = min (u - L)/x1`` over nodes with ``x1 > 0``.

    ``L`` is a callable on points.  ``region`` optionally restricts the nodes
    (boolean grid array or predicate on coordinates).

    Raises
    ------
    SetupError
        if an interior node has ``x1 <= 0``.
    """
    X = g.coords()
    bad = g.interior & (X[..., 0] <= 0)
    if np.any(bad):
        node = tuple(int(i) for i in np.argwhere(bad)[0])
        raise SetupError(f"interior node {node} has x1 <= 0")
    sel = g.valid & (X[..., 0] > 1e-12 * g.h)
    if region is not None:
        sel &= region(X) if callable(region) else np.asarray(region, bool)
    if not np.any(sel):
        raise SetupError("no nodes with x1 > 0 in the region")
    q = np.full(g.shape, np.nan)
    q[sel] = (g.values[sel] - L(X[sel])) / X[sel][:, 0]
    flat = np.where(sel, q, np.inf)
    imin = np.unravel_index(np.argmin(flat), g.shape)
    flat = np.where(sel, q, -np.inf)
    imax = np.unravel_index(np.argmax(flat), g.shape)
    r = np.linalg.norm(X, axis=-1)
    dev = np.where(sel, np.abs(q), -np.inf)
    iext = np.unravel_index(np.argmax(dev), g.shape)
    return SlopeEnvelope(float(q[imin]), float(q[imax]), tuple(float(v) for v in X[imin]),
                         tuple(float(v) for v in X[imax]),
                         float(r[iext] / r[g.valid].max()))


# -- Hopf-type improvement ----------------------------------------------------

@dataclass(frozen=True)
class HopfProfile:
    """``psi(x) = x1 max(phi0((x - p)/s), 0) / phi0(|p|/s)``.

    A barrier cross-section centered at ``p`` inside ``{x1 > 0}`` and scaled
    by ``s``, times the linear factor ``x1``: it vanishes on ``Gamma`` and
    where ``phi0 <= 0``, and has slope 1 in ``x1`` at the origin.
    """

    spec: BarrierSpec = field(default_factory=lambda: BarrierSpec(4, 0.3))
    p: tuple = (1.0, 0.0)
    s: float = 3.0

    def __call__(self, x):
        x = np.asarray(x, float)
        p = np.asarray(self.p)
        base = self.spec.value((x - p) / self.s)
        norm = float(self.spec.radial(np.linalg.norm(p) / self.s))
        return np.maximum(x[..., 0], 0.0) * np.maximum(base, 0.0) / norm

    def support_radius(self):
        return self.s * (2.0 / 3.0)

    def min_ratio(self, delta):
        """``min psi/x1`` over ``B_delta``, attained at the point farthest from ``p``."""
        p = np.asarray(self.p)
        far = np.linalg.norm(p) + delta
        return float(max(self.spec.radial(far / self.s), 0.0)
                     / self.spec.radial(np.linalg.norm(p) / self.s))


@dataclass
class HopfResult:
    improved: bool
    eps: float
    delta: float
    barrier_eps: float
    contact: list
    message: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def hopf_slope_improvement(phi, g, L, A, side="minus", delta=0.25, profile=None, ladder=40,
                           rel_tol=1e-12):
    """Certify ``g >= L + (A + eps) x1`` on ``B_delta`` (``side="minus"``) by sliding a barrier.

    The barrier ``L + A x1 + e psi`` is tried for ``e = 1, 1/2, 1/4, ...``;
    the first ``e`` whose slide from below lands at a nonnegative shift
    certifies the gain ``eps = e * min_{B_delta} psi/x1``.  ``side="plus"``
    mirrors everything (``g <= L + (A - eps) x1``).  ``phi`` is accepted for
    interface symmetry; the certificate only uses the comparison.

    A zero gap somewhere at ``x1 >= 1/2`` inside the barrier's support
    (strictness failure) yields ``improved=False`` with the contact set of
    the plane itself; "zero" means at most ``rel_tol`` times the value range
    of ``g``.

    Raises
    ------
    SetupError
        if ``g`` lies below ``L + A x1`` (above, for ``"plus"``) at some node.
    """
    if side not in ("minus", "plus"):
        raise ValueError("side must be 'minus' or 'plus'")
    profile = HopfProfile() if profile is None else profile
    sign = 1.0 if side == "minus" else -1.0
    X = g.coords()
    gap = np.full(g.shape, np.nan)
    v = g.valid
    gap[v] = sign * (g.values[v] - L(X[v]) - A * X[v][:, 0])
    tol = rel_tol * max(g.data_range(), 1.0)
    below = v & (gap < -tol)
    if np.any(below):
        node = tuple(int(i) for i in np.argwhere(below)[0])
        raise SetupError(f"node {node} at x={X[node]} violates g >= L + A x1 (gap {gap[node]:.3e})")
    psi = profile(X)
    sub = v & (psi > 0)
    p = np.asarray(profile.p)
    rad = profile.support_radius()
    lo, hi = X[(0,) * g.n], X[tuple(np.array(g.shape) - 1)]
    boxed = np.all(hi >= p + rad - 1e-12) and np.all(lo[1:] <= p[1:] - rad + 1e-12)
    support = (np.linalg.norm(X - p, axis=-1) < rad) & (X[..., 0] > 0)
    if not boxed or np.any(support & ~v):
        raise SetupError("grid does not cover the barrier support")
    need = v & support
    plane = np.argwhere(need & (gap <= tol))
    strict = need & (X[..., 0] >= 0.5)
    if np.any(gap[strict] <= tol):
        return HopfResult(False, 0.0, delta, 0.0, plane.tolist(),
                          "gap vanishes at distance >= 1/2 from the boundary")
    surface = g.copy(values=np.where(v, gap, np.nan))
    last = None
    for k in range(ladder):
        e = 2.0 ** -k
        obstacle = np.where(sub, e * psi, np.nan)
        res = slide_until_contact(surface, obstacle)
        if res.shift >= 0.0:
            eps = e * profile.min_ratio(delta)
            return HopfResult(eps > 0, eps, delta, e, res.contact.tolist(),
                              "barrier fits below the graph")
        last = res
    return HopfResult(False, 0.0, delta, 0.0, last.contact.tolist(), "ladder exhausted")


# -- end-to-end experiments ---------------------------------------------------

def window_mask(g, R0=4.0):
    X = g.coords()
    c = np.array([R0 / 2.0, 0.0])
    return g.valid & (np.linalg.norm(X - c, axis=-1) <= R0 / 4.0)


def affine_fit(g, mask):
    """Least-squares affine ``l(x) = c + b.x`` over the masked nodes; returns ``(c, b, max|u - l|)``."""
    X = g.coords()[mask]
    u = g.values[mask]
    M = np.column_stack([np.ones(len(X)), X])
    coef, *_ = np.linalg.lstsq(M, u, rcond=None)
    d = float(np.max(np.abs(M @ coef - u)))
    return float(coef[0]), coef[1:].tolist(), d


@dataclass
class ExperimentReport:
    setup: dict
    h: float
    solve: dict
    converged: bool
    deviation: float = np.nan
    fit: dict = field(default_factory=dict)
    envelope: dict = field(default_factory=dict)
    core_envelope: dict = field(default_factory=dict)
    hopf: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)

    def to_dict(self):
        return dict(self.__dict__)


def bernstein_experiment(phi, setup, h=0.125, R0=4.0, hopf=False, solver_options=None):
    """Solve the truncated problem and measure how close ``u`` is to affine on the fixed window.

    Returns ``(report, solution)``.  On solver failure the report carries the
    solve diagnostics and no deviation or slope claims.
    """
    g = setup.build(h)
    sol, rep = solve_dirichlet(phi, g, **(solver_options or {}))
    out = ExperimentReport(setup.to_dict(), float(h), rep.to_dict(), bool(rep.converged))
    if not rep.converged:
        logger.warning("solve failed for %s: %s", setup, rep.message)
        return out, sol
    win = window_mask(sol, R0)
    c, b, d = affine_fit(sol, win)
    out.deviation = d
    out.fit = {"constant": c, "slope": b, "window_center": [R0 / 2.0, 0.0],
               "window_radius": R0 / 4.0}
    out.envelope = extremal_slopes(sol, setup.L).to_dict()
    out.core_envelope = extremal_slopes(
        sol, setup.L, lambda X: np.linalg.norm(X, axis=-1) <= R0).to_dict()
    if hopf:
        out.hopf = {str(k): hopf_at_scale(phi, sol, setup, k).to_dict() for k in (1, 2, 4)}
    return out, sol


def hopf_at_scale(phi, sol, setup, k, A=None):
    """Hopf check on the rescaling ``u_k(x) = u(k x)/k`` with candidate ``A`` (default ``setup.A``)."""
    return hopf_slope_improvement(phi, rescale(sol, k), setup.L, setup.A if A is None else A)


def decay_sweep(phi, setup, radii=(4.0, 8.0, 16.0), h=0.125, R0=4.0):
    """``bernstein_experiment`` over truncation radii with a fixed window; rows in radius order."""
    rows = []
    for R in radii:
        s = HalfSpaceSetup(setup.case, float(R), setup.slope, 0.0, setup.A, setup.far_kind,
                           setup.amplitude, setup.width, setup.opening)
        rep, _ = bernstein_experiment(phi, s, h=h, R0=R0)
        rows.append(rep)
    return rows


def decay_table(rows):
    """Plot-ready rows ``(R, d, A_minus, A_plus)`` using the core envelope."""
    out = []
    for rep in rows:
        env = rep.core_envelope or {"A_minus": np.nan, "A_plus": np.nan}
        out.append([rep.setup["R"], rep.deviation, env["A_minus"], env["A_plus"]])
    return out


def strictly_decreasing(seq):
    seq = list(seq)
    return all(b < a for a, b in zip(seq, seq[1:]))


# -- synthetic two-sheet excision ---------------------------------------------

def sigmoid_sheet(eps=0.02, height=2.0, h=0.002, half_width=0.1, extent=1.2):
    """``w = height tanh(x1/eps)`` on ``[-2 half_width, 2 half_width] x [-extent, extent]``."""
    dom = rectangle_domain(-2 * half_width, 2 * half_width, -extent, extent)
    g = discretize(dom, h)
    X = g.coords()
    g.values[g.valid] = height * np.tanh(X[g.valid][:, 0] / eps)
    return g


def sigmoid_excision(phi, eps=0.02, half_width=0.1, radius=1.0, h=0.002, height=2.0):
    """Excision comparison on a steep sigmoid across ``Q = {|x1| < half_width} x B_radius``.

    The sheet is a near-vertical wall with normal close to ``-e1``, standing
    in for a pair of sheets with slopes ``A_- = -inf``.
    """
    g = sigmoid_sheet(eps, height, h, half_width, extent=radius + 0.2)
    Q = Cylinder(0, (0.0, 0.0), radius, (-half_width, half_width))
    return excision_gap(phi, g, Q)


def reflection_pair(phi, setup, h=0.125):
    """Solutions for ``(phi, setup)`` and ``(vertical mirror of phi, negated setup)``."""
    a, ra = solve_dirichlet(phi, setup.build(h))
    b, rb = solve_dirichlet(phi.vertical_mirror(), setup.mirrored().build(h))
    return a, b, ra, rb


__all__ = [
    "HalfSpaceSetup", "SlopeEnvelope", "extremal_slopes", "HopfProfile", "HopfResult",
    "hopf_slope_improvement", "ExperimentReport", "bernstein_experiment", "decay_sweep",
    "decay_table", "strictly_decreasing", "sigmoid_excision", "sigmoid_sheet",
    "reflection_pair", "window_mask", "affine_fit", "hopf_at_scale",
]
