import numpy as np
import pytest

from anigraph.errors import SetupError
from anigraph.graph_pde import discretize, half_disk_domain, rectangle_domain, rescale
from anigraph.rigidity import (HalfSpaceSetup, HopfProfile, bernstein_experiment, decay_sweep,
                               decay_table, extremal_slopes, hopf_at_scale,
                               hopf_slope_improvement, reflection_pair, strictly_decreasing,
                               window_mask)

from conftest import family_suite

L0 = HalfSpaceSetup("A", 2.0).L


def half_grid(f, R=2.0, h=1 / 16):
    g = discretize(half_disk_domain(R), h)
    g.values[g.valid] = f(g.coords()[g.valid])
    return g


def box(f, h=1 / 16):
    g = discretize(rectangle_domain(0.0, 4.0, -2.5, 2.5), h)
    g.values[g.valid] = f(g.coords()[g.valid])
    return g


# -- setup --------------------------------------------------------------------

def test_setup_validation():
    with pytest.raises(SetupError, match="L\\(0\\) = 0"):
        HalfSpaceSetup("A", 4.0, constant=1.0)
    with pytest.raises(SetupError):
        HalfSpaceSetup("D", 4.0)
    with pytest.raises(SetupError):
        HalfSpaceSetup("A", 4.0, far_kind="wild")
    with pytest.raises(SetupError):
        HalfSpaceSetup("C", 4.0, opening=np.pi)
    with pytest.raises(SetupError):
        HalfSpaceSetup("B", -1.0)


@pytest.mark.parametrize("case", ["A", "B", "C"])
def test_far_shape_vanishes_on_gamma(case):
    s = HalfSpaceSetup(case, 8.0, far_kind="bounded", amplitude=1.0)
    if case == "C":
        t = np.linspace(0.1, 8, 20)
        P = np.concatenate([np.stack([np.cos(a) * t, np.sin(a) * t], -1) for a in (np.pi / 4, -np.pi / 4)])
    else:
        P = np.stack([np.zeros(20), np.linspace(-8, 8, 20)], -1)
    np.testing.assert_allclose(s.far_shape(P), 0.0, atol=1e-15)
    g = s.build(0.25)
    X = g.coords()
    on = g.dirichlet & (np.abs(X[..., 0]) < 1e-12)
    np.testing.assert_allclose(g.values[on], s.L(X[on]), atol=1e-14)


def test_setup_roundtrip_dict():
    s = HalfSpaceSetup("B", 8.0, (0.5, -1.0), A=0.25, far_kind="superlinear", amplitude=2.0)
    d = s.to_dict()
    assert d["slope"] == [0.5, -1.0] and d["case"] == "B"
    m = s.mirrored()
    assert m.slope == (-0.5, 1.0) and m.A == -0.25 and m.amplitude == -2.0


# -- extremal slopes ----------------------------------------------------------

def test_extremal_slopes_examples():
    e = extremal_slopes(box(lambda X: 3.0 * X[:, 0]), L0)
    assert (e.A_minus, e.A_plus) == pytest.approx((3.0, 3.0), abs=1e-12)
    e = extremal_slopes(box(lambda X: np.zeros(len(X))), L0)
    assert (e.A_minus, e.A_plus) == (0.0, 0.0)
    g = box(lambda X: X[:, 0] ** 2)
    e = extremal_slopes(g, L0)
    x1 = g.coords()[..., 0][g.valid]
    assert e.A_plus == pytest.approx(x1.max()) and e.A_minus == pytest.approx(x1[x1 > 0].min())
    assert e.width == pytest.approx(x1.max() - x1[x1 > 0].min())


def test_extremal_slopes_uses_L():
    s = HalfSpaceSetup("A", 2.0, slope=(0.7, -0.4))
    g = half_grid(lambda X: s.L(X) + 2.0 * X[:, 0])
    e = extremal_slopes(g, s.L)
    assert e.A_minus == pytest.approx(2.0) and e.A_plus == pytest.approx(2.0)


def test_extremal_slopes_rejects_left_half():
    g = discretize(rectangle_domain(-1, 1, -1, 1), 0.25)
    g.values[g.valid] = 0.0
    with pytest.raises(SetupError, match="x1 <= 0"):
        extremal_slopes(g, L0)


def test_extremal_slopes_region():
    g = box(lambda X: X[:, 0] ** 2)
    e = extremal_slopes(g, L0, lambda X: X[..., 0] <= 1.0)
    assert e.A_plus == pytest.approx(1.0)
    with pytest.raises(SetupError):
        extremal_slopes(g, L0, lambda X: X[..., 0] > 100)


def test_envelope_rescale_nesting():
    phi = family_suite()["perturbed"]
    rep, sol = bernstein_experiment(phi, HalfSpaceSetup("A", 4.0, (0.3, 0.1), far_kind="bounded",
                                                        amplitude=0.5), h=1 / 8)
    base = extremal_slopes(sol, HalfSpaceSetup("A", 4.0, (0.3, 0.1)).L)
    for k in (2.0, 4.0):
        e = extremal_slopes(rescale(sol, k), HalfSpaceSetup("A", 4.0, (0.3, 0.1)).L)
        assert base.A_minus - 1e-12 <= e.A_minus and e.A_plus <= base.A_plus + 1e-12


# -- Hopf ---------------------------------------------------------------------

def test_hopf_profile_shape():
    p = HopfProfile()
    X = np.array([[0.0, 0.5], [1.0, 0.0], [1e-3, 0.0], [3.5, 0.0]])
    v = p(X)
    assert v[0] == 0.0 and v[3] == 0.0
    assert v[1] == pytest.approx(p.spec.radial(0.0) / p.spec.radial(1 / 3))
    # unit slope in x1 at the origin
    assert v[2] / 1e-3 == pytest.approx(1.0, rel=1e-2)
    assert 0 < p.min_ratio(0.25) < 1


def test_hopf_improves_strict_supersolution():
    g = box(lambda X: X[:, 0])
    res = hopf_slope_improvement(None, g, L0, 0.0)
    assert res.improved and res.eps >= 0.1
    # soundness: the certified gain holds on B_delta
    X = g.coords()
    ball = g.valid & (np.linalg.norm(X, axis=-1) < res.delta)
    assert np.all(g.values[ball] >= (res.eps - 1e-12) * X[ball][:, 0])


def test_hopf_plus_side_mirrors():
    g = box(lambda X: -X[:, 0])
    res = hopf_slope_improvement(None, g, L0, 0.0, side="plus")
    assert res.improved and res.eps >= 0.1
    with pytest.raises(ValueError):
        hopf_slope_improvement(None, g, L0, 0.0, side="both")


def test_hopf_strictness_failure_on_plane():
    g = box(lambda X: 0.5 * X[:, 0])
    res = hopf_slope_improvement(None, g, L0, 0.5)
    assert not res.improved and res.eps == 0.0
    assert len(res.contact) > 1000


def test_hopf_rejects_violation():
    g = box(lambda X: 0.5 * X[:, 0] - 0.01 * np.sin(X[:, 0]) ** 2)
    with pytest.raises(SetupError, match="violates"):
        hopf_slope_improvement(None, g, L0, 0.5)


def test_hopf_soundness_random():
    rng = np.random.default_rng(0)
    for _ in range(10):
        c = rng.uniform(0.05, 0.5, 3)
        g = box(lambda X: X[:, 0] * (c[0] + c[1] * X[:, 0] ** 2 + c[2] * np.cos(X[:, 1]) ** 2))
        res = hopf_slope_improvement(None, g, L0, 0.0)
        assert res.improved
        X = g.coords()
        ball = g.valid & (np.linalg.norm(X, axis=-1) < res.delta) & (X[..., 0] > 0)
        assert np.all(g.values[ball] / X[ball][:, 0] >= res.eps - 1e-12)


def test_hopf_uncovered_support():
    g = discretize(rectangle_domain(0.0, 1.0, -0.5, 0.5), 1 / 16)
    g.values[g.valid] = g.coords()[g.valid][:, 0]
    with pytest.raises(SetupError, match="cover"):
        hopf_slope_improvement(None, g, L0, 0.0)


def test_superlinear_hopf_at_scales():
    phi = family_suite()["isotropic"]
    s = HalfSpaceSetup("A", 16.0, far_kind="superlinear", amplitude=1.0)
    rep, sol = bernstein_experiment(phi, s, h=0.125)
    assert rep.converged
    for k in (1, 2, 4):
        assert hopf_at_scale(phi, sol, s, k).improved


# -- experiments --------------------------------------------------------------

@pytest.mark.parametrize("case", ["A", "B", "C"])
@pytest.mark.parametrize("name", ["isotropic", "ellipsoidal", "perturbed"])
def test_affine_consistent_data(case, name):
    phi = family_suite()[name]
    s = HalfSpaceSetup(case, 8.0, slope=(0.4, -0.3), A=0.6)
    rep, sol = bernstein_experiment(phi, s, h=0.125)
    assert rep.converged
    assert rep.deviation <= 10 * rep.solve["tol_res"]
    assert rep.core_envelope["A_minus"] == pytest.approx(0.6, abs=1e-9)
    assert rep.core_envelope["A_plus"] == pytest.approx(0.6, abs=1e-9)


@pytest.mark.parametrize("case", ["B", "C"])
def test_decay_in_R(case):
    phi = family_suite()["isotropic"]
    rows = decay_sweep(phi, HalfSpaceSetup(case, 4.0, far_kind="bounded", amplitude=1.0))
    assert all(r.converged for r in rows)
    table = decay_table(rows)
    assert [t[0] for t in table] == [4.0, 8.0, 16.0]
    assert strictly_decreasing(t[1] for t in table)
    widths = [t[3] - t[2] for t in table]
    assert strictly_decreasing(widths)


def test_strictly_decreasing():
    assert strictly_decreasing([3, 2, 1])
    assert not strictly_decreasing([3, 3, 1])
    assert strictly_decreasing([1])


def test_window_inside_domain():
    g = HalfSpaceSetup("C", 4.0).build(0.125)
    w = window_mask(g)
    X = g.coords()[w]
    assert w.sum() > 50
    assert np.all(np.linalg.norm(X - [2.0, 0.0], axis=-1) <= 1.0)


def test_reflection_symmetry():
    phi = family_suite()["perturbed"]
    s = HalfSpaceSetup("C", 4.0, (0.2, 0.1), A=0.3, far_kind="bounded", amplitude=0.5)
    a, b, ra, rb = reflection_pair(phi, s, h=0.125)
    assert ra.converged and rb.converged
    assert np.max(np.abs((a.values + b.values)[a.valid])) <= 10 * max(ra.tol_res, rb.tol_res)


def test_failed_solve_makes_no_claims():
    phi = family_suite()["isotropic"]
    s = HalfSpaceSetup("A", 4.0, far_kind="bounded", amplitude=1.0)
    rep, _ = bernstein_experiment(phi, s, solver_options={"max_iter": 1, "tol_res": 1e-30,
                                                          "tol_step": 1e-30})
    assert not rep.converged
    assert np.isnan(rep.deviation) and rep.envelope == {}
