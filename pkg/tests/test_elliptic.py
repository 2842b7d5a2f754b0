import numpy as np
import pytest

from anigraph.elliptic import (BarrierSpec, PucciParams, analytic_exponent_threshold,
                               barrier_epsilon0, barrier_phi0, barrier_sweep,
                               choose_barrier_exponent, pucci_minus, pucci_plus,
                               slide_until_contact)
from anigraph.errors import DomainError
from anigraph.graph_pde import discretize, rectangle_domain, residual
from anigraph.wulff import AnisotropyIntegrand

from conftest import family_suite, solved_instance


def sym(rng, n=2):
    A = rng.normal(size=(n, n))
    return A + A.T


# -- pucci --------------------------------------------------------------------

def test_pucci_examples():
    p = PucciParams(0.5)
    assert pucci_minus(p, np.zeros((2, 2))) == 0.0
    assert pucci_minus(p, np.eye(2)) == pytest.approx(1.0)
    assert pucci_minus(p, np.diag([2.0, -1.0])) == pytest.approx(-1.0)


def test_pucci_params_range():
    for lam in (0.0, 1.0, -0.2):
        with pytest.raises(ValueError):
            PucciParams(lam)


def test_pucci_monotone():
    rng = np.random.default_rng(0)
    p = PucciParams(0.4)
    for _ in range(200):
        A = sym(rng, 3)
        C = rng.normal(size=(3, 3))
        B = A + C @ C.T
        assert pucci_minus(p, A) <= pucci_minus(p, B) + 1e-12


def test_pucci_sign_asymmetry():
    rng = np.random.default_rng(1)
    p = PucciParams(0.3)
    for _ in range(200):
        A = sym(rng, 2)
        assert pucci_minus(p, A) + pucci_minus(p, -A) <= 1e-12
        assert pucci_plus(p, A) == pytest.approx(-pucci_minus(p, -A))


def test_pucci_batched_and_symmetrization_warning():
    p = PucciParams(0.5)
    As = np.stack([np.eye(2), np.diag([2.0, -1.0])])
    np.testing.assert_allclose(pucci_minus(p, As), [1.0, -1.0])
    with pytest.warns(RuntimeWarning, match="symmetrizing"):
        v = pucci_minus(p, np.array([[1.0, 1.0], [0.0, 1.0]]))
    assert np.isfinite(v)


def test_pucci_nonfinite():
    with pytest.raises(DomainError):
        pucci_minus(PucciParams(0.5), np.array([[np.inf, 0.0], [0.0, 1.0]]))


# -- barrier ------------------------------------------------------------------

def test_barrier_value_examples():
    spec = BarrierSpec(2, 0.1)
    assert barrier_phi0(spec, np.array([1 / 3, 0.0])) == pytest.approx(6.75)
    for M in (1, 2, 5):
        s = BarrierSpec(M, 0.1)
        assert barrier_phi0(s, np.array([0.0, 1.0])) == pytest.approx(1 - 1.5 ** M)
    inside = np.array([[0.0, 0.0], [0.05, 0.02], [0.0, 0.1]])
    np.testing.assert_allclose(barrier_phi0(spec, inside), 0.1 ** -2 - 2.25)


def test_barrier_radially_nonincreasing_and_negative_far():
    spec = BarrierSpec(3, 0.2, (0.5, -0.5))
    r = np.linspace(0, 1.5, 400)
    v = spec.radial(r)
    assert np.all(np.diff(v) <= 0)
    assert np.all(v[r > 2 / 3] < 0)


def test_barrier_spec_validation():
    with pytest.raises(ValueError):
        BarrierSpec(0.5, 0.1)
    with pytest.raises(ValueError):
        BarrierSpec(2, 0.4)


def test_barrier_hessian_matches_differences():
    spec = BarrierSpec(3, 0.1, (0.1, 0.2))
    rng = np.random.default_rng(2)
    pts = spec.center + rng.uniform(0.2, 0.9, (20, 1)) * np.stack(
        [np.cos(t := rng.uniform(0, 2 * np.pi, 20)), np.sin(t)], -1)
    step = 1e-5
    H = spec.hessian(pts)
    for k in range(2):
        e = np.zeros(2)
        e[k] = step
        fd = (spec.gradient(pts + e) - spec.gradient(pts - e)) / (2 * step)
        np.testing.assert_allclose(H[:, :, k], fd, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(spec.hessian(np.array(spec.center)), np.zeros((2, 2)))


def test_choose_exponent_reference():
    spec = choose_barrier_exponent(PucciParams(0.5), 2, 0.1)
    assert spec.M == 4
    _, _, pv = barrier_sweep(PucciParams(0.5), spec, count=1000)
    assert np.all(pv > 0)
    assert spec.radial(1 / 3) > 1


def test_choose_exponent_one_dimensional():
    for lam in (0.2, 0.5, 0.9):
        spec = choose_barrier_exponent(PucciParams(lam), 1, 0.1)
        assert spec.M == 1
        assert spec.radial(1 / 3) > 1


@pytest.mark.parametrize("lam", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("n", [2, 3])
def test_exponent_matches_analytic_threshold(lam, n):
    spec = choose_barrier_exponent(PucciParams(lam), n, 0.1)
    assert spec.M == analytic_exponent_threshold(lam, n)
    assert spec.M + 1 > (n - 1) / lam ** 2


def test_choose_exponent_domain():
    with pytest.raises(DomainError):
        choose_barrier_exponent(PucciParams(0.5), 0, 0.1)
    with pytest.raises(DomainError):
        choose_barrier_exponent(PucciParams(0.5), 2, 0.5)


# -- slide --------------------------------------------------------------------

def grid(values):
    g = discretize(rectangle_domain(-1, 1, -1, 1), 0.25)
    g.values[...] = values(g.coords())
    return g


def test_slide_constant():
    g = grid(lambda X: np.zeros(X.shape[:-1]))
    res = slide_until_contact(g, np.full(g.shape, -1.0))
    assert res.shift == 1.0
    assert len(res.contact) == g.valid.sum()


def test_slide_paraboloid_vertex():
    g = grid(lambda X: (X ** 2).sum(-1))
    res = slide_until_contact(g, np.zeros(g.shape))
    assert res.shift == 0.0
    assert [tuple(c) for c in res.contact] == [(4, 4)]


def test_slide_translation_equivariance():
    rng = np.random.default_rng(3)
    g = grid(lambda X: np.sin(3 * X[..., 0]) * X[..., 1])
    obs = np.where(rng.uniform(size=g.shape) > 0.3, rng.normal(size=g.shape), np.nan)
    a = slide_until_contact(g, obs)
    b = slide_until_contact(g.copy(values=g.values + 2.5), obs)
    assert b.shift == pytest.approx(a.shift + 2.5, abs=1e-14)
    np.testing.assert_array_equal(a.contact, b.contact)


def test_slide_errors():
    g = grid(lambda X: X[..., 0])
    with pytest.raises(DomainError):
        slide_until_contact(g, np.full(g.shape, np.nan))
    with pytest.raises(DomainError):
        slide_until_contact(g, np.zeros((2, 2)))


def test_slide_against_solved_graph_is_direct_min():
    phi = family_suite()["isotropic"]
    sol, rep = solved_instance("isotropic", 5)
    assert rep.converged
    spec = BarrierSpec(4, 0.1, (0.2, -0.1))
    eps = 1e-3
    obs = eps * spec.value(sol.coords())
    res = slide_until_contact(sol, obs)
    gap = np.where(sol.valid, sol.values - obs, np.inf)
    assert res.shift == gap.min()
    assert res.contact.shape[0] >= 1


def test_slide_contact_avoids_core_when_closeness_fails():
    # surface far above eps at the core centre: the barrier touches outside B_delta
    phi = family_suite()["isotropic"]
    sol, _ = solved_instance("isotropic", 5)
    c = np.array([0.0, 0.0])
    spec = BarrierSpec(4, 0.1, tuple(c))
    X = sol.coords()
    lifted = sol.copy(values=sol.values + 50.0 * np.exp(-((X - c) ** 2).sum(-1) / 0.02))
    res = slide_until_contact(lifted, 1e-3 * spec.value(X))
    for idx in res.contact:
        assert np.linalg.norm(X[tuple(idx)] - c) > spec.delta


# -- subsolution transfer -----------------------------------------------------

@pytest.mark.parametrize("name", ["isotropic", "ellipsoidal", "perturbed"])
def test_epsilon0_gives_discrete_subsolution(name):
    phi = family_suite()[name]
    spec = BarrierSpec(4, 0.1)
    eps = barrier_epsilon0(phi, spec, h=1 / 32)
    assert 0 < eps
    assert eps * spec.M * spec.delta ** (-spec.M - 1) < 1
    g = discretize(rectangle_domain(-1, 1, -1, 1), 1 / 32)
    g.values[g.valid] = eps * spec.value(g.coords()[g.valid])
    r = np.linalg.norm(g.coords(), axis=-1)
    far = g.interior & (r > spec.delta + np.sqrt(2) / 32 * 1.0001)
    assert np.all(residual(phi, g)[far] >= 0)
