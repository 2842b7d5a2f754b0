import numpy as np
import pytest

from anigraph.graph_pde import discretize, rectangle_domain, solve_dirichlet
from anigraph.wulff import AnisotropyIntegrand


def random_spd(seed, dim=3, spread=2.0):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(dim, dim)))
    eig = rng.uniform(1.0, spread, dim)
    return Q @ np.diag(eig) @ Q.T


def integrand_suite():
    return {
        "isotropic": AnisotropyIntegrand.isotropic(3),
        "ellipsoidal-0": AnisotropyIntegrand.ellipsoidal(random_spd(0)),
        "ellipsoidal-1": AnisotropyIntegrand.ellipsoidal(random_spd(1)),
        "ellipsoidal-2": AnisotropyIntegrand.ellipsoidal(random_spd(2)),
        "perturbed": AnisotropyIntegrand.perturbed(3, 0.05, 2.0, axis=[1.0, 0.5, 0.3], phase=0.4),
    }


def family_suite():
    s = integrand_suite()
    return {"isotropic": s["isotropic"], "ellipsoidal": s["ellipsoidal-0"],
            "perturbed": s["perturbed"]}


@pytest.fixture(scope="session")
def integrands():
    return integrand_suite()


@pytest.fixture(scope="session")
def families():
    return family_suite()


def scherk(X):
    return np.log(np.cos(X[..., 0])) - np.log(np.cos(X[..., 1]))


_cache = {}


def solved_scherk(h):
    if h not in _cache:
        g = discretize(rectangle_domain(-1.0, 1.0, -1.0, 1.0), h, scherk)
        _cache[h] = solve_dirichlet(AnisotropyIntegrand.isotropic(3), g)
    return _cache[h]


def smooth_data(seed):
    """Random smooth boundary data (low-order trigonometric polynomial)."""
    rng = np.random.default_rng(seed)
    c = rng.normal(scale=0.3, size=(3, 3))

    def f(X):
        out = np.zeros(X.shape[:-1])
        for i in range(3):
            for j in range(3):
                out += c[i, j] * np.cos(i * X[..., 0] + 0.3 * j) * np.sin(j * X[..., 1] + 0.2 * i + 0.1)
        return out
    return f


_solved = {}


def solved_instance(name, seed, h=1 / 16):
    key = (name, seed, h)
    if key not in _solved:
        phi = family_suite()[name]
        g = discretize(rectangle_domain(-1.0, 1.0, -1.0, 1.0), h, smooth_data(seed))
        _solved[key] = solve_dirichlet(phi, g)
    return _solved[key]


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: one test per acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    rows = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            props = dict(getattr(rep, "user_properties", ()))
            if rep.when == "call" and "criterion" in props:
                rows.append((props["criterion"], outcome))
    if rows:
        terminalreporter.section("acceptance criteria")
        for name, outcome in sorted(rows):
            terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
