import numpy as np
import pytest

from thermoformal.base_dynamics import torus_distance
from thermoformal.solenoid import SolenoidPoint, verify_skew_hypotheses


def test_step_examples(lin):
    p = lin.eval(SolenoidPoint(np.array([0.0]), np.array([0.0])))
    assert p.base[0] == 0.0 and p.fiber[0] == pytest.approx(0.5)
    p = lin.eval(SolenoidPoint(np.array([0.5]), np.array([0.0])))
    assert p.base[0] == 0.0 and p.fiber[0] == pytest.approx(-0.5, abs=1e-15)
    b, z = lin.iterate(np.array([0.0]), np.array([0.0 + 0j]), 2)
    assert b[0] == 0.0 and z[0] == pytest.approx(0.625)


def test_project_and_semiconjugacy(pf):
    rng = np.random.default_rng(0)
    b = rng.random((10_000, pf.m))
    z = 0.5 * (rng.random((10_000, pf.m)) + 1j * rng.random((10_000, pf.m)))
    nb, _ = pf.step(b, z)
    assert torus_distance(nb, pf.g.eval(b)).max() <= 1e-12
    p = SolenoidPoint(np.array([0.999]), np.array([0.0]))
    assert pf.project(p)[0] == pytest.approx(0.999) if pf.m == 1 else True


def test_metric_examples(lin):
    p = SolenoidPoint(np.array([0.0]), np.array([0.0]))
    q = SolenoidPoint(np.array([0.5]), np.array([0.0]))
    assert lin.metric(p, p) == 0.0
    assert lin.metric(p, q) == 0.5


def test_holonomy_identity(lin):
    S = lin.attractor_sample(60, 5, seed=1)
    p = S.point(0)
    h = lin.holonomy(p.base, p.base, p)
    assert np.abs(h.fiber - p.fiber).max() <= lin.lambda_s ** lin.n_h + 1e-15


def test_holonomy_closed_form(lin):
    # x = 0 with the all-zeros backward itinerary has fiber sum_j s lambda^j = s / (1 - lambda)
    past = np.zeros((lin.n_h, 1))
    p = SolenoidPoint(np.array([0.0]), lin.replay(past), past)
    h = lin.holonomy(np.array([0.0]), np.array([0.5]), p)
    ypast = lin.backward_along(np.array([0.5]), past)
    lam, s = lin.lambda_s, lin.scale
    expected = sum(s * lam**j * np.exp(2j * np.pi * ypast[j, 0]) for j in range(lin.n_h))
    assert abs(h.fiber[0] - expected) <= lin.lambda_s ** lin.n_h + 1e-15
    assert torus_distance(lin.g.eval(ypast[:1]), np.array([[0.5]]))[0] < 1e-15


def test_attractor_sample_determinism_and_distance(lin):
    a = lin.attractor_sample(60, 1000, seed=3)
    b = lin.attractor_sample(60, 1000, seed=3)
    assert np.array_equal(a.base, b.base) and np.array_equal(a.fiber, b.fiber)
    # a point of Lambda over a.base: replay of its own itinerary from the zero fiber
    z = lin.replay(a.past)
    assert np.abs(z - a.fiber).max() <= 2 * 0.25**60 + 1e-15


def test_attractor_base_uniform(lin):
    S = lin.attractor_sample(60, 100_000, seed=0, keep_past=False)
    h, _ = np.histogram(S.base[:, 0], bins=64, range=(0, 1))
    tv = 0.5 * np.abs(h / h.sum() - 1 / 64).sum()
    assert tv <= 0.02


def test_verify_skew_linear(lin):
    rep = verify_skew_hypotheses(lin, pairs=2000)
    assert rep["H3_fiber_contraction"].value == pytest.approx(0.25, rel=1e-12)
    assert rep["H5_cone_contraction"].value <= 0.125 + 1e-12
    assert rep.passed


def test_verify_skew_h5_fails_honestly(pf1):
    rep = verify_skew_hypotheses(pf1, pairs=2000)
    c = rep["H5_lambda_s_gt_inv_L"]
    assert c.value == 0.25 and not c.passed and c.margin < 0
    assert c.informational


def test_fiber_contraction_exact(pf):
    rng = np.random.default_rng(2)
    b = rng.random((1000, pf.m))
    z1 = 0.3 * np.exp(2j * np.pi * rng.random((1000, pf.m)))
    z2 = 0.6 * np.exp(2j * np.pi * rng.random((1000, pf.m)))
    _, w1 = pf.step(b, z1)
    _, w2 = pf.step(b, z2)
    d0 = pf.distance(b, z1, b, z2)
    d1 = pf.distance(pf.g.eval(b), w1, pf.g.eval(b), w2)
    assert np.all(d1 <= pf.lambda_s * d0 * (1 + 1e-12))


def test_attractor_csv(tmp_path, pf):
    S = pf.attractor_sample(20, 10, seed=0)
    S.to_csv(tmp_path / "a.csv")
    head = (tmp_path / "a.csv").read_text().splitlines()[0]
    assert head == "base_0,base_1,re_fiber_0,im_fiber_0,re_fiber_1,im_fiber_1"
