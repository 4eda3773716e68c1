import math

import numpy as np
import pytest

from thermoformal import decomposition as dec
from thermoformal.solenoid import SolenoidPoint

W0011 = np.array([0, 0, 1, 1], np.int8)


def test_birkhoff_fraction_examples():
    assert dec.birkhoff_fraction(np.zeros(4, np.int8)) == 0
    assert dec.birkhoff_fraction(np.ones(4, np.int8)) == 1
    assert dec.birkhoff_fraction(W0011) == 0.5


def test_classify_examples():
    assert dec.classify_segment(np.zeros(4, np.int8), 0.3) == {"in_S": False, "in_G": True}
    assert dec.classify_segment(np.ones(4, np.int8), 1.0) == {"in_S": True, "in_G": False}
    assert dec.classify_segment(W0011, 0.6) == {"in_S": False, "in_G": False}


def test_decompose_examples():
    s, pre, suf = dec.decompose(np.zeros(4, np.int8), 0.6)
    assert s == 4 and suf.size == 0
    s, pre, suf = dec.decompose(np.ones(4, np.int8), 0.6)
    assert s == 0 and dec.classify_segment(suf, 0.6)["in_S"]
    s, pre, suf = dec.decompose(W0011, 0.6)
    assert s == 2 and list(pre) == [0, 0] and list(suf) == [1, 1]


def test_decompose_orbit_segment(lin):
    p = SolenoidPoint(np.array([0.1]), np.array([0.0]))
    seg = dec.make_segment(lin, p, 6)
    s, pre, suf = dec.decompose(seg, 0.6, lin)
    # Omega is empty for the doubling map: everything is good
    assert s == 6 and suf.length == 0


def test_theta_examples():
    assert dec.theta_alpha(1.25, 0.9, 0.0) == pytest.approx(0.9)
    assert dec.theta_alpha(1.25, 0.9, 0.3) == pytest.approx(math.exp(0.3 * math.log(1.25) + 0.7 * math.log(0.9)))
    assert dec.theta_alpha(1.25, 0.9, 0.3) == pytest.approx(0.9932, abs=5e-5)
    assert dec.eq1_bound(2.0, 0.5) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValueError):
        dec.theta_alpha(2.0, 0.5, 0.5)


def test_theta_monotone():
    vals = [dec.theta_alpha(1.05, 0.6, a) for a in np.linspace(0, 0.9, 10)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1


def test_concatenation_examples():
    c, bad = dec.check_concatenation_words(np.zeros((1, 2), np.int8), 0.6)
    assert not bad
    assert dec.in_good(np.zeros(2, np.int8), 0.6)
    rep = dec.check_concatenation(None, 0.6, num_samples=10_000, seed=0)
    assert rep.passed
    rep = dec.check_concatenation(None, 0.5, words=dec.all_words(12))
    assert rep.passed


def test_decomposition_maximal_on_enumeration():
    W = dec.all_words(10)
    for a in (0.5, 0.6, 0.75):
        _, bad = dec.check_decomposition_words(W, a)
        assert not bad


def test_glue_single_segment(lin):
    p = SolenoidPoint(np.array([0.2]), np.array([0.1]))
    seg = dec.make_segment(lin, p, 5)
    r = dec.specification_glue(lin, [seg], 0.05)
    assert r.transitions.size == 0 and float(r.shadow_errors.max()) == 0.0
    assert np.array_equal(r.z.base, p.base)


def test_glue_doubling_base_tau(lin):
    gl = dec.Gluer(lin, 0.05, fiber=False)
    assert gl.tau_bound <= math.ceil(math.log2(1 / 0.05)) + 1
    b, z, past, n = dec.sample_good_segments(lin, 0.6, 2, 15, seed=4)
    segs = [dec.make_segment(lin, SolenoidPoint(b[i], z[i], past[i]), int(n[i])) for i in range(2)]
    res = gl.glue(segs, alpha=0.6)
    v = dec.verify_glue(lin, res, segs, 0.05, fiber=False)
    assert v["pass"] and v["max_shadow_error"] <= 0.05


def test_contraction_doubling(lin):
    prm = dec.DecompositionParams.from_skew(lin, 0.6)
    rep = dec.contraction_bound_check(lin, prm, eta=0.01, num_samples=300, seed=0, n_max=20)
    assert rep.passed and rep["contraction_max_ratio"].value <= 1


def test_nonexpansive_doubling(lin):
    rep = dec.nonexpansive_scan(lin, 0.05, num_samples=50, horizon=30, seed=0)
    assert rep["nonexpansive_survival_fraction"].value == 0.0


def test_nonexpansive_pitchfork(pf):
    rep = dec.nonexpansive_scan(pf, 0.05, num_samples=30, horizon=40, seed=0, alpha=0.8)
    assert rep["nonexpansive_survival_fraction"].value == 0.0
