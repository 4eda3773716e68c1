import math

import numpy as np
import pytest

from thermoformal.base_dynamics import (BaseMap, BaseMapConfig, ConfigError, ProfileError,
                                        build_expansion_profile, torus_distance,
                                        verify_base_hypotheses)


def test_eval_doubling(doubling):
    assert doubling.eval(np.array([0.3]))[0] == pytest.approx(0.6, abs=1e-15)
    assert doubling.eval(np.array([0.75]))[0] == pytest.approx(0.5, abs=1e-15)


def test_pitchfork_fixed_point(pitch1):
    assert pitch1.eval(np.array([0.0]))[0] == 0.0


def test_inverse_branches_doubling(doubling):
    pre = np.sort(doubling.inverse_branches(np.array([0.5]))[:, 0])
    np.testing.assert_allclose(pre, [0.25, 0.75], atol=1e-15)
    pre = np.sort(doubling.inverse_branches(np.array([0.0]))[:, 0])
    np.testing.assert_allclose(pre, [0.0, 0.5], atol=1e-15)


def test_inverse_branches_pitchfork_zero(pitch1):
    pre = pitch1.inverse_branches(np.array([0.0]))[:, 0]
    assert pre.size == 2
    assert np.min(np.minimum(pre, 1 - pre)) < 1e-12
    # the other branch is a genuine preimage
    assert torus_distance(pitch1.eval(pre[:, None]), np.zeros((2, 1))).max() < 1e-12


def test_local_lipschitz_examples(doubling, pitch1):
    x = np.random.default_rng(0).random((100, 1))
    np.testing.assert_allclose(doubling.local_lipschitz(x), 0.5)
    assert pitch1.local_lipschitz(np.array([0.0])) == pytest.approx(1 / (2 - 1.05), rel=1e-9)
    assert pitch1.local_lipschitz(np.array([0.5])) == pytest.approx(0.5, rel=1e-12)


def test_profile_empty_for_doubling(doubling):
    prof = build_expansion_profile(doubling)
    assert prof.empty and prof.q == 0 and math.isnan(prof.L_global)


def test_profile_pitchfork(pitch1):
    prof = build_expansion_profile(pitch1)
    assert prof.q == 1
    assert len(prof.omega_centers) == 1
    assert prof.in_omega(np.array([0.0]))
    assert prof.L_global == pytest.approx(1 / 0.95, rel=1e-5)
    js = prof.to_json()
    assert set(js) >= {"omega_boxes", "L_global", "lambda_u", "q", "deg"}


def test_verify_doubling(doubling):
    rep = verify_base_hypotheses(doubling, build_expansion_profile(doubling))
    assert rep.passed
    assert rep["exactness_partition"].value <= 7


def test_verify_pitchfork(pitch1):
    rep = verify_base_hypotheses(pitch1, build_expansion_profile(pitch1))
    assert rep.passed
    assert all(c.margin > 0 or c.name == "H1_in_omega" for c in rep.checks)


def test_near_degenerate_pitchfork_is_flagged():
    from thermoformal.decomposition import eq1_bound

    g = BaseMap(BaseMapConfig(m=1, kind="pitchfork", linear_factors=(2,), delta=1.999, lambda_u=0.9))
    prof = build_expansion_profile(g)
    # g'(0) = 0.001, so L(0) = 1000: Omega = {L >= lambda_u} keeps (H1) formally true,
    # and the degeneration surfaces as a collapsed admissible alpha range instead
    assert prof.L_global == pytest.approx(1000.0, rel=1e-4)
    assert eq1_bound(prof.L_global, prof.lambda_u) < 0.02


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        BaseMapConfig(m=4, linear_factors=(2, 2, 2, 2))
    with pytest.raises(ConfigError):
        BaseMapConfig(kind="linear", delta=0.5)
    with pytest.raises(ConfigError):
        BaseMap(BaseMapConfig(kind="pitchfork", delta=2.5))


def test_degree_invariance():
    a = BaseMap(BaseMapConfig(m=2, kind="linear", linear_factors=(2, 3)))
    b = BaseMap(BaseMapConfig(m=2, kind="pitchfork", linear_factors=(2, 3), delta=1.05,
                              pert_radius=0.02, pert_radius_transverse=0.18))
    assert a.deg == b.deg == 6


def test_inverse_branches_are_preimages_and_distinct(pf):
    g = pf.g
    y = np.random.default_rng(1).random((10_000, g.m))
    pre = g.inverse_branches(y)
    assert pre.shape == (10_000, g.deg, g.m)
    err = torus_distance(g.eval(pre), y[:, None, :])
    assert err.max() <= 1e-12
    for i in range(g.deg):
        for j in range(i + 1, g.deg):
            assert torus_distance(pre[:, i], pre[:, j]).min() >= 1e-9
