import math
from dataclasses import replace

import numpy as np
import pytest

from retrace_sde.core import make_rng
from retrace_sde.errors import NonPositiveVolume, ValidationError
from retrace_sde.pkpd import (PKPDParams, effect_report, fit_arm_surrogate, floor_hit_fraction, pkpd_drift,
                              simulate_cohort, treatment_policy, volume_from_diameter)

P = PKPDParams()


def test_drift_examples():
    assert pkpd_drift(P.K, 0.0, 0, P) == pytest.approx(0.0, abs=1e-9)
    x = 1500.0
    both = pkpd_drift(x, 0.0, 1, P) - pkpd_drift(x, 0.0, 0, P)
    assert both == pytest.approx(-(P.alpha_r + P.beta_r) * x)
    with pytest.raises(NonPositiveVolume):
        pkpd_drift(0.0, 0.0, 0, P)


def test_drift_duplicate_oracle():
    r = make_rng(0)
    for _ in range(50):
        x, C, d = r.uniform(1, 1e6), r.uniform(0, 1), int(r.integers(0, 2))
        ref = (P.rho * math.log(P.K / x) - P.beta_c * C - (P.alpha_r * d + P.beta_r * d ** 2)) * x
        assert pkpd_drift(x, C, d, P) == pytest.approx(ref, rel=1e-12)


def test_volume_from_diameter():
    assert volume_from_diameter(2.0) == pytest.approx(4 * math.pi / 3)
    assert volume_from_diameter(14.0) == pytest.approx(1436.755, abs=1e-3)
    v = volume_from_diameter(np.array([13.0, 14.0, 15.0]))
    assert np.all(np.diff(v) > 0)
    with pytest.raises(ValidationError):
        volume_from_diameter(-1.0)


def test_policy():
    C, d, p = treatment_policy(5.0, 5.0, 1.0, 2.0, make_rng(0))
    assert p == pytest.approx(0.5) and C == pytest.approx(0.5)
    _, _, p0 = treatment_policy(np.array([1.0, 9.0]), 5.0, 1.0, 0.0, make_rng(0))
    np.testing.assert_allclose(p0, 0.5)
    _, _, ps = treatment_policy(np.linspace(0, 10, 20), 5.0, 2.0, 2.0, make_rng(0))
    assert np.all(np.diff(ps) > 0)
    a = treatment_policy(np.linspace(0, 10, 20), 5.0, 2.0, 2.0, make_rng(3))[1]
    b = treatment_policy(np.linspace(0, 10, 20), 5.0, 2.0, 2.0, make_rng(3))[1]
    assert np.array_equal(a, b)


def test_params_validation():
    with pytest.raises(ValidationError):
        PKPDParams(bsv=1.0)
    with pytest.raises(ValidationError):
        PKPDParams(rho=-1.0)
    assert P.dt == pytest.approx(0.25)


def test_noise_free_untreated_grows():
    c = simulate_cohort(5, replace(P, sigma_tumor=1e-300, sigma_obs=1e-300), "never_treat", make_rng(1))
    for s in c:
        assert not s.treated and len(s.factual_path) == P.n_steps
        assert np.all(np.diff(s.latent_factual) > 0)


def test_shared_noise_coupling_and_determinism():
    c = simulate_cohort(50, P, "always_treat", make_rng(2))
    for s in c:
        assert s.treated and np.all(s.chemo == P.max_chemo) and np.all(s.radio == 1)
        assert np.all(s.latent_factual[1:] < s.latent_counterfactual[1:])
        assert np.all(s.factual_path > 0)
    c2 = simulate_cohort(50, P, "always_treat", make_rng(2))
    assert all(np.array_equal(a.factual_path, b.factual_path) for a, b in zip(c, c2))
    assert floor_hit_fraction(c) == 0.0


def test_policy_is_confounded():
    c = simulate_cohort(2000, P, "policy", make_rng(3))
    x0 = np.array([s.x0 for s in c])
    t = np.array([s.treated for s in c])
    assert 0.3 < t.mean() < 0.7
    assert x0[t].mean() > x0[~t].mean()


def test_surrogate_recovers_affine_log_drift():
    r = make_rng(4)
    y = np.empty((200, 40))
    y[:, 0] = r.normal(7.0, 0.2, 200)
    for t in range(39):
        y[:, t + 1] = y[:, t] + (-0.1 * y[:, t] + 0.5) * 0.25 + 0.01 * np.sqrt(0.25) * r.standard_normal(200)
    s = fit_arm_surrogate(y, 0.25)
    assert s.a1 == pytest.approx(-0.1, abs=0.01) and s.a0 == pytest.approx(0.5, abs=0.07)
    assert s.s2 == pytest.approx(1e-4, rel=0.1)


def test_effect_report_invariants():
    c = simulate_cohort(200, P, "policy", make_rng(5))
    rep = effect_report(c, "true_order", rng=make_rng(6), n_mc=64)
    assert rep.ate == pytest.approx(rep.ite.mean(), abs=0)
    assert rep.cf_rmse >= 0 and rep.ate < 0 and rep.true_ate < 0
    with pytest.raises(ValidationError):
        effect_report(c, "true_order", t_star=0)
    with pytest.raises(ValidationError):
        effect_report(c, "bogus", rng=make_rng(0))


def test_exact_params_teb_small():
    c = simulate_cohort(300, P, "policy", make_rng(7))
    rep = effect_report(c, exact_params=True, rng=make_rng(8), n_mc=1024)
    assert abs(rep.teb) <= 0.05 * abs(rep.ate)


def test_zero_effect_ate_near_zero():
    null = replace(P, beta_c=0.0, alpha_r=0.0, beta_r=0.0)
    c = simulate_cohort(300, null, "policy", make_rng(9))
    rep = effect_report(c, exact_params=True, rng=make_rng(10), n_mc=256)
    assert abs(rep.true_ate) < 1e-9
    assert abs(rep.ate) < 1.0  # MC noise only; volumes are ~1500 mm^3


def test_corrupted_pipelines_run():
    c = simulate_cohort(60, P, "policy", make_rng(11))
    for pipe in ("retrace", "mst", "dpt"):
        rep = effect_report(c, pipe, rng=make_rng(12), n_mc=16)
        assert 0 <= rep.extras["accuracy_treated"] <= 1
