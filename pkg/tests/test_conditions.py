import json

import numpy as np
import pytest
from conftest import net_from

from socpdual import cases
from socpdual.conditions import (
    MU_SCHEDULE,
    adjacent_pairs,
    c1_cases,
    certify_strong_duality,
    check_c1,
    check_c2,
    check_c3,
    check_conditions,
    construct_slater_point,
    search_mu,
    slater_lambdas,
    targets_for_report,
)
from socpdual.experiment import modify_network
from socpdual.formulation import reform_to_physical, residuals


def test_c1_case_table():
    assert c1_cases(-1, 1, -1, 1).tolist() == [[True, True, True, True]]
    # p, q in [0, 1]: only case (iv) allows both lower bounds at zero
    assert c1_cases(0, 1, 0, 1).tolist() == [[False, False, False, True]]
    # pure load: p_max < 0 rules out every case
    assert c1_cases(-0.5, -0.5, -0.1, 0).tolist() == [[False, False, False, False]]


def test_c1_check_reports_witness():
    net = net_from([0, 1], p=(-0.5, -0.5), q=(-0.1, 0.0))
    chk = check_c1(net)
    assert not chk.holds and chk.witness.startswith("node 1")
    assert check_c1(net_from([0, 1])).holds


def test_c2_ratio_flags_on_decreasing_chain():
    net = cases.chain([1.0, 0.8, 0.6])
    chk = check_c2(net)
    assert chk.pair_ok.tolist() == [True, True] and chk.holds
    assert not check_c3(net).holds


def test_uniform_ratios_satisfy_both_orderings():
    net = cases.chain([0.7, 0.7, 0.7, 0.7])
    assert check_c2(net).pair_ok.all() and check_c3(net).pair_ok.all()


def test_star_has_no_adjacent_pairs():
    net = net_from([0, 0, 0], r=[0.01, 0.05, 0.02], x=[0.02, 0.01, 0.03])
    upper, lower = adjacent_pairs(net)
    assert upper.size == 0 and lower.size == 0
    assert check_c2(net).holds and check_c3(net).holds


def test_c3_ratio_flags():
    assert check_c3(cases.chain([0.6, 0.8, 1.0])).pair_ok.all()
    chk = check_c3(cases.chain([1.0, 0.8]))
    assert chk.pair_ok.tolist() == [False] and "r/x ordering" in chk.witness


def test_c3_needs_negative_q_lower_bound():
    net = cases.chain([0.6, 0.8, 1.0], box=0.1)
    assert check_c3(net).holds
    zero_q = net_from([0, 1], p=(-0.1, 0.1), q=(0.0, 0.1), r=0.01, x=[0.02, 0.01])
    assert not check_c3(zero_q).holds


def test_report_serializes():
    rep = check_conditions(cases.ieee33())
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["satisfied"] == [] and len(doc["nodes"]) == 32 and len(doc["pairs"]) == 31  # every branch but 2->1


def test_leaf_lambda_is_one():
    net = net_from([0])
    lam, dp, dq = slater_lambdas(net, "delta_p_zero")
    assert lam.tolist() == [1.0] and dp.tolist() == [0.0]


def test_chain_lambdas_bottom_up():
    net = net_from([0, 1], r=0.01, x=0.02, l_max=1.0)  # equal r * l_max on both branches
    lam, dp, _ = slater_lambdas(net, "delta_p_zero")
    assert lam.tolist() == [2.0, 1.0]
    assert np.all(dp == 0)


def test_targets_drive_the_chosen_delta():
    net = net_from([0, 1, 1, 2], r=[0.01, 0.02, 0.015, 0.03], x=[0.02, 0.01, 0.03, 0.02], l_max=[1, 0.5, 2, 1])
    for target in ("delta_p_zero", "delta_q_zero"):
        lam, dp, dq = slater_lambdas(net, target)
        d = dp if target == "delta_p_zero" else dq
        assert np.max(np.abs(d)) < 1e-14
    _, dp, dq = slater_lambdas(net, "both_nonpos")
    assert np.all(np.maximum(dp, dq) <= 1e-15)
    _, dp, dq = slater_lambdas(net, "both_nonneg")
    assert np.all(np.minimum(dp, dq) >= -1e-15)


def test_c2_ordering_gives_nonpositive_delta_p():
    net = cases.chain([1.0, 0.9, 0.5, 0.5, 0.2])
    _, dp, dq = slater_lambdas(net, "delta_q_zero")
    assert np.all(dp <= 1e-15) and np.allclose(dq, 0, atol=1e-15)


def test_certificate_on_case_iv_network():
    net = net_from([0, 1, 1, 3], p=(0.0, 0.1), q=(0.0, 0.1))
    res = certify_strong_duality(net)
    assert res.verdict == "conditions_met" and res.condition == "c1"
    cert = res.certificate
    assert cert.valid and np.all(cert.cone_margin > 1e-8)
    pt = reform_to_physical(net, cert.point)
    rep = residuals(net, pt)
    assert rep.max_equality < 1e-12 and rep.min_cone_slack > 0 and rep.max_bound_violation <= 1e-12


def test_failing_network_is_not_certified():
    res = certify_strong_duality(net_from([0, 1], p=(-0.5, -0.4), q=(-0.1, 0.0)))
    assert res.verdict == "conditions_not_met" and res.certificate is None
    assert json.loads(json.dumps(res.to_dict()))["certificate"] is None


def test_c2_network_uses_delta_q_zero():
    net = cases.chain([1.0, 0.8, 0.6], box=0.1)
    rep = check_conditions(net)
    cond, targets = targets_for_report(rep, "c2")
    assert cond == "c2" and set(targets) == {"delta_q_zero"}
    res = certify_strong_duality(net, condition="c2")
    assert res.verdict == "conditions_met"
    assert np.allclose(res.certificate.delta_q, 0, atol=1e-14)


def test_forced_condition_that_fails():
    net = cases.chain([0.6, 1.0])
    assert certify_strong_duality(net, condition="c2").verdict == "conditions_not_met"
    with pytest.raises(ValueError):
        certify_strong_duality(net, condition="c9")


def test_search_failure_is_reported():
    net = net_from([0, 1], p=(0.0, 0.1), q=(0.0, 0.1), l_max=1000.0)
    res = certify_strong_duality(net, schedule=(1.0,))
    # mu = 1 puts tau at the (huge) current limit and breaks the voltage floor
    assert res.verdict == "search_failed" and res.certificate is not None and not res.certificate.valid


def test_margins_improve_with_mu():
    net = modify_network(cases.ieee33(), "c1")
    _, targets = targets_for_report(check_conditions(net))
    prev = None
    for mu in MU_SCHEDULE[:12]:
        m = construct_slater_point(net, targets, mu).cone_margin
        if prev is not None:
            assert np.all(m >= prev - 1e-15)
        prev = m


def test_search_mu_raises_with_last_attempt():
    from socpdual.conditions import CertificateSearchExhausted

    net = net_from([0], p=(0.0, 0.1), q=(0.0, 0.1), l_max=1000.0)
    with pytest.raises(CertificateSearchExhausted) as exc:
        search_mu(net, ("both_nonneg",), schedule=(1.0,))
    assert exc.value.last.mu == 1.0


def test_mu_below_one_rejected():
    with pytest.raises(ValueError):
        construct_slater_point(net_from([0]), "delta_p_zero", 0.5)
