import csv
import io
import json

import numpy as np
import pytest
from conftest import net_from

from socpdual import cases
from socpdual.conditions import check_c1, check_c2, check_c3
from socpdual.experiment import (
    CSV_COLUMNS,
    EPS_G,
    GapStudyResult,
    InstanceSpec,
    default_jobs,
    emit_report,
    format_table,
    gap_study,
    generate_instances,
    modify_network,
    result_from_json,
    run_gap_study,
)
from socpdual.network import network_to_dict


def test_modify_leaves_satisfying_network_alone():
    net = net_from([0, 1])
    assert modify_network(net, "c1") is net
    assert net.history == ()


def test_modify_c1_pure_load():
    net = net_from([0], p=(-0.3, -0.3), q=(-0.1, -0.1))
    out = modify_network(net, "c1")
    lim = out.limits[0]
    assert (lim.p_min, lim.p_max) == (-0.3, EPS_G)
    assert (lim.q_min, lim.q_max) == (-0.1, EPS_G)
    assert {(m.field, m.old, m.new) for m in out.history} == {("p_max", -0.3, EPS_G), ("q_max", -0.1, EPS_G)}
    assert check_c1(out).holds


def test_modify_c2_equalizes_child_ratio():
    net = cases.chain([0.6, 1.0], box=0.1)
    out = modify_network(net, "c2")
    ratios = out.r / out.x
    assert ratios == pytest.approx([0.6, 0.6])
    assert out.x[1] == pytest.approx(net.x[1] / 0.6)
    (m,) = [m for m in out.history if m.field == "x"]
    assert m.new / m.old == pytest.approx(1.0 / 0.6)
    assert np.array_equal(out.r, net.r)
    assert check_c2(out).holds


@pytest.mark.parametrize("condition, checker", [("c1", check_c1), ("c2", check_c2), ("c3", check_c3)])
@pytest.mark.parametrize("make", [cases.ieee33, cases.synthetic56])
def test_modify_establishes_condition(make, condition, checker):
    net = make()
    out = modify_network(net, condition)
    assert checker(out).holds
    assert np.array_equal(out.r, net.r)
    assert len(out.history) > 0


def test_modify_c3_forces_negative_q_floor():
    out = modify_network(cases.ieee33(), "c3")
    assert np.all(out.bounds["q_min"] <= -EPS_G)
    ratio = out.r / out.x
    for k in range(1, out.n + 1):
        j = int(out.parent[k])
        if j:
            assert ratio[k - 1] >= ratio[j - 1] * (1 - 1e-12)


def test_unknown_condition():
    with pytest.raises(ValueError):
        modify_network(cases.ieee33(), "c4")


def test_instance_generation():
    base = modify_network(cases.ieee33(), "c1")
    assert generate_instances(InstanceSpec(base, 0)) == []
    a = generate_instances(InstanceSpec(base, 2, seed=4))
    b = generate_instances(InstanceSpec(base, 2, seed=4))
    assert [network_to_dict(n) for n in a] == [network_to_dict(n) for n in b]
    assert network_to_dict(a[0]) != network_to_dict(a[1])


def test_many_instances_keep_c1():
    base = modify_network(cases.ieee33(), "c1")
    nets = generate_instances(InstanceSpec(base, 1200, seed=1))
    assert len(nets) == 1200 and all(check_c1(n).holds for n in nets)


def test_dg_modes():
    base = net_from([0], p=(-0.1, -0.1), q=(-0.05, -0.05))
    spec = dict(count=1, seed=0, dg_share=1.0, p_range=(0.02, 0.02), q_range=(0.01, 0.01))
    (disp,) = generate_instances(InstanceSpec(base, mode="dispatchable", **spec))
    (fixed,) = generate_instances(InstanceSpec(base, mode="fixed", **spec))
    assert (disp.limits[0].p_min, disp.limits[0].p_max) == pytest.approx((-0.1, -0.08))
    assert (fixed.limits[0].p_min, fixed.limits[0].p_max) == pytest.approx((-0.08, -0.08))


@pytest.mark.parametrize("bad", [dict(count=-1), dict(mode="x"), dict(dg_share=2.0), dict(p_range=(1.0, 0.0))])
def test_instance_spec_validation(bad):
    kw = dict(base=net_from([0]), count=1) | bad
    with pytest.raises(ValueError):
        InstanceSpec(**kw)


def test_zero_load_instance_is_strong():
    net = net_from([0, 1], p=(0.0, 0.0), q=(0.0, 0.0))
    res = run_gap_study([net])
    (r,) = res.instances
    assert r.solved and abs(r.rel_gap) < 1e-8 and res.n_strong == 1


def test_gap_study_is_deterministic_and_parallel_safe():
    a = gap_study(cases.ieee33(), 4, seed=2, modify="c2", parallelism=1)
    b = gap_study(cases.ieee33(), 4, seed=2, modify="c2", parallelism=2)
    assert [r.primal_obj for r in a.instances] == [r.primal_obj for r in b.instances]
    assert a.r_strong == 1.0 and a.failed == {}


def test_jobs_from_environment(monkeypatch):
    monkeypatch.setenv("SOCPDUAL_JOBS", "3")
    assert default_jobs() == 3
    monkeypatch.setenv("SOCPDUAL_JOBS", "many")
    assert default_jobs() == 1


def test_empty_csv_is_header_only():
    text = emit_report(GapStudyResult([], 1e-4, {}), "csv")
    assert text == ",".join(CSV_COLUMNS) + "\n"


def test_reports_and_round_trip():
    res = gap_study(cases.ieee33(), 3, seed=0, modify="c2")
    rows = list(csv.DictReader(io.StringIO(emit_report(res, "csv"))))
    assert len(rows) == 3 and rows[0]["strong_duality"] == "true"
    back = result_from_json(emit_report(res, "json"))
    assert back.summary() == res.summary()
    doc = json.loads(emit_report(res, "json"))
    assert {"avg_gap", "max_gap", "n_strong", "r_strong"} <= set(doc["summary"])
    table = format_table([("ieee33 (c2)", res)])
    assert "Avg-G" in table and "G+" in table and "N_SD" in table and "R_SD" in table
    assert "100.0%" in table
    with pytest.raises(ValueError):
        emit_report(res, "xml")


def test_failed_instances_are_counted_not_averaged():
    from socpdual.experiment import InstanceResult

    ok = InstanceResult(0, "optimal", "optimal", 1.0, 1.0, 0.0, 0.0, True)
    bad = InstanceResult(1, "max_iters", "optimal", float("nan"), 1.0, float("nan"), float("nan"), False)
    res = GapStudyResult([ok, bad], 1e-4, {})
    assert res.total == 2 and len(res.solved) == 1 and res.failed == {"primal:max_iters/dual:optimal": 1}
    assert res.r_strong == 1.0 and res.avg_gap == 0.0


def test_counts_add_up_and_csv_is_reproducible():
    net = cases.random_radial(12, np.random.default_rng(3), flexible=0.05)
    a = gap_study(net, 6, seed=5)
    b = gap_study(net, 6, seed=5)
    n_weak = sum(1 for r in a.solved if abs(r.rel_gap) >= a.threshold)
    assert a.n_strong + n_weak + sum(a.failed.values()) == a.total == 6
    assert emit_report(a, "csv") == emit_report(b, "csv")
