import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from socpdual.network import make_network

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def node(v=(0.81, 1.21), p=(-0.1, 0.1), q=(-0.1, 0.1)):
    return {"v_min": v[0], "v_max": v[1], "p_min": p[0], "p_max": p[1], "q_min": q[0], "q_max": q[1]}


def net_from(parents, r=0.01, x=0.02, l_max=1.0, v0=1.0, **node_kw):
    """Network with root ``0`` and node ``k`` hanging from ``parents[k-1]``."""
    n = len(parents)
    rs = np.broadcast_to(r, n)
    xs = np.broadcast_to(x, n)
    lm = np.broadcast_to(l_max, n)
    nodes = {str(k): node(**node_kw) for k in range(1, n + 1)}
    branches = [
        {"child": str(k), "parent": str(parents[k - 1]), "r": float(rs[k - 1]), "x": float(xs[k - 1]), "l_max": float(lm[k - 1])}
        for k in range(1, n + 1)
    ]
    return make_network(v0, nodes, branches, root="0")


@pytest.fixture
def chain2():
    return net_from([0, 1])


@pytest.fixture
def star3():
    return net_from([0, 0, 0])


# ---------------------------------------------------------------- acceptance
# Tests marked ``@pytest.mark.criterion("label")`` get one PASS/FAIL line in the
# terminal summary; ``record(detail)`` attaches the measured numbers.
_CRITERIA: list[tuple[str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.fixture
def record(request):
    def _record(text: str) -> None:
        request.node.user_properties.append(("detail", text))

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    if rep.failed and call.excinfo is not None:
        detail = (detail + "; " if detail else "") + call.excinfo.exconly().splitlines()[0][:160]
    _CRITERIA.append(("PASS" if rep.passed else "FAIL", mark.args[0], detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for status, label, detail in _CRITERIA:
        terminalreporter.write_line(f"{status}  {label}: {detail}")
