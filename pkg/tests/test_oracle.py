"""The brute-force reference itself, checked on cases solvable by hand."""

import numpy as np
import pytest
from conftest import net_from
from oracle import power_flow_solutions, solve_oracle

from socpdual.formulation import TOTAL_LOSS


def test_single_branch_matches_quadratic_formula():
    p, q, r, x = -0.1, -0.05, 0.01, 0.02
    net = net_from([0], r=r, x=x, l_max=1e4, v=(0.01, 100.0), p=(p, p), q=(q, q))
    # l (a - |z|^2 l) = p^2 + q^2 with a = v0 + 2 (r p + x q)
    a, zz, s2 = 1.0 + 2 * (r * p + x * q), r * r + x * x, p * p + q * q
    disc = np.sqrt(a * a - 4 * zz * s2)
    roots = sorted([(a - disc) / (2 * zz), (a + disc) / (2 * zz)])
    sols = sorted(float(s[0]) for s in power_flow_solutions(net))
    assert sols == pytest.approx(roots, rel=1e-10)
    res = solve_oracle(net, *TOTAL_LOSS.coefficients(net))
    assert res.value == pytest.approx(r * roots[0], rel=1e-10)


def test_star_is_two_independent_branches():
    net = net_from([0, 0], r=[0.01, 0.02], x=[0.02, 0.01], l_max=5.0, p=(-0.1, -0.1), q=(-0.05, -0.05))
    res = solve_oracle(net, *TOTAL_LOSS.coefficients(net))
    one = net_from([0], r=0.01, x=0.02, l_max=5.0, p=(-0.1, -0.1), q=(-0.05, -0.05))
    two = net_from([0], r=0.02, x=0.01, l_max=5.0, p=(-0.1, -0.1), q=(-0.05, -0.05))
    parts = [solve_oracle(n, *TOTAL_LOSS.coefficients(n)).value for n in (one, two)]
    assert res.value == pytest.approx(sum(parts), rel=1e-12)


def test_chain_solution_satisfies_power_flow():
    net = net_from([0, 1], r=[0.02, 0.03], x=[0.04, 0.02], l_max=10.0, v=(0.5, 1.5), p=(-0.2, -0.2), q=(-0.1, -0.1))
    (l,) = [s for s in power_flow_solutions(net) if s[0] < 1]  # the low-current branch
    P2, Q2 = -0.2, -0.1
    P1, Q1 = -0.2 + P2 - 0.03 * l[1], -0.1 + Q2 - 0.02 * l[1]
    v1 = 1 + 2 * (0.02 * P1 + 0.04 * Q1) - (0.02**2 + 0.04**2) * l[0]
    v2 = v1 + 2 * (0.03 * P2 + 0.02 * Q2) - (0.03**2 + 0.02**2) * l[1]
    assert l[0] * v1 == pytest.approx(P1**2 + Q1**2, abs=1e-14)
    assert l[1] * v2 == pytest.approx(P2**2 + Q2**2, abs=1e-14)


def test_oracle_rejects_flexible_loads():
    with pytest.raises(ValueError):
        solve_oracle(net_from([0]), *TOTAL_LOSS.coefficients(net_from([0])))
