import numpy as np
import pytest
import scipy.sparse as sp
from programs import random_program, rotated_example

from socpdual.conic import (
    Cone,
    ConicProgram,
    ProgramBuilder,
    cone_violation,
    dual_scaling,
    dump_program,
    in_cone,
    load_program,
    rotated_from_second_order,
    to_second_order,
)
from socpdual.solver import solve


def test_cone_validation():
    with pytest.raises(ValueError):
        Cone("psd", 3)
    with pytest.raises(ValueError):
        Cone("rotated", 2)


def test_program_shape_checks():
    with pytest.raises(ValueError, match="shape"):
        ConicProgram(c=[1, 2], A=sp.csr_matrix([[1.0]]), b=[1.0], cones=(Cone("free", 2),))
    with pytest.raises(ValueError, match="cone dims"):
        ConicProgram(c=[1.0], A=sp.csr_matrix([[1.0]]), b=[1.0], cones=(Cone("free", 2),))


def test_program_is_read_only():
    p = rotated_example()
    with pytest.raises(ValueError):
        p.c[0] = 5.0


@pytest.mark.parametrize(
    "cones, x, inside",
    [
        ((Cone("nonneg", 2),), [0.0, 1.0], True),
        ((Cone("nonneg", 2),), [-1e-3, 1.0], False),
        ((Cone("soc", 3),), [5.0, 3.0, 4.0], True),
        ((Cone("soc", 3),), [4.9, 3.0, 4.0], False),
        ((Cone("rotated", 3),), [1.0, 1.0, 1.0], True),
        ((Cone("rotated", 3),), [1.0, 1.0, 1.01], False),
        ((Cone("rotated", 3),), [-1.0, -1.0, 0.0], False),
    ],
)
def test_membership(cones, x, inside):
    assert in_cone(cones, np.array(x), tol=1e-12) is inside


def test_rotated_dual_cone_needs_factor_four():
    k = (Cone("rotated", 3),)
    # (1, 1, 1.9): 4ab = 4 >= 3.61, so in the dual cone but not in the cone itself
    x = np.array([1.0, 1.0, 1.9])
    assert not in_cone(k, x)
    assert cone_violation(k, x, dual=True) <= 0
    assert np.allclose(dual_scaling(k), [1.0, 1.0, 2.0])


def test_dual_scaling_marks_free_entries():
    d = dual_scaling((Cone("free", 2), Cone("nonneg", 1), Cone("rotated", 4), Cone("soc", 2)))
    assert np.array_equal(d, [0, 0, 1, 1, 1, 2, 2, 1, 1])


def test_builder_merges_scalar_blocks():
    b = ProgramBuilder()
    b.add_scalars("free", ["a", "b"])
    b.add_block("rotated", ["u", "w", "t"])
    b.add_scalars("nonneg", ["s1"])
    b.add_scalars("nonneg", ["s2"])
    b.add_row({0: 1.0, 4: 1.0}, 2.0, "r0")
    b.add_cost(2, 1.5)
    p = b.build({"kind": "test"})
    assert [(k.type, k.dim) for k in p.cones] == [("free", 2), ("rotated", 3), ("nonneg", 2)]
    assert p.index["s1"] == 5 and p.row_names == ("r0",) and p.c[2] == 1.5


def test_json_round_trip():
    p = random_program(np.random.default_rng(1))
    q = load_program(dump_program(p))
    assert np.array_equal(p.c, q.c) and np.array_equal(p.b, q.b)
    assert (p.A != q.A).nnz == 0 and p.cones == q.cones


def test_second_order_rewrite_has_same_optimum():
    p = random_program(np.random.default_rng(7))
    q = to_second_order(p)
    assert all(k.type != "rotated" for k in q.cones)
    sp_, sq = solve(p), solve(q)
    assert sp_.ok and sq.ok
    assert sq.primal_obj == pytest.approx(sp_.primal_obj, rel=1e-7, abs=1e-7)
    x = rotated_from_second_order(p, sq.x)
    assert np.max(np.abs(p.A @ x - p.b)) < 1e-6
    assert in_cone(p.cones, x, tol=1e-6)
