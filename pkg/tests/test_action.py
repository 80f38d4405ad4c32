import logging
from fractions import Fraction
from math import factorial

import pytest
from hypothesis import given

from qmomap.action import ActionError, InfinitesimalAction, canonical_poisson, vector_field_bracket
from qmomap.algebra import standard_universe
from qmomap.lie import LieAlgebra

from conftest import SO3, polys

U31 = standard_universe(3, 3)


def test_sigma_detection(rot_action, so3):
    assert rot_action.sigma == -1
    flipped = InfinitesimalAction(so3, 3, [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]], "flip")
    assert flipped.sigma == 1


def test_normalization_negates_and_warns(so3, rot_action, caplog):
    flipped = InfinitesimalAction(so3, 3, [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]], "flip")
    with caplog.at_level(logging.WARNING):
        norm = flipped.normalized()
    assert "negating" in caplog.text
    assert norm.sigma == -1
    assert norm.to_dict() == rot_action.to_dict()
    assert rot_action.normalized() is rot_action


def test_incompatible_fields_rejected(so3):
    with pytest.raises(ActionError):
        InfinitesimalAction(so3, 3, [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "x1"]])
    with pytest.raises(ActionError):
        InfinitesimalAction(so3, 3, [["1", "0", "0"], ["0", "1", "0"]])
    with pytest.raises(ActionError):
        InfinitesimalAction(LieAlgebra(1, {}), 1, [["xi1"]])


def test_vector_field_bracket_example():
    U = standard_universe(1, 1)
    X, Y = [U.parse("1")], [U.parse("x1^2")]
    assert vector_field_bracket(U, X, Y) == [U.parse("2*x1")]


def test_quadratic_flow_is_moebius(quad_action):
    # phi_{exp(-v)}(x) = x / (1 + v x) for X = x^2 d/dx
    M = 7
    (F,) = quad_action.flow_series(M)
    U = quad_action.universe
    expect = sum((U.parse(f"x1^{k + 1}*v1^{k}").scale((-1) ** k) for k in range(M + 1)), U.zero())
    assert F == expect


def test_rotation_flow_is_cos_sin(rot_action):
    M = 8
    U = rot_action.universe
    F = rot_action.flow_series(M)
    flow = [f.set_zero(("v",)) for f in F]
    assert flow == U.family("x")
    # v = (t, 0, 0): rotation by angle t in the (x2, x3) plane
    red = [f.subs({U.var_index("v2"): U.zero(), U.var_index("v3"): U.zero()}) for f in F]
    cos = sum((U.parse(f"v1^{2 * k}").scale(Fraction((-1) ** k, factorial(2 * k))) for k in range(M // 2 + 1)), U.zero())
    sin = sum((U.parse(f"v1^{2 * k + 1}").scale(Fraction((-1) ** k, factorial(2 * k + 1))) for k in range((M - 1) // 2 + 1)), U.zero())
    x1, x2, x3 = U.family("x")
    assert red[0] == x1
    assert red[1] == (x2 * cos + x3 * sin).truncate(("v",), M)
    assert red[2] == (x3 * cos - x2 * sin).truncate(("v",), M)


@pytest.mark.parametrize("name", ["rot_action", "quad_action", "trans_action"])
def test_flow_group_law(name, request):
    act = request.getfixturevalue(name)
    assert all(not r for r in act.flow_composition_residual(4))


def test_heisenberg_flow_group_law(heis):
    act = InfinitesimalAction(heis, 2, [["1", "0"], ["0", "x1"], ["0", "-1"]], "h")
    assert act.sigma == -1
    assert all(not r for r in act.flow_composition_residual(5))


def test_classical_momentum_and_lift(rot_action):
    U = rot_action.universe
    J = rot_action.classical_momentum()
    assert J[0] == U.parse("x3*xi2 - x2*xi3")
    h = U.parse("x1*xi2 + x2^2*xi3^2 - x3")
    for i in range(3):
        assert rot_action.cotangent_lift_field(i).apply(h) == canonical_poisson(J[i], h)


@given(polys(U31, ["x1", "x2", "x3", "xi1", "xi2", "xi3"], max_degree=3))
def test_lift_is_hamiltonian(h):
    alg = LieAlgebra.from_dict(SO3)
    act = InfinitesimalAction(alg, 3, [["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]])
    J = act.classical_momentum()
    for i in range(3):
        assert act.cotangent_lift_field(i).apply(h) == canonical_poisson(J[i], h)


def test_classical_checks(rot_action):
    U = rot_action.universe
    cas = U.parse("th1^2 + th2^2 + th3^2")
    out = rot_action.classical_checks(max_degree=3, casimirs=[cas])
    assert out["ok"] and out["sigma"] == -1
    bad = rot_action.classical_checks(max_degree=1, casimirs=[U.parse("th1^2")])
    assert not bad["ok"]
    assert any(bad["invariance"]["th1^2"])


def test_comomentum_pullback(quad_action):
    U = quad_action.universe
    assert quad_action.comomentum_pullback(U.parse("th1^2")) == U.parse("x1^4*xi1^2")
