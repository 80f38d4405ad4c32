import pytest

from qmomap.action import InfinitesimalAction
from qmomap.algebra import HbarSeries
from qmomap.lie import LieAlgebra
from qmomap.momentum import (
    SUITES,
    QmmError,
    QmmModel,
    bundle_from_dict,
    bundled_models,
    build_phase,
    load_bundle,
    qmm_apply,
    qmm_linear,
    run_suite,
    theta_monomials,
    verify_equivariance,
    verify_first_term,
    verify_invariant_hamiltonian,
    verify_linear,
    verify_mc,
    verify_morphism,
    verify_phase,
    verify_second,
    verify_unital,
)
from qmomap.quantization import GSystem, star_standard


def S(U, *coeffs, order=None):
    order = len(coeffs) - 1 if order is None else order
    cs = [U.parse(c) for c in coeffs]
    return HbarSeries(cs + [U.zero()] * (order + 1 - len(cs)), order)


@pytest.fixture(scope="module")
def quad3():
    return load_bundle("quadratic1d", N=3, M=8)


def test_bundled_models_listed():
    assert {"translations", "so3rot", "heisenberg", "quadratic1d", "broken_gsystem"} <= set(bundled_models())


def test_quadratic_examples(quad3):
    U = quad3.universe
    assert qmm_apply(quad3, "th1^2") == S(U, "x1^4*xi1^2", "-2*i*x1^3*xi1", order=3)
    assert qmm_apply(quad3, "th1^3") == S(U, "-x1^6*xi1^3", "6*i*x1^5*xi1^2", "6*x1^4*xi1", order=3)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_quadratic_powers_are_star_powers(quad3, k):
    # the Gutt product of an abelian algebra is the commutative product
    U = quad3.universe
    lin = qmm_linear(quad3, 0, 3)
    power = HbarSeries.one(U, 3)
    for _ in range(k):
        power = star_standard(power, lin.truncate(3), 3)
    assert qmm_apply(quad3, f"th1^{k}") == power


def test_translations_give_fourier_multipliers():
    m = load_bundle("translations", N=4, M=10)
    U = m.universe
    u = U.parse("th1^3*th2 - 2*th2^2 + th1")
    expect = u.subs({U.var_index("th1"): -U.var("xi1"), U.var_index("th2"): -U.var("xi2")})
    assert qmm_apply(m, u) == HbarSeries.from_poly(expect, 4)


def test_so3_casimir_value(models):
    m = models["so3rot"]
    U = m.universe
    got = qmm_apply(m, "th1^2 + th2^2 + th3^2")
    classical = m.action.comomentum_pullback(U.parse("th1^2 + th2^2 + th3^2"))
    assert got == HbarSeries([classical, U.parse("2*i*(x1*xi1 + x2*xi2 + x3*xi3)"), U.zero()], 2)


def test_wick_route_agrees(models):
    for name in ("so3rot", "heisenberg", "quadratic1d"):
        m = models[name]
        for u in theta_monomials(m.universe, 2):
            assert qmm_apply(m, u, oracle=True) == qmm_apply(m, u), (name, u)


def test_linear_combinations_and_series_inputs(models):
    m = models["heisenberg"]
    U = m.universe
    a, b = qmm_apply(m, "th1*th2"), qmm_apply(m, "th3^2")
    assert qmm_apply(m, "2*th1*th2 - th3^2") == a.scale(2) - b
    series = HbarSeries([U.parse("th1*th2"), U.parse("th3^2"), U.zero()], 2)
    assert qmm_apply(m, series) == a + b.truncate(1).with_order(2).shift(1)


def test_phase_blocks(models):
    m = models["so3rot"]
    ph = build_phase(m, m.universe.parse("th1^2*th3"))
    assert ph.det in (m.universe.one(), -m.universe.one())
    assert ph.signature == 0
    assert ph.D == 6
    n = 3
    for i in range(n):
        for j in range(n):
            assert not ph.hessian[n + i][n + j]
            assert not ph.hessian_inverse[i][j]
            want = -m.universe.one() if i == j else m.universe.zero()
            assert ph.hessian[i][n + j] == want
    assert verify_phase(m).ok


def test_input_errors(models):
    m = models["so3rot"]
    with pytest.raises(QmmError, match="th only"):
        qmm_apply(m, "x1*th1")
    with pytest.raises(QmmError, match="order"):
        qmm_apply(m, "th1", order=m.N + 2)
    with pytest.raises(QmmError, match="not a Casimir"):
        verify_invariant_hamiltonian(m, "th1^2")
    with pytest.raises(FileNotFoundError):
        load_bundle("no_such_model")
    with pytest.raises(QmmError, match="lacks"):
        bundle_from_dict({"algebra": {"dim": 1, "structure": []}})
    with pytest.raises(QmmError, match="unknown suite"):
        run_suite(m, "nonsense")


def test_broken_bundle_reports_mc_failure():
    with pytest.raises(QmmError, match="Maurer-Cartan"):
        load_bundle("broken_gsystem")
    m = load_bundle("broken_gsystem", check_mc=False)
    c = verify_mc(m)
    assert not c.ok
    assert list(c.to_dict()["location"][0]) == [1, "v1*w1", "-1"]


def test_unnormalized_action_is_flipped(so3, caplog):
    act = InfinitesimalAction(so3, 3, [["0", "x3", "-x2"], ["-x3", "0", "x1"], ["x2", "-x1", "0"]], "flip")
    m = QmmModel(act, N=1, M=3)
    assert m.action.sigma == -1
    assert "negating" in caplog.text
    assert verify_linear(m, 0).ok


# ---------------------------------------------------------------------------
# verifiers on nontrivial G-systems


@pytest.fixture(scope="module", params=["gauge", "conjugate"])
def twisted(request):
    act = InfinitesimalAction(LieAlgebra(1, {}), 1, [["x1^2"]], "quad")
    if request.param == "gauge":
        a = GSystem.gauge(act, "x1^3 + x1", 2, 6)
    else:
        a = GSystem.conjugate(act, "x1^2*xi1 + x1", 2, 6)
    return QmmModel(act, a, N=2, M=6)


def test_twisted_linear_term(twisted):
    assert not twisted.gsystem.is_trivial
    assert verify_linear(twisted, 0).ok
    assert verify_linear(twisted, 0, order=3).ok
    # hbar P^1 enters J^a(th) with an extra hbar/i
    assert not qmm_linear(twisted, 0, 3).coeffs[1]
    assert qmm_linear(twisted, 0, 3).coeffs[2]


def test_twisted_verifiers(twisted):
    U = twisted.universe
    assert verify_mc(twisted).ok
    assert verify_unital(twisted).ok
    assert verify_first_term(twisted, U.parse("th1^3")).ok
    for f in theta_monomials(U, 2):
        for g in theta_monomials(U, 2):
            assert verify_morphism(twisted, f, g).ok
    for f in ("x1^2*xi1", "xi1^2", "x1"):
        c = verify_second(twisted, 0, f)
        assert c.ok, c.to_dict()
    assert verify_equivariance(twisted, 0, "x1*xi1", "xi1").ok
    assert verify_invariant_hamiltonian(twisted, "th1^2").ok


def test_second_leading_term(models):
    m = models["so3rot"]
    c = verify_second(m, 1, "x1*xi3 + xi2^2")
    assert c.ok
    lead = c.extra["leading_term"]
    assert lead == m.action.cotangent_lift_field(1).apply(m.universe.parse("x1*xi3 + xi2^2"))


def test_naive_quantization_is_anomalous():
    m = load_bundle("quadratic1d", N=2, M=6)
    c = verify_invariant_hamiltonian(m, "th1^2")
    assert c.ok
    assert not c.extra["naive_vanishes"]
    assert str(c.extra["naive"][0]) == "[hbar^2*(-2*x1^4)]*d1"


@pytest.mark.parametrize("name", ["translations", "heisenberg", "quadratic1d", "so3rot"])
def test_suites_pass_on_bundled_models(models, name):
    m = models[name]
    for suite in SUITES:
        if suite == "casimir" and not m.casimirs:
            continue
        checks = run_suite(m, suite, deg=1)
        assert checks and all(c.ok for c in checks), (suite, [c.to_dict() for c in checks if not c.ok][:1])
