import pytest
from hypothesis import settings, strategies as st

from qmomap.action import InfinitesimalAction
from qmomap.algebra import GaussianRational, MultiPoly, standard_universe, theta_universe
from qmomap.lie import LieAlgebra
from qmomap.momentum import load_bundle

settings.register_profile("ci", max_examples=25, deadline=None)
settings.load_profile("ci")


SO3 = {"dim": 3, "structure": [
    {"i": 1, "j": 2, "coeffs": {"3": 1}},
    {"i": 2, "j": 3, "coeffs": {"1": 1}},
    {"i": 3, "j": 1, "coeffs": {"2": 1}},
]}
HEIS = {"dim": 3, "structure": [{"i": 1, "j": 2, "coeffs": {"3": 1}}]}


@pytest.fixture(scope="session")
def so3():
    return LieAlgebra.from_dict(SO3, name="so3")


@pytest.fixture(scope="session")
def heis():
    return LieAlgebra.from_dict(HEIS, name="heis")


@pytest.fixture(scope="session")
def rot_action(so3):
    return InfinitesimalAction(so3, 3, [["0", "-x3", "x2"], ["x3", "0", "-x1"], ["-x2", "x1", "0"]], "rot")


@pytest.fixture(scope="session")
def quad_action():
    return InfinitesimalAction(LieAlgebra(1, {}), 1, [["x1^2"]], "quad")


@pytest.fixture(scope="session")
def trans_action():
    return InfinitesimalAction(LieAlgebra(2, {}), 2, [["1", "0"], ["0", "1"]], "trans")


@pytest.fixture(scope="session")
def models():
    return {name: load_bundle(name, N=2, M=6) for name in ("translations", "so3rot", "heisenberg", "quadratic1d")}


# ---------------------------------------------------------------------------
# strategies

small_ints = st.integers(min_value=-3, max_value=3)
gaussian = st.builds(
    GaussianRational,
    st.fractions(min_value=-3, max_value=3, max_denominator=4),
    st.fractions(min_value=-2, max_value=2, max_denominator=3),
)


def polys(universe, variables, max_degree=3, max_terms=4, coeffs=gaussian):
    """Random polynomials in the named variables."""
    idx = [universe.var_index(v) for v in variables]

    @st.composite
    def build(draw):
        n = draw(st.integers(min_value=0, max_value=max_terms))
        terms = {}
        for _ in range(n):
            e = [0] * universe.nvars
            budget = draw(st.integers(min_value=0, max_value=max_degree))
            for _ in range(budget):
                e[draw(st.sampled_from(idx))] += 1
            c = draw(coeffs)
            if c:
                terms[tuple(e)] = c
        return MultiPoly(universe, terms)

    return build()


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
