"""Quantum momentum maps J^a and the verification suite built on them.

J^a(u) is the stationary-phase expansion of

    e^{-i<x,xi>/hbar} (2 pi hbar)^{-n} int u(theta) a_{exp v}(x, xi)
        exp((i/hbar)(<xi, phi_{exp(-v)}(x)> - <theta, v>)) dv dtheta

around its unique critical point (v, theta) = (0, J(x, xi)).  Writing
``theta = J + dth`` the phase becomes ``<xi, x> + R(v) - <dth, v>`` where
``R`` collects the v-degree >= 2 part of ``<xi, phi_{exp(-v)}(x)>``; the
constant cancels the prefactor exactly and the linear part cancels against
the critical value of theta.

Group-level identities are checked in infinitesimal form: derivatives at the
unit along each basis direction, which are exact polynomial statements in
exponential coordinates.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .action import InfinitesimalAction
from .algebra import I, HbarSeries, MultiPoly, Universe, multi_indices
from .feynman import PhaseModel, expand, wick_expand
from .lie import LieAlgebra
from .quantization import (
    MINUS_I,
    GSystem,
    QuantizationError,
    SymbolOperator,
    cotangent_phase,
    localize,
    mc_residual,
    star_standard,
    standard_commutator,
    t_infinitesimal,
)

log = logging.getLogger(__name__)

INFINITESIMAL_NOTE = "checked in infinitesimal form at the unit along each basis direction"


class QmmError(ValueError):
    pass


@dataclass
class Truncations:
    """hbar order N and v-degree M (defaults follow M = 2N + 2)."""

    N: int = 2
    M: int | None = None

    def __post_init__(self):
        if self.N < 0:
            raise QmmError("hbar order must be nonnegative")
        if self.M is None:
            self.M = 2 * self.N + 2


class QmmModel:
    """An action together with a formal G-system and truncations."""

    def __init__(self, action: InfinitesimalAction, gsystem: GSystem | None = None, N: int = 2, M: int | None = None,
                 check_mc: bool = True, casimirs=(), name: str = ""):
        tr = Truncations(N, M)
        self.N, self.M = tr.N, tr.M
        self.action = action.normalized()
        if gsystem is None:
            gsystem = GSystem.trivial(self.action, self.N, self.M)
        if gsystem.action is not self.action:
            if gsystem.action is action:
                raise QmmError("G-system was built for the unnormalized action")
            raise QmmError("G-system belongs to another action")
        if gsystem.N < self.N:
            gsystem = gsystem.at(self.N, max(self.M, gsystem.M))
        self.gsystem = gsystem
        self.name = name or action.name
        self.casimirs = list(casimirs)
        self.mc_report = None
        if check_mc:
            rep = mc_residual(gsystem, self.N, min(self.M, gsystem.M))
            self.mc_report = rep
            if not rep["ok"]:
                raise QmmError(
                    "G-system fails the Maurer-Cartan equation: "
                    + "; ".join(f"hbar^{n} {m}: {c}" for n, m, c in localize(rep["residual"])[:5])
                )
        self._cache: dict = {}

    @property
    def universe(self) -> Universe:
        return self.action.universe

    @property
    def algebra(self) -> LieAlgebra:
        return self.action.algebra

    def at(self, N: int) -> "QmmModel":
        """Same model at another hbar order (the G-system must have a recipe)."""
        if N == self.N:
            return self
        return QmmModel(self.action, self.gsystem.at(N, self.gsystem.M), N, self.M,
                        check_mc=False, casimirs=self.casimirs, name=self.name)

    def __repr__(self):
        return f"QmmModel({self.name}, N={self.N}, M={self.M}, a={self.gsystem.name})"


# ---------------------------------------------------------------------------
# bundles


_MODEL_DIR = Path(__file__).parent / "data" / "models"


def bundled_models() -> list[str]:
    return sorted(p.stem for p in _MODEL_DIR.glob("*.json"))


def _resolve(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    cand = _MODEL_DIR / (p.name if p.suffix else p.name + ".json")
    if cand.exists():
        return cand
    raise FileNotFoundError(f"no model file {path_or_name!r} (bundled: {', '.join(bundled_models())})")


def _load_part(entry, base: Path):
    if isinstance(entry, str):
        return json.loads((base / entry).read_text())
    return entry


def load_bundle(path_or_name, N: int | None = None, M: int | None = None, check_mc: bool = True) -> QmmModel:
    """Load {algebra, action, gsystem?, truncations?, casimirs?} from JSON.

    Components may be inline objects or paths relative to the bundle."""
    path = _resolve(path_or_name)
    data = json.loads(path.read_text())
    return bundle_from_dict(data, base=path.parent, name=path.stem, N=N, M=M, check_mc=check_mc)


def bundle_from_dict(data: dict, base: Path = Path("."), name: str = "", N=None, M=None, check_mc=True) -> QmmModel:
    for key in ("algebra", "action"):
        if key not in data:
            raise QmmError(f"model bundle lacks {key!r}")
    alg = LieAlgebra.from_dict(_load_part(data["algebra"], base), name=name)
    alg.validate()
    action = InfinitesimalAction.from_dict(alg, _load_part(data["action"], base), name=name).normalized()
    tr = data.get("truncations", {})
    N = int(tr.get("N", 2)) if N is None else N
    M = tr.get("M") if M is None else M
    M = 2 * N + 2 if M is None else int(M)
    if "gsystem" in data and data["gsystem"] is not None:
        gdata = _load_part(data["gsystem"], base)
        gsys = GSystem.from_dict(action, gdata, name=gdata.get("name", name + "-gsystem"))
        if gsys.N < N:
            raise QmmError(f"G-system is given to order {gsys.N} < N = {N}")
        gsys = gsys.at(N, min(M, gsys.M)) if (gsys.N, gsys.M) != (N, min(M, gsys.M)) else gsys
    else:
        gsys = GSystem.trivial(action, N, M)
    U = action.universe
    casimirs = [U.parse(c) for c in data.get("casimirs", [])]
    return QmmModel(action, gsys, N, M, check_mc=check_mc, casimirs=casimirs, name=name)


# ---------------------------------------------------------------------------
# the phase and J^a


def build_phase(model: QmmModel, u: MultiPoly, order: int | None = None) -> PhaseModel:
    """Phase model for J^a(u): z = (v, dth), externals u(J + dth) and a_{exp v}."""
    N = model.N if order is None else order
    action = model.action
    U = model.universe
    u = u.embed(U)
    if u.variables_used() - {U.names[k] for k in U.family_indices("th")}:
        raise QmmError(f"u must be a polynomial in th only: {u}")
    deg_u = max(u.degree("th"), 0)
    # an internal vertex of valence l needs l th-derivatives of u
    depth = max(2, min(2 * N + 2, deg_u))
    if not model.gsystem.is_trivial and deg_u > model.gsystem.M:
        raise QmmError(f"G-system known to v-degree {model.gsystem.M} < deg u = {deg_u}")
    flow = action.flow_series(depth)
    R = sum((xi * f for xi, f in zip(U.family("xi"), flow)), U.zero())
    split = {}
    for deg in (0, 1):
        split[deg] = R.homogeneous_part(("v",), deg)
    xi_x = sum((xi * x for xi, x in zip(U.family("xi"), U.family("x"))), U.zero())
    if split[0] != xi_x:
        raise QmmError("critical value of the phase differs from <xi, x>")
    J = action.classical_momentum()
    lin = sum((vi * Ji for vi, Ji in zip(U.family("v"), J)), U.zero())
    if split[1] != lin:
        raise QmmError("linear part of the phase is not <J, v>: critical point check failed")
    R2 = R - split[0] - split[1]
    th = list(U.family_indices("th"))
    u_shift = u.subs({t: Ji + U.var(t) for t, Ji in zip(th, J)})
    a = model.gsystem.series
    a = HbarSeries(list(a.coeffs[: N + 1]), min(N, a.order)).with_order(N)
    return cotangent_phase(
        U, list(U.family_indices("v")), th, R2, [u_shift, a], N, name=f"J^a[{model.name}]"
    )


def _check_order(model: QmmModel, order: int):
    # J^a(u) at order N+1 only involves P^n with n <= N: a term hbar^n P^n
    # with n >= 1 vanishes at v = 0, so it needs an edge, which costs hbar.
    if order > model.N + 1:
        raise QmmError(f"J^a is determined by the G-system only up to order {model.N + 1}")


def qmm_apply(model: QmmModel, u, order: int | None = None, oracle: bool = False) -> HbarSeries:
    """J^a(u) truncated at hbar^order (default N; N + 1 is allowed)."""
    N = model.N if order is None else order
    _check_order(model, N)
    U = model.universe
    if isinstance(u, HbarSeries):
        out = HbarSeries.zero(U, N)
        for k, c in enumerate(u.coeffs[: N + 1]):
            if c:
                out = out + qmm_apply(model, c, N - k, oracle).with_order(N).shift(k)
        return out
    if isinstance(u, str):
        u = U.parse(u)
    u = u.embed(U)
    key = (str(u), N, oracle)
    hit = model._cache.get(key)
    if hit is not None:
        return hit
    out = HbarSeries.zero(U, N)
    split = u.split(list(U.family_indices("th")))
    # J^a is linear: expand monomial by monomial so that results are reused
    for alpha, coeff in split.items():
        if not coeff.is_constant():
            raise QmmError(f"u must be a polynomial in th only: {u}")
        e = [0] * U.nvars
        for k, p in zip(U.family_indices("th"), alpha):
            e[k] = p
        mono = U.monomial(e)
        mkey = (str(mono), N, oracle)
        val = model._cache.get(mkey)
        if val is None:
            phase = build_phase(model, mono, N)
            val = wick_expand(phase, N) if oracle else expand(phase, N)
            stray = val.degree("v") > 0 or val.degree("th") > 0
            if stray:
                raise QmmError("expansion left integration variables behind")
            model._cache[mkey] = val
        out = out + val.scale(coeff.constant_term())
    model._cache[key] = out
    return out


def qmm_linear(model: QmmModel, i: int, order: int | None = None) -> HbarSeries:
    """J^a(theta_i) = J_i + (hbar/i) (D_e a) e_i."""
    N = model.N + 1 if order is None else order
    _check_order(model, N)
    J = model.action.classical_momentum()[i]
    lin = model.gsystem.linear_part(i)
    lin = HbarSeries(list(lin.coeffs[: N + 1]), min(N, lin.order)).with_order(N)
    return HbarSeries.from_poly(J, N) + lin.scale(MINUS_I).shift(1)


def theta_monomials(U: Universe, max_degree: int, min_degree: int = 0) -> list[MultiPoly]:
    th = list(U.family_indices("th"))
    out = []
    for alpha in multi_indices(len(th), max_degree, min_degree):
        e = [0] * U.nvars
        for k, p in zip(th, alpha):
            e[k] = p
        out.append(U.monomial(e))
    return out


# ---------------------------------------------------------------------------
# reports


def _render(residual):
    if isinstance(residual, HbarSeries):
        return residual.to_dict() or "0"
    if isinstance(residual, SymbolOperator):
        return "0" if residual.is_zero else str(residual)
    if isinstance(residual, MultiPoly):
        return "0" if not residual else str(residual)
    if isinstance(residual, (list, tuple)):
        return [_render(r) for r in residual]
    if isinstance(residual, dict):
        return {k: _render(v) for k, v in residual.items()}
    return residual


def _is_zero(residual) -> bool:
    if isinstance(residual, (HbarSeries, SymbolOperator)):
        return residual.is_zero
    if isinstance(residual, MultiPoly):
        return not residual
    if isinstance(residual, (list, tuple)):
        return all(_is_zero(r) for r in residual)
    if isinstance(residual, dict):
        return all(_is_zero(r) for r in residual.values())
    return not residual


@dataclass
class Check:
    """One verification: ``residual`` is zero exactly when the identity holds."""

    test: str
    inputs: dict
    residual: object
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return _is_zero(self.residual)

    @property
    def status(self) -> str:
        return "PASS" if self.ok else "FAIL"

    def to_dict(self) -> dict:
        out = {"test": self.test, "inputs": self.inputs, "residual": _render(self.residual), "status": self.status}
        if self.note:
            out["note"] = self.note
        for k, v in self.extra.items():
            out[k] = _render(v)
        return out


# ---------------------------------------------------------------------------
# identity checks


def verify_unital(model: QmmModel, order: int | None = None) -> Check:
    N = model.N if order is None else order
    U = model.universe
    res = qmm_apply(model, U.one(), N) - HbarSeries.one(U, N)
    return Check("unital", {"model": model.name, "N": N}, res)


def verify_first_term(model: QmmModel, u: MultiPoly) -> Check:
    val = qmm_apply(model, u)
    res = val.coeffs[0] - model.action.comomentum_pullback(u)
    return Check("first_term", {"model": model.name, "u": str(u)}, res)


def verify_linear(model: QmmModel, i: int, order: int | None = None) -> Check:
    N = model.N if order is None else order
    th = model.universe.family("th")[i]
    res = qmm_apply(model, th, N) - qmm_linear(model, i, N)
    return Check("linear", {"model": model.name, "i": i + 1, "N": N}, res)


def verify_morphism(model: QmmModel, f, g, order: int | None = None) -> Check:
    """J^a(f *_G g) - J^a(f) *_st J^a(g); the Gutt product comes from PBW."""
    N = model.N if order is None else order
    U = model.universe
    f = U.parse(f) if isinstance(f, str) else f.embed(U)
    g = U.parse(g) if isinstance(g, str) else g.embed(U)
    T = _theta_only(U)
    fg = model.algebra.gutt_pbw(f.embed(T), g.embed(T), N).embed(U)
    lhs = qmm_apply(model, fg, N)
    rhs = star_standard(qmm_apply(model, f, N), qmm_apply(model, g, N), N)
    return Check("morphism", {"model": model.name, "f": str(f), "g": str(g), "N": N}, lhs - rhs)


def _theta_only(U: Universe) -> Universe:
    return Universe([("th", U.family_size("th"))])


def _generator(model: QmmModel, i: int, order: int) -> SymbolOperator:
    key = ("t", i, order)
    hit = model._cache.get(key)
    if hit is None:
        gs = model.gsystem.at(order, max(1, min(model.gsystem.M, model.M)))
        hit = t_infinitesimal(gs, i, order)
        model._cache[key] = hit
    return hit


def _working_order(model: QmmModel, h: HbarSeries, N: int) -> tuple[int, bool]:
    """Operator order that makes the symbol of [t, Op h] exact to hbar^N.

    Its hbar^j part has xi-degree at most deg_xi(h) + j, which needs operator
    terms up to hbar^(2j + deg_xi h)."""
    W = 2 * N + max(h.degree("xi"), 0)
    if model.gsystem.factory is None and W > model.gsystem.N:
        return model.gsystem.N, False
    return W, True


def tilde_t(model: QmmModel, i: int, h, N: int | None = None) -> tuple[HbarSeries, bool]:
    """Symbol of [t_i, Op(h)] with t_i the generator of T^a, exact to hbar^N
    when the flag is True."""
    N = model.N if N is None else N
    U = model.universe
    h = HbarSeries.from_poly(h.embed(U), N) if isinstance(h, MultiPoly) else h.with_order(N)
    W, complete = _working_order(model, h, N)
    t = _generator(model, i, W)
    comm = t.commutator(SymbolOperator.from_symbol(h.with_order(W), W))
    sym = comm.to_symbol(min(N, W))
    return sym.with_order(N), complete


def verify_second(model: QmmModel, i: int, f, order: int | None = None) -> Check:
    """(a) t_i = Op((i/hbar) J^a(theta_i)) as operators to hbar^N;
    (b) t~_i f from [t_i, Op f] equals (i/hbar)[J^a(theta_i), f]_st to hbar^N and
    its leading term is X~_i f = P(J_i, f)."""
    N = model.N if order is None else order
    U = model.universe
    f = U.parse(f) if isinstance(f, str) else f.embed(U)
    t = _generator(model, i, N)
    Ja = qmm_linear(model, i, N + 1)
    res_a = t - SymbolOperator.from_scaled_symbol(Ja, N)
    # (i/hbar)[J^a, f]: commutator at order N + 1 is divisible by hbar
    comm = standard_commutator(Ja, HbarSeries.from_poly(f, N + 1), N + 1)
    lhs = comm.shift(-1).scale(I).truncate(N)
    tilde, complete = tilde_t(model, i, f, N)
    res_b = lhs - tilde
    lead = model.action.cotangent_lift_field(i).apply(f)
    res_lead = tilde.coeffs[0] - lead
    note = INFINITESIMAL_NOTE
    if not complete:
        note += "; symbol comparison limited by the G-system order"
    return Check(
        "second",
        {"model": model.name, "i": i + 1, "f": str(f), "N": N},
        {"operator": res_a, "commutator": res_b, "leading": res_lead},
        note,
        extra={"tilde": tilde, "leading_term": lead},
    )


def verify_equivariance(model: QmmModel, i: int, f, g, order: int | None = None) -> Check:
    """t~(f *_st g) - t~(f) *_st g - f *_st t~(g), with t~ from the generator of T^a."""
    N = model.N if order is None else order
    U = model.universe
    f = U.parse(f) if isinstance(f, str) else f.embed(U)
    g = U.parse(g) if isinstance(g, str) else g.embed(U)
    fg = star_standard(f, g, N)
    t_fg, c1 = tilde_t(model, i, fg, N)
    t_f, c2 = tilde_t(model, i, f, N)
    t_g, c3 = tilde_t(model, i, g, N)
    res = t_fg - star_standard(t_f, g, N) - star_standard(f, t_g, N)
    note = INFINITESIMAL_NOTE
    if not (c1 and c2 and c3):
        note += "; symbol comparison limited by the G-system order"
    return Check("equivariance", {"model": model.name, "i": i + 1, "f": str(f), "g": str(g), "N": N}, res, note)


def verify_invariant_hamiltonian(model: QmmModel, f, order: int | None = None) -> Check:
    """[t_i, Op(J^a f)] for every basis element (expected 0), with the naive
    [t_i, Op(J* f)] reported alongside as the anomaly contrast."""
    N = model.N if order is None else order
    U = model.universe
    f = U.parse(f) if isinstance(f, str) else f.embed(U)
    T = _theta_only(U)
    ok, residuals = model.algebra.is_casimir(f.embed(T))
    if not ok:
        bad = next((k, r) for k, r in enumerate(residuals) if r)
        raise QmmError(f"{f} is not a Casimir: {{th{bad[0] + 1}, f}} = {bad[1]}")
    op_q = SymbolOperator.from_symbol(qmm_apply(model, f, N), N)
    op_naive = SymbolOperator.from_symbol(model.action.comomentum_pullback(f), N)
    anomaly_free, naive = [], []
    for i in range(model.algebra.dim):
        t = _generator(model, i, N)
        anomaly_free.append(t.commutator(op_q))
        naive.append(t.commutator(op_naive))
    return Check(
        "casimir",
        {"model": model.name, "f": str(f), "N": N},
        anomaly_free,
        INFINITESIMAL_NOTE,
        extra={"naive": naive, "naive_vanishes": all(c.is_zero for c in naive)},
    )


def verify_mc(model: QmmModel, N: int | None = None, M: int | None = None) -> Check:
    N = model.N if N is None else N
    M = model.M if M is None else M
    rep = mc_residual(model.gsystem, N, min(M, model.gsystem.M))
    return Check(
        "mc",
        {"model": model.name, "gsystem": model.gsystem.name, "N": N, "M": min(M, model.gsystem.M)},
        {"residual": rep["residual"], "flow": rep["flow"]},
        extra={"location": localize(rep["residual"])[:10]},
    )


def verify_phase(model: QmmModel, u=None) -> Check:
    """|det B| = 1, sign B = 0 and B B^-1 = 1 (asserted while building the phase)."""
    U = model.universe
    u = U.one() if u is None else (U.parse(u) if isinstance(u, str) else u)
    phase = build_phase(model, u)
    return Check(
        "phase",
        {"model": model.name},
        [],
        extra={"det": str(phase.det), "signature": phase.signature},
    )


SUITES = ("mc", "unital", "linear", "morphism", "second", "equivariance", "casimir")


def _test_functions(U: Universe, deg: int) -> list[MultiPoly]:
    """Monomials in (x, xi) of degree <= deg."""
    fams = [k for f in ("x", "xi") for k in U.family_indices(f)]
    out = []
    for alpha in multi_indices(len(fams), deg):
        e = [0] * U.nvars
        for k, p in zip(fams, alpha):
            e[k] = p
        out.append(U.monomial(e))
    return out


def run_suite(model: QmmModel, suite: str, deg: int = 2, limit: int | None = None) -> list[Check]:
    """All checks of one suite over the monomial test matrix of degree <= deg."""
    if suite not in SUITES:
        raise QmmError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    U = model.universe
    n = model.algebra.dim
    out: list[Check] = []
    if suite == "mc":
        out.append(verify_mc(model))
    elif suite == "unital":
        out.append(verify_unital(model))
    elif suite == "linear":
        out.extend(verify_linear(model, i) for i in range(n))
    elif suite == "morphism":
        monos = theta_monomials(U, deg)
        out.extend(verify_morphism(model, f, g) for f in monos for g in monos)
    elif suite == "second":
        tests = _test_functions(U, deg)
        out.extend(verify_second(model, i, f) for i in range(n) for f in tests)
    elif suite == "equivariance":
        tests = _test_functions(U, deg)
        pairs = [(f, g) for f in tests for g in tests if f.degree() + g.degree() <= deg]
        out.extend(verify_equivariance(model, i, f, g) for i in range(n) for f, g in pairs)
    elif suite == "casimir":
        if not model.casimirs:
            raise QmmError(f"model {model.name} lists no Casimirs")
        out.extend(verify_invariant_hamiltonian(model, f) for f in model.casimirs)
    return out[:limit] if limit else out
