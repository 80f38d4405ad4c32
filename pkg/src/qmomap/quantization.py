"""Standard quantization, star products and formal G-systems.

Conventions
-----------
* ``Op(f)`` sends ``xi^alpha`` to ``(hbar/i)^{|alpha|} d_x^alpha`` with all
  x-coefficients on the left.
* A :class:`SymbolOperator` stores ``sum_alpha c_alpha(x) d^alpha`` with plain
  derivatives and hbar-series coefficients; its ``order`` is the hbar order
  up to which it is exact.
* A G-system is stored in exponential coordinates: ``a_{exp v}(x, xi) =
  sum_n hbar^n P^n(v; x, xi)``.  Its operator is the formal integral

      T_v psi(x) = sum_alpha a_alpha(x; v) (hbar/i)^{|alpha|} (d^alpha psi)(phi_{exp(-v)}(x)),

  where ``a = sum_alpha a_alpha xi^alpha``.
"""

from __future__ import annotations

import json
from fractions import Fraction
from math import factorial
from pathlib import Path

from .action import InfinitesimalAction, canonical_poisson
from .algebra import (
    ONE,
    GaussianRational,
    HbarSeries,
    I,
    MultiPoly,
    Universe,
    as_gr,
    multi_binomial,
    multi_factorial,
    multi_indices,
    sub_indices,
)
from .feynman import PhaseModel, expand
from .lie import LieAlgebra, LieVector

MINUS_I = GaussianRational(0, -1)


class QuantizationError(ValueError):
    pass


def _as_series(f, order: int) -> HbarSeries:
    if isinstance(f, HbarSeries):
        return f.with_order(order)
    return HbarSeries.from_poly(f, order)


def _xi_split(f: HbarSeries) -> dict:
    """{alpha: hbar series coefficient of xi^alpha}."""
    U = f.universe
    xi = list(U.family_indices("xi"))
    out: dict = {}
    for k, c in enumerate(f.coeffs):
        for alpha, coeff in c.split(xi).items():
            out.setdefault(alpha, [U.zero()] * (f.order + 1))[k] = coeff
    return {a: HbarSeries(cs, f.order) for a, cs in out.items()}


def _diff_alpha(p, xs, alpha):
    for k, a in zip(xs, alpha):
        if a:
            p = p.diff(k, a)
            if not p:
                break
    return p


# ---------------------------------------------------------------------------
# operators


class SymbolOperator:
    """Differential operator ``sum_alpha c_alpha(x) d^alpha`` in standard order."""

    def __init__(self, universe: Universe, terms: dict, order: int):
        self.universe = universe
        self.order = order
        self.d = universe.family_size("x")
        self.terms = {}
        for alpha, c in terms.items():
            c = _as_series(c, order)
            if not c.is_zero:
                self.terms[tuple(alpha)] = c

    @classmethod
    def identity(cls, universe, order):
        d = universe.family_size("x")
        return cls(universe, {(0,) * d: HbarSeries.one(universe, order)}, order)

    @classmethod
    def from_symbol(cls, f, order: int) -> "SymbolOperator":
        """Op(f) exact to hbar^order (f is needed to order ``order``)."""
        U = f.universe
        f = _as_series(f, order)
        terms: dict = {}
        for alpha, coeff in _xi_split(f).items():
            a = sum(alpha)
            if a > order:
                continue
            piece = coeff.shift(a).scale(MINUS_I ** a)
            terms[alpha] = terms[alpha] + piece if alpha in terms else piece
        return cls(U, terms, order)

    @classmethod
    def from_scaled_symbol(cls, F, order: int, exact: bool = False) -> "SymbolOperator":
        """Op((i/hbar) F) exact to hbar^order; F must be known to order+1
        unless ``exact`` declares its higher orders to vanish."""
        if isinstance(F, HbarSeries) and F.order < order + 1 and not exact:
            raise QuantizationError(f"need the symbol to order {order + 1}, got {F.order}")
        U = F.universe
        F = _as_series(F, order + 1)
        terms: dict = {}
        for alpha, coeff in _xi_split(F).items():
            a = sum(alpha)
            if a == 0 and coeff.coeffs[0]:
                raise QuantizationError(
                    f"(i/hbar) F has a genuine hbar^-1 term: {coeff.coeffs[0]}"
                )
            if a > order + 1:
                continue
            # (i/hbar) * hbar^{k} * (hbar/i)^a = i * (-i)^a * hbar^{k + a - 1}
            piece = coeff.shift(a).scale(I * MINUS_I ** a).shift(-1).truncate(order)
            terms[alpha] = terms[alpha] + piece if alpha in terms else piece
        return cls(U, terms, order)

    # ------------------------------------------------------------------
    def apply(self, psi) -> HbarSeries:
        U = self.universe
        psi = _as_series(psi, self.order)
        xs = list(U.family_indices("x"))
        out = HbarSeries.zero(U, self.order)
        for alpha, c in self.terms.items():
            d = psi.map(lambda p: _diff_alpha(p, xs, alpha))
            if not d.is_zero:
                out = out + c * d
        return out

    def compose(self, other: "SymbolOperator") -> "SymbolOperator":
        """self o other."""
        self._check(other)
        U = self.universe
        xs = list(U.family_indices("x"))
        out: dict = {}
        for alpha, a in self.terms.items():
            for beta, b in other.terms.items():
                for gamma in sub_indices(alpha):
                    db = b.map(lambda p: _diff_alpha(p, xs, gamma))
                    if db.is_zero:
                        continue
                    coeff = (a * db).scale(multi_binomial(alpha, gamma))
                    key = tuple(x - g + y for x, g, y in zip(alpha, gamma, beta))
                    out[key] = out[key] + coeff if key in out else coeff
        return SymbolOperator(U, out, self.order)

    def __matmul__(self, other):
        return self.compose(other)

    def commutator(self, other: "SymbolOperator") -> "SymbolOperator":
        return self.compose(other) - other.compose(self)

    def _check(self, other):
        if other.universe is not self.universe or other.order != self.order:
            raise QuantizationError("operators differ in universe or order")

    def __add__(self, other):
        self._check(other)
        out = dict(self.terms)
        for a, c in other.terms.items():
            out[a] = out[a] + c if a in out else c
        return SymbolOperator(self.universe, out, self.order)

    def __neg__(self):
        return SymbolOperator(self.universe, {a: -c for a, c in self.terms.items()}, self.order)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c):
        return SymbolOperator(self.universe, {a: s.scale(c) for a, s in self.terms.items()}, self.order)

    def truncate(self, order: int) -> "SymbolOperator":
        return SymbolOperator(self.universe, {a: c.truncate(order) for a, c in self.terms.items()}, order)

    def __eq__(self, other):
        if not isinstance(other, SymbolOperator):
            return NotImplemented
        return (
            self.universe is other.universe
            and self.order == other.order
            and self.terms == other.terms
        )

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def max_derivative_order(self) -> int:
        return max((sum(a) for a in self.terms), default=0)

    def to_symbol(self, order: int | None = None) -> HbarSeries:
        """Inverse of :meth:`from_symbol`.  The hbar^j coefficient of the result
        is complete for xi-monomials with j + |alpha| <= self.order."""
        U = self.universe
        N = self.order if order is None else order
        xi = list(U.family_indices("xi"))
        coeffs = [U.zero() for _ in range(N + 1)]
        for alpha, c in self.terms.items():
            a = sum(alpha)
            mono_e = [0] * U.nvars
            for k, p in zip(xi, alpha):
                mono_e[k] = p
            mono = U.monomial(mono_e)
            scale = I ** a
            for m, cm in enumerate(c.coeffs):
                if not cm:
                    continue
                if m < a:
                    raise QuantizationError(
                        f"operator term hbar^{m} d^{alpha} is not a standard quantization"
                    )
                if m - a <= N:
                    coeffs[m - a] = coeffs[m - a] + (cm * mono).scale(scale)
        return HbarSeries(coeffs, N)

    def __str__(self):
        if not self.terms:
            return "0"
        parts = []
        for alpha, c in sorted(self.terms.items()):
            d = "*".join(f"d{k+1}^{a}" if a > 1 else f"d{k+1}" for k, a in enumerate(alpha) if a)
            parts.append(f"[{c}]" + (f"*{d}" if d else ""))
        return " + ".join(parts)

    def __repr__(self):
        return f"SymbolOperator[N={self.order}]({self})"


def op_apply(f, psi, order: int | None = None) -> HbarSeries:
    """Op(f) psi truncated at hbar^order."""
    if order is None:
        order = f.order if isinstance(f, HbarSeries) else (psi.order if isinstance(psi, HbarSeries) else 0)
    return SymbolOperator.from_symbol(f, order).apply(psi)


def _x_monomials(U: Universe, degree: int, min_degree: int = 0):
    xs = list(U.family_indices("x"))
    for beta in multi_indices(len(xs), degree, min_degree):
        e = [0] * U.nvars
        for k, b in zip(xs, beta):
            e[k] = b
        yield beta, U.monomial(e)


def extract_operator(action, universe: Universe, degree: int, order: int, validate: bool = True) -> SymbolOperator:
    """The differential operator of order <= ``degree`` agreeing with
    ``action`` (a callable on x-monomials) on all monomials of degree <= degree.

    With ``validate`` the result is also checked on monomials of degree+1;
    a mismatch means the input was not such an operator.
    """
    U = universe
    xs = list(U.family_indices("x"))
    terms: dict = {}
    for beta, mono in _x_monomials(U, degree):
        target = _as_series(action(mono), order)
        for alpha, c in terms.items():
            if all(a <= b for a, b in zip(alpha, beta)):
                target = target - c * _diff_alpha(mono, xs, alpha)
        # remaining target must be c_beta * beta!
        coeff = target.scale(as_gr(Fraction(1, multi_factorial(beta))))
        if not coeff.is_zero:
            terms[beta] = coeff
    op = SymbolOperator(U, terms, order)
    if validate:
        for beta, mono in _x_monomials(U, degree + 1, degree + 1):
            got = op.apply(mono)
            want = _as_series(action(mono), order)
            if got != want:
                raise QuantizationError(
                    f"action is not a differential operator of order <= {degree}: mismatch on {mono}"
                )
    return op


def symbol_extract(action, universe: Universe, degree: int, order: int) -> HbarSeries:
    """Symbol f with Op(f) = action, exact to hbar^order.

    ``action`` must be known to hbar^(order + degree); the operator is
    extracted at that working order and converted back."""
    op = extract_operator(action, universe, degree, order + degree)
    return op.to_symbol(order)


# ---------------------------------------------------------------------------
# star products


def star_standard(f, g, order: int) -> HbarSeries:
    """sum_alpha (hbar/i)^{|alpha|} / alpha! d_xi^alpha f d_x^alpha g."""
    U = f.universe
    f = _as_series(f, order)
    g = _as_series(g, order)
    xi = list(U.family_indices("xi"))
    xs = list(U.family_indices("x"))
    dmax = min(f.degree("xi"), g.degree("x"), order)
    out = HbarSeries.zero(U, order)
    for alpha in multi_indices(len(xs), max(dmax, 0)):
        a = sum(alpha)
        df = f.map(lambda p: _diff_alpha(p, xi, alpha))
        if df.is_zero:
            continue
        dg = g.map(lambda p: _diff_alpha(p, xs, alpha))
        if dg.is_zero:
            continue
        scal = (MINUS_I ** a) * as_gr(Fraction(1, multi_factorial(alpha)))
        out = out + (df * dg).scale(scal).shift(a)
    return out


def star_standard_oracle(f, g, order: int) -> HbarSeries:
    """f *_st g from symbol_extract(Op(f) o Op(g)) at working order order + D."""
    U = f.universe
    fs = _as_series(f, order)
    gs = _as_series(g, order)
    D = max(fs.degree("xi"), 0) + max(gs.degree("xi"), 0)
    W = order + D
    # zero padding is exact: hbar^j of the product only involves orders <= j
    comp = SymbolOperator.from_symbol(fs.with_order(W), W) @ SymbolOperator.from_symbol(gs.with_order(W), W)
    return symbol_extract(comp.apply, U, D, order)


def star_inverse(c, order: int) -> HbarSeries:
    """Inverse of 1 + hbar k under the standard product."""
    U = c.universe
    c = _as_series(c, order)
    if c.coeffs[0] != U.one():
        raise QuantizationError("only symbols of the form 1 + O(hbar) are inverted")
    delta = HbarSeries.one(U, order) - c
    out = HbarSeries.one(U, order)
    term = HbarSeries.one(U, order)
    for _ in range(order):
        term = star_standard(term, delta, order)
        out = out + term
    return out


def standard_commutator(f, g, order: int) -> HbarSeries:
    return star_standard(f, g, order) - star_standard(g, f, order)


# ---------------------------------------------------------------------------
# cotangent-type phases


def cotangent_phase(
    universe: Universe,
    v_idx,
    th_idx,
    R: MultiPoly,
    externals,
    order: int,
    name: str = "",
) -> PhaseModel:
    """Phase ``S = R(v) - <dth, v>`` around ``(v, dth) = 0`` where ``R`` has no
    constant or linear part in ``v``.  Hessian ``[[H, -1], [-1, 0]]`` with
    inverse ``[[0, -1], [-1, -H]]``; the dth block certifies zero signature."""
    U = universe
    v_idx = list(v_idx)
    th_idx = list(th_idx)
    n = len(v_idx)
    split = R.split(v_idx)
    H = [[U.zero()] * n for _ in range(n)]
    interaction = U.zero()
    for alpha, coeff in split.items():
        deg = sum(alpha)
        if deg < 2:
            if coeff:
                raise QuantizationError("R must start at degree 2 in v")
            continue
        if deg == 2:
            idx = [k for k, a in enumerate(alpha) for _ in range(a)]
            i, j = idx
            val = coeff.scale(2) if i == j else coeff
            H[i][j] = H[i][j] + val
            if i != j:
                H[j][i] = H[j][i] + val
        else:
            e = [0] * U.nvars
            for k, a in zip(v_idx, alpha):
                e[k] = a
            interaction = interaction + coeff * U.monomial(e)
    D = 2 * n
    minus = -U.one()
    B = [[U.zero()] * D for _ in range(D)]
    Binv = [[U.zero()] * D for _ in range(D)]
    for i in range(n):
        for j in range(n):
            B[i][j] = H[i][j]
            Binv[n + i][n + j] = -H[i][j]
        B[i][n + i] = B[n + i][i] = minus
        Binv[i][n + i] = Binv[n + i][i] = minus
    return PhaseModel(
        U,
        v_idx + th_idx,
        interaction,
        externals,
        B,
        Binv,
        order,
        isotropic=range(n, D),
        name=name,
    )


def gutt_universe(n: int) -> Universe:
    return Universe([("th", n), ("v", n), ("w", n), ("ta", n), ("tb", n)])


def gutt_phase(algebra: LieAlgebra, f: MultiPoly, g: MultiPoly, order: int) -> PhaseModel:
    """Phase model of the BCH oscillatory integral for f *_G g."""
    n = algebra.dim
    U = gutt_universe(n)
    fu = f.embed(U)
    gu = g.embed(U)
    th = list(U.family_indices("th"))
    ta = list(U.family_indices("ta"))
    tb = list(U.family_indices("tb"))
    f_shift = fu.subs({t: U.var(t) + U.var(a) for t, a in zip(th, ta)})
    g_shift = gu.subs({t: U.var(t) + U.var(b) for t, b in zip(th, tb)})
    # an internal vertex of valence l needs l derivatives of f or g
    depth = max(2, min(2 * order + 2, max(fu.degree(), 0) + max(gu.degree(), 0)))
    b = algebra.bch(U.family("v"), U.family("w"), depth)
    R = U.zero()
    for t, comp in zip(th, b):
        R = R + U.var(t) * comp
    R = R.truncate(("v", "w"), depth) - (R.homogeneous_part(("v", "w"), 1))
    vw = list(U.family_indices("v")) + list(U.family_indices("w"))
    return cotangent_phase(U, vw, ta + tb, R, [f_shift, g_shift], order, name="gutt")


def gutt_via_phase(algebra: LieAlgebra, f: MultiPoly, g: MultiPoly, order: int, **kw) -> HbarSeries:
    """Gutt product from the stationary-phase expansion of the BCH integral."""
    model = gutt_phase(algebra, f, g, order)
    out = expand(model, order, **kw)
    return out.embed(f.universe)


# ---------------------------------------------------------------------------
# G-systems


class GSystem:
    """Formal amplitude ``a_{exp v} = sum_{n<=N} hbar^n P^n(v; x, xi)``."""

    def __init__(self, action: InfinitesimalAction, P, N: int, M: int, name: str = "", factory=None):
        self.action = action
        self.N = N
        self.M = M
        self.name = name
        self.factory = factory
        U = action.universe
        P = list(P) + [U.zero()] * (N + 1 - len(P))
        if len(P) > N + 1:
            raise QuantizationError(f"{len(P)} coefficients given for order {N}")
        cleaned = []
        for n, p in enumerate(P):
            p = U.parse(p) if isinstance(p, str) else p.embed(U)
            allowed = {"x", "xi", "v"}
            bad = [nm for nm in p.variables_used() if not any(nm.startswith(f) and nm[len(f):].isdigit() for f in allowed)]
            if bad:
                raise QuantizationError(f"P^{n} uses variables outside x, xi, v: {bad}")
            if p.degree("xi") > n:
                raise QuantizationError(f"P^{n} has xi-degree {p.degree('xi')} > {n}")
            if p.degree("v") > M:
                raise QuantizationError(f"P^{n} has v-degree {p.degree('v')} > M = {M}")
            cleaned.append(p)
        for n, p in enumerate(cleaned):
            at_unit = p.set_zero(("v",))
            want = U.one() if n == 0 else U.zero()
            if at_unit != want:
                raise QuantizationError(
                    f"unit normalization fails: P^{n} at v = 0 is {at_unit}, expected {want}"
                )
        self.P = tuple(cleaned)
        self.series = HbarSeries(list(self.P), N)

    # constructors -------------------------------------------------------
    @classmethod
    def trivial(cls, action, N, M) -> "GSystem":
        return cls(action, [action.universe.one()], N, M, name="trivial",
                   factory=lambda n, m: cls.trivial(action, n, m))

    @classmethod
    def gauge(cls, action, h, N, M) -> "GSystem":
        """a_v = exp(hbar (h(x) - h(phi_{exp(-v)} x))): the pullback
        representation conjugated by multiplication with exp(hbar h)."""
        U = action.universe
        h = U.parse(h) if isinstance(h, str) else h.embed(U)
        flow = action.flow_series(M)
        xs = list(U.family_indices("x"))
        g = h - h.subs(dict(zip(xs, flow)), (("v",), M)).truncate(("v",), M)
        gs = HbarSeries.from_poly(g, N, 1)
        out = HbarSeries.one(U, N)
        term = HbarSeries.one(U, N)
        for k in range(1, N + 1):
            term = term.mul(gs, (("v",), M)).scale(ONE / k)
            out = out + term
        return cls(action, list(out.coeffs), N, M, name=f"gauge({h})",
                   factory=lambda n, m: cls.gauge(action, h, n, m))

    @classmethod
    def conjugate(cls, action, k, N, M) -> "GSystem":
        """Pullback representation conjugated by Op(1 + hbar k), k of xi-degree <= 1."""
        U = action.universe
        k = U.parse(k) if isinstance(k, str) else k.embed(U)
        if k.degree("xi") > 1 or k.degree("v") > 0:
            raise QuantizationError("conjugating symbol must be at most linear in xi and free of v")
        c = HbarSeries.one(U, N) + HbarSeries.from_poly(k, N, 1)
        cinv = star_inverse(c, N)
        flow = action.flow_series(M)
        xs = list(U.family_indices("x"))
        trunc = (("v",), M)
        h = cinv.map(lambda p: p.subs(dict(zip(xs, flow)), trunc).truncate(("v",), M))
        S = sum((xi * f for xi, f in zip(U.family("xi"), flow)), U.zero())
        sigma = [S.diff(x).truncate(("v",), M) for x in xs]
        a = _apply_symbol_shifted(c, sigma, h, xs, trunc, N)
        return cls(action, list(a.coeffs), N, M, name=f"conjugate({k})",
                   factory=lambda n, m: cls.conjugate(action, k, n, m))

    @classmethod
    def from_dict(cls, action, data: dict, name: str = "") -> "GSystem":
        N = int(data["N"])
        M = int(data["M"])
        U = action.universe
        P = [U.zero() for _ in range(N + 1)]
        for entry in data.get("P", []):
            n = int(entry["n"])
            if not 0 <= n <= N:
                raise QuantizationError(f"P^{n} outside 0..{N}")
            P[n] = P[n] + U.parse(entry["poly"])
        if not any(entry.get("n") == 0 for entry in data.get("P", [])):
            P[0] = U.one()
        return cls(action, P, N, M, name=name or data.get("name", ""))

    @classmethod
    def from_json(cls, action, path) -> "GSystem":
        path = Path(path)
        return cls.from_dict(action, json.loads(path.read_text()), name=path.stem)

    def to_dict(self) -> dict:
        return {"N": self.N, "M": self.M, "P": [{"n": n, "poly": str(p)} for n, p in enumerate(self.P) if p]}

    # ------------------------------------------------------------------
    def at(self, N: int, M: int | None = None) -> "GSystem":
        """The same G-system at other truncations (needs a recipe to go higher)."""
        M = self.M if M is None else M
        if N == self.N and M == self.M:
            return self
        if self.factory is not None:
            return self.factory(N, M)
        if N <= self.N and M <= self.M:
            U = self.action.universe
            return GSystem(self.action, [p.truncate(("v",), M) for p in self.P[: N + 1]], N, M, name=self.name)
        raise QuantizationError(f"G-system {self.name!r} has no recipe to extend to N={N}, M={M}")

    @property
    def is_trivial(self) -> bool:
        U = self.action.universe
        return self.P[0] == U.one() and all(not p for p in self.P[1:])

    def linear_part(self, i: int) -> HbarSeries:
        """d/dv_i a at v = 0: the (D_e a) e_i of the full series."""
        U = self.action.universe
        vi = U.family_var("v", i + 1)
        return self.series.map(lambda p: p.diff(vi).set_zero(("v",)))

    def substituted(self, bindings: dict, trunc) -> HbarSeries:
        return self.series.map(lambda p: p.subs(bindings, trunc).truncate(*trunc))

    def __repr__(self):
        return f"GSystem({self.name}, N={self.N}, M={self.M})"


def _apply_symbol_shifted(c: HbarSeries, sigma, h: HbarSeries, xs, trunc, order: int) -> HbarSeries:
    """sum_alpha c_alpha(x) (sigma + P)^alpha h with P = (hbar/i) d_x; the
    components of sigma are gradients, so the shifted momenta commute."""
    U = c.universe
    cache = {(0,) * len(xs): h}

    def shifted(alpha):
        hit = cache.get(alpha)
        if hit is not None:
            return hit
        j = next(k for k, a in enumerate(alpha) if a)
        prev = list(alpha)
        prev[j] -= 1
        base = shifted(tuple(prev))
        term = base.mul(HbarSeries.from_poly(sigma[j], order), trunc)
        term = term + base.diff(xs[j]).scale(MINUS_I).shift(1)
        term = term.map(lambda p: p.truncate(*trunc))
        cache[alpha] = term
        return term

    out = HbarSeries.zero(U, order)
    for alpha, coeff in _xi_split(c).items():
        out = out + coeff.mul(shifted(alpha), trunc)
    return out.map(lambda p: p.truncate(*trunc))


# ---------------------------------------------------------------------------
# T^a and the Maurer-Cartan check


def _lie_bindings(U, vec, family="v"):
    return dict(zip(U.family_indices(family), vec))


def t_apply(a: GSystem, v, psi, N: int | None = None, M: int | None = None) -> HbarSeries:
    """T^a_{exp v} psi with v a Lie vector of polynomials (e.g. t * e_i)."""
    action = a.action
    U = action.universe
    N = a.N if N is None else N
    M = a.M if M is None else M
    if N > a.N:
        raise QuantizationError(f"G-system known to order {a.N}, asked for {N}")
    psi = _as_series(psi.embed(U) if isinstance(psi, MultiPoly) else psi, N)
    fams = ("v", "w", "t")
    trunc = (fams, M)
    bind = _lie_bindings(U, [p.embed(U) if isinstance(p, MultiPoly) else U.const(p) for p in v])
    flow = [f.subs(bind, trunc).truncate(fams, M) for f in action.flow_series(M)]
    amp = HbarSeries(list(a.series.coeffs[: N + 1]), N).map(lambda p: p.subs(bind, trunc).truncate(fams, M))
    xs = list(U.family_indices("x"))
    out = HbarSeries.zero(U, N)
    for alpha, coeff in _xi_split(amp).items():
        k = sum(alpha)
        if k > N:
            continue
        d = psi.map(lambda p: _diff_alpha(p, xs, alpha))
        if d.is_zero:
            continue
        pulled = d.map(lambda p: p.subs(dict(zip(xs, flow)), trunc).truncate(fams, M))
        out = out + coeff.mul(pulled, trunc).scale(MINUS_I ** k).shift(k)
    return out


def t_infinitesimal(a: GSystem, i: int, N: int | None = None) -> SymbolOperator:
    """d/dt T^a_{exp(t e_i)} at t = 0, extracted from its action on monomials."""
    action = a.action
    U = action.universe
    N = a.N if N is None else N
    t = U.var("t")
    vec = [t if k == i else U.zero() for k in range(action.algebra.dim)]
    ti = U.var_index("t")

    def act(mono):
        series = t_apply(a, vec, mono, N, 1)
        return series.map(lambda p: p.diff(ti).set_zero(("t",)))

    degree = max(1, max((p.degree("xi") for p in a.P[: N + 1]), default=0))
    return extract_operator(act, U, degree, N)


def t_infinitesimal_closed(a: GSystem, i: int, N: int | None = None) -> SymbolOperator:
    """Closed form -X_i . d + Op((D_e a) e_i) of the same generator."""
    action = a.action
    U = action.universe
    N = a.N if N is None else N
    d = action.d
    terms = {}
    for k, comp in enumerate(action.fields[i]):
        if comp:
            alpha = tuple(1 if j == k else 0 for j in range(d))
            terms[alpha] = HbarSeries.from_poly(-comp, N)
    op = SymbolOperator(U, terms, N)
    lin = a.linear_part(i)
    lin = HbarSeries(list(lin.coeffs[: N + 1]), N)
    return op + SymbolOperator.from_symbol(lin, N)


def coboundary(a: GSystem, M: int | None = None) -> HbarSeries:
    """(da)_{exp v, exp w} = -a_{exp BCH(v, w)} truncated at (v, w)-degree M."""
    U = a.action.universe
    M = a.M if M is None else M
    b = a.action.algebra.bch(U.family("v"), U.family("w"), M)
    trunc = (("v", "w"), M)
    return -a.substituted(_lie_bindings(U, b), trunc)


def amplitude_compose(a: GSystem, b: GSystem, N: int | None = None, M: int | None = None) -> HbarSeries:
    """c(v, w; x, xi) with T^a_v T^b_w = T^c relative to the flow at BCH(v, w)."""
    if a.action is not b.action:
        raise QuantizationError("G-systems belong to different actions")
    action = a.action
    U = action.universe
    N = min(a.N, b.N) if N is None else N
    M = min(a.M, b.M) if M is None else M
    trunc = (("v", "w"), M)
    xs = list(U.family_indices("x"))
    ys = list(U.family_indices("y"))
    xis = U.family("xi")
    to_y = dict(zip(xs, U.family("y")))
    # b_w(y, eta): rename v -> w and x -> y
    bw = HbarSeries(list(b.series.coeffs[: N + 1]), N).map(
        lambda p: p.subs({**_lie_bindings(U, U.family("w")), **to_y}, trunc)
    )
    flow_w = [f.subs({**_lie_bindings(U, U.family("w")), **to_y}, trunc) for f in action.flow_series(M)]
    S_w = sum((xi * f for xi, f in zip(xis, flow_w)), U.zero())
    sigma = [S_w.diff(y).truncate(("v", "w"), M) for y in ys]
    av = HbarSeries(list(a.series.coeffs[: N + 1]), N)
    cache = {(0,) * len(ys): bw}

    def shifted(alpha):
        hit = cache.get(alpha)
        if hit is not None:
            return hit
        j = next(k for k, x in enumerate(alpha) if x)
        prev = list(alpha)
        prev[j] -= 1
        base = shifted(tuple(prev))
        term = base.mul(HbarSeries.from_poly(sigma[j], N), trunc)
        term = term + base.diff(ys[j]).scale(MINUS_I).shift(1)
        cache[alpha] = term
        return term

    flow_v = action.flow_series(M)
    at_flow = dict(zip(ys, flow_v))
    out = HbarSeries.zero(U, N)
    for alpha, coeff in _xi_split(av).items():
        q = shifted(alpha).map(lambda p: p.subs(at_flow, trunc).truncate(("v", "w"), M))
        out = out + coeff.mul(q, trunc)
    return out.map(lambda p: p.truncate(("v", "w"), M))


def mc_residual(a: GSystem, N: int | None = None, M: int | None = None) -> dict:
    """da + a*a as a truncated series in (v, w, x, xi), plus the flow
    composition residual the composite amplitude relies on."""
    N = a.N if N is None else N
    M = a.M if M is None else M
    comp = amplitude_compose(a, a, N, M)
    cob = coboundary(a.at(N, M) if (N, M) != (a.N, a.M) else a, M)
    cob = HbarSeries(list(cob.coeffs[: N + 1]), N)
    residual = comp + cob
    flow = a.action.flow_composition_residual(M)
    return {"residual": residual, "flow": flow, "ok": residual.is_zero and all(not f for f in flow)}


def localize(series: HbarSeries, families=("v", "w")) -> list:
    """Nonzero residual coefficients as (hbar order, (v,w)-monomial, x/xi coefficient)."""
    U = series.universe
    idx = [k for f in families for k in U.family_indices(f)]
    out = []
    for n, c in enumerate(series.coeffs):
        for key, coeff in sorted(c.split(idx).items(), key=lambda kv: (sum(kv[0]), kv[0])):
            e = [0] * U.nvars
            for k, p in zip(idx, key):
                e[k] = p
            out.append((n, str(U.monomial(e)), str(coeff)))
    return out


def leading_inverse_residual(a: GSystem, M: int | None = None) -> MultiPoly:
    """P^0_v(x) P^0_{-v}(phi_{exp(-v)} x) - 1 truncated at v-degree M."""
    U = a.action.universe
    M = a.M if M is None else M
    trunc = (("v",), M)
    p0 = a.P[0]
    neg = p0.subs({k: -U.var(k) for k in U.family_indices("v")})
    flow = a.action.flow_series(M)
    moved = neg.subs(dict(zip(U.family_indices("x"), flow)), trunc)
    return (p0.mul(moved, trunc) - U.one()).truncate(("v",), M)


def poisson_leading(f, g) -> MultiPoly:
    return canonical_poisson(f, g)
