"""Exact arithmetic: Gaussian rationals, sparse multivariate polynomials and
hbar-truncated formal series.

Polynomials live in a :class:`Universe`, an ordered list of indexed variable
families such as ``x1..xd``, ``xi1..xid``, ``th1..thn``, ``v1..vn`` and the
scalar ``t``.  A polynomial is a dict mapping exponent tuples (one entry per
variable of the universe) to :class:`GaussianRational` coefficients; zero
coefficients are never stored.

Example (universe x(1), xi(1))::

    x1^2 - xi1^2  ->  {(2, 0): 1, (0, 2): -1}
"""

from __future__ import annotations

import operator
from fractions import Fraction
from itertools import product as iproduct
from math import factorial

from gmpy2 import mpq

__all__ = [
    "GaussianRational",
    "I",
    "Universe",
    "MultiPoly",
    "HbarSeries",
    "ParseError",
    "UniverseMismatch",
    "as_gr",
]


class UniverseMismatch(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}" + (f" in {text!r}" if text else ""))


# ---------------------------------------------------------------------------
# Gaussian rationals


def _to_mpq(value) -> mpq:
    if isinstance(value, Fraction):
        return mpq(value.numerator, value.denominator)
    if isinstance(value, str):
        return mpq(Fraction(value.strip()))
    return mpq(value)


class GaussianRational:
    """Exact element ``re + im*i`` of Q(i)."""

    __slots__ = ("re", "im")

    def __init__(self, re=0, im=0):
        self.re = re if type(re) is type(_ZERO_Q) else _to_mpq(re)
        self.im = im if type(im) is type(_ZERO_Q) else _to_mpq(im)

    @classmethod
    def _raw(cls, re, im):
        g = object.__new__(cls)
        g.re = re
        g.im = im
        return g

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        if type(other) is not GaussianRational:
            other = as_gr(other)
        return GaussianRational._raw(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        if type(other) is not GaussianRational:
            other = as_gr(other)
        return GaussianRational._raw(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return as_gr(other) - self

    def __neg__(self):
        return GaussianRational._raw(-self.re, -self.im)

    def __mul__(self, other):
        if type(other) is not GaussianRational:
            if isinstance(other, (MultiPoly, HbarSeries)):
                return NotImplemented
            other = as_gr(other)
        a, b, c, d = self.re, self.im, other.re, other.im
        if not b:
            if not d:
                return GaussianRational._raw(a * c, _ZERO_Q)
            return GaussianRational._raw(a * c, a * d)
        if not d:
            return GaussianRational._raw(a * c, b * c)
        return GaussianRational._raw(a * c - b * d, a * d + b * c)

    __rmul__ = __mul__

    def conjugate(self):
        return GaussianRational._raw(self.re, -self.im)

    def norm2(self):
        return self.re * self.re + self.im * self.im

    def inverse(self):
        n = self.norm2()
        if not n:
            raise ZeroDivisionError("inverse of zero Gaussian rational")
        return GaussianRational._raw(self.re / n, -self.im / n)

    def __truediv__(self, other):
        if type(other) is not GaussianRational:
            other = as_gr(other)
        return self * other.inverse()

    def __rtruediv__(self, other):
        return as_gr(other) * self.inverse()

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        result = ONE
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # comparisons ------------------------------------------------------
    def __bool__(self):
        return bool(self.re) or bool(self.im)

    def __eq__(self, other):
        if type(other) is not GaussianRational:
            try:
                other = as_gr(other)
            except TypeError:
                return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self):
        if not self.im:
            return hash(Fraction(int(self.re.numerator), int(self.re.denominator)))
        return hash((int(self.re.numerator), int(self.re.denominator),
                     int(self.im.numerator), int(self.im.denominator)))

    def is_real(self) -> bool:
        return not self.im

    @property
    def real_fraction(self) -> Fraction:
        return Fraction(int(self.re.numerator), int(self.re.denominator))

    @property
    def imag_fraction(self) -> Fraction:
        return Fraction(int(self.im.numerator), int(self.im.denominator))

    def __repr__(self):
        return f"GaussianRational({self})"

    def __str__(self):
        return format_gr(self)


_ZERO_Q = mpq(0)
_ONE_Q = mpq(1)
ZERO = GaussianRational._raw(_ZERO_Q, _ZERO_Q)
ONE = GaussianRational._raw(_ONE_Q, _ZERO_Q)
I = GaussianRational._raw(_ZERO_Q, _ONE_Q)


def as_gr(value) -> GaussianRational:
    if type(value) is GaussianRational:
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a scalar")
    if isinstance(value, (int, Fraction)) or type(value) is type(_ZERO_Q):
        return GaussianRational._raw(_to_mpq(value), _ZERO_Q)
    if isinstance(value, complex):
        raise TypeError("floating complex numbers are not exact scalars")
    if isinstance(value, str):
        return GaussianRational._raw(_to_mpq(value), _ZERO_Q)
    raise TypeError(f"cannot convert {type(value).__name__} to GaussianRational")


def _format_q(q) -> str:
    num, den = int(q.numerator), int(q.denominator)
    return str(num) if den == 1 else f"{num}/{den}"


def format_gr(c: GaussianRational) -> str:
    """``p/q``, ``p/q*i`` or ``(a+b*i)``."""
    if not c.im:
        return _format_q(c.re)
    if c.im == 1:
        im = "i"
    elif c.im == -1:
        im = "-i"
    else:
        im = f"{_format_q(c.im)}*i"
    if not c.re:
        return im
    sign = "" if im.startswith("-") else "+"
    return f"({_format_q(c.re)}{sign}{im})"


# ---------------------------------------------------------------------------
# Variable universes

SCALAR_FAMILIES = frozenset({"t"})


class Universe:
    """Ordered indexed variable families.  Instances are interned, so two
    universes with the same families are the same object."""

    _cache: dict = {}

    def __new__(cls, families):
        families = tuple((str(name), int(size)) for name, size in families)
        hit = cls._cache.get(families)
        if hit is not None:
            return hit
        self = object.__new__(cls)
        self.families = families
        names = []
        offsets = {}
        pos = 0
        for name, size in families:
            if name in offsets:
                raise ValueError(f"duplicate family {name!r}")
            if size < 0 or (name in SCALAR_FAMILIES and size != 1):
                raise ValueError(f"bad size {size} for family {name!r}")
            offsets[name] = (pos, size)
            if name in SCALAR_FAMILIES:
                names.append(name)
            else:
                names.extend(f"{name}{k}" for k in range(1, size + 1))
            pos += size
        self.names = tuple(names)
        self.offsets = offsets
        self.nvars = pos
        self.index = {nm: k for k, nm in enumerate(names)}
        self._zero_exp = (0,) * pos
        # longest family names first, for tokenizing "xi1" before "x1"
        self._family_order = sorted(offsets, key=len, reverse=True)
        cls._cache[families] = self
        return self

    def __reduce__(self):
        return (Universe, (self.families,))

    def __repr__(self):
        inner = ", ".join(f"{n}[{s}]" for n, s in self.families)
        return f"Universe({inner})"

    def has_family(self, name: str) -> bool:
        return name in self.offsets

    def family_size(self, name: str) -> int:
        return self.offsets[name][1]

    def family_indices(self, name: str) -> range:
        start, size = self.offsets[name]
        return range(start, start + size)

    def var_index(self, name: str) -> int:
        try:
            return self.index[name]
        except KeyError:
            raise KeyError(f"variable {name!r} not in {self!r}") from None

    def family_var(self, family: str, k: int) -> int:
        """Flat index of the 1-based ``k``-th variable of ``family``."""
        start, size = self.offsets[family]
        if not 1 <= k <= size:
            raise IndexError(f"{family}{k} out of range (size {size})")
        return start + k - 1

    # constructors -------------------------------------------------------
    def zero(self) -> "MultiPoly":
        return MultiPoly(self, {})

    def one(self) -> "MultiPoly":
        return MultiPoly(self, {self._zero_exp: ONE})

    def const(self, c) -> "MultiPoly":
        c = as_gr(c)
        return MultiPoly(self, {self._zero_exp: c} if c else {})

    def var(self, name) -> "MultiPoly":
        k = name if isinstance(name, int) else self.var_index(name)
        e = [0] * self.nvars
        e[k] = 1
        return MultiPoly(self, {tuple(e): ONE})

    def family(self, name: str) -> list["MultiPoly"]:
        return [self.var(k) for k in self.family_indices(name)]

    def monomial(self, exps) -> "MultiPoly":
        exps = tuple(exps)
        if len(exps) != self.nvars:
            raise ValueError("exponent length mismatch")
        return MultiPoly(self, {exps: ONE})

    def parse(self, text: str) -> "MultiPoly":
        return _Parser(self, text).parse()

    def extended(self, *families) -> "Universe":
        """Universe with extra families appended (existing ones kept)."""
        fam = list(self.families)
        for name, size in families:
            if name not in self.offsets:
                fam.append((name, size))
        return Universe(fam)


def standard_universe(d: int, n: int) -> Universe:
    """Phase-space, Lie-dual and group-parameter families used throughout."""
    return Universe([("x", d), ("xi", d), ("th", n), ("v", n), ("w", n), ("t", 1), ("y", d)])


def theta_universe(n: int) -> Universe:
    return Universe([("th", n)])


# ---------------------------------------------------------------------------
# Polynomials

_add = operator.add


def _trunc_spec(universe: Universe, families, max_degree):
    if families is None:
        return None
    idx = tuple(k for f in families if universe.has_family(f) for k in universe.family_indices(f))
    return idx, max_degree


class MultiPoly:
    """Sparse polynomial with Gaussian-rational coefficients.

    Treat instances as immutable; every operation returns a new polynomial.
    """

    __slots__ = ("universe", "terms")

    def __init__(self, universe: Universe, terms: dict | None = None):
        self.universe = universe
        self.terms = terms if terms is not None else {}

    # helpers ------------------------------------------------------------
    def _check(self, other: "MultiPoly"):
        if other.universe is not self.universe:
            raise UniverseMismatch(f"operands live in {self.universe!r} and {other.universe!r}")

    def _coerce(self, other):
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        return self.universe.const(other)

    @property
    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self):
        return bool(self.terms)

    def __len__(self):
        return len(self.terms)

    def is_constant(self) -> bool:
        return not self.terms or (len(self.terms) == 1 and self.universe._zero_exp in self.terms)

    def constant_term(self) -> GaussianRational:
        return self.terms.get(self.universe._zero_exp, ZERO)

    # ring operations ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, HbarSeries):
            return NotImplemented
        other = self._coerce(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for e, c in other.terms.items():
            prev = out.get(e)
            if prev is None:
                out[e] = c
            else:
                s = prev + c
                if s:
                    out[e] = s
                else:
                    del out[e]
        return MultiPoly(self.universe, out)

    __radd__ = __add__

    def __neg__(self):
        return MultiPoly(self.universe, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, HbarSeries):
            return NotImplemented
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, c) -> "MultiPoly":
        c = as_gr(c)
        if not c:
            return self.universe.zero()
        if c == ONE:
            return self
        return MultiPoly(self.universe, {e: v * c for e, v in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, HbarSeries):
            return NotImplemented
        if not isinstance(other, MultiPoly):
            return self.scale(other)
        return self.mul(other)

    __rmul__ = __mul__

    def mul(self, other: "MultiPoly", truncate=None) -> "MultiPoly":
        """Product; ``truncate=(families, max_degree)`` drops terms whose total
        degree in ``families`` exceeds ``max_degree``."""
        self._check(other)
        if not self.terms or not other.terms:
            return self.universe.zero()
        out: dict = {}
        get = out.get
        tspec = _trunc_spec(self.universe, *truncate) if truncate else None
        if tspec is None:
            for e1, c1 in self.terms.items():
                for e2, c2 in other.terms.items():
                    e = tuple(map(_add, e1, e2))
                    prev = get(e)
                    out[e] = c1 * c2 if prev is None else prev + c1 * c2
        else:
            idx, cap = tspec
            b = {e2: sum(e2[k] for k in idx) for e2 in other.terms}
            for e1, c1 in self.terms.items():
                d1 = sum(e1[k] for k in idx)
                if d1 > cap:
                    continue
                for e2, c2 in other.terms.items():
                    if d1 + b[e2] > cap:
                        continue
                    e = tuple(map(_add, e1, e2))
                    prev = get(e)
                    out[e] = c1 * c2 if prev is None else prev + c1 * c2
        return MultiPoly(self.universe, {e: c for e, c in out.items() if c})

    def __pow__(self, k: int):
        return self.power(k)

    def power(self, k: int, truncate=None) -> "MultiPoly":
        if k < 0:
            raise ValueError("negative power of a polynomial")
        result = self.universe.one()
        base = self
        while k:
            if k & 1:
                result = result.mul(base, truncate)
            k >>= 1
            if k:
                base = base.mul(base, truncate)
        return result

    def __eq__(self, other):
        if isinstance(other, MultiPoly):
            return self.universe is other.universe and self.terms == other.terms
        if isinstance(other, HbarSeries):
            return NotImplemented
        try:
            return self.terms == self.universe.const(other).terms
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((id(self.universe), frozenset(self.terms.items())))

    # calculus -----------------------------------------------------------
    def diff(self, var, order: int = 1) -> "MultiPoly":
        """Partial derivative with respect to ``var`` (name or flat index), iterated."""
        k = var if isinstance(var, int) else self.universe.var_index(var)
        if order == 0:
            return self
        out = {}
        for e, c in self.terms.items():
            p = e[k]
            if p < order:
                continue
            fall = 1
            for j in range(order):
                fall *= p - j
            ne = e[:k] + (p - order,) + e[k + 1:]
            out[ne] = c * fall
        return MultiPoly(self.universe, out)

    def diff_multi(self, orders: dict) -> "MultiPoly":
        """Mixed partial: ``orders`` maps variable index to derivative order."""
        out = self
        for k, o in orders.items():
            if o:
                out = out.diff(k, o)
                if not out.terms:
                    break
        return out

    # structure ----------------------------------------------------------
    def degree(self, family: str | None = None) -> int:
        """Total degree, or the total degree in one family; -1 for zero."""
        if not self.terms:
            return -1
        if family is None:
            return max(sum(e) for e in self.terms)
        idx = self.universe.family_indices(family)
        return max(sum(e[k] for k in idx) for e in self.terms)

    def degree_in(self, families) -> int:
        if not self.terms:
            return -1
        idx = [k for f in families if self.universe.has_family(f) for k in self.universe.family_indices(f)]
        return max(sum(e[k] for k in idx) for e in self.terms)

    def truncate(self, families, max_degree: int) -> "MultiPoly":
        idx = [k for f in families if self.universe.has_family(f) for k in self.universe.family_indices(f)]
        return MultiPoly(
            self.universe,
            {e: c for e, c in self.terms.items() if sum(e[k] for k in idx) <= max_degree},
        )

    def homogeneous_part(self, families, degree: int) -> "MultiPoly":
        idx = [k for f in families if self.universe.has_family(f) for k in self.universe.family_indices(f)]
        return MultiPoly(
            self.universe,
            {e: c for e, c in self.terms.items() if sum(e[k] for k in idx) == degree},
        )

    def variables_used(self) -> set[str]:
        used = set()
        for e in self.terms:
            for k, p in enumerate(e):
                if p:
                    used.add(self.universe.names[k])
        return used

    def split(self, indices) -> dict:
        """Split by the exponents at ``indices``: returns {sub-exponent: coefficient
        polynomial with those variables removed}."""
        indices = tuple(indices)
        out: dict = {}
        for e, c in self.terms.items():
            key = tuple(e[k] for k in indices)
            rest = list(e)
            for k in indices:
                rest[k] = 0
            bucket = out.setdefault(key, {})
            bucket[tuple(rest)] = c
        return {k: MultiPoly(self.universe, v) for k, v in out.items()}

    def set_zero(self, families) -> "MultiPoly":
        idx = [k for f in families if self.universe.has_family(f) for k in self.universe.family_indices(f)]
        return MultiPoly(
            self.universe, {e: c for e, c in self.terms.items() if not any(e[k] for k in idx)}
        )

    def subs(self, bindings: dict, truncate=None) -> "MultiPoly":
        """Simultaneous substitution ``var -> polynomial``; unbound variables are kept."""
        U = self.universe
        bound = {}
        for key, val in bindings.items():
            k = key if isinstance(key, int) else U.var_index(key)
            if isinstance(val, MultiPoly):
                self._check(val)
            else:
                val = U.const(val)
            bound[k] = val
        if not bound:
            return self
        ks = sorted(bound)
        cache: dict = {}

        def pw(k, p):
            hit = cache.get((k, p))
            if hit is None:
                hit = bound[k].power(p, truncate) if p < 2 else pw(k, p - 1).mul(bound[k], truncate)
                cache[(k, p)] = hit
            return hit

        groups: dict = {}
        for e, c in self.terms.items():
            key = tuple(e[k] for k in ks)
            rest = list(e)
            for k in ks:
                rest[k] = 0
            groups.setdefault(key, {})[tuple(rest)] = c
        total: dict = {}
        for key, rest_terms in groups.items():
            factor = MultiPoly(U, rest_terms)
            for k, p in zip(ks, key):
                if p:
                    factor = factor.mul(pw(k, p), truncate)
                    if not factor.terms:
                        break
            for e, c in factor.terms.items():
                prev = total.get(e)
                total[e] = c if prev is None else prev + c
        return MultiPoly(U, {e: c for e, c in total.items() if c})

    def embed(self, universe: Universe) -> "MultiPoly":
        """Re-express in another universe containing every variable used."""
        if universe is self.universe:
            return self
        src = self.universe
        mapping = []
        for k, name in enumerate(src.names):
            mapping.append(universe.index.get(name))
        out = {}
        for e, c in self.terms.items():
            ne = [0] * universe.nvars
            for k, p in enumerate(e):
                if p:
                    tgt = mapping[k]
                    if tgt is None:
                        raise UniverseMismatch(f"variable {src.names[k]} missing from {universe!r}")
                    ne[tgt] = p
            out[tuple(ne)] = c
        return MultiPoly(universe, out)

    def map_coefficients(self, fn) -> "MultiPoly":
        return MultiPoly(self.universe, {e: v for e, c in self.terms.items() if (v := fn(c))})

    def conjugate(self) -> "MultiPoly":
        return self.map_coefficients(GaussianRational.conjugate)

    # output -------------------------------------------------------------
    def sorted_terms(self):
        return sorted(self.terms.items(), key=lambda kv: (-sum(kv[0]), tuple(-p for p in kv[0])))

    def __str__(self):
        if not self.terms:
            return "0"
        names = self.universe.names
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(
                names[k] if p == 1 else f"{names[k]}^{p}" for k, p in enumerate(e) if p
            )
            if not mono:
                s = format_gr(c)
            elif c == ONE:
                s = mono
            elif c == -ONE:
                s = "-" + mono
            else:
                s = f"{format_gr(c)}*{mono}"
            if parts and not s.startswith("-"):
                s = "+" + s
            parts.append(s)
        return "".join(parts)

    def __repr__(self):
        return f"MultiPoly({self})"


# ---------------------------------------------------------------------------
# hbar series


class HbarSeries:
    """``c_0 + hbar c_1 + ... + hbar^N c_N`` with MultiPoly coefficients; all
    arithmetic discards orders above ``N``."""

    __slots__ = ("order", "coeffs", "universe")

    def __init__(self, coeffs, order: int | None = None):
        coeffs = list(coeffs)
        if not coeffs:
            raise ValueError("HbarSeries needs at least one coefficient (use HbarSeries.zero)")
        universe = coeffs[0].universe
        for c in coeffs:
            if c.universe is not universe:
                raise UniverseMismatch("series coefficients from different universes")
        if order is None:
            order = len(coeffs) - 1
        if len(coeffs) > order + 1:
            coeffs = coeffs[: order + 1]
        while len(coeffs) < order + 1:
            coeffs.append(universe.zero())
        self.order = order
        self.coeffs = tuple(coeffs)
        self.universe = universe

    @classmethod
    def zero(cls, universe: Universe, order: int) -> "HbarSeries":
        return cls([universe.zero()] * (order + 1), order)

    @classmethod
    def one(cls, universe: Universe, order: int) -> "HbarSeries":
        return cls([universe.one()] + [universe.zero()] * order, order)

    @classmethod
    def from_poly(cls, p: MultiPoly, order: int, power: int = 0) -> "HbarSeries":
        U = p.universe
        cs = [U.zero()] * (order + 1)
        if power <= order:
            cs[power] = p
        return cls(cs, order)

    @classmethod
    def hbar(cls, universe: Universe, order: int) -> "HbarSeries":
        return cls.from_poly(universe.one(), order, 1)

    def _coerce(self, other) -> "HbarSeries":
        if isinstance(other, HbarSeries):
            if other.universe is not self.universe:
                raise UniverseMismatch(f"series in {self.universe!r} and {other.universe!r}")
            if other.order != self.order:
                raise ValueError(f"truncation order mismatch: {self.order} vs {other.order}")
            return other
        if isinstance(other, MultiPoly):
            return HbarSeries.from_poly(other, self.order)
        return HbarSeries.from_poly(self.universe.const(other), self.order)

    def __getitem__(self, k: int) -> MultiPoly:
        return self.coeffs[k]

    def __iter__(self):
        return iter(self.coeffs)

    @property
    def is_zero(self) -> bool:
        return all(not c.terms for c in self.coeffs)

    def __bool__(self):
        return not self.is_zero

    def __add__(self, other):
        o = self._coerce(other)
        return HbarSeries([a + b for a, b in zip(self.coeffs, o.coeffs)], self.order)

    __radd__ = __add__

    def __neg__(self):
        return HbarSeries([-a for a in self.coeffs], self.order)

    def __sub__(self, other):
        o = self._coerce(other)
        return HbarSeries([a - b for a, b in zip(self.coeffs, o.coeffs)], self.order)

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, HbarSeries):
            return self.mul(other)
        if isinstance(other, MultiPoly):
            if other.universe is not self.universe:
                raise UniverseMismatch("series/polynomial universe mismatch")
            return HbarSeries([a * other for a in self.coeffs], self.order)
        return self.scale(other)

    __rmul__ = __mul__

    def mul(self, other: "HbarSeries", truncate=None) -> "HbarSeries":
        o = self._coerce(other)
        N = self.order
        out = [self.universe.zero()] * (N + 1)
        for i, a in enumerate(self.coeffs):
            if not a.terms:
                continue
            for j in range(N + 1 - i):
                b = o.coeffs[j]
                if b.terms:
                    out[i + j] = out[i + j] + a.mul(b, truncate)
        return HbarSeries(out, N)

    def scale(self, c) -> "HbarSeries":
        c = as_gr(c)
        return HbarSeries([a.scale(c) for a in self.coeffs], self.order)

    def shift(self, k: int) -> "HbarSeries":
        """Multiply by ``hbar**k`` (``k`` may be negative only if the low
        coefficients vanish)."""
        U = self.universe
        if k >= 0:
            return HbarSeries([U.zero()] * k + list(self.coeffs[: self.order + 1 - k]), self.order)
        for c in self.coeffs[:-k]:
            if c.terms:
                raise ValueError(f"series not divisible by hbar^{-k}")
        return HbarSeries(list(self.coeffs[-k:]) + [U.zero()] * (-k), self.order)

    def power(self, k: int) -> "HbarSeries":
        out = HbarSeries.one(self.universe, self.order)
        for _ in range(k):
            out = out * self
        return out

    def map(self, fn) -> "HbarSeries":
        return HbarSeries([fn(c) for c in self.coeffs], self.order)

    def diff(self, var, order: int = 1) -> "HbarSeries":
        return self.map(lambda c: c.diff(var, order))

    def subs(self, bindings: dict, truncate=None) -> "HbarSeries":
        return self.map(lambda c: c.subs(bindings, truncate))

    def truncate(self, order: int) -> "HbarSeries":
        if order > self.order:
            raise ValueError(f"cannot raise truncation order from {self.order} to {order}")
        return HbarSeries(self.coeffs[: order + 1], order)

    def with_order(self, order: int) -> "HbarSeries":
        """Pad with zero coefficients or truncate.  Padding asserts nothing about
        the unknown higher orders; callers use it only for exact data."""
        if order <= self.order:
            return self.truncate(order)
        return HbarSeries(self.coeffs, order)

    def embed(self, universe: Universe) -> "HbarSeries":
        return self.map(lambda c: c.embed(universe))

    def degree(self, family=None) -> int:
        return max(c.degree(family) for c in self.coeffs)

    def __eq__(self, other):
        if isinstance(other, HbarSeries):
            return (
                self.universe is other.universe
                and self.order == other.order
                and self.coeffs == other.coeffs
            )
        if isinstance(other, MultiPoly):
            return self == HbarSeries.from_poly(other, self.order) if other.universe is self.universe else False
        try:
            return self == self._coerce(other)
        except TypeError:
            return NotImplemented

    def __hash__(self):
        return hash((self.order, self.coeffs))

    def to_dict(self) -> dict:
        """``{order: polynomial string}`` for the nonzero orders."""
        return {str(k): str(c) for k, c in enumerate(self.coeffs) if c.terms}

    def nonzero_orders(self) -> list[int]:
        return [k for k, c in enumerate(self.coeffs) if c.terms]

    def __str__(self):
        parts = []
        for k, c in enumerate(self.coeffs):
            if not c.terms:
                continue
            s = str(c)
            if k == 0:
                parts.append(s)
            elif k == 1:
                parts.append(f"hbar*({s})")
            else:
                parts.append(f"hbar^{k}*({s})")
        return " + ".join(parts) if parts else "0"

    def __repr__(self):
        return f"HbarSeries[N={self.order}]({self})"


# hbar/i and i/hbar as exact scalars: hbar/i = -i*hbar
MINUS_I = -I


def hbar_over_i_power(k: int) -> GaussianRational:
    """Scalar part of ``(hbar/i)**k``, i.e. ``(-i)**k``."""
    return MINUS_I ** k


# ---------------------------------------------------------------------------
# multi-index helpers


def multi_indices(dim: int, max_order: int, min_order: int = 0):
    """All exponent tuples of length ``dim`` with total order in range."""
    for total in range(min_order, max_order + 1):
        yield from _compositions(total, dim)


def _compositions(total: int, parts: int):
    if parts == 0:
        if total == 0:
            yield ()
        return
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def multi_factorial(alpha) -> int:
    out = 1
    for a in alpha:
        out *= factorial(a)
    return out


def multi_binomial(alpha, gamma) -> int:
    out = 1
    for a, g in zip(alpha, gamma):
        out *= factorial(a) // (factorial(g) * factorial(a - g))
    return out


def sub_indices(alpha):
    """All gamma <= alpha componentwise."""
    return iproduct(*(range(a + 1) for a in alpha))


# ---------------------------------------------------------------------------
# parsing


class _Parser:
    """Recursive-descent parser for the polynomial literal grammar.

    expr   := [sign] term (sign term)*
    term   := factor (('*' | '/') factor)*
    factor := sign factor | base ['^' exponent]
    base   := INT | 'i' | VARIABLE | '(' expr ')'
    """

    def __init__(self, universe: Universe, text: str):
        self.U = universe
        self.text = text
        self.tokens = self._tokenize(text)
        self.pos = 0

    def _tokenize(self, text):
        toks = []
        k = 0
        n = len(text)
        while k < n:
            ch = text[k]
            if ch.isspace():
                k += 1
                continue
            if ch.isdigit():
                j = k
                while j < n and text[j].isdigit():
                    j += 1
                toks.append(("int", int(text[k:j]), k))
                k = j
                continue
            if ch.isalpha() or ch == "_":
                j = k
                while j < n and (text[j].isalnum() or text[j] == "_"):
                    j += 1
                toks.append(("name", text[k:j], k))
                k = j
                continue
            if ch in "+-*/^(){}":
                toks.append((ch, ch, k))
                k += 1
                continue
            raise ParseError(f"unexpected character {ch!r}", k, text)
        toks.append(("end", None, n))
        return toks

    def peek(self):
        return self.tokens[self.pos]

    def take(self, kind=None):
        tok = self.tokens[self.pos]
        if kind is not None and tok[0] != kind:
            found = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ParseError(f"expected {kind!r}, found {found}", tok[2], self.text)
        self.pos += 1
        return tok

    def parse(self) -> MultiPoly:
        if self.peek()[0] == "end":
            raise ParseError("empty expression", 0, self.text)
        out = self.expr()
        tok = self.peek()
        if tok[0] != "end":
            raise ParseError(f"unexpected {tok[1]!r}", tok[2], self.text)
        return out

    def expr(self) -> MultiPoly:
        sign = 1
        if self.peek()[0] in "+-":
            sign = -1 if self.take()[0] == "-" else 1
        acc = self.term()
        if sign < 0:
            acc = -acc
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            t = self.term()
            acc = acc + t if op == "+" else acc - t
        return acc

    def term(self) -> MultiPoly:
        acc = self.factor()
        while self.peek()[0] in ("*", "/"):
            op, _, at = self.take()
            f = self.factor()
            if op == "*":
                acc = acc * f
            else:
                if not f.is_constant() or f.is_zero:
                    raise ParseError("division only by nonzero constants", at, self.text)
                acc = acc.scale(f.constant_term().inverse())
        return acc

    def factor(self) -> MultiPoly:
        kind = self.peek()[0]
        if kind in ("+", "-"):
            op = self.take()[0]
            f = self.factor()
            return -f if op == "-" else f
        base = self.base()
        if self.peek()[0] == "^":
            _, _, at = self.take()
            k = self.exponent()
            if k < 0:
                if not base.is_constant() or base.is_zero:
                    raise ParseError("negative powers only of nonzero constants", at, self.text)
                return self.U.const(base.constant_term() ** k)
            return base ** k
        return base

    def exponent(self) -> int:
        tok = self.peek()
        if tok[0] in ("{", "("):
            close = "}" if tok[0] == "{" else ")"
            self.take()
            k = self.signed_int()
            self.take(close)
            return k
        return self.signed_int()

    def signed_int(self) -> int:
        sign = 1
        if self.peek()[0] == "-":
            self.take()
            sign = -1
        return sign * self.take("int")[1]

    def base(self) -> MultiPoly:
        kind, val, at = self.peek()
        if kind == "int":
            self.take()
            return self.U.const(val)
        if kind == "name":
            self.take()
            if val == "i":
                return self.U.const(I)
            if val in self.U.index:
                return self.U.var(val)
            raise ParseError(f"unknown variable {val!r}", at, self.text)
        if kind == "(":
            self.take()
            inner = self.expr()
            self.take(")")
            return inner
        raise ParseError("unexpected end of input" if kind == "end" else f"unexpected {val!r}", at, self.text)
