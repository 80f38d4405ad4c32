"""Finite-dimensional Lie algebras given by structure constants.

Contents: the bracket on (polynomial-valued) Lie vectors, the BCH series via
the free associative algebra, the universal enveloping algebra with its PBW
normal ordering, the symmetrization map and the Gutt product it transports,
and the Kirillov-Kostant bracket on polynomials in the dual coordinates ``th``.

Basis indices are 0-based internally and 1-based in JSON and in variable
names (``e1``, ``th1``).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from itertools import permutations
from math import factorial
from pathlib import Path

from .algebra import (
    ONE,
    ZERO,
    GaussianRational,
    HbarSeries,
    MultiPoly,
    Universe,
    as_gr,
    format_gr,
    theta_universe,
)

HBAR_OVER_I = GaussianRational(0, -1)  # scalar part of hbar/i


class LieAlgebraError(ValueError):
    pass


class LieAlgebra:
    """Lie algebra with ``[e_i, e_j] = sum_k c[i][j][k] e_k``."""

    def __init__(self, dim: int, structure=None, name: str = ""):
        if dim < 1:
            raise LieAlgebraError("dimension must be positive")
        self.dim = dim
        self.name = name
        c = [[[ZERO] * dim for _ in range(dim)] for _ in range(dim)]
        for (i, j), coeffs in (structure or {}).items():
            for k, val in coeffs.items():
                c[i][j][k] = as_gr(val) if not isinstance(val, GaussianRational) else val
        self.c = c
        # sparse view: (i, j) -> [(k, c)] for nonzero brackets
        self.sparse = {
            (i, j): [(k, c[i][j][k]) for k in range(dim) if c[i][j][k]]
            for i in range(dim)
            for j in range(dim)
        }
        self.sparse = {key: val for key, val in self.sparse.items() if val}
        self.validate()
        self._normal_cache: dict = {}

    # ------------------------------------------------------------------
    @property
    def is_abelian(self) -> bool:
        return not self.sparse

    def validate(self):
        n = self.dim
        c = self.c
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    if c[i][j][k] + c[j][i][k]:
                        raise LieAlgebraError(
                            f"antisymmetry fails: c[{i+1}][{j+1}][{k+1}] = {c[i][j][k]}, "
                            f"c[{j+1}][{i+1}][{k+1}] = {c[j][i][k]}"
                        )
        res = self.jacobi_residual()
        if res:
            (i, j, k, m), val = next(iter(res.items()))
            raise LieAlgebraError(
                f"Jacobi identity fails for (e{i+1}, e{j+1}, e{k+1}): component e{m+1} = {val}"
            )

    def jacobi_residual(self) -> dict:
        """Nonzero components of [e_i,[e_j,e_k]] + cyclic."""
        n = self.dim
        c = self.c
        out = {}
        for i in range(n):
            for j in range(n):
                for k in range(n):
                    for m in range(n):
                        s = ZERO
                        for l in range(n):
                            s = s + c[j][k][l] * c[i][l][m] + c[k][i][l] * c[j][l][m] + c[i][j][l] * c[k][l][m]
                        if s:
                            out[(i, j, k, m)] = s
        return out

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict, name: str = "") -> "LieAlgebra":
        dim = int(data["dim"])
        structure: dict = {}
        for entry in data.get("structure", []):
            i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
            if not (0 <= i < dim and 0 <= j < dim):
                raise LieAlgebraError(f"basis index out of range in {entry}")
            coeffs = {}
            for k, val in entry["coeffs"].items():
                k = int(k) - 1
                if not 0 <= k < dim:
                    raise LieAlgebraError(f"basis index out of range in {entry}")
                coeffs[k] = _parse_scalar(val)
            structure[(i, j)] = coeffs
            # fill the antisymmetric partner when it is not given explicitly
            structure.setdefault((j, i), {k: -v for k, v in coeffs.items()})
        return cls(dim, structure, name=name or data.get("name", ""))

    @classmethod
    def from_json(cls, path) -> "LieAlgebra":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), name=path.stem)

    def to_dict(self) -> dict:
        entries = []
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                coeffs = {str(k + 1): format_gr(v) for k, v in self.sparse.get((i, j), [])}
                if coeffs:
                    entries.append({"i": i + 1, "j": j + 1, "coeffs": coeffs})
        return {"dim": self.dim, "structure": entries}

    # ------------------------------------------------------------------
    def bracket(self, v, w):
        """Bracket of two Lie vectors (sequences of scalars or MultiPolys)."""
        if len(v) != self.dim or len(w) != self.dim:
            raise LieAlgebraError(f"expected vectors of length {self.dim}")
        out = [None] * self.dim
        for (i, j), terms in self.sparse.items():
            if not v[i] or not w[j]:
                continue
            prod = v[i] * w[j]
            for k, c in terms:
                term = prod * c
                out[k] = term if out[k] is None else out[k] + term
        zero = _zero_like(v, w)
        return LieVector([zero if x is None else x for x in out])

    def basis_vector(self, i: int, universe: Universe | None = None) -> "LieVector":
        if universe is None:
            return LieVector([ONE if k == i else ZERO for k in range(self.dim)])
        return LieVector([universe.one() if k == i else universe.zero() for k in range(self.dim)])

    def bch(self, v, w, order: int) -> "LieVector":
        """``log(exp v exp w)`` with all terms of bracket degree <= ``order``."""
        if order < 1:
            raise ValueError("BCH order must be at least 1")
        v, w = LieVector(v), LieVector(w)
        zero = _zero_like(v, w)
        total = [zero] * self.dim
        cache: dict = {}

        def nested(word):
            # right-nested bracket [x_{w0}, [x_{w1}, ... x_{wk}]]
            hit = cache.get(word)
            if hit is None:
                head = v if word[0] == 0 else w
                hit = head if len(word) == 1 else self.bracket(head, nested(word[1:]))
                cache[word] = hit
            return hit

        for word, coeff in bch_word_coefficients(order).items():
            if len(word) > 1 and self.is_abelian:
                continue
            vec = nested(word)
            scale = as_gr(coeff / len(word))
            total = [t + x * scale for t, x in zip(total, vec)]
        return LieVector(total)

    # ------------------------------------------------------------------
    # universal enveloping algebra

    def normal_order(self, word: tuple) -> dict:
        """PBW normal form of a word: {(sorted word, hbar power): coefficient}.

        Uses e_a e_b = e_b e_a + (hbar/i) [e_a, e_b] to move smaller indices left.
        """
        hit = self._normal_cache.get(word)
        if hit is not None:
            return hit
        pos = next((p for p in range(len(word) - 1) if word[p] > word[p + 1]), None)
        if pos is None:
            out = {(word, 0): ONE}
        else:
            b, a = word[pos], word[pos + 1]
            out: dict = {}
            swapped = word[:pos] + (a, b) + word[pos + 2:]
            _accumulate(out, self.normal_order(swapped), ONE, 0)
            for k, c in self.sparse.get((b, a), []):
                shorter = word[:pos] + (k,) + word[pos + 2:]
                _accumulate(out, self.normal_order(shorter), c * HBAR_OVER_I, 1)
        self._normal_cache[word] = out
        return out

    def uea(self, terms=None, order: int = 0) -> "UEAElement":
        return UEAElement(self, terms or {}, order)

    def pbw_symmetrize(self, f: MultiPoly, order: int) -> "UEAElement":
        """Symmetrization of a polynomial in the ``th`` family."""
        idx = list(f.universe.family_indices("th"))
        if len(idx) != self.dim:
            raise LieAlgebraError("th family size does not match the algebra dimension")
        other = [k for k in range(f.universe.nvars) if k not in set(idx)]
        out: dict = {}
        for e, c in f.terms.items():
            if any(e[k] for k in other):
                raise LieAlgebraError("pbw_symmetrize expects a polynomial in th only")
            alpha = tuple(e[k] for k in idx)
            _accumulate(out, self._sym_monomial(alpha), c, 0)
        return UEAElement(self, out, order)

    def _sym_monomial(self, alpha: tuple) -> dict:
        return _sym_monomial_cached(self, alpha)

    def pbw_unsymmetrize(self, a: "UEAElement", universe: Universe | None = None) -> HbarSeries:
        """Inverse of :meth:`pbw_symmetrize`, returned as an hbar series."""
        U = universe or theta_universe(self.dim)
        N = a.order
        idx = list(U.family_indices("th"))
        coeffs = [dict() for _ in range(N + 1)]
        rest = {key: c for key, c in a.terms.items() if key[1] <= N}
        while rest:
            top = max(len(word) for word, _ in rest)
            layer = [(key, c) for key, c in rest.items() if len(key[0]) == top]
            for (word, k), c in layer:
                alpha = [0] * self.dim
                for letter in word:
                    alpha[letter] += 1
                e = [0] * U.nvars
                for slot, p in zip(idx, alpha):
                    e[slot] = p
                e = tuple(e)
                prev = coeffs[k].get(e, ZERO)
                coeffs[k][e] = prev + c
                # subtract c hbar^k sym(th^alpha)
                for (w2, k2), c2 in self._sym_monomial(tuple(alpha)).items():
                    kk = k + k2
                    if kk > N:
                        continue
                    key = (w2, kk)
                    val = rest.get(key, ZERO) - c * c2
                    if val:
                        rest[key] = val
                    else:
                        rest.pop(key, None)
        return HbarSeries(
            [MultiPoly(U, {e: c for e, c in layer.items() if c}) for layer in coeffs], N
        )

    def gutt_pbw(self, f: MultiPoly, g: MultiPoly, order: int) -> HbarSeries:
        """Gutt product transported from the enveloping algebra."""
        if f.universe is not g.universe:
            raise LieAlgebraError("operands live in different universes")
        prod = self.pbw_symmetrize(f, order) * self.pbw_symmetrize(g, order)
        return self.pbw_unsymmetrize(prod, f.universe)

    # ------------------------------------------------------------------
    # Kirillov-Kostant calculus

    def kk_poisson(self, f: MultiPoly, g: MultiPoly) -> MultiPoly:
        U = f.universe
        th = list(U.family_indices("th"))
        out = U.zero()
        for (i, j), terms in self.sparse.items():
            df = f.diff(th[i])
            if not df:
                continue
            dg = g.diff(th[j])
            if not dg:
                continue
            lin = U.zero()
            for k, c in terms:
                lin = lin + U.var(th[k]).scale(c)
            out = out + lin * df * dg
        return out

    def is_casimir(self, f: MultiPoly):
        """``(is_casimir, residuals)`` with residual i equal to {th_i, f}."""
        U = f.universe
        res = [self.kk_poisson(U.var(k), f) for k in U.family_indices("th")]
        return all(not r for r in res), res

    def __repr__(self):
        return f"LieAlgebra(dim={self.dim}{', ' + self.name if self.name else ''})"


def _parse_scalar(val) -> GaussianRational:
    if isinstance(val, (int, Fraction)):
        return as_gr(val)
    text = str(val).strip()
    try:
        return as_gr(Fraction(text))
    except ValueError:
        poly = theta_universe(1).parse(text)
        if not poly.is_constant():
            raise LieAlgebraError(f"structure constant {val!r} is not a number") from None
        return poly.constant_term()


def _zero_like(*vectors):
    for vec in vectors:
        for x in vec:
            if isinstance(x, MultiPoly):
                return x.universe.zero()
    return ZERO


def _accumulate(out: dict, terms: dict, scale, shift: int):
    for (word, k), c in terms.items():
        key = (word, k + shift)
        val = out.get(key, ZERO) + c * scale
        if val:
            out[key] = val
        else:
            out.pop(key, None)


@lru_cache(maxsize=None)
def _distinct_permutations(letters: tuple) -> tuple:
    return tuple(sorted(set(permutations(letters))))


def _sym_monomial_cached(alg: LieAlgebra, alpha: tuple) -> dict:
    cache = alg.__dict__.setdefault("_sym_cache", {})
    hit = cache.get(alpha)
    if hit is not None:
        return hit
    letters = tuple(i for i, p in enumerate(alpha) if p for _ in range(p))
    perms = _distinct_permutations(letters)
    weight = as_gr(Fraction(1, len(perms)))
    out: dict = {}
    for word in perms:
        _accumulate(out, alg.normal_order(word), weight, 0)
    cache[alpha] = out
    return out


@dataclass(frozen=True)
class LieVector:
    """Coefficients of a Lie algebra element; entries are scalars or MultiPolys."""

    coeffs: tuple

    def __init__(self, coeffs):
        if isinstance(coeffs, LieVector):
            coeffs = coeffs.coeffs
        object.__setattr__(self, "coeffs", tuple(coeffs))

    def __len__(self):
        return len(self.coeffs)

    def __getitem__(self, k):
        return self.coeffs[k]

    def __iter__(self):
        return iter(self.coeffs)

    def __add__(self, other):
        return LieVector([a + b for a, b in zip(self.coeffs, other)])

    def __sub__(self, other):
        return LieVector([a - b for a, b in zip(self.coeffs, other)])

    def __neg__(self):
        return LieVector([-a for a in self.coeffs])

    def scale(self, c):
        return LieVector([a * c for a in self.coeffs])

    @property
    def is_zero(self):
        return all(not a for a in self.coeffs)

    @classmethod
    def from_family(cls, universe: Universe, family: str) -> "LieVector":
        return cls(universe.family(family))


# ----------------------------------------------------------------------
# free associative algebra on two letters, truncated by word length


def _fa_mul(a: dict, b: dict, order: int) -> dict:
    out: dict = {}
    for wa, ca in a.items():
        for wb, cb in b.items():
            if len(wa) + len(wb) > order:
                continue
            w = wa + wb
            out[w] = out.get(w, 0) + ca * cb
    return {w: c for w, c in out.items() if c}


def _fa_exp(letter: int, order: int) -> dict:
    return {(letter,) * k: Fraction(1, factorial(k)) for k in range(order + 1)}


@lru_cache(maxsize=None)
def bch_word_coefficients(order: int) -> dict:
    """Coefficients of ``log(exp X exp Y)`` on words in {0: X, 1: Y} up to
    length ``order`` (rational, exact)."""
    z = _fa_mul(_fa_exp(0, order), _fa_exp(1, order), order)
    z.pop((), None)  # Z - 1
    out: dict = {}
    power = {(): Fraction(1)}
    for k in range(1, order + 1):
        power = _fa_mul(power, z, order)
        sign = Fraction((-1) ** (k + 1), k)
        for w, c in power.items():
            out[w] = out.get(w, 0) + sign * c
    return {w: c for w, c in sorted(out.items(), key=lambda kv: (len(kv[0]), kv[0])) if c}


# ----------------------------------------------------------------------


class UEAElement:
    """Element of the enveloping algebra in PBW normal form, truncated at hbar^order.

    ``terms`` maps (nondecreasing word, hbar power) to a Gaussian rational.
    """

    __slots__ = ("algebra", "terms", "order")

    def __init__(self, algebra: LieAlgebra, terms: dict, order: int):
        self.algebra = algebra
        self.order = order
        clean = {}
        for (word, k), c in terms.items():
            if k > order or not c:
                continue
            if any(word[p] > word[p + 1] for p in range(len(word) - 1)):
                _accumulate(clean, algebra.normal_order(tuple(word)), c, k)
            else:
                key = (tuple(word), k)
                val = clean.get(key, ZERO) + c
                if val:
                    clean[key] = val
                else:
                    clean.pop(key, None)
        self.terms = {key: c for key, c in clean.items() if key[1] <= order}

    @classmethod
    def word(cls, algebra, word, order: int) -> "UEAElement":
        return cls(algebra, {(tuple(word), 0): ONE}, order)

    def __mul__(self, other: "UEAElement") -> "UEAElement":
        if not isinstance(other, UEAElement):
            c = as_gr(other)
            return UEAElement(self.algebra, {k: v * c for k, v in self.terms.items()}, self.order)
        if other.algebra is not self.algebra or other.order != self.order:
            raise LieAlgebraError("enveloping algebra operands differ in algebra or order")
        out: dict = {}
        N = self.order
        alg = self.algebra
        for (w1, k1), c1 in self.terms.items():
            for (w2, k2), c2 in other.terms.items():
                if k1 + k2 > N:
                    continue
                _accumulate(out, alg.normal_order(w1 + w2), c1 * c2, k1 + k2)
        return UEAElement(alg, out, N)

    def __add__(self, other: "UEAElement") -> "UEAElement":
        out = dict(self.terms)
        _accumulate(out, other.terms, ONE, 0)
        return UEAElement(self.algebra, out, self.order)

    def __sub__(self, other: "UEAElement") -> "UEAElement":
        out = dict(self.terms)
        _accumulate(out, other.terms, -ONE, 0)
        return UEAElement(self.algebra, out, self.order)

    def __eq__(self, other):
        return (
            isinstance(other, UEAElement)
            and self.algebra is other.algebra
            and self.order == other.order
            and self.terms == other.terms
        )

    def __repr__(self):
        parts = []
        for (word, k), c in sorted(self.terms.items(), key=lambda kv: (kv[0][1], -len(kv[0][0]), kv[0][0])):
            w = "*".join(f"e{i+1}" for i in word) or "1"
            h = "" if k == 0 else ("hbar*" if k == 1 else f"hbar^{k}*")
            parts.append(f"{format_gr(c)}*{h}{w}")
        return "UEA(" + " + ".join(parts) + ")" if parts else "UEA(0)"
