"""Polynomial infinitesimal actions on R^d and their classical momentum maps.

An action is a list of polynomial vector fields ``X_i`` (one per basis element
of the Lie algebra).  For a left action the fundamental fields satisfy
``[X_i, X_j] = -sum_k c_ij^k X_k``; we record the observed sign ``sigma`` and
work downstream with ``sigma = -1``.

Sign calibration on phase space uses the canonical bracket

    P(f, g) = sum_k d_xi_k f d_x_k g - d_x_k f d_xi_k g,

for which ``(i/hbar)[f, g]`` under the standard star product equals
``P(f, g) + O(hbar)``.  The lifted generator is ``X~_i h := P(J_i, h)``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .algebra import ONE, MultiPoly, Universe, multi_indices, standard_universe
from .lie import LieAlgebra, LieVector

log = logging.getLogger(__name__)


class ActionError(ValueError):
    pass


def vector_field_bracket(universe: Universe, X, Y) -> list[MultiPoly]:
    """Components of the commutator [X, Y] of two vector fields in x."""
    xs = list(universe.family_indices("x"))
    out = []
    for m in range(len(xs)):
        comp = universe.zero()
        for k, xk in enumerate(xs):
            if X[k]:
                comp = comp + X[k] * Y[m].diff(xk)
            if Y[k]:
                comp = comp - Y[k] * X[m].diff(xk)
        out.append(comp)
    return out


def apply_field(universe: Universe, X, h: MultiPoly) -> MultiPoly:
    out = universe.zero()
    for k, xk in enumerate(universe.family_indices("x")):
        if X[k]:
            dh = h.diff(xk)
            if dh:
                out = out + X[k] * dh
    return out


def canonical_poisson(f: MultiPoly, g: MultiPoly) -> MultiPoly:
    """P(f, g) = sum d_xi f d_x g - d_x f d_xi g."""
    U = f.universe
    out = U.zero()
    for xk, pk in zip(U.family_indices("x"), U.family_indices("xi")):
        a = f.diff(pk)
        if a:
            b = g.diff(xk)
            if b:
                out = out + a * b
        a = f.diff(xk)
        if a:
            b = g.diff(pk)
            if b:
                out = out - a * b
    return out


@dataclass(frozen=True)
class PhaseVectorField:
    """Vector field on T*R^d: ``x_block . d_x + xi_block . d_xi``."""

    x_block: tuple
    xi_block: tuple

    def apply(self, h: MultiPoly) -> MultiPoly:
        U = h.universe
        out = U.zero()
        for c, k in zip(self.x_block, U.family_indices("x")):
            if c:
                out = out + c * h.diff(k)
        for c, k in zip(self.xi_block, U.family_indices("xi")):
            if c:
                out = out + c * h.diff(k)
        return out


class InfinitesimalAction:
    """Polynomial fundamental vector fields of a Lie algebra acting on R^d."""

    def __init__(self, algebra: LieAlgebra, d: int, fields, name: str = ""):
        self.algebra = algebra
        self.d = d
        self.name = name
        n = algebra.dim
        self.universe = U = standard_universe(d, n)
        if len(fields) != n:
            raise ActionError(f"expected {n} vector fields, got {len(fields)}")
        parsed = []
        for i, comps in enumerate(fields):
            if len(comps) != d:
                raise ActionError(f"field {i+1} has {len(comps)} components, expected {d}")
            row = []
            for c in comps:
                p = U.parse(c) if isinstance(c, str) else c.embed(U)
                if p.variables_used() - set(U.names[k] for k in U.family_indices("x")):
                    raise ActionError(f"field {i+1} depends on non-coordinate variables: {p}")
                row.append(p)
            parsed.append(tuple(row))
        self.fields = tuple(parsed)
        self.sigma = self._determine_sigma()
        self._flow_cache: dict = {}

    # ------------------------------------------------------------------
    @classmethod
    def from_dict(cls, algebra: LieAlgebra, data: dict, name: str = "") -> "InfinitesimalAction":
        return cls(algebra, int(data["dim"]), data["fields"], name=name or data.get("name", ""))

    @classmethod
    def from_json(cls, algebra: LieAlgebra, path) -> "InfinitesimalAction":
        path = Path(path)
        return cls.from_dict(algebra, json.loads(path.read_text()), name=path.stem)

    def to_dict(self) -> dict:
        return {"dim": self.d, "fields": [[str(c) for c in row] for row in self.fields]}

    def bracket_residual(self, sigma: int) -> dict:
        """Nonzero components of [X_i, X_j] - sigma * sum_k c_ij^k X_k."""
        U = self.universe
        alg = self.algebra
        out = {}
        for i in range(alg.dim):
            for j in range(i + 1, alg.dim):
                br = vector_field_bracket(U, self.fields[i], self.fields[j])
                for k, c in alg.sparse.get((i, j), []):
                    br = [b - f.scale(c * sigma) for b, f in zip(br, self.fields[k])]
                for m, comp in enumerate(br):
                    if comp:
                        out[(i, j, m)] = comp
        return out

    def _determine_sigma(self) -> int:
        if not self.bracket_residual(-1):
            return -1
        if not self.bracket_residual(+1):
            return +1
        (i, j, m), comp = next(iter(self.bracket_residual(-1).items()))
        raise ActionError(
            "vector fields are not compatible with the structure constants for either sign; "
            f"[X{i+1}, X{j+1}] + sum c X has component {m+1} equal to {comp}"
        )

    def normalized(self) -> "InfinitesimalAction":
        """Same action with sigma = -1 (fields negated if needed)."""
        if self.sigma == -1:
            return self
        log.warning("action %s has sigma=+1; negating its fields to obtain a left action", self.name)
        return InfinitesimalAction(
            self.algebra, self.d, [[-c for c in row] for row in self.fields], name=self.name
        )

    # ------------------------------------------------------------------
    def field_of(self, v) -> list[MultiPoly]:
        """X^v for a (polynomial-valued) Lie vector v."""
        U = self.universe
        out = [U.zero() for _ in range(self.d)]
        for vi, row in zip(v, self.fields):
            if not vi:
                continue
            for m, comp in enumerate(row):
                if comp:
                    out[m] = out[m] + comp * vi
        return out

    def flow_series(self, M: int, family: str = "v") -> tuple:
        """Components of phi_{exp(-v)}(x) as a Lie series truncated at v-degree M."""
        key = (M, family)
        hit = self._flow_cache.get(key)
        if hit is not None:
            return hit
        U = self.universe
        vvec = LieVector(U.family(family))
        neg = [-c for c in self.field_of(vvec)]
        out = []
        for x in U.family("x"):
            term = x
            total = x
            for k in range(1, M + 1):
                term = apply_field(U, neg, term).scale(ONE / k)
                if not term:
                    break
                total = total + term
            out.append(total)
        out = tuple(out)
        self._flow_cache[key] = out
        return out

    def flow_composition_residual(self, M: int) -> list[MultiPoly]:
        """phi_{exp(-w)}(phi_{exp(-v)}(x)) - phi_{exp(-BCH(v,w))}(x), to (v,w)-degree M."""
        U = self.universe
        trunc = (("v", "w"), M)
        fv = self.flow_series(M, "v")
        fw = self.flow_series(M, "w")
        xs = list(U.family_indices("x"))
        left = [c.subs(dict(zip(xs, fv)), trunc).truncate(("v", "w"), M) for c in fw]
        b = self.algebra.bch(U.family("v"), U.family("w"), M)
        vs = list(U.family_indices("v"))
        right = [c.subs(dict(zip(vs, b)), trunc).truncate(("v", "w"), M) for c in fv]
        return [a - b for a, b in zip(left, right)]

    # ------------------------------------------------------------------
    def classical_momentum(self) -> list[MultiPoly]:
        """J_i(x, xi) = -sum_k xi_k X_i^k(x)."""
        U = self.universe
        xis = U.family("xi")
        return [
            -sum((xi * comp for xi, comp in zip(xis, row) if comp), U.zero()) for row in self.fields
        ]

    def comomentum_pullback(self, f: MultiPoly) -> MultiPoly:
        """J*f = f(J(x, xi))."""
        U = self.universe
        f = f.embed(U)
        J = self.classical_momentum()
        return f.subs(dict(zip(U.family_indices("th"), J)))

    def cotangent_lift_field(self, i: int) -> PhaseVectorField:
        """Lifted generator normalized by X~_i h = P(J_i, h):
        x-block -X_i, xi-block (DX_i)^T xi."""
        U = self.universe
        X = self.fields[i]
        xs = list(U.family_indices("x"))
        xis = U.family("xi")
        xi_block = []
        for k in xs:
            comp = U.zero()
            for m, xim in enumerate(xis):
                d = X[m].diff(k)
                if d:
                    comp = comp + xim * d
            xi_block.append(comp)
        return PhaseVectorField(tuple(-c for c in X), tuple(xi_block))

    def momentum_sign(self) -> int:
        """sigma' with {J_i, J_j} = sigma' sum_k c_ij^k J_k (+1 for abelian algebras)."""
        J = self.classical_momentum()
        alg = self.algebra
        for sgn in (+1, -1):
            ok = True
            for i in range(alg.dim):
                for j in range(i + 1, alg.dim):
                    lhs = canonical_poisson(J[i], J[j])
                    rhs = sum((J[k].scale(c * sgn) for k, c in alg.sparse.get((i, j), [])), self.universe.zero())
                    if lhs != rhs:
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                return sgn
        raise ActionError("momentum components do not close under the canonical bracket")

    def classical_checks(self, max_degree: int = 3, casimirs=()) -> dict:
        """Exact residuals of the Poisson-morphism identity on th-monomial pairs
        of total degree <= max_degree, and of X~_i(J*f) = 0 for each Casimir f."""
        U = self.universe
        th = list(U.family_indices("th"))
        sp = self.momentum_sign()
        monos = []
        for alpha in multi_indices(len(th), max_degree):
            e = [0] * U.nvars
            for k, p in zip(th, alpha):
                e[k] = p
            monos.append(U.monomial(e))
        morphism = {}
        pulled = {str(m): self.comomentum_pullback(m) for m in monos}
        for f in monos:
            for g in monos:
                if f.degree() + g.degree() > max_degree:
                    continue
                lhs = canonical_poisson(pulled[str(f)], pulled[str(g)])
                rhs = self.comomentum_pullback(self.algebra.kk_poisson(f, g)).scale(sp)
                morphism[(str(f), str(g))] = lhs - rhs
        invariance = {}
        for f in casimirs:
            f = f.embed(U)
            Jf = self.comomentum_pullback(f)
            invariance[str(f)] = [
                self.cotangent_lift_field(i).apply(Jf) for i in range(self.algebra.dim)
            ]
        ok = all(not r for r in morphism.values()) and all(
            not r for rs in invariance.values() for r in rs
        )
        return {"sigma": self.sigma, "sigma_prime": sp, "morphism": morphism, "invariance": invariance, "ok": ok}

    def __repr__(self):
        return f"InfinitesimalAction({self.name or 'unnamed'}, d={self.d}, n={self.algebra.dim}, sigma={self.sigma})"
