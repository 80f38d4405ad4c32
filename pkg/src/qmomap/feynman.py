"""Stationary-phase expansion of formal oscillatory integrals by Feynman graphs.

For a phase ``S`` with nondegenerate critical point ``c`` and Hessian ``B``,

    e^{-iS(c)/hbar} int g_1 ... g_n e^{iS/hbar} dz / (2 pi hbar)^{D/2}
        = sum_G (i hbar)^{E-V} (-1)^V / |Aut G| F_G(S; g_1, ..., g_n),

once the Gaussian prefactor ``e^{i pi sign(B)/4} / sqrt|det B|`` equals 1.
The ``(-1)^V`` comes from each internal vertex carrying ``(i/hbar) d^l S``
while each propagator carries ``i hbar B^{-1}``; ``F_G`` uses the plain
derivative tensors of ``S``.

Graphs have ``n_ext`` labelled external vertices and unlabelled internal
vertices of valence >= 3; multi-edges, loops and vacuum components are all
allowed.  ``|Aut G|`` counts half-edge automorphisms fixing every external
vertex.  :func:`wick_expand` recomputes the same series from Gaussian moments
without any graphs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import factorial

from .algebra import (
    ONE,
    ZERO,
    GaussianRational,
    HbarSeries,
    I,
    MultiPoly,
    Universe,
    as_gr,
)


class PhaseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# graphs


@dataclass(frozen=True)
class FeynmanGraph:
    """Isomorphism class of a Feynman graph.

    Vertices ``0..n_ext-1`` are external; the rest are internal with valences
    ``internal_valences``.  ``edges`` holds ``(u, w, multiplicity)`` with
    ``u <= w`` (``u == w`` is a loop).
    """

    n_ext: int
    internal_valences: tuple
    edges: tuple
    aut: int

    @property
    def n_vertices(self) -> int:
        return self.n_ext + len(self.internal_valences)

    @property
    def n_edges(self) -> int:
        return sum(m for _, _, m in self.edges)

    @property
    def power(self) -> int:
        return self.n_edges - len(self.internal_valences)

    def degree(self, u: int) -> int:
        return sum(m * ((u == a) + (u == b)) for a, b, m in self.edges)

    @property
    def ext_degrees(self) -> tuple:
        return tuple(self.degree(j) for j in range(self.n_ext))

    def edge_list(self) -> list:
        """Edges with multiplicities expanded."""
        return [(a, b) for a, b, m in self.edges for _ in range(m)]

    def to_dict(self) -> dict:
        return {
            "edges": [[a, b, m] for a, b, m in self.edges],
            "internal_valences": list(self.internal_valences),
            "aut": self.aut,
            "power": self.power,
        }


def _valence_multisets(count: int, max_sum: int, max_valence: int):
    """Nonincreasing tuples of ``count`` valences >= 3 with sum <= max_sum."""

    def rec(k, cap, budget):
        if k == 0:
            yield ()
            return
        for l in range(min(cap, budget - 3 * (k - 1)), 2, -1):
            for rest in rec(k - 1, l, budget - l):
                yield (l,) + rest

    yield from rec(count, max_valence, max_sum)


def _symmetric_matrices(degrees, allowed):
    """All symmetric nonnegative integer matrices with prescribed degrees
    (a loop adds 2 to its vertex).  ``allowed(u, w)`` filters pairs."""
    n = len(degrees)
    rem = list(degrees)
    mat = [[0] * n for _ in range(n)]

    def row(u):
        if u == n:
            yield tuple(tuple(r) for r in mat)
            return
        loops_max = rem[u] // 2 if allowed(u, u) else 0
        for loops in range(loops_max, -1, -1):
            mat[u][u] = loops
            rem[u] -= 2 * loops
            yield from col(u, u + 1)
            rem[u] += 2 * loops
            mat[u][u] = 0

    def col(u, w):
        if w == n:
            if rem[u] == 0:
                yield from row(u + 1)
            return
        if not allowed(u, w):
            yield from col(u, w + 1)
            return
        # capacity left in later columns bounds how little we may place here
        later = sum(rem[k] for k in range(w + 1, n) if allowed(u, k))
        hi = min(rem[u], rem[w])
        lo = max(0, rem[u] - later)
        for m in range(hi, lo - 1, -1):
            mat[u][w] = mat[w][u] = m
            rem[u] -= m
            rem[w] -= m
            yield from col(u, w + 1)
            rem[u] += m
            rem[w] += m
            mat[u][w] = mat[w][u] = 0

    yield from row(0)


def _canonical(mat, n_ext: int):
    """Canonical upper-triangular key of a multigraph and the number of
    internal-vertex permutations fixing it."""
    n = len(mat)
    internals = list(range(n_ext, n))

    def signature(u):
        row = mat[u]
        return (
            sum(row) + row[u],
            row[u],
            tuple(row[:n_ext]),
            tuple(sorted(row[k] for k in internals if k != u)),
        )

    sigs = {u: signature(u) for u in internals}
    order = sorted(internals, key=lambda u: sigs[u])
    cells = [list(g) for _, g in itertools.groupby(order, key=lambda u: sigs[u])]
    best = None
    count = 0
    for choice in itertools.product(*(itertools.permutations(c) for c in cells)):
        perm = list(range(n_ext)) + [u for block in choice for u in block]
        key = tuple(mat[perm[a]][perm[b]] for a in range(n) for b in range(a, n))
        if best is None or key < best:
            best, count = key, 1
        elif key == best:
            count += 1
    cell_sigs = tuple(sigs[c[0]] for c in cells for _ in c)
    return (cell_sigs, best), count


def _matrix_from_key(key, n):
    mat = [[0] * n for _ in range(n)]
    it = iter(key)
    for a in range(n):
        for b in range(a, n):
            mat[a][b] = mat[b][a] = next(it)
    return mat


@lru_cache(maxsize=None)
def _enumerate(n_ext, max_power, internal_edges, max_ext_degree, max_valence):
    out = []
    for V in range(0, 2 * max_power + 1):
        for vals in _valence_multisets(V, 2 * (max_power + V), max_valence):
            budget = 2 * (max_power + V) - sum(vals)
            caps = max_ext_degree if max_ext_degree is not None else (budget,) * n_ext
            ranges = [range(min(c, budget) + 1) for c in caps]
            for ks in itertools.product(*ranges):
                total = sum(vals) + sum(ks)
                if total % 2 or sum(ks) > budget:
                    continue
                degrees = list(ks) + list(vals)

                def allowed(u, w, _ne=n_ext):
                    return internal_edges or u < _ne or w < _ne

                seen = {}
                for mat in _symmetric_matrices(degrees, allowed):
                    key, count = _canonical(mat, n_ext)
                    if key not in seen:
                        seen[key] = (mat, count)
                for key in sorted(seen):
                    mat, count = seen[key]
                    n = len(mat)
                    edges = []
                    aut = count
                    for a in range(n):
                        for b in range(a, n):
                            m = mat[a][b]
                            if m:
                                edges.append((a, b, m))
                                aut *= factorial(m) * (2 ** m if a == b else 1)
                    canon = _matrix_from_key(key[1], n)
                    edges = tuple(
                        (a, b, canon[a][b]) for a in range(n) for b in range(a, n) if canon[a][b]
                    )
                    # canonical relabeling may permute internal vertices
                    degs = tuple(
                        2 * canon[u][u] + sum(canon[u][w] for w in range(n) if w != u)
                        for u in range(n_ext, n)
                    )
                    out.append(FeynmanGraph(n_ext, degs, edges, aut))
    return tuple(out)


def enumerate_graphs(
    n_ext: int,
    max_power: int,
    internal_edges: bool = True,
    max_ext_degree=None,
    max_valence: int | None = None,
) -> list[FeynmanGraph]:
    """All graph classes with ``E - V_int <= max_power``.

    ``internal_edges=False`` drops graphs with an edge or loop between internal
    vertices; ``max_ext_degree`` bounds each external degree; ``max_valence``
    bounds internal valences.  These filters only remove graphs whose
    amplitudes vanish for the model at hand; callers are responsible for that.
    """
    if n_ext < 1 or max_power < 0:
        raise ValueError("need n_ext >= 1 and max_power >= 0")
    if max_ext_degree is not None:
        max_ext_degree = tuple(int(k) for k in max_ext_degree)
        if len(max_ext_degree) != n_ext:
            raise ValueError("max_ext_degree needs one bound per external vertex")
    if max_valence is None:
        max_valence = 2 * max_power + 2
    return list(_enumerate(n_ext, max_power, internal_edges, max_ext_degree, max_valence))


def double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def wick_bookkeeping(n_ext: int, max_power: int) -> dict:
    """Compare sum 1/|Aut| per (external degrees, valences) group with the
    pairing count (2E-1)!! / (prod k_j! prod (l!)^{m_l} m_l!).

    Returns ``{group: (graph_sum, pairing_value)}``.
    """
    groups: dict = {}
    for g in enumerate_graphs(n_ext, max_power):
        key = (g.ext_degrees, g.internal_valences)
        groups[key] = groups.get(key, Fraction(0)) + Fraction(1, g.aut)
    out = {}
    for (ks, vals), total in groups.items():
        E = (sum(ks) + sum(vals)) // 2
        denom = 1
        for k in ks:
            denom *= factorial(k)
        for l, grp in itertools.groupby(vals):
            m = len(list(grp))
            denom *= factorial(l) ** m * factorial(m)
        out[(ks, vals)] = (total, Fraction(double_factorial(2 * E - 1), denom))
    return out


# ---------------------------------------------------------------------------
# phase models


def _taylor_tensors(poly, z_idx):
    """Split a polynomial (or hbar series) by exponents in the z variables and
    scale each coefficient by alpha!, giving derivative tensors at z = 0."""
    if isinstance(poly, HbarSeries):
        layers = [_taylor_tensors(c, z_idx) for c in poly.coeffs]
        keys = set().union(*layers)
        U = poly.universe
        return {
            a: HbarSeries([layer.get(a, U.zero()) for layer in layers], poly.order) for a in keys
        }
    out = {}
    for alpha, coeff in poly.split(z_idx).items():
        fact = 1
        for a in alpha:
            fact *= factorial(a)
        out[alpha] = coeff.scale(fact) if fact != 1 else coeff
    return out


def matrix_product(A, B, universe):
    n, m, p = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for j in range(p):
            s = universe.zero()
            for k in range(m):
                if A[i][k] and B[k][j]:
                    s = s + A[i][k] * B[k][j]
            row.append(s)
        out.append(row)
    return out


def determinant(M, universe) -> MultiPoly:
    """Exact determinant by Laplace expansion along rows, memoized on the set
    of remaining columns."""
    n = len(M)
    memo = {}

    def rec(r, cols):
        if r == n:
            return universe.one()
        hit = memo.get(cols)
        if hit is not None:
            return hit
        total = universe.zero()
        sign = 1
        for c in range(n):
            if not (cols >> c) & 1:
                continue
            entry = M[r][c]
            if entry:
                minor = rec(r + 1, cols & ~(1 << c))
                if minor:
                    term = entry * minor
                    total = total + term if sign > 0 else total - term
            sign = -sign
        memo[cols] = total
        return total

    return rec(0, (1 << n) - 1)


class PhaseModel:
    """Data of a stationary-phase problem around its critical point.

    ``z_indices`` are the flat universe indices of the shifted integration
    variables ``dz = z - c``.  ``interaction`` is the part of ``S(c + dz)`` of
    degree >= 3 in ``dz``; ``externals`` are the Taylor expansions of the
    insertions in ``dz`` (MultiPoly or HbarSeries); ``hessian`` and
    ``hessian_inverse`` are D x D matrices of polynomials in the remaining
    (external-parameter) variables.  ``isotropic`` optionally names a set of
    D/2 positions on which the Hessian vanishes identically, certifying
    ``sign B = 0`` when ``B`` is not constant.
    """

    def __init__(
        self,
        universe: Universe,
        z_indices,
        interaction: MultiPoly,
        externals,
        hessian,
        hessian_inverse,
        order: int,
        isotropic=None,
        name: str = "",
    ):
        self.universe = universe
        self.z = tuple(z_indices)
        self.D = len(self.z)
        self.order = order
        self.name = name
        self.interaction = interaction
        self.hessian = hessian
        self.hessian_inverse = hessian_inverse
        self.isotropic = tuple(isotropic) if isotropic is not None else None
        self.externals = [
            e.with_order(order) if isinstance(e, HbarSeries) else HbarSeries.from_poly(e, order)
            for e in externals
        ]
        if interaction and min(sum(a) for a in interaction.split(self.z)) < 3:
            raise PhaseError("interaction must have degree >= 3 in the integration variables")
        self.vertex_tensors = _taylor_tensors(interaction, self.z)
        self.external_tensors = [_taylor_tensors(e, self.z) for e in self.externals]
        self.max_valence = max((sum(a) for a in self.vertex_tensors), default=0)
        self._check_prefactor()

    # ------------------------------------------------------------------
    def _check_prefactor(self):
        U = self.universe
        D = self.D
        prod = matrix_product(self.hessian, self.hessian_inverse, U)
        for i in range(D):
            for j in range(D):
                want = U.one() if i == j else U.zero()
                if prod[i][j] != want:
                    raise PhaseError(f"B * B^-1 differs from the identity at ({i}, {j}): {prod[i][j]}")
        self.det = determinant(self.hessian, U)
        if self.det not in (U.one(), -U.one()):
            raise PhaseError(f"|det B| is not 1: det B = {self.det}")
        self.signature = self._signature()
        if self.signature != 0:
            raise PhaseError(f"sign B = {self.signature}; only zero-signature phases are supported")

    def _signature(self) -> int:
        """Exact signature.  Constant real Hessians use a symmetric LDL^T
        elimination; otherwise an isotropic block of half dimension is required."""
        B = self.hessian
        if self.isotropic is not None:
            iso = self.isotropic
            if 2 * len(iso) != self.D:
                raise PhaseError("isotropic certificate must have half the dimension")
            for a in iso:
                for b in iso:
                    if B[a][b]:
                        raise PhaseError("Hessian does not vanish on the claimed isotropic block")
            # B is nondegenerate (|det| = 1) with a Lagrangian subspace: zero signature
            return 0
        mats = []
        for row in B:
            r = []
            for e in row:
                if not e.is_constant() or not e.constant_term().is_real():
                    raise PhaseError("signature needs a constant real Hessian or an isotropic certificate")
                r.append(e.constant_term().real_fraction)
            mats.append(r)
        return _real_signature(mats)

    @property
    def structural_pruning_valid(self) -> bool:
        """True when every propagator between interaction variables vanishes,
        so graphs with internal-internal edges or internal loops contribute zero."""
        used = set()
        for alpha in self.vertex_tensors:
            used.update(k for k, a in enumerate(alpha) if a)
        return all(not self.hessian_inverse[i][j] for i in used for j in used)

    def ext_degree_bounds(self) -> tuple:
        return tuple(max((sum(a) for a in t), default=0) for t in self.external_tensors)

    def allowed_labels(self, vertex_tensors) -> frozenset:
        return frozenset(k for alpha in vertex_tensors for k, a in enumerate(alpha) if a)


def _real_signature(M) -> int:
    """Signature of a symmetric rational matrix (Sylvester inertia via
    symmetric Gaussian elimination with 2x2 pivoting)."""
    M = [list(map(Fraction, r)) for r in M]
    pos = neg = 0
    while M:
        n = len(M)
        k = next((i for i in range(n) if M[i][i] != 0), None)
        if k is not None:
            p = M[k][k]
            pos += p > 0
            neg += p < 0
            rest = [i for i in range(n) if i != k]
            M = [[M[i][j] - M[i][k] * M[k][j] / p for j in rest] for i in rest]
            continue
        pair = next(((i, j) for i in range(n) for j in range(i + 1, n) if M[i][j] != 0), None)
        if pair is None:
            break  # zero block: degenerate directions
        i, j = pair
        # the 2x2 block [[0, b], [b, 0]] has one positive and one negative eigenvalue
        pos += 1
        neg += 1
        b = M[i][j]
        rest = [r for r in range(n) if r not in (i, j)]
        # Schur complement of [[0,b],[b,0]]: inverse is [[0,1/b],[1/b,0]]
        M = [
            [M[r][s] - (M[r][i] * M[j][s] + M[r][j] * M[i][s]) / b for s in rest]
            for r in rest
        ]
    return pos - neg


# ---------------------------------------------------------------------------
# amplitudes


def _downward_closure(keys, valence=None):
    out = set()
    for alpha in keys:
        if valence is not None and sum(alpha) != valence:
            continue
        for sub in itertools.product(*(range(a + 1) for a in alpha)):
            out.add(sub)
    return out


def amplitude(graph: FeynmanGraph, model: PhaseModel, pruning: bool = True) -> HbarSeries:
    """F_G: sum over half-edge labelings of the contracted tensors.

    With ``pruning`` the search only visits labels on which the vertex tensors
    and propagators can be nonzero; without it every labeling is summed.
    """
    D = model.D
    U = model.universe
    Binv = model.hessian_inverse
    nV = graph.n_vertices
    tensors = []
    valence = []
    for j in range(graph.n_ext):
        tensors.append(model.external_tensors[j])
        valence.append(graph.degree(j))
    for l in graph.internal_valences:
        tensors.append(model.vertex_tensors)
        valence.append(l)
    for u in range(graph.n_ext, nV):
        if graph.degree(u) != valence[u]:
            raise PhaseError("graph valences are inconsistent")

    if pruning:
        labels = [sorted(model.allowed_labels(t)) for t in tensors]
        feasible = [_downward_closure(t, valence[u]) for u, t in enumerate(tensors)]
        if any(valence[u] and not feasible[u] for u in range(nV)):
            return HbarSeries.zero(U, model.order)
    else:
        labels = [list(range(D))] * nV
        feasible = None

    edges = graph.edge_list()
    # visit edges so that vertices get completed early
    rank = {u: k for k, u in enumerate(list(range(graph.n_ext, nV)) + list(range(graph.n_ext)))}
    edges.sort(key=lambda e: (max(rank[e[0]], rank[e[1]]), min(rank[e[0]], rank[e[1]])))
    alpha = [[0] * D for _ in range(nV)]
    acc: dict = {}

    def ok(u):
        return feasible is None or tuple(alpha[u]) in feasible[u]

    def rec(k, prop):
        if k == len(edges):
            key = tuple(tuple(a) for a in alpha)
            prev = acc.get(key)
            acc[key] = prop if prev is None else prev + prop
            return
        u, w = edges[k]
        for i in labels[u]:
            alpha[u][i] += 1
            if ok(u):
                for j in labels[w]:
                    entry = Binv[i][j]
                    if not entry:
                        continue
                    alpha[w][j] += 1
                    if ok(w):
                        rec(k + 1, prop * entry)
                    alpha[w][j] -= 1
            alpha[u][i] -= 1

    rec(0, U.one())
    total = HbarSeries.zero(U, model.order)
    for key, prop in acc.items():
        if not prop:
            continue
        series = HbarSeries.from_poly(prop, model.order)
        dead = False
        for u in range(nV):
            t = tensors[u].get(key[u])
            if t is None:
                dead = True
                break
            series = series * t
        if not dead:
            total = total + series
    return total


def graph_weight(graph: FeynmanGraph) -> GaussianRational:
    """Scalar part of (i hbar)^{E-V} (-1)^V / |Aut|."""
    sign = -1 if len(graph.internal_valences) % 2 else 1
    return (I ** graph.power) * as_gr(Fraction(sign, graph.aut))


def expand(model: PhaseModel, N: int | None = None, prune_graphs: bool | None = None, pruning: bool = True) -> HbarSeries:
    """Graph sum truncated at hbar^N (the model order by default).

    ``prune_graphs`` skips graphs with internal-internal edges; it defaults to
    on whenever the model's propagators make such graphs vanish.
    """
    N = model.order if N is None else N
    if N != model.order:
        raise PhaseError(f"model was built at order {model.order}, asked for {N}")
    if prune_graphs is None:
        prune_graphs = model.structural_pruning_valid
    elif prune_graphs and not model.structural_pruning_valid:
        raise PhaseError("structural pruning requested but interaction propagators do not vanish")
    graphs = enumerate_graphs(
        len(model.externals),
        N,
        internal_edges=not prune_graphs,
        max_ext_degree=model.ext_degree_bounds() if pruning else None,
        max_valence=max(model.max_valence, 3) if pruning else None,
    )
    U = model.universe
    total = HbarSeries.zero(U, N)
    for g in graphs:
        amp = amplitude(g, model, pruning=pruning)
        if amp.is_zero:
            continue
        total = total + amp.scale(graph_weight(g)).shift(g.power)
    return total


# ---------------------------------------------------------------------------
# Wick oracle


def wick_expand(model: PhaseModel, N: int | None = None) -> HbarSeries:
    """Same series from sum_V (i/hbar)^V / V! <S_int^V prod g_j>, with Gaussian
    moments <dz^alpha> = (i hbar)^{|alpha|/2} * (sum over pairings of B^-1)."""
    N = model.order if N is None else N
    U = model.universe
    z = model.z
    Binv = model.hessian_inverse
    zfam = _z_families(U, z)
    memo: dict = {(0,) * len(z): U.one()}

    def moment(alpha):
        hit = memo.get(alpha)
        if hit is not None:
            return hit
        if sum(alpha) % 2:
            memo[alpha] = U.zero()
            return memo[alpha]
        i = next(k for k, a in enumerate(alpha) if a)
        total = U.zero()
        base = list(alpha)
        base[i] -= 1
        for j, aj in enumerate(base):
            if aj and Binv[i][j]:
                nxt = list(base)
                nxt[j] -= 1
                m = moment(tuple(nxt))
                if m:
                    total = total + Binv[i][j] * m.scale(aj)
        memo[alpha] = total
        return total

    ext = HbarSeries.one(U, N)
    for g in model.externals:
        ext = ext * g
    total = HbarSeries.zero(U, N)
    Vmax = 2 * N
    S = model.interaction.truncate(zfam, 2 * N + 2) if zfam else model.interaction
    # when interaction variables never pair with each other, every leg of
    # S_int^V must pair with an external leg, which caps its degree
    ext_cap = sum(model.ext_degree_bounds()) if model.structural_pruning_valid else None
    power = U.one()
    for V in range(0, Vmax + 1):
        if V > 0:
            cap = 2 * (N + V) if ext_cap is None else min(2 * (N + V), ext_cap)
            power = power.mul(S, (zfam, cap))
            if not power:
                break
        coeffs = [U.zero() for _ in range(N + 1)]
        for k, gk in enumerate(ext.coeffs):
            if not gk:
                continue
            prod = power.mul(gk, (zfam, 2 * (N - k + V)))
            for alpha, coeff in prod.split(z).items():
                deg = sum(alpha)
                if deg % 2:
                    continue
                E = deg // 2
                hp = E - V + k
                if hp < 0:
                    raise PhaseError("negative hbar power in Wick expansion; interaction degree < 3?")
                if hp > N:
                    continue
                m = moment(alpha)
                if not m:
                    continue
                # (i hbar)^E (i/hbar)^V / V! = i^{E+V} hbar^{E-V} / V!
                scal = (I ** (E + V)) * as_gr(Fraction(1, factorial(V)))
                coeffs[hp] = coeffs[hp] + (coeff * m).scale(scal)
        total = total + HbarSeries(coeffs, N)
    return total


def _z_families(U: Universe, z):
    """Families covering exactly the z indices (needed for degree truncation)."""
    zs = set(z)
    fams = []
    for name, _ in U.families:
        idx = set(U.family_indices(name))
        if idx and idx <= zs:
            fams.append(name)
    covered = set().union(*(set(U.family_indices(f)) for f in fams)) if fams else set()
    if covered != zs:
        raise PhaseError("integration variables must be whole variable families")
    return tuple(fams)
