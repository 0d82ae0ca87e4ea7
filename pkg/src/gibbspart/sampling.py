"""Boltzmann samplers, size-conditioned sampling and the fragment construction.

Compositions are sampled with the substitution rule: draw the outer object
at parameter ``G(x)``, one independent ``G``-object per slot, then hand out
labels with a uniform permutation.  Named graph classes sample their size
from an exact coefficient table and render a uniform object of that size;
sizes beyond the table come from a Galton-Watson tree conditioned to be
large, so no truncation bias enters.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache

import mpmath
import numpy as np

from . import powerseries as ps
from . import species as sp
from .errors import PreconditionError, ResourceCapError, SamplingExhausted
from .powerseries import Series
from .structures import (
    AtomObj,
    Composite,
    Derived,
    Forest,
    Graph,
    SetObj,
    Tree,
    make_composite,
    relabel,
    size_of,
)

DEFAULT_NODE_CAP = 10**7
DEFAULT_MAX_ATTEMPTS = 10**6
DEFAULT_EXACT_BOUND = 60


class _Oversize(Exception):
    """A Boltzmann draw outgrew the caller's size budget (a certain rejection)."""


def _check_budget(size: int, max_size: int | None) -> None:
    if max_size is not None and size > max_size:
        raise _Oversize


# --------------------------------------------------------------------------
# small helpers


def _pick(weights, rng) -> int:
    """Index drawn proportionally to nonnegative float weights."""
    w = np.asarray(weights, dtype=float)
    c = np.cumsum(w)
    if c[-1] <= 0:
        raise PreconditionError("no positive weight to sample from")
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(i, len(w) - 1)


def _ffloat(x: Fraction, log_scale: float = 0.0, power: int = 0) -> float:
    """``float(x * exp(log_scale) ** power)`` without intermediate overflow."""
    if x == 0:
        return 0.0
    return math.exp(math.log(x.numerator) - math.log(x.denominator) + power * log_scale)


def relabel_uniform(s, rng):
    """Relabel ``s`` by a uniform permutation of its label set."""
    n = size_of(s)
    if n <= 1:
        return s
    perm = rng.permutation(n)
    return relabel(s, [p + 1 for p in perm])


def _restricted_poisson(lam, a: int, D: int, rng) -> int:
    """``K`` with ``Pr{K = k}`` proportional to ``lam^k / k!`` on ``k = a mod D``."""
    if D == 1:
        return rng.poisson(float(lam))
    with mpmath.workdps(30):
        lam = ps.to_mpf(lam)
        norm = sp._restricted_exp_value(lam, a, D)
        u = mpmath.mpf(rng.random()) * norm
        k = a
        term = lam**a / mpmath.factorial(a)
        acc = term
        while acc < u:
            for j in range(1, D + 1):
                term = term * lam / (k + j)
            k += D
            acc += term
            if term == 0:
                break
        return k


# --------------------------------------------------------------------------
# Galton-Watson trees


def _offspring_cdf(phi: Series, t):
    """Tilted offspring CDF ``phi_j t^j / phi(t)``.

    The mass beyond the table is left uncovered, so a draw landing there is
    detected; it is absorbed into the last entry once it is below float
    resolution.
    """
    with mpmath.workdps(30):
        t = ps.to_mpf(t)
        vals = [ps._mpq(c) * t**j for j, c in enumerate(phi)]
        if len(phi.nonzero_indices()) >= 3 and t > 0:
            total, _ = ps.eval_at(phi, t, "geometric-bound")
        else:
            total = mpmath.fsum(vals)
        probs = [float(v / total) for v in vals]
    cdf = np.cumsum(probs)
    if 1 - cdf[-1] < 1e-12:
        cdf[-1] = 1.0
    return cdf


def _gw_outdegrees(cdf, rng, cap: int = DEFAULT_NODE_CAP, stop_above: int | None = None):
    """Depth-first outdegrees of a GW tree with offspring CDF ``cdf``.

    The outdegree sequence is i.i.d. until the Lukasiewicz walk first hits
    zero, so it is generated in vectorised chunks.  Returns ``None`` if the
    tree grows beyond ``stop_above``.
    """
    level = 1
    chunks = []
    total = 0
    size = 64
    top = len(cdf)
    while True:
        u = rng.gen.random(size)
        xi = np.searchsorted(cdf, u, side="right")
        if (xi >= top).any():
            raise ResourceCapError("offspring draw fell beyond the truncated offspring table")
        walk = level + np.cumsum(xi - 1)
        hit = np.flatnonzero(walk == 0)
        if hit.size:
            k = int(hit[0])
            chunks.append(xi[: k + 1])
            out = np.concatenate(chunks)
            if stop_above is not None and len(out) > stop_above:
                return None
            return out
        chunks.append(xi)
        level = int(walk[-1])
        total += size
        if stop_above is not None and total > stop_above:
            return None
        if total > cap:
            raise ResourceCapError(f"Galton-Watson tree exceeded the node cap of {cap}")
        size = min(size * 2, 1 << 20)


@lru_cache(maxsize=32)
def _tilted_table(phi: Series, tau):
    if not phi.is_nonnegative() or phi[0] <= 0:
        raise PreconditionError("phi needs nonnegative coefficients and phi_0 > 0")
    if tau < 0:
        raise PreconditionError("tilt must be nonnegative")
    with mpmath.workdps(30):
        if tau > 0 and len(phi.nonzero_indices()) > 1:
            v = ps._poly_eval(phi, tau)[0]
            dv = ps._poly_eval(ps.derive(phi), tau)[0]
            if tau * dv > v * (1 + mpmath.mpf("1e-12")):
                raise PreconditionError("supercritical tilt: offspring mean exceeds 1")
    return _offspring_cdf(phi, tau)


def gw_tree_sample(phi: Series, tau, rng, node_cap: int = DEFAULT_NODE_CAP,
                   max_size: int | None = None) -> Tree | None:
    """Galton-Watson tree with offspring law ``phi_k tau^k / phi(tau)``.

    Critical trees are a.s. finite but heavy tailed.  With ``max_size`` a tree
    is abandoned as soon as it outgrows it and ``None`` is returned.
    """
    cdf = _tilted_table(phi, ps.to_mpf(tau))
    out = _gw_outdegrees(cdf, rng, node_cap, max_size)
    return None if out is None else Tree(tuple(int(x) for x in out))


def gw_forest_sample(psi: Series, phi: Series, tau, rng, node_cap: int = DEFAULT_NODE_CAP) -> Forest:
    """``K ~ psi`` independent GW trees; ``psi`` must be a probability generating function."""
    if not psi.is_nonnegative() or sum(psi.coeffs) != 1:
        raise PreconditionError("psi must have nonnegative coefficients summing to 1")
    k = _pick([float(c) for c in psi.coeffs], rng)
    return Forest(tuple(gw_tree_sample(phi, tau, rng, node_cap) for _ in range(k)))


def cycle_lemma_identities(phi: Series, n: int) -> dict:
    """Both cycle-lemma identities as exact rationals.

    With the tilt factor ``tau^(n-1) / phi(tau)^n`` cancelled,
    ``Pr{|T| = n} = Pr{S_n = n-1} / n`` reads ``Z_n = [w^(n-1)] phi^n / n``,
    and the two-tree identity reads
    ``[z^(n+1)] Z^2 = 2/(n+1) * [w^(n-1)] phi^(n+1)``.  ``Z`` comes from the
    fixed-point solver; the right-hand sides from direct powers of ``phi``.
    """
    Z = ps.solve_lagrange(phi, n + 1, check_branching=False)
    Z2 = ps.mul(Z, Z)
    one = {"lhs": Z[n], "rhs": ps.power_coefficients(phi, n, n - 1)[n - 1] / n}
    two = {"lhs": Z2[n + 1], "rhs": Fraction(2, n + 1) * ps.power_coefficients(phi, n + 1, n - 1)[n - 1]}
    return {"single": one, "pair": two}


# --------------------------------------------------------------------------
# named graph classes


class _ClassSampler:
    """Samplers for connected or rooted graphs of a clique-block class."""

    def __init__(self, info, N: int):
        self.info = info
        self.model = info.model(N)
        self.N = self.model.N
        mdl = self.model
        self.phi = mdl.phi
        # critical tilt keeps the conditioned tables O(1)
        with mpmath.workdps(30):
            tau = mdl.tau
            logs = [None if c == 0 else mpmath.log(ps._mpq(c)) + j * mpmath.log(tau)
                    for j, c in enumerate(self.phi)]
            lphi = mpmath.fsum(ps._mpq(c) * tau**j for j, c in enumerate(mdl.bprime) if c)
            self.p = np.array([0.0 if l is None else float(mpmath.exp(l - lphi)) for l in logs])
        self._tables = None
        self._table_n = 0
        # exact child-partition weights F_j = j! phi_j
        self._F = [c * math.factorial(j) for j, c in enumerate(self.phi)]
        self._bw = {s: self.model.blocks.weight(s) for s in range(2, self.N + 2)}
        self._part_cache = {}
        self._size_tables = {}

    # conditioned outdegree sequences (cycle lemma)
    def _ensure_tables(self, n: int):
        if self._tables is not None and self._table_n >= n:
            return
        M = min(max(n, 2 * self._table_n, 16), self.N)
        p = self.p[:M]
        P = np.zeros((M + 1, M))
        P[0, 0] = 1.0
        for m in range(1, M + 1):
            P[m] = np.convolve(P[m - 1], p)[:M]
        self._tables = P
        self._table_n = M

    def conditioned_outdegrees(self, n: int, rng) -> list[int]:
        if n > self.N:
            raise PreconditionError(f"size {n} exceeds truncation {self.N}")
        self._ensure_tables(n)
        P = self._tables
        if P[n, n - 1] <= 0:
            raise PreconditionError(f"no objects of size {n} in this class")
        rem = n - 1
        seq = []
        for i in range(n):
            m = n - 1 - i
            js = np.arange(rem + 1)
            w = self.p[: rem + 1] * P[m, rem - js]
            j = _pick(w, rng)
            seq.append(j)
            rem -= j
        # rotate so the walk first reaches -1 at the end
        walk = np.cumsum(np.asarray(seq) - 1)
        k = int(np.argmin(walk))
        return seq[k + 1:] + seq[: k + 1]

    # partition of a vertex's children into blocks
    def _partition(self, j: int, rng) -> list[int]:
        sizes = []
        rem = j
        while rem:
            key = rem
            if key not in self._part_cache:
                Fr = self._F[rem]
                ws = []
                for s in range(1, rem + 1):
                    b = self._bw.get(s + 1, 0)
                    ws.append(float(math.comb(rem - 1, s - 1) * b * self._F[rem - s] / Fr) if b else 0.0)
                self._part_cache[key] = ws
            s = _pick(self._part_cache[key], rng) + 1
            sizes.append(s)
            rem -= s
        return sizes

    def render(self, outdeg, rng, rooted: bool, star_root: bool = False):
        """Graph from depth-first outdegrees with uniform labels.

        With ``star_root`` the root gets label ``n`` and the other labels are
        uniform on ``[n-1]``, which is the derived-object convention.
        """
        n = len(outdeg)
        if star_root:
            labels = [n] + [p + 1 for p in rng.permutation(n - 1)]
        else:
            labels = [p + 1 for p in rng.permutation(n)]
        children = [[] for _ in range(n)]
        left = list(outdeg)
        stack = []
        for idx, d in enumerate(outdeg):
            if stack:
                top = stack[-1]
                children[top].append(labels[idx])
                left[top] -= 1
                if left[top] == 0:
                    stack.pop()
            if d:
                stack.append(idx)
        edges = []
        for idx in range(n):
            if children[idx]:
                self._emit(labels[idx], children[idx], edges, rng)
        root = labels[0] if rooted and not star_root else 0
        g = Graph.make(n, edges, root)
        return Derived(g) if star_root else g

    def _emit(self, parent, kids, edges, rng):
        order = sorted(kids)
        # the block containing the smallest remaining child is chosen first
        remaining = list(order)
        for s in self._partition(len(kids), rng):
            first = remaining.pop(0)
            if s > 1:
                pick = rng.gen.choice(len(remaining), size=s - 1, replace=False)
                others = [remaining[i] for i in sorted(pick, reverse=True)]
                for i in sorted(pick, reverse=True):
                    remaining.pop(i)
            else:
                others = []
            blk = [parent, first] + others
            for a in range(len(blk)):
                for b in range(a + 1, len(blk)):
                    edges.append((blk[a], blk[b]))

    # size laws
    def _size_table(self, x, rooted: bool):
        key = (str(x), rooted)
        if key not in self._size_tables:
            with mpmath.workdps(30):
                x = ps.to_mpf(x)
                ser = self.model.T if rooted else self.model.C
                norm = self.info.value(x) if not rooted else _tree_value(self.info, x)
                probs = [float(ps._mpq(c) * x**n / norm) for n, c in enumerate(ser)]
                t = _tree_value(self.info, x)
            cum = np.cumsum(probs)
            self._size_tables[key] = (cum, _offspring_cdf(self.phi, t))
        return self._size_tables[key]

    def boltzmann(self, x, rng, rooted: bool, render: bool, star_root: bool = False,
                  node_cap: int = DEFAULT_NODE_CAP, max_size: int | None = None):
        if x > self.model.rho * (1 + mpmath.mpf("1e-30")):
            raise PreconditionError("Boltzmann parameter beyond the radius of convergence")
        cum, gw_cdf = self._size_table(x, rooted)
        u = rng.random()
        n = int(np.searchsorted(cum, u, side="right"))
        _check_budget(min(n, self.N + 1), max_size)
        if n <= self.N:
            if not render:
                return AtomObj(n, self.info.id)
            return self.exact(n, rng, rooted, render, star_root)
        # tail: GW rooted tree conditioned on size > N, unrooted via acceptance (N+1)/size
        attempts = 0
        while True:
            attempts += 1
            if attempts > DEFAULT_MAX_ATTEMPTS:
                raise SamplingExhausted("tail sampler ran out of attempts", attempts, 0)
            out = _gw_outdegrees(gw_cdf, rng, node_cap, max_size)
            if out is None:
                raise _Oversize
            size = len(out)
            if size <= self.N:
                continue
            if not rooted and rng.random() * size >= self.N + 1:
                continue
            if not render:
                return AtomObj(size, self.info.id)
            return self.render(list(int(v) for v in out), rng, rooted, star_root)

    def exact(self, n: int, rng, rooted: bool, render: bool = True, star_root: bool = False):
        if n < 1:
            raise PreconditionError("graph classes have no objects of size 0")
        if not render:
            ser = self.model.T if rooted else self.model.C
            if n <= self.N and ser[n] == 0:
                raise PreconditionError(f"no objects of size {n} in this class")
            return AtomObj(n, self.info.id)
        out = self.conditioned_outdegrees(n, rng)
        return self.render(out, rng, rooted, star_root)


def _tree_value(info, x):
    from .graphclass import tree_value

    return tree_value(info.blocks, x)


@lru_cache(maxsize=64)
def _class_sampler(id: str, N: int) -> _ClassSampler:
    return _ClassSampler(sp.resolve_named(id), N)


def _named_sampler(id: str, N: int) -> _ClassSampler:
    return _class_sampler(id, max(N, 16))


# --------------------------------------------------------------------------
# Boltzmann sampling


def boltzmann_sample(e, y, rng, render: bool = True, truncation: int = ps.DEFAULT_TRUNCATION,
                     max_attempts: int = DEFAULT_MAX_ATTEMPTS):
    """Sample from the Boltzmann law of ``e`` at parameter ``y``."""
    return _boltzmann(e, y, rng, render, truncation, max_attempts, None)


def _boltzmann(e, y, rng, render: bool, N: int, max_attempts: int, max_size: int | None):
    # max_size: raise _Oversize as soon as the draw is known to exceed it
    with mpmath.workdps(30):
        y = ps.to_mpf(y)
    if y < 0:
        raise PreconditionError("Boltzmann parameter must be nonnegative")
    if isinstance(e, sp.SetSpecies):
        k = rng.poisson(float(y))
        _check_budget(k, max_size)
        return SetObj(k)
    if isinstance(e, sp.Restrict) and isinstance(e.child, sp.SetSpecies):
        k = _restricted_poisson(y, e.a, e.D, rng)
        _check_budget(k, max_size)
        return SetObj(k)
    if isinstance(e, sp.Atom):
        k = _size_from_table(e, y, rng, N)
        _check_budget(k, max_size)
        return AtomObj(k, e.name)
    if isinstance(e, sp.Named):
        info = sp.resolve_named(e.id)
        if info.shape == "bprime":
            s = _size_from_table(e, y, rng, N)
            _check_budget(s, max_size)
            return _bprime_object(info, s, render)
        return _named_sampler(e.id, N).boltzmann(y, rng, info.shape == "rooted", render,
                                                 max_size=max_size)
    if isinstance(e, sp.Derive) and isinstance(e.child, sp.Named):
        info = sp.resolve_named(e.child.id)
        if info.shape == "connected":
            # C' = T / z: a rooted graph whose root is the star
            rooted_id = "rooted:" + info.blocks.key
            budget = None if max_size is None else max_size + 1
            obj = _named_sampler(rooted_id, N).boltzmann(y, rng, True, render, star_root=True,
                                                         max_size=budget)
            return obj if render else AtomObj(obj.size - 1, info.id + "'")
    if isinstance(e, sp.Derive):
        k = _size_from_table(e, y, rng, N)
        _check_budget(k, max_size)
        return _star_uniform(exact_sample_small(e.child, k + 1, rng, bound=None, render=render), rng)
    if isinstance(e, sp.Restrict):
        for _ in range(max_attempts):
            try:
                s = _boltzmann(e.child, y, rng, render, N, max_attempts, max_size)
            except _Oversize:
                continue
            if size_of(s) % e.D == e.a:
                return s
        raise SamplingExhausted("restricted Boltzmann sampler ran out of attempts", max_attempts, 0)
    if isinstance(e, sp.Compose):
        gy = _inner_value(e.inner, y, N)
        outer = _boltzmann(e.outer, gy, rng, render, N, max_attempts, None)
        k = size_of(outer)
        comps = []
        used = 0
        for _ in range(k):
            left = None if max_size is None else max_size - used
            c = _boltzmann(e.inner, y, rng, render, N, max_attempts, left)
            used += size_of(c)
            comps.append(c)
        return _assemble(outer, comps, rng)
    raise PreconditionError(f"no Boltzmann sampler for {e!r}")


@lru_cache(maxsize=256)
def _inner_value(inner, y, N: int):
    with mpmath.workdps(30):
        return sp.value(inner, y, N)[0]


def _assemble(outer, comps, rng):
    sizes = [size_of(c) for c in comps]
    n = sum(sizes)
    perm = [p + 1 for p in rng.permutation(n)] if n else []
    blocks = []
    pos = 0
    for s in sizes:
        blocks.append(perm[pos: pos + s])
        pos += s
    return make_composite(outer, blocks, comps)


def _bprime_object(info, s: int, render: bool):
    if render:
        return Derived(Graph.make(s + 1, itertools.combinations(range(1, s + 2), 2)))
    return AtomObj(s, info.id)


def _size_from_table(e, y, rng, N: int) -> int:
    law = sp.size_law(e, y, N)
    u = rng.random()
    acc = 0.0
    for n, p in enumerate(law.probs):
        acc += float(p)
        if u < acc:
            return n
    if law.tail > mpmath.mpf("1e-12"):
        raise ResourceCapError("size fell beyond the coefficient table; raise the truncation")
    return max(i for i, p in enumerate(law.probs) if p > 0)


def _star_uniform(s, rng):
    """Derived object from ``s``: a uniform label becomes the star."""
    n = size_of(s)
    r = rng.integers(1, n + 1)
    sigma = {}
    nxt = 1
    for lab in range(1, n + 1):
        if lab == r:
            sigma[lab] = n
        else:
            sigma[lab] = nxt
            nxt += 1
    if isinstance(s, SetObj):
        return SetObj(n - 1, True)
    return Derived(relabel(s, sigma))


# --------------------------------------------------------------------------
# exact sampling at a fixed size


class _SetOuterTables:
    """Float tables for the SET / residue-SET outer recursion at sizes up to ``n``."""

    def __init__(self, inner, D: int, n: int):
        g = sp.egf(inner, n)
        if g[0] != 0:
            raise PreconditionError("composition needs an inner species without size-0 objects")
        A, L = ps._scaled(g.coeffs)
        E = [ps._from_exp_residue(row, L) for row in ps._exp_residues(A, L, n, D)]
        top = max((E[r][n] for r in range(D)), default=0)
        lg = -math.log(top.numerator / top.denominator) / n if top > 0 and n > 0 else 0.0
        if top > 0:
            lg = -(math.log(top.numerator) - math.log(top.denominator)) / n
        self.g = g
        self.E = E
        self.ghat = np.array([s * _ffloat(g[s], lg, s) for s in range(n + 1)])
        self.Ehat = [np.array([_ffloat(E[r][j], lg, j) for j in range(n + 1)]) for r in range(D)]
        self.D = D
        self.n = n


@lru_cache(maxsize=32)
def _set_tables(inner, D: int, n: int) -> _SetOuterTables:
    return _SetOuterTables(inner, D, n)


def _set_outer_exact(inner, n: int, residue: int, D: int, rng, render: bool, star: bool = False):
    tab = _set_tables(inner, D, n)
    if tab.E[residue][n] == 0:
        raise PreconditionError(f"no objects of size {n} in this composition")
    remaining = list(range(1, n + 1))
    blocks = []
    comps = []
    r = residue
    rem = n
    while rem:
        # component containing the smallest remaining label has size s with
        # weight s g_s E_{r-1}[rem - s]
        prev = tab.Ehat[(r - 1) % D]
        w = tab.ghat[1: rem + 1] * prev[rem - 1:: -1][: rem]
        s = _pick(w, rng) + 1
        first = remaining.pop(0)
        if s > 1:
            idx = sorted(rng.gen.choice(len(remaining), size=s - 1, replace=False).tolist(), reverse=True)
            others = [remaining[i] for i in idx]
            for i in idx:
                remaining.pop(i)
        else:
            others = []
        blocks.append([first] + sorted(others))
        comps.append(exact_sample_small(inner, s, rng, bound=None, render=render))
        rem -= s
        r = (r - 1) % D
    return make_composite(SetObj(len(comps), star), blocks, comps)


def exact_sample_small(e, n: int, rng, bound: int | None = DEFAULT_EXACT_BOUND, render: bool = True):
    """Object of size ``n`` drawn proportionally to weight, without rejection.

    SET-like outers use the component-containing-the-smallest-label
    recursion and work at any size; other outers enumerate outer sizes and
    ordered size compositions and are limited to ``n <= bound``.
    """
    if n < 0:
        raise PreconditionError("size must be nonnegative")
    if isinstance(e, sp.SetSpecies):
        return SetObj(n)
    if isinstance(e, sp.Restrict) and isinstance(e.child, sp.SetSpecies):
        if n % e.D != e.a:
            raise PreconditionError(f"size {n} is outside the residue class")
        return SetObj(n)
    if isinstance(e, sp.Atom):
        if sp.egf(e, n)[n] == 0:
            raise PreconditionError(f"no objects of size {n}")
        return AtomObj(n, e.name)
    if isinstance(e, sp.Named):
        info = sp.resolve_named(e.id)
        if info.shape == "bprime":
            if info.series(n)[n] == 0:
                raise PreconditionError(f"no objects of size {n}")
            return _bprime_object(info, n, render)
        return _named_sampler(e.id, max(n, ps.DEFAULT_TRUNCATION)).exact(
            n, rng, info.shape == "rooted", render)
    if isinstance(e, sp.Derive):
        if isinstance(e.child, sp.Named):
            info = sp.resolve_named(e.child.id)
            if info.shape == "connected" and render:
                smp = _named_sampler("rooted:" + info.blocks.key, max(n + 1, ps.DEFAULT_TRUNCATION))
                return smp.exact(n + 1, rng, True, True, star_root=True)
        return _star_uniform(exact_sample_small(e.child, n + 1, rng, bound, render), rng)
    if isinstance(e, sp.Restrict):
        if n % e.D != e.a:
            raise PreconditionError(f"size {n} is outside the residue class")
        return exact_sample_small(e.child, n, rng, bound, render)
    if isinstance(e, sp.Compose):
        if n == 0:
            f0 = sp.egf(e.outer, 0)[0]
            if f0 == 0:
                raise PreconditionError("no objects of size 0")
            return make_composite(exact_sample_small(e.outer, 0, rng, bound, render), [], [])
        out = e.outer
        if isinstance(out, sp.SetSpecies):
            return _set_outer_exact(e.inner, n, 0, 1, rng, render)
        if isinstance(out, sp.Restrict) and isinstance(out.child, sp.SetSpecies):
            return _set_outer_exact(e.inner, n, out.a, out.D, rng, render)
        return _generic_compose_exact(e, n, rng, bound, render)
    raise PreconditionError(f"no exact sampler for {e!r}")


def _generic_compose_exact(e, n: int, rng, bound, render: bool):
    if bound is not None and n > bound:
        raise PreconditionError(f"exact sampling of general compositions is limited to n <= {bound}")
    f = sp.egf(e.outer, n)
    g = sp.egf(e.inner, n)
    if g[0] != 0:
        raise PreconditionError("composition needs an inner species without size-0 objects")
    powers = [Series([1], n)]
    for _ in range(n):
        powers.append(ps.mul(powers[-1], g))
    wk = [f[k] * powers[k][n] for k in range(n + 1)]
    total = sum(wk)
    if total == 0:
        raise PreconditionError(f"no objects of size {n} in this composition")
    k = _pick([float(w / total) for w in wk], rng)
    sizes = []
    rem = n
    for i in range(k, 0, -1):
        # first part s weighted by g_s [z^(rem-s)] g^(i-1)
        ws = [g[s] * powers[i - 1][rem - s] if s <= rem else 0 for s in range(1, rem + 1)]
        tot = sum(ws)
        s = _pick([float(w / tot) for w in ws], rng) + 1
        sizes.append(s)
        rem -= s
    outer = exact_sample_small(e.outer, k, rng, bound, render)
    comps = [exact_sample_small(e.inner, s, rng, bound, render) for s in sizes]
    return _assemble(outer, comps, rng)


def conditioned_sample(e, n: int, y, rng, max_attempts: int = DEFAULT_MAX_ATTEMPTS,
                       render: bool = True, truncation: int = ps.DEFAULT_TRUNCATION):
    """Rejection sampler for size ``n``; returns ``(structure, attempts)``."""
    if n < 0 or sp.egf(e, max(n, 0))[n] == 0:
        raise PreconditionError(f"no objects of size {n}")
    with mpmath.workdps(30):
        y = ps.to_mpf(y)
    for attempt in range(1, max_attempts + 1):
        try:
            s = _boltzmann(e, y, rng, render, truncation, max_attempts, n)
        except _Oversize:
            continue
        if size_of(s) == n:
            return s, attempt
    raise SamplingExhausted(f"no sample of size {n} in {max_attempts} attempts", max_attempts, 0)


# --------------------------------------------------------------------------
# fragments


def fragment(s, rng):
    """Remove a uniformly chosen largest component; relabel the rest order-preservingly.

    Returns ``(rest, removed_size)``; the outer object of ``rest`` is derived,
    with the removed slot as its star.
    """
    if not isinstance(s, Composite) or s.k == 0:
        raise PreconditionError("fragment needs a composite with at least one component")
    sizes = s.component_sizes()
    top = max(sizes)
    cands = [i for i, z in enumerate(sizes) if z == top]
    i0 = cands[rng.integers(0, len(cands))] if len(cands) > 1 else cands[0]
    removed = set(s.blocks[i0])
    keep = sorted(x for x in range(1, s.size + 1) if x not in removed)
    pos = {lab: j + 1 for j, lab in enumerate(keep)}
    k = s.k
    if isinstance(s.outer, SetObj):
        outer = SetObj(k - 1, True)
    else:
        sigma = {}
        nxt = 1
        for slot in range(1, k + 1):
            if slot == i0 + 1:
                sigma[slot] = k
            else:
                sigma[slot] = nxt
                nxt += 1
        outer = Derived(relabel(s.outer, sigma))
    blocks = [[pos[x] for x in b] for j, b in enumerate(s.blocks) if j != i0]
    comps = [c for j, c in enumerate(s.components) if j != i0]
    # slot order is preserved, matching the relabelled outer
    return Composite(outer, tuple(tuple(b) for b in blocks), tuple(comps)), top


def limit_fragment_sample(F, G, rho, rng, residue: int | None = None, D: int | None = None,
                          render: bool = True, truncation: int = ps.DEFAULT_TRUNCATION):
    """Boltzmann sample of ``F' o G`` at ``rho`` (``F`` restricted to ``residue + D Z`` if given)."""
    if residue is not None:
        if D is None:
            raise PreconditionError("a residue restriction needs its modulus D")
        F = sp.restrict_size(F, residue % D, D)
    return boltzmann_sample(sp.COMPOSE(sp.DERIVE(F), G), rho, rng, render, truncation)


# --------------------------------------------------------------------------
# enumeration (exact small-size oracle)


def enumerate_structures(e, n: int):
    """All labelled structures of size ``n`` with their weights (small ``n`` only)."""
    if isinstance(e, sp.SetSpecies):
        return [(SetObj(n), Fraction(1))]
    if isinstance(e, sp.Restrict):
        if n % e.D != e.a:
            return []
        return enumerate_structures(e.child, n)
    if isinstance(e, sp.Atom):
        w = sp.egf(e, n)[n] * math.factorial(n)
        return [(AtomObj(n, e.name), w)] if w else []
    if isinstance(e, sp.Named):
        info = sp.resolve_named(e.id)
        if info.shape == "bprime":
            w = info.series(n)[n] * math.factorial(n)
            return [(_bprime_object(info, n, True), w)] if w else []
        from .graphclass import enumerate_connected

        if n == 0:
            return []
        return enumerate_connected(info.blocks, n, rooted=info.shape == "rooted")
    if isinstance(e, sp.Derive):
        out = []
        for s, w in enumerate_structures(e.child, n + 1):
            if isinstance(s, SetObj):
                out.append((SetObj(n, True), w))
            else:
                out.append((Derived(s), w))
        return out
    if isinstance(e, sp.Compose):
        out = []
        for blocks in _set_partitions(list(range(1, n + 1))):
            k = len(blocks)
            outers = enumerate_structures(e.outer, k)
            if not outers:
                continue
            comp_lists = [enumerate_structures(e.inner, len(b)) for b in blocks]
            if any(not c for c in comp_lists):
                continue
            for o, wo in outers:
                for combo in _product(comp_lists):
                    w = wo
                    for _, wc in combo:
                        w *= wc
                    if w:
                        out.append((make_composite(o, blocks, [c for c, _ in combo]), w))
        return out
    raise PreconditionError(f"cannot enumerate {e!r}")


def _product(lists):
    return itertools.product(*lists)


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield sorted([part[j] if j != i else sorted([first] + part[j]) for j in range(len(part))])
        yield sorted([[first]] + part)
