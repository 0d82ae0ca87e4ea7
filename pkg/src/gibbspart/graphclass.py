"""Block-stable graph classes given by their (weighted) blocks.

A class is described by the derivative ``B'`` of its block series.  Rooted
connected graphs satisfy ``T = z * exp(B'(T))`` with ``T = z C'``, and the
whole class is ``A = exp(C)``.  Everything analytic below rests on the
tilt point ``tau`` solving ``tau * B''(tau) = 1``:

    rho  = tau * exp(-B'(tau))
    C(rho) = tau - tau * B'(tau) + B(tau)

Rendering explicit graphs is supported for the clique presets (edges,
triangles, ``K_k``); other block data yields abstract size-only components.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import mpmath

from . import powerseries as ps
from .errors import PreconditionError, SpecError
from .powerseries import Series, as_fraction
from .structures import Graph

WORK_DPS = 50


# --------------------------------------------------------------------------
# block data


@dataclass(frozen=True)
class BlockWeights:
    """Block weights: ``block_weight[s]`` is the total weight of blocks on ``s`` labelled vertices.

    ``B'`` has coefficient ``block_weight[s] / (s-1)!`` at ``z^(s-1)``.
    Blocks are realised as cliques: the block on ``s`` vertices is ``K_s``
    carrying weight ``block_weight[s]``.  For ``s <= 3`` that is the only
    2-connected graph, so edge/triangle classes are exactly the usual ones.
    """

    block_weight: tuple  # ((s, Fraction), ...) sorted by s
    preset: str | None = None

    @property
    def key(self) -> str:
        if self.preset:
            return self.preset
        return "blocks:" + ",".join(f"{s}={w}" for s, w in self.block_weight)

    def weight(self, s: int) -> Fraction:
        return dict(self.block_weight).get(s, Fraction(0))

    def bprime(self, N: int) -> Series:
        c = [Fraction(0)] * (N + 1)
        for s, w in self.block_weight:
            if s - 1 <= N:
                c[s - 1] = w / math.factorial(s - 1)
        return Series(c)

    def max_block(self) -> int:
        return max(s for s, _ in self.block_weight)

    @classmethod
    def parse(cls, spec) -> "BlockWeights":
        """Accept ``"edge"``, ``"triangle"``, ``"clique:K"``, ``{"bprime_coeffs": [...]}``
        or ``{"block_counts": {"s": count}}``."""
        if isinstance(spec, BlockWeights):
            return spec
        if isinstance(spec, str):
            name = spec.strip().lower()
            if name == "edge":
                return cls(((2, Fraction(1)),), "edge")
            if name == "triangle":
                return cls(((3, Fraction(1)),), "triangle")
            for prefix in ("clique:", "clique"):
                if name.startswith(prefix) and name[len(prefix):].isdigit():
                    k = int(name[len(prefix):])
                    if k < 2:
                        raise SpecError("cliques need at least 2 vertices")
                    return cls(((k, Fraction(1)),), f"clique:{k}")
            raise SpecError(f"unknown block preset {spec!r}")
        if isinstance(spec, dict) and "bprime_coeffs" in spec:
            coeffs = [as_fraction(c) for c in spec["bprime_coeffs"]]
            if coeffs and coeffs[0] != 0:
                raise SpecError("B' must have zero constant term (blocks have >= 2 vertices)")
            bw = tuple((j + 1, c * math.factorial(j)) for j, c in enumerate(coeffs) if c)
            return cls._checked(bw)
        if isinstance(spec, dict) and "block_counts" in spec:
            bw = []
            for s, cnt in spec["block_counts"].items():
                s = int(s)
                if s < 2:
                    raise SpecError("blocks have at least 2 vertices")
                if as_fraction(cnt):
                    bw.append((s, as_fraction(cnt)))
            return cls._checked(tuple(sorted(bw)))
        raise SpecError(f"cannot parse block weights from {spec!r}")

    @classmethod
    def _checked(cls, bw) -> "BlockWeights":
        if not bw:
            raise PreconditionError("the block class must be non-empty")
        if any(w < 0 for _, w in bw):
            raise PreconditionError("block weights must be nonnegative")
        return cls(bw, None)


# --------------------------------------------------------------------------
# analytic constants


def _bprime_mp(w: BlockWeights, t, order: int = 0):
    """``B'``, ``B''`` or ``B`` (order 0, 1, -1) at ``t`` in mpmath."""
    s = mpmath.mpf(0)
    for size, wt in w.block_weight:
        j = size - 1
        c = mpmath.mpf(wt.numerator) / wt.denominator / mpmath.factorial(j)
        if order == 0:
            s += c * t**j
        elif order == 1:
            s += c * j * t ** (j - 1)
        else:
            s += c * t ** (j + 1) / (j + 1)
    return s


def _bisect(f, lo, hi, iters: int = 200):
    flo = f(lo)
    for _ in range(iters):
        mid = (lo + hi) / 2
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < mpmath.mpf(10) ** (-WORK_DPS + 5):
            break
    return (lo + hi) / 2


@lru_cache(maxsize=64)
def tilt_point(w: BlockWeights):
    """Solve ``tau * B''(tau) = 1`` (the critical equation for ``phi = exp(B')``)."""
    with mpmath.workdps(WORK_DPS):
        f = lambda t: t * _bprime_mp(w, t, 1) - 1
        hi = mpmath.mpf(1)
        while f(hi) < 0:
            hi *= 2
        return _bisect(f, mpmath.mpf(0), hi)


def tree_value(w: BlockWeights, x):
    """``T(x)``: the smallest root of ``t = x * exp(B'(t))`` for ``0 <= x <= rho``."""
    with mpmath.workdps(WORK_DPS):
        return _tree_value(w, ps.to_mpf(x))


@lru_cache(maxsize=256)
def _tree_value(w: BlockWeights, x):
    with mpmath.workdps(WORK_DPS):
        tau = tilt_point(w)
        g = lambda t: t * mpmath.exp(-_bprime_mp(w, t)) - x
        if g(tau) < 0:
            if g(tau) > -mpmath.mpf(10) ** (-WORK_DPS + 10):
                return tau
            raise PreconditionError("evaluation point beyond the radius of convergence")
        if x == 0:
            return mpmath.mpf(0)
        return _bisect(g, mpmath.mpf(0), tau)


def connected_value(w: BlockWeights, x):
    """``C(x) = T - T B'(T) + B(T)`` with ``T = T(x)``."""
    with mpmath.workdps(WORK_DPS):
        t = tree_value(w, x)
        return t - t * _bprime_mp(w, t) + _bprime_mp(w, t, -1)


# --------------------------------------------------------------------------
# the model


@dataclass
class ClassModel:
    blocks: BlockWeights
    N: int
    bprime: Series
    phi: Series
    T: Series
    C: Series
    A: Series
    d: int
    m: int
    rho: object
    tau: object
    C_rho: object
    C_a: list
    C_a_err: list
    smooth: bool
    notes: list = field(default_factory=list)

    def lattice_constant(self, r: int):
        return self.C_a[r % self.d]


def build_class(w, N: int = ps.DEFAULT_TRUNCATION) -> ClassModel:
    """Solve the class to truncation ``N``: series, span, radius and lattice constants."""
    w = BlockWeights.parse(w)
    if N < 2:
        raise PreconditionError("truncation order must be at least 2")
    bprime = w.bprime(N)
    phi = ps.exp_series(bprime)
    T = ps.solve_lagrange_exp(bprime, N)
    C = ps.integrate(T.shift_down(1))
    A = ps.exp_series(C)
    d = ps.support_span(phi).d
    m = ps.support_span(C).m
    notes = []
    with mpmath.workdps(WORK_DPS):
        tau = tilt_point(w)
        rho = tau * mpmath.exp(-_bprime_mp(w, tau))
        C_rho = tau - tau * _bprime_mp(w, tau) + _bprime_mp(w, tau, -1)
        C_a, C_err = _lattice_sums(C_rho, d)
    if any(C[n] == 0 for n in range(1, N + 1) if n % d == 1 % d):
        notes.append("some lattice coefficients of C vanish inside the window")
    return ClassModel(w, N, bprime, phi, T, C, A, d, m, rho, tau, C_rho, C_a, C_err, d == 1, notes)


def _lattice_sums(value, d: int):
    """``sum_{k = r mod d} value^k / k!`` for each ``r`` with a tail bound."""
    with mpmath.workdps(WORK_DPS):
        sums = [mpmath.mpf(0)] * d
        term = mpmath.mpf(1)
        k = 0
        eps = mpmath.mpf(10) ** (-WORK_DPS + 5)
        while True:
            sums[k % d] += term
            k += 1
            term = term * value / k
            # remaining terms are dominated by a geometric series once k > 2 value
            if k > 2 * value + 1 and term < eps:
                break
        err = 2 * term + eps
        return sums, [err] * d


@lru_cache(maxsize=32)
def cached_model(key: str, N: int) -> ClassModel:
    return build_class(key if not key.startswith("blocks:") else _parse_key(key), N)


def _parse_key(key: str):
    counts = {}
    for part in key[len("blocks:"):].split(","):
        s, wt = part.split("=")
        counts[s] = wt
    return {"block_counts": counts}


def model_for(w, N: int) -> ClassModel:
    w = BlockWeights.parse(w)
    return cached_model(w.key, N)


def lattice_constants(model: ClassModel) -> list:
    """``C_r = sum_{k = r mod d} C(rho)^k / k!`` for ``r = 0..d-1``."""
    return list(model.C_a)


def smoothness_verdict(model: ClassModel):
    """Smooth iff the span is 1; certify the residue split via roots of unity."""
    from .diagnostics import Report

    rep = Report("smoothness", metadata={"blocks": model.blocks.key, "truncation": model.N})
    d = model.d
    with mpmath.workdps(WORK_DPS):
        rows = []
        worst = mpmath.mpf(0)
        for j in range(d):
            zeta = mpmath.exp(2j * mpmath.pi * j / d)
            lhs = mpmath.fsum(model.C_a[a] * zeta**a for a in range(d))
            rhs = mpmath.exp(zeta * model.C_rho)
            diff = abs(lhs - rhs)
            worst = max(worst, diff)
            rows.append((j, float(diff)))
        rep.add_table("root_of_unity_residual", ["j", "abs_residual"], rows)
        rep.add_scalar("root_of_unity_max_residual", worst, error=0)
        for a in range(d):
            rep.add_scalar(f"C_{a}", model.C_a[a], error=model.C_a_err[a])
        rep.add_scalar("C_rho", model.C_rho, error=mpmath.mpf(10) ** (-WORK_DPS + 10))
        witness = None
        if d >= 2:
            for i in range(d):
                gap = model.C_a[i] - model.C_a[(i + 1) % d]
                if abs(gap) > model.C_a_err[i] + model.C_a_err[(i + 1) % d]:
                    witness = i
                    break
            gap01 = model.C_a[0] - model.C_a[1]
            rep.add_scalar("C_0_minus_C_1", gap01, error=model.C_a_err[0] + model.C_a_err[1])
            if d == 2:
                rep.add_scalar("C_0_minus_C_1_identity_residual",
                               abs(gap01 - mpmath.exp(-model.C_rho)), error=0)
        rep.add_scalar("span", model.d, exact=True)
        rep.verdict("smooth", model.d == 1, rows=["span"])
        rep.verdict("root_of_unity_identity", worst < mpmath.mpf("1e-9"), rows=["root_of_unity_residual"])
        if d >= 2:
            rep.verdict("unequal_lattice_constants", witness is not None, rows=[f"C_{a}" for a in range(d)])
    return rep


def expected_ratio_constant(model: ClassModel, n: int):
    """Asymptotic ``a_n / c_{n + (1-a) m}`` along the residue ``a = n mod d``."""
    a = n % model.d
    shift = (1 - a) * model.m
    return model.C_a[(a - 1) % model.d] * model.rho**shift, n + shift


def asymptotic_check(model: ClassModel, window):
    """Per-residue ratios ``a_n / (C_{a-1} rho^((1-a)m) c_{n+(1-a)m})`` over ``window``."""
    from .diagnostics import Report, trend_verdict

    ns = list(window)
    if len(ns) < 2:
        raise PreconditionError("asymptotic window needs at least two indices")
    rep = Report("asymptotic", metadata={"blocks": model.blocks.key, "truncation": model.N})
    d = model.d
    with mpmath.workdps(WORK_DPS):
        for r in range(d):
            rows = []
            for n in ns:
                if n % d != r:
                    continue
                const, idx = expected_ratio_constant(model, n)
                if idx > model.N or idx < 0 or model.C[idx] == 0 or model.A[n] == 0:
                    continue
                ratio = ps._mpq(model.A[n]) / (const * ps._mpq(model.C[idx]))
                rows.append((n, float(ratio)))
            rep.add_table(f"residue_{r}", ["n", "ratio"], rows)
            if len(rows) >= 2:
                rep.verdict(f"residue_{r}_trend_to_1", trend_verdict([abs(v - 1) for _, v in rows]),
                            rows=[f"residue_{r}"])
        crow = []
        for n in ns:
            if n + d <= model.N and model.C[n] and model.C[n + d]:
                crow.append((n, float(ps._mpq(model.C[n]) / ps._mpq(model.C[n + d]) * model.rho ** (-d))))
        rep.add_table("c_ratio", ["n", "c_n/c_{n+d}/rho^d"], crow)
    return rep


def boltzmann_graph_sample(model: ClassModel, a: int, rng, render: bool = True):
    """Sample the Boltzmann Poisson graph for residue ``a``.

    The number of components is ``Poisson(C(rho))`` restricted to
    ``a - 1 mod d``; components are independent Boltzmann connected graphs
    at ``rho``.
    """
    from . import species as sp
    from .sampling import boltzmann_sample

    d = model.d
    outer = sp.SET if d == 1 else sp.SET_RESTRICTED((a - 1) % d, d)
    e = sp.COMPOSE(outer, sp.NAMED(f"connected:{model.blocks.key}"))
    return boltzmann_sample(e, model.rho, rng, render=render, truncation=model.N)


def frag_experiment(model: ClassModel, n_list=None):
    """Exact fragment-size TV against the residue limit, per ``n``, grouped by residue."""
    from . import species as sp
    from .diagnostics import Report, fragment_size_tv

    d = model.d
    if n_list is None:
        n_list = [20, 40, 80] if d == 1 else [20, 21, 40, 41, 80, 81]
    rep = Report("fragment_experiment", metadata={"blocks": model.blocks.key, "truncation": model.N})
    G = sp.NAMED(f"connected:{model.blocks.key}")
    groups: dict[int, list] = {}
    skipped = []
    for n in sorted(n_list):
        if n > model.N:
            raise PreconditionError(f"n = {n} exceeds truncation {model.N}")
        if n < 1 or model.A[n] == 0:
            skipped.append(n)
            continue
        a = n % d
        lim = sp.SET if d == 1 else sp.SET_RESTRICTED((a - 1) % d, d)
        tv = fragment_size_tv(sp.SET, G, n, model.rho, limit_outer=lim, limit_norm=model.C_a[(a - 1) % d],
                              truncation=model.N)
        groups.setdefault(a, []).append((n, tv.scalars["tv"]["value"]))
    for a, rows in groups.items():
        rep.add_table(f"residue_{a}", ["n", "tv"], rows)
        last = [v for _, v in rows[-3:]]
        rep.verdict(f"residue_{a}_decreasing",
                    len(last) >= 2 and all(y < x for x, y in zip(last, last[1:])), rows=[f"residue_{a}"])
    if skipped:
        rep.note(f"skipped n with no objects: {skipped}")
    return rep


# --------------------------------------------------------------------------
# block decomposition (for enumeration and validation)


def biconnected_blocks(n: int, edges):
    """Blocks (as vertex sets) of a simple graph on ``[n]``; isolated vertices are skipped."""
    adj = {v: [] for v in range(1, n + 1)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    disc = {}
    low = {}
    blocks = []
    counter = [0]
    for start in range(1, n + 1):
        if start in disc:
            continue
        disc[start] = low[start] = counter[0]
        counter[0] += 1
        stack = [(start, 0, iter(adj[start]))]
        estack = []
        while stack:
            v, parent, it = stack[-1]
            advanced = False
            for u in it:
                if u not in disc:
                    disc[u] = low[u] = counter[0]
                    counter[0] += 1
                    estack.append((v, u))
                    stack.append((u, v, iter(adj[u])))
                    advanced = True
                    break
                if u != parent and disc[u] < disc[v]:
                    estack.append((v, u))
                    low[v] = min(low[v], disc[u])
            if advanced:
                continue
            stack.pop()
            if stack:
                p = stack[-1][0]
                low[p] = min(low[p], low[v])
                if low[v] >= disc[p]:
                    comp = set()
                    while True:
                        e = estack.pop()
                        comp.update(e)
                        if e == (p, v):
                            break
                    blocks.append(frozenset(comp))
    return blocks


def is_connected(n: int, edges) -> bool:
    if n == 0:
        return False
    adj = {v: [] for v in range(1, n + 1)}
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    seen = {1}
    todo = [1]
    while todo:
        v = todo.pop()
        for u in adj[v]:
            if u not in seen:
                seen.add(u)
                todo.append(u)
    return len(seen) == n


def graph_weight(w: BlockWeights, n: int, edges) -> Fraction:
    """Weight of a connected graph in a clique-block class (0 if some block is not allowed)."""
    if not is_connected(n, edges):
        return Fraction(0)
    eset = {(min(u, v), max(u, v)) for u, v in edges}
    wt = Fraction(1)
    for blk in biconnected_blocks(n, edges):
        s = len(blk)
        inside = sum(1 for u, v in eset if u in blk and v in blk)
        if inside != s * (s - 1) // 2:
            return Fraction(0)
        wt *= w.weight(s)
        if wt == 0:
            return wt
    return wt


def enumerate_connected(w: BlockWeights, n: int, rooted: bool = False):
    """All connected graphs of a block class on ``[n]`` with their weights."""
    if n > 7:
        raise PreconditionError("brute-force enumeration is limited to n <= 7")
    pairs = list(itertools.combinations(range(1, n + 1), 2))
    out = []
    for mask in range(1 << len(pairs)):
        edges = [pairs[i] for i in range(len(pairs)) if mask >> i & 1]
        if len(edges) < n - 1:
            continue
        wt = graph_weight(w, n, edges) if n > 1 else Fraction(1)
        if wt:
            if rooted:
                out.extend((Graph.make(n, edges, r), wt) for r in range(1, n + 1))
            else:
                out.append((Graph.make(n, edges), wt))
    return out
