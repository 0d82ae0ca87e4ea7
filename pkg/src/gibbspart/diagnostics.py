"""Exact and numerical checks of subexponentiality and Gibbs-partition limits."""

from __future__ import annotations

import io
import json
import math
from collections import Counter
from fractions import Fraction

import mpmath
import numpy as np

from . import __version__
from . import powerseries as ps
from . import species as sp
from .errors import PreconditionError
from .powerseries import Series

TREND_IMPROVEMENT = 0.9


# --------------------------------------------------------------------------
# reports


def _num(x):
    """JSON-friendly number: exact rationals keep their string form."""
    if isinstance(x, Fraction):
        return {"exact": str(x), "float": float(x)}
    if isinstance(x, (int, bool, str)) or x is None:
        return x
    if isinstance(x, mpmath.mpc):
        return float(abs(x))
    return float(x)


class Report:
    """Named scalars, tables, verdicts and metadata from one diagnostic run.

    Every scalar is either tagged exact or carries an error bound; verdicts
    name the rows or scalars that justify them.
    """

    def __init__(self, name: str, metadata: dict | None = None):
        self.name = name
        self.metadata = {"tool_version": __version__}
        self.metadata.update(metadata or {})
        self.scalars: dict = {}
        self.tables: dict = {}
        self.verdicts: dict = {}
        self.notes: list = []

    def add_scalar(self, key, value, error=None, exact: bool = False):
        if error is None and not exact and not isinstance(value, Fraction):
            raise PreconditionError(f"scalar {key!r} needs an error bound or an exact tag")
        entry = {"value": value}
        if exact or isinstance(value, Fraction):
            entry["exact"] = True
        else:
            entry["error"] = error
        self.scalars[key] = entry
        return entry

    def add_table(self, key, columns, rows):
        self.tables[key] = {"columns": list(columns), "rows": [tuple(r) for r in rows]}

    def verdict(self, key, passed: bool, rows=()):
        self.verdicts[key] = {"pass": bool(passed), "rows": list(rows)}

    def note(self, text: str):
        self.notes.append(text)

    def value(self, key):
        return self.scalars[key]["value"]

    def passed(self, key) -> bool:
        return self.verdicts[key]["pass"]

    def all_passed(self) -> bool:
        return all(v["pass"] for v in self.verdicts.values())

    def to_dict(self) -> dict:
        scal = {}
        for k, v in self.scalars.items():
            e = {"value": _num(v["value"])}
            if v.get("exact"):
                e["exact"] = True
            else:
                e["error"] = _num(v["error"])
            scal[k] = e
        tabs = {k: {"columns": t["columns"], "rows": [[_num(x) for x in r] for r in t["rows"]]}
                for k, t in self.tables.items()}
        return {"report": self.name, "metadata": self.metadata, "scalars": scal,
                "tables": tabs, "verdicts": self.verdicts, "notes": self.notes}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=str) + "\n"

    def table_csv(self, key) -> str:
        t = self.tables[key]
        buf = io.StringIO()
        for mk in sorted(self.metadata):
            buf.write(f"# {mk}: {self.metadata[mk]}\n")
        buf.write(f"# table: {self.name}/{key}\n")
        buf.write(",".join(t["columns"]) + "\n")
        for r in t["rows"]:
            buf.write(",".join(_csv_cell(x) for x in r) + "\n")
        return buf.getvalue()


def _csv_cell(x) -> str:
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, (mpmath.mpf,)):
        return mpmath.nstr(x, 17)
    return str(x)


def trend_verdict(errors, improvement: float = TREND_IMPROVEMENT) -> bool:
    """Late-window mean error at most ``improvement`` times the early-window mean."""
    errs = [float(e) for e in errors]
    if len(errs) < 2:
        return False
    h = len(errs) // 2
    early = sum(errs[:h]) / h
    late = sum(errs[-h:]) / h
    return late <= improvement * early


# --------------------------------------------------------------------------
# subexponentiality


def _lattice_window(g: Series, window):
    lat = ps.support_span(g)
    ns = [n for n in window if lat.contains(n)]
    for n in ns:
        if n > g.N:
            raise PreconditionError(f"window index {n} exceeds truncation {g.N}")
        if g[n] == 0:
            raise PreconditionError(f"zero coefficient at lattice index {n}")
    return lat, ns


def subexp_check(g: Series, rho, window, g_at_rho=None) -> Report:
    """Ratio and self-convolution conditions of the span-``d`` subexponential class.

    Tables ``g_n / g_{n+d} * rho^-d`` (target 1) and
    ``sum_{i+j=n} g_i g_j / g_n`` (target ``2 g(rho)``) over the lattice
    part of ``window``.
    """
    lat, ns = _lattice_window(g, window)
    if lat.m != 0:
        raise PreconditionError("support must lie in d*N; divide by z^m first")
    d = lat.d
    rep = Report("subexp", metadata={"truncation": g.N, "span": d})
    with mpmath.workdps(ps.WORK_DPS):
        rho = ps.to_mpf(rho)
        gf = [ps._mpq(c) for c in g]
        ratio_rows = []
        for n in ns:
            if n + d <= g.N and gf[n + d]:
                ratio_rows.append((n, float(gf[n] / gf[n + d] * rho ** (-d))))
        conv_rows = []
        for n in ns:
            conv = mpmath.fsum(gf[i] * gf[n - i] for i in range(n + 1) if gf[i] and gf[n - i])
            conv_rows.append((n, float(conv / gf[n])))
        rep.add_table("ratio", ["n", "g_n/g_{n+d}/rho^d"], ratio_rows)
        rep.add_table("convolution", ["n", "conv_n/g_n"], conv_rows)
        if len(ratio_rows) >= 2:
            rep.verdict("ratio_trend_to_1", trend_verdict([abs(v - 1) for _, v in ratio_rows]),
                        rows=["ratio"])
        convs = [v for _, v in conv_rows]
        h = max(len(convs) // 2, 1)
        bounded = len(convs) >= 2 and sum(convs[-h:]) / h <= 1.1 * sum(convs[:h]) / h
        if g_at_rho is not None:
            target = 2 * float(g_at_rho)
            rel = [abs(v - target) / target for v in convs]
            rep.add_scalar("convolution_target", target, error=0)
            rep.add_scalar("final_convolution_relative_error", rel[-1] if rel else math.inf, error=0)
            rep.verdict("convolution_trend_to_target", trend_verdict(rel), rows=["convolution"])
            rep.verdict("subexponential", bounded and rel[-1] < 0.1, rows=["convolution"])
        else:
            rep.verdict("subexponential", bounded, rows=["convolution"])
    return rep


def double_tail_probe(g: Series, ns, k_of=math.isqrt) -> Report:
    """Truncated double tails ``sum_{i,j >= k_n, i+j=n} g_i g_j / g_n``."""
    rep = Report("double_tail", metadata={"truncation": g.N})
    rows = []
    with mpmath.workdps(ps.WORK_DPS):
        for n in ns:
            k = k_of(n)
            s = mpmath.fsum(ps._mpq(g[i]) * ps._mpq(g[n - i]) for i in range(k, n - k + 1))
            rows.append((n, k, float(s / ps._mpq(g[n]))))
    rep.add_table("double_tail", ["n", "k_n", "ratio"], rows)
    vals = [r[2] for r in rows]
    rep.verdict("decreasing", len(vals) >= 2 and all(b < a for a, b in zip(vals, vals[1:])),
                rows=["double_tail"])
    return rep


def stopped_sum_check(f: Series, g: Series, rho, window, g_at_rho=None) -> Report:
    """``[z^n] f(g) / (f'(g(rho)) [z^n] g)`` over ``window``; target 1."""
    if len(f.nonzero_indices()) == 0 or f.nonzero_indices() == [0]:
        raise PreconditionError("f must be nonconstant")
    N = min(f.N, g.N)
    fg = ps.compose(f.truncate(N), g.truncate(N))
    with mpmath.workdps(ps.WORK_DPS):
        if g_at_rho is None:
            g_at_rho, _ = ps.eval_at(g, rho, "geometric-bound", radius=rho)
        y = ps.to_mpf(g_at_rho)
        df = ps.derive(f)
        if len(df.nonzero_indices()) >= 3:
            fprime, ferr = ps.eval_at(df, y, "geometric-bound")
        else:
            fprime, ferr = ps._poly_eval(df, y)
        rep = Report("stopped_sum", metadata={"truncation": N})
        rows = []
        for n in window:
            if n > N or g[n] == 0:
                continue
            rows.append((n, float(ps._mpq(fg[n]) / (fprime * ps._mpq(g[n])))))
        rep.add_scalar("f_prime_at_g_rho", fprime, error=ferr)
        rep.add_table("ratio", ["n", "ratio"], rows)
        errs = [abs(v - 1) for _, v in rows]
        if errs and max(errs) == 0:
            rep.verdict("trend_to_1", True, rows=["ratio"])
        else:
            rep.verdict("trend_to_1", trend_verdict(errs), rows=["ratio"])
    return rep


# --------------------------------------------------------------------------
# largest components and fragments


def _truncate_above(g: Series, m: int) -> Series:
    return Series(c if n <= m else 0 for n, c in enumerate(g))


def largest_component_law(F, G, n: int) -> dict:
    """Exact ``Pr{largest component = m}`` for the Gibbs partition of size ``n``."""
    f = sp.egf(F, n)
    g = sp.egf(G, n)
    W = ps.compose(f, g)[n]
    if W == 0:
        raise PreconditionError(f"no objects of size {n}")
    law = {}
    prev = Fraction(0)
    if n == 0:
        return {0: Fraction(1)}
    for m in range(1, n + 1):
        if g[m] == 0 and m < n:
            continue
        cur = ps.compose(f, _truncate_above(g, m))[n]
        if cur != prev:
            law[m] = (cur - prev) / W
        prev = cur
    return law


def fragment_size_law(F, G, n: int) -> dict:
    """Exact law of the fragment size ``n - (largest component size)``."""
    return {n - m: p for m, p in largest_component_law(F, G, n).items()}


def limit_size_law(L, G, rho, s_max: int, norm=None, truncation: int | None = None):
    """``Pr{|R| = s}`` for ``s <= s_max`` where ``R`` is Boltzmann ``L o G`` at ``rho``."""
    with mpmath.workdps(ps.WORK_DPS):
        rho = ps.to_mpf(rho)
        e = sp.COMPOSE(L, G)
        ser = sp.egf(e, s_max)
        if norm is None:
            norm, _ = sp.value(e, rho, truncation or ps.DEFAULT_TRUNCATION)
        return [ps._mpq(c) * rho**s / norm for s, c in enumerate(ser)], norm


def fragment_size_tv(F, G, n: int, rho, limit_outer=None, limit_norm=None,
                     truncation: int | None = None) -> Report:
    """Exact total variation between ``|R_n|`` and ``|R|``.

    The limit is Boltzmann ``F' o G`` at ``rho`` unless ``limit_outer``
    replaces ``F'``.  This is the size projection, a lower bound on the
    structure-level distance.
    """
    if n < 1:
        raise PreconditionError("fragments need n >= 1")
    L = limit_outer if limit_outer is not None else sp.DERIVE(F)
    p = fragment_size_law(F, G, n)
    with mpmath.workdps(ps.WORK_DPS):
        q, norm = limit_size_law(L, G, rho, n, limit_norm, truncation)
        tv = mpmath.mpf(0)
        for s in range(n):
            tv += abs(ps._mpq(p.get(s, Fraction(0))) - q[s])
        q_in = mpmath.fsum(q[:n])
        tv = (tv + (1 - q_in)) / 2
        rep = Report("fragment_size_tv", metadata={"n": n})
        err = mpmath.mpf(10) ** (-ps.WORK_DPS + 15) * n
        rep.add_scalar("tv", tv, error=err)
        rep.add_scalar("limit_p0", q[0], error=err)
        rep.add_scalar("limit_normaliser", norm, error=err)
        rows = [(s, p.get(s, Fraction(0)), float(q[s])) for s in range(n)]
        rep.add_table("laws", ["s", "finite_n", "limit"], rows)
        rep.note("size projection: a lower bound on the structure-level distance")
    return rep


def _partitions(n: int, largest: int | None = None):
    if n == 0:
        yield ()
        return
    largest = n if largest is None else largest
    for k in range(min(n, largest), 0, -1):
        for rest in _partitions(n - k, k):
            yield (k,) + rest


def fragment_profile_tv(G, n: int, rho, g_at_rho=None) -> Report:
    """Exact TV between the component-size profiles of ``R_n`` and ``R`` for a SET outer.

    Finer than the size projection, so its value bounds the size TV from
    above.
    """
    g = sp.egf(G, n)
    a_n = ps.exp_series(g)[n]
    if a_n == 0:
        raise PreconditionError(f"no objects of size {n}")
    with mpmath.workdps(ps.WORK_DPS):
        rho = ps.to_mpf(rho)
        if g_at_rho is None:
            g_at_rho, _ = sp.value(G, rho)
        lim_norm = mpmath.exp(g_at_rho)
        pfin: dict = {}
        for lam in _partitions(n):
            w = Fraction(1)
            for part in lam:
                w *= g[part]
            if w == 0:
                continue
            for mult in Counter(lam).values():
                w /= math.factorial(mult)
            rest = lam[1:]
            pfin[rest] = pfin.get(rest, Fraction(0)) + w / a_n
        tv = mpmath.mpf(0)
        qsum = mpmath.mpf(0)
        for mu, pv in pfin.items():
            qv = mpmath.mpf(1)
            for part in mu:
                qv *= ps._mpq(g[part]) * rho**part
            for mult in Counter(mu).values():
                qv /= math.factorial(mult)
            qv /= lim_norm
            qsum += qv
            tv += abs(ps._mpq(pv) - qv)
        tv = (tv + (1 - qsum)) / 2
    rep = Report("fragment_profile_tv", metadata={"n": n})
    rep.add_scalar("tv", tv, error=mpmath.mpf(10) ** (-ps.WORK_DPS + 15))
    rep.add_scalar("profiles", len(pfin), exact=True)
    return rep


# --------------------------------------------------------------------------
# moments


def _stirling2_row(k: int) -> list[int]:
    row = [1]
    for i in range(1, k + 1):
        new = [0] * (i + 1)
        for j in range(1, i + 1):
            new[j] = j * (row[j] if j < len(row) else 0) + row[j - 1]
        row = new
    return row


def _moment_series(F, g: Series, k: int) -> Series:
    """``sum_i i^k f_i g^i`` for the outer ``F``."""
    N = g.N
    if isinstance(F, sp.SetSpecies) or (isinstance(F, sp.Restrict) and isinstance(F.child, sp.SetSpecies)):
        a, D = (0, 1) if isinstance(F, sp.SetSpecies) else (F.a, F.D)
        # sum_{i = a mod D} i^k g^i / i! = sum_j S(k, j) g^j E_{a-j}(g)
        S = _stirling2_row(k)
        total = Series.zero(N)
        gp = Series([1], N)
        for j in range(k + 1):
            if j:
                gp = ps.mul(gp, g)
            if S[j]:
                total = ps.add(total, ps.scale(ps.mul(gp, ps.restricted_exp(g, (a - j) % D, D)), S[j]))
        return total
    f = sp.egf(F, N)
    fk = Series(i**k * c for i, c in enumerate(f))
    return ps.compose(fk, g)


def component_moment(F, G, n: int, k: int, rho=None, truncation: int = ps.DEFAULT_TRUNCATION):
    """Exact ``E[c(S_n)^k]`` and, if ``rho`` is given, its limit ``E[(c(R)+1)^k]``."""
    g = sp.egf(G, n)
    den = sp.egf(sp.COMPOSE(F, G), n)[n]
    if den == 0:
        raise PreconditionError(f"no objects of size {n}")
    exact = _moment_series(F, g, k)[n] / den
    if rho is None:
        return exact, None
    with mpmath.workdps(ps.WORK_DPS):
        y, _ = sp.value(G, rho, truncation)
        if k == 0:
            return exact, mpmath.mpf(1)
        f = sp.egf(F, truncation)
        dfk = ps.derive(Series(i**k * c for i, c in enumerate(f)))
        num, _ = (ps.eval_at(dfk, y, "geometric-bound") if len(dfk.nonzero_indices()) >= 3
                  else ps._poly_eval(dfk, y))
        dF, _ = sp.value(sp.DERIVE(F), y, truncation)
        return exact, num / dF


def component_count_mc(F, G, n: int, samples: int, rngs) -> dict:
    """Monte Carlo component counts of ``S_n`` from the exact sampler, merged by stream."""
    from .sampling import exact_sample_small

    e = sp.COMPOSE(F, G)
    counts = []
    streams = list(rngs)
    for i in range(samples):
        s = exact_sample_small(e, n, streams[i % len(streams)], bound=None, render=False)
        counts.append(s.k)
    arr = np.asarray(counts, dtype=float)
    stderr = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else math.nan
    return {"mean": float(arr.mean()), "stderr": stderr,
            "samples": samples, "counts": counts}


# --------------------------------------------------------------------------
# strong ratio property


def strong_ratio_check(phi: Series, tau, window) -> Report:
    """``Pr{S_{n+1} = n-1} / Pr{S_n = n-1}`` for the tilted offspring sum.

    Computed from the fixed-point series via the cycle lemma:
    ``[w^(n-1)] phi^n = n Z_n`` and ``[w^(n-1)] phi^(n+1) = (n+1)/2 [z^(n+1)] Z^2``,
    so the ratio is a rational number divided by ``phi(tau)``.
    """
    ns = list(window)
    rep = Report("strong_ratio", metadata={"truncation": max(ns) + 1 if ns else 0})
    nonconst = [j for j in phi.nonzero_indices() if j > 0]
    if not nonconst:
        rep.note("offspring law is degenerate at 0: S_n = 0 and the ratio is undefined")
        rep.verdict("degenerate", True)
        return rep
    N = max(ns) + 1
    Z = ps.solve_lagrange(Series(phi.coeffs, max(phi.N, N)) if phi.N < N else phi, N,
                          check_branching=False)
    Z2 = ps.mul(Z, Z)
    with mpmath.workdps(ps.WORK_DPS):
        tau = ps.to_mpf(tau)
        if len(phi.nonzero_indices()) >= 3:
            phit, _ = ps.eval_at(phi, tau, "geometric-bound")
        else:
            phit, _ = ps._poly_eval(phi, tau)
        rows = []
        for n in ns:
            if n < 1 or Z[n] == 0:
                continue
            q = Fraction(n + 1, 2) * Z2[n + 1] / (n * Z[n])
            rows.append((n, q, float(ps._mpq(q) / phit)))
    if not rows:
        rep.note("no lattice index in the window carries mass; ratio undefined")
        rep.verdict("degenerate", True)
        return rep
    rep.add_table("ratio", ["n", "rational_part", "ratio"], rows)
    errs = [abs(r[2] - 1) for r in rows]
    rep.add_scalar("final_abs_error", errs[-1], error=0)
    rep.verdict("trend_to_1", trend_verdict(errs), rows=["ratio"])
    rep.verdict("final_within_0.01", errs[-1] < 0.01, rows=["ratio"])
    return rep


# --------------------------------------------------------------------------
# Monte Carlo TV


def _tv_counts(ca: Counter, cb: Counter, ma: int, mb: int) -> float:
    keys = set(ca) | set(cb)
    return 0.5 * sum(abs(ca.get(k, 0) / ma - cb.get(k, 0) / mb) for k in keys)


def tv_monte_carlo(sampler_a, sampler_b, m: int, key, rngs_a, rngs_b, boot_rng=None,
                   bootstrap: int = 200, level: float = 0.95) -> Report:
    """Plug-in TV between two samplers over the projection ``key``.

    ``sampler(rng)`` returns one object; draws cycle through the given
    streams so the result is independent of execution order.  Reports the
    plug-in value, a bootstrap bias correction and a percentile interval.
    """
    if m < 100:
        raise PreconditionError("need at least 100 samples per side for a bootstrap interval")
    ra, rb = list(rngs_a), list(rngs_b)
    xa = [key(sampler_a(ra[i % len(ra)])) for i in range(m)]
    xb = [key(sampler_b(rb[i % len(rb)])) for i in range(m)]
    ca, cb = Counter(xa), Counter(xb)
    plug = _tv_counts(ca, cb, m, m)
    keys = sorted(set(ca) | set(cb), key=repr)
    pa = np.array([ca.get(k, 0) for k in keys], dtype=float) / m
    pb = np.array([cb.get(k, 0) for k in keys], dtype=float) / m
    gen = boot_rng.gen if boot_rng is not None else np.random.default_rng(0)
    boots = []
    for _ in range(bootstrap):
        ba = gen.multinomial(m, pa) / m
        bb = gen.multinomial(m, pb) / m
        boots.append(0.5 * float(np.abs(ba - bb).sum()))
    boots = np.asarray(boots)
    bias = float(boots.mean()) - plug
    corrected = max(0.0, plug - bias)
    lo = max(0.0, 2 * plug - float(np.quantile(boots, 0.5 + level / 2)))
    hi = min(1.0, 2 * plug - float(np.quantile(boots, 0.5 - level / 2)))
    rep = Report("tv_monte_carlo", metadata={"samples": m, "bootstrap": bootstrap})
    rep.add_scalar("tv_plugin", plug, error=float(boots.std()))
    rep.add_scalar("tv_corrected", corrected, error=float(boots.std()))
    rep.add_scalar("ci_low", lo, error=0)
    rep.add_scalar("ci_high", hi, error=0)
    rep.add_table("frequencies", ["key", "a", "b"],
                  [(repr(k), ca.get(k, 0), cb.get(k, 0)) for k in keys])
    return rep
