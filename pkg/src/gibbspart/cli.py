"""Command-line entry point: ``gibbspart {coeffs,sample,diagnose}``.

Outputs are deterministic functions of the arguments: no timestamps, floats
printed with ``repr``, and every file carries the tool version, truncation
order and seed.  Sample ``i`` is drawn from stream ``i mod --streams`` so the
merged output does not depend on ``--threads``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import mpmath

from . import __version__
from . import diagnostics as dg
from . import graphclass as gc
from . import powerseries as ps
from . import sampling as sa
from . import species as sp
from . import structures as st
from .errors import GibbsError, PreconditionError, SpecError
from .rng import RngState

Series = ps.Series
SERIES_OF_CLASS = ("A", "C", "T", "phi", "bprime")


# --------------------------------------------------------------------------
# input


def load_spec(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise SpecError(f"cannot read spec file {path!r}: {exc.strerror}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise SpecError(f"{path}: top level must be a JSON object")
    return obj


def _is_class(spec: dict) -> bool:
    return "blocks" in spec


def _truncation(args, spec: dict) -> int:
    if args.trunc is not None:
        return args.trunc
    return int(spec.get("truncation", ps.DEFAULT_TRUNCATION))


def _meta(args, N: int, **extra) -> dict:
    out = {"tool": "gibbspart", "tool_version": __version__, "truncation": N, "seed": args.seed}
    out.update(extra)
    return out


# --------------------------------------------------------------------------
# output


class Sink:
    """Writes named artifacts into ``--out`` or, without it, to stdout."""

    def __init__(self, outdir: str | None):
        self.outdir = outdir
        if outdir:
            os.makedirs(outdir, exist_ok=True)

    def write(self, name: str, text: str):
        if self.outdir:
            with open(os.path.join(self.outdir, name), "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)


def _header(meta: dict) -> str:
    return "".join(f"# {k}: {meta[k]}\n" for k in sorted(meta))


# --------------------------------------------------------------------------
# coeffs


def _series_from_spec(spec: dict, N: int) -> tuple[Series, str]:
    if _is_class(spec):
        which = spec.get("series", "A")
        if which not in SERIES_OF_CLASS:
            raise SpecError(f'"series" must be one of {", ".join(SERIES_OF_CLASS)}')
        model = gc.build_class(gc.BlockWeights.parse(spec["blocks"]), N)
        return getattr(model, which), f"class:{which}"
    if "series" in spec:
        ser = Series.from_json(spec["series"])
        return ser.truncate(min(N, ser.N)), "series"
    e = sp.from_json(spec.get("species", spec))
    return sp.egf(e, N), "species"



def cmd_coeffs(args) -> int:
    spec = load_spec(args.spec)
    N = _truncation(args, spec)
    ser, what = _series_from_spec(spec, N)
    meta = _meta(args, ser.N, source=what)
    sink = Sink(args.out)
    if args.format == "json":
        body = {"meta": meta, "series": ser.to_json(),
                "float": [float(c) for c in ser.coeffs]}
        sink.write("coeffs.json", json.dumps(body, sort_keys=True, indent=2) + "\n")
    else:
        lines = [_header(meta), "n,exact,float\n"]
        lines += [f"{n},{c},{float(c)!r}\n" for n, c in enumerate(ser.coeffs)]
        sink.write("coeffs.csv", "".join(lines))
    return 0


# --------------------------------------------------------------------------
# sample


def _default_y(e, y_arg):
    if y_arg is not None and y_arg != "rho":
        try:
            return mpmath.mpf(Fraction(y_arg).numerator) / Fraction(y_arg).denominator
        except (ValueError, ZeroDivisionError) as exc:
            raise SpecError(f"cannot parse --y {y_arg!r}") from exc
    named = _find_named(e)
    if named is None:
        raise PreconditionError("--y is required unless the species contains a named graph class")
    return sp.resolve_named(named.id).radius()


def _find_named(e):
    if isinstance(e, sp.Named):
        return e
    for attr in ("inner", "child", "outer"):
        sub = getattr(e, attr, None)
        if sub is not None:
            hit = _find_named(sub)
            if hit is not None:
                return hit
    return None


def _record(i: int, stream: int, s, with_structure: bool, extra=None) -> dict:
    rec = {"i": i, "stream": stream, "size": st.size_of(s)}
    if isinstance(s, st.Composite):
        rec["components"] = s.k
        rec["component_sizes"] = sorted(s.component_sizes(), reverse=True)
    if extra:
        rec.update(extra)
    if with_structure:
        rec["structure"] = st.to_json(s)
    return rec


def cmd_sample(args) -> int:
    spec = load_spec(args.spec)
    N = _truncation(args, spec)
    render = not args.no_render
    if _is_class(spec):
        model = gc.model_for(gc.BlockWeights.parse(spec["blocks"]), N)
        e = None
        mode = "graph"
    else:
        e = sp.from_json(spec.get("species", spec))
        mode = args.mode
    if mode in ("conditioned", "exact", "fragment") and args.n is None:
        raise PreconditionError(f"--n is required for mode {mode!r}")
    if args.n is not None and args.n < 1 and mode != "boltzmann":
        raise PreconditionError("--n must be at least 1")
    y = None if mode in ("exact", "fragment", "graph") else _default_y(e, args.y)
    streams = max(1, args.streams)
    rngs = [RngState(args.seed, s) for s in range(streams)]
    indices = {s: list(range(s, args.samples, streams)) for s in range(streams)}

    def one(i, rng):
        if mode == "graph":
            a = args.residue if args.residue is not None else 1
            s = gc.boltzmann_graph_sample(model, a, rng, render=render)
            return _record(i, rng.stream, s, render, {"residue": a})
        if mode == "boltzmann":
            return _record(i, rng.stream, sa.boltzmann_sample(e, y, rng, render, N), render)
        if mode == "conditioned":
            s, att = sa.conditioned_sample(e, args.n, y, rng, args.max_attempts, render, N)
            return _record(i, rng.stream, s, render, {"attempts": att})
        if mode == "exact":
            return _record(i, rng.stream, sa.exact_sample_small(e, args.n, rng, None, render), render)
        if mode == "fragment":
            s = sa.exact_sample_small(e, args.n, rng, None, render)
            rest, removed = sa.fragment(s, rng)
            return _record(i, rng.stream, rest, render, {"removed_size": removed})
        if mode == "limit":
            if not isinstance(e, sp.Compose):
                raise PreconditionError("limit mode needs a composition spec")
            D = args.D
            s = sa.limit_fragment_sample(e.outer, e.inner, y, rng, args.residue, D, render, N)
            return _record(i, rng.stream, s, render)
        raise SpecError(f"unknown sample mode {mode!r}")

    def run_stream(s):
        return [one(i, rngs[s]) for i in indices[s]]

    if args.threads > 1 and streams > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            parts = list(pool.map(run_stream, range(streams)))
    else:
        parts = [run_stream(s) for s in range(streams)]
    records = sorted((r for part in parts for r in part), key=lambda r: r["i"])
    meta = _meta(args, N, mode=mode, samples=args.samples, streams=streams,
                 y=None if y is None else mpmath.nstr(y, 17))
    lines = [json.dumps({"meta": meta}, sort_keys=True) + "\n"]
    lines += [json.dumps(r, sort_keys=True) + "\n" for r in records]
    Sink(args.out).write("samples.jsonl", "".join(lines))
    return 0


# --------------------------------------------------------------------------
# diagnose


def _class_suite(model, suites, args) -> list:
    N = model.N
    d = model.d
    reports = []
    G = sp.NAMED(f"connected:{model.blocks.key}")
    if "smoothness" in suites:
        reports.append(gc.smoothness_verdict(model))
    if "asymptotic" in suites:
        reports.append(gc.asymptotic_check(model, range(max(2, N // 8), N - 2 * d)))
    if "subexp" in suites:
        cprime = model.T.shift_down(1)
        win = range(max(2, N // 8), N - d)
        with mpmath.workdps(ps.WORK_DPS):
            target = model.tau / model.rho
        rep = dg.subexp_check(cprime, model.rho, win, g_at_rho=target)
        rep.name = "subexp_cprime"
        reports.append(rep)
        nn = [n for n in (50, 100, 200, 400) if n <= cprime.N and n % d == 0]
        if len(nn) >= 2:
            reports.append(dg.double_tail_probe(cprime, nn))
    if "stopped" in suites:
        win = range(max(2, N // 8), N + 1)
        reports.append(dg.stopped_sum_check(Series.exponential(N), model.C, model.rho, win,
                                            g_at_rho=model.C_rho))
    if "strong-ratio" in suites:
        top = min(N - 1, 200)
        reports.append(dg.strong_ratio_check(model.phi, model.tau, range(10, top + 1)))
    if "frag" in suites:
        n_list = [n for n in ([20, 40, 80] if d == 1 else [20, 21, 40, 41, 80, 81]) if n <= N]
        reports.append(gc.frag_experiment(model, n_list))
    if "moment" in suites:
        n = min(N, 200)
        while model.A[n] == 0:
            n -= 1
        exact, limit = dg.component_moment(sp.SET, G, n, 1, rho=model.rho, truncation=N)
        rep = dg.Report("component_moment", metadata={"n": n, "k": 1})
        rep.add_scalar("exact", exact, exact=True)
        rep.add_scalar("limit", limit, error=mpmath.mpf(10) ** -30)
        rep.verdict("within_0.02", abs(float(exact) - float(limit)) < 0.02, rows=["exact", "limit"])
        reports.append(rep)
    return reports


def cmd_diagnose(args) -> int:
    spec = load_spec(args.spec)
    N = _truncation(args, spec)
    suites = set(args.suite.split(",")) if args.suite else {"all"}
    known = {"smoothness", "asymptotic", "subexp", "stopped", "strong-ratio", "frag", "moment"}
    if "all" in suites:
        suites = set(known)
    unknown = suites - known
    if unknown:
        raise SpecError(f"unknown suite(s): {', '.join(sorted(unknown))}")
    if _is_class(spec):
        model = gc.build_class(gc.BlockWeights.parse(spec["blocks"]), N)
        reports = _class_suite(model, suites, args)
        meta = _meta(args, N, blocks=model.blocks.key)
    elif "series" in spec:
        ser = Series.from_json(spec["series"])
        if "rho" not in spec:
            raise SpecError('a series diagnosis needs "rho"')
        rho = ps._mpq(ps.as_fraction(spec["rho"]))
        ser = ser.truncate(min(ser.N, N))
        win = range(max(1, ser.N // 4), ser.N - ps.support_span(ser).d + 1)
        g_at = spec.get("g_at_rho")
        reports = [dg.subexp_check(ser, rho, win, g_at_rho=None if g_at is None else float(ps.as_fraction(g_at)))]
        meta = _meta(args, ser.N, source="series")
    else:
        raise SpecError('diagnose needs a class spec ("blocks") or a series spec ("series")')
    summary = {"meta": meta, "reports": {}}
    sink = Sink(args.out)
    for rep in reports:
        rep.metadata.update({"truncation": meta["truncation"], "seed": args.seed})
        summary["reports"][rep.name] = rep.to_dict()
        if args.format == "csv" and args.out:
            for key in sorted(rep.tables):
                sink.write(f"{rep.name}__{key}.csv", rep.table_csv(key))
    summary["verdicts"] = {f"{r.name}.{k}": ("pass" if v["pass"] else "fail")
                           for r in reports for k, v in sorted(r.verdicts.items())}
    text = json.dumps(summary, sort_keys=True, indent=2, default=str) + "\n"
    sink.write("report.json", text)
    return 0


# --------------------------------------------------------------------------
# main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gibbspart", description="Gibbs partition series, samplers and diagnostics.")
    p.add_argument("--version", action="version", version=f"gibbspart {__version__}")

    def common(sp_):
        sp_.add_argument("--spec", required=True, help="JSON species, class or series spec")
        sp_.add_argument("--trunc", type=int, default=None, help="truncation order N")
        sp_.add_argument("--seed", type=int, default=0, help="master seed")
        sp_.add_argument("--out", default=None, help="output directory (stdout if omitted)")
        sp_.add_argument("--format", choices=("csv", "json"), default="csv")
        sp_.add_argument("--threads", type=int, default=1)
        sp_.add_argument("--streams", type=int, default=1)

    sub = p.add_subparsers(dest="command", required=True)
    c = sub.add_parser("coeffs", help="dump exact coefficients")
    common(c)
    c.set_defaults(func=cmd_coeffs)
    s = sub.add_parser("sample", help="draw samples as JSON lines")
    common(s)
    s.add_argument("--samples", type=int, default=1)
    s.add_argument("--mode", choices=("boltzmann", "conditioned", "exact", "fragment", "limit"),
                   default="boltzmann")
    s.add_argument("--n", type=int, default=None, help="target size")
    s.add_argument("--y", default=None, help='Boltzmann parameter (rational or "rho")')
    s.add_argument("--residue", type=int, default=None)
    s.add_argument("--D", type=int, default=None, help="modulus of the residue restriction")
    s.add_argument("--max-attempts", type=int, default=sa.DEFAULT_MAX_ATTEMPTS)
    s.add_argument("--no-render", action="store_true", help="sizes only, no explicit structures")
    s.set_defaults(func=cmd_sample)
    d = sub.add_parser("diagnose", help="run diagnostic suites")
    common(d)
    d.add_argument("--samples", type=int, default=0)
    d.add_argument("--suite", default=None,
                   help="comma list of smoothness,asymptotic,subexp,stopped,strong-ratio,frag,moment")
    d.set_defaults(func=cmd_diagnose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except GibbsError as exc:
        sys.stderr.write(f"gibbspart: error: {exc}\n")
        rate = getattr(exc, "acceptance_rate", None)
        if rate is not None:
            sys.stderr.write(f"gibbspart: attempts={exc.attempts} acceptance_rate={rate}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
