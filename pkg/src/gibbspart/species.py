"""Weighted species as immutable combinator trees, compiled to EGFs.

Node kinds: weighted atoms (one object per label set, weight given by a
series), SET, residue-restricted wrappers, derivatives, compositions and
named classes.  Derivatives of SET and of residue-restricted SET are
normalised on construction, since ``SET' = SET`` and
``SET_{a mod D}' = SET_{a-1 mod D}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import mpmath

from . import powerseries as ps
from .errors import PreconditionError, SpecError
from .powerseries import Series


class SpeciesExpr:
    kind = "?"

    def to_json(self):
        raise NotImplementedError

    def __str__(self):
        return json.dumps(self.to_json(), sort_keys=True)


@dataclass(frozen=True)
class Atom(SpeciesExpr):
    """Weighted atom species: one object on each label set of size ``n``.

    ``weights`` is the EGF itself, so the object of size ``n`` has weight
    ``n! * weights[n]``.  With ``finite=True`` coefficients beyond the
    truncation are zero; otherwise they are unknown.
    """

    weights: Series
    finite: bool = True
    name: str = "atom"
    kind = "atom"

    def to_json(self):
        out = {"kind": "atom", "weights": self.weights.to_json()}
        if not self.finite:
            out["finite"] = False
        if self.name != "atom":
            out["name"] = self.name
        return out


@dataclass(frozen=True)
class SetSpecies(SpeciesExpr):
    kind = "set"

    def to_json(self):
        return {"kind": "set"}


@dataclass(frozen=True)
class Restrict(SpeciesExpr):
    """Objects of ``child`` whose size is congruent to ``a`` mod ``D``."""

    child: SpeciesExpr
    a: int
    D: int
    kind = "restrict"

    def to_json(self):
        if isinstance(self.child, SetSpecies):
            return {"kind": "set_restricted", "a": self.a, "D": self.D}
        return {"kind": "restrict", "a": self.a, "D": self.D, "child": self.child.to_json()}


@dataclass(frozen=True)
class Derive(SpeciesExpr):
    child: SpeciesExpr
    kind = "derive"

    def to_json(self):
        return {"kind": "derive", "child": self.child.to_json()}


@dataclass(frozen=True)
class Compose(SpeciesExpr):
    outer: SpeciesExpr
    inner: SpeciesExpr
    kind = "compose"

    def to_json(self):
        return {"kind": "compose", "outer": self.outer.to_json(), "inner": self.inner.to_json()}


@dataclass(frozen=True)
class Named(SpeciesExpr):
    id: str
    kind = "named"

    def to_json(self):
        return {"kind": "named", "id": self.id}


# --------------------------------------------------------------------------
# constructors

SET = SetSpecies()


def ATOM(weights, finite: bool = True, name: str = "atom") -> Atom:
    if not isinstance(weights, Series):
        weights = Series(weights)
    if not weights.is_nonnegative():
        raise PreconditionError("atom weights must be nonnegative")
    return Atom(weights, finite, name)


def restrict_size(e: SpeciesExpr, a: int, D: int) -> SpeciesExpr:
    """Objects of ``e`` with size in ``a + D Z``; ``a`` is read modulo ``D``."""
    if D < 1:
        raise PreconditionError("modulus D must be >= 1")
    a %= D
    if D == 1:
        return e
    if isinstance(e, Restrict) and e.D == D:
        # nested restrictions to the same modulus are either idempotent or empty
        if e.a != a:
            return Restrict(e, a, D)
        return e
    return Restrict(e, a, D)


def SET_RESTRICTED(a: int, D: int) -> SpeciesExpr:
    if D < 1 or not 0 <= a < D:
        raise PreconditionError("need 0 <= a < D and D >= 1")
    return restrict_size(SET, a, D)


def DERIVE(e: SpeciesExpr) -> SpeciesExpr:
    if isinstance(e, SetSpecies):
        return SET
    if isinstance(e, Restrict) and isinstance(e.child, SetSpecies):
        return SET_RESTRICTED((e.a - 1) % e.D, e.D)
    return Derive(e)


def COMPOSE(outer: SpeciesExpr, inner: SpeciesExpr) -> Compose:
    return Compose(outer, inner)


def NAMED(id: str) -> Named:
    resolve_named(id)
    return Named(id)


# --------------------------------------------------------------------------
# JSON


def from_json(obj) -> SpeciesExpr:
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SpecError(f"malformed species JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecError('a species spec must be an object with a "kind" field')
    k = obj["kind"]
    try:
        if k == "set":
            return SET
        if k == "set_restricted":
            return SET_RESTRICTED(int(obj["a"]), int(obj["D"]))
        if k == "restrict":
            return restrict_size(from_json(obj["child"]), int(obj["a"]), int(obj["D"]))
        if k == "derive":
            return DERIVE(from_json(obj["child"]))
        if k == "compose":
            return COMPOSE(from_json(obj["outer"]), from_json(obj["inner"]))
        if k == "atom":
            w = obj["weights"]
            ser = Series.from_json(w) if isinstance(w, dict) else Series(w)
            return ATOM(ser, bool(obj.get("finite", True)), obj.get("name", "atom"))
        if k == "named":
            return NAMED(str(obj["id"]))
    except KeyError as exc:
        raise SpecError(f"species of kind {k!r} is missing field {exc}") from exc
    raise SpecError(f"unknown species kind {k!r}")


# --------------------------------------------------------------------------
# named classes


@dataclass(frozen=True)
class NamedInfo:
    """Resolved named class: connected or rooted graphs of a block class, or a bare ``B'``."""

    id: str
    blocks: object  # graphclass.BlockWeights
    shape: str  # "connected" | "rooted" | "bprime"

    def model(self, N: int):
        from .graphclass import model_for

        return model_for(self.blocks, max(N, 2))

    def series(self, N: int) -> Series:
        if self.shape == "bprime":
            return self.blocks.bprime(N)
        mdl = self.model(N)
        return (mdl.C if self.shape == "connected" else mdl.T).truncate(N)

    def radius(self):
        if self.shape == "bprime":
            return mpmath.inf
        return _class_radius(self.blocks)

    def value(self, x):
        from .graphclass import connected_value, tree_value, _bprime_mp

        if self.shape == "bprime":
            with mpmath.workdps(ps.WORK_DPS):
                return _bprime_mp(self.blocks, ps.to_mpf(x))
        if self.shape == "connected":
            return connected_value(self.blocks, x)
        return tree_value(self.blocks, x)


@lru_cache(maxsize=64)
def _class_radius(blocks):
    from .graphclass import tilt_point, _bprime_mp

    with mpmath.workdps(ps.WORK_DPS):
        tau = tilt_point(blocks)
        return tau * mpmath.exp(-_bprime_mp(blocks, tau))


_ALIASES = {
    "cayley_tree": "connected:edge",
    "tree": "connected:edge",
    "rooted_tree": "rooted:edge",
    "triangle_cactus": "connected:triangle",
    "rooted_triangle_cactus": "rooted:triangle",
}


def resolve_named(id: str) -> NamedInfo:
    from .graphclass import BlockWeights

    key = _ALIASES.get(id, id)
    try:
        if key.startswith("connected:"):
            return NamedInfo(id, BlockWeights.parse(_block_spec(key[len("connected:"):])), "connected")
        if key.startswith("rooted:"):
            return NamedInfo(id, BlockWeights.parse(_block_spec(key[len("rooted:"):])), "rooted")
        return NamedInfo(id, BlockWeights.parse(_block_spec(key)), "bprime")
    except SpecError as exc:
        raise SpecError(f"unknown named class {id!r}") from exc


def _block_spec(s: str):
    if s.startswith("blocks:"):
        counts = {}
        for part in s[len("blocks:"):].split(","):
            size, wt = part.split("=")
            counts[size] = wt
        return {"block_counts": counts}
    return s


# --------------------------------------------------------------------------
# compilation


def egf(e: SpeciesExpr, N: int = ps.DEFAULT_TRUNCATION) -> Series:
    """Exact EGF of ``e`` to order ``N``."""
    if N < 0:
        raise PreconditionError("truncation order must be >= 0")
    if isinstance(e, SetSpecies):
        return Series.exponential(N)
    if isinstance(e, Atom):
        w = e.weights
        if w.N >= N:
            return w.truncate(N)
        if e.finite:
            return Series(w.coeffs, N)
        raise PreconditionError(f"atom weights known to order {w.N}, need {N}")
    if isinstance(e, Restrict):
        return egf(e.child, N).restrict_residue(e.a, e.D)
    if isinstance(e, Derive):
        return ps.derive(egf(e.child, N + 1))
    if isinstance(e, Compose):
        g = egf(e.inner, N)
        if g[0] != 0:
            raise PreconditionError("composition needs an inner species without size-0 objects")
        return ps.compose(egf(e.outer, N), g)
    if isinstance(e, Named):
        return resolve_named(e.id).series(N)
    raise SpecError(f"not a species expression: {e!r}")


def min_size(e: SpeciesExpr, N: int = 64):
    return egf(e, N).valuation()


def value(e: SpeciesExpr, y, N: int = ps.DEFAULT_TRUNCATION):
    """``(F(y), error_bound)`` using closed forms where available."""
    with mpmath.workdps(ps.WORK_DPS):
        y = ps.to_mpf(y)
        if y < 0:
            raise PreconditionError("Boltzmann parameter must be nonnegative")
        if isinstance(e, SetSpecies):
            return mpmath.exp(y), mpmath.mpf(0)
        if isinstance(e, Restrict) and isinstance(e.child, SetSpecies):
            return _restricted_exp_value(y, e.a, e.D), mpmath.mpf(0)
        if isinstance(e, Derive):
            v = _derived_value(e.child, y, N)
            if v is not None:
                return v
        if isinstance(e, Named):
            info = resolve_named(e.id)
            if info.shape != "bprime" and y > info.radius() * (1 + mpmath.mpf(10) ** -30):
                raise PreconditionError("Boltzmann parameter beyond the radius of convergence")
            return info.value(y), mpmath.mpf(10) ** (-ps.WORK_DPS + 10)
        if isinstance(e, Atom) and e.finite and e.weights.N <= N:
            return ps._poly_eval(e.weights, y)
        if isinstance(e, Compose):
            gy, gerr = value(e.inner, y, N)
            fy, ferr = value(e.outer, gy, N)
            return fy, ferr + gerr * _lipschitz(e.outer, gy, gerr, N)
        s = egf(e, N)
        if s.nonzero_indices() and max(s.nonzero_indices()) <= 2:
            return ps._poly_eval(s, y)
        return ps.eval_at(s, y, "geometric-bound")


def _lipschitz(outer, at, err, N):
    # bound on F' over [at - err, at + err] via the derived species at the upper end
    try:
        v, _ = value(DERIVE(outer), at + err, N)
        return v
    except PreconditionError:
        return mpmath.inf


def _derived_value(child, y, N):
    if isinstance(child, Named):
        info = resolve_named(child.id)
        if info.shape == "connected":
            # C'(y) = T(y) / y
            from .graphclass import tree_value

            if y == 0:
                return mpmath.mpf(1), mpmath.mpf(0)
            return tree_value(info.blocks, y) / y, mpmath.mpf(10) ** (-ps.WORK_DPS + 10)
    return None


def _restricted_exp_value(y, a: int, D: int):
    with mpmath.workdps(ps.WORK_DPS):
        if D == 1:
            return mpmath.exp(y)
        zs = [mpmath.exp(2j * mpmath.pi * j / D) for j in range(D)]
        return mpmath.re(mpmath.fsum(z ** (-a) * mpmath.exp(z * y) for z in zs) / D)


@dataclass(frozen=True)
class SizeLaw:
    """Boltzmann size law: ``probs[n]`` for ``n <= N`` and the remaining ``tail`` mass."""

    probs: tuple
    tail: object
    error: object
    normaliser: object

    @property
    def N(self) -> int:
        return len(self.probs) - 1

    def mean(self):
        return mpmath.fsum(n * p for n, p in enumerate(self.probs))


def size_law(e: SpeciesExpr, y, N: int = ps.DEFAULT_TRUNCATION) -> SizeLaw:
    """``Pr{size = n} = [z^n]F * y^n / F(y)`` for ``n <= N`` plus tail mass."""
    with mpmath.workdps(ps.WORK_DPS):
        y = ps.to_mpf(y)
        if y <= 0:
            raise PreconditionError("Boltzmann parameter must be positive")
        F, err = value(e, y, N)
        if not (F > 0 and mpmath.isfinite(F)):
            raise PreconditionError("normalisation is not finite and positive")
        s = egf(e, N)
        probs = tuple(ps._mpq(c) * y**n / F for n, c in enumerate(s))
        total = mpmath.fsum(probs)
        tail = max(mpmath.mpf(0), 1 - total)
        rel = err / F
        return SizeLaw(probs, tail, rel * (1 + total), F)
