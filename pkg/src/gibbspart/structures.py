"""Labelled structures produced by the samplers and enumerators.

Labels are ``1..size``.  Every structure is immutable and normalised, so two
equal labelled objects compare equal.  ``relabel`` applies a bijection of
``[size]``; ``type_key`` is an isomorphism invariant that is exact (a
canonical form) for sizes up to ``EXACT_TYPE_LIMIT``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .errors import PreconditionError, SpecError

EXACT_TYPE_LIMIT = 8


@dataclass(frozen=True)
class SetObj:
    """The unique SET-object on ``[size]``; ``star`` marks a derived object."""

    size: int
    star: bool = False


@dataclass(frozen=True)
class AtomObj:
    """The unique object of a weighted atom species on ``[size]``."""

    size: int
    name: str = "atom"


@dataclass(frozen=True)
class Graph:
    """Simple graph on ``[n]``; ``root`` is 0 for unrooted graphs."""

    n: int
    edges: tuple
    root: int = 0

    @property
    def size(self) -> int:
        return self.n

    @staticmethod
    def make(n: int, edges, root: int = 0) -> "Graph":
        es = sorted({(min(u, v), max(u, v)) for u, v in edges})
        return Graph(n, tuple(es), root)


@dataclass(frozen=True)
class Tree:
    """Plane tree given by depth-first outdegrees, with optional labels."""

    outdegrees: tuple
    labels: tuple = ()

    @property
    def size(self) -> int:
        return len(self.outdegrees)


@dataclass(frozen=True)
class Forest:
    trees: tuple

    @property
    def size(self) -> int:
        return sum(t.size for t in self.trees)


@dataclass(frozen=True)
class Derived:
    """A derived object: ``base`` lives on ``[size + 1]`` with the star at ``size + 1``."""

    base: object

    @property
    def size(self) -> int:
        return size_of(self.base) - 1


@dataclass(frozen=True)
class Composite:
    """An outer object on ``[k]`` whose slot ``i`` is replaced by ``components[i-1]``.

    ``blocks[i]`` is the sorted label set of slot ``i + 1``; component ``i``
    lives on ``[len(blocks[i])]`` and its label ``j`` stands for
    ``blocks[i][j - 1]``.  Slots are ordered by smallest label.
    """

    outer: object
    blocks: tuple
    components: tuple

    @property
    def size(self) -> int:
        return sum(len(b) for b in self.blocks)

    @property
    def k(self) -> int:
        return len(self.blocks)

    def component_sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]


def size_of(s) -> int:
    return s.size


def is_valid_outdegree_sequence(outdeg: Sequence[int]) -> bool:
    """Depth-first outdegrees of a plane tree: sum ``n-1``, no early exhaustion."""
    need = 1
    for i, d in enumerate(outdeg):
        need += d - 1
        if need <= 0 and i < len(outdeg) - 1:
            return False
    return need == 0


# --------------------------------------------------------------------------
# construction and relabelling


def make_composite(outer, blocks: Sequence[Sequence[int]], components: Sequence) -> Composite:
    """Build a normalised composite; ``blocks[i]`` feeds slot ``i + 1`` of ``outer``."""
    k = len(blocks)
    if k != len(components):
        raise PreconditionError("one component per block")
    order = sorted(range(k), key=lambda i: min(blocks[i]))
    # slot order[j] becomes slot j + 1
    new_of_old = {order[j] + 1: j + 1 for j in range(k)}
    outer_n = relabel(outer, new_of_old) if k else outer
    bl = []
    comps = []
    for i in order:
        raw = list(blocks[i])
        srt = sorted(raw)
        if raw != srt:
            pos = {lab: j + 1 for j, lab in enumerate(srt)}
            comps.append(relabel(components[i], {j + 1: pos[lab] for j, lab in enumerate(raw)}))
        else:
            comps.append(components[i])
        bl.append(tuple(srt))
    return Composite(outer_n, tuple(bl), tuple(comps))


def relabel(s, sigma):
    """Apply the bijection ``sigma`` (dict or 1-based list/tuple) to ``s``."""
    if not isinstance(sigma, dict):
        sigma = {i + 1: v for i, v in enumerate(sigma)}
    if isinstance(s, (SetObj, AtomObj)):
        return s
    if isinstance(s, Graph):
        return Graph.make(s.n, [(sigma[u], sigma[v]) for u, v in s.edges],
                          sigma[s.root] if s.root else 0)
    if isinstance(s, Tree):
        if not s.labels:
            return s
        return Tree(s.outdegrees, tuple(sigma[x] for x in s.labels))
    if isinstance(s, Forest):
        return Forest(tuple(relabel(t, sigma) for t in s.trees))
    if isinstance(s, Derived):
        n = s.size
        f = dict(sigma)
        f[n + 1] = n + 1
        return Derived(relabel(s.base, f))
    if isinstance(s, Composite):
        return make_composite(s.outer, [[sigma[x] for x in b] for b in s.blocks], s.components)
    raise TypeError(f"cannot relabel {type(s).__name__}")


# --------------------------------------------------------------------------
# keys


def labelled_key(s):
    """Hashable, totally ordered key of a labelled structure."""
    if isinstance(s, SetObj):
        return ("set", s.size, int(s.star))
    if isinstance(s, AtomObj):
        return ("atom", s.size, s.name)
    if isinstance(s, Graph):
        return ("graph", s.n, s.edges, s.root)
    if isinstance(s, Tree):
        return ("tree", s.outdegrees, s.labels)
    if isinstance(s, Forest):
        return ("forest", tuple(labelled_key(t) for t in s.trees))
    if isinstance(s, Derived):
        return ("derived", labelled_key(s.base))
    if isinstance(s, Composite):
        return ("comp", labelled_key(s.outer), s.blocks, tuple(labelled_key(c) for c in s.components))
    raise TypeError(f"no key for {type(s).__name__}")


def type_key(s):
    """Isomorphism-class key.

    Exact canonical form (minimum labelled key over all relabellings) up to
    ``EXACT_TYPE_LIMIT`` labels; beyond that a coarser invariant is used.
    """
    n = size_of(s)
    if isinstance(s, (SetObj, AtomObj)):
        return labelled_key(s)
    if isinstance(s, Composite) and _symmetric_outer(s.outer):
        return ("comp", labelled_key(s.outer), tuple(sorted(type_key(c) for c in s.components)))
    if n <= EXACT_TYPE_LIMIT:
        return _canonical_key(s)
    return _coarse_key(s)


@lru_cache(maxsize=1 << 16)
def _canonical_key(s):
    # n! relabellings; memoised because callers revisit the same orbit
    n = size_of(s)
    return min(labelled_key(relabel(s, p)) for p in itertools.permutations(range(1, n + 1)))


def _symmetric_outer(outer) -> bool:
    if isinstance(outer, (SetObj, AtomObj)):
        return True
    return isinstance(outer, Derived) and isinstance(outer.base, (SetObj, AtomObj))


def _coarse_key(s):
    if isinstance(s, Graph):
        deg = [0] * (s.n + 2)
        for u, v in s.edges:
            deg[u] += 1
            deg[v] += 1
        return ("graph~", s.n, len(s.edges), tuple(sorted(deg[1: s.n + 1])), int(bool(s.root)))
    if isinstance(s, Composite):
        return ("comp~", _coarse_key(s.outer) if not isinstance(s.outer, (SetObj, AtomObj)) else labelled_key(s.outer),
                tuple(sorted(type_key(c) for c in s.components)))
    if isinstance(s, Derived):
        return ("derived~", _coarse_key(s.base))
    if isinstance(s, Tree):
        return ("tree~", s.outdegrees)
    return labelled_key(s)


def component_count(s) -> int:
    if isinstance(s, Composite):
        return s.k
    raise TypeError("component count needs a composite structure")


# --------------------------------------------------------------------------
# JSON


def to_json(s):
    if isinstance(s, SetObj):
        return {"type": "set", "size": s.size, "star": s.star}
    if isinstance(s, AtomObj):
        return {"type": "atom", "size": s.size, "name": s.name}
    if isinstance(s, Graph):
        out = {"type": "graph", "n": s.n, "edges": [list(e) for e in s.edges]}
        if s.root:
            out["root"] = s.root
        return out
    if isinstance(s, Tree):
        out = {"type": "tree", "outdegrees": list(s.outdegrees)}
        if s.labels:
            out["labels"] = list(s.labels)
        return out
    if isinstance(s, Forest):
        return {"type": "forest", "trees": [to_json(t) for t in s.trees]}
    if isinstance(s, Derived):
        return {"type": "derived", "base": to_json(s.base)}
    if isinstance(s, Composite):
        return {"type": "composite", "size": s.size, "outer": to_json(s.outer),
                "blocks": [list(b) for b in s.blocks],
                "components": [to_json(c) for c in s.components]}
    raise TypeError(f"cannot serialise {type(s).__name__}")


def from_json(obj):
    if not isinstance(obj, dict) or "type" not in obj:
        raise SpecError('a structure must be an object with a "type" field')
    t = obj["type"]
    if t == "set":
        return SetObj(obj["size"], obj.get("star", False))
    if t == "atom":
        return AtomObj(obj["size"], obj.get("name", "atom"))
    if t == "graph":
        return Graph.make(obj["n"], [tuple(e) for e in obj["edges"]], obj.get("root", 0))
    if t == "tree":
        return Tree(tuple(obj["outdegrees"]), tuple(obj.get("labels", ())))
    if t == "forest":
        return Forest(tuple(from_json(x) for x in obj["trees"]))
    if t == "derived":
        return Derived(from_json(obj["base"]))
    if t == "composite":
        return Composite(from_json(obj["outer"]), tuple(tuple(b) for b in obj["blocks"]),
                         tuple(from_json(c) for c in obj["components"]))
    raise SpecError(f"unknown structure type {t!r}")
