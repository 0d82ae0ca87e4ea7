"""Exact truncated power series.

Coefficients are :class:`fractions.Fraction` end to end.  The heavy kernels
(Cauchy products, exponentials, compositions, the tree fixed point) run on
plain integers after rescaling by ``n!`` and a common denominator, which is
the natural normalisation for exponential generating functions:

    coeffs[n] == ints[n] / (den * n!)

Real-valued quantities (radii, tilt points, evaluations) are mpmath numbers
carrying an explicit error bound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Iterable, Sequence

import mpmath

from .errors import PreconditionError, SpecError

DEFAULT_TRUNCATION = 256
WORK_DPS = 50


def as_fraction(x) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to an exact Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise SpecError(f"not a rational number: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise SpecError(f"not a rational number: {x!r}") from exc
    if isinstance(x, float):
        return Fraction(x)
    raise SpecError(f"not a rational number: {x!r}")


# --------------------------------------------------------------------------
# cached integer tables

_FACT = [1]
_BINOM: list[list[int]] = [[1]]


def factorial(n: int) -> int:
    while len(_FACT) <= n:
        _FACT.append(_FACT[-1] * len(_FACT))
    return _FACT[n]


def binomial_row(n: int) -> list[int]:
    while len(_BINOM) <= n:
        prev = _BINOM[-1]
        _BINOM.append([1] + [prev[i - 1] + prev[i] for i in range(1, len(prev))] + [1])
    return _BINOM[n]


def _lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def _scaled(coeffs: Sequence[Fraction]) -> tuple[list[int], int]:
    """Return ``(ints, den)`` with ``coeffs[n] == ints[n] / (den * n!)``."""
    vals = [c * factorial(n) for n, c in enumerate(coeffs)]
    den = reduce(_lcm, (v.denominator for v in vals if v), 1)
    return [v.numerator * (den // v.denominator) for v in vals], den


def _nonzero(ints: Sequence[int]) -> list[int]:
    return [i for i, v in enumerate(ints) if v]


# --------------------------------------------------------------------------
# domain types


class Series:
    """Immutable truncated power series ``sum_{n<=N} c_n z^n`` over Q.

    Coefficients beyond the truncation order are *unknown*, not zero;
    indexing past ``N`` raises :class:`IndexError`.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Iterable = (), truncation: int | None = None):
        c = [as_fraction(x) for x in coeffs]
        if truncation is not None:
            if truncation < 0:
                raise PreconditionError("truncation order must be >= 0")
            if len(c) > truncation + 1:
                c = c[: truncation + 1]
            else:
                c.extend([Fraction(0)] * (truncation + 1 - len(c)))
        if not c:
            raise PreconditionError("a series needs at least one coefficient")
        self._c = tuple(c)

    # construction helpers
    @classmethod
    def zero(cls, N: int = DEFAULT_TRUNCATION) -> "Series":
        return cls([], N)

    @classmethod
    def monomial(cls, k: int, N: int = DEFAULT_TRUNCATION, c=1) -> "Series":
        coeffs = [0] * (N + 1)
        if k <= N:
            coeffs[k] = c
        return cls(coeffs)

    @classmethod
    def exponential(cls, N: int = DEFAULT_TRUNCATION, lam=1) -> "Series":
        """``exp(lam * z)`` to order ``N``."""
        lam = as_fraction(lam)
        return cls(lam**n / factorial(n) for n in range(N + 1))

    @classmethod
    def from_function(cls, f, N: int = DEFAULT_TRUNCATION) -> "Series":
        return cls(f(n) for n in range(N + 1))

    # basic protocol
    @property
    def N(self) -> int:
        return len(self._c) - 1

    truncation = N

    @property
    def coeffs(self) -> tuple[Fraction, ...]:
        return self._c

    def __getitem__(self, n):
        if isinstance(n, slice):
            return self._c[n]
        if n < 0:
            raise IndexError("negative coefficient index")
        if n > self.N:
            raise IndexError(f"coefficient {n} lies beyond truncation order {self.N}")
        return self._c[n]

    def __iter__(self):
        return iter(self._c)

    def __len__(self):
        return len(self._c)

    def __eq__(self, other):
        if not isinstance(other, Series):
            return NotImplemented
        return self._c == other._c

    def __hash__(self):
        return hash(self._c)

    def __repr__(self):
        head = ", ".join(str(c) for c in self._c[:6])
        more = ", ..." if self.N >= 6 else ""
        return f"Series([{head}{more}], N={self.N})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, scale(_as_series(other, self.N), -1))

    def __neg__(self):
        return scale(self, -1)

    def __mul__(self, other):
        if isinstance(other, Series):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def truncate(self, N: int) -> "Series":
        if N > self.N:
            raise PreconditionError(f"cannot extend a series of order {self.N} to {N}")
        return Series(self._c[: N + 1])

    def valuation(self) -> int | None:
        for n, c in enumerate(self._c):
            if c:
                return n
        return None

    def nonzero_indices(self) -> list[int]:
        return [n for n, c in enumerate(self._c) if c]

    def is_nonnegative(self) -> bool:
        return all(c >= 0 for c in self._c)

    def shift_down(self, m: int) -> "Series":
        """Divide by ``z**m``; the first ``m`` coefficients must vanish."""
        if any(self._c[:m]):
            raise PreconditionError(f"series is not divisible by z^{m}")
        return Series(self._c[m:])

    def restrict_residue(self, a: int, D: int) -> "Series":
        """Keep only coefficients with index congruent to ``a`` mod ``D``."""
        return Series(c if n % D == a % D else 0 for n, c in enumerate(self._c))

    def to_json(self) -> dict:
        return {"truncation": self.N, "coeffs": [str(c) for c in self._c]}

    @classmethod
    def from_json(cls, obj) -> "Series":
        if not isinstance(obj, dict) or "coeffs" not in obj:
            raise SpecError('series JSON needs a "coeffs" list')
        coeffs = obj["coeffs"]
        if not isinstance(coeffs, list) or not coeffs:
            raise SpecError('"coeffs" must be a non-empty list of rational strings')
        return cls(coeffs, obj.get("truncation"))

    def to_mpf(self) -> list:
        return [mpmath.mpf(c.numerator) / c.denominator for c in self._c]


@dataclass(frozen=True)
class SupportLattice:
    """Support ``{n : c_n != 0}`` lies in ``m + d Z``; ``first`` is its minimum."""

    d: int
    m: int
    first: int

    @property
    def D(self) -> int:
        return self.d // math.gcd(self.m, self.d)

    def contains(self, n: int) -> bool:
        return n % self.d == self.m


@dataclass(frozen=True)
class RadiusInfo:
    """Radius of convergence of a tree series and its tilt point.

    ``method`` is ``"critical-equation"``, ``"coefficient-ratio"`` or
    ``"undetermined"``; only the first carries a certified ``precision``.
    """

    rho: object
    tau: object
    critical: bool
    precision: object
    method: str

    @property
    def determined(self) -> bool:
        return self.method != "undetermined"


def _as_series(x, N: int) -> Series:
    if isinstance(x, Series):
        return x
    return Series([as_fraction(x)], N)


# --------------------------------------------------------------------------
# arithmetic


def add(a: Series, b) -> Series:
    b = _as_series(b, a.N)
    N = min(a.N, b.N)
    return Series(a[n] + b[n] for n in range(N + 1))


def scale(a: Series, c) -> Series:
    c = as_fraction(c)
    return Series(c * x for x in a)


def mul(a: Series, b: Series) -> Series:
    """Cauchy product truncated to the smaller order."""
    N = min(a.N, b.N)
    A, da = _scaled(a[: N + 1])
    B, db = _scaled(b[: N + 1])
    nzA = _nonzero(A)
    nzB = set(_nonzero(B))
    out = []
    den = da * db
    for n in range(N + 1):
        row = binomial_row(n)
        s = 0
        for i in nzA:
            if i > n:
                break
            if n - i in nzB:
                s += row[i] * A[i] * B[n - i]
        out.append(Fraction(s, den * factorial(n)))
    return Series(out)


def series_arith(op: str, a: Series, b) -> Series:
    if len(a) == 0 or (isinstance(b, Series) and len(b) == 0):
        raise PreconditionError("empty series")
    if op == "add":
        return add(a, b)
    if op == "mul":
        return mul(a, b) if isinstance(b, Series) else scale(a, b)
    if op == "scale":
        return scale(a, b)
    raise PreconditionError(f"unknown series operation {op!r}")


def derive(a: Series) -> Series:
    if a.N < 1:
        raise PreconditionError("derivative needs truncation order >= 1")
    return Series((n + 1) * a[n + 1] for n in range(a.N))


def integrate(a: Series, constant=0) -> Series:
    return Series([as_fraction(constant)] + [a[n] / (n + 1) for n in range(a.N + 1)])


# --------------------------------------------------------------------------
# exponential family


def _exp_residues(A: Sequence[int], L: int, N: int, D: int = 1) -> list[list[int]]:
    """Scaled coefficients of ``E_r(g) = sum_{k = r mod D} g^k / k!``.

    ``A, L`` are the scaled coefficients of ``g`` (``g_0 = 0``).  Returns
    ``P[r][n]`` with ``[z^n] E_r(g) == P[r][n] / (L**n * n!)``.
    """
    nz = [k for k in _nonzero(A) if 1 <= k <= N]
    Lpow = [1]
    for _ in range(N):
        Lpow.append(Lpow[-1] * L)
    P = [[0] * (N + 1) for _ in range(D)]
    P[0][0] = 1
    wA = {k: A[k] * Lpow[k - 1] for k in nz}
    for n in range(1, N + 1):
        row = binomial_row(n - 1)
        for r in range(D):
            prev = P[(r - 1) % D]
            s = 0
            for k in nz:
                if k > n:
                    break
                p = prev[n - k]
                if p:
                    s += row[k - 1] * wA[k] * p
            P[r][n] = s
    return P


def _from_exp_residue(P: Sequence[int], L: int) -> Series:
    out = []
    Ln = 1
    for n, p in enumerate(P):
        out.append(Fraction(p, Ln * factorial(n)))
        Ln *= L
    return Series(out)


def exp_series(a: Series, split_constant: bool = False):
    """Formal exponential.

    With a nonzero constant term the result is not rational; pass
    ``split_constant=True`` to get ``(exp(a_0) as mpf, exp(a - a_0))``.
    """
    a0 = a[0]
    if a0 and not split_constant:
        raise PreconditionError("formal exp needs a zero constant term")
    g = Series((0,) + a[1:]) if a0 else a
    A, L = _scaled(g.coeffs)
    res = _from_exp_residue(_exp_residues(A, L, g.N)[0], L)
    if split_constant:
        with mpmath.workdps(WORK_DPS):
            return mpmath.exp(mpmath.mpf(a0.numerator) / a0.denominator), res
    return res


def restricted_exp(a: Series, residue: int, D: int, lam=1) -> Series:
    """``sum_{k = residue mod D} (lam a)^k / k!`` for ``a`` with ``a_0 = 0``."""
    if D < 1 or not 0 <= residue < D:
        raise PreconditionError("need 0 <= residue < D")
    if a[0]:
        raise PreconditionError("inner series must have zero constant term")
    g = scale(a, lam) if lam != 1 else a
    A, L = _scaled(g.coeffs)
    return _from_exp_residue(_exp_residues(A, L, g.N, D)[residue], L)


def log_series(a: Series) -> Series:
    """Formal logarithm of a series with constant term 1."""
    if a[0] != 1:
        raise PreconditionError("formal log needs constant term 1")
    N = a.N
    b = [Fraction(0)] * (N + 1)
    for n in range(1, N + 1):
        s = n * a[n]
        for k in range(1, n):
            if b[k] and a[n - k]:
                s -= k * b[k] * a[n - k]
        b[n] = s / n
    return Series(b)


# --------------------------------------------------------------------------
# composition


def _exp_pattern(f: Series):
    """Detect ``f_n = c * lam^n / n! * [n = a mod D]``; return ``(c, lam, a, D)``."""
    nz = f.nonzero_indices()
    if len(nz) < 2:
        return None
    lat = support_span(f)
    a, D = lat.m, lat.d
    n0, n1 = nz[0], nz[1]
    if n0 >= D:
        return None
    # f_{n1}/f_{n0} = lam^D * n0!/n1!
    lamD = f[n1] * factorial(n1) / (f[n0] * factorial(n0))
    lam = _rational_root(lamD, D)
    if lam is None:
        return None
    c = f[n0] * factorial(n0) / lam**n0
    for n in range(f.N + 1):
        expect = c * lam**n / factorial(n) if n % D == a else 0
        if f[n] != expect:
            return None
    return c, lam, a, D


def _rational_root(q: Fraction, k: int):
    if q <= 0:
        return None
    if k == 1:
        return q
    num = _int_root(q.numerator, k)
    den = _int_root(q.denominator, k)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def _int_root(x: int, k: int):
    r = round(x ** (1.0 / k)) if x < 2**1000 else int(mpmath.root(x, k))
    for cand in (r - 1, r, r + 1):
        if cand >= 0 and cand**k == x:
            return cand
    return None


def compose(outer: Series, inner: Series) -> Series:
    """Formal composition ``outer(inner(z))``; needs ``inner_0 = 0``."""
    if inner[0]:
        raise PreconditionError("composition needs an inner series with zero constant term")
    N = min(outer.N, inner.N)
    f = outer.truncate(N)
    g = inner.truncate(N)
    pat = _exp_pattern(f)
    if pat is not None:
        c, lam, a, D = pat
        return scale(restricted_exp(g, a, D, lam), c)
    return _compose_powers(f, g)


def _compose_powers(f: Series, g: Series) -> Series:
    N = f.N
    K = max(f.nonzero_indices(), default=0)
    A, L = _scaled(g.coeffs)
    nzA = _nonzero(A)
    fden = reduce(_lcm, (x.denominator for x in f if x), 1)
    fnum = [x.numerator * (fden // x.denominator) for x in f]
    Lpow = [L**j for j in range(K + 1)]
    # result numerators over common denominator fden * L^K * n!
    acc = [0] * (N + 1)
    acc[0] = fnum[0] * Lpow[K]
    cur = [1] + [0] * N  # scaled g^0
    for j in range(1, K + 1):
        nxt = [0] * (N + 1)
        for n in range(j, N + 1):
            row = binomial_row(n)
            s = 0
            for i in nzA:
                if i > n - j + 1:
                    break
                p = cur[n - i]
                if p:
                    s += row[i] * A[i] * p
            nxt[n] = s
        cur = nxt
        if fnum[j]:
            w = fnum[j] * Lpow[K - j]
            for n in range(j, N + 1):
                if cur[n]:
                    acc[n] += w * cur[n]
    den = fden * Lpow[K]
    return Series(Fraction(acc[n], den * factorial(n)) for n in range(N + 1))


# --------------------------------------------------------------------------
# tree fixed point  Z = z * phi(Z)


def _check_phi(phi: Series, check_branching: bool):
    if not phi.is_nonnegative():
        raise PreconditionError("phi must have nonnegative coefficients")
    if phi[0] <= 0:
        raise PreconditionError("phi must have a positive constant term")
    if check_branching and not any(phi[k] > 0 for k in range(2, phi.N + 1)):
        raise PreconditionError("phi needs a positive coefficient of index >= 2")


def solve_lagrange(phi: Series, N: int = DEFAULT_TRUNCATION, check_branching: bool = True) -> Series:
    """Solve ``Z = z * phi(Z)`` exactly to order ``N``.

    ``Z_n`` only depends on ``phi_0..phi_{n-1}``, so ``phi`` must be known
    to order ``N - 1``.  The solver picks whichever of ``phi`` and
    ``log(phi/phi_0)`` has the lower degree inside the window; dense inputs
    cost O(N^3).
    """
    _check_phi(phi, check_branching)
    if N < 1:
        return Series([0], N)
    if phi.N < N - 1:
        raise PreconditionError(f"phi is known to order {phi.N}, need {N - 1}")
    phi = phi.truncate(N - 1)
    deg_poly = max(phi.nonzero_indices())
    phi0 = phi[0]
    H = log_series(scale(phi, 1 / phi0)) if deg_poly > 1 else None
    deg_exp = max(H.nonzero_indices(), default=0) if H is not None else N
    if H is not None and deg_exp < deg_poly:
        # Z(z) = V(phi0 z) with V = z exp(H(V))
        V = _solve_exp_path(H, N)
        return Series(V[n] * phi0**n for n in range(N + 1))
    return _solve_poly_path(phi, N)


def solve_lagrange_exp(h: Series, N: int = DEFAULT_TRUNCATION) -> Series:
    """Solve ``Z = z * exp(h(Z))`` for ``h`` with ``h_0 = 0`` (e.g. ``h = B'``)."""
    if h[0]:
        raise PreconditionError("h must have zero constant term")
    if not h.is_nonnegative():
        raise PreconditionError("h must have nonnegative coefficients")
    if N >= 1 and h.N < N - 1:
        h = Series(h.coeffs, N - 1)
    return Series(_solve_exp_path(h, N))


def _solve_exp_path(H: Series, N: int) -> list[Fraction]:
    K = max((k for k in H.nonzero_indices() if k <= max(N - 1, 0)), default=0)
    L = reduce(_lcm, (H[j].denominator for j in range(1, K + 1) if H[j]), 1)
    eta = [0] + [H[j].numerator * (L // H[j].denominator) for j in range(1, K + 1)]
    wts = {j: eta[j] * L ** (j - 1) for j in range(1, K + 1) if eta[j]}
    tau = [0] * (N + 1)
    Y = [0] * (N + 1)
    U = [0] * (N + 1)
    Y[0] = 1
    powers = [None] + [[0] * (N + 1) for _ in range(K)]
    for n in range(1, N + 1):
        tau[n] = n * Y[n - 1]
        if n == N:
            break
        if K:
            powers[1][n] = tau[n]
            row = binomial_row(n)
            for j in range(2, min(n, K) + 1):
                prev = powers[j - 1]
                s = 0
                for i in range(1, n - j + 2):
                    if tau[i] and prev[n - i]:
                        s += row[i] * tau[i] * prev[n - i]
                powers[j][n] = s
            U[n] = sum(w * powers[j][n] for j, w in wts.items() if j <= n)
        row = binomial_row(n - 1)
        s = 0
        for k in range(1, n + 1):
            if U[k] and Y[n - k]:
                s += row[k - 1] * U[k] * Y[n - k]
        Y[n] = s
    out = [Fraction(0)]
    Ln = 1
    for n in range(1, N + 1):
        out.append(Fraction(tau[n], factorial(n) * Ln))
        Ln *= L
    return out


def _solve_poly_path(phi: Series, N: int) -> Series:
    # W = z * (M phi)(W) has integer data; Z(z) = W(z / M)
    K = max(phi.nonzero_indices())
    M = reduce(_lcm, (c.denominator for c in phi if c), 1)
    f = [int(c * M) for c in phi[: K + 1]]
    tau = [0] * (N + 1)
    Y = [0] * (N + 1)
    Y[0] = f[0]
    powers = [None] + [[0] * (N + 1) for _ in range(K)]
    for n in range(1, N + 1):
        tau[n] = n * Y[n - 1]
        if n == N:
            break
        if K:
            powers[1][n] = tau[n]
            row = binomial_row(n)
            for j in range(2, min(n, K) + 1):
                prev = powers[j - 1]
                s = 0
                for i in range(1, n - j + 2):
                    if tau[i] and prev[n - i]:
                        s += row[i] * tau[i] * prev[n - i]
                powers[j][n] = s
        Y[n] = sum(f[j] * powers[j][n] for j in range(1, min(n, K) + 1) if f[j])
    out = [Fraction(0)]
    Mn = M
    for n in range(1, N + 1):
        out.append(Fraction(tau[n], factorial(n) * Mn))
        Mn *= M
    return Series(out)


def power_coefficients(phi: Series, m: int, K: int) -> list[Fraction]:
    """``[w^j] phi(w)^m`` for ``j <= K`` (J.C.P. Miller recurrence)."""
    if phi[0] == 0:
        raise PreconditionError("power recurrence needs phi_0 != 0")
    if phi.N < K:
        raise PreconditionError(f"phi known to order {phi.N}, need {K}")
    p0 = phi[0]
    P = [p0**m]
    for j in range(1, K + 1):
        s = Fraction(0)
        for i in range(1, j + 1):
            if phi[i]:
                s += ((m + 1) * i - j) * phi[i] * P[j - i]
        P.append(s / (j * p0))
    return P


# --------------------------------------------------------------------------
# support and analytic quantities


def support_span(a: Series) -> SupportLattice:
    nz = a.nonzero_indices()
    if len(nz) < 2:
        raise PreconditionError("span needs at least two nonzero coefficients")
    d = reduce(math.gcd, (n - nz[0] for n in nz[1:]))
    return SupportLattice(d=d, m=nz[0] % d, first=nz[0])


def _mpq(c: Fraction):
    return mpmath.mpf(c.numerator) / c.denominator


def to_mpf(x):
    """mpf from int, float, str, mpf or Fraction (mpmath rejects the latter)."""
    if isinstance(x, Fraction):
        return _mpq(x)
    return mpmath.mpf(x)


def eval_at(a: Series, x, tail_mode: str = "truncate", radius=None, window: int = 8):
    """Evaluate at ``x >= 0``; returns ``(value, error_bound)`` as mpf.

    ``truncate`` sums the known coefficients; its bound is 0 only at x = 0
    (infinite otherwise, the tail being unknown).  ``geometric-bound`` adds a
    tail bound ``a_K x^K q/(1-q)`` with ``q`` a bound on the lattice ratio
    ``a_{n+d} x^d / a_n`` beyond the window.  If the last ``window`` lattice
    ratios are nonincreasing, the last one is used; otherwise a ``radius``
    must be supplied (ratios increasing towards ``radius**-d``).
    """
    with mpmath.workdps(WORK_DPS):
        x = to_mpf(x)
        if x < 0:
            raise PreconditionError("evaluation point must be nonnegative")
        vals = a.to_mpf()
        value = mpmath.fsum(c * x**n for n, c in enumerate(vals) if c)
        if x == 0:
            return vals[0], mpmath.mpf(0)
        if tail_mode == "truncate":
            return value, mpmath.inf
        if tail_mode != "geometric-bound":
            raise PreconditionError(f"unknown tail mode {tail_mode!r}")
        nz = a.nonzero_indices()
        if len(nz) < 3:
            raise PreconditionError("geometric tail bound needs at least three nonzero coefficients")
        d = support_span(a).d
        last = nz[-(window + 1):] if len(nz) > window else nz
        ratios = [vals[j] / vals[i] for i, j in zip(last, last[1:])]
        if all(r2 <= r1 for r1, r2 in zip(ratios, ratios[1:])):
            q = ratios[-1] * x**d
        elif radius is not None:
            q = (x / to_mpf(radius)) ** d
        else:
            raise PreconditionError("coefficient ratios are increasing; supply the radius of convergence")
        if q >= 1:
            raise PreconditionError("evaluation point is not strictly inside the certified disc")
        K = nz[-1]
        tail = vals[K] * x**K * q / (1 - q)
        return value + tail / 2, tail / 2 + mpmath.mpf(10) ** (-WORK_DPS + 5)


def _ratio_radius(Z: Series):
    lat = support_span(Z)
    d = lat.d
    idx = [n for n in Z.nonzero_indices() if lat.contains(n)]
    if len(idx) < 4:
        return None
    with mpmath.workdps(WORK_DPS):
        r = [_mpq(Z[i]) / _mpq(Z[j]) for i, j in zip(idx, idx[1:]) if j - i == d]
        ns = [i for i, j in zip(idx, idx[1:]) if j - i == d]
        if len(r) < 3:
            return None
        n1, n0 = ns[-1], ns[-2]
        r1, r0 = r[-1], r[-2]
        extrap = (n1 * r1 - n0 * r0) / (n1 - n0)
        err = abs(extrap - r1) + abs(r1 - r0)
        return extrap, err, d, r


def radius_and_tau(phi: Series, precision: float = 1e-12, N: int | None = None,
                   check_branching: bool = False) -> RadiusInfo:
    """Radius of ``Z = z phi(Z)`` and the tilt point ``tau = Z(rho)``.

    Prefers the critical equation ``tau phi'(tau) = phi(tau)`` solved by
    bisection with certified series evaluations; falls back to coefficient
    ratios ``Z_n / Z_{n+d}`` (heuristic precision), and reports
    ``"undetermined"`` rather than guessing.
    """
    _check_phi(phi, check_branching)
    dphi = derive(phi) if phi.N >= 1 else Series([0])

    def h(t):
        # t phi'(t) - phi(t), with certified error
        v, ev = eval_at(phi, t, "geometric-bound") if len(phi.nonzero_indices()) >= 3 else _poly_eval(phi, t)
        w, ew = (eval_at(dphi, t, "geometric-bound") if len(dphi.nonzero_indices()) >= 3
                 else _poly_eval(dphi, t))
        return t * w - v, t * ew + ev, v

    with mpmath.workdps(WORK_DPS):
        lo, hi = mpmath.mpf(0), mpmath.mpf(1)
        root = None
        try:
            while True:
                val, err, _ = h(hi)
                if val - err > 0:
                    break
                if hi > 1e6:
                    raise PreconditionError("no sign change")
                lo, hi = hi, hi * 2
            eps = mpmath.mpf(precision) / 16
            while hi - lo > eps:
                mid = (lo + hi) / 2
                val, err, _ = h(mid)
                if val > err:
                    hi = mid
                elif val < -err:
                    lo = mid
                else:
                    break
            root = (lo + hi) / 2
            halfwidth = (hi - lo) / 2
        except PreconditionError:
            root = None
        if root is not None:
            phival, phierr = (eval_at(phi, root, "geometric-bound") if len(phi.nonzero_indices()) >= 3
                              else _poly_eval(phi, root))
            rho = root / phival
            # d rho / d tau vanishes at the critical point
            prec = halfwidth**2 + rho * phierr / phival + halfwidth * mpmath.mpf(10) ** -20
            return RadiusInfo(rho=rho, tau=root, critical=True, precision=max(prec, halfwidth * 1e-3),
                              method="critical-equation")
        # ratio fallback
        NN = N or max(phi.N + 1, 64)
        phi_ext = phi if phi.N >= NN - 1 else Series(phi.coeffs, NN - 1)
        Z = solve_lagrange(phi_ext, NN, check_branching=False)
        est = _ratio_radius(Z)
        if est is None:
            return RadiusInfo(mpmath.nan, mpmath.nan, False, mpmath.inf, "undetermined")
        ratio, err, d, rs = est
        if err > mpmath.mpf("1e-2") * abs(ratio):
            return RadiusInfo(mpmath.nan, mpmath.nan, False, mpmath.inf, "undetermined")
        rho = ratio ** (mpmath.mpf(1) / d)
        terms = [_mpq(c) * rho**n for n, c in enumerate(Z) if c]
        if terms and terms[-1] > mpmath.mpf("1e-3") * max(terms):
            tau = mpmath.inf
        else:
            tau = mpmath.fsum(terms)
        return RadiusInfo(rho=rho, tau=tau, critical=False, precision=err / max(d, 1),
                          method="coefficient-ratio")


def _poly_eval(a: Series, t):
    with mpmath.workdps(WORK_DPS):
        return mpmath.fsum(_mpq(c) * t**n for n, c in enumerate(a) if c), mpmath.mpf(0)
