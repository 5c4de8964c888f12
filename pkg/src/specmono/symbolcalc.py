"""Graded formal series in (xi, eps, h) with Fourier coefficients on the 2-torus.

A series is a finite sum of terms ``c * xi1^a xi2^b eps^e h^l exp(i k.x)``.
The grading counts the powers of xi plus twice the powers of eps and h, and
every series is truncated at a weight ``n_max`` and a Fourier cutoff
``k_max`` (sup norm on the mode ``k``).

The star product follows the Weyl (Moyal) composition law with the Poisson
bracket convention ``{a, b} = d_xi a . d_x b - d_x a . d_xi b`` so that
``i [a, b] = h {a, b} + ...``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from functools import lru_cache
from types import MappingProxyType
from typing import Iterator, Mapping, NamedTuple

import numpy as np

from .errors import CutoffExceeded, DivergentExponential, ParseError

PRUNE = 1e-14
DEFAULT_NMAX = 10
DEFAULT_KMAX = 16


class Multidegree(NamedTuple):
    """Exponents of ``xi1^xi1 xi2^xi2 eps^eps h^h``."""

    xi1: int
    xi2: int
    eps: int
    h: int

    @property
    def xi_pow(self) -> tuple[int, int]:
        return (self.xi1, self.xi2)

    @property
    def weight(self) -> int:
        return self.xi1 + self.xi2 + 2 * (self.eps + self.h)


class FourierMode(NamedTuple):
    k: tuple[int, int]
    coeff: complex


def weight(d: Multidegree) -> int:
    """Filtration weight: xi degree plus twice the eps and h degrees."""
    return d.xi1 + d.xi2 + 2 * (d.eps + d.h)


def _sort_key(item):
    mono, k = item
    return (mono.weight, mono.xi1, mono.xi2, mono.eps, mono.h, k[0], k[1])


class FormalSeries:
    """Immutable truncated formal series.

    Parameters
    ----------
    terms : mapping or iterable
        Either ``{Multidegree: {(k1, k2): coeff}}`` or an iterable of
        ``(xi1, xi2, eps, h, k1, k2, coeff)`` tuples. Repeated entries add.
    n_max : int
        Weight cutoff. Terms above it are dropped when ``truncate`` is true and
        rejected otherwise.
    k_max : int
        Fourier cutoff; a mode with ``max(|k1|, |k2|) > k_max`` raises
        ``CutoffExceeded``.
    """

    __slots__ = ("_data", "n_max", "k_max", "_hash")

    def __init__(self, terms=(), n_max: int = DEFAULT_NMAX, k_max: int = DEFAULT_KMAX,
                 *, truncate: bool = False, prune: float = PRUNE):
        if n_max < 0 or k_max < 0:
            raise ValueError("cutoffs must be nonnegative")
        self.n_max = int(n_max)
        self.k_max = int(k_max)
        acc: dict[tuple[Multidegree, tuple[int, int]], complex] = defaultdict(complex)
        if isinstance(terms, Mapping):
            for mono, modes in terms.items():
                mono = Multidegree(*map(int, mono))
                for k, c in modes.items():
                    acc[(mono, (int(k[0]), int(k[1])))] += complex(c)
        else:
            for t in terms:
                x1, x2, e, l, k1, k2, c = t
                acc[(Multidegree(int(x1), int(x2), int(e), int(l)), (int(k1), int(k2)))] += complex(c)
        data: dict[Multidegree, dict[tuple[int, int], complex]] = {}
        for (mono, k), c in sorted(acc.items(), key=lambda it: _sort_key(it[0])):
            if min(mono) < 0:
                raise ValueError(f"negative exponent in {mono}")
            if abs(c) <= prune:
                continue
            if mono.weight > self.n_max:
                if truncate:
                    continue
                raise ValueError(f"term {mono} has weight {mono.weight} > n_max={self.n_max}")
            if max(abs(k[0]), abs(k[1])) > self.k_max:
                raise CutoffExceeded(f"mode {k} exceeds Fourier cutoff k_max={self.k_max}")
            data.setdefault(mono, {})[k] = c
        self._data = data
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, n_max=DEFAULT_NMAX, k_max=DEFAULT_KMAX) -> "FormalSeries":
        return cls((), n_max, k_max)

    @classmethod
    def monomial(cls, xi=(0, 0), eps=0, h=0, k=(0, 0), coeff=1.0,
                 n_max=DEFAULT_NMAX, k_max=DEFAULT_KMAX) -> "FormalSeries":
        return cls([(xi[0], xi[1], eps, h, k[0], k[1], coeff)], n_max, k_max)

    def _like(self, items, *, truncate=True) -> "FormalSeries":
        return FormalSeries(items, self.n_max, self.k_max, truncate=truncate)

    # access -----------------------------------------------------------------
    @property
    def terms(self) -> Mapping[Multidegree, tuple[FourierMode, ...]]:
        return MappingProxyType({m: tuple(FourierMode(k, c) for k, c in modes.items())
                                 for m, modes in self._data.items()})

    def items(self) -> Iterator[tuple[Multidegree, tuple[int, int], complex]]:
        """Terms in the canonical order (weight, xi, eps, h, k)."""
        for mono, modes in self._data.items():
            for k, c in modes.items():
                yield mono, k, c

    def coeff(self, mono, k=(0, 0)) -> complex:
        modes = self._data.get(Multidegree(*mono))
        if not modes:
            return 0j
        return modes.get(tuple(k), 0j)

    def __len__(self) -> int:
        return sum(len(m) for m in self._data.values())

    def is_zero(self) -> bool:
        return not self._data

    def monomials(self) -> tuple[Multidegree, ...]:
        return tuple(self._data)

    def modes(self) -> set[tuple[int, int]]:
        return {k for modes in self._data.values() for k in modes}

    def min_weight(self) -> int | None:
        return min((m.weight for m in self._data), default=None)

    def max_abs(self) -> float:
        return max((abs(c) for _, _, c in self.items()), default=0.0)

    def is_x_independent(self) -> bool:
        return all(k == (0, 0) for _, k, _ in self.items())

    # filters ----------------------------------------------------------------
    def select(self, pred) -> "FormalSeries":
        """Keep terms for which ``pred(mono, k)`` is true."""
        return self._like([(*m, *k, c) for m, k, c in self.items() if pred(m, k)])

    def homogeneous(self, w: int) -> "FormalSeries":
        return self.select(lambda m, k: m.weight == w)

    def x_average(self) -> "FormalSeries":
        return self.select(lambda m, k: k == (0, 0))

    def x_dependent(self) -> "FormalSeries":
        return self.select(lambda m, k: k != (0, 0))

    def h_order(self, n: int) -> "FormalSeries":
        return self.select(lambda m, k: m.h == n)

    def h_block(self) -> "FormalSeries":
        """Terms carrying at least one power of h, divided by h."""
        return self._like([(m.xi1, m.xi2, m.eps, m.h - 1, *k, c)
                           for m, k, c in self.items() if m.h >= 1])

    def times_h(self, n: int = 1) -> "FormalSeries":
        return self._like([(m.xi1, m.xi2, m.eps, m.h + n, *k, c) for m, k, c in self.items()])

    def with_cuts(self, n_max=None, k_max=None) -> "FormalSeries":
        return FormalSeries([(*m, *k, c) for m, k, c in self.items()],
                            self.n_max if n_max is None else n_max,
                            self.k_max if k_max is None else k_max, truncate=True)

    # arithmetic -------------------------------------------------------------
    def _check(self, other: "FormalSeries"):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        if (self.n_max, self.k_max) != (other.n_max, other.k_max):
            raise ValueError("incompatible cutoffs: "
                             f"({self.n_max}, {self.k_max}) vs ({other.n_max}, {other.k_max})")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self._like([(*m, *k, c) for m, k, c in self.items()]
                          + [(*m, *k, c) for m, k, c in other.items()])

    def __neg__(self):
        return self._like([(*m, *k, -c) for m, k, c in self.items()])

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __mul__(self, s):
        if isinstance(s, FormalSeries):
            return NotImplemented
        s = complex(s)
        return self._like([(*m, *k, s * c) for m, k, c in self.items()])

    __rmul__ = __mul__

    def __truediv__(self, s):
        return self * (1.0 / complex(s))

    def __eq__(self, other):
        if not isinstance(other, FormalSeries):
            return NotImplemented
        return (self.n_max, self.k_max) == (other.n_max, other.k_max) and self._data == other._data

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.n_max, self.k_max, tuple(self.items())))
        return self._hash

    def distance(self, other: "FormalSeries") -> float:
        """Largest coefficient modulus of ``self - other``."""
        keys = {(m, k) for m, k, _ in self.items()} | {(m, k) for m, k, _ in other.items()}
        return max((abs(self.coeff(m, k) - other.coeff(m, k)) for m, k in keys), default=0.0)

    def evaluate(self, xi, eps: float, h: float, x=(0.0, 0.0)) -> complex:
        """Numerical value of the truncated sum at one point."""
        total = 0j
        for m, k, c in self.items():
            total += (c * xi[0] ** m.xi1 * xi[1] ** m.xi2 * eps ** m.eps * h ** m.h
                      * np.exp(1j * (k[0] * x[0] + k[1] * x[1])))
        return complex(total)

    def __repr__(self):
        head = f"FormalSeries(n_max={self.n_max}, k_max={self.k_max}, terms={len(self)})"
        body = ", ".join(f"{c:.3g}*{tuple(m)}e{k}" for m, k, c in list(self.items())[:6])
        return f"{head}[{body}{', ...' if len(self) > 6 else ''}]"


# ---------------------------------------------------------------------------
# star product


@lru_cache(maxsize=None)
def _orders(pa: tuple[int, int], pb: tuple[int, int], budget: int):
    """Derivative orders (alpha, beta, prefactor) of the Moyal sum.

    ``beta`` differentiates the xi-part of the left factor, ``alpha`` the
    xi-part of the right factor; the matching x-derivatives hit the other
    factor. The prefactor includes the falling factorials from the
    xi-derivatives and ``(-1)^|alpha| / ((2i)^n alpha! beta!)``.
    """
    out = []
    for a1 in range(min(pb[0], budget) + 1):
        for a2 in range(min(pb[1], budget - a1) + 1):
            for b1 in range(min(pa[0], budget - a1 - a2) + 1):
                for b2 in range(min(pa[1], budget - a1 - a2 - b1) + 1):
                    n = a1 + a2 + b1 + b2
                    pref = ((-1) ** (a1 + a2) / ((2j) ** n * math.factorial(a1) * math.factorial(a2)
                                                  * math.factorial(b1) * math.factorial(b2)))
                    pref *= (math.perm(pa[0], b1) * math.perm(pa[1], b2)
                             * math.perm(pb[0], a1) * math.perm(pb[1], a2))
                    out.append(((a1, a2), (b1, b2), n, pref))
    return tuple(out)


def _mode_arrays(s: FormalSeries):
    out = []
    for mono, modes in s._data.items():
        ks = np.array(list(modes.keys()), dtype=np.int64).reshape(-1, 2)
        cs = np.array(list(modes.values()), dtype=complex)
        out.append((mono, ks, cs))
    return out


def _collect(n_max, k_max, chunks) -> FormalSeries:
    """Sum (mono, k-array, c-array) chunks into a canonical series."""
    span = 4 * k_max + 3
    data: dict[Multidegree, dict[tuple[int, int], complex]] = {}
    for mono in sorted(chunks, key=lambda m: (m.weight, *m)):
        parts = chunks[mono]
        ks = np.concatenate([p[0] for p in parts])
        cs = np.concatenate([p[1] for p in parts])
        keys = (ks[:, 0] + 2 * k_max + 1) * span + (ks[:, 1] + 2 * k_max + 1)
        uniq, inv = np.unique(keys, return_inverse=True)
        summed = np.zeros(len(uniq), dtype=complex)
        np.add.at(summed, inv, cs)
        keep = np.abs(summed) > PRUNE
        if not keep.any():
            continue
        k1 = uniq[keep] // span - (2 * k_max + 1)
        k2 = uniq[keep] % span - (2 * k_max + 1)
        if np.any(np.abs(k1) > k_max) or np.any(np.abs(k2) > k_max):
            raise CutoffExceeded(
                f"product produced a mode beyond k_max={k_max}; increase the Fourier cutoff")
        data[mono] = {(int(a), int(b)): complex(c) for a, b, c in zip(k1, k2, summed[keep])}
    out = FormalSeries.__new__(FormalSeries)
    out.n_max, out.k_max, out._hash = n_max, k_max, None
    out._data = data
    return out


def _star_parts(a: FormalSeries, b: FormalSeries, sign: int):
    """Moyal sum terms; with ``sign=-1`` only the odd orders are kept, doubled."""
    n_max = a.n_max
    chunks: dict[Multidegree, list] = defaultdict(list)
    arr_b = _mode_arrays(b)
    for ma, ka, ca in _mode_arrays(a):
        ika = 1j * ka
        for mb, kb, cb in arr_b:
            budget = n_max - ma.weight - mb.weight
            if budget < 0:
                continue
            ikb = 1j * kb
            ksum = (ka[:, None, :] + kb[None, :, :]).reshape(-1, 2)
            cc = ca[:, None] * cb[None, :]
            for alpha, beta, n, pref in _orders(ma.xi_pow, mb.xi_pow, budget):
                if sign < 0 and n % 2 == 0:
                    continue
                fa = ika[:, 0] ** alpha[0] * ika[:, 1] ** alpha[1]
                fb = ikb[:, 0] ** beta[0] * ikb[:, 1] ** beta[1]
                coef = (pref * (2 if sign < 0 else 1)) * cc * fa[:, None] * fb[None, :]
                mono = Multidegree(ma.xi1 - beta[0] + mb.xi1 - alpha[0],
                                   ma.xi2 - beta[1] + mb.xi2 - alpha[1],
                                   ma.eps + mb.eps, ma.h + mb.h + n)
                chunks[mono].append((ksum, coef.ravel()))
    return chunks


def _compatible(a: FormalSeries, b: FormalSeries):
    if (a.n_max, a.k_max) != (b.n_max, b.k_max):
        raise ValueError("incompatible cutoffs: "
                         f"({a.n_max}, {a.k_max}) vs ({b.n_max}, {b.k_max})")


def moyal_star(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """Weyl composition ``a # b`` truncated at weight ``n_max``.

    The order-n term carries ``h^n`` and n derivatives split between xi on one
    factor and x on the other; the order-zero term is the pointwise product.

    Raises
    ------
    CutoffExceeded
        If a product mode leaves the Fourier cutoff.
    """
    _compatible(a, b)
    return _collect(a.n_max, a.k_max, _star_parts(a, b, +1))


def moyal_bracket(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """Commutator ``a # b - b # a``; only odd Moyal orders survive."""
    _compatible(a, b)
    return _collect(a.n_max, a.k_max, _star_parts(a, b, -1))


def pointwise_product(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """Ordinary product of symbols (the order-zero Moyal term)."""
    _compatible(a, b)
    chunks: dict[Multidegree, list] = defaultdict(list)
    for ma, ka, ca in _mode_arrays(a):
        for mb, kb, cb in _mode_arrays(b):
            mono = Multidegree(ma.xi1 + mb.xi1, ma.xi2 + mb.xi2, ma.eps + mb.eps, ma.h + mb.h)
            if mono.weight > a.n_max:
                continue
            ksum = (ka[:, None, :] + kb[None, :, :]).reshape(-1, 2)
            chunks[mono].append((ksum, (ca[:, None] * cb[None, :]).ravel()))
    return _collect(a.n_max, a.k_max, chunks)


def _derivative(s: FormalSeries, var: str) -> FormalSeries:
    items = []
    for m, k, c in s.items():
        if var == "xi1" and m.xi1:
            items.append((m.xi1 - 1, m.xi2, m.eps, m.h, *k, c * m.xi1))
        elif var == "xi2" and m.xi2:
            items.append((m.xi1, m.xi2 - 1, m.eps, m.h, *k, c * m.xi2))
        elif var == "x1" and k[0]:
            items.append((*m, *k, 1j * k[0] * c))
        elif var == "x2" and k[1]:
            items.append((*m, *k, 1j * k[1] * c))
    return FormalSeries(items, s.n_max, s.k_max)


def poisson_bracket(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """``{a, b} = d_xi a . d_x b - d_x a . d_xi b`` (pointwise, no h)."""
    _compatible(a, b)
    total = FormalSeries.zero(a.n_max, a.k_max)
    for i in (1, 2):
        total = total + pointwise_product(_derivative(a, f"xi{i}"), _derivative(b, f"x{i}"))
        total = total - pointwise_product(_derivative(a, f"x{i}"), _derivative(b, f"xi{i}"))
    return total


def exp_ad(G: FormalSeries, P: FormalSeries, *, max_terms: int | None = None) -> FormalSeries:
    """``sum_k (i ad_G)^k P / k!`` truncated at weight ``n_max``.

    Every bracket raises the weight by at least one, so the sum stops after at
    most ``n_max + 1`` nonzero terms; ``max_terms`` only guards against a
    grading that fails to increase.

    Raises
    ------
    DivergentExponential
        If a term is still nonzero after ``max_terms`` brackets.
    """
    _compatible(G, P)
    if max_terms is None:
        max_terms = G.n_max + 2
    result = P
    term = P
    k = 0
    while True:
        if G.is_zero() or term.is_zero():
            return result
        k += 1
        if k > max_terms:
            raise DivergentExponential(
                f"adjoint series did not terminate after {max_terms} brackets")
        term = moyal_bracket(G, term) * (1j / k)
        result = result + term


# ---------------------------------------------------------------------------
# text format


def dumps(s: FormalSeries) -> str:
    """Serialize to the ``formalseries v1`` line format."""
    lines = [f"formalseries v1 {s.n_max} {s.k_max}"]
    for m, k, c in s.items():
        lines.append(f"{m.xi1} {m.xi2} {m.eps} {m.h} {k[0]} {k[1]} {c.real!r} {c.imag!r}")
    return "\n".join(lines) + "\n"


def loads(text: str, path=None) -> FormalSeries:
    """Parse the ``formalseries v1`` format; errors report the byte offset."""
    offset = 0
    header = None
    items = []
    for lineno, raw in enumerate(text.splitlines(keepends=True), start=1):
        line = raw.split("#", 1)[0].strip()
        here = offset
        offset += len(raw.encode())
        if not line:
            continue
        fields = line.split()
        if header is None:
            if len(fields) != 4 or fields[:2] != ["formalseries", "v1"]:
                raise ParseError("expected header 'formalseries v1 Nmax Kmax'",
                                 path=path, offset=here, line=lineno)
            try:
                header = (int(fields[2]), int(fields[3]))
            except ValueError:
                raise ParseError("bad cutoff in header", path=path, offset=here, line=lineno) from None
            continue
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}", path=path, offset=here, line=lineno)
        try:
            ints = [int(f) for f in fields[:6]]
            re_, im_ = float(fields[6]), float(fields[7])
        except ValueError:
            raise ParseError("non-numeric field", path=path, offset=here, line=lineno) from None
        if min(ints[:4]) < 0:
            raise ParseError("negative exponent", path=path, offset=here, line=lineno)
        items.append((*ints, complex(re_, im_)))
    if header is None:
        raise ParseError("empty input, missing header", path=path, offset=0, line=1)
    try:
        return FormalSeries(items, header[0], header[1])
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None


def linear_series(a, n_max=DEFAULT_NMAX, k_max=DEFAULT_KMAX) -> FormalSeries:
    """``a1 xi1 + a2 xi2``."""
    return FormalSeries([(1, 0, 0, 0, 0, 0, a[0]), (0, 1, 0, 0, 0, 0, a[1])], n_max, k_max)

