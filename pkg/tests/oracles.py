"""Reference implementations used only by the tests.

The star-product oracle works per Fourier mode with sympy polynomials and the
closed form

    (A e^{ik.x}) # (B e^{il.x}) = A(xi + h l/2) B(xi - h k/2) e^{i(k+l).x},

which shares no code with the derivative sum used by the library.
"""

from __future__ import annotations

import sympy as sp

from specmono.symbolcalc import FormalSeries

XI1, XI2, EPS, H = sp.symbols("xi1 xi2 eps h")
GENS = (XI1, XI2, EPS, H)


def to_modes(s: FormalSeries) -> dict:
    out = {}
    for m, k, c in s.items():
        term = sp.nsimplify(c.real, rational=True) + sp.I * sp.nsimplify(c.imag, rational=True) \
            if _is_simple(c) else sp.Float(c.real, 30) + sp.I * sp.Float(c.imag, 30)
        out[k] = out.get(k, 0) + term * XI1 ** m.xi1 * XI2 ** m.xi2 * EPS ** m.eps * H ** m.h
    return out


def _is_simple(c: complex) -> bool:
    return all(abs(v * 64 - round(v * 64)) == 0 for v in (c.real, c.imag))


def truncate(expr, n_max: int):
    if expr == 0:
        return sp.Integer(0)
    poly = sp.Poly(sp.expand(expr), *GENS)
    keep = [(mon, c) for mon, c in poly.terms()
            if mon[0] + mon[1] + 2 * (mon[2] + mon[3]) <= n_max]
    return sp.Add(*[c * sp.prod([g ** e for g, e in zip(GENS, mon)]) for mon, c in keep])


def star(a: dict, b: dict, n_max: int) -> dict:
    out: dict = {}
    for k, A in a.items():
        for l, B in b.items():
            As = A.subs({XI1: XI1 + H * sp.Rational(l[0], 2), XI2: XI2 + H * sp.Rational(l[1], 2)},
                        simultaneous=True)
            Bs = B.subs({XI1: XI1 - H * sp.Rational(k[0], 2), XI2: XI2 - H * sp.Rational(k[1], 2)},
                        simultaneous=True)
            kk = (k[0] + l[0], k[1] + l[1])
            out[kk] = out.get(kk, 0) + As * Bs
    return {k: truncate(v, n_max) for k, v in out.items()}


def add(a: dict, b: dict, scale=1) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = sp.expand(out.get(k, 0) + scale * v)
    return out


def bracket(a: dict, b: dict, n_max: int) -> dict:
    return add(star(a, b, n_max), star(b, a, n_max), -1)


def exp_ad(G: dict, P: dict, n_max: int) -> dict:
    """Nested-bracket sum ``sum_k (i ad_G)^k P / k!`` evaluated term by term."""
    total = dict(P)
    term = dict(P)
    for k in range(1, n_max + 2):
        term = {kk: sp.expand(v * sp.I / k) for kk, v in bracket(G, term, n_max).items()}
        total = add(total, term)
    return total


def coefficients(modes: dict) -> dict:
    """``{(xi1, xi2, eps, h, k1, k2): complex}`` with zeros dropped."""
    out = {}
    for k, expr in modes.items():
        expr = sp.expand(expr)
        if expr == 0:
            continue
        for mon, c in sp.Poly(expr, *GENS).terms():
            val = complex(sp.N(c, 20))
            if val != 0:
                out[(*mon, *k)] = val
    return out


def series_coefficients(s: FormalSeries) -> dict:
    return {(*m, *k): c for m, k, c in s.items()}


def max_difference(a: dict, b: dict, below_weight: int | None = None) -> float:
    keys = set(a) | set(b)
    if below_weight is not None:
        keys = {t for t in keys if t[0] + t[1] + 2 * (t[2] + t[3]) <= below_weight}
    return max((abs(a.get(t, 0) - b.get(t, 0)) for t in keys), default=0.0)
