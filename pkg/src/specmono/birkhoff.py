"""Birkhoff normal form over a Diophantine torus.

The input symbol is ``P = p(xi) + i eps q(xi) + h W(x, xi, eps, h)`` with
``p(xi) = <a, xi> + O(xi^2)``. Degree by degree the x-dependent part of the
h-block is removed by conjugation with ``exp(i ad_G)``: writing the lowest
non-normalized h-block piece as ``R``, the generator correction solves

    {g, <a, xi>} + R = K,        K = x-average of R,

which in Fourier modes reads ``g_k = -i R_k / (a.k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import ResonantMode, SingularJacobian
from .symbolcalc import (
    FormalSeries,
    exp_ad,
    linear_series,
    pointwise_product,
    poisson_bracket,
)

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
RESONANCE_RTOL = 1e-13


def continued_fraction_convergents(x: Fraction, q_max: int):
    """Yield convergents ``p/q`` of ``x`` with ``q <= q_max``."""
    p0, q0, p1, q1 = 0, 1, 1, 0
    while True:
        a = math.floor(x)
        p0, q0, p1, q1 = p1, q1, a * p1 + p0, a * q1 + q0
        if q1 > q_max:
            return
        yield Fraction(p1, q1)
        frac = x - a
        if frac == 0:
            return
        x = 1 / frac


def check_diophantine(omega: float, alpha: float, d: float, q_max: int = 10**6) -> bool:
    """Bounded check of ``|omega - m/n| >= alpha / n^(1+d)`` for ``n <= q_max``.

    For ``q_k <= n < q_{k+1}`` the best-approximation property gives
    ``|n omega - m| >= |q_k omega - p_k|``, hence
    ``n^d |n omega - m| >= q_k^d |q_k omega - p_k|``: the convergents are the
    only candidates to test, together with the nearest integer at ``n = 1``.
    The expansion is exact on the binary value of ``omega``.
    """
    if alpha <= 0 or d <= 0 or q_max < 1:
        raise ValueError("need alpha > 0, d > 0 and q_max >= 1")
    if not math.isfinite(omega):
        return False
    x = Fraction(omega)
    if abs(x - round(x)) < alpha:
        return False
    for conv in continued_fraction_convergents(x, q_max):
        n = conv.denominator
        if float(abs(x - conv)) * n ** (1.0 + d) < alpha:
            return False
    return True


@dataclass(frozen=True)
class Frequency:
    """Linear part ``a`` of ``p`` with its Diophantine constants."""

    a: tuple[float, float]
    alpha: float = 0.2
    d: float = 1.0
    q_max: int = 10**6

    def __post_init__(self):
        a = (float(self.a[0]), float(self.a[1]))
        if a == (0.0, 0.0):
            raise ValueError("frequency vector must be nonzero")
        object.__setattr__(self, "a", a)

    @property
    def omega(self) -> float:
        """Rotation number ``a1/a2`` (``a2/a1`` when ``a2 = 0``)."""
        a1, a2 = self.a
        return a1 / a2 if a2 != 0 else a2 / a1

    def is_diophantine(self) -> bool:
        return check_diophantine(self.omega, self.alpha, self.d, self.q_max)

    def divisor(self, k) -> float:
        return self.a[0] * k[0] + self.a[1] * k[1]


@dataclass(frozen=True)
class NormalFormResult:
    generator: FormalSeries
    normal_form: FormalSeries
    normalized_order: int
    residual_norm: float
    averages: tuple[FormalSeries, ...] = ()


def solve_cohomological(rbar: FormalSeries, freq: Frequency):
    """Solve ``{g, <a, xi>} + rbar = k_part`` mode by mode.

    Returns
    -------
    g : FormalSeries
        ``g_k = -i rbar_k / (a.k)`` for ``k != 0``.
    k_part : FormalSeries
        The x-average of ``rbar``.

    Raises
    ------
    ResonantMode
        If ``a.k`` vanishes on a mode carried by ``rbar``.
    """
    weights = {m.weight for m in rbar.monomials()}
    if len(weights) > 1:
        raise ValueError(f"rbar must be homogeneous, found weights {sorted(weights)}")
    norm_a = math.hypot(*freq.a)
    items = []
    for m, k, c in rbar.x_dependent().items():
        ak = freq.divisor(k)
        if abs(ak) <= RESONANCE_RTOL * norm_a * max(abs(k[0]), abs(k[1])):
            raise ResonantMode(f"a.k = 0 for mode k={k} with a={freq.a}")
        items.append((*m, *k, -1j * c / ak))
    g = FormalSeries(items, rbar.n_max, rbar.k_max)
    return g, rbar.x_average()


def cohomological_residual(g: FormalSeries, rbar: FormalSeries, k_part: FormalSeries,
                           a) -> FormalSeries:
    """``{g, <a, xi>} + rbar - k_part``."""
    return poisson_bracket(g, linear_series(a, g.n_max, g.k_max)) + rbar - k_part


def principal_part(p: FormalSeries) -> FormalSeries:
    """The h-free part ``p(xi) + i eps q(xi)``."""
    return p.h_order(0)


def _validate_principal(p_total: FormalSeries, freq: Frequency):
    p0 = principal_part(p_total)
    if not p0.is_x_independent():
        raise ValueError("principal part must be x-independent")
    if any(m.eps > 1 for m in p0.monomials()):
        raise ValueError("principal part must be exactly p(xi) + i eps q(xi)")
    lin = (p0.coeff((1, 0, 0, 0)), p0.coeff((0, 1, 0, 0)))
    scale = max(1.0, math.hypot(*freq.a))
    if any(abs(lin[i] - freq.a[i]) > 1e-12 * scale for i in range(2)):
        raise ValueError(f"linear part {lin} of p does not match frequency {freq.a}")


def h_block_residual(q: FormalSeries, below: int) -> float:
    """Largest x-dependent h-block coefficient of weight ``< below``."""
    block = q.h_block()
    return max((abs(c) for m, k, c in block.items() if k != (0, 0) and m.weight < below),
               default=0.0)


def birkhoff_normal_form(p_total: FormalSeries, freq: Frequency, n_target: int) -> NormalFormResult:
    """Normalize the h-block of ``p_total`` below weight ``n_target - 1``.

    Step ``N = 1, ..., n_target - 1`` takes the weight ``N - 1`` part of the
    h-block of ``exp(i ad_G) P``, solves the cohomological equation and adds
    the solution to ``G``. Brackets always carry a power of h, so the h-free
    principal part is untouched.

    Raises
    ------
    ResonantMode, DivergentExponential
        Propagated from the mode solve and from the adjoint exponential.
    """
    if not 1 <= n_target <= p_total.n_max:
        raise ValueError(f"n_target must be in [1, n_max={p_total.n_max}]")
    _validate_principal(p_total, freq)
    gen = FormalSeries.zero(p_total.n_max, p_total.k_max)
    q = p_total
    averages = []
    for step in range(1, n_target):
        rbar = q.h_block().homogeneous(step - 1)
        g, k_part = solve_cohomological(rbar, freq)
        averages.append(k_part)
        if g.is_zero():
            continue
        gen = gen + g
        q = exp_ad(gen, p_total)
    return NormalFormResult(gen, q, n_target, h_block_residual(q, n_target - 1), tuple(averages))


def twist_symbol(golden: float = GOLDEN, beta: float = 0.5, mode=(1, -1), amplitude: float = 0.5,
                 n_max: int = 10, k_max: int = 16) -> FormalSeries:
    """Shipped test symbol: a twist principal part plus one x-mode at order h.

    ``p = xi1 + g xi2 + beta/2 xi2^2``, ``q = xi2 + xi1/4``, and the h-block
    ``1/4 + xi1 xi2 / 10 + amplitude (1 + xi1/5 + xi2/5) exp(i mode.x)``.
    """
    terms = [
        (1, 0, 0, 0, 0, 0, 1.0),
        (0, 1, 0, 0, 0, 0, golden),
        (0, 2, 0, 0, 0, 0, beta / 2),
        (0, 1, 1, 0, 0, 0, 1j),
        (1, 0, 1, 0, 0, 0, 0.25j),
        (0, 0, 0, 1, 0, 0, 0.25),
        (1, 1, 0, 1, 0, 0, 0.1),
        (0, 0, 0, 1, mode[0], mode[1], amplitude),
        (1, 0, 0, 1, mode[0], mode[1], amplitude / 5),
        (0, 1, 0, 1, mode[0], mode[1], amplitude / 5),
    ]
    return FormalSeries(terms, n_max, k_max)


# ---------------------------------------------------------------------------
# inversion of x-independent maps


def _compose(component: FormalSeries, subs: tuple[FormalSeries, FormalSeries]) -> FormalSeries:
    """Substitute ``xi_i -> subs_i`` into an x-independent series."""
    n_max, k_max = component.n_max, component.k_max
    one = FormalSeries.monomial(n_max=n_max, k_max=k_max)
    powers = [[one], [one]]
    out = FormalSeries.zero(n_max, k_max)
    for m, _, c in component.items():
        for i, e in enumerate(m.xi_pow):
            while len(powers[i]) <= e:
                powers[i].append(pointwise_product(powers[i][-1], subs[i]))
        rest = FormalSeries.monomial(eps=m.eps, h=m.h, coeff=c, n_max=n_max, k_max=k_max)
        out = out + pointwise_product(pointwise_product(powers[0][m.xi1], powers[1][m.xi2]), rest)
    return out


def shift_base(component: FormalSeries, base) -> FormalSeries:
    """Re-expand ``F(base + eta)`` in powers of ``eta``."""
    n_max, k_max = component.n_max, component.k_max
    subs = tuple(FormalSeries([(1 - i, i, 0, 0, 0, 0, 1.0), (0, 0, 0, 0, 0, 0, base[i])], n_max, k_max)
                 for i in range(2))
    return _compose(component, subs)


def invert_asymptotic(series_map, base=(0.0, 0.0)):
    """Compositional inverse of ``xi -> F(xi, eps, h)`` near ``base``.

    Parameters
    ----------
    series_map : pair of FormalSeries
        The two x-independent components of ``F``.
    base : point
        Expansion point in xi.

    Returns
    -------
    pair of FormalSeries
        ``xi = base + H(v, eps, h)`` where ``v = F(xi) - F0(base)``, ``F0`` the
        eps- and h-free part. ``F(base + H(v)) = F0(base) + v`` holds up to the
        weight cutoff. Monomials ``eps^a h^b`` may be regrouped as
        ``eps^(a+b) (h/eps)^b``.

    Raises
    ------
    SingularJacobian
        If the leading differential at ``base`` is not invertible.
    """
    comps = tuple(series_map)
    if len(comps) != 2 or not all(c.is_x_independent() for c in comps):
        raise ValueError("series_map must be two x-independent series")
    n_max, k_max = comps[0].n_max, comps[0].k_max
    shifted = tuple(shift_base(c, base) for c in comps)
    L = np.array([[s.coeff((1, 0, 0, 0)).real, s.coeff((0, 1, 0, 0)).real] for s in shifted])
    L = L + 1j * np.array([[s.coeff((1, 0, 0, 0)).imag, s.coeff((0, 1, 0, 0)).imag] for s in shifted])
    if abs(np.linalg.det(L)) <= 1e-12 * max(np.abs(L).max(), 1e-300) ** 2:
        raise SingularJacobian(f"leading differential {L.tolist()} is singular at {tuple(base)}")
    Linv = np.linalg.inv(L)
    lin_items = {(1, 0, 0, 0), (0, 1, 0, 0), (0, 0, 0, 0)}
    nonlin = tuple(s.select(lambda m, k: tuple(m) not in lin_items) for s in shifted)
    v = (FormalSeries.monomial(xi=(1, 0), n_max=n_max, k_max=k_max),
         FormalSeries.monomial(xi=(0, 1), n_max=n_max, k_max=k_max))
    H = tuple(Linv[i, 0] * v[0] + Linv[i, 1] * v[1] for i in range(2))
    for _ in range(n_max + 1):
        R = tuple(_compose(nl, H) for nl in nonlin)
        rhs = (v[0] - R[0], v[1] - R[1])
        new = tuple(Linv[i, 0] * rhs[0] + Linv[i, 1] * rhs[1] for i in range(2))
        if new == H:
            break
        H = new
    const = tuple(FormalSeries.monomial(coeff=base[i], n_max=n_max, k_max=k_max) for i in range(2))
    return (const[0] + H[0], const[1] + H[1])


def compose_map(series_map, inner):
    """``F(inner)`` for pairs of x-independent series."""
    return tuple(_compose(c, tuple(inner)) for c in series_map)
