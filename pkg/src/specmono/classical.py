"""Classical monodromy of the champagne bottle.

The model on ``R^4`` is ``p = |xi|^2/2 + |x|^4 - |x|^2`` with angular momentum
``q = x1 xi2 - x2 xi1``. Its momentum map ``(q, p)`` has a single focus-focus
critical value at ``(j, e) = (0, 0)``. Reduction by the rotation leaves the
radial potential ``V(r; j) = j^2 / (2 r^2) + r^4 - r^2``.

The period lattice of the torus over a regular value ``(j, e)`` is spanned by
``(0, 2 pi)`` (pure rotation) and ``(T, -Theta)`` where ``T`` is the radial
period and ``Theta`` the rotation angle swept during one radial period; a
vector ``(t_p, t_q)`` means flowing ``p`` for ``t_p`` and ``q`` for ``t_q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import NotRegularValue, QuadratureFailure, UndersampledLoop
from .latticemono import ConjugacyResult, conjugacy_equal, int_inverse

TWO_PI = 2.0 * math.pi
QUAD_NODES = 128
QUAD_TOL = 1e-8
STEP_GUARD = math.pi / 2
WINDING_TOL = 1e-3


@lru_cache(maxsize=None)
def _gauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


@dataclass(frozen=True)
class ChampagneBottle:
    """Hamiltonians, vector fields and reduced potential of the model."""

    def p(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        r2 = z[..., 0] ** 2 + z[..., 1] ** 2
        return 0.5 * (z[..., 2] ** 2 + z[..., 3] ** 2) + r2 ** 2 - r2

    def q(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        return z[..., 0] * z[..., 3] - z[..., 1] * z[..., 2]

    @staticmethod
    def grad_p(z) -> np.ndarray:
        x1, x2, y1, y2 = np.moveaxis(np.asarray(z, dtype=float), -1, 0)
        c = 4 * (x1 ** 2 + x2 ** 2) - 2
        return np.stack([c * x1, c * x2, y1, y2], axis=-1)

    @staticmethod
    def grad_q(z) -> np.ndarray:
        x1, x2, y1, y2 = np.moveaxis(np.asarray(z, dtype=float), -1, 0)
        return np.stack([y2, -y1, -x2, x1], axis=-1)

    @staticmethod
    def bracket(ga, gb) -> np.ndarray:
        """``{a, b} = d_xi a . d_x b - d_x a . d_xi b`` from gradients."""
        return (ga[..., 2] * gb[..., 0] + ga[..., 3] * gb[..., 1]
                - ga[..., 0] * gb[..., 2] - ga[..., 1] * gb[..., 3])

    def poisson_pq(self, z) -> np.ndarray:
        return self.bracket(self.grad_p(z), self.grad_q(z))

    @staticmethod
    def hamiltonian_field(grad):
        """Vector field ``(d_xi H, -d_x H)`` for the gradient function ``grad``."""

        def field(t, z):
            g = grad(z)
            return np.array([g[2], g[3], -g[0], -g[1]])

        return field

    @staticmethod
    def v_eff(r, j: float, e: float = 0.0):
        r = np.asarray(r, dtype=float)
        return j * j / (2 * r * r) + r ** 4 - r * r - e

    @staticmethod
    def well_minimum(j: float) -> float:
        """Radius of the minimum of the radial potential (``4 s^3 - 2 s^2 = j^2``, ``s = r^2``)."""
        if j == 0:
            return math.sqrt(0.5)
        s = brentq(lambda s: 4 * s ** 3 - 2 * s ** 2 - j * j, 0.5, 1.0 + j * j, xtol=1e-15, rtol=1e-15)
        return math.sqrt(s)

    def torus_point(self, j: float, e: float) -> np.ndarray:
        """Point at the inner turning point on the positive first axis."""
        r_lo, _ = radial_turning_points(j, e)
        return np.array([r_lo, 0.0, 0.0, j / r_lo])


MODEL = ChampagneBottle()


def radial_turning_points(j: float, e: float) -> tuple[float, float]:
    """Roots ``r_- < r_+`` of ``V(r; j) = e`` around the well minimum.

    Raises
    ------
    NotRegularValue
        If ``j = 0`` or ``e`` does not exceed the well minimum.
    """
    j, e = float(j), float(e)
    if not (math.isfinite(j) and math.isfinite(e)) or j == 0:
        raise NotRegularValue(f"(j, e) = ({j}, {e}) is not a regular value with j != 0")
    r0 = MODEL.well_minimum(abs(j))
    f = lambda r: MODEL.v_eff(r, j, e)
    if not f(r0) < 0:
        raise NotRegularValue(f"e = {e} does not exceed the well minimum {f(r0) + e:.12g} at j = {j}")
    lo = 0.5 * abs(j) / math.sqrt(2 * (e + 0.25))
    hi = math.sqrt((1 + math.sqrt(1 + 4 * max(e, 0.0))) / 2) + 1.0
    while f(lo) <= 0:
        lo *= 0.5
    r_minus = brentq(f, lo, r0, xtol=1e-15, rtol=1e-15, maxiter=400)
    r_plus = brentq(f, r0, hi, xtol=1e-15, rtol=1e-15, maxiter=400)
    return r_minus, r_plus


def _radial_quadrature(j: float, e: float, n: int):
    """``(T, Theta, I)`` with ``n`` Gauss nodes per panel.

    With ``r = r_- + (r_+ - r_-) sin^2 t`` the square-root endpoint
    singularities cancel against the exact factorization
    ``e - V = (r - r_-)(r_+ - r)(r + r_-)(r + r_+)(r^2 - s_3) / r^2``, where
    ``s_3 = 1 - r_-^2 - r_+^2`` is the third root in ``s = r^2``. Panels are
    graded towards the inner turning point, where the integrand has a
    boundary layer when ``|j|`` is small.
    """
    rm, rp = radial_turning_points(j, e)
    d = rp - rm
    s3 = 1.0 - rm * rm - rp * rp
    layer = max(math.sqrt(rm / rp), 1e-6)
    edges = [0.0]
    t = layer
    while t < math.pi / 2:
        edges.append(t)
        t *= 4.0
    edges.append(math.pi / 2)
    x, w = _gauss(n)
    T = Th = I = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        tt = 0.5 * (b - a) * x + 0.5 * (a + b)
        ww = 0.5 * (b - a) * w
        s, c = np.sin(tt), np.cos(tt)
        r = rm + d * s * s
        g = (r + rm) * (r + rp) * (r * r - s3) / (r * r)
        # dr / sqrt(2 (e - V)) = 2 dt / sqrt(2 g)
        base = 2.0 / np.sqrt(2.0 * g)
        T += 2.0 * np.sum(ww * base)
        Th += 2.0 * np.sum(ww * base * j / (r * r))
        # sqrt(2 (e - V)) dr = 2 sqrt(2 g) d^2 s^2 c^2 dt
        I += 2.0 * np.sum(ww * 2.0 * np.sqrt(2.0 * g) * d * d * s * s * c * c) / TWO_PI
    return T, Th, I


@dataclass(frozen=True)
class PeriodLattice:
    j: float
    e: float
    T: float
    Theta: float
    action: float
    quadrature_error: float

    @property
    def basis(self) -> np.ndarray:
        """Rows ``(0, 2 pi)`` and ``(T, -Theta)``."""
        return np.array([[0.0, TWO_PI], [self.T, -self.Theta]])


def period_lattice(j: float, e: float) -> PeriodLattice:
    """Radial period, rotation angle and second action at ``(j, e)``.

    The error estimate compares 128-node and 64-node Gauss rules.

    Raises
    ------
    NotRegularValue
        From the turning points.
    QuadratureFailure
        If the estimated relative error exceeds 1e-8.
    """
    hi = _radial_quadrature(j, e, QUAD_NODES)
    lo = _radial_quadrature(j, e, QUAD_NODES // 2)
    err = max(abs(a - b) / max(1.0, abs(a)) for a, b in zip(hi, lo))
    if not err <= QUAD_TOL:
        raise QuadratureFailure(f"quadrature error {err:.3g} at (j, e) = ({j}, {e})")
    return PeriodLattice(float(j), float(e), hi[0], hi[1], hi[2], err)


def action_integral(j: float, e: float) -> float:
    """``I = (1/pi) int sqrt(2 (e - V)) dr`` between the turning points."""
    return period_lattice(j, e).action


def flow(z0, t_p: float, t_q: float, rtol: float = 1e-12, atol: float = 1e-12) -> np.ndarray:
    """Flow ``p`` for time ``t_p`` then ``q`` for time ``t_q`` by direct ODE
    integration (DOP853); both flows commute."""
    z = np.asarray(z0, dtype=float)
    for grad, t in ((MODEL.grad_p, t_p), (MODEL.grad_q, t_q)):
        if t == 0:
            continue
        sol = solve_ivp(MODEL.hamiltonian_field(grad), (0.0, t), z, method="DOP853",
                        rtol=rtol, atol=atol)
        z = sol.y[:, -1]
    return z


def closure_errors(j: float, e: float) -> tuple[float, float]:
    """Distance from a torus point to its image under each basis vector."""
    lat = period_lattice(j, e)
    z0 = MODEL.torus_point(j, e)
    return tuple(float(np.linalg.norm(flow(z0, *vec) - z0)) for vec in lat.basis)


def circle_loop(center, radius: float, n_steps: int) -> np.ndarray:
    """Counter-clockwise samples ``center + radius e^{i t_k}``, ``t_k = 2 pi (k + 1/2) / n``."""
    t = TWO_PI * (np.arange(n_steps) + 0.5) / n_steps
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


@dataclass(frozen=True)
class LoopResult:
    matrix: np.ndarray
    winding: int
    theta_change: float
    thetas: np.ndarray
    periods: np.ndarray


def continue_theta(loop) -> LoopResult:
    """Continue ``Theta`` around the closed sampled ``loop`` of ``(j, e)``.

    Each sample picks the branch ``Theta + 2 pi m`` nearest the previous one.

    Raises
    ------
    UndersampledLoop
        If consecutive samples differ by more than pi/2 after unwrapping, or
        the total change is not a multiple of 2 pi within 1e-3.
    """
    pts = np.asarray(loop, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise ValueError("loop must be an (n, 2) array with n >= 3")
    lats = [period_lattice(j, e) for j, e in pts]
    raw = np.array([lat.Theta for lat in lats])
    cont = np.empty(len(raw) + 1)
    cont[0] = raw[0]
    seq = np.append(raw, raw[0])
    for i in range(1, len(seq)):
        m = round((cont[i - 1] - seq[i]) / TWO_PI)
        cont[i] = seq[i] + TWO_PI * m
        if abs(cont[i] - cont[i - 1]) > STEP_GUARD:
            raise UndersampledLoop(f"Theta jumps by {abs(cont[i] - cont[i - 1]):.3g} at sample {i}")
    change = cont[-1] - cont[0]
    w = round(change / TWO_PI)
    if abs(change - TWO_PI * w) > WINDING_TOL:
        raise UndersampledLoop(f"Theta change {change:.6g} is not a multiple of 2 pi")
    # the continued second basis vector returns as (T, -Theta - 2 pi w) = v - w u
    M = np.array([[1, 0], [-w, 1]], dtype=np.int64)
    return LoopResult(M, int(w), float(change), cont, np.array([lat.T for lat in lats]))


def classical_monodromy(loop) -> np.ndarray:
    """Integer matrix expressing the continued basis ``(u, v)`` in the initial
    one, rows as coefficient vectors."""
    return continue_theta(loop).matrix


def compare_monodromies(m_sp, m_cl) -> ConjugacyResult:
    """Spectral monodromy against the transpose-inverse of the classical one."""
    target = int_inverse(m_cl).T
    return conjugacy_equal(m_sp, target)
