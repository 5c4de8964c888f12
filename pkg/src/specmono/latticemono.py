"""Lattice detection in spectral point clouds and its monodromy.

A micro-chart is an affine map ``g(u) = A u + b`` in value coordinates
``u = (Re lambda, Im lambda / eps)`` sending the points of one rectangle close
to ``h Z^2``. Charts of the same ball are continued from rectangle to
rectangle; where two balls share rectangles, their charts differ by an
integer unimodular matrix, and the products of these matrices along loops of
balls give the monodromy.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    CocycleInconsistent,
    DegenerateBasis,
    IncompleteCover,
    InsufficientData,
    NoLatticeStructure,
    NotLocallyConstant,
    NotUnimodular,
    SpecMonoError,
)
from .quantize import GoodRectangle, SpectrumCloud

log = logging.getLogger(__name__)

CHART_TOL = 0.05
ROUNDING_TOL = 0.1
MIN_ANGLE_DEG = 5.0
MAX_ROUNDS = 50
CONJUGACY_BOUND = 25


@dataclass(frozen=True, eq=False)
class MicroChart:
    """Fitted affine chart; ``fit_residual`` is the RMS distance of the mapped
    points to ``h Z^2`` in units of h."""

    rect: GoodRectangle
    f0_diff: np.ndarray
    f0_offset: np.ndarray
    fit_residual: float
    n_points: int = 0
    rounds: int = 0

    def __post_init__(self):
        A = np.array(self.f0_diff, dtype=float).reshape(2, 2)
        b = np.array(self.f0_offset, dtype=float).reshape(2)
        if not abs(np.linalg.det(A)) > 0:
            raise DegenerateBasis("chart differential is singular")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "f0_diff", A)
        object.__setattr__(self, "f0_offset", b)

    def apply(self, u) -> np.ndarray:
        return np.asarray(u) @ self.f0_diff.T + self.f0_offset

    def relabeled(self, M) -> "MicroChart":
        """Chart composed with the integer change of basis ``M``."""
        M = np.asarray(M, dtype=float)
        return MicroChart(self.rect, M @ self.f0_diff, M @ self.f0_offset, self.fit_residual,
                          self.n_points, self.rounds)


def _angle_sin(v, w) -> float:
    return abs(v[0] * w[1] - v[1] * w[0]) / (np.linalg.norm(v) * np.linalg.norm(w))


def _gauss_reduce(v1, v2):
    v1, v2 = np.array(v1, float), np.array(v2, float)
    for _ in range(100):
        if v1 @ v1 > v2 @ v2:
            v1, v2 = v2, v1
        mu = round((v1 @ v2) / (v1 @ v1))
        if mu == 0:
            break
        v2 = v2 - mu * v1
    return v1, v2


def nearest_neighbor_basis(u: np.ndarray, anchor: int, min_angle_deg: float = MIN_ANGLE_DEG,
                           n_local: int = 40, k: int = 9) -> np.ndarray:
    """Reduced lattice basis (as columns) from difference vectors near ``anchor``.

    The two shortest independent nearest-neighbour differences are
    Gauss-reduced and put in a canonical orientation: the first column is the
    one closer to the first axis, with positive first component, and the
    second has positive second component.
    """
    tree = cKDTree(u)
    _, local = tree.query(u[anchor], k=min(n_local, len(u)))
    _, nbrs = tree.query(u[np.atleast_1d(local)], k=min(k, len(u)))
    diffs = (u[nbrs[:, 1:]] - u[np.atleast_1d(local)][:, None, :]).reshape(-1, 2)
    lengths = np.linalg.norm(diffs, axis=1)
    diffs, lengths = diffs[lengths > 0], lengths[lengths > 0]
    if len(diffs) == 0:
        raise DegenerateBasis("all points coincide")
    order = np.argsort(lengths, kind="stable")
    diffs = diffs[order]
    v1 = diffs[0]
    sin_min = math.sin(math.radians(min_angle_deg))
    v2 = next((d for d in diffs[1:] if _angle_sin(v1, d) > sin_min), None)
    if v2 is None:
        raise DegenerateBasis("nearest-neighbour differences are all parallel")
    v1, v2 = _gauss_reduce(v1, v2)
    c1 = abs(v1[0]) / np.linalg.norm(v1)
    c2 = abs(v2[0]) / np.linalg.norm(v2)
    b1, b2 = (v1, v2) if c1 >= c2 else (v2, v1)
    if b1[0] < 0:
        b1 = -b1
    if b2[1] < 0:
        b2 = -b2
    return np.column_stack([b1, b2])


def fit_micro_chart(cloud: SpectrumCloud, rect: GoodRectangle, init=None, *,
                    max_rounds: int = MAX_ROUNDS, tol: float = CHART_TOL,
                    min_angle_deg: float = MIN_ANGLE_DEG) -> MicroChart:
    """Fit an affine map sending the cloud's points in ``rect`` near ``h Z^2``.

    Labels are assigned by rounding (half to even) and the affine map is
    refitted by least squares until the labels stop changing.

    Parameters
    ----------
    init : 2x2 array, optional
        Starting differential, typically the chart of a neighbouring
        rectangle. Without it the basis comes from nearest-neighbour
        differences.

    Raises
    ------
    InsufficientData
        Fewer than 6 points inside the rectangle.
    NoLatticeStructure
        RMS residual above ``tol`` (units of h) after the iteration.
    DegenerateBasis
        Basis vectors closer than ``min_angle_deg``.
    """
    h = cloud.h
    pts = cloud.points[rect.contains(cloud.points)]
    if len(pts) < 6:
        raise InsufficientData(f"{len(pts)} points inside the rectangle, need at least 6")
    u = np.column_stack([pts.real, pts.imag / cloud.eps])
    anchor = int(np.argmin(np.linalg.norm(u - rect.value_center, axis=1)))
    if init is None:
        A = h * np.linalg.inv(nearest_neighbor_basis(u, anchor, min_angle_deg))
    else:
        A = np.array(init, dtype=float).reshape(2, 2)
    du = u - u[anchor]
    design = np.column_stack([du, np.ones(len(du))])
    c = np.zeros(2)
    labels = None
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        new = np.round((du @ A.T + c) / h)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        X, *_ = np.linalg.lstsq(design, h * labels, rcond=None)
        A, c = X[:2].T, X[2]
    resid = du @ A.T + c - h * labels
    rms = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1)))) / h
    basis = np.linalg.inv(A)
    if _angle_sin(basis[:, 0], basis[:, 1]) < math.sin(math.radians(min_angle_deg)):
        raise DegenerateBasis("fitted basis vectors are nearly parallel")
    if not math.isfinite(rms) or rms > tol:
        raise NoLatticeStructure(f"fit residual {rms:.3g} h exceeds {tol} h")
    offset = c - A @ u[anchor]
    return MicroChart(rect, A, offset, rms, len(pts), rounds)


def integer_ratio(A, B):
    """``round(A B^{-1})`` and the largest entry distance to it."""
    Q = np.asarray(A, float) @ np.linalg.inv(np.asarray(B, float))
    M = np.round(Q)
    return M.astype(np.int64), float(np.max(np.abs(Q - M)))


def transition_matrix(chartA: MicroChart, chartB: MicroChart, tol: float = ROUNDING_TOL) -> np.ndarray:
    """Integer matrix ``M`` with ``f0_diff_A ~ M f0_diff_B``.

    Raises
    ------
    NotLocallyConstant
        If the ratio is not within ``tol`` of an integer matrix.
    NotUnimodular
        If the rounded matrix has determinant other than +-1.
    """
    M, resid = integer_ratio(chartA.f0_diff, chartB.f0_diff)
    if resid >= tol:
        raise NotLocallyConstant(f"chart ratio is {resid:.3g} away from an integer matrix")
    det = round(float(np.linalg.det(M)))
    if det not in (-1, 1):
        raise NotUnimodular(f"rounded transition {M.tolist()} has determinant {det}")
    return M


def int_inverse(M) -> np.ndarray:
    """Exact inverse of a unimodular 2x2 integer matrix."""
    M = np.asarray(M, dtype=np.int64)
    det = int(M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0])
    if det not in (-1, 1):
        raise NotUnimodular(f"{M.tolist()} has determinant {det}")
    return det * np.array([[M[1, 1], -M[0, 1]], [-M[1, 0], M[0, 0]]], dtype=np.int64)


# ---------------------------------------------------------------------------
# continuation inside a ball


@dataclass
class BallFit:
    charts: dict[int, MicroChart] = field(default_factory=dict)
    failures: dict[int, str] = field(default_factory=dict)


def fit_ball(rects: Sequence[GoodRectangle], clouds: Sequence[SpectrumCloud], root: int | None = None,
             root_init=None) -> BallFit:
    """Fit all rectangles of one ball with a consistent basis.

    Rectangles are visited in nearest-neighbour spanning-tree order from
    ``root`` (default: the first). Each chart starts from its tree parent's
    differential and is snapped to it by an integer change of basis, so the
    whole ball shares one branch of the lattice labelling. Failed fits are
    recorded and skipped.
    """
    n = len(rects)
    out = BallFit()
    if n == 0:
        return out
    centers = np.array([r.value_center for r in rects])
    visited = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    current = 0 if root is None else root
    order = []
    while True:
        visited[current] = True
        order.append(current)
        d = np.linalg.norm(centers - centers[current], axis=1)
        upd = (~visited) & (d < best)
        best[upd] = d[upd]
        parent[upd] = current
        if visited.all():
            break
        cand = np.where(~visited, best, np.inf)
        current = int(np.argmin(cand))
    for i in order:
        par = int(parent[i])
        while par >= 0 and par not in out.charts:
            par = int(parent[par])
        init = out.charts[par].f0_diff if par >= 0 else root_init
        try:
            chart = fit_micro_chart(clouds[i], rects[i], init)
            if par >= 0:
                M, resid = integer_ratio(chart.f0_diff, out.charts[par].f0_diff)
                if resid < ROUNDING_TOL and abs(round(np.linalg.det(M))) == 1 and not np.array_equal(M, np.eye(2)):
                    chart = chart.relabeled(int_inverse(M))
        except SpecMonoError as exc:
            out.failures[i] = f"{exc.code}: {exc}"
            log.info("rectangle %d rejected: %s", i, exc)
            continue
        out.charts[i] = chart
    return out


# ---------------------------------------------------------------------------
# cocycle and holonomy


@dataclass(frozen=True, eq=False)
class Cocycle:
    charts: Mapping[int, tuple[MicroChart, ...]]
    transitions: Mapping[tuple[int, int], np.ndarray]
    overlap_residuals: Mapping[tuple[int, int], tuple[float, ...]] = field(default_factory=dict)
    triples: tuple[tuple[int, int, int], ...] = ()

    def matrix(self, alpha: int, beta: int) -> np.ndarray:
        if alpha == beta:
            return np.eye(2, dtype=np.int64)
        try:
            return self.transitions[(alpha, beta)]
        except KeyError:
            raise IncompleteCover(f"no transition between balls {alpha} and {beta}",
                                  pair=(alpha, beta)) from None

    @classmethod
    def from_matrices(cls, transitions: Mapping[tuple[int, int], np.ndarray],
                      triples: Sequence[tuple[int, int, int]] = (), charts=None) -> "Cocycle":
        """Assemble from one matrix per unordered pair ``(a, b)``, adding the
        inverses and checking the triple-overlap identities."""
        full = {}
        for (a, b), M in sorted(transitions.items()):
            M = np.asarray(M, dtype=np.int64)
            int_inverse(M)
            full[(a, b)] = M
            full[(b, a)] = int_inverse(M)
        check_cocycle(full, triples)
        return cls(charts or {}, full, {}, tuple(triples))


def check_cocycle(transitions, triples):
    """Verify ``M_ab M_bc = M_ac`` on each listed triple (all orderings)."""
    for tri in triples:
        for a, b, c in itertools.permutations(tri):
            try:
                lhs = transitions[(a, b)] @ transitions[(b, c)]
                rhs = transitions[(a, c)]
            except KeyError as exc:
                raise CocycleInconsistent(f"triple {tri} lacks transition {exc.args[0]}", triple=tri) from None
            if not np.array_equal(lhs, rhs):
                raise CocycleInconsistent(
                    f"cocycle identity fails on balls {(a, b, c)}: "
                    f"{lhs.tolist()} != {rhs.tolist()}", triple=tuple(tri))


def build_cocycle(charts: Mapping[int, Sequence[MicroChart]], tol: float = ROUNDING_TOL) -> Cocycle:
    """Transitions between balls from charts fitted on shared rectangles.

    Two balls overlap when they hold charts on the same rectangle. Every
    shared rectangle must give the same integer matrix, and the identities
    ``M_ab M_bc = M_ac`` are checked on rectangles shared by three balls.

    Raises
    ------
    NotLocallyConstant, NotUnimodular
        From individual transitions or when an overlap is not constant.
    CocycleInconsistent
        On a failed triple-overlap identity.
    """
    balls = sorted(charts)
    for b in balls:
        if not charts[b]:
            raise ValueError(f"ball {b} has no accepted chart")
    by_rect = {b: {c.rect: c for c in charts[b]} for b in balls}
    transitions: dict[tuple[int, int], np.ndarray] = {}
    residuals: dict[tuple[int, int], tuple[float, ...]] = {}
    for a, b in itertools.combinations(balls, 2):
        shared = [r for r in by_rect[a] if r in by_rect[b]]
        if not shared:
            continue
        mats, res = [], []
        for r in shared:
            M = transition_matrix(by_rect[a][r], by_rect[b][r], tol)
            back = transition_matrix(by_rect[b][r], by_rect[a][r], tol)
            if not np.array_equal(M @ back, np.eye(2, dtype=np.int64)):
                raise NotLocallyConstant(f"transitions between balls {a} and {b} are not inverse")
            mats.append(M)
            res.append(integer_ratio(by_rect[a][r].f0_diff, by_rect[b][r].f0_diff)[1])
        first = mats[0]
        for M in mats[1:]:
            if not np.array_equal(M, first):
                raise NotLocallyConstant(
                    f"overlap of balls {a} and {b} gives both {first.tolist()} and {M.tolist()}")
        transitions[(a, b)] = first
        transitions[(b, a)] = int_inverse(first)
        residuals[(a, b)] = tuple(res)
        residuals[(b, a)] = tuple(res)
    triples = []
    for a, b, c in itertools.combinations(balls, 3):
        if any(r in by_rect[b] and r in by_rect[c] for r in by_rect[a]):
            triples.append((a, b, c))
    check_cocycle(transitions, triples)
    return Cocycle({b: tuple(charts[b]) for b in balls}, transitions, residuals, tuple(triples))


@dataclass(frozen=True, eq=False)
class ConjugacyResult:
    """``equal`` is True, False, or None when the bounded search is inconclusive."""

    equal: bool | None
    witness: np.ndarray | None = None
    certificate: str = ""

    def __bool__(self):
        return self.equal is True

    @property
    def verdict(self) -> str:
        return {True: "equal", False: "different", None: "undecided"}[self.equal]


def _content(M) -> int:
    """gcd of the coefficients of the quadratic form fixed by ``M``."""
    return math.gcd(math.gcd(int(M[0, 1]), int(M[1, 0])), int(M[0, 0] - M[1, 1]))


def _search_conjugator(m1, m2, bound):
    r = np.arange(-bound, bound + 1)
    Q, R, S = np.meshgrid(r, r, r, indexing="ij")
    Q, R, S = Q.ravel(), R.ravel(), S.ravel()
    # P = [[p, q], [r, s]]; P m1 = m2 P entrywise
    a, b, c, d = (int(v) for v in m1.ravel())
    e, f, g, k = (int(v) for v in m2.ravel())
    for p in sorted(r, key=abs):
        det = p * S - Q * R
        ok = np.abs(det) == 1
        ok &= p * a + Q * c == e * p + f * R
        ok &= p * b + Q * d == e * Q + f * S
        ok &= R * a + S * c == g * p + k * R
        ok &= R * b + S * d == g * Q + k * S
        idx = np.flatnonzero(ok)
        if len(idx):
            i = idx[0]
            return np.array([[p, Q[i]], [R[i], S[i]]], dtype=np.int64)
    return None


def conjugacy_equal(m1, m2, bound: int = CONJUGACY_BOUND) -> ConjugacyResult:
    """Decide conjugacy of two unimodular integer matrices in GL(2, Z).

    Trace, determinant and the content ``gcd(b, c, a - d)`` are invariants; a
    mismatch certifies a negative answer. Otherwise conjugators ``P`` with
    entries bounded by ``bound`` are searched (small bounds first). A found
    ``P`` satisfies ``P m1 P^{-1} = m2``.
    """
    m1 = np.asarray(m1, dtype=np.int64)
    m2 = np.asarray(m2, dtype=np.int64)
    int_inverse(m1)
    int_inverse(m2)
    if np.array_equal(m1, m2):
        return ConjugacyResult(True, np.eye(2, dtype=np.int64), "identical")
    t1, t2 = int(np.trace(m1)), int(np.trace(m2))
    d1, d2 = round(np.linalg.det(m1)), round(np.linalg.det(m2))
    if t1 != t2:
        return ConjugacyResult(False, None, f"trace {t1} != {t2}")
    if d1 != d2:
        return ConjugacyResult(False, None, f"det {d1} != {d2}")
    c1, c2 = _content(m1), _content(m2)
    if c1 != c2:
        return ConjugacyResult(False, None, f"content gcd(b, c, a-d) {c1} != {c2}")
    for b in sorted({min(3, bound), bound}):
        P = _search_conjugator(m1, m2, b)
        if P is not None:
            return ConjugacyResult(True, P, f"witness with entries <= {b}")
    return ConjugacyResult(None, None, f"no conjugator with entries <= {bound}")


@dataclass(frozen=True, eq=False)
class HolonomyClass:
    representative: np.ndarray
    trace: int
    det: int

    @classmethod
    def of(cls, M) -> "HolonomyClass":
        M = np.asarray(M, dtype=np.int64)
        return cls(M, int(np.trace(M)), int(round(np.linalg.det(M))))

    def compare(self, other) -> ConjugacyResult:
        rep = other.representative if isinstance(other, HolonomyClass) else other
        return conjugacy_equal(self.representative, rep)

    def __eq__(self, other):
        return self.compare(other).equal is True

    __hash__ = None

    def inverse(self) -> "HolonomyClass":
        return HolonomyClass.of(int_inverse(self.representative))

    def power(self, n: int) -> "HolonomyClass":
        base = self.representative if n >= 0 else int_inverse(self.representative)
        return HolonomyClass.of(np.linalg.matrix_power(base, abs(n)))


def holonomy(cocycle: Cocycle, loop: Sequence[int]) -> HolonomyClass:
    """``M_{b1 bN} M_{bN bN-1} ... M_{b2 b1}`` for the closed loop ``b1 ... bN``.

    Raises
    ------
    IncompleteCover
        If two consecutive balls have no transition.
    """
    loop = list(loop)
    if not loop:
        raise ValueError("empty loop")
    prod = np.eye(2, dtype=np.int64)
    for i in range(len(loop)):
        src, dst = loop[i], loop[(i + 1) % len(loop)]
        prod = cocycle.matrix(dst, src) @ prod
    return HolonomyClass.of(prod)


# ---------------------------------------------------------------------------
# covers


@dataclass(frozen=True)
class Ball:
    center: tuple[float, float]
    radius: float

    def contains(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.hypot(a[..., 0] - self.center[0], a[..., 1] - self.center[1]) < self.radius


def annulus_cover(center=(0.0, 0.0), radius: float = 0.3, n_balls: int = 4, ball_radius: float = 0.29,
                  step_deg: float = 2.0, offset_deg: float = 1.0):
    """Balls centred on a circle around ``center`` and rectangle centres every
    ``step_deg`` degrees along the same circle."""
    cx, cy = center
    balls = [Ball((cx + radius * math.cos(t), cy + radius * math.sin(t)), ball_radius)
             for t in np.arange(n_balls) * 2 * math.pi / n_balls]
    ang = np.deg2rad(np.arange(offset_deg, 360.0, step_deg))
    values = np.column_stack([cx + radius * np.cos(ang), cy + radius * np.sin(ang)])
    return balls, values


def fit_cover(rects: Sequence[GoodRectangle], clouds: Sequence[SpectrumCloud], balls: Sequence[Ball]):
    """Fit every ball of the cover; returns accepted charts by ball and the
    per-ball fit records."""
    centers = np.array([r.value_center for r in rects])
    charts, fits = {}, {}
    for b, ball in enumerate(balls):
        idx = np.flatnonzero(ball.contains(centers))
        fit = fit_ball([rects[i] for i in idx], [clouds[i] for i in idx])
        fits[b] = BallFit({int(idx[i]): c for i, c in fit.charts.items()},
                          {int(idx[i]): msg for i, msg in fit.failures.items()})
        charts[b] = [fits[b].charts[i] for i in sorted(fits[b].charts)]
    return charts, fits
