"""Synthetic asymptotic spectra in good rectangles.

A model is an action map ``phi`` from action variables xi to values
``a = (p, q)``. Its quasi-eigenvalues are ``lambda = chi(phi(xi_k))`` with
``chi(a) = a1 + i eps a2`` and ``xi_k = -tau_c + h (k - maslov_k / 4)``.
Points are only generated inside a good rectangle of half-widths
``h^delta / C`` and ``eps h^delta / C`` around a good center value.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .birkhoff import GOLDEN, check_diophantine
from .errors import (
    ConfigError,
    EmptyRectangle,
    IllConditioned,
    NotCommuting,
    OutOfDomain,
    RegimeViolation,
)

log = logging.getLogger(__name__)

RECT_C = 4.0
REGIME_RTOL = 1e-12
TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# models


@dataclass(frozen=True)
class ModelSystem:
    """Base class for action maps. Subclasses implement the maps on arrays
    of shape ``(..., 2)``; ``branch`` selects a chart for multivalued models."""

    tau_c: tuple[float, float] = (0.0, 0.0)
    maslov_k: tuple[int, int] = (0, 0)
    delta: float = 0.5
    name: ClassVar[str] = "abstract"

    def __post_init__(self):
        object.__setattr__(self, "tau_c", (float(self.tau_c[0]), float(self.tau_c[1])))
        object.__setattr__(self, "maslov_k", (int(self.maslov_k[0]), int(self.maslov_k[1])))
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")

    # to be provided -------------------------------------------------------
    def phi(self, xi, branch=None, guess=None):
        raise NotImplementedError

    def phi_inv(self, a, branch=None):
        raise NotImplementedError

    def dphi_inv(self, a, branch=None):
        """Differential of ``phi^{-1}`` at values ``a``; shape ``(..., 2, 2)``."""
        raise NotImplementedError

    def contains(self, a):
        a = np.asarray(a, dtype=float)
        return np.ones(a.shape[:-1], dtype=bool)

    def branch_for(self, a):
        return None

    def params(self) -> dict:
        return {}

    # derived --------------------------------------------------------------
    def dphi(self, a, branch=None):
        """Differential of ``phi`` at the action ``phi^{-1}(a)``."""
        return np.linalg.inv(self.dphi_inv(a, branch))

    def omega_of(self, a, branch=None):
        """Frequency ``[dp/dxi1 : dp/dxi2]`` as a real number.

        Uses ``p_xi1 / p_xi2``; when ``p_xi2 = 0`` the projective point is at
        infinity and the value ``0`` (a rational) is returned, so such values
        always fail the Diophantine test.
        """
        row = self.dphi(a, branch)[..., 0, :]
        p1, p2 = row[..., 0], row[..., 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(p2 != 0, p1 / np.where(p2 != 0, p2, 1.0), 0.0)
        return out if np.ndim(out) else float(out)

    def require_domain(self, a):
        a = np.asarray(a, dtype=float)
        inside = self.contains(a)
        if not np.all(inside):
            bad = a.reshape(-1, 2)[~np.asarray(inside).reshape(-1)][0]
            raise OutOfDomain(f"value {tuple(bad)} lies outside the domain of model {self.name}")

    def lattice_actions(self, h: float, k):
        """``-tau_c + h (k - maslov_k / 4)`` for integer vectors ``k``."""
        k = np.asarray(k, dtype=float)
        return -np.asarray(self.tau_c) + h * (k - np.asarray(self.maslov_k) / 4.0)

    def describe(self) -> dict:
        out = {"phi": self.name, "tau_c": list(self.tau_c), "maslov_k": list(self.maslov_k),
               "delta": self.delta}
        out.update(self.params())
        return out


@dataclass(frozen=True)
class IdentityModel(ModelSystem):
    name: ClassVar[str] = "identity"

    def phi(self, xi, branch=None, guess=None):
        return np.array(xi, dtype=float)

    def phi_inv(self, a, branch=None):
        return np.array(a, dtype=float)

    def dphi_inv(self, a, branch=None):
        a = np.asarray(a, dtype=float)
        return np.broadcast_to(np.eye(2), a.shape[:-1] + (2, 2)).copy()


@dataclass(frozen=True)
class TwistModel(ModelSystem):
    """``phi(xi) = (xi1 + g xi2 + beta/2 xi2^2, xi2)``; frequency ``1/(g + beta xi2)``."""

    g: float = GOLDEN
    beta: float = 0.5
    name: ClassVar[str] = "twist"

    def phi(self, xi, branch=None, guess=None):
        xi = np.asarray(xi, dtype=float)
        out = np.empty_like(xi)
        out[..., 0] = xi[..., 0] + self.g * xi[..., 1] + 0.5 * self.beta * xi[..., 1] ** 2
        out[..., 1] = xi[..., 1]
        return out

    def phi_inv(self, a, branch=None):
        a = np.asarray(a, dtype=float)
        out = np.empty_like(a)
        out[..., 1] = a[..., 1]
        out[..., 0] = a[..., 0] - self.g * a[..., 1] - 0.5 * self.beta * a[..., 1] ** 2
        return out

    def dphi_inv(self, a, branch=None):
        a = np.asarray(a, dtype=float)
        out = np.zeros(a.shape[:-1] + (2, 2))
        out[..., 0, 0] = 1.0
        out[..., 0, 1] = -(self.g + self.beta * a[..., 1])
        out[..., 1, 1] = 1.0
        return out

    def params(self):
        return {"g": self.g, "beta": self.beta}


@dataclass(frozen=True)
class FocusFocusSectorModel(ModelSystem):
    """Local action map near a focus-focus value ``c``.

    With ``z = a - c`` and ``w = z1 + i z2``, the inverse map is

        xi2 = z2,   xi1 = kappa z1 - Re(w log w - w) / (2 pi),

    so ``d xi1/dz = (kappa - log|w| / 2 pi, arg w / 2 pi)``. The logarithm is
    multivalued: a branch is a reference angle ``theta`` with
    ``arg w in (theta - pi, theta + pi]``. Two branches differ by
    ``xi1 -> xi1 + xi2``, the unit shear.
    """

    kappa: float = 1.0
    critical: tuple[float, float] = (0.0, 0.0)
    r_min: float = 0.02
    r_max: float = 0.9
    name: ClassVar[str] = "focusfocus-sector"

    def __post_init__(self):
        super().__post_init__()
        object.__setattr__(self, "critical", (float(self.critical[0]), float(self.critical[1])))
        if not 0 < self.r_min < self.r_max:
            raise ConfigError("need 0 < r_min < r_max")
        if self.r_max >= math.exp(TWO_PI * self.kappa):
            raise ConfigError("r_max too large: the action map degenerates at |w| = exp(2 pi kappa)")

    def _z(self, a):
        a = np.asarray(a, dtype=float)
        return a[..., 0] - self.critical[0], a[..., 1] - self.critical[1]

    @staticmethod
    def _arg(z1, z2, branch):
        theta = 0.0 if branch is None else float(branch)
        t = np.arctan2(z2, z1) - theta
        # reduce to (-pi, pi]
        return theta + t - TWO_PI * np.ceil((t - math.pi) / TWO_PI)

    def contains(self, a):
        z1, z2 = self._z(a)
        r = np.hypot(z1, z2)
        return (r >= self.r_min) & (r <= self.r_max)

    def branch_for(self, a):
        z1, z2 = self._z(a)
        return float(np.arctan2(z2, z1))

    def phi_inv(self, a, branch=None):
        z1, z2 = self._z(a)
        r = np.hypot(z1, z2)
        arg = self._arg(z1, z2, branch)
        xi1 = self.kappa * z1 - (z1 * np.log(r) - z2 * arg - z1) / TWO_PI
        return np.stack([xi1, z2], axis=-1)

    def dphi_inv(self, a, branch=None):
        z1, z2 = self._z(a)
        r = np.hypot(z1, z2)
        arg = self._arg(z1, z2, branch)
        out = np.zeros(np.shape(z1) + (2, 2))
        out[..., 0, 0] = self.kappa - np.log(r) / TWO_PI
        out[..., 0, 1] = arg / TWO_PI
        out[..., 1, 1] = 1.0
        return out

    def phi(self, xi, branch=None, guess=None):
        """Invert ``xi1(z1; z2)`` by Newton's method at fixed ``z2 = xi2``.

        ``xi1`` is strictly increasing in ``z1`` inside the domain; ``guess``
        is a value near the expected answer (default: on the branch ray).
        """
        xi = np.asarray(xi, dtype=float)
        z2 = xi[..., 1]
        if guess is None:
            theta = 0.0 if branch is None else float(branch)
            z1 = np.full(z2.shape, 0.5 * (self.r_min + self.r_max) * math.cos(theta))
        else:
            z1 = np.full(z2.shape, float(guess[0]) - self.critical[0])
        a = np.empty_like(xi)
        a[..., 1] = z2 + self.critical[1]
        for _ in range(60):
            a[..., 0] = z1 + self.critical[0]
            f = self.phi_inv(a, branch)[..., 0] - xi[..., 0]
            fp = self.kappa - np.log(np.hypot(z1, z2)) / TWO_PI
            step = f / fp
            z1 = z1 - step
            if np.all(np.abs(step) <= 1e-15 * np.maximum(1.0, np.abs(z1))):
                break
        a[..., 0] = z1 + self.critical[0]
        resid = np.abs(self.phi_inv(a, branch)[..., 0] - xi[..., 0])
        if np.any(~np.isfinite(resid)) or np.any(resid > 1e-11):
            raise OutOfDomain("action map inversion left the chosen branch")
        return a

    def params(self):
        return {"kappa": self.kappa, "critical": list(self.critical),
                "r_min": self.r_min, "r_max": self.r_max}


MODELS = {cls.name: cls for cls in (IdentityModel, TwistModel, FocusFocusSectorModel)}


def make_model(phi: str, **kwargs) -> ModelSystem:
    """Build a named model; unknown names or parameters raise ConfigError."""
    try:
        cls = MODELS[phi]
    except KeyError:
        raise ConfigError(f"unknown model '{phi}', expected one of {sorted(MODELS)}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model '{phi}': {exc}") from None


# ---------------------------------------------------------------------------
# rectangles and clouds


def check_regime(eps: float, h: float, delta: float):
    """Enforce ``10 h <= eps <= h^delta`` (relative slack 1e-12)."""
    if not (h > 0 and eps > 0):
        raise RegimeViolation(f"eps and h must be positive, got eps={eps}, h={h}")
    if eps < 10 * h * (1 - REGIME_RTOL):
        raise RegimeViolation(f"regime violated: eps={eps} < 10 h = {10 * h}")
    if eps > h ** delta * (1 + REGIME_RTOL):
        raise RegimeViolation(f"regime violated: eps={eps} > h^delta = {h ** delta}")


@dataclass(frozen=True)
class GoodRectangle:
    """``|Re(lambda - center)| <= w1`` and ``|Im(lambda - center)| <= w2``."""

    center: complex
    half_widths: tuple[float, float]
    eps: float
    h: float
    delta: float = 0.5

    def __post_init__(self):
        check_regime(self.eps, self.h, self.delta)

    @classmethod
    def at(cls, a, eps: float, h: float, delta: float = 0.5, C: float = RECT_C) -> "GoodRectangle":
        hd = h ** delta
        return cls(complex(a[0], eps * a[1]), (hd / C, eps * hd / C), eps, h, delta)

    @property
    def value_center(self) -> np.ndarray:
        return np.array([self.center.real, self.center.imag / self.eps])

    def contains(self, points) -> np.ndarray:
        z = np.asarray(points, dtype=complex) - self.center
        return (np.abs(z.real) <= self.half_widths[0]) & (np.abs(z.imag) <= self.half_widths[1])

    def value_corners(self) -> np.ndarray:
        c = self.value_center
        w = np.array([self.half_widths[0], self.half_widths[1] / self.eps])
        return np.array([c + w * s for s in ((-1, -1), (1, -1), (1, 1), (-1, 1))])


@dataclass(frozen=True, eq=False)
class SpectrumCloud:
    points: np.ndarray
    eps: float
    h: float
    provenance: str = "synthetic"

    def __post_init__(self):
        if self.provenance not in ("synthetic", "file", "matrix"):
            raise ValueError(f"unknown provenance {self.provenance}")
        pts = np.array(self.points, dtype=complex).reshape(-1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)

    def unscaled(self) -> np.ndarray:
        """Points in value coordinates ``(Re lambda, Im lambda / eps)``."""
        return np.column_stack([self.points.real, self.points.imag / self.eps])

    def min_separation(self) -> float:
        from scipy.spatial import cKDTree

        if len(self.points) < 2:
            return math.inf
        xy = np.column_stack([self.points.real, self.points.imag])
        d, _ = cKDTree(xy).query(xy, k=2)
        return float(d[:, 1].min())

    def same_as(self, other: "SpectrumCloud") -> bool:
        return (self.eps == other.eps and self.h == other.h
                and np.array_equal(self.points, other.points))


def synth_spectrum(model: ModelSystem, rect: GoodRectangle, jitter_scale: float = 1.0,
                   seed: int = 0, branch=None) -> SpectrumCloud:
    """Quasi-eigenvalues of ``model`` inside ``rect`` plus an h^10 jitter.

    Raises
    ------
    EmptyRectangle
        If no lattice point falls inside the rectangle.
    OutOfDomain
        If the rectangle leaves the model's domain.
    """
    eps, h = rect.eps, rect.h
    model.require_domain(rect.value_corners())
    ac = rect.value_center
    if branch is None:
        branch = model.branch_for(ac)
    xi_c = model.phi_inv(ac, branch)
    J = np.abs(model.dphi_inv(ac, branch))
    half = np.array([rect.half_widths[0], rect.half_widths[1] / eps])
    shift = np.asarray(model.tau_c) / h + np.asarray(model.maslov_k) / 4.0
    margin = 1.25
    while True:
        reach = margin * (J @ half) + 2 * h
        lo = np.floor((xi_c - reach) / h + shift).astype(np.int64)
        hi = np.ceil((xi_c + reach) / h + shift).astype(np.int64)
        k1, k2 = np.meshgrid(np.arange(lo[0], hi[0] + 1), np.arange(lo[1], hi[1] + 1), indexing="ij")
        ks = np.stack([k1.ravel(), k2.ravel()], axis=-1)
        a = model.phi(model.lattice_actions(h, ks), branch, guess=ac)
        lam = a[:, 0] + 1j * eps * a[:, 1]
        inside = rect.contains(lam)
        on_edge = (ks[:, 0] == lo[0]) | (ks[:, 0] == hi[0]) | (ks[:, 1] == lo[1]) | (ks[:, 1] == hi[1])
        if not np.any(inside & on_edge):
            break
        margin *= 2.0
    pts = lam[inside]
    if len(pts) == 0:
        raise EmptyRectangle(f"no lattice point inside rectangle at {rect.center} for h={h}")
    rng = np.random.default_rng(seed)
    amp = jitter_scale * h ** 10
    pts = pts + amp * (rng.uniform(-1, 1, len(pts)) + 1j * rng.uniform(-1, 1, len(pts)))
    return SpectrumCloud(pts, eps, h, "synthetic")


@dataclass(frozen=True, eq=False)
class AnalyticChart:
    """Exact chart data ``f0 = tau_c + phi^{-1}`` on a rectangle."""

    rect: GoodRectangle
    f0_diff: np.ndarray
    f0_offset: np.ndarray
    forward_det: float
    image_diameter: float
    branch: float | None = None


def micro_chart_forward(model: ModelSystem, rect: GoodRectangle, branch=None) -> AnalyticChart:
    """Reference chart: differential of ``tau_c + phi^{-1}`` at the center
    value, the affine offset, ``|det d(chi o phi)|`` and the diameter of the
    image of the rectangle in action space."""
    ac = rect.value_center
    if branch is None:
        branch = model.branch_for(ac)
    D = model.dphi_inv(ac, branch)
    f0c = np.asarray(model.tau_c) + model.phi_inv(ac, branch)
    offset = f0c - D @ ac
    det_forward = rect.eps / abs(np.linalg.det(D))
    s = np.linspace(-1, 1, 9)
    g1, g2 = np.meshgrid(s, s)
    w = np.array([rect.half_widths[0], rect.half_widths[1] / rect.eps])
    grid = ac + np.stack([g1.ravel(), g2.ravel()], axis=-1) * w
    img = model.phi_inv(grid, branch)
    diam = float(np.max(np.linalg.norm(img[:, None, :] - img[None, :, :], axis=-1)))
    return AnalyticChart(rect, D, offset, float(det_forward), diam, branch)


# ---------------------------------------------------------------------------
# good values

BAD_TWIST = 1
BAD_Q = 2
BAD_DIOPHANTINE = 4


@dataclass(frozen=True, eq=False)
class GoodValueMap:
    a1: np.ndarray
    a2: np.ndarray
    reasons: np.ndarray = field(repr=False)

    @property
    def good(self) -> np.ndarray:
        return self.reasons == 0

    @property
    def bad_fraction(self) -> float:
        return float(np.mean(self.reasons != 0))


def omega_derivative(model: ModelSystem, a, branch=None, step: float = 1e-6) -> np.ndarray:
    """``d omega / d a2`` at fixed ``a1`` by central differences."""
    a = np.asarray(a, dtype=float)
    e = np.zeros_like(a)
    e[..., 1] = step
    return (model.omega_of(a + e, branch) - model.omega_of(a - e, branch)) / (2 * step)


def value_badness(model: ModelSystem, a, alpha: float, d: float, q_max: int = 10**6,
                  branch=None) -> np.ndarray:
    """Bitmask of failed good-value criteria at each value in ``a``.

    A value is bad when the frequency is stationary along the level of p
    (``|omega'| < alpha``), when the q-component of ``d phi`` is degenerate,
    or when the frequency fails the bounded Diophantine test.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    model.require_domain(a)
    branches = [branch if branch is not None else model.branch_for(p) for p in a]
    out = np.zeros(len(a), dtype=np.int64)
    for i, (p, b) in enumerate(zip(a, branches)):
        if abs(omega_derivative(model, p, b)) < alpha:
            out[i] |= BAD_TWIST
        if np.linalg.norm(model.dphi(p, b)[1]) < alpha:
            out[i] |= BAD_Q
        if not check_diophantine(float(model.omega_of(p, b)), alpha, d, q_max):
            out[i] |= BAD_DIOPHANTINE
    return out


def is_good_value(model: ModelSystem, a, alpha: float, d: float, q_max: int = 10**6,
                  branch=None) -> bool:
    return bool(value_badness(model, a, alpha, d, q_max, branch)[0] == 0)


def good_values(model: ModelSystem, region, alpha: float, d: float, grid_step: float,
                q_max: int = 10**6, branch=None) -> GoodValueMap:
    """Classify a grid over ``region = (a1_lo, a1_hi, a2_lo, a2_hi)``.

    Vertex proximity plays no role for the shipped models, whose regions
    contain no singular values.

    Raises
    ------
    OutOfDomain
        If a grid point lies outside the model's domain.
    """
    if alpha <= 0 or d <= 0 or grid_step <= 0:
        raise ValueError("alpha, d and grid_step must be positive")
    a1 = np.arange(region[0], region[1] + 0.5 * grid_step, grid_step)
    a2 = np.arange(region[2], region[3] + 0.5 * grid_step, grid_step)
    g1, g2 = np.meshgrid(a1, a2, indexing="ij")
    pts = np.stack([g1.ravel(), g2.ravel()], axis=-1)
    model.require_domain(pts)
    reasons = value_badness(model, pts, alpha, d, q_max, branch).reshape(g1.shape)
    return GoodValueMap(a1, a2, reasons)


# ---------------------------------------------------------------------------
# commuting Hermitian pairs


def joint_spectrum_normal(a1, a2, window=None, *, cluster_tol: float | None = None):
    """Joint eigenvalues of a commuting Hermitian pair inside ``window``.

    ``a1`` is diagonalized first; ``a2`` is then diagonalized on each
    eigenspace of ``a1``. Returns ``[((mu1, mu2), multiplicity), ...]``
    sorted lexicographically.

    Raises
    ------
    NotCommuting
        If ``||[a1, a2]|| > 1e-10 ||a1|| ||a2||``.
    IllConditioned
        If ``a2`` couples different numerical eigenspaces of ``a1``.
    """
    a1 = np.asarray(a1)
    a2 = np.asarray(a2)
    if a1.shape != a2.shape or a1.ndim != 2 or a1.shape[0] != a1.shape[1]:
        raise ValueError("a1 and a2 must be square matrices of equal size")
    n1, n2 = np.linalg.norm(a1, 2), np.linalg.norm(a2, 2)
    comm = np.linalg.norm(a1 @ a2 - a2 @ a1, 2)
    if comm > 1e-10 * max(n1 * n2, 1e-300):
        raise NotCommuting(f"commutator norm {comm:.3e} exceeds tolerance")
    if not (np.allclose(a1, a1.conj().T, atol=1e-12 * max(n1, 1)) and
            np.allclose(a2, a2.conj().T, atol=1e-12 * max(n2, 1))):
        raise ValueError("a1 and a2 must be Hermitian")
    lam, U = np.linalg.eigh(a1)
    tol = cluster_tol if cluster_tol is not None else 1e-8 * max(n1, 1.0)
    groups = np.split(np.arange(len(lam)), np.nonzero(np.diff(lam) > tol)[0] + 1)
    B = U.conj().T @ a2 @ U
    scale = max(n2, 1e-300)
    pairs = []
    mask = np.zeros(B.shape, dtype=bool)
    for g in groups:
        mask[np.ix_(g, g)] = True
    leak = np.abs(B[~mask]).max(initial=0.0)
    if leak > 1e-8 * scale:
        raise IllConditioned(f"a2 couples eigenspaces of a1 (off-block norm {leak:.3e})")
    for g in groups:
        mu1 = float(np.mean(lam[g]))
        mus = np.linalg.eigvalsh(B[np.ix_(g, g)])
        sub = np.split(mus, np.nonzero(np.diff(mus) > 1e-8 * max(n2, 1.0))[0] + 1)
        for s in sub:
            pairs.append(((mu1, float(np.mean(s))), len(s)))
    if window is not None:
        lo1, hi1, lo2, hi2 = window
        pairs = [p for p in pairs if lo1 <= p[0][0] <= hi1 and lo2 <= p[0][1] <= hi2]
    return sorted(pairs)


def cloud_from_pairs(pairs, eps: float = 1.0, h: float = 1.0) -> SpectrumCloud:
    """Joint-spectrum pairs as points ``mu1 + i mu2`` (multiplicities repeated)."""
    pts = [complex(m[0], m[1]) for m, mult in pairs for _ in range(mult)]
    return SpectrumCloud(np.array(pts, dtype=complex), eps, h, "matrix")
