"""Explicit bracket covers for concave and concave-transformed function classes.

Four nested constructions:

1. Lipschitz bounded concave functions, sup-norm brackets: quantized tangent
   envelopes with adaptively chosen contact points (run x slope-drop budget).
2. Bounded concave functions without a Lipschitz bound, L_r brackets: split
   the domain at mu / 1formula-mu, cover the edge rings with constant and
   Lipschitz brackets at geometrically graded resolutions, and the middle
   with a single Lipschitz cover.
3. Transformed classes h(phi) on a compact interval: discretize the range of
   phi at the levels -2^gamma with per-level bracket and support-grid budgets,
   then assemble upper/lower envelopes through h.
4. The heavy-tailed class of transformed densities bounded by M: partition the
   line into polynomially growing intervals, spend per-interval budgets shaped
   by the class envelope, and close the far tail with zero brackets.

Bracket families are combinatorially large, so a BracketSet is stored lazily:
its exact log-cardinality comes from the generator parameter space, and
``locate`` materializes the single bracket containing a given member.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln, logsumexp

from .concave_fn import PiecewiseConcave, sample_random
from .density import EnvelopeFn, TransformedDensity, envelope_for_class, member_of_class
from .transforms import Transform, UnsupportedTransformError

EPS0 = 0.25      # validity threshold of the level-wise transformed cover
EPS_STAR = 0.25  # per-interval threshold in the tail-class partition
EPS3 = 0.25      # validity threshold of the bounded-concave cover
ZETA = 0.95      # level-budget exponent; must lie in (1/(alpha+1), 1), and the
                 # per-level count ratio 2^((1-(alpha+1)*ZETA)/2) shrinks as it
                 # grows, which keeps the cardinality ramp visible at desk
                 # scale close to the square-root law
COVER_TOL = 1e-9


class ThresholdError(ValueError):
    """Requested bracket size is above the construction's validity threshold."""


class HypothesisError(ValueError):
    """Transform violates a hypothesis of the requested construction."""


# ----------------------------------------------------------------------
# Class descriptors
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzConcaveClass:
    a: float
    b: float
    B: float
    Gamma: float


@dataclass(frozen=True)
class BoundedConcaveClass:
    b1: float
    b2: float
    B: float


@dataclass(frozen=True)
class TransformedCompactClass:
    transform: Transform
    b1: float
    b2: float
    B: float


@dataclass(frozen=True)
class TailClass:
    transform: Transform
    M: float


# ----------------------------------------------------------------------
# Bracket representation
# ----------------------------------------------------------------------

def _eval_spec(spec, x: np.ndarray) -> np.ndarray:
    kind = spec[0]
    if kind == "const":
        return np.full_like(x, spec[1])
    if kind == "pl":
        _, xs, vs = spec
        return np.interp(x, xs, vs)
    if kind == "hpl_clip":
        _, transform, xs, vs, f_lo, f_hi = spec
        vals = transform._eval_array(np.interp(x, xs, vs))
        return np.clip(vals, f_lo, f_hi)
    if kind == "env":
        return spec[1](x)
    raise ValueError(f"unknown piece spec {kind!r}")


@dataclass
class BracketPiece:
    a: float
    b: float
    lower: tuple
    upper: tuple
    exact_size_r: Optional[float] = None  # closed-form integral of (u - l)^r

    def gap(self, x: np.ndarray) -> np.ndarray:
        return _eval_spec(self.upper, x) - _eval_spec(self.lower, x)


@dataclass
class Bracket:
    """A lower/upper function pair over an interval, stored piecewise."""

    pieces: List[BracketPiece]

    @property
    def support(self) -> Tuple[float, float]:
        return self.pieces[0].a, self.pieces[-1].b

    def _locate_piece(self, x: float) -> Optional[BracketPiece]:
        for p in self.pieces:
            if p.a - 1e-12 <= x <= p.b + 1e-12:
                return p
        return None

    def lower(self, x) -> np.ndarray:
        return self._eval_side(x, "lower")

    def upper(self, x) -> np.ndarray:
        return self._eval_side(x, "upper")

    def _eval_side(self, x, side: str) -> np.ndarray:
        # at shared piece boundaries the envelope is the max of uppers and
        # the min of lowers over every piece containing the point
        xa = np.atleast_1d(np.asarray(x, dtype=float))
        upper = side == "upper"
        out = np.full_like(xa, -math.inf if upper else math.inf)
        hit = np.zeros(xa.shape, dtype=bool)
        for p in self.pieces:
            m = (xa >= p.a) & (xa <= p.b)
            if np.any(m):
                vals = _eval_spec(getattr(p, side), xa[m])
                out[m] = np.maximum(out[m], vals) if upper else np.minimum(out[m], vals)
                hit |= m
        out[~hit] = 0.0 if upper else -math.inf
        return out

    def size_lr(self, r: float, grid_per_piece: int = 256) -> float:
        """L_r size of the bracket, exact where pieces carry closed forms."""
        total = 0.0
        for p in self.pieces:
            if p.exact_size_r is not None:
                total += p.exact_size_r
                continue
            if p.b <= p.a:
                continue
            xs = np.linspace(p.a, p.b, grid_per_piece)
            total += float(np.trapezoid(np.abs(p.gap(xs)) ** r, xs))
        return total ** (1.0 / r)


@dataclass
class BracketSet:
    """A bracketing family: exact count plus a member-to-bracket locator.

    Large families are never materialized; ``locate`` produces the single
    bracket assigned to a member, and ``log_cardinality`` is the natural log
    of the generator parameter space the construction draws from.
    """

    class_descriptor: object
    epsilon: float
    r: float
    log_cardinality: float
    size_bound: float
    locate: Callable[[object], Bracket] = field(repr=False)
    brackets: List[Bracket] = field(default_factory=list, repr=False)
    lazy: bool = True

    @property
    def count_log10(self) -> float:
        return self.log_cardinality / math.log(10.0)


# ----------------------------------------------------------------------
# Lipschitz concave cover (sup norm): quantized tangent envelopes
# ----------------------------------------------------------------------

def _member_slopes(phi: PiecewiseConcave, a: float, b: float):
    """Knots and per-segment slopes of a member restricted to [a, b]."""
    seg = phi.restrict_domain((a, b))
    return seg.knots, seg.values, seg.slopes


def _greedy_contacts(phi: PiecewiseConcave, a: float, b: float, tau: float):
    """Contact points with (run) x (slope drop) <= 4*tau between neighbours."""
    knots, values, slopes = _member_slopes(phi, a, b)
    if knots.size == 1 or slopes.size == 0:
        return [(float(knots[0]), float(values[0]), 0.0)]
    contacts = []
    pos = float(knots[0])
    pos_val = float(values[0])
    pos_slope = float(slopes[0])
    contacts.append((pos, pos_val, pos_slope))
    budget = 4.0 * tau
    while pos < b - 1e-15:
        nxt = None
        for k in range(slopes.size):
            if knots[k + 1] <= pos + 1e-15:
                continue
            s_seg = float(slopes[k])
            drop = pos_slope - s_seg
            if drop <= 0:
                continue  # product stays 0 while the slope has not dropped
            x_star = pos + budget / drop
            if x_star < knots[k + 1] - 1e-15:
                nxt = max(x_star, float(knots[k]), pos)
                break
        if nxt is None or nxt >= b:
            break
        # contact at nxt with its left-side slope: the pair bound
        # (run) x (slope drop) / 4 needs the slope just before the contact
        k = int(np.searchsorted(knots, nxt, side="left") - 1)
        k = min(max(k, 0), slopes.size - 1)
        contacts.append((float(nxt), float(np.interp(nxt, knots, values)),
                         float(slopes[k])))
        pos, pos_val, pos_slope = contacts[-1]
    # terminal contact keeps the last stretch honest
    k = slopes.size - 1
    contacts.append((float(knots[-1]), float(values[-1]), float(slopes[k])))
    return contacts


def _min_of_lines(lines: Sequence[Tuple[float, float]], a: float, b: float):
    """Lower envelope of lines (slope, value-at-a) as piecewise-linear arrays.

    Exact: breakpoints are the pairwise intersections that land inside [a, b].
    """
    arr = np.asarray(sorted(set(lines)), dtype=float).reshape(-1, 2)
    s, c = arr[:, 0], arr[:, 1]
    pts = [a, b]
    for i in range(s.size - 1):
        ds = s[i] - s[i + 1:]
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = a + (c[i + 1:] - c[i]) / ds
        good = np.isfinite(xi) & (xi > a) & (xi < b)
        pts.extend(xi[good].tolist())
    knots = np.unique(np.asarray(pts, dtype=float))
    vals = np.min(c[:, None] + s[:, None] * (knots[None, :] - a), axis=0)
    return knots, vals


def _count_line_families(k_max: int, n_slope: int, n_intercept: int) -> float:
    """ln of the number of line families: up to k_max distinct decreasing
    slopes from an n_slope menu, each with one of n_intercept intercepts."""

    def term(j: float) -> float:
        return (gammaln(n_slope + 1.0) - gammaln(j + 1.0)
                - gammaln(n_slope - j + 1.0) + j * math.log(n_intercept))

    if k_max <= 1_000_000:
        js = np.arange(1, k_max + 1, dtype=float)
        return float(logsumexp(term(js)))
    # terms grow geometrically in j here; the last one dominates
    top = term(float(k_max))
    ratio = n_intercept * (n_slope - k_max) / k_max
    return top + (math.log1p(1.0 / (ratio - 1.0)) if ratio > 1.0 else math.log(k_max))


def _lipschitz_menus(a, b, B, Gamma, eps):
    tau = eps / 4.0
    sigma = eps / (8.0 * (b - a))
    rho = eps / 8.0
    k_max = int(math.ceil(math.sqrt(2.0 * Gamma * (b - a) / eps))) + 2
    n_slope = 2 * int(math.ceil(Gamma / sigma)) + 1
    c_range = B + Gamma * (b - a) + eps
    n_intercept = int(math.ceil(2.0 * c_range / rho)) + 2
    return tau, sigma, rho, k_max, n_slope, n_intercept


def cover_lipschitz_concave(a: float, b: float, B: float, Gamma: float,
                            eps: float) -> BracketSet:
    """Sup-norm eps-brackets for bounded concave functions with a Lipschitz bound.

    Each member is wrapped by the minimum of at most
    ``ceil(sqrt(2 Gamma (b-a)/eps)) + 2`` quantized tangent lines, so the
    log-cardinality of the family grows like the square root of
    ``(B + Gamma(b-a))/eps`` (up to menu-size log factors).
    """
    if not (a < b and B > 0 and Gamma > 0 and eps > 0):
        raise ValueError("need a < b and positive B, Gamma, eps")
    descriptor = LipschitzConcaveClass(a, b, B, Gamma)
    if eps >= 2.0 * B:
        const = Bracket([BracketPiece(a, b, ("const", -B), ("const", B),
                                      exact_size_r=None)])
        return BracketSet(descriptor, eps, math.inf, 0.0, eps,
                          locate=lambda member: const,
                          brackets=[const], lazy=False)
    tau, sigma, rho, k_max, n_slope, n_intercept = _lipschitz_menus(a, b, B, Gamma, eps)
    log_card = _count_line_families(k_max, n_slope, n_intercept)

    def locate(member: PiecewiseConcave) -> Bracket:
        contacts = _greedy_contacts(member, a, b, tau)
        lines = []
        lift = sigma * (b - a) / 2.0
        for xc, vc, sc in contacts:
            s_q = round(sc / sigma) * sigma
            s_q = min(max(s_q, -Gamma - sigma), Gamma + sigma)
            c = vc + s_q * (a - xc) + lift
            c_q = math.ceil(c / rho) * rho
            lines.append((s_q, c_q))
        knots, vals = _min_of_lines(lines, a, b)
        upper = ("pl", knots, vals)
        lower = ("pl", knots, vals - eps / 2.0)
        return Bracket([BracketPiece(a, b, lower, upper)])

    return BracketSet(descriptor, eps, math.inf, log_card, eps, locate=locate)


# ----------------------------------------------------------------------
# Bounded concave cover (L_r): mu-split with graded rings
# ----------------------------------------------------------------------

def _ring_levels(eta: float, r: float, mu: float) -> List[float]:
    """The delta_m sequence strictly below mu (possibly empty)."""
    out = []
    m = 1
    while True:
        d = math.exp(r * ((r + 1.0) / (r + 2.0)) ** (m - 1) * math.log(eta))
        if d >= mu or m > 200:
            break
        out.append(d)
        m += 1
    return out


def _ring_sup_sizes(eta: float, r: float, count: int) -> List[float]:
    out = []
    for m in range(1, count + 1):
        out.append(eta * math.exp(-r * (r + 1.0) ** (m - 2) / (r + 2.0) ** (m - 1)
                                  * math.log(eta)))
    return out


def cover_bounded_concave(b1: float, b2: float, B: float, eps: float, r: float,
                          _allow_shrink: bool = False) -> BracketSet:
    """L_r eps-brackets for bounded concave functions with no Lipschitz bound.

    The domain splits at mu = 2^(-2 (r+1)^2 (r+2)) from either edge: constant
    brackets absorb the first sliver, Lipschitz covers with geometrically
    graded sup-sizes handle the rings, and one Lipschitz cover with slope
    bound 2/mu covers the middle.  Valid for eps below EPS3 times the class
    scale ``B (b2-b1)^{1/r}``.
    """
    if not (b1 < b2 and B > 0 and eps > 0 and r >= 1):
        raise ValueError("need b1 < b2, positive B and eps, r >= 1")
    descriptor = BoundedConcaveClass(b1, b2, B)
    scale = B * (b2 - b1) ** (1.0 / r)
    if eps >= 2.0 * scale:
        # the trivial bracket [-B, B] is already within budget
        const = Bracket([BracketPiece(b1, b2, ("const", -B), ("const", B))])
        return BracketSet(descriptor, eps, r, 0.0, eps,
                          locate=lambda member: const,
                          brackets=[const], lazy=False)
    eps_sc = eps / scale
    width = b2 - b1
    if eps_sc > EPS3:
        if not _allow_shrink:
            raise ThresholdError(
                f"eps = {eps} exceeds the validity threshold eps_3 * B (b2-b1)^(1/r)"
                f" = {EPS3 * scale}")
        # coarse regime: constant slivers wide enough to spend half the
        # budget, one Lipschitz cover in between; counts here are small
        mu = min(0.25, eps_sc ** r / 2.0 ** (2.0 * r + 1.0))
        nu = 1.0 - mu
        eta = eps_sc / 2.0
        deltas, alphas = [], []
        delta1 = mu
    else:
        eta = (3.0 / 17.0) ** (1.0 / r) * eps_sc
        mu = math.exp(-2.0 * (r + 1.0) ** 2 * (r + 2.0) * math.log(2.0))
        nu = 1.0 - mu
        deltas = _ring_levels(eta, r, mu)  # delta_1 .. delta_A, all < mu
        alphas = _ring_sup_sizes(eta, r, len(deltas))
        delta1 = eta ** r  # first level even when it already exceeds mu

    def to_x(t: float) -> float:
        return b1 + t * width

    # piece layout in scaled coordinates: [0, d_1] const, rings, [mu, nu], mirror
    const_left_end = min(delta1, mu)
    ring_edges = []  # (lo, hi, Gamma_scaled, sup_size_scaled)
    for m, d in enumerate(deltas):
        hi = deltas[m + 1] if m + 1 < len(deltas) else mu
        ring_edges.append((d, min(hi, mu), 2.0 / d, alphas[m]))

    gamma_mid = 2.0 / mu
    sub_covers = {}

    def lip_cover(lo_t, hi_t, gamma_sc, sup_sc):
        key = (lo_t, hi_t, gamma_sc, sup_sc)
        if key not in sub_covers:
            sub_covers[key] = cover_lipschitz_concave(
                to_x(lo_t), to_x(hi_t), B, gamma_sc * B / width, sup_sc * B)
        return sub_covers[key]

    mid = lip_cover(mu, nu, gamma_mid, eta)
    rings = [lip_cover(lo, hi, g, s) for lo, hi, g, s in ring_edges]
    rings_r = [lip_cover(1.0 - hi, 1.0 - lo, g, s) for lo, hi, g, s in ring_edges]
    log_card = mid.log_cardinality + sum(c.log_cardinality for c in rings + rings_r)

    def locate(member: PiecewiseConcave) -> Bracket:
        pieces: List[BracketPiece] = []
        pieces.append(BracketPiece(to_x(0.0), to_x(const_left_end),
                                   ("const", -B), ("const", B)))
        for cov in rings + [mid] + rings_r:
            pieces.extend(cov.locate(member).pieces)
        pieces.append(BracketPiece(to_x(1.0 - const_left_end), to_x(1.0),
                                   ("const", -B), ("const", B)))
        pieces.sort(key=lambda p: p.a)
        return Bracket(pieces)

    return BracketSet(descriptor, eps, r, log_card, eps, locate=locate)


# ----------------------------------------------------------------------
# Transformed classes on a compact interval: level-wise covers
# ----------------------------------------------------------------------

class _NormalizedTransform:
    """Height-scaled, shifted view of h with h_hat^{-1}(1) = -1."""

    def __init__(self, t: Transform, B: float):
        self.base = t
        self.B = B
        self.shift = 1.0 + t.inverse(B)
        self.alpha = t.alpha
        if t.y0_tilde == -math.inf:
            self.y0 = -math.inf
        else:
            self.y0 = t.y0_tilde - self.shift

    def eval(self, y: float) -> float:
        return self.base.eval(y + self.shift) / self.B

    def inverse(self, u: float) -> float:
        return self.base.inverse(self.B * u) - self.shift

    def to_f_units(self, phi_value: float) -> float:
        """Original-density value of a normalized phi level."""
        return self.base.eval(phi_value + self.shift)


def _interval_diff(interval, covered):
    """interval minus covered (both (lo, hi) or None): list of intervals."""
    if interval is None:
        return []
    lo, hi = interval
    if hi <= lo:
        return []
    if covered is None:
        return [(lo, hi)]
    clo, chi = covered
    out = []
    if lo < clo:
        out.append((lo, min(hi, clo)))
    if hi > chi:
        out.append((max(lo, chi), hi))
    return [(p, q) for p, q in out if q > p + 1e-300]


def _hull(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return (min(a[0], b[0]), max(a[1], b[1]))


def _clip_pieces_to(pieces: List[BracketPiece], lo: float, hi: float
                    ) -> List[BracketPiece]:
    out = []
    for p in pieces:
        a, b = max(p.a, lo), min(p.b, hi)
        if b > a:
            out.append(BracketPiece(a, b, p.lower, p.upper))
    return out


def _phi_piece_to_f(piece: BracketPiece, t: Transform, offset: float,
                    y_lo: float, y_hi: float) -> BracketPiece:
    """Map a phi-space bracket piece through h, clipping values into a level band."""

    def convert(spec, side):
        kind = spec[0]
        if kind == "const":
            y = min(max(spec[1] + offset, y_lo), y_hi)
            return ("const", t.eval(y))
        if kind == "pl":
            _, xs, vs = spec
            f_lo, f_hi = t.eval(y_lo), t.eval(y_hi)
            return ("hpl_clip", t, xs, vs + offset, f_lo, f_hi)
        raise ValueError(f"cannot transform piece kind {kind!r}")

    return BracketPiece(piece.a, piece.b,
                        convert(piece.lower, "lower"),
                        convert(piece.upper, "upper"))


def cover_transformed(t: Transform, b1: float, b2: float, B: float,
                      eps: float, r: float) -> BracketSet:
    """L_r brackets for transformed functions h(phi) bounded by B on [b1, b2].

    The range of phi is discretized at the levels -2^gamma (after normalizing
    h so that level -1 maps to the height bound); each level gets a support
    grid of resolution eps^r (-y)^(r alpha/2) and concave brackets of L_r
    size eps (-y)^((alpha+1)/2), assembled through h with plateau rings.
    """
    if not (b1 < b2 and B > 0 and eps > 0 and r >= 1):
        raise ValueError("need b1 < b2 and positive B, eps, r >= 1")
    width = b2 - b1
    scale = B * width ** (1.0 / r)
    eps_sc = eps / scale
    if eps_sc > EPS_STAR:
        raise ThresholdError(
            f"eps = {eps} exceeds the validity threshold eps* x B (b2-b1)^(1/r) = "
            f"{EPS_STAR * scale}")
    if t.y0_tilde == -math.inf:
        if not t.alpha > 0:
            raise UnsupportedTransformError("transform needs a positive tail exponent")
    hn = _NormalizedTransform(t, B)
    alpha = hn.alpha
    descriptor = TransformedCompactClass(t, b1, b2, B)

    if t.y0_tilde == -math.inf:
        # ceiling keeps the outside constant h(y_k) at or below eps/EPS0,
        # which the coverage argument for the deepest ring requires
        k_eps = max(1, int(math.ceil(math.log2(abs(hn.inverse(eps_sc / EPS0))))))
        levels = [-(2.0 ** g) for g in range(1, k_eps + 1)]
    else:
        k_eps = 1
        levels = [hn.y0]
    eps_b, eps_s = [], []
    for g, y in enumerate(levels, start=1):
        y_prev = -(2.0 ** (g - 1)) if t.y0_tilde == -math.inf else -1.0
        eps_b.append(eps_sc * abs(y_prev) ** ((alpha + 1.0) * ZETA))
        eps_s.append(eps_sc ** r * abs(y_prev) ** (r * alpha * ZETA))

    grids = []
    level_caches: List[dict] = []
    log_card = 0.0
    for g in range(k_eps):
        n_pts = int(math.ceil(2.0 / eps_s[g])) + 1
        n_pts = min(n_pts, 4_000_000)
        grids.append(np.linspace(b1, b2, n_pts))
        y_lo = levels[g]
        y_hi = levels[g] / 2.0 if t.y0_tilde == -math.inf else -1.0
        band_half = 0.5 * (y_hi - y_lo)
        full = cover_bounded_concave(b1, b2, band_half if band_half > 0 else 1.0,
                                     eps_b[g] * width ** (1.0 / r), r,
                                     _allow_shrink=True)
        log_card += 2.0 * math.log(n_pts + 2) + full.log_cardinality
        level_caches.append({})

    const_out = hn.to_f_units(levels[-1]) if t.y0_tilde == -math.inf else 0.0

    def locate(member) -> Bracket:
        # member: object with .phi (PiecewiseConcave) in original phi-space,
        # or a PiecewiseConcave directly, or None for the zero function
        phi = getattr(member, "phi", member)
        phi_hat = None
        if phi is not None:
            phi_hat = PiecewiseConcave(phi.knots, phi.values - hn.shift)
        pieces: List[BracketPiece] = []
        covered = None
        for g in range(k_eps):
            y_lo = levels[g]
            y_hi = levels[g] / 2.0 if t.y0_tilde == -math.inf else -1.0
            grid = grids[g]
            h_step = grid[1] - grid[0] if grid.size > 1 else width
            region = phi_hat.superlevel_set(y_lo) if phi_hat is not None else None
            if region is not None:
                d_lo = max(region[0], b1)
                d_hi = min(region[1], b2)
                l_lo = max(0, int(math.floor((d_lo - b1) / h_step)))
                l_hi = min(grid.size - 1, int(math.ceil((d_hi - b1) / h_step)))
                i_u = (grid[l_lo], grid[l_hi])
                l1 = int(math.ceil((d_lo - b1) / h_step - 1e-12))
                l2 = int(math.floor((d_hi - b1) / h_step + 1e-12))
                has_pair = l1 < l2
            else:
                i_u = None
                has_pair = False
            if has_pair:
                p_lo, p_hi = grid[l1], grid[l2]
                key = (l1, l2)
                cache = level_caches[g]
                if key not in cache:
                    band_half = 0.5 * (y_hi - y_lo)
                    cache[key] = cover_bounded_concave(
                        p_lo, p_hi, band_half, eps_b[g] * width ** (1.0 / r), r,
                        _allow_shrink=True)
                sub = cache[key]
                center = 0.5 * (y_lo + y_hi)
                clipped = phi_hat.restrict_domain((p_lo, p_hi)).clip_above(y_hi)
                shifted = PiecewiseConcave(clipped.knots, clipped.values - center)
                sub_bracket = sub.locate(shifted)
                for part_lo, part_hi in _interval_diff((p_lo, p_hi), covered):
                    for piece in _clip_pieces_to(sub_bracket.pieces, part_lo, part_hi):
                        pieces.append(_phi_piece_to_f(
                            piece, t, center + hn.shift,
                            y_lo + hn.shift, y_hi + hn.shift))
                ring_base = _hull(covered, (p_lo, p_hi))
            else:
                ring_base = covered
            plateau = hn.to_f_units(y_hi)
            for part_lo, part_hi in _interval_diff(i_u, ring_base):
                pieces.append(BracketPiece(part_lo, part_hi,
                                           ("const", 0.0), ("const", plateau)))
            covered = _hull(covered, i_u)
        for part_lo, part_hi in _interval_diff((b1, b2), covered):
            pieces.append(BracketPiece(part_lo, part_hi,
                                       ("const", 0.0), ("const", const_out)))
        pieces.sort(key=lambda p: p.a)
        return Bracket(pieces)

    return BracketSet(descriptor, eps, r, log_card, eps, locate=locate)


# ----------------------------------------------------------------------
# Heavy-tailed transformed densities: envelope-partitioned cover
# ----------------------------------------------------------------------

def _interval_schedule(env: EnvelopeFn, M: float, eps: float, r: float,
                       alpha: float):
    """The polynomial partition with per-interval budgets and the I* split."""
    d_env, l_env, _ = env.tail_params()
    if alpha <= 1.0 / r:
        raise HypothesisError(
            f"tail exponent alpha = {alpha} must exceed 1/r = {1.0 / r}")
    gamma = ((2.0 * r + 1.0) / r) * 2.0 / (alpha - 1.0 / r)
    gamma = max(gamma, 1.0)
    c0 = 2.0 * M + 1.0
    rows = []
    a0 = (M * (4.0 * M + 2.0) ** (1.0 / r)) ** (1.0 / (2.0 * r + 1.0))
    rows.append({"i": 0, "lo": -c0, "hi": c0, "B": M,
                 "A": M * (4.0 * M + 2.0) ** (1.0 / r), "a": a0})
    # tail mass beyond x of env^r, used to stop the enumeration
    def tail_mass(x):
        base = 1.0 + l_env * x / (2.0 * M)
        return (d_env ** r * (2.0 * M / l_env)
                * base ** (1.0 - alpha * r) / (alpha * r - 1.0)) ** (1.0 / r)

    i = 1
    while True:
        lo_nom = float(i) ** gamma
        hi_nom = float(i + 1) ** gamma
        if hi_nom > c0:
            lo = max(lo_nom, c0)
            b_i = d_env * (1.0 + lo_nom * l_env / (2.0 * M)) ** (-alpha)
            length = hi_nom - lo_nom
            a_val = (b_i * length ** (1.0 / r)) ** (1.0 / (2.0 * r + 1.0))
            rows.append({"i": i, "lo": lo, "hi": hi_nom, "B": b_i,
                         "A": b_i * length ** (1.0 / r), "a": a_val})
            in_star = eps * a_val > EPS_STAR * rows[-1]["A"]
            if in_star and tail_mass(hi_nom) < 0.02 * eps:
                break
        if i > 10_000:
            break
        i += 1
    return rows, gamma, tail_mass


def cover_tail_class(t: Transform, M: float, eps: float, r: float) -> BracketSet:
    """L_r brackets for the M-sandwich class of t-transformed densities on R.

    Central interval at full resolution, polynomially growing tail intervals
    with envelope-shaped budgets ``eps * A_i^(1/(2r+1))``, zero brackets where
    the budget exceeds the threshold share of the envelope, and an exact
    envelope bracket closing the far tail.
    """
    if M <= 0 or eps <= 0 or r < 1:
        raise ValueError("need positive M, eps and r >= 1")
    alpha = t.alpha
    env = envelope_for_class(M, t)
    rows, gamma, tail_mass = _interval_schedule(env, M, eps, r, alpha)
    descriptor = TailClass(t, M)
    sub_sets = {}
    log_card = 0.0
    plan = []  # (side, row, kind, sub_or_height)
    for row in rows:
        budget = eps * row["a"]
        in_star = budget > EPS_STAR * row["A"]
        if in_star:
            length = row["hi"] - row["lo"]
            height = budget / (EPS_STAR * max(length, 1.0) ** (1.0 / r))
            plan.append((row, "zero", height))
        else:
            sub = cover_transformed(t, row["lo"], row["hi"], row["B"], budget, r)
            plan.append((row, "cover", sub))
            mult = 1.0 if row["i"] == 0 else 2.0  # mirrored negative interval
            log_card += mult * sub.log_cardinality
    x_end = rows[-1]["hi"]
    tail_size_r = tail_mass(x_end) ** r

    def locate(member) -> Bracket:
        phi = getattr(member, "phi", None)
        support = getattr(member, "support", None)
        pieces: List[BracketPiece] = []
        for row, kind, payload in plan:
            for sgn in ((1,) if row["i"] == 0 else (1, -1)):
                lo, hi = (row["lo"], row["hi"]) if sgn == 1 else (-row["hi"], -row["lo"])
                if kind == "zero":
                    pieces.append(BracketPiece(lo, hi, ("const", 0.0),
                                               ("const", payload)))
                    continue
                part = None
                if phi is not None and support is not None:
                    s_lo, s_hi = support
                    if s_hi > lo and s_lo < hi:
                        part = phi.restrict_domain((max(lo, s_lo), min(hi, s_hi)))
                if sgn == 1:
                    br = payload.locate(part)
                    pieces.extend(br.pieces)
                else:
                    flipped = None
                    if part is not None:
                        flipped = PiecewiseConcave(-part.knots[::-1],
                                                   part.values[::-1])
                    br_pos = payload.locate(flipped)
                    mirrored = [BracketPiece(-q.b, -q.a, _mirror_spec(q.lower),
                                             _mirror_spec(q.upper))
                                for q in br_pos.pieces]
                    mirrored.sort(key=lambda q: q.a)
                    pieces.extend(mirrored)
        # far tails: exact envelope brackets
        pieces.append(BracketPiece(x_end, math.inf, ("const", 0.0),
                                   ("env", env), exact_size_r=tail_size_r))
        pieces.append(BracketPiece(-math.inf, -x_end, ("const", 0.0),
                                   ("env", env), exact_size_r=tail_size_r))
        pieces.sort(key=lambda p: p.a)
        return Bracket(pieces)

    size_bound = eps * (sum(row["a"] ** r for row in rows) * 2.0) ** (1.0 / r) \
        / min(EPS_STAR, 1.0)
    return BracketSet(descriptor, eps, r, log_card, size_bound, locate=locate)


def _mirror_spec(spec):
    kind = spec[0]
    if kind == "const":
        return spec
    if kind == "pl":
        _, xs, vs = spec
        return ("pl", -xs[::-1], vs[::-1])
    if kind == "hpl_clip":
        _, transform, xs, vs, f_lo, f_hi = spec
        return ("hpl_clip", transform, -xs[::-1], vs[::-1], f_lo, f_hi)
    raise ValueError(f"cannot mirror piece kind {kind!r}")

# ----------------------------------------------------------------------
# Verification and entropy curves
# ----------------------------------------------------------------------

@dataclass
class VerificationReport:
    covered_fraction: float
    max_observed_size: float
    worst_member: Optional[int]
    n_members: int
    vacuous: bool = False


def _member_view(member):
    """(eval in function space, support) for phi- or density-space members."""
    if isinstance(member, PiecewiseConcave):
        return (lambda x: member.eval(np.asarray(x, dtype=float)),
                member.domain, member.knots)
    if isinstance(member, TransformedDensity):
        return (lambda x: member.pdf(np.asarray(x, dtype=float)),
                member.support, member.phi.knots)
    if hasattr(member, "pdf") and hasattr(member, "support"):
        knots = member.phi.knots if hasattr(member, "phi") else np.asarray([])
        return (lambda x: np.asarray(member.pdf(np.asarray(x, dtype=float))),
                tuple(member.support), knots)
    raise TypeError(f"cannot interpret member of type {type(member).__name__}")


def _probe_grid(bracket: Bracket, support: Tuple[float, float],
                knots: np.ndarray, density: int) -> np.ndarray:
    pts = [np.asarray(knots, dtype=float)]
    finite = [p for p in bracket.pieces if math.isfinite(p.a) and math.isfinite(p.b)]
    lo = min(p.a for p in finite)
    hi = max(p.b for p in finite)
    lo = max(lo, support[0] - 2.0 * (support[1] - support[0]) - 10.0)
    hi = min(hi, support[1] + 2.0 * (support[1] - support[0]) + 10.0)
    per_piece = max(16, density // max(1, len(finite)))
    for p in finite:
        a, b = max(p.a, lo), min(p.b, hi)
        if b > a:
            pts.append(np.linspace(a, b, per_piece))
    # geometric refinement near the member support endpoints, where
    # transformed functions jump to zero
    width = max(support[1] - support[0], 1e-6)
    offs = width * np.power(2.0, -np.arange(1, 28, dtype=float))
    for e in support:
        pts.append(e + offs)
        pts.append(e - offs)
    grid = np.unique(np.concatenate(pts))
    return grid[(grid >= lo) & (grid <= hi)]


def verify_bracketing(bset: BracketSet, members: Sequence[object],
                      grid_density: int = 2048) -> VerificationReport:
    """Empirical check that every member sits inside its assigned bracket.

    Coverage is tested pointwise on a probe grid (piece-aligned, refined near
    each member's support endpoints); the observed L_r bracket sizes are
    measured on the same resolution.
    """
    if len(members) == 0:
        return VerificationReport(1.0, 0.0, None, 0, vacuous=True)
    phi_space = isinstance(bset.class_descriptor,
                           (LipschitzConcaveClass, BoundedConcaveClass))
    covered = 0
    max_size = 0.0
    worst = None
    r = bset.r if math.isfinite(bset.r) else 1.0
    for idx, member in enumerate(members):
        f, support, knots = _member_view(member)
        bracket = bset.locate(member)
        grid = _probe_grid(bracket, support, knots, grid_density)
        if phi_space:
            # concave members are -inf off their domain; probe inside it
            grid = grid[(grid >= support[0]) & (grid <= support[1])]
        vals = f(grid)
        lo = bracket.lower(grid)
        up = bracket.upper(grid)
        scale = max(1.0, float(np.max(np.abs(vals))))
        ok = bool(np.all(lo <= vals + COVER_TOL * scale)
                  and np.all(vals <= up + COVER_TOL * scale))
        covered += ok
        size = bracket.size_lr(r)
        if size > max_size:
            max_size = size
            worst = idx
    return VerificationReport(covered / len(members), max_size, worst, len(members))


@dataclass
class EntropyCurve:
    eps: np.ndarray
    log_cardinality: np.ndarray
    exponent: float
    dropped: int = 0


def build_cover(descriptor, eps: float, r: float) -> BracketSet:
    """Dispatch a class descriptor to its bracketing construction."""
    if isinstance(descriptor, LipschitzConcaveClass):
        return cover_lipschitz_concave(descriptor.a, descriptor.b, descriptor.B,
                                       descriptor.Gamma, eps)
    if isinstance(descriptor, BoundedConcaveClass):
        return cover_bounded_concave(descriptor.b1, descriptor.b2, descriptor.B,
                                     eps, r)
    if isinstance(descriptor, TransformedCompactClass):
        return cover_transformed(descriptor.transform, descriptor.b1,
                                 descriptor.b2, descriptor.B, eps, r)
    if isinstance(descriptor, TailClass):
        return cover_tail_class(descriptor.transform, descriptor.M, eps, r)
    raise TypeError(f"unknown class descriptor {descriptor!r}")


def entropy_curve(descriptor, eps_grid: Sequence[float], r: float) -> EntropyCurve:
    """log-cardinality along an eps grid with the fitted entropy exponent.

    The exponent is the least-squares slope of log(log N) against log(1/eps);
    the constructions should produce values near one half.
    """
    eps_ok, logs = [], []
    dropped = 0
    for eps in eps_grid:
        try:
            bset = build_cover(descriptor, float(eps), r)
        except (ThresholdError, HypothesisError, ValueError):
            dropped += 1
            continue
        if bset.log_cardinality <= 0:
            dropped += 1
            continue
        eps_ok.append(float(eps))
        logs.append(bset.log_cardinality)
    if len(eps_ok) < 3:
        raise ValueError("fewer than 3 valid eps values; cannot fit an exponent")
    x = np.log(1.0 / np.asarray(eps_ok))
    y = np.log(np.asarray(logs))
    slope = float(np.polyfit(x, y, 1)[0])
    return EntropyCurve(np.asarray(eps_ok), np.asarray(logs), slope, dropped)


# ----------------------------------------------------------------------
# Member generators for the verification suites
# ----------------------------------------------------------------------

def _random_lipschitz_concave(a, b, B, Gamma, seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(3, 12))
    knots = np.concatenate(([a], np.sort(rng.uniform(a, b, k - 2)), [b]))
    knots = np.unique(knots)
    slopes = np.sort(rng.uniform(-Gamma, Gamma, knots.size - 1))[::-1]
    vals = rng.uniform(-B, B) + np.concatenate(([0.0], np.cumsum(slopes * np.diff(knots))))
    vmax, vmin = float(vals.max()), float(vals.min())
    if vmax - vmin > 2.0 * B:
        vals *= (2.0 * B * 0.98) / (vmax - vmin)  # shrinking keeps the slope bound
        vmax, vmin = float(vals.max()), float(vals.min())
    vals += rng.uniform(-B - vmin, B - vmax)
    return PiecewiseConcave(knots, vals)


def sample_members(descriptor, count: int, seed: int) -> list:
    """Random members of a descriptor's class, deterministic per seed."""
    out = []
    if isinstance(descriptor, LipschitzConcaveClass):
        for i in range(count):
            out.append(_random_lipschitz_concave(
                descriptor.a, descriptor.b, descriptor.B, descriptor.Gamma,
                seed * 100_003 + i))
        return out
    if isinstance(descriptor, BoundedConcaveClass):
        for i in range(count):
            out.append(sample_random(descriptor.b1, descriptor.b2, descriptor.B,
                                     int(np.random.default_rng(seed + i).integers(3, 14)),
                                     seed * 100_003 + i))
        return out
    if isinstance(descriptor, TransformedCompactClass):
        t, b1, b2, B = (descriptor.transform, descriptor.b1, descriptor.b2,
                        descriptor.B)
        top = t.inverse(B)
        for i in range(count):
            rng = np.random.default_rng(seed * 100_003 + i)
            lo = rng.uniform(b1, b1 + 0.6 * (b2 - b1))
            hi = rng.uniform(lo + 0.2 * (b2 - b1), b2)
            raw = sample_random(lo, hi, 1.0, int(rng.integers(3, 10)),
                                int(rng.integers(0, 2 ** 31)))
            span = rng.uniform(0.5, 4.0)
            vals = raw.values * span
            vals = vals - vals.max() + top - rng.uniform(0.0, 2.0)
            out.append(_TransformedMember(t, PiecewiseConcave(raw.knots, vals)))
        return out
    if isinstance(descriptor, TailClass):
        return sample_density_class_members(descriptor.transform, descriptor.M,
                                            count, seed)
    raise TypeError(f"unknown class descriptor {descriptor!r}")


def sample_density_class_members(t: Transform, M: float, count: int,
                                 seed: int) -> list:
    """Random members of the M-sandwich density class for transform t.

    The class requires total mass one with p >= 1/M on [-1, 1], so it is
    empty for M < 2 and degenerates to the uniform density on [-1, 1] at
    M = 2 (returned under varying knot layouts).  For M > 2, candidates come
    from random concave functions mapped through t with rejection on the
    class membership test.
    """
    if M < 2.0:
        return []  # mass constraint 2/M > 1 is infeasible
    out = []
    if M <= 2.0 * (1.0 + 1e-9):
        level = t.inverse(0.5)
        for i in range(count):
            rng = np.random.default_rng(seed * 100_003 + i)
            inner = np.sort(rng.uniform(-1.0, 1.0, int(rng.integers(0, 5))))
            knots = np.unique(np.concatenate(([-1.0], inner, [1.0])))
            out.append(TransformedDensity(
                t, PiecewiseConcave(knots, np.full(knots.size, level))))
        return out
    attempt = 0
    while len(out) < count and attempt < count * 500:
        rng = np.random.default_rng(seed * 100_003 + attempt)
        attempt += 1
        half = rng.uniform(1.0, 1.0 + (M - 2.0))
        raw = sample_random(-half, half, 1.0, int(rng.integers(3, 9)),
                            int(rng.integers(0, 2 ** 31)))
        span = rng.uniform(0.05, 1.5)
        vals = raw.values * span
        vals = vals - vals.max() + t.inverse(M * rng.uniform(0.3, 0.95))
        try:
            dens = TransformedDensity(t, PiecewiseConcave(raw.knots, vals))
            dens = dens.normalize()
        except Exception:
            continue
        if member_of_class(dens, M):
            out.append(dens)
    if len(out) < count:
        raise RuntimeError(
            f"could only generate {len(out)}/{count} members of the "
            f"M = {M} class for {t.kind}")
    return out


class _TransformedMember:
    """A transformed function h(phi) that may not integrate to one."""

    def __init__(self, transform: Transform, phi: PiecewiseConcave):
        self.transform = transform
        self.phi = phi

    @property
    def support(self):
        return self.phi.domain

    def pdf(self, x):
        xa = np.asarray(x, dtype=float)
        out = np.zeros_like(xa)
        lo, hi = self.phi.domain
        m = (xa >= lo) & (xa <= hi)
        if np.any(m):
            out[m] = self.transform._eval_array(self.phi.eval(xa[m]))
        return out
