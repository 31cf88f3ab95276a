"""Domain geometry and dynamic programming for the six-variable value function.

The domain Omega_Q collects 6-tuples (X, Y, x, y, u, v) of positive numbers
with x^2 <= X v, y^2 <= Y u and 1 <= u v <= Q.  This module provides:

* exact membership and closed-form segment containment (every constraint is
  a quadratic along a segment, so no sampling is needed);
* randomized verification campaigns for the two convexity-repair lemmas
  (triangle/median and barycenter);
* a depth-limited dynamic-programming lower estimate of the value function,
  with gain |dx||dy| per node split;
* extraction of domain points from concrete dyadic data, together with the
  localized key sum they witness.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .tree import (
    DomainError,
    DyadicIndex,
    LeafFunction,
    level_averages,
    level_diffs,
)
from .weights import Weight, a2_characteristic

# Gain per node is GAIN_FACTOR * |x_+ - x_-| * |y_+ - y_-| / 4.  The factor
# is calibrated against concrete dyadic data (see calibrate_gain) and kept
# at one named constant.
GAIN_FACTOR = 1.0

_XY_FRACS = (0.25, 0.5, 0.75, 1.0)
_XY_STEP = 0.125  # quantization of x, y as fractions of their caps
_LOG_STEP = 0.25  # quantization of log X, log Y, log u, log v

DEFAULT_K_GRID = (1.0, 1.5, 2.0, 3.0, 4.0, 4.5, 6.0, 9.0, 20.0, 40.0)


@dataclass(frozen=True)
class BellmanPoint:
    X: float
    Y: float
    x: float
    y: float
    u: float
    v: float

    def as_array(self) -> np.ndarray:
        return np.array([self.X, self.Y, self.x, self.y, self.u, self.v])

    @classmethod
    def from_array(cls, arr) -> "BellmanPoint":
        return cls(*[float(t) for t in arr])

    def swapped(self) -> "BellmanPoint":
        """The (X, x, v) <-> (Y, y, u) symmetry of the domain."""
        return BellmanPoint(X=self.Y, Y=self.X, x=self.y, y=self.x, u=self.v, v=self.u)


@dataclass(frozen=True)
class OmegaDomain:
    Q: float

    def __post_init__(self):
        if self.Q < 1.0:
            raise DomainError("domain parameter must be >= 1")

    def contains(self, p: BellmanPoint, tol: float = 0.0) -> bool:
        return in_domain(p, self.Q, tol)


def in_domain(p: BellmanPoint, Q: float, tol: float = 0.0) -> bool:
    if Q < 1.0:
        raise DomainError("domain parameter must be >= 1")
    if min(p.X, p.Y, p.u, p.v) <= 0.0:
        return False
    return (
        p.x * p.x <= p.X * p.v + tol
        and p.y * p.y <= p.Y * p.u + tol
        and 1.0 - tol <= p.u * p.v <= Q + tol
    )


def _quad_max_01(g0: float, g1: float, g2: float) -> float:
    """Max of g0 + g1 t + g2 t^2 over t in [0, 1]."""
    best = max(g0, g0 + g1 + g2)
    if g2 < 0.0:
        t = -g1 / (2.0 * g2)
        if 0.0 < t < 1.0:
            best = max(best, g0 + g1 * t + g2 * t * t)
    return best


def _segment_quads(p: BellmanPoint, q: BellmanPoint):
    """Constraint quadratics g(t) (violation iff g > 0) along p + t(q - p)."""
    dX, dY = q.X - p.X, q.Y - p.Y
    dx, dy = q.x - p.x, q.y - p.y
    du, dv = q.u - p.u, q.v - p.v
    quads = [
        # x(t)^2 - X(t) v(t) <= 0
        (p.x * p.x - p.X * p.v, 2 * p.x * dx - (p.X * dv + p.v * dX), dx * dx - dX * dv),
        # y(t)^2 - Y(t) u(t) <= 0
        (p.y * p.y - p.Y * p.u, 2 * p.y * dy - (p.Y * du + p.u * dY), dy * dy - dY * du),
        # u(t) v(t) - Q <= 0 (Q subtracted by the caller)
        (p.u * p.v, p.u * dv + p.v * du, du * dv),
        # 1 - u(t) v(t) <= 0
        (1.0 - p.u * p.v, -(p.u * dv + p.v * du), -du * dv),
    ]
    return quads


def segment_in_domain(p: BellmanPoint, q: BellmanPoint, Q: float, tol: float = 0.0) -> bool:
    """Closed-form check that the whole segment [p, q] lies in Omega_Q."""
    if Q < 1.0:
        raise DomainError("domain parameter must be >= 1")
    # positivity of X, Y, u, v is linear: endpoints suffice
    for c in ("X", "Y", "u", "v"):
        if getattr(p, c) <= 0.0 or getattr(q, c) <= 0.0:
            return False
    quads = _segment_quads(p, q)
    if _quad_max_01(*quads[0]) > tol:
        return False
    if _quad_max_01(*quads[1]) > tol:
        return False
    if _quad_max_01(*quads[2]) - Q > tol:
        return False
    if _quad_max_01(quads[3][0], quads[3][1], quads[3][2]) > tol:
        return False
    return True


def segment_max_uv(p: BellmanPoint, q: BellmanPoint) -> float:
    """Max of u(t) v(t) along the segment (closed form)."""
    g0, g1, g2 = _segment_quads(p, q)[2]
    return _quad_max_01(g0, g1, g2)


# -- vectorized segment utilities (campaign scale) ------------------------


def _quad_max_01_arr(g0, g1, g2):
    best = np.maximum(g0, g0 + g1 + g2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(g2 < 0.0, -g1 / (2.0 * g2), -1.0)
    interior = (t > 0.0) & (t < 1.0)
    vertex = g0 + g1 * t + g2 * t * t
    return np.where(interior & (g2 < 0.0), np.maximum(best, vertex), best)


def _segments_quads_arr(P: np.ndarray, R: np.ndarray):
    X, Y, x, y, u, v = (P[:, i] for i in range(6))
    d = R - P
    dX, dY, dx, dy, du, dv = (d[:, i] for i in range(6))
    qx = (x * x - X * v, 2 * x * dx - (X * dv + v * dX), dx * dx - dX * dv)
    qy = (y * y - Y * u, 2 * y * dy - (Y * du + u * dY), dy * dy - dY * du)
    quv = (u * v, u * dv + v * du, du * dv)
    return qx, qy, quv


def segments_in_domain_arr(P: np.ndarray, R: np.ndarray, Q: float, tol: float = 0.0):
    """Vectorized segment containment for (n, 6) endpoint arrays."""
    qx, qy, quv = _segments_quads_arr(P, R)
    pos = np.ones(P.shape[0], dtype=bool)
    for i in (0, 1, 4, 5):
        pos &= (P[:, i] > 0.0) & (R[:, i] > 0.0)
    ok = pos
    ok = ok & (_quad_max_01_arr(*qx) <= tol)
    ok = ok & (_quad_max_01_arr(*qy) <= tol)
    ok = ok & (_quad_max_01_arr(*quv) <= Q + tol)
    g0, g1, g2 = quv
    ok = ok & (_quad_max_01_arr(1.0 - g0, -g1, -g2) <= tol)
    return ok


def segments_max_uv_arr(P: np.ndarray, R: np.ndarray):
    qx, qy, quv = _segments_quads_arr(P, R)
    return _quad_max_01_arr(*quv)


def segments_caps_ok_arr(P: np.ndarray, R: np.ndarray, tol: float = 0.0):
    """The Q-independent constraints along the segments (caps, uv >= 1, positivity)."""
    qx, qy, quv = _segments_quads_arr(P, R)
    pos = np.ones(P.shape[0], dtype=bool)
    for i in (0, 1, 4, 5):
        pos &= (P[:, i] > 0.0) & (R[:, i] > 0.0)
    g0, g1, g2 = quv
    return (
        pos
        & (_quad_max_01_arr(*qx) <= tol)
        & (_quad_max_01_arr(*qy) <= tol)
        & (_quad_max_01_arr(1.0 - g0, -g1, -g2) <= tol)
    )


def in_domain_arr(P: np.ndarray, Q: float, tol: float = 0.0):
    X, Y, x, y, u, v = (P[:, i] for i in range(6))
    pos = (X > 0) & (Y > 0) & (u > 0) & (v > 0)
    return (
        pos
        & (x * x <= X * v + tol)
        & (y * y <= Y * u + tol)
        & (u * v >= 1.0 - tol)
        & (u * v <= Q + tol)
    )


# -- sampling -------------------------------------------------------------


def sample_omega(Q: float, n: int, rng, boundary_prob: float = 0.1,
                 log_spread: float = np.log(10.0)) -> np.ndarray:
    """Random members of Omega_Q with full boundary coverage, as an (n, 6) array.

    uv is log-uniform in [1, Q] and split log-uniformly; x and y are drawn as
    signed fractions of their caps, with a boundary_prob chance of sitting
    exactly on the cap.
    """
    P = np.exp(rng.uniform(0.0, np.log(Q), size=n)) if Q > 1 else np.ones(n)
    h = rng.uniform(-log_spread, log_spread, size=n)
    u = np.sqrt(P) * np.exp(h)
    v = P / u
    X = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n))
    Y = np.exp(rng.uniform(np.log(1e-2), np.log(1e2), size=n))
    fx = rng.uniform(0.0, 1.0, size=n)
    fy = rng.uniform(0.0, 1.0, size=n)
    fx = np.where(rng.uniform(size=n) < boundary_prob, 1.0, fx)
    fy = np.where(rng.uniform(size=n) < boundary_prob, 1.0, fy)
    sx = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    sy = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    x = sx * fx * np.sqrt(X * v)
    y = sy * fy * np.sqrt(Y * u)
    # exact-cap draws can land an ulp outside under exact comparisons; nudge in
    for _ in range(4):
        x = np.where(x * x > X * v, x * (1.0 - 4e-16), x)
        y = np.where(y * y > Y * u, y * (1.0 - 4e-16), y)
        uv = u * v
        f = np.where(uv > Q, 1.0 - 4e-16, np.where(uv < 1.0, 1.0 + 4e-16, 1.0))
        u = u * f
        v = v * f
    return np.column_stack([X, Y, x, y, u, v])


def _sample_strip(Q: float, n: int, rng, log_spread: float = np.log(10.0)):
    """(u, v) pairs in the hyperbolic strip 1 <= uv <= Q."""
    P = np.exp(rng.uniform(0.0, np.log(Q), size=n)) if Q > 1 else np.ones(n)
    h = rng.uniform(-log_spread, log_spread, size=n)
    u = np.sqrt(P) * np.exp(h)
    return u, P / u


def _slack_points(u: np.ndarray, v: np.ndarray, big: float = 1e6) -> np.ndarray:
    """Embed strip points into 6-tuples with slack remaining coordinates."""
    n = u.size
    out = np.empty((n, 6))
    out[:, 0] = big
    out[:, 1] = big
    out[:, 2] = 0.0
    out[:, 3] = 0.0
    out[:, 4] = u
    out[:, 5] = v
    return out


# -- lemma checks ---------------------------------------------------------


@dataclass
class LemmaReport:
    lemma: str
    vacuous: bool
    holds_at: Dict[float, bool] = field(default_factory=dict)
    min_k_holding: Optional[float] = None
    needed_k: Optional[float] = None
    detail: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "vacuous": self.vacuous,
            "holds_at": {str(k): bool(b) for k, b in self.holds_at.items()},
            "min_k_holding": self.min_k_holding,
            "needed_k": self.needed_k,
            "detail": self.detail,
        }


def _midpoint(a: BellmanPoint, b: BellmanPoint) -> BellmanPoint:
    return BellmanPoint.from_array((a.as_array() + b.as_array()) / 2.0)


def triangle_lemma_check(A: BellmanPoint, B: BellmanPoint, C: BellmanPoint,
                         Q: float, k_grid=DEFAULT_K_GRID,
                         tol: float = 1e-12) -> LemmaReport:
    """Median-repair lemma: membership of A, B, C, [A,B] and [C, mid(A,B)]
    in Omega_Q forces [C,A] and [C,B] into an enlarged domain."""
    M = _midpoint(A, B)
    premises = (
        in_domain(A, Q, tol) and in_domain(B, Q, tol) and in_domain(C, Q, tol)
        and segment_in_domain(A, B, Q, tol) and segment_in_domain(C, M, Q, tol)
    )
    rep = LemmaReport(lemma="triangle", vacuous=not premises)
    if not premises:
        return rep
    for k in k_grid:
        ok = segment_in_domain(C, A, k * Q, tol) and segment_in_domain(C, B, k * Q, tol)
        rep.holds_at[k] = ok
        if ok and rep.min_k_holding is None:
            rep.min_k_holding = k
    if segment_in_domain(C, A, np.inf, tol) and segment_in_domain(C, B, np.inf, tol):
        rep.needed_k = max(
            1.0, max(segment_max_uv(C, A), segment_max_uv(C, B)) / Q
        )
    return rep


def barycenter_lemma_check(P1, P2, P3, P4, Q: float, k_grid=DEFAULT_K_GRID,
                           tol: float = 1e-12) -> LemmaReport:
    """Barycenter lemma: if the four points and their barycenter are members,
    the four connecting segments lie in the 40-fold enlarged domain."""
    pts = [P1, P2, P3, P4]
    P = BellmanPoint.from_array(np.mean([p.as_array() for p in pts], axis=0))
    premises = in_domain(P, Q, tol) and all(in_domain(p, Q, tol) for p in pts)
    rep = LemmaReport(lemma="barycenter", vacuous=not premises)
    if not premises:
        return rep
    for k in k_grid:
        ok = all(segment_in_domain(P, p, k * Q, tol) for p in pts)
        rep.holds_at[k] = ok
        if ok and rep.min_k_holding is None:
            rep.min_k_holding = k
    if all(segment_in_domain(P, p, np.inf, tol) for p in pts):
        rep.needed_k = max(1.0, max(segment_max_uv(P, p) for p in pts) / Q)
    return rep


@dataclass
class CampaignReport:
    lemma: str
    trials_valid: int
    trials_total: int
    violations: int
    max_needed_k: float
    asserted_k: float
    worst_case_point: Optional[list]

    def to_json(self) -> dict:
        return {
            "lemma": self.lemma,
            "trials": self.trials_valid,
            "trials_total": self.trials_total,
            "vacuous": self.trials_total - self.trials_valid,
            "violations": self.violations,
            "min_k_holding": self.max_needed_k,
            "asserted_k": self.asserted_k,
            "worst_case_point": self.worst_case_point,
        }


def run_triangle_campaign(Q: float, valid_trials: int, seed: int,
                          asserted_k: float = 4.5, tol: float = 1e-12,
                          batch: int = 40000) -> CampaignReport:
    """Randomized verification of the median-repair lemma on slack-coordinate
    triples (rejection sampling in the hyperbolic strip)."""
    rng = np.random.default_rng(seed)
    valid = total = violations = 0
    max_needed = 1.0
    worst = None
    while valid < valid_trials:
        ua, va = _sample_strip(Q, batch, rng)
        ub, vb = _sample_strip(Q, batch, rng)
        uc, vc = _sample_strip(Q, batch, rng)
        A = _slack_points(ua, va)
        B = _slack_points(ub, vb)
        C = _slack_points(uc, vc)
        M = (A + B) / 2.0
        total += batch
        prem = segments_in_domain_arr(A, B, Q, tol) & segments_in_domain_arr(C, M, Q, tol)
        idx = np.nonzero(prem)[0]
        if idx.size == 0:
            continue
        take = idx[: valid_trials - valid] if valid + idx.size > valid_trials else idx
        a, b, c = A[take], B[take], C[take]
        caps_ok = segments_caps_ok_arr(c, a, tol) & segments_caps_ok_arr(c, b, tol)
        needed = np.maximum(segments_max_uv_arr(c, a), segments_max_uv_arr(c, b)) / Q
        needed = np.maximum(needed, 1.0)
        needed = np.where(caps_ok, needed, np.inf)
        bad = needed > asserted_k * (1.0 + 1e-12)
        violations += int(np.sum(bad))
        k = int(np.argmax(needed))
        if needed[k] > max_needed:
            max_needed = float(needed[k])
            worst = [a[k].tolist(), b[k].tolist(), c[k].tolist()]
        valid += take.size
    return CampaignReport(
        lemma="triangle", trials_valid=valid, trials_total=total,
        violations=violations, max_needed_k=max_needed, asserted_k=asserted_k,
        worst_case_point=worst,
    )


def run_barycenter_campaign(Q: float, valid_trials: int, seed: int,
                            asserted_k: float = 40.0, tol: float = 1e-12,
                            batch: int = 40000) -> CampaignReport:
    """Randomized verification of the barycenter lemma on general members."""
    rng = np.random.default_rng(seed)
    valid = total = violations = 0
    max_needed = 1.0
    worst = None
    while valid < valid_trials:
        pts = [sample_omega(Q, batch, rng) for _ in range(4)]
        P = sum(pts) / 4.0
        total += batch
        member = in_domain_arr(P, Q, tol)
        for arr in pts:
            member &= in_domain_arr(arr, Q, tol)
        idx = np.nonzero(member)[0]
        if idx.size == 0:
            continue
        take = idx[: valid_trials - valid] if valid + idx.size > valid_trials else idx
        needed = np.ones(take.size)
        caps_ok = np.ones(take.size, dtype=bool)
        for arr in pts:
            caps_ok &= segments_caps_ok_arr(P[take], arr[take], tol)
            needed = np.maximum(needed, segments_max_uv_arr(P[take], arr[take]) / Q)
        needed = np.where(caps_ok, needed, np.inf)
        bad = needed > asserted_k * (1.0 + 1e-12)
        violations += int(np.sum(bad))
        k = int(np.argmax(needed))
        if needed[k] > max_needed:
            max_needed = float(needed[k])
            worst = [P[take][k].tolist()] + [arr[take][k].tolist() for arr in pts]
        valid += take.size
    return CampaignReport(
        lemma="barycenter", trials_valid=valid, trials_total=total,
        violations=violations, max_needed_k=max_needed, asserted_k=asserted_k,
        worst_case_point=worst,
    )


# -- node splits ----------------------------------------------------------


@dataclass(frozen=True)
class NodeSplit:
    """A grandparent point with its two children and four grandchildren.

    Midpoint coherence (each parent is the coordinatewise midpoint of its two
    children) holds by construction.  The named increments follow the x and y
    coordinates: children move by (alpha, lam), grandchildren by
    (beta1, delta1) under the + child and (beta2, delta2) under the - child.
    """

    b: BellmanPoint
    b_plus: BellmanPoint
    b_minus: BellmanPoint
    b_pp: BellmanPoint
    b_pm: BellmanPoint
    b_mp: BellmanPoint
    b_mm: BellmanPoint

    @classmethod
    def from_grandchildren(cls, b_pp, b_pm, b_mp, b_mm) -> "NodeSplit":
        b_plus = _midpoint(b_pp, b_pm)
        b_minus = _midpoint(b_mp, b_mm)
        return cls(b=_midpoint(b_plus, b_minus), b_plus=b_plus, b_minus=b_minus,
                   b_pp=b_pp, b_pm=b_pm, b_mp=b_mp, b_mm=b_mm)

    @property
    def alpha(self) -> float:
        return self.b_plus.x - self.b.x

    @property
    def lam(self) -> float:
        return self.b_plus.y - self.b.y

    @property
    def beta1(self) -> float:
        return self.b_pp.x - self.b_plus.x

    @property
    def delta1(self) -> float:
        return self.b_pp.y - self.b_plus.y

    @property
    def beta2(self) -> float:
        return self.b_mp.x - self.b_minus.x

    @property
    def delta2(self) -> float:
        return self.b_mp.y - self.b_minus.y

    def all_points(self) -> List[BellmanPoint]:
        return [self.b, self.b_plus, self.b_minus,
                self.b_pp, self.b_pm, self.b_mp, self.b_mm]


def node_pattern_check(split: NodeSplit, Q: float, tol: float = 1e-12) -> dict:
    """The application pattern of the geometric lemmas at one node: children
    segments sit in the doubled domain, grandchildren segments in the
    40-fold domain."""
    member = all(in_domain(p, Q, tol) for p in split.all_points())
    out = {"members": member}
    if not member:
        return out
    out["child_segments_2Q"] = (
        segment_in_domain(split.b, split.b_plus, 2.0 * Q, tol)
        and segment_in_domain(split.b, split.b_minus, 2.0 * Q, tol)
    )
    out["grandchild_segments_40Q"] = all(
        segment_in_domain(split.b, g, 40.0 * Q, tol)
        for g in (split.b_pp, split.b_pm, split.b_mp, split.b_mm)
    )
    return out


def node_defect(split: NodeSplit, Q: float,
                evaluator: Callable[[BellmanPoint], float],
                tol: float = 1e-12) -> Tuple[float, float, Optional[float]]:
    """Defect of the evaluator at the node against the target lower bound.

    D = evaluator(b) - (1/4) sum evaluator(b_ij);
    rhs = |alpha| (|delta1| + |delta2|).  Returns (D, rhs, D/rhs or None).
    """
    for p in split.all_points():
        if not in_domain(p, Q, tol):
            raise DomainError(f"split point {p} outside the domain")
    d = evaluator(split.b) - 0.25 * (
        evaluator(split.b_pp) + evaluator(split.b_pm)
        + evaluator(split.b_mp) + evaluator(split.b_mm)
    )
    rhs = abs(split.alpha) * (abs(split.delta1) + abs(split.delta2))
    c = d / rhs if rhs > 0 else None
    return d, rhs, c


# -- dynamic programming estimator ----------------------------------------


def _snap(arr: np.ndarray, Q: float) -> np.ndarray:
    """Quantize a member point onto the memoization grid, staying inside."""
    X, Y, x, y, u, v = arr
    X = np.exp(round(np.log(X) / _LOG_STEP) * _LOG_STEP)
    Y = np.exp(round(np.log(Y) / _LOG_STEP) * _LOG_STEP)
    u = np.exp(round(np.log(u) / _LOG_STEP) * _LOG_STEP)
    v = np.exp(round(np.log(v) / _LOG_STEP) * _LOG_STEP)
    P = u * v
    if P > Q:
        f = np.sqrt(Q / P) * (1.0 - 1e-14)
        u *= f
        v *= f
    elif P < 1.0:
        f = np.sqrt(1.0 / P) * (1.0 + 1e-14)
        u *= f
        v *= f
    cx = np.sqrt(X * v)
    cy = np.sqrt(Y * u)
    x = np.clip(round((x / cx) / _XY_STEP) * _XY_STEP, -1.0, 1.0) * cx
    y = np.clip(round((y / cy) / _XY_STEP) * _XY_STEP, -1.0, 1.0) * cy
    return np.array([X, Y, x, y, u, v])


def _key(arr: np.ndarray) -> tuple:
    return tuple(np.round(arr, 10))


def _node_rng(arr: np.ndarray, seed: int):
    """Seeded per-node generator, equivariant under the X<->Y symmetry."""
    k = _key(arr)
    swapped = (k[1], k[0], k[3], k[2], k[5], k[4])
    canonical = min(k, swapped)
    crc = zlib.crc32(repr(canonical).encode())
    rng = np.random.default_rng([seed & 0xFFFFFFFF, crc])
    return rng, canonical != k


def _in_domain_arr6(arr: np.ndarray, Q: float) -> bool:
    X, Y, x, y, u, v = arr
    return (
        min(X, Y, u, v) > 0.0
        and x * x <= X * v
        and y * y <= Y * u
        and 1.0 <= u * v <= Q
    )


def _xy_game_value(arr: np.ndarray) -> float:
    """Exact value of the x,y-only split game at fixed (X, Y, u, v).

    With gx = Xv - x^2 and gy = Yu - y^2, the value is sqrt(gx * gy):
    it dominates one split plus the children average because
    sqrt(gx gy) >= |t||s| + sqrt((gx - t^2)(gy - s^2)) (square both sides
    and apply AM-GM to s^2 (gx - t^2) + t^2 (gy - s^2)), and increment
    strategies with |t|/|s| = sqrt(gx/gy) approach it as the splits refine,
    so it is the supremum of the depth-limited values over all depths."""
    X, Y, x, y, u, v = arr
    return GAIN_FACTOR * float(
        np.sqrt(max(X * v - x * x, 0.0) * max(Y * u - y * y, 0.0))
    )


class DpEstimator:
    """Memoized depth-limited lower estimate of the value function on Omega_Q.

    B^0 = 0 and B^d(p) is the best found over candidate midpoint splits of
    (average of children values) + GAIN_FACTOR |dx||dy|.  Candidates are the
    null split (making the estimate monotone in depth), a deterministic grid
    of one-step x/y-only splits, the exactly solved x/y-only split game
    (_xy_game_value, attached once two or more levels remain), and seeded
    random six-coordinate directions (a prefix sequence, making the estimate
    monotone in the sample count).

    Random directions are explored at the query point only; the subtrees
    under every candidate child are valued by the analytic x/y game, which
    they cannot beat (it is a supersolution of the x/y-only recursion), so
    deep estimates cost one closed-form evaluation per child and the
    estimate is depth-stable once every tail is summed analytically."""

    def __init__(self, Q: float, samples: int = 6, seed: int = 0):
        if Q < 1.0:
            raise DomainError("domain parameter must be >= 1")
        self.Q = Q
        self.samples = samples
        self.seed = seed
        self.memo: Dict[tuple, float] = {}

    def estimate(self, p: BellmanPoint, depth: int) -> float:
        if not in_domain(p, self.Q):
            raise DomainError("point outside the domain")
        if depth < 0:
            raise DomainError("depth must be >= 0")
        return self._rec(p.as_array(), depth, root=True)

    def b1_ratio(self, p: BellmanPoint, depth: int) -> float:
        return self.estimate(p, depth) / (self.Q * (p.X + p.Y))

    def _rec(self, arr: np.ndarray, d: int, root: bool = False) -> float:
        if d == 0:
            return 0.0
        key = (_key(arr), d, root)
        if key in self.memo:
            return self.memo[key]
        # null split keeps the point; it makes the estimate monotone in depth
        best = self._rec(arr, d - 1, root=root) if d > 1 else 0.0
        if d >= 2:
            # exact x/y-only tail value; it dominates every one-step x/y
            # split followed by further x/y play, so those are only searched
            # explicitly where a genuine one-step value is needed
            best = max(best, _xy_game_value(arr))
        if root or d == 1:
            X, Y, x, y, u, v = arr
            cx = np.sqrt(X * v)
            cy = np.sqrt(Y * u)
            tmax = cx - abs(x)
            smax = cy - abs(y)
            eq = min(tmax, smax)
            for fr in _XY_FRACS:
                # proportional moves plus equal-increment moves in both sign
                # patterns (|dx||dy| = (dx^2 + dy^2)/2 when |dx| = |dy|)
                for t, s in ((fr * tmax, fr * smax),
                             (fr * eq, fr * eq),
                             (fr * eq, -fr * eq)):
                    if t == 0.0 or s == 0.0:
                        continue
                    plus = arr.copy()
                    minus = arr.copy()
                    plus[2] += t
                    plus[3] += s
                    minus[2] -= t
                    minus[3] -= s
                    sp = _snap(plus, self.Q)
                    sm = _snap(minus, self.Q)
                    val = 0.5 * (
                        self._rec(sp, d - 1) + self._rec(sm, d - 1)
                    ) + GAIN_FACTOR * abs(t) * abs(s)
                    best = max(best, val)
        if root:
            rng, swap = self._directions(arr)
            for delta in rng:
                if swap:
                    delta = delta[[1, 0, 3, 2, 5, 4]]
                val = self._try_direction(arr, delta, d)
                if val is not None:
                    best = max(best, val)
        self.memo[key] = best
        return best

    def _directions(self, arr: np.ndarray):
        rng, swapped = _node_rng(arr, self.seed)
        base = arr if not swapped else arr[[1, 0, 3, 2, 5, 4]]
        X, Y, x, y, u, v = base
        scales = np.array([0.3 * X, 0.3 * Y, 0.5 * np.sqrt(X * v),
                           0.5 * np.sqrt(Y * u), 0.2 * u, 0.2 * v])
        dirs = rng.standard_normal((self.samples, 6)) * scales[None, :]
        return list(dirs), swapped

    def _try_direction(self, arr: np.ndarray, delta: np.ndarray, d: int):
        parent = _key(arr)
        for _ in range(8):
            plus = arr + delta
            minus = arr - delta
            if _in_domain_arr6(plus, self.Q) and _in_domain_arr6(minus, self.Q):
                sp = _snap(plus, self.Q)
                sm = _snap(minus, self.Q)
                if _key(sp) == parent and _key(sm) == parent:
                    return None
                gain = GAIN_FACTOR * abs(delta[2]) * abs(delta[3])
                return 0.5 * (self._rec(sp, d - 1) + self._rec(sm, d - 1)) + gain
            delta = delta / 2.0
        return None


def dp_estimate(p: BellmanPoint, Q: float, depth: int, samples: int, seed: int) -> float:
    """One-shot convenience wrapper around DpEstimator."""
    return DpEstimator(Q=Q, samples=samples, seed=seed).estimate(p, depth)


# -- dyadic data ----------------------------------------------------------


def point_from_data(phi: LeafFunction, psi: LeafFunction, w: Weight,
                    J: DyadicIndex) -> Tuple[BellmanPoint, float]:
    """Six interval averages at J plus the localized key sum they witness."""
    depth = w.depth
    if phi.depth != depth or psi.depth != depth:
        raise StructureError("depth mismatch")
    if J.level > depth:
        raise DomainError("interval below leaf level")
    sig_vals = 1.0 / w.values
    sl = J.leaf_slice(depth)
    # <w>_J and <sigma>_J use the same pairwise halving as a2_characteristic,
    # so u*v here is bitwise one of the products whose max defines Q and
    # u*v <= Q holds in floating point, not just in exact arithmetic
    u = float(level_averages(w.values)[J.level][J.position])
    v = float(level_averages(sig_vals)[J.level][J.position])
    X = float(np.mean(phi.values[sl] ** 2 * w.values[sl]))
    Y = float(np.mean(psi.values[sl] ** 2 * sig_vals[sl]))
    x = float(np.mean(phi.values[sl]))
    y = float(np.mean(psi.values[sl]))
    # the remaining constraints (Cauchy-Schwarz, u*v >= 1) are theorem-true
    # but can overshoot by an ulp in floating point; pull back minimally
    for _ in range(4):
        if x * x > X * v:
            x *= 1.0 - 4e-16
        if y * y > Y * u:
            y *= 1.0 - 4e-16
        if u * v < 1.0:
            u *= 1.0 + 4e-16
    point = BellmanPoint(X=X, Y=Y, x=x, y=y, u=u, v=v)
    da = level_diffs(level_averages(phi.values * w.values))
    db = level_diffs(level_averages(psi.values * sig_vals))
    total = 0.0
    for lev in range(J.level, depth):
        span = 1 << (lev - J.level)
        s = slice(J.position * span, (J.position + 1) * span)
        total += 2.0**-lev * np.sum(np.abs(da[lev][s]) * np.abs(db[lev][s]))
    local_sum = total / J.length
    return point, float(local_sum)


def calibrate_gain(phi: LeafFunction, psi: LeafFunction, w: Weight,
                   J: DyadicIndex, samples: int = 6, seed: int = 0) -> dict:
    """Compare the localized key sum against the DP estimate at its point.

    The recursion's gain convention is implicit in the source material; this
    reports local_sum / dp_estimate so the discrepancy (if any) is visible
    rather than hidden.  Ratios <= 1 mean the DP sup dominates the witness.
    """
    q = a2_characteristic(w).characteristic
    point, local = point_from_data(phi, psi, w, J)
    d = w.depth - J.level
    est = dp_estimate(point, q, d, samples, seed)
    return {
        "local_sum": local,
        "dp_estimate": est,
        "ratio": local / est if est > 0 else (0.0 if local == 0 else np.inf),
        "dp_depth": d,
    }


def tree_sum_ratio(f1: LeafFunction, f2: LeafFunction, w: Weight,
                   I: DyadicIndex) -> Tuple[float, float, float]:
    """Node-sum inequality over the subtree of I, dimensionally consistent
    reading: lhs = sum_{J in I} |J| |Delta_J f1| (|Delta_{J-} f2| + |Delta_{J+} f2|),
    rhs0 = 40 Q (<f1^2 w>_I + <f2^2 sigma>_I) |I|.  Returns (lhs, rhs0, lhs/rhs0).
    """
    depth = w.depth
    if f1.depth != depth or f2.depth != depth:
        raise StructureError("depth mismatch")
    d1 = level_diffs(level_averages(f1.values))
    d2 = level_diffs(level_averages(f2.values))
    lhs = 0.0
    for lev in range(I.level, depth - 1):
        span = 1 << (lev - I.level)
        s = slice(I.position * span, (I.position + 1) * span)
        kids = np.abs(d2[lev + 1]).reshape(-1, 2).sum(axis=1)
        lhs += 2.0**-lev * np.sum(np.abs(d1[lev][s]) * kids[s])
    q = a2_characteristic(w).characteristic
    sl = I.leaf_slice(depth)
    sig = 1.0 / w.values
    rhs0 = 40.0 * q * (
        float(np.mean(f1.values[sl] ** 2 * w.values[sl]))
        + float(np.mean(f2.values[sl] ** 2 * sig[sl]))
    ) * I.length
    return float(lhs), rhs0, float(lhs / rhs0) if rhs0 > 0 else 0.0
