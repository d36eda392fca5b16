"""Wrench-space grasp stability: force closure and the Q1 inscribed-radius metric.

A grasp's contacts are expanded into linearized friction-cone edge wrenches
(unit forces; torques about the object COM, divided by a characteristic length
so the two halves are commensurate). Q1 is the radius of the largest
origin-centered Euclidean ball that fits inside the convex hull of those
wrenches: 0 means the grasp cannot resist some disturbance direction at all,
larger means a stronger worst-case resistance. Two independent routes are
kept: `q1` enumerates hull facets, `force_closure` solves an inclusion LP;
their positivity agrees exactly and they cross-check each other.

The tangent azimuth at each contact is anchored to the lever arm, so a rigid
rotation of the contact set rotates every cone edge with it and Q1 is exactly
rotation invariant (not just in the limit of many edges).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError


@dataclass
class WrenchSet:
    """Friction-cone edge wrenches for a contact set.

    ``contacts`` holds (point, inward unit normal, mu) triples; each contributes
    exactly ``k`` wrenches. Torque arms are taken about ``origin`` (object COM)
    and divided by ``scale`` (object bbox max side).
    """

    contacts: list
    origin: np.ndarray
    scale: float
    k: int = 8
    wrenches: np.ndarray = field(default_factory=lambda: np.zeros((0, 6)))

    @classmethod
    def build(cls, contacts, origin, scale, k: int = 8) -> "WrenchSet":
        if k < 3:
            raise ValueError("need at least 3 cone edges")
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        origin = np.asarray(origin, dtype=np.float64).reshape(3)
        rows = []
        kept = []
        for point, normal, mu in contacts:
            p = np.asarray(point, dtype=np.float64).reshape(3)
            n = np.asarray(normal, dtype=np.float64).reshape(3)
            n = n / np.linalg.norm(n)
            kept.append((p, n, float(mu)))
            rows.append(_cone_edges(p, n, float(mu), origin, scale, k))
        wrenches = np.vstack(rows) if rows else np.zeros((0, 6))
        return cls(kept, origin, float(scale), k, wrenches)

    def to_json(self) -> str:
        return json.dumps({
            "origin": self.origin.tolist(), "scale": self.scale, "k": self.k,
            "contacts": [[p.tolist(), n.tolist(), mu]
                         for p, n, mu in self.contacts]})

    @classmethod
    def from_json(cls, text: str) -> "WrenchSet":
        d = json.loads(text)
        return cls.build(d["contacts"], d["origin"], d["scale"], d["k"])


def _cone_edges(p, n, mu, origin, scale, k):
    """k unit-force edge wrenches of one contact's linearized friction cone."""
    arm = p - origin
    t1 = np.cross(n, arm)
    if np.linalg.norm(t1) < 1e-12:
        # lever arm parallel to the normal: fall back to the least-aligned axis
        axis = np.zeros(3)
        axis[int(np.argmin(np.abs(n)))] = 1.0
        t1 = np.cross(n, axis)
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    phi = 2.0 * np.pi * np.arange(k) / k
    dirs = (n[None, :] + mu * (np.cos(phi)[:, None] * t1
                               + np.sin(phi)[:, None] * t2))
    dirs /= np.sqrt(1.0 + mu * mu)
    return np.hstack([dirs, np.cross(np.broadcast_to(arm, dirs.shape), dirs)
                      / scale])


def grasp_wrench_set(contact_list, mu, origin, scale, k: int = 8) -> WrenchSet:
    """WrenchSet from solver contacts; pin and plate rows only.

    Ground contacts are excluded: the metric scores the grasp, not the table.
    """
    triples = [(c.point, c.normal, mu) for c in contact_list
               if c.kind != "ground"]
    return WrenchSet.build(triples, origin, scale, k)


# ---------------------------------------------------------------------------
# Q1: inscribed-radius of the wrench hull
# ---------------------------------------------------------------------------

def q1(ws: WrenchSet, variant: str = "l1") -> float:
    """Largest r with the origin-centered r-ball inside the wrench hull; 0 = no closure.

    "l1" (default) pools all edge wrenches into one hull (total contact force
    bounded); "linf" lets every contact push at full strength simultaneously
    (Minkowski-sum combination). The inscribed ball is Euclidean, which makes
    the metric exactly invariant under rigid rotations of the contact set.
    """
    if len(ws.wrenches) == 0:
        return 0.0
    if variant == "linf":
        return _q1_linf(ws)
    if variant != "l1":
        raise ValueError(f"unknown variant {variant!r}")
    w = ws.wrenches
    if np.linalg.matrix_rank(w, tol=1e-10) < 6:
        return 0.0
    try:
        hull = ConvexHull(w)
    except QhullError:
        # symmetric pin grids produce many cospherical points that can break
        # qhull's facet merging even at full rank; joggle (~1e-10) and retry
        try:
            hull = ConvexHull(w, qhull_options="QJ")
        except QhullError:
            return 0.0
    a = hull.equations[:, :6]
    b = -hull.equations[:, 6]          # facets: a @ x <= b, origin side b > 0
    ratios = b / np.linalg.norm(a, axis=1)
    return float(max(0.0, ratios.min()))


def _q1_linf(ws: WrenchSet, n_starts: int = 64, iters: int = 500) -> float:
    """Minkowski-sum variant: minimize the summed per-contact supports.

    The summed support of the per-contact hulls (each padded with the zero
    wrench, i.e. a contact may push anywhere in its cone or not at all) is
    minimized over the unit sphere by multistart projected subgradient. The
    estimate upper-bounds the true value, so `linf >= l1` stays honest.
    """
    m = len(ws.contacts)
    per = [ws.wrenches[i * ws.k:(i + 1) * ws.k] for i in range(m)]
    rng = np.random.default_rng(0)
    u = rng.standard_normal((n_starts, 6))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    best = np.inf
    for t in range(iters):
        total = np.zeros(len(u))
        grad = np.zeros_like(u)
        for wi in per:
            scores = u @ wi.T
            j = np.argmax(scores, axis=1)
            h = scores[np.arange(len(u)), j]
            push = h > 0.0              # a contact below 0 support sits out
            total += np.where(push, h, 0.0)
            grad += np.where(push[:, None], wi[j], 0.0)
        best = min(best, float(total.min()))
        u = u - (0.5 / np.sqrt(1.0 + t)) * grad
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    return float(max(0.0, best))


# ---------------------------------------------------------------------------
# Force closure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClosureResult:
    """Truthiness is the closure flag; margin is the LP inclusion radius."""

    closed: bool
    margin: float
    degenerate: bool = False

    def __bool__(self) -> bool:
        return self.closed


def force_closure(ws: WrenchSet, tol: float = 1e-9) -> ClosureResult:
    """Is the origin strictly inside the wrench hull?

    Solved as an LP: maximize e such that all 12 vertices of the e-scaled
    cross-polytope are convex combinations of the wrenches. The optimum is the
    cross-polytope inclusion radius — a different ball than q1's, but strictly
    positive exactly when q1 is, so the two routes cross-check each other.
    """
    w = ws.wrenches
    n = len(w)
    if n == 0:
        return ClosureResult(False, 0.0)
    if np.linalg.matrix_rank(w, tol=1e-10) < 6:
        return ClosureResult(False, 0.0, degenerate=True)
    # vars: e, then 12 blocks of n convex coefficients
    n_var = 1 + 12 * n
    a_eq, b_eq = [], []
    vertex = 0
    for axis in range(6):
        for sign in (-1.0, 1.0):
            lo = 1 + vertex * n
            block = np.zeros((7, n_var))
            block[:6, lo:lo + n] = w.T
            block[axis, 0] = -sign
            block[6, lo:lo + n] = 1.0
            a_eq.append(block)
            b_eq.append(np.array([0.0] * 6 + [1.0]))
            vertex += 1
    c = np.zeros(n_var)
    c[0] = -1.0                        # maximize e
    bounds = [(0.0, None)] * n_var
    res = linprog(c, A_eq=np.vstack(a_eq), b_eq=np.concatenate(b_eq),
                  bounds=bounds, method="highs")
    if not res.success:
        return ClosureResult(False, 0.0)
    margin = float(res.x[0])
    return ClosureResult(margin > tol, margin)
