"""Independent brute-force validators backing the test suite.

Everything here is deliberately written by a different route than the main
modules: exhaustive loops instead of accelerated structures, support-function
minimization instead of hull facet enumeration, tabular dynamic programming
instead of temporal-difference learning. Oracles run in float64 and favour
clarity over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# ---------------------------------------------------------------------------
# Exhaustive geometry references
# ---------------------------------------------------------------------------


def brute_raycast(mesh, origin, direction):
    """Nearest ray hit by plane intersection + barycentric test on every face.

    Returns (distance, face index) or None. Structurally independent from the
    BVH + Moller-Trumbore path in geom.
    """
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    best = None
    for fi, tri in enumerate(mesh.tri_pts):
        n = np.cross(tri[1] - tri[0], tri[2] - tri[0])
        denom = n @ direction
        if abs(denom) < 1e-15:
            continue
        t = (n @ (tri[0] - origin)) / denom
        if t < 0.0:
            continue
        p = origin + t * direction
        # barycentric containment via double areas
        v0, v1, v2 = tri[1] - tri[0], tri[2] - tri[0], p - tri[0]
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        d20, d21 = v2 @ v0, v2 @ v1
        den = d00 * d11 - d01 * d01
        if den <= 0.0:
            continue
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        if v >= -1e-9 and w >= -1e-9 and v + w <= 1.0 + 1e-9:
            if best is None or t < best[0]:
                best = (t, fi)
    return best


def brute_closest_point(mesh, point):
    """Closest surface point by candidate enumeration on every triangle.

    For each face, considers the unconstrained plane projection and all three
    clamped edges, keeping the nearest feasible candidate.
    """
    point = np.asarray(point, dtype=np.float64)
    best_d2 = np.inf
    best_p = None
    for tri in mesh.tri_pts:
        cands = []
        e0, e1 = tri[1] - tri[0], tri[2] - tri[0]
        # unconstrained barycentric solve
        a = np.array([[e0 @ e0, e0 @ e1], [e0 @ e1, e1 @ e1]])
        b = np.array([e0 @ (point - tri[0]), e1 @ (point - tri[0])])
        det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
        if det > 0.0:
            v, w = np.linalg.solve(a, b)
            if v >= 0.0 and w >= 0.0 and v + w <= 1.0:
                cands.append(tri[0] + v * e0 + w * e1)
        for pa, pb in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            d = pb - pa
            t = np.clip((point - pa) @ d / (d @ d), 0.0, 1.0)
            cands.append(pa + t * d)
        for c in cands:
            d2 = (point - c) @ (point - c)
            if d2 < best_d2:
                best_d2 = d2
                best_p = c
    return best_p, np.sqrt(best_d2)


# ---------------------------------------------------------------------------
# Wrench-space grasp quality (support-function route)
# ---------------------------------------------------------------------------


def cone_edge_wrenches(contacts, mu, k, origin, scale):
    """Linearized friction-cone edge wrenches for a contact list.

    ``contacts`` is a list of (point, inward unit normal); torque arms are
    taken about ``origin`` and divided by ``scale``. The tangent azimuth is
    anchored to the lever arm so the construction co-rotates with the
    contact set (rotation invariance).
    """
    wrenches = []
    for point, normal in contacts:
        p = np.asarray(point, dtype=np.float64)
        n = np.asarray(normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        arm = p - origin
        t1 = np.cross(n, arm)
        if np.linalg.norm(t1) < 1e-12:
            # lever arm parallel to normal: fall back to least-aligned axis
            axis = np.zeros(3)
            axis[int(np.argmin(np.abs(n)))] = 1.0
            t1 = np.cross(n, axis)
        t1 /= np.linalg.norm(t1)
        t2 = np.cross(n, t1)
        norm = np.sqrt(1.0 + mu * mu)
        for j in range(k):
            phi = 2.0 * np.pi * j / k
            d = (n + mu * (np.cos(phi) * t1 + np.sin(phi) * t2)) / norm
            wrenches.append(np.concatenate([d, np.cross(arm, d) / scale]))
    return np.asarray(wrenches)


def support_min_sphere(wrenches, rng, n_starts=64, iters=500, band=14):
    """Minimize the support function h(u)=max_i w_i.u over the unit sphere.

    For an origin-interior hull this is the inscribed Euclidean-ball radius
    (negative means the origin is outside). Multistart projected subgradient
    gives an approximate minimizer; the answer is then sharpened by exhaustive
    facet certification over the ``band`` most active wrenches: every affinely
    independent 6-subset proposes a hyperplane, and any that supports the whole
    set contributes its exact origin distance.
    """
    from itertools import combinations

    w = np.asarray(wrenches, dtype=np.float64)
    dim = w.shape[1]
    u = rng.standard_normal((n_starts, dim))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    best = np.inf
    best_u = u[0]
    for t in range(iters):
        scores = u @ w.T                           # (starts, n_wrench)
        j = np.argmax(scores, axis=1)
        h = scores[np.arange(len(u)), j]
        k = int(np.argmin(h))
        if h[k] < best:
            best, best_u = float(h[k]), u[k].copy()
        u = u - (0.5 / np.sqrt(1.0 + t)) * w[j]
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    scores = w @ best_u
    order = np.argsort(-scores)[:band]
    for sub in combinations(order, dim):
        a = w[list(sub)]
        try:
            z = np.linalg.solve(a, np.ones(dim))
        except np.linalg.LinAlgError:
            continue
        zn = np.linalg.norm(z)
        if zn < 1e-12:
            continue
        val = 1.0 / zn
        if np.max(w @ (z * val)) <= val + 1e-9:    # supporting hyperplane
            best = min(best, val)
    return best


def support_min_l1_exact(wrenches):
    """Exact minimum of the support function over the L-inf sphere.

    This is the cross-polytope inclusion radius (the closure-LP margin), not
    the Euclidean q1 ball. The sphere is the boundary of the 6-cube; each of
    its 12 faces is a convex box over which min-of-max is a small linear
    program (epigraph variable t, t >= w_i . u). The global minimum is the
    least of the 12 face optima.
    """
    from scipy.optimize import linprog

    w = np.asarray(wrenches, dtype=np.float64)
    n, dim = w.shape
    c = np.concatenate([np.zeros(dim), [1.0]])
    a_ub = np.hstack([w, -np.ones((n, 1))])
    b_ub = np.zeros(n)
    best = np.inf
    for axis in range(dim):
        for sign in (-1.0, 1.0):
            bounds = [(-1.0, 1.0)] * dim + [(None, None)]
            bounds[axis] = (sign, sign)
            res = linprog(c, A_ub=a_ub, b_ub=b_ub, bounds=bounds,
                          method="highs")
            if not res.success:
                raise RuntimeError(f"support LP failed: {res.message}")
            best = min(best, float(res.fun))
    return best


def dense_q1(contacts, mu, k=16, origin=None, scale=1.0, rng=None):
    """Reference grasp quality: inscribed-ball radius of the wrench hull.

    Returns 0 when the contact set is not in force closure. Independent of the
    convex-hull facet route used by the quality module (support-function
    minimization over the sphere with exhaustive local facet certification).
    """
    if len(contacts) == 0:
        return 0.0
    if origin is None:
        origin = np.zeros(3)
    if rng is None:
        rng = np.random.default_rng(0)
    w = cone_edge_wrenches(contacts, mu, k, np.asarray(origin, float), scale)
    if np.linalg.matrix_rank(w, tol=1e-10) < 6:
        return 0.0
    return max(0.0, float(support_min_sphere(w, rng)))


# ---------------------------------------------------------------------------
# Statics
# ---------------------------------------------------------------------------


def static_equilibrium(contacts, mass, mu, k=8, gravity=9.81, com=None):
    """Feasibility of balancing gravity with friction-cone contact forces.

    ``contacts``: list of (point, inward-on-object unit normal). Solves a
    feasibility LP over nonnegative cone-edge coefficients whose total wrench
    (about the COM) cancels gravity.
    """
    from scipy.optimize import linprog

    if len(contacts) == 0:
        return False
    com = np.zeros(3) if com is None else np.asarray(com, dtype=np.float64)
    w = cone_edge_wrenches(contacts, mu, k, com, 1.0)
    target = np.concatenate([[0.0, 0.0, mass * gravity], np.zeros(3)])
    res = linprog(c=np.zeros(len(w)), A_eq=w.T, b_eq=target,
                  bounds=[(0.0, None)] * len(w), method="highs")
    return bool(res.status == 0)


def support_polygon_stable(ground_points_xy, com_xy, margin=0.0):
    """COM projection inside the convex hull of ground contact points (2D)."""
    pts = np.asarray(ground_points_xy, dtype=np.float64).reshape(-1, 2)
    if len(pts) < 3:
        return False
    hull = _hull2d(pts)
    c = np.asarray(com_xy, dtype=np.float64)
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        e = b - a
        if e[0] * (c[1] - a[1]) - e[1] * (c[0] - a[0]) < margin:
            return False
    return True


def _hull2d(pts):
    """Andrew monotone chain, CCW order."""
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                o, a = out[-2], out[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    out.pop()
                else:
                    break
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


# ---------------------------------------------------------------------------
# Analytic mechanics
# ---------------------------------------------------------------------------


def ballistic_z(z0, v0, t, gravity=9.81):
    return z0 + v0 * t - 0.5 * gravity * t * t


def slide_stop_distance(v0, mu, gravity=9.81):
    return v0 * v0 / (2.0 * mu * gravity)


def pinch_holds(mu, pin_force, mass, gravity=9.81):
    """Static Coulomb bound for a symmetric two-pin pinch: 2 mu F >= m g."""
    return 2.0 * mu * pin_force >= mass * gravity


# ---------------------------------------------------------------------------
# Toy MDPs and value iteration
# ---------------------------------------------------------------------------


@dataclass
class ToyMDP:
    """Explicit finite MDP: transitions (S, A, S), rewards (S, A), discount."""

    transitions: np.ndarray
    rewards: np.ndarray
    gamma: float

    def __post_init__(self) -> None:
        self.transitions = np.asarray(self.transitions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        s, a, s2 = self.transitions.shape
        if s != s2 or self.rewards.shape != (s, a):
            raise ValueError("inconsistent MDP tables")
        rows = self.transitions.sum(axis=2)
        if not np.allclose(rows, 1.0, atol=1e-12):
            raise ValueError("transition rows must sum to 1")


def value_iteration(mdp: ToyMDP, tol: float = 1e-12, max_iter: int = 1_000_000):
    """Optimal Q table by synchronous sweeps; residual below ``tol``."""
    q = np.zeros_like(mdp.rewards)
    for _ in range(max_iter):
        v = q.max(axis=1)
        q_new = mdp.rewards + mdp.gamma * mdp.transitions @ v
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


# ---------------------------------------------------------------------------
# Gradient and distribution checks
# ---------------------------------------------------------------------------


def finite_diff_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def max_rel_error(analytic, numeric, floor=1e-8):
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a),
                                                              np.abs(n)), floor)))


def mc_bin_check(samples, logpdf, lo, hi, n_bins=40, z_max=3.0, min_expected=20.0):
    """Compare empirical bin counts against a density within ``z_max`` sigma.

    Bins with expected count below ``min_expected`` are skipped. Returns
    (ok, worst_z).
    """
    samples = np.asarray(samples, dtype=np.float64)
    edges = np.linspace(lo, hi, n_bins + 1)
    counts, _ = np.histogram(samples, bins=edges)
    grid = np.linspace(lo, hi, 4001)
    dens = np.exp([logpdf(x) for x in grid])
    # no renormalization: the density may carry mass outside [lo, hi], and the
    # bin counts are binomial in the true (unnormalized) bin probabilities
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) / 2.0
                                           * np.diff(grid))])
    probs = np.interp(edges[1:], grid, cdf) - np.interp(edges[:-1], grid, cdf)
    n = len(samples)
    worst = 0.0
    for c, p in zip(counts, probs):
        expect = n * p
        if expect < min_expected:
            continue
        z = abs(c - expect) / np.sqrt(expect * (1.0 - p))
        worst = max(worst, float(z))
    return worst <= z_max, worst


def binomial_within_3sigma(count, n, p):
    return abs(count - n * p) <= 3.0 * np.sqrt(n * p * (1.0 - p))
