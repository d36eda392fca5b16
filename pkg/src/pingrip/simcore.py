"""Quasi-dynamic rigid-body stepper for one object, one gripper, one ground plane.

Semi-implicit Euler at a fixed substep. Contacts are resolved by a hybrid
scheme tuned for stability at 240 Hz with light objects:

* ground and plate contacts are velocity-level constraints: restitution-0
  normal impulses solved with underrelaxed Jacobi sweeps (order-independent,
  so mirrored worlds stay mirrored), a rate-clamped Baumgarte bias for depth
  recovery, and a translational position correction. Ground contacts are
  speculative (activated inside a margin above the plane) so one substep of
  free fall cannot tunnel past the surface;
* pin contacts are capped springs: the shared stiffness divided by the
  active contact count sets the backdrive yield depth ``f_max / k_i``, which
  makes a stalled pin report exactly its force cap. A stalled pin's servo is
  held (with hysteresis) so it does not saw-tooth against its own yield;
* friction is solved as accumulated tangential impulses clamped to the
  Coulomb cone (basis-free, with a viscous knee below a slip-speed epsilon),
  plus a rolling-resistance angular impulse.

Everything is deterministic: no randomness, no iteration-order dependence on
anything but the fixed contact ordering (pins, plates, ground vertices).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import Pose, TriMesh, closest_points_on_triangles, quat_integrate, \
    quat_to_mat
from .gripper import GripperSpec, GripperState


class SimulationDiverged(RuntimeError):
    """Raised when the integrator produces NaN or runaway velocities."""

    def __init__(self, message: str, world: "World"):
        super().__init__(message)
        self.world = world


@dataclass
class SimParams:
    dt: float = 1.0 / 240.0
    lateral_friction: float = 0.2
    rolling_friction: float = 0.001
    restitution: float = 0.0
    gravity: float = 9.81
    macro_step_duration: float = 0.5
    lift_speed: float = 0.15
    hold_duration: float = 1.0
    contact_stiffness: float = 5000.0   # shared across active contacts
    friction_vel_eps: float = 1e-3      # m/s, viscous regularization knee
    rolling_vel_eps: float = 1e-3       # rad/s
    contact_slop: float = 1e-5          # m, bias/projection target depth
    contact_margin: float = 5e-3        # m, speculative ground activation
    projection_beta: float = 0.2        # Baumgarte bias gain per substep
    bias_speed_max: float = 0.05        # m/s, depth-recovery rate clamp
    projection_rate_max: float = 1e-4   # m per substep, position correction
    impulse_sweeps: int = 12
    sleep_ke_threshold: float = 1e-9    # J, contact rest freeze
    settle_ke_threshold: float = 1e-7   # J
    settle_quiet_time: float = 0.1      # s
    settle_time_cap: float = 5.0        # s
    speed_limit: float = 50.0           # m/s, divergence guard

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        n = self.macro_step_duration / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("macro_step_duration must be a multiple of dt")


@dataclass
class RigidState:
    """Object pose and velocity; COM and inertia derived from the mesh."""

    pose: Pose
    lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    mass: float = 0.05
    inertia_body: np.ndarray = field(default_factory=lambda: np.eye(3) * 1e-6)
    com_body: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.lin_vel = np.asarray(self.lin_vel, dtype=np.float64).reshape(3)
        self.ang_vel = np.asarray(self.ang_vel, dtype=np.float64).reshape(3)
        self.inertia_body = np.asarray(self.inertia_body, dtype=np.float64)
        self.com_body = np.asarray(self.com_body, dtype=np.float64).reshape(3)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if not np.allclose(self.inertia_body, self.inertia_body.T):
            raise ValueError("inertia must be symmetric")
        if np.any(np.linalg.eigvalsh(self.inertia_body) <= 0.0):
            raise ValueError("inertia must be positive definite")

    def com_world(self) -> np.ndarray:
        return self.pose.apply(self.com_body)

    def copy(self) -> "RigidState":
        return RigidState(self.pose.copy(), self.lin_vel.copy(),
                          self.ang_vel.copy(), self.mass,
                          self.inertia_body.copy(), self.com_body.copy())


@dataclass
class Contact:
    """One converged contact record, world frame, normal pointing into the object."""

    point: np.ndarray
    normal: np.ndarray
    depth: float
    kind: str            # "pin" | "ground" | "plate"
    index: int           # pin index, mesh vertex index, or plate side (0=A,1=B)
    fn: float = 0.0
    ft: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def tangential_2d(self) -> np.ndarray:
        """Tangential force in a deterministic basis derived from the normal."""
        t1, t2 = _tangent_basis(self.normal)
        return np.array([self.ft @ t1, self.ft @ t2])

    def to_dict(self) -> dict:
        return {"point": self.point.tolist(), "normal": self.normal.tolist(),
                "depth": float(self.depth), "kind": self.kind,
                "index": int(self.index), "fn": float(self.fn),
                "ft": self.ft.tolist()}


def _tangent_basis(n: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(n)))] = 1.0
    t1 = np.cross(n, axis)
    t1 /= np.linalg.norm(t1)
    return t1, np.cross(n, t1)


class ContactSet:
    """Struct-of-arrays contact batch used inside the solver."""

    __slots__ = ("points", "normals", "depths", "kinds", "indices", "uids",
                 "fn", "ft", "v_other")

    def __init__(self, points, normals, depths, kinds, indices, uids, v_other):
        self.points = points
        self.normals = normals
        self.depths = depths
        self.kinds = kinds          # int codes: 0 pin, 1 ground, 2 plate
        self.indices = indices
        self.uids = uids            # stable per-feature ids for warm starting
        self.v_other = v_other      # velocity of the non-object body at contact
        n = len(depths)
        self.fn = np.zeros(n)
        self.ft = np.zeros((n, 3))

    def __len__(self) -> int:
        return len(self.depths)

    def to_contacts(self) -> list[Contact]:
        """Materialize the touching rows (speculative-only rows are dropped)."""
        names = {0: "pin", 1: "ground", 2: "plate"}
        return [Contact(self.points[i].copy(), self.normals[i].copy(),
                        float(self.depths[i]), names[int(self.kinds[i])],
                        int(self.indices[i]), float(self.fn[i]),
                        self.ft[i].copy())
                for i in range(len(self))
                if self.depths[i] > 0.0 or self.fn[i] > 1e-12]


@dataclass
class World:
    """One object, optional gripper, ground plane at z=0."""

    mesh: TriMesh
    obj: RigidState
    grip: GripperState | None
    params: SimParams
    time: float = 0.0
    lifting: bool = False
    # converged contact impulses from the previous substep, keyed by contact
    # uid; warm-starts the solver so resting stacks have no residual velocity
    impulse_cache: dict = field(default_factory=dict)
    # pins whose servo is paused because their contact sits at the backdrive
    # yield depth; stops the servo saw-toothing against its own force cap
    pin_hold: np.ndarray | None = None

    def copy(self) -> "World":
        return World(self.mesh, self.obj.copy(),
                     self.grip.copy() if self.grip is not None else None,
                     self.params, self.time, self.lifting,
                     {k: (jn, jt.copy()) for k, (jn, jt)
                      in self.impulse_cache.items()},
                     self.pin_hold.copy() if self.pin_hold is not None else None)


def make_world(mesh: TriMesh, spec: GripperSpec | None = None,
               params: SimParams | None = None, obj_pose: Pose | None = None,
               mass: float = 0.05) -> World:
    """Assemble a world; object mass properties from the mesh (uniform density)."""
    params = params if params is not None else SimParams()
    com, inertia = mesh.mass_properties(mass)
    obj = RigidState(obj_pose.copy() if obj_pose is not None else Pose.identity(),
                     mass=mass, inertia_body=inertia, com_body=com)
    grip = GripperState(spec) if spec is not None else None
    return World(mesh, obj, grip, params)


def kinetic_energy(world: World) -> float:
    o = world.obj
    r = quat_to_mat(o.pose.q)
    i_w = r @ o.inertia_body @ r.T
    return float(0.5 * o.mass * o.lin_vel @ o.lin_vel
                 + 0.5 * o.ang_vel @ i_w @ o.ang_vel)


# ---------------------------------------------------------------------------
# Contact detection
# ---------------------------------------------------------------------------

def detect_contacts(world: World) -> ContactSet:
    """Geometric contacts with per-contact environment velocities; forces zero."""
    obj = world.obj
    rot = quat_to_mat(obj.pose.q)
    verts_w = world.mesh.vertices @ rot.T + obj.pose.p
    n_verts = len(verts_w)
    base = world.grip.spec.total_pins if world.grip is not None else 0
    pts, nrm, dep, kind, idx, uid, v_oth = [], [], [], [], [], [], []

    jaw_vz = world._jaw_vz if hasattr(world, "_jaw_vz") else 0.0

    if world.grip is not None:
        g = world.grip
        spec = g.spec
        tips_w = g.tips_world()
        tips_o = obj.pose.inverse().apply(tips_w)
        cp_o, dist, tri = closest_points_on_triangles(tips_o, world.mesh.tri_pts)
        n_tri = world.mesh.face_normals[tri]
        signed = np.einsum("ij,ij->i", tips_o - cp_o, n_tri)
        signed_dist = np.where(signed >= 0.0, dist, -dist)
        depth = spec.tip_radius - signed_dist
        ext_rate = getattr(world, "_ext_rate", np.zeros(spec.total_pins))
        for i in np.nonzero(depth > 0.0)[0]:
            pts.append(obj.pose.apply(cp_o[i]))
            nrm.append(-(rot @ n_tri[i]))
            dep.append(depth[i])
            kind.append(0)
            idx.append(int(i))
            uid.append(int(i))
            f = spec.finger_of(int(i))
            v_oth.append(np.array([-f * ext_rate[i], 0.0, jaw_vz]))

        # finger base plates: vertices past the plate plane inside its window
        px = spec.plate_x()
        y_half = spec.plate_halfspan_y()
        z_lo, z_hi = spec.plate_z_range(g.lift_z)
        in_window = ((np.abs(verts_w[:, 1]) <= y_half)
                     & (verts_w[:, 2] >= z_lo) & (verts_w[:, 2] <= z_hi))
        for side, sign in ((0, -1.0), (1, 1.0)):
            over = sign * verts_w[:, 0] - px
            for vi in np.nonzero((over > 0.0) & in_window)[0]:
                pts.append(verts_w[vi].copy())
                nrm.append(np.array([-sign, 0.0, 0.0]))
                dep.append(over[vi])
                kind.append(2)
                idx.append(side)
                uid.append(base + n_verts + side * n_verts + int(vi))
                v_oth.append(np.array([0.0, 0.0, jaw_vz]))

    # speculative ground rows: depth <= 0 means "inside the margin, not touching"
    near = np.nonzero(verts_w[:, 2] < world.params.contact_margin)[0]
    for vi in near:
        pts.append(verts_w[vi].copy())
        nrm.append(np.array([0.0, 0.0, 1.0]))
        dep.append(-verts_w[vi, 2])
        kind.append(1)
        idx.append(int(vi))
        uid.append(base + int(vi))
        v_oth.append(np.zeros(3))

    if pts:
        return ContactSet(np.array(pts), np.array(nrm), np.array(dep),
                          np.array(kind), np.array(idx), np.array(uid),
                          np.array(v_oth))
    return ContactSet(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0),
                      np.zeros(0, dtype=int), np.zeros(0, dtype=int),
                      np.zeros(0, dtype=int), np.zeros((0, 3)))


# ---------------------------------------------------------------------------
# Substep
# ---------------------------------------------------------------------------

def step(world: World, dt: float | None = None) -> World:
    """One physics substep; mutates and returns ``world``."""
    p = world.params
    dt = p.dt if dt is None else dt
    obj = world.obj

    # pin servo advance and lift kinematics
    jaw_vz = 0.0
    if world.grip is not None:
        g = world.grip
        prev_ext = g.extensions.copy()
        move = np.clip(g.targets - g.extensions,
                       -g.spec.pin_speed_max * dt, g.spec.pin_speed_max * dt)
        if world.pin_hold is not None:
            move = np.where(world.pin_hold & (move > 0.0), 0.0, move)
        g.extensions = g.extensions + move
        if world.lifting and g.lift_z < g.spec.lift_height:
            dz = min(p.lift_speed * dt, g.spec.lift_height - g.lift_z)
            g.lift_z += dz
            jaw_vz = dz / dt
        world._jaw_vz = jaw_vz

    contacts = detect_contacts(world)
    # active count for load sharing: touching rows plus speculative rows that
    # carried a normal impulse last substep (hovering at the slop depth), so
    # the per-contact stiffness does not flicker while an object rests
    supporting = contacts.depths > 0.0
    for i, u in enumerate(contacts.uids):
        if not supporting[i]:
            prev = world.impulse_cache.get(int(u))
            if prev is not None and prev[0] > 1e-12:
                supporting[i] = True
    n_active = max(1, int(np.count_nonzero(supporting)))
    k_i = p.contact_stiffness / n_active

    # pin force cap via backdrive: stalled pins yield so spring force <= cap
    if world.grip is not None:
        g = world.grip
        pin_rows = np.nonzero(contacts.kinds == 0)[0]
        cap_depth = g.spec.pin_force_max / k_i
        new_hold = np.zeros(g.spec.total_pins, dtype=bool)
        for row in pin_rows:
            i = int(contacts.indices[row])
            if contacts.depths[row] > cap_depth:
                give = contacts.depths[row] - cap_depth
                g.extensions[i] = max(0.0, g.extensions[i] - give)
                contacts.depths[row] = cap_depth
            if contacts.depths[row] >= cap_depth - 1e-9:
                new_hold[i] = True
        world.pin_hold = new_hold
        world._ext_rate = (g.extensions - prev_ext) / dt
        # refresh environment velocity for pin rows after backdrive
        for row in pin_rows:
            i = contacts.indices[row]
            f = g.spec.finger_of(int(i))
            contacts.v_other[row, 0] = -f * world._ext_rate[i]

    rot = quat_to_mat(obj.pose.q)
    i_world = rot @ obj.inertia_body @ rot.T
    i_inv = np.linalg.inv(i_world)
    com_w = obj.pose.p + rot @ obj.com_body

    # external forces and capped pin springs -> velocity (approach velocity is
    # damped by the arrest impulses in the solver, not by the spring itself)
    force = np.array([0.0, 0.0, -obj.mass * p.gravity])
    torque = -np.cross(obj.ang_vel, i_world @ obj.ang_vel)
    pins = contacts.kinds == 0
    if np.any(pins):
        r = contacts.points - com_w
        f_cap = world.grip.spec.pin_force_max
        fn_pin = np.clip(k_i * contacts.depths, 0.0, f_cap)
        contacts.fn = np.where(pins, fn_pin, 0.0)
        f_c = (contacts.fn * pins)[:, None] * contacts.normals
        force = force + f_c.sum(axis=0)
        torque = torque + np.cross(r, f_c).sum(axis=0)
    obj.lin_vel = obj.lin_vel + dt * force / obj.mass
    obj.ang_vel = obj.ang_vel + dt * (i_inv @ torque)

    if len(contacts):
        pin_cap = world.grip.spec.pin_force_max if world.grip is not None else 0.0
        w_pre = float(np.linalg.norm(obj.ang_vel))
        world.impulse_cache = _solve_contacts(obj, contacts, com_w, i_inv, p, dt,
                                              pin_cap, world.impulse_cache)
        _rolling_resistance(obj, contacts, i_inv, p, dt, w_pre)
    else:
        world.impulse_cache = {}

    com_new = com_w + dt * obj.lin_vel
    q_new = quat_integrate(obj.pose.q, obj.ang_vel, dt)
    rot_new = quat_to_mat(q_new)

    # rate-limited translational position correction for environment contacts
    env = contacts.kinds != 0
    if np.any(env):
        r = contacts.points - com_w
        v_pt = obj.lin_vel + np.cross(obj.ang_vel, r)
        vn = np.einsum("ij,ij->i", v_pt - contacts.v_other, contacts.normals)
        d_post = contacts.depths - dt * vn
        over = np.where(env, np.maximum(0.0, d_post - p.contact_slop), 0.0)
        n_env = max(1, int(np.count_nonzero(over > 0.0)))
        corr = (over[:, None] * contacts.normals).sum(axis=0) / n_env
        mag = np.linalg.norm(corr)
        if mag > p.projection_rate_max:
            corr *= p.projection_rate_max / mag
        com_new = com_new + corr

    obj.pose = Pose(com_new - rot_new @ obj.com_body, q_new)

    speed = np.linalg.norm(obj.lin_vel)
    if (not np.all(np.isfinite(obj.pose.p)) or not np.all(np.isfinite(obj.lin_vel))
            or not np.all(np.isfinite(obj.ang_vel)) or speed > p.speed_limit):
        raise SimulationDiverged(
            f"simulation diverged at t={world.time:.4f}s (|v|={speed:.3g})", world)

    # rest freeze: at contact with vanishing kinetic energy, pin the state
    if len(contacts) and kinetic_energy(world) < p.sleep_ke_threshold:
        obj.lin_vel = np.zeros(3)
        obj.ang_vel = np.zeros(3)

    world.time += dt
    world._last_contacts = contacts
    return world


def _solve_contacts(obj, contacts, com_w, i_inv, p, dt, pin_cap, cache):
    """Jacobi-swept contact impulses: normal arrest with bias, Coulomb friction.

    Per-row underrelaxation comes from the row sums of the contact effective-mass
    matrix (Gershgorin), which keeps the parallel sweeps from overshooting while
    staying independent of row order (mirror symmetry). Impulses are warm-started
    from ``cache`` (previous substep, matched by contact uid) so resting contacts
    converge to zero residual velocity; returns the refreshed cache.
    """
    m = obj.mass
    n = contacts.normals
    r = contacts.points - com_w
    rxn = np.cross(r, n)
    k_n = 1.0 / m + np.einsum("ij,ij->i", rxn, rxn @ i_inv.T)

    env = contacts.kinds != 0
    d = contacts.depths
    # target normal velocity: depth recovery for penetrating environment rows,
    # exact-touchdown approach budget for speculative rows, zero for pins
    bias = np.where(env & (d >= 0.0),
                    np.minimum(p.projection_beta / dt
                               * np.maximum(0.0, d - p.contact_slop),
                               p.bias_speed_max),
                    0.0)
    bias = np.where(env & (d < 0.0), d / dt, bias)
    cap_n = np.where(env, np.inf, pin_cap * dt)

    # Jacobi underrelaxation from the effective-mass coupling (Gershgorin row
    # sums), restricted to rows that can push this step -- idle speculative
    # rows must not slow down convergence of the real contacts
    v_pt = obj.lin_vel + np.cross(obj.ang_vel, r)
    v_rel0 = v_pt - contacts.v_other
    vn0 = np.einsum("ij,ij->i", v_rel0, n)
    # incoming slip speed, taken before any impulses: feeds the viscous knee
    vt_pre = np.linalg.norm(v_rel0 - vn0[:, None] * n, axis=1)
    active = (d > 0.0) | (vn0 < bias)
    coupling = np.abs(n @ n.T / m + rxn @ i_inv @ rxn.T) * active[None, :]
    omega = np.where(active, k_n / np.maximum(coupling.sum(axis=1), k_n), 1.0)

    # warm start: re-apply last substep's converged impulses, then correct
    jn = np.zeros(len(contacts))
    jt = np.zeros((len(contacts), 3))
    if cache:
        for i, u in enumerate(contacts.uids):
            prev = cache.get(int(u))
            if prev is not None:
                jn[i] = prev[0]
                jt[i] = prev[1]
        jn = np.clip(jn, 0.0, cap_n)
        imp = jn[:, None] * n + jt
        obj.lin_vel = obj.lin_vel + imp.sum(axis=0) / m
        obj.ang_vel = obj.ang_vel + i_inv @ np.cross(r, imp).sum(axis=0)

    for _ in range(p.impulse_sweeps):
        v_pt = obj.lin_vel + np.cross(obj.ang_vel, r)
        vn = np.einsum("ij,ij->i", v_pt - contacts.v_other, n)
        jn_new = np.clip(jn + (bias - vn) / k_n * omega, 0.0, cap_n)
        dj = jn_new - jn
        if not np.any(dj):
            break
        jn = jn_new
        imp = dj[:, None] * n
        obj.lin_vel = obj.lin_vel + imp.sum(axis=0) / m
        obj.ang_vel = obj.ang_vel + i_inv @ np.cross(r, imp).sum(axis=0)

    # reported normal force: impulse-derived for the environment, spring for pins
    contacts.fn = np.where(env, jn / dt, contacts.fn)

    # Coulomb friction impulses, accumulated and clamped to the cone; the
    # viscous knee scales the cone down for sub-epsilon incoming slip speeds
    cap_t = (p.lateral_friction * contacts.fn * dt
             * np.minimum(1.0, vt_pre / p.friction_vel_eps))
    for _ in range(p.impulse_sweeps):
        v_pt = obj.lin_vel + np.cross(obj.ang_vel, r)
        v_rel = v_pt - contacts.v_other
        vn = np.einsum("ij,ij->i", v_rel, n)
        vt = v_rel - vn[:, None] * n
        vt_mag = np.linalg.norm(vt, axis=1)
        t_hat = vt / np.maximum(vt_mag, 1e-15)[:, None]
        rxt = np.cross(r, t_hat)
        k_t = 1.0 / m + np.einsum("ij,ij->i", rxt, rxt @ i_inv.T)
        jt_new = jt - (omega / k_t)[:, None] * vt
        mag = np.linalg.norm(jt_new, axis=1)
        jt_new *= np.minimum(1.0, cap_t / np.maximum(mag, 1e-300))[:, None]
        dj = jt_new - jt
        jt = jt_new
        obj.lin_vel = obj.lin_vel + dj.sum(axis=0) / m
        obj.ang_vel = obj.ang_vel + i_inv @ np.cross(r, dj).sum(axis=0)
    contacts.ft = jt / dt
    return {int(u): (float(jn[i]), jt[i].copy())
            for i, u in enumerate(contacts.uids)}


def _rolling_resistance(obj, contacts, i_inv, p, dt, w_pre):
    """Angular impulse opposing sustained rotation, scaled by the incoming
    angular speed so the solver's instantaneous rotational response survives."""
    w_mag = float(np.linalg.norm(obj.ang_vel))
    if w_mag <= 1e-12 or w_pre <= 1e-12:
        return
    w_hat = obj.ang_vel / w_mag
    imp = (p.rolling_friction * contacts.fn.sum() * dt
           * min(1.0, w_pre / p.rolling_vel_eps))
    dw = i_inv @ (w_hat * imp)
    if (obj.ang_vel - dw) @ w_hat < 0.0:
        obj.ang_vel = obj.ang_vel - w_hat * (obj.ang_vel @ w_hat)
    else:
        obj.ang_vel = obj.ang_vel - dw


# ---------------------------------------------------------------------------
# Macro-step execution, lift, settle
# ---------------------------------------------------------------------------

@dataclass
class StepTelemetry:
    """Record of one macro-step, consumed by the env and the JSONL stream."""

    duration: float
    travel: float                  # achieved pin travel sum, meters
    pose_start: Pose
    pose_end: Pose
    displacement: float
    contacts: list[Contact]
    extensions: np.ndarray
    lift_z: float
    min_z: float
    max_depth: float
    lifting: bool
    step_index: int = -1

    def to_dict(self) -> dict:
        return {"step": self.step_index, "duration": self.duration,
                "travel": self.travel,
                "pose": self.pose_end.to_array().tolist(),
                "displacement": self.displacement,
                "contacts": [c.to_dict() for c in self.contacts],
                "extensions": self.extensions.tolist(),
                "lift_z": self.lift_z, "min_z": self.min_z,
                "lifting": self.lifting}


def run_macro_step(world: World, targets: np.ndarray, lifting: bool) -> StepTelemetry:
    """Command pin targets, simulate one macro-step duration, collect telemetry."""
    p = world.params
    g = world.grip
    if g is None:
        raise ValueError("macro step requires a gripper")
    world.grip = g.command_extensions(targets)
    world.lifting = lifting
    n = int(round(p.macro_step_duration / p.dt))
    pose_start = world.obj.pose.copy()
    travel = 0.0
    min_z = np.inf
    max_depth = 0.0
    for _ in range(n):
        before = world.grip.extensions.copy()
        step(world)
        travel += float(np.abs(world.grip.extensions - before).sum())
        min_z = min(min_z, _object_min_z(world))
        cs = world._last_contacts
        if len(cs):
            max_depth = max(max_depth, float(cs.depths.max()))
    pose_end = world.obj.pose.copy()
    return StepTelemetry(
        duration=n * p.dt, travel=travel, pose_start=pose_start,
        pose_end=pose_end,
        displacement=float(np.linalg.norm(pose_end.p - pose_start.p)),
        contacts=world._last_contacts.to_contacts(),
        extensions=world.grip.extensions.copy(), lift_z=world.grip.lift_z,
        min_z=float(min_z), max_depth=float(max_depth), lifting=lifting)


def _object_min_z(world: World) -> float:
    rot = quat_to_mat(world.obj.pose.q)
    return float((world.mesh.vertices @ rot.T[:, 2] + world.obj.pose.p[2]).min())


@dataclass
class LiftOutcome:
    g: int                 # +1 success, -1 failure
    t_lift: float          # seconds simulated inside this call
    slip: float            # jaw-frame displacement of the object center
    final_z: float
    contacts: list[Contact]


def lift_and_hold(world: World, jaw_ref: np.ndarray | None = None) -> LiftOutcome:
    """Raise the jaw to lift_height, hold, and score the grasp.

    ``jaw_ref`` is the object's COM position in the jaw frame at lift start;
    pass the value captured when lifting began (GwL) or leave None to capture
    at entry (GtL static lift).
    """
    p = world.params
    g = world.grip
    if g is None:
        raise ValueError("lift requires a gripper")
    com_w = world.obj.com_world()
    if jaw_ref is None:
        jaw_ref = com_w - np.array([0.0, 0.0, g.lift_z])
    world.lifting = True
    t0 = world.time
    while world.grip.lift_z < g.spec.lift_height - 1e-12:
        step(world)
    for _ in range(int(round(p.hold_duration / p.dt))):
        step(world)
    t_lift = world.time - t0
    com_end = world.obj.com_world()
    slip = float(np.linalg.norm(
        com_end - np.array([0.0, 0.0, world.grip.lift_z]) - jaw_ref))
    success = slip < 0.10 and com_end[2] > 0.15
    return LiftOutcome(1 if success else -1, t_lift, slip, float(com_end[2]),
                       world._last_contacts.to_contacts()
                       if hasattr(world, "_last_contacts") else [])


@dataclass
class SettleOutcome:
    pose: Pose
    settled: bool
    duration: float


def settle(mesh: TriMesh, pose0: Pose | None = None, mass: float = 0.05,
           params: SimParams | None = None, drop_height: float = 0.005
           ) -> SettleOutcome:
    """Drop the object onto the ground and wait for rest.

    Rest means kinetic energy below the threshold continuously for the quiet
    window; gives up at the time cap with ``settled=False``.
    """
    params = params if params is not None else SimParams()
    world = make_world(mesh, spec=None, params=params, mass=mass)
    q0 = pose0.q if pose0 is not None else np.array([1.0, 0.0, 0.0, 0.0])
    rot = quat_to_mat(q0)
    min_z = float((mesh.vertices @ rot.T[:, 2]).min())
    p_xy = pose0.p[:2] if pose0 is not None else np.zeros(2)
    world.obj.pose = Pose([p_xy[0], p_xy[1], -min_z + drop_height], q0)

    quiet = 0.0
    while world.time < params.settle_time_cap:
        step(world)
        if kinetic_energy(world) < params.settle_ke_threshold:
            quiet += params.dt
            if quiet >= params.settle_quiet_time:
                return SettleOutcome(world.obj.pose.copy(), True, world.time)
        else:
            quiet = 0.0
    return SettleOutcome(world.obj.pose.copy(), False, world.time)
