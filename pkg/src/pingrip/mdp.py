"""Grasping MDP over the physics world.

Assembles the flat state vector ``s = [o, g, f]`` (object, gripper, and
per-pin interaction blocks), decodes raw policy outputs into pin targets and
the switch/stop signals, computes the terminal grasp reward and the per-step
efficiency reward, and drives episodes through the three-phase machine
(ground adjust -> air adjust -> done).

Serialization order is fixed: ``o = [position(3), quaternion wxyz(4),
cloud feature(FEAT_DIM)]``; ``g = [position(3), position in object frame(3),
quaternion(4), quaternion in object frame(4), stage one-hot(3), step
one-hot(C_MAX)]``; ``f`` stacks one row per pin, finger A row-major then
finger B, each row ``[tip(3), tip in object frame(3), ray hit(3), ray hit in
object frame(3), hit distance(1), extension(1), finger sign(1), pin one-hot
(total_pins)]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .geom import Pose, TriMesh, quat_mul, quat_normalize, raycast
from .gripper import GripperSpec
from .quality import grasp_wrench_set, q1
from .simcore import (Contact, SimParams, SimulationDiverged, World,
                      lift_and_hold, make_world, run_macro_step)

D_MAX = 0.2        # m, interaction-ray miss sentinel
C_MAX = 11         # decision steps per episode
FEAT_DIM = 512     # object point-cloud feature width


class Phase(IntEnum):
    """Episode phase; the integer value is the stage one-hot index."""

    GROUND = 0     # pin adjustments with the jaw parked
    AIR = 1        # pin adjustments while the jaw rises
    DONE = 2


def pin_feature_length(total_pins: int) -> int:
    """Per-pin row width: 15 scalars plus the pin-identity one-hot."""
    return 15 + total_pins


def state_layout(total_pins: int = 32, feat_dim: int = FEAT_DIM,
                 c_max: int = C_MAX) -> dict:
    """Block slices of the flat state, keyed "o"/"g"/"f", plus "state_dim"."""
    n_o = 7 + feat_dim
    n_g = 14 + 3 + c_max
    n_f = total_pins * pin_feature_length(total_pins)
    return {"o": slice(0, n_o), "g": slice(n_o, n_o + n_g),
            "f": slice(n_o + n_g, n_o + n_g + n_f),
            "state_dim": n_o + n_g + n_f}


# ---------------------------------------------------------------------------
# State assembly
# ---------------------------------------------------------------------------
@dataclass
class StateVector:
    """Structured state; ``to_array`` flattens in the documented order."""

    o: np.ndarray
    g: np.ndarray
    f: np.ndarray

    def to_array(self, dtype=np.float64) -> np.ndarray:
        return np.concatenate([self.o, self.g, self.f]).astype(dtype)

    @property
    def total_dim(self) -> int:
        return self.o.size + self.g.size + self.f.size


def gripper_pose(world: World) -> Pose:
    """World pose of the jaw carriage, lift included."""
    g = world.grip
    rise = g.jaw_pose.rotate(np.array([0.0, 0.0, g.lift_z]))
    return Pose(g.jaw_pose.p + rise, g.jaw_pose.q)


def object_features(world: World, o_f: np.ndarray) -> np.ndarray:
    """``o`` block: object pose plus the cached point-cloud feature."""
    o_f = np.asarray(o_f, dtype=np.float64).reshape(-1)
    return np.concatenate([world.obj.pose.p, world.obj.pose.q, o_f])


def gripper_features(world: World, phase: Phase, step_idx: int,
                     c_max: int = C_MAX) -> np.ndarray:
    """``g`` block: jaw pose in world and object frames, stage, step count."""
    gp = gripper_pose(world)
    inv = world.obj.pose.inverse()
    p_obj = inv.apply(gp.p)
    q_obj = quat_normalize(quat_mul(inv.q, gp.q))
    stage = np.zeros(3)
    stage[int(phase)] = 1.0
    step_hot = np.zeros(c_max)
    step_hot[min(int(step_idx), c_max - 1)] = 1.0   # saturates at the cap
    return np.concatenate([gp.p, p_obj, gp.q, q_obj, stage, step_hot])


def interaction_features(world: World, d_max: float = D_MAX) -> np.ndarray:
    """``f`` block as a (total_pins, 15 + total_pins) matrix.

    Each pin casts a horizontal ray from its tip center toward the opposing
    finger; a miss reports the sentinel distance ``d_max`` with the hit point
    placed on the ray at that range. Rays run in the object's body frame so
    the mesh BVH can be used directly.
    """
    g = world.grip
    spec = g.spec
    n = spec.total_pins
    tips = g.tips_world()
    dirs = g.ray_directions_world()
    inv = world.obj.pose.inverse()
    tips_obj = inv.apply(tips)
    dirs_obj = inv.rotate(dirs)
    fingers = spec.fingers()
    rows = np.zeros((n, pin_feature_length(n)))
    for i in range(n):
        hit = raycast(world.mesh, tips_obj[i], dirs_obj[i], max_dist=d_max)
        d = hit[0] if hit is not None else d_max
        rows[i, 0:3] = tips[i]
        rows[i, 3:6] = tips_obj[i]
        rows[i, 6:9] = tips[i] + d * dirs[i]
        rows[i, 9:12] = tips_obj[i] + d * dirs_obj[i]
        rows[i, 12] = d
        rows[i, 13] = g.extensions[i]
        rows[i, 14] = fingers[i]
        rows[i, 15 + i] = 1.0
    return rows


def build_state(world: World, phase: Phase, step_idx: int, o_f: np.ndarray,
                d_max: float = D_MAX, c_max: int = C_MAX) -> StateVector:
    """Full state at the current world snapshot; ``o_f`` is the per-episode
    cached cloud feature (the encoder runs once, at reset)."""
    return StateVector(object_features(world, o_f),
                       gripper_features(world, phase, step_idx, c_max),
                       interaction_features(world, d_max).reshape(-1))


# ---------------------------------------------------------------------------
# Actions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Action:
    """Decoded action: pin targets in meters, switch/stop levels in [0, 1]."""

    l: np.ndarray
    chi1: float
    chi2: float

    @property
    def chi1_fired(self) -> bool:
        return self.chi1 > 0.5    # strict: the squash midpoint does not fire

    @property
    def chi2_fired(self) -> bool:
        return self.chi2 > 0.5


def decode_action(raw: np.ndarray, travel_max: float = 0.055) -> Action:
    """Map a raw policy vector through tanh to pin targets and switch levels.

    Components 0..n-3 become extension targets in [0, travel_max]; the last
    two become the switch and stop levels in [0, 1].
    """
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    if raw.size < 3:
        raise ValueError("action needs at least one pin plus two switches")
    unit = (np.tanh(raw) + 1.0) / 2.0
    return Action(travel_max * unit[:-2], float(unit[-2]), float(unit[-1]))


# ---------------------------------------------------------------------------
# Rewards
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RewardWeights:
    """Multipliers for the two reward channels; times in seconds, travel in cm."""

    success: float = 2000.0
    quality: float = 1000.0
    grasp_time: float = -250.0
    lift_time: float = -50.0
    length: float = -1.0
    step: float = -10.0


@dataclass
class EpisodeResult:
    """Outcome summary of one episode."""

    g: int                    # +1 success, -1 failure
    q1: float
    t_grasp: float            # s, adjustment time before lifting
    t_lift: float             # s, lifting adjustments plus lift-and-hold
    mode: str                 # "GtL" | "GwL"
    steps: int
    travel_cm: float
    r_grasp: float = 0.0
    r_effici: list = field(default_factory=list)


def reward_grasp(res: EpisodeResult, w: RewardWeights) -> float:
    """Terminal reward; emitted once, when the episode completes."""
    return (w.success * res.g + w.quality * res.q1
            + w.grasp_time * res.t_grasp + w.lift_time * res.t_lift)


def reward_efficiency(travel_m: float, w: RewardWeights) -> float:
    """Per-step reward: achieved pin travel (converted to cm) plus a step toll."""
    return w.length * (travel_m * 100.0) + w.step


def state_block_mask(total_pins: int = 32, feat_dim: int = FEAT_DIM,
                     c_max: int = C_MAX, drop: tuple = ()) -> np.ndarray:
    """Float mask zeroing whole state blocks; ``drop`` names from {o, g, f}.

    Used by the observation ablations: dropped blocks are zeroed before the
    state reaches the networks or the replay buffer.
    """
    lay = state_layout(total_pins, feat_dim, c_max)
    mask = np.ones(lay["state_dim"])
    for name in drop:
        if name not in ("o", "g", "f"):
            raise ValueError(f"unknown state block {name!r}")
        mask[lay[name]] = 0.0
    return mask


# ---------------------------------------------------------------------------
# Episode driver
# ---------------------------------------------------------------------------
@dataclass
class EnvTask:
    """One episode setup: a settled object with its sampled surface cloud."""

    mesh: TriMesh
    pose: Pose
    cloud: np.ndarray | None = None
    mass: float = 0.05
    name: str = ""


@dataclass
class StepResult:
    """One environment transition, as consumed by the learner."""

    state: np.ndarray         # next state, flat
    action: np.ndarray        # executed action, tanh-squashed, switches forced
    r_grasp: float            # zero except on the terminal transition
    r_effici: float
    done: bool
    info: dict = field(default_factory=dict)


class GraspEnv:
    """Macro-step decision loop over the simulator.

    Each ``step`` call executes one pin-adjustment macro-step (with the jaw
    rising when the switch has latched), then on termination runs the lift
    and hold, scores the grasp, and emits the terminal reward. ``chi1_mode``
    locks the switch for the curriculum stages and the mode-lock ablations:
    "force0" pins it unfired (ground-only), "force1" fires it on the first
    decision (lift from the start), "free" leaves it to the policy.
    """

    def __init__(self, spec: GripperSpec | None = None,
                 params: SimParams | None = None,
                 weights: RewardWeights | None = None,
                 encoder=None, feat_dim: int = FEAT_DIM,
                 c_max: int = C_MAX, d_max: float = D_MAX,
                 chi1_mode: str = "free", quality_cone_edges: int = 8):
        if chi1_mode not in ("free", "force0", "force1"):
            raise ValueError(f"unknown chi1_mode {chi1_mode!r}")
        self.spec = spec if spec is not None else GripperSpec()
        self.params = params if params is not None else SimParams()
        self.weights = weights if weights is not None else RewardWeights()
        self.encoder = encoder
        self.feat_dim = int(feat_dim)
        self.c_max = int(c_max)
        self.d_max = float(d_max)
        self.chi1_mode = chi1_mode
        self.quality_cone_edges = int(quality_cone_edges)
        self.world: World | None = None
        self.result: EpisodeResult | None = None

    @property
    def action_dim(self) -> int:
        return self.spec.total_pins + 2

    @property
    def state_dim(self) -> int:
        return state_layout(self.spec.total_pins, self.feat_dim,
                            self.c_max)["state_dim"]

    def reset(self, mesh: TriMesh, pose: Pose, cloud: np.ndarray | None = None,
              mass: float = 0.05) -> np.ndarray:
        """Start an episode with the object resting at ``pose``; returns s0."""
        self.world = make_world(mesh, self.spec, self.params,
                                obj_pose=pose.copy(), mass=mass)
        if self.encoder is not None and cloud is not None:
            o_f = np.asarray(self.encoder(cloud), dtype=np.float64).reshape(-1)
            if o_f.size != self.feat_dim:
                raise ValueError(f"encoder returned {o_f.size} features, "
                                 f"expected {self.feat_dim}")
        else:
            o_f = np.zeros(self.feat_dim)
        self.o_f = o_f
        self.phase = Phase.GROUND
        self.mode = "GtL"
        self.steps = 0
        self.t_grasp = 0.0
        self.t_lift = 0.0
        self.travel_m = 0.0
        self.r_effici_log: list[float] = []
        self.jaw_ref: np.ndarray | None = None
        self.result = None
        return self.state()

    def state(self) -> np.ndarray:
        return build_state(self.world, self.phase, self.steps, self.o_f,
                           self.d_max, self.c_max).to_array()

    def step(self, raw: np.ndarray) -> StepResult:
        """Execute one decision; ``raw`` is the pre-squash policy output."""
        if self.world is None or self.phase == Phase.DONE:
            raise RuntimeError("episode not running; call reset")
        raw = np.asarray(raw, dtype=np.float64).reshape(self.action_dim)
        executed = np.tanh(raw)
        if self.chi1_mode == "force0":
            executed[-2] = -1.0    # stored action carries the executed value
        elif self.chi1_mode == "force1":
            executed[-2] = 1.0
        act = Action(self.spec.pin_travel_max * (executed[:-2] + 1.0) / 2.0,
                     float((executed[-2] + 1.0) / 2.0),
                     float((executed[-1] + 1.0) / 2.0))

        lifting = self.phase == Phase.AIR
        if lifting and self.jaw_ref is None:
            # slip reference: object COM in the jaw frame as the lift begins
            self.jaw_ref = (self.world.obj.com_world()
                            - np.array([0.0, 0.0, self.world.grip.lift_z]))
        info: dict = {}
        diverged = False
        try:
            tel = run_macro_step(self.world, act.l, lifting)
            travel = tel.travel
            duration = tel.duration
            info["telemetry"] = tel
        except SimulationDiverged:
            diverged = True
            travel = 0.0
            duration = self.params.macro_step_duration
            info["diverged"] = True
        self.steps += 1
        if lifting:
            self.t_lift += duration
        else:
            self.t_grasp += duration
        r_e = reward_efficiency(travel, self.weights)
        self.travel_m += travel
        self.r_effici_log.append(r_e)

        if act.chi1_fired and self.phase == Phase.GROUND:
            self.mode = "GwL"       # latch: cannot un-fire
            self.phase = Phase.AIR  # lifting applies from the next step on
        done = act.chi2_fired or self.steps >= self.c_max or diverged
        r_g = 0.0
        if done:
            self.phase = Phase.DONE
            r_g = self._finalize(diverged)
            info["result"] = self.result
        return StepResult(self.state(), executed, r_g, r_e, done, info)

    def _finalize(self, diverged: bool) -> float:
        """Lift, hold, score; fills ``self.result`` and returns r_grasp."""
        g, q1_val = -1, 0.0
        if not diverged:
            try:
                out = lift_and_hold(self.world, self.jaw_ref)
                self.t_lift += out.t_lift
                g = out.g
                if g == 1:
                    q1_val = self._terminal_quality(out.contacts)
            except SimulationDiverged:
                pass
        res = EpisodeResult(g, q1_val, self.t_grasp, self.t_lift, self.mode,
                            self.steps, self.travel_m * 100.0,
                            r_effici=list(self.r_effici_log))
        res.r_grasp = reward_grasp(res, self.weights)
        self.result = res
        return res.r_grasp

    def _terminal_quality(self, contacts: list[Contact]) -> float:
        if not contacts:
            return 0.0
        ws = grasp_wrench_set(contacts, self.params.lateral_friction,
                              self.world.obj.com_world(),
                              self.world.mesh.max_side(),
                              k=self.quality_cone_edges)
        return q1(ws)


def run_episode(env: GraspEnv, act_fn, mesh: TriMesh, pose: Pose,
                cloud: np.ndarray | None = None, mass: float = 0.05
                ) -> tuple[EpisodeResult, list[tuple[np.ndarray, StepResult]]]:
    """Roll one episode with ``act_fn(state) -> raw action``; returns the
    result and the (state, transition) list."""
    s = env.reset(mesh, pose, cloud, mass)
    out: list[tuple[np.ndarray, StepResult]] = []
    while True:
        r = env.step(act_fn(s))
        out.append((s, r))
        if r.done:
            return env.result, out
        s = r.state
