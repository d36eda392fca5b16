"""Parametric pin-array gripper: two opposing fingers of R x R extensible pins.

Jaw frame: x runs from finger A (negative side) to finger B (positive side),
z is up, the jaw origin sits on the ground plane between the fingers. The jaw
orientation is fixed top-down for a whole episode; only the vertical offset
``lift_z`` changes during lifting.

Pin indexing: finger A holds indices ``[0, rows*cols)``, finger B the rest;
within a finger pins are row-major, ``index = row * cols + col``. Rows stack
upward in z, columns spread along y.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Pose

_REF_PITCH = 0.018  # 4x4 pitch; density variants rescale to keep the face span


@dataclass(frozen=True)
class GripperSpec:
    """Geometry and actuation limits of the gripper."""

    rows: int = 4
    cols: int = 4
    pin_height: float = 0.06
    tip_radius: float = 0.007
    pin_travel_max: float = 0.055
    pin_pitch: float = 0.018
    rest_gap: float = 0.11          # x distance between opposing tip centers at rest
    pin_force_max: float = 0.5
    pin_speed_max: float = 0.10
    lift_height: float = 0.30
    base_height: float = 0.008      # z of row-0 tip centers at lift_z = 0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("need at least one pin per finger")
        if self.pin_travel_max > self.rest_gap / 2.0 + 1e-12:
            raise ValueError("travel beyond mid-plane: full closure is the limit")

    @classmethod
    def with_density(cls, r: int, **overrides) -> "GripperSpec":
        """R x R variant keeping the finger face span constant."""
        if r < 2:
            raise ValueError("density needs r >= 2")
        pitch = _REF_PITCH * 3.0 / (r - 1)
        return cls(rows=r, cols=r, pin_pitch=pitch, **overrides)

    @property
    def pins_per_finger(self) -> int:
        return self.rows * self.cols

    @property
    def total_pins(self) -> int:
        return 2 * self.rows * self.cols

    def finger_of(self, i: int) -> int:
        if not 0 <= i < self.total_pins:
            raise IndexError(f"pin index {i} out of range")
        return -1 if i < self.pins_per_finger else 1

    def fingers(self) -> np.ndarray:
        """Per-pin finger sign, shape (total_pins,)."""
        half = self.pins_per_finger
        return np.concatenate([np.full(half, -1.0), np.full(half, 1.0)])

    def row_col(self, i: int) -> tuple[int, int]:
        j = i % self.pins_per_finger
        return j // self.cols, j % self.cols

    def lattice_yz(self) -> np.ndarray:
        """Per-pin (y, z) offsets at lift_z = 0, shape (total_pins, 2)."""
        rows = np.arange(self.pins_per_finger) // self.cols
        cols = np.arange(self.pins_per_finger) % self.cols
        y = (cols - (self.cols - 1) / 2.0) * self.pin_pitch
        z = self.base_height + rows * self.pin_pitch
        one = np.stack([y, z], axis=1)
        return np.concatenate([one, one])

    def plate_x(self) -> float:
        """Unsigned x of each finger base-plate face."""
        return self.rest_gap / 2.0 + self.tip_radius

    def plate_halfspan_y(self) -> float:
        return ((self.cols - 1) / 2.0 + 0.5) * self.pin_pitch

    def plate_z_range(self, lift_z: float) -> tuple[float, float]:
        lo = self.base_height - self.pin_pitch / 2.0 + lift_z
        hi = self.base_height + (self.rows - 0.5) * self.pin_pitch + lift_z
        return lo, hi


@dataclass
class GripperState:
    """Jaw pose plus per-pin extensions; a value type, copies are independent."""

    spec: GripperSpec
    jaw_pose: Pose = field(default_factory=Pose.identity)
    extensions: np.ndarray = None
    targets: np.ndarray = None
    lift_z: float = 0.0

    def __post_init__(self) -> None:
        n = self.spec.total_pins
        if self.extensions is None:
            self.extensions = np.zeros(n)
        if self.targets is None:
            self.targets = np.zeros(n)
        self.extensions = np.asarray(self.extensions, dtype=np.float64).reshape(n)
        self.targets = np.asarray(self.targets, dtype=np.float64).reshape(n)

    def copy(self) -> "GripperState":
        return GripperState(self.spec, self.jaw_pose.copy(),
                            self.extensions.copy(), self.targets.copy(),
                            self.lift_z)

    def command_extensions(self, targets: np.ndarray) -> "GripperState":
        """Return a state with clamped commanded targets."""
        t = np.clip(np.asarray(targets, dtype=np.float64),
                    0.0, self.spec.pin_travel_max)
        return replace(self, targets=t.reshape(self.spec.total_pins))

    def tips_local(self) -> np.ndarray:
        """Tip sphere centers in the jaw frame, shape (total_pins, 3)."""
        s = self.spec
        yz = s.lattice_yz()
        x = s.fingers() * (s.rest_gap / 2.0 - self.extensions)
        out = np.empty((s.total_pins, 3))
        out[:, 0] = x
        out[:, 1] = yz[:, 0]
        out[:, 2] = yz[:, 1] + self.lift_z
        return out

    def tips_world(self) -> np.ndarray:
        return self.jaw_pose.apply(self.tips_local())

    def pin_tip(self, i: int) -> np.ndarray:
        self.spec.finger_of(i)  # range check
        return self.tips_world()[i]

    def ray_directions_world(self) -> np.ndarray:
        """Per-pin interaction-ray direction: toward the opposing finger."""
        d = np.zeros((self.spec.total_pins, 3))
        d[:, 0] = -self.spec.fingers()
        return self.jaw_pose.rotate(d)
