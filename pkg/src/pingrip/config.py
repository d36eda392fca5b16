"""Experiment configuration: one structured text file pins down a full run.

The file has TOML sections mirroring the component dataclasses (physics,
rewards, learner, schedule, nets, dataset) plus an ``[experiment]`` header
holding the run-level switches: seed, pin density, the single ablation flag,
the lift-switch lock, and the per-pin force cap.  Every config maps to
exactly one results-table row name, and the canonical serialization defines
a hash that all artifacts embed so outputs can always be traced to the
configuration that produced them.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .gripper import GripperSpec
from .simcore import SimParams
from .mdp import RewardWeights, state_block_mask
from .sac import SacConfig, StageSchedule


class ConfigError(ValueError):
    """Invalid or inconsistent configuration; maps to CLI exit code 2."""


# ---------------------------------------------------------------------------
# Run-level vocabulary
# ---------------------------------------------------------------------------
# One flag per results-table row.  Reward ablations zero a weight, state
# ablations zero a state block, the last two reshape the training schedule.
ABLATIONS = ("none", "wo_G", "wo_Q1", "wo_r_time", "wo_r_len", "wo_r_step",
             "wo_o", "wo_g", "wo_f", "only_f", "wo_CL", "wo_pre")

CHI1_MODES = ("free", "lock0", "lock1")

_ROW_NAMES = {
    "none": "Ours", "wo_G": "w/o G", "wo_Q1": "w/o Q1",
    "wo_r_time": "w/o r_time", "wo_r_len": "w/o r_len",
    "wo_r_step": "w/o r_step", "wo_o": "w/o o", "wo_g": "w/o g",
    "wo_f": "w/o f", "only_f": "only f", "wo_CL": "w/o CL",
    "wo_pre": "w/o pre",
}

_STATE_DROPS = {"wo_o": ("o",), "wo_g": ("g",), "wo_f": ("f",),
                "only_f": ("o", "g")}

# Default parameter grids for the sweep subcommands; overridable per run.
SWEEP_GRIDS = {
    "friction": (0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
    "force": (0.1, 0.3, 0.5, 0.7, 0.9),
    "density": (3, 4, 5),
}


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------
@dataclass
class DatasetConfig:
    """Where the prepared objects live and how episodes consume them."""

    dir: str = ""            # prepared dataset root; "" = built-in toy set
    cloud_points: int = 128  # surface samples per object signature
    mass: float = 0.05       # object mass (kg) when the manifest gives none


@dataclass
class NetConfig:
    """Network widths; the object-signature width shapes the state itself."""

    feat_dim: int = 512
    pin_hidden: tuple = (128, 256)
    g_hidden: tuple = (64,)
    trunk_hidden: tuple = (512, 256)
    point_hidden: tuple = (64, 128)
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("pin_hidden", "g_hidden", "trunk_hidden",
                     "point_hidden"):
            val = tuple(int(v) for v in getattr(self, name))
            if not val or any(v < 1 for v in val):
                raise ConfigError(f"{name} needs positive layer widths")
            setattr(self, name, val)
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unknown dtype {self.dtype!r}")
        if self.feat_dim < 1:
            raise ConfigError("feat_dim must be positive")

    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64


@dataclass
class ExperimentConfig:
    """Everything a run needs, resolved from defaults plus one TOML file."""

    seed: int = 0
    density: int = 4          # pins per finger side; pitch rescales with it
    ablation: str = "none"
    chi1: str = "free"        # free | lock0 (grasp-then-lift) | lock1
    force_max: float = 0.5    # per-pin actuation force cap, N
    n_envs: int = 1
    episodes_per_object: int = 5
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    physics: SimParams = field(default_factory=SimParams)
    rewards: RewardWeights = field(default_factory=RewardWeights)
    learner: SacConfig = field(default_factory=SacConfig)
    schedule: StageSchedule = field(default_factory=StageSchedule)
    nets: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; "
                              f"choose from {ABLATIONS}")
        if self.chi1 not in CHI1_MODES:
            raise ConfigError(f"unknown chi1 mode {self.chi1!r}; "
                              f"choose from {CHI1_MODES}")
        if self.ablation != "none" and self.chi1 != "free":
            raise ConfigError("combine at most one deviation from the base "
                              "run: ablation and chi1 lock are separate rows")
        if self.density < 2:
            raise ConfigError("density must be at least 2")
        if self.n_envs < 1 or self.episodes_per_object < 1:
            raise ConfigError("n_envs and episodes_per_object must be >= 1")
        if self.force_max <= 0.0:
            raise ConfigError("force_max must be positive")

    # -- derived run identity ------------------------------------------------
    def row_name(self) -> str:
        """The results-table row this configuration reproduces."""
        if self.chi1 == "lock0":
            return "Ours (chi1=0)"
        if self.chi1 == "lock1":
            return "Ours (chi1=1)"
        return _ROW_NAMES[self.ablation]

    def config_hash(self) -> str:
        """Hash of the canonical serialization; embedded in all artifacts."""
        return hashlib.sha256(self.to_toml().encode()).hexdigest()

    # -- component builders --------------------------------------------------
    def gripper_spec(self) -> GripperSpec:
        spec = GripperSpec.with_density(self.density)
        return dataclasses.replace(spec, pin_force_max=self.force_max)

    def sim_params(self) -> SimParams:
        return self.physics

    def reward_weights(self) -> RewardWeights:
        """Reward multipliers with the configured ablation zeroed out."""
        zero = {"wo_G": ("success",), "wo_Q1": ("quality",),
                "wo_r_time": ("grasp_time", "lift_time"),
                "wo_r_len": ("length",), "wo_r_step": ("step",)}
        fields = zero.get(self.ablation, ())
        return dataclasses.replace(self.rewards,
                                   **{name: 0.0 for name in fields})

    def stage_schedule(self) -> StageSchedule:
        """Curriculum plan with the schedule ablations applied."""
        sched = self.schedule
        if self.ablation == "wo_CL":
            sched = dataclasses.replace(sched, curriculum=False)
        elif self.ablation == "wo_pre":
            sched = dataclasses.replace(sched, use_pre=False)
        return sched

    def chi1_final(self) -> str:
        """Lift-switch mode for the final training stage and for evaluation."""
        return {"free": "free", "lock0": "force0",
                "lock1": "force1"}[self.chi1]

    def state_filter(self):
        """State-block zeroing for the observation ablations, or None."""
        drop = _STATE_DROPS.get(self.ablation)
        if drop is None:
            return None
        mask = state_block_mask(self.gripper_spec().total_pins,
                                self.nets.feat_dim, drop=drop)
        return lambda s: np.asarray(s) * mask

    def artifact_meta(self) -> dict:
        """Provenance block stamped into every log, report, and checkpoint."""
        from . import __version__
        return {"config_hash": self.config_hash(), "version": __version__,
                "seed": self.seed, "row": self.row_name()}

    # -- serialization -------------------------------------------------------
    def to_toml(self) -> str:
        """Canonical text form: fixed section order, full field listing."""
        lines = ["[experiment]"]
        for name in ("seed", "density", "ablation", "chi1", "force_max",
                     "n_envs", "episodes_per_object"):
            lines.append(_toml_pair(name, getattr(self, name)))
        for section, obj in self._sections():
            lines.append("")
            lines.append(f"[{section}]")
            for f in dataclasses.fields(obj):
                val = getattr(obj, f.name)
                if val is None:   # optional field left at its computed default
                    lines.append(f"# {f.name} left unset")
                    continue
                lines.append(_toml_pair(f.name, val))
        return "\n".join(lines) + "\n"

    def _sections(self):
        return (("dataset", self.dataset), ("physics", self.physics),
                ("rewards", self.rewards), ("learner", self.learner),
                ("schedule", self.schedule), ("nets", self.nets))

    @classmethod
    def from_toml(cls, text: str) -> "ExperimentConfig":
        """Parse a config file; unknown sections or keys are hard errors."""
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"malformed config: {e}") from e
        section_types = {"dataset": DatasetConfig, "physics": SimParams,
                         "rewards": RewardWeights, "learner": SacConfig,
                         "schedule": StageSchedule, "nets": NetConfig}
        kwargs: dict = {}
        top = dict(data.pop("experiment", {}))
        for section, payload in data.items():
            if section not in section_types:
                raise ConfigError(f"unknown section [{section}]")
            kwargs[section] = _build_section(section_types[section],
                                             section, payload)
        top_fields = {"seed", "density", "ablation", "chi1", "force_max",
                      "n_envs", "episodes_per_object"}
        for key in top:
            if key not in top_fields:
                raise ConfigError(f"unknown key {key!r} in [experiment]")
        try:
            return cls(**top, **kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            text = fh.read().decode()
        return cls.from_toml(text)


# ---------------------------------------------------------------------------
# TOML plumbing
# ---------------------------------------------------------------------------
def _toml_pair(name: str, val) -> str:
    return f"{name} = {_toml_value(val)}"


def _toml_value(val) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, (int, np.integer)):
        return str(int(val))
    if isinstance(val, (float, np.floating)):
        text = repr(float(val))
        # TOML requires a digit-bearing float form; repr already gives one
        return text
    if isinstance(val, str):
        return json.dumps(val)
    if isinstance(val, (tuple, list)):
        return "[" + ", ".join(_toml_value(v) for v in val) + "]"
    raise ConfigError(f"cannot serialize {type(val).__name__} value {val!r}")


def _build_section(typ, section: str, payload):
    if not isinstance(payload, dict):
        raise ConfigError(f"section [{section}] must be a table")
    names = {f.name for f in dataclasses.fields(typ)}
    for key in payload:
        if key not in names:
            raise ConfigError(f"unknown key {key!r} in [{section}]")
    defaults = typ()
    coerced = {}
    for f in dataclasses.fields(typ):
        if f.name not in payload:
            continue
        val = payload[f.name]
        if isinstance(val, list):
            val = tuple(val)
        elif isinstance(val, int) and not isinstance(val, bool) \
                and isinstance(getattr(defaults, f.name), float):
            val = float(val)
        coerced[f.name] = val
    try:
        return typ(**coerced)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"[{section}]: {e}") from e
