"""Pin-array parallel-jaw gripper: simulation, grasp quality, and policy learning."""

__version__ = "0.1.0"
