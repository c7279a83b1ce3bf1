"""Deterministic fixed-step simulation of the watermarked control loop."""

from .backend import COMPILED_AVAILABLE
from .channel import ChannelSystem, detection_channel, performance_channel, simulate_channel
from .dynamics import (
    CallableDynamics,
    FlexJointDynamics,
    LinearDynamics,
    NonlinearPlant,
    linear_plant,
)
from .loop import (
    IMMEDIATE,
    loop_equilibrium,
    record_replay_feed,
    STATE_MATCHED,
    AttackScenario,
    ClosedLoopConfig,
    ClosedLoopTrace,
    read_trace_csv,
    simulate,
)

__all__ = [
    "COMPILED_AVAILABLE",
    "AttackScenario",
    "CallableDynamics",
    "ChannelSystem",
    "ClosedLoopConfig",
    "ClosedLoopTrace",
    "FlexJointDynamics",
    "IMMEDIATE",
    "LinearDynamics",
    "NonlinearPlant",
    "STATE_MATCHED",
    "detection_channel",
    "linear_plant",
    "loop_equilibrium",
    "performance_channel",
    "read_trace_csv",
    "record_replay_feed",
    "simulate",
    "simulate_channel",
]
