"""Flexible-joint robot benchmark, experiment configs, CLI, Monte-Carlo."""

from .robot import ROBOT_PARAMETERS, builtin_robot_model

__all__ = ["ROBOT_PARAMETERS", "builtin_robot_model"]
