"""Concrete problem instances with exact oracle implementations."""

from .congestion import CongestionProblem
from .resource import ResourceProblem
from .traffic import TrafficProblem, load_network, pigou_network, grid_network

PROBLEM_BUILDERS = {
    "resource": ResourceProblem.from_config,
    "congestion": CongestionProblem.from_config,
    "traffic": TrafficProblem.from_config,
}

__all__ = [
    "CongestionProblem",
    "ResourceProblem",
    "TrafficProblem",
    "load_network",
    "pigou_network",
    "grid_network",
    "PROBLEM_BUILDERS",
]
