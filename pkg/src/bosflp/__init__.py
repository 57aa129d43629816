"""Exact bi-objective stochastic facility location by branch-and-bound with Benders cuts."""
from .biobab import Node, RunStats, run, solve
from .bruteforce import FrontPoint, enumerate_front
from .instance import (
    GeneratorParams,
    Instance,
    ScenarioSet,
    generate_instance,
    generate_scenarios,
    read_instance,
    read_scenarios,
    reference_instance,
    write_instance,
    write_scenarios,
)
from .master import Settings, Strategy

__all__ = [
    "FrontPoint",
    "GeneratorParams",
    "Instance",
    "Node",
    "RunStats",
    "ScenarioSet",
    "Settings",
    "Strategy",
    "enumerate_front",
    "generate_instance",
    "generate_scenarios",
    "read_instance",
    "read_scenarios",
    "reference_instance",
    "run",
    "solve",
    "write_instance",
    "write_scenarios",
]
