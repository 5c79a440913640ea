"""Scenario runner and simulated network."""
from .clock import EventQueue, VirtualClock
from .link import DropMode, LinkStats, Outage, OutageSchedule, SimulatedLink, WireFrame
from .profiles import STATE_MODELS, STATES, AccelGenerator, ActivityProfile
from .generate import random_scenario_doc
from .runner import RunReport, replay_uploads, run_scenario, sim_key_hex
from .scenario import SCHEMA, ParticipantSpec, Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "EventQueue", "VirtualClock", "DropMode", "LinkStats", "Outage", "OutageSchedule", "SimulatedLink",
    "WireFrame", "STATE_MODELS", "STATES", "AccelGenerator", "ActivityProfile", "RunReport", "replay_uploads", "run_scenario", "random_scenario_doc",
    "sim_key_hex", "SCHEMA", "ParticipantSpec", "Scenario", "ScenarioError", "load_scenario", "parse_scenario",
]
