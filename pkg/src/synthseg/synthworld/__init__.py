"""Procedural stand-in for a driving simulator: scenes, sensors, scenarios, datasets."""

from synthseg.synthworld.dataset import DatasetConfig, generate_dataset, write_scenario_dataset
from synthseg.synthworld.scenario import (ActorSpec, EgoSpec, ScenarioScript, SensorFrame, SensorRig,
                                          SpawnCollisionError, Trigger, capture_frame, parse_script,
                                          run_scenario)
from synthseg.synthworld.scene import GroundRect, Scene, SceneConfig, Solid, generate_scene
from synthseg.synthworld.sensors import (LidarSpec, render_all, render_color, render_depth,
                                         render_semantic, simulate_lidar)

__all__ = [
    "ActorSpec", "DatasetConfig", "EgoSpec", "GroundRect", "LidarSpec", "ScenarioScript", "Scene",
    "SceneConfig", "SensorFrame", "SensorRig", "Solid", "SpawnCollisionError", "Trigger",
    "capture_frame", "generate_dataset", "generate_scene", "parse_script", "render_all",
    "render_color", "render_depth", "render_semantic", "run_scenario", "simulate_lidar",
    "write_scenario_dataset",
]
