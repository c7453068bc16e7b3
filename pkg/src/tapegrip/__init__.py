"""Planar kinematics and quasi-static grasping simulator for a
two-appendage tape-spring manipulator."""

from .config import (
    ControlDefaults,
    GripperGeometry,
    MechanicsParams,
    SimConfig,
    default_config,
    load_config,
    save_config,
)
from .geometry import Vec2
from .kinematics import (
    ActuatorCommand,
    AppendageState,
    apply_command,
    forward_kinematics,
    inverse_kinematics,
    theta1_to_theta4,
    theta4_to_theta1,
)
from .mechanics import (
    BendSpring,
    BucklingModel,
    ForceEstimate,
    TorqueSpline,
    buckling_force,
    displacement_for_force,
    estimate_contact_force,
    fit_buckling,
    fit_spring,
    fit_torque_spline,
    simulate_load_cell,
    spring_force,
)
from .sim import (
    Circle,
    ContactReport,
    Ellipse,
    SimObject,
    WorldCommand,
    WorldState,
    add_object,
    grasp_gap_force,
    make_world,
    restore,
    snapshot,
    step,
)
from .workspace import WorkspaceMap, compute_workspace, export_heatmap, load_heatmap

__version__ = "0.1.0"

__all__ = [
    "ActuatorCommand", "AppendageState", "BendSpring", "BucklingModel",
    "Circle", "ContactReport", "ControlDefaults", "Ellipse", "ForceEstimate",
    "GripperGeometry", "MechanicsParams", "SimConfig", "SimObject",
    "TorqueSpline", "Vec2", "WorkspaceMap", "WorldCommand", "WorldState",
    "add_object", "apply_command", "buckling_force", "compute_workspace",
    "default_config", "displacement_for_force", "estimate_contact_force",
    "export_heatmap", "fit_buckling", "fit_spring", "fit_torque_spline",
    "forward_kinematics", "grasp_gap_force", "inverse_kinematics",
    "load_config", "load_heatmap", "make_world", "restore", "save_config",
    "simulate_load_cell", "snapshot", "spring_force", "step",
    "theta1_to_theta4", "theta4_to_theta1",
]
