"""Whole-body ergodic exploration of spatial target distributions.

A kinematically simulated serial-chain manipulator, decomposed into virtual
agents on its links, explores a target density by ascending the gradient of
a diffused heat potential built from the uncovered residual.  The package
bundles the field machinery, the kinematics, the consensus controller, a
spectral-coverage baseline and a batch experiment runner.
"""

from .agents import (
    AgentLayout,
    LinkWrench,
    VirtualAgent,
    agent_forces,
    link_weight,
    link_wrench,
    local_weights,
    normalize_link_weights,
    sample_agents_equispaced,
    sample_agents_poisson,
)
from .chain import (
    KinematicChain,
    LinkFrames,
    LinkGeometry,
    forward_kinematics,
    link_jacobian,
    load_chain,
    load_model,
    manipulability,
    point_on_link,
)
from .controller import (
    ConsensusCommand,
    ControllerConfig,
    HedacState,
    clamp_joints,
    control_step,
    desired_twist,
    weighted_pinv_solve,
)
from .coverage import (
    CoverageAccumulator,
    TargetDistribution,
    deposit_coverage,
    normalized_coverage,
    residual_and_source,
    target_from_image,
    target_gaussian_mixture,
    target_uniform,
    target_uniform_box,
)
from .diffusion import (
    ConvergenceError,
    DiffusionParams,
    DirectStationarySolver,
    cfl_timestep,
    diffuse,
    diffuse_step,
    laplacian,
    stationary_solve,
)
from .grid import (
    GridDomain,
    ScalarField,
    field_to_csv,
    grid_gradient,
    interpolate,
    load_field,
    sample_gradient,
    save_field,
)
from .metrics import ergodicity
from .runlog import BatchResult, BatchRunError, RunLog
from .runner import (
    boustrophedon_waypoints,
    contact_check,
    run_batch,
    run_scenario,
    search_pattern_baseline,
    timing_report,
)
from .scenario import ScenarioError, ScenarioSpec, load_scenario, parse_scenario
from .smc import FourierBasis, SmcState, integrate_reflect, smc_step, target_coeffs

__version__ = "0.1.0"
