"""Consensus whole-body velocity control.

Each active link turns its agents' fictitious forces into a task: a desired
twist at the link COM (or, for a single-agent link, a desired point velocity
at that agent).  Tasks are stacked and solved in the weighted least-squares
sense with Tikhonov damping, then integrated kinematically under a joint
speed cap and position clamping.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .agents import (
    link_weight,
    link_wrench,
    local_weights,
    normalize_link_weights,
)
from .chain import (
    forward_kinematics,
    link_jacobian_at_point,
    point_on_link,
    points_on_link,
)
from .coverage import normalized_coverage, residual_and_source
from .diffusion import DirectStationarySolver, cfl_timestep, diffuse
from .grid import ScalarField, grid_gradient, sample_gradient_many
from .metrics import ergodicity

log = logging.getLogger(__name__)

SINGULAR_FALLBACK_DAMPING = 1e-6


@dataclass(frozen=True)
class ControllerConfig:
    dt: float
    max_joint_speed: float = 1.0
    damping: float = 1e-6
    active_links: tuple = ()

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.damping < 0:
            raise ValueError("damping must be nonnegative")
        object.__setattr__(self, "active_links", tuple(sorted(self.active_links)))


def desired_twist(wrench):
    """Identity map from a link wrench to the link's desired twist."""
    return np.concatenate([np.atleast_1d(wrench.f_net), np.atleast_1d(wrench.m_net)])


def clamp_joints(q, limits):
    lo, hi = limits
    return np.clip(q, lo, hi)


def weighted_pinv_solve(J_stack, weights, v_stack, damping=0.0):
    """Weighted damped least squares:  (J^T W J + damping*I) qd = J^T W v.

    ``weights`` is the diagonal of the block weight matrix, one entry per
    stacked task row.  With zero damping and a nonsingular normal matrix this
    is the exact weighted pseudoinverse; a singular normal matrix at zero
    damping falls back to a small damping value and logs the event.
    """
    J = np.asarray(J_stack, dtype=float)
    w = np.asarray(weights, dtype=float)
    v = np.asarray(v_stack, dtype=float)
    if w.ndim == 2:
        w = np.diag(w)
    if J.shape[0] != w.shape[0] or J.shape[0] != v.shape[0]:
        raise ValueError("stacked Jacobian, weights and targets disagree on rows")
    jtw = J.T * w
    A = jtw @ J
    b = jtw @ v
    n = A.shape[0]
    if damping > 0:
        return np.linalg.solve(A + damping * np.eye(n), b)
    try:
        qd = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        qd = None
    if qd is None or not np.all(np.isfinite(qd)):
        log.warning("singular consensus normal matrix; retrying with damping %g",
                    SINGULAR_FALLBACK_DAMPING)
        return np.linalg.solve(A + SINGULAR_FALLBACK_DAMPING * np.eye(n), b)
    return qd


@dataclass
class ConsensusCommand:
    """Stacked task system and the joint velocities solving it."""

    stacked_twists: np.ndarray
    stacked_jacobian: np.ndarray
    row_weights: np.ndarray    # diagonal of the block weight matrix
    q_dot: np.ndarray
    damping: float
    link_weights: dict = field(default_factory=dict)


def assemble_consensus(tasks, damping):
    """Stack (jacobian, target, weight, link) tasks and solve for q_dot.

    Zero-weight tasks contribute nothing to the weighted cost and are
    dropped, so a link whose manipulability collapses leaves the command
    bit-for-bit unchanged.
    """
    if not tasks:
        raise ValueError("no tasks to solve")
    live = [t for t in tasks if t[2] > 0.0]
    if live:
        tasks = live
    J = np.vstack([t[0] for t in tasks])
    v = np.concatenate([t[1] for t in tasks])
    w = np.concatenate([np.full(t[0].shape[0], t[2]) for t in tasks])
    qd = weighted_pinv_solve(J, w, v, damping)
    return ConsensusCommand(v, J, w, qd, damping,
                            {t[3]: t[2] for t in tasks})


@dataclass
class HedacState:
    """Mutable state of one whole-body exploration run."""

    chain: object
    layout: object
    target: object
    cov: object                      # CoverageAccumulator
    diffusion: object                # DiffusionParams
    config: ControllerConfig
    q: np.ndarray
    potential: str = "transient"     # or "stationary"
    u: ScalarField = None
    t: int = 0
    _stationary_solver: object = None

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if self.u is None:
            self.u = ScalarField.zeros(self.target.domain)
        if self.potential not in ("transient", "stationary"):
            raise ValueError(f"unknown potential update mode {self.potential!r}")
        # precompute, mirroring the algorithm's initialization step
        self.cfl_dt = cfl_timestep(self.diffusion, self.target.domain)
        if self.potential == "stationary" and self._stationary_solver is None:
            self._stationary_solver = DirectStationarySolver(self.target.domain,
                                                             self.diffusion)

    @property
    def dims(self):
        return self.target.domain.dims


def control_step(state):
    """One pass of the whole-body exploration loop.

    Deposits coverage at the current configuration, rebuilds the residual
    heat source, advances the potential field, turns per-agent forces into
    weighted link tasks and integrates the consensus joint velocities.
    Returns (q_next, diagnostics); the state is advanced in place.
    """
    cfg = state.config
    chain = state.chain
    t_control = 0.0

    tic = time.perf_counter()
    frames = forward_kinematics(chain, state.q)
    positions_all = state.layout.all_world_positions(frames)[:, : state.dims]
    t_control += time.perf_counter() - tic

    n_clamped = state.cov.add_positions(positions_all)
    if state.cov.has_mass:
        c = normalized_coverage(state.cov)
    else:
        # nothing has overlapped the domain yet: coverage is zero everywhere
        c = ScalarField.zeros(state.target.domain)
    eps = ergodicity(state.target, c)
    _, source = residual_and_source(state.target, c)

    tic = time.perf_counter()
    if state.potential == "stationary":
        state.u = state._stationary_solver.solve(source)
    else:
        state.u = diffuse(state.u, source, state.diffusion)
    t_diffusion = time.perf_counter() - tic

    tic = time.perf_counter()
    grads = grid_gradient(state.u)
    tasks = []
    raw_link_weights = []
    active = list(cfg.active_links)
    for j in active:
        group = state.layout.agents_on(j, active_only=True)
        pts = points_on_link(frames, j, state.layout.local_positions(group))
        pts_d = pts[:, : state.dims]
        w_agents = local_weights(state.u, pts_d)
        forces = w_agents[:, None] * sample_gradient_many(state.u, pts_d, grads)
        raw_link_weights.append(link_weight(chain, state.q, j, frames=frames))
        if len(group) == 1:
            # single-agent link: command the agent point itself, which is the
            # classic single-agent behavior (no moment constraint)
            J = link_jacobian_at_point(chain, frames, j, pts[0], point_only=True)
            tasks.append((J, forces[0], 0.0, j))
        else:
            com_world = point_on_link(frames, j, chain.links[j].com_local)
            wrench = link_wrench(forces, pts_d, com_world[: state.dims], j)
            J = link_jacobian_at_point(chain, frames, j, com_world)
            tasks.append((J, desired_twist(wrench), 0.0, j))
    norm_w = normalize_link_weights(raw_link_weights)
    tasks = [(J, v, float(w), j) for (J, v, _, j), w in zip(tasks, norm_w)]
    command = assemble_consensus(tasks, cfg.damping)

    qd = command.q_dot
    speed = np.max(np.abs(qd))
    if speed > cfg.max_joint_speed:
        qd = qd * (cfg.max_joint_speed / speed)
    q_next = clamp_joints(state.q + qd * cfg.dt, chain.limits)
    t_control += time.perf_counter() - tic

    state.q = q_next
    state.t += 1
    diagnostics = {
        "eps": eps,
        "link_weights": dict(zip(active, norm_w)),
        "qd_norm": float(np.linalg.norm(qd)),
        "qd_inf": float(np.max(np.abs(qd))),
        "n_clamped": n_clamped,
        "command": command,
        "positions": positions_all,
        "t_diffusion": t_diffusion,
        "t_control": t_control,
    }
    return q_next, diagnostics
