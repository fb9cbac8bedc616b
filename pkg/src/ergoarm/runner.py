"""Scenario execution: single runs, seed batches, the planned-sweep baseline
and the timing harness.

Every run is deterministic for a fixed (scenario, seed): random draws for
initial configurations, Poisson-disk layouts and contact-sphere placement
come from named substreams of the run seed.
"""

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .agents import VirtualAgent, AgentLayout
from .chain import forward_kinematics, link_jacobian_at_point, points_on_link
from .controller import ControllerConfig, HedacState, clamp_joints, control_step
from .coverage import normalized_coverage
from .grid import ScalarField, save_field
from .metrics import ergodicity
from .runlog import BatchResult, BatchRunError, RunLog
from .scenario import (
    ScenarioError,
    build_chain,
    build_coverage,
    build_diffusion,
    build_domain,
    build_layout,
    build_target,
    initial_config,
    sample_sphere_center,
)
from .smc import SmcState, smc_step


def _segment_point_distance(a, b, p):
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def contact_check(chain, frames, center, radius, links):
    """Closed-condition capsule/sphere test over the given links.

    Returns (contact, link_index); the reported link is the one with the
    smallest clearance.  ``frames`` may be a LinkFrames or a joint vector.
    """
    if isinstance(frames, np.ndarray) or isinstance(frames, (list, tuple)):
        frames = forward_kinematics(chain, np.asarray(frames, dtype=float))
    center = np.asarray(center, dtype=float)
    best = (np.inf, -1)
    for j in links:
        link = chain.links[j]
        ends = points_on_link(frames, j, np.vstack(link.axis_points))
        d = _segment_point_distance(ends[0], ends[1], center)
        clearance = d - link.radius - radius
        if clearance < best[0]:
            best = (clearance, j)
    return best[0] <= 0.0, (best[1] if best[0] <= 0.0 else -1)


def _tip_local(chain):
    return np.asarray(chain.links[chain.n - 1].p1)


def _passive_layout(layout, chain):
    """Demote every agent to passive except the one at the last link's end."""
    last = chain.n - 1
    tip = _tip_local(chain)
    candidates = [i for i, a in enumerate(layout.agents) if a.link_index == last]
    if not candidates:
        raise ScenarioError("agents.groups", "passive mode needs agents on the last link")
    tip_i = min(candidates,
                key=lambda i: np.linalg.norm(np.asarray(layout.agents[i].local_pos) - tip))
    agents = tuple(
        VirtualAgent(a.link_index, a.local_pos, active=(i == tip_i))
        for i, a in enumerate(layout.agents))
    return AgentLayout(agents, frozenset({last}))


def _all_passive(layout):
    agents = tuple(VirtualAgent(a.link_index, a.local_pos, False) for a in layout.agents)
    return AgentLayout(agents, frozenset())


def _damped_point_solve(J, v, damping):
    A = J @ J.T + damping * np.eye(J.shape[0])
    return J.T @ np.linalg.solve(A, v)


@dataclass
class _RunSetup:
    domain: object
    target: object
    chain: object
    layout: object
    cov: object
    q0: np.ndarray
    sphere: object    # (center, radius) or None
    contact_links: tuple


def _prepare(spec, seed):
    domain = build_domain(spec)
    target = build_target(spec, domain)
    chain = build_chain(spec)
    if domain.dims != chain.dims:
        raise ScenarioError("chain", f"{chain.dims}-D chain in a {domain.dims}-D domain")
    layout = build_layout(spec, chain, seed)
    cov = build_coverage(spec, domain)
    contact_links = tuple(sorted({a.link_index for a in layout.agents}))

    sphere = None
    if spec.contact is not None:
        radius = spec.contact.radius
        if spec.init.method == "fixed":
            q0 = initial_config(spec, chain, seed)
            # reject against every configured pose so all methods sharing the
            # scenario face identical sphere draws
            all_frames = [forward_kinematics(chain, np.asarray(cfg, dtype=float))
                          for cfg in spec.init.configs]
            center = sample_sphere_center(
                spec, domain, seed,
                reject_fn=lambda c: any(
                    contact_check(chain, fr, c, radius, contact_links)[0]
                    for fr in all_frames))
        else:
            center = sample_sphere_center(spec, domain, seed)
            q0 = initial_config(
                spec, chain, seed, sphere=(center, radius),
                contact_fn=lambda q, s: contact_check(chain, q, s[0], s[1],
                                                      contact_links)[0],
                domain=domain, layout=layout)
        sphere = (center, radius)
    else:
        q0 = initial_config(spec, chain, seed, domain=domain, layout=layout)
    return _RunSetup(domain, target, chain, layout, cov, q0, sphere, contact_links)


def run_scenario(spec, seed, deterministic=False, snapshot_every=None,
                 outdir=None, record_positions=False):
    """Execute one scenario for one seed and return its RunLog.

    The run stops at the horizon, or at first contact when the scenario has
    a contact target.  ``snapshot_every`` writes the potential and coverage
    fields in the binary field format every so many steps.
    """
    mode = spec.control.mode
    if mode in ("hedac-nonstationary", "hedac-stationary", "passive"):
        return _run_hedac(spec, seed, deterministic, snapshot_every, outdir,
                          record_positions)
    if mode == "smc":
        return _run_smc(spec, seed, deterministic, snapshot_every, outdir,
                        record_positions)
    if mode in ("pattern-forward", "pattern-reverse"):
        return search_pattern_baseline(spec, seed, record_positions=record_positions)
    raise ScenarioError("controller.mode", f"unknown mode {mode!r}")


def _maybe_snapshot(outdir, snapshot_every, t, u, cov):
    if outdir is None or not snapshot_every or t % snapshot_every:
        return
    if u is not None:
        save_field(u, os.path.join(outdir, f"potential_{t:06d}.bin"))
    if cov.has_mass:
        save_field(normalized_coverage(cov),
                   os.path.join(outdir, f"coverage_{t:06d}.bin"))


def _run_hedac(spec, seed, deterministic, snapshot_every, outdir, record_positions):
    setup = _prepare(spec, seed)
    mode = spec.control.mode
    layout = setup.layout
    if mode == "passive":
        layout = _passive_layout(layout, setup.chain)
        potential = "stationary"
        active_links = tuple(sorted(layout.active_links))
    else:
        potential = "stationary" if mode == "hedac-stationary" else "transient"
        active_links = tuple(sorted(layout.active_links))
        if not active_links:
            raise ScenarioError("agents.groups", "active modes need an active group")

    config = ControllerConfig(dt=spec.control.dt,
                              max_joint_speed=spec.control.max_joint_speed,
                              damping=spec.control.damping,
                              active_links=active_links)
    state = HedacState(chain=setup.chain, layout=layout, target=setup.target,
                       cov=setup.cov, diffusion=build_diffusion(spec),
                       config=config, q=setup.q0, potential=potential)
    log = RunLog(spec.name, mode, seed, setup.chain.n, active_links)

    for t in range(spec.horizon):
        tic = time.perf_counter()
        q_before = state.q.copy()
        _, diag = control_step(state)
        contact = False
        if setup.sphere is not None:
            contact, link = contact_check(setup.chain, q_before, setup.sphere[0],
                                          setup.sphere[1], setup.contact_links)
        wall = (time.perf_counter() - tic) * 1e3
        log.record(t, diag["eps"], q_before, diag["link_weights"], diag["qd_norm"],
                   diag["n_clamped"], wall, contact,
                   positions=diag["positions"] if record_positions else None)
        _maybe_snapshot(outdir, snapshot_every, t, state.u, state.cov)
        if contact:
            log.contact_step = t
            log.contact_link = link
            break
    return log


def _run_smc(spec, seed, deterministic, snapshot_every, outdir, record_positions):
    setup = _prepare(spec, seed)
    layout = _all_passive(setup.layout)
    chain = setup.chain
    dims = setup.domain.dims
    smc_state = SmcState.for_target(setup.target, spec.smc.basis)
    q = setup.q0.copy()
    tip_local = _tip_local(chain)
    log = RunLog(spec.name, "smc", seed, chain.n, ())

    for t in range(spec.horizon):
        tic = time.perf_counter()
        frames = forward_kinematics(chain, q)
        positions = layout.all_world_positions(frames)[:, :dims]
        n_clamped = setup.cov.add_positions(positions)
        c = (normalized_coverage(setup.cov) if setup.cov.has_mass
             else ScalarField.zeros(setup.domain))
        eps = ergodicity(setup.target, c)

        tip = points_on_link(frames, chain.n - 1, tip_local)[0, :dims]
        v, smc_state = smc_step(smc_state, tip, spec.control.dt, spec.smc.u_max)
        J = link_jacobian_at_point(chain, frames, chain.n - 1,
                                   points_on_link(frames, chain.n - 1, tip_local)[0],
                                   point_only=True)
        qd = _damped_point_solve(J, v, spec.control.damping)
        speed = np.max(np.abs(qd))
        if speed > spec.control.max_joint_speed:
            qd = qd * (spec.control.max_joint_speed / speed)
        q_before = q.copy()
        q = clamp_joints(q + qd * spec.control.dt, chain.limits)

        contact = False
        if setup.sphere is not None:
            contact, link = contact_check(chain, frames, setup.sphere[0],
                                          setup.sphere[1], setup.contact_links)
        wall = (time.perf_counter() - tic) * 1e3
        log.record(t, eps, q_before, {}, float(np.linalg.norm(qd)), n_clamped,
                   wall, contact, positions=positions if record_positions else None)
        _maybe_snapshot(outdir, snapshot_every, t, None, setup.cov)
        if contact:
            log.contact_step = t
            log.contact_link = link
            break
    return log


# --- planned sweep baseline --------------------------------------------------

def boustrophedon_waypoints(lower, upper, lane_spacing, margin):
    """Serpentine sweep of a box: legs along x, lanes along y, planes along z.

    Lanes and planes are inset by ``margin`` and spaced ``lane_spacing``;
    consecutive lanes and planes alternate direction so the path is a single
    connected polyline.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)

    def stations(lo, hi):
        span = hi - lo - 2.0 * margin
        count = max(1, int(np.floor(span / lane_spacing + 1e-9)) + 1)
        return lo + margin + np.arange(count) * lane_spacing

    # legs run wall to wall; only lanes and planes are inset, so the swept
    # tube reaches the box corners
    xs = (lower[0], upper[0])
    ys = stations(lower[1], upper[1])
    zs = stations(lower[2], upper[2]) if lower.size == 3 else [None]

    waypoints = []
    leg_reversed = False
    flip_lane = False
    for z in zs:
        lanes = ys[::-1] if flip_lane else ys
        for y in lanes:
            order = xs[::-1] if leg_reversed else xs
            for x in order:
                waypoints.append(np.array([x, y, z]) if z is not None
                                 else np.array([x, y]))
            leg_reversed = not leg_reversed
        flip_lane = not flip_lane
    return waypoints


def search_pattern_baseline(spec, seed, record_positions=False):
    """Track a planned boustrophedon sweep with the arm tip, logging
    steps-to-contact.  ``pattern-reverse`` starts from the configured end
    pose and visits the waypoints in reverse order."""
    if spec.contact is None:
        raise ScenarioError("contact", "the pattern baseline needs a contact target")
    reverse = spec.control.mode == "pattern-reverse"
    spec_for_init = replace(spec, init=replace(
        spec.init, index=(len(spec.init.configs) - 1) if reverse else 0))
    setup = _prepare(spec_for_init, seed)
    chain = setup.chain
    dims = setup.domain.dims
    layout = _all_passive(setup.layout)
    pat = spec.pattern

    last = chain.n - 1
    lane_spacing = 2.0 * (chain.links[last].radius or spec.agents.footprint_radius)
    lower = np.asarray(pat.lower if pat.lower else setup.domain.lower)
    upper = np.asarray(pat.upper if pat.upper else setup.domain.upper)
    waypoints = boustrophedon_waypoints(lower, upper, lane_spacing,
                                        margin=0.5 * lane_spacing)
    if reverse:
        waypoints = waypoints[::-1]

    q = setup.q0.copy()
    tip_local = _tip_local(chain)
    log = RunLog(spec.name, spec.control.mode, seed, chain.n, ())
    wp_i = 0
    steps_on_wp = 0
    skipped = []

    for t in range(spec.horizon):
        tic = time.perf_counter()
        frames = forward_kinematics(chain, q)
        positions = layout.all_world_positions(frames)[:, :dims]
        n_clamped = setup.cov.add_positions(positions)
        c = (normalized_coverage(setup.cov) if setup.cov.has_mass
             else ScalarField.zeros(setup.domain))
        eps = ergodicity(setup.target, c)

        contact, link = contact_check(chain, frames, setup.sphere[0],
                                      setup.sphere[1], setup.contact_links)
        qd = np.zeros(chain.n)
        if not contact and wp_i < len(waypoints):
            tip = points_on_link(frames, last, tip_local)[0, :dims]
            err = waypoints[wp_i][:dims] - tip
            dist = np.linalg.norm(err)
            if dist < pat.waypoint_tol:
                wp_i += 1
                steps_on_wp = 0
            else:
                v = pat.tip_speed * err / dist
                J = link_jacobian_at_point(chain, frames, last,
                                           points_on_link(frames, last, tip_local)[0],
                                           point_only=True)
                qd = _damped_point_solve(J, v, max(spec.control.damping, 1e-8))
                speed = np.max(np.abs(qd))
                if speed > spec.control.max_joint_speed:
                    qd = qd * (spec.control.max_joint_speed / speed)
                steps_on_wp += 1
                if steps_on_wp > pat.max_steps_per_waypoint:
                    skipped.append(wp_i)   # unreachable from here; move on
                    wp_i += 1
                    steps_on_wp = 0
        q_before = q.copy()
        q = clamp_joints(q + qd * spec.control.dt, chain.limits)
        wall = (time.perf_counter() - tic) * 1e3
        log.record(t, eps, q_before, {}, float(np.linalg.norm(qd)), n_clamped,
                   wall, contact, positions=positions if record_positions else None)
        if contact:
            log.contact_step = t
            log.contact_link = link
            break
        if wp_i >= len(waypoints):
            break
    log.skipped_waypoints = tuple(skipped)
    return log


# --- batches ------------------------------------------------------------------

def _run_one(args):
    spec, seed, deterministic = args
    return run_scenario(spec, seed, deterministic=deterministic)


def run_batch(spec, seeds, jobs=1, deterministic=False):
    """Run a seed sweep and aggregate it.

    Non-contact batches produce the per-timestep mean/std of the metric;
    contact batches collect steps-to-contact.  Any failing run aborts the
    batch, identifying its seed.
    """
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ValueError("need at least one seed")
    logs = {}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {seed: pool.submit(_run_one, (spec, seed, deterministic))
                       for seed in seeds}
            for seed, fut in futures.items():
                try:
                    logs[seed] = fut.result()
                except Exception as exc:   # noqa: BLE001 - reported with seed
                    raise BatchRunError(seed, exc) from exc
    else:
        for seed in seeds:
            try:
                logs[seed] = run_scenario(spec, seed, deterministic=deterministic)
            except Exception as exc:       # noqa: BLE001
                raise BatchRunError(seed, exc) from exc

    ordered = [logs[s] for s in sorted(seeds)]
    if spec.contact is not None:
        return BatchResult(
            spec.name, spec.control.mode, tuple(sorted(seeds)),
            contact_steps=tuple(lg.steps_to_contact for lg in ordered),
            contact_links=tuple(lg.contact_link for lg in ordered),
        ), ordered
    eps = np.array([lg.eps for lg in ordered])
    return BatchResult(spec.name, spec.control.mode, tuple(sorted(seeds)),
                       eps_per_run=eps), ordered


# --- timing -------------------------------------------------------------------

@dataclass
class TimingReport:
    total_ms: np.ndarray
    diffusion_ms: np.ndarray
    control_ms: np.ndarray

    def _stats(self, arr):
        return {"mean": float(np.mean(arr)), "median": float(np.median(arr)),
                "p95": float(np.percentile(arr, 95))}

    def stats(self):
        return {"total": self._stats(self.total_ms),
                "diffusion": self._stats(self.diffusion_ms),
                "control": self._stats(self.control_ms)}

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["step", "total_ms", "diffusion_ms", "control_ms"])
            for i in range(self.total_ms.size):
                w.writerow([i, f"{self.total_ms[i]:.6f}",
                            f"{self.diffusion_ms[i]:.6f}",
                            f"{self.control_ms[i]:.6f}"])


def timing_report(spec, seed=0, n_steps=50, warmup=3):
    """Per-step wall-clock statistics of the control loop, split into the
    field-integration phase and the kinematics/consensus phase."""
    if spec.control.mode not in ("hedac-nonstationary", "hedac-stationary", "passive"):
        raise ScenarioError("controller.mode", "timing runs use the hedac modes")
    setup = _prepare(spec, seed)
    layout = setup.layout if spec.control.mode != "passive" \
        else _passive_layout(setup.layout, setup.chain)
    potential = "stationary" if spec.control.mode != "hedac-nonstationary" else "transient"
    config = ControllerConfig(dt=spec.control.dt,
                              max_joint_speed=spec.control.max_joint_speed,
                              damping=spec.control.damping,
                              active_links=tuple(sorted(layout.active_links)))
    state = HedacState(chain=setup.chain, layout=layout, target=setup.target,
                       cov=setup.cov, diffusion=build_diffusion(spec),
                       config=config, q=setup.q0, potential=potential)
    total, diffusion, control = [], [], []
    for i in range(warmup + n_steps):
        tic = time.perf_counter()
        _, diag = control_step(state)
        toc = time.perf_counter()
        if i >= warmup:
            total.append((toc - tic) * 1e3)
            diffusion.append(diag["t_diffusion"] * 1e3)
            control.append(diag["t_control"] * 1e3)
    return TimingReport(np.asarray(total), np.asarray(diffusion), np.asarray(control))
