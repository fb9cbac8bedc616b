"""Scenario files: a single YAML document describing one experiment.

Top-level keys mirror the simulator's building blocks (domain, target,
chain, agents, controller, ...).  An optional ``defaults`` mapping with the
same structure supplies fallback values, so a committed scenario can keep
all shared numbers in one documented place.  Link numbers in scenario files
are 1-based.
"""

import copy
from dataclasses import dataclass, replace

import numpy as np
import yaml

from . import chain as chain_mod
from .agents import AgentLayout, sample_agents_equispaced, sample_agents_poisson
from .coverage import (
    CoverageAccumulator,
    target_from_image,
    target_gaussian_mixture,
    target_uniform,
    target_uniform_box,
)
from .diffusion import DiffusionParams
from .grid import GridDomain

MODES = ("hedac-nonstationary", "hedac-stationary", "smc", "passive",
         "pattern-forward", "pattern-reverse")


class ScenarioError(ValueError):
    """Scenario validation failure; names the offending field."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def _req(mapping, field, path):
    if field not in mapping:
        raise ScenarioError(f"{path}.{field}", "missing required field")
    return mapping[field]


@dataclass(frozen=True)
class DomainSpec:
    shape: tuple
    spacing: tuple
    origin: tuple


@dataclass(frozen=True)
class TargetSpec:
    kind: str
    params: dict


@dataclass(frozen=True)
class ChainSpec:
    model: str = ""
    path: str = ""
    base: tuple = ()
    base_rpy: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class AgentGroupSpec:
    link: int              # 0-based
    method: str            # equispaced | poisson
    spacing: float = 0.0
    min_dist: float = 0.0
    active: bool = True


@dataclass(frozen=True)
class AgentsSpec:
    footprint_radius: float
    groups: tuple


@dataclass(frozen=True)
class ControlSpec:
    mode: str
    alpha: tuple
    n_steps: int = 1
    dt: float = 0.05
    max_joint_speed: float = 1.0
    damping: float = 1e-6
    stationary_tol: float = 1e-8
    max_stationary_iters: int = 100000


@dataclass(frozen=True)
class SmcSpec:
    basis: int = 20
    u_max: float = 0.2


@dataclass(frozen=True)
class InitSpec:
    method: str = "uniform"    # uniform | fixed
    configs: tuple = ()
    index: int = 0


@dataclass(frozen=True)
class ContactSpec:
    radius: float
    center_lower: tuple = ()
    center_upper: tuple = ()


@dataclass(frozen=True)
class PatternSpec:
    tip_speed: float = 0.2
    waypoint_tol: float = 0.02
    max_steps_per_waypoint: int = 400
    lower: tuple = ()
    upper: tuple = ()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    domain: DomainSpec
    target: TargetSpec
    chain: ChainSpec
    agents: AgentsSpec
    control: ControlSpec
    horizon: int
    init: InitSpec
    smc: SmcSpec = None
    contact: ContactSpec = None
    pattern: PatternSpec = None

    def with_mode(self, mode):
        if mode not in MODES:
            raise ScenarioError("controller.mode", f"unknown mode {mode!r}")
        return replace(self, control=replace(self.control, mode=mode))

    def with_horizon(self, horizon):
        return replace(self, horizon=int(horizon))


def _merge_defaults(data):
    defaults = data.pop("defaults", None)
    if not defaults:
        return data

    def merge(base, over):
        out = copy.deepcopy(base)
        for k, v in over.items():
            if k in out and isinstance(out[k], dict) and isinstance(v, dict):
                out[k] = merge(out[k], v)
            else:
                out[k] = copy.deepcopy(v)
        return out

    return merge(defaults, data)


def _as_tuple(value, dims, path):
    if np.isscalar(value):
        return (float(value),) * dims
    seq = tuple(float(v) for v in value)
    if len(seq) != dims:
        raise ScenarioError(path, f"expected {dims} entries, got {len(seq)}")
    return seq


def parse_scenario(data, name="scenario"):
    data = _merge_defaults(dict(data))
    name = data.get("name", name)

    dom = _req(data, "domain", name)
    shape = tuple(int(n) for n in _req(dom, "shape", "domain"))
    dims = len(shape)
    if dims not in (2, 3):
        raise ScenarioError("domain.shape", "domain must be 2-D or 3-D")
    spacing = _as_tuple(_req(dom, "spacing", "domain"), dims, "domain.spacing")
    if "origin" in dom:
        origin = _as_tuple(dom["origin"], dims, "domain.origin")
    else:
        origin = tuple(0.5 * s for s in spacing)
    domain_spec = DomainSpec(shape, spacing, origin)

    tgt = _req(data, "target", name)
    kind = _req(tgt, "kind", "target")
    if kind not in ("uniform", "uniform-box", "gaussian-mixture", "image"):
        raise ScenarioError("target.kind", f"unknown target kind {kind!r}")
    target_spec = TargetSpec(kind, {k: v for k, v in tgt.items() if k != "kind"})

    ch = _req(data, "chain", name)
    if "model" not in ch and "path" not in ch:
        raise ScenarioError("chain", "needs a shipped 'model' name or a 'path'")
    chain_spec = ChainSpec(
        model=ch.get("model", ""), path=ch.get("path", ""),
        base=tuple(float(v) for v in ch.get("base", ())),
        base_rpy=tuple(float(v) for v in ch.get("base_rpy", (0.0, 0.0, 0.0))),
    )

    ag = _req(data, "agents", name)
    radius = float(_req(ag, "footprint_radius", "agents"))
    if radius <= 0:
        raise ScenarioError("agents.footprint_radius", "must be positive")
    groups = []
    for i, g in enumerate(_req(ag, "groups", "agents")):
        link = int(_req(g, "link", f"agents.groups[{i}]")) - 1
        method = _req(g, "method", f"agents.groups[{i}]")
        if method == "equispaced":
            spacing_g = float(_req(g, "spacing", f"agents.groups[{i}]"))
            groups.append(AgentGroupSpec(link, method, spacing=spacing_g,
                                         active=bool(g.get("active", True))))
        elif method == "poisson":
            min_dist = float(_req(g, "min_dist", f"agents.groups[{i}]"))
            groups.append(AgentGroupSpec(link, method, min_dist=min_dist,
                                         active=bool(g.get("active", True))))
        else:
            raise ScenarioError(f"agents.groups[{i}].method",
                                f"unknown sampling method {method!r}")
    agents_spec = AgentsSpec(radius, tuple(groups))

    ctl = _req(data, "controller", name)
    mode = _req(ctl, "mode", "controller")
    if mode not in MODES:
        raise ScenarioError("controller.mode", f"unknown mode {mode!r}")
    control_spec = ControlSpec(
        mode=mode,
        alpha=_as_tuple(_req(ctl, "alpha", "controller"), dims, "controller.alpha"),
        n_steps=int(ctl.get("n_steps", 1)),
        dt=float(ctl.get("dt", 0.05)),
        max_joint_speed=float(ctl.get("max_joint_speed", 1.0)),
        damping=float(ctl.get("damping", 1e-6)),
        stationary_tol=float(ctl.get("stationary_tol", 1e-8)),
        max_stationary_iters=int(ctl.get("max_stationary_iters", 100000)),
    )
    if control_spec.n_steps < 1:
        raise ScenarioError("controller.n_steps", "must be >= 1")

    horizon = int(_req(data, "horizon", name))
    if horizon < 1:
        raise ScenarioError("horizon", "must be >= 1")

    init_data = data.get("init", {"method": "uniform"})
    method = init_data.get("method", "uniform")
    if method not in ("uniform", "uniform-reach", "fixed"):
        raise ScenarioError("init.method", f"unknown method {method!r}")
    configs = tuple(tuple(float(v) for v in cfg)
                    for cfg in init_data.get("configs", ()))
    if method == "fixed" and not configs:
        raise ScenarioError("init.configs", "fixed init needs at least one config")
    init_spec = InitSpec(method, configs, int(init_data.get("index", 0)))

    smc_spec = None
    if "smc" in data:
        smc_spec = SmcSpec(basis=int(data["smc"].get("basis", 20)),
                           u_max=float(data["smc"].get("u_max", 0.2)))
    if mode == "smc":
        if smc_spec is None:
            raise ScenarioError("smc", "smc mode needs an smc section (basis size)")
        if dims != 2:
            raise ScenarioError("controller.mode", "smc baseline is 2-D only")

    contact_spec = None
    if "contact" in data:
        cd = data["contact"]
        contact_spec = ContactSpec(
            radius=float(_req(cd, "radius", "contact")),
            center_lower=tuple(float(v) for v in cd.get("center_lower", ())),
            center_upper=tuple(float(v) for v in cd.get("center_upper", ())),
        )
        if contact_spec.radius <= 0:
            raise ScenarioError("contact.radius", "must be positive")

    pattern_spec = None
    if "pattern" in data:
        pd = data["pattern"]
        pattern_spec = PatternSpec(
            tip_speed=float(pd.get("tip_speed", 0.2)),
            waypoint_tol=float(pd.get("waypoint_tol", 0.02)),
            max_steps_per_waypoint=int(pd.get("max_steps_per_waypoint", 400)),
            lower=tuple(float(v) for v in pd.get("lower", ())),
            upper=tuple(float(v) for v in pd.get("upper", ())),
        )
    if mode.startswith("pattern"):
        if contact_spec is None:
            raise ScenarioError("contact", "pattern modes need a contact section")
        if pattern_spec is None:
            pattern_spec = PatternSpec()
        if init_spec.method != "fixed":
            raise ScenarioError("init.method", "pattern modes need fixed init poses")

    return ScenarioSpec(name, domain_spec, target_spec, chain_spec, agents_spec,
                        control_spec, horizon, init_spec, smc_spec, contact_spec,
                        pattern_spec)


def load_scenario(path):
    with open(path) as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ScenarioError("file", "scenario file must be a mapping")
    return parse_scenario(data, name=str(path))


# --- builders ---------------------------------------------------------------

def build_domain(spec):
    return GridDomain(spec.domain.shape, spec.domain.spacing, spec.domain.origin)


def build_target(spec, domain):
    kind = spec.target.kind
    p = spec.target.params
    if kind == "uniform":
        return target_uniform(domain)
    if kind == "uniform-box":
        return target_uniform_box(domain, _req(p, "lower", "target"),
                                  _req(p, "upper", "target"))
    if kind == "gaussian-mixture":
        return target_gaussian_mixture(domain, _req(p, "means", "target"),
                                       _req(p, "covs", "target"),
                                       p.get("weights"))
    if kind == "image":
        return target_from_image(_req(p, "path", "target"), domain)
    raise ScenarioError("target.kind", f"unknown target kind {kind!r}")


def build_chain(spec):
    if spec.chain.path:
        ch = chain_mod.load_chain(spec.chain.path)
    else:
        ch = chain_mod.load_model(spec.chain.model)
    if spec.chain.base or any(spec.chain.base_rpy):
        base = spec.chain.base or (0.0,) * ch.dims
        ch = ch.with_base(base, spec.chain.base_rpy)
    return ch


def build_layout(spec, chain, seed):
    """Instantiate the agent layout for one run.

    Poisson-disk groups draw from a stream derived from (seed, link), so the
    layout is deterministic per (scenario, seed) and shared across modes.
    """
    agents = []
    for g in spec.agents.groups:
        if not 0 <= g.link < chain.n:
            raise ScenarioError("agents.groups.link",
                                f"link {g.link + 1} not in the {chain.n}-joint chain")
        if g.method == "equispaced":
            agents += sample_agents_equispaced(chain, g.link, g.spacing, g.active)
        else:
            agents += sample_agents_poisson(chain, g.link, g.min_dist,
                                            seed=[seed, 1, g.link], active=g.active)
    active_links = {a.link_index for a in agents if a.active}
    return AgentLayout(tuple(agents), frozenset(active_links))


def build_diffusion(spec):
    return DiffusionParams(alpha=spec.control.alpha,
                           n_steps=spec.control.n_steps,
                           stationary_tol=spec.control.stationary_tol,
                           max_stationary_iters=spec.control.max_stationary_iters)


def build_coverage(spec, domain):
    return CoverageAccumulator(domain, spec.agents.footprint_radius)


def initial_config(spec, chain, seed, sphere=None, contact_fn=None,
                   domain=None, layout=None):
    """Initial joint configuration for one run.

    ``uniform`` draws each joint uniformly within its limits (rejecting
    configurations that already touch the contact sphere when one is given);
    ``uniform-reach`` additionally requires at least one agent to start
    inside the exploration domain, mirroring pre-sampled starts placed at
    the region of interest; ``fixed`` picks the configured pose.
    """
    if spec.init.method == "fixed":
        idx = spec.init.index
        if not 0 <= idx < len(spec.init.configs):
            raise ScenarioError("init.index", f"no config at index {idx}")
        return np.asarray(spec.init.configs[idx], dtype=float)
    if spec.init.method == "uniform-reach" and (domain is None or layout is None):
        raise ScenarioError("init.method", "uniform-reach needs the domain and layout")
    rng = np.random.default_rng([seed, 0])
    lo, hi = chain.limits
    for _ in range(10000):
        q = rng.uniform(lo, hi)
        if sphere is not None and contact_fn is not None and contact_fn(q, sphere):
            continue
        if spec.init.method == "uniform-reach":
            from .chain import forward_kinematics

            frames = forward_kinematics(chain, q)
            pts = layout.all_world_positions(frames)[:, : domain.dims]
            if not domain.contains(pts).any():
                continue
        return q
    raise ScenarioError("init", "could not sample a feasible initial configuration")


def sample_sphere_center(spec, domain, seed, reject_fn=None):
    """Uniform sphere-center draw for contact runs.

    Defaults to the domain box shrunk by the sphere radius; placements that
    already touch the initial pose are rejected and redrawn.
    """
    c = spec.contact
    lo = np.asarray(c.center_lower if c.center_lower else domain.lower + c.radius)
    hi = np.asarray(c.center_upper if c.center_upper else domain.upper - c.radius)
    if np.array_equal(lo, hi):
        return lo.astype(float)   # explicit placement: honor it as requested
    rng = np.random.default_rng([seed, 2])
    for _ in range(1000):
        center = rng.uniform(lo, hi)
        if reject_fn is None or not reject_fn(center):
            return center
    raise ScenarioError("contact", "could not place the sphere clear of the start pose")
