"""Virtual agents attached to manipulator links.

Agents abstract sensor patches on the link bodies.  All agents deposit
coverage; only active agents feel the potential field and contribute to the
control command.  Per-link agent weights follow the sampled potential value
(the exploration frontier gets the weight), link weights combine volume and
manipulability.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .chain import link_jacobian_at_point, manipulability, points_on_link
from .grid import interpolate, sample_gradient_many

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class VirtualAgent:
    link_index: int
    local_pos: tuple
    active: bool = True

    def __post_init__(self):
        object.__setattr__(self, "local_pos", tuple(float(v) for v in self.local_pos))


@dataclass(frozen=True)
class AgentLayout:
    agents: tuple
    active_links: frozenset

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "active_links", frozenset(self.active_links))
        for j in sorted(self.active_links):
            if not any(a.link_index == j and a.active for a in self.agents):
                raise ValueError(f"active link {j} has no active agent")

    def link_indices(self):
        return sorted({a.link_index for a in self.agents})

    def agents_on(self, j, active_only=False):
        return [a for a in self.agents
                if a.link_index == j and (a.active or not active_only)]

    def local_positions(self, agents):
        return np.array([a.local_pos for a in agents]).reshape(-1, 3)

    def all_world_positions(self, frames):
        """World positions of every agent (active and passive), stacked."""
        chunks = []
        for j in self.link_indices():
            group = self.agents_on(j)
            chunks.append(points_on_link(frames, j, self.local_positions(group)))
        return np.vstack(chunks)


def sample_agents_equispaced(chain, j, spacing, active=True):
    """Agents along the link's segment axis, endpoints included.

    The requested spacing is stretched minimally so the endpoints land on
    agents; a spacing beyond the link length degenerates to one agent at the
    link midpoint.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    p0, p1 = chain.links[j].axis_points
    length = chain.links[j].length
    count = int(np.floor(length / spacing + 1e-9)) + 1
    if count < 2:
        mid = 0.5 * (p0 + p1)
        return [VirtualAgent(j, tuple(mid), active)]
    ts = np.linspace(0.0, 1.0, count)
    return [VirtualAgent(j, tuple(p0 + t * (p1 - p0)), active) for t in ts]


def _capsule_surface_point(link, rng):
    p0, p1 = link.axis_points
    length = link.length
    r = link.radius
    side_area = 2.0 * np.pi * r * length
    cap_area = 4.0 * np.pi * r**2
    if length > 0:
        axis = (p1 - p0) / length
    else:
        axis = np.array([0.0, 0.0, 1.0])
    # orthonormal frame around the axis
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    n1 = np.cross(axis, ref)
    n1 /= np.linalg.norm(n1)
    n2 = np.cross(axis, n1)
    pick = rng.uniform(0.0, side_area + cap_area)
    if pick < side_area:
        z = rng.uniform(0.0, length)
        th = rng.uniform(0.0, 2.0 * np.pi)
        return p0 + z * axis + r * (np.cos(th) * n1 + np.sin(th) * n2)
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    if rng.uniform() < 0.5:
        d[:] = d - 2.0 * min(d @ axis, 0.0) * axis  # hemisphere at p1
        return p1 + r * d
    d[:] = d - 2.0 * max(d @ axis, 0.0) * axis
    return p0 + r * d


def sample_agents_poisson(chain, j, radius, seed, active=True, attempts=30):
    """Dart-throwing Poisson-disk sample on the link surface.

    Candidates are drawn uniformly on the capsule surface (or along the
    segment for planar links) and accepted while they keep every pairwise
    Euclidean distance >= radius.  Sampling stops after ``attempts``
    consecutive rejections, so maximality is attempted, not guaranteed.
    Deterministic for a fixed seed.
    """
    if radius <= 0:
        raise ValueError("minimum distance must be positive")
    link = chain.links[j]
    rng = np.random.default_rng(seed)
    accepted = []
    rejections = 0
    while rejections < attempts:
        if link.radius > 0:
            cand = _capsule_surface_point(link, rng)
        else:
            p0, p1 = link.axis_points
            cand = p0 + rng.uniform() * (p1 - p0)
        if all(np.linalg.norm(cand - p) >= radius for p in accepted):
            accepted.append(cand)
            rejections = 0
        else:
            rejections += 1
    return [VirtualAgent(j, tuple(p), active) for p in accepted]


def layout_to_csv(layout, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["link_index", "x", "y", "z", "active"])
        for a in layout.agents:
            w.writerow([a.link_index, repr(a.local_pos[0]), repr(a.local_pos[1]),
                        repr(a.local_pos[2]), int(a.active)])


def layout_from_csv(path):
    agents = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            agents.append(VirtualAgent(int(row["link_index"]),
                                       (float(row["x"]), float(row["y"]), float(row["z"])),
                                       bool(int(row["active"]))))
    active_links = {a.link_index for a in agents if a.active}
    return AgentLayout(tuple(agents), frozenset(active_links))


def local_weights(u, positions):
    """Per-agent weights from the sampled potential, normalized to sum 1.

    Falls back to uniform weights when the link sits in a fully cooled
    region (the forces are ~0 there anyway, but stay well defined).
    """
    positions = np.atleast_2d(positions)
    if positions.shape[0] < 1:
        raise ValueError("need at least one agent position")
    raw = interpolate(u, positions)
    total = raw.sum()
    if total < WEIGHT_FLOOR:
        return np.full(positions.shape[0], 1.0 / positions.shape[0])
    return raw / total


def agent_forces(u, positions, weights, gradient=None):
    """Fictitious per-agent forces: weight times the sampled field gradient."""
    positions = np.atleast_2d(positions)
    weights = np.asarray(weights, dtype=float)
    if weights.shape[0] != positions.shape[0]:
        raise ValueError("one weight per position required")
    grads = sample_gradient_many(u, positions, gradient)
    return weights[:, None] * grads


@dataclass
class LinkWrench:
    """Net force and moment of a link's agents about its center of mass.

    ``m_net`` is the scalar z-moment for planar chains and a 3-vector for
    spatial ones.
    """

    link_index: int
    f_net: np.ndarray
    m_net: np.ndarray


def link_wrench(forces, positions, com, link_index=0):
    forces = np.atleast_2d(forces)
    positions = np.atleast_2d(positions)
    if forces.shape != positions.shape:
        raise ValueError("forces and positions must align")
    com = np.asarray(com, dtype=float)
    f_net = forces.sum(axis=0)
    r = positions - com
    if forces.shape[1] == 2:
        m_net = np.sum(r[:, 0] * forces[:, 1] - r[:, 1] * forces[:, 0])
    else:
        m_net = np.cross(r, forces).sum(axis=0)
    return LinkWrench(link_index, f_net, np.asarray(m_net))


def link_weight(chain, q, j, frames=None):
    """Unnormalized link weight: volume times manipulability at the COM."""
    from .chain import forward_kinematics, point_on_link

    if frames is None:
        frames = forward_kinematics(chain, q)
    com_world = point_on_link(frames, j, chain.links[j].com_local)
    J = link_jacobian_at_point(chain, frames, j, com_world)
    return chain.links[j].volume * manipulability(J)


def normalize_link_weights(weights):
    """Scale link weights to unit sum; uniform fallback when all vanish."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if total < WEIGHT_FLOOR:
        return np.full(w.shape, 1.0 / w.size)
    return w / total
