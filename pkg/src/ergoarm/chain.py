"""Serial revolute-chain kinematics: frames, point Jacobians, manipulability.

A chain is an ordered list of revolute joints.  Joint j carries a fixed
parent-frame transform (rotation + translation) followed by a rotation of
q_j about its axis; link j's frame is the joint-j frame after that rotation.
Planar chains (dims=2) use the same 3-D machinery in the z=0 plane with all
axes along z.
"""

from dataclasses import dataclass

import numpy as np

try:
    from importlib import resources as _resources
except ImportError:  # pragma: no cover
    _resources = None


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix about a unit axis."""
    a = np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    k = np.array([[0.0, -a[2], a[1]],
                  [a[2], 0.0, -a[0]],
                  [-a[1], a[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def rpy_matrix(roll, pitch, yaw):
    """Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    return (rotation_about_axis((0, 0, 1), yaw)
            @ rotation_about_axis((0, 1, 0), pitch)
            @ rotation_about_axis((1, 0, 0), roll))


@dataclass(frozen=True)
class LinkGeometry:
    """Capsule (3-D) or line segment (planar, radius 0) in the link frame."""

    p0: tuple
    p1: tuple
    radius: float
    volume: float
    com_local: tuple

    def __post_init__(self):
        object.__setattr__(self, "p0", tuple(float(v) for v in self.p0))
        object.__setattr__(self, "p1", tuple(float(v) for v in self.p1))
        object.__setattr__(self, "com_local", tuple(float(v) for v in self.com_local))
        if self.volume <= 0:
            raise ValueError("link volume must be positive")
        if self.radius < 0:
            raise ValueError("capsule radius cannot be negative")

    @property
    def length(self):
        return float(np.linalg.norm(np.asarray(self.p1) - np.asarray(self.p0)))

    @property
    def axis_points(self):
        return np.asarray(self.p0), np.asarray(self.p1)


@dataclass(frozen=True)
class Joint:
    origin: tuple          # fixed translation in the parent link frame
    rotation: np.ndarray   # fixed rotation in the parent link frame
    axis: tuple            # rotation axis in the joint frame
    limit_lo: float
    limit_hi: float

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        ax = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", tuple(ax / np.linalg.norm(ax)))
        if not self.limit_lo < self.limit_hi:
            raise ValueError("joint limits must satisfy lo < hi")


@dataclass(frozen=True)
class KinematicChain:
    dims: int
    joints: tuple
    links: tuple
    base_rotation: np.ndarray = None
    base_translation: tuple = (0.0, 0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        if self.dims not in (2, 3):
            raise ValueError("chain must be planar (2) or spatial (3)")
        if len(self.joints) < 1 or len(self.joints) != len(self.links):
            raise ValueError("need one link per joint, at least one joint")
        if self.base_rotation is None:
            object.__setattr__(self, "base_rotation", np.eye(3))
        object.__setattr__(self, "base_translation",
                           tuple(float(v) for v in self.base_translation))

    @property
    def n(self):
        return len(self.joints)

    @property
    def limits(self):
        lo = np.array([j.limit_lo for j in self.joints])
        hi = np.array([j.limit_hi for j in self.joints])
        return lo, hi

    def with_base(self, translation, rpy=(0.0, 0.0, 0.0)):
        t = np.zeros(3)
        t[: len(translation)] = translation
        return KinematicChain(self.dims, self.joints, self.links,
                              rpy_matrix(*rpy), tuple(t), self.name)

    def twist_rows(self):
        """Rows of a link twist: 3 planar (vx, vy, wz), 6 spatial."""
        return 3 if self.dims == 2 else 6

    def point_rows(self):
        return self.dims


@dataclass
class LinkFrames:
    """World pose of every link frame plus the joint axes/origins used to
    build Jacobians without re-running the kinematics."""

    rotations: np.ndarray     # (n, 3, 3)
    translations: np.ndarray  # (n, 3)
    joint_axes: np.ndarray    # (n, 3) world-frame rotation axes
    joint_origins: np.ndarray  # (n, 3) world-frame joint positions

    @property
    def n(self):
        return self.translations.shape[0]


def forward_kinematics(chain, q):
    """Compose the chain's transforms at joint angles q."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n,):
        raise ValueError(f"expected {chain.n} joint angles, got {q.shape}")
    n = chain.n
    rotations = np.empty((n, 3, 3))
    translations = np.empty((n, 3))
    axes = np.empty((n, 3))
    origins = np.empty((n, 3))
    rot = chain.base_rotation
    pos = np.asarray(chain.base_translation)
    for j, joint in enumerate(chain.joints):
        pos = pos + rot @ np.asarray(joint.origin)
        rot_joint = rot @ joint.rotation
        axes[j] = rot_joint @ np.asarray(joint.axis)
        origins[j] = pos
        rot = rot_joint @ rotation_about_axis(joint.axis, q[j])
        rotations[j] = rot
        translations[j] = pos
    return LinkFrames(rotations, translations, axes, origins)


def point_on_link(frames, j, p_local):
    """World position of a link-frame point."""
    if not 0 <= j < frames.n:
        raise IndexError(f"link index {j} out of range")
    p = np.zeros(3)
    p[: len(p_local)] = p_local
    return frames.rotations[j] @ p + frames.translations[j]


def points_on_link(frames, j, pts_local):
    pts = np.atleast_2d(np.asarray(pts_local, dtype=float))
    full = np.zeros((pts.shape[0], 3))
    full[:, : pts.shape[1]] = pts
    return full @ frames.rotations[j].T + frames.translations[j]


def link_jacobian_at_point(chain, frames, j, p_world, point_only=False):
    """Geometric Jacobian of a world point rigidly attached to link j.

    Rows: planar chains (vx, vy, wz) or (vx, vy) with ``point_only``;
    spatial chains (v; w) or just v.  Columns for joints beyond j are zero.
    """
    if not 0 <= j < chain.n:
        raise IndexError(f"link index {j} out of range")
    full = np.zeros((6, chain.n))
    for k in range(j + 1):
        a = frames.joint_axes[k]
        full[:3, k] = np.cross(a, p_world - frames.joint_origins[k])
        full[3:, k] = a
    if chain.dims == 2:
        rows = [0, 1] if point_only else [0, 1, 5]
    else:
        rows = [0, 1, 2] if point_only else [0, 1, 2, 3, 4, 5]
    return full[rows, :]


def link_jacobian(chain, q, j, p_local, point_only=False):
    frames = forward_kinematics(chain, q)
    p_world = point_on_link(frames, j, p_local)
    return link_jacobian_at_point(chain, frames, j, p_world, point_only=point_only)


RANK_EPS = 1e-9   # smallest singular value that still counts as full rank


def manipulability(J):
    """sqrt(det(J J^T)) via the eigenvalues of the Gram matrix.

    Rank-deficient Jacobians (smallest singular value below RANK_EPS, e.g. a
    link with fewer upstream joints than twist rows) get exactly zero, as
    does any round-off-negative determinant.
    """
    evals = np.linalg.eigvalsh(J @ J.T)
    # relative floor catches exact rank deficiency hidden by eigensolver noise
    floor = max(RANK_EPS**2, 1e-13 * abs(evals[-1]))
    if evals[0] < floor:
        return 0.0
    return float(np.sqrt(np.prod(evals)))


# --- model files ------------------------------------------------------------

def _pad3(values):
    out = [0.0, 0.0, 0.0]
    for i, v in enumerate(values):
        out[i] = float(v)
    return tuple(out)


def parse_chain(text, name=""):
    """Parse the plain-text chain model format.

    The file starts with ``dims <2|3>`` and then one block per joint opened
    by the bare keyword ``joint``.  Recognized block entries:

        origin  x y [z]        fixed translation in the parent frame
        rpy     r p y          fixed rotation (spatial chains)
        angle   a              fixed in-plane rotation (planar chains)
        axis    x y z          rotation axis (default 0 0 1)
        limits  lo hi          joint limits in radians
        capsule x0 y0 z0 x1 y1 z1 r   link shape (spatial)
        segment x0 y0 x1 y1           link shape (planar)
        volume  v              link volume (default: computed from shape)
        com     x y [z]        center of mass (default: shape centroid)
    """
    dims = None
    blocks = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key, args = parts[0], parts[1:]
        if key == "dims":
            dims = int(args[0])
        elif key == "joint":
            blocks.append({})
        elif blocks:
            blocks[-1][key] = [float(v) for v in args]
        else:
            raise ValueError(f"unexpected line before first joint: {raw!r}")
    if dims not in (2, 3):
        raise ValueError("model file must declare dims 2 or dims 3")
    if not blocks:
        raise ValueError("model file declares no joints")

    joints = []
    links = []
    for i, b in enumerate(blocks):
        origin = _pad3(b.get("origin", (0.0, 0.0, 0.0)))
        if "rpy" in b:
            rot = rpy_matrix(*b["rpy"])
        elif "angle" in b:
            rot = rotation_about_axis((0, 0, 1), b["angle"][0])
        else:
            rot = np.eye(3)
        axis = tuple(b.get("axis", (0.0, 0.0, 1.0)))
        lo, hi = b.get("limits", (-np.pi, np.pi))
        joints.append(Joint(origin, rot, axis, lo, hi))

        if "capsule" in b:
            c = b["capsule"]
            p0, p1, radius = _pad3(c[0:3]), _pad3(c[3:6]), float(c[6])
        elif "segment" in b:
            s = b["segment"]
            p0, p1, radius = _pad3(s[0:2]), _pad3(s[2:4]), 0.0
        else:
            raise ValueError(f"joint {i}: link needs a capsule or segment entry")
        length = float(np.linalg.norm(np.asarray(p1) - np.asarray(p0)))
        if "volume" in b:
            volume = b["volume"][0]
        elif radius > 0:
            volume = np.pi * radius**2 * length + 4.0 / 3.0 * np.pi * radius**3
        else:
            raise ValueError(f"joint {i}: planar links must state a volume")
        com = _pad3(b["com"]) if "com" in b else tuple(
            0.5 * (np.asarray(p0) + np.asarray(p1)))
        links.append(LinkGeometry(p0, p1, radius, volume, com))
    return KinematicChain(dims, tuple(joints), tuple(links), name=name)


def load_chain(path):
    with open(path) as f:
        return parse_chain(f.read(), name=str(path))


def load_model(name):
    """Load one of the chain models shipped with the package."""
    data = _resources.files("ergoarm").joinpath(f"models/{name}.txt").read_text()
    return parse_chain(data, name=name)
