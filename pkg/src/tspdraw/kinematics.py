"""Serial-arm kinematics: FK, damped-least-squares IK, reachability, canvas
fitting and tiling, and path-wise IK for pen strokes.

Chains are modeled as an ordered list of revolute joints, each a fixed
translation followed by a rotation about a fixed local axis, plus a final
tool tip translation. Poses combine a position in millimeters with a unit
quaternion (w, x, y, z).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import ceil

import numpy as np

IK_DAMPING = 0.01
IK_MAX_ITER = 200
IK_POS_TOL = 0.1  # mm
IK_ORI_TOL = 0.01  # rad
_FD_STEP = 1e-6
_MAX_DQ = 0.5  # per-iteration step clamp, rad


# ---------------------------------------------------------------------------
# rotation helpers

def _rot_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix about a unit axis."""
    x, y, z = axis
    c, s = np.cos(angle), np.sin(angle)
    t = 1.0 - c
    return np.array(
        [
            [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
            [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
            [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
        ]
    )


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    n = float(np.linalg.norm(q))
    if n < 1e-12:
        raise ValueError("zero-norm quaternion")
    q = q / n
    return q if q[0] >= 0.0 else -q


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(R: np.ndarray) -> np.ndarray:
    """Shepperd's method, numerically stable for all rotation matrices."""
    R = np.asarray(R, dtype=np.float64)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    return quat_normalize(q)


def rotvec_from_matrix(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix."""
    cos_t = (R[0, 0] + R[1, 1] + R[2, 2] - 1.0) / 2.0
    cos_t = min(1.0, max(-1.0, cos_t))
    theta = np.arccos(cos_t)
    if theta < 1e-9:
        return np.zeros(3)
    if np.pi - theta < 1e-6:
        # near pi the antisymmetric part degenerates; use the symmetric part
        B = (R + np.eye(3)) / 2.0
        axis = np.sqrt(np.maximum(np.diag(B), 0.0))
        # resolve signs from the largest component
        k = int(np.argmax(axis))
        axis = B[:, k] / axis[k]
        axis = axis / np.linalg.norm(axis)
        return axis * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v * (theta / (2.0 * np.sin(theta)))


# ---------------------------------------------------------------------------
# types

@dataclass
class ToolPose:
    """Tool position (mm) and orientation as a unit quaternion (w, x, y, z)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.orientation = quat_normalize(self.orientation)


@dataclass
class Joint:
    translation: np.ndarray  # fixed link offset before the joint, mm
    axis: np.ndarray  # rotation axis in the local frame, unit
    limits: tuple[float, float]  # rad, inclusive

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        self.axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        n = float(np.linalg.norm(self.axis))
        if n < 1e-9:
            raise ValueError("joint axis must be nonzero")
        self.axis = self.axis / n
        if self.limits[0] > self.limits[1]:
            raise ValueError("joint limits reversed")


@dataclass
class KinematicChain:
    name: str
    joints: list[Joint]
    tip: np.ndarray  # tool offset after the last joint, mm
    base_pose: np.ndarray = field(default_factory=lambda: np.eye(4))
    home: np.ndarray | None = None

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ValueError("chain needs at least one joint")
        self.tip = np.asarray(self.tip, dtype=np.float64).reshape(3)
        self.base_pose = np.asarray(self.base_pose, dtype=np.float64).reshape(4, 4)
        if self.home is None:
            self.home = np.array([0.5 * (j.limits[0] + j.limits[1]) for j in self.joints])
        else:
            self.home = np.asarray(self.home, dtype=np.float64).reshape(len(self.joints))

    @property
    def dof(self) -> int:
        return len(self.joints)

    def limits_lo(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    def limits_hi(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    def max_reach(self) -> float:
        """Upper bound on tool distance from the base origin."""
        return float(
            sum(np.linalg.norm(j.translation) for j in self.joints)
            + np.linalg.norm(self.tip)
        )

    def with_base_offset(self, offset: np.ndarray) -> "KinematicChain":
        base = self.base_pose.copy()
        base[:3, 3] = base[:3, 3] + np.asarray(offset, dtype=np.float64).reshape(3)
        return KinematicChain(self.name, self.joints, self.tip, base, self.home)


@dataclass
class GridSpec:
    """Regular 3D lattice: origin corner, spacing, and point counts per axis."""

    origin: np.ndarray
    spacing: float
    counts: tuple[int, int, int]

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        if self.spacing <= 0.0:
            raise ValueError("spacing must be positive")
        if min(self.counts) < 1:
            raise ValueError("counts must be positive")

    def points(self) -> np.ndarray:
        nx, ny, nz = self.counts
        ix, iy, iz = np.meshgrid(
            np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij"
        )
        idx = np.column_stack([ix.ravel(), iy.ravel(), iz.ravel()])
        return self.origin + idx * self.spacing


@dataclass
class SubCanvas:
    """One tile of a larger drawing: rect in drawing coords plus the planar
    base offset that centers the arm on it."""

    x0: float
    y0: float
    width: float
    height: float
    base_offset: np.ndarray  # (2,) in canvas plane coords

    def __post_init__(self):
        self.base_offset = np.asarray(self.base_offset, dtype=np.float64).reshape(2)


@dataclass
class CanvasSpec:
    """Reachable drawing rectangle on a plane."""

    plane_point: np.ndarray
    plane_normal: np.ndarray
    center: np.ndarray  # world center of the rect
    axis_u: np.ndarray  # in-plane x direction
    axis_v: np.ndarray  # in-plane y direction
    width: float
    height: float
    sub_canvases: list[SubCanvas] | None = None

    def __post_init__(self):
        for name in ("plane_point", "plane_normal", "center", "axis_u", "axis_v"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(3))
        n = float(np.linalg.norm(self.plane_normal))
        if n < 1e-9:
            raise ValueError("zero plane normal")
        self.plane_normal = self.plane_normal / n
        if self.width <= 0.0 or self.height <= 0.0:
            raise ValueError("canvas rect must have positive size")


@dataclass
class JointTrajectory:
    """Joint-space waypoints with pen state and tool index per waypoint."""

    waypoints: np.ndarray  # (W, dof)
    pen_down: np.ndarray  # (W,) bool
    tool_index: np.ndarray  # (W,) int

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=np.float64))
        self.pen_down = np.asarray(self.pen_down, dtype=bool).reshape(-1)
        self.tool_index = np.asarray(self.tool_index, dtype=np.int64).reshape(-1)
        w = len(self.waypoints)
        if len(self.pen_down) != w or len(self.tool_index) != w:
            raise ValueError("per-waypoint arrays disagree in length")


# ---------------------------------------------------------------------------
# chain presets and config files

def planar_2r(l1: float = 1.0, l2: float = 1.0) -> KinematicChain:
    """Two revolute z-joints in the z=0 plane; link lengths l1, l2."""
    lim = (-np.pi, np.pi)
    return KinematicChain(
        name="planar-2r",
        joints=[
            Joint(translation=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0), limits=lim),
            Joint(translation=(l1, 0.0, 0.0), axis=(0.0, 0.0, 1.0), limits=lim),
        ],
        tip=(l2, 0.0, 0.0),
        home=np.array([0.0, 0.5]),
    )


def generic_6r() -> KinematicChain:
    """Six-revolute arm with link lengths in the range of a common cobot."""
    lim = (-np.pi, np.pi)
    return KinematicChain(
        name="generic-6r",
        joints=[
            Joint(translation=(0.0, 0.0, 163.0), axis=(0.0, 0.0, 1.0), limits=lim),
            Joint(translation=(0.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0), limits=lim),
            Joint(translation=(425.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0), limits=lim),
            Joint(translation=(392.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0), limits=lim),
            Joint(translation=(0.0, 0.0, 0.0), axis=(0.0, 0.0, 1.0), limits=lim),
            Joint(translation=(100.0, 0.0, 0.0), axis=(0.0, 1.0, 0.0), limits=lim),
        ],
        tip=(85.0, 0.0, 0.0),
        home=np.array([0.0, 0.5, 1.0, 0.5, 0.0, 0.0]),
    )


_PRESETS = {"planar-2r": planar_2r, "generic-6r": generic_6r}


def chain_preset(name: str) -> KinematicChain:
    if name not in _PRESETS:
        raise ValueError(f"unknown chain preset {name!r}")
    return _PRESETS[name]()


def chain_to_dict(chain: KinematicChain) -> dict:
    return {
        "name": chain.name,
        "joints": [
            {
                "translation": j.translation.tolist(),
                "axis": j.axis.tolist(),
                "limits": list(j.limits),
            }
            for j in chain.joints
        ],
        "tip": chain.tip.tolist(),
        "base_pose": chain.base_pose.tolist(),
        "home": chain.home.tolist(),
    }


def chain_from_dict(d: dict) -> KinematicChain:
    for key in ("name", "joints", "tip"):
        if key not in d:
            raise ValueError(f"chain config: missing field {key!r}")
    joints = []
    for i, jd in enumerate(d["joints"]):
        for key in ("translation", "axis", "limits"):
            if key not in jd:
                raise ValueError(f"chain config: joint {i} missing field {key!r}")
        joints.append(
            Joint(
                translation=jd["translation"],
                axis=jd["axis"],
                limits=(float(jd["limits"][0]), float(jd["limits"][1])),
            )
        )
    return KinematicChain(
        name=str(d["name"]),
        joints=joints,
        tip=d["tip"],
        base_pose=np.asarray(d.get("base_pose", np.eye(4).tolist())),
        home=np.asarray(d["home"]) if "home" in d else None,
    )


def load_chain(path) -> KinematicChain:
    with open(path) as fh:
        return chain_from_dict(json.load(fh))


def save_chain(chain: KinematicChain, path) -> None:
    with open(path, "w") as fh:
        json.dump(chain_to_dict(chain), fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# forward and inverse kinematics

def _fk_matrix(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    T = chain.base_pose.copy()
    for joint, angle in zip(chain.joints, q):
        R = _rot_axis(joint.axis, float(angle))
        # T = T @ Trans(t) @ Rot(axis, q), composed in place
        T[:3, 3] = T[:3, :3] @ joint.translation + T[:3, 3]
        T[:3, :3] = T[:3, :3] @ R
    T[:3, 3] = T[:3, :3] @ chain.tip + T[:3, 3]
    return T


def fk(chain: KinematicChain, q: np.ndarray) -> ToolPose:
    """Tool pose for a joint vector; rejects out-of-limit angles."""
    q = np.asarray(q, dtype=np.float64).reshape(chain.dof)
    lo, hi = chain.limits_lo(), chain.limits_hi()
    if np.any(q < lo - 1e-12) or np.any(q > hi + 1e-12):
        raise ValueError("joint vector outside limits")
    T = _fk_matrix(chain, q)
    return ToolPose(position=T[:3, 3], orientation=quat_from_matrix(T[:3, :3]))


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """Numerical 6 x dof Jacobian: position rows (mm) then rotation rows."""
    q = np.asarray(q, dtype=np.float64).reshape(chain.dof)
    T0 = _fk_matrix(chain, q)
    J = np.empty((6, chain.dof))
    for j in range(chain.dof):
        qp = q.copy()
        qp[j] += _FD_STEP
        Tp = _fk_matrix(chain, qp)
        J[:3, j] = (Tp[:3, 3] - T0[:3, 3]) / _FD_STEP
        J[3:, j] = rotvec_from_matrix(Tp[:3, :3] @ T0[:3, :3].T) / _FD_STEP
    return J


def _pose_error(T: np.ndarray, target: ToolPose, with_orientation: bool) -> np.ndarray:
    e_pos = target.position - T[:3, 3]
    if not with_orientation:
        return e_pos
    R_t = matrix_from_quat(target.orientation)
    e_rot = rotvec_from_matrix(R_t @ T[:3, :3].T)
    return np.concatenate([e_pos, e_rot])


def ik(
    chain: KinematicChain,
    target: ToolPose,
    q_seed: np.ndarray,
    tol: float = IK_POS_TOL,
    ori_tol: float | None = IK_ORI_TOL,
    max_iter: int = IK_MAX_ITER,
    damping: float = IK_DAMPING,
) -> np.ndarray | None:
    """Damped-least-squares IK. Returns a joint vector, or None if the
    target could not be reached.

    Success requires position error below tol (mm) and, when ori_tol is not
    None, orientation error below ori_tol (rad). Joint limits are clamped
    every step. Iteration stops early when the error stalls, which is how
    unreachable targets fail fast.
    """
    lo, hi = chain.limits_lo(), chain.limits_hi()
    q = np.clip(np.asarray(q_seed, dtype=np.float64).reshape(chain.dof), lo, hi)
    with_ori = ori_tol is not None
    rows = 6 if with_ori else 3
    stall = 0
    prev_err = np.inf
    for _ in range(max_iter + 1):
        T = _fk_matrix(chain, q)
        e = _pose_error(T, target, with_ori)
        pos_err = float(np.linalg.norm(e[:3]))
        ori_err = float(np.linalg.norm(e[3:])) if with_ori else 0.0
        if pos_err < tol and (not with_ori or ori_err < ori_tol):
            return q
        err = float(np.linalg.norm(e))
        if err > prev_err - 1e-9 * max(prev_err, 1.0):
            stall += 1
            if stall >= 5:
                return None
        else:
            stall = 0
        prev_err = err
        J = jacobian(chain, q)[:rows]
        JJ = J @ J.T + (damping**2) * np.eye(rows)
        dq = J.T @ np.linalg.solve(JJ, e)
        step = float(np.linalg.norm(dq))
        if step > _MAX_DQ:
            dq *= _MAX_DQ / step
        q = np.clip(q + dq, lo, hi)
    return None


# ---------------------------------------------------------------------------
# reachability

def reachability_map(
    chain: KinematicChain,
    grid: GridSpec,
    orientation: np.ndarray | None = None,
    tol: float = IK_POS_TOL,
) -> np.ndarray:
    """Lattice points the tool can reach, in raster order.

    Each lattice point is attempted with IK seeded from already-solved
    neighbors, then from the chain's home pose. With orientation None only
    position is solved; otherwise the fixed quaternion must be met too.
    """
    nx, ny, nz = grid.counts
    reach = float(chain.max_reach())
    base_org = chain.base_pose[:3, 3]
    quat = None if orientation is None else quat_normalize(orientation)
    solutions: dict[tuple[int, int, int], np.ndarray] = {}
    out = []
    for ix in range(nx):
        for iy in range(ny):
            for iz in range(nz):
                p = grid.origin + grid.spacing * np.array([ix, iy, iz], dtype=float)
                if np.linalg.norm(p - base_org) > reach + tol:
                    continue
                target = ToolPose(
                    position=p,
                    orientation=quat if quat is not None else np.array([1.0, 0, 0, 0]),
                )
                seeds = []
                for d in ((ix - 1, iy, iz), (ix, iy - 1, iz), (ix, iy, iz - 1)):
                    if d in solutions:
                        seeds.append(solutions[d])
                seeds.append(chain.home)
                ori_tol = None if quat is None else IK_ORI_TOL
                for seed in seeds:
                    q = ik(chain, target, seed, tol=tol, ori_tol=ori_tol)
                    if q is not None:
                        solutions[(ix, iy, iz)] = q
                        out.append(p)
                        break
    return np.asarray(out, dtype=np.float64).reshape(-1, 3)


def export_reachability_csv(points: np.ndarray, path) -> None:
    """Write reachable lattice points as one x,y,z line each."""
    with open(path, "w") as fh:
        for x, y, z in np.asarray(points).reshape(-1, 3):
            fh.write(f"{float(x)!r},{float(y)!r},{float(z)!r}\n")


# ---------------------------------------------------------------------------
# canvas fitting, tiling, projection

def plane_basis(normal: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic right-handed in-plane basis (u, v) for a plane normal."""
    n = np.asarray(normal, dtype=np.float64)
    n = n / np.linalg.norm(n)
    ref = np.array([0.0, 0.0, 1.0])
    u = np.cross(n, ref)
    if np.linalg.norm(u) < 1e-8:
        u = np.array([1.0, 0.0, 0.0])
    else:
        u = u / np.linalg.norm(u)
    v = np.cross(n, u)
    return u, v


def fit_canvas(
    reachable: np.ndarray,
    plane: tuple[np.ndarray, np.ndarray],
    aspect: float,
    step: float | None = None,
) -> CanvasSpec:
    """Largest axis-aligned rect of the given aspect that stays reachable.

    The reachable set is intersected with a one-step slab around the plane
    and projected in-plane; a rect is feasible when every lattice point it
    covers is present. The scale is bisected and the center hill-climbed.
    Raises ValueError("canvas infeasible") when the plane carries no
    reachable points.
    """
    if aspect <= 0.0:
        raise ValueError("aspect must be positive")
    pts = np.asarray(reachable, dtype=np.float64).reshape(-1, 3)
    point = np.asarray(plane[0], dtype=np.float64).reshape(3)
    normal = np.asarray(plane[1], dtype=np.float64).reshape(3)
    normal = normal / np.linalg.norm(normal)
    if len(pts) == 0:
        raise ValueError("canvas infeasible")
    if step is None:
        # infer lattice pitch from the smallest positive coordinate gap
        diffs = []
        for k in range(3):
            vals = np.unique(pts[:, k])
            if len(vals) > 1:
                diffs.append(float(np.min(np.diff(vals))))
        if not diffs:
            raise ValueError("cannot infer lattice step")
        step = min(diffs)

    rel = pts - point
    dist = rel @ normal
    slab = np.abs(dist) <= 0.5 * step + 1e-9
    if not np.any(slab):
        raise ValueError("canvas infeasible")
    u, v = plane_basis(normal)
    uv = np.column_stack([rel[slab] @ u, rel[slab] @ v])
    occupied = {(int(round(a / step)), int(round(b / step))) for a, b in uv}

    def feasible(cx: float, cy: float, w: float) -> bool:
        h = w / aspect
        i0 = ceil((cx - w / 2.0) / step - 1e-9)
        i1 = int(np.floor((cx + w / 2.0) / step + 1e-9))
        j0 = ceil((cy - h / 2.0) / step - 1e-9)
        j1 = int(np.floor((cy + h / 2.0) / step + 1e-9))
        if i1 < i0 or j1 < j0:
            return True  # rect thinner than the lattice: nothing to violate
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                if (i, j) not in occupied:
                    return False
        return True

    def best_width(cx: float, cy: float, hi0: float) -> float:
        lo, hi = 0.0, hi0
        while feasible(cx, cy, hi):
            lo = hi
            hi *= 2.0
            if hi > 1e9:
                break
        while hi - lo > 0.25 * step:
            mid = 0.5 * (lo + hi)
            if feasible(cx, cy, mid):
                lo = mid
            else:
                hi = mid
        return lo

    extent = uv.max(axis=0) - uv.min(axis=0)
    cx, cy = uv.mean(axis=0)
    w = best_width(cx, cy, max(float(extent.max()), step))
    for _ in range(16):
        improved = False
        for dx, dy in ((step / 2, 0), (-step / 2, 0), (0, step / 2), (0, -step / 2)):
            w2 = best_width(cx + dx, cy + dy, max(w, step))
            if w2 > w + 1e-9:
                cx, cy, w = cx + dx, cy + dy, w2
                improved = True
        if not improved:
            break
    if w <= 0.0:
        raise ValueError("canvas infeasible")
    center = point + cx * u + cy * v
    return CanvasSpec(
        plane_point=point,
        plane_normal=normal,
        center=center,
        axis_u=u,
        axis_v=v,
        width=w,
        height=w / aspect,
    )


def tile_canvas(drawing_extent: tuple[float, float], canvas: CanvasSpec) -> CanvasSpec:
    """Partition a drawing larger than the canvas into full-size tiles.

    Tiles are laid out row-major over the drawing rect; each carries the
    planar base offset that centers the arm on it. A drawing no larger than
    the canvas yields a single tile with zero offset.
    """
    w_d, h_d = float(drawing_extent[0]), float(drawing_extent[1])
    if w_d <= 0.0 or h_d <= 0.0:
        raise ValueError("drawing extent must be positive")
    # tiles never exceed the drawing itself, so a small drawing gets a
    # single tile with zero base offset
    cw, ch = min(canvas.width, w_d), min(canvas.height, h_d)
    nx = max(1, ceil(w_d / cw - 1e-9))
    ny = max(1, ceil(h_d / ch - 1e-9))
    tiles = []
    for j in range(ny):
        for i in range(nx):
            x0, y0 = i * cw, j * ch
            tile_center = np.array([x0 + cw / 2.0, y0 + ch / 2.0])
            offset = tile_center - np.array([w_d / 2.0, h_d / 2.0])
            tiles.append(SubCanvas(x0=x0, y0=y0, width=cw, height=ch, base_offset=offset))
    return CanvasSpec(
        plane_point=canvas.plane_point,
        plane_normal=canvas.plane_normal,
        center=canvas.center,
        axis_u=canvas.axis_u,
        axis_v=canvas.axis_v,
        width=canvas.width,
        height=canvas.height,
        sub_canvases=tiles,
    )


def canvas_orientation(canvas: CanvasSpec) -> np.ndarray:
    """Tool quaternion with the pen axis opposite the surface normal."""
    z_t = -canvas.plane_normal
    x_t = canvas.axis_u
    y_t = np.cross(z_t, x_t)
    R = np.column_stack([x_t, y_t, z_t])
    return quat_from_matrix(R)


def drawing_to_world(points_2d: np.ndarray, canvas: CanvasSpec, drawing_extent) -> np.ndarray:
    """Map drawing-plane 2D coords to world points; the drawing rect is
    centered on the canvas center."""
    pts = np.asarray(points_2d, dtype=np.float64).reshape(-1, 2)
    w_d, h_d = float(drawing_extent[0]), float(drawing_extent[1])
    origin = canvas.center - canvas.axis_u * (w_d / 2.0) - canvas.axis_v * (h_d / 2.0)
    return origin + pts[:, :1] * canvas.axis_u + pts[:, 1:2] * canvas.axis_v


def project_points_2d(
    points: np.ndarray,
    source_size: tuple[float, float],
    target_size: tuple[float, float],
) -> np.ndarray:
    """Uniformly scale image coords (y down) into a drawing rect (y up).

    Aspect is preserved; the fitted image is centered inside the rect.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    sw, sh = float(source_size[0]), float(source_size[1])
    tw, th = float(target_size[0]), float(target_size[1])
    if sw <= 0 or sh <= 0 or tw <= 0 or th <= 0:
        raise ValueError("sizes must be positive")
    scale = min(tw / sw, th / sh)
    out = np.empty_like(pts)
    out[:, 0] = (pts[:, 0] - sw / 2.0) * scale + tw / 2.0
    out[:, 1] = (sh / 2.0 - pts[:, 1]) * scale + th / 2.0
    return out


def project_to_canvas(
    points: np.ndarray,
    canvas: CanvasSpec,
    source_size: tuple[float, float] | None = None,
) -> list[ToolPose]:
    """Image-space polyline to world poses on the canvas rect, pen opposite
    the surface normal."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if source_size is None:
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        pts = pts - lo
        source_size = (float(span[0]), float(span[1]))
    flat = project_points_2d(pts, source_size, (canvas.width, canvas.height))
    world = drawing_to_world(flat, canvas, (canvas.width, canvas.height))
    quat = canvas_orientation(canvas)
    return [ToolPose(position=p, orientation=quat) for p in world]


# ---------------------------------------------------------------------------
# path-wise IK

def pathwise_ik(
    chain: KinematicChain,
    strokes: list[list[ToolPose]],
    q_start: np.ndarray,
    tol: float = IK_POS_TOL,
    ori_tol: float | None = IK_ORI_TOL,
    hover: float = 5.0,
    jump_threshold: float = 0.1,
    tool_indices: list[int] | None = None,
) -> JointTrajectory:
    """Solve IK along strokes, seeding each pose with the previous solution.

    A pen-up hover pose (lifted along the tool axis by ``hover`` mm) is
    inserted before and after every stroke. Any consecutive pen-down pair
    whose joint move exceeds jump_threshold (rad) on some joint raises a
    discontinuity error; unreachable poses raise with their stroke and pose
    index.
    """
    if tool_indices is None:
        tool_indices = [0] * len(strokes)
    if len(tool_indices) != len(strokes):
        raise ValueError("tool_indices must match strokes")
    q_cur = np.asarray(q_start, dtype=np.float64).reshape(chain.dof)
    waypoints: list[np.ndarray] = []
    pen_down: list[bool] = []
    tools: list[int] = []

    def lifted(pose: ToolPose) -> ToolPose:
        R = matrix_from_quat(pose.orientation)
        return ToolPose(position=pose.position - hover * R[:, 2], orientation=pose.orientation)

    def solve(pose: ToolPose, label: str) -> np.ndarray:
        nonlocal q_cur
        for seed in (q_cur, chain.home):
            q = ik(chain, pose, seed, tol=tol, ori_tol=ori_tol)
            if q is not None:
                q_cur = q
                return q
        raise ValueError(f"{label} unreachable")

    for s, stroke in enumerate(strokes):
        if len(stroke) == 0:
            continue
        tool = tool_indices[s]
        q = solve(lifted(stroke[0]), f"stroke {s} entry hover")
        waypoints.append(q)
        pen_down.append(False)
        tools.append(tool)
        prev_down_q = None
        for k, pose in enumerate(stroke):
            q = solve(pose, f"pose {k} in stroke {s}")
            if prev_down_q is not None:
                deltas = np.abs(q - prev_down_q)
                if np.any(deltas > jump_threshold):
                    worst = int(np.argmax(deltas))
                    raise ValueError(
                        f"joint discontinuity at pose {k} in stroke {s}: "
                        f"joint {worst} moves {deltas[worst]:.4f} rad "
                        f"(threshold {jump_threshold}), deltas={np.round(deltas, 4).tolist()}"
                    )
            prev_down_q = q
            waypoints.append(q)
            pen_down.append(True)
            tools.append(tool)
        q = solve(lifted(stroke[-1]), f"stroke {s} exit hover")
        waypoints.append(q)
        pen_down.append(False)
        tools.append(tool)

    if not waypoints:
        return JointTrajectory(
            waypoints=np.empty((0, chain.dof)),
            pen_down=np.empty(0, dtype=bool),
            tool_index=np.empty(0, dtype=np.int64),
        )
    return JointTrajectory(
        waypoints=np.vstack(waypoints),
        pen_down=np.array(pen_down, dtype=bool),
        tool_index=np.array(tools, dtype=np.int64),
    )
