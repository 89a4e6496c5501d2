"""Road geometry, scripted obstacle vehicles, the constraint stack and barrier.

Sign convention throughout: a constraint entry phi_i <= 0 is feasible. The
barrier maps phi to a nonnegative, clamped penalty channel that is exactly
zero on the feasible interior beyond the activation band, so infeasibility
shows up as a positive virtual measurement against a zero reference.
"""

from dataclasses import dataclass, field

import numpy as np

from .dynamics import wrap_angle

__all__ = [
    "VehicleFootprint",
    "RoadGeometry",
    "Projection",
    "ObstacleScript",
    "BarrierParams",
    "ConstraintParams",
    "Environment",
    "collision_distance",
    "boundary_margin",
    "constraint_vector",
    "barrier",
    "ov_states_at",
]


@dataclass(frozen=True)
class VehicleFootprint:
    """Bounding-ellipse footprint: semi-axes length/2 and width/2."""

    length: float = 4.4
    width: float = 1.8


@dataclass(frozen=True)
class Projection:
    arc: float
    point: np.ndarray
    heading: float
    lateral: float
    curvature: float
    extrapolated: bool


class RoadGeometry:
    """Sampled centerline with lane metadata.

    The usable half-width is ``lane_count * lane_width / 2 - margin``;
    ``boundary_margin`` is positive inside the road.
    """

    def __init__(self, centerline, lane_width, lane_count=2, margin=0.0):
        pts = np.asarray(centerline, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("centerline must be an (M, 2) polyline with M >= 2")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if (seg_len <= 0).any():
            raise ValueError("centerline arc length must be strictly increasing")
        if not lane_width > 0:
            raise ValueError("lane_width must be positive")
        self.points = pts
        self.lane_width = float(lane_width)
        self.lane_count = int(lane_count)
        self.margin = float(margin)
        self.arc = np.concatenate([[0.0], np.cumsum(seg_len)])
        # vertex tangents: average of adjacent segment directions
        dirs = seg / seg_len[:, None]
        tang = np.vstack([dirs[0], dirs, dirs[-1]])
        mid = tang[:-1] + tang[1:]
        norm = np.maximum(np.hypot(mid[:, 0], mid[:, 1]), 1e-12)
        self.tangents = mid / norm[:, None]
        heading = np.unwrap(np.arctan2(self.tangents[:, 1], self.tangents[:, 0]))
        self.headings = heading
        self.curvatures = np.gradient(heading, self.arc)

    @property
    def half_width(self):
        return self.lane_count * self.lane_width / 2.0 - self.margin

    @property
    def length(self):
        return float(self.arc[-1])

    @classmethod
    def straight(cls, length, lane_width, lane_count=2, margin=0.0,
                 start=(0.0, 0.0), heading=0.0, resolution=1.0):
        n = max(int(np.ceil(length / resolution)) + 1, 2)
        s = np.linspace(0.0, length, n)
        d = np.array([np.cos(heading), np.sin(heading)])
        pts = np.asarray(start, dtype=float) + s[:, None] * d
        return cls(pts, lane_width, lane_count, margin)

    @classmethod
    def arc_road(cls, radius, angle_span, lane_width, lane_count=2, margin=0.0,
                 start=(0.0, 0.0), heading=0.0, resolution=1.0):
        """Circular arc; positive angle_span curves left."""
        if radius <= 0:
            raise ValueError("radius must be positive")
        length = abs(angle_span) * radius
        n = max(int(np.ceil(length / resolution)) + 1, 2)
        sweep = np.linspace(0.0, angle_span, n)
        sign = 1.0 if angle_span >= 0 else -1.0
        # turn center sits at 90 degrees to the left (positive span) of heading
        center = np.asarray(start, dtype=float) + radius * np.array(
            [np.cos(heading + sign * np.pi / 2), np.sin(heading + sign * np.pi / 2)]
        )
        ang0 = np.arctan2(start[1] - center[1], start[0] - center[0])
        pts = center + radius * np.column_stack(
            [np.cos(ang0 + sweep), np.sin(ang0 + sweep)]
        )
        return cls(pts, lane_width, lane_count, margin)

    def point_at(self, arc):
        """Centerline point, heading and curvature at arc length.

        Beyond either end the point extrapolates along the terminal tangent
        with zero curvature and comes back flagged.
        """
        s = float(arc)
        if s < 0.0 or s > self.length:
            end = 0 if s < 0.0 else -1
            over = s if s < 0.0 else s - self.length
            tang = self.tangents[end]
            pt = self.points[end] + over * tang
            return pt, float(np.arctan2(tang[1], tang[0])), 0.0, True
        if s == self.length:
            tang = self.tangents[-1]
            return (self.points[-1].copy(), float(np.arctan2(tang[1], tang[0])),
                    float(self.curvatures[-1]), False)
        i = int(np.searchsorted(self.arc, s, side="right") - 1)
        w = (s - self.arc[i]) / (self.arc[i + 1] - self.arc[i])
        pt = (1 - w) * self.points[i] + w * self.points[i + 1]
        heading = wrap_angle((1 - w) * self.headings[i] + w * self.headings[i + 1])
        kappa = (1 - w) * self.curvatures[i] + w * self.curvatures[i + 1]
        return pt, float(heading), float(kappa), False

    def project(self, position):
        """Project onto the sampled centerline with local quadratic refinement.

        Points beyond either end extrapolate along the terminal tangent and
        come back flagged.
        """
        p = np.asarray(position, dtype=float)
        d2 = np.sum((self.points - p) ** 2, axis=1)
        i = int(np.argmin(d2))
        last = len(self.points) - 1
        spacing = np.diff(self.arc)

        extrapolated = False
        if i == 0 or i == last:
            tang = self.tangents[i]
            along = float((p - self.points[i]) @ tang)
            if (i == 0 and along < 0.0) or (i == last and along > 0.0):
                extrapolated = True
                s = self.arc[i] + along
                base = self.points[i] + along * tang
                lateral = float(tang[0] * (p - base)[1] - tang[1] * (p - base)[0])
                heading = float(np.arctan2(tang[1], tang[0]))
                return Projection(float(s), base, heading, lateral, 0.0, True)

        # parabola through the squared distances of the three nearest vertices
        lo, hi = max(i - 1, 0), min(i + 1, last)
        if lo == i or hi == i:
            offset = 0.0
        else:
            denom = d2[lo] - 2.0 * d2[i] + d2[hi]
            offset = 0.0 if denom <= 0 else 0.5 * (d2[lo] - d2[hi]) / denom
            offset = float(np.clip(offset, -1.0, 1.0))
        step = spacing[i] if offset >= 0 and i < last else spacing[max(i - 1, 0)]
        s = float(self.arc[i] + offset * step)
        s = float(np.clip(s, 0.0, self.length))
        pt, heading, kappa, _ = self.point_at(s)
        tang = np.array([np.cos(heading), np.sin(heading)])
        rel = p - pt
        lateral = float(tang[0] * rel[1] - tang[1] * rel[0])
        return Projection(s, pt, heading, lateral, kappa, extrapolated)


class ObstacleScript:
    """Timed waypoints of one obstacle vehicle.

    Position and speed interpolate linearly between waypoints; heading takes
    the shortest arc. Before the first waypoint the script clamps to it, after
    the last it holds the final pose and recorded speed.
    """

    def __init__(self, times, states, footprint=None, name="ov"):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("need at least one waypoint")
        if (np.diff(self.times) <= 0).any():
            raise ValueError("waypoint times must be strictly increasing")
        if self.states.shape != (len(self.times), 4):
            raise ValueError("states must be (K, 4): x, y, heading, speed")
        self.footprint = footprint or VehicleFootprint()
        self.name = name

    def state_at(self, time):
        t = float(time)
        times, states = self.times, self.states
        if t <= times[0]:
            return states[0].copy()
        if t >= times[-1]:
            return states[-1].copy()
        i = int(np.searchsorted(times, t, side="right") - 1)
        w = (t - times[i]) / (times[i + 1] - times[i])
        out = (1 - w) * states[i] + w * states[i + 1]
        dh = np.mod(states[i + 1, 2] - states[i, 2] + np.pi, 2 * np.pi) - np.pi
        out[2] = states[i, 2] + w * dh
        return out


def ov_states_at(scripts, time):
    """Poses (n_ov, 4) of every scripted obstacle at a wall-clock time."""
    if not scripts:
        return np.zeros((0, 4))
    return np.stack([s.state_at(time) for s in scripts])


def _directional_radius(footprint, heading, direction, margin):
    """Ellipse boundary distance along `direction` from the center."""
    a = footprint.length / 2.0 + margin
    b = footprint.width / 2.0 + margin
    if a <= 0.0 or b <= 0.0:
        return 0.0
    rel = float(direction) - heading
    c, s = np.cos(rel), np.sin(rel)
    return a * b / np.hypot(c * b, s * a)


def collision_distance(ego_pose, ov_pose, ego_footprint, ov_footprint, margin=0.0):
    """Center distance minus the two directional ellipse radii.

    Negative values mean the (margin-inflated) footprints overlap. Symmetric
    in its two vehicles.
    """
    ego_pose = np.asarray(ego_pose, dtype=float)
    ov_pose = np.asarray(ov_pose, dtype=float)
    dvec = ov_pose[:2] - ego_pose[:2]
    dist = float(np.hypot(dvec[0], dvec[1]))
    if dist < 1e-12:
        angle = float(ego_pose[2])
    else:
        angle = float(np.arctan2(dvec[1], dvec[0]))
    r_ego = _directional_radius(ego_footprint, float(ego_pose[2]), angle, margin)
    r_ov = _directional_radius(ov_footprint, float(ov_pose[2]), angle, margin)
    return dist - r_ego - r_ov


def boundary_margin(ego_pose, road):
    """Usable half-width minus the absolute lateral offset from the centerline."""
    proj = road.project(np.asarray(ego_pose, dtype=float)[:2])
    return road.half_width - abs(proj.lateral)


@dataclass(frozen=True)
class BarrierParams:
    """Soft-barrier shape with per-constraint-kind activation bands.

    ``width`` is the band for collision entries (meters; wide enough to give
    the planner braking-distance warning), ``boundary_width`` the band for the
    road-boundary entry (lane-keeping scale), and input / rate entries get
    ``width_frac`` of their own bound span, so a tight steering-rate interval
    is not permanently inside a meter-scale band."""

    width: float = 8.0
    kappa: float = 2.0
    beta: float = 1.0
    ceiling: float = 50.0
    width_frac: float = 0.1
    boundary_width: float = 1.0

    def __post_init__(self):
        if min(self.width, self.kappa, self.beta, self.width_frac,
               self.boundary_width) <= 0:
            raise ValueError("width, kappa, beta, width_frac, boundary_width "
                             "must be positive")
        if self.ceiling <= self.kappa:
            raise ValueError("ceiling must exceed kappa")


def barrier(phi, params, width=None):
    """Clamped soft barrier, componentwise.

    zero for phi <= -width; a quadratic ramp ``kappa ((phi + width)/width)^2``
    inside the activation band; ``kappa (1 + beta phi)`` beyond the boundary,
    clamped at the ceiling. Monotone nondecreasing in every component.
    ``width`` may be a per-entry vector; it defaults to ``params.width``.
    """
    phi = np.asarray(phi, dtype=float)
    w = params.width if width is None else np.asarray(width, dtype=float)
    ramp = params.kappa * ((phi + w) / w) ** 2
    outside = params.kappa * (1.0 + params.beta * phi)
    z = np.where(phi <= -w, 0.0, np.where(phi <= 0.0, ramp, outside))
    return np.minimum(z, params.ceiling)


@dataclass(frozen=True)
class ConstraintParams:
    d_min: float
    u_min: np.ndarray
    u_max: np.ndarray
    du_min: np.ndarray
    du_max: np.ndarray
    barrier: BarrierParams = field(default_factory=BarrierParams)
    footprint_margin: float = 0.0

    def __post_init__(self):
        for name in ("u_min", "u_max", "du_min", "du_max"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if not self.d_min > 0:
            raise ValueError("d_min must be positive")
        if (self.u_min >= self.u_max).any() or (self.du_min >= self.du_max).any():
            raise ValueError("input bounds must be ordered componentwise")

    def barrier_widths(self, n_ov):
        """Per-entry activation widths matching the constraint_vector order."""
        b = self.barrier
        u_w = b.width_frac * (self.u_max - self.u_min)
        du_w = b.width_frac * (self.du_max - self.du_min)
        return np.concatenate([np.full(n_ov, b.width), [b.boundary_width],
                               u_w, u_w, du_w, du_w])


def constraint_vector(aug_states, ov_poses, road, params, ego_footprint, ov_footprints):
    """Stacked constraint residuals phi (feasible iff every entry <= 0).

    Fixed entry order: per-OV ``d_min - distance``; ``-boundary_margin``;
    ``u - u_max``; ``u_min - u``; ``du - du_max``; ``du_min - du``.
    Accepts a single (d,) augmented state or a batch (n, d).
    """
    aug = np.atleast_2d(np.asarray(aug_states, dtype=float))
    n = aug.shape[0]
    n_u = params.u_min.size
    n_x = aug.shape[1] - 2 * n_u
    u = aug[:, n_x:n_x + n_u]
    du = aug[:, n_x + n_u:]
    cols = []
    for i in range(ov_poses.shape[0]):
        d = np.array([
            collision_distance(aug[j, :3], ov_poses[i], ego_footprint,
                               ov_footprints[i], params.footprint_margin)
            for j in range(n)
        ])
        cols.append(params.d_min - d)
    margins = np.array([boundary_margin(aug[j, :3], road) for j in range(n)])
    cols.append(-margins)
    phi = np.column_stack(cols + [u - params.u_max, params.u_min - u,
                                  du - params.du_max, params.du_min - du])
    return phi[0] if np.asarray(aug_states).ndim == 1 else phi


def constraint_dim(n_ov, n_u):
    return n_ov + 1 + 4 * n_u


class Environment:
    """Immutable scenario world: road, obstacle scripts and footprints."""

    def __init__(self, road, scripts, ego_footprint, dt):
        self.road = road
        self.scripts = list(scripts)
        self.ego_footprint = ego_footprint
        self.dt = float(dt)

    @property
    def n_ov(self):
        return len(self.scripts)

    def ov_poses(self, step):
        return ov_states_at(self.scripts, step * self.dt)

    def constraint_channel(self, params):
        """Batched phi -> barrier map keyed by absolute step index."""
        footprints = [s.footprint for s in self.scripts]
        widths = params.barrier_widths(self.n_ov)

        def channel(aug_batch, step):
            poses = self.ov_poses(step)
            phi = constraint_vector(aug_batch, poses, self.road, params,
                                    self.ego_footprint, footprints)
            return barrier(np.atleast_2d(phi), params.barrier, widths)

        return channel
