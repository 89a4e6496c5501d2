"""Receding-horizon planning loop, scenario files, traces and comparisons.

Scenario files are strict JSON (unknown keys are errors). Each outer step k
re-initializes the ensemble around the applied state, smooths one horizon of
virtual measurements (references plus a zero constraint channel) and applies
the first smoothed input to the plant.

Random streams derive from one master seed by the documented counter scheme
``SeedSequence(seed, spawn_key=(k, inner_offset, purpose))``, so ensemble
parallelism cannot perturb a run.
"""

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .dynamics import (BicycleParams, bicycle_step_batch, fit_bicycle_mlp,
                       load_weights, mlp_forward_batch)
from .environment import (BarrierParams, ConstraintParams, Environment,
                          ObstacleScript, RoadGeometry, VehicleFootprint,
                          boundary_margin, collision_distance, constraint_dim)
from .smoother import (SmootherConfig, TrajectoryEnsemble, measurement_ensemble,
                       smooth_horizon)
from .smoother import update as smoother_update
from .streams import StreamSplitter
from .studentt import StudentT
from .virtual import VirtualSystem

__all__ = [
    "ScenarioError",
    "Scenario",
    "load_scenario",
    "scenario_from_dict",
    "generate_references",
    "plan_once",
    "run_scenario",
    "write_run",
    "load_run",
    "compare_runs",
    "recheck_violations",
    "TRACE_BASE_COLUMNS",
    "FLAG_COLLISION",
    "FLAG_BOUNDARY",
    "FLAG_INPUT",
    "FLAG_RATE",
]

ENKS_DOF = 1e10
FLAG_COLLISION = 1
FLAG_BOUNDARY = 2
FLAG_INPUT = 4
FLAG_RATE = 8

TRACE_BASE_COLUMNS = ["step", "t", "x", "y", "theta", "v", "a", "steer", "da", "dsteer"]
TRACE_TAIL_COLUMNS = ["boundary_margin", "viol_flags", "delta", "nu", "wall_ms"]


class ScenarioError(ValueError):
    """Malformed scenario file."""


# ---------------------------------------------------------------------------
# strict config parsing

def _section(obj, where, required, optional=()):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise ScenarioError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(obj)
    if missing:
        raise ScenarioError(f"{where}: missing keys {sorted(missing)}")
    return obj


def _vec(obj, where, n=None):
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 1 or (n is not None and arr.size != n):
        raise ScenarioError(f"{where}: expected a flat list of {n} numbers")
    return arr


@dataclass
class DynamicsSpec:
    model: str = "bicycle"
    wheelbase: float = 2.7
    speed_limits: tuple = (0.0, 40.0)
    weights: str | None = None
    seed: int = 0


@dataclass
class PlannerConfig:
    ensemble_size: int = 50
    horizon: int = 20
    dt: float = 0.1
    seed: int = 0
    dof_init: float = 3.0
    dof_process: float = 3.0
    dof_state: float = 3.0
    dof_input: float = 3.0
    dof_constraint: float = 3.0
    noise_process: np.ndarray = field(default_factory=lambda: np.array([0.5, 0.02]))
    noise_state: np.ndarray = field(default_factory=lambda: np.array([2.0, 2.0, 0.5, 1.0]))
    noise_input: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.1]))
    noise_constraint: float = 0.05
    innovation_mode: str = "perturbed-observation"
    dof_growth: str = "accumulate"
    jitter: float = 1e-8
    apply_full_plan: bool = False
    dynamics: DynamicsSpec = field(default_factory=DynamicsSpec)
    plant: str = "same"


@dataclass
class Scenario:
    name: str
    road: RoadGeometry
    scripts: list
    ego_state: np.ndarray
    ego_input: np.ndarray
    ego_footprint: VehicleFootprint
    speed_schedule: np.ndarray      # (K, 2) rows of (time, speed)
    lane_offset: float
    constraints: ConstraintParams
    planner: PlannerConfig
    max_steps: int
    stop_on_collision: bool
    raw: dict

    @property
    def config_sha(self):
        blob = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _parse_road(obj):
    sec = _section(obj, "road", ["kind", "lane_width"],
                   ["lane_count", "margin", "length", "start", "heading",
                    "resolution", "radius", "angle_span", "points"])
    kind = sec["kind"]
    common = dict(
        lane_width=float(sec["lane_width"]),
        lane_count=int(sec.get("lane_count", 2)),
        margin=float(sec.get("margin", 0.0)),
    )
    if kind == "straight":
        return RoadGeometry.straight(
            float(sec["length"]), start=tuple(sec.get("start", (0.0, 0.0))),
            heading=float(sec.get("heading", 0.0)),
            resolution=float(sec.get("resolution", 1.0)), **common)
    if kind == "arc":
        return RoadGeometry.arc_road(
            float(sec["radius"]), float(sec["angle_span"]),
            start=tuple(sec.get("start", (0.0, 0.0))),
            heading=float(sec.get("heading", 0.0)),
            resolution=float(sec.get("resolution", 1.0)), **common)
    if kind == "points":
        return RoadGeometry(np.asarray(sec["points"], dtype=float), **common)
    raise ScenarioError(f"road.kind: unknown kind {kind!r}")


def _parse_obstacles(obj):
    scripts = []
    for i, entry in enumerate(obj):
        sec = _section(entry, f"obstacles[{i}]", ["waypoints"],
                       ["name", "length", "width"])
        wps = np.asarray(sec["waypoints"], dtype=float)
        if wps.ndim != 2 or wps.shape[1] != 5:
            raise ScenarioError(
                f"obstacles[{i}].waypoints: expected rows of [t, x, y, heading, speed]")
        fp = VehicleFootprint(float(sec.get("length", 4.4)), float(sec.get("width", 1.8)))
        scripts.append(ObstacleScript(wps[:, 0], wps[:, 1:], fp,
                                      name=sec.get("name", f"ov{i + 1}")))
    return scripts


def _parse_planner(obj):
    sec = _section(obj, "planner", ["ensemble_size", "horizon", "dt"],
                   ["seed", "dof", "noise", "innovation_mode", "dof_growth",
                    "jitter", "apply_full_plan", "dynamics", "plant"])
    cfg = PlannerConfig(
        ensemble_size=int(sec["ensemble_size"]),
        horizon=int(sec["horizon"]),
        dt=float(sec["dt"]),
        seed=int(sec.get("seed", 0)),
        innovation_mode=sec.get("innovation_mode", "perturbed-observation"),
        dof_growth=sec.get("dof_growth", "accumulate"),
        jitter=float(sec.get("jitter", 1e-8)),
        apply_full_plan=bool(sec.get("apply_full_plan", False)),
        plant=sec.get("plant", "same"),
    )
    if cfg.horizon < 1 or cfg.ensemble_size < 2 or cfg.dt <= 0:
        raise ScenarioError("planner: need ensemble_size >= 2, horizon >= 1, dt > 0")
    if cfg.plant not in ("same", "bicycle"):
        raise ScenarioError(f"planner.plant: unknown value {cfg.plant!r}")
    if "dof" in sec:
        dof = _section(sec["dof"], "planner.dof", [],
                       ["init", "process", "state", "input", "constraint"])
        cfg.dof_init = float(dof.get("init", cfg.dof_init))
        cfg.dof_process = float(dof.get("process", cfg.dof_process))
        cfg.dof_state = float(dof.get("state", cfg.dof_state))
        cfg.dof_input = float(dof.get("input", cfg.dof_input))
        cfg.dof_constraint = float(dof.get("constraint", cfg.dof_constraint))
    if "noise" in sec:
        noise = _section(sec["noise"], "planner.noise", [],
                         ["process", "state", "input", "constraint"])
        if "process" in noise:
            cfg.noise_process = _vec(noise["process"], "planner.noise.process", 2)
        if "state" in noise:
            cfg.noise_state = _vec(noise["state"], "planner.noise.state", 4)
        if "input" in noise:
            cfg.noise_input = _vec(noise["input"], "planner.noise.input", 2)
        if "constraint" in noise:
            cfg.noise_constraint = float(noise["constraint"])
    if "dynamics" in sec:
        dyn = _section(sec["dynamics"], "planner.dynamics", ["model"],
                       ["wheelbase", "speed_limits", "weights", "seed"])
        model = dyn["model"]
        if model not in ("bicycle", "mlp", "synthetic-mlp"):
            raise ScenarioError(f"planner.dynamics.model: unknown model {model!r}")
        cfg.dynamics = DynamicsSpec(
            model=model,
            wheelbase=float(dyn.get("wheelbase", 2.7)),
            speed_limits=tuple(dyn.get("speed_limits", (0.0, 40.0))),
            weights=dyn.get("weights"),
            seed=int(dyn.get("seed", 0)),
        )
        if model == "mlp" and not cfg.dynamics.weights:
            raise ScenarioError("planner.dynamics: model 'mlp' requires 'weights'")
    return cfg


def scenario_from_dict(data, base_dir="."):
    sec = _section(data, "scenario",
                   ["name", "road", "ego", "reference", "constraints",
                    "planner", "termination"],
                   ["obstacles"])
    road = _parse_road(sec["road"])
    scripts = _parse_obstacles(sec.get("obstacles", []))

    ego = _section(sec["ego"], "ego", ["state"], ["input", "length", "width"])
    ego_state = _vec(ego["state"], "ego.state", 4)
    ego_input = _vec(ego.get("input", [0.0, 0.0]), "ego.input", 2)
    ego_fp = VehicleFootprint(float(ego.get("length", 4.4)), float(ego.get("width", 1.8)))

    ref = _section(sec["reference"], "reference", ["speed_schedule"], ["lane_offset"])
    schedule = np.asarray(ref["speed_schedule"], dtype=float)
    if schedule.ndim != 2 or schedule.shape[1] != 2 or schedule.shape[0] < 1:
        raise ScenarioError("reference.speed_schedule: expected rows of [t, speed]")
    if (np.diff(schedule[:, 0]) <= 0).any():
        raise ScenarioError("reference.speed_schedule: times must increase")

    con = _section(sec["constraints"], "constraints",
                   ["d_min", "u_min", "u_max", "du_min", "du_max"],
                   ["footprint_margin", "barrier"])
    bar = BarrierParams()
    if "barrier" in con:
        b = _section(con["barrier"], "constraints.barrier", [],
                     ["width", "kappa", "beta", "ceiling", "width_frac",
                      "boundary_width"])
        bar = BarrierParams(
            width=float(b.get("width", bar.width)),
            kappa=float(b.get("kappa", bar.kappa)),
            beta=float(b.get("beta", bar.beta)),
            ceiling=float(b.get("ceiling", bar.ceiling)),
            width_frac=float(b.get("width_frac", bar.width_frac)),
            boundary_width=float(b.get("boundary_width", bar.boundary_width)),
        )
    constraints = ConstraintParams(
        d_min=float(con["d_min"]),
        u_min=_vec(con["u_min"], "constraints.u_min", 2),
        u_max=_vec(con["u_max"], "constraints.u_max", 2),
        du_min=_vec(con["du_min"], "constraints.du_min", 2),
        du_max=_vec(con["du_max"], "constraints.du_max", 2),
        barrier=bar,
        footprint_margin=float(con.get("footprint_margin", 0.0)),
    )

    term = _section(sec["termination"], "termination", ["max_steps"],
                    ["stop_on_collision"])
    planner = _parse_planner(sec["planner"])
    if planner.dynamics.model == "mlp":
        path = os.path.join(base_dir, planner.dynamics.weights)
        if not os.path.exists(path):
            raise ScenarioError(f"planner.dynamics.weights: no such file {path}")
        planner.dynamics.weights = path

    return Scenario(
        name=str(sec["name"]),
        road=road,
        scripts=scripts,
        ego_state=ego_state,
        ego_input=ego_input,
        ego_footprint=ego_fp,
        speed_schedule=schedule,
        lane_offset=float(ref.get("lane_offset", 0.0)),
        constraints=constraints,
        planner=planner,
        max_steps=int(term["max_steps"]),
        stop_on_collision=bool(term.get("stop_on_collision", True)),
        raw=data,
    )


def load_scenario(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as err:
            raise ScenarioError(f"{path}: invalid JSON ({err})") from err
    return scenario_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))


# ---------------------------------------------------------------------------
# system assembly

def _diag_law(scales, dof):
    scales = np.atleast_1d(np.asarray(scales, dtype=float))
    if (scales == 0.0).all():
        return None
    if (scales <= 0.0).any():
        raise ScenarioError("noise scales must be all positive or all zero")
    return StudentT(np.zeros(scales.size), np.diag(scales ** 2), dof)


def build_step_fn(spec, dt):
    """Batched transition for a dynamics spec; returns (step_batch, wheelbase)."""
    if spec.model == "bicycle":
        params = BicycleParams(spec.wheelbase, dt, *spec.speed_limits)
        return (lambda s, u: bicycle_step_batch(s, u, params)), spec.wheelbase
    if spec.model == "synthetic-mlp":
        params = BicycleParams(spec.wheelbase, dt, *spec.speed_limits)
        model = fit_bicycle_mlp(params, seed=spec.seed)
        return (lambda s, u: mlp_forward_batch(model, s, u)), spec.wheelbase
    model = load_weights(spec.weights)
    return (lambda s, u: mlp_forward_batch(model, s, u)), spec.wheelbase


def build_system(scenario, mode="enkts", threads=1):
    """VirtualSystem + SmootherConfig for a scenario; mode 'enks' overrides
    every dof to a large value so the run is the Gaussian special case."""
    p = scenario.planner
    if mode not in ("enkts", "enks"):
        raise ValueError(f"unknown mode {mode!r}")
    dofs = dict(init=p.dof_init, process=p.dof_process, state=p.dof_state,
                input=p.dof_input, constraint=p.dof_constraint)
    if mode == "enks":
        dofs = {k: ENKS_DOF for k in dofs}

    env = Environment(scenario.road, scenario.scripts, scenario.ego_footprint, p.dt)
    n_z = constraint_dim(env.n_ov, 2)
    step_fn, _ = build_step_fn(p.dynamics, p.dt)
    system = VirtualSystem(
        step_fn, n_x=4, n_u=2,
        constraint_channel=env.constraint_channel(scenario.constraints),
        n_z=n_z,
        process_noise=_diag_law(p.noise_process, dofs["process"]),
        noise_x=_diag_law(p.noise_state, dofs["state"]),
        noise_u=_diag_law(p.noise_input, dofs["input"]),
        noise_z=_diag_law(np.full(n_z, p.noise_constraint), dofs["constraint"]),
        threads=threads,
    )
    config = SmootherConfig(
        ensemble_size=p.ensemble_size,
        dof_init=dofs["init"],
        dof_growth=p.dof_growth,
        innovation_mode=p.innovation_mode,
        jitter=p.jitter,
    )
    return system, config, env


# ---------------------------------------------------------------------------
# references and planning

def _schedule_speed(schedule, t):
    return float(np.interp(t, schedule[:, 0], schedule[:, 1]))


def generate_references(road, schedule, lane_offset, wheelbase, position, t0, horizon, dt):
    """Reference states and inputs over one horizon.

    Positions advance along the centerline (shifted by lane_offset) from the
    vehicle's own projection at the scheduled speed; reference heading is the
    path tangent, reference input is zero acceleration plus curvature
    feed-forward steering atan(wheelbase * curvature).
    """
    proj = road.project(position)
    arc = proj.arc
    r = np.zeros((horizon + 1, 4))
    s = np.zeros((horizon + 1, 2))
    for i in range(horizon + 1):
        speed = _schedule_speed(schedule, t0 + i * dt)
        pt, heading, kappa, _ = road.point_at(arc)
        normal = np.array([-np.sin(heading), np.cos(heading)])
        pos = pt + lane_offset * normal
        r[i] = (pos[0], pos[1], heading, speed)
        s[i] = (0.0, np.arctan(wheelbase * kappa))
        arc += speed * dt
    return r, s


def plan_once(prev_aug, system, r_refs, s_refs, config, splitter, start_index=0):
    """One smoothing pass over the horizon from the applied augmented state.

    Initialization realizes the conditioned-on-current-measurements state:
    the ensemble replicates ``prev_aug``, perturbs its input and increment
    blocks with process-noise draws (the increment block is the draw itself,
    keeping the telescoping identity), and assimilates the time-k virtual
    measurement once, so the input applied this step is anchored to its own
    reference and constraint-channel entries rather than only to later ones.
    The smoothing loop then runs over t = k+1 .. k+H. ``start_index`` anchors
    the horizon on the absolute step axis so scripted obstacles are sampled
    at prediction wall-clock time.
    """
    n_x, n_u = system.n_x, system.n_u
    n = config.ensemble_size
    base = np.tile(np.asarray(prev_aug, dtype=float), (n, 1))
    w0 = system.draw_input_noise(splitter.child(0, streams.INIT), n)
    base[:, n_x:n_x + n_u] += w0
    base[:, n_x + n_u:] = w0
    init = TrajectoryEnsemble.from_initial(base, start_index, config.dof_init)

    obs_k = np.concatenate([r_refs[0], s_refs[0], np.zeros(system.n_z)])
    meas = measurement_ensemble(
        init, lambda block: system.observe(block, start_index),
        system.draw_measurement_noise, splitter.child(0, streams.MEASURE))
    init, _ = smoother_update(
        init, obs_k, meas, system.draw_measurement_noise,
        splitter.child(0, streams.INNOVATION), config)

    horizon = r_refs.shape[0] - 1
    obs = np.hstack([r_refs[1:], s_refs[1:], np.zeros((horizon, system.n_z))])
    return smooth_horizon(init, system, obs, config, splitter)


# ---------------------------------------------------------------------------
# scenario execution

@dataclass
class StepRecord:
    step: int
    t: float
    state: np.ndarray
    u: np.ndarray
    du: np.ndarray
    ov_distances: np.ndarray
    boundary: float
    flags: int
    delta: float
    nu: float
    innovation_norm: float
    wall_ms: float
    ref_pos_err: float
    ref_speed_err: float


@dataclass
class RunTrace:
    scenario_name: str
    config_sha: str
    mode: str
    seed: int
    records: list
    summary: dict
    plans: list = field(default_factory=list)


def _violation_flags(dists, margin, u, du, cons):
    flags = 0
    if dists.size and float(dists.min()) < cons.d_min:
        flags |= FLAG_COLLISION
    if margin < 0.0:
        flags |= FLAG_BOUNDARY
    if (u > cons.u_max).any() or (u < cons.u_min).any():
        flags |= FLAG_INPUT
    if (du > cons.du_max).any() or (du < cons.du_min).any():
        flags |= FLAG_RATE
    return flags


def run_scenario(scenario, mode="enkts", seed=None, keep_plans=False,
                 measure_timing=True):
    """Execute the receding-horizon loop and return the trace.

    The plant uses the planner's dynamics model unless the scenario requests
    the mismatch mode (plan on the configured model, simulate on the bicycle).
    Terminates at max_steps, on collision when stop_on_collision is set, or
    once a schedule that ends at zero speed has run out and the vehicle has
    stopped.
    """
    p = scenario.planner
    threads = max(1, int(os.environ.get("PLAN_THREADS", "1")))
    system, config, env = build_system(scenario, mode=mode, threads=threads)
    wheelbase = p.dynamics.wheelbase
    if p.plant == "bicycle" and p.dynamics.model != "bicycle":
        plant_params = BicycleParams(p.dynamics.wheelbase, p.dt, *p.dynamics.speed_limits)
        plant_fn = lambda s, u: bicycle_step_batch(s, u, plant_params)
    else:
        plant_fn = system.step_batch

    master_seed = p.seed if seed is None else int(seed)
    root = StreamSplitter(master_seed)
    cons = scenario.constraints
    footprints = [s.footprint for s in scenario.scripts]

    x = scenario.ego_state.copy()
    u_prev = scenario.ego_input.copy()
    du_prev = np.zeros_like(u_prev)
    schedule = scenario.speed_schedule
    schedule_ends_stopped = schedule[-1, 1] <= 1e-9

    records = []
    plans = []
    termination = "max_steps"
    collision_step = None
    pending = []  # open-loop queue for apply_full_plan mode

    for k in range(scenario.max_steps):
        t_k = k * p.dt
        tic = time.perf_counter()
        if pending:
            u_k = pending.pop(0)
            delta_diag = nu_diag = innov_diag = float("nan")
            plan = None
        else:
            r_refs, s_refs = generate_references(
                scenario.road, schedule, scenario.lane_offset, wheelbase,
                x[:2], t_k, p.horizon, p.dt)
            prev_aug = np.concatenate([x, u_prev, du_prev])
            try:
                result = plan_once(prev_aug, system, r_refs, s_refs, config,
                                   root.split(k), start_index=k)
            except Exception as err:
                raise RuntimeError(f"planning failed at step {k}: {err}") from err
            plan = result.mean
            u_k = plan[0, 4:6].copy()
            delta_diag = result.diagnostics[0].delta if result.diagnostics else float("nan")
            nu_diag = result.diagnostics[-1].dof if result.diagnostics else config.dof_init
            innov_diag = result.diagnostics[0].innovation_norm if result.diagnostics else float("nan")
            if p.apply_full_plan:
                pending = [plan[i, 4:6].copy() for i in range(1, plan.shape[0])]
        wall_ms = (time.perf_counter() - tic) * 1e3 if measure_timing else 0.0

        du_k = u_k - u_prev
        ov_poses = env.ov_poses(k)
        dists = np.array([
            collision_distance(x[:3], ov_poses[i], scenario.ego_footprint,
                               footprints[i], cons.footprint_margin)
            for i in range(len(footprints))
        ])
        margin = boundary_margin(x[:3], scenario.road)
        flags = _violation_flags(dists, margin, u_k, du_k, cons)

        ref_speed = _schedule_speed(schedule, t_k)
        proj = scenario.road.project(x[:2])
        ref_pos_err = abs(proj.lateral - scenario.lane_offset)
        ref_speed_err = abs(x[3] - ref_speed)

        records.append(StepRecord(k, t_k, x.copy(), u_k.copy(), du_k.copy(),
                                  dists, float(margin), flags,
                                  float(delta_diag), float(nu_diag),
                                  float(innov_diag), wall_ms,
                                  float(ref_pos_err), float(ref_speed_err)))
        if keep_plans and plan is not None:
            plans.append((k, plan.copy()))

        if dists.size and float(dists.min()) <= 0.0:
            collision_step = k
            if scenario.stop_on_collision:
                termination = "collision"
                break
        x = plant_fn(x[None, :], u_k[None, :])[0]
        u_prev, du_prev = u_k, du_k
        t_next = (k + 1) * p.dt
        if schedule_ends_stopped and t_next > schedule[-1, 0] and x[3] < 0.05:
            termination = "stopped"
            break

    summary = _make_summary(scenario, mode, master_seed, records, termination,
                            collision_step, env)
    return RunTrace(scenario.name, scenario.config_sha, mode, master_seed,
                    records, summary, plans)


def _make_summary(scenario, mode, seed, records, termination, collision_step, env):
    cons = scenario.constraints
    n_ov = env.n_ov
    dists = np.array([r.ov_distances for r in records]) if records else np.zeros((0, n_ov))
    margins = np.array([r.boundary for r in records])
    flags = np.array([r.flags for r in records], dtype=int)
    wall = np.array([r.wall_ms for r in records])
    counts = {
        "collision": int((flags & FLAG_COLLISION != 0).sum()),
        "boundary": int((flags & FLAG_BOUNDARY != 0).sum()),
        "input": int((flags & FLAG_INPUT != 0).sum()),
        "rate": int((flags & FLAG_RATE != 0).sum()),
    }
    counts["total"] = sum(counts.values())
    boundary_pts = _boundary_polylines(scenario.road)
    scene = {
        "centerline": scenario.road.points.tolist(),
        "boundaries": boundary_pts,
        "lane_offset": scenario.lane_offset,
        "obstacles": [
            {
                "name": s.name,
                "length": s.footprint.length,
                "width": s.footprint.width,
                "track": [[r.t] + list(map(float, s.state_at(r.t))) for r in records],
            }
            for s in scenario.scripts
        ],
    }
    return {
        "scenario": scenario.name,
        "config_sha": scenario.config_sha,
        "mode": mode,
        "seed": seed,
        "n_steps": len(records),
        "termination": termination,
        "collision_step": collision_step,
        "dt": scenario.planner.dt,
        "n_ov": n_ov,
        "metrics": {
            "min_ov_distance": float(dists.min()) if dists.size else None,
            "min_ov_distance_per_ov": dists.min(axis=0).tolist() if dists.size else [],
            "min_boundary_margin": float(margins.min()) if margins.size else None,
            "violations": counts,
            "tracking_rmse_pos": float(np.sqrt(np.mean([r.ref_pos_err ** 2 for r in records]))) if records else None,
            "tracking_rmse_speed": float(np.sqrt(np.mean([r.ref_speed_err ** 2 for r in records]))) if records else None,
        },
        "timing": {
            "mean_step_ms": float(wall.mean()) if wall.size else 0.0,
            "max_step_ms": float(wall.max()) if wall.size else 0.0,
            "total_s": float(wall.sum() / 1e3),
        },
        "constraints": {
            "d_min": cons.d_min,
            "u_min": cons.u_min.tolist(),
            "u_max": cons.u_max.tolist(),
            "du_min": cons.du_min.tolist(),
            "du_max": cons.du_max.tolist(),
        },
        "reference": {
            "speed_schedule": scenario.speed_schedule.tolist(),
            "lane_offset": scenario.lane_offset,
        },
        "scene": scene,
        "columns": trace_columns(n_ov),
    }


def _boundary_polylines(road):
    normals = np.column_stack([-road.tangents[:, 1], road.tangents[:, 0]])
    half = road.lane_count * road.lane_width / 2.0
    left = road.points + half * normals
    right = road.points - half * normals
    return {"left": left.tolist(), "right": right.tolist()}


# ---------------------------------------------------------------------------
# serialization

def trace_columns(n_ov):
    return (TRACE_BASE_COLUMNS
            + [f"dist_ov{i + 1}" for i in range(n_ov)]
            + TRACE_TAIL_COLUMNS)


def _fmt(value):
    return repr(float(value))


def write_run(trace, out_dir, timing_in_trace=False):
    """Write trace.csv, summary.json and any per-step plan CSVs.

    The wall_ms column is written as 0.0 unless ``timing_in_trace`` is set,
    keeping trace.csv byte-identical across repeated runs; measured timing
    always lives in summary.json.
    """
    os.makedirs(out_dir, exist_ok=True)
    n_ov = trace.summary["n_ov"]
    lines = [",".join(trace_columns(n_ov))]
    for r in trace.records:
        wall = r.wall_ms if timing_in_trace else 0.0
        cells = ([str(r.step), _fmt(r.t)]
                 + [_fmt(v) for v in r.state]
                 + [_fmt(r.u[0]), _fmt(r.u[1]), _fmt(r.du[0]), _fmt(r.du[1])]
                 + [_fmt(d) for d in r.ov_distances]
                 + [_fmt(r.boundary), str(r.flags), _fmt(r.delta), _fmt(r.nu), _fmt(wall)])
        lines.append(",".join(cells))
    with open(os.path.join(out_dir, "trace.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(trace.summary, fh, sort_keys=True, indent=1)
        fh.write("\n")
    for k, plan in trace.plans:
        cols = ["i", "x", "y", "theta", "v", "a", "steer", "da", "dsteer"]
        rows = [",".join(cols)]
        for i in range(plan.shape[0]):
            rows.append(",".join([str(i)] + [_fmt(v) for v in plan[i]]))
        with open(os.path.join(out_dir, f"plan_k{k:04d}.csv"), "w") as fh:
            fh.write("\n".join(rows) + "\n")
    return os.path.join(out_dir, "trace.csv")


@dataclass
class LoadedRun:
    columns: list
    data: np.ndarray
    flags: np.ndarray
    summary: dict

    def col(self, name):
        return self.data[:, self.columns.index(name)]


def load_run(run_dir):
    trace_path = os.path.join(run_dir, "trace.csv")
    with open(trace_path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln]
    if not lines:
        raise ValueError(f"{trace_path}: empty trace")
    columns = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    if not rows:
        raise ValueError(f"{trace_path}: header only, no steps")
    data = np.array([[float(c) for c in row] for row in rows])
    flags = data[:, columns.index("viol_flags")].astype(int)
    with open(os.path.join(run_dir, "summary.json")) as fh:
        summary = json.load(fh)
    if summary.get("columns") != columns:
        raise ValueError(f"{trace_path}: columns do not match summary.json")
    return LoadedRun(columns, data, flags, summary)


def compare_runs(run_a, run_b):
    """Aligned per-step deltas and a side-by-side summary of two runs.

    Both runs must come from the same scenario configuration; traces of
    different lengths align on the shorter prefix with a truncation note.
    """
    if run_a.summary["config_sha"] != run_b.summary["config_sha"]:
        raise ValueError(
            f"runs come from different scenarios: {run_a.summary['scenario']} "
            f"sha {run_a.summary['config_sha']} vs {run_b.summary['scenario']} "
            f"sha {run_b.summary['config_sha']}")
    n = min(run_a.data.shape[0], run_b.data.shape[0])
    note = None
    if run_a.data.shape[0] != run_b.data.shape[0]:
        note = (f"lengths differ ({run_a.data.shape[0]} vs {run_b.data.shape[0]}); "
                f"aligned on the first {n} steps")
    shared = [c for c in run_a.columns if c not in ("step", "viol_flags", "wall_ms")]
    deltas = {}
    for c in shared:
        d = run_b.col(c)[:n] - run_a.col(c)[:n]
        deltas[c] = {"max_abs": float(np.abs(d).max()), "rms": float(np.sqrt(np.mean(d ** 2)))}

    def describe(run):
        m = run.summary["metrics"]
        return {
            "mode": run.summary["mode"],
            "seed": run.summary["seed"],
            "n_steps": run.summary["n_steps"],
            "termination": run.summary["termination"],
            "collision_step": run.summary["collision_step"],
            "min_ov_distance": m["min_ov_distance"],
            "min_boundary_margin": m["min_boundary_margin"],
            "violations": m["violations"],
            "tracking_rmse_pos": m["tracking_rmse_pos"],
            "mean_step_ms": run.summary["timing"]["mean_step_ms"],
        }

    report = {
        "scenario": run_a.summary["scenario"],
        "config_sha": run_a.summary["config_sha"],
        "aligned_steps": n,
        "truncation_note": note,
        "runs": {"a": describe(run_a), "b": describe(run_b)},
        "per_step_deltas": deltas,
    }
    return report


def recheck_violations(run, scenario):
    """Recompute every violation flag from the logged state/input columns."""
    cons = scenario.constraints
    footprints = [s.footprint for s in scenario.scripts]
    flags = np.zeros(run.data.shape[0], dtype=int)
    for i in range(run.data.shape[0]):
        t = run.col("t")[i]
        pose = np.array([run.col("x")[i], run.col("y")[i], run.col("theta")[i]])
        u = np.array([run.col("a")[i], run.col("steer")[i]])
        du = np.array([run.col("da")[i], run.col("dsteer")[i]])
        poses = np.stack([s.state_at(t) for s in scenario.scripts]) if scenario.scripts else np.zeros((0, 4))
        dists = np.array([
            collision_distance(pose, poses[j], scenario.ego_footprint,
                               footprints[j], cons.footprint_margin)
            for j in range(len(footprints))
        ])
        margin = boundary_margin(pose, scenario.road)
        flags[i] = _violation_flags(dists, margin, u, du, cons)
    return flags
