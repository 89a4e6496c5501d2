"""Vehicle transition back-ends: kinematic bicycle and a loadable MLP.

Both expose the same batched signature ``(states (n, 4), inputs (n, 2)) ->
(n, 4)`` with state layout (x, y, heading, speed) and input (accel, steer).
Discretization is explicit Euler at the configured time step; the planner
treats the transition as a black box.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BicycleParams",
    "bicycle_step",
    "bicycle_step_batch",
    "wrap_angle",
    "MlpModel",
    "mlp_forward",
    "mlp_forward_batch",
    "load_weights",
    "save_weights",
    "fit_bicycle_mlp",
    "WeightFormatError",
]

N_X = 4
N_U = 2

MAGIC = b"MLPW1\n"
ACTIVATION_CODES = {"tanh": 0, "relu": 1}
ACTIVATION_NAMES = {v: k for k, v in ACTIVATION_CODES.items()}
CONVENTION_CODES = {"absolute": 0, "residual": 1}
CONVENTION_NAMES = {v: k for k, v in CONVENTION_CODES.items()}


class WeightFormatError(ValueError):
    """Malformed or inconsistent weight file."""


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.7
    dt: float = 0.1
    v_min: float = 0.0
    v_max: float = 40.0

    def __post_init__(self):
        if not self.wheelbase > 0:
            raise ValueError("wheelbase must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.v_max > self.v_min:
            raise ValueError("speed bounds must be ordered")


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.mod(np.asarray(theta, dtype=float) - np.pi, -2.0 * np.pi) + np.pi


def bicycle_step_batch(states, inputs, params):
    """Explicit-Euler kinematic bicycle over a batch of rows."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    x, y, theta, v = states.T
    accel, steer = inputs.T
    dt = params.dt
    new = np.empty_like(states)
    new[:, 0] = x + v * np.cos(theta) * dt
    new[:, 1] = y + v * np.sin(theta) * dt
    new[:, 2] = wrap_angle(theta + v / params.wheelbase * np.tan(steer) * dt)
    new[:, 3] = np.clip(v + accel * dt, params.v_min, params.v_max)
    return new


def bicycle_step(state, control, params):
    return bicycle_step_batch(state[None, :], np.asarray(control, dtype=float)[None, :], params)[0]


@dataclass
class MlpModel:
    """Feed-forward network over (state, input) with per-feature normalization.

    ``residual`` output convention means the network predicts the state
    increment and the forward pass returns ``state + prediction``; a
    zero-weight residual network is therefore the identity map.
    """

    weights: list
    biases: list
    in_shift: np.ndarray
    in_scale: np.ndarray
    out_shift: np.ndarray
    out_scale: np.ndarray
    activation: str = "tanh"
    residual: bool = True
    provenance: str = ""
    lipschitz_bound: float = field(default=0.0)

    def __post_init__(self):
        self.weights = [np.ascontiguousarray(w, dtype=float) for w in self.weights]
        self.biases = [np.ascontiguousarray(b, dtype=float) for b in self.biases]
        for name in ("in_shift", "in_scale", "out_shift", "out_scale"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        dims = self.layer_dims
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
                raise WeightFormatError(
                    f"layer {i}: weight {w.shape} / bias {b.shape} do not chain "
                    f"{dims[i]} -> {dims[i + 1]}"
                )
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise WeightFormatError(f"layer {i}: non-finite parameter")
        if self.in_shift.shape != (dims[0],) or self.in_scale.shape != (dims[0],):
            raise WeightFormatError("input normalization vectors mismatch input dim")
        if self.out_shift.shape != (dims[-1],) or self.out_scale.shape != (dims[-1],):
            raise WeightFormatError("output normalization vectors mismatch output dim")
        if (self.in_scale <= 0).any() or (self.out_scale <= 0).any():
            raise WeightFormatError("normalization scales must be positive")
        if self.activation not in ACTIVATION_CODES:
            raise WeightFormatError(f"unknown activation {self.activation!r}")
        # Activations are 1-Lipschitz, so the chained operator norms bound the
        # network part of the map; the bound must be finite for a valid model.
        bound = float(np.prod([np.linalg.norm(w, 2) for w in self.weights]))
        bound *= float(np.max(self.out_scale) / np.min(self.in_scale))
        if not np.isfinite(bound):
            raise WeightFormatError("Lipschitz bound is not finite")
        self.lipschitz_bound = bound

    @property
    def layer_dims(self):
        dims = [self.weights[0].shape[1]] if self.weights else []
        for w in self.weights:
            dims.append(w.shape[0])
        return dims

    @property
    def in_dim(self):
        return self.layer_dims[0]

    @property
    def out_dim(self):
        return self.layer_dims[-1]


def _activate(kind, arr):
    if kind == "tanh":
        return np.tanh(arr)
    return np.maximum(arr, 0.0)


def mlp_forward_batch(model, states, inputs):
    states = np.atleast_2d(np.asarray(states, dtype=float))
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    feats = (np.hstack([states, inputs]) - model.in_shift) / model.in_scale
    h = feats
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = h @ w.T + b
        if i < last:
            h = _activate(model.activation, h)
    out = h * model.out_scale + model.out_shift
    return states + out if model.residual else out


def mlp_forward(model, state, control):
    return mlp_forward_batch(model, state[None, :], np.asarray(control, dtype=float)[None, :])[0]


def _header_ints(model):
    dims = model.layer_dims
    hidden = dims[1:-1]
    return [dims[0], dims[-1], len(hidden)] + list(hidden) + [
        ACTIVATION_CODES[model.activation],
        CONVENTION_CODES["residual" if model.residual else "absolute"],
    ]


def save_weights(model, path):
    """Write the self-describing binary weight file plus its manifest sidecar."""
    path = str(path)
    chunks = [MAGIC, struct.pack(f"<{len(_header_ints(model))}i", *_header_ints(model))]
    for vec in (model.in_shift, model.in_scale, model.out_shift, model.out_scale):
        chunks.append(vec.astype("<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        chunks.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        chunks.append(b.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))
    manifest = path.rsplit(".", 1)[0] + ".manifest"
    with open(manifest, "w") as fh:
        fh.write(model.provenance.rstrip("\n") + "\n" if model.provenance else "")
    return path


def _take(buf, offset, count, what):
    end = offset + count
    if end > len(buf):
        raise WeightFormatError(
            f"truncated file while reading {what}: expected {end} bytes, found {len(buf)}"
        )
    return buf[offset:end], end


def load_weights(path):
    """Parse and validate a weight file written by :func:`save_weights`."""
    path = str(path)
    with open(path, "rb") as fh:
        buf = fh.read()
    raw, off = _take(buf, 0, len(MAGIC), "magic")
    if raw != MAGIC:
        raise WeightFormatError(f"bad magic {raw!r}, expected {MAGIC!r}")
    raw, off = _take(buf, off, 12, "fixed header")
    in_dim, out_dim, n_hidden = struct.unpack("<3i", raw)
    if min(in_dim, out_dim) < 1 or n_hidden < 0:
        raise WeightFormatError(f"bad dimensions in header: {in_dim}, {out_dim}, {n_hidden}")
    raw, off = _take(buf, off, 4 * (n_hidden + 2), "layer widths")
    *hidden, act_code, conv_code = struct.unpack(f"<{n_hidden + 2}i", raw)
    if act_code not in ACTIVATION_NAMES:
        raise WeightFormatError(f"unknown activation code {act_code}")
    if conv_code not in CONVENTION_NAMES:
        raise WeightFormatError(f"unknown output convention code {conv_code}")
    if any(h < 1 for h in hidden):
        raise WeightFormatError(f"non-positive hidden width in {hidden}")

    def read_array(shape, what):
        nonlocal off
        count = int(np.prod(shape)) * 8
        raw, off = _take(buf, off, count, what)
        return np.frombuffer(raw, dtype="<f8").reshape(shape).copy()

    dims = [in_dim] + list(hidden) + [out_dim]
    in_shift = read_array((in_dim,), "input shift")
    in_scale = read_array((in_dim,), "input scale")
    out_shift = read_array((out_dim,), "output shift")
    out_scale = read_array((out_dim,), "output scale")
    weights, biases = [], []
    for i in range(len(dims) - 1):
        weights.append(read_array((dims[i + 1], dims[i]), f"layer {i} weights"))
        biases.append(read_array((dims[i + 1],), f"layer {i} bias"))
    if off != len(buf):
        raise WeightFormatError(f"trailing bytes: expected {off} bytes, found {len(buf)}")

    manifest = path.rsplit(".", 1)[0] + ".manifest"
    provenance = ""
    try:
        with open(manifest) as fh:
            provenance = fh.read().rstrip("\n")
    except OSError:
        pass
    return MlpModel(
        weights, biases, in_shift, in_scale, out_shift, out_scale,
        activation=ACTIVATION_NAMES[act_code],
        residual=CONVENTION_NAMES[conv_code] == "residual",
        provenance=provenance,
    )


def fit_bicycle_mlp(params=None, seed=0, hidden=(128, 128), n_train=50000,
                    theta_range=(-1.2, 1.2), v_range=(0.0, 25.0),
                    a_range=(-8.0, 4.0), steer_range=(-0.55, 0.55),
                    ridge=1e-9):
    """Deterministic synthetic-weight generator fitted to the bicycle model.

    Only the output layer is solved (ridge least squares on one-step bicycle
    increments); the hidden layers are fixed sigmoid-spline dictionaries:
    fans of shifted tanh units along several directions of the (heading,
    speed) and (steering, speed) planes, which is what a sum-of-ridge-function
    expansion of the speed/trig product terms needs, plus a fan along the
    speed-clip kink direction and a few seeded multi-scale random rows. The
    wrap-free increment is used as the target so the fit stays smooth; the
    first-layer position columns are zero, making the network translation
    invariant by construction.

    The training envelope (theta, v, a, steer ranges) doubles as the
    validation envelope documented in the manifest.
    """
    params = params or BicycleParams()
    h1, h2 = hidden

    lo = np.array([theta_range[0], v_range[0], a_range[0], steer_range[0]])
    hi = np.array([theta_range[1], v_range[1], a_range[1], steer_range[1]])
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(91,)))
    train = lo + (hi - lo) * rng.random((n_train, 4))
    theta, v = train[:, 0], train[:, 1]
    accel, steer = train[:, 2], train[:, 3]
    dt = params.dt
    increments = np.column_stack([
        v * np.cos(theta) * dt,
        v * np.sin(theta) * dt,
        v / params.wheelbase * np.tan(steer) * dt,
        np.clip(v + accel * dt, params.v_min, params.v_max) - v,
    ])
    states = np.zeros((n_train, N_X))
    states[:, 2] = theta
    states[:, 3] = v
    controls = train[:, 2:]

    in_shift = np.zeros(N_X + N_U)
    in_scale = np.ones(N_X + N_U)
    in_shift[2:] = (lo + hi) / 2.0
    in_scale[2:] = (hi - lo) / 2.0
    out_shift = increments.mean(axis=0)
    out_scale = np.maximum(increments.std(axis=0), 1e-9)

    sharp = 2.0
    rows, biases = [], []

    def fan(col_a, col_b, n_dir, n_knots, gain):
        for phi in np.linspace(0.0, np.pi, n_dir, endpoint=False):
            for c in np.linspace(-1.2, 1.2, n_knots):
                w = np.zeros(N_X + N_U)
                w[col_a], w[col_b] = gain * np.cos(phi), gain * np.sin(phi)
                rows.append(w)
                biases.append(-gain * c)

    fan(2, 3, n_dir=8, n_knots=12, gain=sharp)   # (heading, speed) plane
    fan(5, 3, n_dir=4, n_knots=6, gain=sharp)    # (steering, speed) plane
    kink = np.array([in_scale[3], in_scale[4] * dt])
    kink /= np.linalg.norm(kink)
    for c in np.linspace(-1.2, 1.2, 6):          # speed-clip kink direction
        w = np.zeros(N_X + N_U)
        w[3], w[4] = 3.0 * kink
        rows.append(w)
        biases.append(-3.0 * c)
    w = np.zeros(N_X + N_U)
    w[4] = 0.3                                   # near-linear acceleration unit
    rows.append(w)
    biases.append(0.0)
    while len(rows) < h1:
        w = np.zeros(N_X + N_U)
        w[2:] = rng.standard_normal(4) * np.exp(rng.uniform(np.log(0.3), np.log(2.5)))
        rows.append(w)
        biases.append(rng.uniform(-2.0, 2.0))
    w1 = np.array(rows[:h1])
    b1 = np.array(biases[:h1])
    w2 = np.eye(h2) + rng.standard_normal((h2, h1)) * 0.01
    b2 = np.zeros(h2)

    feats = (np.hstack([states, controls]) - in_shift) / in_scale
    a1 = np.tanh(feats @ w1.T + b1)
    a2 = np.tanh(a1 @ w2.T + b2)
    targets = (increments - out_shift) / out_scale
    gram = a2.T @ a2 + ridge * n_train * np.eye(h2)
    w3 = np.linalg.solve(gram, a2.T @ targets).T
    b3 = np.zeros(N_X)

    model = MlpModel(
        [w1, w2, w3], [b1, b2, b3], in_shift, in_scale, out_shift, out_scale,
        activation="tanh", residual=True,
        provenance=(
            "synthetic fit: sigmoid-spline ridge regression of one-step "
            f"kinematic-bicycle increments (wheelbase={params.wheelbase}, "
            f"dt={params.dt}, seed={seed}, n_train={n_train}, envelope "
            f"theta={theta_range}, v={v_range}, a={a_range}, steer={steer_range})"
        ),
    )
    return model
