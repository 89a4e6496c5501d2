"""The auxiliary stochastic system whose "measurements" are references.

State is the stack (x, u, du); the virtual observation stacks the state and
input references with the barrier channel. The update order is literal:
the new vehicle state uses the OLD input, then the increment applies to the
next input (the increment drawn while stepping index k becomes du at k+1).
"""

from dataclasses import dataclass

import numpy as np

from .numerics import map_rows
from .studentt import sample_mvt

__all__ = [
    "AugmentedState",
    "VirtualMeasurement",
    "augmented_step",
    "virtual_observe",
    "assemble_process_noise",
    "VirtualSystem",
]


@dataclass(frozen=True)
class AugmentedState:
    """Stack of vehicle state x, input u and input increment du."""

    x: np.ndarray
    u: np.ndarray
    du: np.ndarray

    def __post_init__(self):
        for name in ("x", "u", "du"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if self.du.size != self.u.size:
            raise ValueError("du must match the input dimension")
        if not (np.isfinite(self.x).all() and np.isfinite(self.u).all() and np.isfinite(self.du).all()):
            raise ValueError("non-finite component in augmented state")

    def as_vector(self):
        return np.concatenate([self.x, self.u, self.du])

    @classmethod
    def from_vector(cls, vec, n_x, n_u):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:n_x], vec[n_x:n_x + n_u], vec[n_x + n_u:n_x + 2 * n_u])


@dataclass(frozen=True)
class VirtualMeasurement:
    """Stack of state reference r, input reference s and constraint channel z."""

    r: np.ndarray
    s: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("r", "s", "z"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        if (self.z < 0).any():
            raise ValueError("constraint channel must be nonnegative")

    def as_vector(self):
        return np.concatenate([self.r, self.s, self.z])


def augmented_step(state, w, dynamics):
    """One step of the auxiliary dynamics: x+ = f(x, u); du+ = w; u+ = u + w."""
    w = np.atleast_1d(np.asarray(w, dtype=float))
    new_x = np.asarray(dynamics(state.x, state.u), dtype=float)
    if not np.isfinite(new_x).all():
        raise ValueError("dynamics returned non-finite state")
    return AugmentedState(new_x, state.u + w, w)


def virtual_observe(state, constraint_fn, barrier_fn):
    """Apply h-bar: r = x, s = u, z = barrier(constraints(state))."""
    phi = constraint_fn(state)
    return VirtualMeasurement(state.x.copy(), state.u.copy(), barrier_fn(phi))


def assemble_process_noise(w, n_x):
    """Lift an input-increment draw to the augmented layout (0, w, w).

    The zero block sits on the vehicle state; the same draw appears on the
    u and du blocks (perfectly correlated by construction).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        return np.concatenate([np.zeros(n_x), w, w])
    return np.hstack([np.zeros((w.shape[0], n_x)), w, w])


class VirtualSystem:
    """Batched f-bar / h-bar bundle consumed by the smoother.

    Parameters
    ----------
    step_batch : callable (states (n, n_x), inputs (n, n_u)) -> (n, n_x)
        The vehicle transition f.
    n_x, n_u : int
    constraint_channel : callable (aug (n, d), step t) -> (n, n_z) or None
        Already-barriered (nonnegative, clamped) constraint values; None
        drops the z channel entirely.
    n_z : int
    process_noise / noise_x / noise_u / noise_z : StudentT or None
        Eq-of-motion and per-channel measurement noise laws; None means a
        noise-free channel.
    threads : int
        Row-chunk parallelism for the batched maps (results are identical
        for any value).
    """

    def __init__(self, step_batch, n_x, n_u, constraint_channel=None, n_z=0,
                 process_noise=None, noise_x=None, noise_u=None, noise_z=None,
                 threads=1):
        self.step_batch = step_batch
        self.n_x = int(n_x)
        self.n_u = int(n_u)
        self.constraint_channel = constraint_channel
        self.n_z = int(n_z) if constraint_channel is not None else 0
        self.process_noise = process_noise
        self.noise_x = noise_x
        self.noise_u = noise_u
        self.noise_z = noise_z
        self.threads = int(threads)
        self._noise_factors = {}
        for name, law in (("w", process_noise), ("x", noise_x), ("u", noise_u), ("z", noise_z)):
            if law is not None:
                self._noise_factors[name] = law.scale_factor()

    @property
    def dim(self):
        return self.n_x + 2 * self.n_u

    @property
    def obs_dim(self):
        return self.n_x + self.n_u + self.n_z

    def transition(self, blocks):
        """Deterministic part of f-bar: (f(x, u), u, 0)."""
        x = blocks[:, :self.n_x]
        u = blocks[:, self.n_x:self.n_x + self.n_u]
        new_x = map_rows(lambda rows: self.step_batch(rows[:, :self.n_x], rows[:, self.n_x:]),
                         np.hstack([x, u]), self.threads)
        return np.hstack([new_x, u, np.zeros_like(u)])

    def observe(self, blocks, t):
        """h-bar on a batch of newest blocks: (x, u, z_t)."""
        parts = [blocks[:, :self.n_x], blocks[:, self.n_x:self.n_x + self.n_u]]
        if self.constraint_channel is not None:
            parts.append(map_rows(lambda rows: self.constraint_channel(rows, t),
                                  blocks, self.threads))
        return np.hstack(parts)

    def draw_input_noise(self, rng, n):
        """Raw input-increment draws w, before augmentation."""
        if self.process_noise is None:
            return np.zeros((n, self.n_u))
        return sample_mvt(self.process_noise, n, rng, factor=self._noise_factors["w"])

    def draw_process_noise(self, rng, n):
        return assemble_process_noise(self.draw_input_noise(rng, n), self.n_x)

    def draw_measurement_noise(self, rng, n):
        cols = []
        for law, key, width in ((self.noise_x, "x", self.n_x),
                                (self.noise_u, "u", self.n_u),
                                (self.noise_z, "z", self.n_z)):
            if width == 0:
                continue
            if law is None:
                cols.append(np.zeros((n, width)))
            else:
                cols.append(sample_mvt(law, n, rng, factor=self._noise_factors[key]))
        return np.hstack(cols)
