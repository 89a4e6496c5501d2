"""Multivariate Student's-t primitives.

Location/scale/dof parameterization throughout: a distribution with scale
matrix ``S`` and dof ``nu > 2`` has covariance ``nu / (nu - 2) * S``. The
closed-form conditional update keeps the family closed under observing a
sub-block, which is what makes the heavy-tailed smoother tractable.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .numerics import chol_solve, regularized_cholesky, symmetrize

__all__ = [
    "StudentT",
    "JointPartition",
    "sample_mvt",
    "scale_from_covariance",
    "covariance_from_scale",
    "mahalanobis_sq",
    "conditional_update",
    "log_pdf",
]

_SYM_RTOL = 1e-10


@dataclass(frozen=True)
class StudentT:
    """A multivariate Student's-t distribution St(location; scale, dof).

    Parameters
    ----------
    location : (m,) array
    scale : (m, m) symmetric positive-definite array
        The t scale matrix, not the covariance.
    dof : float
        Degrees of freedom, strictly greater than 2 so the covariance
        ``dof / (dof - 2) * scale`` exists.
    """

    location: np.ndarray
    scale: np.ndarray
    dof: float

    def __post_init__(self):
        loc = np.atleast_1d(np.asarray(self.location, dtype=float))
        scale = np.atleast_2d(np.asarray(self.scale, dtype=float))
        if loc.ndim != 1 or scale.shape != (loc.size, loc.size):
            raise ValueError(
                f"shape mismatch: location {loc.shape}, scale {scale.shape}"
            )
        denom = max(np.abs(scale).max(), 1.0)
        if np.abs(scale - scale.T).max() > _SYM_RTOL * denom:
            raise ValueError("scale matrix is not symmetric")
        if not np.isfinite(scale).all() or not np.isfinite(loc).all():
            raise ValueError("non-finite entries in location or scale")
        if not self.dof > 2.0:
            raise ValueError(f"dof must exceed 2, got {self.dof}")
        try:
            np.linalg.cholesky(symmetrize(scale))
        except np.linalg.LinAlgError as err:
            raise ValueError("scale matrix is not positive definite") from err
        object.__setattr__(self, "location", loc)
        object.__setattr__(self, "scale", symmetrize(scale))
        object.__setattr__(self, "dof", float(self.dof))

    @property
    def dim(self):
        return self.location.size

    @property
    def covariance(self):
        return covariance_from_scale(self.scale, self.dof)

    def scale_factor(self):
        """Lower-triangular Cholesky factor of the scale matrix."""
        return np.linalg.cholesky(self.scale)


@dataclass(frozen=True)
class JointPartition:
    """A StudentT over a stacked vector (a, b) with a fixed block split."""

    joint: StudentT
    dim_a: int
    dim_b: int

    def __post_init__(self):
        if self.dim_a < 1 or self.dim_b < 1:
            raise ValueError("block dimensions must be positive")
        if self.dim_a + self.dim_b != self.joint.dim:
            raise ValueError(
                f"blocks {self.dim_a}+{self.dim_b} != joint dim {self.joint.dim}"
            )

    @classmethod
    def from_blocks(cls, mean_a, mean_b, scale_aa, scale_ab, scale_bb, dof):
        mean_a = np.atleast_1d(np.asarray(mean_a, dtype=float))
        mean_b = np.atleast_1d(np.asarray(mean_b, dtype=float))
        scale_ab = np.atleast_2d(np.asarray(scale_ab, dtype=float))
        top = np.hstack([np.atleast_2d(scale_aa), scale_ab])
        bot = np.hstack([scale_ab.T, np.atleast_2d(scale_bb)])
        joint = StudentT(np.concatenate([mean_a, mean_b]), np.vstack([top, bot]), dof)
        return cls(joint, mean_a.size, mean_b.size)

    @property
    def mean_a(self):
        return self.joint.location[: self.dim_a]

    @property
    def mean_b(self):
        return self.joint.location[self.dim_a :]

    @property
    def scale_aa(self):
        return self.joint.scale[: self.dim_a, : self.dim_a]

    @property
    def scale_ab(self):
        return self.joint.scale[: self.dim_a, self.dim_a :]

    @property
    def scale_bb(self):
        return self.joint.scale[self.dim_a :, self.dim_a :]


def sample_mvt(dist, count, rng, factor=None):
    """Draw ``count`` samples via the normal / chi-square mixture.

    Each sample is ``location + L z * sqrt(dof / g)`` with ``z`` standard
    normal, ``g ~ chi2(dof)`` and ``L`` a symmetric factor of the scale.
    Draw order is fixed (all z, then all g), so results are a deterministic
    function of the generator state.

    ``factor`` overrides the Cholesky factor of ``dist.scale``; passing an
    all-zero factor is the documented bypass for sampling a zero-spread
    (degenerate) distribution, which the constructor otherwise rejects.
    """
    count = int(count)
    if count < 0:
        raise ValueError("count must be nonnegative")
    m = dist.dim
    if count == 0:
        return np.empty((0, m))
    chol = dist.scale_factor() if factor is None else np.asarray(factor, dtype=float)
    z = rng.standard_normal((count, m))
    g = rng.chisquare(dist.dof, size=count)
    return dist.location + (z @ chol.T) * np.sqrt(dist.dof / g)[:, None]


def scale_from_covariance(cov, dof):
    """Scale matrix with covariance ``cov``: ``(dof - 2) / dof * cov``."""
    if not dof > 2.0:
        raise ValueError(f"dof must exceed 2, got {dof}")
    return (dof - 2.0) / dof * np.asarray(cov, dtype=float)


def covariance_from_scale(scale, dof):
    """Inverse of :func:`scale_from_covariance`."""
    if not dof > 2.0:
        raise ValueError(f"dof must exceed 2, got {dof}")
    return dof / (dof - 2.0) * np.asarray(scale, dtype=float)


def mahalanobis_sq(residual, matrix, jitter=1e-8):
    """Quadratic form ``residual^T matrix^{-1} residual`` via a factorized solve.

    The solve runs against the jitter-regularized matrix (never an explicit
    inverse); a matrix that stays singular through the jitter ladder raises
    :class:`~ensplan.numerics.NumericalError`.
    """
    residual = np.asarray(residual, dtype=float)
    factor, _ = regularized_cholesky(matrix, jitter=jitter)
    return float(max(residual @ chol_solve(factor, residual), 0.0))


def conditional_update(joint, observed_b, jitter=1e-8):
    """Condition a partitioned Student's-t joint on its b-block.

    Given the joint over (a, b) with dof ``nu`` and an observed value of b,
    returns St(mean', scale', nu + n) over a, where with gain
    ``K = S_ab S_bb^{-1}``::

        mean'  = mean_a + K (b - mean_b)
        scale' = (nu + d) / (nu + n) * (S_aa - K S_bb K^T)
        d      = (b - mean_b)^T S_bb^{-1} (b - mean_b)
        n      = dim(b)
    """
    b = np.atleast_1d(np.asarray(observed_b, dtype=float))
    if b.size != joint.dim_b:
        raise ValueError(f"observed_b has dim {b.size}, expected {joint.dim_b}")
    nu = joint.joint.dof
    n = joint.dim_b
    factor, _ = regularized_cholesky(joint.scale_bb, jitter=jitter)
    gain = chol_solve(factor, joint.scale_ab.T).T
    innovation = b - joint.mean_b
    delta = float(max(innovation @ chol_solve(factor, innovation), 0.0))
    mean = joint.mean_a + gain @ innovation
    schur = symmetrize(joint.scale_aa - gain @ joint.scale_bb @ gain.T)
    scale = (nu + delta) / (nu + n) * schur
    return StudentT(mean, scale, nu + n)


def _lgamma_ratio(z, a):
    """log Gamma(z + a) - log Gamma(z) without catastrophic cancellation.

    Direct lgamma differences lose ~digits(z) of precision; past 1e7 the
    two-term Stirling expansion is already exact to double precision.
    """
    if z < 1e7:
        return float(gammaln(z + a) - gammaln(z))
    return float(a * np.log(z) + a * (a - 1.0) / (2.0 * z))


def log_pdf(dist, point):
    """Exact log-density of the multivariate t at ``point``.

    Uses ``log1p`` for the kernel term and a stable log-gamma ratio for the
    normalizer so the Gaussian limit (huge dof) stays accurate.
    """
    point = np.atleast_1d(np.asarray(point, dtype=float))
    m = dist.dim
    nu = dist.dof
    chol = dist.scale_factor()
    dev = point - dist.location
    w = np.linalg.solve(chol, dev)
    maha = float(w @ w)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return float(
        _lgamma_ratio(nu / 2.0, m / 2.0)
        - 0.5 * m * np.log(nu * np.pi)
        - 0.5 * logdet
        - 0.5 * (nu + m) * np.log1p(maha / nu)
    )
