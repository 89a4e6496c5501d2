"""Shared numerical helpers: order-canonical reductions and regularized solves."""

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    """A linear-algebra step failed even after maximal regularization."""


def ordered_sum(values, axis=0):
    """Sum along `axis` in a canonical (sorted) order.

    Makes the reduction invariant to the arrangement of the summands, so
    permuting ensemble members or changing the worker count cannot change
    the result bit for bit.
    """
    return np.sum(np.sort(values, axis=axis), axis=axis)


def ordered_mean(values, axis=0):
    return ordered_sum(values, axis=axis) / values.shape[axis]


def symmetrize(mat):
    return 0.5 * (mat + mat.T)


def regularized_cholesky(mat, jitter=1e-8, max_jitter=1e-2):
    """Cholesky factor of ``mat + lam * mean(diag(mat)) * I``.

    Starts at ``lam = jitter`` and doubles on factorization failure up to
    ``max_jitter``. Sample covariances from small ensembles are routinely
    rank-deficient, so a solve without this floor is not meaningful.

    Returns
    -------
    (factor, lam) : the ``scipy.linalg.cho_factor`` output and the jitter
        level that succeeded.

    Raises
    ------
    NumericalError
        If no jitter level up to ``max_jitter`` produces an SPD matrix.
    """
    m = symmetrize(np.asarray(mat, dtype=float))
    base = float(np.mean(np.diag(m)))
    eye = np.eye(m.shape[0])
    lam = jitter
    while lam <= max_jitter:
        try:
            return scipy.linalg.cho_factor(m + lam * base * eye, lower=True), lam
        except scipy.linalg.LinAlgError:
            lam *= 2.0
    raise NumericalError(
        f"matrix of size {m.shape[0]} not SPD after jitter up to {max_jitter:g} "
        f"(diag mean {base:g})"
    )


def chol_solve(factor, rhs):
    return scipy.linalg.cho_solve(factor, rhs)


def map_rows(fn, arr, threads=1):
    """Apply ``fn`` to row-chunks of ``arr`` and re-assemble in order.

    ``fn`` must be pure and row-independent; results are identical for any
    thread count, only wall time changes.
    """
    n = arr.shape[0]
    if threads <= 1 or n < 2 * threads:
        return fn(arr)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, n, threads + 1).astype(int)
    chunks = [arr[bounds[i]:bounds[i + 1]] for i in range(threads)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)
