"""Built-in oracle suites behind ``plan check``.

Quick self-contained versions of the heavier pytest oracles: each check
returns (name, passed, detail) and the runner prints one line per check.
"""

import numpy as np

from .nmpc import CandidateTrajectory, TrackingParams, argmax_equivalence_check
from .smoother import SmootherConfig, TrajectoryEnsemble, smooth_horizon
from .streams import StreamSplitter
from .studentt import JointPartition, StudentT, conditional_update, covariance_from_scale, sample_mvt

__all__ = ["run_checks", "SUITES"]


def _random_joint(rng, dim_a, dim_b, dof):
    d = dim_a + dim_b
    a = rng.standard_normal((d, d))
    scale = a @ a.T + d * np.eye(d)
    return JointPartition(StudentT(rng.standard_normal(d), scale, dof), dim_a, dim_b)


def _check_gaussian_conditional():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(20):
        jp = _random_joint(rng, 4, 2, 1e12)
        b = jp.mean_b + rng.standard_normal(2)
        post = conditional_update(jp, b)
        k = jp.scale_ab @ np.linalg.inv(jp.scale_bb)
        mean_g = jp.mean_a + k @ (b - jp.mean_b)
        cov_g = jp.scale_aa - k @ jp.scale_bb @ k.T
        err_m = np.abs(post.location - mean_g).max() / max(np.abs(mean_g).max(), 1.0)
        cov_t = covariance_from_scale(post.scale, post.dof)
        err_c = np.abs(cov_t - cov_g).max() / np.abs(cov_g).max()
        worst = max(worst, err_m, err_c)
    return worst < 1e-6, f"max rel err {worst:.2e} (tol 1e-6)"


def _check_sampling_moments():
    rng = np.random.default_rng(7)
    dist = StudentT(np.zeros(2), np.eye(2), 5.0)
    draws = sample_mvt(dist, 200000, rng)
    cov = draws.T @ draws / draws.shape[0]
    target = 5.0 / 3.0 * np.eye(2)
    err = np.linalg.norm(cov - target) / np.linalg.norm(target)
    return err < 0.03, f"rel Frobenius err {err:.4f} (tol 0.03)"


def _check_smoother_kalman():
    class Sys:
        n_z = 0

        def transition(self, x):
            return 0.9 * x

        def observe(self, x, t):
            return x.copy()

        def draw_process_noise(self, rng, n):
            return rng.standard_normal((n, 1)) * 0.5

        def draw_measurement_noise(self, rng, n):
            return rng.standard_normal((n, 1)) * 0.8

    n = 20000
    rng = np.random.default_rng(3)
    init = TrajectoryEnsemble.from_initial(rng.standard_normal((n, 1)) * 2.0 + 1.0, 0, 1e12)
    cfg = SmootherConfig(ensemble_size=n, dof_init=1e12)
    res = smooth_horizon(init, Sys(), np.array([[1.7]]), cfg, StreamSplitter(7))
    p1 = 0.81 * 4.0 + 0.25
    k1 = p1 / (p1 + 0.64)
    m_post = 0.9 + k1 * (1.7 - 0.9)
    err = abs(float(res.ensemble.newest.mean()) - m_post) / abs(m_post)
    return err < 0.02, f"posterior mean rel err {err:.4f} (tol 0.02)"


def _check_nmpc_equivalence():
    rng = np.random.default_rng(11)
    a_mat = np.array([[0.9, 0.1], [0.0, 0.95]])
    b_mat = np.array([[0.0], [0.5]])
    step = lambda x, u: a_mat @ x + b_mat @ u
    horizon = 6
    r = rng.standard_normal((horizon, 2)) * 0.2
    s = np.zeros((horizon, 1))
    params = TrackingParams(np.eye(2) * 0.5, np.eye(1) * 0.4, np.eye(1) * 0.3,
                            dof_x=1e12, dof_u=1e12, dof_du=1e12)
    cands = [
        CandidateTrajectory.from_inputs(np.zeros(2), np.zeros(1),
                                        rng.standard_normal((horizon, 1)) * 0.3, step)
        for _ in range(50)
    ]
    report = argmax_equivalence_check(cands, r, s, params)
    n_bad = len(report["discordant_pairs"])
    return n_bad == 0, f"{n_bad} discordant pairs (expect 0)"


SUITES = {
    "tdist": [("gaussian-conditional-oracle", _check_gaussian_conditional),
              ("sampling-moments", _check_sampling_moments)],
    "smoother": [("linear-kalman-oracle", _check_smoother_kalman)],
    "nmpc": [("gaussian-limit-argmax-equivalence", _check_nmpc_equivalence)],
}


def run_checks(suites=None, out=print):
    names = list(SUITES) if not suites else list(suites)
    all_ok = True
    for suite in names:
        if suite not in SUITES:
            raise ValueError(f"unknown suite {suite!r}; available: {sorted(SUITES)}")
        for name, fn in SUITES[suite]:
            ok, detail = fn()
            all_ok &= ok
            out(f"[{'PASS' if ok else 'FAIL'}] {suite}/{name}: {detail}")
    return all_ok
