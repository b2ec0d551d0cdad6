"""Locally weighted regression of DMP forcing weights from one demonstration."""
from __future__ import annotations

import numpy as np

from ..policy import ALPHA_X, ALPHA_Z, BETA_Z, DmpPolicy, Episode, basis_centers


class DegenerateDemo(ValueError):
    pass


def _positions(demo, dof=None):
    if isinstance(demo, Episode):
        n = demo.actions.shape[1] if dof is None else dof
        ys = demo.obs[:, :n]
        if demo.final_obs is not None:
            ys = np.vstack([ys, demo.final_obs[:n]])
        return ys, None
    if hasattr(demo, "waypoints"):
        return demo.waypoints, demo.dt
    return np.asarray(demo, dtype=float), None


def lwr_fit(demo, n_basis=32, tau=None, dt=None, dof=None,
            alpha_z=ALPHA_Z, beta_z=BETA_Z, alpha_x=ALPHA_X) -> DmpPolicy:
    """Fit one DMP per joint to a single demonstration.

    ``demo`` is a Trajectory, an Episode (robot joints are the first ``dof``
    observation entries) or an array of positions sampled every ``dt``.
    ``tau`` defaults to the demonstration's duration. Joints that do not move
    (goal equal to start) get zero weights.
    """
    ys, demo_dt = _positions(demo, dof)
    dt = demo_dt if dt is None else dt
    if dt is None:
        raise ValueError("sample spacing dt is required")
    n_samples, n_joints = ys.shape
    if n_samples < max(n_basis, 2):
        raise DegenerateDemo(f"demo has {n_samples} samples, need at least {n_basis}")
    tau = (n_samples - 1) * dt if tau is None else float(tau)

    y0, goal = ys[0], ys[-1]
    # Differences that invert the semi-implicit Euler step used by the
    # integrator: z_t = tau (y_t - y_{t-1}) / dt, starting from rest.
    v = np.zeros_like(ys)
    v[1:] = np.diff(ys, axis=0) / dt
    f_target = (tau ** 2 * (v[1:] - v[:-1]) / dt
                - alpha_z * (beta_z * (goal - ys[:-1]) - tau * v[:-1]))

    # canonical phase exactly as the integrator produces it
    x = (1.0 - alpha_x * dt / tau) ** np.arange(n_samples - 1)
    c, h = basis_centers(n_basis, alpha_x)
    psi = np.exp(-h * (x[:, None] - c) ** 2)

    span = goal - y0
    moving = np.abs(span) > 1e-12
    if not moving.any():
        raise DegenerateDemo("every joint is static")
    w = np.zeros((n_joints, n_basis))
    for j in np.flatnonzero(moving):
        xi = x * span[j]
        num = psi.T @ (xi * f_target[:, j])
        den = psi.T @ (xi * xi)
        w[j] = num / np.maximum(den, 1e-300)
    return DmpPolicy(w, goal.copy(), y0.copy(), tau, alpha_z, beta_z, alpha_x)
