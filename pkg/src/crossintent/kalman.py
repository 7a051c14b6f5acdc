"""Constant-velocity Kalman filter over the 8-dim box state
``(u, v, aspect, h, du, dv, daspect, dh)``.

Noise standard deviations scale with the box height so the filter behaves
the same for near and far pedestrians. The aspect-ratio components use
small fixed deviations instead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NonPositiveExtent, SingularInnovation

STATE_DIM = 8
MEAS_DIM = 4

_F = np.eye(STATE_DIM)
_F[:4, 4:] = np.eye(4)
_H = np.eye(MEAS_DIM, STATE_DIM)


@dataclass(frozen=True)
class KalmanConfig:
    position_weight: float = 1 / 20
    velocity_weight: float = 1 / 160
    measurement_weight: float = 1 / 20
    aspect_position_std: float = 1e-2
    aspect_velocity_std: float = 1e-5
    aspect_measurement_std: float = 1e-2
    # initial covariance: std = weight * h, as for the process noise
    init_position_weight: float = 2 / 20
    init_velocity_weight: float = 10 / 160


@dataclass(frozen=True)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        self.mean.setflags(write=False)
        self.covariance.setflags(write=False)

    @property
    def measurement(self) -> tuple[float, float, float, float]:
        u, v, a, h = self.mean[:4]
        return float(u), float(v), float(a), float(h)


def _symmetrize(p):
    return 0.5 * (p + p.T)


class KalmanFilter:
    def __init__(self, config: KalmanConfig | None = None):
        self.config = config or KalmanConfig()

    def _process_std(self, h):
        c = self.config
        return np.array([
            c.position_weight * h,
            c.position_weight * h,
            c.aspect_position_std,
            c.position_weight * h,
            c.velocity_weight * h,
            c.velocity_weight * h,
            c.aspect_velocity_std,
            c.velocity_weight * h,
        ])

    def _measurement_std(self, h):
        c = self.config
        return np.array([
            c.measurement_weight * h,
            c.measurement_weight * h,
            c.aspect_measurement_std,
            c.measurement_weight * h,
        ])

    def initiate(self, measurement) -> KalmanState:
        z = np.asarray(measurement, dtype=float)
        u, v, a, h = z
        if h <= 0 or a <= 0:
            raise NonPositiveExtent(f"height and aspect must be positive, got h={h}, aspect={a}")
        c = self.config
        std = np.array([
            c.init_position_weight * h,
            c.init_position_weight * h,
            c.aspect_position_std,
            c.init_position_weight * h,
            c.init_velocity_weight * h,
            c.init_velocity_weight * h,
            c.aspect_velocity_std,
            c.init_velocity_weight * h,
        ])
        mean = np.concatenate([z, np.zeros(4)])
        return KalmanState(mean, np.diag(std**2))

    def predict(self, state: KalmanState) -> KalmanState:
        q = np.diag(self._process_std(state.mean[3]) ** 2)
        mean = _F @ state.mean
        cov = _symmetrize(_F @ state.covariance @ _F.T + q)
        return KalmanState(mean, cov)

    def project(self, state: KalmanState) -> tuple[np.ndarray, np.ndarray]:
        """Measurement-space mean and innovation covariance."""
        r = np.diag(self._measurement_std(state.mean[3]) ** 2)
        return state.mean[:4].copy(), _symmetrize(_H @ state.covariance @ _H.T + r)

    def update(self, state: KalmanState, measurement) -> KalmanState:
        z = np.asarray(measurement, dtype=float)
        proj_mean, proj_cov = self.project(state)
        if not np.all(np.isfinite(proj_cov)):
            raise SingularInnovation("innovation covariance is not finite")
        try:
            chol = scipy.linalg.cho_factor(proj_cov, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularInnovation(str(exc)) from exc
        cross = state.covariance @ _H.T  # 8x4
        gain = scipy.linalg.cho_solve(chol, cross.T, check_finite=False).T
        mean = state.mean + gain @ (z - proj_mean)
        cov = _symmetrize(state.covariance - gain @ proj_cov @ gain.T)
        return KalmanState(mean, cov)


_default = KalmanFilter()


def kalman_init(measurement, config: KalmanConfig | None = None) -> KalmanState:
    return (KalmanFilter(config) if config else _default).initiate(measurement)


def kalman_predict(state: KalmanState, config: KalmanConfig | None = None) -> KalmanState:
    return (KalmanFilter(config) if config else _default).predict(state)


def kalman_update(state: KalmanState, measurement, config: KalmanConfig | None = None) -> KalmanState:
    return (KalmanFilter(config) if config else _default).update(state, measurement)
