"""Cascaded elongation control: an outer PI position loop with polynomial
feedforward commands the setpoint of a fast proportional pressure loop.

Both loops run interleaved in simulation time.  The outer loop ticks at
``position_hz``; between two outer ticks exactly ``pressure_hz/position_hz``
inner ticks advance the plant.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .plantsim import PlantConfig, RenderSettings, equilibrium, render_frame, step_plant
from .pose import AXES
from .regression import predict_pose


def fit_feedforward(plant=PlantConfig(), z_range=(10.0, 100.0), n=91):
    """Least-squares quadratic ``p(z)`` through the inverse steady-state map."""
    z = np.linspace(z_range[0], z_range[1], n)
    p = np.array([plant.pressure_for(v) for v in z])
    c2, c1, c0 = np.polyfit(z, p, 2)
    return (float(c0), float(c1), float(c2))


@dataclass(frozen=True)
class PiConfig:
    kp: float = 1.5e-4  # bar/mm
    ki: float = 4.0e-4  # bar/(mm s)
    integrator_limit: float = 0.005  # bar
    feedforward_coeffs: tuple = field(default_factory=fit_feedforward)
    output_limits: tuple = (0.0, 0.015)

    def __post_init__(self):
        if self.kp < 0 or self.ki < 0:
            raise ParameterError("gains must be non-negative")
        lo, hi = self.output_limits
        if not lo < hi:
            raise ParameterError("output limits must satisfy lo < hi")
        if not 0 < self.integrator_limit <= hi - lo:
            raise ParameterError("integrator limit must be positive and within the output range")
        if len(self.feedforward_coeffs) != 3:
            raise ParameterError("feedforward needs three coefficients (c0, c1, c2)")

    def feedforward(self, z_sp):
        c0, c1, c2 = self.feedforward_coeffs
        return c0 + c1 * z_sp + c2 * z_sp * z_sp


@dataclass(frozen=True)
class LoopRates:
    position_hz: float = 50.0
    pressure_hz: float = 100.0
    axes: tuple = ("z",)

    def __post_init__(self):
        if not (self.position_hz > 0 and self.pressure_hz >= self.position_hz):
            raise ParameterError("need 0 < position_hz <= pressure_hz")
        r = self.pressure_hz / self.position_hz
        if abs(r - round(r)) > 1e-9:
            raise ParameterError("pressure_hz must be an integer multiple of position_hz")
        if "z" not in self.axes or not set(self.axes) <= set(AXES):
            raise ParameterError(f"sensing axes must include z and be drawn from {AXES}")

    @property
    def ratio(self):
        return int(round(self.pressure_hz / self.position_hz))


def pi_step(integrator, z_sp, z_meas, dt, cfg=PiConfig()):
    """One outer-loop update; returns ``(pressure_setpoint, integrator)``.

    Conditional integration: the integrator is frozen while the output is
    saturated and the error pushes further into saturation.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    lo, hi = cfg.output_limits
    e = z_sp - z_meas
    base = cfg.feedforward(z_sp) + cfg.kp * e
    u = base + integrator
    if not ((u >= hi and e > 0) or (u <= lo and e < 0)):
        lim = cfg.integrator_limit
        integrator = min(max(integrator + cfg.ki * e * dt, -lim), lim)
    u = min(max(base + integrator, lo), hi)
    return u, integrator


DEFAULT_INNER_GAIN = 4.0


def pressure_step(p_sp, p_meas, kp_inner=DEFAULT_INNER_GAIN):
    """Proportional pressure tracking; the command is never negative."""
    return max(0.0, p_meas + kp_inner * (p_sp - p_meas))


def staircase(levels=(30.0, 50.0, 70.0, 90.0, 60.0, 40.0), step_s=8.0):
    """Setpoint schedule of ``(t, z_sp)`` rows, one per level."""
    return [(i * step_s, float(v)) for i, v in enumerate(levels)]


def setpoint_at(schedule, t):
    z = schedule[0][1]
    for ts, v in schedule:
        if ts <= t + 1e-12:
            z = v
        else:
            break
    return z


LOG_COLUMNS = ["t_s", "z_sp_mm", "z_cm_mm", "z_gt_mm", "p_sp_bar", "p_bar"]


@dataclass
class TrajectoryLog:
    t: np.ndarray
    z_sp: np.ndarray
    z_cm: np.ndarray
    z_gt: np.ndarray
    p_sp: np.ndarray
    p: np.ndarray
    inner_ticks: np.ndarray  # inner updates between consecutive outer ticks

    def columns(self):
        return [self.t, self.z_sp, self.z_cm, self.z_gt, self.p_sp, self.p]

    def rmse_sensing(self):
        return float(np.sqrt(np.mean((self.z_cm - self.z_gt) ** 2)))

    def rmse_tracking(self):
        return float(np.sqrt(np.mean((self.z_gt - self.z_sp) ** 2)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for row in zip(*self.columns()):
                w.writerow([repr(float(v)) for v in row])


def read_setpoints(path):
    rows = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        if next(r, None) != ["t_s", "z_sp_mm"]:
            raise FormatError(f"{path}: header must be t_s,z_sp_mm")
        for n, row in enumerate(r, 2):
            if not row:
                continue
            try:
                t, z = float(row[0]), float(row[1])
            except (ValueError, IndexError):
                raise FormatError(f"{path}:{n}: expected two numbers") from None
            if rows and t <= rows[-1][0]:
                raise FormatError(f"{path}:{n}: times must increase")
            rows.append((t, z))
    if not rows:
        raise FormatError(f"{path}: no setpoints")
    return rows


def write_setpoints(path, schedule):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "z_sp_mm"])
        for t, z in schedule:
            w.writerow([repr(float(t)), repr(float(z))])


def run_closed_loop(setpoints, pm=None, plant=PlantConfig(), rates=LoopRates(), cfg=PiConfig(),
                    render=RenderSettings(), duration=None, seed=0, perfect_sensing=False,
                    kp_inner=DEFAULT_INNER_GAIN, initial=None):
    """Simulate the cascaded loop with the camera in the loop.

    At every outer tick the current plant state is rendered, ``pm`` predicts
    z from the frame and the PI law sets a new pressure setpoint.  With
    ``perfect_sensing`` the ground truth replaces the camera estimate.
    ``duration`` defaults to the last setpoint time plus the first step length.
    """
    if not setpoints:
        raise ParameterError("empty setpoint schedule")
    if pm is None and not perfect_sensing:
        raise ParameterError("camera feedback needs a pose model")
    dims = tuple(pm.dims) if pm is not None else tuple(render.dims)
    if pm is not None and tuple(render.dims) != dims:
        raise DimensionError(f"render size {render.dims} does not match model size {dims}")
    if duration is None:
        step = setpoints[1][0] - setpoints[0][0] if len(setpoints) > 1 else 10.0
        duration = setpoints[-1][0] + step
    n = int(round(duration * rates.position_hz))
    dt_out = 1.0 / rates.position_hz
    dt_in = 1.0 / rates.pressure_hz
    s = initial if initial is not None else equilibrium(setpoints[0][1], plant)
    log = np.empty((n, 6))
    ticks = np.zeros(n, dtype=np.int64)
    # bumpless start: preload the integrator with what the feedforward misses
    lim = cfg.integrator_limit
    integ = 0.0
    if cfg.ki > 0:
        integ = min(max(s.pressure - cfg.feedforward(setpoint_at(setpoints, 0.0)), -lim), lim)
    for k in range(n):
        t = k * dt_out
        z_sp = setpoint_at(setpoints, t)
        if perfect_sensing:
            z_cm = s.z
        else:
            img = render_frame(s.pose(), render.spec, dims, render.pattern_seed, frame=k,
                               noise_key=seed, noise_sigma=render.noise_sigma,
                               lighting_knee=render.lighting_knee)
            z_cm = predict_pose(pm, img, rates.axes).z
        p_sp, integ = pi_step(integ, z_sp, z_cm, dt_out, cfg)
        log[k] = (t, z_sp, z_cm, s.z, p_sp, s.pressure)
        for _ in range(rates.ratio):
            s = step_plant(s, pressure_step(p_sp, s.pressure, kp_inner), dt_in, plant)
            ticks[k] += 1
    return TrajectoryLog(*log.T.copy(), inner_ticks=ticks)
