"""Synthetic actuator: interior pattern renderer, pressure/elongation plant
and a time-of-flight distance sensor.

The renderer is a pinhole camera looking up through a stack of annular
fabric layers, one per bellow.  Each layer carries a dashed white ring and
a set of 2 mm dots.  Elongation spreads the layers apart in depth and
lateral motion of the grip shifts them sideways, both in proportion to the
layer's position in the stack.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache
from math import erf, sqrt

import numpy as np

from . import _kernels
from .errors import ParameterError
from .pose import Pose

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class PatternSpec:
    num_bellows: int = 4
    # dashed ring radius per bellow, listed from the top bellow down to the camera
    ring_radii: tuple = (14.0, 26.0, 38.0, 50.0)
    dash_count: tuple = (8, 12, 16, 20)
    dot_count: int = 12
    dot_diameter: float = 2.0
    collapsed_diameter: float = 140.0
    ring_width: float = 2.0
    cutout_margin: float = 5.0  # cut-out radius = ring radius - margin
    camera_gap: float = 30.0  # lens to the first fabric layer, collapsed
    bellow_height: float = 8.0  # collapsed thickness of one bellow
    focal: float = 0.25  # focal length as a fraction of the image width

    def __post_init__(self):
        r = np.asarray(self.ring_radii, dtype=float)
        if len(r) != self.num_bellows or len(self.dash_count) != self.num_bellows:
            raise ParameterError("ring_radii and dash_count need one entry per bellow")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise ParameterError("ring radii must be positive and increasing")
        if self.dot_diameter <= 0:
            raise ParameterError("dot_diameter must be positive")
        if r[-1] + self.ring_width >= self.collapsed_diameter / 2:
            raise ParameterError("rings must fit inside the collapsed diameter")


@dataclass(frozen=True)
class Workspace:
    x: tuple = (-15.0, 15.0)
    y: tuple = (-15.0, 15.0)
    z: tuple = (20.0, 100.0)

    def __post_init__(self):
        for name in AXIS_NAMES:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ParameterError(f"workspace {name} range is empty: {(lo, hi)}")

    def contains(self, x, y, z):
        return (self.x[0] <= x <= self.x[1] and self.y[0] <= y <= self.y[1]
                and self.z[0] <= z <= self.z[1])


# renderable frustum
MAX_LATERAL = 40.0
MAX_Z = 150.0


def _default_map():
    # z_ss(p) = 120 (1 - exp(-p / p0)) with about 50 mm at 0.002 bar
    p = np.linspace(0.0, 0.02, 81)
    p0 = 0.002 / -np.log(1.0 - 50.0 / 120.0)
    return tuple(p), tuple(120.0 * (1.0 - np.exp(-p / p0)))


_MAP_P, _MAP_Z = _default_map()


@dataclass(frozen=True)
class PlantConfig:
    pressure_tau: float = 0.05
    elongation_tau: float = 0.4
    map_pressure: tuple = _MAP_P
    map_z: tuple = _MAP_Z
    z_max: float = 110.0
    p_max: float = 0.015
    lighting_knee: float = 20.0
    # rows of (t, x, y); linearly interpolated, held constant outside the table
    disturbance: tuple = ()

    def __post_init__(self):
        if self.pressure_tau <= 0 or self.elongation_tau <= 0:
            raise ParameterError("time constants must be positive")
        if len(self.map_pressure) != len(self.map_z) or len(self.map_z) < 2:
            raise ParameterError("elongation map needs matching pressure and z tables")
        if np.any(np.diff(self.map_pressure) <= 0) or np.any(np.diff(self.map_z) <= 0):
            raise ParameterError("elongation map must be strictly increasing")

    def elongation(self, p):
        return float(np.interp(p, self.map_pressure, self.map_z))

    def pressure_for(self, z):
        """Inverse of the steady-state map."""
        return float(np.interp(z, self.map_z, self.map_pressure))

    def lateral(self, t):
        if not self.disturbance:
            return 0.0, 0.0
        d = np.asarray(self.disturbance, dtype=float)
        return float(np.interp(t, d[:, 0], d[:, 1])), float(np.interp(t, d[:, 0], d[:, 2]))


@dataclass(frozen=True)
class PlantState:
    pressure: float = 0.0
    z: float = 0.0
    x: float = 0.0
    y: float = 0.0
    time: float = 0.0

    def pose(self):
        return Pose(self.x, self.y, self.z, self.time)


def equilibrium(z, cfg=PlantConfig()):
    """Steady state holding elongation ``z`` with no lateral offset."""
    p = cfg.pressure_for(z)
    return PlantState(pressure=p, z=cfg.elongation(p))


def step_plant(s, p_command, dt, cfg=PlantConfig()):
    """Advance the two cascaded first-order lags by ``dt`` seconds.

    The command is clamped to ``[0, p_max]`` and held over the step; the
    elongation lag tracks the steady-state map at the end-of-step pressure.
    """
    if dt <= 0:
        raise ParameterError("dt must be positive")
    pc = min(max(p_command, 0.0), cfg.p_max)
    p = pc + (s.pressure - pc) * np.exp(-dt / cfg.pressure_tau)
    zt = cfg.elongation(p)
    z = zt + (s.z - zt) * np.exp(-dt / cfg.elongation_tau)
    z = min(max(z, 0.0), cfg.z_max)
    t = s.time + dt
    x, y = cfg.lateral(t)
    return PlantState(pressure=float(p), z=float(z), x=x, y=y, time=t)


def default_disturbance(start=19.0, end=60.0, amplitude=25.0):
    """Lateral grip motion from ``start`` on: two incommensurate sweeps ramped in over 2 s."""
    t = np.arange(0.0, end + 1e-9, 0.05)
    ramp = np.clip((t - start) / 2.0, 0.0, 1.0)
    x = amplitude * ramp * np.sin(2 * np.pi * 0.23 * (t - start))
    y = amplitude * ramp * np.sin(2 * np.pi * 0.37 * (t - start) + 0.5)
    return tuple(zip(t.tolist(), x.tolist(), y.tolist()))


# --- renderer -----------------------------------------------------------------

@lru_cache(maxsize=16)
def _pattern(spec, seed):
    """Dot layout per layer, nearest layer first.  Fixed for a given seed."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9A77]))
    n = spec.dot_count
    nl = spec.num_bellows
    ang = np.empty((nl, n))
    rad = np.empty((nl, n))
    rings = np.asarray(spec.ring_radii[::-1], dtype=float)
    for j in range(nl):
        jitter = rng.uniform(-0.3, 0.3, n)
        ang[j] = 2 * np.pi * (np.arange(n) + jitter) / n
        rad[j] = rings[j] + spec.ring_width / 2 + rng.uniform(2.0, 4.5, n)
    return ang, rad


def layer_geometry(pose, spec=PatternSpec()):
    """Depths and lateral shifts of the fabric layers, nearest first."""
    n = spec.num_bellows
    frac = np.arange(1, n + 1) / n
    depth = spec.camera_gap + np.arange(1, n + 1) * spec.bellow_height + pose.z * frac
    return depth, pose.x * frac, pose.y * frac


def ring_image_radii(pose, spec=PatternSpec(), dims=(640, 480)):
    """Apparent radius in pixels of each dashed ring, nearest bellow first."""
    depth, _, _ = layer_geometry(pose, spec)
    f = spec.focal * dims[0]
    return f * np.asarray(spec.ring_radii[::-1], dtype=float) / depth


def check_renderable(pose):
    if not (np.isfinite(pose.x) and np.isfinite(pose.y) and np.isfinite(pose.z)):
        raise ParameterError(f"pose is not finite: {pose}")
    if not (0.0 <= pose.z <= MAX_Z and abs(pose.x) <= MAX_LATERAL and abs(pose.y) <= MAX_LATERAL):
        raise ParameterError(f"pose {pose.as_tuple()} is outside the renderable frustum")


def render_coverage(pose, spec=PatternSpec(), dims=(640, 480), seed=0):
    """Noise-free pattern coverage in [0, 1], before lighting."""
    check_renderable(pose)
    w, h = dims
    depth, sx, sy = layer_geometry(pose, spec)
    rings = np.asarray(spec.ring_radii[::-1], dtype=float)
    cut = rings - spec.cutout_margin
    cut[-1] = 0.0  # the top lid has no cut-out
    ang, rad = _pattern(spec, seed)
    hw = spec.ring_width / 2.0
    dot_r = spec.dot_diameter / 2.0
    band_lo = rings - hw
    band_hi = np.maximum(rings + hw, rad.max(axis=1) + dot_r)
    return _kernels.render_layers(
        h, w, spec.focal * w, w / 2.0, h / 2.0, depth, sx, sy, cut,
        spec.collapsed_diameter / 2.0, rings, hw,
        np.asarray(spec.dash_count[::-1], dtype=np.float64),
        rad * np.cos(ang), rad * np.sin(ang), dot_r, band_lo, band_hi,
    )


def frame_noise(shape, seed, frame, noise_key=0):
    """Standard normal field from a counter-based stream keyed by (seed, noise_key, frame)."""
    bits = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, noise_key & 0xFFFFFFFFFFFFFFFF],
                            counter=[0, frame, 0, 0])
    return np.random.Generator(bits).standard_normal(shape, dtype=np.float32)


def render_frame(pose, spec=PatternSpec(), dims=(640, 480), seed=0, frame=0, noise_key=0,
                 noise_sigma=2.0, lighting_knee=20.0):
    """Render the camera image for ``pose``; ``dims`` is ``(width, height)``.

    ``seed`` fixes the dot layout and keys the pixel noise together with
    ``noise_key``; ``frame`` is the noise counter.
    """
    cov = render_coverage(pose, spec, dims, seed)
    brightness = min(1.0, pose.z / lighting_knee) if lighting_knee > 0 else 1.0
    if noise_sigma > 0:
        noise = frame_noise(cov.shape, seed, frame, noise_key)
    else:
        noise = np.zeros(cov.shape, dtype=np.float32)
    return _kernels.expose(cov, 255.0 * brightness, noise, float(noise_sigma))


# --- time-of-flight sensor ------------------------------------------------------

# raw counts per mm and raw offset; hidden from callers, found by calibration
_TOF_GAIN = 0.8
_TOF_OFFSET = 12.0


def simulate_tof(states, noise_sigma=1.0, seed=0):
    """Raw readings of the distance sensor for one state or a sequence of states.

    ``noise_sigma`` is in millimetres of distance.
    """
    single = isinstance(states, PlantState)
    seq = [states] if single else list(states)
    x = np.array([s.x for s in seq])
    y = np.array([s.y for s in seq])
    z = np.array([s.z for s in seq])
    dist = np.sqrt(x * x + y * y + z * z)
    if noise_sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0x70F]))
        dist = dist + noise_sigma * rng.standard_normal(dist.shape)
    raw = _TOF_GAIN * dist + _TOF_OFFSET
    return float(raw[0]) if single else raw


def calibrate_linear(raw, z_gt):
    """Ordinary least squares ``z ~ gain * raw + offset``."""
    raw = np.asarray(raw, dtype=float)
    z_gt = np.asarray(z_gt, dtype=float)
    if raw.shape != z_gt.shape or raw.ndim != 1 or raw.size < 2:
        raise ParameterError("need at least two paired readings")
    rc = raw - raw.mean()
    sxx = float(rc @ rc)
    if sxx <= 1e-12 * max(1.0, float(raw @ raw)):
        raise ParameterError("raw readings are constant; calibration is degenerate")
    gain = float(rc @ (z_gt - z_gt.mean())) / sxx
    return gain, float(z_gt.mean() - gain * raw.mean())


def excitation_run(duration, cfg=PlantConfig(), rate_hz=100.0, z_lo=30.0, z_hi=80.0, period=8.0):
    """Drive the plant open loop with a sinusoidal pressure command; returns the states."""
    dt = 1.0 / rate_hz
    p_lo, p_hi = cfg.pressure_for(z_lo), cfg.pressure_for(z_hi)
    s = equilibrium(0.5 * (z_lo + z_hi), cfg)
    states = []
    for k in range(int(round(duration * rate_hz))):
        t = k * dt
        pc = p_lo + (p_hi - p_lo) * 0.5 * (1.0 + np.sin(2 * np.pi * t / period))
        s = step_plant(s, pc, dt, cfg)
        states.append(s)
    return states


def tof_baseline(seed=0, noise_sigma=1.0, duration=60.0, split_time=19.0, sample_hz=10.0, cfg=None):
    """Calibrate the ToF sensor on a pure-z run, then evaluate with and without lateral motion.

    Returns a dict with gain, offset and the RMSE of the two scenarios.
    """
    base = cfg or PlantConfig()
    stride = int(round(100.0 / sample_hz))
    calib = excitation_run(duration, replace(base, disturbance=()))[::stride]
    raw_c = simulate_tof(calib, noise_sigma, seed)
    gain, offset = calibrate_linear(raw_c, [s.z for s in calib])

    disturbed_cfg = replace(base, disturbance=default_disturbance(split_time, duration))
    run = excitation_run(duration, disturbed_cfg)[::stride]
    raw = simulate_tof(run, noise_sigma, seed + 1)
    z_tf = gain * raw + offset
    z_gt = np.array([s.z for s in run])
    t = np.array([s.time for s in run])
    first = t < split_time
    err = z_tf - z_gt
    return {
        "gain": gain,
        "offset": offset,
        "rmse_undisturbed": float(np.sqrt(np.mean(err[first] ** 2))),
        "rmse_disturbed": float(np.sqrt(np.mean(err[~first] ** 2))),
        "t": t,
        "z_gt": z_gt,
        "z_tf": z_tf,
    }


# --- dataset generation ---------------------------------------------------------

def _uniformize(s, sigma):
    return 2.0 * np.array([0.5 * (1.0 + erf(v / (sigma * sqrt(2.0)))) for v in s]) - 1.0


def pose_trajectory(n, workspace=Workspace(), seed=0, rate_hz=10.0, components=5,
                    f_lo=0.01, f_hi=0.15):
    """Smooth random trajectory sampled at ``rate_hz``; returns ``(t, xyz)``.

    Each axis is a sum of ``components`` sinusoids with amplitudes summing to
    one, squashed through the normal CDF so the marginal is close to uniform.
    The result stays strictly inside the workspace for every ``t``.
    """
    if n < 1:
        raise ParameterError("n must be at least 1")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A1]))
    t = np.arange(n) / rate_hz
    xyz = np.empty((n, 3))
    sigma = sqrt(0.5 / components)
    for i, name in enumerate(AXIS_NAMES):
        lo, hi = getattr(workspace, name)
        freq = rng.uniform(f_lo, f_hi, components)
        phase = rng.uniform(0, 2 * np.pi, components)
        s = np.sin(2 * np.pi * freq[None, :] * t[:, None] + phase[None, :]).sum(axis=1) / components
        xyz[:, i] = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _uniformize(s, sigma)
    return t, xyz


@dataclass(frozen=True)
class RenderSettings:
    spec: PatternSpec = field(default_factory=PatternSpec)
    dims: tuple = (640, 480)
    pattern_seed: int = 0
    noise_sigma: float = 2.0
    lighting_knee: float = 20.0


def iter_samples(n, workspace=Workspace(), render=RenderSettings(), seed=0, rate_hz=10.0):
    """Yield ``(timestamp, pose, image)`` along a seeded trajectory."""
    t, xyz = pose_trajectory(n, workspace, seed, rate_hz)
    for k in range(n):
        pose = Pose(float(xyz[k, 0]), float(xyz[k, 1]), float(xyz[k, 2]), float(t[k]))
        img = render_frame(pose, render.spec, render.dims, render.pattern_seed, frame=k,
                           noise_key=seed, noise_sigma=render.noise_sigma,
                           lighting_knee=render.lighting_knee)
        yield float(t[k]), pose, img


def generate_dataset(n, workspace=Workspace(), render=RenderSettings(), seed=0, rate_hz=10.0):
    """In-memory dataset along a seeded trajectory.  For large ``n`` stream
    :func:`iter_samples` into ``datastore.write_dataset`` instead."""
    from .datastore import Dataset

    ts, poses, images = [], [], []
    for t, pose, img in iter_samples(n, workspace, render, seed, rate_hz):
        ts.append(t)
        poses.append(pose.as_tuple())
        images.append(img)
    meta = {"width": render.dims[0], "height": render.dims[1], "rate_hz": rate_hz, "seed": seed,
            "pattern_seed": render.pattern_seed, "noise_sigma": render.noise_sigma, "count": n}
    return Dataset(images, ts, poses, meta)
