import numpy as np
import pytest
from hypothesis import given, strategies as st

from softcam import plantsim as ps
from softcam.errors import ParameterError
from softcam.features import extract_features
from softcam.pose import Pose

DIMS = (160, 120)


def test_render_deterministic():
    p = Pose(3.0, -4.0, 55.0)
    a = ps.render_frame(p, dims=DIMS, seed=2, frame=7)
    assert np.array_equal(a, ps.render_frame(p, dims=DIMS, seed=2, frame=7))
    assert not np.array_equal(a, ps.render_frame(p, dims=DIMS, seed=2, frame=8))
    assert a.dtype == np.uint8 and a.shape == (120, 160)


def test_centered_pose_is_symmetric():
    cov = ps.render_coverage(Pose(0.0, 0.0, 40.0), dims=(200, 200))
    # mass centroid at the image center, up to dot and dash jitter
    yy, xx = np.mgrid[0:200, 0:200]
    cx = (cov * xx).sum() / cov.sum()
    cy = (cov * yy).sum() / cov.sum()
    assert abs(cx - 99.5) < 2 and abs(cy - 99.5) < 2
    moved = ps.render_coverage(Pose(10.0, 0.0, 40.0), dims=(200, 200))
    assert (moved * xx).sum() / moved.sum() > cx + 2


def test_outer_ring_shrinks_with_z():
    zs = np.linspace(20, 100, 10)
    r = [ps.ring_image_radii(Pose(2.0, 1.0, z), dims=DIMS)[0] for z in zs]
    assert np.all(np.diff(r) < 0)


def test_frustum():
    for p in (Pose(0, 0, -1.0), Pose(50.0, 0, 40), Pose(0, 0, float("nan"))):
        with pytest.raises(ParameterError):
            ps.render_frame(p, dims=DIMS)


def test_lighting_knee_dims_low_z():
    lo = ps.render_frame(Pose(0, 0, 5.0), dims=DIMS, noise_sigma=0)
    hi = ps.render_frame(Pose(0, 0, 25.0), dims=DIMS, noise_sigma=0)
    assert lo.max() <= 255 * 5 / 20 + 1 and hi.max() == 255


def test_observability_over_pose_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        x, y = rng.uniform(-15, 15, 2)
        z = rng.uniform(20, 99)
        dz = rng.uniform(1, 100 - z) if z < 99 else 1.0
        a = extract_features(ps.render_frame(Pose(x, y, z), dims=DIMS, noise_sigma=0))
        b = extract_features(ps.render_frame(Pose(x, y, min(z + dz, 100.0)), dims=DIMS, noise_sigma=0))
        assert np.linalg.norm(a - b) > 0


def test_pattern_spec_validation():
    with pytest.raises(ParameterError):
        ps.PatternSpec(ring_radii=(14.0, 10.0, 38.0, 50.0))
    with pytest.raises(ParameterError):
        ps.PatternSpec(dot_diameter=0.0)


# --- plant --------------------------------------------------------------------

def test_equilibrium_fixed_point():
    cfg = ps.PlantConfig()
    s = ps.equilibrium(50.0, cfg)
    s2 = ps.step_plant(s, s.pressure, 0.01, cfg)
    assert abs(s2.pressure - s.pressure) < 1e-12 and abs(s2.z - s.z) < 1e-12


def test_pressure_first_order():
    cfg = ps.PlantConfig()
    s = ps.PlantState()
    for _ in range(25):
        s = ps.step_plant(s, 0.004, 0.01, cfg)  # 5 time constants
    assert abs(s.pressure - 0.004) <= 0.01 * 0.004


def test_map_anchor():
    # about 0.002 bar holds roughly 50 mm
    assert abs(ps.PlantConfig().elongation(0.002) - 50.0) < 1e-9


def test_linear_map_closed_form():
    cfg = ps.PlantConfig(map_pressure=(0.0, 0.02), map_z=(0.0, 100.0))
    s = ps.PlantState(pressure=0.01, z=10.0)
    zs = []
    for k in range(1, 101):
        s = ps.step_plant(s, 0.01, 0.02, cfg)
        zs.append(s.z)
        assert abs(s.z - (50 - 40 * np.exp(-0.02 * k / cfg.elongation_tau))) < 1e-9
    assert np.all(np.diff(zs) > 0)


def test_command_clamped():
    cfg = ps.PlantConfig()
    s = ps.step_plant(ps.PlantState(), 1.0, 1.0, cfg)
    assert s.pressure <= cfg.p_max
    s = ps.step_plant(ps.PlantState(pressure=0.003), -1.0, 1.0, cfg)
    assert s.pressure >= 0


def test_disturbance_applied():
    cfg = ps.PlantConfig(disturbance=((0.0, 0.0, 0.0), (1.0, 10.0, -4.0)))
    s = ps.step_plant(ps.PlantState(), 0.0, 0.5, cfg)
    assert (s.x, s.y) == (5.0, -2.0)


def test_integrator_convergence_order():
    # halving dt twice: error ratio shows at least first-order convergence
    cfg = ps.PlantConfig()

    def run(dt):
        s = ps.PlantState()
        t = 0.0
        while t < 1.0 - 1e-12:
            s = ps.step_plant(s, 0.003 + 0.002 * np.sin(5 * t), dt, cfg)
            t += dt
        return s.z

    z1, z2, z3 = run(0.02), run(0.01), run(0.005)
    order = np.log2(abs(z1 - z2) / abs(z2 - z3))
    assert order >= 0.9


def test_bad_dt():
    with pytest.raises(ParameterError):
        ps.step_plant(ps.PlantState(), 0.0, 0.0)


# --- ToF ----------------------------------------------------------------------

def test_tof_affine_in_z_without_lateral():
    states = [ps.PlantState(z=z) for z in np.linspace(10, 90, 9)]
    raw = ps.simulate_tof(states, noise_sigma=0)
    assert np.allclose(np.diff(raw, 2), 0, atol=1e-12)


def test_tof_grows_with_lateral():
    raw = ps.simulate_tof([ps.PlantState(z=40.0, x=x) for x in (0.0, 5.0, 10.0, 20.0)], noise_sigma=0)
    assert np.all(np.diff(raw) > 0)


def test_calibration_examples():
    z = np.linspace(0, 50, 11)
    g, o = ps.calibrate_linear(z, z)
    assert abs(g - 1) < 1e-9 and abs(o) < 1e-9
    g, o = ps.calibrate_linear(2 * z + 3, z)
    assert abs(g - 0.5) < 1e-9 and abs(o + 1.5) < 1e-9
    with pytest.raises(ParameterError):
        ps.calibrate_linear(np.ones(5), z[:5])


def test_calibration_noisy_within_standard_errors():
    rng = np.random.default_rng(0)
    raw = rng.uniform(0, 100, 1000)
    z = 0.7 * raw - 4.0 + rng.normal(scale=2.0, size=1000)
    g, o = ps.calibrate_linear(raw, z)
    sxx = ((raw - raw.mean()) ** 2).sum()
    se_g = 2.0 / np.sqrt(sxx)
    se_o = 2.0 * np.sqrt(1 / 1000 + raw.mean() ** 2 / sxx)
    assert abs(g - 0.7) < 3 * se_g and abs(o + 4.0) < 3 * se_o


def test_tof_error_follows_lateral_offset():
    # calibrated on pure z, the error is gain * (|r| - z)
    states = [ps.PlantState(z=z) for z in np.linspace(20, 80, 30)]
    g, o = ps.calibrate_linear(ps.simulate_tof(states, 0), [s.z for s in states])
    errs = []
    for d in (0.0, 10.0, 20.0):
        s = ps.PlantState(z=50.0, x=d)
        errs.append(g * ps.simulate_tof(s, 0) + o - 50.0)
        assert abs(errs[-1] - (np.hypot(50.0, d) - 50.0)) < 1e-9
    assert errs[0] < errs[1] < errs[2]


def test_tof_degradation():
    r = ps.tof_baseline(seed=3)
    assert r["rmse_disturbed"] > r["rmse_undisturbed"]
    assert ps.tof_baseline(seed=3, noise_sigma=0)["rmse_undisturbed"] < 1e-6


# --- dataset generation -------------------------------------------------------

def test_trajectory_in_workspace_long_run():
    ws = ps.Workspace()
    _, xyz = ps.pose_trajectory(1_000_000, ws, seed=9)
    for i, name in enumerate("xyz"):
        lo, hi = getattr(ws, name)
        assert xyz[:, i].min() > lo and xyz[:, i].max() < hi


@given(st.integers(0, 2**32 - 1))
def test_trajectory_seeded(seed):
    a = ps.pose_trajectory(50, seed=seed)[1]
    assert np.array_equal(a, ps.pose_trajectory(50, seed=seed)[1])


def test_generate_dataset():
    rs = ps.RenderSettings(dims=(48, 32))
    ds = ps.generate_dataset(5, render=rs, seed=1)
    assert len(ds) == 5 and ds.images[0].shape == (32, 48)
    assert np.allclose(np.diff(ds.timestamps), 0.1)
    with pytest.raises(ParameterError):
        ps.generate_dataset(0)
    with pytest.raises(ParameterError):
        ps.Workspace(z=(50.0, 50.0))
