"""softcam command line: gen-data, train, eval, bench, tof-baseline, simulate.

Option precedence: built-in defaults, then ``--profile``, then the
``--config`` file (key=value lines), then explicit flags.  Every run writes
the resolved configuration to ``<out>/config.txt``.
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import __version__, control, datastore, plantsim, regression
from .features import extract_features
from .imaging import FilterConfig
from .pose import AXES

COMMON = {"seed": 0, "out": "out"}

DEFAULTS = {
    "gen-data": {"n": 9000, "n_test": 500, "width": 640, "height": 480, "rate_hz": 10.0,
                 "pattern_seed": 0, "noise_sigma": 2.0, "x_min": -15.0, "x_max": 15.0,
                 "y_min": -15.0, "y_max": 15.0, "z_min": 20.0, "z_max": 100.0},
    "train": {"data": "out/train", "s": 3, "grid": False, "folds": 5, "fixed": "",
              "grid_epsilon": "0.25,0.5,1.0,2.0", "grid_k": "10,50,100,200,400",
              "grid_gamma": "0.002,0.005,0.02,0.06,0.2", "tol": 1e-3, "max_iter": 1000000},
    "eval": {"model": "out/model.txt", "data": "out/test", "residuals": False},
    "bench": {"model": "out/model.txt", "frames": 1000, "axes": "x,y,z", "distinct": 50},
    "tof-baseline": {"noise_sigma": 1.0, "duration": 60.0, "split_time": 19.0},
    "simulate": {"model": "out/model.txt", "setpoints": "", "levels": "30,50,70,90,60,40",
                 "step_s": 8.0, "perfect_sensing": False, "position_hz": 50.0,
                 "pressure_hz": 100.0},
}

PROFILES = {
    "ci": {"gen-data": {"n": 500, "n_test": 100, "width": 160, "height": 120},
           "bench": {"frames": 200}},
    "paper": {},
}

HELP = {
    "gen-data": "render a training and a test dataset",
    "train": "train the three axis regressors",
    "eval": "per-axis RMSE of a model on a dataset",
    "bench": "latency of pose prediction from frames",
    "tof-baseline": "calibrate and evaluate the simulated ToF sensor",
    "simulate": "closed-loop elongation control run",
}


class UsageError(Exception):
    pass


def _convert(proto, raw, key):
    if isinstance(proto, bool):
        if isinstance(raw, bool):
            return raw
        v = str(raw).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return type(proto)(raw)
    except ValueError:
        raise UsageError(f"{key}: expected {type(proto).__name__}, got {raw!r}") from None


def read_config(path):
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    return datastore.read_meta(path)


def resolve(cmd, args):
    spec = dict(COMMON, **DEFAULTS[cmd])
    cfg = dict(spec)
    if args.profile:
        cfg.update(PROFILES[args.profile].get(cmd, {}))
    if args.config:
        for k, v in read_config(args.config).items():
            key = k.replace("-", "_")
            if key not in spec:
                raise UsageError(f"unknown config key {k!r} for {cmd}")
            cfg[key] = _convert(spec[key], v, key)
    for key in spec:
        v = getattr(args, key, None)
        if v is not None:
            cfg[key] = _convert(spec[key], v, key)
    return cfg


def _floats(s, key):
    try:
        return [float(v) for v in s.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{key}: expected comma-separated numbers, got {s!r}") from None


def _axes(s):
    axes = tuple(a.strip() for a in s.split(",") if a.strip())
    if not axes or not set(axes) <= set(AXES):
        raise UsageError(f"axes must be drawn from x,y,z, got {s!r}")
    return axes


def echo_config(cmd, cfg):
    os.makedirs(cfg["out"], exist_ok=True)
    datastore.write_meta(os.path.join(cfg["out"], "config.txt"), dict(cfg, command=cmd, version=__version__))


def _render_settings(meta):
    return plantsim.RenderSettings(dims=(int(meta["width"]), int(meta["height"])),
                                   pattern_seed=int(meta.get("pattern_seed", 0)),
                                   noise_sigma=float(meta.get("noise_sigma", 2.0)))


def _features(ds, s, cfg=FilterConfig()):
    out = np.empty((len(ds), 6 * s * s))
    for i in range(len(ds)):
        out[i] = extract_features(ds.images[i], cfg, s)
    return out


def cmd_gen_data(cfg):
    ws = plantsim.Workspace((cfg["x_min"], cfg["x_max"]), (cfg["y_min"], cfg["y_max"]),
                            (cfg["z_min"], cfg["z_max"]))
    rs = plantsim.RenderSettings(dims=(cfg["width"], cfg["height"]), pattern_seed=cfg["pattern_seed"],
                                 noise_sigma=cfg["noise_sigma"])
    # the test trajectory uses its own seed so it never repeats training poses
    for name, n, seed in (("train", cfg["n"], cfg["seed"]), ("test", cfg["n_test"], cfg["seed"] + 1)):
        if n < 1:
            continue
        d = os.path.join(cfg["out"], name)
        meta = {"rate_hz": cfg["rate_hz"], "seed": seed, "pattern_seed": cfg["pattern_seed"],
                "noise_sigma": cfg["noise_sigma"], "workspace": f"{ws.x} {ws.y} {ws.z}"}
        datastore.write_dataset(d, plantsim.iter_samples(n, ws, rs, seed, cfg["rate_hz"]), meta)
        print(f"{name}: {n} samples in {d} sha256={datastore.dataset_hash(d)}")


def cmd_train(cfg):
    ds = datastore.load_dataset(cfg["data"], lazy=True)
    if len(ds) < 2:
        raise UsageError(f"dataset {cfg['data']} has fewer than two samples")
    t0 = time.perf_counter()
    feats = _features(ds, cfg["s"])
    t_feat = time.perf_counter() - t0
    if cfg["grid"]:
        grid = regression.make_grid(_floats(cfg["grid_epsilon"], "grid_epsilon"),
                                    _floats(cfg["grid_k"], "grid_k"), _floats(cfg["grid_gamma"], "grid_gamma"))
        report = regression.cross_validate(feats, ds.poses, grid, cfg["folds"], cfg["seed"],
                                           cfg["tol"], cfg["max_iter"])
        report.write_csv(os.path.join(cfg["out"], "cv_report.csv"))
        hps = report.best
    elif cfg["fixed"]:
        v = _floats(cfg["fixed"], "fixed")
        if len(v) != 3:
            raise UsageError("fixed: expected epsilon,K,gamma")
        hps = {a: regression.SvrHyperparams(*v) for a in AXES}
    else:
        hps = dict(regression.TABLE_I)
    t1 = time.perf_counter()
    dims = (int(ds.meta["width"]), int(ds.meta["height"]))
    pm = regression.train_pose_model(feats, ds.poses, hps, cfg["s"], dims=dims,
                                     tol=cfg["tol"], max_iter=cfg["max_iter"])
    t_train = time.perf_counter() - t1
    path = os.path.join(cfg["out"], "model.txt")
    datastore.save_model(pm, path)
    for a in AXES:
        hp = hps[a]
        print(f"{a}: epsilon={hp.epsilon:g} K={hp.K:g} gamma={hp.gamma:g} "
              f"support_vectors={len(pm.models[a].dual_coefs)}")
    print(f"features {t_feat:.2f} s, training {t_train:.2f} s, model written to {path}")


def rmse_per_axis(pred, gt):
    return np.sqrt(np.mean((np.asarray(pred) - np.asarray(gt)) ** 2, axis=0))


def cmd_eval(cfg):
    pm = datastore.load_model(cfg["model"])
    ds = datastore.load_dataset(cfg["data"], lazy=True)
    dims = (int(ds.meta["width"]), int(ds.meta["height"]))
    if dims != tuple(pm.dims):
        raise UsageError(f"dataset is {dims[0]}x{dims[1]} but the model expects {pm.dims[0]}x{pm.dims[1]}")
    pred = regression.predict_many(pm, _features(ds, pm.s, pm.filter_config))
    rmse = rmse_per_axis(pred, ds.poses)
    with open(os.path.join(cfg["out"], "rmse.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axis", "rmse_mm", "n"])
        for a, v in zip(AXES, rmse):
            w.writerow([a, repr(float(v)), len(ds)])
    if cfg["residuals"]:
        with open(os.path.join(cfg["out"], "residuals.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["timestamp_s", "dx_mm", "dy_mm", "dz_mm"])
            for t, r in zip(ds.timestamps, pred - ds.poses):
                w.writerow([f"{t:.6f}"] + [repr(float(v)) for v in r])
    print("RMSE " + "  ".join(f"{a}={v:.3f} mm" for a, v in zip(AXES, rmse)) + f"  (n={len(ds)})")


def bench_latency(pm, frames, n, axes):
    """Per-call latency in seconds of ``predict_pose`` cycling through ``frames``."""
    regression.predict_pose(pm, frames[0], axes)  # warm-up
    lat = np.empty(n)
    for i in range(n):
        img = frames[i % len(frames)]
        t0 = time.perf_counter()
        regression.predict_pose(pm, img, axes)
        lat[i] = time.perf_counter() - t0
    return lat


def latency_summary(lat):
    mean = float(lat.mean())
    return {"mean_ms": 1e3 * mean, "p95_ms": 1e3 * float(np.percentile(lat, 95)),
            "p99_ms": 1e3 * float(np.percentile(lat, 99)), "rate_hz": 1.0 / mean}


def cmd_bench(cfg):
    pm = datastore.load_model(cfg["model"])
    axes = _axes(cfg["axes"])
    # frames are rendered up front; rendering is not part of the measured path
    k = max(1, min(cfg["distinct"], cfg["frames"]))
    _, xyz = plantsim.pose_trajectory(k, seed=cfg["seed"])
    rs = plantsim.RenderSettings(dims=tuple(pm.dims))
    frames = [plantsim.render_frame(plantsim.Pose(*p), rs.spec, rs.dims, frame=i, noise_key=cfg["seed"])
              for i, p in enumerate(xyz)]
    s = latency_summary(bench_latency(pm, frames, cfg["frames"], axes))
    with open(os.path.join(cfg["out"], "bench.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["axes", "frames", "width", "height", "s"] + list(s))
        w.writerow([",".join(axes), cfg["frames"], pm.dims[0], pm.dims[1], pm.s] + [f"{v:.4f}" for v in s.values()])
    print(f"{pm.dims[0]}x{pm.dims[1]} S={pm.s} axes={','.join(axes)}: mean {s['mean_ms']:.2f} ms, "
          f"p95 {s['p95_ms']:.2f} ms, p99 {s['p99_ms']:.2f} ms, {s['rate_hz']:.1f} Hz")


def cmd_tof_baseline(cfg):
    r = plantsim.tof_baseline(cfg["seed"], cfg["noise_sigma"], cfg["duration"], cfg["split_time"])
    with open(os.path.join(cfg["out"], "tof_baseline.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "rmse_mm"])
        w.writerow(["undisturbed", repr(r["rmse_undisturbed"])])
        w.writerow(["disturbed", repr(r["rmse_disturbed"])])
    with open(os.path.join(cfg["out"], "tof_trace.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t_s", "z_gt_mm", "z_tf_mm"])
        for row in zip(r["t"], r["z_gt"], r["z_tf"]):
            w.writerow([repr(float(v)) for v in row])
    print(f"calibration gain={r['gain']:.6f} offset={r['offset']:.4f}")
    print(f"undisturbed RMSE {r['rmse_undisturbed']:.3f} mm")
    print(f"disturbed RMSE {r['rmse_disturbed']:.3f} mm")


def cmd_simulate(cfg):
    if cfg["setpoints"]:
        sp = control.read_setpoints(cfg["setpoints"])
    else:
        sp = control.staircase(_floats(cfg["levels"], "levels"), cfg["step_s"])
    pm = None
    dims = (640, 480)
    if not cfg["perfect_sensing"]:
        pm = datastore.load_model(cfg["model"])
        dims = tuple(pm.dims)
    rates = control.LoopRates(cfg["position_hz"], cfg["pressure_hz"])
    log = control.run_closed_loop(sp, pm, rates=rates, render=plantsim.RenderSettings(dims=dims),
                                  seed=cfg["seed"], perfect_sensing=cfg["perfect_sensing"])
    if not np.all(np.isfinite(np.column_stack(log.columns()))):
        raise RuntimeError("closed-loop run produced non-finite values")
    path = os.path.join(cfg["out"], "trajectory.csv")
    log.write_csv(path)
    print(f"RMSE z_CM vs z_GT {log.rmse_sensing():.3f} mm, z_GT vs z_SP {log.rmse_tracking():.3f} mm; log in {path}")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench,
            "tof-baseline": cmd_tof_baseline, "simulate": cmd_simulate}


def build_parser():
    p = argparse.ArgumentParser(prog="softcam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for cmd, opts in DEFAULTS.items():
        sp = sub.add_parser(cmd, help=HELP[cmd])
        sp.add_argument("--config", help="key=value file; keys are the long option names")
        sp.add_argument("--profile", choices=sorted(PROFILES), help="named preset, e.g. ci")
        for key, proto in dict(COMMON, **opts).items():
            flag = "--" + key.replace("_", "-")
            if isinstance(proto, bool):
                sp.add_argument(flag, dest=key, action="store_const", const=True, default=None,
                                help=f"(default {proto})")
            else:
                sp.add_argument(flag, dest=key, default=None, help=f"(default {proto})")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args.command, args)
        echo_config(args.command, cfg)
        COMMANDS[args.command](cfg)
    except KeyboardInterrupt:
        print("softcam: interrupted", file=sys.stderr)
        return 130
    except Exception as e:  # one-line diagnostic, nonzero exit
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"softcam {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
