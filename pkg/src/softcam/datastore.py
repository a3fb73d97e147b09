"""Dataset and model persistence.

A dataset directory holds numbered PGM frames, ``index.csv`` and
``meta.txt``.  A model is a single line-oriented text file.
"""

import csv
import hashlib
import os
from dataclasses import dataclass, field, fields
from typing import Dict, Sequence

import numpy as np

from . import pnm
from .errors import DimensionError, FormatError, ParameterError
from .features import BLOCK_ORDER, Normalizer, feature_length
from .imaging import FilterConfig, check_gray
from .pose import AXES, Pose
from .regression import PoseModel, SvrHyperparams, SvrModel

INDEX_COLUMNS = ["filename", "timestamp_s", "x_mm", "y_mm", "z_mm"]
MODEL_MAGIC = "softcam-model"
MODEL_VERSION = 1


class LazyImages(Sequence):
    """Frames read from disk on access."""

    def __init__(self, paths):
        self.paths = list(paths)

    def __len__(self):
        return len(self.paths)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return LazyImages(self.paths[i])
        return pnm.read_pnm(self.paths[i])


@dataclass
class Dataset:
    images: Sequence  # uint8 (height, width) frames, or a LazyImages
    timestamps: np.ndarray
    poses: np.ndarray  # (n, 3) mm, columns x, y, z
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64).reshape(-1)
        self.poses = np.asarray(self.poses, dtype=np.float64).reshape(-1, 3)
        if not len(self.images) == len(self.timestamps) == len(self.poses):
            raise DimensionError("images, timestamps and poses differ in length")

    def __len__(self):
        return len(self.timestamps)

    def pose(self, i):
        x, y, z = self.poses[i]
        return Pose(float(x), float(y), float(z), float(self.timestamps[i]))

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if isinstance(self.images, LazyImages):
            imgs = LazyImages([self.images.paths[i] for i in idx])
        else:
            imgs = [self.images[i] for i in idx]
        return Dataset(imgs, self.timestamps[idx], self.poses[idx], dict(self.meta))


def _check_pose_row(x, y, z, where):
    if not all(np.isfinite(v) for v in (x, y, z)):
        raise FormatError(f"{where}: non-finite pose")
    if z < 0:
        raise FormatError(f"{where}: negative elongation {z}")


def write_meta(path, meta):
    with open(path, "w") as fh:
        for k in sorted(meta):
            v = str(meta[k])
            if "\n" in v or "=" in k:
                raise FormatError(f"meta entry {k!r} is not representable")
            fh.write(f"{k}={v}\n")


def read_meta(path):
    meta = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    return meta


def frame_name(i):
    return f"frame_{i:06d}.pgm"


def write_dataset(directory, samples, meta=None):
    """Stream ``(timestamp, pose, image)`` triples to ``directory``.

    Frames are written as they arrive, so the full set never sits in memory.
    Returns the number of samples written.
    """
    os.makedirs(directory, exist_ok=True)
    meta = dict(meta or {})
    dims = None
    last_t = -np.inf
    n = 0
    with open(os.path.join(directory, "index.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INDEX_COLUMNS)
        for t, pose, img in samples:
            img = check_gray(img)
            if dims is None:
                dims = img.shape
            elif img.shape != dims:
                raise DimensionError(f"frame {n} is {img.shape[1]}x{img.shape[0]}, expected {dims[1]}x{dims[0]}")
            if not t > last_t:
                raise FormatError(f"timestamps must increase strictly (frame {n})")
            last_t = t
            x, y, z = (float(v) for v in pose.as_tuple())
            _check_pose_row(x, y, z, f"frame {n}")
            name = frame_name(n)
            pnm.write_pnm(os.path.join(directory, name), img)
            w.writerow([name, f"{t:.6f}", f"{x:.6f}", f"{y:.6f}", f"{z:.6f}"])
            n += 1
    if dims is not None:
        meta["width"], meta["height"] = dims[1], dims[0]
    meta["count"] = n
    write_meta(os.path.join(directory, "meta.txt"), meta)
    return n


def save_dataset(ds, directory):
    samples = ((float(ds.timestamps[i]), ds.pose(i), ds.images[i]) for i in range(len(ds)))
    return write_dataset(directory, samples, ds.meta)


def read_index(directory):
    path = os.path.join(directory, "index.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing index file {path}")
    names, rows = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != INDEX_COLUMNS:
            raise FormatError(f"{path}: header must be {','.join(INDEX_COLUMNS)}")
        for n, row in enumerate(r, 2):
            if not row:
                continue
            if len(row) != 5:
                raise FormatError(f"{path}:{n}: expected 5 columns")
            try:
                vals = [float(v) for v in row[1:]]
            except ValueError as e:
                raise FormatError(f"{path}:{n}: {e}") from None
            _check_pose_row(*vals[1:], f"{path}:{n}")
            names.append(row[0])
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(-1, 4)
    if np.any(np.diff(arr[:, 0]) <= 0):
        raise FormatError(f"{path}: timestamps are not strictly increasing")
    return names, arr


def load_dataset(directory, lazy=False):
    """Read and validate a dataset directory.

    With ``lazy`` the frames are only checked for existence and the header
    of the first one; pixels are read on access.
    """
    names, arr = read_index(directory)
    meta_path = os.path.join(directory, "meta.txt")
    meta = read_meta(meta_path) if os.path.exists(meta_path) else {}
    paths = [os.path.join(directory, nm) for nm in names]
    for p in paths:
        if not os.path.exists(p):
            raise FileNotFoundError(f"index references missing image {p}")
    want = None
    if "width" in meta and "height" in meta:
        want = (int(meta["height"]), int(meta["width"]))
    if lazy:
        images = LazyImages(paths)
        check = paths[:1]
    else:
        images = [pnm.read_pnm(p) for p in paths]
        check = None
    for i, img in enumerate(images if check is None else [pnm.read_pnm(p) for p in check]):
        if img.ndim != 2:
            raise DimensionError(f"{paths[i]} is not grayscale")
        if want is None:
            want = img.shape
        elif img.shape != want:
            raise DimensionError(
                f"{paths[i]} is {img.shape[1]}x{img.shape[0]}, expected {want[1]}x{want[0]}")
    return Dataset(images, arr[:, 0], arr[:, 1:], meta)


def dataset_hash(directory):
    """SHA-256 over the index, the meta file and every frame, in index order."""
    h = hashlib.sha256()
    names, _ = read_index(directory)
    for name in ["index.csv", "meta.txt"] + names:
        p = os.path.join(directory, name)
        if not os.path.exists(p):
            continue
        h.update(name.encode() + b"\0")
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def split(ds, train_fraction, seed=0):
    """Seeded shuffle, then the first ``round(fraction * n)`` samples train.

    Each part keeps its original temporal order.
    """
    if not 0 < train_fraction < 1:
        raise ParameterError(f"train fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    perm = np.random.default_rng(seed).permutation(n)
    k = int(round(train_fraction * n))
    return ds.subset(np.sort(perm[:k])), ds.subset(np.sort(perm[k:]))


# --- model files -----------------------------------------------------------------

def _fmt(v):
    return repr(float(v))


def _vec(a):
    return " ".join(_fmt(v) for v in a)


def save_model(pm, path):
    lines = [MODEL_MAGIC, f"version={MODEL_VERSION}", f"s={pm.s}",
             f"dims={pm.dims[0]} {pm.dims[1]}", f"block_order={pm.block_order}"]
    for k, v in pm.filter_config.to_dict().items():
        lines.append(f"filter.{k}={v!r}")
    norm = pm.normalizer
    lines += [f"normalizer.length={len(norm)}", f"normalizer.mean={_vec(norm.mean)}",
              f"normalizer.std={_vec(norm.std)}"]
    # K is the box constraint on each dual coefficient
    for a in AXES:
        m = pm.models[a]
        hp = m.hyperparams
        lines += [f"axis={a}", f"epsilon={_fmt(hp.epsilon)}", f"K={_fmt(hp.K)}",
                  f"gamma={_fmt(hp.gamma)}", f"bias={_fmt(m.bias)}",
                  f"n_sv={len(m.dual_coefs)}", f"coefs={_vec(m.dual_coefs)}"]
        lines += [f"sv={_vec(row)}" for row in m.support_vectors]
    lines.append("end")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


class _Reader:
    def __init__(self, path):
        with open(path) as fh:
            self.lines = fh.read().splitlines()
        self.path = path
        self.pos = 0

    def take(self, key):
        if self.pos >= len(self.lines):
            raise FormatError(f"{self.path}: truncated, expected {key}")
        line = self.lines[self.pos]
        k, sep, v = line.partition("=")
        if not sep or k != key:
            raise FormatError(f"{self.path}:{self.pos + 1}: expected {key}=..., got {line[:40]!r}")
        self.pos += 1
        return v

    def floats(self, key, n):
        v = self.take(key)
        try:
            arr = np.array([float(t) for t in v.split()], dtype=np.float64)
        except ValueError:
            raise FormatError(f"{self.path}:{self.pos}: bad number in {key}") from None
        if len(arr) != n:
            raise FormatError(f"{self.path}:{self.pos}: {key} has {len(arr)} values, expected {n}")
        return arr


def load_model(path):
    r = _Reader(path)
    if not r.lines or r.lines[0] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file")
    r.pos = 1
    version = r.take("version")
    if version != str(MODEL_VERSION):
        raise FormatError(f"{path}: unsupported model version {version}")
    try:
        s = int(r.take("s"))
        dims = tuple(int(v) for v in r.take("dims").split())
    except ValueError:
        raise FormatError(f"{path}: bad header value") from None
    order = r.take("block_order")
    if order != BLOCK_ORDER:
        raise FormatError(f"{path}: block order {order!r} is incompatible with {BLOCK_ORDER!r}")
    cfg = {}
    for f in fields(FilterConfig):
        raw = r.take(f"filter.{f.name}")
        try:
            cfg[f.name] = int(raw) if f.type in (int, "int") else float(raw)
        except ValueError:
            raise FormatError(f"{path}: bad filter value {f.name}={raw}") from None
    filter_config = FilterConfig(**cfg)
    length = int(r.take("normalizer.length"))
    if length != feature_length(s):
        raise FormatError(f"{path}: normalizer length {length} does not match s={s}")
    norm = Normalizer(r.floats("normalizer.mean", length), r.floats("normalizer.std", length))
    models = {}
    for a in AXES:
        if r.take("axis") != a:
            raise FormatError(f"{path}: axes out of order, expected {a}")
        hp = SvrHyperparams(*(float(r.take(k)) for k in ("epsilon", "K", "gamma")))
        bias = float(r.take("bias"))
        n_sv = int(r.take("n_sv"))
        coefs = r.floats("coefs", n_sv)
        sv = np.empty((n_sv, length))
        for i in range(n_sv):
            sv[i] = r.floats("sv", length)
        models[a] = SvrModel(sv, coefs, bias, hp, norm, a)
    if r.pos >= len(r.lines) or r.lines[r.pos] != "end":
        raise FormatError(f"{path}: missing end marker")
    return PoseModel(models, s, filter_config, dims, order)
