"""Epsilon-insensitive support vector regression with an RBF kernel.

Three independent regressors map the normalized feature vector to the x, y
and z components of the tracked point.  Targets stay in millimetres; only
the features are normalized.
"""

import csv
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from . import _smo
from .errors import ConvergenceError, DimensionError, ParameterError
from .features import BLOCK_ORDER, Normalizer, extract_features, fit_normalizer
from .imaging import FilterConfig, check_gray
from .pose import AXES, Pose

log = logging.getLogger(__name__)

FULL_GRAM_LIMIT = 10000
DEFAULT_CACHE_ROWS = 2000


@dataclass(frozen=True, order=True)
class SvrHyperparams:
    epsilon: float
    K: float
    gamma: float

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ParameterError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.K > 0:
            raise ParameterError(f"K must be > 0, got {self.K}")
        if not self.gamma > 0:
            raise ParameterError(f"gamma must be > 0, got {self.gamma}")


# Cross-validated hyperparameters for a 3x3 pooling grid.
TABLE_I = {
    "x": SvrHyperparams(0.96, 112.5, 0.060),
    "y": SvrHyperparams(0.96, 112.5, 0.060),
    "z": SvrHyperparams(1.00, 189.0, 0.005),
}

DEFAULT_GRID = {
    "epsilon": (0.25, 0.5, 1.0, 2.0),
    "K": (10.0, 50.0, 100.0, 200.0, 400.0),
    "gamma": (0.002, 0.005, 0.02, 0.06, 0.2),
}


def make_grid(epsilon=DEFAULT_GRID["epsilon"], K=DEFAULT_GRID["K"], gamma=DEFAULT_GRID["gamma"]):
    return [SvrHyperparams(e, k, g) for e in epsilon for k in K for g in gamma]


def rbf_kernel(a, b, gamma):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"vector lengths differ: {a.shape} vs {b.shape}")
    d = a - b
    return float(np.exp(-gamma * (d @ d)))


def sq_distances(a, b):
    """Pairwise squared Euclidean distances, clamped at zero."""
    d = a @ b.T
    d *= -2.0
    d += np.einsum("ij,ij->i", a, a)[:, None]
    d += np.einsum("ij,ij->i", b, b)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def rbf_gram(a, b, gamma):
    g = sq_distances(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64))
    g *= -gamma
    np.exp(g, out=g)
    return g


def dual_objective(gram, y, alpha, alpha_star, epsilon):
    """Value of the maximized dual at ``(alpha, alpha_star)``."""
    coef = alpha - alpha_star
    return float(-0.5 * coef @ gram @ coef - epsilon * np.sum(alpha + alpha_star) + y @ coef)


@dataclass
class SvrFit:
    """Full solver output, including the dual variables on every training point."""

    alpha: np.ndarray
    alpha_star: np.ndarray
    bias: float
    iterations: int
    violation: float
    train_pred: np.ndarray

    @property
    def coef(self):
        return self.alpha - self.alpha_star


def solve_dual(x, y, hp, tol=1e-3, max_iter=1_000_000, gram=None, cache_rows=DEFAULT_CACHE_ROWS):
    """Run SMO on normalized features ``x`` and targets ``y``.

    ``gram`` may be a precomputed kernel matrix for ``x``.  Without it the
    full matrix is built when ``n <= 10000``, otherwise rows are computed on
    demand through an LRU cache of ``cache_rows`` rows.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionError(f"features {x.shape} and targets {y.shape} do not match")
    n = x.shape[0]
    if n < 2:
        raise ParameterError("need at least two training samples")
    sqn = np.einsum("ij,ij->i", x, x)
    if gram is not None:
        if gram.shape != (n, n):
            raise DimensionError(f"gram matrix {gram.shape} does not match n={n}")
        precomputed = True
    elif n <= FULL_GRAM_LIMIT:
        gram = rbf_gram(x, x, hp.gamma)
        np.fill_diagonal(gram, 1.0)
        precomputed = True
    else:
        gram = np.empty((max(2, min(cache_rows, n)), n))
        precomputed = False
    alpha, astar, f, bias, it, viol, status = _smo.smo(
        x, sqn, y, float(hp.epsilon), float(hp.K), float(hp.gamma), float(tol), int(max_iter),
        gram, precomputed)
    if status != _smo.OK:
        raise ConvergenceError(
            f"SMO stopped after {it} iterations with KKT violation {viol:.3g} (tol {tol:g})", viol)
    return SvrFit(alpha, astar, float(bias), int(it), float(viol), f + bias)


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    hyperparams: SvrHyperparams
    normalizer: Optional[Normalizer] = None
    axis: str = "z"
    sv_sqnorm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sv = np.asarray(self.support_vectors, dtype=np.float64)
        if sv.ndim != 2:
            d = len(self.normalizer) if self.normalizer is not None else 0
            sv = sv.reshape(len(self.dual_coefs), -1) if sv.size else sv.reshape(0, d)
        object.__setattr__(self, "support_vectors", sv)
        object.__setattr__(self, "dual_coefs", np.asarray(self.dual_coefs, dtype=np.float64))
        object.__setattr__(self, "sv_sqnorm", np.einsum("ij,ij->i", sv, sv))
        if self.axis not in AXES:
            raise ParameterError(f"axis must be one of {AXES}, got {self.axis!r}")

    @property
    def n_features(self):
        if self.normalizer is not None:
            return len(self.normalizer)
        return self.support_vectors.shape[1]

    def decision(self, xn):
        """Predictions for normalized features ``xn`` (one vector or a batch)."""
        xn = np.asarray(xn, dtype=np.float64)
        single = xn.ndim == 1
        xb = np.atleast_2d(xn)
        if xb.shape[1] != self.n_features:
            raise DimensionError(f"feature length {xb.shape[1]} != model length {self.n_features}")
        if len(self.dual_coefs) == 0:
            out = np.full(xb.shape[0], self.bias)
        else:
            d = self.sv_sqnorm[None, :] - 2.0 * (xb @ self.support_vectors.T)
            d += np.einsum("ij,ij->i", xb, xb)[:, None]
            np.maximum(d, 0.0, out=d)
            out = np.exp(-self.hyperparams.gamma * d) @ self.dual_coefs + self.bias
        return float(out[0]) if single else out


def train_svr(x, y, hp, tol=1e-3, max_iter=1_000_000, normalizer=None, axis="z", gram=None):
    """Train one regressor on normalized features; keeps only nonzero dual coefficients."""
    fit = solve_dual(x, y, hp, tol, max_iter, gram)
    coef = fit.coef
    sv = coef != 0.0
    return SvrModel(np.asarray(x)[sv], coef[sv], fit.bias, hp, normalizer, axis)


def predict(m, mu_norm):
    return m.decision(mu_norm)


@dataclass(frozen=True)
class PoseModel:
    models: Dict[str, SvrModel]
    s: int
    filter_config: FilterConfig
    dims: tuple  # (width, height) of the training images
    block_order: str = BLOCK_ORDER

    def __post_init__(self):
        if set(self.models) != set(AXES):
            raise ParameterError(f"need one model per axis {AXES}")
        first = self.models["x"].normalizer
        for m in self.models.values():
            if m.normalizer is None or not (
                np.array_equal(m.normalizer.mean, first.mean) and np.array_equal(m.normalizer.std, first.std)
            ):
                raise ParameterError("all axis models must share one normalizer")
        if self.block_order != BLOCK_ORDER:
            raise ParameterError(f"unsupported block order {self.block_order!r}")

    @property
    def normalizer(self):
        return self.models["x"].normalizer


def train_pose_model(features, targets, hyperparams=TABLE_I, s=3, filter_config=FilterConfig(),
                     dims=(640, 480), tol=1e-3, max_iter=1_000_000):
    """Fit the normalizer on raw ``features`` and one SVR per axis.

    ``targets`` is ``(n, 3)`` in millimetres, columns x, y, z.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (features.shape[0], 3):
        raise DimensionError(f"targets must be (n, 3), got {targets.shape}")
    norm = fit_normalizer(features)
    xn = norm.normalize(features)
    models = {}
    for k, axis in enumerate(AXES):
        models[axis] = train_svr(xn, targets[:, k], hyperparams[axis], tol, max_iter, norm, axis)
        log.info("axis %s: %d support vectors", axis, len(models[axis].dual_coefs))
    return PoseModel(models, s, filter_config, tuple(dims))


def predict_pose(pm, g, axes=AXES, t=0.0):
    """Pose from a grayscale frame; axes outside ``axes`` come back as ``None``."""
    g = check_gray(g)
    if (g.shape[1], g.shape[0]) != tuple(pm.dims):
        raise DimensionError(f"image {g.shape[1]}x{g.shape[0]} does not match model {pm.dims[0]}x{pm.dims[1]}")
    xn = pm.normalizer.normalize(extract_features(g, pm.filter_config, pm.s))
    vals = {a: (pm.models[a].decision(xn) if a in axes else None) for a in AXES}
    return Pose(vals["x"], vals["y"], vals["z"], t)


def predict_many(pm, features, axes=AXES):
    """``(n, 3)`` predictions from raw feature rows; masked axes are NaN."""
    xn = pm.normalizer.normalize(np.asarray(features, dtype=np.float64))
    out = np.full((xn.shape[0], 3), np.nan)
    for k, a in enumerate(AXES):
        if a in axes:
            out[:, k] = pm.models[a].decision(xn)
    return out


# --- cross-validation ----------------------------------------------------------

def fold_indices(n, folds=5, seed=0):
    """Seeded uniform shuffle cut into ``folds`` contiguous blocks."""
    if n < folds:
        raise ParameterError(f"dataset of size {n} is smaller than {folds} folds")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, folds)


def _selection_key(row):
    hp = row["hp"]
    return (row["mean_rmse"], hp.K, hp.gamma, -hp.epsilon)


@dataclass
class CvReport:
    best: Dict[str, SvrHyperparams]
    rows: list
    folds: int
    seed: int

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["axis", "epsilon", "K", "gamma"] + [f"fold{i}_rmse" for i in range(self.folds)]
                       + ["mean_rmse", "seed"])
            for r in self.rows:
                hp = r["hp"]
                w.writerow([r["axis"], repr(hp.epsilon), repr(hp.K), repr(hp.gamma)]
                           + [repr(v) for v in r["fold_rmse"]] + [repr(r["mean_rmse"]), self.seed])


def cross_validate(features, targets, grid, folds=5, seed=0, tol=1e-3, max_iter=1_000_000, axes=AXES):
    """K-fold grid search per axis.

    ``grid`` maps each axis to a list of :class:`SvrHyperparams` (a plain list
    is used for every axis).  The normalizer is refit on each training split.
    The winner has the lowest mean validation RMSE; ties go to the smaller K,
    then the smaller gamma, then the larger epsilon.
    """
    features = np.asarray(features, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if not isinstance(grid, dict):
        grid = {a: list(grid) for a in axes}
    for a in axes:
        if not grid.get(a):
            raise ParameterError(f"empty hyperparameter grid for axis {a}")
    parts = fold_indices(features.shape[0], folds, seed)
    # per fold: normalized train/validation features and squared distances
    prepared = []
    for k in range(folds):
        val = parts[k]
        tr = np.concatenate([parts[i] for i in range(folds) if i != k])
        norm = fit_normalizer(features[tr])
        xtr = norm.normalize(features[tr])
        xva = norm.normalize(features[val])
        prepared.append((tr, val, xtr, xva, sq_distances(xtr, xtr), sq_distances(xva, xtr)))

    rows = []
    best = {}
    for a in axes:
        col = AXES.index(a)
        scores = {hp: [0.0] * folds for hp in grid[a]}
        gammas = sorted({hp.gamma for hp in grid[a]})
        for k, (tr, val, xtr, xva, d_tr, d_va) in enumerate(prepared):
            for gamma in gammas:
                gram = np.exp(-gamma * d_tr)
                np.fill_diagonal(gram, 1.0)
                kva = np.exp(-gamma * d_va)
                for hp in grid[a]:
                    if hp.gamma != gamma:
                        continue
                    fit = solve_dual(xtr, targets[tr, col], hp, tol, max_iter, gram=gram)
                    pred = kva @ fit.coef + fit.bias
                    scores[hp][k] = float(np.sqrt(np.mean((pred - targets[val, col]) ** 2)))
        axis_rows = []
        for hp in grid[a]:
            fr = scores[hp]
            axis_rows.append({"axis": a, "hp": hp, "fold_rmse": fr, "mean_rmse": float(np.mean(fr))})
        rows.extend(axis_rows)
        best[a] = min(axis_rows, key=_selection_key)["hp"]
        log.info("axis %s: best %s", a, best[a])
    return CvReport(best, rows, folds, seed)
