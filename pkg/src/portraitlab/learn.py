"""Numerical engines: standardization, Spearman, LASSO paths, SVM (SMO),
kernel ridge, k-means and fold plans.

All training routines are deterministic given (inputs, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.stats import rankdata

SERIAL_VERSION = 1

DEFAULT_C_GRID = tuple(2.0 ** k for k in range(-5, 8, 2))
DEFAULT_RIDGE_GRID = (1e-3, 1e-2, 1e-1, 1.0, 10.0)


@dataclass
class FeatureMatrix:
    """N x D matrix with a fixed, named feature registry."""

    registry: list[str]
    values: np.ndarray
    ids: list[str]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("values must be 2-D")
        if v.shape[0] < 1:
            raise ValueError("need at least one row")
        if v.shape[1] != len(self.registry):
            raise ValueError("column count must match registry length")
        if len(self.ids) != v.shape[0]:
            raise ValueError("id count must match row count")
        if len(set(self.registry)) != len(self.registry):
            raise ValueError("registry names must be unique")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite")
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass
class Standardization:
    mean: np.ndarray
    scale: np.ndarray
    constant_columns: np.ndarray  # bool flags for zero-variance columns

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale


def fit_standardization(x: np.ndarray) -> Standardization:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std < 1e-12
    scale = np.where(constant, 1.0, std)
    return Standardization(mean=mean, scale=scale, constant_columns=constant)


def standardize(m: FeatureMatrix) -> tuple[FeatureMatrix, Standardization]:
    """Zero-mean unit-variance columns; constant columns pass through flagged."""
    st = fit_standardization(m.values)
    out = FeatureMatrix(registry=list(m.registry), values=st.apply(m.values), ids=list(m.ids))
    return out, st


def spearman(x, y) -> float:
    """Spearman rank correlation (mid-ranks for ties); 0 when ranks degenerate."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    rx = rankdata(x)
    ry = rankdata(y)
    sx = rx.std()
    sy = ry.std()
    if sx < 1e-12 or sy < 1e-12:
        return 0.0
    return float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))


# ---------------------------------------------------------------------------
# LASSO coordinate descent
# ---------------------------------------------------------------------------

@dataclass
class LassoPath:
    lambda_grid: np.ndarray          # decreasing
    coefficients: np.ndarray         # (n_lambda, D)
    intercepts: np.ndarray           # (n_lambda,)
    entry_order: np.ndarray          # per feature: grid index of first nonzero, -1 if never

    def coef_at(self, lam_index: int) -> np.ndarray:
        return self.coefficients[lam_index]


def _soft_threshold(z: float, t: float) -> float:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


def _cd_sweeps_py(gram, xty, col_sq, beta, q, idx, lam, tol, max_sweeps):
    """Cyclic coordinate-descent sweeps over the index set; mutates beta and
    q = gram @ beta in place. Returns (sweeps used, converged)."""
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_delta = 0.0
        for t in range(idx.shape[0]):
            j = idx[t]
            bj = beta[j]
            rho = xty[j] - q[j] + gram[j, j] * bj
            if rho > lam:
                new = (rho - lam) / col_sq[j]
            elif rho < -lam:
                new = (rho + lam) / col_sq[j]
            else:
                new = 0.0
            if new != bj:
                delta = new - bj
                for k in range(q.shape[0]):
                    q[k] += gram[k, j] * delta
                beta[j] = new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return sweeps, True
    return sweeps, False


try:
    from numba import njit

    _cd_sweeps = njit(cache=True)(_cd_sweeps_py)
except ImportError:  # pragma: no cover - numba is an optional speedup
    _cd_sweeps = _cd_sweeps_py


def lasso_path(m: FeatureMatrix, targets, grid_size: int = 100,
               lambda_grid: np.ndarray | None = None,
               tol: float = 1e-6, max_sweeps: int = 10_000) -> LassoPath:
    """Cyclic coordinate descent with soft-thresholding and warm starts.

    Expects standardized columns; targets are centered internally and the
    (constant) intercept is their mean. The grid is log-spaced over 3 decades
    from lambda_max = max|X'y|/N.
    """
    x = m.values
    y = np.asarray(targets, dtype=np.float64)
    if not np.all(np.isfinite(y)) or y.shape[0] != x.shape[0]:
        raise ValueError("targets must be finite and match the row count")
    n, d = x.shape
    y_mean = y.mean()
    yc = y - y_mean

    xty = x.T @ yc / n
    col_sq = (x * x).sum(axis=0) / n  # ~1 for standardized cols, 0 for constant
    gram = x.T @ x / n

    if lambda_grid is None:
        lam_max = max(np.abs(xty).max(), 1e-12)
        lambda_grid = np.logspace(np.log10(lam_max), np.log10(lam_max / 1000.0), grid_size)
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)

    beta = np.zeros(d)
    q = np.zeros(d)  # gram @ beta, maintained incrementally
    coefs = np.zeros((len(lambda_grid), d))
    entry = np.full(d, -1, dtype=int)

    live = col_sq > 0.0

    for li, lam in enumerate(lambda_grid):
        # working set: warm-started nonzeros plus KKT violators found after
        # each convergence; zero coordinates satisfying |rho| <= lambda are
        # checked vectorized instead of swept one by one
        work = live & (beta != 0.0)
        sweeps = 0
        while True:
            idx = np.nonzero(work)[0]
            used, converged = _cd_sweeps(gram, xty, col_sq, beta, q, idx,
                                         lam, tol, max_sweeps - sweeps)
            sweeps += used
            viol = live & ~work & (np.abs(xty - q) > lam)
            if sweeps >= max_sweeps or not viol.any():
                break
            work |= viol
        coefs[li] = beta
        newly = (entry < 0) & (beta != 0.0)
        entry[newly] = li

    intercepts = np.full(len(lambda_grid), y_mean)
    return LassoPath(lambda_grid=lambda_grid, coefficients=coefs,
                     intercepts=intercepts, entry_order=entry)


def lasso_objective(x: np.ndarray, y: np.ndarray, beta: np.ndarray, lam: float) -> float:
    n = x.shape[0]
    r = y - x @ beta
    return float((r @ r) / (2 * n) + lam * np.abs(beta).sum())


@dataclass
class FoldPlan:
    seed: int
    assignment: dict  # sample id -> partition index

    def partition(self, ids) -> np.ndarray:
        return np.array([self.assignment[i] for i in ids], dtype=int)


def make_folds(ids, k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle followed by round-robin assignment into k partitions."""
    ids = list(ids)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(ids))
    assignment = {ids[idx]: pos % k for pos, idx in enumerate(order)}
    return FoldPlan(seed=seed, assignment=assignment)


def _select_lambda_cv(x: np.ndarray, y: np.ndarray, registry: list[str],
                      grid: np.ndarray, seed: int, inner_k: int = 5) -> int:
    """Index of the grid lambda with the lowest inner-CV mean squared error."""
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % inner_k
    mse = np.zeros(len(grid))
    for f in range(inner_k):
        tr = fold_of != f
        te = ~tr
        if te.sum() == 0 or tr.sum() < 2:
            continue
        st = fit_standardization(x[tr])
        xtr = st.apply(x[tr])
        xte = st.apply(x[te])
        fm = FeatureMatrix(registry=registry, values=xtr,
                           ids=[str(i) for i in range(int(tr.sum()))])
        path = lasso_path(fm, y[tr], lambda_grid=grid)
        preds = xte @ path.coefficients.T + path.intercepts  # (n_te, n_lambda)
        mse += ((preds - y[te][:, None]) ** 2).mean(axis=0)
    return int(np.argmin(mse))


def group_correlation(m: FeatureMatrix, scores, folds: FoldPlan,
                      grid_size: int = 100) -> tuple[float, float]:
    """Mean and sample std of held-out Spearman over the 5 fold plan.

    Per fold: fit a LASSO path on the training partitions, pick lambda by
    inner 5-fold CV MSE, predict the held-out partition, correlate.
    """
    scores = np.asarray(scores, dtype=np.float64)
    part = folds.partition(m.ids)
    k = int(part.max()) + 1
    rhos = []
    for f in range(k):
        tr = part != f
        te = ~tr
        st = fit_standardization(m.values[tr])
        xtr = st.apply(m.values[tr])
        fm = FeatureMatrix(registry=list(m.registry), values=xtr,
                           ids=[str(i) for i in range(int(tr.sum()))])
        path = lasso_path(fm, scores[tr], grid_size=grid_size)
        li = _select_lambda_cv(m.values[tr], scores[tr], list(m.registry),
                               path.lambda_grid, seed=folds.seed + f)
        beta = path.coefficients[li]
        preds = st.apply(m.values[te]) @ beta + path.intercepts[li]
        rhos.append(spearman(preds, scores[te]))
    rhos = np.asarray(rhos)
    return float(rhos.mean()), float(rhos.std(ddof=1))


# ---------------------------------------------------------------------------
# SVM via SMO
# ---------------------------------------------------------------------------

@dataclass
class SvmModel:
    kernel: str                      # "linear" or "rbf"
    gamma: float                     # used for rbf
    support_vectors: np.ndarray      # (n_sv, D)
    dual_coef: np.ndarray            # alpha_i * y_i
    bias: float
    C: float
    standardization: Standardization | None = None


def _kernel_matrix(kernel: str, gamma: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if kernel == "linear":
        return a @ b.T
    if kernel == "rbf":
        sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
        return np.exp(-gamma * np.maximum(sq, 0.0))
    raise ValueError(f"unknown kernel: {kernel}")


def svm_train(x: np.ndarray, y: np.ndarray, kernel: str = "rbf",
              C: float = 1.0, gamma: float | None = None,
              tol: float = 1e-3, max_iter: int = 100_000,
              standardization: Standardization | None = None) -> SvmModel:
    """SMO on the C-SVC dual with maximal-violating-pair working set selection.

    gamma defaults to 1/D for the rbf kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("labels must contain both -1 and +1")
    n, d = x.shape
    if gamma is None:
        gamma = 1.0 / d
    k = _kernel_matrix(kernel, gamma, x, x)
    q = k * np.outer(y, y)

    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a

    for _ in range(max_iter):
        yg = -y * grad
        up = (alpha < C - 1e-12) & (y > 0) | (alpha > 1e-12) & (y < 0)
        low = (alpha < C - 1e-12) & (y < 0) | (alpha > 1e-12) & (y > 0)
        if not up.any() or not low.any():
            break
        i = int(np.where(up)[0][np.argmax(yg[up])])
        j = int(np.where(low)[0][np.argmin(yg[low])])
        m_up = yg[i]
        m_low = yg[j]
        if m_up - m_low < tol:
            break
        # optimal step along the feasible pair direction, then box clipping
        eta = k[i, i] + k[j, j] - 2.0 * k[i, j]
        if eta <= 1e-12:
            eta = 1e-12
        delta = (m_up - m_low) / eta
        # translate into alpha-space steps respecting the box
        if y[i] > 0:
            di_max = C - alpha[i]
        else:
            di_max = alpha[i]
        if y[j] > 0:
            dj_max = alpha[j]
        else:
            dj_max = C - alpha[j]
        step = min(delta, di_max, dj_max)
        if step <= 0:
            break
        alpha[i] += step * y[i]
        alpha[j] -= step * y[j]
        grad += q[:, i] * (step * y[i]) + q[:, j] * (-step * y[j])

    # bias from the KKT conditions on free vectors, else midpoint of bounds
    yg = -y * grad
    free = (alpha > 1e-8) & (alpha < C - 1e-8)
    if free.any():
        bias = float(yg[free].mean())
    else:
        up = (alpha < C - 1e-12) & (y > 0) | (alpha > 1e-12) & (y < 0)
        low = (alpha < C - 1e-12) & (y < 0) | (alpha > 1e-12) & (y > 0)
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        bias = float((hi + lo) / 2.0)

    sv = alpha > 1e-10
    return SvmModel(kernel=kernel, gamma=gamma,
                    support_vectors=x[sv].copy(),
                    dual_coef=(alpha * y)[sv].copy(),
                    bias=bias, C=C, standardization=standardization)


def svm_decision(model: SvmModel, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if model.standardization is not None:
        x = model.standardization.apply(x)
    k = _kernel_matrix(model.kernel, model.gamma, x, model.support_vectors)
    return k @ model.dual_coef + model.bias


def svm_predict(model: SvmModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Labels in {-1,+1} and raw decision values."""
    dec = svm_decision(model, x)
    labels = np.where(dec >= 0, 1.0, -1.0)
    return labels, dec


def svm_train_cv(x: np.ndarray, y: np.ndarray, kernel: str = "rbf",
                 c_grid=DEFAULT_C_GRID, cv: int = 10, seed: int = 0,
                 gamma: float | None = None,
                 standardization: Standardization | None = None) -> SvmModel:
    """Select C by k-fold CV accuracy, then train on all data."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % cv
    best_c, best_acc = c_grid[0], -1.0
    for c in c_grid:
        correct = 0
        counted = 0
        for f in range(cv):
            tr = fold_of != f
            te = ~tr
            if len(set(y[tr])) < 2 or te.sum() == 0:
                continue
            model = svm_train(x[tr], y[tr], kernel=kernel, C=c, gamma=gamma)
            labels, _ = svm_predict(model, x[te])
            correct += int((labels == y[te]).sum())
            counted += int(te.sum())
        acc = correct / counted if counted else 0.0
        if acc > best_acc:
            best_acc, best_c = acc, c
    return svm_train(x, y, kernel=kernel, C=best_c, gamma=gamma,
                     standardization=standardization)


# ---------------------------------------------------------------------------
# Kernel ridge
# ---------------------------------------------------------------------------

@dataclass
class KernelRidgeModel:
    gamma: float
    lam: float
    x_train: np.ndarray
    dual: np.ndarray


def kernel_ridge(x: np.ndarray, y: np.ndarray, gamma: float, lam: float) -> KernelRidgeModel:
    """RBF kernel ridge: solve (K + lam*I) a = y by Cholesky."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    k = _kernel_matrix("rbf", gamma, x, x)
    k[np.diag_indices_from(k)] += lam
    c, low = linalg.cho_factor(k)
    dual = linalg.cho_solve((c, low), y)
    return KernelRidgeModel(gamma=gamma, lam=lam, x_train=x.copy(), dual=dual)


def kernel_ridge_predict(model: KernelRidgeModel, x: np.ndarray) -> np.ndarray:
    k = _kernel_matrix("rbf", model.gamma, np.asarray(x, dtype=np.float64), model.x_train)
    return k @ model.dual


def kernel_ridge_cv(x: np.ndarray, y: np.ndarray, gamma: float,
                    lam_grid=DEFAULT_RIDGE_GRID, cv: int = 5, seed: int = 0) -> KernelRidgeModel:
    """Select the ridge penalty by k-fold CV MSE, then refit on all data."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    fold_of = np.empty(n, dtype=int)
    fold_of[order] = np.arange(n) % cv
    best_lam, best_mse = lam_grid[0], np.inf
    for lam in lam_grid:
        sse = 0.0
        cnt = 0
        for f in range(cv):
            tr = fold_of != f
            te = ~tr
            if tr.sum() < 2 or te.sum() == 0:
                continue
            model = kernel_ridge(x[tr], y[tr], gamma, lam)
            pred = kernel_ridge_predict(model, x[te])
            sse += float(((pred - y[te]) ** 2).sum())
            cnt += int(te.sum())
        mse = sse / cnt if cnt else np.inf
        if mse < best_mse:
            best_mse, best_lam = mse, lam
    return kernel_ridge(x, y, gamma, best_lam)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def kmeans(points: np.ndarray, k: int, seed: int,
           tol: float = 1e-8, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray]:
    """Seeded k-means++ init, Lloyd iterations, empty-cluster repair.

    Returns (centroids (k,D), assignment (N,)).
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < k:
        raise ValueError("need at least k points")
    if np.unique(points, axis=0).shape[0] < k:
        raise ValueError("need at least k distinct points")
    rng = np.random.default_rng(seed)

    # k-means++ seeding
    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        probs = d2 / d2.sum() if d2.sum() > 0 else np.full(n, 1.0 / n)
        centroids[c] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[c]) ** 2).sum(axis=1))

    assign = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        dist = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        assign = dist.argmin(axis=1)
        new = centroids.copy()
        for c in range(k):
            members = assign == c
            if members.any():
                new[c] = points[members].mean(axis=0)
            else:
                # split the largest cluster: take its farthest member
                sizes = np.bincount(assign, minlength=k)
                big = int(sizes.argmax())
                members_big = np.where(assign == big)[0]
                far = members_big[dist[members_big, big].argmax()]
                new[c] = points[far]
                assign[far] = c
        shift = np.abs(new - centroids).max()
        centroids = new
        if shift < tol:
            break
    dist = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    assign = dist.argmin(axis=1)
    return centroids, assign


# ---------------------------------------------------------------------------
# Serialization (versioned JSON text formats)
# ---------------------------------------------------------------------------

def save_svm_model(model: SvmModel, path: str) -> None:
    doc = {
        "version": SERIAL_VERSION,
        "type": "svm",
        "kernel": model.kernel,
        "gamma": model.gamma,
        "C": model.C,
        "bias": model.bias,
        "support_vectors": model.support_vectors.tolist(),
        "dual_coef": model.dual_coef.tolist(),
        "standardization": None if model.standardization is None else {
            "mean": model.standardization.mean.tolist(),
            "scale": model.standardization.scale.tolist(),
            "constant_columns": model.standardization.constant_columns.tolist(),
        },
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_svm_model(path: str) -> SvmModel:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("type") != "svm" or doc.get("version") != SERIAL_VERSION:
        raise ValueError("not a compatible svm model file")
    st = doc["standardization"]
    standardization = None
    if st is not None:
        standardization = Standardization(
            mean=np.array(st["mean"]), scale=np.array(st["scale"]),
            constant_columns=np.array(st["constant_columns"], dtype=bool))
    return SvmModel(kernel=doc["kernel"], gamma=doc["gamma"],
                    support_vectors=np.array(doc["support_vectors"]),
                    dual_coef=np.array(doc["dual_coef"]),
                    bias=doc["bias"], C=doc["C"], standardization=standardization)


def save_lasso_path(path_obj: LassoPath, path: str) -> None:
    doc = {
        "version": SERIAL_VERSION,
        "type": "lasso_path",
        "lambda_grid": path_obj.lambda_grid.tolist(),
        "coefficients": path_obj.coefficients.tolist(),
        "intercepts": path_obj.intercepts.tolist(),
        "entry_order": path_obj.entry_order.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f, sort_keys=True)


def load_lasso_path(path: str) -> LassoPath:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("type") != "lasso_path" or doc.get("version") != SERIAL_VERSION:
        raise ValueError("not a compatible lasso path file")
    return LassoPath(lambda_grid=np.array(doc["lambda_grid"]),
                     coefficients=np.array(doc["coefficients"]),
                     intercepts=np.array(doc["intercepts"]),
                     entry_order=np.array(doc["entry_order"], dtype=int))
