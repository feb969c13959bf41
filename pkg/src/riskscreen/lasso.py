"""Squared-error lasso by cyclic coordinate descent, replicated k-fold
cross-validation and cross-replicate coefficient averaging.

The solver minimizes::

    (1 / 2n) * sum_i (y_i - b0 - x_i . b)^2 + lam * sum_j |b_j|

working on the centered Gram matrix ("covariance updates"), so a sweep over
coefficients that stay at zero costs O(p) rather than O(np).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from ._rng import derive_seed
from .errors import AlignmentError, ConfigurationError, ConvergenceError, NumericalError, ValidationError
from .evaluation import auc as auc_score
from .evaluation import r_squared
from .features import FeatureMatrix

# Tests switch this on so that every fit is certified against the KKT
# conditions as a side effect.
CHECK_KKT = False
KKT_LOG: list[float] = []

# Active-set sweeps between Newton steps on the current sign pattern;
# 0 gives plain cyclic coordinate descent.
NEWTON_EVERY = 5


@dataclass(frozen=True)
class LambdaPath:
    values: np.ndarray

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if v.size == 0 or np.any(v < 0) or np.any(~np.isfinite(v)):
            raise ConfigurationError("lambda values must be finite and nonnegative")
        if np.any(np.diff(v) >= 0):
            raise ConfigurationError("lambda path must be strictly decreasing")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def geometric(cls, lambda_max: float, count: int = 100, ratio: float = 1e-3) -> "LambdaPath":
        if lambda_max <= 0:
            raise ValidationError("lambda_max is zero: the outcome is constant or no column varies")
        if count < 1 or not 0 < ratio < 1:
            raise ConfigurationError("need count >= 1 and 0 < ratio < 1")
        if count == 1:
            return cls(np.array([lambda_max]))
        return cls(np.geomspace(lambda_max, ratio * lambda_max, count))


@dataclass(frozen=True)
class FittedModel:
    intercept: float
    coefficients: np.ndarray
    names: tuple[str, ...]
    lambda_chosen: float
    n_sweeps: int = 0

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


@dataclass
class ReplicateRun:
    index: int
    folds: np.ndarray
    model: FittedModel
    heldout: np.ndarray
    cv_error: np.ndarray
    r2: float
    auc: float | None
    seed: int


@dataclass(frozen=True)
class AveragedModel:
    intercept: float
    coefficients: np.ndarray
    selection_frequency: np.ndarray
    names: tuple[str, ...]
    lambdas: np.ndarray = field(default_factory=lambda: np.zeros(0))
    seed: int = 0

    def coefficient(self, name: str) -> float:
        return float(self.coefficients[self.names.index(name)])


def soft_threshold(z: float, g: float) -> float:
    if g < 0:
        raise ValueError("threshold must be nonnegative")
    return float(np.sign(z) * max(abs(z) - g, 0.0))


def lambda_max(x: np.ndarray, y: np.ndarray) -> float:
    """Smallest penalty at which every coefficient is zero."""
    n = y.shape[0]
    xc = x - x.mean(axis=0)
    return float(np.max(np.abs(xc.T @ (y - y.mean())))) / n if x.shape[1] else 0.0


@numba.njit(cache=True, nogil=True)
def _sweep(gram, grad, beta, lam, active_only):
    """One cyclic pass; returns the largest coefficient change."""
    p = beta.shape[0]
    maxd = 0.0
    for j in range(p):
        if active_only and beta[j] == 0.0:
            continue
        gjj = gram[j, j]
        if gjj <= 0.0:
            continue
        z = grad[j] + gjj * beta[j]
        if z > lam:
            new = (z - lam) / gjj
        elif z < -lam:
            new = (z + lam) / gjj
        else:
            new = 0.0
        d = new - beta[j]
        if d != 0.0:
            beta[j] = new
            # contiguous full-row update vectorizes better than a gather
            row = gram[j]
            for k in range(p):
                grad[k] -= d * row[k]
            if abs(d) > maxd:
                maxd = abs(d)
    return maxd


@numba.njit(cache=True, nogil=True)
def _objective(beta, c, grad, yy, lam):
    # 1/2n |r|^2 = yy/2 - b.c + b.G.b/2 with G b = c - grad
    s = 0.0
    l1 = 0.0
    for j in range(beta.shape[0]):
        s += beta[j] * (c[j] + grad[j])
        l1 += abs(beta[j])
    return 0.5 * yy - 0.5 * s + lam * l1


@numba.njit(cache=True, nogil=True)
def _try_move(gram, c, grad, beta, yy, lam, act, d):
    """Move ``beta[act]`` along ``d``, stopping where the first coordinate
    reaches zero; undo the move unless the objective drops."""
    t = 1.0
    for a in range(act.shape[0]):
        old = beta[act[a]]
        if (old + d[a]) * old <= 0.0 and d[a] != 0.0:
            t = min(t, -old / d[a])
    if not t > 0.0:
        return False
    before = _objective(beta, c, grad, yy, lam)
    saved_beta = beta.copy()
    saved_grad = grad.copy()
    p = beta.shape[0]
    for a in range(act.shape[0]):
        j = act[a]
        step = t * d[a]
        new = beta[j] + step
        if new * beta[j] <= 0.0:
            new = 0.0
            step = -beta[j]
        if step == 0.0:
            continue
        beta[j] = new
        row = gram[j]
        for k in range(p):
            grad[k] -= step * row[k]
    if _objective(beta, c, grad, yy, lam) < before:
        return True
    beta[:] = saved_beta
    grad[:] = saved_grad
    return False


@numba.njit(cache=True, nogil=True)
def _back_solve(fac, m, y):
    """Solve ``L' x = y`` for the leading ``m x m`` block of lower-triangular ``L``."""
    x = np.empty(m)
    for i in range(m - 1, -1, -1):
        s = y[i]
        for q in range(i + 1, m):
            s -= fac[q, i] * x[q]
        x[i] = s / fac[i, i]
    return x


@numba.njit(cache=True, nogil=True)
def _chol_append(gram, fac, order, m, j, z):
    """Forward-solve ``L z = G[order, j]``; returns the new pivot squared."""
    for i in range(m):
        s = gram[order[i], j]
        for k in range(i):
            s -= fac[i, k] * z[k]
        z[i] = s / fac[i, i]
    d = gram[j, j]
    for i in range(m):
        d -= z[i] * z[i]
    return d


@numba.njit(cache=True, nogil=True)
def _chol_drop(fac, order, pos, m, k):
    """Remove position ``k`` from the factor, restoring triangularity with
    Givens rotations."""
    pos[order[k]] = -1
    for i in range(k, m - 1):
        order[i] = order[i + 1]
        pos[order[i]] = i
        for q in range(i + 2):
            fac[i, q] = fac[i + 1, q]
    for i in range(k, m - 1):
        a = fac[i, i]
        b = fac[i, i + 1]
        r = np.hypot(a, b)
        cs = a / r
        sn = b / r
        for row in range(i, m - 1):
            u = fac[row, i]
            v = fac[row, i + 1]
            fac[row, i] = cs * u + sn * v
            fac[row, i + 1] = -sn * u + cs * v
        fac[i, i + 1] = 0.0
    for q in range(m):
        fac[m - 1, q] = 0.0
        fac[q, m - 1] = 0.0
    return m - 1


@numba.njit(cache=True, nogil=True)
def _newton(gram, c, grad, beta, yy, lam, fac, order, pos, m, z):
    """Jump toward the minimizer on the current sign pattern.

    On a fixed sign pattern ``s`` the objective is the quadratic
    ``b'Gb/2 - (c - lam*s)'b``, minimized by ``G_AA b = c_A - lam*s_A``.
    A Cholesky factor of ``G_AA`` is kept across calls and updated one
    column at a time as the nonzero set changes. When a column cannot be
    appended because it is a combination of the factored ones, ``G_AA`` is
    singular and the objective is linear along the resulting null
    direction, so we follow it downhill until a coefficient reaches zero.
    Every move stops at the first sign change and is kept only if the
    objective drops. Returns the new factor size.
    """
    p = beta.shape[0]
    for _ in range(p + 1):
        k = m - 1
        while k >= 0:
            if beta[order[k]] == 0.0:
                m = _chol_drop(fac, order, pos, m, k)
            k -= 1
        singular = -1
        for j in range(p):
            if beta[j] == 0.0 or pos[j] >= 0:
                continue
            d = _chol_append(gram, fac, order, m, j, z)
            if d <= 1e-10 * gram[j, j]:
                singular = j
                break
            for i in range(m):
                fac[m, i] = z[i]
            fac[m, m] = np.sqrt(d)
            order[m] = j
            pos[j] = m
            m += 1
        if singular < 0:
            break
        # (u, -1) with G_oo u = G_oj spans the null space of the enlarged block
        act = np.empty(m + 1, dtype=np.int64)
        act[:m] = order[:m]
        act[m] = singular
        dirn = np.empty(m + 1)
        dirn[:m] = _back_solve(fac, m, z)
        dirn[m] = -1.0
        slope = 0.0
        bmax = 0.0
        for i in range(m + 1):
            slope += (lam * np.sign(beta[act[i]]) - grad[act[i]]) * dirn[i]
            bmax = max(bmax, abs(beta[act[i]]))
        if slope > 0.0:
            dirn = -dirn
        dirn *= 1e6 * (bmax + 1.0) / np.sqrt((dirn * dirn).sum())
        if not _try_move(gram, c, grad, beta, yy, lam, act, dirn):
            return m
    if m == 0:
        return m
    y = np.empty(m)
    for i in range(m):
        s = c[order[i]] - lam * np.sign(beta[order[i]])
        for q in range(i):
            s -= fac[i, q] * y[q]
        y[i] = s / fac[i, i]
    act = order[:m].copy()
    _try_move(gram, c, grad, beta, yy, lam, act, _back_solve(fac, m, y) - beta[act])
    return m


@numba.njit(cache=True, nogil=True)
def _solve_path(gram, c, yy, lambdas, tol, max_iter, trace, newton_every):
    """Warm-started path. Returns (betas, sweeps per lambda, failed lambda
    index or -1, number of trace entries written).

    Full sweeps alternate with runs of sweeps over the nonzero set; a
    lambda is done when a full sweep moves no coefficient by ``tol``.
    """
    p = c.shape[0]
    n_lam = lambdas.shape[0]
    betas = np.zeros((n_lam, p))
    sweeps = np.zeros(n_lam, dtype=np.int64)
    beta = np.zeros(p)
    grad = c.copy()
    n_trace = 0
    # Newton state: lower Cholesky factor of G over `order[:m]`
    fac = np.zeros((p, p))
    order = np.zeros(p, dtype=np.int64)
    pos = np.full(p, -1, dtype=np.int64)
    z = np.zeros(p)
    m = 0
    for li in range(n_lam):
        lam = lambdas[li]
        it = 0
        while True:
            maxd = _sweep(gram, grad, beta, lam, False)
            it += 1
            if n_trace < trace.shape[0]:
                trace[n_trace, 0] = li
                trace[n_trace, 1] = _objective(beta, c, grad, yy, lam)
                n_trace += 1
            if maxd < tol:
                break
            if it >= max_iter:
                return betas, sweeps, li, n_trace
            inner = 0
            while True:
                maxd = _sweep(gram, grad, beta, lam, True)
                it += 1
                inner += 1
                if n_trace < trace.shape[0]:
                    trace[n_trace, 0] = li
                    trace[n_trace, 1] = _objective(beta, c, grad, yy, lam)
                    n_trace += 1
                if maxd < tol:
                    break
                if it >= max_iter:
                    return betas, sweeps, li, n_trace
                if newton_every > 0 and inner % newton_every == 0:
                    m = _newton(gram, c, grad, beta, yy, lam, fac, order, pos, m, z)
        betas[li] = beta
        sweeps[li] = it
    return betas, sweeps, -1, n_trace


def _as_path(path) -> LambdaPath:
    return path if isinstance(path, LambdaPath) else LambdaPath(np.asarray(path, dtype=np.float64))


def _run_solver(gram, c, yy, lambdas, tol, max_iter, trace_len=0):
    trace = np.zeros((trace_len, 2))
    betas, sweeps, failed, n_trace = _solve_path(
        np.ascontiguousarray(gram), c, float(yy), lambdas, float(tol), int(max_iter), trace,
        NEWTON_EVERY,
    )
    if failed >= 0:
        raise ConvergenceError(
            f"coordinate descent did not converge within {max_iter} sweeps at lambda={lambdas[failed]:.6g}"
        )
    return betas, sweeps, trace[:n_trace]


def kkt_violation(x: np.ndarray, y: np.ndarray, model: FittedModel, lam: float) -> float:
    """Largest violation of the lasso optimality conditions.

    Active coordinates need ``x_j . r / n == lam * sign(b_j)``; inactive ones
    need ``|x_j . r / n| <= lam``.
    """
    r = y - model.intercept - x @ model.coefficients
    g = x.T @ r / y.shape[0]
    b = model.coefficients
    nz = b != 0
    viol = np.zeros_like(g)
    viol[nz] = np.abs(g[nz] - lam * np.sign(b[nz]))
    viol[~nz] = np.maximum(np.abs(g[~nz]) - lam, 0.0)
    return float(viol.max()) if viol.size else 0.0


def _certify(x, y, models, tol):
    for m in models:
        v = kkt_violation(x, y, m, m.lambda_chosen)
        KKT_LOG.append(v)
        if v >= 10 * tol:
            raise NumericalError(f"KKT violation {v:.3g} at lambda={m.lambda_chosen:.6g}")


def fit_path(
    x: np.ndarray,
    y: np.ndarray,
    path: LambdaPath | Sequence[float],
    tol: float = 1e-7,
    max_iter: int = 100_000,
    names: Sequence[str] | None = None,
    trace: int = 0,
):
    """Fit the lasso at every lambda of ``path``, warm-starting each from the
    previous solution.

    Returns a list of :class:`FittedModel`; with ``trace > 0`` also returns
    an array of ``(lambda index, objective)`` rows, one per sweep, holding at
    most ``trace`` entries.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise AlignmentError(f"X has shape {x.shape} but y has length {y.shape[0]}")
    path = _as_path(path)
    n, p = x.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    xbar, ybar = x.mean(axis=0), y.mean()
    xc = x - xbar
    yc = y - ybar
    gram = xc.T @ xc / n
    c = xc.T @ yc / n
    betas, sweeps, tr = _run_solver(gram, c, yc @ yc / n, path.values, tol, max_iter, trace)
    intercepts = ybar - betas @ xbar
    models = [
        FittedModel(float(b0), b.copy(), names, float(lam), int(s))
        for b0, b, lam, s in zip(intercepts, betas, path.values, sweeps)
    ]
    if CHECK_KKT:
        _certify(x, y, models, tol)
    return (models, tr) if trace else models


class _FoldSolver:
    """Per-fold Gram matrices by downdating the full cross-product matrix."""

    def __init__(self, x, y):
        self.x, self.y = x, y
        self.sxx = x.T @ x
        self.sx = x.sum(axis=0)
        self.sxy = x.T @ y
        self.sy = y.sum()
        self.syy = y @ y
        self.n = y.shape[0]

    def solve(self, held: np.ndarray, lambdas, tol, max_iter):
        xh, yh = self.x[held], self.y[held]
        n = self.n - held.size
        sx = self.sx - xh.sum(axis=0)
        sy = self.sy - yh.sum()
        xbar, ybar = sx / n, sy / n
        gram = (self.sxx - xh.T @ xh - np.outer(sx, xbar)) / n
        c = (self.sxy - xh.T @ yh - sx * ybar) / n
        yy = (self.syy - yh @ yh - sy * ybar) / n
        betas, _, _ = _run_solver(gram, c, yy, lambdas, tol, max_iter)
        intercepts = ybar - betas @ xbar
        if CHECK_KKT:
            keep = np.ones(self.n, dtype=bool)
            keep[held] = False
            names = tuple(range(betas.shape[1]))
            _certify(
                self.x[keep], self.y[keep],
                [FittedModel(float(b0), b, names, float(l)) for b0, b, l in zip(intercepts, betas, lambdas)],
                tol,
            )
        return betas, intercepts


def assign_folds(n: int, n_folds: int, rng: np.random.Generator) -> np.ndarray:
    """Random fold label per row; fold sizes differ by at most one."""
    folds = np.empty(n, dtype=np.int64)
    folds[rng.permutation(n)] = np.arange(n) % n_folds
    return folds


def cv_replicates(
    x: np.ndarray,
    y: np.ndarray,
    labels: np.ndarray | None = None,
    n_replicates: int = 100,
    n_folds: int = 5,
    seed: int = 0,
    names: Sequence[str] | None = None,
    n_lambdas: int = 100,
    lambda_ratio: float = 1e-3,
    tol: float = 1e-7,
    max_iter: int = 100_000,
    shared_lambda: bool = False,
    threads: int = 1,
) -> tuple[list[ReplicateRun], AveragedModel]:
    """Repeat k-fold cross-validated lasso ``n_replicates`` times.

    Each replicate draws its own fold assignment, picks the lambda with the
    lowest mean held-out MSE, and keeps the full-data fit at that lambda. The
    held-out predictions at the chosen lambda are pooled over folds to score
    the replicate (R², and AUC against ``labels`` when given).

    With ``shared_lambda`` the CV curves of all replicates are averaged and a
    single lambda is used for every replicate.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = x.shape
    if y.shape[0] != n:
        raise AlignmentError(f"X has {n} rows but y has {y.shape[0]}")
    if n_folds < 2 or n < n_folds:
        raise ConfigurationError(f"need 2 <= n_folds <= n, got n_folds={n_folds}, n={n}")
    if n_replicates < 1:
        raise ConfigurationError("n_replicates must be >= 1")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    path = LambdaPath.geometric(lambda_max(x, y), n_lambdas, lambda_ratio)
    full = fit_path(x, y, path, tol, max_iter, names)
    solver = _FoldSolver(x, y)

    def one(r: int):
        rseed = derive_seed(seed, r)
        folds = assign_folds(n, n_folds, np.random.default_rng(rseed))
        preds = np.empty((n, len(path)))
        fold_mse = np.empty((n_folds, len(path)))
        for f in range(n_folds):
            held = np.flatnonzero(folds == f)
            betas, b0 = solver.solve(held, path.values, tol, max_iter)
            ph = x[held] @ betas.T + b0
            preds[held] = ph
            fold_mse[f] = ((ph - y[held, None]) ** 2).mean(axis=0)
        return rseed, folds, preds, fold_mse.mean(axis=0)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            raw = list(pool.map(one, range(n_replicates)))
    else:
        raw = [one(r) for r in range(n_replicates)]

    if shared_lambda:
        shared_idx = int(np.argmin(np.mean([cv for *_, cv in raw], axis=0)))
    runs = []
    for r, (rseed, folds, preds, cv) in enumerate(raw):
        idx = shared_idx if shared_lambda else int(np.argmin(cv))
        held = preds[:, idx]
        runs.append(
            ReplicateRun(
                index=r,
                folds=folds,
                model=full[idx],
                heldout=held,
                cv_error=cv,
                r2=r_squared(held, y),
                auc=None if labels is None else auc_score(held, labels),
                seed=rseed,
            )
        )
    return runs, average_models(runs, seed)


def average_models(runs: Sequence[ReplicateRun], seed: int = 0) -> AveragedModel:
    """Arithmetic mean over replicates, zeros included."""
    coefs = np.array([r.model.coefficients for r in runs])
    return AveragedModel(
        intercept=float(np.mean([r.model.intercept for r in runs])),
        coefficients=coefs.mean(axis=0),
        selection_frequency=(coefs != 0).mean(axis=0),
        names=runs[0].model.names,
        lambdas=np.array([r.model.lambda_chosen for r in runs]),
        seed=seed,
    )


def predict(
    model: AveragedModel | FittedModel,
    x: FeatureMatrix | np.ndarray,
    columns: Sequence[str] | None = None,
) -> np.ndarray:
    """``intercept + X @ coefficients``, matching columns by name."""
    if isinstance(x, FeatureMatrix):
        columns, values = x.columns, x.values
    else:
        values = np.asarray(x, dtype=np.float64)
    if columns is not None:
        columns = tuple(columns)
        missing = [c for c in model.names if c not in columns]
        extra = [c for c in columns if c not in model.names]
        if missing or extra:
            raise AlignmentError(f"column mismatch: missing {missing}, extra {extra}")
        if columns != model.names:
            values = values[:, [columns.index(c) for c in model.names]]
    elif values.shape[1] != len(model.names):
        raise AlignmentError(f"expected {len(model.names)} columns, got {values.shape[1]}")
    return model.intercept + values @ model.coefficients
