"""Elastic-net penalized GLMs fitted by cyclic coordinate descent.

The objective for a path point ``lam`` is::

    -loglik(beta) / n + lam * sum_j pf_j * (alpha * |beta_j| + (1 - alpha) / 2 * beta_j**2)

where coefficients are those of the internally standardized design (columns
centered, unit population SD) and ``pf_j`` is 1 for penalized columns and 0 for
the intercept and any unpenalized column. Gaussian responses are solved exactly
by coordinate descent on the Gram matrix; Poisson and multinomial responses use
iteratively reweighted quadratic approximations with step halving. Returned
coefficients are back-transformed to the scale of the supplied design.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln, logsumexp

from .errors import ConvergenceError, DegenerateResponseError, FoldError

GAUSSIAN = "gaussian"
POISSON = "poisson"
MULTINOMIAL = "multinomial"
FAMILIES = (GAUSSIAN, POISSON, MULTINOMIAL)

DEFAULT_TOL = 1e-7
DEFAULT_MAX_SWEEPS = 100_000
ALPHA_FLOOR = 1e-3
_MAX_IRLS = 1000
_ETA_CLIP = 500.0


@njit(cache=True)
def _cd_gram(G, c, beta, l1, l2, active, tol, max_sweeps):
    """Coordinate descent on 0.5 b'Gb - c'b + sum l1|b| + 0.5 sum l2 b^2.

    Updates ``beta`` in place and returns the number of sweeps used, or -1 if
    ``max_sweeps`` was reached before the largest coefficient change fell
    below ``tol``.
    """
    m = beta.shape[0]
    grad = c - G @ beta
    for sweep in range(max_sweeps):
        maxdiff = 0.0
        for j in range(m):
            if not active[j]:
                continue
            old = beta[j]
            z = grad[j] + G[j, j] * old
            if z > l1[j]:
                new = (z - l1[j]) / (G[j, j] + l2[j])
            elif z < -l1[j]:
                new = (z + l1[j]) / (G[j, j] + l2[j])
            else:
                new = 0.0
            d = new - old
            if d != 0.0:
                beta[j] = new
                for k in range(m):
                    grad[k] -= G[k, j] * d
                if abs(d) > maxdiff:
                    maxdiff = abs(d)
        if maxdiff < tol:
            return sweep + 1
    return -1


@dataclass
class GlmProblem:
    """One penalized regression.

    ``y`` holds numeric responses for gaussian/poisson and class indices
    0..n_classes-1 for multinomial responses.
    """

    y: np.ndarray
    X: np.ndarray
    family: str
    alpha: float = 1.0
    penalized: np.ndarray | None = None
    n_classes: int = 0
    column_names: tuple = ()

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=float)
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X[:, None]
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X and y disagree on the number of rows")
        if self.penalized is None:
            self.penalized = np.ones(self.X.shape[1], dtype=bool)
        self.penalized = np.asarray(self.penalized, dtype=bool)
        if self.family == MULTINOMIAL and self.n_classes == 0:
            self.n_classes = int(self.y.max()) + 1
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    @property
    def n_linear(self) -> int:
        return self.n_classes if self.family == MULTINOMIAL else 1

    def take(self, rows) -> "GlmProblem":
        return GlmProblem(self.y[rows], self.X[rows], self.family, self.alpha,
                          self.penalized, self.n_classes, self.column_names)

    def with_alpha(self, alpha: float) -> "GlmProblem":
        return GlmProblem(self.y, self.X, self.family, alpha, self.penalized,
                          self.n_classes, self.column_names)


@dataclass
class PathFit:
    """Solutions along a descending lambda sequence.

    ``coefs`` has shape (n_lambda, n_linear, m) on the scale of the supplied
    design; ``intercepts`` has shape (n_lambda, n_linear).
    """

    lambdas: np.ndarray
    alpha: float
    family: str
    intercepts: np.ndarray
    coefs: np.ndarray
    deviance: np.ndarray
    loglik: np.ndarray
    df: np.ndarray
    std_coefs: np.ndarray = field(repr=False, default=None)

    @property
    def n_lambda(self) -> int:
        return len(self.lambdas)


@dataclass
class SelectionResult:
    chosen_lambda: float
    chosen_alpha: float
    method: str
    criterion_values: list[tuple[float, float, float]]
    path: PathFit
    index: int

    @property
    def intercepts(self) -> np.ndarray:
        return self.path.intercepts[self.index]

    @property
    def coefs(self) -> np.ndarray:
        return self.path.coefs[self.index]


class _Design:
    """Standardized design with a leading intercept column."""

    def __init__(self, problem: GlmProblem):
        X = problem.X
        self.means = X.mean(axis=0)
        sds = X.std(axis=0)
        self.constant = ~(sds > 1e-12 * np.maximum(1.0, np.abs(self.means)))
        self.sds = np.where(self.constant, 1.0, sds)
        Xs = (X - self.means) / self.sds
        Xs[:, self.constant] = 0.0
        n = X.shape[0]
        self.Z = np.column_stack([np.ones(n), Xs])
        self.pf = np.concatenate([[0.0], problem.penalized.astype(float)])
        self.active = np.concatenate([[True], ~self.constant])

    def to_original(self, beta_std: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        slopes = beta_std[:, 1:] / self.sds
        slopes[:, self.constant] = 0.0
        intercepts = beta_std[:, 0] - slopes @ self.means
        return intercepts, slopes


def _check_response(problem: GlmProblem):
    y = problem.y
    if problem.family == MULTINOMIAL:
        present = np.unique(y.astype(int))
        if len(present) < 2:
            raise DegenerateResponseError("categorical response has a single level")
        return
    if problem.family == POISSON and np.any(y < 0):
        raise DegenerateResponseError("poisson response has negative values")
    if not np.ptp(y) > 0:
        raise DegenerateResponseError("response has zero variance")


def _onehot(problem: GlmProblem) -> np.ndarray:
    Y = np.zeros((problem.n, problem.n_classes))
    Y[np.arange(problem.n), problem.y.astype(int)] = 1.0
    return Y


def _linear(Z: np.ndarray, beta: np.ndarray) -> np.ndarray:
    return np.clip(Z @ beta.T, -_ETA_CLIP, _ETA_CLIP)


def _neg_loglik(family: str, y, Y, eta: np.ndarray) -> float:
    """Negative log-likelihood up to terms constant in the coefficients."""
    if family == GAUSSIAN:
        return 0.5 * float(np.sum((y - eta[:, 0]) ** 2))
    if family == POISSON:
        e = eta[:, 0]
        return float(np.sum(np.exp(e) - y * e))
    return float(np.sum(logsumexp(eta, axis=1) - np.sum(Y * eta, axis=1)))


def _penalty(beta: np.ndarray, pf: np.ndarray, lam: float, alpha: float) -> float:
    return lam * float(np.sum(pf * (alpha * np.abs(beta) + 0.5 * (1 - alpha) * beta ** 2)))


def _residuals(family: str, y, Y, eta: np.ndarray) -> np.ndarray:
    """Response minus mean, shape (n, n_linear)."""
    if family == GAUSSIAN:
        return (y - eta[:, 0])[:, None]
    if family == POISSON:
        return (y - np.exp(eta[:, 0]))[:, None]
    P = np.exp(eta - logsumexp(eta, axis=1, keepdims=True))
    return Y - P


def objective(problem: GlmProblem, lam: float, beta_std: np.ndarray) -> float:
    """Penalized objective at standardized coefficients ``beta_std`` (n_linear x (m+1))."""
    d = _Design(problem)
    Y = _onehot(problem) if problem.family == MULTINOMIAL else None
    eta = _linear(d.Z, np.atleast_2d(beta_std))
    return (_neg_loglik(problem.family, problem.y, Y, eta) / problem.n
            + _penalty(np.atleast_2d(beta_std), d.pf, lam, problem.alpha))


def gradient(problem: GlmProblem, lam: float, beta_std: np.ndarray) -> np.ndarray:
    """Gradient of :func:`objective`; the l1 term contributes ``lam*alpha*sign(b)``."""
    d = _Design(problem)
    beta_std = np.atleast_2d(beta_std)
    Y = _onehot(problem) if problem.family == MULTINOMIAL else None
    eta = _linear(d.Z, beta_std)
    loss = -(_residuals(problem.family, problem.y, Y, eta).T @ d.Z) / problem.n
    pen = lam * d.pf * (problem.alpha * np.sign(beta_std) + (1 - problem.alpha) * beta_std)
    return loss + pen


def loss_gradient(problem: GlmProblem, intercepts, coefs) -> np.ndarray:
    """Gradient of -loglik/n w.r.t. standardized slopes, shape (n_linear, m)."""
    d = _Design(problem)
    Y = _onehot(problem) if problem.family == MULTINOMIAL else None
    eta = predict_linear(np.atleast_1d(intercepts), np.atleast_2d(coefs), problem.X)
    r = _residuals(problem.family, problem.y, Y, eta)
    return -(r.T @ d.Z[:, 1:]) / problem.n


class _Solver:
    def __init__(self, problem: GlmProblem, tol: float, max_sweeps: int):
        _check_response(problem)
        self.problem = problem
        self.d = _Design(problem)
        self.tol = tol
        self.max_sweeps = int(max_sweeps)
        self.K = problem.n_linear
        self.Y = _onehot(problem) if problem.family == MULTINOMIAL else None
        if problem.family == GAUSSIAN:
            Z = self.d.Z
            self.G = Z.T @ Z / problem.n
            self.c = Z.T @ problem.y / problem.n
        self.beta = self._null_start()

    def _null_start(self) -> np.ndarray:
        y, K, m1 = self.problem.y, self.K, self.d.Z.shape[1]
        beta = np.zeros((K, m1))
        if self.problem.family == GAUSSIAN:
            beta[0, 0] = y.mean()
        elif self.problem.family == POISSON:
            beta[0, 0] = np.log(max(y.mean(), 1e-10))
        else:
            prop = np.clip(self.Y.mean(axis=0), 1e-10, None)
            beta[:, 0] = np.log(prop) - np.log(prop).mean()
        return beta

    def objective(self, beta: np.ndarray, lam: float) -> float:
        eta = _linear(self.d.Z, beta)
        return (_neg_loglik(self.problem.family, self.problem.y, self.Y, eta) / self.problem.n
                + _penalty(beta, self.d.pf, lam, self.problem.alpha))

    def _quadratic_step(self, k: int, beta: np.ndarray, active, l1, l2) -> np.ndarray:
        Z, y = self.d.Z, self.problem.y
        eta = _linear(Z, beta)
        if self.problem.family == POISSON:
            mu = np.exp(eta[:, 0])
            w = np.maximum(mu, 1e-10)
            z = eta[:, 0] + (y - mu) / w
        else:
            P = np.exp(eta - logsumexp(eta, axis=1, keepdims=True))
            pk = P[:, k]
            w = np.maximum(pk * (1 - pk), 1e-5)
            z = eta[:, k] + (self.Y[:, k] - pk) / w
        n = self.problem.n
        G = Z.T @ (Z * w[:, None]) / n
        c = Z.T @ (w * z) / n
        new = beta[k].copy()
        sweeps = _cd_gram(G, c, new, l1, l2, active, self.tol, self.max_sweeps)
        if sweeps < 0:
            raise ConvergenceError("coordinate descent hit the sweep cap")
        return new

    def solve(self, lam: float, active=None) -> np.ndarray:
        """Minimize the objective at ``lam`` warm-starting from the current state."""
        alpha = self.problem.alpha
        pf = self.d.pf
        l1 = lam * alpha * pf
        l2 = lam * (1 - alpha) * pf
        act = self.d.active if active is None else active
        beta = self.beta
        try:
            if self.problem.family == GAUSSIAN:
                b = beta[0].copy()
                if _cd_gram(self.G, self.c, b, l1, l2, act, self.tol, self.max_sweeps) < 0:
                    raise ConvergenceError("coordinate descent hit the sweep cap")
                beta = b[None, :]
            else:
                beta = self._irls(beta, lam, act, l1, l2)
        except ConvergenceError as exc:
            raise ConvergenceError(f"{exc} at lambda={lam:.6g}", lam) from None
        self.beta = beta
        return beta

    def _irls(self, beta, lam, act, l1, l2):
        beta = beta.copy()
        f_old = self.objective(beta, lam)
        for _ in range(_MAX_IRLS):
            start = beta.copy()
            for k in range(self.K):
                new_k = self._quadratic_step(k, beta, act, l1, l2)
                trial = beta.copy()
                trial[k] = new_k
                f_new = self.objective(trial, lam)
                step = 1.0
                while f_new > f_old + 1e-12 * max(1.0, abs(f_old)) and step > 1e-6:
                    step *= 0.5
                    trial[k] = beta[k] + step * (new_k - beta[k])
                    f_new = self.objective(trial, lam)
                beta = trial
                f_old = f_new
            if self.K > 1:
                beta[:, 0] -= beta[:, 0].mean()
            if np.max(np.abs(beta - start)) < self.tol:
                if self.K > 1 and self.problem.alpha == 1.0:
                    # lasso optimum is flat along per-column class shifts; median picks one
                    beta[:, 1:] -= np.median(beta[:, 1:], axis=0)
                return beta
        raise ConvergenceError("IRLS did not converge")


def _exact_zeros(beta: np.ndarray, pf: np.ndarray) -> np.ndarray:
    beta = beta.copy()
    beta[:, (pf > 0)] = np.where(np.abs(beta[:, pf > 0]) < 1e-15, 0.0, beta[:, pf > 0])
    return beta


def make_lambda_path(problem: GlmProblem, n_lambda: int = 50, ratio: float | None = None,
                     tol: float = DEFAULT_TOL) -> np.ndarray:
    """Log-spaced descending lambdas from the smallest all-zero lambda."""
    if n_lambda < 2:
        raise ValueError("n_lambda must be at least 2")
    solver = _Solver(problem, tol, DEFAULT_MAX_SWEEPS)
    # fit intercept and unpenalized columns only
    act = solver.d.active & (solver.d.pf == 0)
    beta = solver.solve(0.0, active=act)
    eta = _linear(solver.d.Z, beta)
    r = _residuals(problem.family, problem.y, solver.Y, eta)
    g = np.abs(r.T @ solver.d.Z) / problem.n
    g = g[:, (solver.d.pf > 0) & solver.d.active]
    gmax = float(g.max()) if g.size else 0.0
    if gmax <= 0:
        gmax = 1e-8
    lam_max = gmax / max(problem.alpha, ALPHA_FLOOR) * (1 + 1e-10)
    if ratio is None:
        ratio = 0.01 if problem.n > problem.m else 0.05
    return lam_max * ratio ** np.linspace(0.0, 1.0, n_lambda)


def _deviance_terms(family: str, y: np.ndarray, eta: np.ndarray, n_classes: int = 0) -> np.ndarray:
    """Per-observation deviance."""
    if family == GAUSSIAN:
        return (y - eta[:, 0]) ** 2
    if family == POISSON:
        mu = np.exp(eta[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            ylog = np.where(y > 0, y * np.log(y / mu), 0.0)
        return 2.0 * (ylog - (y - mu))
    logp = eta - logsumexp(eta, axis=1, keepdims=True)
    return -2.0 * logp[np.arange(len(y)), y.astype(int)]


def _loglik(family: str, y: np.ndarray, eta: np.ndarray) -> float:
    n = len(y)
    if family == GAUSSIAN:
        sigma2 = max(float(np.mean((y - eta[:, 0]) ** 2)), 1e-300)
        return -0.5 * n * (np.log(2 * np.pi * sigma2) + 1.0)
    if family == POISSON:
        e = eta[:, 0]
        return float(np.sum(y * e - np.exp(e) - gammaln(y + 1)))
    logp = eta - logsumexp(eta, axis=1, keepdims=True)
    return float(np.sum(logp[np.arange(n), y.astype(int)]))


def predict_linear(intercepts, coefs, X) -> np.ndarray:
    eta = np.asarray(intercepts)[None, :] + np.asarray(X) @ np.asarray(coefs).T
    return np.clip(eta, -_ETA_CLIP, _ETA_CLIP)


def fit_path(problem: GlmProblem, lambdas, tol: float = DEFAULT_TOL,
             max_sweeps: int = DEFAULT_MAX_SWEEPS) -> PathFit:
    """Fit the elastic net at each of ``lambdas`` (strictly descending) with warm starts."""
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.ndim != 1 or len(lambdas) == 0:
        raise ValueError("lambdas must be a non-empty 1-d sequence")
    if len(lambdas) > 1 and np.any(np.diff(lambdas) >= 0):
        raise ValueError("lambdas must be strictly descending")
    solver = _Solver(problem, tol, max_sweeps)
    L, K, m = len(lambdas), problem.n_linear, problem.m
    std = np.zeros((L, K, m + 1))
    icpt = np.zeros((L, K))
    coefs = np.zeros((L, K, m))
    dev = np.zeros(L)
    ll = np.zeros(L)
    df = np.zeros(L, dtype=int)
    penalized = problem.penalized
    for i, lam in enumerate(lambdas):
        beta = _exact_zeros(solver.solve(lam), solver.d.pf)
        solver.beta = beta
        std[i] = beta
        icpt[i], coefs[i] = solver.d.to_original(beta)
        eta = _linear(solver.d.Z, beta)
        dev[i] = float(np.sum(_deviance_terms(problem.family, problem.y, eta)))
        ll[i] = _loglik(problem.family, problem.y, eta)
        df[i] = int(np.count_nonzero(coefs[i][:, penalized]))
    return PathFit(lambdas, problem.alpha, problem.family, icpt, coefs, dev, ll, df, std)


def cv_folds(problem: GlmProblem, folds: int, seed: int) -> np.ndarray:
    """Seeded fold labels; stratified by response level for categorical responses."""
    n = problem.n
    if not 2 <= folds <= n:
        raise FoldError(f"folds must lie between 2 and n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    if problem.family == MULTINOMIAL:
        perm = perm[np.argsort(problem.y[perm], kind="stable")]
    labels = np.empty(n, dtype=int)
    labels[perm] = np.arange(n) % folds
    if problem.family == MULTINOMIAL:
        present = np.unique(problem.y)
        for f in range(folds):
            if len(np.unique(problem.y[labels != f])) < len(present):
                raise FoldError(
                    f"a training fold loses a response level with {folds} folds; use fewer folds")
    return labels


def _pick(values: np.ndarray, lambdas_by_alpha, alphas) -> tuple[int, int]:
    """Argmin with ties toward larger lambda, then larger alpha."""
    best = None
    for a_idx, alpha in enumerate(alphas):
        for l_idx, lam in enumerate(lambdas_by_alpha[a_idx]):
            key = (values[a_idx][l_idx], -lam, -alpha)
            if best is None or key < best[0]:
                best = (key, a_idx, l_idx)
    return best[1], best[2]


def cv_criterion(problem: GlmProblem, lambdas, folds: int, seed: int,
                 tol: float = DEFAULT_TOL) -> np.ndarray:
    """Mean out-of-fold deviance per lambda."""
    labels = cv_folds(problem, folds, seed)
    total = np.zeros(len(lambdas))
    for f in range(folds):
        train = labels != f
        test = ~train
        sub = problem.take(train)
        path = fit_path(sub, lambdas, tol=tol)
        for i in range(len(lambdas)):
            eta = predict_linear(path.intercepts[i], path.coefs[i], problem.X[test])
            total[i] += float(np.sum(_deviance_terms(problem.family, problem.y[test], eta)))
    return total / problem.n


def ebic_criterion(problem: GlmProblem, path: PathFit, gamma: float) -> np.ndarray:
    """EBIC = -2 loglik + df log n + 2 gamma df log m, df counting intercepts."""
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    n, m = problem.n, max(int(problem.penalized.sum()), 1)
    fixed = problem.n_linear * (1 + int((~problem.penalized).sum()))
    df = path.df + fixed
    return -2.0 * path.loglik + df * np.log(n) + 2.0 * gamma * df * np.log(m)


def select_cv(problem: GlmProblem, path: PathFit, folds: int = 10, seed: int = 0,
              tol: float = DEFAULT_TOL) -> SelectionResult:
    crit = cv_criterion(problem, path.lambdas, folds, seed, tol)
    _, i = _pick([crit], [path.lambdas], [path.alpha])
    return SelectionResult(float(path.lambdas[i]), path.alpha, "cv",
                           [(path.alpha, float(l), float(v)) for l, v in zip(path.lambdas, crit)],
                           path, i)


def select_ebic(problem: GlmProblem, path: PathFit, gamma: float = 0.25) -> SelectionResult:
    crit = ebic_criterion(problem, path, gamma)
    _, i = _pick([crit], [path.lambdas], [path.alpha])
    return SelectionResult(float(path.lambdas[i]), path.alpha, "ebic",
                           [(path.alpha, float(l), float(v)) for l, v in zip(path.lambdas, crit)],
                           path, i)


def fit_select(problem: GlmProblem, alpha_grid=(1.0,), method: str = "ebic",
               folds: int = 10, gamma: float = 0.25, seed: int = 0,
               n_lambda: int = 50, ratio: float | None = None,
               tol: float = DEFAULT_TOL) -> SelectionResult:
    """Fit a path per alpha and choose (alpha, lambda) jointly by CV or EBIC."""
    paths, crits = [], []
    for alpha in alpha_grid:
        sub = problem.with_alpha(alpha)
        lambdas = make_lambda_path(sub, n_lambda, ratio, tol)
        path = fit_path(sub, lambdas, tol=tol)
        if method == "cv":
            crit = cv_criterion(sub, lambdas, folds, seed, tol)
        elif method == "ebic":
            crit = ebic_criterion(sub, path, gamma)
        else:
            raise ValueError(f"unknown selection method {method!r}")
        paths.append(path)
        crits.append(crit)
    a, i = _pick(crits, [p.lambdas for p in paths], list(alpha_grid))
    table = [(float(alpha), float(l), float(v))
             for alpha, p, c in zip(alpha_grid, paths, crits) for l, v in zip(p.lambdas, c)]
    return SelectionResult(float(paths[a].lambdas[i]), float(alpha_grid[a]), method, table,
                           paths[a], i)
