"""Four ways to fill the holes, behind one dispatch function.

``predict`` and ``draw`` are the two regression imputers (conditional
mean, and conditional mean plus residual noise). ``pmm`` is type-1
predictive mean matching. ``softimpute`` is low-rank matrix completion
by alternating least squares. The forest imputer lives in its own module
and is routed to by :func:`impute_dispatch`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from .ampute import CompletedDataset, IncompleteDataset
from .forest import ForestParams, impute_forest
from .linmodel import DesignSpec, bayes_param_draw, design_matrix, fit_ols, predict
from .stochastics import RngStream, draw_standard_normal

# the imputation model of every regression-based method: y on both predictors
IMPUTE_DESIGN = DesignSpec(response="y", predictors=("x1", "x2"))


class ImputationMethod:
    """Marker base class; concrete methods are frozen dataclasses below."""

    label: ClassVar[str] = ""


@dataclass(frozen=True)
class Predict(ImputationMethod):
    label: ClassVar[str] = "predict"


@dataclass(frozen=True)
class Draw(ImputationMethod):
    bayes: bool = False

    label: ClassVar[str] = "draw"


@dataclass(frozen=True)
class Pmm(ImputationMethod):
    donors: int = 5

    label: ClassVar[str] = "pmm"

    def __post_init__(self):
        if self.donors < 1:
            raise ValueError(f"donors must be at least 1, got {self.donors}")


@dataclass(frozen=True)
class SoftImpute(ImputationMethod):
    """Low-rank ALS completion; ``ridge`` is the L2 penalty weight."""

    rank_max: int = 2
    ridge: float = 0.0
    max_iter: int = 200
    tol: float = 1e-5
    center: bool = False

    label: ClassVar[str] = "softimpute"

    def __post_init__(self):
        if self.rank_max < 1:
            raise ValueError(f"rank_max must be at least 1, got {self.rank_max}")
        if self.ridge < 0:
            raise ValueError(f"ridge must be non-negative, got {self.ridge}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be at least 1, got {self.max_iter}")


@dataclass(frozen=True)
class Forest(ImputationMethod):
    params: ForestParams = field(default_factory=ForestParams)
    max_outer_iter: int = 10

    label: ClassVar[str] = "forest"

    def __post_init__(self):
        if self.max_outer_iter < 1:
            raise ValueError(f"max_outer_iter must be at least 1, got {self.max_outer_iter}")


def impute_predict(inc: IncompleteDataset) -> CompletedDataset:
    """Fill masked y with fitted values from OLS on the observed rows."""
    fit = fit_ols(inc.observed_rows(), IMPUTE_DESIGN)
    values = predict(fit, inc.missing_rows())
    return CompletedDataset.from_imputation(inc, values, Predict())


def impute_draw(inc: IncompleteDataset, stream: RngStream, bayes: bool = False) -> CompletedDataset:
    """Fill masked y with fitted values plus N(0, sigma2) residual noise.

    With ``bayes`` the coefficients and residual variance are first drawn
    from their posterior (one chi-square draw, then the coefficient
    normals); the noise vector is always drawn last.
    """
    fit = fit_ols(inc.observed_rows(), IMPUTE_DESIGN)
    if bayes:
        beta, sigma2 = bayes_param_draw(fit, stream)
    else:
        beta, sigma2 = fit.coefficients, fit.residual_variance
    x_mis = design_matrix(inc.missing_rows(), IMPUTE_DESIGN)
    noise = math.sqrt(sigma2) * draw_standard_normal(stream, inc.n_missing)
    return CompletedDataset.from_imputation(inc, x_mis @ beta + noise, Draw(bayes))


def impute_pmm(inc: IncompleteDataset, stream: RngStream, donors: int = 5) -> CompletedDataset:
    """Type-1 predictive mean matching.

    Observed rows are scored with the OLS coefficients, missing rows with
    a Bayesian parameter draw; each missing row copies the observed y of
    one of its ``donors`` nearest neighbours in predicted value, chosen
    uniformly. Stream order: posterior draw first, then donor picks.
    """
    if donors < 1:
        raise ValueError(f"donors must be at least 1, got {donors}")
    if donors > inc.n_observed:
        raise ValueError(f"donors={donors} exceeds the {inc.n_observed} observed rows")
    obs = inc.observed_rows()
    fit = fit_ols(obs, IMPUTE_DESIGN)
    yhat_obs = predict(fit, obs)
    beta_star, _ = bayes_param_draw(fit, stream)
    yhat_mis = design_matrix(inc.missing_rows(), IMPUTE_DESIGN) @ beta_star

    n_mis = inc.n_missing
    if n_mis == 0:
        return CompletedDataset.from_imputation(inc, np.empty(0), Pmm(donors))
    dist = np.abs(yhat_obs[None, :] - yhat_mis[:, None])
    if donors < dist.shape[1]:
        pool = np.argpartition(dist, donors - 1, axis=1)[:, :donors]
    else:
        pool = np.broadcast_to(np.arange(dist.shape[1]), dist.shape).copy()
    pick = stream.generator.integers(0, pool.shape[1], size=n_mis)
    donor_idx = pool[np.arange(n_mis), pick]
    return CompletedDataset.from_imputation(inc, obs["y"][donor_idx], Pmm(donors))


def als_matrix_complete(
    matrix: np.ndarray,
    rank_max: int,
    ridge: float,
    max_iter: int,
    tol: float,
    stream: RngStream,
) -> tuple[np.ndarray, list[float], bool]:
    """Complete a matrix with NaN holes by rank-constrained ALS.

    Factorizes as A @ B.T with rank <= rank_max, minimizing the squared
    error over observed entries plus ridge * (|A|^2 + |B|^2). Each half
    step is a ridge regression against the matrix refilled with the
    current predictions at the holes; refilling makes the step an exact
    majorize-minimize move on the observed-entry objective, so the
    objective never increases, and it pins hole predictions to the
    global low-rank structure instead of letting per-row systems run
    free. Returns the reconstruction, the objective value at start and
    after every iteration, and a convergence flag.
    """
    m = np.asarray(matrix, dtype=np.float64)
    observed = np.isfinite(m)
    n_rows, n_cols = m.shape
    rank = min(rank_max, n_rows, n_cols)
    holes = ~observed

    a = draw_standard_normal(stream, n_rows * rank).reshape(n_rows, rank)
    b = np.zeros((n_cols, rank))
    filled = np.where(observed, m, 0.0)  # holes start at the b = 0 prediction

    def objective() -> float:
        resid = (m - a @ b.T)[observed]
        penalty = ridge * (float(np.sum(a * a)) + float(np.sum(b * b)))
        return float(resid @ resid) + penalty

    def refill() -> None:
        recon = a @ b.T
        filled[holes] = recon[holes]

    objectives = [objective()]
    floor = 1e-12 * objectives[0] + np.finfo(float).tiny
    converged = False
    for _ in range(max_iter):
        b = _gram_solve(a.T @ a, a.T @ filled, ridge).T
        refill()
        a = _gram_solve(b.T @ b, b.T @ filled.T, ridge).T
        refill()
        objectives.append(objective())
        prev, cur = objectives[-2], objectives[-1]
        if abs(prev - cur) <= tol * max(prev, np.finfo(float).tiny) or cur <= floor:
            converged = True
            break
    return a @ b.T, objectives, converged


def _gram_solve(gram: np.ndarray, rhs: np.ndarray, ridge: float) -> np.ndarray:
    """Solve (gram + ridge I) w = rhs column-wise; pseudoinverse fallback."""
    if ridge > 0:
        return np.linalg.solve(gram + ridge * np.eye(gram.shape[0]), rhs)
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(gram) @ rhs


def impute_softimpute(
    inc: IncompleteDataset, params: SoftImpute, stream: RngStream
) -> CompletedDataset:
    """Fill masked y from the low-rank ALS reconstruction of (x1, x2, y).

    The matrix is used raw by default; ``params.center`` subtracts
    per-column observed means first and restores them afterwards.
    """
    matrix = np.column_stack([inc.x1, inc.x2, inc.y])
    shift = np.zeros(3)
    if params.center:
        shift = np.array([np.nanmean(matrix[:, j]) for j in range(3)])
        matrix = matrix - shift
    recon, _, converged = als_matrix_complete(
        matrix, params.rank_max, params.ridge, params.max_iter, params.tol, stream
    )
    values = recon[inc.mask, 2] + shift[2]
    return CompletedDataset.from_imputation(inc, values, params, converged=converged)


def impute_dispatch(
    inc: IncompleteDataset, method: ImputationMethod, stream: RngStream
) -> CompletedDataset:
    """Route to the imputer matching ``method``."""
    if isinstance(method, Predict):
        return impute_predict(inc)
    if isinstance(method, Draw):
        return impute_draw(inc, stream, bayes=method.bayes)
    if isinstance(method, Pmm):
        return impute_pmm(inc, stream, donors=method.donors)
    if isinstance(method, SoftImpute):
        return impute_softimpute(inc, method, stream)
    if isinstance(method, Forest):
        return impute_forest(inc, method.params, method.max_outer_iter, stream)
    raise ValueError(f"unknown imputation method: {method!r}")
