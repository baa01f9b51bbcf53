"""Maximum-likelihood regression on the variation-independent parameterizations.

Each effect measure is log-linear in a shared design row ``x`` (intercept
first)::

    log RR0(x) = x @ beta1      log OR10(x) = x @ beta2
    log RR11(x) = x @ beta3     log GOP(x)  = x @ beta4

Any coefficient vector gives a valid set of cell risks, so the likelihood is
defined on all of R^p and the optimizer never has to reject a point for
infeasibility. The two-arm model does the same with ``(log RR, log OP)``.

The likelihood is evaluated on sufficient statistics: rows are grouped by
unique design row, and each group solves a single root per evaluation.
"""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from vipar.measures import (
    EffectVector,
    inverse_gop,
    inverse_gop_many,
    inverse_rr_op_many,
)
from vipar.rootfind import SolverConfig

log = logging.getLogger(__name__)

__all__ = [
    "SchemaError",
    "Dataset",
    "GopRegressionModel",
    "RrOpRegressionModel",
    "FitConfig",
    "FitResult",
    "effects_at",
    "predict",
    "neg_log_lik",
    "fit_gop",
    "fit_rr_op",
    "numerical_gradient",
    "boundary_cells",
    "empirical_cell_table",
]

RESERVED = ("y", "a0", "a1")


class SchemaError(ValueError):
    """Malformed dataset: missing, non-numeric or non-binary columns."""


def _binary(name, values):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise SchemaError(f"column {name!r} must be one-dimensional")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise SchemaError(f"column {name!r} must contain only 0/1 values")
    return arr.astype(np.int8)


@dataclass
class Dataset:
    """Rows of ``(design, a0, a1, y)``.

    ``design`` already includes the leading intercept column. ``a1`` is
    ``None`` for two-arm (single treatment) data, in which case ``a0`` is the
    treatment indicator.
    """

    design: np.ndarray
    a0: np.ndarray
    a1: Optional[np.ndarray]
    y: np.ndarray
    columns: tuple = ()

    def __post_init__(self):
        X = np.asarray(self.design, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or X.shape[0] == 0:
            raise SchemaError("dataset must be a nonempty 2-D design matrix")
        if not np.isfinite(X).all():
            raise SchemaError("design matrix contains non-finite values")
        self.design = X
        n = X.shape[0]
        self.y = _binary("y", self.y)
        self.a0 = _binary("a0", self.a0)
        if self.a1 is not None:
            self.a1 = _binary("a1", self.a1)
        for name in ("y", "a0", "a1"):
            col = getattr(self, name)
            if col is not None and col.shape[0] != n:
                raise SchemaError(f"column {name!r} has {col.shape[0]} rows, design has {n}")
        if not self.columns:
            self.columns = ("intercept",) + tuple(f"x{j}" for j in range(1, X.shape[1]))
        self.columns = tuple(self.columns)
        if len(self.columns) != X.shape[1]:
            raise SchemaError("column names do not match the design width")

    @classmethod
    def from_covariates(cls, covariates, a0, y, a1=None, names=None):
        """Build a dataset from raw covariates; the intercept is prepended."""
        y = np.asarray(y)
        cov = np.asarray(covariates, dtype=np.float64)
        if cov.size == 0:
            cov = np.empty((y.shape[0], 0))
        elif cov.ndim == 1:
            cov = cov[:, None]
        names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(1, cov.shape[1] + 1))
        X = np.column_stack([np.ones(cov.shape[0]), cov])
        return cls(X, a0, a1, y, ("intercept",) + names)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def two_arm(self) -> bool:
        return self.a1 is None

    @property
    def covariate_names(self):
        return self.columns[1:]

    def to_csv(self, path_or_file):
        """Write covariates (no intercept), then ``a0``, ``a1`` and ``y``.

        Covariates are printed with 9 significant digits.
        """
        header = list(self.covariate_names) + ["a0"] + ([] if self.two_arm else ["a1"]) + ["y"]
        own = isinstance(path_or_file, (str, bytes, os.PathLike))
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                row = [f"{v:.9g}" for v in self.design[i, 1:]]
                row.append(str(int(self.a0[i])))
                if not self.two_arm:
                    row.append(str(int(self.a1[i])))
                row.append(str(int(self.y[i])))
                w.writerow(row)
        finally:
            if own:
                fh.close()

    @classmethod
    def from_csv(cls, path, two_arm=None):
        """Read a dataset with a header row.

        ``y``, ``a0`` and ``a1`` are reserved; every other column is a
        numeric covariate, kept in file order. Without an ``a1`` column the
        data are treated as two-arm unless ``two_arm=False`` is forced.
        """
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise SchemaError(f"{path}: empty file, header required") from None
            rows = [r for r in reader if r and any(cell.strip() for cell in r)]
        if len(set(header)) != len(header):
            raise SchemaError(f"{path}: duplicate column names in header")
        for name in ("y", "a0"):
            if name not in header:
                raise SchemaError(f"{path}: missing required column {name!r}")
        has_a1 = "a1" in header
        if two_arm is None:
            two_arm = not has_a1
        if not two_arm and not has_a1:
            raise SchemaError(f"{path}: missing required column 'a1'")
        if not rows:
            raise SchemaError(f"{path}: no data rows")
        try:
            data = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
        except ValueError as exc:
            raise SchemaError(f"{path}: non-numeric value ({exc})") from None
        if data.shape[1] != len(header):
            raise SchemaError(f"{path}: ragged rows")
        col = {name: data[:, j] for j, name in enumerate(header)}
        cov_names = [h for h in header if h not in RESERVED]
        cov = np.column_stack([col[h] for h in cov_names]) if cov_names else np.empty((len(rows), 0))
        return cls.from_covariates(
            cov,
            a0=col["a0"],
            y=col["y"],
            a1=None if two_arm else col["a1"],
            names=cov_names,
        )


@dataclass
class GopRegressionModel:
    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    beta4: np.ndarray

    def __post_init__(self):
        betas = [np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in
                 (self.beta1, self.beta2, self.beta3, self.beta4)]
        if len({b.shape for b in betas}) != 1 or betas[0].ndim != 1:
            raise ValueError("all four coefficient vectors must be 1-D and of equal length")
        if not all(np.isfinite(b).all() for b in betas):
            raise ValueError("coefficients must be finite")
        self.beta1, self.beta2, self.beta3, self.beta4 = betas

    names = ("log_rr0", "log_or10", "log_rr11", "log_gop")

    @classmethod
    def zeros(cls, k):
        return cls(*(np.zeros(k) for _ in range(4)))

    @classmethod
    def from_matrix(cls, B):
        B = np.asarray(B, dtype=np.float64)
        return cls(*(B[:, j].copy() for j in range(4)))

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.beta1, self.beta2, self.beta3, self.beta4])

    @property
    def n_features(self) -> int:
        return self.beta1.shape[0]


@dataclass
class RrOpRegressionModel:
    beta_rr: np.ndarray
    beta_op: np.ndarray

    def __post_init__(self):
        b1 = np.atleast_1d(np.asarray(self.beta_rr, dtype=np.float64))
        b2 = np.atleast_1d(np.asarray(self.beta_op, dtype=np.float64))
        if b1.shape != b2.shape or b1.ndim != 1:
            raise ValueError("coefficient vectors must be 1-D and of equal length")
        if not (np.isfinite(b1).all() and np.isfinite(b2).all()):
            raise ValueError("coefficients must be finite")
        self.beta_rr, self.beta_op = b1, b2

    names = ("log_rr", "log_op")

    @classmethod
    def zeros(cls, k):
        return cls(np.zeros(k), np.zeros(k))

    @classmethod
    def from_matrix(cls, B):
        B = np.asarray(B, dtype=np.float64)
        return cls(B[:, 0].copy(), B[:, 1].copy())

    @property
    def matrix(self) -> np.ndarray:
        return np.column_stack([self.beta_rr, self.beta_op])

    @property
    def n_features(self) -> int:
        return self.beta_rr.shape[0]


def _design_row(x, k):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (k,):
        raise ValueError(f"design row has length {x.shape[0] if x.ndim == 1 else x.shape}, model expects {k}")
    if not np.isfinite(x).all():
        raise ValueError("design row must be finite")
    return x


def effects_at(model: GopRegressionModel, x) -> EffectVector:
    """Exponentiated linear predictors ``exp(x @ beta_j)``."""
    x = _design_row(x, model.n_features)
    eta = x @ model.matrix
    return EffectVector(*np.exp(eta).tolist())


def predict(model: GopRegressionModel, x, a1: int, a0: int, cfg: Optional[SolverConfig] = None) -> float:
    """Risk ``P(Y=1 | a1, a0, x)`` under the fitted measures."""
    if a1 not in (0, 1) or a0 not in (0, 1):
        raise ValueError("a1 and a0 must be 0 or 1")
    return inverse_gop(effects_at(model, x), cfg).cell(a1, a0)


# --------------------------------------------------------------------------
# likelihood on grouped data


@dataclass
class _Grouped:
    X: np.ndarray  # unique design rows, m x k
    ones: np.ndarray  # m x ncells counts of y == 1
    zeros: np.ndarray  # m x ncells counts of y == 0
    n_slots: int


def _cell_index(data: Dataset):
    # gop probs are ordered (p00, p01, p10, p11); two-arm probs are (p1, p0)
    if data.two_arm:
        return 1 - data.a0.astype(np.int64), 2
    return 2 * data.a1.astype(np.int64) + data.a0.astype(np.int64), 4


def _group(data: Dataset) -> _Grouped:
    X, inv = np.unique(data.design, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    cell, ncells = _cell_index(data)
    ones = np.zeros((X.shape[0], ncells))
    zeros = np.zeros((X.shape[0], ncells))
    np.add.at(ones, (inv, cell), data.y == 1)
    np.add.at(zeros, (inv, cell), data.y == 0)
    return _Grouped(X, ones, zeros, 4 if not data.two_arm else 2)


def _probs(B, X, n_slots, cfg):
    with np.errstate(over="ignore"):
        eff = np.exp(X @ B)
    if not np.isfinite(eff).all() or not (eff > 0.0).all():
        return None
    if n_slots == 4:
        res = inverse_gop_many(eff[:, 0], eff[:, 1], eff[:, 2], eff[:, 3], cfg)
    else:
        res = inverse_rr_op_many(eff[:, 0], eff[:, 1], cfg)
    if not res.converged.all():
        return None
    return res.probs


def _nll_grouped(B, g: _Grouped, cfg) -> float:
    P = _probs(B, g.X, g.n_slots, cfg)
    if P is None:
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(g.ones > 0, g.ones * np.log(P), 0.0)
        t0 = np.where(g.zeros > 0, g.zeros * np.log1p(-P), 0.0)
    terms = np.concatenate([t1.ravel(), t0.ravel()])
    if not np.isfinite(terms).all():
        return math.inf
    # fsum keeps the total independent of summation order and accurate
    # enough for finite-difference gradients on large n
    return -math.fsum(terms.tolist())


def neg_log_lik(model, data: Dataset, cfg: Optional[SolverConfig] = None) -> float:
    """Bernoulli negative log-likelihood of ``data`` under ``model``.

    ``model`` is a ``GopRegressionModel`` for sequential-treatment data or a
    ``RrOpRegressionModel`` for two-arm data.
    """
    g = _group(data)
    _check_model(model, data)
    return _nll_grouped(model.matrix, g, cfg or SolverConfig())


def _check_model(model, data):
    if model.n_features != data.design.shape[1]:
        raise ValueError(
            f"model has {model.n_features} coefficients per measure, design has {data.design.shape[1]} columns"
        )
    if isinstance(model, GopRegressionModel) and data.two_arm:
        raise ValueError("GOP model needs both a0 and a1")
    if isinstance(model, RrOpRegressionModel) and not data.two_arm:
        raise ValueError("RR/OP model needs two-arm data (no a1 column)")


# --------------------------------------------------------------------------
# fitting


@dataclass
class FitConfig:
    """Optimizer settings.

    ``nuisance_terms`` restricts which design columns enter the nuisance
    model (log GOP or log OP); names or indices, ``None`` for all of them.
    The remaining nuisance coefficients are held at zero.
    """

    grad_tol: float = 1e-6
    max_iter: int = 500
    armijo: float = 1e-4
    max_halvings: int = 60
    fd_step: float = 1e-6
    max_step: float = 2.0
    method: str = "bfgs"
    nuisance_terms: Optional[Sequence] = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.method not in ("bfgs", "gd"):
            raise ValueError(f"method must be 'bfgs' or 'gd', got {self.method!r}")
        if not self.grad_tol > 0 or not self.fd_step > 0 or not self.max_step > 0:
            raise ValueError("grad_tol, fd_step and max_step must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class FitResult:
    model: object
    neg_log_lik: float
    iterations: int
    converged: bool
    grad_inf_norm: float
    # NLL at every accepted iterate, starting from the initial point
    history: list = field(default_factory=list)
    # coefficient matrices at every accepted iterate
    path: list = field(default_factory=list)
    boundary: bool = False
    message: str = ""

    def to_dict(self):
        m = self.model
        return {
            "model": type(m).__name__,
            "coefficients": {name: m.matrix[:, j].tolist() for j, name in enumerate(m.names)},
            "neg_log_lik": self.neg_log_lik,
            "iterations": self.iterations,
            "converged": self.converged,
            "grad_inf_norm": self.grad_inf_norm,
            "boundary": self.boundary,
            "message": self.message,
        }


def boundary_cells(data: Dataset):
    """Treatment cells that are empty or have a constant outcome.

    The saturated MLE for such a cell sits at risk 0 or 1, which no finite
    coefficient vector reaches.
    """
    cell, ncells = _cell_index(data)
    out = []
    for c in range(ncells):
        ys = data.y[cell == c]
        if ys.size == 0 or ys.min() == ys.max():
            out.append(c)
    return out


def empirical_cell_table(data: Dataset):
    """Observed outcome proportion in each treatment cell (NaN when empty)."""
    cell, ncells = _cell_index(data)
    props = np.full(ncells, np.nan)
    counts = np.zeros(ncells, dtype=np.int64)
    for c in range(ncells):
        m = cell == c
        counts[c] = int(m.sum())
        if counts[c]:
            props[c] = float(data.y[m].mean())
    return props, counts


def _free_mask(k, n_slots, columns, nuisance_terms):
    mask = np.ones((k, n_slots), dtype=bool)
    if nuisance_terms is None:
        return mask
    keep = set()
    for t in nuisance_terms:
        if isinstance(t, str):
            if t not in columns:
                raise ValueError(f"unknown nuisance term {t!r}; columns are {columns}")
            keep.add(columns.index(t))
        else:
            t = int(t)
            if not 0 <= t < k:
                raise ValueError(f"nuisance term index {t} out of range")
            keep.add(t)
    mask[:, n_slots - 1] = [j in keep for j in range(k)]
    return mask


def numerical_gradient(fun, theta, rel_step):
    """Central differences with step ``rel_step * max(1, |theta_j|)``."""
    theta = np.asarray(theta, dtype=np.float64)
    g = np.empty_like(theta)
    for j in range(theta.shape[0]):
        h = rel_step * max(1.0, abs(theta[j]))
        tp = theta.copy()
        tm = theta.copy()
        tp[j] += h
        tm[j] -= h
        g[j] = (fun(tp) - fun(tm)) / (2.0 * h)
    return g


class _Objective:
    """NLL as a function of the free coefficients only."""

    def __init__(self, data, n_slots, cfg: FitConfig):
        self.g = _group(data)
        self.k = data.design.shape[1]
        self.n_slots = n_slots
        self.mask = _free_mask(self.k, n_slots, data.columns, cfg.nuisance_terms)
        self.solver = cfg.solver
        self.fd_step = cfg.fd_step
        self.evals = 0

    def matrix(self, theta):
        B = np.zeros((self.k, self.n_slots))
        # column-major so the free parameters run beta1, beta2, ...
        B.T[self.mask.T] = theta
        return B

    def theta(self, B):
        return np.asarray(B).T[self.mask.T].copy()

    def __call__(self, theta):
        self.evals += 1
        return _nll_grouped(self.matrix(theta), self.g, self.solver)

    def grad(self, theta):
        return numerical_gradient(self, theta, self.fd_step)


def _minimize(obj: _Objective, theta0, cfg: FitConfig):
    theta = np.asarray(theta0, dtype=np.float64).copy()
    f = obj(theta)
    if not math.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    g = obj.grad(theta)
    n = theta.shape[0]
    H = np.eye(n)
    history = [f]
    path = [theta.copy()]
    it = 0
    message = "iteration limit reached"
    converged = False
    while True:
        gnorm = float(np.max(np.abs(g))) if n else 0.0
        if gnorm < cfg.grad_tol:
            converged = True
            message = "gradient tolerance reached"
            break
        if it >= cfg.max_iter:
            break
        d = -H @ g if cfg.method == "bfgs" else -g
        slope = float(g @ d)
        if not slope < 0.0:
            H = np.eye(n)
            d = -g
            slope = float(g @ d)
        big = float(np.max(np.abs(d)))
        if big > cfg.max_step:
            d *= cfg.max_step / big
            slope = float(g @ d)

        t = 1.0
        accepted = False
        for _ in range(cfg.max_halvings):
            trial = theta + t * d
            ft = obj(trial)
            if ft <= f + cfg.armijo * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if cfg.method == "bfgs" and not np.array_equal(H, np.eye(n)):
                log.debug("line search failed at iteration %d; resetting curvature", it)
                H = np.eye(n)
                continue
            message = "line search failed to decrease the objective"
            break

        it += 1
        s = trial - theta
        g_new = obj.grad(trial)
        yv = g_new - g
        theta, f, g = trial, ft, g_new
        history.append(f)
        path.append(theta.copy())
        if cfg.method == "bfgs":
            sy = float(s @ yv)
            if sy > 1e-12 * float(np.sqrt((s @ s) * (yv @ yv))):
                if it == 1:
                    H = np.eye(n) * (sy / float(yv @ yv))
                rho = 1.0 / sy
                V = np.eye(n) - rho * np.outer(s, yv)
                H = V @ H @ V.T + rho * np.outer(s, s)
        log.debug("iter %d nll=%.12g |g|=%.3g step=%.3g", it, f, float(np.max(np.abs(g))), t)

    gnorm = float(np.max(np.abs(g))) if n else 0.0
    return theta, f, it, converged, gnorm, history, path, message


def _fit(data: Dataset, n_slots, model_cls, cfg: Optional[FitConfig]):
    cfg = cfg or FitConfig()
    obj = _Objective(data, n_slots, cfg)
    theta0 = obj.theta(np.zeros((obj.k, n_slots)))
    theta, f, it, converged, gnorm, history, path, message = _minimize(obj, theta0, cfg)
    bad_cells = boundary_cells(data)
    if bad_cells:
        converged = False
        message = f"boundary data: empty or constant-outcome treatment cells {bad_cells}; " + message
    model = model_cls.from_matrix(obj.matrix(theta))
    log.info("fit %s: nll=%.10g iterations=%d converged=%s", model_cls.__name__, f, it, converged)
    return FitResult(
        model=model,
        neg_log_lik=f,
        iterations=it,
        converged=converged,
        grad_inf_norm=gnorm,
        history=history,
        path=[model_cls.from_matrix(obj.matrix(p)) for p in path],
        boundary=bool(bad_cells),
        message=message,
    )


def fit_gop(data: Dataset, cfg: Optional[FitConfig] = None) -> FitResult:
    """Fit the four log-linear measure models by maximum likelihood.

    Starts from all-zero coefficients (every cell risk 1/2). A dataset with
    an empty or constant-outcome treatment cell is fitted anyway, but the
    result is flagged ``converged=False, boundary=True``.
    """
    if data.two_arm:
        raise ValueError("fit_gop needs both a0 and a1; use fit_rr_op for two-arm data")
    return _fit(data, 4, GopRegressionModel, cfg)


def fit_rr_op(data: Dataset, cfg: Optional[FitConfig] = None) -> FitResult:
    """Two-arm analogue of ``fit_gop`` with ``(log RR, log OP)`` models; ``a0`` is the treatment."""
    if not data.two_arm:
        raise ValueError("fit_rr_op expects two-arm data without an a1 column")
    return _fit(data, 2, RrOpRegressionModel, cfg)
