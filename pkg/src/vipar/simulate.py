"""Synthetic data for the sequential-treatment DAG and parameter-grid sweeps.

Data-generating structure::

    L0 -> A0, L0 -> A1, L0 -> Y, A0 -> A1, A0 -> Y, A1 -> Y

``L0`` is Bernoulli(q) or Uniform(0, 1); both treatments follow logistic
models; ``Y | A1, A0, L0`` is Bernoulli with risk from the inverse GOP map
applied to the outcome model's measures at ``x = (1, L0)``.

Random numbers: ``numpy.random.SeedSequence(seed).spawn(4)`` gives four
independent PCG64 substreams, used in the fixed order L0, A0, A1, Y. Each
variable draws exactly ``n`` uniforms from its own substream, so changing a
treatment model never perturbs the L0 or Y draws.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from vipar.measures import (
    check_rr_sr_feasible,
    inverse_gop_many,
    rbc_risk,
    rr_sr_witness_interval,
)
from vipar.measures import inverse_rr_op_many
from vipar.regression import Dataset, GopRegressionModel, RrOpRegressionModel
from vipar.rootfind import SolverConfig

__all__ = [
    "DgpConfig",
    "SweepReport",
    "simulate_dataset",
    "simulate_two_arm",
    "log_grid",
    "sweep_gop_independence",
    "sweep_rr_sr",
    "rbc_region",
    "STREAMS",
]

STREAMS = ("L0", "A0", "A1", "Y")


def _expit(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


@dataclass
class DgpConfig:
    """Simulation settings.

    ``a0_model`` holds logit coefficients on ``(1, l0)``; ``a1_model`` on
    ``(1, l0, a0)``. ``outcome_model`` is a ``GopRegressionModel`` over the
    design ``(1, l0)``.
    """

    n: int
    seed: int = 0
    l0_dist: str = "bernoulli"
    l0_q: float = 0.5
    a0_model: tuple = (0.0, 0.0)
    a1_model: tuple = (0.0, 0.0, 0.0)
    outcome_model: GopRegressionModel = field(default_factory=lambda: GopRegressionModel.zeros(2))

    def __post_init__(self):
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        self.n = int(self.n)
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an integer in [0, 2**64), got {self.seed!r}")
        self.seed = int(self.seed)
        if self.l0_dist not in ("bernoulli", "uniform"):
            raise ValueError(f"l0_dist must be 'bernoulli' or 'uniform', got {self.l0_dist!r}")
        if self.l0_dist == "bernoulli" and not 0.0 <= self.l0_q <= 1.0:
            raise ValueError(f"l0_q must lie in [0, 1], got {self.l0_q!r}")
        self.a0_model = tuple(float(v) for v in self.a0_model)
        self.a1_model = tuple(float(v) for v in self.a1_model)
        if len(self.a0_model) != 2:
            raise ValueError("a0_model needs 2 coefficients (intercept, l0)")
        if len(self.a1_model) != 3:
            raise ValueError("a1_model needs 3 coefficients (intercept, l0, a0)")
        if not all(math.isfinite(v) for v in self.a0_model + self.a1_model):
            raise ValueError("treatment model coefficients must be finite")
        if self.outcome_model.n_features != 2:
            raise ValueError("outcome_model must have 2 coefficients per measure (intercept, l0)")


def simulate_dataset(cfg: DgpConfig, solver: Optional[SolverConfig] = None) -> Dataset:
    rng_l0, rng_a0, rng_a1, rng_y = (
        np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(cfg.seed).spawn(4)
    )
    n = cfg.n
    if cfg.l0_dist == "bernoulli":
        l0 = (rng_l0.random(n) < cfg.l0_q).astype(np.float64)
    else:
        l0 = rng_l0.random(n)

    b = cfg.a0_model
    a0 = (rng_a0.random(n) < _expit(b[0] + b[1] * l0)).astype(np.int8)
    b = cfg.a1_model
    a1 = (rng_a1.random(n) < _expit(b[0] + b[1] * l0 + b[2] * a0)).astype(np.int8)

    X = np.column_stack([np.ones(n), l0])
    eff = np.exp(X @ cfg.outcome_model.matrix)
    res = inverse_gop_many(eff[:, 0], eff[:, 1], eff[:, 2], eff[:, 3], solver)
    if not res.converged.all():
        raise RuntimeError("inverse map failed to converge for some simulated rows")
    p = res.probs[np.arange(n), 2 * a1.astype(np.int64) + a0]
    y = (rng_y.random(n) < p).astype(np.int8)
    return Dataset(X, a0, a1, y, ("intercept", "l0"))


def simulate_two_arm(
    n: int,
    seed: int = 0,
    outcome_model: Optional[RrOpRegressionModel] = None,
    l0_dist: str = "bernoulli",
    l0_q: float = 0.5,
    trt_model=(0.0, 0.0),
    solver: Optional[SolverConfig] = None,
) -> Dataset:
    """Single-treatment data ``L0 -> T -> Y, L0 -> Y`` with risks from ``(RR, OP)``.

    Same stream rule as ``simulate_dataset``: substreams L0, T, Y in that
    order. The treatment is stored in the ``a0`` column.
    """
    outcome_model = outcome_model or RrOpRegressionModel.zeros(2)
    # reuse the sequential-config validation for the shared fields
    DgpConfig(n=n, seed=seed, l0_dist=l0_dist, l0_q=l0_q, a0_model=trt_model)
    if outcome_model.n_features != 2:
        raise ValueError("outcome_model must have 2 coefficients per measure (intercept, l0)")
    rng_l0, rng_t, rng_y = (
        np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(3)
    )
    l0 = (rng_l0.random(n) < l0_q).astype(np.float64) if l0_dist == "bernoulli" else rng_l0.random(n)
    trt = (rng_t.random(n) < _expit(trt_model[0] + trt_model[1] * l0)).astype(np.int8)
    X = np.column_stack([np.ones(n), l0])
    eff = np.exp(X @ outcome_model.matrix)
    res = inverse_rr_op_many(eff[:, 0], eff[:, 1], solver)
    if not res.converged.all():
        raise RuntimeError("inverse map failed to converge for some simulated rows")
    # probs columns are (p1, p0)
    p = res.probs[np.arange(n), 1 - trt.astype(np.int64)]
    y = (rng_y.random(n) < p).astype(np.int8)
    return Dataset(X, trt, None, y, ("intercept", "l0"))


# --------------------------------------------------------------------------
# sweeps


@dataclass
class SweepReport:
    kind: str
    grid: dict
    columns: tuple
    rows: list
    counts: dict

    @property
    def size(self) -> int:
        return len(self.rows)

    def column(self, name):
        j = self.columns.index(name)
        return [r[j] for r in self.rows]

    def summary(self) -> dict:
        return {"kind": self.kind, "cells": self.size, "grid": self.grid, **self.counts}

    def to_csv(self, path_or_file):
        """One row per grid cell. Floats get 9 significant digits."""
        def fmt(v):
            if isinstance(v, (bool, np.bool_)):
                return "1" if v else "0"
            if isinstance(v, (int, np.integer)):
                return str(int(v))
            if v is None:
                return ""
            return f"{float(v):.9g}"

        own = isinstance(path_or_file, str)
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns)
            for r in self.rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in r])
        finally:
            if own:
                fh.close()

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def log_grid(lo: float, hi: float, steps: int) -> np.ndarray:
    """``steps`` values ``exp(t)`` with ``t`` evenly spaced on ``[lo, hi]``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi < lo:
        raise ValueError("log range must be finite with lo <= hi")
    return np.exp(np.linspace(lo, hi, steps))


def sweep_gop_independence(axis_values=None, cells=None, cfg: Optional[SolverConfig] = None) -> SweepReport:
    """Invert every cell of a product grid over ``(RR0, OR10, RR11, GOP)``.

    Pass one array of positive values used on all four axes, or an explicit
    ``cells`` array of shape ``(m, 4)``. A cell succeeds when the solver
    converges to a table strictly inside ``(0, 1)^4``.
    """
    if cells is None:
        v = np.asarray(axis_values, dtype=np.float64).reshape(-1)
        if v.size == 0:
            raise ValueError("empty grid")
        mesh = np.meshgrid(v, v, v, v, indexing="ij")
        cells = np.column_stack([m.ravel() for m in mesh])
        grid = {"axis_values": v.tolist(), "axes": 4}
    else:
        cells = np.atleast_2d(np.asarray(cells, dtype=np.float64))
        grid = {"cells": int(cells.shape[0])}
    if cells.ndim != 2 or cells.shape[1] != 4:
        raise ValueError("cells must have shape (m, 4)")
    res = inverse_gop_many(cells[:, 0], cells[:, 1], cells[:, 2], cells[:, 3], cfg)
    ok = res.converged & np.all((res.probs > 0.0) & (res.probs < 1.0), axis=1)
    rows = [
        tuple(cells[i].tolist()) + tuple(res.probs[i].tolist())
        + (int(res.iterations[i]), "success" if ok[i] else "failure")
        for i in range(cells.shape[0])
    ]
    n_ok = int(ok.sum())
    return SweepReport(
        kind="gop",
        grid=grid,
        columns=("rr0", "or10", "rr11", "gop", "p00", "p01", "p10", "p11", "iterations", "status"),
        rows=rows,
        counts={"success": n_ok, "failure": int(cells.shape[0]) - n_ok},
    )


def sweep_rr_sr(r_max: float = 4.0, s_max: float = 4.0, steps: int = 200) -> SweepReport:
    """Classify ``(RR0, SR11)`` pairs on the grid ``{k*max/steps : k = 1..steps}``.

    Each cell carries the closed-form verdict and the witness-interval
    verdict. ``near_boundary`` marks cells within one grid step of
    ``s (1 - r) = 1``, where the two may legitimately split on rounding.
    """
    if not (r_max > 0 and s_max > 0 and math.isfinite(r_max) and math.isfinite(s_max)):
        raise ValueError("grid bounds must be positive and finite")
    if int(steps) != steps or steps < 1:
        raise ValueError("steps must be a positive integer")
    steps = int(steps)
    rs = [r_max * i / steps for i in range(1, steps + 1)]
    ss = [s_max * j / steps for j in range(1, steps + 1)]
    resolution = max(r_max, s_max) / steps
    rows = []
    feas = agree = off_disagree = 0
    for r in rs:
        for s in ss:
            f = check_rr_sr_feasible(r, s)
            lo, hi = rr_sr_witness_interval(r, s)
            o = lo < hi
            near = abs(s * (1.0 - r) - 1.0) < resolution
            rows.append((r, s, f, o, near))
            feas += f
            agree += f == o
            off_disagree += (f != o) and not near
    total = len(rows)
    return SweepReport(
        kind="rr-sr",
        grid={"r_max": r_max, "s_max": s_max, "steps": steps},
        columns=("r", "s", "feasible", "oracle_feasible", "near_boundary"),
        rows=rows,
        counts={
            "feasible": feas,
            "infeasible": total - feas,
            "agree": agree,
            "disagree": total - agree,
            "disagree_off_boundary": off_disagree,
        },
    )


def rbc_region(alphas, betas) -> SweepReport:
    """Validity of the scaled-risk model ``P(Y=1|trt) = exp(a + b*trt)/2`` on a grid."""
    alphas = [float(a) for a in np.asarray(alphas, dtype=np.float64).reshape(-1)]
    betas = [float(b) for b in np.asarray(betas, dtype=np.float64).reshape(-1)]
    if not alphas or not betas:
        raise ValueError("empty grid")
    rows = []
    valid = 0
    for a in alphas:
        for b in betas:
            r0 = rbc_risk(a, b, 0)
            r1 = rbc_risk(a, b, 1)
            ok = r0 is not None and r1 is not None
            rows.append((a, b, r0, r1, ok))
            valid += ok
    return SweepReport(
        kind="rbc",
        grid={"alpha": [alphas[0], alphas[-1], len(alphas)], "beta": [betas[0], betas[-1], len(betas)]},
        columns=("alpha", "beta", "risk_trt0", "risk_trt1", "valid"),
        rows=rows,
        counts={"valid": valid, "invalid": len(rows) - valid},
    )
