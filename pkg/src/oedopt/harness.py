"""Experiment orchestration: replicated optimization over an (N, M)
matrix, high-quality re-estimation, posterior maps, and report files.

A matrix run executes T replicates of the chosen algorithm in every
(N, M) cell, re-estimates each final design with a large independent
sample set, and scores cells by the mean squared shortfall of those
re-estimates from the best re-estimate seen anywhere in the run.  All
randomness is derived from the master seed by keyed streams; replicate
wall times are the only non-reproducible outputs.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .bounds import Bounds
from .eig import EIGEstimator, NoiseModel, PriorSpec, draw_sample_set, eig_value
from .models import ForwardModel, SurrogateForwardModel
from .optim import (BFGSOptions, GainSchedule, GapEstimate, RMOptions,
                    rm_optimize, saa_optimize)
from .polychaos import PCExpansion
from .rng import derived_seed

_TAG_REQUALITY = 101
_ALG_IDS = {"rm": 1, "saa": 2}


@dataclass
class ExperimentConfig:
    """Matrix-run settings; field names mirror the JSON config format."""

    algorithm: str                       # "rm", "saa", or "both"
    N_list: tuple = (1, 11, 101)
    M_list: tuple = (2, 11, 101)
    T: int = 50
    seed: int = 0
    requality_N: int = 1001
    requality_M: int = 1001
    n_prime_factor: int = 10
    n_prime_cap: int = 1001
    surrogate_path: str | None = None
    noise_alpha: float = 0.1
    noise_beta: float = 0.1
    rm_gain_beta: float = 1.0
    rm_max_iters: int = 50
    rm_stall_tol: float = 1e-4
    rm_stall_patience: int = 5
    bfgs_grad_tol: float = 1e-5
    bfgs_max_iters: int = 100

    def __post_init__(self):
        if self.algorithm not in ("rm", "saa", "both"):
            raise ValueError("algorithm must be 'rm', 'saa' or 'both'")
        self.N_list = tuple(int(n) for n in self.N_list)
        self.M_list = tuple(int(m) for m in self.M_list)
        if not self.N_list or not self.M_list:
            raise ValueError("N_list and M_list must be non-empty")
        if min(self.N_list) < 1 or min(self.M_list) < 1 or self.T < 1:
            raise ValueError("sample sizes and replicate count must be >= 1")
        if self.requality_N < 1 or self.requality_M < 1:
            raise ValueError("re-estimation sizes must be >= 1")

    @property
    def algorithms(self) -> tuple:
        return ("rm", "saa") if self.algorithm == "both" else (self.algorithm,)

    def n_prime(self, N: int) -> int:
        return max(N + 1, min(self.n_prime_factor * N, self.n_prime_cap))

    def to_json_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentConfig":
        return cls(**doc)


@dataclass
class CellResult:
    """All replicate outcomes for one (algorithm, N, M) cell."""

    algorithm: str
    N: int
    M: int
    replicate_ids: list
    designs: np.ndarray            # [T_ok, n_d]
    terminations: list             # str per replicate
    iterations: list
    wall_s: list
    reestimates: np.ndarray        # [T_ok]
    gaps: list | None              # GapEstimate per replicate (SAA only)
    failures: list = field(default_factory=list)
    mse: float | None = None

    @property
    def mean_runtime(self) -> float:
        return float(np.mean(self.wall_s)) if self.wall_s else float("nan")


@dataclass
class ExperimentMatrixResult:
    cells: list
    U_ref: float | None
    config: ExperimentConfig


def mse_of_cell(re_estimates, U_ref: float) -> float:
    """Mean squared shortfall of re-estimated objectives from U_ref,
    the best re-estimate across every cell and algorithm of the run."""
    re_estimates = np.asarray(re_estimates, dtype=float)
    if re_estimates.size == 0:
        raise ValueError("cannot score an empty cell")
    return float(np.mean((re_estimates - U_ref) ** 2))


def _benchmark_pieces(config: ExperimentConfig, model, prior, design_bounds):
    """Resolve the forward model, prior and bounds for a matrix run."""
    if model is None:
        if config.surrogate_path is None:
            raise ValueError("need either a model or a surrogate_path")
        expansion = PCExpansion.load(config.surrogate_path)
        model = SurrogateForwardModel(expansion, n_theta=expansion.dimension - 2)
    if prior is None or design_bounds is None:
        if not isinstance(model, SurrogateForwardModel):
            raise ValueError("prior and design_bounds are required for "
                             "models without surrogate maps")
        maps = model.expansion.maps
        if prior is None:
            prior = PriorSpec.uniform(
                [(m.gamma - abs(m.delta), m.gamma + abs(m.delta))
                 for m in maps[:model.n_theta]])
        if design_bounds is None:
            design_bounds = Bounds.from_pairs(
                [(m.gamma - abs(m.delta), m.gamma + abs(m.delta))
                 for m in maps[model.n_theta:]])
    return model, prior, design_bounds


def run_matrix(config: ExperimentConfig, model: ForwardModel | None = None,
               prior: PriorSpec | None = None,
               design_bounds: Bounds | None = None) -> ExperimentMatrixResult:
    """Run the full experiment matrix; deterministic given the config.

    Starting points are uniform over the design bounds.  Re-estimation
    seeds live on a stream disjoint from every optimization stream, so
    re-estimates never reuse optimization randomness.
    """
    model, prior, design_bounds = _benchmark_pieces(
        config, model, prior, design_bounds)
    noise = NoiseModel.scaled(model.n_y, config.noise_alpha, config.noise_beta)
    cells = []
    for alg in config.algorithms:
        for N in config.N_list:
            for M in config.M_list:
                cells.append(_run_cell(config, alg, N, M, model, noise,
                                       prior, design_bounds))
    reest_all = np.concatenate([c.reestimates for c in cells]) if cells else np.array([])
    U_ref = float(reest_all.max()) if reest_all.size else None
    for c in cells:
        c.mse = mse_of_cell(c.reestimates, U_ref) if c.reestimates.size else None
    return ExperimentMatrixResult(cells=cells, U_ref=U_ref, config=config)


def _run_cell(config, alg, N, M, model, noise, prior, design_bounds):
    estimator = EIGEstimator(model, noise, prior, N=N, M=M,
                             design_bounds=design_bounds)
    cell_seed = derived_seed(config.seed, _ALG_IDS[alg], N, M)
    if alg == "rm":
        opts = RMOptions(bounds=design_bounds,
                         gain=GainSchedule(config.rm_gain_beta),
                         max_iters=config.rm_max_iters,
                         stall_tol=config.rm_stall_tol,
                         stall_patience=config.rm_stall_patience)
        batch = rm_optimize(estimator, config.T, None, opts, cell_seed)
        gaps = None
    else:
        opts = BFGSOptions(bounds=design_bounds,
                           grad_tol=config.bfgs_grad_tol,
                           max_iters=config.bfgs_max_iters)
        batch = saa_optimize(estimator, config.T, config.n_prime(N), None,
                             opts, cell_seed)
        gaps = batch.gaps
    failed = {t for t, _ in batch.failures}
    replicate_ids = [t for t in range(1, config.T + 1) if t not in failed]
    designs = np.array([tr.final for tr in batch.traces]).reshape(
        len(batch.traces), design_bounds.n_dim)

    re_est = estimator.with_sizes(N=config.requality_N, M=config.requality_M)
    reestimates = []
    for t, d in zip(replicate_ids, designs):
        samples = draw_sample_set(
            re_est, derived_seed(config.seed, _TAG_REQUALITY,
                                 _ALG_IDS[alg], N, M, t))
        reestimates.append(eig_value(re_est, d, samples))
    return CellResult(
        algorithm=alg, N=N, M=M, replicate_ids=replicate_ids,
        designs=designs,
        terminations=[tr.termination.value for tr in batch.traces],
        iterations=[tr.n_iterations for tr in batch.traces],
        wall_s=[tr.wall_time for tr in batch.traces],
        reestimates=np.array(reestimates),
        gaps=gaps, failures=list(batch.failures))


# ---------------------------------------------------------------------------
# posterior maps


def posterior_map(surrogate: PCExpansion, noise: NoiseModel, d, y_observed,
                  grid_k: int):
    """Posterior density of the parameters on a grid, under a uniform prior.

    Evaluates prior x likelihood on a grid_k x grid_k grid over the
    surrogate's parameter box and normalizes by the trapezoidal-rule
    evidence.  Returns (axis values per dimension, density grid).
    """
    d = np.atleast_1d(np.asarray(d, dtype=float))
    n_theta = surrogate.dimension - d.size
    if n_theta != 2:
        raise ValueError("posterior maps are defined for 2-D parameter spaces")
    if grid_k < 2:
        raise ValueError("need at least a 2 x 2 grid")
    y_observed = np.asarray(y_observed, dtype=float)
    axes = []
    for m in surrogate.maps[:n_theta]:
        lo, hi = m.gamma - abs(m.delta), m.gamma + abs(m.delta)
        axes.append(np.linspace(lo, hi, grid_k))
    TX, TY = np.meshgrid(axes[0], axes[1], indexing="ij")
    thetas = np.stack([TX.ravel(), TY.ravel()], axis=1)
    G = surrogate.evaluate_many(thetas, d)
    sigma = noise.sigma(G)
    ll = np.sum(-0.5 * np.log(2.0 * np.pi) - np.log(sigma)
                - (y_observed[None, :] - G) ** 2 / (2.0 * sigma**2), axis=1)
    peak = ll.max()
    if not np.isfinite(peak):
        raise ValueError("likelihood vanished on the whole grid "
                         "(data severely inconsistent with the model)")
    density = np.exp(ll - peak).reshape(grid_k, grid_k)
    evidence = np.trapezoid(np.trapezoid(density, axes[1], axis=1), axes[0])
    if evidence <= 0 or not np.isfinite(evidence):
        raise ValueError("posterior normalization failed")
    density /= evidence
    total = np.trapezoid(np.trapezoid(density, axes[1], axis=1), axes[0])
    if abs(total - 1.0) > 1e-3:
        raise AssertionError("normalized posterior does not integrate to one")
    return axes, density


# ---------------------------------------------------------------------------
# report files


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def emit_reports(result: ExperimentMatrixResult, out_dir) -> list:
    """Write designs/reestimates/gaps/iterations/mse_vs_time CSVs plus a
    JSON summary into `out_dir`; returns the written paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = []
    designs_rows = []
    reest_rows = []
    gap_rows = []
    iter_rows = []
    mse_rows = []
    for c in result.cells:
        for i, t in enumerate(c.replicate_ids):
            x = c.designs[i]
            designs_rows.append([c.algorithm, c.N, c.M, t, x[0],
                                 x[1] if x.size > 1 else 0.0,
                                 c.terminations[i], c.iterations[i],
                                 c.wall_s[i]])
            reest_rows.append([c.algorithm, c.N, c.M, t, c.reestimates[i]])
            iter_rows.append([c.algorithm, c.N, c.M, t, c.iterations[i],
                              c.terminations[i]])
            if c.gaps is not None:
                g = c.gaps[i]
                gap_rows.append([c.N, c.M, t, g.upper, g.lower, g.gap,
                                 g.variance])
        mse_rows.append([c.algorithm, c.N, c.M, c.mean_runtime,
                         c.mse if c.mse is not None else float("nan")])

    paths.append(_write_csv(
        os.path.join(out_dir, "designs.csv"),
        ["algorithm", "N", "M", "t", "x", "y", "termination", "iters", "wall_s"],
        designs_rows))
    paths.append(_write_csv(
        os.path.join(out_dir, "reestimates.csv"),
        ["algorithm", "N", "M", "t", "u_hat"], reest_rows))
    paths.append(_write_csv(
        os.path.join(out_dir, "gaps.csv"),
        ["N", "M", "t", "upper", "lower", "gap", "variance"], gap_rows))
    paths.append(_write_csv(
        os.path.join(out_dir, "iterations.csv"),
        ["algorithm", "N", "M", "t", "iterations", "termination"], iter_rows))
    paths.append(_write_csv(
        os.path.join(out_dir, "mse_vs_time.csv"),
        ["algorithm", "N", "M", "mean_runtime_s", "mse"], mse_rows))

    summary = {
        "U_ref": result.U_ref,
        "config": result.config.to_json_dict(),
        "cells": [
            {
                "algorithm": c.algorithm, "N": c.N, "M": c.M,
                "replicates": len(c.replicate_ids),
                "failures": len(c.failures),
                "mse": c.mse,
                "mean_runtime_s": c.mean_runtime,
                "mean_u_hat": (float(c.reestimates.mean())
                               if c.reestimates.size else None),
            }
            for c in result.cells
        ],
    }
    spath = os.path.join(out_dir, "summary.json")
    with open(spath, "w") as fh:
        json.dump(summary, fh, indent=1)
    paths.append(spath)
    return paths


def load_reports(out_dir):
    """Read the emitted CSVs back into plain dict rows (round-trip aid)."""
    import os

    out = {}
    for name in ("designs", "reestimates", "gaps", "iterations",
                 "mse_vs_time"):
        path = os.path.join(out_dir, f"{name}.csv")
        with open(path, newline="") as fh:
            out[name] = list(csv.DictReader(fh))
    with open(os.path.join(out_dir, "summary.json")) as fh:
        out["summary"] = json.load(fh)
    return out
