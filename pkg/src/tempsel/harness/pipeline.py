"""select -> sample -> evaluate, repeated, plus the grid-search baseline."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from tempsel import analytic, network
from tempsel.diagnostics import energy_series, kinetic_summary, split_rhat
from tempsel.errors import DegenerateInputError
from tempsel.harness.config import RunConfig, derive_seed
from tempsel.harness.io import jsonable
from tempsel.harness.data import Splits, ingest_tabular, split_dataset, synth_classification, synth_regression
from tempsel.model import GaussianHead, PosteriorEnergy, PriorSpec, SoftmaxHead, TemperedModel
from tempsel.network import NetworkSpec
from tempsel.predictive import evaluate, grid_search, maximize_metric
from tempsel.select import select_map, select_mle, select_posthoc, train_fixed_beta
from tempsel.sgmcmc import PosteriorSampleSet, run_chain

logger = logging.getLogger(__name__)


def mean_se(values) -> Dict[str, float]:
    """Mean and standard error with the unbiased (ddof=1) variance; SE is NaN for one value."""
    v = np.asarray([x for x in values if x is not None and np.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"mean": math.nan, "se": math.nan, "n": 0}
    se = float(np.std(v, ddof=1) / np.sqrt(v.size)) if v.size > 1 else math.nan
    return {"mean": float(v.mean()), "se": se, "n": int(v.size)}


def load_splits(config: RunConfig) -> Splits:
    dc = config.data
    split_seed = derive_seed(config.seed, 0, "split")
    if dc.source == "file":
        return ingest_tabular(dc.path, dc.target_column, dc.split_fractions, split_seed,
                              num_classes=dc.num_classes if config.task == "classification" else None)
    data_seed = derive_seed(config.seed, 0, "data")
    if config.task == "regression":
        data = synth_regression(dc.n, dc.d, dc.tau2, dc.generator, data_seed, dc.teacher_hidden)
    else:
        data, _ = synth_classification(dc.n, dc.d, dc.num_classes, dc.beta_true, data_seed, dc.teacher_hidden)
    return split_dataset(data, dc.split_fractions, split_seed)


def build_model(config: RunConfig, input_dim: int):
    if config.task == "regression":
        head = GaussianHead(config.sigma2)
    else:
        head = SoftmaxHead(config.data.num_classes)
    spec = NetworkSpec((input_dim, *config.hidden, head.output_dim))
    return TemperedModel(spec, head), PriorSpec(config.prior_variance)


def run_selection(config: RunConfig, model: TemperedModel, prior: PriorSpec, splits: Splits, rep: int):
    sel_cfg = replace(config.select, seed=derive_seed(config.seed, rep, "select"))
    theta0 = network.init_params(model.spec, derive_seed(config.seed, rep, "init"))
    if config.selector == "mle":
        return select_mle(splits.train, splits.valid, model, sel_cfg, theta0)
    if config.selector == "map":
        return select_map(splits.train, splits.valid, model, prior, sel_cfg, theta0)
    base = train_fixed_beta(splits.train, splits.valid, model, sel_cfg, theta0)
    base.beta_star = select_posthoc(base.theta_star, splits.valid, model)
    return base


def draw_samples(config: RunConfig, model: TemperedModel, prior: PriorSpec, train, beta: float,
                 rep: int) -> PosteriorSampleSet:
    """Tempered-posterior samples at ``beta``; the seed depends on the repetition only."""
    seed = derive_seed(config.seed, rep, "sample")
    sampler = replace(config.sampler, target_T=1.0 / beta, seed=seed)
    if config.exact_sampler:
        X_aug = np.hstack([train.inputs, np.ones((len(train), 1))])
        setup = analytic.ConjugateLinRegSetup(X_aug, train.targets, config.sigma2, config.prior_variance)
        draws = analytic.linreg_sample_posterior(setup, beta, config.exact_samples, np.random.default_rng(seed))
        energy = PosteriorEnergy(model, prior)
        return PosteriorSampleSet(draws, np.zeros(0), np.array([energy.value(t, train) for t in draws]),
                                  sampler, seed, meta={"exact": True})
    theta0 = network.init_params(model.spec, derive_seed(config.seed, rep, "init"))
    return run_chain(PosteriorEnergy(model, prior), train, sampler, theta0)


def _rhat_or_none(sample_sets, rank_normalized: bool = True) -> Optional[float]:
    sets = [s for s in sample_sets if s is not None and len(s.energy_trace) >= 4]
    if len(sets) < 2:
        return None
    try:
        return split_rhat(energy_series(sets), rank_normalized)
    except DegenerateInputError:
        return None


@dataclass
class RunReport:
    config: dict
    repetitions: List[dict] = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)
    grid: Optional[dict] = None
    timings: dict = field(default_factory=dict)

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {"config": self.config, "repetitions": self.repetitions, "aggregate": self.aggregate,
             "grid": self.grid}
        if include_timings:
            d["timings"] = self.timings
        return jsonable(d)

    def to_json(self, include_timings: bool = False) -> str:
        """Deterministic serialisation; wall-clock timings are excluded unless asked for."""
        return json.dumps(self.to_dict(include_timings), indent=1, sort_keys=True)


def _aggregate_metrics(records, split):
    keys = sorted({k for r in records for k in r["metrics"][split]})
    return {k: mean_se([r["metrics"][split][k] for r in records]) for k in keys}


def run_repetition(config: RunConfig, model, prior, splits: Splits, rep: int):
    """Stage 1 and 2 for one repetition.  Returns (record, sample_set, timings)."""
    timings = {}
    t0 = time.perf_counter()
    sel = run_selection(config, model, prior, splits, rep)
    timings["select"] = time.perf_counter() - t0
    beta = sel.beta_star.beta
    t0 = time.perf_counter()
    samples = draw_samples(config, model, prior, splits.train, beta, rep)
    timings["sample"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    metrics = {"valid": evaluate(samples.samples, model, beta, splits.valid),
               "test": evaluate(samples.samples, model, beta, splits.test)}
    timings["evaluate"] = time.perf_counter() - t0
    record = {
        "repetition": rep,
        "beta_star": beta,
        "log_beta_star": sel.beta_star.log_beta,
        "beta_flags": list(sel.beta_star.flags),
        "selection_flags": list(sel.flags),
        "selection_trace": sel.trace,
        "num_samples": len(samples),
        "kinetic_mean": kinetic_summary(samples) if samples.kinetic_trace.size else None,
        "kinetic_mean_sampling": (kinetic_summary(samples, discard_burn_in=True)
                                  if samples.kinetic_trace.size else None),
        "energy_trace": samples.energy_trace,
        "metrics": metrics,
        "failed": False,
    }
    return record, samples, timings


def run_grid(config: RunConfig, model, prior, splits: Splits, betas=None) -> dict:
    """Grid baseline: one sampler run per beta for every repetition, aggregated over repetitions."""
    betas = tuple(sorted(float(b) for b in (config.grid if betas is None else betas)))
    per_rep, timings = [], []
    chains = {b: [] for b in betas}
    for rep in range(config.repetitions):
        t0 = time.perf_counter()

        def pipeline(beta, rep=rep):
            s = draw_samples(config, model, prior, splits.train, beta, rep)
            chains[beta].append(s)
            return s.samples

        result = grid_search(betas, pipeline, splits.valid, splits.test, model)
        timings.append({"total": time.perf_counter() - t0, "per_beta": [r.seconds for r in result.rows]})
        per_rep.append({
            "repetition": rep,
            "selected_beta": result.selected_beta,
            "rows": [{"beta": r.beta, "valid": r.valid, "test": r.test, "failed": r.failed, "error": r.error}
                     for r in result.rows],
        })
    rows = []
    for i, beta in enumerate(betas):
        ok = [p["rows"][i] for p in per_rep if not p["rows"][i]["failed"]]
        row = {"beta": beta, "failed_repetitions": len(per_rep) - len(ok),
               "rhat_energy": _rhat_or_none(chains[beta]),
               "rhat_energy_raw": _rhat_or_none(chains[beta], rank_normalized=False)}
        for split in ("valid", "test"):
            keys = sorted({k for r in ok for k in r[split]})
            row[split] = {m: mean_se([r[split].get(m) for r in ok]) for m in keys}
        rows.append(row)
    selected = {}
    for metric in sorted({k for row in rows for k in row["valid"]}):
        best = None
        for row in rows:  # ascending beta order keeps ties at the smaller beta
            v = row["valid"][metric]["mean"]
            if not np.isfinite(v):
                continue
            if best is None or (v > best[0] if maximize_metric(metric) else v < best[0]):
                best = (v, row["beta"])
        selected[metric] = None if best is None else best[1]
    return {"betas": list(betas), "rows": rows, "selected_beta": selected, "per_repetition": per_rep,
            "_timings": timings}


def run_pipeline(config: RunConfig) -> RunReport:
    """Full procedure for every repetition, plus the grid baseline when ``config.grid`` is set."""
    splits = load_splits(config)
    model, prior = build_model(config, splits.train.dim)
    report = RunReport(config.to_dict())
    sample_sets, stage_times = [], []
    for rep in range(config.repetitions):
        try:
            record, samples, timings = run_repetition(config, model, prior, splits, rep)
            sample_sets.append(samples)
        except Exception as exc:  # noqa: BLE001 - the repetition is flagged and skipped
            logger.warning("repetition %d failed: %s", rep, exc)
            record = {"repetition": rep, "failed": True, "error": f"{type(exc).__name__}: {exc}"}
            timings = {}
        report.repetitions.append(record)
        stage_times.append(timings)
    ok = [r for r in report.repetitions if not r["failed"]]
    report.aggregate = {
        "repetitions_ok": len(ok),
        "repetitions_failed": len(report.repetitions) - len(ok),
        "beta_star": mean_se([r["beta_star"] for r in ok]),
        "log_beta_star": mean_se([r["log_beta_star"] for r in ok]),
        "kinetic_mean": mean_se([r["kinetic_mean"] for r in ok]),
        "valid": _aggregate_metrics(ok, "valid") if ok else {},
        "test": _aggregate_metrics(ok, "test") if ok else {},
        "rhat_energy": _rhat_or_none(sample_sets),
        "rhat_energy_raw": _rhat_or_none(sample_sets, rank_normalized=False),
    }
    report.timings = {"repetitions": stage_times}
    if config.grid:
        grid = run_grid(config, model, prior, splits)
        report.timings["grid"] = grid.pop("_timings")
        report.grid = grid
    return report
