"""Persistence: JSON reports, long-format plot tables, and plain-text sample sets.

Sample-set format (``*.samples.txt``)::

    # tempsel-samples v1
    # spec-hash: <sha256 hex of the canonical JSON on the next line>
    # spec: {"format": ..., "network": ..., "num_params": ..., "sampler": {...}}
    # meta: {"seed": ..., "chain_id": ..., "burn_in_steps": ..., "energy_trace": [...], ...}
    <theta_1 as space-separated %.17g floats>
    <theta_2 ...>

Every non-comment line is one flat parameter vector.  The spec hash covers
what the vectors mean (network layout and sampler settings) so readers can
refuse files produced under a different setup.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from tempsel.errors import InvalidInputError
from tempsel.sgmcmc import PosteriorSampleSet, SamplerConfig, config_dict

PLOT_COLUMNS = ("beta", "ppd_kind", "metric", "mean", "stderr")
SAMPLES_MAGIC = "# tempsel-samples v1"
_PPD_KIND = {"lpd_sm": ("SM-PD", "lpd"), "lpd_tm": ("TM-PD", "lpd"),
             "mse": ("point", "mse"), "accuracy": ("SM-PD", "accuracy"), "accuracy_tm": ("TM-PD", "accuracy")}


# ----------------------------------------------------------------- reports
def save_report(report, path, include_timings: bool = False) -> None:
    """Write ``report`` (a RunReport or plain dict) as sorted, indented JSON; NaN becomes null."""
    text = report.to_json(include_timings) if hasattr(report, "to_json") else _dumps(report)
    Path(path).write_text(text + "\n")


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def _dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=1, sort_keys=True)


def jsonable(obj):
    """Plain-JSON copy of ``obj``: arrays to lists, numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# -------------------------------------------------------------- plot data
def _none_to_nan(x):
    return float("nan") if x is None else float(x)


def plot_rows(report_dict: dict, split: str = "test") -> List[dict]:
    """Long-format rows for the grid curve of ``split`` (one per beta, metric, ppd_kind)."""
    grid = report_dict.get("grid")
    if not grid:
        raise InvalidInputError("report has no grid rows")
    rows = []
    for row in grid["rows"]:
        for key, stats in sorted(row[split].items()):
            kind, metric = _PPD_KIND[key]
            rows.append({"beta": float(row["beta"]), "ppd_kind": kind, "metric": metric,
                         "mean": _none_to_nan(stats["mean"]), "stderr": _none_to_nan(stats["se"])})
    return rows


def selected_rows(report_dict: dict, split: str = "test") -> List[dict]:
    """One row per (metric, ppd_kind) at the selected beta, averaged over repetitions."""
    agg = report_dict["aggregate"]
    beta = _none_to_nan(agg["beta_star"]["mean"])
    rows = []
    for key, stats in sorted(agg.get(split, {}).items()):
        kind, metric = _PPD_KIND[key]
        rows.append({"beta": beta, "ppd_kind": kind, "metric": metric,
                     "mean": _none_to_nan(stats["mean"]), "stderr": _none_to_nan(stats["se"])})
    return rows


def write_plot_table(rows: List[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLOT_COLUMNS)
        for r in rows:
            w.writerow([repr(float(r["beta"])), r["ppd_kind"], r["metric"],
                        repr(float(r["mean"])), repr(float(r["stderr"]))])


def read_plotdata(path) -> List[dict]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != PLOT_COLUMNS:
            raise InvalidInputError(f"{path}: unexpected columns {header}")
        return [{"beta": float(b), "ppd_kind": k, "metric": m, "mean": float(mu), "stderr": float(se)}
                for b, k, m, mu, se in reader]


def emit_plotdata(report, out_dir) -> Dict[str, Path]:
    """Write ``selected.csv`` and, when grid rows exist, ``grid_test.csv`` / ``grid_valid.csv``."""
    d = report.to_dict() if hasattr(report, "to_dict") else report
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    if d.get("repetitions") and d.get("aggregate", {}).get("repetitions_ok"):
        files["selected"] = out / "selected.csv"
        write_plot_table(selected_rows(d), files["selected"])
    if d.get("grid"):
        for split in ("test", "valid"):
            files[f"grid_{split}"] = out / f"grid_{split}.csv"
            write_plot_table(plot_rows(d, split), files[f"grid_{split}"])
    return files


# ------------------------------------------------------------- sample sets
def sample_spec(sample_set: PosteriorSampleSet, network_description: Optional[str] = None) -> dict:
    cfg = config_dict(sample_set.config)
    # the seed identifies the chain, not the meaning of the vectors; it lives in the meta line
    cfg = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items() if k != "seed"}
    return {"format": "flat-theta-per-line", "network": network_description,
            "num_params": int(np.shape(sample_set.samples)[1]), "sampler": cfg}


def spec_hash(spec: dict) -> str:
    return hashlib.sha256(_canonical(spec).encode()).hexdigest()


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_samples(sample_set: PosteriorSampleSet, path, network_description: Optional[str] = None) -> str:
    """Write the sample set; returns the spec hash written into the header."""
    spec = sample_spec(sample_set, network_description)
    h = spec_hash(spec)
    kinetic = np.asarray(sample_set.kinetic_trace, dtype=float)
    meta = jsonable({
        "seed": sample_set.seed, "chain_id": sample_set.chain_id, "burn_in_steps": sample_set.burn_in_steps,
        "energy_trace": sample_set.energy_trace,
        "kinetic_mean": float(kinetic.mean()) if kinetic.size else None,
        "kinetic_mean_sampling": (float(kinetic[sample_set.burn_in_steps:].mean())
                                  if kinetic.size > sample_set.burn_in_steps else None),
        "mass_diag": sample_set.mass_diag, "meta": sample_set.meta,
    })
    lines = [SAMPLES_MAGIC, f"# spec-hash: {h}", f"# spec: {_canonical(spec)}", f"# meta: {_canonical(meta)}"]
    lines += [" ".join(f"{v:.17g}" for v in theta) for theta in np.asarray(sample_set.samples, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")
    return h


def load_samples(path, expected_hash: Optional[str] = None) -> PosteriorSampleSet:
    """Read a sample file, verifying its spec hash (and ``expected_hash`` when given)."""
    header, rows = {}, []
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != SAMPLES_MAGIC:
            raise InvalidInputError(f"{path}: not a tempsel sample file")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                header[key.strip()] = value.strip()
            else:
                rows.append([float(v) for v in line.split()])
    try:
        spec = json.loads(header["spec"])
        meta = json.loads(header["meta"])
        h = header["spec-hash"]
    except (KeyError, json.JSONDecodeError) as exc:
        raise InvalidInputError(f"{path}: malformed header ({exc})") from None
    if spec_hash(spec) != h:
        raise InvalidInputError(f"{path}: spec hash mismatch")
    if expected_hash is not None and h != expected_hash:
        raise InvalidInputError(f"{path}: spec hash {h} differs from expected {expected_hash}")
    p = spec["num_params"]
    samples = np.array(rows, dtype=float).reshape(-1, p)
    sampler = dict(spec["sampler"])
    config = SamplerConfig(**sampler, seed=meta["seed"])
    kinetic = [] if meta.get("kinetic_mean") is None else [meta["kinetic_mean"]]
    energy = np.array([np.nan if e is None else e for e in meta["energy_trace"]], dtype=float)
    mass = None if meta.get("mass_diag") is None else np.asarray(meta["mass_diag"], dtype=float)
    extra = dict(meta.get("meta") or {})
    extra.update(spec_hash=h, network=spec.get("network"), kinetic_mean_sampling=meta.get("kinetic_mean_sampling"))
    return PosteriorSampleSet(samples, np.asarray(kinetic, dtype=float), energy, config, meta["seed"],
                              meta["chain_id"], 0, mass, extra)
