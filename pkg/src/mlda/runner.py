"""Config-driven experiment execution.

Output directory layout::

    config.effective.json      config with defaults filled in
    metadata.json              config hash, seed, software versions, layout facts
    data.csv                   synthetic observations
    chain_<c>_level_<l>.csv    chain records (top level always; subchain levels optional)
    bias_chain_<c>.txt         adaptive error model snapshot, when enabled
    diagnostics.json           ESS, acceptance rates, autocorrelations
    estimator.json             standard and multilevel estimates, when enabled
    timing.json                wall-clock times and ES/s (not covered by determinism)
    plots/*.csv                plot-ready series
    baseline/                  single-level comparison run, when requested

Everything except ``timing.json`` is a deterministic function of the config
and the seed, whatever the number of worker threads.
"""

from __future__ import annotations

import json
import shutil
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics as diag
from . import estimator as est
from .aem import BiasModel
from .config import ExperimentConfig
from .model import ContractViolation
from .problems.base import Problem, generate_synthetic_data
from .problems.darcy import DarcyProblem
from .problems.gravity import GravityProblem
from .problems.predator_prey import TRUE_PARAMETERS, PredatorPreyProblem
from .proposals import (
    DemczProposal,
    IdentityFineProposal,
    PriorFineProposal,
    RandomWalkProposal,
    SubchainPmf,
)
from .rng import stream
from .samplers import MldaConfig, mh_run, mlda_run
from .storage import (
    read_chain,
    write_bias_model,
    write_chain,
    write_json,
    write_metadata,
    write_series_csv,
)

# stream keys beyond the per-level ones
_INIT_KEY = 1_000
_ARCHIVE_KEY = 1_001
_BASELINE_OFFSET = 10_000


def build_problem(config: ExperimentConfig) -> Problem:
    spec = config.problem.spec
    if spec.kind == "gravity":
        return GravityProblem(spec.resolutions, spec.n, spec.depth, spec.n_modes, spec.length_scale,
                              spec.variance, spec.noise_sd)
    if spec.kind == "predator_prey":
        return PredatorPreyProblem(spec.windows, spec.obs_spacing, spec.noise_sd, spec.rel_tol, spec.abs_tol,
                                   spec.qoi)
    return DarcyProblem(spec.m0, spec.n_levels, spec.n_modes, spec.length_scale, spec.sigma, spec.noise_sd,
                        spec.obs_per_side)


def true_parameters(config: ExperimentConfig, problem: Problem) -> np.ndarray:
    truth = config.problem.data.truth
    if isinstance(truth, list):
        theta = np.array(truth, dtype=float)
        if theta.shape != (problem.dims[-1],):
            raise ContractViolation(f"problem.data.truth needs {problem.dims[-1]} values")
        return theta
    if truth == "default":
        if isinstance(problem, PredatorPreyProblem):
            return TRUE_PARAMETERS.copy()
        raise ContractViolation("only the predator-prey problem has a default truth")
    return problem.sample_prior(stream(config.problem.data.truth_seed, 0xFACE))


def _initial_state(config, problem, data, truth, chain) -> np.ndarray:
    init = config.sampler.initial
    if isinstance(init, list):
        theta = np.array(init, dtype=float)
        if theta.shape != (problem.dims[-1],):
            raise ContractViolation(f"sampler.initial needs {problem.dims[-1]} values")
        return theta
    if init == "truth":
        return truth.copy()
    if init == "map":
        return problem.map_point(data, config.levels[-1])
    return problem.sample_prior(stream(config.seed, chain, _INIT_KEY))


def _coarse_proposal(config, problem, chain):
    p = config.proposals
    if p.kind == "random_walk":
        return RandomWalkProposal(p.scale)
    rng = stream(config.seed, chain, _ARCHIVE_KEY)
    archive = np.array([problem.sample_prior(rng) for _ in range(p.archive_size)])
    return DemczProposal(archive[:, : problem.dims[config.levels[0]]], jitter_scale=p.jitter)


@dataclass
class ChainResult:
    chain: int
    records: list
    wall_time: float
    bias: Optional[BiasModel]


def _run_chain(config, problem, hierarchy, data, truth, chain, baseline=False) -> ChainResult:
    levels = hierarchy.L + 1
    key = chain + (_BASELINE_OFFSET if baseline else 0)
    rngs = [stream(config.seed, key, ell) for ell in range(levels)]
    theta0 = _initial_state(config, problem, data, truth, chain)
    proposal = RandomWalkProposal(config.proposals.scale) if baseline else _coarse_proposal(config, problem, chain)
    start = time.perf_counter()
    bias = None
    if levels == 1:
        rec = mh_run(hierarchy[0], proposal, theta0, config.sampler.n_steps, rngs[0],
                     burn_in=config.sampler.burn_in)
        records = [rec]
    else:
        mcfg = MldaConfig(
            pmfs=[SubchainPmf(j, config.sampler.pmf) for j in config.sampler.subchain_lengths],
            n_steps=config.sampler.n_steps,
            burn_in=config.sampler.burn_in,
            seed=config.seed,
            estimator=config.estimator.enabled,
            adapt_error_model=config.aem.enabled,
            adapt_after_burn_in=config.aem.adapt_after_burn_in,
            record_subchain_states=config.output.write_subchains,
        )
        if config.proposals.fine == "identity":
            fine = [IdentityFineProposal() for _ in range(hierarchy.L)]
        else:
            fine = [PriorFineProposal.standard_normal() for _ in range(hierarchy.L)]
        if config.aem.enabled:
            bias = BiasModel.for_hierarchy(hierarchy, config.aem.covariance)
        records = mlda_run(hierarchy, mcfg, proposal, theta0, rngs, fine_proposals=fine, bias=bias)
    return ChainResult(chain, records, time.perf_counter() - start, bias)


def _post_burn_in_states(results) -> np.ndarray:
    tops = [r.records[-1] for r in results]
    n = min(len(t) - t.burn_in for t in tops)
    return np.stack([t.states[t.burn_in: t.burn_in + n] for t in tops])


def chain_diagnostics(records_per_chain, acf_lags: int, n_params: Optional[int] = None) -> dict:
    """Diagnostics from top-level records of several chains (post burn-in)."""
    tops = [recs[-1] for recs in records_per_chain]
    n = min(len(t) - t.burn_in for t in tops)
    states = np.stack([t.states[t.burn_in: t.burn_in + n] for t in tops])
    dim = states.shape[2]
    params = range(min(dim, n_params) if n_params else dim)
    acceptance = {}
    for ell in range(len(records_per_chain[0])):
        acceptance[ell] = [float(np.mean(recs[ell].accepted[recs[ell].burn_in:])) if len(recs[ell]) else None
                           for recs in records_per_chain]
    return diag.diagnostics_report(states, parameters=params, acf_lags=acf_lags, acceptance=acceptance)


def _estimator_report(config, results, reference):
    per_chain = []
    traces = {}
    for r in results:
        samples = est.MultilevelSamples.from_records(r.records)
        samples.check_counts(config.sampler.subchain_lengths)
        summaries = est.level_summaries(samples)
        per_chain.append({
            "chain": r.chain,
            "standard": est.standard_estimate(samples.states[-1]),
            "multilevel": est.mlda_estimate(samples, config.sampler.subchain_lengths),
            "levels": [s.__dict__ for s in summaries],
            "counts": [int(s.size) for s in samples.states],
        })
        traces[r.chain] = samples
    if reference is None:
        reference = float(np.mean([c["multilevel"] for c in per_chain]))
        ref_source = "pooled multilevel estimate"
    else:
        ref_source = "config"
    for c in per_chain:
        samples = traces[c["chain"]]
        tr = est.error_trace(samples, reference, config.sampler.subchain_lengths)
        c["final_error_standard"] = float(tr["standard"][-1])
        c["final_error_multilevel"] = float(tr["multilevel"][-1])
        traces[c["chain"]] = tr
    return {"reference": reference, "reference_source": ref_source, "chains": per_chain}, traces


def _write_run(out: Path, config, problem, results, write_subchains, label_levels):
    for r in results:
        n_levels = len(r.records)
        for ell, rec in enumerate(r.records):
            if ell < n_levels - 1 and not write_subchains:
                continue
            write_chain(rec, out / f"chain_{r.chain}_level_{label_levels[ell]}.csv")
        if r.bias is not None:
            write_bias_model(r.bias, out / f"bias_chain_{r.chain}.txt")


def _plot_data(out: Path, config, results, report):
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    states = _post_burn_in_states(results)
    n_chains, n_draws, dim = states.shape
    shown = min(dim, config.output.ess_parameters or dim)
    cols = {"draw": np.arange(n_draws)}
    for c in range(n_chains):
        for i in range(shown):
            cols[f"chain{c}_theta{i}"] = states[c, :, i]
    write_series_csv(plots / "traces.csv", cols)
    acf_cols = {}
    for entry in report["parameters"]:
        for c, acf in enumerate(entry["acf"]):
            if acf is not None:
                acf_cols[f"chain{c}_theta{entry['index']}"] = np.array(acf)
    if acf_cols:
        length = min(len(v) for v in acf_cols.values())
        write_series_csv(plots / "acf.csv", {"lag": np.arange(length),
                                             **{k: v[:length] for k, v in acf_cols.items()}})
    write_series_csv(plots / "ess.csv", {
        "parameter": np.array([e["index"] for e in report["parameters"]]),
        "ess": np.array([np.nan if e["ess"] is None else e["ess"] for e in report["parameters"]]),
    })


def _map_threads(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_experiment(config: ExperimentConfig, output_dir, seed: Optional[int] = None,
                   chains: Optional[int] = None, threads: int = 1) -> dict:
    """Run every chain of ``config`` and write outputs to ``output_dir``.

    Outputs are staged in a sibling temporary directory and moved into place
    only after everything succeeded, so a failure leaves no partial files.
    """
    updates = {}
    if seed is not None:
        updates["seed"] = int(seed)
    if chains is not None:
        updates["sampler"] = config.sampler.model_copy(update={"chains": int(chains)})
    if updates:
        config = config.model_copy(update=updates)
        config = ExperimentConfig.model_validate(config.model_dump())
    output_dir = Path(output_dir)
    output_dir.parent.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{output_dir.name}.partial-", dir=output_dir.parent))
    try:
        summary = _run_into(stage, config, threads)
        output_dir.mkdir(exist_ok=True)
        for item in stage.iterdir():
            dest = output_dir / item.name
            if dest.is_dir():
                shutil.rmtree(dest)
            elif dest.exists():
                dest.unlink()
            item.rename(dest)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return summary


def _run_into(out: Path, config: ExperimentConfig, threads: int) -> dict:
    problem = build_problem(config)
    truth = true_parameters(config, problem)
    data = generate_synthetic_data(problem, truth, config.problem.data.noise_seed)
    levels = config.levels
    hierarchy = problem.hierarchy(data, levels)

    write_json(config.effective(), out / "config.effective.json")
    write_series_csv(out / "data.csv", {"index": np.arange(data.size), "value": data})

    chain_ids = list(range(config.sampler.chains))
    results = _map_threads(lambda c: _run_chain(config, problem, hierarchy, data, truth, c), chain_ids, threads)
    _write_run(out, config, problem, results, config.output.write_subchains, levels)

    report = chain_diagnostics([r.records for r in results], config.output.acf_lags,
                               config.output.ess_parameters)
    write_json(report, out / "diagnostics.json")
    _plot_data(out, config, results, report)

    wall = float(sum(r.wall_time for r in results))
    timing = {"chains": {str(r.chain): r.wall_time for r in results}, "total": wall,
              "ess_per_second": [None if e["ess"] is None else diag.es_per_second(e["ess"], wall)
                                 for e in report["parameters"]]}

    summary = {"diagnostics": report}
    if config.estimator.enabled:
        est_report, traces = _estimator_report(config, results, config.estimator.reference)
        write_json(est_report, out / "estimator.json")
        for c, tr in traces.items():
            write_series_csv(out / "plots" / f"error_trace_chain_{c}.csv", tr)
        summary["estimator"] = est_report

    if config.sampler.baseline:
        base_dir = out / "baseline"
        base_dir.mkdir()
        fine = problem.hierarchy(data, [levels[-1]])
        base = _map_threads(lambda c: _run_chain(config, problem, fine, data, truth, c, baseline=True),
                            chain_ids, threads)
        _write_run(base_dir, config, problem, base, False, [levels[-1]])
        base_report = chain_diagnostics([r.records for r in base], config.output.acf_lags,
                                        config.output.ess_parameters)
        write_json(base_report, base_dir / "diagnostics.json")
        base_wall = float(sum(r.wall_time for r in base))
        timing["baseline"] = {"total": base_wall, "ess_per_second": [
            None if e["ess"] is None else diag.es_per_second(e["ess"], base_wall)
            for e in base_report["parameters"]]}
        summary["baseline"] = base_report

    write_metadata(config.effective(), config.seed, out / "metadata.json", extra={
        "levels": levels,
        "top_level": levels[-1],
        "burn_in": config.sampler.burn_in,
        "chains": config.sampler.chains,
        "estimator": config.estimator.enabled,
        "subchain_lengths": config.sampler.subchain_lengths,
        "qoi": _qoi_name(problem),
    })
    write_json(timing, out / "timing.json")
    summary["timing"] = timing
    return summary


def _qoi_name(problem) -> Optional[str]:
    return "mean_predator" if isinstance(problem, PredatorPreyProblem) else None


def _load_metadata(chain_dir: Path) -> dict:
    path = chain_dir / "metadata.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; not a run directory")
    return json.loads(path.read_text())


def load_records(chain_dir) -> tuple:
    """Per-chain lists of records (coarsest first) and the run metadata."""
    chain_dir = Path(chain_dir)
    meta = _load_metadata(chain_dir)
    levels = meta["levels"]
    lengths = meta["subchain_lengths"]
    out = []
    for c in range(meta["chains"]):
        recs = []
        for i, ell in enumerate(levels):
            path = chain_dir / f"chain_{c}_level_{ell}.csv"
            if not path.exists():
                recs.append(None)
                continue
            factor = int(np.prod(lengths[i:])) if (meta["estimator"] and i < len(levels) - 1) else 1
            burn = meta["burn_in"] * factor if (meta["estimator"] or i == len(levels) - 1) else 0
            recs.append(read_chain(path, burn_in=burn))
        out.append(recs)
    return out, meta


def diagnose(chain_dir, acf_lags: Optional[int] = None) -> dict:
    records, meta = load_records(chain_dir)
    cfg = meta.get("config_hash")
    if any(r[-1] is None for r in records):
        raise FileNotFoundError("top-level chain files are missing")
    lags = acf_lags if acf_lags is not None else _effective_config(chain_dir)["output"]["acf_lags"]
    n_params = _effective_config(chain_dir)["output"]["ess_parameters"]
    # acceptance only over levels that were stored
    complete = all(all(x is not None for x in r) for r in records)
    recs = records if complete else [[r[-1]] for r in records]
    report = chain_diagnostics(recs, lags, n_params)
    if not complete:
        report["acceptance_rate"] = {str(len(records[0]) - 1): report["acceptance_rate"]["0"]}
    report["config_hash"] = cfg
    return report


def _effective_config(chain_dir) -> dict:
    return json.loads((Path(chain_dir) / "config.effective.json").read_text())


def estimate(chain_dir, qoi_name: str, reference: Optional[float] = None) -> dict:
    records, meta = load_records(chain_dir)
    if not meta.get("estimator"):
        raise ContractViolation("run was not recorded in estimator mode; no multilevel samples available")
    if meta.get("qoi") != qoi_name:
        raise ContractViolation(f"run recorded QoI {meta.get('qoi')!r}, not {qoi_name!r}")
    if any(x is None for r in records for x in r):
        raise ContractViolation("estimator needs the subchain-level chain files (output.write_subchains)")
    lengths = meta["subchain_lengths"]
    chains = []
    for c, recs in enumerate(records):
        samples = est.MultilevelSamples.from_records(recs)
        samples.check_counts(lengths)
        entry = {
            "chain": c,
            "standard": est.standard_estimate(samples.states[-1]),
            "multilevel": est.mlda_estimate(samples, lengths),
            "levels": [s.__dict__ for s in est.level_summaries(samples)],
        }
        if reference is not None:
            tr = est.error_trace(samples, reference, lengths)
            entry["error_trace"] = {k: v.tolist() for k, v in tr.items()}
        chains.append(entry)
    return {"qoi": qoi_name, "reference": reference, "chains": chains}
