"""Seeded end-to-end stages behind the command-line interface.

Each stage is a pure function of (configuration, input files, master seed).
Randomness is fanned out from the master seed with
:func:`stochepi._rng.child_seed` under the roles ``simulate``, ``observe``,
``pilot``, ``chain`` (index k), ``abc`` and ``bands``.
"""

import json
import logging
import platform
import time
from importlib import metadata
from pathlib import Path

import numba
import numpy as np

from . import _rng, io
from .config import load_scenario, validate
from .diagnostics import summarize
from .estimators import ABCSampler, PMMHSampler, build_observation_model
from .exceptions import TuningError
from .gillespie import simulate_on_grid
from .models import Params, integrate_deterministic
from .observation import simulate_series

logger = logging.getLogger(__name__)

SUMMARY_SCHEMA = 1
DEFAULT_BAND_DRAWS = 200


def _versions():
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"stochepi": pkg, "numpy": np.__version__, "numba": numba.__version__,
            "python": platform.python_version()}


def _grid(config):
    g = config.grid
    return np.arange(g["first"], g["last"] + 1, dtype=float)


def _truth(config):
    t = config.get("true_params")
    if t is None:
        raise ValueError("this stage needs true_params in the configuration")
    return Params(t["beta"], t["gamma"], t.get("alpha"))


def cmd_simulate(config, out_dir):
    """Write ``hidden.csv``: the true epidemic on the integer grid."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec, params, grid = config.spec, _truth(config), _grid(config)
    if config.get("hidden", "deterministic") == "deterministic":
        traj = integrate_deterministic(spec, params, config.init, grid)
    else:
        seed = _rng.child_seed(config.seed, "simulate")
        traj = simulate_on_grid(spec, params, config.init, grid, seed)
    path = out / "hidden.csv"
    io.write_trajectory(path, traj)
    return path


def observation_model(config):
    obs = config.obs
    return build_observation_model(obs["kind"], obs.get("p_obs"), obs.get("n_ratio"),
                                   obs.get("variance_floor", 0.25))


def cmd_observe(config, hidden_path, out_dir):
    """Corrupt ``hidden.csv`` into ``observed.csv`` (the first grid time is not observed)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    hidden = io.read_trajectory(hidden_path, config.spec.compartments)
    rng = np.random.default_rng(_rng.child_seed(config.seed, "observe"))
    series = simulate_series(observation_model(config), hidden, rng)
    path = out / "observed.csv"
    io.write_observed(path, series)
    return path


def _load_observed(config, observed_path):
    series = io.read_observed(observed_path)
    n = config.get("truncate")
    return series if n is None else series.truncate(n)


def make_estimator(config, threads=1, n_chains=None):
    s = config.sampler
    common = dict(model=config.model, population=config.population, init=tuple(config.init),
                  params=tuple(s["params"]), fixed=s.get("fixed"), random_state=config.seed)
    if s["kind"] == "abc":
        return ABCSampler(epsilon=s["epsilon"], n_accept=s["n_accept"], lower=tuple(s["lower"]),
                          upper=tuple(s["upper"]),
                          max_attempts=s.get("max_attempts", 10_000_000), **common)
    obs = config.obs
    pilot = s.get("pilot", {})
    adaptive = s.get("adaptive")
    return PMMHSampler(
        obs=obs["kind"], n_ratio=obs.get("n_ratio"), variance_floor=obs.get("variance_floor", 0.25),
        p_obs=obs.get("p_obs"), theta0=tuple(s["theta0"]),
        n_chains=n_chains or s.get("n_chains", 3), n_steps=s.get("n_steps", 5000),
        n_particles=s.get("n_particles", 100), burn=s.get("burn", 1000), thin=s.get("thin", 10),
        pilot=pilot.get("enabled", adaptive is None),
        target_rate=tuple(pilot.get("target_rate", (0.10, 0.25))),
        n_pilot=pilot.get("n_steps", 1000), pilot_window=pilot.get("window", 100),
        max_adjust=pilot.get("max_adjust", 20), on_tuning_failure=pilot.get("on_failure", "raise"),
        h=s.get("h"), sigma=s.get("sigma"), adaptive=adaptive is not None,
        t0=(adaptive or {}).get("t0", 1000), epsilon=(adaptive or {}).get("epsilon", 1e-4),
        prior_upper=s.get("prior_upper"), n_jobs=threads, **common)


def cmd_fit(config, observed_path, out_dir, threads=1, n_chains=None):
    """Fit the configured sampler and write the run directory.

    PMMH writes ``chain_1.csv`` .. ``chain_k.csv``, ``tuning.json`` and
    ``meta.json``; ABC writes ``posterior.csv`` and ``meta.json``.  A copy of
    the configuration goes to ``config.json`` for later stages.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    observed = _load_observed(config, observed_path)
    io.write_json(out / "config.json", config.raw)
    est = make_estimator(config, threads, n_chains)
    started = time.perf_counter()
    meta = {"master_seed": config.seed, "scenario": config.scenario_id, "versions": _versions(),
            "threads": threads, "n_observations": len(observed), "sampler": config.sampler["kind"]}

    if config.sampler["kind"] == "abc":
        est.fit(observed)
        r = est.result_
        io.write_table(out / "posterior.csv", ["sample", *r.names, "distance", "attempt"],
                       [np.arange(len(r.samples)),
                        *(r.samples[:, j] for j in range(len(r.names))),
                        r.distances, r.attempt_index])
        meta.update(seed=est.seed_, attempts=r.attempts, accepted=len(r.samples),
                    epsilon=r.epsilon, wall_time=time.perf_counter() - started)
        io.write_json(out / "meta.json", meta)
        return out

    try:
        est.fit(observed)
    except TuningError as err:
        io.write_json(out / "tuning.json", {"failed": str(err), "trace": err.trace,
                                            "h": None, "sigma": None})
        meta.update(wall_time=time.perf_counter() - started, failed="tuning")
        io.write_json(out / "meta.json", meta)
        raise
    for k, chain in enumerate(est.chains_, start=1):
        io.write_chain(out / f"chain_{k}.csv", chain)
    io.write_json(out / "tuning.json", est.tuning_)
    meta.update(chain_seeds=est.seeds_, n_particles=est.n_particles, n_steps=est.n_steps,
                mode="adaptive" if est.adaptive else "fixed",
                wall_time=time.perf_counter() - started)
    io.write_json(out / "meta.json", meta)
    return out


def _run_config(run_dir):
    return validate(json.loads((Path(run_dir) / "config.json").read_text(encoding="utf-8")))


def cmd_diagnose(run_dir, truth=None, config=None, n_draws=None):
    """Summarise a run directory into ``summary.json`` and ``bands.csv``.

    ``truth`` maps parameter names to true values and adds PMSE fields.
    """
    run = Path(run_dir)
    config = config or _run_config(run)
    s = config.sampler
    notices = []
    est = make_estimator(config)
    if s["kind"] == "abc":
        header, cols = io.read_table(run / "posterior.csv")
        names = tuple(header[1:-2])
        samples = np.column_stack([c.astype(float) for c in cols[1:-2]])
        meta = io.read_json(run / "meta.json")
        stats, _ = summarize([samples], names, truth)
        for v in stats.values():
            v.rhat = None
        info = {"n_kept": len(samples), "attempts": meta["attempts"],
                "acceptance_rate": len(samples) / meta["attempts"]}
        notices.append("ABC samples are independent; R-hat not applicable")
        posterior = samples
    else:
        files = sorted(run.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
        if not files:
            raise FileNotFoundError(f"no chain files in {run}")
        chains = [io.read_chain(f) for f in files]
        names = chains[0].names
        burn, thin = s.get("burn", 1000), s.get("thin", 10)
        stats, info = summarize(chains, names, truth, burn, thin)
        if len(chains) < 2:
            notices.append("single chain: R-hat omitted")
        posterior = np.concatenate([c.samples[burn::thin] for c in chains])
    for n in notices:
        logger.warning(n)

    est.posterior_ = posterior
    est.names_ = names
    grid = _grid(config)
    draws = n_draws or config.get("bands", {}).get("n_draws", DEFAULT_BAND_DRAWS)
    bands = est.predict(grid, draws)
    io.write_bands(run / "bands.csv", grid, bands, config.spec.compartments)
    summary = {"schema": SUMMARY_SCHEMA, "scenario": config.scenario_id,
               "sampler": s["kind"], "parameters": {k: v.as_dict() for k, v in stats.items()},
               "notices": notices, **info}
    if truth is not None:
        summary["truth"] = dict(truth)
    io.write_json(run / "summary.json", summary)
    return summary


def reproduce(scenario_id, out_dir, seed=None, threads=1, n_chains=None):
    """simulate -> observe -> fit -> diagnose for a bundled scenario (and each sweep value)."""
    config = load_scenario(scenario_id)
    if seed is not None:
        config = config.with_seed(seed)
    root = Path(out_dir) / config.scenario_id
    results = {}
    for label, variant in config.variants():
        run = root if label is None else root / label.replace("=", "_")
        logger.info("scenario %s%s -> %s", scenario_id, "" if label is None else f" [{label}]", run)
        hidden = cmd_simulate(variant, run)
        observed = cmd_observe(variant, hidden, run)
        cmd_fit(variant, observed, run, threads, n_chains)
        truth = dict(variant.get("true_params") or {})
        if "p_obs" in variant.sampler["params"]:
            truth["p_obs"] = variant.obs["p_obs"]
        results[label] = cmd_diagnose(run, truth or None, variant)
    return results

