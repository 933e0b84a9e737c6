"""Disorder ensembles: seeded position jitter, independent trajectories,
and fixed-order aggregation into means with dispersion statistics.

Reproducibility contract: realization i draws its geometry from the
counter-derived seed SeedSequence((master_seed, i)), so any realization can
be regenerated in isolation and results do not depend on execution order
or worker-pool width.  Aggregation always reduces over the realization
axis of an index-ordered array (numpy's fixed-order pairwise summation),
which makes summaries bit-identical across runs and worker counts.
"""

from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Optional

import numpy as np

from .observables import make_battery_observer
from .propagator import IntegratorConfig, evolve
from .waveguide import SystemSpec, build_generator, build_geometry
from .algebra import blocked_product_density


def derive_seed(master_seed: int, index: int) -> int:
    """Counter scheme for per-realization seeds: hash of (master, index)."""
    ss = np.random.SeedSequence((int(master_seed), int(index)))
    return int(ss.generate_state(1, np.uint64)[0])


def sample_epsilons(spec: SystemSpec, realization_seed: int) -> np.ndarray:
    """L independent uniform draws in [-1/2, 1/2], deterministic in the seed."""
    if spec.arrangement != "disordered":
        raise ValueError("position jitter is only defined for disordered chains")
    rng = np.random.default_rng(np.random.PCG64(int(realization_seed)))
    return rng.uniform(-0.5, 0.5, spec.n_atoms)


@dataclass(frozen=True)
class EnsembleConfig:
    spec: SystemSpec
    sample_times: np.ndarray
    n_realizations: int = 200
    master_seed: int = 0
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be >= 1")


@dataclass(eq=False)
class EnsembleSummary:
    """Disorder-averaged observables with standard errors of the mean.

    per_realization has shape (N, n_times, L + 2) holding the site
    energies, battery energy, and battery ergotropy of every realization;
    it is retained so summaries over disjoint seed ranges merge exactly.
    """

    times: np.ndarray
    n_charged: int
    seeds: np.ndarray
    per_realization: np.ndarray
    trace_drift: np.ndarray        # (N, n_times)
    min_eigenvalue: np.ndarray     # (N, n_times)

    site_energy_mean: np.ndarray = field(init=False)
    site_energy_stderr: np.ndarray = field(init=False)
    energy_per_cell_mean: np.ndarray = field(init=False)
    energy_per_cell_stderr: np.ndarray = field(init=False)
    ergotropy_per_cell_mean: np.ndarray = field(init=False)
    ergotropy_per_cell_stderr: np.ndarray = field(init=False)

    def __post_init__(self):
        data = self.per_realization
        n = data.shape[0]
        mean = data.mean(axis=0)
        if n > 1:
            stderr = data.std(axis=0, ddof=1) / np.sqrt(n)
        else:
            stderr = np.zeros_like(mean)
        m = self.n_charged
        self.site_energy_mean = mean[:, :-2]
        self.site_energy_stderr = stderr[:, :-2]
        self.energy_per_cell_mean = mean[:, -2] / m
        self.energy_per_cell_stderr = stderr[:, -2] / m
        self.ergotropy_per_cell_mean = mean[:, -1] / m
        self.ergotropy_per_cell_stderr = stderr[:, -1] / m

    @property
    def n_realizations(self) -> int:
        return self.per_realization.shape[0]

    @property
    def max_trace_drift(self) -> float:
        return float(np.max(np.abs(self.trace_drift)))

    @property
    def worst_eigenvalue(self) -> float:
        return float(np.min(self.min_eigenvalue))


def merge_summaries(a: EnsembleSummary, b: EnsembleSummary) -> EnsembleSummary:
    """Combine summaries over disjoint seed ranges (a's realizations first)."""
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("summaries sample different time grids")
    if a.n_charged != b.n_charged:
        raise ValueError("summaries describe different battery sizes")
    return EnsembleSummary(
        times=a.times,
        n_charged=a.n_charged,
        seeds=np.concatenate([a.seeds, b.seeds]),
        per_realization=np.concatenate([a.per_realization, b.per_realization]),
        trace_drift=np.concatenate([a.trace_drift, b.trace_drift]),
        min_eigenvalue=np.concatenate([a.min_eigenvalue, b.min_eigenvalue]),
    )


def run_realization(config: EnsembleConfig, index: int):
    """Evolve one geometry realization; returns (seed, observables, health)."""
    spec = config.spec
    seed = derive_seed(config.master_seed, index)
    if spec.arrangement == "disordered":
        eps = sample_epsilons(spec, seed)
        geom = build_geometry(spec, eps)
    else:
        geom = build_geometry(spec)
    gen = build_generator(geom, spec)
    rho0 = blocked_product_density(spec.n_atoms, range(1, spec.n_charged + 1))
    observer = make_battery_observer(spec.n_atoms, spec.n_charged)
    traj = evolve(gen, rho0, config.sample_times, config.integrator,
                  observer=observer, keep_states=False)
    return seed, traj.observables, traj.trace_drift, traj.min_eigenvalue


def _worker(args):
    config, index = args
    try:
        return index, run_realization(config, index)
    except Exception as exc:  # attach the offending seed before propagating
        seed = derive_seed(config.master_seed, index)
        raise RuntimeError(
            f"realization {index} (seed {seed}) failed: {exc}") from exc


def run_ensemble(config: EnsembleConfig,
                 workers: int = 1) -> EnsembleSummary:
    """Run all realizations and aggregate in fixed realization-index order."""
    n = config.n_realizations
    jobs = [(config, i) for i in range(n)]
    if workers > 1 and n > 1:
        ctx = get_context()
        with ctx.Pool(processes=min(workers, n)) as pool:
            results = pool.map(_worker, jobs)
    else:
        results = [_worker(j) for j in jobs]
    results.sort(key=lambda r: r[0])

    seeds = np.array([r[1][0] for r in results], dtype=np.uint64)
    data = np.stack([r[1][1] for r in results])
    drift = np.stack([r[1][2] for r in results])
    low = np.stack([r[1][3] for r in results])
    return EnsembleSummary(
        times=np.asarray(config.sample_times, dtype=float),
        n_charged=config.spec.n_charged,
        seeds=seeds,
        per_realization=data,
        trace_drift=drift,
        min_eigenvalue=low,
    )
