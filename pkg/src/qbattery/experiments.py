"""Experiment drivers behind the CLI.

Each driver computes everything first, then emits plot-ready CSVs (one
figure per file) and a manifest.  Every number is written as a
full-precision decimal (17 significant digits) with '.' as the decimal
separator and newline-terminated rows, so byte-identical reruns are a
meaningful contract.
"""

import time
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .ensemble import EnsembleConfig, run_ensemble
from .fits import (default_tail_window, ergotropy_tail_window,
                   fit_exponential_tail, fit_power_law, spacing_sweep)
from .observables import single_atom_energy, single_atom_ergotropy, single_atom_rate
from .policy import POLICY
from .propagator import IntegratorConfig
from .runconfig import sample_grid, write_manifest
from .version import __version__
from .waveguide import SystemSpec


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _emit_csvs(out_dir, files):
    """Write {name: (header, rows)}; on failure remove everything written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        for name, (header, rows) in files.items():
            path = out_dir / name
            with open(path, "w", newline="\n") as fh:
                fh.write(",".join(header) + "\n")
                for row in rows:
                    fh.write(",".join(_fmt(x) for x in row) + "\n")
            written.append(path)
    except BaseException:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return written


def integrator_from(params) -> IntegratorConfig:
    return IntegratorConfig(mode=params["integrator"], step=params["fixed_step"],
                            abs_tol=params["abs_tol"], rel_tol=params["rel_tol"],
                            max_step=params["max_step"])


class _Health:
    def __init__(self):
        self.max_trace_drift = 0.0
        self.min_eigenvalue = 0.0

    def absorb(self, summary):
        self.max_trace_drift = max(self.max_trace_drift, summary.max_trace_drift)
        self.min_eigenvalue = min(self.min_eigenvalue, summary.worst_eigenvalue)

    def as_dict(self):
        return {"max_trace_drift": self.max_trace_drift,
                "min_eigenvalue": self.min_eigenvalue}

    def ok(self, rel_tol: float) -> bool:
        return (self.max_trace_drift <= POLICY.trace_drift_factor * rel_tol
                and self.min_eigenvalue >= POLICY.min_eigenvalue_floor)


def _run_chain(args):
    """One (arrangement, L) ensemble; module-level so pools can pickle it."""
    params, arrangement, n_atoms, workers = args
    spec = SystemSpec(n_atoms=n_atoms, n_charged=params["charged"],
                      kd=params["kd_over_pi"] * np.pi, arrangement=arrangement)
    n = params["n_avg"] if arrangement == "disordered" else 1
    config = EnsembleConfig(spec=spec, sample_times=sample_grid(params),
                            n_realizations=n, master_seed=params["seed"],
                            integrator=integrator_from(params))
    return run_ensemble(config, workers=workers)


def run_decay_curve(params, out_dir, workers):
    """Energy and ergotropy storage curves per (arrangement, chain length)."""
    times = sample_grid(params)
    health = _Health()
    timings = []
    files = {}
    for arrangement in params["arrangements"]:
        for n_atoms in params["atoms"]:
            t0 = time.perf_counter()
            summary = _run_chain((params, arrangement, n_atoms, workers))
            timings.append((f"{arrangement}_L{n_atoms}", time.perf_counter() - t0))
            health.absorb(summary)
            drift = np.max(np.abs(summary.trace_drift), axis=0)
            rows = [
                (times[i],
                 summary.energy_per_cell_mean[i], summary.energy_per_cell_stderr[i],
                 summary.ergotropy_per_cell_mean[i], summary.ergotropy_per_cell_stderr[i],
                 drift[i])
                for i in range(times.size)
            ]
            files[f"decay_{arrangement}_L{n_atoms}.csv"] = (
                ["tau", "energy_per_cell", "energy_stderr",
                 "ergotropy_per_cell", "ergotropy_stderr", "trace_drift"],
                rows)
    if params["include_single_atom"]:
        rate = single_atom_rate(params["kd_over_pi"] * np.pi)
        rows = [(t, single_atom_energy(t, rate), single_atom_ergotropy(t, rate))
                for t in times]
        files["single_atom.csv"] = (
            ["tau", "energy_per_cell", "ergotropy_per_cell"], rows)
    paths = _emit_csvs(out_dir, files)
    manifest = write_manifest(out_dir, "decay_curve", params,
                              health.as_dict(), timings, paths, __version__)
    return paths + [manifest], health


def run_fit_rates(params, out_dir, workers):
    """Ordered-chain tail rates vs chain length, plus their power-law fits."""
    times = sample_grid(params)
    health = _Health()
    timings = []
    jobs = [(params, "ordered", n_atoms, 1) for n_atoms in params["atoms"]]
    t0 = time.perf_counter()
    if workers > 1 and len(jobs) > 1:
        with get_context().Pool(processes=min(workers, len(jobs))) as pool:
            summaries = pool.map(_run_chain, jobs)
    else:
        summaries = [_run_chain(j) for j in jobs]
    timings.append(("ordered_trajectories", time.perf_counter() - t0))

    rate_rows = []
    gammas, gammas_erg = [], []
    for n_atoms, summary in zip(params["atoms"], summaries):
        health.absorb(summary)
        energy = summary.energy_per_cell_mean
        ergo = summary.ergotropy_per_cell_mean
        fit_e = fit_exponential_tail(times, energy,
                                     default_tail_window(times, energy))
        fit_g = fit_exponential_tail(times, ergo,
                                     ergotropy_tail_window(times, ergo))
        gammas.append(fit_e.rate)
        gammas_erg.append(fit_g.rate)
        rate_rows.append((n_atoms,
                          fit_e.rate, fit_e.amplitude, fit_e.r_squared,
                          fit_e.window[0], fit_e.window[1],
                          fit_g.rate, fit_g.amplitude, fit_g.r_squared,
                          fit_g.window[0], fit_g.window[1]))
    scaling_e = fit_power_law(params["atoms"], gammas)
    scaling_g = fit_power_law(params["atoms"], gammas_erg)
    scaling_rows = [
        ("energy", scaling_e.exponent, scaling_e.prefactor,
         scaling_e.r_squared, scaling_e.n_points),
        ("ergotropy", scaling_g.exponent, scaling_g.prefactor,
         scaling_g.r_squared, scaling_g.n_points),
    ]
    files = {
        "decay_rates.csv": (
            ["n_atoms", "gamma_energy", "amplitude_energy", "r2_energy",
             "window_lo_energy", "window_hi_energy",
             "gamma_ergotropy", "amplitude_ergotropy", "r2_ergotropy",
             "window_lo_ergotropy", "window_hi_ergotropy"],
            rate_rows),
        "scaling_fits.csv": (
            ["quantity", "exponent", "prefactor", "r_squared", "n_points"],
            scaling_rows),
    }
    paths = _emit_csvs(out_dir, files)
    manifest = write_manifest(out_dir, "fit_rates", params,
                              health.as_dict(), timings, paths, __version__)
    return paths + [manifest], health


def run_local_energy(params, out_dir, workers):
    """Site-resolved mean energies in long format (tau, site, mean, stderr)."""
    times = sample_grid(params)
    health = _Health()
    timings = []
    files = {}
    for arrangement in params["arrangements"]:
        for n_atoms in params["atoms"]:
            t0 = time.perf_counter()
            summary = _run_chain((params, arrangement, n_atoms, workers))
            timings.append((f"{arrangement}_L{n_atoms}", time.perf_counter() - t0))
            health.absorb(summary)
            rows = []
            for i in range(times.size):
                for site in range(1, n_atoms + 1):
                    rows.append((times[i], site,
                                 summary.site_energy_mean[i, site - 1],
                                 summary.site_energy_stderr[i, site - 1]))
            files[f"local_energy_{arrangement}_L{n_atoms}.csv"] = (
                ["tau", "site", "mean_energy", "stderr"], rows)
    paths = _emit_csvs(out_dir, files)
    manifest = write_manifest(out_dir, "local_energy", params,
                              health.as_dict(), timings, paths, __version__)
    return paths + [manifest], health


def run_spacing_sweep(params, out_dir, workers):
    """Stored energy vs lattice spacing at fixed checkpoint times."""
    template = SystemSpec(n_atoms=params["atoms"][0], n_charged=params["charged"],
                          kd=np.pi, arrangement="ordered")
    health = _Health()
    t0 = time.perf_counter()
    result = spacing_sweep(
        template,
        kd_grid=[k * np.pi for k in params["kd_over_pi_grid"]],
        tau_checkpoints=params["tau_checkpoints"],
        n_realizations=params["n_avg"],
        master_seed=params["seed"],
        integrator=integrator_from(params),
        workers=workers,
        arrangements=tuple(params["arrangements"]),
    )
    timings = [("sweep", time.perf_counter() - t0)]
    health.max_trace_drift = result.max_trace_drift
    health.min_eigenvalue = result.min_eigenvalue
    rows = [(r["kd"] / np.pi, r["arrangement"], r["tau"],
             r["energy_per_cell"], r["stderr"]) for r in result.rows]
    files = {"spacing_sweep.csv": (
        ["kd_over_pi", "arrangement", "tau", "energy_per_cell", "stderr"],
        rows)}
    paths = _emit_csvs(out_dir, files)
    manifest = write_manifest(out_dir, "spacing_sweep", params,
                              health.as_dict(), timings, paths, __version__)
    return paths + [manifest], health


RUNNERS = {
    "decay_curve": run_decay_curve,
    "fit_rates": run_fit_rates,
    "local_energy": run_local_energy,
    "spacing_sweep": run_spacing_sweep,
}
