"""Decay-rate extraction and scaling fits, plus the lattice-spacing sweep.

Both fitters are plain least squares on transformed coordinates (semilog
for exponential tails, log-log for power laws), matching how the scaling
results are usually presented.  R-squared is reported with the convention
that constant data gives 0.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .ensemble import EnsembleConfig, EnsembleSummary, run_ensemble
from .propagator import IntegratorConfig
from .waveguide import SystemSpec

TAIL_FLOOR = 1e-10   # double-precision noise floor for tail windows


@dataclass(frozen=True)
class FitResult:
    model: str                     # "exponential-tail" | "power-law"
    window: tuple                  # (lo, hi) in the fit coordinate
    n_points: int
    r_squared: float
    rms_residual: float            # in the regression (log) coordinate
    rate: Optional[float] = None         # exponential: gamma
    amplitude: Optional[float] = None
    exponent: Optional[float] = None     # power law: p in y = C x^p
    prefactor: Optional[float] = None


def _line_fit(x, y):
    """Least-squares line y = a x + b with R^2 (0 for constant data)."""
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    ss_res = float(np.sum(resid ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return float(a), float(b), r2, rms


def default_tail_window(times, values, floor: float = TAIL_FLOOR):
    """Last temporal decade of the sampled range with values above floor."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    ok = (values > floor) & (times > 0)
    if not ok.any():
        raise ValueError(f"no samples above the {floor:.0e} floor")
    t_hi = float(times[ok][-1])
    return t_hi / 10.0, t_hi


def fit_exponential_tail(times, values, window=None) -> FitResult:
    """gamma and amplitude of values ~ A exp(-gamma t) inside the window."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if window is None:
        window = default_tail_window(times, values)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    if np.any(values[sel] <= 0):
        raise ValueError("window contains nonpositive values")
    if sel.sum() < 8:
        raise ValueError(f"need >= 8 samples in the window, got {int(sel.sum())}")
    slope, intercept, r2, rms = _line_fit(times[sel], np.log(values[sel]))
    return FitResult(model="exponential-tail", window=(float(lo), float(hi)),
                     n_points=int(sel.sum()), r_squared=r2, rms_residual=rms,
                     rate=-slope, amplitude=float(np.exp(intercept)))


def fit_power_law(xs, ys) -> FitResult:
    """Exponent and prefactor of ys ~ C xs^p (log-log least squares)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise ValueError("power-law fit requires positive inputs")
    if xs.size < 3:
        raise ValueError("need at least 3 points")
    slope, intercept, r2, rms = _line_fit(np.log(xs), np.log(ys))
    return FitResult(model="power-law",
                     window=(float(xs.min()), float(xs.max())),
                     n_points=int(xs.size), r_squared=r2, rms_residual=rms,
                     exponent=slope, prefactor=float(np.exp(intercept)))


def subexponential_discriminator(times, values, window):
    """(R^2_exp, R^2_pow) of both models on the same window.

    Callers assert which functional form dominates; a power-law win flags
    subexponential late-time decay.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    sel = (times >= lo) & (times <= hi)
    if np.any(values[sel] <= 0):
        raise ValueError("window contains nonpositive values")
    if sel.sum() < 8:
        raise ValueError(f"need >= 8 samples in the window, got {int(sel.sum())}")
    logv = np.log(values[sel])
    _, _, r2_exp, _ = _line_fit(times[sel], logv)
    _, _, r2_pow, _ = _line_fit(np.log(times[sel]), logv)
    return r2_exp, r2_pow


def ergotropy_tail_window(times, values, floor: float = TAIL_FLOOR):
    """Tail window that stops where the signal first sinks below the floor.

    Ergotropy reaches the double-precision noise floor long before the
    horizon for small chains; samples after the first crossing are noise
    and are excluded before applying the last-decade rule.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    below = np.flatnonzero(values < floor)
    cut = below[0] if below.size else values.size
    return default_tail_window(times[:cut], values[:cut], floor)


@dataclass(eq=False)
class SpacingSweepResult:
    """Energy-vs-spacing table plus the worst integrator health seen."""

    rows: list
    max_trace_drift: float
    min_eigenvalue: float


def spacing_sweep(spec_template: SystemSpec, kd_grid, tau_checkpoints,
                  n_realizations: int, master_seed: int,
                  integrator: Optional[IntegratorConfig] = None,
                  workers: int = 1,
                  arrangements=("ordered", "disordered")) -> SpacingSweepResult:
    """Stored energy per cell on a grid of lattice spacings.

    For each kd: the ordered chain (a single deterministic run) and the
    disorder average over n_realizations geometries.  Rows carry
    (kd, arrangement, tau, energy_per_cell, stderr).
    """
    integrator = integrator or IntegratorConfig()
    taus = np.asarray(tau_checkpoints, dtype=float)
    rows = []
    drift, low = 0.0, 0.0
    for kd in kd_grid:
        for arrangement in arrangements:
            spec = SystemSpec(n_atoms=spec_template.n_atoms,
                              n_charged=spec_template.n_charged,
                              kd=float(kd), arrangement=arrangement)
            n = 1 if arrangement == "ordered" else n_realizations
            summary = run_ensemble(
                EnsembleConfig(spec=spec, sample_times=taus,
                               n_realizations=n, master_seed=master_seed,
                               integrator=integrator),
                workers=workers)
            drift = max(drift, summary.max_trace_drift)
            low = min(low, summary.worst_eigenvalue)
            for k, tau in enumerate(taus):
                rows.append({
                    "kd": float(kd),
                    "arrangement": arrangement,
                    "tau": float(tau),
                    "energy_per_cell": float(summary.energy_per_cell_mean[k]),
                    "stderr": float(summary.energy_per_cell_stderr[k]),
                })
    return SpacingSweepResult(rows=rows, max_trace_drift=drift,
                              min_eigenvalue=low)
