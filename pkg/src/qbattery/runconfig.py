"""Experiment configuration: INI files with one section per experiment,
flag overrides, and run manifests that round-trip every parameter.

Section [run] holds shared settings (seed, workers, output directory,
ensemble size, integrator tolerances, sampling grid); each experiment
section may override any of them.  A run manifest is itself a valid
config file — loading it back re-runs the experiment bit-identically —
with extra bookkeeping sections ([manifest], [health], [timings],
[outputs]) that the loader ignores.
"""

import configparser
import hashlib
import os
from pathlib import Path

import numpy as np

RUN_DEFAULTS = {
    "seed": 20260810,
    "workers": 0,              # 0 = all available cores
    "out_dir": "qbattery-out",
    "n_avg": 200,
    "integrator": "adaptive",
    "fixed_step": 0.01,
    "abs_tol": 1e-8,
    "rel_tol": 1e-8,
    "max_step": 10.0,
    "t_min": 1e-2,
    "t_max": 1e3,
    "n_times": 200,
    "include_t0": True,
}

EXPERIMENT_DEFAULTS = {
    "decay_curve": {
        "atoms": [3, 4, 5, 6, 7, 8, 9],
        "charged": 3,
        "kd_over_pi": 2.7,
        "arrangements": ["ordered", "disordered"],
        "include_single_atom": True,
    },
    "fit_rates": {
        "atoms": [4, 5, 6, 7, 8, 9],
        "charged": 3,
        "kd_over_pi": 2.7,
        # The asymptotic single-excitation tail sets in around tau ~ L^3,
        # so rate fits sample an extra decade and integrate tightly enough
        # that energies near the 1e-10 tail floor are signal, not noise.
        "t_max": 1e4,
        "n_times": 260,
        "abs_tol": 1e-12,
    },
    "local_energy": {
        "atoms": [9],
        "charged": 3,
        "kd_over_pi": 2.7,
        "arrangements": ["ordered", "disordered"],
    },
    "spacing_sweep": {
        "atoms": [8],
        "charged": 3,
        "kd_over_pi_grid": [round(2.0 + 0.05 * i, 2) for i in range(21)],
        "tau_checkpoints": [10.0, 100.0, 1000.0],
        "arrangements": ["ordered", "disordered"],
    },
}

_BOOKKEEPING_SECTIONS = {"manifest", "health", "timings", "outputs"}


class ConfigError(Exception):
    """Invalid or unparsable run configuration."""


def _coerce_like(default, text, key):
    """Parse `text` with the type of the built-in default value."""
    try:
        if isinstance(default, bool):
            low = text.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, list):
            parts = text.replace(",", " ").split()
            if default and isinstance(default[0], int):
                return [int(p) for p in parts]
            if default and isinstance(default[0], float):
                return [float(p) for p in parts]
            return parts
        return text
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key} = {text!r}") from exc


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return " ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def load_config(path=None):
    """Parse an INI config (or manifest) into {section: {key: string}}."""
    raw = {}
    if path is not None:
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section.lower() in _BOOKKEEPING_SECTIONS:
                continue
            raw[section] = dict(parser.items(section))
    return raw


def resolve_params(raw, experiment, overrides=None):
    """Merge defaults, [run], the experiment section, and flag overrides.

    Returns a flat dict holding every parameter the experiment needs,
    fully typed; unknown keys are rejected so typos fail loudly.
    """
    if experiment not in EXPERIMENT_DEFAULTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    known = dict(RUN_DEFAULTS)
    known.update(EXPERIMENT_DEFAULTS[experiment])

    params = dict(known)
    for section in ("run", experiment):
        for key, text in raw.get(section, {}).items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            params[key] = _coerce_like(known[key], text, key)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown override {key!r}")
        params[key] = value

    _validate_params(params, experiment)
    return params


def _validate_params(params, experiment):
    if params["integrator"] not in ("adaptive", "fixed-rk4"):
        raise ConfigError("integrator must be 'adaptive' or 'fixed-rk4'")
    for key in ("abs_tol", "rel_tol", "t_min", "t_max", "fixed_step", "max_step"):
        if key in params and params[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    if params["t_max"] <= params["t_min"]:
        raise ConfigError("t_max must exceed t_min")
    if params["n_times"] < 2:
        raise ConfigError("n_times must be at least 2")
    if params["n_avg"] < 1:
        raise ConfigError("n_avg must be >= 1")
    if params["workers"] < 0:
        raise ConfigError("workers must be >= 0")
    atoms = params.get("atoms", [])
    if not atoms or any(not 1 <= a <= 14 for a in atoms):
        raise ConfigError("atoms must be a nonempty list within 1..14")
    if any(params["charged"] > a for a in atoms):
        raise ConfigError("charged cells cannot exceed the smallest chain")
    if "arrangements" in params:
        bad = set(params["arrangements"]) - {"ordered", "disordered"}
        if bad or not params["arrangements"]:
            raise ConfigError(f"invalid arrangements {sorted(bad)}")
    if "kd_over_pi" in params and params["kd_over_pi"] <= 0:
        raise ConfigError("kd_over_pi must be positive")
    if "kd_over_pi_grid" in params:
        if not params["kd_over_pi_grid"] or any(k <= 0 for k in params["kd_over_pi_grid"]):
            raise ConfigError("kd_over_pi_grid must be positive")
    if "tau_checkpoints" in params:
        taus = params["tau_checkpoints"]
        if not taus or any(t < 0 for t in taus) or any(np.diff(taus) <= 0):
            raise ConfigError("tau_checkpoints must be increasing and >= 0")


def sample_grid(params):
    """The experiment's sampling grid: optional tau=0 plus a log-spaced ramp."""
    grid = np.logspace(np.log10(params["t_min"]), np.log10(params["t_max"]),
                       params["n_times"])
    if params["include_t0"]:
        grid = np.concatenate([[0.0], grid])
    return grid


def effective_workers(params) -> int:
    env = os.environ.get("QBATTERY_WORKERS")
    if env is not None:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"QBATTERY_WORKERS must be an integer, got {env!r}") from exc
        if n >= 1:
            return n
    n = params["workers"]
    return n if n >= 1 else (os.cpu_count() or 1)


def _split_params(params, experiment):
    run_part = {k: params[k] for k in RUN_DEFAULTS}
    exp_part = {k: params[k] for k in EXPERIMENT_DEFAULTS[experiment]}
    # sampling settings the experiment resolved away from the run defaults
    for key in ("t_min", "t_max", "n_times", "abs_tol", "rel_tol"):
        if key in EXPERIMENT_DEFAULTS[experiment]:
            exp_part[key] = params[key]
    return run_part, exp_part


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_manifest(out_dir, experiment, params, health, timings, outputs,
                   version):
    """Structured-text record of the run; reloadable as a config file."""
    parser = configparser.ConfigParser()
    run_part, exp_part = _split_params(params, experiment)
    parser["manifest"] = {
        "command": experiment.replace("_", "-"),
        "version": version,
    }
    parser["run"] = {k: _format_value(v) for k, v in run_part.items()}
    parser[experiment] = {k: _format_value(v) for k, v in exp_part.items()}
    parser["health"] = {
        "max_trace_drift": repr(health["max_trace_drift"]),
        "min_eigenvalue": repr(health["min_eigenvalue"]),
    }
    parser["timings"] = {name: f"{sec:.3f}" for name, sec in timings}
    parser["outputs"] = {Path(p).name: sha256_file(p) for p in outputs}
    path = Path(out_dir) / f"manifest_{experiment}.ini"
    with open(path, "w", newline="\n") as fh:
        parser.write(fh)
    return path
