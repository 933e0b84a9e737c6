"""Fast invariant suite behind `qbattery selftest`.

A handful of independent checks (analytic single-atom decay, the L=2
superoperator oracle, generator identities, trace conservation, the Bragg
freeze) that finish in well under a minute and catch most ways a build or
environment can be broken.
"""

import numpy as np

from .algebra import blocked_product_density, sector_recompose
from .ensemble import derive_seed, sample_epsilons
from .observables import single_atom_energy, single_atom_ergotropy, single_atom_rate
from .propagator import IntegratorConfig, evolve, exact_evolve_small
from .waveguide import (SystemSpec, build_generator, build_geometry,
                        generator_residuals, lindblad_rhs, rhs_rank1)


def _random_density(dim, rng):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def _check_single_atom():
    spec = SystemSpec(n_atoms=1, n_charged=1, kd=2.7 * np.pi)
    gen = build_generator(build_geometry(spec), spec)
    rho0 = blocked_product_density(1, [1])
    taus = np.concatenate([[0.0], np.logspace(-2, 1, 60)])
    traj = evolve(gen, rho0, taus)
    rate = single_atom_rate(spec.kd)
    energy = np.array([b.blocks[1][0, 0].real for b in traj.states])
    err = float(np.max(np.abs(energy - single_atom_energy(taus, rate))))
    return err < 1e-6, f"max energy error {err:.2e}"


def _check_oracle():
    spec = SystemSpec(n_atoms=2, n_charged=1, kd=2.7 * np.pi)
    gen = build_generator(build_geometry(spec), spec)
    rng = np.random.default_rng(7)
    rho0 = _random_density(4, rng)
    worst = 0.0
    for t in (0.1, 1.0, 10.0):
        traj = evolve(gen, rho0, [t])
        exact = exact_evolve_small(gen, rho0, t)
        worst = max(worst, float(np.max(np.abs(traj.states[0] - exact))))
    return worst < 1e-6, f"max deviation from oracle {worst:.2e}"


def _check_generator_identities():
    rng = np.random.default_rng(11)
    worst_id, worst_neg = 0.0, 0.0
    for _ in range(20):
        n_atoms = int(rng.integers(1, 11))
        spec = SystemSpec(n_atoms=n_atoms, n_charged=1,
                          kd=float(rng.uniform(0.5, 3.5) * np.pi),
                          arrangement="disordered")
        eps = sample_epsilons(spec, derive_seed(42, int(rng.integers(1 << 30))))
        gen = build_generator(build_geometry(spec, eps), spec)
        res = generator_residuals(gen)
        worst_id = max(worst_id, res["rank1"], res["consistency"])
        worst_neg = min(worst_neg, res["min_gamma_eigenvalue"])
    ok = worst_id <= 1e-12 and worst_neg >= -1e-10
    return ok, f"identity residual {worst_id:.2e}, min eigenvalue {worst_neg:.2e}"


def _check_trace_conservation():
    rng = np.random.default_rng(13)
    spec = SystemSpec(n_atoms=4, n_charged=2, kd=2.7 * np.pi)
    gen = build_generator(build_geometry(spec), spec)
    worst = 0.0
    for _ in range(5):
        rho = _random_density(16, rng)
        worst = max(worst, abs(np.trace(lindblad_rhs(gen, rho))),
                    abs(np.trace(rhs_rank1(gen, rho))))
    return worst < 1e-12, f"worst |trace of rhs| {worst:.2e}"


def _check_bragg_freeze():
    spec = SystemSpec(n_atoms=4, n_charged=2, kd=2.0 * np.pi)
    gen = build_generator(build_geometry(spec), spec)
    rho0 = blocked_product_density(4, [1, 2])
    traj = evolve(gen, rho0, [100.0])
    rho = sector_recompose(traj.states[0])
    rho_init = sector_recompose(rho0)
    dev = float(np.max(np.abs(rho - rho_init)))
    return dev < 1e-9, f"state drift at the Bragg point {dev:.2e}"


CHECKS = [
    ("single-atom analytic decay", _check_single_atom),
    ("L=2 superoperator oracle", _check_oracle),
    ("generator identities (random geometries)", _check_generator_identities),
    ("trace conservation of the generator", _check_trace_conservation),
    ("Bragg-point freeze", _check_bragg_freeze),
]


def run_selftest(stream=None) -> bool:
    """Run all checks, print one PASS/FAIL line each; True when all pass."""
    import sys
    stream = stream or sys.stdout
    all_ok = True
    for name, check in CHECKS:
        try:
            ok, detail = check()
        except Exception as exc:
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'}  {name} ({detail})", file=stream)
    return all_ok
