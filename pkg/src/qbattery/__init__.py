"""Waveguide-QED quantum-battery storage simulator.

A chain of two-level emitters in front of a mirror, evolved under the
collective Lindblad master equation, with stored energy and ergotropy
tracked over long times for ordered and position-disordered arrangements.
"""

from .algebra import (BlockedDensityMatrix, SectorBasis, apply_jump,
                      apply_transfer, blocked_product_density, partial_trace,
                      product_density, sector_basis, sector_decompose,
                      sector_recompose)
from .ensemble import (EnsembleConfig, EnsembleSummary, derive_seed,
                       merge_summaries, run_ensemble, sample_epsilons)
from .fits import (FitResult, default_tail_window, fit_exponential_tail,
                   fit_power_law, spacing_sweep, subexponential_discriminator)
from .observables import (LocalHamiltonian, battery_energy, ergotropy,
                          excited_populations, make_battery_observer,
                          single_atom_energy, single_atom_ergotropy,
                          single_atom_rate, site_energy, OMEGA_0)
from .policy import NumericalPolicy, POLICY
from .propagator import (IntegratorConfig, Trajectory, evolve,
                         exact_evolve_small)
from .version import __version__
from .waveguide import (GAMMA_1D, Geometry, LindbladGenerator, SystemSpec,
                        build_generator, build_geometry, generator_residuals,
                        lindblad_rhs, rhs_rank1)

__all__ = [
    "BlockedDensityMatrix", "SectorBasis", "apply_jump", "apply_transfer",
    "blocked_product_density", "partial_trace", "product_density",
    "sector_basis", "sector_decompose", "sector_recompose",
    "EnsembleConfig", "EnsembleSummary", "derive_seed", "merge_summaries",
    "run_ensemble", "sample_epsilons",
    "FitResult", "default_tail_window", "fit_exponential_tail",
    "fit_power_law", "spacing_sweep", "subexponential_discriminator",
    "LocalHamiltonian", "battery_energy", "ergotropy", "excited_populations",
    "make_battery_observer", "single_atom_energy", "single_atom_ergotropy",
    "single_atom_rate", "site_energy", "OMEGA_0",
    "NumericalPolicy", "POLICY",
    "IntegratorConfig", "Trajectory", "evolve", "exact_evolve_small",
    "GAMMA_1D", "Geometry", "LindbladGenerator", "SystemSpec",
    "build_generator", "build_geometry", "generator_residuals",
    "lindblad_rhs", "rhs_rank1",
    "__version__",
]
