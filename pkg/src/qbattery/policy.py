"""Numerical tolerance policy shared across the package.

All thresholds live in one frozen record so tests and runtime checks agree
on what "zero" means at each interface.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class NumericalPolicy:
    # state hygiene
    hermiticity_tol: float = 1e-10        # max |rho_mn - conj(rho_nm)| after herm-preserving ops
    trace_tol: float = 1e-12              # |Tr rho - 1| at construction of physical states
    sector_coherence_tol: float = 1e-12   # inter-sector weight allowed in sector_decompose
    roundtrip_tol: float = 1e-14          # decompose/recompose identity
    psd_validation_tol: float = 1e-10     # min eigenvalue allowed for an input state

    # generator identities
    rank1_tol: float = 1e-12              # |Gamma - v v^T|
    consistency_tol: float = 1e-12        # |-2 Im(h) - Gamma|
    generator_psd_tol: float = 1e-10      # min eigenvalue of Gamma

    # ergotropy
    eigenvalue_clip: float = 1e-8         # negative populations clipped to 0, larger is an error

    # integrator health (checked against sampled snapshots)
    trace_drift_factor: float = 100.0     # |trace drift| <= factor * rel_tol
    min_eigenvalue_floor: float = -1e-6   # snapshot negativity beyond this is a health failure


POLICY = NumericalPolicy()
