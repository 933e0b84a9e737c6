"""Battery observables: stored energy, site-resolved energy, and ergotropy.

Energy normalization is one energy unit per excitation (OMEGA_0 = 1), i.e.
the local Hamiltonian of an x-cell battery is H = OMEGA_0 * sum_j |e><e|_j.
All figures-of-merit below are invariant under this overall scale anyway.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .algebra import BlockedDensityMatrix, n_sites_of, partial_trace, popcounts
from .policy import POLICY
from .waveguide import GAMMA_1D

OMEGA_0 = 1.0


@dataclass(frozen=True)
class LocalHamiltonian:
    """Diagonal battery Hamiltonian over n_cells qubits.

    Level energy of basis state b is OMEGA_0 * excitation_count(b); the
    energy n*OMEGA_0 is C(n_cells, n)-fold degenerate.
    """

    n_cells: int
    energies: np.ndarray = field(init=False)

    def __post_init__(self):
        e = OMEGA_0 * popcounts(np.arange(1 << self.n_cells)).astype(float)
        object.__setattr__(self, "energies", e)


@lru_cache(maxsize=None)
def _local_hamiltonian(n_cells: int) -> LocalHamiltonian:
    return LocalHamiltonian(n_cells)


def excited_populations(rho) -> np.ndarray:
    """P(atom j excited) for every site, from the stored diagonal."""
    if isinstance(rho, BlockedDensityMatrix):
        L = rho.n_sites
        out = np.zeros(L)
        for ms, block in zip(rho.basis.masks, rho.blocks):
            if len(ms) == 0:
                continue
            diag = np.real(np.diag(block))
            for i in range(L):
                bit = ((ms >> i) & 1).astype(float)
                out[i] += float(bit @ diag)
        return out
    rho = np.asarray(rho)
    L = n_sites_of(rho.shape[0])
    diag = np.real(np.diag(rho))
    masks = np.arange(rho.shape[0])
    return np.array([float((((masks >> i) & 1) * diag).sum()) for i in range(L)])


def site_energy(rho, j: int) -> float:
    """Local energy of the j-th atom, OMEGA_0 * P(excited)."""
    L = rho.n_sites if isinstance(rho, BlockedDensityMatrix) \
        else n_sites_of(np.asarray(rho).shape[0])
    if not 1 <= j <= L:
        raise ValueError(f"site {j} out of range 1..{L}")
    return OMEGA_0 * float(excited_populations(rho)[j - 1])


def battery_energy(rho, n_cells: int) -> float:
    """Energy stored in the n_cells atoms nearest the mirror.

    Evaluated as Tr[rho_M H_M] on the reduced state of sites 1..n_cells.
    """
    rho_m = partial_trace(rho, range(1, n_cells + 1))
    ham = _local_hamiltonian(n_cells)
    return float(np.real(np.diag(rho_m)) @ ham.energies)


def ergotropy(rho_m: np.ndarray, ham: LocalHamiltonian = None) -> float:
    """Maximal unitarily extractable work from the reduced battery state.

    Computed via the passive state: populations sorted descending are paired
    with level energies sorted ascending.  Small negative populations from
    integration noise (>= -policy clip) are zeroed and the spectrum is
    renormalized; anything worse is treated as an integrator-health error.
    """
    rho_m = np.asarray(rho_m, dtype=complex)
    if ham is None:
        ham = _local_hamiltonian(n_sites_of(rho_m.shape[0]))
    if rho_m.shape != (ham.energies.size, ham.energies.size):
        raise ValueError("state dimension does not match the Hamiltonian")
    w = np.linalg.eigvalsh(rho_m)
    if w[0] < -POLICY.eigenvalue_clip:
        raise ValueError(
            f"population {w[0]:.3e} below the clip threshold "
            f"-{POLICY.eigenvalue_clip:.0e}; state is unphysical")
    w = np.clip(w, 0.0, None)
    w = w / w.sum()
    energy = float(np.real(np.diag(rho_m)) @ ham.energies)
    passive = float(np.sort(w)[::-1] @ np.sort(ham.energies))
    return energy - passive


# ---------------------------------------------------------------------------
# single-atom closed forms (benchmark configuration)
# ---------------------------------------------------------------------------

def single_atom_rate(kd: float) -> float:
    """Decay rate of one atom at z = d in front of the mirror."""
    return GAMMA_1D * (1.0 - np.cos(2.0 * kd))


def single_atom_energy(tau, rate: float):
    """Stored energy of the one-atom battery, OMEGA_0 e^{-rate tau}."""
    return OMEGA_0 * np.exp(-rate * np.asarray(tau, dtype=float))


def single_atom_ergotropy(tau, rate: float):
    """Extractable work of the one-atom battery.

    OMEGA_0 (2 e^{-rate tau} - 1) until rate*tau = ln 2, zero afterwards.
    """
    e = np.exp(-rate * np.asarray(tau, dtype=float))
    return np.maximum(0.0, OMEGA_0 * (2.0 * e - 1.0))


# ---------------------------------------------------------------------------
# trajectory recorder
# ---------------------------------------------------------------------------

def make_battery_observer(n_atoms: int, n_charged: int):
    """Per-sample recorder: [site energies (L), battery energy, ergotropy].

    The returned callable matches the propagator's observer signature and
    is what ensemble runs record in lean mode.
    """
    keep = tuple(range(1, n_charged + 1))
    ham = _local_hamiltonian(n_charged)

    def observe(t, rho):
        pops = excited_populations(rho)
        rho_m = partial_trace(rho, keep)
        energy = float(np.real(np.diag(rho_m)) @ ham.energies)
        return np.concatenate([OMEGA_0 * pops, [energy, ergotropy(rho_m, ham)]])

    return observe
