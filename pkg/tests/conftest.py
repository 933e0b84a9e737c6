import numpy as np

from qbattery import BlockedDensityMatrix, sector_basis


def random_density(dim, rng):
    """Random full-rank density matrix (Ginibre construction)."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim, rng):
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return a + a.conj().T


def random_blocked_density(n_sites, max_excitation, rng):
    """Random sector-diagonal density matrix in blocked storage."""
    basis = sector_basis(n_sites, max_excitation)
    blocks = []
    for d in basis.dims:
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        blocks.append(a @ a.conj().T)
    total = sum(np.trace(b).real for b in blocks)
    return BlockedDensityMatrix(basis, [b / total for b in blocks])
