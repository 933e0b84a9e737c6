import numpy as np
import pytest

from conftest import random_blocked_density, random_density, random_hermitian
from qbattery import (BlockedDensityMatrix, apply_jump, apply_transfer,
                      blocked_product_density, partial_trace, product_density,
                      sector_basis, sector_decompose, sector_recompose)


def ket(mask, dim):
    v = np.zeros(dim, dtype=complex)
    v[mask] = 1.0
    return v


# ---- apply_transfer --------------------------------------------------------

def test_transfer_projects_excited_state():
    rho = product_density(1, [1])
    out = apply_transfer(1, 1, rho, "left")
    assert np.allclose(out, rho)


def test_transfer_annihilates_ground_state():
    rho = product_density(1, [])
    out = apply_transfer(1, 1, rho, "left")
    assert np.all(out == 0)


def test_transfer_moves_excitation():
    # |ge> has atom 2 excited (mask 0b10); sigma_eg^1 sigma_ge^2 maps it to |eg>
    rho = product_density(2, [2])
    out = apply_transfer(1, 2, rho, "left")
    expected = np.outer(ket(0b01, 4), ket(0b10, 4).conj())
    assert np.allclose(out, expected)


def test_transfer_right_side():
    rng = np.random.default_rng(3)
    rho = random_hermitian(8, rng)
    left = apply_transfer(2, 3, rho, "left")
    right = apply_transfer(3, 2, rho.conj().T, "right").conj().T
    # (A rho)^dag = rho^dag A^dag with A^dag the reversed transfer
    assert np.max(np.abs(left - right)) < 1e-14


def test_transfer_validates_sites():
    rho = product_density(2, [1])
    with pytest.raises(ValueError):
        apply_transfer(0, 1, rho)
    with pytest.raises(ValueError):
        apply_transfer(1, 3, rho)
    with pytest.raises(ValueError):
        apply_transfer(1, 1, rho, side="middle")


# ---- apply_jump ------------------------------------------------------------

def test_jump_decays_single_atom():
    out = apply_jump(1, 1, product_density(1, [1]))
    assert np.allclose(out, product_density(1, []))


def test_jump_kills_ground_state():
    assert np.all(apply_jump(1, 1, product_density(1, [])) == 0)


def test_jump_cross_site_on_symmetric_state():
    # (|eg> + |ge>)(<eg| + <ge|)/2: the (1,2) channel leaves |gg><gg|/2
    psi = (ket(0b01, 4) + ket(0b10, 4)) / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    out = apply_jump(1, 2, rho)
    expected = np.zeros((4, 4), dtype=complex)
    expected[0, 0] = 0.5
    assert np.allclose(out, expected)


def test_jump_adjoint_identity():
    rng = np.random.default_rng(11)
    rho = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    for j in range(1, 4):
        for jp in range(1, 4):
            lhs = apply_jump(j, jp, rho).conj().T
            rhs = apply_jump(jp, j, rho.conj().T)
            assert np.max(np.abs(lhs - rhs)) < 1e-14


def test_jump_trace_matches_transfer():
    rng = np.random.default_rng(12)
    rho = random_density(16, rng)
    for j in range(1, 5):
        for jp in range(1, 5):
            t1 = np.trace(apply_jump(j, jp, rho))
            t2 = np.trace(apply_transfer(jp, j, rho, "left"))
            assert abs(t1 - t2) < 1e-12


# ---- partial trace ---------------------------------------------------------

def test_partial_trace_product_state():
    rho = product_density(2, [1])       # atom 1 excited, atom 2 ground
    out = partial_trace(rho, [1])
    assert np.allclose(out, np.diag([0.0, 1.0]))
    out2 = partial_trace(rho, [2])
    assert np.allclose(out2, np.diag([1.0, 0.0]))


def test_partial_trace_entangled_state():
    psi = (ket(0b01, 4) + ket(0b10, 4)) / np.sqrt(2)
    rho = np.outer(psi, psi.conj())
    out = partial_trace(rho, [1])
    assert np.allclose(out, np.eye(2) / 2)


def test_partial_trace_keep_all_is_identity():
    rng = np.random.default_rng(5)
    rho = random_density(8, rng)
    assert np.allclose(partial_trace(rho, [1, 2, 3]), rho)


def test_partial_trace_is_convex_linear():
    rng = np.random.default_rng(6)
    r1, r2 = random_density(8, rng), random_density(8, rng)
    alpha = 0.3
    lhs = partial_trace(alpha * r1 + (1 - alpha) * r2, [2, 3])
    rhs = alpha * partial_trace(r1, [2, 3]) + (1 - alpha) * partial_trace(r2, [2, 3])
    assert np.max(np.abs(lhs - rhs)) < 1e-14


def test_partial_trace_preserves_trace_and_hermiticity():
    rng = np.random.default_rng(7)
    rho = random_density(16, rng)
    out = partial_trace(rho, [4, 2])
    assert abs(np.trace(out) - 1) < 1e-12
    assert np.max(np.abs(out - out.conj().T)) < 1e-14


def test_partial_trace_validates_input():
    rho = product_density(2, [1])
    with pytest.raises(ValueError):
        partial_trace(rho, [])
    with pytest.raises(ValueError):
        partial_trace(rho, [1, 1])
    with pytest.raises(ValueError):
        partial_trace(rho, [3])


# ---- sector decomposition --------------------------------------------------

def test_decompose_single_excitation_product():
    rho = product_density(3, [1])       # |egg>
    blocked = sector_decompose(rho, 1)
    assert blocked.basis.dims == (1, 3)
    b1 = blocked.blocks[1]
    assert np.count_nonzero(b1) == 1
    assert b1[0, 0] == 1.0              # mask 0b001 is the first 1-excitation mask


def test_decompose_recompose_roundtrip():
    rng = np.random.default_rng(8)
    blocked = random_blocked_density(4, 3, rng)
    rho = sector_recompose(blocked)
    again = sector_recompose(sector_decompose(rho, 3))
    assert np.max(np.abs(again - rho)) < 1e-14


def test_sector_dimensions_are_binomial():
    blocked = blocked_product_density(3, [1, 2])      # L=3, M=2 initial state
    assert blocked.basis.dims == (1, 3, 3)


def test_decompose_rejects_intersector_coherence():
    psi = (ket(0, 4) + ket(0b11, 4)) / np.sqrt(2)     # |gg> + |ee|
    rho = np.outer(psi, psi.conj())
    with pytest.raises(ValueError):
        sector_decompose(rho, 2)


def test_decompose_rejects_population_above_cutoff():
    rho = product_density(3, [1, 2])
    with pytest.raises(ValueError):
        sector_decompose(rho, 1)


# ---- blocked vs full equivalence -------------------------------------------

@pytest.mark.parametrize("n_sites", [2, 3, 5])
def test_blocked_operations_match_full_space(n_sites):
    rng = np.random.default_rng(n_sites)
    blocked = random_blocked_density(n_sites, n_sites, rng)
    full = sector_recompose(blocked)
    for j, jp in [(1, 1), (1, 2), (2, 1), (n_sites, 1)]:
        for side in ("left", "right"):
            a = sector_recompose(apply_transfer(j, jp, blocked, side))
            b = apply_transfer(j, jp, full, side)
            assert np.max(np.abs(a - b)) < 1e-12
        a = sector_recompose(apply_jump(j, jp, blocked))
        b = apply_jump(j, jp, full)
        assert np.max(np.abs(a - b)) < 1e-12


def test_blocked_partial_trace_matches_full():
    rng = np.random.default_rng(21)
    blocked = random_blocked_density(5, 3, rng)
    full = sector_recompose(blocked)
    for keep in ([1], [1, 2, 3], [4, 2], [5, 1]):
        a = partial_trace(blocked, keep)
        b = partial_trace(full, keep)
        assert np.max(np.abs(a - b)) < 1e-12


def test_blocked_trace_and_copy():
    rng = np.random.default_rng(22)
    blocked = random_blocked_density(3, 2, rng)
    assert abs(blocked.trace() - 1) < 1e-12
    dup = blocked.copy()
    dup.blocks[1][0, 0] += 1.0
    assert blocked.blocks[1][0, 0] != dup.blocks[1][0, 0]


def test_sector_basis_lookup_tables():
    basis = sector_basis(4, 2)
    assert basis.dims == (1, 4, 6)
    assert basis.sector_of[0b0011] == 2
    assert basis.sector_of[0b0111] == -1          # above the cutoff
    m = basis.masks[2][basis.pos_of[0b0011]]
    assert m == 0b0011
