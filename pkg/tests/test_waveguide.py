import numpy as np
import pytest

from conftest import random_blocked_density, random_density
from qbattery import (GAMMA_1D, SystemSpec, build_generator, build_geometry,
                      generator_residuals, lindblad_rhs, product_density,
                      rhs_rank1, sector_recompose)
from qbattery.algebra import popcounts


def make_gen(n_atoms, kd, epsilons=None, n_charged=1):
    arrangement = "ordered" if epsilons is None else "disordered"
    spec = SystemSpec(n_atoms=n_atoms, n_charged=n_charged, kd=kd,
                      arrangement=arrangement)
    return build_generator(build_geometry(spec, epsilons), spec)


# ---- geometry ---------------------------------------------------------------

def test_ordered_positions_are_integers():
    spec = SystemSpec(n_atoms=3, n_charged=1, kd=np.pi)
    geom = build_geometry(spec)
    assert np.array_equal(geom.positions, [1.0, 2.0, 3.0])


def test_zero_disorder_equals_ordered():
    s_ord = SystemSpec(n_atoms=3, n_charged=1, kd=np.pi)
    s_dis = SystemSpec(n_atoms=3, n_charged=1, kd=np.pi, arrangement="disordered")
    a = build_geometry(s_ord)
    b = build_geometry(s_dis, np.zeros(3))
    assert np.array_equal(a.positions, b.positions)


def test_boundary_epsilons_allow_coincident_atoms():
    spec = SystemSpec(n_atoms=3, n_charged=1, kd=np.pi, arrangement="disordered")
    geom = build_geometry(spec, [0.5, -0.5, 0.0])
    assert np.array_equal(geom.positions, [1.5, 1.5, 3.0])
    build_generator(geom, spec)      # finite at coincidence


def test_geometry_validation():
    spec = SystemSpec(n_atoms=2, n_charged=1, kd=np.pi, arrangement="disordered")
    with pytest.raises(ValueError):
        build_geometry(spec, [0.6, 0.0])
    with pytest.raises(ValueError):
        build_geometry(spec, [0.1])
    with pytest.raises(ValueError):
        build_geometry(spec)
    ordered = SystemSpec(n_atoms=2, n_charged=1, kd=np.pi)
    with pytest.raises(ValueError):
        build_geometry(ordered, [0.0, 0.0])


def test_system_spec_validation():
    with pytest.raises(ValueError):
        SystemSpec(n_atoms=0, n_charged=1, kd=1.0)
    with pytest.raises(ValueError):
        SystemSpec(n_atoms=15, n_charged=1, kd=1.0)
    with pytest.raises(ValueError):
        SystemSpec(n_atoms=3, n_charged=4, kd=1.0)
    with pytest.raises(ValueError):
        SystemSpec(n_atoms=3, n_charged=1, kd=-1.0)
    with pytest.raises(ValueError):
        SystemSpec(n_atoms=3, n_charged=1, kd=1.0, arrangement="ring")


# ---- generator --------------------------------------------------------------

def test_single_atom_at_quarter_wavelength():
    gen = make_gen(1, kd=np.pi / 2)            # kd * z_1 = pi/2
    assert abs(gen.gamma[0, 0] - 2.0 * GAMMA_1D) < 1e-12
    assert abs(gen.h_eff[0, 0].imag + GAMMA_1D) < 1e-12


def test_single_atom_at_mirror_node():
    gen = make_gen(1, kd=np.pi)
    assert abs(gen.gamma[0, 0]) < 1e-12


def test_two_atoms_quarter_wavelength_decay_matrix():
    gen = make_gen(2, kd=np.pi / 2)
    expected = GAMMA_1D * np.array([[2.0, 0.0], [0.0, 0.0]])
    assert np.max(np.abs(gen.gamma - expected)) < 1e-12
    # cross-check against the product form 2 sin(k z_j) sin(k z_jp)
    z = np.array([1.0, 2.0])
    product_form = 2 * GAMMA_1D * np.outer(np.sin(gen.kd * z), np.sin(gen.kd * z))
    assert np.max(np.abs(gen.gamma - product_form)) < 1e-12
    assert np.max(np.abs(gen.gamma - np.outer(gen.jump_vector, gen.jump_vector))) < 1e-12


def test_generator_identities_random_geometries():
    rng = np.random.default_rng(42)
    for _ in range(100):
        n = int(rng.integers(1, 11))
        kd = float(rng.uniform(0.3, 3.5) * np.pi)
        eps = rng.uniform(-0.5, 0.5, n)
        gen = make_gen(n, kd, eps)
        res = generator_residuals(gen)
        assert res["rank1"] <= 1e-12
        assert res["consistency"] <= 1e-12
        assert res["min_gamma_eigenvalue"] >= -1e-10
        assert np.max(np.abs(gen.gamma)) <= 2.0 * GAMMA_1D + 1e-12


# ---- right-hand side --------------------------------------------------------

def test_rhs_single_atom_decay_channel():
    gen = make_gen(1, kd=np.pi / 2)
    rho = product_density(1, [1])
    out = lindblad_rhs(gen, rho)
    expected = np.array([[2.0, 0.0], [0.0, -2.0]], dtype=complex) * GAMMA_1D
    assert np.max(np.abs(out - expected)) < 1e-12


def test_rhs_ground_state_is_stationary():
    rng = np.random.default_rng(1)
    gen = make_gen(4, kd=2.7 * np.pi, epsilons=rng.uniform(-0.5, 0.5, 4))
    rho = product_density(4, [])
    assert np.max(np.abs(lindblad_rhs(gen, rho))) == 0.0


def test_rhs_bragg_point_is_purely_coherent():
    gen = make_gen(2, kd=2 * np.pi)
    assert np.max(np.abs(gen.gamma)) < 1e-12
    rng = np.random.default_rng(2)
    rho = random_density(4, rng)
    out = lindblad_rhs(gen, rho)
    # purity is conserved under -i[H, rho]: d Tr rho^2 = 2 Tr[rho drho]
    assert abs(2 * np.trace(rho @ out)) < 1e-12
    assert abs(np.trace(out)) < 1e-12


def test_rhs_trace_conservation_full_space():
    rng = np.random.default_rng(3)
    for n in (1, 2, 3, 4, 5):
        eps = rng.uniform(-0.5, 0.5, n)
        gen = make_gen(n, kd=2.7 * np.pi, epsilons=eps)
        rho = random_density(1 << n, rng)
        assert abs(np.trace(lindblad_rhs(gen, rho))) < 1e-12


def test_rhs_trace_conservation_blocked():
    rng = np.random.default_rng(4)
    for n in (3, 5):
        eps = rng.uniform(-0.5, 0.5, n)
        gen = make_gen(n, kd=2.7 * np.pi, epsilons=eps)
        rho = random_blocked_density(n, min(n, 3), rng)
        out = lindblad_rhs(gen, rho)
        assert abs(out.trace()) < 1e-12


def test_rhs_hermiticity_preserving():
    rng = np.random.default_rng(5)
    gen = make_gen(3, kd=2.7 * np.pi)
    rho = random_density(8, rng)
    out = lindblad_rhs(gen, rho)
    assert np.max(np.abs(out - out.conj().T)) < 1e-12


def test_rhs_energy_only_leaves_the_array():
    rng = np.random.default_rng(6)
    for _ in range(10):
        n = int(rng.integers(1, 6))
        eps = rng.uniform(-0.5, 0.5, n)
        gen = make_gen(n, kd=float(rng.uniform(0.5, 3.2) * np.pi), epsilons=eps)
        rho = random_density(1 << n, rng)
        out = lindblad_rhs(gen, rho)
        counts = popcounts(np.arange(1 << n)).astype(float)
        denergy = float(np.real(counts @ np.diag(out)))
        assert denergy <= 1e-12


def _permute_state(rho, perm, n):
    # new mask collects bit j-1 of the old mask at position perm[j]-1
    masks = np.arange(1 << n)
    target = np.zeros_like(masks)
    for j in range(1, n + 1):
        target |= ((masks >> (j - 1)) & 1) << (perm[j - 1] - 1)
    out = np.zeros_like(rho)
    out[np.ix_(target, target)] = rho
    return out


def test_rhs_permutation_covariance():
    # relabeling atoms together with their couplings conjugates the flow by
    # the matching qubit permutation
    from qbattery import LindbladGenerator
    rng = np.random.default_rng(7)
    n = 4
    eps = rng.uniform(-0.5, 0.5, n)
    spec = SystemSpec(n_atoms=n, n_charged=1, kd=2.7 * np.pi,
                      arrangement="disordered")
    gen = build_generator(build_geometry(spec, eps), spec)
    perm = rng.permutation(np.arange(1, n + 1))
    p_mat = np.zeros((n, n))
    p_mat[perm - 1, np.arange(n)] = 1.0
    gen_p = LindbladGenerator(h_eff=p_mat @ gen.h_eff @ p_mat.T,
                              gamma=p_mat @ gen.gamma @ p_mat.T,
                              jump_vector=p_mat @ gen.jump_vector,
                              kd=gen.kd)
    rho = random_density(1 << n, rng)
    lhs = lindblad_rhs(gen_p, _permute_state(rho, perm, n))
    rhs = _permute_state(lindblad_rhs(gen, rho), perm, n)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


# ---- rank-1 fast path -------------------------------------------------------

def test_rank1_matches_general_rhs_full():
    rng = np.random.default_rng(8)
    gen = make_gen(4, kd=2.7 * np.pi, epsilons=rng.uniform(-0.5, 0.5, 4))
    worst = 0.0
    for _ in range(100):
        a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        rho = a + a.conj().T
        worst = max(worst, float(np.max(np.abs(
            rhs_rank1(gen, rho) - lindblad_rhs(gen, rho)))))
    assert worst < 1e-12


def test_rank1_matches_general_rhs_blocked():
    rng = np.random.default_rng(9)
    gen = make_gen(5, kd=2.7 * np.pi, epsilons=rng.uniform(-0.5, 0.5, 5))
    rho = random_blocked_density(5, 3, rng)
    a = sector_recompose(rhs_rank1(gen, rho))
    b = sector_recompose(lindblad_rhs(gen, rho))
    assert np.max(np.abs(a - b)) < 1e-12
    c = rhs_rank1(gen, sector_recompose(rho))
    assert np.max(np.abs(a - c)) < 1e-12


def test_rank1_dissipator_vanishes_at_bragg():
    gen = make_gen(3, kd=np.pi)
    assert np.max(np.abs(gen.jump_vector)) < 1e-12
    rng = np.random.default_rng(10)
    rho = random_density(8, rng)
    com = rhs_rank1(gen, rho)
    # pure commutator: anti-Hermitian part of H vanishes with gamma = 0
    assert abs(np.trace(com)) < 1e-13


def test_rank1_single_atom_example():
    gen = make_gen(1, kd=np.pi / 2)
    rho = product_density(1, [1])
    expected = np.array([[2.0, 0.0], [0.0, -2.0]], dtype=complex)
    assert np.max(np.abs(rhs_rank1(gen, rho) - expected)) < 1e-12


def test_rhs_dimension_mismatch():
    gen = make_gen(2, kd=np.pi)
    with pytest.raises(ValueError):
        lindblad_rhs(gen, product_density(3, [1]))
