"""Multi-qubit density-matrix kernel.

Basis convention: sites are numbered j = 1..L with site 1 nearest the
mirror; bit j-1 of a computational-basis occupation mask is set iff atom j
is excited.  A full-space density matrix is a plain (2^L, 2^L) complex
ndarray whose row/column index is that mask.  Since the dynamics conserves
total excitation number when started from a number-diagonal state, states
can also be stored sector-blocked: one dense block per excitation number,
inter-sector entries identically zero (never stored).

Operators are applied as index transformations on masks; dense 2^L x 2^L
operator matrices are never materialized here.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np

from .policy import POLICY


def n_sites_of(dim: int) -> int:
    """Number of qubits for a full-space dimension, validating 2^L shape."""
    n = int(dim).bit_length() - 1
    if dim <= 0 or (1 << n) != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def popcounts(masks: np.ndarray) -> np.ndarray:
    return np.array([int(m).bit_count() for m in masks], dtype=np.int64)


def basis_mask(excited_sites, n_sites: int) -> int:
    """Occupation mask with the given 1-based sites excited."""
    m = 0
    for s in excited_sites:
        if not 1 <= s <= n_sites:
            raise ValueError(f"site {s} out of range 1..{n_sites}")
        m |= 1 << (s - 1)
    return m


# ---------------------------------------------------------------------------
# sector bookkeeping
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SectorBasis:
    """Enumeration of excitation-number sectors 0..max_excitation.

    masks[n] lists the occupation masks of sector n in increasing order;
    sector_of / pos_of map a mask to its (sector, position), with
    sector_of = -1 above max_excitation.
    """

    n_sites: int
    max_excitation: int
    masks: tuple
    sector_of: np.ndarray
    pos_of: np.ndarray

    @property
    def dims(self):
        return tuple(len(m) for m in self.masks)


@lru_cache(maxsize=None)
def sector_basis(n_sites: int, max_excitation: int) -> SectorBasis:
    if not 0 <= max_excitation <= n_sites:
        raise ValueError("max_excitation must lie in 0..n_sites")
    masks = []
    for n in range(max_excitation + 1):
        ms = sorted(sum(1 << (s - 1) for s in c)
                    for c in combinations(range(1, n_sites + 1), n))
        masks.append(np.array(ms, dtype=np.int64))
    dim = 1 << n_sites
    sector_of = np.full(dim, -1, dtype=np.int64)
    pos_of = np.full(dim, -1, dtype=np.int64)
    for n, ms in enumerate(masks):
        sector_of[ms] = n
        pos_of[ms] = np.arange(len(ms))
    return SectorBasis(n_sites, max_excitation, tuple(masks), sector_of, pos_of)


class BlockedDensityMatrix:
    """Sector-blocked density matrix: one dense block per excitation number."""

    def __init__(self, basis: SectorBasis, blocks):
        blocks = [np.asarray(b, dtype=complex) for b in blocks]
        if len(blocks) != basis.max_excitation + 1:
            raise ValueError("one block per excitation sector required")
        for n, b in enumerate(blocks):
            d = basis.dims[n]
            if b.shape != (d, d):
                raise ValueError(f"sector {n} block must be {d}x{d}, got {b.shape}")
        self.basis = basis
        self.blocks = blocks

    @property
    def n_sites(self) -> int:
        return self.basis.n_sites

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self.blocks)

    def copy(self) -> "BlockedDensityMatrix":
        return BlockedDensityMatrix(self.basis, [b.copy() for b in self.blocks])

    def __repr__(self):
        return (f"BlockedDensityMatrix(n_sites={self.n_sites}, "
                f"dims={self.basis.dims})")


def sector_decompose(rho: np.ndarray, max_excitation: int) -> BlockedDensityMatrix:
    """Split a full-space density matrix into excitation-sector blocks.

    Refuses states carrying inter-sector coherence or population above
    max_excitation beyond the policy tolerance (such states are outside
    the number-conserving representation).
    """
    rho = np.asarray(rho, dtype=complex)
    L = n_sites_of(rho.shape[0])
    basis = sector_basis(L, max_excitation)
    counts = popcounts(np.arange(rho.shape[0]))
    offdiag = counts[:, None] != counts[None, :]
    worst = np.max(np.abs(rho[offdiag])) if offdiag.any() else 0.0
    if worst > POLICY.sector_coherence_tol:
        raise ValueError(
            f"inter-sector coherence {worst:.3e} exceeds "
            f"{POLICY.sector_coherence_tol:.0e}; state is not sector-diagonal")
    high = counts > max_excitation
    if high.any():
        worst = np.max(np.abs(rho[high][:, high]))
        if worst > POLICY.sector_coherence_tol:
            raise ValueError(
                f"population {worst:.3e} above excitation sector {max_excitation}")
    blocks = [rho[np.ix_(ms, ms)].copy() for ms in basis.masks]
    return BlockedDensityMatrix(basis, blocks)


def sector_recompose(blocked: BlockedDensityMatrix) -> np.ndarray:
    """Inverse of sector_decompose (missing sectors read as zero)."""
    dim = 1 << blocked.n_sites
    rho = np.zeros((dim, dim), dtype=complex)
    for ms, b in zip(blocked.basis.masks, blocked.blocks):
        rho[np.ix_(ms, ms)] = b
    return rho


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def product_density(n_sites: int, excited_sites) -> np.ndarray:
    """Full-space |b><b| with the given sites excited."""
    m = basis_mask(excited_sites, n_sites)
    rho = np.zeros((1 << n_sites, 1 << n_sites), dtype=complex)
    rho[m, m] = 1.0
    return rho


def blocked_product_density(n_sites: int, excited_sites,
                            max_excitation=None) -> BlockedDensityMatrix:
    """Sector-blocked |b><b|; max_excitation defaults to the excitation count."""
    m = basis_mask(excited_sites, n_sites)
    n = int(m).bit_count()
    if max_excitation is None:
        max_excitation = n
    basis = sector_basis(n_sites, max_excitation)
    blocks = [np.zeros((d, d), dtype=complex) for d in basis.dims]
    p = int(basis.pos_of[m])
    blocks[n][p, p] = 1.0
    return BlockedDensityMatrix(basis, blocks)


def hermiticity_defect(rho) -> float:
    """max |rho_mn - conj(rho_nm)| over the stored entries."""
    if isinstance(rho, BlockedDensityMatrix):
        return max(
            (float(np.max(np.abs(b - b.conj().T))) if b.size else 0.0)
            for b in rho.blocks)
    rho = np.asarray(rho)
    return float(np.max(np.abs(rho - rho.conj().T)))


# ---------------------------------------------------------------------------
# operator kernels
# ---------------------------------------------------------------------------

def _check_sites(n_sites, *sites):
    for s in sites:
        if not 1 <= s <= n_sites:
            raise ValueError(f"site {s} out of range 1..{n_sites}")


def _transfer_map(n_sites: int, j: int, jp: int):
    """Index action of sigma_eg^j sigma_ge^jp on basis masks.

    Returns (src, dst): the operator maps |src_i> -> |dst_i>, all other
    basis states to zero.
    """
    b = np.arange(1 << n_sites)
    if j == jp:
        src = b[(b >> (j - 1)) & 1 == 1]
        return src, src
    sel = (((b >> (jp - 1)) & 1) == 1) & (((b >> (j - 1)) & 1) == 0)
    src = b[sel]
    dst = src - (1 << (jp - 1)) + (1 << (j - 1))
    return src, dst


def apply_transfer(j: int, jp: int, rho, side: str = "left"):
    """Multiply rho by the excitation-transfer operator sigma_eg^j sigma_ge^jp.

    side="left" gives A.rho, side="right" gives rho.A.  Excitation sectors
    are preserved.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if isinstance(rho, BlockedDensityMatrix):
        return _apply_transfer_blocked(j, jp, rho, side)
    rho = np.asarray(rho, dtype=complex)
    L = n_sites_of(rho.shape[0])
    _check_sites(L, j, jp)
    src, dst = _transfer_map(L, j, jp)
    out = np.zeros_like(rho)
    if side == "left":
        out[dst, :] = rho[src, :]
    else:
        # (rho.A)[:, b] = rho[:, A(b)] for b in the operator's domain
        out[:, src] = rho[:, dst]
    return out


def _apply_transfer_blocked(j, jp, rho, side):
    basis = rho.basis
    _check_sites(basis.n_sites, j, jp)
    out = [np.zeros_like(b) for b in rho.blocks]
    for n, ms in enumerate(basis.masks):
        if len(ms) == 0:
            continue
        if j == jp:
            sel = ((ms >> (j - 1)) & 1) == 1
            idx = np.flatnonzero(sel)
            s_pos = d_pos = idx
        else:
            sel = ((((ms >> (jp - 1)) & 1) == 1)
                   & (((ms >> (j - 1)) & 1) == 0))
            src = ms[sel]
            dst = src - (1 << (jp - 1)) + (1 << (j - 1))
            s_pos = basis.pos_of[src]
            d_pos = basis.pos_of[dst]
        if side == "left":
            out[n][d_pos, :] = rho.blocks[n][s_pos, :]
        else:
            out[n][:, s_pos] = rho.blocks[n][:, d_pos]
    return BlockedDensityMatrix(basis, out)


def apply_jump(j: int, jp: int, rho):
    """sigma_ge^j . rho . sigma_eg^jp — the dissipator's recycling kernel.

    Maps excitation sector (n, n) to (n-1, n-1); zero when rho carries no
    excitation at the involved sites.
    """
    if isinstance(rho, BlockedDensityMatrix):
        return _apply_jump_blocked(j, jp, rho)
    rho = np.asarray(rho, dtype=complex)
    L = n_sites_of(rho.shape[0])
    _check_sites(L, j, jp)
    b = np.arange(rho.shape[0])
    rows = b[((b >> (j - 1)) & 1) == 0]          # images a = m - bit_j
    cols = b[((b >> (jp - 1)) & 1) == 0]
    out = np.zeros_like(rho)
    out[np.ix_(rows, cols)] = rho[np.ix_(rows + (1 << (j - 1)),
                                         cols + (1 << (jp - 1)))]
    return out


def _apply_jump_blocked(j, jp, rho):
    basis = rho.basis
    _check_sites(basis.n_sites, j, jp)
    out = [np.zeros_like(b) for b in rho.blocks]
    for n in range(1, basis.max_excitation + 1):
        ms = basis.masks[n]
        row_src = ms[((ms >> (j - 1)) & 1) == 1]
        col_src = ms[((ms >> (jp - 1)) & 1) == 1]
        if len(row_src) == 0 or len(col_src) == 0:
            continue
        r_lo = basis.pos_of[row_src - (1 << (j - 1))]
        c_lo = basis.pos_of[col_src - (1 << (jp - 1))]
        r_hi = basis.pos_of[row_src]
        c_hi = basis.pos_of[col_src]
        out[n - 1][np.ix_(r_lo, c_lo)] += rho.blocks[n][np.ix_(r_hi, c_hi)]
    return BlockedDensityMatrix(basis, out)


# ---------------------------------------------------------------------------
# partial trace
# ---------------------------------------------------------------------------

def _split_keys(masks: np.ndarray, keep, n_sites: int):
    """Kept-subsystem index and traced-subsystem key for each mask.

    The i-th kept site maps to bit i of the reduced index, so the reduced
    matrix follows the order of `keep`.
    """
    keep = list(keep)
    traced = [s for s in range(1, n_sites + 1) if s not in keep]
    kept_key = np.zeros(len(masks), dtype=np.int64)
    for i, s in enumerate(keep):
        kept_key |= ((masks >> (s - 1)) & 1) << i
    traced_key = np.zeros(len(masks), dtype=np.int64)
    for i, s in enumerate(traced):
        traced_key |= ((masks >> (s - 1)) & 1) << i
    return kept_key, traced_key


def _validate_keep(keep, n_sites):
    keep = list(keep)
    if not keep:
        raise ValueError("keep set must be nonempty")
    if len(set(keep)) != len(keep):
        raise ValueError("keep sites must be distinct")
    _check_sites(n_sites, *keep)
    return keep


def _accumulate_groups(out, block, kept_key, traced_key):
    order = np.argsort(traced_key, kind="stable")
    sorted_keys = traced_key[order]
    bounds = np.flatnonzero(np.diff(sorted_keys)) + 1
    for group in np.split(order, bounds):
        kk = kept_key[group]
        out[np.ix_(kk, kk)] += block[np.ix_(group, group)]


def partial_trace(rho, keep) -> np.ndarray:
    """Reduced density matrix over the (ordered) kept sites.

    Accepts a full-space ndarray or a BlockedDensityMatrix; always returns
    a full-space (2^|keep|, 2^|keep|) matrix.
    """
    if isinstance(rho, BlockedDensityMatrix):
        basis = rho.basis
        keep = _validate_keep(keep, basis.n_sites)
        out = np.zeros((1 << len(keep), 1 << len(keep)), dtype=complex)
        for ms, block in zip(basis.masks, rho.blocks):
            if len(ms) == 0:
                continue
            kept_key, traced_key = _split_keys(ms, keep, basis.n_sites)
            _accumulate_groups(out, block, kept_key, traced_key)
        return out
    rho = np.asarray(rho, dtype=complex)
    L = n_sites_of(rho.shape[0])
    keep = _validate_keep(keep, L)
    masks = np.arange(rho.shape[0])
    kept_key, traced_key = _split_keys(masks, keep, L)
    out = np.zeros((1 << len(keep), 1 << len(keep)), dtype=complex)
    _accumulate_groups(out, rho, kept_key, traced_key)
    return out
