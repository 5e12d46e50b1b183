"""Index partitions, delay-Doppler block tilings, group norms and approximations.

Vector indices are 0-based throughout the package.  The 2D->1D rank map
``index_map`` keeps its textbook 1-based output range {1..J*D}; the groups of a
:class:`Partition` store the corresponding 0-based positions (rank - 1).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Partition:
    """Partition of {0..M-1} into ordered, disjoint, nonempty groups.

    Groups may be non-contiguous (stacked multichannel partitions interleave
    channels), so they are stored as explicit index arrays.
    """

    total_length: int
    groups: tuple

    def __post_init__(self):
        if self.total_length <= 0:
            raise ConfigurationError("total_length must be positive")
        groups = tuple(np.asarray(g, dtype=np.intp) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        seen = np.zeros(self.total_length, dtype=bool)
        count = 0
        for g in groups:
            if g.size == 0:
                raise ConfigurationError("empty group in partition")
            if g.min() < 0 or g.max() >= self.total_length:
                raise ConfigurationError("group index outside {0..M-1}")
            if seen[g].any():
                raise ConfigurationError("groups are not disjoint")
            seen[g] = True
            count += g.size
        if count != self.total_length:
            raise ConfigurationError("groups do not cover {0..M-1}")

    @property
    def n_groups(self):
        return len(self.groups)

    def sizes(self):
        return np.array([g.size for g in self.groups])

    def subvector(self, x, b):
        """Entries of ``x`` indexed by group ``b``."""
        return np.asarray(x)[..., self.groups[b]]


@dataclass(frozen=True)
class BlockTiling:
    """Tiling of the delay-Doppler rectangle {0..D-1} x {-J/2..J/2-1} into
    equal dm x di blocks, enumerated row-major (delay-block outer)."""

    D: int
    J: int
    dm: int
    di: int

    def __post_init__(self):
        if self.J % 2 != 0:
            raise ConfigurationError("J must be even")
        if self.D % self.dm != 0:
            raise ConfigurationError("dm must divide D")
        if (self.J // 2) % self.di != 0:
            raise ConfigurationError("di must divide J/2")

    @property
    def n_blocks(self):
        return (self.J * self.D) // (self.dm * self.di)

    @property
    def block_size(self):
        return self.dm * self.di

    def blocks(self):
        """List of (dm*di, 2) arrays of (m, i) pairs, i in -J/2..J/2-1."""
        out = []
        for bm in range(self.D // self.dm):
            for bi in range(self.J // self.di):
                ms = np.arange(bm * self.dm, (bm + 1) * self.dm)
                iis = -self.J // 2 + np.arange(bi * self.di, (bi + 1) * self.di)
                mm, ii = np.meshgrid(ms, iis, indexing="ij")
                out.append(np.column_stack([mm.ravel(), ii.ravel()]))
        return out

    def to_partition(self):
        """1D partition of {0..J*D-1} induced by the rank map."""
        groups = []
        for blk in self.blocks():
            ranks = blk[:, 0] * self.J + blk[:, 1] + self.J // 2
            groups.append(np.sort(ranks))
        return Partition(self.J * self.D, tuple(groups))


def make_block_tiling(D, J, dm, di):
    """Tile the fundamental delay-Doppler rectangle into dm x di blocks."""
    return BlockTiling(D=D, J=J, dm=dm, di=di)


def index_map(m, i, D, J):
    """2D->1D rank of delay-Doppler position (m, i): m*J + i + J/2 + 1.

    Bijective from {0..D-1} x {-J/2..J/2-1} onto {1..J*D} (1-based).
    """
    if not (0 <= m < D):
        raise DomainError(f"m={m} outside 0..{D - 1}")
    if not (-J // 2 <= i < J // 2):
        raise DomainError(f"i={i} outside -{J // 2}..{J // 2 - 1}")
    return m * J + i + J // 2 + 1


def index_map_inverse(rank, D, J):
    """Inverse of :func:`index_map`; returns (m, i)."""
    if not (1 <= rank <= J * D):
        raise DomainError(f"rank={rank} outside 1..{J * D}")
    m, a = divmod(rank - 1, J)
    return m, a - J // 2


def singleton_partition(M):
    """Partition of {0..M-1} into M singletons."""
    return Partition(M, tuple(np.array([j]) for j in range(M)))


def uniform_partition(M, size):
    """Partition of {0..M-1} into contiguous groups of equal ``size``."""
    if M % size != 0:
        raise ConfigurationError("group size must divide M")
    return Partition(M, tuple(np.arange(b * size, (b + 1) * size) for b in range(M // size)))


def stack_partition(part, M, n_channels):
    """Partition of {0..M*n_channels-1} whose group b collects group b of
    ``part`` replicated across all channel offsets xi*M."""
    if part.total_length != M:
        raise DomainError("partition length does not match M")
    if n_channels < 1:
        raise DomainError("n_channels must be >= 1")
    offsets = np.arange(n_channels) * M
    groups = tuple(np.sort((g[:, None] + offsets[None, :]).ravel()) for g in part.groups)
    return Partition(M * n_channels, groups)


def group_norm(x, part):
    """Sum of the l2 norms of the group subvectors of ``x``."""
    x = np.asarray(x)
    if x.shape[-1] != part.total_length:
        raise DomainError("vector length does not match partition")
    return float(sum(np.linalg.norm(x[..., g]) for g in part.groups))


def group_subnorms(x, part):
    """Per-group l2 norms of ``x`` (helper for solvers)."""
    x = np.asarray(x)
    return np.array([np.linalg.norm(x[..., g]) for g in part.groups])


def group_frobenius_norm(tensor, tiling):
    """Joint group-sparsity measure of a (D, J, n_channels) coefficient tensor:
    sum over blocks of the Frobenius norm of the block's entries across all
    channels.  Equals ``group_norm`` of the channel-stacked vector under
    ``stack_partition`` of the tiling's partition.
    """
    t = np.asarray(tensor)
    if t.ndim == 2:
        t = t[:, :, None]
    if t.shape[0] != tiling.D or t.shape[1] != tiling.J:
        raise DomainError("tensor shape does not match tiling rectangle")
    energy = np.abs(t) ** 2
    per_cell = energy.sum(axis=2)
    blocks = per_cell.reshape(
        tiling.D // tiling.dm, tiling.dm, tiling.J // tiling.di, tiling.di
    ).sum(axis=(1, 3))
    return float(np.sqrt(blocks).sum())


def best_group_approx(x, part, S):
    """Keep the S groups of largest subvector l2 norm, zero the rest.

    Ties are broken toward the lowest group index for determinism.
    """
    if not (0 <= S <= part.n_groups):
        raise DomainError(f"S={S} outside 0..{part.n_groups}")
    x = np.asarray(x)
    out = np.zeros_like(x)
    norms = group_subnorms(x, part)
    order = np.argsort(-norms, kind="stable")[:S]
    for b in order:
        out[..., part.groups[b]] = x[..., part.groups[b]]
    return out
