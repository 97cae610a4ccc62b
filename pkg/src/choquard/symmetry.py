"""Block-orthogonal symmetry groups O(n_1) x ... x O(n_m) acting on S^n.

A descriptor is a partition of n+1 into blocks; when two blocks have equal
size, the permutation swapping them is the extra element tau used to build
the sign-changing symmetry class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.special import comb, eval_gegenbauer

from .quadrature import gauss_jacobi

RANK_CUTOFF = 1e-8
MAX_PROBE = 64


class DescriptorError(ValueError):
    pass


class UnsupportedError(DescriptorError):
    pass


@dataclass(frozen=True)
class GroupDescriptor:
    parts: tuple[int, ...]
    swap: Optional[tuple[int, int]] = None

    def __post_init__(self):
        parts = tuple(int(p) for p in self.parts)
        object.__setattr__(self, "parts", parts)
        if len(parts) < 2:
            raise DescriptorError("a descriptor needs at least two blocks")
        if any(p < 1 for p in parts):
            raise DescriptorError(f"block sizes must be positive: {parts}")
        if self.swap is not None:
            i, j = self.swap
            if i == j or not (0 <= i < len(parts) and 0 <= j < len(parts)):
                raise DescriptorError(f"bad swap pair {self.swap}")
            if parts[i] != parts[j]:
                raise DescriptorError(f"swap pair {self.swap} joins blocks of unequal size")
            object.__setattr__(self, "swap", (min(i, j), max(i, j)))

    @property
    def n(self) -> int:
        return sum(self.parts) - 1

    @property
    def offsets(self) -> list[int]:
        return [0] + list(np.cumsum(self.parts)[:-1])

    def block_norms(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        out = []
        for off, size in zip(self.offsets, self.parts):
            out.append(np.linalg.norm(xi[..., off:off + size], axis=-1))
        return np.stack(out, axis=-1)

    def to_dict(self) -> dict:
        return {"parts": list(self.parts), "swap": list(self.swap) if self.swap else None}


def parse_parts(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError as exc:
        raise DescriptorError(f"cannot parse parts {text!r}") from exc


def default_swap(parts) -> Optional[tuple[int, int]]:
    """First pair of equal blocks, if any."""
    for i in range(len(parts)):
        for j in range(i + 1, len(parts)):
            if parts[i] == parts[j]:
                return (i, j)
    return None


def _partitions(total: int, smallest: int, largest: int):
    if total == 0:
        yield ()
        return
    for first in range(min(total, largest), smallest - 1, -1):
        for rest in _partitions(total - first, smallest, first):
            yield (first,) + rest


def enumerate_descriptors(n: int) -> list[GroupDescriptor]:
    """All partitions of n+1 into at least two blocks of size >= 2.

    Parts are listed in non-increasing order; the swap is set to the first
    pair of equal blocks when one exists.
    """
    if n < 3:
        raise DescriptorError("n must be >= 3")
    out = []
    for parts in _partitions(n + 1, 2, n + 1):
        if len(parts) >= 2:
            out.append(GroupDescriptor(parts, default_swap(parts)))
    return out


def has_property_P(g: GroupDescriptor) -> bool:
    # Only the block-swap construction is detected; other normalizer elements
    # of O(n+1) are not searched.
    return default_swap(g.parts) is not None


def build_tau(g: GroupDescriptor) -> np.ndarray:
    """Permutation matrix exchanging the two swapped blocks."""
    swap = g.swap or default_swap(g.parts)
    if swap is None:
        raise DescriptorError(f"no two blocks of {g.parts} are equal; tau does not exist")
    i, j = swap
    size = g.n + 1
    offs = g.offsets
    perm = np.arange(size)
    bi = np.arange(offs[i], offs[i] + g.parts[i])
    bj = np.arange(offs[j], offs[j] + g.parts[j])
    perm[bi], perm[bj] = bj, bi
    tau = np.zeros((size, size), dtype=int)
    tau[np.arange(size), perm] = 1
    return tau


def in_same_orbit(g: GroupDescriptor, xi, zeta, atol: float = 1e-12) -> bool:
    """G-orbits of points on the sphere are level sets of the block norms."""
    return bool(np.allclose(g.block_norms(xi), g.block_norms(zeta), rtol=0.0, atol=atol))


def _require_large_blocks(g: GroupDescriptor) -> None:
    if min(g.parts) < 2:
        raise DescriptorError(f"blocks of size 1 give finite orbits: {g.parts}")


def min_orbit_dimension(g: GroupDescriptor) -> int:
    _require_large_blocks(g)
    return min(g.parts) - 1


def improved_embedding_exponent(g: GroupDescriptor, n: int | None = None):
    """Largest p with H^1_G continuously embedded in L^p; ``math.inf`` if unbounded."""
    _require_large_blocks(g)
    n = g.n if n is None else n
    if n != g.n:
        raise DescriptorError(f"descriptor {g.parts} does not partition {n + 1}")
    k = n - min_orbit_dimension(g)
    if k <= 2:
        return math.inf
    return Fraction(2 * k, k - 2)


def harmonic_space_dim(n: int, degree: int) -> int:
    """Dimension of degree-``degree`` spherical harmonics on S^n."""
    if degree < 0:
        return 0
    total = comb(degree + n, n, exact=True)
    return total - (comb(degree + n - 2, n, exact=True) if degree >= 2 else 0)


def _projection_rule(k: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Law of omega . e for omega uniform on S^{k-1}, exact for polynomials up to ``degree``.

    The law is the normalized weight (1 - u^2)^{(k-3)/2} on [-1, 1], or the two
    points +-1 when k = 1.
    """
    if k == 1:
        return np.array([1.0, -1.0]), np.array([0.5, 0.5])
    u, w = gauss_jacobi(degree // 2 + 1, (k - 3) / 2, (k - 3) / 2)
    return u, w / w.sum()


def _orbit_average_matrix(g: GroupDescriptor, degree: int, points: np.ndarray,
                          centers: np.ndarray) -> np.ndarray:
    """A[m, k] = Haar average over G of Z(h x_m . y_k), Z the zonal harmonic.

    For h = (h1, h2) Haar-distributed, h x . y = |x1||y1| u1 + |x2||y2| u2
    with u_i independent and distributed as one coordinate of a uniform
    point on S^{n_i - 1}; Gauss rules for those laws make the average exact.
    """
    lam = (g.n - 1) / 2
    n1, n2 = g.parts
    u1, w1 = _projection_rule(n1, degree)
    u2, w2 = _projection_rule(n2, degree)
    px = g.block_norms(points)
    py = g.block_norms(centers)
    a = px[:, None, 0, None, None] * py[None, :, 0, None, None] * u1[None, None, :, None]
    b = px[:, None, 1, None, None] * py[None, :, 1, None, None] * u2[None, None, None, :]
    vals = eval_gegenbauer(degree, lam, np.clip(a + b, -1.0, 1.0))
    return np.einsum("mkab,a,b->mk", vals, w1, w2)


def invariant_harmonic_dim(g: GroupDescriptor, degree: int, antisymmetric: bool = False,
                           *, seed: int = 20240601) -> int:
    """Dimension of G-invariant (or tau-odd G-invariant) harmonics of a degree.

    Brute force: zonal harmonics at random centers span the degree space; their
    group averages are sampled at random points and the numerical rank of the
    averaged matrix is returned. ``antisymmetric`` additionally projects onto
    the -1 eigenspace of v -> v o tau.
    """
    if len(g.parts) != 2:
        raise UnsupportedError("invariant harmonic counts are implemented for two blocks only")
    if degree < 0:
        raise DescriptorError("degree must be non-negative")
    if antisymmetric and not has_property_P(g):
        raise DescriptorError(f"{g.parts} has no block swap")
    n = g.n
    full = harmonic_space_dim(n, degree)
    probe = min(full, MAX_PROBE)
    rng = np.random.default_rng(seed + 7919 * degree)
    points = rng.standard_normal((probe, n + 1))
    points /= np.linalg.norm(points, axis=1, keepdims=True)
    centers = rng.standard_normal((probe, n + 1))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    lam = (n - 1) / 2
    raw = eval_gegenbauer(degree, lam, np.clip(points @ centers.T, -1.0, 1.0))
    scale = np.linalg.svd(raw, compute_uv=False)[0]
    avg = _orbit_average_matrix(g, degree, points, centers)
    if antisymmetric:
        tau = build_tau(g)
        avg = 0.5 * (avg - _orbit_average_matrix(g, degree, points @ tau.T, centers))
    sv = np.linalg.svd(avg, compute_uv=False)
    rank = int(np.sum(sv > RANK_CUTOFF * scale))
    if rank >= MAX_PROBE:
        raise UnsupportedError(f"invariant dimension reached the probe size {MAX_PROBE}")
    return rank


def tau_even_harmonic_dim(g: GroupDescriptor, degree: int) -> int:
    """Dimension of G-invariant harmonics fixed by v -> v o tau."""
    return invariant_harmonic_dim(g, degree) - invariant_harmonic_dim(g, degree, antisymmetric=True)


def orbit_tangent_rank(g: GroupDescriptor, xi) -> int:
    """Dimension of the G-orbit through ``xi`` from the rank of the Lie algebra action."""
    xi = np.asarray(xi, dtype=float)
    vecs = []
    for off, size in zip(g.offsets, g.parts):
        for a in range(size):
            for b in range(a + 1, size):
                gen = np.zeros((xi.size, xi.size))
                gen[off + a, off + b] = 1.0
                gen[off + b, off + a] = -1.0
                vecs.append(gen @ xi)
    if not vecs:
        return 0
    sv = np.linalg.svd(np.array(vecs), compute_uv=False)
    return int(np.sum(sv > 1e-10 * max(sv[0], 1.0)))


def atlas(n: int, max_degree: int = 12) -> dict:
    """Report every block descriptor for S^n with its symmetry data."""
    entries = []
    for g in enumerate_descriptors(n):
        d = min_orbit_dimension(g)
        p = improved_embedding_exponent(g)
        entry = {
            "parts": list(g.parts),
            "swap": list(g.swap) if g.swap else None,
            "property_P": has_property_P(g),
            "min_orbit_dim": d,
            "embedding_exponent": "inf" if p == math.inf else str(p),
            "embedding_exponent_float": None if p == math.inf else float(p),
            "invariant_dims": None,
            "antisymmetric_dims": None,
        }
        if len(g.parts) == 2:
            entry["invariant_dims"] = [invariant_harmonic_dim(g, i) for i in range(max_degree + 1)]
            if has_property_P(g):
                entry["antisymmetric_dims"] = [
                    invariant_harmonic_dim(g, i, antisymmetric=True) for i in range(max_degree + 1)
                ]
        entries.append(entry)
    return {
        "n": n,
        "two_star": str(Fraction(2 * n, n - 2)),
        "descriptors": entries,
        "any_property_P": any(e["property_P"] for e in entries),
        "note": "block-product subgroups only; property P is not decided for other subgroups of O(n+1)",
    }
