"""Finite-volume dense operator core: embeddings, Hamiltonians, Heisenberg
dynamics, conditional expectations, spectra and annuli.

All matrices are dense, tensor factors are ordered by ascending site index,
and volumes are capped by a total-dimension ceiling (env SPINCERT_MAX_DIM).
"""

from __future__ import annotations

import dataclasses
import math
import os
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import linalg as sparse_linalg

from .errors import (BadOrder, DegenerateSplit, DimensionMismatch,
                     NotConverged, SupportOutsideVolume, VolumeTooLarge)
from .fnorm import Interaction

Array = np.ndarray

DEFAULT_DIM_CEILING = 1 << 14
DEFAULT_MAX_TIME = 50.0
SVD_DIM_LIMIT = 1 << 11
POWER_TOL = 1e-10
POWER_MAXITER = 10_000


def dim_ceiling() -> int:
    """Dense-matrix dimension ceiling, overridable via SPINCERT_MAX_DIM."""
    raw = os.environ.get("SPINCERT_MAX_DIM")
    return int(raw) if raw else DEFAULT_DIM_CEILING


@dataclasses.dataclass(frozen=True)
class Volume:
    """A finite interval [a, b] of chain sites."""

    a: int
    b: int

    def __post_init__(self):
        if self.a > self.b:
            raise ValueError(f"volume requires a <= b, got [{self.a}, {self.b}]")

    @property
    def sites(self) -> tuple:
        return tuple(range(self.a, self.b + 1))

    def __len__(self):
        return self.b - self.a + 1

    def __contains__(self, site: int) -> bool:
        return self.a <= site <= self.b

    def contains(self, sites: Iterable[int]) -> bool:
        return all(s in self for s in sites)

    def dimension(self, d: int) -> int:
        return d ** len(self)

    def check_dimension(self, d: int) -> int:
        dim = self.dimension(d)
        ceiling = dim_ceiling()
        if dim > ceiling:
            raise VolumeTooLarge(
                f"volume [{self.a}, {self.b}] has dimension {dim} "
                f"> ceiling {ceiling}")
        return dim


def annulus(m: int, n: int) -> tuple:
    """Symmetric two-interval site set [-n, -m] union [m, n]."""
    if not 0 < m < n:
        raise BadOrder(f"annulus requires 0 < m < n, got m={m}, n={n}")
    return tuple(range(-n, -m + 1)) + tuple(range(m, n + 1))


def operator_norm(mat: Array, method: str = "auto") -> float:
    """Largest singular value.

    Full (values-only) decomposition up to dimension 2**11; above it,
    Lanczos iteration on A*A (tolerance 1e-10, iteration budget 10**4).
    Plain power steps stall there: tensor-product structure makes the top
    singular value exactly degenerate with near-degenerate neighbors.
    """
    mat = np.asarray(mat)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionMismatch(f"operator_norm needs a square matrix, "
                                f"got shape {mat.shape}")
    if method == "auto":
        method = "svd" if mat.shape[0] <= SVD_DIM_LIMIT else "lanczos"
    if method == "svd":
        return float(np.linalg.norm(mat, ord=2))
    if method != "lanczos":
        raise ValueError(f"unknown method: {method}")
    n = mat.shape[0]
    frobenius = float(np.linalg.norm(mat))
    if frobenius <= 1e-11:
        # Roundoff-level matrix: the Frobenius norm already overestimates
        # the spectral norm and sits below every certification floor.
        return frobenius
    gramian = sparse_linalg.LinearOperator(
        (n, n), matvec=lambda v: mat.conj().T @ (mat @ v), dtype=complex)
    v0 = np.full(n, 1.0 / math.sqrt(n))
    try:
        top = sparse_linalg.eigsh(gramian, k=1, which="LA", v0=v0,
                                  tol=POWER_TOL, maxiter=POWER_MAXITER,
                                  return_eigenvectors=False)
    except sparse_linalg.ArpackNoConvergence as exc:
        raise NotConverged("norm iteration did not converge") from exc
    return math.sqrt(max(float(top[0]), 0.0))


@dataclasses.dataclass(frozen=True)
class LocalOperator:
    """Complex matrix tagged with its (sorted) support sites."""

    support: tuple
    matrix: Array
    onsite_dim: int = 2

    def __post_init__(self):
        support = tuple(int(s) for s in self.support)
        if support != tuple(sorted(set(support))):
            raise ValueError(f"support must be sorted and distinct: {support}")
        object.__setattr__(self, "support", support)
        mat = np.array(self.matrix, dtype=complex)
        dim = self.onsite_dim ** len(support)
        if mat.shape != (dim, dim):
            raise ValueError(
                f"matrix shape {mat.shape} does not match d^|support| = {dim}")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)

    def norm(self, method: str = "auto") -> float:
        return operator_norm(self.matrix, method=method)


def _site_permutation(current: Sequence[int], target: Sequence[int]) -> list:
    index = {site: k for k, site in enumerate(current)}
    return [index[site] for site in target]


def embed(op: LocalOperator, volume: Volume) -> Array:
    """Tensor the operator with identities on volume minus support,
    factors ordered by ascending site index."""
    d = op.onsite_dim
    if not volume.contains(op.support):
        raise SupportOutsideVolume(
            f"support {op.support} not inside [{volume.a}, {volume.b}]")
    volume.check_dimension(d)
    rest = [s for s in volume.sites if s not in op.support]
    full = np.kron(op.matrix, np.eye(d ** len(rest), dtype=complex))
    order = list(op.support) + rest
    if order == list(volume.sites):
        return full
    n = len(volume)
    perm = _site_permutation(order, volume.sites)
    tensor = full.reshape((d,) * (2 * n))
    tensor = tensor.transpose(perm + [p + n for p in perm])
    return np.ascontiguousarray(tensor.reshape(d**n, d**n))


def assemble_hamiltonian(phi: Interaction, volume: Volume,
                         t: float = 0.0) -> Array:
    """Sum of the embedded interaction terms supported inside the volume."""
    d = phi.onsite_dim
    dim = volume.check_dimension(d)
    total = np.zeros((dim, dim), dtype=complex)
    for term in phi.terms_within(volume.sites):
        op = LocalOperator(term.sites, term.at(t), onsite_dim=d)
        total += embed(op, volume)
    return (total + total.conj().T) / 2.0


def assemble_derivative(phi: Interaction, volume: Volume, t: float) -> Array:
    """Embedded sum of the parameter derivatives of the terms in the volume."""
    d = phi.onsite_dim
    dim = volume.check_dimension(d)
    total = np.zeros((dim, dim), dtype=complex)
    for term in phi.terms_within(volume.sites):
        deriv = term.derivative_at(t)
        deriv = (np.asarray(deriv, dtype=complex) + np.asarray(
            deriv, dtype=complex).conj().T) / 2.0
        op = LocalOperator(term.sites, deriv, onsite_dim=d)
        total += embed(op, volume)
    return total


def partial_trace(matrix: Array, volume: Volume, keep: Iterable[int],
                  d: int) -> Array:
    """Normalized partial trace onto the kept sites (ascending order)."""
    keep = sorted(set(keep))
    sites = list(volume.sites)
    if not set(keep) <= set(sites):
        raise SupportOutsideVolume(f"keep set {keep} not inside volume")
    traced = [s for s in sites if s not in keep]
    if not traced:
        return np.array(matrix, dtype=complex)
    n = len(sites)
    tensor = np.asarray(matrix, dtype=complex).reshape((d,) * (2 * n))
    # Trace highest axis first so earlier axis indices stay valid.
    for site in reversed(traced):
        axis = sites.index(site)
        tensor = np.trace(tensor, axis1=axis, axis2=axis + tensor.ndim // 2)
        sites.pop(axis)
    dim = d ** len(keep)
    return tensor.reshape(dim, dim) / (d ** len(traced))


def conditional_expectation(A: LocalOperator, volume: Volume,
                            keep: Iterable[int]) -> LocalOperator:
    """Project onto the kept sites' algebra via the normalized partial trace.

    Unital, idempotent and norm-nonincreasing; the traced factors are
    implicitly replaced by identity.
    """
    keep = tuple(sorted(set(int(s) for s in keep)))
    if not volume.contains(A.support):
        raise SupportOutsideVolume(
            f"support {A.support} not inside [{volume.a}, {volume.b}]")
    if not volume.contains(keep):
        raise SupportOutsideVolume("keep set not inside volume")
    d = A.onsite_dim
    if all(s in keep for s in A.support):
        return A
    reduced = _trace_support(A, keep)
    kept_sites = tuple(s for s in A.support if s in keep)
    if not kept_sites:
        # Fully traced: a scalar multiple of the identity on one kept site.
        anchor = keep[0] if keep else volume.a
        value = complex(reduced.reshape(())) if reduced.ndim == 0 \
            else complex(reduced[0, 0])
        return LocalOperator((anchor,), value * np.eye(d), onsite_dim=d)
    return LocalOperator(kept_sites, reduced, onsite_dim=d)


def _trace_support(A: LocalOperator, keep: tuple) -> Array:
    """Partial trace of A's matrix over its support sites not in keep."""
    d = A.onsite_dim
    sites = list(A.support)
    traced = [s for s in sites if s not in keep]
    n = len(sites)
    tensor = A.matrix.reshape((d,) * (2 * n))
    for site in reversed(traced):
        axis = sites.index(site)
        tensor = np.trace(tensor, axis1=axis, axis2=axis + tensor.ndim // 2)
        sites.pop(axis)
    dim = d ** len(sites)
    return tensor.reshape(dim, dim) / (d ** len(traced))


def commutator_norm(A: Array, B: Array, method: str = "auto") -> float:
    """Operator norm of the commutator AB - BA."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise DimensionMismatch(
            f"commutator operands differ in shape: {A.shape} vs {B.shape}")
    return operator_norm(A @ B - B @ A, method=method)


@dataclasses.dataclass(frozen=True)
class SpectralData:
    """Eigendecomposition with an optional low-cluster/gap split."""

    eigenvalues: Array
    eigenvectors: Array
    gap_split: Optional[tuple] = None  # (sp_minus_diam, gap)
    split_index: int = 0  # number of eigenvalues in the low cluster

    @property
    def gap(self) -> float:
        if self.gap_split is None:
            raise DegenerateSplit("no gap split available")
        return self.gap_split[1]

    def ground_projector(self) -> Array:
        cols = self.eigenvectors[:, :max(self.split_index, 1)]
        return cols @ cols.conj().T

    def ground_vector(self) -> Array:
        if self.split_index != 1:
            raise DegenerateSplit(
                f"low cluster holds {self.split_index} states, need exactly 1")
        return self.eigenvectors[:, 0]


def ground_state(H: Array, gamma_probe: float) -> SpectralData:
    """Full spectral decomposition with the lowest cluster split off.

    The low cluster ends at the first ascending gap of size >= gamma_probe;
    DegenerateSplit is raised when no such separation exists.
    """
    H = np.asarray(H)
    if H.shape[0] != H.shape[1]:
        raise DimensionMismatch("ground_state needs a square matrix")
    vals, vecs = np.linalg.eigh(H)
    gaps = np.diff(vals)
    candidates = np.nonzero(gaps >= gamma_probe)[0]
    if candidates.size == 0:
        raise DegenerateSplit(
            f"no spectral separation >= {gamma_probe} found")
    k = int(candidates[0])
    split = (float(vals[k] - vals[0]), float(vals[k + 1] - vals[k]))
    return SpectralData(eigenvalues=vals, eigenvectors=vecs,
                        gap_split=split, split_index=k + 1)


class DensePropagator:
    """Heisenberg dynamics for an interaction on a fixed volume.

    Parameter-independent interactions use the cached eigendecomposition;
    parameter-dependent ones are integrated with midpoint-exponential steps
    verified by step doubling.
    """

    def __init__(self, phi: Interaction, volume: Volume,
                 max_time: float = DEFAULT_MAX_TIME):
        self.phi = phi
        self.volume = volume
        self.max_time = max_time
        self.dim = volume.check_dimension(phi.onsite_dim)
        self.constant = phi.constant
        self._eig = None
        self._unitaries = {}
        if self.constant:
            H = assemble_hamiltonian(phi, volume, 0.0)
            vals, vecs = np.linalg.eigh(H)
            self._eig = (vals, vecs)
        else:
            self._norm_scale = max(
                operator_norm(assemble_hamiltonian(phi, volume, t))
                for t in (0.0, 0.5, 1.0))

    @property
    def eigensystem(self):
        if self._eig is None:
            raise ValueError("eigensystem only cached for constant dynamics")
        return self._eig

    def unitary(self, t: float) -> Array:
        """Propagator W(t) with evolve(A, t) = W A W^dagger (cached)."""
        self._check_time(t)
        key = float(t)
        if key in self._unitaries:
            return self._unitaries[key]
        if self.constant:
            vals, vecs = self._eig
            W = (vecs * np.exp(1j * t * vals)) @ vecs.conj().T
        else:
            W = self._ordered_unitary(t)
        if len(self._unitaries) >= 4:
            self._unitaries.pop(next(iter(self._unitaries)))
        self._unitaries[key] = W
        return W

    def evolve_matrix(self, A: Array, t: float) -> Array:
        self._check_time(t)
        if t == 0.0:
            return np.array(A, dtype=complex)
        A = np.asarray(A, dtype=complex)
        W = self.unitary(t)
        diag = np.diagonal(A)
        if np.count_nonzero(A - np.diag(diag)) == 0:
            return W @ (diag[:, None] * W.conj().T)
        return W @ A @ W.conj().T

    def evolve(self, A: LocalOperator, t: float) -> LocalOperator:
        mat = embed(A, self.volume)
        return LocalOperator(self.volume.sites, self.evolve_matrix(mat, t),
                             onsite_dim=self.phi.onsite_dim)

    def to_eigenbasis(self, M: Array) -> Array:
        vals, vecs = self.eigensystem
        return vecs.conj().T @ M @ vecs

    def evolve_in_eigenbasis(self, M_eig: Array, t: float) -> Array:
        """Evolution applied to a matrix already written in the eigenbasis."""
        vals, _ = self.eigensystem
        phases = np.exp(1j * t * vals)
        return (phases[:, None] * M_eig) * phases.conj()[None, :]

    def _check_time(self, t: float):
        if abs(t) > self.max_time:
            raise ValueError(f"|t| = {abs(t)} exceeds configured max "
                             f"{self.max_time}")
        if not self.constant and not -1e-9 <= t <= 1.0 + 1e-9:
            raise ValueError(
                "parameter-dependent dynamics are defined for t in [0, 1]")

    def _ordered_unitary(self, t: float, tol: float = 1e-9) -> Array:
        steps = max(8, int(math.ceil(4.0 * abs(t) * (self._norm_scale + 1.0))))
        previous = self._magnus(t, steps)
        for _ in range(12):
            steps *= 2
            current = self._magnus(t, steps)
            if operator_norm(current - previous) <= tol:
                return current
            previous = current
        raise NotConverged("time-ordered propagator did not stabilize "
                           "under step doubling")

    def _magnus(self, t: float, steps: int) -> Array:
        # Midpoint-exponential (second-order Magnus) product, unitarized.
        W = np.eye(self.dim, dtype=complex)
        dt = t / steps
        for k in range(steps):
            mid = (k + 0.5) * dt
            H = assemble_hamiltonian(self.phi, self.volume, mid)
            W = scipy.linalg.expm(1j * dt * H) @ W
        defect = operator_norm(W.conj().T @ W - np.eye(self.dim))
        if defect > 1e-12:
            u, _, vh = np.linalg.svd(W)
            W = u @ vh
        return W


def heisenberg_evolve(phi: Interaction, volume: Volume, A: LocalOperator,
                      t: float) -> LocalOperator:
    """Heisenberg picture evolution of A under the volume dynamics."""
    return DensePropagator(phi, volume).evolve(A, t)
