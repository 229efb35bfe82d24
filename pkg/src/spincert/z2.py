"""Time-reversal action on local operators and the two-valued index of
translation-invariant matrix product states."""

from __future__ import annotations

import dataclasses
import math
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .chain import LocalOperator
from .errors import AmbiguousWitness, NotInjective, NotInvariant
from .fnorm import Interaction

Array = np.ndarray

_UNITARY_TOL = 1e-12
_INJECTIVITY_GAP = 1e-8
_INVARIANCE_TOL = 1e-8
_WITNESS_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class TimeReversal:
    """Antilinear sitewise action A -> V conj(A) V* with onsite unitary V."""

    onsite_unitary: Array

    def __post_init__(self):
        v = np.array(self.onsite_unitary, dtype=complex)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("onsite unitary must be square")
        dim = v.shape[0]
        if np.abs(v.conj().T @ v - np.eye(dim)).max() > _UNITARY_TOL:
            raise ValueError("onsite matrix is not unitary")
        square = v @ v.conj()
        sign = square[0, 0].real
        if abs(abs(sign) - 1.0) > 1e-10 or \
                np.abs(square - sign * np.eye(dim)).max() > 1e-10:
            raise ValueError(
                "V conj(V) must be plus or minus the identity for an "
                "involutive action")
        v.flags.writeable = False
        object.__setattr__(self, "onsite_unitary", v)

    @property
    def dim(self) -> int:
        return self.onsite_unitary.shape[0]

    @property
    def involution_sign(self) -> int:
        return int(round((self.onsite_unitary
                          @ self.onsite_unitary.conj())[0, 0].real))


def conjugation_time_reversal(dim: int) -> TimeReversal:
    """Pure complex conjugation (trivial onsite unitary)."""
    return TimeReversal(np.eye(dim, dtype=complex))


def apply_time_reversal(xi: TimeReversal, A: LocalOperator) -> LocalOperator:
    """Sitewise V^{x|X|} conj(A) (V^{x|X|})*, support preserved."""
    if A.onsite_dim != xi.dim:
        raise ValueError("onsite dimensions differ")
    big = np.array([[1.0 + 0j]])
    for _ in A.support:
        big = np.kron(big, xi.onsite_unitary)
    return LocalOperator(A.support, big @ A.matrix.conj() @ big.conj().T,
                         onsite_dim=A.onsite_dim)


class InvarianceReport(NamedTuple):
    invariant: bool
    worst_defect: float


def check_interaction_invariance(xi: TimeReversal, phi: Interaction,
                                 t_samples: int = 5) -> InvarianceReport:
    """Largest defect of the time-reversal action over terms and parameters."""
    grid = np.linspace(0.0, 1.0, max(t_samples, 1))
    worst = 0.0
    for term in phi.terms:
        ts = (0.0,) if term.constant else tuple(grid)
        for t in ts:
            op = LocalOperator(term.sites, term.at(t),
                               onsite_dim=phi.onsite_dim)
            flipped = apply_time_reversal(xi, op)
            worst = max(worst, float(
                np.linalg.norm(flipped.matrix - op.matrix, 2)))
    return InvarianceReport(worst <= 1e-10, worst)


@dataclasses.dataclass(frozen=True)
class MpsTensor:
    """Site tensor of a translation-invariant matrix product state.

    ``tensors`` has shape (d, D, D): one bond matrix per physical index.
    """

    tensors: Array
    injectivity_flag: bool = True

    def __post_init__(self):
        t = np.array(self.tensors, dtype=complex)
        if t.ndim != 3 or t.shape[1] != t.shape[2]:
            raise ValueError("tensors must have shape (d, D, D)")
        t.flags.writeable = False
        object.__setattr__(self, "tensors", t)

    @property
    def physical_dim(self) -> int:
        return self.tensors.shape[0]

    @property
    def bond_dim(self) -> int:
        return self.tensors.shape[1]

    def transfer_matrix(self) -> Array:
        """The map M -> sum_i A^i M A^i*, as a D^2 x D^2 matrix."""
        a = self.tensors
        return np.einsum("iab,icd->acbd", a, a.conj()).reshape(
            self.bond_dim**2, self.bond_dim**2)


def _top_eigenpair(matrix: Array):
    vals, vecs = np.linalg.eig(matrix)
    order = np.argsort(-np.abs(vals))
    return vals[order], vecs[:, order]


def _rotate_to_hermitian(mat: Array) -> Array:
    """Remove the eigenvector's global phase, then symmetrize."""
    trace = complex(np.trace(mat))
    if abs(trace) > 1e-14:
        mat = mat * (trace.conjugate() / abs(trace))
    return (mat + mat.conj().T) / 2.0


def _fixed_point_positive(mps: MpsTensor) -> Array:
    """Positive-definite right fixed point of the transfer map."""
    vals, vecs = _top_eigenpair(mps.transfer_matrix())
    D = mps.bond_dim
    rho = _rotate_to_hermitian(vecs[:, 0].reshape(D, D))
    if np.trace(rho).real < 0:
        rho = -rho
    eigs = np.linalg.eigvalsh(rho)
    if eigs[0] <= 1e-12 * max(abs(eigs[-1]), 1e-300):
        raise NotInjective("transfer fixed point is not positive definite")
    return rho / np.trace(rho).real


def right_canonical(mps: MpsTensor) -> MpsTensor:
    """Gauge with sum_i A^i A^i* = identity and unit spectral radius."""
    vals, _ = _top_eigenpair(mps.transfer_matrix())
    top = abs(vals[0])
    rho = _fixed_point_positive(mps)
    w, u = np.linalg.eigh(rho)
    root = u @ np.diag(np.sqrt(w)) @ u.conj().T
    inv_root = u @ np.diag(1.0 / np.sqrt(w)) @ u.conj().T
    new = np.stack([inv_root @ a @ root for a in mps.tensors])
    return MpsTensor(new / math.sqrt(top),
                     injectivity_flag=mps.injectivity_flag)


def check_injectivity(mps: MpsTensor) -> float:
    """Gap between the top two transfer eigenvalue magnitudes."""
    vals, _ = _top_eigenpair(mps.transfer_matrix())
    if len(vals) == 1:
        return float("inf")
    gap = abs(vals[0]) - abs(vals[1])
    if gap < _INJECTIVITY_GAP:
        raise NotInjective(
            f"top transfer eigenvalue is not simple (gap {gap:.2e})")
    return float(gap)


def _mixed_transfer(b_tensors: Array, a_tensors: Array) -> Array:
    """The map M -> sum_i B^i M A^i*, as a D^2 x D^2 matrix."""
    return np.einsum("iab,icd->acbd", b_tensors, a_tensors.conj()).reshape(
        a_tensors.shape[1] ** 2, a_tensors.shape[1] ** 2)


def _polar_unitary(mat: Array) -> Array:
    u, _, vh = np.linalg.svd(mat)
    return u @ vh


class IndexResult(NamedTuple):
    index: int
    theta: float
    witness: Array
    residual: float
    overlap: float


def mps_tr_index(mps: MpsTensor, xi: TimeReversal) -> IndexResult:
    """Two-valued index of a time-reversal-invariant injective MPS.

    Finds the bond unitary V with sum_j V0[i, j] conj(A^j) = e^{i theta}
    V A^i V* from the top eigenvector of the mixed transfer map and returns
    the sign of V conj(V).
    """
    if mps.physical_dim != xi.dim:
        raise ValueError("physical and symmetry dimensions differ")
    canon = right_canonical(mps)
    check_injectivity(canon)
    a = canon.tensors
    b = np.einsum("ij,jab->iab", xi.onsite_unitary, a.conj())
    vals, vecs = _top_eigenpair(_mixed_transfer(b, a))
    overlap = float(abs(vals[0]))
    if abs(overlap - 1.0) > _INVARIANCE_TOL:
        raise NotInvariant(
            f"state is not time-reversal invariant (overlap {overlap:.8f})")
    D = canon.bond_dim
    witness = _polar_unitary(vecs[:, 0].reshape(D, D))
    theta = float(np.angle(vals[0]))
    phase = np.exp(1j * theta)
    residual = max(
        float(np.linalg.norm(bi - phase * witness @ ai @ witness.conj().T, 2))
        for bi, ai in zip(b, a))
    if residual > 1e-6:
        raise AmbiguousWitness(
            f"conjugation witness residual {residual:.2e} too large")
    square = witness @ witness.conj()
    sign = 1 if square[0, 0].real >= 0 else -1
    defect = float(np.abs(square - sign * np.eye(D)).max())
    if defect > _WITNESS_TOL:
        raise AmbiguousWitness(
            f"witness square is {defect:.2e} away from a sign")
    return IndexResult(index=sign, theta=theta, witness=witness,
                       residual=residual, overlap=overlap)


class DegeneracyReport(NamedTuple):
    schmidt_squared: Array
    multiplicities: tuple  # ((value, count), ...)


def entanglement_degeneracy_probe(mps: MpsTensor,
                                  rel_tol: float = 1e-8) -> DegeneracyReport:
    """Half-chain entanglement spectrum with multiplicity grouping.

    In the right-canonical gauge the squared Schmidt values are the
    eigenvalues of the left transfer fixed point.
    """
    canon = right_canonical(mps)
    a = canon.tensors
    left_map = np.einsum("iab,icd->bdac", a.conj(), a).reshape(
        canon.bond_dim**2, canon.bond_dim**2)
    vals, vecs = _top_eigenpair(left_map)
    D = canon.bond_dim
    sigma = _rotate_to_hermitian(vecs[:, 0].reshape(D, D))
    if np.trace(sigma).real < 0:
        sigma = -sigma
    spectrum = np.sort(np.linalg.eigvalsh(sigma))[::-1]
    spectrum = spectrum / spectrum.sum()
    groups = []
    for value in spectrum:
        if groups and abs(value - groups[-1][0]) <= rel_tol * abs(groups[-1][0]):
            groups[-1][1] += 1
        else:
            groups.append([float(value), 1])
    return DegeneracyReport(spectrum, tuple((v, c) for v, c in groups))


def stack(first: MpsTensor, second: MpsTensor) -> MpsTensor:
    """Layered state: physical and bond spaces both tensor together."""
    d1, d2 = first.physical_dim, second.physical_dim
    out = np.stack([np.kron(first.tensors[i], second.tensors[j])
                    for i in range(d1) for j in range(d2)])
    return MpsTensor(out, injectivity_flag=first.injectivity_flag
                     and second.injectivity_flag)


def stack_time_reversal(first: TimeReversal,
                        second: TimeReversal) -> TimeReversal:
    return TimeReversal(np.kron(first.onsite_unitary, second.onsite_unitary))


def gauge_transform(mps: MpsTensor, bond_unitary: Array,
                    phase: complex = 1.0) -> MpsTensor:
    """Equivalent tensor W A^i W* times a global phase."""
    w = np.asarray(bond_unitary, dtype=complex)
    new = np.stack([phase * w @ a @ w.conj().T for a in mps.tensors])
    return MpsTensor(new, injectivity_flag=mps.injectivity_flag)


def random_real_mps(physical_dim: int, bond_dim: int, seed: int) -> MpsTensor:
    """Random real tensor: invariant under pure conjugation with index +1."""
    rng = np.random.default_rng(seed)
    return MpsTensor(rng.standard_normal((physical_dim, bond_dim, bond_dim)))
