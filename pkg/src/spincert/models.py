"""Built-in spin operators, interactions and matrix product tensors."""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .fnorm import Interaction, Term

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)

PAULI = {"i": np.eye(2, dtype=complex), "x": SIGMA_X, "y": SIGMA_Y,
         "z": SIGMA_Z}


def spin_matrices(dim: int):
    """Spin operators (Sx, Sy, Sz) for onsite dimension dim = 2S + 1."""
    spin = (dim - 1) / 2.0
    m = spin - np.arange(dim)
    sz = np.diag(m).astype(complex)
    ladder = np.array([math.sqrt(spin * (spin + 1) - mm * (mm + 1))
                       for mm in m[1:]])
    sp = np.zeros((dim, dim), dtype=complex)
    sp[np.arange(dim - 1), np.arange(1, dim)] = ladder
    sm = sp.conj().T
    sx = (sp + sm) / 2.0
    sy = (sp - sm) / 2.0j
    return sx, sy, sz


def pauli_string(labels: Sequence[str]) -> np.ndarray:
    """Kronecker product of single-site Pauli matrices, left to right."""
    out = np.array([[1.0 + 0j]])
    for lab in labels:
        out = np.kron(out, PAULI[lab])
    return out


def hermitian_basis(dim: int):
    """Orthogonal Hermitian basis of M_dim (identity plus generalized
    Gell-Mann matrices)."""
    out = [np.eye(dim, dtype=complex)]
    for j in range(dim):
        for k in range(j + 1, dim):
            sym = np.zeros((dim, dim), dtype=complex)
            sym[j, k] = sym[k, j] = 1.0
            out.append(sym)
            anti = np.zeros((dim, dim), dtype=complex)
            anti[j, k] = -1j
            anti[k, j] = 1j
            out.append(anti)
    for j in range(1, dim):
        diag = np.zeros(dim)
        diag[:j] = 1.0
        diag[j] = -j
        out.append(np.diag(diag / math.sqrt(j * (j + 1) / 2.0)).astype(complex))
    return out


def tfim(sites: Sequence[int], coupling: float = 1.0,
         field: float = 1.0) -> Interaction:
    """Transverse-field Ising chain: -J zz on bonds, -h x on sites."""
    sites = sorted(sites)
    terms = []
    for x, y in zip(sites, sites[1:]):
        if y == x + 1:
            terms.append(Term((x, y), -coupling * np.kron(SIGMA_Z, SIGMA_Z)))
    for x in sites:
        terms.append(Term((x,), -field * SIGMA_X))
    return Interaction(2, tuple(terms))


def heisenberg(sites: Sequence[int], coupling: float = 1.0) -> Interaction:
    """Spin-1/2 Heisenberg chain: J (Sx Sx + Sy Sy + Sz Sz) on bonds."""
    sites = sorted(sites)
    sx, sy, sz = SIGMA_X / 2, SIGMA_Y / 2, SIGMA_Z / 2
    bond = coupling * (np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz))
    terms = [Term((x, y), bond) for x, y in zip(sites, sites[1:]) if y == x + 1]
    return Interaction(2, tuple(terms))


def heisenberg_bond(dim: int = 2) -> np.ndarray:
    """The two-site S.S matrix at onsite dimension dim."""
    sx, sy, sz = spin_matrices(dim)
    return np.kron(sx, sx) + np.kron(sy, sy) + np.kron(sz, sz)


def aklt_interaction(sites: Sequence[int]) -> Interaction:
    """Spin-1 chain of projectors onto total spin 2 across each bond."""
    sites = sorted(sites)
    ss = heisenberg_bond(3)
    proj = ss / 2.0 + (ss @ ss) / 6.0 + np.eye(9) / 3.0
    terms = [Term((x, y), proj) for x, y in zip(sites, sites[1:]) if y == x + 1]
    return Interaction(3, tuple(terms))


def onsite_field(sites: Sequence[int], matrix: np.ndarray) -> Interaction:
    """Sum of one identical single-site term per site."""
    matrix = np.asarray(matrix, dtype=complex)
    d = matrix.shape[0]
    return Interaction(d, tuple(Term((x,), matrix) for x in sorted(sites)))


def power_law_interaction(sites: Sequence[int], decay: float,
                          seed: int = 0) -> Interaction:
    """Random two-body interaction with pair norms (1 + |x-y|)**-decay."""
    sites = sorted(sites)
    rng = np.random.default_rng(seed)
    terms = []
    for i, x in enumerate(sites):
        for y in sites[i + 1:]:
            raw = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
            herm = (raw + raw.conj().T) / 2.0
            herm *= (1.0 + abs(y - x)) ** (-decay) / np.linalg.norm(herm, 2)
            terms.append(Term((x, y), herm))
    return Interaction(2, tuple(terms))


def tfim_path(sites: Sequence[int], field_start: float, field_end: float,
              coupling: float = 1.0) -> Interaction:
    """TFIM family with the transverse field interpolated linearly in s."""
    sites = sorted(sites)
    terms = []
    for x, y in zip(sites, sites[1:]):
        if y == x + 1:
            terms.append(Term((x, y), -coupling * np.kron(SIGMA_Z, SIGMA_Z)))
    delta = field_end - field_start

    def make_value(_x):
        return lambda s: -(field_start + s * delta) * SIGMA_X

    deriv = -delta * SIGMA_X
    for x in sites:
        terms.append(Term((x,), make_value(x), derivative=deriv))
    return Interaction(2, tuple(terms))


def interpolated(phi0: Interaction, phi1: Interaction) -> Interaction:
    """Linear interpolation (1 - s) phi0 + s phi1 with analytic derivative."""
    if phi0.onsite_dim != phi1.onsite_dim:
        raise ValueError("interpolated interactions need equal onsite_dim")
    by_sites = {}
    for term in phi0.terms:
        by_sites.setdefault(term.sites, [None, None])[0] = term
    for term in phi1.terms:
        by_sites.setdefault(term.sites, [None, None])[1] = term
    terms = []
    for sites_key in sorted(by_sites):
        t0, t1 = by_sites[sites_key]
        dim = phi0.onsite_dim ** len(sites_key)
        m0 = t0.at(0.0) if t0 is not None else np.zeros((dim, dim))
        m1 = t1.at(0.0) if t1 is not None else np.zeros((dim, dim))
        m0 = np.asarray(m0, dtype=complex)
        m1 = np.asarray(m1, dtype=complex)

        def make_value(a, b):
            return lambda s: (1.0 - s) * a + s * b

        terms.append(Term(sites_key, make_value(m0, m1), derivative=m1 - m0))
    return Interaction(phi0.onsite_dim, tuple(terms))


def single_qubit_crossover() -> Interaction:
    """One-site family -(1-s) z - s x, the analytic flow benchmark."""
    def value(s):
        return -(1.0 - s) * SIGMA_Z - s * SIGMA_X

    return Interaction(2, (Term((0,), value, derivative=SIGMA_Z - SIGMA_X),))


# ---------------------------------------------------------------------------
# Matrix product tensors and time-reversal actions


def aklt_mps_tensors() -> np.ndarray:
    """AKLT site tensor in a standard gauge (physical index order m = +1,0,-1)."""
    a_plus = math.sqrt(2.0 / 3.0) * SIGMA_PLUS
    a_zero = -math.sqrt(1.0 / 3.0) * SIGMA_Z
    a_minus = -math.sqrt(2.0 / 3.0) * SIGMA_MINUS
    return np.stack([a_plus, a_zero, a_minus])


def product_mps_tensors(vector: Sequence[complex]) -> np.ndarray:
    """Bond-dimension-1 tensor of the translation-invariant product state."""
    vec = np.asarray(vector, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return vec.reshape(len(vec), 1, 1)


def spin_rotation_y_pi(dim: int) -> np.ndarray:
    """The onsite unitary exp(i pi Sy) at onsite dimension dim."""
    _, sy, _ = spin_matrices(dim)
    vals, vecs = np.linalg.eigh(sy)
    return (vecs * np.exp(1j * math.pi * vals)) @ vecs.conj().T
