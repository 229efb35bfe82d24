"""Explicit Lieb-Robinson constants and brute-force certification of the
support-independent commutator bounds."""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import unitary_group

from .chain import (DensePropagator, LocalOperator, Volume, annulus, embed,
                    operator_norm)
from .errors import BadGeometry, BetaTooSmall, BoundViolation
from .fnorm import FSpec, Interaction, convolution_constant, f_eval, f_norm

VIOLATION_SLACK = 1e-9
# Dense-algebra roundoff floor for measured commutators (bounds can be 0).
NUMERICAL_FLOOR = 1e-10


@functools.lru_cache(maxsize=64)
def cached_convolution_constant(spec: FSpec) -> float:
    return convolution_constant(spec).value


@dataclasses.dataclass(frozen=True)
class LRConstants:
    """Propagation constants (kappa, nu) derived from the decay weight."""

    kappa: float
    nu: float
    beta: float
    c_beta: float
    f_norm: float


def lr_constants(spec: FSpec, f_norm_value: float,
                 c_beta: Optional[float] = None) -> LRConstants:
    """Constants kappa = 16 / (C (beta/2 - 1)^2) and nu = 2 |Phi| C.

    C is the numerically estimated convolution constant of the weight;
    kappa does not depend on the geometry parameters.
    """
    if spec.beta <= 2:
        raise BetaTooSmall(f"need beta > 2, got beta = {spec.beta}")
    if f_norm_value < 0:
        raise ValueError("f_norm must be >= 0")
    if c_beta is None:
        c_beta = cached_convolution_constant(spec)
    kappa = 16.0 / (c_beta * (spec.beta / 2.0 - 1.0) ** 2)
    nu = 2.0 * f_norm_value * c_beta
    return LRConstants(kappa=kappa, nu=nu, beta=spec.beta, c_beta=c_beta,
                       f_norm=f_norm_value)


def _envelope(k: LRConstants, t: float, norm_a: float, norm_b: float) -> float:
    return k.kappa * norm_a * norm_b * math.expm1(k.nu * abs(t))


def lr_bound_annulus(k: LRConstants, spec: FSpec, n: int, m: int, c: int,
                     p: int, t: float, norm_a: float = 1.0,
                     norm_b: float = 1.0) -> float:
    """Commutator bound for an observable on the annulus (m, n) against one
    outside the buffered annulus (m - c, n + p)."""
    if not (0 <= c < m < n):
        raise BadGeometry(f"need 0 <= c < m < n, got c={c}, m={m}, n={n}")
    if p < 0:
        raise BadGeometry(f"need p >= 0, got p={p}")
    weakened = spec.shifted(-2.0)
    return _envelope(k, t, norm_a, norm_b) * f_eval(weakened, min(p, c))


def lr_bound_disjoint(k: LRConstants, spec: FSpec, dist: int, t: float,
                      norm_a: float = 1.0, norm_b: float = 1.0) -> float:
    """Commutator bound for observables on ordered disjoint supports."""
    if dist < 1:
        raise BadGeometry(f"need dist >= 1, got {dist}")
    return _envelope(k, t, norm_a, norm_b) * f_eval(spec.shifted(-2.0), dist)


@dataclasses.dataclass(frozen=True)
class AnnulusGeometry:
    """Observable A on An(m, n), B on the volume minus An(m - c, n + p)."""

    m: int
    n: int
    c: int
    p: int
    support_size: Optional[int] = None  # restrict A to this many annulus sites

    def label(self) -> str:
        size = "full" if self.support_size is None else str(self.support_size)
        return f"annulus(m={self.m},n={self.n},c={self.c},p={self.p},|A|={size})"


@dataclasses.dataclass(frozen=True)
class DisjointGeometry:
    """Observables on explicit ordered site tuples with max X < min Y."""

    x_sites: tuple
    y_sites: tuple

    def __post_init__(self):
        object.__setattr__(self, "x_sites", tuple(sorted(self.x_sites)))
        object.__setattr__(self, "y_sites", tuple(sorted(self.y_sites)))
        if not self.x_sites or not self.y_sites:
            raise BadGeometry("disjoint geometry needs nonempty supports")
        if self.x_sites[-1] >= self.y_sites[0]:
            raise BadGeometry("need max X < min Y")

    @property
    def dist(self) -> int:
        return self.y_sites[0] - self.x_sites[-1]

    def label(self) -> str:
        return f"disjoint(X={list(self.x_sites)},Y={list(self.y_sites)},d={self.dist})"


Geometry = Union[AnnulusGeometry, DisjointGeometry]


@dataclasses.dataclass(frozen=True)
class LRCertificate:
    """One certified grid cell: the worst measured/bound pair over samples."""

    geometry: str
    t: float
    bound: float
    measured: float
    ratio: float
    samples: int
    seed: int
    support_size: int
    dist: int
    volume_delta: float = float("nan")


def _cell_supports(geometry: Geometry, volume: Volume, rng):
    if isinstance(geometry, DisjointGeometry):
        if not volume.contains(geometry.x_sites + geometry.y_sites):
            raise BadGeometry(f"{geometry.label()} does not fit the volume")
        return geometry.x_sites, geometry.y_sites, geometry.dist
    ann = [s for s in annulus(geometry.m, geometry.n) if s in volume]
    if not ann:
        raise BadGeometry(f"{geometry.label()} has empty A-support in volume")
    if geometry.support_size is not None:
        size = min(geometry.support_size, len(ann))
        ann = sorted(rng.choice(ann, size=size, replace=False).tolist())
    inner = set(annulus(geometry.m - geometry.c, geometry.n + geometry.p)) \
        if geometry.m - geometry.c > 0 else set(
            range(-(geometry.n + geometry.p), geometry.n + geometry.p + 1))
    b_sites = tuple(s for s in volume.sites if s not in inner)
    if not b_sites:
        raise BadGeometry(f"{geometry.label()} leaves no room for B")
    return tuple(ann), b_sites, min(geometry.p, geometry.c)


def _haar_unitary(dim: int, rng) -> np.ndarray:
    return unitary_group.rvs(dim, random_state=rng)


def _random_hermitian(dim: int, rng) -> np.ndarray:
    raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    herm = (raw + raw.conj().T) / 2.0
    return herm / operator_norm(herm, method="svd")


def _pauli_candidates(sites: tuple) -> list:
    out = []
    for label in ("z", "x", "y"):
        mat = np.array([[1.0 + 0j]])
        base = {"z": np.array([[1, 0], [0, -1]], dtype=complex),
                "x": np.array([[0, 1], [1, 0]], dtype=complex),
                "y": np.array([[0, -1j], [1j, 0]], dtype=complex)}[label]
        for _ in sites:
            mat = np.kron(mat, base)
        out.append(mat)
    return out


def _observables(sites: tuple, samples: int, rng, include_paulis: bool):
    dim = 2 ** len(sites)
    obs = []
    if include_paulis and dim <= 1 << 10:
        obs.extend(_pauli_candidates(sites))
    for _ in range(samples):
        obs.append(_haar_unitary(dim, rng))
        obs.append(_random_hermitian(dim, rng))
    return obs


def _measure_cell(prop: DensePropagator, volume: Volume, a_sites: tuple,
                  b_sites: tuple, t: float, samples: int, rng,
                  onsite_dim: int) -> tuple:
    """Max commutator norm over the observable ensemble, in the eigenbasis."""
    a_obs = _observables(a_sites, samples, rng, include_paulis=True)
    b_obs = _observables(b_sites, samples, rng, include_paulis=True)
    worst = 0.0
    count = 0
    b_eigs = [prop.to_eigenbasis(
        embed(LocalOperator(b_sites, B, onsite_dim=onsite_dim), volume))
        for B in b_obs]
    for A in a_obs:
        a_eig = prop.to_eigenbasis(
            embed(LocalOperator(a_sites, A, onsite_dim=onsite_dim), volume))
        evolved = prop.evolve_in_eigenbasis(a_eig, t)
        for b_eig in b_eigs:
            comm = evolved @ b_eig - b_eig @ evolved
            worst = max(worst, operator_norm(comm))
            count += 1
    return worst, count


def certify_lr(phi: Interaction, spec: FSpec, geometries: Sequence[Geometry],
               t_grid: Sequence[float], samples: int, seed: int,
               volume: Volume, constants: Optional[LRConstants] = None,
               volume_probe: bool = False) -> list:
    """Certify the commutator bounds over a (geometry, t) grid.

    Each cell draws Haar unitaries and normalized random Hermitians on the
    configured supports (plus deterministic Pauli strings), evolves A and
    records measured/bound.  Deterministic under a fixed seed; raises
    BoundViolation as soon as any measured value exceeds its bound.
    """
    if constants is None:
        constants = lr_constants(spec, f_norm(phi, spec).value)
    prop = DensePropagator(phi, volume)
    probe_prop = None
    if volume_probe:
        probe_prop = DensePropagator(
            phi, Volume(volume.a - 2, volume.b + 2))
    certificates = []
    for cell_index, geometry in enumerate(geometries):
        for t_index, t in enumerate(t_grid):
            rng = np.random.default_rng((seed, cell_index, t_index))
            a_sites, b_sites, buffer_arg = _cell_supports(geometry, volume, rng)
            measured, count = _measure_cell(
                prop, volume, a_sites, b_sites, t, samples, rng,
                phi.onsite_dim)
            if isinstance(geometry, DisjointGeometry):
                bound = lr_bound_disjoint(constants, spec, geometry.dist, t)
                dist = geometry.dist
            else:
                bound = lr_bound_annulus(constants, spec, geometry.n,
                                         geometry.m, geometry.c, geometry.p, t)
                dist = buffer_arg
            delta = float("nan")
            if probe_prop is not None:
                rng_probe = np.random.default_rng((seed, cell_index, t_index))
                a2, b2, _ = _cell_supports(geometry, volume, rng_probe)
                bigger, _ = _measure_cell(
                    probe_prop, probe_prop.volume, a2, b2, t, samples,
                    rng_probe, phi.onsite_dim)
                delta = abs(bigger - measured)
            if measured > bound * (1.0 + VIOLATION_SLACK) + NUMERICAL_FLOOR:
                raise BoundViolation(
                    f"{geometry.label()} t={t}: measured {measured:.6e} "
                    f"exceeds bound {bound:.6e}")
            if bound > 0:
                ratio = measured / bound
            else:
                ratio = 0.0 if measured <= NUMERICAL_FLOOR else float("inf")
            certificates.append(LRCertificate(
                geometry=geometry.label(), t=float(t), bound=float(bound),
                measured=float(measured), ratio=float(ratio), samples=count,
                seed=seed, support_size=len(a_sites), dist=int(dist),
                volume_delta=delta))
    return certificates
