"""Split-stability experiments: truncation and decoupling defects against
their certified envelopes, the quasi-equivalence probe and uniform
correlation decay."""

from __future__ import annotations

import dataclasses
import math
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .chain import (DensePropagator, LocalOperator, Volume, annulus,
                    conditional_expectation, embed, ground_state,
                    operator_norm, partial_trace)
from .errors import (BoundViolation, DegenerateSplit, DimensionMismatch,
                     SupportOutsideVolume)
from .fnorm import FSpec, Interaction, f_eval, f_norm, restrict
from .lrcert import LRConstants, lr_constants
from .models import SIGMA_Z, hermitian_basis

Array = np.ndarray

VIOLATION_SLACK = 1e-9
NUMERICAL_FLOOR = 1e-10


@dataclasses.dataclass(frozen=True)
class ChainState:
    """A state on a finite volume, stored as a density matrix."""

    volume: Volume
    rho: Array
    onsite_dim: int = 2

    def __post_init__(self):
        dim = self.volume.dimension(self.onsite_dim)
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (dim, dim):
            raise DimensionMismatch(
                f"density matrix shape {rho.shape}, expected {(dim, dim)}")
        trace = complex(np.trace(rho))
        if abs(trace - 1.0) > 1e-12:
            raise ValueError(f"density matrix trace {trace} != 1")
        herm = np.abs(rho - rho.conj().T).max()
        if herm > 1e-12:
            raise ValueError(f"density matrix not Hermitian (defect {herm:.2e})")
        least = float(np.linalg.eigvalsh(rho)[0])
        if least < -1e-12:
            raise ValueError(f"density matrix not PSD (min eig {least:.2e})")
        rho.flags.writeable = False
        object.__setattr__(self, "rho", rho)

    @classmethod
    def from_vector(cls, volume: Volume, psi: Array,
                    onsite_dim: int = 2) -> "ChainState":
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(volume, np.outer(psi, psi.conj()), onsite_dim)

    @classmethod
    def from_mps(cls, volume: Volume, tensors: Array,
                 left_boundary: Optional[Array] = None,
                 right_boundary: Optional[Array] = None) -> "ChainState":
        """Open-boundary pure state built from a translation-invariant site
        tensor contracted with boundary vectors (default: uniform)."""
        tensors = np.asarray(tensors, dtype=complex)
        d, bond, _ = tensors.shape
        left = (np.ones(bond) / math.sqrt(bond) if left_boundary is None
                else np.asarray(left_boundary, dtype=complex))
        right = (np.ones(bond) / math.sqrt(bond) if right_boundary is None
                 else np.asarray(right_boundary, dtype=complex))
        n = len(volume)
        psi = np.zeros((d,) * n, dtype=complex)
        for idx in np.ndindex(*([d] * n)):
            mat = left.reshape(1, -1)
            for i in idx:
                mat = mat @ tensors[i]
            psi[idx] = (mat @ right.reshape(-1, 1))[0, 0]
        return cls.from_vector(volume, psi.reshape(-1), onsite_dim=d)

    def expect(self, op: Array) -> complex:
        return complex(np.trace(self.rho @ np.asarray(op, dtype=complex)))

    def expect_local(self, op: LocalOperator) -> complex:
        return self.expect(embed(op, self.volume))

    def reduced(self, keep: Iterable[int]) -> Array:
        """Reduced density matrix on the kept sites (standard, trace one)."""
        keep = sorted(set(keep))
        traced = len(self.volume) - len(keep)
        return partial_trace(self.rho, self.volume, keep, self.onsite_dim) \
            * (self.onsite_dim ** traced)


def split_product_state(state: ChainState, cut: int = 0) -> ChainState:
    """Tensor product of the reduced states left and right of the cut bond."""
    left_sites = [s for s in state.volume.sites if s <= cut]
    right_sites = [s for s in state.volume.sites if s > cut]
    if not left_sites or not right_sites:
        raise ValueError("cut must be interior to the volume")
    rho_l = state.reduced(left_sites)
    rho_r = state.reduced(right_sites)
    return ChainState(state.volume, np.kron(rho_l, rho_r), state.onsite_dim)


@dataclasses.dataclass(frozen=True)
class DefectCurve:
    """Measured defects against their envelopes along a parameter ladder."""

    parameter: tuple
    defect: tuple
    envelope: tuple
    enforced: bool = True

    def __post_init__(self):
        if not (len(self.parameter) == len(self.defect) == len(self.envelope)):
            raise ValueError("curve columns must have equal length")
        if self.enforced:
            for p, d, e in zip(self.parameter, self.defect, self.envelope):
                if d > e * (1.0 + VIOLATION_SLACK) + NUMERICAL_FLOOR:
                    raise BoundViolation(
                        f"defect {d:.6e} exceeds envelope {e:.6e} at "
                        f"parameter {p}")

    def rows(self):
        return list(zip(self.parameter, self.defect, self.envelope))


class DefectPoint(NamedTuple):
    defect: float
    envelope: float


def _constants_for(phi: Interaction, spec: FSpec,
                   constants: Optional[LRConstants]) -> LRConstants:
    if constants is not None:
        return constants
    return lr_constants(spec, f_norm(phi, spec).value)


def truncation_defect(phi: Interaction, spec: FSpec, A: LocalOperator,
                      n: int, r: int, t: float, volume: Volume,
                      constants: Optional[LRConstants] = None,
                      propagator: Optional[DensePropagator] = None
                      ) -> DefectPoint:
    """Distance between an evolved annulus observable and its conditional
    expectation onto the keep annulus An(n, 2(n+r)).

    The envelope is 2 kappa |A| (e^{nu|t|} - 1) F_{beta-2}(n).  Sets are
    intersected with the working volume.
    """
    if n < 1 or r < 0:
        raise ValueError("need n >= 1 and r >= 0")
    allowed = set(annulus(2 * n, 2 * n + r)) if r > 0 else \
        {-2 * n, 2 * n}
    if not set(A.support) <= allowed:
        raise SupportOutsideVolume(
            f"support {A.support} not inside the source annulus")
    if not volume.contains(A.support):
        raise SupportOutsideVolume("observable does not fit the volume")
    keep = [s for s in annulus(n, 2 * (n + r)) if s in volume]
    k = _constants_for(phi, spec, constants)
    prop = propagator or DensePropagator(phi, volume)
    evolved = prop.evolve(A, t)
    projected = conditional_expectation(evolved, volume, keep)
    defect = operator_norm(evolved.matrix - embed(projected, volume))
    norm_a = A.norm()
    envelope = 2.0 * k.kappa * norm_a * math.expm1(k.nu * abs(t)) \
        * f_eval(spec.shifted(-2.0), n)
    if defect > envelope * (1.0 + VIOLATION_SLACK) + NUMERICAL_FLOOR:
        raise BoundViolation(
            f"truncation defect {defect:.6e} exceeds envelope {envelope:.6e}")
    return DefectPoint(float(defect), float(envelope))


def decoupling_envelope(spec: FSpec, norm_a: float, phi_norm: float,
                        kappa: float, nu: float, n: int, t: float) -> float:
    """Time integral of the two cut-crossing contributions.

    The far terms contribute [8 / ((beta-2-delta/2) delta)] |A| |Phi|
    F_{beta-2-delta/2}(n) per unit time with delta = min(1, (beta-2)/2);
    the near terms contribute 3 kappa |Phi| |A| (e^{nu s} - 1) n
    F_{beta-2}(n) integrated in s.
    """
    delta = min(1.0, (spec.beta - 2.0) / 2.0)
    if delta <= 0:
        raise ValueError("decoupling envelope needs beta > 2")
    far_rate = (8.0 / ((spec.beta - 2.0 - delta / 2.0) * delta)) \
        * norm_a * phi_norm * f_eval(spec.shifted(-2.0 - delta / 2.0), n)
    near = 3.0 * kappa * phi_norm * norm_a * n \
        * f_eval(spec.shifted(-2.0), n) \
        * ((math.expm1(nu * abs(t))) / nu - abs(t) if nu > 0 else 0.0)
    return abs(t) * far_rate + near


def decoupling_defect(phi: Interaction, spec: FSpec, A: LocalOperator,
                      n: int, t: float, volume: Volume,
                      constants: Optional[LRConstants] = None,
                      propagator: Optional[DensePropagator] = None,
                      propagator_cut: Optional[DensePropagator] = None
                      ) -> DefectPoint:
    """Distance between the full and cut dynamics applied to A."""
    if n < 1:
        raise ValueError("need n >= 1")
    if not volume.contains(A.support):
        raise SupportOutsideVolume("observable does not fit the volume")
    k = _constants_for(phi, spec, constants)
    prop = propagator or DensePropagator(phi, volume)
    prop_cut = propagator_cut or DensePropagator(
        restrict(phi, "decoupled"), volume)
    evolved = prop.evolve(A, t)
    evolved_cut = prop_cut.evolve(A, t)
    defect = operator_norm(evolved.matrix - evolved_cut.matrix)
    envelope = decoupling_envelope(spec, A.norm(), k.f_norm, k.kappa, k.nu,
                                   n, t)
    if defect > envelope * (1.0 + VIOLATION_SLACK) + NUMERICAL_FLOOR:
        raise BoundViolation(
            f"decoupling defect {defect:.6e} exceeds envelope {envelope:.6e}")
    return DefectPoint(float(defect), float(envelope))


def _sigma_z_string(sites: Sequence[int]) -> LocalOperator:
    mat = np.array([[1.0 + 0j]])
    for _ in sites:
        mat = np.kron(mat, SIGMA_Z)
    return LocalOperator(tuple(sites), mat, onsite_dim=2)


def truncation_defect_curve(phi: Interaction, spec: FSpec,
                            n_values: Sequence[int], r: int, t: float,
                            volume: Volume,
                            constants: Optional[LRConstants] = None,
                            propagator: Optional[DensePropagator] = None
                            ) -> DefectCurve:
    """Truncation defects for z-string observables on the source annuli."""
    k = _constants_for(phi, spec, constants)
    prop = propagator or DensePropagator(phi, volume)
    defects, envelopes = [], []
    for n in n_values:
        sites = [s for s in annulus(2 * n, 2 * n + r) if s in volume] \
            if r > 0 else [s for s in (-2 * n, 2 * n) if s in volume]
        if not sites:
            raise SupportOutsideVolume(
                f"source annulus for n={n} misses the volume")
        point = truncation_defect(phi, spec, _sigma_z_string(sites), n, r, t,
                                  volume, constants=k, propagator=prop)
        defects.append(point.defect)
        envelopes.append(point.envelope)
    return DefectCurve(tuple(n_values), tuple(defects), tuple(envelopes))


def decoupling_defect_curve(phi: Interaction, spec: FSpec,
                            n_values: Sequence[int], t: float, volume: Volume,
                            constants: Optional[LRConstants] = None,
                            propagator: Optional[DensePropagator] = None,
                            propagator_cut: Optional[DensePropagator] = None
                            ) -> DefectCurve:
    """Decoupling defects for a single-site z observable near each annulus."""
    k = _constants_for(phi, spec, constants)
    prop = propagator or DensePropagator(phi, volume)
    prop_cut = propagator_cut or DensePropagator(
        restrict(phi, "decoupled"), volume)
    defects, envelopes = [], []
    for n in n_values:
        site = 2 * n if 2 * n in volume else -2 * n
        if site not in volume:
            raise SupportOutsideVolume(f"site 2n for n={n} misses the volume")
        A = LocalOperator((site,), SIGMA_Z, onsite_dim=2)
        point = decoupling_defect(phi, spec, A, n, t, volume, constants=k,
                                  propagator=prop, propagator_cut=prop_cut)
        defects.append(point.defect)
        envelopes.append(point.envelope)
    return DefectCurve(tuple(n_values), tuple(defects), tuple(envelopes))


def quasi_equivalence_probe(omega: ChainState, phi_state: ChainState,
                            x_eps: Iterable[int], observable_samples: int,
                            seed: int) -> float:
    """Largest normalized expectation gap over observables supported away
    from the excluded region.

    The ensemble holds every one- and two-site Hermitian basis element in the
    complement plus random Hermitian observables on the full complement.
    """
    if omega.volume != phi_state.volume or \
            omega.onsite_dim != phi_state.onsite_dim:
        raise DimensionMismatch("states must share volume and onsite dim")
    volume = omega.volume
    d = omega.onsite_dim
    excluded = set(x_eps)
    if not excluded <= set(volume.sites):
        raise SupportOutsideVolume("excluded region not inside the volume")
    outside = [s for s in volume.sites if s not in excluded]
    if not outside:
        return 0.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    basis = hermitian_basis(d)[1:]  # skip identity: zero gap by trace
    local_ops = []
    for s in outside:
        for mat in basis:
            local_ops.append(LocalOperator((s,), mat, onsite_dim=d))
    for i, s in enumerate(outside):
        for s2 in outside[i + 1:]:
            for m1 in basis[:min(3, len(basis))]:
                for m2 in basis[:min(3, len(basis))]:
                    local_ops.append(LocalOperator(
                        (s, s2), np.kron(m1, m2), onsite_dim=d))
    dim_out = d ** len(outside)
    for _ in range(observable_samples):
        raw = rng.standard_normal((dim_out, dim_out)) \
            + 1j * rng.standard_normal((dim_out, dim_out))
        herm = (raw + raw.conj().T) / 2.0
        local_ops.append(LocalOperator(tuple(outside), herm, onsite_dim=d))
    for op in local_ops:
        norm_b = op.norm()
        if norm_b < 1e-14:
            continue
        gap = abs(omega.expect_local(op) - phi_state.expect_local(op))
        worst = max(worst, gap / norm_b)
    return float(worst)


class CorrelationDecayResult(NamedTuple):
    connected: float
    envelope: float
    allowance: float


def correlation_decay_check(phi: Interaction, spec: FSpec, volume: Volume,
                            gamma: float, A: LocalOperator, B: LocalOperator,
                            constants: Optional[LRConstants] = None,
                            spectral=None) -> CorrelationDecayResult:
    """Connected ground-state correlator against the gap-weighted envelope.

    The finite-volume result is a proxy for the infinite-volume statement;
    an additive allowance 10 F_{beta-2}(distance to the boundary) is
    declared and reported separately.
    """
    if not A.support or not B.support or A.support[-1] >= B.support[0]:
        raise ValueError("need max supp A < min supp B")
    if not (volume.contains(A.support) and volume.contains(B.support)):
        raise SupportOutsideVolume("observables do not fit the volume")
    if spec.R == 0:
        raise ValueError("the correlation envelope needs R > 0 (h nonzero)")
    k = _constants_for(phi, spec, constants)
    from .chain import assemble_hamiltonian
    sd = spectral if spectral is not None else ground_state(
        assemble_hamiltonian(phi, volume, 0.0), gamma)
    if sd.split_index != 1:
        raise DegenerateSplit("ground state is not unique at this volume")
    if sd.gap < gamma:
        raise DegenerateSplit(
            f"measured gap {sd.gap:.6f} below requested gamma {gamma}")
    psi = sd.ground_vector()
    a_mat = embed(A, volume)
    b_mat = embed(B, volume)
    ab = psi.conj() @ (a_mat @ (b_mat @ psi))
    ea = psi.conj() @ (a_mat @ psi)
    eb = psi.conj() @ (b_mat @ psi)
    connected = abs(ab - ea * eb)
    dist = B.support[0] - A.support[-1]
    h_d = float(spec.h(dist))
    mu = 1.0 + k.kappa / math.pi \
        + math.sqrt((2.0 * k.nu + gamma) / (math.pi * gamma * h_d))
    u = gamma / (2.0 * k.nu + gamma)
    envelope = mu * A.norm() * B.norm() * math.exp(-u * h_d)
    boundary_dist = min(A.support[0] - volume.a, volume.b - B.support[-1])
    allowance = 10.0 * f_eval(spec.shifted(-2.0), boundary_dist)
    if connected > (envelope + allowance) * (1.0 + VIOLATION_SLACK) \
            + NUMERICAL_FLOOR:
        raise BoundViolation(
            f"connected correlator {connected:.6e} exceeds envelope "
            f"{envelope:.6e} + allowance {allowance:.6e}")
    return CorrelationDecayResult(float(connected), float(envelope),
                                  float(allowance))
