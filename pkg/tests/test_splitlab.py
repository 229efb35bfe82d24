import numpy as np
import pytest

from spincert import models
from spincert.chain import (DensePropagator, LocalOperator, Volume,
                            assemble_hamiltonian, ground_state)
from spincert.errors import (BoundViolation, DegenerateSplit,
                             DimensionMismatch, SupportOutsideVolume)
from spincert.fnorm import FSpec, Interaction, Term, f_norm, restrict
from spincert.lrcert import lr_constants
from spincert.splitlab import (ChainState, DefectCurve,
                               correlation_decay_check, decoupling_defect,
                               decoupling_defect_curve,
                               quasi_equivalence_probe, split_product_state,
                               truncation_defect, truncation_defect_curve)

SZ, SX = models.SIGMA_Z, models.SIGMA_X


@pytest.fixture(scope="module")
def bench8():
    volume = Volume(-3, 4)
    phi = models.tfim(volume.sites, field=2.0)
    spec = FSpec(6.0)
    constants = lr_constants(spec, f_norm(phi, spec).value)
    prop = DensePropagator(phi, volume)
    prop_cut = DensePropagator(restrict(phi, "decoupled"), volume)
    return phi, spec, constants, volume, prop, prop_cut


class TestChainState:
    def test_validation(self):
        vol = Volume(0, 1)
        with pytest.raises(DimensionMismatch):
            ChainState(vol, np.eye(3) / 3)
        with pytest.raises(ValueError):
            ChainState(vol, np.eye(4) / 2.0)  # trace 2
        with pytest.raises(ValueError):
            ChainState(vol, np.diag([1.5, -0.5, 0.0, 0.0]))  # not PSD

    def test_from_vector_and_expectations(self):
        vol = Volume(0, 1)
        psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
        state = ChainState.from_vector(vol, psi)
        zz = LocalOperator((0, 1), np.kron(SZ, SZ))
        assert state.expect_local(zz).real == pytest.approx(1.0)

    def test_reduced_state(self):
        vol = Volume(0, 1)
        psi = np.array([1, 0, 0, 1]) / np.sqrt(2)
        state = ChainState.from_vector(vol, psi)
        rho = state.reduced([0])
        assert np.allclose(rho, np.eye(2) / 2)

    def test_from_mps_product(self):
        vol = Volume(0, 2)
        tensors = models.product_mps_tensors([1.0, 1.0])
        state = ChainState.from_mps(vol, tensors)
        plus = np.ones(8) / np.sqrt(8)
        assert state.expect(np.outer(plus, plus.conj())).real \
            == pytest.approx(1.0)


class TestDefectCurve:
    def test_enforced_violation(self):
        with pytest.raises(BoundViolation):
            DefectCurve((1,), (2.0,), (1.0,))

    def test_report_only(self):
        curve = DefectCurve((1,), (2.0,), (1.0,), enforced=False)
        assert curve.rows() == [(1, 2.0, 1.0)]


class TestTruncationDefect:
    def test_zero_time_is_exact_zero(self, bench8):
        phi, spec, k, vol, prop, _ = bench8
        A = LocalOperator((2,), SZ)
        point = truncation_defect(phi, spec, A, 1, 1, 0.0, vol,
                                  constants=k, propagator=prop)
        assert point.defect == 0.0

    def test_free_interaction(self, bench8):
        _, spec, k, vol, _, _ = bench8
        free = Interaction(2, ())
        A = LocalOperator((2,), SZ)
        point = truncation_defect(free, spec, A, 1, 1, 0.8, vol, constants=k)
        assert point.defect <= 1e-12

    def test_commuting_interaction_keeps_support(self, bench8):
        # zz-couplings commute with z observables: the evolved operator
        # stays inside the keep set and the defect vanishes.
        _, spec, k, vol, _, _ = bench8
        zz = Interaction(2, tuple(
            Term((x, x + 1), np.kron(SZ, SZ)) for x in range(-3, 4)))
        A = LocalOperator((2,), SZ)
        point = truncation_defect(zz, spec, A, 1, 1, 0.7, vol, constants=k)
        assert point.defect <= 1e-10

    def test_tfim_below_envelope(self, bench8):
        phi, spec, k, vol, prop, _ = bench8
        A = LocalOperator((2, 3), np.kron(SZ, SZ))
        point = truncation_defect(phi, spec, A, 1, 1, 0.5, vol,
                                  constants=k, propagator=prop)
        assert 0 < point.defect <= point.envelope

    def test_support_validation(self, bench8):
        phi, spec, k, vol, prop, _ = bench8
        with pytest.raises(SupportOutsideVolume):
            truncation_defect(phi, spec, LocalOperator((0,), SZ), 1, 1, 0.5,
                              vol, constants=k, propagator=prop)


class TestDecouplingDefect:
    def test_zero_time(self, bench8):
        phi, spec, k, vol, prop, prop_cut = bench8
        A = LocalOperator((2,), SZ)
        point = decoupling_defect(phi, spec, A, 1, 0.0, vol, constants=k,
                                  propagator=prop, propagator_cut=prop_cut)
        assert point.defect == 0.0

    def test_no_crossing_terms(self, bench8):
        _, spec, k, vol, _, _ = bench8
        dec = restrict(models.tfim(vol.sites, field=2.0), "decoupled")
        A = LocalOperator((2,), SZ)
        point = decoupling_defect(dec, spec, A, 1, 0.9, vol, constants=k)
        assert point.defect <= 1e-12

    def test_norm_homogeneous_in_A(self, bench8):
        phi, spec, k, vol, prop, prop_cut = bench8
        A1 = LocalOperator((2,), SZ)
        A3 = LocalOperator((2,), 3.0 * SZ)
        p1 = decoupling_defect(phi, spec, A1, 1, 0.5, vol, constants=k,
                               propagator=prop, propagator_cut=prop_cut)
        p3 = decoupling_defect(phi, spec, A3, 1, 0.5, vol, constants=k,
                               propagator=prop, propagator_cut=prop_cut)
        assert p3.defect == pytest.approx(3.0 * p1.defect, rel=1e-9)

    def test_curves_decreasing_and_enforced(self, bench8):
        phi, spec, k, vol, prop, prop_cut = bench8
        curve = decoupling_defect_curve(phi, spec, [1, 2], 0.5, vol,
                                        constants=k, propagator=prop,
                                        propagator_cut=prop_cut)
        assert curve.defect[0] > curve.defect[1]
        assert all(d <= e for d, e in zip(curve.defect, curve.envelope))
        tcurve = truncation_defect_curve(phi, spec, [1, 2], 1, 0.5, vol,
                                         constants=k, propagator=prop)
        assert tcurve.defect[0] > tcurve.defect[1]
        assert all(e1 > e2 for e1, e2 in zip(tcurve.envelope,
                                             tcurve.envelope[1:]))


class TestQuasiEquivalenceProbe:
    def test_identical_states(self, bench8):
        phi, _, _, vol, prop, _ = bench8
        sd = ground_state(assemble_hamiltonian(phi, vol), 1.0)
        gs = ChainState.from_vector(vol, sd.ground_vector())
        assert quasi_equivalence_probe(gs, gs, [0, 1], 2, seed=1) == 0.0

    def test_product_states_differing_inside_exclusion(self):
        vol = Volume(0, 2)
        up = np.array([1.0, 0.0])
        plus = np.array([1.0, 1.0]) / np.sqrt(2)
        psi1 = np.kron(np.kron(up, up), up)
        psi2 = np.kron(np.kron(up, plus), up)
        s1 = ChainState.from_vector(vol, psi1)
        s2 = ChainState.from_vector(vol, psi2)
        assert quasi_equivalence_probe(s1, s2, [1], 4, seed=2) <= 1e-12

    def test_split_probe_decreases(self, bench8):
        # Ground state against the product of its half-chain restrictions:
        # the gap shrinks as the excluded window grows.
        phi, _, _, vol, _, _ = bench8
        sd = ground_state(assemble_hamiltonian(phi, vol), 1.0)
        gs = ChainState.from_vector(vol, sd.ground_vector())
        product = split_product_state(gs)
        values = []
        for half in (1, 2, 3):
            x_eps = [s for s in vol.sites if -half < s <= half]
            values.append(quasi_equivalence_probe(gs, product, x_eps, 3,
                                                  seed=9))
        assert values[0] > values[1] > values[2]


class TestCorrelationDecay:
    def test_product_ground_state_factorizes(self):
        vol = Volume(-3, 4)
        spec = FSpec(6.0, R=0.5, b=1.0)
        field = models.onsite_field(vol.sites, -SX)
        A = LocalOperator((0,), SZ)
        B = LocalOperator((3,), SZ)
        result = correlation_decay_check(field, spec, vol, 1.0, A, B)
        assert result.connected <= 1e-12

    def test_identity_observable(self, bench8):
        phi, _, k, vol, _, _ = bench8
        spec = FSpec(6.0, R=0.5, b=1.0)
        kh = lr_constants(spec, f_norm(phi, spec).value)
        A = LocalOperator((-2,), np.eye(2))
        B = LocalOperator((2,), SZ)
        result = correlation_decay_check(phi, spec, vol, 1.0, A, B,
                                         constants=kh)
        assert result.connected <= 1e-12

    def test_tfim_below_envelope(self, bench8):
        phi, _, _, vol, _, _ = bench8
        spec = FSpec(6.0, R=0.5, b=1.0)
        kh = lr_constants(spec, f_norm(phi, spec).value)
        sd = ground_state(assemble_hamiltonian(phi, vol), 1.0)
        A = LocalOperator((-2,), SZ)
        for site in (0, 1, 2, 3):
            B = LocalOperator((site,), SZ)
            result = correlation_decay_check(phi, spec, vol, 1.0, A, B,
                                             constants=kh, spectral=sd)
            assert result.connected <= result.envelope + result.allowance

    def test_gap_hypothesis_failure(self):
        vol = Volume(-1, 2)
        spec = FSpec(6.0, R=0.5, b=1.0)
        zz = Interaction(2, tuple(
            Term((x, x + 1), np.kron(SZ, SZ)) for x in range(-1, 2)))
        A = LocalOperator((-1,), SX)
        B = LocalOperator((2,), SX)
        with pytest.raises(DegenerateSplit):
            correlation_decay_check(zz, spec, vol, 0.5, A, B)

    def test_requires_ordered_supports(self, bench8):
        phi, _, k, vol, _, _ = bench8
        spec = FSpec(6.0, R=0.5, b=1.0)
        with pytest.raises(ValueError):
            correlation_decay_check(phi, spec, vol, 1.0,
                                    LocalOperator((2,), SZ),
                                    LocalOperator((0,), SZ))
