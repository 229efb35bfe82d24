import numpy as np
import pytest
import scipy.linalg

from spincert import models
from spincert.chain import (DensePropagator, LocalOperator, Volume, annulus,
                            assemble_hamiltonian, commutator_norm,
                            conditional_expectation, embed, ground_state,
                            heisenberg_evolve, operator_norm, partial_trace)
from spincert.errors import (BadOrder, DegenerateSplit, DimensionMismatch,
                             SupportOutsideVolume, VolumeTooLarge)
from spincert.fnorm import Interaction, Term

SX, SY, SZ = models.SIGMA_X, models.SIGMA_Y, models.SIGMA_Z


def random_local(rng, sites, d=2):
    dim = d ** len(sites)
    raw = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return LocalOperator(tuple(sites), raw, onsite_dim=d)


class TestVolume:
    def test_basic(self):
        vol = Volume(-2, 3)
        assert len(vol) == 6
        assert vol.sites == (-2, -1, 0, 1, 2, 3)
        assert 0 in vol and 4 not in vol

    def test_ceiling(self, monkeypatch):
        monkeypatch.setenv("SPINCERT_MAX_DIM", "16")
        with pytest.raises(VolumeTooLarge):
            Volume(0, 9).check_dimension(2)
        assert Volume(0, 3).check_dimension(2) == 16


class TestAnnulus:
    def test_definition_cases(self):
        assert annulus(1, 2) == (-2, -1, 1, 2)
        assert annulus(2, 4) == (-4, -3, -2, 2, 3, 4)

    def test_bad_order(self):
        with pytest.raises(BadOrder):
            annulus(3, 3)
        with pytest.raises(BadOrder):
            annulus(0, 2)


class TestEmbed:
    def test_identity(self):
        op = LocalOperator((0,), np.eye(2))
        assert np.allclose(embed(op, Volume(-1, 1)), np.eye(8))

    def test_sigma_z_first_site(self):
        m = embed(LocalOperator((0,), SZ), Volume(0, 1))
        assert np.allclose(m, np.diag([1, 1, -1, -1]))

    def test_sigma_x_second_site(self):
        m = embed(LocalOperator((1,), SX), Volume(0, 1))
        assert np.allclose(m, np.kron(np.eye(2), SX))

    def test_noncontiguous_support(self):
        op = LocalOperator((0, 2), np.kron(SZ, SX))
        m = embed(op, Volume(0, 2))
        target = np.kron(SZ, np.kron(np.eye(2), SX))
        assert np.allclose(m, target)

    def test_support_outside(self):
        with pytest.raises(SupportOutsideVolume):
            embed(LocalOperator((5,), SZ), Volume(0, 1))


class TestOperatorNorm:
    def test_cross_method_agreement(self, rng):
        # Full SVD against the iterative route at a size both can handle.
        for _ in range(3):
            mat = rng.standard_normal((300, 300)) \
                + 1j * rng.standard_normal((300, 300))
            a = operator_norm(mat, method="svd")
            b = operator_norm(mat, method="lanczos")
            assert a == pytest.approx(b, rel=1e-9)

    def test_zero_matrix(self):
        assert operator_norm(np.zeros((2100, 2100)), method="lanczos") == 0.0

    def test_rejects_nonsquare(self):
        with pytest.raises(DimensionMismatch):
            operator_norm(np.zeros((2, 3)))


class TestAssemble:
    def test_zero_interaction(self):
        H = assemble_hamiltonian(Interaction(2, ()), Volume(0, 1))
        assert np.allclose(H, 0)

    def test_tfim_two_sites_exact_spectrum(self):
        H = assemble_hamiltonian(models.tfim([0, 1]), Volume(0, 1))
        # independent literal 4x4 construction
        direct = -np.kron(SZ, SZ) - np.kron(SX, np.eye(2)) \
            - np.kron(np.eye(2), SX)
        assert np.abs(H - direct).max() < 1e-14
        eigs = np.linalg.eigvalsh(H)
        assert eigs == pytest.approx(
            [-np.sqrt(5), -1.0, 1.0, np.sqrt(5)], abs=1e-12)

    def test_field_sum_is_diagonal_spin_sum(self):
        phi = models.onsite_field(range(3), SZ)
        H = assemble_hamiltonian(phi, Volume(0, 2))
        diag = np.zeros(8)
        for k in range(8):
            bits = [(k >> (2 - i)) & 1 for i in range(3)]
            diag[k] = sum(1 - 2 * b for b in bits)
        assert np.allclose(H, np.diag(diag))

    def test_hermitian(self):
        H = assemble_hamiltonian(models.heisenberg(range(4)), Volume(0, 3))
        assert np.abs(H - H.conj().T).max() < 1e-12

    def test_locality(self):
        # Enlarging the volume only adds terms meeting the new sites.
        phi = models.tfim(range(0, 6))
        small, big = Volume(0, 3), Volume(0, 5)
        H_small = assemble_hamiltonian(phi, small)
        H_big = assemble_hamiltonian(phi, big)
        lifted = embed(LocalOperator(small.sites, H_small), big)
        extra = H_big - lifted
        new_terms = sum(
            embed(LocalOperator(t.sites, t.at()), big)
            for t in phi.terms_within(big.sites)
            if not set(t.sites) <= set(small.sites))
        assert np.abs(extra - new_terms).max() < 1e-12


class TestHeisenbergEvolve:
    def test_zero_hamiltonian(self):
        phi = Interaction(2, ())
        A = LocalOperator((1,), SX)
        out = heisenberg_evolve(phi, Volume(0, 2), A, 1.3)
        assert np.abs(out.matrix - embed(A, Volume(0, 2))).max() < 1e-12

    def test_single_site_rotation(self):
        phi = Interaction(2, (Term((0,), SZ),))
        t = 0.7
        out = heisenberg_evolve(phi, Volume(0, 0), LocalOperator((0,), SX), t)
        target = np.cos(2 * t) * SX - np.sin(2 * t) * SY
        assert np.abs(out.matrix - target).max() < 1e-12

    def test_against_expm_propagator(self, rng):
        # Independent propagator: scipy expm instead of eigendecomposition.
        phi = models.tfim(range(8), field=1.4)
        vol = Volume(0, 7)
        A = LocalOperator((4,), SZ)
        t = 1.0
        out = heisenberg_evolve(phi, vol, A, t)
        H = assemble_hamiltonian(phi, vol)
        W = scipy.linalg.expm(1j * t * H)
        target = W @ embed(A, vol) @ W.conj().T
        assert operator_norm(out.matrix - target) < 1e-9

    def test_time_dependent_against_ode(self, rng):
        # Magnus steps against a high-accuracy ODE solve of the propagator.
        from scipy.integrate import solve_ivp
        fam = models.tfim_path(range(3), 0.5, 2.0)
        vol = Volume(0, 2)
        t = 0.8
        prop = DensePropagator(fam, vol)
        W = prop.unitary(t)

        def rhs(u, y):
            H = assemble_hamiltonian(fam, vol, u)
            return (1j * H @ y.reshape(8, 8)).reshape(-1)

        sol = solve_ivp(rhs, (0, t), np.eye(8, dtype=complex).reshape(-1),
                        rtol=1e-11, atol=1e-12)
        W_ref = sol.y[:, -1].reshape(8, 8)
        assert operator_norm(W - W_ref) < 1e-8

    def test_automorphism_and_group_law(self, rng):
        phi = models.tfim(range(8), field=1.1)
        prop = DensePropagator(phi, Volume(0, 7))
        A = embed(random_local(rng, (2, 3)), Volume(0, 7))
        B = embed(random_local(rng, (5,)), Volume(0, 7))
        t, s = 0.6, 0.4
        tau_a = prop.evolve_matrix(A, t)
        tau_b = prop.evolve_matrix(B, t)
        assert operator_norm(prop.evolve_matrix(A @ B, t)
                             - tau_a @ tau_b) < 1e-9
        assert abs(operator_norm(tau_a) - operator_norm(A)) < 1e-9
        assert operator_norm(prop.evolve_matrix(tau_a, s)
                             - prop.evolve_matrix(A, t + s)) < 1e-9

    def test_max_time_guard(self):
        phi = Interaction(2, (Term((0,), SZ),))
        with pytest.raises(ValueError):
            heisenberg_evolve(phi, Volume(0, 0), LocalOperator((0,), SX), 60.0)


class TestConditionalExpectation:
    def test_unital(self):
        vol = Volume(0, 3)
        op = LocalOperator((1, 2), np.eye(4))
        out = conditional_expectation(op, vol, [0, 1])
        assert np.allclose(embed(out, vol), np.eye(16))

    def test_traceless_elimination(self):
        vol = Volume(0, 4)
        out = conditional_expectation(LocalOperator((3,), SZ), vol, [0, 1])
        assert operator_norm(embed(out, vol)) < 1e-14

    def test_fixed_point_inside_keep(self, rng):
        vol = Volume(0, 4)
        op = random_local(rng, (1, 2))
        out = conditional_expectation(op, vol, [0, 1, 2])
        assert np.abs(out.matrix - op.matrix).max() < 1e-14

    def test_idempotent_and_contractive(self, rng):
        vol = Volume(0, 5)
        for _ in range(5):
            op = random_local(rng, (1, 2, 3))
            keep = (2, 3)
            once = conditional_expectation(op, vol, keep)
            twice = conditional_expectation(once, vol, keep)
            assert np.abs(embed(once, vol) - embed(twice, vol)).max() < 1e-12
            assert once.norm() <= op.norm() * (1 + 1e-12)

    def test_trace_duality(self, rng):
        # tr(E(A) B) = tr(A B) for B supported in the kept region.
        vol = Volume(0, 4)
        dim = 2 ** 5
        for _ in range(5):
            A = random_local(rng, (1, 2, 3))
            B = random_local(rng, (0, 2))
            keep = (0, 1, 2)
            ea = embed(conditional_expectation(A, vol, keep), vol)
            am, bm = embed(A, vol), embed(B, vol)
            assert abs(np.trace(ea @ bm) - np.trace(am @ bm)) / dim < 1e-10


class TestPartialTrace:
    def test_reduced_of_product_state(self):
        vol = Volume(0, 1)
        psi = np.kron(np.array([1, 0]), np.array([1, 1]) / np.sqrt(2))
        rho = np.outer(psi, psi.conj())
        left = partial_trace(rho, vol, [0], 2) * 2  # unnormalized reduced
        assert np.allclose(left, np.diag([1, 0]))


class TestCommutatorNorm:
    def test_pauli_algebra(self):
        assert commutator_norm(SX, SZ) == pytest.approx(2.0)

    def test_self_commutator(self, rng):
        A = rng.standard_normal((8, 8))
        assert commutator_norm(A, A) == 0.0

    def test_disjoint_supports(self):
        vol = Volume(0, 2)
        a = embed(LocalOperator((0,), SX), vol)
        b = embed(LocalOperator((2,), SY), vol)
        assert commutator_norm(a, b) < 1e-14

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            commutator_norm(np.eye(2), np.eye(4))


class TestGroundState:
    def test_two_level(self):
        sd = ground_state(np.diag([0.0, 2.0]), 1.0)
        assert sd.gap_split == (0.0, 2.0)
        assert sd.split_index == 1

    def test_zero_hamiltonian(self):
        with pytest.raises(DegenerateSplit):
            ground_state(np.zeros((4, 4)), 0.5)

    def test_tfim_paramagnet(self):
        H = assemble_hamiltonian(models.tfim(range(10), field=2.0),
                                 Volume(0, 9))
        sd = ground_state(H, 1.0)
        assert sd.split_index == 1
        assert sd.gap >= 1.0

    def test_residuals(self, rng):
        raw = rng.standard_normal((30, 30))
        H = (raw + raw.T) / 2
        sd = ground_state(H, 1e-6)
        resid = H @ sd.eigenvectors - sd.eigenvectors * sd.eigenvalues
        assert np.abs(resid).max() <= 1e-10 * operator_norm(H)


class TestRandomizedAlgebra:
    def test_fifty_instances(self, rng):
        # Acceptance-grade sweep: automorphism, group law, duality and
        # cross-method norms on randomized 6-site instances.
        vol = Volume(0, 5)
        phi = models.tfim(range(6), field=0.9)
        prop = DensePropagator(phi, vol)
        for k in range(50):
            A = embed(random_local(rng, (1, 2)), vol)
            B = embed(random_local(rng, (4,)), vol)
            t = float(rng.uniform(0.1, 1.5))
            tau_a = prop.evolve_matrix(A, t)
            tau_b = prop.evolve_matrix(B, t)
            assert operator_norm(prop.evolve_matrix(A @ B, t)
                                 - tau_a @ tau_b) < 1e-9
            assert abs(operator_norm(tau_a) - operator_norm(A)) < 1e-9
            s = float(rng.uniform(0.1, 0.9))
            assert operator_norm(prop.evolve_matrix(tau_a, s)
                                 - prop.evolve_matrix(A, t + s)) < 1e-9
            keep = (0, 1, 2, 3)
            op = random_local(rng, (2, 3, 4))
            ea = embed(conditional_expectation(op, vol, keep), vol)
            bm = embed(random_local(rng, (1, 3)), vol)
            am = embed(op, vol)
            assert abs(np.trace(ea @ bm) - np.trace(am @ bm)) / 64 < 1e-10
