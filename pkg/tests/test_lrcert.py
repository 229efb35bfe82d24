import math

import numpy as np
import pytest
from scipy.stats import spearmanr

from spincert import models
from spincert.chain import Volume
from spincert.errors import BadGeometry, BetaTooSmall
from spincert.fnorm import FSpec, f_eval, f_norm, restrict
from spincert.lrcert import (AnnulusGeometry, DisjointGeometry, certify_lr,
                             cached_convolution_constant, lr_bound_annulus,
                             lr_bound_disjoint, lr_constants)


@pytest.fixture(scope="module")
def tfim10():
    volume = Volume(-4, 5)
    phi = models.tfim(volume.sites, field=1.0)
    spec = FSpec(4.0)
    constants = lr_constants(spec, f_norm(phi, spec).value)
    return phi, spec, constants, volume


class TestConstants:
    def test_formulas_recomputable(self):
        spec = FSpec(4.0)
        c = cached_convolution_constant(spec)
        k = lr_constants(spec, 2.5)
        assert k.kappa == pytest.approx(16.0 / (c * (4.0 / 2 - 1) ** 2))
        assert k.nu == pytest.approx(2 * 2.5 * c)

    def test_beta_six(self):
        spec = FSpec(6.0)
        c = cached_convolution_constant(spec)
        k = lr_constants(spec, 1.0)
        assert k.kappa == pytest.approx(16.0 / (c * 4.0))

    def test_free_dynamics(self):
        k = lr_constants(FSpec(4.0), 0.0)
        assert k.nu == 0.0
        assert lr_bound_disjoint(k, FSpec(4.0), 3, 1.0) == 0.0

    def test_beta_too_small(self):
        with pytest.raises(BetaTooSmall):
            lr_constants(FSpec(2.0), 1.0)


class TestBounds:
    def test_zero_time(self):
        k = lr_constants(FSpec(4.0), 1.0)
        assert lr_bound_annulus(k, FSpec(4.0), 4, 2, 1, 1, 0.0) == 0.0
        assert lr_bound_disjoint(k, FSpec(4.0), 2, 0.0) == 0.0

    def test_zero_norm(self):
        k = lr_constants(FSpec(4.0), 1.0)
        assert lr_bound_annulus(k, FSpec(4.0), 4, 2, 1, 1, 1.0, 0.0, 1.0) == 0.0

    def test_annulus_formula_arithmetic(self):
        spec = FSpec(6.0)
        k = lr_constants(spec, 1.0)
        got = lr_bound_annulus(k, spec, n=5, m=4, c=3, p=3, t=1.0)
        expected = k.kappa * math.expm1(k.nu) / 4.0 ** 4
        assert got == pytest.approx(expected, rel=1e-12)

    def test_disjoint_formula_arithmetic(self):
        spec = FSpec(5.0)
        k = lr_constants(spec, 1.0)
        got = lr_bound_disjoint(k, spec, 4, 0.5)
        expected = k.kappa * math.expm1(k.nu * 0.5) * f_eval(spec.shifted(-2), 4)
        assert got == pytest.approx(expected, rel=1e-12)

    def test_monotone_in_distance(self):
        spec = FSpec(5.0)
        k = lr_constants(spec, 1.0)
        vals = [lr_bound_disjoint(k, spec, d, 0.5) for d in range(1, 30)]
        assert all(a > b for a, b in zip(vals, vals[1:]))
        assert vals[-1] < vals[0] * 1e-3

    def test_geometry_validation(self):
        k = lr_constants(FSpec(4.0), 1.0)
        with pytest.raises(BadGeometry):
            lr_bound_annulus(k, FSpec(4.0), 3, 3, 1, 1, 0.5)
        with pytest.raises(BadGeometry):
            lr_bound_annulus(k, FSpec(4.0), 4, 2, 2, 1, 0.5)
        with pytest.raises(BadGeometry):
            lr_bound_disjoint(k, FSpec(4.0), 0, 0.5)
        with pytest.raises(BadGeometry):
            DisjointGeometry((0, 1), (1, 2))


class TestCertify:
    def test_decoupled_dynamics_commute_across_cut(self, tfim10):
        phi, spec, constants, volume = tfim10
        decoupled = restrict(phi, "decoupled")
        certs = certify_lr(decoupled, spec,
                           [DisjointGeometry((-1, 0), (1, 2))], [0.5],
                           samples=1, seed=3, volume=volume,
                           constants=constants)
        assert certs[0].measured < 1e-10

    def test_annulus_grid_no_violations(self, tfim10):
        phi, spec, constants, volume = tfim10
        geometries = [AnnulusGeometry(m=2, n=4, c=1, p=1),
                      AnnulusGeometry(m=3, n=4, c=2, p=1)]
        certs = certify_lr(phi, spec, geometries, [0.25, 0.5, 1.0],
                           samples=1, seed=11, volume=volume,
                           constants=constants)
        assert len(certs) == 6
        assert all(c.ratio <= 1.0 for c in certs)

    def test_power_law_disjoint(self):
        volume = Volume(-4, 5)
        spec = FSpec(6.0)
        phi = models.power_law_interaction(volume.sites, decay=6.0, seed=5)
        constants = lr_constants(spec, f_norm(phi, spec).value)
        certs = certify_lr(phi, spec,
                           [DisjointGeometry((-4, -3), (-1, 0)),
                            DisjointGeometry((-4,), (1, 2))],
                           [0.25, 0.5], samples=1, seed=2, volume=volume,
                           constants=constants)
        assert all(c.ratio <= 1.0 for c in certs)

    def test_deterministic_under_seed(self, tfim10):
        phi, spec, constants, volume = tfim10
        geo = [AnnulusGeometry(m=2, n=4, c=1, p=1)]
        a = certify_lr(phi, spec, geo, [0.5], 2, 13, volume,
                       constants=constants)
        b = certify_lr(phi, spec, geo, [0.5], 2, 13, volume,
                       constants=constants)
        assert a[0].measured == b[0].measured
        assert a[0].bound == b[0].bound

    def test_distance_trend_spearman(self, tfim10):
        # Measured commutators decay with distance: rank correlation is
        # strongly negative over >= 20 grid points.
        phi, spec, constants, volume = tfim10
        geometries = [DisjointGeometry((-4, -3), (-3 + d,))
                      for d in range(1, 8)]
        certs = certify_lr(phi, spec, geometries, [0.2, 0.35, 0.5],
                           samples=1, seed=17, volume=volume,
                           constants=constants)
        assert len(certs) >= 20
        dists = [c.dist for c in certs]
        measured = [c.measured for c in certs]
        rho, pvalue = spearmanr(dists, measured)
        assert rho < 0
        assert pvalue < 0.01

    def test_support_independence(self, tfim10):
        # Log-ratios do not grow with the support size of A at fixed
        # buffers: regression slope <= 0.05.
        phi, spec, constants, volume = tfim10
        geometries = [AnnulusGeometry(m=2, n=4, c=1, p=1, support_size=k)
                      for k in (1, 2, 3, 4, 5)] \
            + [AnnulusGeometry(m=2, n=4, c=1, p=1)]
        certs = certify_lr(phi, spec, geometries, [0.25, 0.5], samples=1,
                           seed=23, volume=volume, constants=constants)
        sizes = np.array([c.support_size for c in certs], dtype=float)
        logs = np.log([max(c.ratio, 1e-300) for c in certs])
        slope = np.polyfit(sizes, logs, 1)[0]
        assert slope <= 0.05

    def test_kappa_shared_across_geometries(self, tfim10):
        # One LRConstants instance certifies the whole grid: no per-cell
        # refitting happens anywhere in the harness.
        phi, spec, constants, volume = tfim10
        geometries = [AnnulusGeometry(m=2, n=3, c=1, p=1),
                      AnnulusGeometry(m=2, n=4, c=1, p=2),
                      AnnulusGeometry(m=3, n=4, c=2, p=1)]
        certs = certify_lr(phi, spec, geometries, [0.3], samples=1, seed=29,
                           volume=volume, constants=constants)
        assert all(c.ratio <= 1.0 for c in certs)

    def test_volume_probe_records_difference(self, tfim10):
        phi_small = models.tfim(Volume(-2, 3).sites, field=1.0)
        spec = FSpec(4.0)
        constants = lr_constants(spec, f_norm(phi_small, spec).value)
        phi_big = models.tfim(Volume(-4, 5).sites, field=1.0)
        certs = certify_lr(phi_big, spec, [DisjointGeometry((-2,), (1,))],
                           [0.3], samples=1, seed=5, volume=Volume(-2, 3),
                           constants=constants, volume_probe=True)
        assert math.isfinite(certs[0].volume_delta)
        assert certs[0].volume_delta < 0.1
