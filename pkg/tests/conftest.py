import numpy as np
import pytest

from spincert import models
from spincert.chain import DensePropagator, Volume
from spincert.fnorm import FSpec, f_norm, restrict
from spincert.lrcert import lr_constants
from spincert.specflow import weight_function


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def weight_unit():
    return weight_function(1.0)


@pytest.fixture(scope="session")
def weight_two():
    return weight_function(2.0)


class Tfim12:
    """Shared 12-site transverse-field Ising workbench (field 2)."""

    def __init__(self):
        self.volume = Volume(-5, 6)
        self.phi = models.tfim(self.volume.sites, field=2.0)
        self.spec = FSpec(6.0)
        self.spec_stretched = FSpec(6.0, R=0.5, b=1.0)
        self.constants = lr_constants(self.spec, f_norm(self.phi, self.spec).value)
        self.constants_stretched = lr_constants(
            self.spec_stretched, f_norm(self.phi, self.spec_stretched).value)
        self._prop = None
        self._prop_cut = None

    @property
    def propagator(self):
        if self._prop is None:
            self._prop = DensePropagator(self.phi, self.volume)
        return self._prop

    @property
    def propagator_cut(self):
        if self._prop_cut is None:
            self._prop_cut = DensePropagator(
                restrict(self.phi, "decoupled"), self.volume)
        return self._prop_cut


@pytest.fixture(scope="session")
def tfim12():
    return Tfim12()
