import numpy as np
import pytest

from pairspec.crystals import CrystalSpec, SellmeierForm, get_crystal
from pairspec.interference import SourceSpec
from pairspec.jsa import PumpSpec


@pytest.fixture(scope="session")
def kdp():
    return get_crystal("KDP", 5.0)


@pytest.fixture(scope="session")
def bbo():
    return get_crystal("BBO", 2.0)


@pytest.fixture(scope="session")
def zerobiref():
    return get_crystal("ZEROBIREF", 5.0)


@pytest.fixture(scope="session")
def kdp_source(kdp):
    return SourceSpec(crystal=kdp, pump=PumpSpec(415.0, 4.0), flat_phase=True)


@pytest.fixture(scope="session")
def bbo_source(bbo):
    return SourceSpec(crystal=bbo, pump=PumpSpec(400.0, 4.0), flat_phase=True)


@pytest.fixture(scope="session")
def kdp_jsa(kdp_source):
    return kdp_source.build_jsa()


@pytest.fixture(scope="session")
def bbo_jsa(bbo_source):
    return bbo_source.build_jsa()


def constant_crystal(n_o=1.5, n_e=1.7, length_mm=5.0, cut_angle_deg=None):
    """Dispersionless test crystal with independent principal indices."""
    form = lambda n: SellmeierForm("constant", (n,), 0.2, 2.0)
    return CrystalSpec(
        name=f"CONST({n_o},{n_e})",
        sellmeier_o=form(n_o),
        sellmeier_e=form(n_e),
        length_mm=length_mm,
        cut_angle_deg=cut_angle_deg,
    )


def cauchy_crystal(a_o=1.5, b_o=0.02, a_e=1.6, b_e=0.03, length_mm=5.0):
    """Test crystal with n(lambda) = A + B / lambda^2 (lambda in um)."""
    return CrystalSpec(
        name="CAUCHY",
        sellmeier_o=SellmeierForm("cauchy2", (a_o, b_o), 0.2, 2.0),
        sellmeier_e=SellmeierForm("cauchy2", (a_e, b_e), 0.2, 2.0),
        length_mm=length_mm,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260823)
