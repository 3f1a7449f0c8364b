import pytest

from oqmem.builtin.devices import default_geometry
from oqmem.core.hubbard import HubbardSystem
from oqmem.core.register import ProtocolParams


@pytest.fixture(autouse=True)
def isolated_config_home(tmp_path, monkeypatch):
    # never read or write the real user config
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "xdg"))
    monkeypatch.setenv("APPDATA", str(tmp_path / "appdata"))


@pytest.fixture
def ideal_params():
    return ProtocolParams.ideal(J_OE=1.0, J_E=0.0, delta_J_O=0.0, J_23=50.0)


@pytest.fixture
def noisy_params():
    return ProtocolParams.ideal(J_OE=1.0, J_E=3.0, delta_J_O=2.0, J_23=50.0)


@pytest.fixture
def geometry():
    return default_geometry()


@pytest.fixture
def coulomb_table():
    """Point-charge-like Coulomb elements (μeV) for a device with Δ_DD ≈ −0.9 meV."""
    return {
        ("T", "T"): 20000.0, ("B", "B"): 20000.0, ("T", "B"): 11000.0,
        ("1", "1"): 4000.0, ("2", "2"): 4000.0, ("3", "3"): 4000.0,
        ("1", "2"): 1100.0, ("2", "3"): 1100.0, ("1", "3"): 560.0,
        ("T", "1"): 2790.0, ("T", "2"): 1030.0, ("T", "3"): 540.0,
        ("B", "1"): 3720.0, ("B", "2"): 1070.0, ("B", "3"): 550.0,
    }


@pytest.fixture
def hubbard_system(coulomb_table):
    return HubbardSystem.from_parameters(t_O=82.7, t_E=40.0, coulomb=coulomb_table, t_23=30.0,
                                         epsilon_O=2000.0, epsilon_E=1500.0, epsilon_23=0.0)


@pytest.fixture
def system_document():
    """JSON system definition: five Gaussian dots, tunnel amplitudes in μeV."""
    return {
        "dots": [
            {"label": "T", "center": [0.0, 0.0, 40.0], "widths": [6.0, 6.0, 2.0]},
            {"label": "B", "center": [0.0, 0.0, 30.0], "widths": [6.0, 6.0, 2.0]},
            {"label": "1", "center": [0.0, 0.0, 0.0], "widths": [15.0, 15.0, 4.0]},
            {"label": "2", "center": [100.0, 0.0, 0.0], "widths": [15.0, 15.0, 4.0]},
            {"label": "3", "center": [200.0, 0.0, 0.0], "widths": [15.0, 15.0, 4.0]},
        ],
        "tunnel": [
            {"pair": ["T", "B"], "value": 117.0},
            {"pair": ["1", "2"], "value": 56.0},
            {"pair": ["2", "3"], "value": 42.0},
        ],
        "detunings": {"O": 2000.0, "E": 1500.0, "23": 0.0},
        "dielectric": 12.9,
    }
