import pytest

from oqmem.builtin.materials import ALAS, GAAS, INAS, algaas, lookup
from oqmem.builtin.devices import default_stack
from oqmem.core.errors import InvalidParameterError


@pytest.mark.parametrize("name, expected", [("GaAs", GAAS), ("AlAs", ALAS), ("InAs", INAS)])
def test_lookup_named_materials(name, expected):
    assert lookup(name) is expected


@pytest.mark.parametrize("name, fraction", [("Al0.3GaAs", 0.3), ("Al.4Ga", 0.4), ("Al0.25GaAs", 0.25)])
def test_lookup_alloys(name, fraction):
    assert lookup(name) == algaas(fraction)


def test_alloy_interpolation():
    alloy = algaas(0.3)
    assert alloy.name == "Al0.3GaAs"
    assert alloy.band_offset == pytest.approx(0.65 * 1.247 * 0.3)
    assert GAAS.dielectric > alloy.dielectric > ALAS.dielectric
    assert algaas(0.0) is GAAS and algaas(1.0) is ALAS


@pytest.mark.parametrize("bad", ["Si", "Al1.5GaAs", ""])
def test_lookup_rejects_unknown(bad):
    with pytest.raises(InvalidParameterError):
        lookup(bad)


def test_alloy_fraction_range():
    with pytest.raises(InvalidParameterError):
        algaas(-0.1)


def test_default_stack_layout():
    stack = default_stack()
    assert stack.total_thickness == pytest.approx(213.0)
    assert [layer.hosts_2deg for layer in stack.layers].count(True) == 1
    assert stack.bottom_bias == 1.2


@pytest.mark.parametrize("fraction, warned", [(0.3, False), (0.45, False), (0.6, True), (1.0, False)])
def test_indirect_alloys_are_flagged(caplog, fraction, warned):
    with caplog.at_level("WARNING", logger="oqmem.builtin.materials"):
        algaas(fraction)
    assert ("direct-gap limit" in caplog.text) == warned
