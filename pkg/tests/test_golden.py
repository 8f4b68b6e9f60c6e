"""Closed-form reference instances at reduced resolution (full runs live in the acceptance suite)."""
import pytest

from palm_transport import golden


@pytest.mark.parametrize("name,kwargs", [
    ("interval", {"resolution": 400}),
    ("z-line", {"resolution": 550}),
    ("z-plus-r", {"resolution": 120}),
    ("half-lines", {"resolution": 300}),
    ("z-cross-r", {"resolution": 40}),
])
def test_example_passes(name, kwargs):
    res = golden.run_example(name, **kwargs)
    assert res.passed, res.line()
    assert res.line().startswith("PASS: ")


def test_interval_band_constant():
    assert golden.INTERVAL_BAND == pytest.approx(0.190983, abs=1e-6)


def test_unknown_example():
    with pytest.raises(KeyError):
        golden.run_example("nope")


def test_z_line_with_missing_atom_is_unbalanced():
    # removing an integer leaves mass nowhere to go: no longer balancing
    res = golden.z_line(resolution=550, missing=(3,))
    assert res.passed and not res.metrics["balance"]["balanced"]


def test_z_cross_r_tie_resolutions():
    # at res 60, 1.25 / h is a half-integer: whole rows of cells sit on the slanted
    # edge, receive tie-split values, and the whole-row metric counts them as misses
    assert not golden.z_cross_r(resolution=60).passed
