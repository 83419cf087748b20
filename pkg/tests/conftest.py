import pytest

from spdcphase.dispersion import crystal_from_dict


def flat_crystal_doc(n=1.5, axes=("a", "b")):
    entry = {
        "sellmeier": {"form_id": "rational_two_pole", "coefficients": [n * n, 0, 0, 0, 0, 0],
                      "reference_temperature": 25.0},
        "thermal": {"form_id": "none", "coefficients": []},
        "wavelength_validity": [300.0, 3000.0],
    }
    return {"schema_version": 1, "name": "flat", "axes": list(axes), "temperature_validity": [0.0, 100.0],
            "dispersion": {a: entry for a in axes}}


@pytest.fixture
def flat_crystal():
    return crystal_from_dict(flat_crystal_doc())


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
