import pytest

from ldpwave.density import make_reference_density, uniform_density
from ldpwave.wavelet import build_basis


@pytest.fixture(scope="session")
def haar():
    return build_basis("Haar", 12)


@pytest.fixture(scope="session")
def db2():
    return build_basis("Daubechies2", 12)


@pytest.fixture(scope="session")
def db4():
    return build_basis("Daubechies4", 12)


@pytest.fixture(scope="session")
def f0():
    return make_reference_density()


@pytest.fixture(scope="session")
def unif():
    return uniform_density(0.0, 1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
