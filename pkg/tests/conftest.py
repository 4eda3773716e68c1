import pytest

from thermoformal import BaseMap, BaseMapConfig, SkewProduct, load_preset


@pytest.fixture(scope="session")
def doubling() -> BaseMap:
    return BaseMap(BaseMapConfig(m=1, kind="linear", linear_factors=(2,), lambda_u=0.7, rho=0.01))


@pytest.fixture(scope="session")
def lin(doubling) -> SkewProduct:
    return SkewProduct(doubling)


@pytest.fixture(scope="session")
def pitch1() -> BaseMap:
    # one-dimensional deformation used by the per-operation examples
    return BaseMap(BaseMapConfig(m=1, kind="pitchfork", linear_factors=(2,), delta=1.05,
                                 lambda_u=0.9, rho=0.01))


@pytest.fixture(scope="session")
def pf1(pitch1) -> SkewProduct:
    return SkewProduct(pitch1)


@pytest.fixture(scope="session")
def lin_cfg():
    return load_preset("linear")


@pytest.fixture(scope="session")
def pf_cfg():
    return load_preset("pitchfork")


@pytest.fixture(scope="session")
def lin_preset(lin_cfg) -> SkewProduct:
    return lin_cfg.build_system()


@pytest.fixture(scope="session")
def pf(pf_cfg) -> SkewProduct:
    return pf_cfg.build_system()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
