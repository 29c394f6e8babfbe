import numpy as np
import pytest
import scipy.sparse as sp

ACCEPTANCE_LINES = []


def record_acceptance(line: str):
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

from certrom import (
    AffineFunctional,
    AffineOperator,
    FomProblem,
    FunctionalComponent,
    HeatSquareConfig,
    OperatorComponent,
    ParameterBox,
    TimeGrid,
    build_heat_square,
)


@pytest.fixture(scope="session")
def heat_problem():
    return build_heat_square(HeatSquareConfig())


@pytest.fixture(scope="session")
def small_reactive_problem():
    from certrom import ReactiveFlowConfig, build_reactive_flow

    return build_reactive_flow(ReactiveFlowConfig(nx=20, ny=8, num_time_nodes=101))


def scalar_problem(a=1.0, load=0.0, u0=1.0, num_nodes=11, t_end=1.0):
    """One-DoF analogue: m = 1, a(.,.;mu) = a * mu_0, l = load; useful for
    closed-form recursions."""
    mat = sp.csr_matrix(np.array([[a]]))
    eye = sp.csr_matrix(np.array([[1.0]]))
    op = AffineOperator(
        (OperatorComponent(lambda mu: float(mu[0]), mat, symmetric=True, positive=True),)
    )
    comps = ()
    if load != 0.0:
        comps = (FunctionalComponent(lambda mu: 1.0, np.array([load])),)
    rhs = AffineFunctional(comps, 1)
    box = ParameterBox(np.array([0.1]), np.array([10.0]))
    return FomProblem(
        operator=op,
        mass=eye,
        rhs=rhs,
        output=np.array([1.0]),
        time_grid=TimeGrid(t_end, num_nodes),
        gram=mat.copy(),
        mu_bar=np.array([1.0]),
        box=box,
        initial=np.array([u0]),
        parameter_names=("scale",),
    )
