"""Full order model: implicit Euler time stepping of the assembled parabolic system."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import Model, NumericalError, OutputSignal, ParameterBox, TimeGrid, Trajectory
from .fem import AffineFunctional, AffineOperator, DirichletLifting, StructuredGrid


@dataclass(frozen=True)
class FomProblem:
    """The assembled (already shifted) parabolic problem.

    The state lives on the homogeneous subspace: constrained DoFs stay zero,
    the physical solution is state + lifting. The output vector is the
    constrained functional; `output_shift` carries s(lifting).
    """

    operator: AffineOperator
    mass: sp.csr_matrix
    rhs: AffineFunctional
    output: np.ndarray
    time_grid: TimeGrid
    gram: sp.csr_matrix
    mu_bar: np.ndarray
    box: ParameterBox
    initial: Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]
    output_shift: float = 0.0
    lifting: Optional[DirichletLifting] = None
    grid: Optional[StructuredGrid] = None
    parameter_names: tuple = ()

    @property
    def dim(self) -> int:
        return self.operator.dim

    def initial_vector(self, mu) -> np.ndarray:
        u0 = self.initial(mu) if callable(self.initial) else self.initial
        return np.asarray(u0, dtype=float).copy()

    def lift(self, traj: Trajectory) -> Trajectory:
        """Add the Dirichlet lifting back onto a homogeneous-space trajectory."""
        if self.lifting is None:
            return traj
        return Trajectory(traj.grid, traj.coeffs + self.lifting.values[None, :])


class FullOrderModel(Model):
    """Reference model: one sparse factorization per parameter, reused over all steps."""

    def __init__(self, problem: FomProblem):
        self.problem = problem

    def iter_state(self, mu):
        """Yield the DoF vector at each time node in order, without storing the past."""
        p = self.problem
        mu = p.box.validate(mu)
        dt = p.time_grid.dt
        system = (p.mass + dt * p.operator.assemble(mu)).tocsc()
        try:
            solver = spla.splu(system)
        except RuntimeError as exc:
            raise NumericalError("FOM step singular") from exc
        rhs_vectors = p.rhs.vectors()
        u = p.initial_vector(mu)
        yield u
        for t in p.time_grid.nodes[1:]:
            b = p.mass @ u
            if rhs_vectors.shape[1]:
                b = b + dt * (rhs_vectors @ p.rhs.coefficients(mu, t))
            u = solver.solve(b)
            if not np.all(np.isfinite(u)):
                raise NumericalError("FOM step singular")
            yield u

    def eval_state(self, mu) -> Trajectory:
        rows = list(self.iter_state(mu))
        return Trajectory(self.problem.time_grid, np.array(rows))

    def output_of(self, traj: Trajectory) -> OutputSignal:
        p = self.problem
        return OutputSignal(traj.grid, traj.coeffs @ p.output + p.output_shift)

    def eval_output(self, mu) -> OutputSignal:
        return self.output_of(self.eval_state(mu))
