"""Reduced-basis generation: Gram-Schmidt, incremental chunked POD compression
with a guaranteed mean-square projection error, and the trajectory-streaming
basis generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Generator, NumericalError
from .fom import FullOrderModel
from .rb import EstimatorBuilder, RbRom, assemble_rb_rom


def gram_schmidt(vectors, gram, existing: Optional[np.ndarray] = None, drop_tol: float = 1e-10) -> np.ndarray:
    """Orthonormalize columns w.r.t. the Gram inner product, against an optional
    existing orthonormal set; two projection passes, near-dependent columns are
    dropped (post-projection norm below drop_tol times the original norm)."""
    cols = np.asarray(vectors, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    kept = []
    base = existing if existing is not None and existing.size else None
    for j in range(cols.shape[1]):
        v = cols[:, j].copy()
        orig = math.sqrt(max(v @ (gram @ v), 0.0))
        if orig == 0.0:
            continue
        blocks = [b for b in (base, np.column_stack(kept) if kept else None) if b is not None]
        for _ in range(2):
            for block in blocks:
                v = v - block @ (block.T @ (gram @ v))
        norm = math.sqrt(max(v @ (gram @ v), 0.0))
        if norm < drop_tol * orig:
            continue
        kept.append(v / norm)
    if not kept:
        return np.zeros((cols.shape[0], 0))
    return np.column_stack(kept)


@dataclass(frozen=True)
class HapodConfig:
    """Tolerances of the incremental compression.

    eps_pod bounds the final root-mean-square Gram-projection error of all fed
    vectors; omega splits the error budget between intermediate chunk PODs and
    the final one.
    """

    eps_pod: float = 1e-12
    chunk: int = 100
    omega: float = 0.75

    def __post_init__(self):
        if not self.eps_pod > 0.0:
            raise ValueError("eps_pod must be positive")
        if self.chunk < 1:
            raise ValueError("chunk size must be at least 1")
        if not 0.0 < self.omega < 1.0:
            raise ValueError("omega must lie in (0, 1)")


class IncrementalHapod:
    """Chunked POD with carried scaled modes.

    Feeding n_expected vectors in chunks and finalizing yields Gram-orthonormal
    modes with total squared projection error of all inputs bounded by
    n_expected * eps_pod**2: intermediate truncations share a
    (1 - omega) * sqrt(n) * eps budget evenly, the final one gets
    omega * sqrt(n) * eps, and the telescoping triangle inequality in the
    Gram-weighted Frobenius norm does the rest.
    """

    def __init__(self, gram, config: HapodConfig, n_expected: int):
        self.gram = gram
        self.config = config
        self.n_expected = int(n_expected)
        self.modes = np.zeros((gram.shape[0], 0))
        self.svals = np.zeros(0)
        self._buffer = []
        self.n_seen = 0
        stages = max(1, math.ceil(self.n_expected / config.chunk))
        budget = math.sqrt(self.n_expected) * config.eps_pod
        self._local_budget = (1.0 - config.omega) * budget / stages
        self._final_budget = config.omega * budget
        self._finalized = False

    @property
    def n_stored(self) -> int:
        """Full-order vectors currently held (carried modes + buffered chunk)."""
        return self.modes.shape[1] + len(self._buffer)

    def feed(self, vectors: np.ndarray):
        if self._finalized:
            raise RuntimeError("compression already finalized")
        vectors = np.asarray(vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, None]
        for j in range(vectors.shape[1]):
            self._buffer.append(vectors[:, j].copy())
            self.n_seen += 1
            if len(self._buffer) >= self.config.chunk:
                self._compress(self._local_budget)

    def finalize(self):
        if not self._finalized:
            self._compress(self._final_budget)
            self._finalized = True
        return self.modes, self.svals

    def _compress(self, budget: float):
        carried = self.modes * self.svals[None, :]
        data = [carried] if carried.size else []
        if self._buffer:
            data.append(np.column_stack(self._buffer))
        self._buffer = []
        if not data:
            return
        x = np.hstack(data)
        self.modes, self.svals = _pod(x, self.gram, budget**2)


def _pod(x: np.ndarray, gram, squared_budget: float):
    """Method-of-snapshots POD w.r.t. the Gram product; discards trailing modes
    while the discarded squared mass stays within the budget."""
    inner = x.T @ (gram @ x)
    inner = 0.5 * (inner + inner.T)
    w, v = np.linalg.eigh(inner)
    w = w[::-1]
    v = v[:, ::-1]
    w = np.clip(w, 0.0, None)
    cumulative_tail = np.concatenate([np.cumsum(w[::-1])[::-1][1:], [0.0]])
    floor = max(w[0], 0.0) * 1e-14 if w.size else 0.0
    # keep the leading modes whose removal would overdraw the budget
    keep = np.flatnonzero((cumulative_tail + w > squared_budget) & (w > floor))
    if keep.size == 0:
        return np.zeros((x.shape[0], 0)), np.zeros(0)
    m = keep.max() + 1
    svals = np.sqrt(w[:m])
    modes = (x @ v[:, :m]) / svals[None, :]
    return modes, svals


def pod_modes(vectors: np.ndarray, gram, mean_square_tol: float):
    """One-shot POD keeping enough modes for a mean-square projection error
    below mean_square_tol**2 (the dense reference the chunked variant is
    checked against)."""
    n = vectors.shape[1]
    return _pod(np.asarray(vectors, dtype=float), gram, n * mean_square_tol**2)


def save_basis(path, basis_matrix: np.ndarray):
    """Text dump: first line `N_h N_rb`, then one whitespace-separated row per DoF."""
    n, m = basis_matrix.shape
    with open(path, "w") as fh:
        fh.write(f"{n} {m}\n")
        for row in basis_matrix:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_basis(path) -> np.ndarray:
    with open(path) as fh:
        n, m = (int(tok) for tok in fh.readline().split())
        if m == 0:
            return np.zeros((n, 0))
        data = np.loadtxt(fh, ndmin=2)
    if data.shape != (n, m):
        raise ValueError("basis checkpoint shape does not match its header")
    return data


class RbGenerator(Generator):
    """Streams full-order trajectories through the chunked POD into a growing,
    nested reduced basis, and precomputes certified reduced models from it."""

    def __init__(
        self,
        fom: FullOrderModel,
        eps: float,
        hapod: HapodConfig = HapodConfig(),
        max_retries: int = 3,
    ):
        self.fom = fom
        self.eps = float(eps)
        self.hapod = hapod
        self.max_retries = max_retries
        self.mus = []
        problem = fom.problem
        self.basis = np.zeros((problem.dim, 0))
        self._builder = EstimatorBuilder(problem)
        self._rom: Optional[RbRom] = None
        self._dirty = False
        self.peak_full_vectors = 0

    @property
    def training_parameters(self) -> list:
        return list(self.mus)

    def _track(self, hapod_state: IncrementalHapod, in_flight: int):
        held = self.basis.shape[1] + hapod_state.n_stored + in_flight
        self.peak_full_vectors = max(self.peak_full_vectors, held)

    _DEFLATION = 1e-10  # relative to the raw trajectory scale

    def _stream_remains(self, mu, eps_pod: float) -> np.ndarray:
        """FOM solve streamed chunkwise: project off the current basis, compress.

        Modes carrying less than the deflation fraction of the raw trajectory
        scale are discarded: a re-visited parameter whose trajectory already
        lies in the basis must not grow it with roundoff directions.
        """
        problem = self.fom.problem
        cfg = HapodConfig(eps_pod, self.hapod.chunk, self.hapod.omega)
        state = IncrementalHapod(problem.gram, cfg, problem.time_grid.num_nodes)
        chunk = []
        raw_scale = 0.0
        for row in self.fom.iter_state(mu):
            chunk.append(row)
            self._track(state, len(chunk))
            if len(chunk) == cfg.chunk:
                raw_scale = max(raw_scale, self._feed_projected(state, chunk))
                chunk = []
        if chunk:
            raw_scale = max(raw_scale, self._feed_projected(state, chunk))
        modes, svals = state.finalize()
        self._track(state, 0)
        keep = svals > self._DEFLATION * raw_scale
        return modes[:, keep]

    def _feed_projected(self, state: IncrementalHapod, chunk: list) -> float:
        gram = self.fom.problem.gram
        x = np.column_stack(chunk)
        scale = float(np.sqrt(max(np.max(np.einsum("ij,ij->j", x, gram @ x)), 0.0)))
        if self.basis.shape[1]:
            x = x - self.basis @ (self.basis.T @ (gram @ x))
        state.feed(x)
        return scale

    def extend(self, mu) -> None:
        problem = self.fom.problem
        mu = problem.box.validate(mu)
        if any(np.array_equal(mu, seen) for seen in self.mus):
            # the training set is a set: this trajectory already went through
            # the compression, a re-solve could only add sub-floor directions
            return
        self.mus.append(mu.copy())

        u0 = problem.initial_vector(mu)
        norm0 = float(np.sqrt(max(u0 @ (problem.gram @ u0), 0.0)))
        if norm0 > 0.0:
            defect = u0 - self.basis @ (self.basis.T @ (problem.gram @ u0)) if self.basis.shape[1] else u0
            dnorm = float(np.sqrt(max(defect @ (problem.gram @ defect), 0.0)))
            if dnorm > 1e-10 * norm0:
                self._grow(gram_schmidt(u0, problem.gram, existing=self.basis))

        modes = self._stream_remains(mu, self.hapod.eps_pod)
        self._grow(gram_schmidt(modes, problem.gram, existing=self.basis))

    def _grow(self, new_columns: np.ndarray):
        if new_columns.size == 0:
            return
        self.basis = np.hstack([self.basis, new_columns])
        self._builder.add_basis_columns(new_columns)
        self._dirty = True

    def precompute(self) -> RbRom:
        if self._rom is not None and not self._dirty:
            return self._rom
        rom = assemble_rb_rom(self.fom.problem, self.basis, self._builder)

        # output-reproduction safeguard for the most recent training parameter;
        # dormant at the default eps_pod
        if self.mus and self._dirty:
            mu = self.mus[-1]
            eps_pod = self.hapod.eps_pod
            for _ in range(self.max_retries):
                est = rom.est_output(mu)
                if est <= self.eps:
                    break
                # tighten at least by half, and directly toward the shortfall
                eps_pod *= min(0.5, 0.1 * self.eps / est)
                modes = self._stream_remains(mu, eps_pod)
                grew = gram_schmidt(modes, self.fom.problem.gram, existing=self.basis)
                if grew.size:
                    self._grow(grew)
                    rom = assemble_rb_rom(self.fom.problem, self.basis, self._builder)
            else:
                if rom.est_output(mu) > self.eps:
                    raise NumericalError("enrichment failed")

        self._rom = rom
        self._dirty = False
        return rom
