"""Unit-modulus RIS phase search that zeroes a prescribed set of paths.

Two alternating-projection solvers are provided. Both alternate between the
linear feasible subspace ``{v : A^T v = 0}`` and the unit-modulus torus
``{|v_i| = 1}``. The improved variant first strips the radial component of
the correction (projecting it onto the tangent space of the torus at the
current iterate) and takes a doubled step before renormalising.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from riscache.channel import ChannelRealization

DEFAULT_TOLERANCE = 1e-10
DEFAULT_MAX_ITERATIONS = 500
CONDITION_LIMIT = 1e12
DB_FLOOR = 1e-300
ZERO_PERTURBATION = 1e-12
UNIT_MODULUS_ATOL = 1e-12


class RankDeficiencyError(ValueError):
    """The path matrix has (numerically) dependent columns."""


class InfeasibleProblemError(ValueError):
    """More paths requested than RIS units available."""


def to_db(linear: float) -> float:
    return 10.0 * math.log10(max(float(linear), DB_FLOOR))


@dataclass(frozen=True)
class PathSet:
    """Ordered ``(user k, antenna j)`` pairs whose cascaded gain must vanish."""

    paths: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        paths = tuple((int(k), int(j)) for k, j in self.paths)
        seen = set()
        for p in paths:
            if p in seen:
                raise ValueError(f"duplicate path (k={p[0]}, j={p[1]})")
            if p[0] < 0 or p[1] < 0:
                raise ValueError(f"negative index in path {p}")
            seen.add(p)
        object.__setattr__(self, "paths", paths)

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)

    def check_against(self, ch: ChannelRealization) -> None:
        for k, j in self.paths:
            if k >= ch.K:
                raise IndexError(f"path user index k={k} out of range [0, {ch.K})")
            if j >= ch.L:
                raise IndexError(f"path antenna index j={j} out of range [0, {ch.L})")


def interference_channel_paths(K: int) -> PathSet:
    """All cross paths of the square ``K``-user interference channel (``j != k``)."""
    return PathSet(tuple((k, j) for k in range(K) for j in range(K) if j != k))


def default_ris_units(num_paths: int, margin: float = 1.0) -> int:
    """RIS size rule of thumb: ``2 p`` units, scaled by ``margin``."""
    return int(math.ceil(2 * num_paths * margin))


@dataclass
class NullingProblem:
    A: np.ndarray
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=complex)
        if self.A.ndim != 2:
            raise ValueError("A must be a G x p matrix")
        G, p = self.A.shape
        if p > G:
            raise InfeasibleProblemError(f"{p} paths cannot be nulled with {G} RIS units")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @property
    def G(self) -> int:
        return self.A.shape[0]

    @property
    def num_paths(self) -> int:
        return self.A.shape[1]

    def interference(self, v: np.ndarray) -> float:
        return float(np.sum(np.abs(self.A.T @ v) ** 2))


def build_path_matrix(
    ch: ChannelRealization,
    ps: PathSet,
    tolerance: float = DEFAULT_TOLERANCE,
    max_iterations: int = DEFAULT_MAX_ITERATIONS,
) -> NullingProblem:
    ps.check_against(ch)
    if len(ps) > ch.G:
        raise InfeasibleProblemError(
            f"{len(ps)} paths cannot be nulled with {ch.G} RIS units"
        )
    if len(ps) == 0:
        A = np.zeros((ch.G, 0), dtype=complex)
    else:
        ks = np.array([k for k, _ in ps])
        js = np.array([j for _, j in ps])
        A = ch.h_T[:, js] * ch.h_R[:, ks]
    return NullingProblem(A, tolerance, max_iterations)


@dataclass
class ConvergenceTrace:
    """Interference power recorded at iteration 0 and after every update."""

    linear: list[float] = field(default_factory=list)
    converged: bool = False
    perturbations: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.linear) - 1, 0)

    @property
    def db(self) -> list[float]:
        return [to_db(x) for x in self.linear]

    @property
    def final_db(self) -> float:
        return to_db(self.linear[-1])

    def iterations_to(self, threshold_db: float) -> int | None:
        """First iteration whose interference is at or below ``threshold_db``."""
        for i, x in enumerate(self.linear):
            if to_db(x) <= threshold_db:
                return i
        return None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iteration", "interference_linear", "interference_db"])
        for i, x in enumerate(self.linear):
            writer.writerow([i, repr(float(x)), repr(to_db(x))])
        return buf.getvalue()


def _gram_solver(A: np.ndarray) -> np.ndarray:
    """Return ``A* (A^T A*)^{-1}`` (G x p), guarding the condition number."""
    gram = A.T @ A.conj()
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise RankDeficiencyError(
            f"A^T A* is ill-conditioned (cond={cond:.3e}); too many paths or degenerate channel"
        )
    # B gram = A*  <=>  gram^T B^T = A^H
    return np.linalg.solve(gram.T, A.conj().T).T


def project_feasible_subspace(v, A) -> np.ndarray:
    """Closest vector to ``v`` with ``A^T w = 0``."""
    v = np.asarray(v, dtype=complex)
    A = np.asarray(A, dtype=complex)
    if A.shape[1] == 0:
        return v.copy()
    B = _gram_solver(A)
    return v - B @ (A.T @ v)


def project_unit_modulus(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    if np.any(mag == 0):
        idx = int(np.flatnonzero(mag == 0)[0])
        raise ValueError(f"entry {idx} is zero; unit-modulus projection undefined")
    return v / mag


def random_phase_vector(G: int, seed=None) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, G))


def _normalise(v_tilde: np.ndarray) -> tuple[np.ndarray, int]:
    mag = np.abs(v_tilde)
    zero = mag == 0
    n = int(zero.sum())
    if n:
        v_tilde = v_tilde.copy()
        v_tilde[zero] += ZERO_PERTURBATION
        mag = np.abs(v_tilde)
    return v_tilde / mag, n


def _check_start(prob: NullingProblem, v0) -> np.ndarray:
    v = np.asarray(v0, dtype=complex).copy()
    if v.shape != (prob.G,):
        raise ValueError(f"v0 has shape {v.shape}, expected ({prob.G},)")
    if not np.allclose(np.abs(v), 1.0, rtol=0, atol=1e-9):
        raise ValueError("v0 must have unit-modulus entries")
    return v / np.abs(v)


Step = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _iterate(prob: NullingProblem, v0, step: Step) -> tuple[np.ndarray, ConvergenceTrace]:
    v = _check_start(prob, v0)
    A = prob.A
    trace = ConvergenceTrace()
    if prob.num_paths == 0:
        trace.linear.append(0.0)
        trace.converged = True
        return v, trace
    B = _gram_solver(A)
    At = np.ascontiguousarray(A.T)
    tau = prob.tolerance
    z = At @ v
    power = float(np.vdot(z, z).real)
    trace.linear.append(power)
    for _ in range(prob.max_iterations):
        if power <= tau:
            break
        y = B @ z
        v, n = _normalise(step(v, y))
        trace.perturbations += n
        z = At @ v
        power = float(np.vdot(z, z).real)
        trace.linear.append(power)
    trace.converged = power <= tau
    return v, trace


def _baseline_step(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    return v - y


def _tangent_step(v: np.ndarray, y: np.ndarray) -> np.ndarray:
    # drop the radial part of y at v, then take a doubled step
    m = y - (v.conj() * y).real * v
    return v - 2.0 * m


def baseline_alternating_projection(prob: NullingProblem, v0) -> tuple[np.ndarray, ConvergenceTrace]:
    """Plain alternation ``v <- P_torus(P_subspace(v))``."""
    return _iterate(prob, v0, _baseline_step)


def improved_alternating_projection(prob: NullingProblem, v0) -> tuple[np.ndarray, ConvergenceTrace]:
    """Tangent-space variant with a doubled step.

    Each update computes the component ``y`` of ``v`` orthogonal to the
    feasible subspace, removes its radial part ``Re(conj(v) * y) * v`` and
    moves ``v - 2 m`` before renormalising every entry to unit modulus.
    Entries that land exactly on zero are nudged by ``1e-12`` and counted in
    ``trace.perturbations``.
    """
    return _iterate(prob, v0, _tangent_step)


ALGORITHMS = {
    "baseline": baseline_alternating_projection,
    "improved": improved_alternating_projection,
}


def interference_power(ch: ChannelRealization, v, ps: PathSet) -> tuple[float, float]:
    """Total ``sum |a_{k,j}^T v|^2`` over ``ps`` as (linear, dB)."""
    v = np.asarray(v, dtype=complex)
    if v.shape != (ch.G,):
        raise ValueError(f"phase vector has shape {v.shape}, expected ({ch.G},)")
    ps.check_against(ch)
    if len(ps) == 0:
        return 0.0, to_db(0.0)
    gains = ch.effective_matrix(v)
    ks = [k for k, _ in ps]
    js = [j for _, j in ps]
    linear = float(np.sum(np.abs(gains[ks, js]) ** 2))
    return linear, to_db(linear)


def solve_with_restarts(
    prob: NullingProblem,
    v0,
    restarts: int = 0,
    seed=None,
    algorithm: str = "improved",
) -> tuple[np.ndarray, ConvergenceTrace, int]:
    """Run a solver, re-drawing ``v0`` up to ``restarts`` times on failure.

    Returns the best iterate, its trace, and the total iteration count over
    all attempts.
    """
    solver = ALGORITHMS[algorithm]
    rng = np.random.default_rng(seed)
    best_v, best = solver(prob, v0)
    total = best.iterations
    for _ in range(restarts):
        if best.converged:
            break
        v, tr = solver(prob, random_phase_vector(prob.G, rng))
        total += tr.iterations
        if tr.converged or tr.linear[-1] < best.linear[-1]:
            best_v, best = v, tr
    return best_v, best, total


def write_trace_csv(path, trace: ConvergenceTrace) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(trace.to_csv())


def paths_from_pairs(pairs: Iterable[Sequence[int]]) -> PathSet:
    return PathSet(tuple((int(k), int(j)) for k, j in pairs))
