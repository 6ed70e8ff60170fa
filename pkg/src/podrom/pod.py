"""POD bases from trajectory snapshots and Galerkin-reduced systems.

Snapshots of a solution (and optionally of its time derivative) are stacked
into matrices, factorized, and truncated into an orthonormal basis.  The
reduced system z' = U^T f(t, U z) is built and integrated with the same
driver as the full system, and lifted back for pointwise error curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidInputError
from .linalg import SvdResult, as_matrix, as_vector
from .ode import OdeSystem, Trajectory, integrate, sample_rhs

__all__ = [
    "SnapshotSet",
    "PodBasis",
    "TruncationRule",
    "ErrorCurve",
    "collect_snapshots",
    "build_snapshot_matrix",
    "truncate_basis",
    "apply_projector",
    "apply_complement",
    "build_rom",
    "solve_rom_lifted",
    "error_curve",
]

SOURCE_KINDS = ("solution_only", "solution_and_derivative")
_METHOD_BY_SOURCE = {"solution_only": "Y", "solution_and_derivative": "Z"}


@dataclass(frozen=True)
class SnapshotSet:
    """States (and optional derivatives) sampled on an increasing grid.

    ``solution_columns`` is n x m with one column per sample time; the grid
    starts at t = 0.  ``spacings`` holds the m-1 interval lengths.
    """

    times: np.ndarray
    solution_columns: np.ndarray
    derivative_columns: Optional[np.ndarray] = None
    spacings: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise InvalidInputError("times must be 1-D with at least two entries")
        if not np.all(np.isfinite(times)):
            raise InvalidInputError("times contains non-finite entries")
        if times[0] != 0.0:
            raise InvalidInputError(f"snapshot grid must start at 0, got {times[0]!r}")
        if not np.all(np.diff(times) > 0.0):
            raise InvalidInputError("times must be strictly increasing")
        solution = as_matrix(self.solution_columns, "solution_columns")
        if solution.shape[1] != times.size:
            raise InvalidInputError(
                f"solution_columns has {solution.shape[1]} columns "
                f"for {times.size} times"
            )
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "solution_columns", solution)
        if self.derivative_columns is not None:
            derivative = as_matrix(self.derivative_columns, "derivative_columns")
            if derivative.shape != solution.shape:
                raise InvalidInputError(
                    f"derivative_columns shape {derivative.shape} does not match "
                    f"solution_columns shape {solution.shape}"
                )
            object.__setattr__(self, "derivative_columns", derivative)
        object.__setattr__(self, "spacings", np.diff(times))

    @property
    def dimension(self) -> int:
        return int(self.solution_columns.shape[0])

    @property
    def count(self) -> int:
        return int(self.times.size)


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal reduced basis plus the spectrum it was cut from.

    ``sigma_next`` is the first discarded singular value (0 when nothing
    was discarded).  ``cutoff_saturated`` flags the degenerate case where
    the requested cutoff exceeded the whole spectrum and l fell back to 1.
    """

    reduced_vectors: np.ndarray
    all_singular_values: np.ndarray
    l: int
    sigma_next: float
    source_kind: str
    cutoff_saturated: bool = False

    def __post_init__(self) -> None:
        vectors = as_matrix(self.reduced_vectors, "reduced_vectors")
        l = int(self.l)
        if l < 1 or l != vectors.shape[1]:
            raise InvalidInputError(
                f"l = {self.l} does not match basis with {vectors.shape[1]} columns"
            )
        if vectors.shape[0] < vectors.shape[1]:
            raise InvalidInputError("basis cannot have more columns than rows")
        sigmas = np.array(self.all_singular_values, dtype=float)
        if sigmas.ndim != 1 or sigmas.size == 0:
            raise InvalidInputError("all_singular_values must be a nonempty 1-D array")
        if not np.all(np.isfinite(sigmas)) or np.any(sigmas < 0.0):
            raise InvalidInputError("singular values must be finite and nonnegative")
        if np.any(np.diff(sigmas) > 0.0):
            raise InvalidInputError("singular values must be in descending order")
        sigma_next = float(self.sigma_next)
        if not sigma_next >= 0.0:
            raise InvalidInputError(f"sigma_next must be >= 0, got {self.sigma_next!r}")
        if self.source_kind not in SOURCE_KINDS:
            raise InvalidInputError(f"source_kind must be one of {SOURCE_KINDS}")
        gram = vectors.T @ vectors
        defect = np.max(np.abs(gram - np.eye(l)))
        if defect > 1e-10:
            raise InvalidInputError(
                f"basis columns are not orthonormal (defect {defect:.3e})"
            )
        object.__setattr__(self, "reduced_vectors", vectors)
        object.__setattr__(self, "all_singular_values", sigmas)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "sigma_next", sigma_next)

    @property
    def dimension(self) -> int:
        return int(self.reduced_vectors.shape[0])

    @property
    def method_tag(self) -> str:
        return _METHOD_BY_SOURCE[self.source_kind]


@dataclass(frozen=True)
class TruncationRule:
    """Either keep a fixed number of modes or cut at a spectrum threshold."""

    fixed_dimension: Optional[int] = None
    cutoff_epsilon: Optional[float] = None

    def __post_init__(self) -> None:
        have_fixed = self.fixed_dimension is not None
        have_cutoff = self.cutoff_epsilon is not None
        if have_fixed == have_cutoff:
            raise InvalidInputError(
                "exactly one of fixed_dimension and cutoff_epsilon must be set"
            )
        if have_fixed:
            l = int(self.fixed_dimension)
            if l < 1:
                raise InvalidInputError(f"fixed_dimension must be >= 1, got {l}")
            object.__setattr__(self, "fixed_dimension", l)
        else:
            eps = float(self.cutoff_epsilon)
            if not eps > 0.0:
                raise InvalidInputError(f"cutoff_epsilon must be > 0, got {eps!r}")
            object.__setattr__(self, "cutoff_epsilon", eps)

    @classmethod
    def fixed(cls, l: int) -> "TruncationRule":
        return cls(fixed_dimension=l)

    @classmethod
    def cutoff(cls, epsilon: float) -> "TruncationRule":
        return cls(cutoff_epsilon=epsilon)

    def label(self) -> str:
        if self.fixed_dimension is not None:
            return f"l={self.fixed_dimension}"
        return f"eps={self.cutoff_epsilon:g}"


@dataclass(frozen=True)
class ErrorCurve:
    """Pointwise 2-norm distance between a reference and a lifted solution."""

    times: np.ndarray
    norms: np.ndarray
    method_tag: str
    delta: float
    l_used: int
    sigma_next_used: float

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        norms = np.array(self.norms, dtype=float)
        if times.ndim != 1 or norms.shape != times.shape:
            raise InvalidInputError("times and norms must be 1-D of equal length")
        if not np.all(np.isfinite(norms)) or np.any(norms < 0.0):
            raise InvalidInputError("norms must be finite and nonnegative")
        if self.method_tag not in ("Y", "Z"):
            raise InvalidInputError(f"method_tag must be 'Y' or 'Z', got {self.method_tag!r}")
        if not float(self.delta) > 0.0:
            raise InvalidInputError("delta must be positive")
        if not float(self.sigma_next_used) >= 0.0:
            raise InvalidInputError("sigma_next_used must be >= 0")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "norms", norms)
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "l_used", int(self.l_used))
        object.__setattr__(self, "sigma_next_used", float(self.sigma_next_used))

    @property
    def max_norm(self) -> float:
        return float(np.max(self.norms))


def collect_snapshots(
    system: OdeSystem,
    x0: np.ndarray,
    snapshot_times,
    rel_tol: float,
    abs_tol: float,
    with_derivatives: bool = True,
) -> SnapshotSet:
    """Run one accurate integration and sample it on the snapshot grid."""
    times = np.array(snapshot_times, dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise InvalidInputError("snapshot_times must be 1-D with at least two entries")
    if times[0] != 0.0:
        raise InvalidInputError(f"snapshot grid must start at 0, got {times[0]!r}")
    trajectory = integrate(system, x0, 0.0, float(times[-1]), rel_tol, abs_tol, times)
    solution = np.ascontiguousarray(trajectory.states.T)
    derivatives = sample_rhs(system, trajectory) if with_derivatives else None
    return SnapshotSet(
        times=trajectory.times,
        solution_columns=solution,
        derivative_columns=derivatives,
    )


def build_snapshot_matrix(snapshots: SnapshotSet, kind: str) -> np.ndarray:
    """Stack snapshot columns: kind Y (solutions) or Z (solutions then derivatives)."""
    if kind == "Y":
        return snapshots.solution_columns.copy()
    if kind == "Z":
        if snapshots.derivative_columns is None:
            raise InvalidInputError("kind 'Z' requires derivative columns")
        return np.hstack((snapshots.solution_columns, snapshots.derivative_columns))
    raise InvalidInputError(f"kind must be 'Y' or 'Z', got {kind!r}")


def truncate_basis(
    svd: SvdResult, rule: TruncationRule, source_kind: str = "solution_only"
) -> PodBasis:
    """Cut a factorization down to a basis according to the truncation rule.

    The cutoff branch keeps every mode whose singular value is at least
    epsilon (values beyond the numerical rank count as zero); when even the
    leading value falls below epsilon the basis keeps one mode and the
    ``cutoff_saturated`` flag is set.  A fixed dimension beyond the
    numerical rank is rejected.
    """
    sigmas = svd.singular_values
    rank = svd.numerical_rank
    if rank < 1:
        raise InvalidInputError("matrix is numerically zero; no basis can be built")
    saturated = False
    if rule.fixed_dimension is not None:
        l = rule.fixed_dimension
        if l > rank:
            raise InvalidInputError(
                f"requested dimension {l} exceeds numerical rank {rank}"
            )
    else:
        kept = int(np.count_nonzero(sigmas[:rank] >= rule.cutoff_epsilon))
        l = max(kept, 1)
        saturated = kept == 0
    sigma_next = float(sigmas[l]) if l < sigmas.size else 0.0
    return PodBasis(
        reduced_vectors=svd.left_vectors[:, :l].copy(),
        all_singular_values=sigmas.copy(),
        l=l,
        sigma_next=sigma_next,
        source_kind=source_kind,
        cutoff_saturated=saturated,
    )


def apply_projector(basis: PodBasis, x: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the basis span, in factored form U (U^T x)."""
    vec = as_vector(x, "x")
    if vec.size != basis.dimension:
        raise InvalidInputError(
            f"vector length {vec.size} does not match basis dimension {basis.dimension}"
        )
    vectors = basis.reduced_vectors
    return vectors @ (vectors.T @ vec)


def apply_complement(basis: PodBasis, x: np.ndarray) -> np.ndarray:
    """Complementary projection x - U (U^T x)."""
    vec = as_vector(x, "x")
    if vec.size != basis.dimension:
        raise InvalidInputError(
            f"vector length {vec.size} does not match basis dimension {basis.dimension}"
        )
    vectors = basis.reduced_vectors
    return vec - vectors @ (vectors.T @ vec)


def build_rom(system: OdeSystem, basis: PodBasis) -> OdeSystem:
    """Galerkin-reduced system z' = U^T f(t, U z).

    When the full system carries linear metadata, the reduced matrix
    U^T A U and forcing U^T b(t) are attached to the reduced system too.
    """
    if basis.dimension != system.dimension:
        raise InvalidInputError(
            f"basis dimension {basis.dimension} does not match "
            f"system dimension {system.dimension}"
        )
    vectors = basis.reduced_vectors

    def reduced_rhs(t: float, z: np.ndarray) -> np.ndarray:
        return vectors.T @ np.asarray(system.rhs(t, vectors @ z), dtype=float)

    reduced_matrix = None
    reduced_affine = None
    if system.linear_matrix is not None:
        reduced_matrix = vectors.T @ (system.linear_matrix @ vectors)
        if system.affine_term is not None:
            full_affine = system.affine_term

            def reduced_affine(t: float) -> np.ndarray:
                return vectors.T @ np.asarray(full_affine(t), dtype=float)

    return OdeSystem(
        dimension=basis.l,
        rhs=reduced_rhs,
        linear_matrix=reduced_matrix,
        affine_term=reduced_affine,
    )


def solve_rom_lifted(
    system: OdeSystem,
    basis: PodBasis,
    x0: np.ndarray,
    output_times,
    rel_tol: float,
    abs_tol: float,
) -> Trajectory:
    """Integrate the reduced system from z(0) = U^T x0 and lift the result.

    The initial state is taken at t = 0; output times must lie in (0, T]
    or include 0 itself.
    """
    rom = build_rom(system, basis)
    start = as_vector(x0, "x0")
    if start.size != basis.dimension:
        raise InvalidInputError(
            f"x0 length {start.size} does not match basis dimension {basis.dimension}"
        )
    out = np.array(output_times, dtype=float)
    if out.ndim != 1 or out.size == 0:
        raise InvalidInputError("output_times must be a nonempty 1-D array")
    vectors = basis.reduced_vectors
    z0 = vectors.T @ start
    reduced = integrate(rom, z0, 0.0, float(out[-1]), rel_tol, abs_tol, out)
    lifted = reduced.states @ vectors.T
    return Trajectory(times=reduced.times, states=lifted)


def error_curve(
    fom: Trajectory,
    rom_lifted: Trajectory,
    tag: str,
    delta: float,
    l: int,
    sigma_next: float,
) -> ErrorCurve:
    """Pointwise Euclidean norms of the trajectory difference."""
    if fom.times.shape != rom_lifted.times.shape or not np.array_equal(
        fom.times, rom_lifted.times
    ):
        raise InvalidInputError("trajectories are on different time grids")
    if fom.states.shape != rom_lifted.states.shape:
        raise InvalidInputError(
            f"state shapes differ: {fom.states.shape} vs {rom_lifted.states.shape}"
        )
    diff = fom.states - rom_lifted.states
    norms = np.sqrt(np.sum(diff * diff, axis=1))
    return ErrorCurve(
        times=fom.times.copy(),
        norms=norms,
        method_tag=tag,
        delta=delta,
        l_used=l,
        sigma_next_used=sigma_next,
    )
