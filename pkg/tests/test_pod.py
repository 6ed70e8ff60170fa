"""Basis truncation, projector algebra, and reduced-system oracles."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from podrom.errors import InvalidInputError
from podrom.linalg import SvdResult, svd_one_sided_jacobi
from podrom.ode import OdeSystem, Trajectory, integrate
from podrom.pod import (
    ErrorCurve,
    PodBasis,
    SnapshotSet,
    TruncationRule,
    apply_complement,
    apply_projector,
    build_rom,
    build_snapshot_matrix,
    collect_snapshots,
    error_curve,
    solve_rom_lifted,
    truncate_basis,
)


def svd_from_spectrum(sigmas, rank, n=None):
    """Manual SvdResult with identity singular vectors for rule tests."""
    sigmas = np.asarray(sigmas, dtype=float)
    r = sigmas.size
    n = n or r
    return SvdResult(
        left_vectors=np.eye(n)[:, :r],
        singular_values=sigmas,
        right_vectors=np.eye(r),
        numerical_rank=rank,
        rank_tolerance=0.0,
    )


def orthonormal_columns(n, l, seed=0):
    rng = np.random.default_rng(seed)
    result = svd_one_sided_jacobi(rng.standard_normal((n, l)))
    return result.left_vectors[:, :l]


def basis_from_columns(columns, source_kind="solution_only"):
    l = columns.shape[1]
    return PodBasis(
        reduced_vectors=columns,
        all_singular_values=np.linspace(2.0, 1.0, l),
        l=l,
        sigma_next=0.0,
        source_kind=source_kind,
    )


class TestSnapshotSet:
    def test_spacings_computed(self):
        snapshots = SnapshotSet(
            times=np.array([0.0, 0.5, 1.5]),
            solution_columns=np.ones((2, 3)),
        )
        assert np.array_equal(snapshots.spacings, np.array([0.5, 1.0]))
        assert snapshots.dimension == 2
        assert snapshots.count == 3

    def test_rejects_grid_not_starting_at_zero(self):
        with pytest.raises(InvalidInputError):
            SnapshotSet(times=np.array([0.1, 0.5]), solution_columns=np.ones((2, 2)))

    def test_rejects_mismatched_derivatives(self):
        with pytest.raises(InvalidInputError):
            SnapshotSet(
                times=np.array([0.0, 1.0]),
                solution_columns=np.ones((2, 2)),
                derivative_columns=np.ones((2, 3)),
            )


class TestCollectSnapshots:
    def test_constant_system(self):
        c = np.array([1.0, -2.0])
        system = OdeSystem(dimension=2, rhs=lambda t, x: np.zeros_like(x))
        snapshots = collect_snapshots(system, c, [0.0, 0.5, 1.0], 1e-8, 1e-10, True)
        for j in range(3):
            assert np.array_equal(snapshots.solution_columns[:, j], c)
        assert np.all(snapshots.derivative_columns == 0.0)

    def test_decay_columns(self):
        system = OdeSystem(dimension=1, rhs=lambda t, x: -x)
        rel = 1e-10
        snapshots = collect_snapshots(system, np.array([1.0]), [0.0, 1.0], rel, 1e-12, True)
        assert snapshots.solution_columns[0, 0] == 1.0
        assert abs(snapshots.solution_columns[0, 1] - math.exp(-1.0)) <= 10 * rel
        assert snapshots.derivative_columns[0, 0] == -1.0
        assert abs(snapshots.derivative_columns[0, 1] + math.exp(-1.0)) <= 10 * rel

    def test_without_derivatives(self):
        system = OdeSystem(dimension=1, rhs=lambda t, x: -x)
        snapshots = collect_snapshots(system, np.array([1.0]), [0.0, 1.0], 1e-8, 1e-10, False)
        assert snapshots.derivative_columns is None


class TestBuildSnapshotMatrix:
    def test_solution_kind_identity(self):
        snapshots = SnapshotSet(
            times=np.array([0.0, 1.0]),
            solution_columns=np.eye(2),
            derivative_columns=np.zeros((2, 2)),
        )
        assert np.array_equal(build_snapshot_matrix(snapshots, "Y"), np.eye(2))

    def test_combined_kind_stacks_blocks(self):
        snapshots = SnapshotSet(
            times=np.array([0.0, 1.0]),
            solution_columns=np.eye(2),
            derivative_columns=np.zeros((2, 2)),
        )
        combined = build_snapshot_matrix(snapshots, "Z")
        assert combined.shape == (2, 4)
        assert np.array_equal(combined, np.hstack((np.eye(2), np.zeros((2, 2)))))

    def test_missing_derivatives_rejected(self):
        snapshots = SnapshotSet(times=np.array([0.0, 1.0]), solution_columns=np.eye(2))
        with pytest.raises(InvalidInputError):
            build_snapshot_matrix(snapshots, "Z")

    def test_unknown_kind_rejected(self):
        snapshots = SnapshotSet(times=np.array([0.0, 1.0]), solution_columns=np.eye(2))
        with pytest.raises(InvalidInputError):
            build_snapshot_matrix(snapshots, "W")

    def test_combined_rank_at_least_solution_rank(self):
        rng = np.random.default_rng(2)
        solution = rng.standard_normal((6, 4))
        derivative = rng.standard_normal((6, 4))
        snapshots = SnapshotSet(
            times=np.array([0.0, 1.0, 2.0, 3.0]),
            solution_columns=solution,
            derivative_columns=derivative,
        )
        rank_y = svd_one_sided_jacobi(build_snapshot_matrix(snapshots, "Y")).numerical_rank
        rank_z = svd_one_sided_jacobi(build_snapshot_matrix(snapshots, "Z")).numerical_rank
        assert rank_z >= rank_y


class TestTruncateBasis:
    def test_cutoff_keeps_modes_at_or_above_epsilon(self):
        svd = svd_from_spectrum([3.0, 1.0, 1e-20], rank=2)
        basis = truncate_basis(svd, TruncationRule.cutoff(1e-2))
        assert basis.l == 2
        assert basis.sigma_next == 1e-20
        assert not basis.cutoff_saturated

    def test_fixed_full_rank_has_zero_sigma_next(self):
        svd = svd_from_spectrum([3.0, 1.0], rank=2)
        basis = truncate_basis(svd, TruncationRule.fixed(2))
        assert basis.l == 2
        assert basis.sigma_next == 0.0

    def test_cutoff_above_leading_sigma_saturates(self):
        svd = svd_from_spectrum([3.0, 1.0], rank=2)
        basis = truncate_basis(svd, TruncationRule.cutoff(10.0))
        assert basis.l == 1
        assert basis.cutoff_saturated
        assert basis.sigma_next == 1.0

    def test_fixed_beyond_rank_rejected(self):
        svd = svd_from_spectrum([3.0, 1.0, 1e-20], rank=2)
        with pytest.raises(InvalidInputError):
            truncate_basis(svd, TruncationRule.fixed(3))

    def test_zero_matrix_rejected(self):
        svd = svd_from_spectrum([0.0, 0.0], rank=0)
        with pytest.raises(InvalidInputError):
            truncate_basis(svd, TruncationRule.cutoff(1e-2))

    def test_cutoff_never_exceeds_rank(self):
        svd = svd_from_spectrum([3.0, 1.0, 1e-20], rank=2)
        basis = truncate_basis(svd, TruncationRule.cutoff(1e-30))
        assert basis.l == 2

    def test_source_kind_sets_method_tag(self):
        svd = svd_from_spectrum([3.0, 1.0], rank=2)
        basis = truncate_basis(svd, TruncationRule.fixed(1), "solution_and_derivative")
        assert basis.method_tag == "Z"

    def test_rule_requires_exactly_one_variant(self):
        with pytest.raises(InvalidInputError):
            TruncationRule(fixed_dimension=2, cutoff_epsilon=1e-3)
        with pytest.raises(InvalidInputError):
            TruncationRule()

    @settings(max_examples=40, deadline=None)
    @given(
        st.lists(
            st.floats(min_value=1e-12, max_value=1e3, allow_nan=False),
            min_size=1,
            max_size=8,
        ),
        st.floats(min_value=1e-14, max_value=1e4, allow_nan=False),
    )
    def test_cutoff_selection_property(self, values, epsilon):
        sigmas = np.sort(np.asarray(values))[::-1].copy()
        svd = svd_from_spectrum(sigmas, rank=sigmas.size)
        basis = truncate_basis(svd, TruncationRule.cutoff(epsilon))
        treated = np.append(sigmas, 0.0)
        # sigma_{l+1} < eps, and either sigma_l >= eps or the rule saturated.
        assert treated[basis.l] < epsilon or basis.cutoff_saturated
        if not basis.cutoff_saturated:
            assert treated[basis.l - 1] >= epsilon


class TestProjectors:
    def test_vector_in_span_has_zero_complement(self):
        basis = basis_from_columns(orthonormal_columns(10, 3, seed=1))
        z = np.array([1.0, -2.0, 0.5])
        x = basis.reduced_vectors @ z
        assert np.linalg.norm(apply_complement(basis, x)) <= 1e-10 * np.linalg.norm(x)

    def test_orthogonal_vector_has_zero_projection(self):
        columns = orthonormal_columns(10, 9, seed=2)
        basis = basis_from_columns(columns[:, :3])
        x = columns[:, 8]
        assert np.linalg.norm(apply_projector(basis, x)) <= 1e-10

    def test_split_reassembles_and_pythagoras(self):
        rng = np.random.default_rng(3)
        basis = basis_from_columns(orthonormal_columns(10, 3, seed=3))
        x = rng.standard_normal(10)
        px = apply_projector(basis, x)
        cx = apply_complement(basis, x)
        assert np.max(np.abs(px + cx - x)) <= 1e-14 * np.max(np.abs(x))
        lhs = np.linalg.norm(px) ** 2 + np.linalg.norm(cx) ** 2
        rhs = np.linalg.norm(x) ** 2
        assert abs(lhs - rhs) <= 1e-10 * rhs

    def test_idempotent_and_nonexpansive(self):
        rng = np.random.default_rng(4)
        basis = basis_from_columns(orthonormal_columns(12, 4, seed=4))
        for _ in range(10):
            x = rng.standard_normal(12)
            px = apply_projector(basis, x)
            ppx = apply_projector(basis, px)
            assert np.linalg.norm(ppx - px) <= 1e-10 * np.linalg.norm(x)
            assert np.linalg.norm(px) <= np.linalg.norm(x) * (1.0 + 1e-12)

    def test_dimension_mismatch(self):
        basis = basis_from_columns(orthonormal_columns(10, 3))
        with pytest.raises(InvalidInputError):
            apply_projector(basis, np.ones(9))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_pythagoras_property(self, seed):
        rng = np.random.default_rng(seed)
        basis = basis_from_columns(orthonormal_columns(8, 3, seed=5))
        x = rng.standard_normal(8)
        px = apply_projector(basis, x)
        cx = apply_complement(basis, x)
        rhs = float(x @ x)
        assert abs(float(px @ px) + float(cx @ cx) - rhs) <= 1e-10 * max(rhs, 1.0)


class TestSnapshotReconstruction:
    def test_residual_bounded_by_next_sigma_for_all_l(self):
        rng = np.random.default_rng(6)
        matrix = rng.standard_normal((8, 5)) @ np.diag([3.0, 1.0, 0.3, 0.05, 1e-9])
        svd = svd_one_sided_jacobi(matrix)
        sigma_one = svd.singular_values[0]
        for l in range(1, svd.numerical_rank + 1):
            basis = truncate_basis(svd, TruncationRule.fixed(l))
            for j in range(matrix.shape[1]):
                residual = np.linalg.norm(apply_complement(basis, matrix[:, j]))
                assert residual <= basis.sigma_next + 1e-10 * sigma_one

    def test_full_rank_basis_annihilates_columns(self):
        rng = np.random.default_rng(7)
        matrix = rng.standard_normal((9, 4))
        svd = svd_one_sided_jacobi(matrix)
        basis = truncate_basis(svd, TruncationRule.fixed(svd.numerical_rank))
        sigma_one = svd.singular_values[0]
        for j in range(matrix.shape[1]):
            residual = np.linalg.norm(apply_complement(basis, matrix[:, j]))
            assert residual <= 1e-8 * sigma_one


class TestBuildRom:
    def test_identity_basis_reproduces_rhs(self):
        system = OdeSystem(dimension=3, rhs=lambda t, x: np.sin(x) + t)
        basis = PodBasis(
            reduced_vectors=np.eye(3),
            all_singular_values=np.array([1.0, 1.0, 1.0]),
            l=3,
            sigma_next=0.0,
            source_kind="solution_only",
        )
        rom = build_rom(system, basis)
        z = np.array([0.1, -0.7, 2.0])
        assert np.array_equal(rom.rhs(0.3, z), system.rhs(0.3, z))

    def test_linear_system_reduces_to_projected_matrix(self):
        rng = np.random.default_rng(8)
        A = rng.standard_normal((6, 6))
        system = OdeSystem(dimension=6, rhs=lambda t, x: A @ x, linear_matrix=A)
        columns = orthonormal_columns(6, 2, seed=8)
        basis = basis_from_columns(columns)
        rom = build_rom(system, basis)
        reduced = columns.T @ A @ columns
        assert np.max(np.abs(rom.linear_matrix - reduced)) <= 1e-13
        for _ in range(5):
            z = rng.standard_normal(2)
            assert np.max(np.abs(rom.rhs(0.0, z) - reduced @ z)) <= 1e-12

    def test_zero_rhs_stays_zero(self):
        system = OdeSystem(dimension=4, rhs=lambda t, x: np.zeros_like(x))
        basis = basis_from_columns(orthonormal_columns(4, 2, seed=9))
        rom = build_rom(system, basis)
        assert np.all(rom.rhs(1.0, np.array([0.3, -0.4])) == 0.0)

    def test_affine_term_projected(self):
        A = -np.eye(3)
        b = lambda t: np.array([1.0, t, 0.0])
        system = OdeSystem(dimension=3, rhs=lambda t, x: A @ x + b(t), linear_matrix=A, affine_term=b)
        columns = orthonormal_columns(3, 2, seed=10)
        basis = basis_from_columns(columns)
        rom = build_rom(system, basis)
        t = 0.7
        assert np.max(np.abs(rom.affine_term(t) - columns.T @ b(t))) <= 1e-14

    def test_dimension_mismatch(self):
        system = OdeSystem(dimension=5, rhs=lambda t, x: x)
        basis = basis_from_columns(orthonormal_columns(4, 2))
        with pytest.raises(InvalidInputError):
            build_rom(system, basis)


class TestSolveRomLifted:
    def test_identity_basis_matches_full_solve(self):
        A = np.array([[0.0, 1.0], [-1.0, 0.0]])
        system = OdeSystem(dimension=2, rhs=lambda t, x: A @ x)
        basis = PodBasis(
            reduced_vectors=np.eye(2),
            all_singular_values=np.array([1.0, 1.0]),
            l=2,
            sigma_next=0.0,
            source_kind="solution_only",
        )
        x0 = np.array([1.0, 0.0])
        out = [0.5, 1.0]
        rel, abs_ = 1e-9, 1e-11
        lifted = solve_rom_lifted(system, basis, x0, out, rel, abs_)
        full = integrate(system, x0, 0.0, 1.0, rel, abs_, out)
        for j in range(len(out)):
            scale = rel * np.linalg.norm(full.states[j]) + abs_
            assert np.linalg.norm(lifted.states[j] - full.states[j]) <= 10.0 * scale

    def test_invariant_subspace_is_captured_exactly(self):
        # A maps span(U) into itself and x0 lies in span(U), so the reduced
        # solve reproduces the full dynamics up to integration error.
        full_set = orthonormal_columns(6, 6, seed=11)
        U = full_set[:, :2]
        W = full_set[:, 2:]
        B = np.array([[-0.5, 0.3], [0.0, -0.2]])
        C = -np.diag([1.0, 2.0, 0.5, 1.5])
        A = U @ B @ U.T + W @ C @ W.T
        system = OdeSystem(dimension=6, rhs=lambda t, x: A @ x, linear_matrix=A)
        basis = basis_from_columns(U)
        x0 = U @ np.array([1.0, -0.5])
        out = [0.25, 0.5, 1.0]
        lifted = solve_rom_lifted(system, basis, x0, out, 1e-10, 1e-12)
        full = integrate(system, x0, 0.0, 1.0, 1e-10, 1e-12, out)
        assert np.max(np.abs(lifted.states - full.states)) <= 1e-8


class TestErrorCurve:
    def test_identical_trajectories_give_zero(self):
        traj = Trajectory(times=np.array([0.0, 1.0]), states=np.ones((2, 3)))
        curve = error_curve(traj, traj, "Y", 0.5, 2, 0.0)
        assert np.all(curve.norms == 0.0)
        assert curve.max_norm == 0.0

    def test_constant_offset(self):
        times = np.array([0.0, 0.5, 1.0])
        base = np.zeros((3, 2))
        offset = np.array([3.0, 4.0])
        a = Trajectory(times=times, states=base)
        b = Trajectory(times=times, states=base + offset)
        curve = error_curve(a, b, "Z", 0.5, 1, 0.1)
        assert np.allclose(curve.norms, 5.0)
        assert curve.method_tag == "Z"
        assert curve.l_used == 1
        assert curve.sigma_next_used == 0.1

    def test_grid_mismatch_rejected(self):
        a = Trajectory(times=np.array([0.0, 1.0]), states=np.zeros((2, 2)))
        b = Trajectory(times=np.array([0.0, 2.0]), states=np.zeros((2, 2)))
        with pytest.raises(InvalidInputError):
            error_curve(a, b, "Y", 0.5, 1, 0.0)

    def test_curve_validation(self):
        with pytest.raises(InvalidInputError):
            ErrorCurve(
                times=np.array([0.0, 1.0]),
                norms=np.array([-1.0, 0.0]),
                method_tag="Y",
                delta=0.5,
                l_used=1,
                sigma_next_used=0.0,
            )
        with pytest.raises(InvalidInputError):
            ErrorCurve(
                times=np.array([0.0, 1.0]),
                norms=np.array([0.0, 0.0]),
                method_tag="X",
                delta=0.5,
                l_used=1,
                sigma_next_used=0.0,
            )


class TestPodBasisValidation:
    def test_rejects_non_orthonormal_columns(self):
        with pytest.raises(InvalidInputError):
            PodBasis(
                reduced_vectors=np.ones((4, 2)),
                all_singular_values=np.array([2.0, 1.0]),
                l=2,
                sigma_next=0.0,
                source_kind="solution_only",
            )

    def test_rejects_unsorted_spectrum(self):
        with pytest.raises(InvalidInputError):
            PodBasis(
                reduced_vectors=np.eye(3)[:, :2],
                all_singular_values=np.array([1.0, 2.0]),
                l=2,
                sigma_next=0.0,
                source_kind="solution_only",
            )

    def test_rejects_unknown_source_kind(self):
        with pytest.raises(InvalidInputError):
            PodBasis(
                reduced_vectors=np.eye(2),
                all_singular_values=np.array([1.0, 0.5]),
                l=2,
                sigma_next=0.0,
                source_kind="mixed",
            )
