"""Tests for the conic program layer: assembly checks, residuals, dumps and backend solves."""

import numpy as np
import pytest

from conftest import requires_solver
from wpcn.errors import DimensionError, DomainError, SolverFailure, WpcnError
from wpcn.utils.conic import (
    AffineExpr, ConicProgram, ConicSession, MatrixExpr, Solution, SolveStatus, default_backend, embed,
    realify, solve, supports_power_cone,
)

A = np.array([1.0, 1.0j])


def min_trace_program(rhs: float = 1.0) -> ConicProgram:
    """min Tr X  s.t.  a^H X a >= rhs, X >= 0; optimum rhs / |a|^2."""
    prog = ConicProgram()
    prog.param("rhs", rhs)
    prog.matrix_var("X", 2)
    prog.minimize(AffineExpr().trace("X", np.eye(2)))
    prog.add_linear(AffineExpr().trace("X", np.outer(A, A.conj())).const(-1.0, "rhs"), ">=", "demand")
    return prog.freeze()


# =============================================================================
# REAL EMBEDDING
# =============================================================================

def test_embedding_is_multiplicative():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    np.testing.assert_allclose(embed(a @ b), embed(a) @ embed(b), atol=1e-12)


def test_realify_preserves_spectrum():
    h = np.array([[2.0, 1j], [-1j, 1.0]])
    eig = np.linalg.eigvalsh(h)
    np.testing.assert_allclose(np.linalg.eigvalsh(realify(h)), np.repeat(eig, 2), atol=1e-12)


def test_realify_rejects_non_hermitian():
    with pytest.raises(DomainError):
        realify(np.array([[1.0, 1.0], [0.0, 1.0]]))


# =============================================================================
# ASSEMBLY
# =============================================================================

def test_trace_term_dimension_is_checked():
    prog = ConicProgram()
    prog.matrix_var("X", 2)
    prog.minimize(AffineExpr().trace("X", np.eye(3)))
    with pytest.raises(DimensionError):
        prog.freeze()


def test_undeclared_parameter_is_rejected():
    prog = ConicProgram()
    prog.scalar_var("s")
    prog.minimize(AffineExpr().scalar("s", 1.0, param="missing"))
    with pytest.raises(DomainError):
        prog.freeze()


def test_matrix_expression_shapes_are_checked():
    with pytest.raises(DimensionError):
        MatrixExpr(2).const(np.eye(3))
    with pytest.raises(DimensionError):
        MatrixExpr(2).congruence("X", np.ones((3, 2)))


def test_frozen_program_is_closed():
    prog = min_trace_program()
    with pytest.raises(WpcnError):
        prog.scalar_var("late")


def test_duplicate_variable():
    prog = ConicProgram()
    prog.matrix_var("X", 2)
    with pytest.raises(DomainError):
        prog.scalar_var("X")


def test_with_params_shares_structure():
    prog = min_trace_program(1.0)
    other = prog.with_params(rhs=2.0)
    assert other.structure_key == prog.structure_key
    assert other.params["rhs"] == 2.0 and prog.params["rhs"] == 1.0
    with pytest.raises(DomainError):
        prog.with_params(unknown=1.0)


def test_dump_and_load_keep_structure():
    prog = min_trace_program(3.0)
    restored = ConicProgram.loads(prog.dumps())
    assert restored.structure_key == prog.structure_key
    assert restored.params == prog.params
    assert [c.label for c in restored.linear] == ["demand"]


def test_loads_rejects_unknown_format():
    with pytest.raises(DomainError):
        ConicProgram.loads('{"format": "other/1"}')


# =============================================================================
# RESIDUALS
# =============================================================================

def test_residuals_of_feasible_point():
    prog = min_trace_program(1.0)
    x = np.outer(A, A.conj()) / 4.0
    res = prog.residuals({"X": x})
    assert res["demand"] <= 1e-12
    assert res["psd:X"] <= 1e-12
    assert prog.objective.evaluate({"X": x}, prog.params) == pytest.approx(0.5)


def test_residuals_of_infeasible_point():
    prog = min_trace_program(1.0)
    res = prog.residuals({"X": -np.eye(2, dtype=complex)})
    assert res["demand"] > 0
    assert res["psd:X"] > 0


def test_psd_constraint_residual():
    prog = ConicProgram()
    prog.scalar_var("s", nonneg=False)
    prog.minimize(AffineExpr().scalar("s"))
    prog.add_psd(MatrixExpr(2).scalar("s", np.eye(2)).const(-np.diag([1.0, 0.0])), "lmi")
    prog.freeze()
    assert prog.residuals({"s": np.array([2.0])})["lmi"] == 0.0
    assert prog.residuals({"s": np.array([0.5])})["lmi"] > 0


def test_solution_status_helpers():
    assert Solution(SolveStatus.OPTIMAL, objective=1.0).ok
    with pytest.raises(SolverFailure):
        Solution(SolveStatus.NUMERICAL_FAILURE, backend="SCS", diagnostics="diverged").raise_for_status()
    assert Solution(SolveStatus.INFEASIBLE).raise_for_status().status == SolveStatus.INFEASIBLE


# =============================================================================
# BACKEND SOLVES
# =============================================================================

@requires_solver
def test_solve_small_sdp():
    sol = solve(min_trace_program(1.0), tol=1e-8)
    assert sol.ok
    assert sol.objective == pytest.approx(0.5, rel=1e-5)
    assert sol.max_residual <= 1e-6
    x = sol.values["X"]
    assert np.linalg.eigvalsh(x)[0] >= -1e-7


def test_objective_scale_must_be_positive():
    prog = ConicProgram()
    prog.scalar_var("x")
    with pytest.raises(DomainError):
        prog.minimize(AffineExpr().scalar("x"), scale=0.0)


@requires_solver
def test_objective_scale_is_hidden_from_the_result():
    prog = ConicProgram()
    prog.matrix_var("X", 2)
    prog.minimize(AffineExpr().trace("X", 1e-3 * np.eye(2)), scale=1e3)
    prog.add_linear(AffineExpr().trace("X", np.eye(2)).const(-1.0), ">=", "unit_trace")
    assert prog.meta["objective_scale"] == 1e3
    sol = solve(prog.freeze())
    assert sol.ok
    assert sol.objective == pytest.approx(1e-3, rel=1e-5)
    assert ConicProgram.loads(prog.dumps()).meta["objective_scale"] == 1e3


@requires_solver
def test_session_reuses_compiled_program():
    session = ConicSession()
    prog = min_trace_program(1.0)
    first = solve(prog, session=session)
    second = solve(prog.with_params(rhs=2.0), session=session)
    assert session.misses == 1 and session.hits == 1
    assert second.objective == pytest.approx(2 * first.objective, rel=1e-5)


@requires_solver
def test_infeasible_program():
    prog = ConicProgram()
    prog.matrix_var("X", 2)
    prog.minimize(AffineExpr().trace("X", np.eye(2)))
    prog.add_linear(AffineExpr().trace("X", np.eye(2)).const(1.0), "<=", "negative_trace")
    sol = solve(prog.freeze())
    assert sol.status == SolveStatus.INFEASIBLE
    assert not sol.ok


@requires_solver
@pytest.mark.skipif(not supports_power_cone(default_backend()), reason="backend has no power cone")
def test_power_cone():
    prog = ConicProgram()
    prog.scalar_var("x")
    prog.scalar_var("z", nonneg=False)
    prog.minimize(AffineExpr().scalar("z", -1.0))
    prog.add_linear(AffineExpr().scalar("x", -1.0).const(4.0), ">=", "cap")
    # sqrt(x) >= |z|
    prog.add_power_cone(AffineExpr().scalar("x"), AffineExpr().const(1.0), AffineExpr().scalar("z"), 0.5, "root")
    sol = solve(prog.freeze())
    assert sol.ok
    assert sol.objective == pytest.approx(-2.0, rel=1e-5)


def test_solve_without_backend_reports_failure(monkeypatch):
    import wpcn.utils.conic as conic

    monkeypatch.setattr(conic, "default_backend", lambda: None)
    sol = conic.solve(min_trace_program(1.0))
    assert sol.status == SolveStatus.NUMERICAL_FAILURE
    assert "backend" in sol.diagnostics
