"""
Conic Program Module
====================
Backend-agnostic convex program representation and the solver interface.

Features:
- Hermitian PSD matrix variables and (vector) scalar variables
- Real affine objective, linear (in)equalities, LMI blocks and 3-D power cones
- Named scalar parameters so one compiled program serves a whole tau / omega search
- Complex-to-real embedding of Hermitian constraints before dispatch
- cvxpy backend (CLARABEL by default, SCS fallback) with certified statuses
- Text dump/restore of programs for golden tests

Program terms
-------------
Scalar expressions sum ``Re Tr(C X)`` terms over matrix variables, ``c * s[i]``
terms over scalar variables and constants. Matrix expressions sum congruences
``c * A X A^H``, ``s[i] * F`` terms and constant Hermitian matrices. Every term
may name a parameter whose value multiplies it.
"""

import copy
import hashlib
import json
import logging
import os
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Union

import numpy as np

from ..errors import DimensionError, DomainError, SolverFailure, WpcnError
from ..metrics import record_solve
from .codec import LAYOUT, decode_matrix, encode_matrix

logger = logging.getLogger(__name__)

try:
    import cvxpy as cp
    CVXPY_AVAILABLE = True
except ImportError:
    CVXPY_AVAILABLE = False
    print("⚠️ cvxpy not installed. Conic solves disabled. Run: pip install cvxpy clarabel scs")


# =============================================================================
# CONFIGURATION
# =============================================================================

DEFAULT_TOL = 1e-8
SDP_BACKENDS = ("CLARABEL", "SCS", "MOSEK", "CVXOPT")
POWER_CONE_BACKENDS = ("CLARABEL", "SCS", "MOSEK")
SOLVER_ENV = os.environ.get("WPCN_SOLVER", "").upper() or None
HERMITIAN_TOL = 1e-10


def available_backends() -> List[str]:
    if not CVXPY_AVAILABLE:
        return []
    installed = set(cp.installed_solvers())
    return [b for b in SDP_BACKENDS if b in installed]


def default_backend() -> Optional[str]:
    backends = available_backends()
    if SOLVER_ENV and SOLVER_ENV in backends:
        return SOLVER_ENV
    return backends[0] if backends else None


def supports_power_cone(backend: Optional[str]) -> bool:
    return backend is not None and backend.upper() in POWER_CONE_BACKENDS


# =============================================================================
# REAL EMBEDDING
# =============================================================================

def embed(a: np.ndarray) -> np.ndarray:
    """[[Re A, -Im A], [Im A, Re A]] for any complex matrix (a ring homomorphism)."""
    a = np.asarray(a, dtype=complex)
    return np.block([[a.real, -a.imag], [a.imag, a.real]])


def realify(a: np.ndarray) -> np.ndarray:
    """Real-symmetric embedding of a Hermitian matrix; A >= 0 iff realify(A) >= 0."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"realify needs a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.conj().T), initial=0.0) > HERMITIAN_TOL * scale:
        raise DomainError("matrix is not Hermitian")
    return embed(0.5 * (a + a.conj().T))


# =============================================================================
# EXPRESSIONS
# =============================================================================

@dataclass
class LinTerm:
    var: str
    coef: Union[float, np.ndarray]
    index: int = 0
    param: Optional[str] = None

    @property
    def is_trace(self) -> bool:
        return isinstance(self.coef, np.ndarray)


@dataclass
class ConstTerm:
    value: Union[float, np.ndarray]
    param: Optional[str] = None


@dataclass
class CongruenceTerm:
    var: str
    a: np.ndarray
    coef: float = 1.0
    param: Optional[str] = None


@dataclass
class ScaledTerm:
    var: str
    f: np.ndarray
    index: int = 0
    param: Optional[str] = None


def _factor(param: Optional[str], params: Dict[str, float]) -> float:
    return 1.0 if param is None else float(params[param])


class AffineExpr:
    """Real affine scalar expression."""

    def __init__(self):
        self.terms: List[LinTerm] = []
        self.constants: List[ConstTerm] = []

    def trace(self, var: str, coef: np.ndarray, param: Optional[str] = None) -> "AffineExpr":
        self.terms.append(LinTerm(var, np.asarray(coef, dtype=complex), 0, param))
        return self

    def scalar(self, var: str, coef: float = 1.0, index: int = 0, param: Optional[str] = None) -> "AffineExpr":
        self.terms.append(LinTerm(var, float(coef), int(index), param))
        return self

    def const(self, value: float, param: Optional[str] = None) -> "AffineExpr":
        self.constants.append(ConstTerm(float(value), param))
        return self

    def extend(self, other: "AffineExpr", factor: float = 1.0) -> "AffineExpr":
        for t in other.terms:
            self.terms.append(LinTerm(t.var, t.coef * factor, t.index, t.param))
        for c in other.constants:
            self.constants.append(ConstTerm(c.value * factor, c.param))
        return self

    def references(self) -> set:
        return {t.var for t in self.terms}

    def parameters(self) -> set:
        return {t.param for t in self.terms if t.param} | {c.param for c in self.constants if c.param}

    def _term_values(self, values: Dict[str, np.ndarray], params: Dict[str, float]) -> List[float]:
        out = []
        for t in self.terms:
            x = values[t.var]
            if t.is_trace:
                v = float(np.real(np.sum(t.coef * np.asarray(x).T)))
            else:
                v = t.coef * float(np.atleast_1d(x)[t.index])
            out.append(v * _factor(t.param, params))
        out.extend(c.value * _factor(c.param, params) for c in self.constants)
        return out

    def evaluate(self, values: Dict[str, np.ndarray], params: Dict[str, float]) -> float:
        return float(sum(self._term_values(values, params)))

    def magnitude(self, values: Dict[str, np.ndarray], params: Dict[str, float]) -> float:
        return float(sum(abs(v) for v in self._term_values(values, params)))

    def to_record(self) -> dict:
        return {
            "terms": [
                {"var": t.var, "index": t.index, "param": t.param,
                 "coef": encode_matrix(t.coef) if t.is_trace else t.coef}
                for t in self.terms
            ],
            "constants": [{"value": c.value, "param": c.param} for c in self.constants],
        }

    @classmethod
    def from_record(cls, record: dict) -> "AffineExpr":
        expr = cls()
        for t in record["terms"]:
            coef = decode_matrix(t["coef"]) if isinstance(t["coef"], dict) else float(t["coef"])
            expr.terms.append(LinTerm(t["var"], coef, int(t["index"]), t["param"]))
        for c in record["constants"]:
            expr.constants.append(ConstTerm(float(c["value"]), c["param"]))
        return expr


class MatrixExpr:
    """Hermitian affine matrix expression of side ``dim``."""

    def __init__(self, dim: int):
        self.dim = int(dim)
        self.congruences: List[CongruenceTerm] = []
        self.scaled: List[ScaledTerm] = []
        self.constants: List[ConstTerm] = []

    def congruence(self, var: str, a: np.ndarray, coef: float = 1.0, param: Optional[str] = None) -> "MatrixExpr":
        a = np.asarray(a, dtype=complex)
        if a.shape[0] != self.dim:
            raise DimensionError(f"congruence factor has {a.shape[0]} rows, block is {self.dim}")
        self.congruences.append(CongruenceTerm(var, a, float(coef), param))
        return self

    def scalar(self, var: str, f: np.ndarray, index: int = 0, param: Optional[str] = None) -> "MatrixExpr":
        f = np.asarray(f, dtype=complex)
        if f.shape != (self.dim, self.dim):
            raise DimensionError(f"scalar coefficient has shape {f.shape}, block is {self.dim}")
        self.scaled.append(ScaledTerm(var, f, int(index), param))
        return self

    def const(self, f: np.ndarray, param: Optional[str] = None) -> "MatrixExpr":
        f = np.asarray(f, dtype=complex)
        if f.shape != (self.dim, self.dim):
            raise DimensionError(f"constant has shape {f.shape}, block is {self.dim}")
        self.constants.append(ConstTerm(f, param))
        return self

    def references(self) -> set:
        return {t.var for t in self.congruences} | {t.var for t in self.scaled}

    def parameters(self) -> set:
        names = {t.param for t in self.congruences} | {t.param for t in self.scaled} | {c.param for c in self.constants}
        return {p for p in names if p}

    def evaluate(self, values: Dict[str, np.ndarray], params: Dict[str, float]) -> np.ndarray:
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for t in self.congruences:
            out += t.coef * _factor(t.param, params) * (t.a @ values[t.var] @ t.a.conj().T)
        for t in self.scaled:
            out += float(np.atleast_1d(values[t.var])[t.index]) * _factor(t.param, params) * t.f
        for c in self.constants:
            out += _factor(c.param, params) * c.value
        return 0.5 * (out + out.conj().T)

    def to_record(self) -> dict:
        return {
            "dim": self.dim,
            "congruences": [{"var": t.var, "a": encode_matrix(t.a), "coef": t.coef, "param": t.param}
                            for t in self.congruences],
            "scaled": [{"var": t.var, "index": t.index, "f": encode_matrix(t.f), "param": t.param}
                       for t in self.scaled],
            "constants": [{"value": encode_matrix(c.value), "param": c.param} for c in self.constants],
        }

    @classmethod
    def from_record(cls, record: dict) -> "MatrixExpr":
        expr = cls(record["dim"])
        for t in record["congruences"]:
            expr.congruences.append(CongruenceTerm(t["var"], decode_matrix(t["a"]), float(t["coef"]), t["param"]))
        for t in record["scaled"]:
            expr.scaled.append(ScaledTerm(t["var"], decode_matrix(t["f"]), int(t["index"]), t["param"]))
        for c in record["constants"]:
            expr.constants.append(ConstTerm(decode_matrix(c["value"]), c["param"]))
        return expr


# =============================================================================
# PROGRAM
# =============================================================================

@dataclass(frozen=True)
class MatrixVar:
    name: str
    dim: int
    psd: bool = True


@dataclass(frozen=True)
class ScalarVar:
    name: str
    size: int = 1
    nonneg: bool = True


@dataclass
class LinearConstraint:
    expr: AffineExpr
    sense: str
    label: str


@dataclass
class PsdConstraint:
    expr: MatrixExpr
    label: str


@dataclass
class PowerCone:
    """x^p * y^(1-p) >= |z| with x, y >= 0."""
    x: AffineExpr
    y: AffineExpr
    z: AffineExpr
    p: float
    label: str


class ConicProgram:
    """
    Minimize a real affine objective over Hermitian PSD and scalar variables.

    Built incrementally, then frozen; ``with_params`` returns a copy sharing
    the frozen structure with new parameter values.
    """

    FORMAT = "wpcn-conic/1"

    def __init__(self):
        self.matrix_vars: Dict[str, MatrixVar] = {}
        self.scalar_vars: Dict[str, ScalarVar] = {}
        self.objective = AffineExpr()
        self.linear: List[LinearConstraint] = []
        self.psd: List[PsdConstraint] = []
        self.power_cones: List[PowerCone] = []
        self.params: Dict[str, float] = {}
        self.meta: Dict[str, object] = {}
        self._frozen = False
        self._structure_key: Optional[str] = None

    # -- assembly -------------------------------------------------------------

    def _check_open(self):
        if self._frozen:
            raise WpcnError("program is frozen")

    def matrix_var(self, name: str, dim: int, psd: bool = True) -> str:
        self._check_open()
        if name in self.matrix_vars or name in self.scalar_vars:
            raise DomainError(f"variable {name!r} declared twice")
        self.matrix_vars[name] = MatrixVar(name, int(dim), bool(psd))
        return name

    def scalar_var(self, name: str, size: int = 1, nonneg: bool = True) -> str:
        self._check_open()
        if name in self.matrix_vars or name in self.scalar_vars:
            raise DomainError(f"variable {name!r} declared twice")
        self.scalar_vars[name] = ScalarVar(name, int(size), bool(nonneg))
        return name

    def param(self, name: str, value: float) -> str:
        self.params[name] = float(value)
        return name

    def minimize(self, expr: AffineExpr, scale: float = 1.0):
        """``scale`` multiplies the objective handed to the backend only; reported objectives stay unscaled."""
        self._check_open()
        if not scale > 0:
            raise DomainError(f"objective scale must be > 0, got {scale}")
        self.objective = expr
        self.meta["objective_scale"] = float(scale)

    def add_linear(self, expr: AffineExpr, sense: str, label: str):
        self._check_open()
        if sense not in (">=", "<=", "=="):
            raise DomainError(f"unknown constraint sense {sense!r}")
        self.linear.append(LinearConstraint(expr, sense, label))

    def add_psd(self, expr: MatrixExpr, label: str):
        self._check_open()
        self.psd.append(PsdConstraint(expr, label))

    def add_power_cone(self, x: AffineExpr, y: AffineExpr, z: AffineExpr, p: float, label: str):
        self._check_open()
        if not 0 < p <= 1:
            raise DomainError(f"power-cone exponent must lie in (0, 1], got {p}")
        self.power_cones.append(PowerCone(x, y, z, float(p), label))

    def freeze(self) -> "ConicProgram":
        self.validate()
        self._frozen = True
        record = self.to_record()
        record["params"] = sorted(self.params)
        self._structure_key = hashlib.sha256(json.dumps(record, sort_keys=True).encode()).hexdigest()
        return self

    def with_params(self, **values: float) -> "ConicProgram":
        unknown = set(values) - set(self.params)
        if unknown:
            raise DomainError(f"unknown parameters {sorted(unknown)}")
        clone = copy.copy(self)
        clone.params = {**self.params, **{k: float(v) for k, v in values.items()}}
        return clone

    @property
    def structure_key(self) -> str:
        if self._structure_key is None:
            raise WpcnError("freeze the program before solving")
        return self._structure_key

    # -- checks ---------------------------------------------------------------

    def _var_shape_ok(self, name: str, index: int = 0, dim: Optional[int] = None) -> bool:
        if name in self.matrix_vars:
            return dim is None or self.matrix_vars[name].dim == dim
        if name in self.scalar_vars:
            return 0 <= index < self.scalar_vars[name].size
        return False

    def validate(self):
        """Every term must reference a declared variable and parameter; matrix data must be Hermitian."""
        exprs = [self.objective] + [c.expr for c in self.linear]
        for cone in self.power_cones:
            exprs += [cone.x, cone.y, cone.z]
        for expr in exprs:
            for t in expr.terms:
                if t.is_trace:
                    if t.var not in self.matrix_vars or t.coef.shape != (self.matrix_vars[t.var].dim,) * 2:
                        raise DimensionError(f"trace term on {t.var!r} does not match a declared matrix variable")
                elif t.var not in self.scalar_vars or not self._var_shape_ok(t.var, t.index):
                    raise DimensionError(f"scalar term {t.var}[{t.index}] is not declared")
        for con in self.psd:
            e = con.expr
            for t in e.congruences:
                if t.var not in self.matrix_vars or t.a.shape[1] != self.matrix_vars[t.var].dim:
                    raise DimensionError(f"{con.label}: congruence on {t.var!r} has wrong shape")
            for t in e.scaled:
                if not (t.var in self.scalar_vars and self._var_shape_ok(t.var, t.index)):
                    raise DimensionError(f"{con.label}: scalar {t.var}[{t.index}] is not declared")
                realify(t.f)
            for c in e.constants:
                realify(c.value)
        used = self.objective.parameters()
        for c in self.linear:
            used |= c.expr.parameters()
        for c in self.psd:
            used |= c.expr.parameters()
        for cone in self.power_cones:
            used |= cone.x.parameters() | cone.y.parameters() | cone.z.parameters()
        missing = used - set(self.params)
        if missing:
            raise DomainError(f"undeclared parameters {sorted(missing)}")

    def residuals(self, values: Dict[str, np.ndarray]) -> Dict[str, float]:
        """Relative violation per constraint (0 when satisfied)."""
        out: Dict[str, float] = {}
        for con in self.linear:
            v = con.expr.evaluate(values, self.params)
            scale = 1.0 + con.expr.magnitude(values, self.params)
            if con.sense == ">=":
                viol = max(0.0, -v)
            elif con.sense == "<=":
                viol = max(0.0, v)
            else:
                viol = abs(v)
            out[con.label] = max(out.get(con.label, 0.0), viol / scale)
        for con in self.psd:
            m = con.expr.evaluate(values, self.params)
            lam = float(np.linalg.eigvalsh(m)[0])
            out[con.label] = max(out.get(con.label, 0.0), max(0.0, -lam) / (1.0 + np.linalg.norm(m)))
        for cone in self.power_cones:
            x = cone.x.evaluate(values, self.params)
            y = cone.y.evaluate(values, self.params)
            z = cone.z.evaluate(values, self.params)
            lhs = max(x, 0.0) ** cone.p * max(y, 0.0) ** (1 - cone.p)
            viol = max(0.0, abs(z) - lhs, -x, -y) / (1.0 + abs(z) + abs(x))
            out[cone.label] = max(out.get(cone.label, 0.0), viol)
        for name, var in self.matrix_vars.items():
            if not var.psd:
                continue
            x = values[name]
            lam = float(np.linalg.eigvalsh(0.5 * (x + x.conj().T))[0])
            out[f"psd:{name}"] = max(0.0, -lam) / (1.0 + np.linalg.norm(x))
        for name, var in self.scalar_vars.items():
            if var.nonneg:
                s = np.atleast_1d(values[name])
                out[f"nonneg:{name}"] = float(max(0.0, -np.min(s)) / (1.0 + np.max(np.abs(s))))
        return out

    # -- dump / restore -------------------------------------------------------

    def to_record(self) -> dict:
        return {
            "format": self.FORMAT,
            "layout": LAYOUT,
            "matrix_vars": [{"name": v.name, "dim": v.dim, "psd": v.psd} for v in self.matrix_vars.values()],
            "scalar_vars": [{"name": v.name, "size": v.size, "nonneg": v.nonneg} for v in self.scalar_vars.values()],
            "params": dict(self.params),
            "meta": dict(self.meta),
            "objective": self.objective.to_record(),
            "linear": [{"label": c.label, "sense": c.sense, "expr": c.expr.to_record()} for c in self.linear],
            "psd": [{"label": c.label, "expr": c.expr.to_record()} for c in self.psd],
            "power_cones": [{"label": c.label, "p": c.p, "x": c.x.to_record(), "y": c.y.to_record(),
                             "z": c.z.to_record()} for c in self.power_cones],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def loads(cls, text: str) -> "ConicProgram":
        record = json.loads(text)
        if record.get("format") != cls.FORMAT:
            raise DomainError(f"unsupported program format {record.get('format')!r}")
        prog = cls()
        for v in record["matrix_vars"]:
            prog.matrix_var(v["name"], v["dim"], v.get("psd", True))
        for v in record["scalar_vars"]:
            prog.scalar_var(v["name"], v["size"], v["nonneg"])
        prog.params = {k: float(v) for k, v in record["params"].items()}
        prog.meta = dict(record.get("meta", {}))
        prog.objective = AffineExpr.from_record(record["objective"])
        for c in record["linear"]:
            prog.add_linear(AffineExpr.from_record(c["expr"]), c["sense"], c["label"])
        for c in record["psd"]:
            prog.add_psd(MatrixExpr.from_record(c["expr"]), c["label"])
        for c in record["power_cones"]:
            prog.add_power_cone(AffineExpr.from_record(c["x"]), AffineExpr.from_record(c["y"]),
                                AffineExpr.from_record(c["z"]), c["p"], c["label"])
        return prog.freeze()


# =============================================================================
# SOLUTION
# =============================================================================

class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical-failure"


@dataclass
class Solution:
    status: SolveStatus
    objective: float = float("nan")
    values: Dict[str, np.ndarray] = field(default_factory=dict)
    max_residual: float = float("nan")
    solve_time: float = 0.0
    backend: str = ""
    diagnostics: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    def raise_for_status(self) -> "Solution":
        if self.status == SolveStatus.NUMERICAL_FAILURE:
            raise SolverFailure(f"{self.backend or 'backend'} failed numerically", self.diagnostics)
        return self

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "max_residual": self.max_residual,
            "solve_time": round(self.solve_time, 6),
            "backend": self.backend,
            "diagnostics": self.diagnostics,
        }


# =============================================================================
# CVXPY BACKEND
# =============================================================================

class _Compiled:
    """cvxpy problem for one program structure, with parameter handles."""

    def __init__(self, prog: ConicProgram):
        self.params = {name: cp.Parameter(name=name) for name in prog.params}
        self.re: Dict[str, "cp.Variable"] = {}
        self.im: Dict[str, "cp.Variable"] = {}
        self.blocks: Dict[str, "cp.Expression"] = {}
        self.scalars: Dict[str, "cp.Variable"] = {}
        constraints = []

        for name, var in prog.matrix_vars.items():
            re = cp.Variable((var.dim, var.dim), symmetric=True, name=f"{name}_re")
            im = cp.Variable((var.dim, var.dim), name=f"{name}_im")
            block = cp.bmat([[re, -im], [im, re]])
            self.re[name], self.im[name], self.blocks[name] = re, im, block
            constraints.append(im + im.T == 0)
            if var.psd:
                constraints.append(block >> 0)
        for name, var in prog.scalar_vars.items():
            self.scalars[name] = cp.Variable(var.size, nonneg=var.nonneg, name=name)

        for con in prog.linear:
            expr = self._affine(con.expr)
            if con.sense == ">=":
                constraints.append(expr >= 0)
            elif con.sense == "<=":
                constraints.append(expr <= 0)
            else:
                constraints.append(expr == 0)
        for con in prog.psd:
            s = self._matrix(con.expr)
            constraints.append(0.5 * (s + s.T) >> 0)
        for cone in prog.power_cones:
            constraints.append(cp.PowCone3D(self._affine(cone.x), self._affine(cone.y),
                                            self._affine(cone.z), cone.p))

        scale = float(prog.meta.get("objective_scale", 1.0))
        self.problem = cp.Problem(cp.Minimize(scale * self._affine(prog.objective)), constraints)

    def _scaled(self, expr, param: Optional[str]):
        return expr if param is None else self.params[param] * expr

    def _affine(self, e: AffineExpr):
        out = cp.Constant(0.0)
        for t in e.terms:
            if t.is_trace:
                # Re Tr(C X) = <Re C^T, Re X> - <Im C^T, Im X>
                term = cp.sum(cp.multiply(t.coef.real.T, self.re[t.var])) - \
                    cp.sum(cp.multiply(t.coef.imag.T, self.im[t.var]))
            else:
                term = t.coef * self.scalars[t.var][t.index]
            out = out + self._scaled(term, t.param)
        for c in e.constants:
            out = out + self._scaled(cp.Constant(c.value), c.param)
        return out

    def _matrix(self, e: MatrixExpr):
        out = cp.Constant(np.zeros((2 * e.dim, 2 * e.dim)))
        for t in e.congruences:
            ea = embed(t.a)
            out = out + self._scaled(t.coef * (ea @ self.blocks[t.var] @ ea.T), t.param)
        for t in e.scaled:
            out = out + self._scaled(self.scalars[t.var][t.index] * realify(t.f), t.param)
        for c in e.constants:
            out = out + self._scaled(cp.Constant(realify(c.value)), c.param)
        return out

    def bind(self, values: Dict[str, float]):
        for name, p in self.params.items():
            p.value = values[name]

    def extract(self, prog: ConicProgram) -> Dict[str, np.ndarray]:
        values: Dict[str, np.ndarray] = {}
        for name in prog.matrix_vars:
            x = self.re[name].value + 1j * self.im[name].value
            values[name] = 0.5 * (x + x.conj().T)
        for name in prog.scalar_vars:
            values[name] = np.atleast_1d(np.asarray(self.scalars[name].value, dtype=float))
        return values


def _solver_options(backend: str, tol: float) -> dict:
    if backend == "CLARABEL":
        return {"tol_gap_abs": tol, "tol_gap_rel": tol, "tol_feas": tol, "max_iter": 500}
    if backend == "SCS":
        return {"eps_abs": tol, "eps_rel": tol, "max_iters": 100_000}
    return {}


class ConicSession:
    """
    Cache of compiled programs keyed by structure.

    A session belongs to the thread that created it.
    """

    def __init__(self, max_entries: int = 8):
        self.max_entries = max_entries
        self._cache: "OrderedDict[str, _Compiled]" = OrderedDict()
        self._owner = threading.get_ident()
        self.hits = 0
        self.misses = 0

    def compiled(self, prog: ConicProgram) -> _Compiled:
        if threading.get_ident() != self._owner:
            raise WpcnError("a ConicSession must not be shared between threads")
        key = prog.structure_key
        if key in self._cache:
            self.hits += 1
            self._cache.move_to_end(key)
            return self._cache[key]
        self.misses += 1
        compiled = _Compiled(prog)
        self._cache[key] = compiled
        if len(self._cache) > self.max_entries:
            self._cache.popitem(last=False)
        return compiled


_STATUS_MAP = {
    "infeasible": SolveStatus.INFEASIBLE,
    "infeasible_inaccurate": SolveStatus.INFEASIBLE,
    "unbounded": SolveStatus.UNBOUNDED,
    "unbounded_inaccurate": SolveStatus.UNBOUNDED,
}


def solve(prog: ConicProgram, tol: float = DEFAULT_TOL, backend: Optional[str] = None,
          session: Optional[ConicSession] = None) -> Solution:
    """Solve a frozen program; statuses are certified against our own residual evaluation."""
    if not prog._frozen:
        prog.freeze()
    backend = (backend or default_backend() or "").upper()
    if not CVXPY_AVAILABLE or not backend:
        return Solution(SolveStatus.NUMERICAL_FAILURE, backend=backend,
                        diagnostics="no conic backend installed (pip install cvxpy clarabel scs)")

    start = time.perf_counter()
    compiled = (session or ConicSession()).compiled(prog)
    compiled.bind(prog.params)
    try:
        compiled.problem.solve(solver=backend, **_solver_options(backend, tol))
        raw_status = compiled.problem.status
    except cp.error.SolverError as e:
        elapsed = time.perf_counter() - start
        record_solve(backend, SolveStatus.NUMERICAL_FAILURE.value, elapsed)
        logger.warning("%s raised SolverError: %s", backend, e)
        return Solution(SolveStatus.NUMERICAL_FAILURE, solve_time=elapsed, backend=backend, diagnostics=str(e))
    elapsed = time.perf_counter() - start

    if raw_status in _STATUS_MAP:
        sol = Solution(_STATUS_MAP[raw_status], solve_time=elapsed, backend=backend, diagnostics=raw_status)
    elif raw_status in ("optimal", "optimal_inaccurate"):
        values = compiled.extract(prog)
        residual = max(prog.residuals(values).values(), default=0.0)
        accept = max(1e-6, 100 * tol)
        if residual <= accept:
            sol = Solution(SolveStatus.OPTIMAL, objective=prog.objective.evaluate(values, prog.params),
                           values=values, max_residual=residual, solve_time=elapsed, backend=backend,
                           diagnostics=raw_status)
        else:
            sol = Solution(SolveStatus.NUMERICAL_FAILURE, values=values, max_residual=residual,
                           solve_time=elapsed, backend=backend,
                           diagnostics=f"{raw_status}: residual {residual:.2e} above {accept:.0e}")
    else:
        sol = Solution(SolveStatus.NUMERICAL_FAILURE, solve_time=elapsed, backend=backend,
                       diagnostics=str(raw_status))

    record_solve(backend, sol.status.value, elapsed)
    logger.debug("solve %s -> %s obj=%.6e res=%.1e (%.1f ms)", backend, sol.status.value,
                 sol.objective, sol.max_residual, 1e3 * elapsed)
    return sol
