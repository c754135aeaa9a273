"""Weighted equality-constrained quadratic solver and problem assembly.

Discord of a constraint set is the minimum of ``sum(w_i * x_i**2)`` subject
to the equations, found from the optimality (KKT) system::

    [ 2W  A.T ] [x]   [0]
    [ A   0   ] [l] = [b]

Zero-weight variables (nulls and consensus variables) make the objective
semidefinite, so the diagonal gets a tiny ridge for factoring; the reported
discord sums only the true weights.  A dense Schur-complement fallback
covers systems the sparse factorization cannot handle (for example
duplicate-dependent equations).
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .align import Constraint, Elimination
from .errors import EngineError, SingularSystemError
from .model import Instance, LinExpr, Valuation, VarCatalog, VarKind
from .algebra import apply_valuation_instance

DEFAULT_FEAS_TOL = 1e-6
DEFAULT_CONC_TOL = 1e-9
RIDGE = 1e-10


class Status(enum.Enum):
    CONCORDANT = "concordant"
    DISCORDANT = "discordant"
    INFEASIBLE = "infeasible"


@dataclass
class QpProblem:
    """Diagonal-weight objective plus sparse equality constraints."""

    var_ids: list[int]
    weights: dict[int, float]
    rows: list[dict[int, float]]
    rhs: list[float]
    labels: dict[int, str]
    kinds: dict[int, str]
    ground_contradiction: bool = False

    @property
    def n_vars(self) -> int:
        return len(self.var_ids)

    @property
    def n_constraints(self) -> int:
        return len(self.rows)


@dataclass
class SolveResult:
    status: Status
    discord: Optional[float]
    valuation: Optional[Valuation]
    kkt_residual: float
    discord_per_variable: Optional[float]
    n_vars: int
    n_constraints: int


def assemble(constraints: Sequence[Constraint],
             catalog: VarCatalog,
             weight_overrides: Optional[Mapping[int, float]] = None,
             feas_tol: float = DEFAULT_FEAS_TOL) -> QpProblem:
    """Normalize equations into rows ``sum(a_i x_i) = -a_0``.

    Exact duplicate rows are merged.  Rows with no variables are dropped when
    their residual is within tolerance and flag the problem as contradictory
    otherwise.  Weights default to 1 for error variables and 0 for null and
    consensus variables, with per-variable overrides.
    """
    overrides = dict(weight_overrides or {})
    normalized: list[tuple[dict[int, float], float]] = []
    ground_residuals: list[float] = []
    for c in constraints:
        d = c.normalized()
        if not d.terms:
            ground_residuals.append(abs(d.const))
        else:
            normalized.append((dict(d.terms), -d.const))

    scale = max([abs(r) for _, r in normalized] + ground_residuals, default=0.0)
    contradiction = any(r > feas_tol * (1.0 + scale) for r in ground_residuals)

    seen = set()
    rows: list[dict[int, float]] = []
    rhs: list[float] = []
    for terms, b in normalized:
        key = (tuple(sorted(terms.items())), b)
        if key in seen:
            continue
        seen.add(key)
        rows.append(terms)
        rhs.append(b)

    var_ids = sorted({v for r in rows for v in r})
    weights = {}
    labels = {}
    kinds = {}
    for v in var_ids:
        weights[v] = float(overrides.get(v, catalog.weight(v)))
        labels[v] = catalog.label(v)
        kinds[v] = catalog.kind(v).value
    return QpProblem(var_ids, weights, rows, rhs, labels, kinds,
                     ground_contradiction=contradiction)


def solve(p: QpProblem,
          feas_tol: float = DEFAULT_FEAS_TOL,
          conc_tol: float = DEFAULT_CONC_TOL) -> SolveResult:
    """Minimize the weighted squares subject to the assembled equations."""
    n, m = p.n_vars, p.n_constraints
    if p.ground_contradiction:
        return SolveResult(Status.INFEASIBLE, None, None, 0.0, None, n, m)
    if m == 0 or n == 0:
        val = Valuation({v: 0.0 for v in p.var_ids})
        return SolveResult(Status.CONCORDANT, 0.0, val, 0.0,
                           0.0, n, m)

    pos = {v: i for i, v in enumerate(p.var_ids)}
    w = np.array([p.weights[v] for v in p.var_ids])
    w_ridge = np.where(w > 0.0, w, RIDGE)
    b = np.asarray(p.rhs)

    data, ri, ci = [], [], []
    for i, row in enumerate(p.rows):
        for v, c in row.items():
            ri.append(i)
            ci.append(pos[v])
            data.append(c)
    A = sp.csr_matrix((data, (ri, ci)), shape=(m, n))

    x, lam = _kkt_solve(A, w_ridge, b)
    feas = float(np.max(np.abs(A @ x - b)))
    stat = _stationarity(A, w, x, lam)
    b_scale = float(np.max(np.abs(b)))
    x_scale = float(np.max(np.abs(x)))

    if feas > feas_tol * (1.0 + b_scale) or stat > feas_tol * (1.0 + x_scale):
        x2, lam2 = _schur_solve(A, w_ridge, b)
        feas2 = float(np.max(np.abs(A @ x2 - b)))
        stat2 = _stationarity(A, w, x2, lam2)
        if max(feas2, stat2) < max(feas, stat):
            x, lam, feas, stat = x2, lam2, feas2, stat2
            x_scale = float(np.max(np.abs(x)))

    if feas > feas_tol * (1.0 + b_scale):
        return SolveResult(Status.INFEASIBLE, None, None, max(feas, stat), None,
                           n, m)

    discord = float(np.sum(w * x * x))
    val = Valuation({v: float(x[pos[v]]) for v in p.var_ids})
    status = Status.CONCORDANT if discord <= conc_tol else Status.DISCORDANT
    return SolveResult(status, discord, val, max(feas, stat),
                       discord / max(n, 1), n, m)


def _stationarity(A, w, x, lam) -> float:
    return float(np.max(np.abs(2.0 * w * x + A.T @ lam)))


def _kkt_solve(A, w_ridge, b):
    m, n = A.shape
    kkt = sp.bmat([[sp.diags(2.0 * w_ridge), A.T], [A, None]], format="csc")
    vec = np.concatenate([np.zeros(n), b])
    try:
        sol = spla.splu(kkt).solve(vec)
    except RuntimeError:
        return _schur_solve(A, w_ridge, b)
    if not np.all(np.isfinite(sol)):
        return _schur_solve(A, w_ridge, b)
    return sol[:n], sol[n:]


def _schur_solve(A, w_ridge, b):
    """Minimum via the reduced system (A W^-1 A.T) y = b; x = W^-1 A.T y.

    Handles linearly dependent, consistent constraint rows; a least-squares
    solve of the reduced system plays the role of a pseudo-inverse.
    """
    m, n = A.shape
    if m > 4000:
        raise SingularSystemError(
            f"cannot factor optimality system with {m} constraints")
    winv = 1.0 / w_ridge
    Ad = A.toarray()
    M = Ad @ (winv[:, None] * Ad.T)
    y, *_ = np.linalg.lstsq(M, b, rcond=None)
    x = winv * (Ad.T @ y)
    return x, -2.0 * y


def check_concordance(constraints: Sequence[Constraint],
                      catalog: VarCatalog,
                      weight_overrides: Optional[Mapping[int, float]] = None,
                      feas_tol: float = DEFAULT_FEAS_TOL,
                      conc_tol: float = DEFAULT_CONC_TOL) -> Status:
    p = assemble(constraints, catalog, weight_overrides, feas_tol)
    return solve(p, feas_tol, conc_tol).status


def objective_at(p: QpProblem, assignment: Mapping[int, float]) -> float:
    """Evaluate the weighted objective at a hand-picked assignment."""
    return sum(p.weights[v] * assignment.get(v, 0.0) ** 2 for v in p.var_ids)


def residual_at(p: QpProblem, assignment: Mapping[int, float]) -> float:
    """Worst equation violation at an assignment; 0 means feasible."""
    worst = 0.0
    for row, b in zip(p.rows, p.rhs):
        r = sum(c * assignment.get(v, 0.0) for v, c in row.items()) - b
        worst = max(worst, abs(r))
    return worst


def extract_concordant_instance(derived: Instance,
                                result: SolveResult,
                                elimination: Optional[Elimination] = None,
                                ) -> Instance:
    """Ground the derived views at the solved valuation.

    Eliminated consensus variables are reconstructed from their defining
    expressions in ascending id order, so each definition only sees values
    that are already fixed.
    """
    if result.valuation is None:
        raise EngineError("no valuation: the system was infeasible")
    h = result.valuation
    if elimination is not None:
        extra = {}
        merged = dict(h.assignment)
        for var in sorted(elimination.definitions):
            value = elimination.definitions[var].eval(Valuation(merged))
            extra[var] = value
            merged[var] = value
        h = Valuation(merged)
    return apply_valuation_instance(derived, h)


# ---------------------------------------------------------------------------
# Problem export: a self-describing text format for external solvers

_FMT = ".17g"


def _real(x: float) -> str:
    return format(float(x), _FMT)


def write_qp(p: QpProblem,
             feas_tol: float = DEFAULT_FEAS_TOL,
             conc_tol: float = DEFAULT_CONC_TOL) -> str:
    """Serialize a problem: variables, constraint triplets, rhs, metadata."""
    out = io.StringIO()
    out.write("qp 1\n")
    out.write("[variables]\n")
    for v in p.var_ids:
        label = p.labels.get(v, f"x{v}")
        out.write(f"{v} {p.kinds.get(v, 'error')} {_real(p.weights[v])} "
                  f"{_quote(label)}\n")
    out.write("[constraints]\n")
    for i, row in enumerate(p.rows):
        for v in sorted(row):
            out.write(f"{i} {v} {_real(row[v])}\n")
    out.write("[rhs]\n")
    for i, b in enumerate(p.rhs):
        out.write(f"{i} {_real(b)}\n")
    out.write("[metadata]\n")
    out.write(f"n_vars {p.n_vars}\n")
    out.write(f"n_constraints {p.n_constraints}\n")
    out.write(f"ground_contradiction {int(p.ground_contradiction)}\n")
    out.write(f"tolerance_feas {_real(feas_tol)}\n")
    out.write(f"tolerance_conc {_real(conc_tol)}\n")
    return out.getvalue()


def read_qp(text: str) -> tuple[QpProblem, dict[str, float]]:
    """Parse :func:`write_qp` output; returns the problem and its metadata."""
    lines = text.splitlines()
    if not lines or not lines[0].startswith("qp "):
        raise EngineError("not a qp export: missing header")
    section = None
    var_ids: list[int] = []
    weights: dict[int, float] = {}
    labels: dict[int, str] = {}
    kinds: dict[int, str] = {}
    rows: dict[int, dict[int, float]] = {}
    rhs: dict[int, float] = {}
    meta: dict[str, float] = {}
    for line in lines[1:]:
        line = line.strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]")
            continue
        parts = line.split(None, 3)
        if section == "variables":
            vid = int(parts[0])
            var_ids.append(vid)
            kinds[vid] = parts[1]
            weights[vid] = float(parts[2])
            labels[vid] = _unquote(parts[3]) if len(parts) > 3 else f"x{vid}"
        elif section == "constraints":
            i, v, c = int(parts[0]), int(parts[1]), float(parts[2])
            rows.setdefault(i, {})[v] = c
        elif section == "rhs":
            rhs[int(parts[0])] = float(parts[1])
        elif section == "metadata":
            meta[parts[0]] = float(parts[1])
        else:
            raise EngineError(f"unexpected line outside any section: {line!r}")
    row_list = [rows.get(i, {}) for i in range(len(rhs))]
    rhs_list = [rhs[i] for i in range(len(rhs))]
    p = QpProblem(var_ids, weights, row_list, rhs_list, labels, kinds,
                  ground_contradiction=bool(meta.get("ground_contradiction", 0)))
    return p, meta


def _quote(s: str) -> str:
    return '"' + s.replace('"', '""') + '"'


def _unquote(s: str) -> str:
    s = s.strip()
    if s.startswith('"') and s.endswith('"'):
        return s[1:-1].replace('""', '"')
    return s
