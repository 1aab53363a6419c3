"""Domain types for driven N-level systems.

A system is a finite set of levels with energies ``E_1 < ... < E_N`` (any
order is accepted; only distinctness of the gaps matters) coupled to a scalar
control field through a real symmetric dipole matrix with zero diagonal.
Internally everything is stored in normalized form: energies are divided by
``||H0|| = max_k |E_k|`` and dipole entries by ``||mu|| = max_lk |mu_lk|``,
with both scales kept on the objects so physical quantities can be recovered.
Time is measured in units of ``hbar / ||H0||``.

Level indices are 1-based throughout the public API, matching the file
formats and the ket labels ``|1>..|N>`` used in the docstrings.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DegenerateTransitionsError, SchemaError, UncontrollableSystemError

DEGENERACY_TOL = 1e-6


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TransitionReport:
    """Outcome of the non-degeneracy check on transition frequencies.

    ``violations`` holds tuples ``((l1, k1), (l2, k2), gap1, gap2)`` for every
    pair of level gaps closer than the tolerance.
    """

    ok: bool
    tol: float
    min_separation: float
    violations: tuple


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """Immutable description of the free Hamiltonian and the measurement.

    Attributes
    ----------
    energies : ndarray
        Normalized level energies, ``max |energies| == 1``.
    scale : float
        The max norm of the original energies, ``||H0||``.
    initial : int
        1-based label of the state the system is prepared in.
    measured : int
        1-based label of the state whose population is read out.
    """

    energies: np.ndarray
    scale: float
    initial: int
    measured: int

    def __post_init__(self):
        object.__setattr__(self, "energies", _readonly(np.asarray(self.energies, dtype=float)))
        n = self.dim
        for name in ("initial", "measured"):
            idx = getattr(self, name)
            if not (isinstance(idx, (int, np.integer)) and 1 <= idx <= n):
                raise SchemaError(f"{name} level {idx!r} outside 1..{n}")

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    @classmethod
    def from_energies(cls, energies, initial, measured, degeneracy_tol=DEGENERACY_TOL):
        """Normalize raw energies and reject degenerate transition pairs."""
        energies = np.asarray(energies, dtype=float)
        if energies.ndim != 1 or energies.size < 2:
            raise SchemaError("need a 1-d array of at least two energies")
        if not np.all(np.isfinite(energies)):
            raise SchemaError("energies must be finite")
        scale = float(np.max(np.abs(energies)))
        if scale == 0.0:
            raise SchemaError("all energies are zero; the system has no dynamics")
        normalized = energies / scale
        report = validate_transitions(normalized, degeneracy_tol)
        if not report.ok:
            lines = ", ".join(
                f"|w{l1}{k1}|={g1:.3g} vs |w{l2}{k2}|={g2:.3g}"
                for (l1, k1), (l2, k2), g1, g2 in report.violations
            )
            raise DegenerateTransitionsError(
                f"transition frequencies closer than {degeneracy_tol:g}: {lines}",
                report.violations,
            )
        return cls(normalized, scale, initial, measured)


def validate_transitions(energies, tol=DEGENERACY_TOL) -> TransitionReport:
    """Check that all level gaps |E_l - E_k| are pairwise distinct.

    Works on normalized energies; ``tol`` is in the same units. Returns a
    report rather than raising so callers can list every offending pair.
    """
    energies = np.asarray(energies, dtype=float)
    if energies.ndim != 1 or energies.size < 2:
        raise SchemaError("need a 1-d array of at least two energies")
    if not np.all(np.isfinite(energies)):
        raise SchemaError("energies must be finite")
    n = energies.size
    gaps = []
    for l, k in combinations(range(1, n + 1), 2):
        gaps.append(((l, k), abs(energies[l - 1] - energies[k - 1])))
    violations = []
    min_sep = math.inf
    for (pair1, g1), (pair2, g2) in combinations(gaps, 2):
        sep = abs(g1 - g2)
        min_sep = min(min_sep, sep)
        if sep < tol:
            violations.append((pair1, pair2, g1, g2))
    # a vanishing gap means two levels coincide, which degrades just as badly
    for pair, g in gaps:
        if g < tol:
            violations.append((pair, pair, g, g))
            min_sep = min(min_sep, g)
    return TransitionReport(not violations, tol, min_sep, tuple(violations))


def validate_system(spec: SystemSpec, tol=DEGENERACY_TOL) -> TransitionReport:
    return validate_transitions(spec.energies, tol)


def transition_frequency(spec: SystemSpec, m: int, n: int) -> float:
    """Normalized transition frequency ``w'_mn = E'_m - E'_n`` (1-based)."""
    return float(spec.energies[m - 1] - spec.energies[n - 1])


@dataclass(frozen=True, eq=False)
class DipoleMatrix:
    """Real symmetric coupling matrix with zero diagonal, in normalized form.

    ``matrix`` holds the normalized entries; ``scale`` is the max norm of the
    physical matrix. ``support`` lists the 1-based index pairs ``(l, k)`` with
    ``l < k`` where the entry is allowed to be nonzero, in row-major order.
    Candidate matrices produced during identification share the support and
    scale of the reference they perturb and are not re-normalized, so their
    max entry may drift away from 1.
    """

    matrix: np.ndarray
    scale: float
    support: tuple

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise SchemaError("dipole matrix must be square")
        if not np.all(np.isfinite(m)):
            raise SchemaError("dipole entries must be finite")
        if not np.allclose(m, m.T, atol=1e-14):
            raise SchemaError("dipole matrix must be symmetric")
        if np.any(np.abs(np.diag(m)) > 1e-14):
            raise SchemaError("dipole matrix must have zero diagonal")
        object.__setattr__(self, "matrix", _readonly(m))
        object.__setattr__(self, "support", tuple(tuple(p) for p in self.support))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_physical(cls, matrix):
        """Normalize a physical dipole matrix by its max norm."""
        matrix = np.asarray(matrix, dtype=float)
        scale = float(np.max(np.abs(matrix)))
        if scale == 0.0:
            raise SchemaError("dipole matrix is identically zero")
        normalized = matrix / scale
        return cls(normalized, scale, _support_of(normalized))

    @classmethod
    def from_normalized(cls, matrix, scale, require_unit_norm=True):
        matrix = np.asarray(matrix, dtype=float)
        if require_unit_norm and abs(np.max(np.abs(matrix)) - 1.0) > 1e-12:
            raise SchemaError("normalized dipole matrix must have max entry 1")
        if scale <= 0:
            raise SchemaError("dipole scale must be positive")
        return cls(matrix, float(scale), _support_of(matrix))

    def support_values(self) -> np.ndarray:
        return np.array([self.matrix[l - 1, k - 1] for l, k in self.support])

    def with_support_entries(self, values) -> "DipoleMatrix":
        """Replace the support entries, keeping scale and support fixed.

        This is the move used by identification: candidates live in the span
        of the support basis and keep the known overall scale.
        """
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self.support),):
            raise SchemaError(f"expected {len(self.support)} support values")
        m = np.zeros_like(self.matrix)
        for (l, k), v in zip(self.support, values):
            m[l - 1, k - 1] = v
            m[k - 1, l - 1] = v
        return DipoleMatrix(m, self.scale, self.support)


def _support_of(matrix) -> tuple:
    n = matrix.shape[0]
    return tuple(
        (l, k)
        for l in range(1, n + 1)
        for k in range(l + 1, n + 1)
        if matrix[l - 1, k - 1] != 0.0
    )


def support_basis(dipole: DipoleMatrix) -> tuple:
    """Ordered 1-based index pairs spanning the admissible dipole space."""
    return dipole.support


def coupling_graph_connected(dipole: DipoleMatrix) -> bool:
    """True when the support edges connect every level to every other."""
    n = dipole.dim
    adj = {i: [] for i in range(1, n + 1)}
    for l, k in dipole.support:
        adj[l].append(k)
        adj[k].append(l)
    seen = {1}
    queue = deque([1])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == n


def coupling_path(dipole: DipoleMatrix, a: int, b: int) -> list:
    """Shortest path from level ``a`` to ``b`` along support edges (1-based).

    Raises UncontrollableSystemError when no path exists.
    """
    if a == b:
        return [a]
    n = dipole.dim
    adj = {i: [] for i in range(1, n + 1)}
    for l, k in dipole.support:
        adj[l].append(k)
        adj[k].append(l)
    prev = {a: None}
    queue = deque([a])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                if v == b:
                    path = [b]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(v)
    raise UncontrollableSystemError(f"levels {a} and {b} are not coupled by the support")


def field_scale_ratio(spec: SystemSpec, dipole: DipoleMatrix) -> float:
    """Conversion factor from field amplitude to normalized coupling,
    ``lambda(tau) = eps(tau) * ||mu|| / ||H0||``."""
    return dipole.scale / spec.scale


# --- states and level-pair operators -------------------------------------

def basis_state(n: int, k: int) -> np.ndarray:
    """|k> as a complex vector (1-based)."""
    if not 1 <= k <= n:
        raise SchemaError(f"level {k} outside 1..{n}")
    psi = np.zeros(n, dtype=complex)
    psi[k - 1] = 1.0
    return psi


def as_state(vec) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    if vec.ndim != 1:
        raise SchemaError("state must be a vector")
    norm = np.linalg.norm(vec)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-10:
        raise SchemaError(f"state norm {norm!r} is not 1")
    return vec


def sigma_x(n: int, l: int, k: int) -> np.ndarray:
    """|l><k| + |k><l| embedded in an n-level system (1-based)."""
    m = np.zeros((n, n), dtype=complex)
    m[l - 1, k - 1] = 1.0
    m[k - 1, l - 1] = 1.0
    return m


def sigma_y(n: int, l: int, k: int) -> np.ndarray:
    """-i|l><k| + i|k><l| embedded in an n-level system (1-based)."""
    m = np.zeros((n, n), dtype=complex)
    m[l - 1, k - 1] = -1.0j
    m[k - 1, l - 1] = 1.0j
    return m


def sigma_z(n: int, l: int, k: int) -> np.ndarray:
    """|l><l| - |k><k| embedded in an n-level system (1-based)."""
    m = np.zeros((n, n), dtype=complex)
    m[l - 1, l - 1] = 1.0
    m[k - 1, k - 1] = -1.0
    return m


# --- file I/O --------------------------------------------------------------

def parse_system(data: dict):
    """Build (SystemSpec, DipoleMatrix) from a decoded system file."""
    if not isinstance(data, dict):
        raise SchemaError("system file must contain a JSON object")
    missing = [k for k in ("energies", "dipole", "initial", "measured") if k not in data]
    if missing:
        raise SchemaError(f"system file missing keys: {', '.join(missing)}")
    tol = data.get("degeneracy_tol", DEGENERACY_TOL)
    try:
        spec = SystemSpec.from_energies(data["energies"], data["initial"],
                                        data["measured"], degeneracy_tol=tol)
        dipole = DipoleMatrix.from_physical(data["dipole"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed system file: {exc}") from exc
    if dipole.dim != spec.dim:
        raise SchemaError("dipole matrix size does not match the energy list")
    return spec, dipole


def load_system(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return parse_system(data)


def save_system(path, spec: SystemSpec, dipole: DipoleMatrix):
    """Write the physical-units system file for ``load_system``."""
    payload = {
        "energies": (spec.energies * spec.scale).tolist(),
        "dipole": (dipole.matrix * dipole.scale).tolist(),
        "initial": spec.initial,
        "measured": spec.measured,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")
