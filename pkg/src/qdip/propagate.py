"""Time stepping for piecewise controls.

The integrator is the exponential midpoint rule: the coupling is sampled at
the center of each step and the resulting constant Hamiltonian exponentiated
exactly (see ``_kernels``). Steps never cross segment or sample boundaries,
so zero-order-hold segments are propagated without discretization error and
field-free gaps collapse to a single diagonal phase step.

Step widths come from a policy with three ingredients: a fraction of the
fastest transition period, a bound on the coupling-induced rotation per step,
and an optional user cap. When the policy cannot be honored (step count
explodes, or widths underflow) the builder raises instead of coarsening.

Each segment carries its own uniform step lattice anchored at the segment
start. Propagation over ``[a, b]`` therefore composes exactly with
propagation over subintervals whenever the split points lie on lattice
boundaries; segment edges always do.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConsistencyError, StepPolicyError
from .system import DipoleMatrix, SystemSpec, basis_state, field_scale_ratio
from .waveform import ControlWaveform, ResonantSegment, SampledSegment

UNITARITY_TOL = 1e-10


@dataclass(frozen=True)
class StepPolicy:
    """Step-width policy.

    ``samples_per_period`` steps per period of the fastest transition;
    ``amp_dt_factor / max|lambda|`` bounds the coupling rotation per step;
    ``dt_cap`` is an optional hard ceiling. ``gap_dt`` resolves field-free
    spans (None keeps them as single exact steps; trajectory recording sets
    it so the output is readable).
    """

    samples_per_period: int = 20
    amp_dt_factor: float = 0.1
    dt_cap: float | None = None
    gap_dt: float | None = None
    max_steps: int = 20_000_000
    min_dt: float = 1e-12


DEFAULT_POLICY = StepPolicy()


def _base_dt(spec: SystemSpec, policy: StepPolicy) -> float:
    w_max = float(np.max(spec.energies) - np.min(spec.energies))
    if w_max <= 0:
        raise StepPolicyError("energy spread is zero; no transition sets a time scale")
    dt = 2.0 * math.pi / (policy.samples_per_period * w_max)
    if policy.dt_cap is not None:
        dt = min(dt, policy.dt_cap)
    return dt


def _segment_dt(base: float, lam_max: float, policy: StepPolicy) -> float:
    """Step target for one segment; the amplitude term is segment-local so a
    segment's lattice never depends on what else the waveform contains."""
    dt = base
    if lam_max > 0:
        dt = min(dt, policy.amp_dt_factor / lam_max)
    if dt < policy.min_dt:
        raise StepPolicyError(f"policy step width {dt:g} below the {policy.min_dt:g} floor")
    return dt


def policy_dt(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
              policy: StepPolicy = DEFAULT_POLICY) -> float:
    """Smallest step width any segment of a control will be given."""
    base = _base_dt(spec, policy)
    lam_max = control.max_amplitude() * field_scale_ratio(spec, dipole)
    return _segment_dt(base, lam_max, policy)


@dataclass(frozen=True, eq=False)
class StepGrid:
    """Midpoint couplings and widths for one propagation interval."""

    lam: np.ndarray
    dt: np.ndarray
    tau_a: float
    tau_b: float

    @property
    def n_steps(self) -> int:
        return self.lam.shape[0]


def _lattice_cells(seg_start: float, width: float, a: float, b: float):
    """Cells of the uniform lattice anchored at seg_start, clipped to [a, b].

    Returns (dts, mids) with midpoints in local time (relative to seg_start).
    """
    a_loc = a - seg_start
    b_loc = b - seg_start
    tiny = 1e-9
    j0 = math.floor(a_loc / width + tiny)
    j1 = math.ceil(b_loc / width - tiny)
    edges = seg_start + width * np.arange(j0, j1 + 1)
    edges[0] = a
    edges[-1] = b
    dts = np.diff(edges)
    keep = dts > 1e-15
    dts = dts[keep]
    mids = ((edges[:-1] + edges[1:]) * 0.5)[keep] - seg_start
    return dts, mids


def build_grid(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
               tau_a: float = 0.0, tau_b: float | None = None,
               policy: StepPolicy = DEFAULT_POLICY) -> StepGrid:
    if tau_b is None:
        tau_b = control.horizon
    if not (math.isfinite(tau_a) and math.isfinite(tau_b)) or tau_b < tau_a:
        raise StepPolicyError(f"bad interval [{tau_a!r}, {tau_b!r}]")
    base_dt = _base_dt(spec, policy)
    ratio = field_scale_ratio(spec, dipole)

    lam_parts = []
    dt_parts = []
    total = 0

    def push(dts, lams):
        nonlocal total
        total += dts.shape[0]
        if total > policy.max_steps:
            raise StepPolicyError(
                f"grid for [{tau_a:g}, {tau_b:g}] exceeds {policy.max_steps} steps")
        if dts.size and float(np.min(dts)) < policy.min_dt:
            raise StepPolicyError(f"step width below the {policy.min_dt:g} floor")
        dt_parts.append(dts)
        lam_parts.append(lams)

    def push_gap(a, b):
        if b - a <= 1e-15:
            return
        if policy.gap_dt is None:
            push(np.array([b - a]), np.array([0.0]))
        else:
            dts, _ = _lattice_cells(a, policy.gap_dt, a, b)
            push(dts, np.zeros_like(dts))

    cursor = tau_a
    for seg in control.segments:
        if seg.end <= tau_a + 1e-15 or seg.start >= tau_b - 1e-15:
            continue
        a = max(seg.start, tau_a)
        b = min(seg.end, tau_b)
        push_gap(cursor, a)
        if isinstance(seg, ResonantSegment):
            dt_target = _segment_dt(base_dt, abs(seg.amplitude) * ratio, policy)
            n = max(1, math.ceil(seg.duration / dt_target - 1e-9))
            h = seg.duration / n
            dts, mids = _lattice_cells(seg.start, h, a, b)
            lams = (seg.amplitude * ratio) * np.cos(seg.frequency * mids)
        elif isinstance(seg, SampledSegment):
            lam_max = float(np.max(np.abs(seg.amplitudes))) * ratio
            dt_target = _segment_dt(base_dt, lam_max, policy)
            m = max(1, math.ceil(seg.dt / dt_target - 1e-9))
            h = seg.dt / m
            dts, mids = _lattice_cells(seg.start, h, a, b)
            idx = np.clip(np.floor(mids / seg.dt).astype(int), 0, seg.amplitudes.size - 1)
            lams = ratio * seg.amplitudes[idx]
        else:  # pragma: no cover - waveform validation rejects unknown kinds
            raise ConsistencyError(f"unhandled segment type {type(seg).__name__}")
        push(dts, lams)
        cursor = b
    push_gap(cursor, tau_b)

    if dt_parts:
        lam = np.concatenate(lam_parts)
        dt = np.concatenate(dt_parts)
    else:
        lam = np.zeros(0)
        dt = np.zeros(0)
    span = float(np.sum(dt))
    if abs(span - (tau_b - tau_a)) > 1e-9 * max(1.0, abs(tau_b)):
        raise ConsistencyError(
            f"grid covers {span:g} instead of {tau_b - tau_a:g}")
    return StepGrid(lam, dt, tau_a, tau_b)


@dataclass(frozen=True, eq=False)
class Propagator:
    """Unitary over ``[tau_a, tau_b]`` produced by a specific control."""

    matrix: np.ndarray
    tau_a: float
    tau_b: float


@dataclass(frozen=True, eq=False)
class Trajectory:
    taus: np.ndarray
    states: np.ndarray


def _check_unitary(u):
    n = u.shape[0]
    defect = float(np.max(np.abs(u.conj().T @ u - np.eye(n))))
    if defect > UNITARITY_TOL:
        raise ConsistencyError(f"propagator lost unitarity: defect {defect:g}")
    return u


def propagator(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
               tau_a: float = 0.0, tau_b: float | None = None,
               policy: StepPolicy = DEFAULT_POLICY) -> Propagator:
    grid = build_grid(spec, dipole, control, tau_a, tau_b, policy)
    u = _kernels.propagate(spec.energies, dipole.matrix, grid.lam, grid.dt)
    return Propagator(_check_unitary(u), grid.tau_a, grid.tau_b)


def evolve_state(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
                 psi0: np.ndarray | None = None,
                 tau_a: float = 0.0, tau_b: float | None = None,
                 policy: StepPolicy = DEFAULT_POLICY,
                 trajectory_stride: int = 0):
    """Evolve a state; with ``trajectory_stride > 0`` also record snapshots.

    Returns ``psi`` or ``(psi, Trajectory)``. The trajectory holds the state
    every ``trajectory_stride`` steps plus the endpoints; gaps are resolved
    at the policy step width so recorded times are roughly uniform.
    """
    if psi0 is None:
        psi0 = basis_state(spec.dim, spec.initial)
    psi0 = np.asarray(psi0, dtype=complex)
    if trajectory_stride < 0:
        raise ValueError("trajectory_stride must be >= 0")
    if trajectory_stride == 0:
        grid = build_grid(spec, dipole, control, tau_a, tau_b, policy)
        u = _kernels.propagate(spec.energies, dipole.matrix, grid.lam, grid.dt)
        return u @ psi0

    if policy.gap_dt is None:
        policy = StepPolicy(policy.samples_per_period, policy.amp_dt_factor,
                            policy.dt_cap, policy_dt(spec, dipole, control, policy),
                            policy.max_steps, policy.min_dt)
    grid = build_grid(spec, dipole, control, tau_a, tau_b, policy)
    u, snaps = _kernels.propagate(spec.energies, dipole.matrix, grid.lam, grid.dt,
                                  stride=trajectory_stride)
    edge_taus = grid.tau_a + np.cumsum(grid.dt)
    snap_idx = np.arange(1, snaps.shape[0] + 1) * trajectory_stride - 1
    taus = [grid.tau_a]
    states = [psi0]
    for row, j in enumerate(snap_idx):
        taus.append(float(edge_taus[j]))
        states.append(snaps[row] @ psi0)
    if grid.n_steps == 0 or snap_idx.size == 0 or snap_idx[-1] != grid.n_steps - 1:
        taus.append(grid.tau_b)
        states.append(u @ psi0)
    return u @ psi0, Trajectory(np.array(taus), np.array(states))


def population(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
               policy: StepPolicy = DEFAULT_POLICY) -> float:
    """Probability of reading out the measured level from the initial one."""
    psi = evolve_state(spec, dipole, control, policy=policy)
    amp = psi[spec.measured - 1]
    return float(np.real(amp * np.conj(amp)))
