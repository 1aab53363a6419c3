"""Synthesis of three-segment discriminating controls.

Each control interrogates one support pair (l, k) Ramsey-style:

1. a steering pulse takes the prepared level to ``|l>``,
2. a resonant drive ``xi * cos(w'_kl * (tau - tau1))`` runs for exactly
   ``1/xi^2``, accumulating measurement sensitivity ``1/(2*xi) + O(1)`` on
   the (l, k) dipole entry while every other entry stays at O(1),
3. a second steering pulse maps ``U(tau2, tau1) (|l> + 1j|k>)/sqrt(2)`` onto
   the measured level, which parks the population near the half-fringe where
   the read-out is most responsive.

Steering is seeded with resonant pulses from rotating-wave estimates (a
pi-pulse chain along the coupling graph, preceded by a phase-scanned half
pulse when the start state is a two-level superposition) and refined by
gradient ascent on the overlap fidelity over a zero-order-hold window.
Failure to reach the fidelity target raises instead of returning a control
that would silently miss its design point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize

from . import _kernels
from .errors import SteeringError, UncontrollableSystemError
from .propagate import (DEFAULT_POLICY, StepPolicy, _base_dt, _segment_dt,
                        propagator)
from .system import (DipoleMatrix, SystemSpec, basis_state, coupling_graph_connected,
                     coupling_path, field_scale_ratio, transition_frequency)
from .waveform import ControlWaveform, ResonantSegment, SampledSegment


@dataclass(frozen=True)
class SteerConfig:
    """Knobs for the steering synthesizer.

    ``xi_seed`` is the coupling strength of the rotating-wave seed pulses;
    ``amp_bound`` caps each optimized sample (in coupling units);
    ``headroom`` stretches the window beyond the seed so the optimizer has
    slack at the ends.
    """

    xi_seed: float = 0.05
    amp_bound: float = 0.25
    fidelity_target: float = 1.0 - 1e-6
    max_iter: int = 500
    headroom: float = 1.35
    phase_scan: int = 8


DEFAULT_STEER = SteerConfig()


@dataclass(frozen=True, eq=False)
class SteerResult:
    segment: SampledSegment | None
    fidelity: float
    duration: float
    iterations: int


@dataclass(frozen=True, eq=False)
class DiscriminatingControl:
    """One synthesized control and its design bookkeeping."""

    pair: tuple
    xi: float
    tau1: float
    tau2: float
    waveform: ControlWaveform
    f1: float
    f2: float
    psi2: np.ndarray

    @property
    def horizon(self) -> float:
        return self.waveform.horizon


def _fidelity(spec, dipole, lam, dt, psi_from, psi_to):
    u = _kernels.propagate(spec.energies, dipole.matrix, lam, dt)
    z = complex(np.vdot(psi_to, u @ psi_from))
    # unitarity roundoff can push |z|^2 a few ulp past 1
    return min(abs(z) ** 2, 1.0)


def _seed_candidates(spec, dipole, psi_from, psi_to, config):
    """Rotating-wave pulse plans, as lists of (pair, area, phase) pulses.

    Always includes the bare chain from the dominant start component to the
    dominant target component; when the start state has two significant
    components, half pulses over the scanned carrier phase collapse it onto
    either member before chaining.
    """
    weights = np.abs(psi_from) ** 2
    order = np.argsort(weights)[::-1]
    a_dom = int(order[0]) + 1
    target = int(np.argmax(np.abs(psi_to) ** 2)) + 1

    def chain(frm):
        path = coupling_path(dipole, frm, target)
        return [(edge, math.pi, 0.0) for edge in zip(path[:-1], path[1:])]

    candidates = [chain(a_dom)]
    if weights[order[1]] > 0.02:
        a_sub = int(order[1]) + 1
        pair = (min(a_dom, a_sub), max(a_dom, a_sub))
        if dipole.matrix[pair[0] - 1, pair[1] - 1] != 0.0:
            for phase in np.arange(config.phase_scan) * (2 * math.pi / config.phase_scan):
                for area in (math.pi / 4, math.pi / 2, 3 * math.pi / 4):
                    for land in (a_dom, a_sub):
                        candidates.append([(pair, area, float(phase)), *chain(land)])
    return candidates


def _render_seed(spec, dipole, pulses, h, n_steps, config):
    """Sample a pulse plan onto the window grid, in coupling units."""
    lam = np.zeros(n_steps)
    mids = (np.arange(n_steps) + 0.5) * h
    t0 = 0.0
    for (a, b), area, phase in pulses:
        mu_ab = abs(dipole.matrix[a - 1, b - 1])
        w_ab = abs(transition_frequency(spec, a, b))
        dur = area / (config.xi_seed * mu_ab)
        sel = (mids >= t0) & (mids < t0 + dur)
        lam[sel] += config.xi_seed * np.cos(w_ab * (mids[sel] - t0) + phase)
        t0 += dur
    return lam, t0


def steer(spec: SystemSpec, dipole: DipoleMatrix, psi_from, psi_to,
          config: SteerConfig = DEFAULT_STEER, start: float = 0.0,
          policy: StepPolicy = DEFAULT_POLICY) -> SteerResult:
    """Find a sampled pulse mapping ``psi_from`` to ``psi_to`` (up to phase).

    Returns an empty result when the states already overlap above the
    fidelity target. Raises UncontrollableSystemError for a disconnected
    coupling graph and SteeringError when refinement stalls below target.
    """
    psi_from = np.asarray(psi_from, dtype=complex)
    psi_to = np.asarray(psi_to, dtype=complex)
    f0 = abs(np.vdot(psi_to, psi_from)) ** 2
    if f0 >= config.fidelity_target:
        return SteerResult(None, f0, 0.0, 0)
    if not coupling_graph_connected(dipole):
        raise UncontrollableSystemError(
            "coupling graph is disconnected; steering cannot reach the target")

    ratio = field_scale_ratio(spec, dipole)
    h = _segment_dt(_base_dt(spec, policy), config.amp_bound, policy)

    # longest plan sets the window; all plans are padded into it
    plans = _seed_candidates(spec, dipole, psi_from, psi_to, config)
    durations = []
    for pulses in plans:
        durations.append(sum(area / (config.xi_seed * abs(dipole.matrix[a - 1, b - 1]))
                             for (a, b), area, _ in pulses))
    window = max(durations) * config.headroom
    n_steps = max(8, math.ceil(window / h))
    dt = np.full(n_steps, h)

    best_lam, best_f = None, -1.0
    for pulses in plans:
        lam, _ = _render_seed(spec, dipole, pulses, h, n_steps, config)
        f = _fidelity(spec, dipole, lam, dt, psi_from, psi_to)
        if f > best_f:
            best_lam, best_f = lam, f

    h0 = spec.energies
    mu = dipole.matrix

    def objective(x):
        z, dz = _kernels.overlap_grad(h0, mu, x, dt, psi_from, psi_to)
        f = abs(z) ** 2
        grad = 2.0 * np.real(np.conj(z) * dz)
        return 1.0 - f, -grad

    stop_at = 1.0 - (1.0 - config.fidelity_target) / 10.0
    bounds = [(-config.amp_bound, config.amp_bound)] * n_steps
    x = best_lam
    used = 0
    fid = best_f
    while used < config.max_iter and fid < stop_at:
        res = minimize(objective, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": min(60, config.max_iter - used),
                                "ftol": 1e-18, "gtol": 1e-14})
        x = res.x
        used += max(1, res.nit)
        fid = 1.0 - res.fun
        if res.nit == 0:
            break
    if fid < config.fidelity_target:
        raise SteeringError(
            f"steering stalled at fidelity {fid:.8f} "
            f"(target {config.fidelity_target:.8f}) after {used} iterations",
            best_fidelity=fid)
    seg = SampledSegment(start, h, x / ratio)
    return SteerResult(seg, float(fid), n_steps * h, used)


def psi2_target(spec: SystemSpec, dipole: DipoleMatrix, pair, xi: float,
                tau1: float, tau2: float,
                policy: StepPolicy = DEFAULT_POLICY) -> np.ndarray:
    """State the second steering pulse must map to the measured level:
    the interrogation propagator applied to ``(|l> + 1j|k>)/sqrt(2)``."""
    l, k = pair
    chi = (basis_state(spec.dim, l) + 1j * basis_state(spec.dim, k)) / math.sqrt(2.0)
    w_kl = abs(transition_frequency(spec, k, l))
    ratio = field_scale_ratio(spec, dipole)
    mid = ResonantSegment(tau1, tau2 - tau1, xi / ratio, w_kl)
    wf = ControlWaveform(tau2, (mid,))
    u = propagator(spec, dipole, wf, tau1, tau2, policy)
    return u.matrix @ chi


def build_discriminating_control(spec: SystemSpec, dipole: DipoleMatrix, pair,
                                 xi: float, config: SteerConfig = DEFAULT_STEER,
                                 policy: StepPolicy = DEFAULT_POLICY) -> DiscriminatingControl:
    """Assemble steer / interrogate / steer for one support pair."""
    l, k = pair
    if (l, k) not in dipole.support:
        raise SteeringError(f"pair {pair} is not in the dipole support")
    if not 0 < xi:
        raise SteeringError("interrogation strength xi must be positive")

    psi_i = basis_state(spec.dim, spec.initial)
    psi_l = basis_state(spec.dim, l)
    first = steer(spec, dipole, psi_i, psi_l, config, start=0.0, policy=policy)
    tau1 = first.duration
    tau2 = tau1 + 1.0 / xi ** 2

    psi2 = psi2_target(spec, dipole, pair, xi, tau1, tau2, policy)
    psi_f = basis_state(spec.dim, spec.measured)
    second = steer(spec, dipole, psi2, psi_f, config, start=tau2, policy=policy)
    horizon = tau2 + second.duration

    ratio = field_scale_ratio(spec, dipole)
    w_kl = abs(transition_frequency(spec, k, l))
    segments = []
    if first.segment is not None:
        segments.append(first.segment)
    segments.append(ResonantSegment(tau1, tau2 - tau1, xi / ratio, w_kl))
    if second.segment is not None:
        segments.append(second.segment)
    wf = ControlWaveform(horizon, tuple(segments))
    return DiscriminatingControl(tuple(pair), xi, tau1, tau2, wf,
                                 first.fidelity, second.fidelity, psi2)


def build_control_set(spec: SystemSpec, dipole: DipoleMatrix, xi: float,
                      config: SteerConfig = DEFAULT_STEER,
                      policy: StepPolicy = DEFAULT_POLICY) -> list:
    """One discriminating control per support pair, padded to a common
    horizon with zero field so they share one measurement schedule."""
    controls = [build_discriminating_control(spec, dipole, pair, xi, config, policy)
                for pair in dipole.support]
    top = max(c.horizon for c in controls)
    return [replace(c, waveform=c.waveform.padded_to(top)) for c in controls]
