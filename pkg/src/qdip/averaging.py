"""Second-order averaging of the resonant interrogation segment.

During the middle segment the field is ``xi * cos(w'_kl * (tau - tau1))`` in
coupling units, driving the (l, k) transition. In the interaction frame the
generator splits into a resonant part ``xi * mu'_lk * sigma_x^{lk} / 2`` and
a sum of oscillating terms; averaging the oscillations to second order in
``xi`` leaves a constant correction ``xi^2 * K`` built from pairs of terms
whose frequencies cancel. The propagator is then approximated by

    U_av(tau1 + s) = exp(-1j*H0'*s) @ expm(1j*(xi*mu'_lk/2*sigma_x + xi^2*K)*s)

up to an error of order ``xi`` uniformly on a ``1/xi^2`` window.

All level indices are 1-based; ``pair`` is ``(l, k)`` with ``l < k``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import _kernels
from .errors import ConsistencyError, DegenerateTransitionsError
from .propagate import Propagator, StepPolicy, build_grid
from .system import (DipoleMatrix, SystemSpec, field_scale_ratio, sigma_x,
                     sigma_y, transition_frequency)
from .waveform import ControlWaveform, ResonantSegment

# Frequencies closer to zero than this (relative to the smallest transition
# frequency involved) are treated as resonances that the averaging cannot
# handle; the non-degeneracy check keeps admissible systems away from it.
_RESONANCE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OscillatingTerm:
    """One term ``matrix * exp(1j*frequency*s)`` of the interaction-frame
    generator derivative, with the resonant DC part already removed."""

    frequency: float
    matrix: np.ndarray


def modulated_coupling_closed_form(spec: SystemSpec, pair, s):
    """Closed form of ``cos(w'_lk*s) * e^{1j*H0'*s} sigma_x^{lk} e^{-1j*H0'*s}``.

    Equals ``sigma_x/2 + cos(2*w'_lk*s)*sigma_x/2 - sin(2*w'_lk*s)*sigma_y/2``
    on the (l, k) block. The sign of the sigma_y term follows from
    ``|l><k| = (sigma_x + 1j*sigma_y)/2`` and ``w'_lk = E'_l - E'_k``.
    """
    l, k = pair
    n = spec.dim
    w = transition_frequency(spec, l, k)
    sx = sigma_x(n, l, k)
    sy = sigma_y(n, l, k)
    s = np.asarray(s, dtype=float)
    out = (0.5 * sx
           + 0.5 * np.cos(2.0 * w * s)[..., None, None] * sx
           - 0.5 * np.sin(2.0 * w * s)[..., None, None] * sy)
    return out


def interaction_components(spec: SystemSpec, dipole: DipoleMatrix, pair):
    """Oscillating terms of the interaction-frame generator derivative.

    The derivative of ``cos(w'_kl*s) * e^{1j*H0'*s} mu' e^{-1j*H0'*s}`` minus
    its resonant DC part is a sum over ordered index pairs (m, n) with
    ``mu'_mn != 0`` of terms ``(mu'_mn/2)|m><n|`` oscillating at
    ``w'_mn - w'_kl`` and ``w'_mn + w'_kl``, excluding the two combinations
    that are exactly DC. Raises when any surviving frequency is (near) zero,
    which would signal a degeneracy the construction cannot average over.
    """
    l, k = pair
    n = spec.dim
    w_kl = transition_frequency(spec, k, l)
    terms = []
    scale = abs(w_kl)
    for m in range(1, n + 1):
        for p in range(1, n + 1):
            if m == p or dipole.matrix[m - 1, p - 1] == 0.0:
                continue
            w_mp = transition_frequency(spec, m, p)
            a = np.zeros((n, n), dtype=complex)
            a[m - 1, p - 1] = 0.5 * dipole.matrix[m - 1, p - 1]
            for sign in (-1.0, 1.0):
                if sign < 0 and (m, p) == (k, l):
                    continue
                if sign > 0 and (m, p) == (l, k):
                    continue
                freq = w_mp + sign * w_kl
                if abs(freq) < _RESONANCE_TOL * scale:
                    raise DegenerateTransitionsError(
                        f"transition ({m},{p}) is resonant with the ({l},{k}) drive")
                terms.append(OscillatingTerm(freq, a))
    return terms


def k_matrix(spec: SystemSpec, dipole: DipoleMatrix, pair) -> np.ndarray:
    """Second-order secular correction K for the (l, k) interrogation drive.

    With ``H_I(s) = sum_j A_j e^{1j*W_j*s} / (1j*W_j)`` the time average of
    ``H_I * dH_I/ds`` keeps exactly the pairs with ``W_j + W_j' = 0``, giving
    ``1j*K = <H_I dH_I/ds>`` and

        K = - sum_{W_j + W_j' = 0} A_j A_j' / W_j.

    K is Hermitian; every term must find at least one partner or the term
    bookkeeping is broken.
    """
    terms = interaction_components(spec, dipole, pair)
    freqs = np.array([t.frequency for t in terms])
    scale = float(np.min(np.abs(freqs)))
    n = spec.dim
    k = np.zeros((n, n), dtype=complex)
    matched = np.zeros(len(terms), dtype=bool)
    for j, tj in enumerate(terms):
        for jp, tjp in enumerate(terms):
            if abs(tj.frequency + tjp.frequency) < 1e-9 * scale:
                matched[j] = True
                k -= (tj.matrix @ tjp.matrix) / tj.frequency
    if not np.all(matched):
        raise ConsistencyError("an oscillating term has no cancelling partner")
    if np.max(np.abs(k - k.conj().T)) > 1e-12 * max(1.0, np.max(np.abs(k))):
        raise ConsistencyError("secular correction is not Hermitian")
    return k


def u_averaged(spec: SystemSpec, dipole: DipoleMatrix, pair, xi: float,
               tau: float, k: np.ndarray | None = None) -> Propagator:
    """Averaged propagator over ``[0, tau]`` of the resonant segment.

    ``tau`` is elapsed time since the segment start; the phase convention
    matches a drive that starts at cosine phase zero.
    """
    l, kk = pair
    n = spec.dim
    if tau * xi * xi > 1.0 + 1e-12:
        warnings.warn(f"tau={tau:g} exceeds the 1/xi^2 validity window",
                      stacklevel=2)
    if k is None:
        k = k_matrix(spec, dipole, pair)
    mu_lk = dipole.matrix[l - 1, kk - 1]
    gen = xi * mu_lk / 2.0 * sigma_x(n, l, kk) + xi * xi * k
    u = np.exp(-1j * spec.energies * tau)[:, None] * expm(1j * gen * tau)
    return Propagator(u, 0.0, tau)


def conjugation_check(spec: SystemSpec, dipole: DipoleMatrix, pair, xi: float,
                      taus, k: np.ndarray | None = None) -> float:
    """Max drift of ``sigma_x`` under conjugation by the averaged flow.

    The averaged generator is ``xi*mu'_lk/2*sigma_x`` plus the ``xi^2*K``
    correction; only the correction fails to commute with ``sigma_x``, so

        exp(-1j*gen*tau) sigma_x exp(+1j*gen*tau) - sigma_x

    stays of order ``xi`` uniformly in ``tau`` (the correction tilts the
    rotation axis by an O(xi) angle rather than accumulating). Returns the
    largest max-norm deviation over the sample times; with ``k`` forced to
    zero the deviation vanishes identically.
    """
    l, kk = pair
    n = spec.dim
    if k is None:
        k = k_matrix(spec, dipole, pair)
    sx = sigma_x(n, l, kk)
    gen = xi * dipole.matrix[l - 1, kk - 1] / 2.0 * sx + xi * xi * k
    worst = 0.0
    for tau in np.asarray(taus, dtype=float):
        rot = expm(-1j * gen * float(tau))
        drift = rot @ sx @ rot.conj().T - sx
        worst = max(worst, float(np.max(np.abs(drift))))
    return worst


def averaging_error(spec: SystemSpec, dipole: DipoleMatrix, pair, xi: float,
                    n_samples: int = 200,
                    policy: StepPolicy | None = None) -> float:
    """Sup-norm gap between the full and averaged propagators.

    Simulates the resonant segment over the whole ``1/xi^2`` window and
    returns the largest spectral-norm difference against ``u_averaged`` at
    roughly ``n_samples`` evenly spread times. The default step policy caps
    ``dt`` at ``5*xi`` so the integrator's own second-order drift over the
    long window stays an O(xi) contribution and the ratio error/xi remains
    meaningful as xi shrinks.
    """
    l, kk = pair
    horizon = 1.0 / (xi * xi)
    freq = abs(transition_frequency(spec, kk, l))
    ratio = field_scale_ratio(spec, dipole)
    control = ControlWaveform(
        horizon, (ResonantSegment(0.0, horizon, xi / ratio, freq),))
    if policy is None:
        policy = StepPolicy(dt_cap=5.0 * xi)
    grid = build_grid(spec, dipole, control, 0.0, None, policy)
    stride = max(1, -(-grid.n_steps // n_samples))
    u, snaps = _kernels.propagate(spec.energies, dipole.matrix, grid.lam,
                                  grid.dt, stride=stride)
    times = np.cumsum(grid.dt)
    snap_times = times[stride - 1::stride][:snaps.shape[0]]
    k = k_matrix(spec, dipole, pair)
    worst = 0.0
    for tau, full in zip(snap_times, snaps):
        approx = u_averaged(spec, dipole, pair, xi, float(tau), k=k).matrix
        worst = max(worst, float(np.linalg.norm(full - approx, 2)))
    approx = u_averaged(spec, dipole, pair, xi, float(times[-1]), k=k).matrix
    return max(worst, float(np.linalg.norm(u - approx, 2)))
