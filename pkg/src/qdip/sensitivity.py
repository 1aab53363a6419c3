"""Derivatives of the dynamics with respect to dipole entries.

Everything here differentiates the discrete propagator exactly (see
``_kernels``), so the finite-difference oracle agrees to roundoff at matched
step grids and the continuum sensitivity is recovered as the grid refines.
The measurement derivative follows by the product rule: with
``z = <f|U(T,0)|i>`` and ``dz_p = <f|U(T,0) G_p|i>``,

    dP/dmu'_p = 2 Re(dz_p * conj(z)).

Splitting the horizon at interior points and chaining the per-interval
derivatives is exact for the discrete map, which is what the optional
``breakpoints`` argument exercises.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import SchemaError
from .propagate import DEFAULT_POLICY, StepPolicy, build_grid
from .system import DipoleMatrix, SystemSpec, basis_state
from .waveform import ControlWaveform

FD_NOISE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class SensitivityVector:
    """Measurement derivatives aligned with the dipole support ordering.

    ``population`` is the measured population the derivatives belong to; it
    falls out of the same propagation, and downstream fitting wants both.
    """

    pairs: tuple
    values: np.ndarray
    population: float = float("nan")

    def __getitem__(self, pair):
        for p, v in zip(self.pairs, self.values):
            if p == tuple(pair):
                return float(v)
        raise KeyError(f"pair {pair} not in support {self.pairs}")


def _pairs_array(pairs, dim):
    arr = np.asarray([(l - 1, k - 1) for l, k in pairs], dtype=np.int64)
    if arr.size and (arr.min() < 0 or arr.max() >= dim):
        raise SchemaError(f"pair indices outside 1..{dim}")
    return arr.reshape(-1, 2)


def du_dmu(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
           pair, tau_a: float = 0.0, tau_b: float | None = None,
           policy: StepPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Derivative of ``U(tau_b, tau_a)`` wrt the normalized entry at ``pair``.

    ``pair`` is 1-based ``(l, k)``; the perturbation moves the symmetric
    entries ``(l, k)`` and ``(k, l)`` together.
    """
    grid = build_grid(spec, dipole, control, tau_a, tau_b, policy)
    pairs = _pairs_array([pair], spec.dim)
    u, g = _kernels.propagate_sens(spec.energies, dipole.matrix, grid.lam,
                                   grid.dt, pairs)
    return u @ g[0]


def dp_dmu(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
           policy: StepPolicy = DEFAULT_POLICY, pairs=None,
           breakpoints=None) -> SensitivityVector:
    """Gradient of the measured population wrt the support entries.

    ``breakpoints`` optionally splits the horizon into subintervals whose
    contributions are chained; the result is identical to the single-pass
    computation whenever the breakpoints sit on segment boundaries.
    """
    if pairs is None:
        pairs = dipole.support
    pairs = tuple(tuple(p) for p in pairs)
    parr = _pairs_array(pairs, spec.dim)
    psi_i = basis_state(spec.dim, spec.initial)
    psi_f = basis_state(spec.dim, spec.measured)

    if breakpoints is None:
        grid = build_grid(spec, dipole, control, 0.0, None, policy)
        u, g = _kernels.propagate_sens(spec.energies, dipole.matrix,
                                       grid.lam, grid.dt, parr)
        z = complex(np.vdot(psi_f, u @ psi_i))
        dz = np.array([np.vdot(psi_f, u @ (g[p] @ psi_i)) for p in range(len(pairs))])
    else:
        cuts = [0.0, *sorted(float(b) for b in breakpoints), control.horizon]
        if any(b < 0.0 or b > control.horizon for b in cuts):
            raise SchemaError("breakpoints must lie inside [0, horizon]")
        pieces = []
        for a, b in zip(cuts[:-1], cuts[1:]):
            grid = build_grid(spec, dipole, control, a, b, policy)
            pieces.append(_kernels.propagate_sens(spec.energies, dipole.matrix,
                                                  grid.lam, grid.dt, parr))
        # prefixes[s] = U(cut_s, 0) |i>, suffixes[s] = <f| U(T, cut_{s+1})
        prefixes = [psi_i]
        for u_s, _ in pieces[:-1]:
            prefixes.append(u_s @ prefixes[-1])
        suffixes = [psi_f.conj()]
        for u_s, _ in reversed(pieces[1:]):
            suffixes.append(suffixes[-1] @ u_s)
        suffixes = suffixes[::-1]
        z = complex(suffixes[-1] @ (pieces[-1][0] @ prefixes[-1]))
        dz = np.zeros(len(pairs), dtype=complex)
        for (u_s, g_s), pre, suf in zip(pieces, prefixes, suffixes):
            for p in range(len(pairs)):
                dz[p] += suf @ (u_s @ (g_s[p] @ pre))
    values = 2.0 * np.real(dz * np.conj(z))
    return SensitivityVector(pairs, values, float(np.abs(z) ** 2))


def fd_oracle(spec: SystemSpec, dipole: DipoleMatrix, control: ControlWaveform,
              pair, h: float = 1e-5, policy: StepPolicy = DEFAULT_POLICY) -> float:
    """Central finite difference of the measured population wrt one entry.

    Independent check for ``dp_dmu``: re-propagates with the entry shifted by
    ``+-h`` on the same step grid. Warns when ``h`` is small enough that
    roundoff in the populations dominates the quotient.
    """
    if h <= 0:
        raise SchemaError("finite-difference step must be positive")
    if h < FD_NOISE_FLOOR:
        warnings.warn(f"fd step {h:g} is below the roundoff floor {FD_NOISE_FLOOR:g}; "
                      "the quotient will be noise-dominated", stacklevel=2)
    l, k = pair
    grid = build_grid(spec, dipole, control, 0.0, None, policy)
    psi_i = basis_state(spec.dim, spec.initial)
    fi = spec.measured - 1
    out = []
    for sign in (+1.0, -1.0):
        m = np.array(dipole.matrix)
        m[l - 1, k - 1] += sign * h
        m[k - 1, l - 1] += sign * h
        u = _kernels.propagate(spec.energies, m, grid.lam, grid.dt)
        amp = (u @ psi_i)[fi]
        out.append(float(np.real(amp * np.conj(amp))))
    return (out[0] - out[1]) / (2.0 * h)
