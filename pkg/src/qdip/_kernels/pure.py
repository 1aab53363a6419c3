"""NumPy fallback kernels.

Each step applies the exponential midpoint rule: with the midpoint coupling
``lam_j`` held fixed over a step of width ``dt_j``,

    U <- exp(-1j * dt_j * (diag(h0) - lam_j * mu)) @ U.

The step Hamiltonian is real symmetric, so the exponential comes from a real
eigendecomposition and every step is exactly unitary up to roundoff.

Derivatives are those of the discrete map itself, not a quadrature of the
continuum formula. For ``E = exp(-1j*dt*A)`` and a symmetric direction ``B``,

    E^+ dE = 1j*dt * V (Phi o (V^T B V)) V^T,
    Phi_ab = phi(dt*(w_a - w_b)),   phi(t) = (e^{1j t} - 1)/(1j t),

with ``A = V diag(w) V^T``. Accumulating these step terms gives gradients
that match finite differences of the discrete dynamics to roundoff, and
converge to the continuum sensitivity as the step size shrinks.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _phi_matrix(dt, w):
    """phi(dt*(w_a - w_b)) elementwise; phi(t) = (e^{1j t}-1)/(1j t), phi(0)=1."""
    theta = dt * (w[:, None] - w[None, :])
    return np.exp(0.5j * theta) * np.sinc(theta / (2.0 * np.pi))


def _step_factors(h0, mu, lam, dt):
    """Eigendecompose every step Hamiltonian and build the step unitaries.

    Returns (w, v, expm) with shapes (S,N), (S,N,N), (S,N,N);
    ``expm[j] = exp(-1j*dt[j]*(diag(h0) - lam[j]*mu))``.
    """
    s = lam.shape[0]
    n = h0.shape[0]
    a = np.zeros((s, n, n))
    a -= lam[:, None, None] * mu[None, :, :]
    idx = np.arange(n)
    a[:, idx, idx] += h0[None, :]
    w, v = np.linalg.eigh(a)
    phases = np.exp(-1j * dt[:, None] * w)
    expm = (v * phases[:, None, :]) @ np.swapaxes(v, 1, 2)
    return w, v, expm


def propagate(h0, mu, lam, dt, u0=None, stride=0):
    """Propagate over all steps; optionally collect strided snapshots.

    Returns ``u`` or ``(u, snaps)`` where ``snaps[k]`` is the propagator
    after step ``(k+1)*stride``.
    """
    h0 = np.asarray(h0, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    dt = np.asarray(dt, dtype=float)
    n = h0.shape[0]
    u = np.eye(n, dtype=complex) if u0 is None else np.array(u0, dtype=complex)
    s = lam.shape[0]
    snaps = []
    if s == 0:
        return (u, np.zeros((0, n, n), dtype=complex)) if stride > 0 else u

    nonzero = lam != 0.0
    expm = np.empty((s, n, n), dtype=complex)
    if np.any(nonzero):
        _, _, expm[nonzero] = _step_factors(h0, mu, lam[nonzero], dt[nonzero])
    if not np.all(nonzero):
        # field-free steps are diagonal phase factors, no eigensolve needed
        zdt = dt[~nonzero]
        ph = np.exp(-1j * zdt[:, None] * h0[None, :])
        diag = np.zeros((zdt.shape[0], n, n), dtype=complex)
        idx = np.arange(n)
        diag[:, idx, idx] = ph
        expm[~nonzero] = diag

    for j in range(s):
        u = expm[j] @ u
        if stride > 0 and (j + 1) % stride == 0:
            snaps.append(u.copy())
    if stride > 0:
        return u, np.array(snaps).reshape(len(snaps), n, n)
    return u


def propagate_sens(h0, mu, lam, dt, pairs, u0=None):
    """Propagate and accumulate dipole-entry derivatives of the discrete map.

    ``pairs`` is an (P,2) int array of 0-based index pairs (l,k), l<k.
    Returns ``(u, g)`` with ``g[p]`` such that ``dU/dmu_p = u @ g[p]``
    (a symmetric perturbation on both (l,k) and (k,l)).
    """
    h0 = np.asarray(h0, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    dt = np.asarray(dt, dtype=float)
    pairs = np.asarray(pairs, dtype=int)
    n = h0.shape[0]
    npair = pairs.shape[0]
    u = np.eye(n, dtype=complex) if u0 is None else np.array(u0, dtype=complex)
    g = np.zeros((npair, n, n), dtype=complex)
    s = lam.shape[0]
    if s == 0:
        return u, g

    nonzero = np.flatnonzero(lam)
    w, v, expm_nz = (None, None, None)
    if nonzero.size:
        w, v, expm_nz = _step_factors(h0, mu, lam[nonzero], dt[nonzero])
        phi = np.exp(0.5j * dt[nonzero, None, None] * (w[:, :, None] - w[:, None, :]))
        phi *= np.sinc(dt[nonzero, None, None] * (w[:, :, None] - w[:, None, :]) / (2.0 * np.pi))
        # phi o (V^T sigma_x^{lk} V), batched over steps, per pair
        kernels = np.empty((npair, nonzero.size, n, n), dtype=complex)
        for p, (l, k) in enumerate(pairs):
            rows_l = v[:, l, :]
            rows_k = v[:, k, :]
            stilde = rows_l[:, :, None] * rows_k[:, None, :]
            stilde = stilde + np.swapaxes(stilde, 1, 2)
            kernels[p] = phi * stilde

    pos = 0
    for j in range(s):
        if lam[j] == 0.0:
            # diag(exp(-1j*dt*h0)) @ u, and no dipole derivative on this step
            u = np.exp(-1j * dt[j] * h0)[:, None] * u
            continue
        vt_u = v[pos].T @ u
        coeff = 1j * dt[j] * lam[j]
        for p in range(npair):
            g[p] += coeff * (vt_u.conj().T @ (kernels[p, pos] @ vt_u))
        u = expm_nz[pos] @ u
        pos += 1
    return u, g


def overlap_grad(h0, mu, lam, dt, psi0, psif):
    """Overlap ``z = <psif|U|psi0>`` and its gradient wrt each step coupling.

    Returns ``(z, dz)`` with ``dz[j] = dz/dlam_j`` for the discrete map.
    Used by the steering optimizer, so every step is differentiated even
    where the coupling is currently zero.
    """
    h0 = np.asarray(h0, dtype=float)
    mu = np.asarray(mu, dtype=float)
    lam = np.asarray(lam, dtype=float)
    dt = np.asarray(dt, dtype=float)
    psi0 = np.asarray(psi0, dtype=complex)
    psif = np.asarray(psif, dtype=complex)
    n = h0.shape[0]
    s = lam.shape[0]
    if s == 0:
        return complex(np.vdot(psif, psi0)), np.zeros(0, dtype=complex)

    w, v, expm = _step_factors(h0, mu, lam, dt)
    fwd = np.empty((s + 1, n), dtype=complex)
    fwd[0] = psi0
    for j in range(s):
        fwd[j + 1] = expm[j] @ fwd[j]
    z = complex(np.vdot(psif, fwd[s]))

    dz = np.empty(s, dtype=complex)
    bwd = psif.copy()
    for j in range(s - 1, -1, -1):
        bwd = expm[j].conj().T @ bwd
        mtilde = v[j].T @ mu @ v[j]
        phi = _phi_matrix(dt[j], w[j])
        inner = (phi * mtilde) @ (v[j].T @ fwd[j])
        dz[j] = 1j * dt[j] * np.vdot(bwd, v[j] @ inner)
    return z, dz
