"""Local identification of the dipole support entries from population data.

The fit minimizes

    J(mu_hat) = sum_k (P_k(mu_hat) - P_k^rec)^2

over the support coordinates, where each record P_k^rec is a measured
population for one control, possibly with additive Gaussian noise. The
Gauss-Newton matrix used throughout is the residual-free outer product

    H = sum_k grad P_k grad P_k^T,

which is exact at the truth point (residuals vanish there) and whose
smallest eigenvalue is the local convexity constant alpha. For a
discriminating control set at strength xi the diagonal entries sit near
1/(4 xi^2), so alpha grows quadratically as xi shrinks and the noise
radius sqrt(var/alpha) shrinks linearly.

Candidates never leave the support: off-support entries stay exactly zero,
and no renormalization happens between iterates (the coordinates are the
normalized entries themselves).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SchemaError
from .propagate import DEFAULT_POLICY, StepPolicy
from .ramsey import DiscriminatingControl
from .sensitivity import dp_dmu
from .system import DipoleMatrix, SystemSpec
from .waveform import ControlWaveform

GRAD_TOL = 1e-10
MAX_ITERATIONS = 100
_DAMPING_GROWTH = 8.0
_DAMPING_SHRINK = 3.0
_MAX_REJECTS = 25


@dataclass(frozen=True)
class MeasurementRecord:
    """One recorded population for one control.

    Noisy values are kept raw; they may leave [0, 1] and clipping would
    bias the fit toward the interior.
    """

    control_id: str
    p_measured: float
    variance: float = 0.0
    seed: int | None = None


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    mu_hat: DipoleMatrix
    cost: float
    grad_norm: float
    hessian: np.ndarray
    alpha_hat: float
    iterations: int
    converged: bool
    message: str = ""


@dataclass(frozen=True, eq=False)
class AlphaReport:
    """Convexity certificate for a control set at the truth point."""

    alpha_hat: float
    hessian: np.ndarray
    xi: float | None = None
    alpha_target: float | None = None
    certified: bool | None = None
    xi_needed: float | None = None


@dataclass(frozen=True, eq=False)
class NoiseStudyRow:
    variance: float
    rms_error: float
    predicted_radius: float
    nonconverged: int
    trials: int
    errors: np.ndarray


@dataclass(frozen=True, eq=False)
class NoiseStudyResult:
    rows: tuple
    alpha_hat: float
    seed: int


def _waveform_of(control) -> ControlWaveform:
    if isinstance(control, DiscriminatingControl):
        return control.waveform
    if isinstance(control, ControlWaveform):
        return control
    raise SchemaError(f"not a control: {type(control).__name__}")


def _control_id(control, index: int) -> str:
    if isinstance(control, DiscriminatingControl):
        l, k = control.pair
        return f"pair-{l}-{k}"
    return f"control-{index}"


def _common_xi(controls) -> float | None:
    xis = {c.xi for c in controls if isinstance(c, DiscriminatingControl)}
    if len(xis) == 1:
        return xis.pop()
    return None


def measure_records(spec: SystemSpec, dipole: DipoleMatrix, controls,
                    variance: float = 0.0, seed=None,
                    policy: StepPolicy = DEFAULT_POLICY):
    """Simulate the measured populations, optionally with Gaussian noise.

    ``seed`` feeds ``numpy.random.default_rng`` and may be a sequence, so
    callers can derive independent per-trial streams. With ``variance`` 0
    the records are exact and no generator is created.
    """
    if variance < 0.0:
        raise SchemaError("variance must be nonnegative")
    noise = np.zeros(len(controls))
    if variance > 0.0:
        rng = np.random.default_rng(seed)
        noise = rng.normal(0.0, np.sqrt(variance), size=len(controls))
    seed_field = None
    if seed is not None:
        seed_field = int(np.asarray(seed).reshape(-1)[-1])
    records = []
    for idx, (control, nu) in enumerate(zip(controls, noise)):
        sens = dp_dmu(spec, dipole, _waveform_of(control), policy,
                      pairs=dipole.support)
        records.append(MeasurementRecord(_control_id(control, idx),
                                         sens.population + float(nu),
                                         variance, seed_field))
    return tuple(records)


def _residuals_jacobian(spec, candidate, controls, records, policy):
    """Residuals r_k = P_k(candidate) - P_k^rec and rows grad P_k."""
    m = len(candidate.support)
    r = np.zeros(len(records))
    jac = np.zeros((len(records), m))
    for k, (control, rec) in enumerate(zip(controls, records)):
        sens = dp_dmu(spec, candidate, _waveform_of(control), policy,
                      pairs=candidate.support)
        r[k] = sens.population - rec.p_measured
        jac[k] = sens.values
    return r, jac


def cost_j(spec: SystemSpec, candidate: DipoleMatrix, controls, records,
           policy: StepPolicy = DEFAULT_POLICY) -> float:
    """Sum of squared residuals between candidate predictions and records."""
    if len(controls) != len(records):
        raise SchemaError("one record per control required")
    r, _ = _residuals_jacobian(spec, candidate, controls, records, policy)
    return float(r @ r)


def hessian_j(spec: SystemSpec, candidate: DipoleMatrix, controls,
              policy: StepPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Gauss-Newton matrix sum_k grad P_k grad P_k^T on the support.

    Symmetric positive semidefinite by construction; rows/columns follow
    ``candidate.support`` ordering.
    """
    m = len(candidate.support)
    h = np.zeros((m, m))
    for control in controls:
        sens = dp_dmu(spec, candidate, _waveform_of(control), policy,
                      pairs=candidate.support)
        h += np.outer(sens.values, sens.values)
    return h


def alpha_convexity(spec: SystemSpec, dipole: DipoleMatrix, controls,
                    alpha_target: float | None = None,
                    policy: StepPolicy = DEFAULT_POLICY) -> AlphaReport:
    """Smallest Gauss-Newton eigenvalue at the truth, with certification.

    When ``alpha_target`` is given and missed, the report extrapolates the
    interrogation strength that would reach it from the 1/(4 xi^2) scaling
    (possible only when the controls share one xi).
    """
    m = len(dipole.support)
    if not controls:
        return AlphaReport(0.0, np.zeros((m, m)), _common_xi(controls),
                           alpha_target,
                           None if alpha_target is None else alpha_target <= 0.0)
    h = hessian_j(spec, dipole, controls, policy)
    alpha = float(np.linalg.eigvalsh(h)[0])
    xi = _common_xi(controls)
    certified = None
    xi_needed = None
    if alpha_target is not None:
        certified = alpha >= alpha_target
        if not certified and xi is not None and alpha > 0.0:
            xi_needed = xi * np.sqrt(alpha / alpha_target)
    return AlphaReport(alpha, h, xi, alpha_target, certified, xi_needed)


def local_identify(spec: SystemSpec, controls, records, start: DipoleMatrix,
                   policy: StepPolicy = DEFAULT_POLICY,
                   max_iter: int = MAX_ITERATIONS,
                   grad_tol: float = GRAD_TOL) -> IdentificationResult:
    """Damped Gauss-Newton descent on the support coordinates.

    The step solves (H + damping I) d = -J^T r with H = J^T J; damping is
    zero while steps keep decreasing the cost and grows geometrically when
    one is rejected or H is singular. Stops when the gradient 2 J^T r
    drops below ``grad_tol`` (checked before the first step, so starting
    at a zero of the cost takes zero iterations) or after ``max_iter``
    accepted steps. A cost that cannot be decreased under heavy damping
    returns an explicit non-convergence result rather than raising.
    """
    if len(controls) != len(records):
        raise SchemaError("one record per control required")
    if not controls:
        raise SchemaError("at least one control required")

    candidate = start
    x = np.array(candidate.support_values(), dtype=float)
    r, jac = _residuals_jacobian(spec, candidate, controls, records, policy)
    cost = float(r @ r)
    damping = 0.0
    iterations = 0
    converged = False
    message = ""

    for _ in range(max_iter):
        grad = 2.0 * jac.T @ r
        if np.linalg.norm(grad) <= grad_tol:
            converged = True
            break
        h = jac.T @ jac
        scale = max(np.trace(h) / len(x), np.finfo(float).tiny)
        accepted = False
        for _ in range(_MAX_REJECTS):
            try:
                step = -np.linalg.solve(h + damping * scale * np.eye(len(x)),
                                        jac.T @ r)
            except np.linalg.LinAlgError:
                damping = max(_DAMPING_GROWTH * damping, 1e-4)
                continue
            trial = candidate.with_support_entries(x + step)
            r_new, jac_new = _residuals_jacobian(spec, trial, controls,
                                                 records, policy)
            cost_new = float(r_new @ r_new)
            if cost_new < cost or np.linalg.norm(2.0 * jac_new.T @ r_new) <= grad_tol:
                x = x + step
                candidate, r, jac, cost = trial, r_new, jac_new, cost_new
                damping /= _DAMPING_SHRINK
                if damping < 1e-14:
                    damping = 0.0
                accepted = True
                break
            damping = max(_DAMPING_GROWTH * damping, 1e-4)
        if not accepted:
            message = "cost could not be decreased under damping"
            break
        iterations += 1
    else:
        message = f"gradient tolerance not reached in {max_iter} iterations"

    grad = 2.0 * jac.T @ r
    if not converged and np.linalg.norm(grad) <= grad_tol:
        converged = True
        message = ""
    h = jac.T @ jac
    alpha = float(np.linalg.eigvalsh(h)[0]) if len(x) else 0.0
    return IdentificationResult(candidate, cost, float(np.linalg.norm(grad)),
                                h, alpha, iterations, converged, message)


def noise_study(spec: SystemSpec, dipole: DipoleMatrix, controls, variances,
                trials: int, seed: int,
                policy: StepPolicy = DEFAULT_POLICY) -> NoiseStudyResult:
    """Empirical identification error against the predicted noise radius.

    For each variance, ``trials`` independent record sets are drawn (one
    Gaussian draw per control, stream seeded by (seed, variance index,
    trial) so results are order-independent) and identified starting from
    the truth. Per-trial error is the RMS over support entries of
    mu_hat - mu; each row reports the quadratic mean of those errors next
    to the predicted radius sqrt(variance/alpha). Non-convergent trials
    are counted and excluded from the error aggregate.
    """
    if trials <= 0:
        raise SchemaError("trials must be positive")
    report = alpha_convexity(spec, dipole, controls, policy=policy)
    alpha = report.alpha_hat
    rows = []
    for vi, var in enumerate(variances):
        if var < 0.0:
            raise SchemaError("variance must be nonnegative")
        errors = []
        bad = 0
        for trial in range(trials):
            records = measure_records(spec, dipole, controls, var,
                                      seed=[seed, vi, trial], policy=policy)
            result = local_identify(spec, controls, records, dipole,
                                    policy=policy)
            if not result.converged:
                bad += 1
                continue
            delta = (np.array(result.mu_hat.support_values())
                     - np.array(dipole.support_values()))
            errors.append(np.sqrt(np.mean(delta ** 2)))
        errors = np.asarray(errors)
        rms = float(np.sqrt(np.mean(errors ** 2))) if errors.size else float("nan")
        predicted = float(np.sqrt(var / alpha)) if alpha > 0.0 else float("inf")
        rows.append(NoiseStudyRow(float(var), rms, predicted, bad, trials,
                                  errors))
    return NoiseStudyResult(tuple(rows), alpha, seed)
