"""Scenario-driven command line interface.

Every subcommand consumes a scenario JSON file:

    {
      "system": "path/to/system.json",
      "dipole": "path/to/dipole.json",      # optional, overrides the system file's
      "task": "simulate",
      "seed": 0,                            # optional
      "output_dir": "out",                  # optional, flag overrides
      "params": { ... task parameters ... }
    }

Paths are resolved relative to the scenario file. Each run writes its
artifacts plus a ``manifest.json`` recording the tool version, SHA-256 of
every input file, and the fully resolved parameters; nothing time-dependent
goes in, so a rerun with the same seed reproduces every byte. Failures exit
nonzero after printing a single JSON object with ``error`` and ``message``
fields.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .averaging import averaging_error, conjugation_check, k_matrix
from .errors import QdipError, SchemaError
from .identify import (alpha_convexity, local_identify, measure_records,
                       noise_study)
from .propagate import evolve_state
from .ramsey import DEFAULT_STEER, SteerConfig, build_control_set, \
    build_discriminating_control
from .sensitivity import dp_dmu, fd_oracle
from .system import DipoleMatrix, basis_state, load_system
from .waveform import empty_waveform, load_control, save_control

TASKS = ("simulate", "sensitivity", "synthesize", "verify-lemma",
         "identify", "noise-study", "certify-alpha")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    return value


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True)
                    + "\n")


class Scenario:
    """Resolved scenario file: system, dipole, task, parameters, paths."""

    def __init__(self, path):
        self.path = Path(path)
        try:
            data = json.loads(self.path.read_text())
        except FileNotFoundError:
            raise SchemaError(f"scenario file not found: {path}")
        except json.JSONDecodeError as exc:
            raise SchemaError(f"scenario is not valid JSON: {exc}")
        if not isinstance(data, dict):
            raise SchemaError("scenario must be a JSON object")
        for key in ("system", "task"):
            if key not in data:
                raise SchemaError(f"scenario is missing the '{key}' field")
        if data["task"] not in TASKS:
            raise SchemaError(f"unknown task {data['task']!r}; "
                              f"expected one of {', '.join(TASKS)}")
        self.task = data["task"]
        self.params = data.get("params", {})
        if not isinstance(self.params, dict):
            raise SchemaError("'params' must be an object")
        self.seed = int(data.get("seed", 0))
        self.output_dir = data.get("output_dir", "qdip-out")

        base = self.path.parent
        self.system_path = (base / data["system"]).resolve()
        if not self.system_path.exists():
            raise SchemaError(f"system file not found: {self.system_path}")
        self.inputs = {"scenario": self.path.resolve(),
                       "system": self.system_path}
        self.dipole_path = None
        if "dipole" in data:
            self.dipole_path = (base / data["dipole"]).resolve()
            if not self.dipole_path.exists():
                raise SchemaError(f"dipole file not found: {self.dipole_path}")
            self.inputs["dipole"] = self.dipole_path

    def load(self):
        spec, dipole = load_system(self.system_path)
        if self.dipole_path is not None:
            data = json.loads(self.dipole_path.read_text())
            matrix = data.get("dipole", data) if isinstance(data, dict) else data
            dipole = DipoleMatrix.from_physical(matrix)
        return spec, dipole

    def input_path(self, name: str) -> Path:
        value = self.params.get(name)
        if not isinstance(value, str):
            raise SchemaError(f"params.{name} must be a file path")
        path = (self.path.parent / value).resolve()
        if not path.exists():
            raise SchemaError(f"params.{name} not found: {path}")
        self.inputs[name] = path
        return path


def _steer_config(params) -> SteerConfig:
    overrides = params.get("steer", {})
    if not isinstance(overrides, dict):
        raise SchemaError("params.steer must be an object")
    known = {f for f in SteerConfig.__dataclass_fields__}
    unknown = set(overrides) - known
    if unknown:
        raise SchemaError(f"unknown steer options: {sorted(unknown)}")
    return replace(DEFAULT_STEER, **overrides)


def _pair(value) -> tuple:
    pair = tuple(int(v) for v in value)
    if len(pair) != 2:
        raise SchemaError("a pair must be two level indices")
    return pair


def _write_trajectory(path: Path, trajectory):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = trajectory.states.shape[1]
        header = ["tau"]
        for c in range(1, dim + 1):
            header += [f"re_{c}", f"im_{c}"]
        writer.writerow(header)
        for tau, state in zip(trajectory.taus, trajectory.states):
            row = [repr(float(tau))]
            for c in range(dim):
                row += [repr(float(state[c].real)), repr(float(state[c].imag))]
            writer.writerow(row)


def _task_simulate(scn, spec, dipole, out):
    if "control" in scn.params:
        control = load_control(scn.input_path("control"))
    elif "horizon" in scn.params:
        control = empty_waveform(float(scn.params["horizon"]))
    else:
        raise SchemaError("simulate needs params.control or params.horizon")
    stride = int(scn.params.get("trajectory_stride", 0))
    psi_i = basis_state(spec.dim, spec.initial)
    artifacts = []
    if stride > 0:
        final, trajectory = evolve_state(spec, dipole, control, psi_i,
                                         trajectory_stride=stride)
        _write_trajectory(out / "trajectory.csv", trajectory)
        artifacts.append("trajectory.csv")
    else:
        final = evolve_state(spec, dipole, control, psi_i)
    p_if = float(np.abs(final[spec.measured - 1]) ** 2)
    _write_json(out / "result.json", {
        "task": "simulate", "p_if": p_if, "horizon": control.horizon,
        "final_state_re": final.real, "final_state_im": final.imag,
    })
    return ["result.json", *artifacts]


def _task_sensitivity(scn, spec, dipole, out):
    control = load_control(scn.input_path("control"))
    pairs = scn.params.get("pairs")
    if pairs is not None:
        pairs = [_pair(p) for p in pairs]
    breakpoints = scn.params.get("breakpoints")
    h = float(scn.params.get("fd_step", 1e-5))
    sens = dp_dmu(spec, dipole, control, pairs=pairs, breakpoints=breakpoints)
    fd = [fd_oracle(spec, dipole, control, pair, h) for pair in sens.pairs]
    _write_json(out / "sensitivity.json", {
        "task": "sensitivity", "pairs": [list(p) for p in sens.pairs],
        "values": sens.values, "finite_difference": fd,
        "abs_error": [abs(v - f) for v, f in zip(sens.values, fd)],
        "fd_step": h, "population": sens.population,
    })
    with open(out / "sensitivity.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pair", "analytic", "finite_difference", "abs_error"])
        for (l, k), v, f in zip(sens.pairs, sens.values, fd):
            writer.writerow([f"{l}-{k}", repr(float(v)), repr(float(f)),
                             repr(abs(float(v) - float(f)))])
    return ["sensitivity.json", "sensitivity.csv"]


def _task_synthesize(scn, spec, dipole, out):
    if "xi" not in scn.params:
        raise SchemaError("synthesize needs params.xi")
    xi = float(scn.params["xi"])
    config = _steer_config(scn.params)
    if "pair" in scn.params:
        pair = _pair(scn.params["pair"])
        controls = [build_discriminating_control(spec, dipole, pair, xi,
                                                 config)]
        files = ["control.json"]
    else:
        controls = build_control_set(spec, dipole, xi, config)
        files = [f"control-{l}-{k}.json" for l, k in
                 (c.pair for c in controls)]
    for control, name in zip(controls, files):
        save_control(out / name, control.waveform)
    entries = [{
        "pair": list(c.pair), "xi": c.xi, "tau1": c.tau1, "tau2": c.tau2,
        "horizon": c.horizon, "steer_fidelity_in": c.f1,
        "steer_fidelity_out": c.f2, "control_file": name,
    } for c, name in zip(controls, files)]
    summary = {"task": "synthesize", "xi": xi, "controls": entries}
    if len(entries) == 1:
        # keep the single-pair fields flat for direct consumption
        summary.update({k: v for k, v in entries[0].items()
                        if k != "control_file"})
    _write_json(out / "synthesis.json", summary)
    return [*files, "synthesis.json"]


def _task_verify_lemma(scn, spec, dipole, out):
    if "pair" not in scn.params:
        raise SchemaError("verify-lemma needs params.pair")
    pair = _pair(scn.params["pair"])
    xi_grid = [float(x) for x in scn.params.get("xi_grid", (0.04, 0.02, 0.01))]
    n_samples = int(scn.params.get("n_samples", 200))
    k = k_matrix(spec, dipole, pair)
    rows = [(xi, averaging_error(spec, dipole, pair, xi, n_samples))
            for xi in xi_grid]
    with open(out / "lemma.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi", "sup_error", "error_over_xi"])
        for xi, err in rows:
            writer.writerow([repr(xi), repr(err), repr(err / xi)])
    ratios = [err / xi for xi, err in rows]
    taus = np.linspace(0.0, 1.0 / min(xi_grid) ** 2, 256)
    _write_json(out / "k_matrix.json", {
        "task": "verify-lemma", "pair": list(pair),
        "k_re": k.real, "k_im": k.imag,
        "hermiticity": float(np.max(np.abs(k - k.conj().T))),
        "error_over_xi": ratios,
        "spread": (max(ratios) - min(ratios)) / min(ratios),
        "conjugation_drift": conjugation_check(spec, dipole, pair,
                                               min(xi_grid), taus, k=k),
    })
    return ["lemma.csv", "k_matrix.json"]


def _task_identify(scn, spec, dipole, out):
    if "xi" not in scn.params:
        raise SchemaError("identify needs params.xi")
    xi = float(scn.params["xi"])
    variance = float(scn.params.get("variance", 0.0))
    delta = float(scn.params.get("delta", 1e-3))
    controls = build_control_set(spec, dipole, xi, _steer_config(scn.params))
    records = measure_records(spec, dipole, controls, variance,
                              seed=[scn.seed, 0] if variance > 0 else None)
    rng = np.random.default_rng([scn.seed, 1])
    truth = np.array(dipole.support_values())
    shift = rng.standard_normal(truth.size)
    shift *= delta / max(np.linalg.norm(shift), np.finfo(float).tiny)
    start = dipole.with_support_entries(truth + shift)
    result = local_identify(spec, controls, records, start)
    errors = np.abs(np.array(result.mu_hat.support_values()) - truth)
    _write_json(out / "identification.json", {
        "task": "identify", "xi": xi, "variance": variance,
        "support": [list(p) for p in dipole.support],
        "mu_hat": list(result.mu_hat.support_values()),
        "mu_true": truth, "max_error": float(errors.max()),
        "cost": result.cost, "grad_norm": result.grad_norm,
        "hessian": result.hessian, "alpha_hat": result.alpha_hat,
        "iterations": result.iterations, "converged": result.converged,
        "message": result.message,
    })
    return ["identification.json"]


def _task_noise_study(scn, spec, dipole, out):
    if "xi" not in scn.params:
        raise SchemaError("noise-study needs params.xi")
    xi = float(scn.params["xi"])
    variances = [float(v) for v in
                 scn.params.get("variances", (1e-8, 1e-6, 1e-4))]
    trials = int(scn.params.get("trials", 50))
    controls = build_control_set(spec, dipole, xi, _steer_config(scn.params))
    study = noise_study(spec, dipole, controls, variances, trials, scn.seed)
    with open(out / "noise_study.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["var", "rms_error", "predicted_radius",
                         "nonconverged"])
        for row in study.rows:
            writer.writerow([repr(row.variance), repr(row.rms_error),
                             repr(row.predicted_radius), row.nonconverged])
    _write_json(out / "noise_study.json", {
        "task": "noise-study", "xi": xi, "alpha_hat": study.alpha_hat,
        "seed": study.seed, "trials": trials,
        "rows": [{"variance": r.variance, "rms_error": r.rms_error,
                  "predicted_radius": r.predicted_radius,
                  "nonconverged": r.nonconverged} for r in study.rows],
    })
    return ["noise_study.csv", "noise_study.json"]


def _task_certify_alpha(scn, spec, dipole, out):
    if "xi" not in scn.params:
        raise SchemaError("certify-alpha needs params.xi")
    xi = float(scn.params["xi"])
    target = scn.params.get("alpha_target")
    controls = build_control_set(spec, dipole, xi, _steer_config(scn.params))
    report = alpha_convexity(spec, dipole, controls,
                             None if target is None else float(target))
    _write_json(out / "alpha.json", {
        "task": "certify-alpha", "xi": xi, "alpha_hat": report.alpha_hat,
        "alpha_target": report.alpha_target, "certified": report.certified,
        "xi_needed": report.xi_needed, "hessian": report.hessian,
    })
    return ["alpha.json"]


_RUNNERS = {
    "simulate": _task_simulate,
    "sensitivity": _task_sensitivity,
    "synthesize": _task_synthesize,
    "verify-lemma": _task_verify_lemma,
    "identify": _task_identify,
    "noise-study": _task_noise_study,
    "certify-alpha": _task_certify_alpha,
}


def run_scenario(scenario_path, task=None, output_dir=None, seed=None) -> Path:
    """Execute a scenario and return the output directory.

    ``task`` (from the subcommand) must agree with the scenario's task
    field; ``output_dir`` and ``seed`` override the scenario when given.
    """
    scn = Scenario(scenario_path)
    if task is not None and task != scn.task:
        raise SchemaError(f"scenario task is '{scn.task}' but the "
                          f"'{task}' subcommand was invoked")
    if seed is not None:
        scn.seed = int(seed)
    out = Path(output_dir if output_dir is not None else scn.output_dir)
    if not out.is_absolute():
        base = Path.cwd() if output_dir is not None else scn.path.parent
        out = base / out
    out.mkdir(parents=True, exist_ok=True)

    spec, dipole = scn.load()
    artifacts = _RUNNERS[scn.task](scn, spec, dipole, out)
    _write_json(out / "manifest.json", {
        "tool": "qdip", "version": __version__, "task": scn.task,
        "seed": scn.seed, "parameters": scn.params,
        "inputs": {name: _sha256(path) for name, path in scn.inputs.items()},
        "artifacts": sorted(artifacts),
    })
    return out


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qdip",
        description="Simulation, control synthesis, sensitivity analysis "
                    "and dipole identification for driven N-level systems.")
    parser.add_argument("--version", action="version",
                        version=f"qdip {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    descriptions = {
        "simulate": "propagate a control and report the measured population",
        "sensitivity": "exact dipole gradient of the measured population",
        "synthesize": "build the three-segment discriminating control",
        "verify-lemma": "averaged-propagator error sweep and K matrix",
        "identify": "local Gauss-Newton identification of support entries",
        "noise-study": "identification error vs measurement noise",
        "certify-alpha": "local convexity constant of the fit",
        "run": "run a scenario file on whatever task it names",
    }
    for name, text in descriptions.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("scenario", help="path to the scenario JSON file")
        p.add_argument("--output-dir", default=None,
                       help="directory for artifacts (default: scenario's "
                            "output_dir field, else 'qdip-out')")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    task = None if args.command == "run" else args.command
    try:
        out = run_scenario(args.scenario, task=task,
                           output_dir=args.output_dir, seed=args.seed)
    except QdipError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}))
        return 1
    print(json.dumps({"status": "ok", "output_dir": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
