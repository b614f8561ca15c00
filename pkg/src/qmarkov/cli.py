"""Command-line front end.

Models are read from JSON files, results are written as JSON reports (stdout or
``--out``) and numeric grids as CSV. Exit status is 0 on success, 1 on a model
or runtime error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import linalg
from .chain import ChainModel, NotMixingError, convergence_diagnostics, xy_model
from .constants import VALIDATION_TOL
from .fisher import (
    REPORTED_F,
    classical_fisher,
    clt_parameters,
    quantum_fisher,
    scan_observables,
    xy_closed_form_fisher,
)
from .overlap import (
    lan_check,
    fit_phase_coefficient,
    nonergodic_reduced_dynamics,
    nonergodic_scaled_overlap,
    qfi_curve,
)
from .perturbation import leading_eigen_expansion, overlap_expansion, verify_iterated_limit
from .trajectory import TrajectoryConfig, clt_experiment, clt_statistic, mse_experiment, run_ensemble

COMMANDS = (
    "analyze",
    "qfi",
    "cfi",
    "scan-observables",
    "simulate",
    "estimate",
    "clt",
    "lan",
    "qfi-curve",
    "nonergodic",
    "perturb-check",
)

OBSERVABLES = {"sx": linalg.SIGMA_X, "sy": linalg.SIGMA_Y, "sz": linalg.SIGMA_Z}


class ModelFileError(ValueError):
    """Malformed model file; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.field = path


class UsageError(ValueError):
    pass


# -- model files --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LoadedModel:
    model: ChainModel
    digest: str
    builtin: dict | None = None


def _real(raw: dict, key: str, where: str) -> float:
    if key not in raw:
        raise ModelFileError(f"{where}.{key}", "missing")
    val = raw[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ModelFileError(f"{where}.{key}", f"expected a number, got {type(val).__name__}")
    if not np.isfinite(val):
        raise ModelFileError(f"{where}.{key}", "not finite")
    return float(val)


def _int(raw: dict, key: str, where: str) -> int:
    val = raw.get(key)
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        raise ModelFileError(f"{where}.{key}", "expected a positive integer")
    return val


def _complex_array(raw: dict, key: str, where: str, shape: tuple[int, ...]) -> np.ndarray:
    node = raw.get(key)
    path = f"{where}.{key}"
    if not isinstance(node, dict):
        raise ModelFileError(path, "expected an object with 're' and 'im'")
    parts = []
    for part in ("re", "im"):
        if part not in node:
            raise ModelFileError(f"{path}.{part}", "missing")
        try:
            arr = np.array(node[part], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ModelFileError(f"{path}.{part}", f"not a numeric array ({exc})") from None
        if arr.shape != shape:
            raise ModelFileError(f"{path}.{part}", f"shape {arr.shape}, expected {shape}")
        if not np.all(np.isfinite(arr)):
            raise ModelFileError(f"{path}.{part}", "non-finite entries")
        parts.append(arr)
    return parts[0] + 1j * parts[1]


def parse_model(raw: Any) -> tuple[ChainModel, dict | None]:
    """Validate a decoded model file; returns the model and, for built-in
    models, their parameters."""
    if not isinstance(raw, dict):
        raise ModelFileError("$", "expected a JSON object")
    if "builtin" in raw:
        if raw["builtin"] != "xy":
            raise ModelFileError("$.builtin", f"unknown builtin {raw['builtin']!r}")
        a, b, f, t0 = (_real(raw, key, "$") for key in ("a", "b", "f", "theta0"))
        if abs(a * a + b * b - 1.0) > VALIDATION_TOL:
            raise ModelFileError("$.a", f"a^2 + b^2 = {a * a + b * b!r}, must equal 1")
        return xy_model(a, b, f, t0), {"builtin": "xy", "a": a, "b": b, "f": f, "theta0": t0}
    d, k = _int(raw, "d", "$"), _int(raw, "k", "$")
    h = _complex_array(raw, "hamiltonian", "$", (d * k, d * k))
    psi = _complex_array(raw, "input_state", "$", (d,))
    t0 = _real(raw, "theta0", "$")
    dev = float(np.max(np.abs(h - h.conj().T)))
    if dev > VALIDATION_TOL:
        raise ModelFileError("$.hamiltonian", f"not Hermitian (max deviation {dev:.3e})")
    norm = float(np.linalg.norm(psi))
    if abs(norm - 1.0) > VALIDATION_TOL:
        raise ModelFileError("$.input_state", f"norm {norm!r}, must equal 1")
    return ChainModel(d, k, h, psi, t0), None


def load_model(path) -> ChainModel:
    return read_model_file(path).model


def read_model_file(path) -> LoadedModel:
    data = Path(path).read_bytes()
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelFileError("$", f"cannot parse JSON ({exc})") from None
    model, builtin = parse_model(raw)
    return LoadedModel(model, hashlib.sha256(data).hexdigest(), builtin)


def model_to_dict(model: ChainModel) -> dict:
    h, psi = model.hamiltonian, model.psi
    return {
        "d": model.d,
        "k": model.k,
        "hamiltonian": {"re": h.real.tolist(), "im": h.imag.tolist()},
        "input_state": {"re": psi.real.tolist(), "im": psi.imag.tolist()},
        "theta0": model.theta0,
    }


def dump_model(model: ChainModel, path) -> None:
    """Write the explicit form; float repr round-trips exactly."""
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2) + "\n")


# -- reports -------------------------------------------------------------------


@dataclass
class RunReport:
    command: str
    input_digest: str | None
    parameters: dict
    results: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    seed: int | None = None

    def as_dict(self) -> dict:
        return {
            "command": self.command,
            "input_digest": self.input_digest,
            "parameters": self.parameters,
            "results": self.results,
            "units": self.units,
            "warnings": self.warnings,
            "seed": self.seed,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(_jsonable(self.as_dict()), indent=indent, allow_nan=True)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": float(x.real), "im": float(x.imag)}
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    return x


def write_csv(path, header_lines: Sequence[str], columns: Sequence[str], rows) -> None:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([format(float(v), ".17g") if not isinstance(v, (int, np.integer)) else int(v) for v in row])
    Path(path).write_text(buf.getvalue())


class _Collector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages: list[str] = []

    def emit(self, record):
        self.messages.append(record.getMessage())


# -- commands ------------------------------------------------------------------


def _n_list(text: str) -> list[int]:
    try:
        out = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise UsageError(f"invalid integer list {text!r}") from None
    if not out or min(out) < 1:
        raise UsageError("n lists must contain positive integers")
    return out


def _observable(args) -> tuple[np.ndarray, dict]:
    direction = [args.nx, args.ny, args.nz]
    given = [v is not None for v in direction]
    if args.observable is not None and any(given):
        raise UsageError("--observable cannot be combined with --nx/--ny/--nz")
    if any(given):
        n = np.array([v or 0.0 for v in direction])
        norm = np.linalg.norm(n)
        if norm == 0:
            raise UsageError("Bloch direction must be non-zero")
        n = n / norm
        return linalg.bloch_observable(n), {"direction": n.tolist()}
    name = args.observable or "sx"
    return OBSERVABLES[name], {"observable": name}


def _initial_state(model: ChainModel, spec: str):
    if spec == "stationary":
        return None
    try:
        i = int(spec)
    except ValueError:
        raise UsageError("--initial must be 'stationary' or a basis index") from None
    if not 0 <= i < model.k:
        raise UsageError(f"basis index {i} out of range for k={model.k}")
    return linalg.ket(i, model.k)


def cmd_analyze(lm: LoadedModel, args, rep: RunReport):
    model = lm.model
    rep.results.update(model.spectral.as_dict())
    if model.is_mixing and args.n_max:
        rho0 = linalg.projector(linalg.ket(0, model.k))
        table = convergence_diagnostics(model, rho0, args.n_max)
        rep.results["convergence"] = {
            "n": table.n,
            "trace_distance": table.distance,
            "fitted_log_rate": table.slope,
            "log_abs_lambda2": table.log_abs_lambda2,
        }
    rep.units.update({"eigenvalues": "dimensionless [re, im]", "gap": "per step"})


def cmd_qfi(lm: LoadedModel, args, rep: RunReport):
    q = quantum_fisher(lm.model)
    rep.results.update({"F": q.F, "correction": q.correction, "phase_coefficient": q.phase_coefficient})
    rep.units["F"] = "per atom, rad^-2"
    if lm.builtin is not None:
        p = lm.builtin
        c = float(np.cos(p["theta0"]))
        closed = xy_closed_form_fisher(p["a"], p["b"], c)
        rel = abs(q.F - closed) / abs(closed)
        rep.results.update(
            {
                "closed_form_F": closed,
                "relative_difference": rel,
                "reported_F": REPORTED_F,
                "reported_F_status": "unreconciled",
            }
        )
        if rel > 1e-8:
            rep.warnings.append(
                f"general formula and closed form differ (ratio {q.F / closed:.10g})"
            )


def cmd_cfi(lm: LoadedModel, args, rep: RunReport):
    a, desc = _observable(args)
    rep.parameters.update(desc)
    p = clt_parameters(lm.model, a)
    rep.results.update({"mu": p.mu, "sigma2": p.sigma2, "classical_fisher": classical_fisher(lm.model, a)})
    rep.results["quantum_fisher"] = quantum_fisher(lm.model).F
    rep.units.update({"mu": "per rad", "sigma2": "dimensionless", "classical_fisher": "per atom, rad^-2"})


def cmd_scan(lm: LoadedModel, args, rep: RunReport):
    res = scan_observables(lm.model, resolution=args.resolution)
    rep.parameters["resolution"] = args.resolution
    rep.results.update(
        {
            "best_direction": res.best_direction,
            "best_value": res.best_value,
            "grid_best_value": res.grid_best_value,
            "grid_min_value": float(res.values.min()),
            "quantum_fisher": res.quantum_fisher,
        }
    )
    rep.units["value"] = "classical Fisher information per atom, rad^-2"
    if args.csv:
        rows = np.column_stack([res.directions, res.values])
        write_csv(
            args.csv,
            ["classical Fisher information of n.sigma; directions in Fibonacci-lattice order",
             "units: n_x n_y n_z dimensionless unit vector, value rad^-2 per atom"],
            ["n_x", "n_y", "n_z", "value"],
            rows,
        )
        rep.results["csv"] = str(args.csv)


def _config(lm: LoadedModel, args, keep=False) -> TrajectoryConfig:
    a, desc = _observable(args)
    return TrajectoryConfig(
        model=lm.model,
        observable=a,
        n_steps=args.n,
        n_trajectories=args.trajectories,
        master_seed=args.seed,
        u=args.u,
        keep_outcomes=keep,
    ), desc


def cmd_simulate(lm: LoadedModel, args, rep: RunReport):
    cfg, desc = _config(lm, args)
    rep.parameters.update(desc)
    ens = run_ensemble(cfg)
    z = clt_statistic(ens)
    rep.results.update(
        {
            "theta": cfg.theta,
            "time_averages": ens.time_averages,
            "mean_time_average": float(ens.time_averages.mean()),
            "rescaled_mean": float(z.mean()),
            "rescaled_variance": float(z.var(ddof=1)) if len(z) > 1 else 0.0,
        }
    )
    rep.units.update({"theta": "rad", "time_averages": "eigenvalue units of A"})


def cmd_estimate(lm: LoadedModel, args, rep: RunReport):
    cfg, desc = _config(lm, args)
    rep.parameters.update(desc)
    t0 = lm.model.theta0
    r = mse_experiment(cfg, (t0 - args.halfwidth, t0 + args.halfwidth))
    rep.results.update(
        {
            "theta": cfg.theta,
            "scaled_mse": r.scaled_mse,
            "scaled_mse_se": r.scaled_mse_se,
            "target": r.target,
            "z_score": r.z_score,
            "n_clamped": r.n_clamped,
        }
    )
    rep.units.update({"scaled_mse": "rad^2 (n times MSE)", "target": "rad^2"})
    if r.n_clamped:
        rep.warnings.append(f"{r.n_clamped} estimates clamped to the bracket")


def cmd_clt(lm: LoadedModel, args, rep: RunReport):
    cfg, desc = _config(lm, args)
    rep.parameters.update(desc)
    r = clt_experiment(cfg)
    rep.results.update({k: getattr(r, k) for k in r.__dataclass_fields__})
    rep.results["passed"] = r.passed
    rep.units.update({"mean": "sqrt(n) x A units", "variance": "A units^2"})


def cmd_lan(lm: LoadedModel, args, rep: RunReport):
    ns = _n_list(args.n_list)
    state = _initial_state(lm.model, args.initial)
    t = lan_check(lm.model, state, args.u, args.v, ns)
    ph = fit_phase_coefficient(lm.model, state, max(ns))
    rep.parameters.update({"u": args.u, "v": args.v, "n_list": ns, "initial": args.initial})
    rep.results.update(
        {
            "n": t.n,
            "overlap": t.overlap,
            "target": complex(t.target[0]),
            "modulus_error": t.modulus_error,
            "phase_error": t.phase_error,
            "F": t.F,
            "a_formula": ph.a_formula,
            "a_fit": ph.a_fit,
        }
    )
    rep.units.update({"modulus_error": "relative", "phase_error": "rad"})


def cmd_qfi_curve(lm: LoadedModel, args, rep: RunReport):
    ns = _n_list(args.n_list) if args.n_list else list(range(1, args.n_max + 1))
    state = _initial_state(lm.model, args.initial)
    curve = qfi_curve(lm.model, state, ns)
    rep.parameters.update({"n_list": ns, "initial": args.initial})
    rep.results.update({"n": curve.n, "F_n": curve.F_n, "F_n_per_atom": curve.per_atom})
    rep.units.update({"F_n": "rad^-2", "F_n_per_atom": "rad^-2 per atom"})
    if args.csv:
        write_csv(
            args.csv,
            ["quantum Fisher information of the n-atom output state",
             "units: n atoms, F_n rad^-2, F_n/n rad^-2 per atom"],
            ["n", "F_n", "F_n/n"],
            zip(curve.n, curve.F_n, curve.per_atom),
        )
        rep.results["csv"] = str(args.csv)


def cmd_nonergodic(lm: LoadedModel, args, rep: RunReport):
    ns = _n_list(args.n_list)
    k = lm.model.k
    state = linalg.ket(int(args.initial), k) if args.initial != "stationary" else None
    if state is None:
        raise UsageError("nonergodic needs a basis-state --initial")
    ov = nonergodic_scaled_overlap(lm.model, state, args.u, args.v, ns)
    rd = nonergodic_reduced_dynamics(lm.model, state, args.u, ns)
    rep.parameters.update({"u": args.u, "v": args.v, "n_list": ns, "initial": args.initial})
    rep.results.update(
        {
            "n": ov.n,
            "overlap": ov.overlap,
            "overlap_target": ov.target,
            "overlap_error": ov.error,
            "reduced_error": rd.error,
            "reduced_purity": rd.purity,
        }
    )
    rep.units.update({"overlap_error": "absolute", "reduced_error": "trace norm"})


def cmd_perturb_check(lm: LoadedModel, args, rep: RunReport):
    ns = _n_list(args.n_list)
    model = lm.model.centered()
    family, exp = overlap_expansion(model, args.u, args.v)
    t = verify_iterated_limit(family, exp, model.stationary_state(), ns)
    fit = leading_eigen_expansion(family, ns)
    rep.parameters.update({"u": args.u, "v": args.v, "n_list": ns})
    rep.results.update(
        {
            "n": t.n,
            "error": t.error,
            "lambda": t.lam,
            "expansion_remainder": t.consistency,
            "decay_exponent": t.decay_exponent,
            "fit_constant": t.fit_constant,
            "r2_half": t.r2_half,
            "eigen_fit_lambda2": fit.lambda2,
        }
    )
    rep.units.update({"error": "operator 2-norm"})


HANDLERS = {
    "analyze": cmd_analyze,
    "qfi": cmd_qfi,
    "cfi": cmd_cfi,
    "scan-observables": cmd_scan,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "clt": cmd_clt,
    "lan": cmd_lan,
    "qfi-curve": cmd_qfi_curve,
    "nonergodic": cmd_nonergodic,
    "perturb-check": cmd_perturb_check,
}


# -- argument parsing ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmarkov", description="Quantum Markov chain estimation toolkit", allow_abbrev=False)
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--model", required=True, help="model JSON file")
    g = common.add_mutually_exclusive_group()
    g.add_argument("--theta0", type=float, help="override the coupling (radians)")
    g.add_argument("--cos-theta0", type=float, help="override the coupling by its cosine")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--plain", action="store_true", help="compact output, no summary on stderr")

    obs = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    obs.add_argument("--observable", choices=sorted(OBSERVABLES))
    obs.add_argument("--nx", type=float)
    obs.add_argument("--ny", type=float)
    obs.add_argument("--nz", type=float)

    mc = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    mc.add_argument("--seed", type=int, default=0)
    mc.add_argument("--n", type=int, default=1000, help="atoms per trajectory")
    mc.add_argument("--trajectories", type=int, default=100)
    mc.add_argument("--u", type=float, default=0.0, help="local parameter, theta = theta0 + u/sqrt(n)")

    a = sub.add_parser("analyze", allow_abbrev=False, parents=[common])
    a.add_argument("--n-max", type=int, default=0, help="also tabulate convergence from |0><0|")
    sub.add_parser("qfi", allow_abbrev=False, parents=[common])
    sub.add_parser("cfi", allow_abbrev=False, parents=[common, obs])
    s = sub.add_parser("scan-observables", allow_abbrev=False, parents=[common])
    s.add_argument("--resolution", type=int, default=2000)
    s.add_argument("--csv", help="CSV grid output")
    sub.add_parser("simulate", allow_abbrev=False, parents=[common, obs, mc])
    e = sub.add_parser("estimate", allow_abbrev=False, parents=[common, obs, mc])
    e.add_argument("--halfwidth", type=float, default=0.3, help="bracket half-width around theta0")
    sub.add_parser("clt", allow_abbrev=False, parents=[common, obs, mc])
    lan = sub.add_parser("lan", allow_abbrev=False, parents=[common])
    lan.add_argument("--u", type=float, default=1.0)
    lan.add_argument("--v", type=float, default=0.0)
    lan.add_argument("--n-list", default="100,200,500,1000,2000")
    lan.add_argument("--initial", default="stationary")
    qc = sub.add_parser("qfi-curve", allow_abbrev=False, parents=[common])
    qc.add_argument("--n-max", type=int, default=12)
    qc.add_argument("--n-list")
    qc.add_argument("--initial", default="stationary", help="'stationary' or a system basis index")
    qc.add_argument("--csv", help="CSV output")
    ne = sub.add_parser("nonergodic", allow_abbrev=False, parents=[common])
    ne.add_argument("--u", type=float, default=1.0)
    ne.add_argument("--v", type=float, default=0.0)
    ne.add_argument("--n-list", default="10,100,1000")
    ne.add_argument("--initial", default="0")
    pc = sub.add_parser("perturb-check", allow_abbrev=False, parents=[common])
    pc.add_argument("--u", type=float, default=1.0)
    pc.add_argument("--v", type=float, default=0.0)
    pc.add_argument("--n-list", default="100,200,500,1000,2000,5000,10000")
    return p


def _apply_theta(lm: LoadedModel, args) -> LoadedModel:
    if args.theta0 is None and args.cos_theta0 is None:
        return lm
    if args.cos_theta0 is not None:
        if not -1.0 <= args.cos_theta0 <= 1.0:
            raise UsageError("--cos-theta0 must lie in [-1, 1]")
        theta = float(np.arccos(args.cos_theta0))
    else:
        theta = args.theta0
    builtin = None if lm.builtin is None else {**lm.builtin, "theta0": theta}
    return LoadedModel(lm.model.with_theta(theta), lm.digest, builtin)


def run(argv: Sequence[str] | None = None) -> tuple[int, RunReport | None]:
    """Parse, dispatch and emit; returns (exit code, report)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), None
    params = {k: v for k, v in vars(args).items() if k not in ("command", "out", "plain", "seed")}
    rep = RunReport(args.command, None, params, seed=getattr(args, "seed", None))
    collector = _Collector()
    root = logging.getLogger("qmarkov")
    root.addHandler(collector)
    code = 0
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            lm = _apply_theta(read_model_file(args.model), args)
            rep.input_digest = lm.digest
            rep.parameters["theta0"] = lm.model.theta0
            HANDLERS[args.command](lm, args, rep)
        rep.warnings.extend(str(w.message) for w in caught)
    except UsageError as exc:
        print(f"qmarkov: usage error: {exc}", file=sys.stderr)
        return 2, None
    except NotMixingError as exc:
        print(f"qmarkov: {args.command}: model is not mixing at theta0: {exc}", file=sys.stderr)
        code = 1
    except (ModelFileError, ValueError, linalg.EigenSolverError, OSError) as exc:
        print(f"qmarkov: {args.command}: {exc}", file=sys.stderr)
        code = 1
    finally:
        root.removeHandler(collector)
    if code:
        return code, None
    rep.warnings.extend(collector.messages)
    text = rep.to_json(indent=None if args.plain else 2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if not args.plain:
        for w in rep.warnings:
            print(f"qmarkov: warning: {w}", file=sys.stderr)
    return 0, rep


def main(argv: Sequence[str] | None = None) -> int:
    return run(argv)[0]


if __name__ == "__main__":
    sys.exit(main())
