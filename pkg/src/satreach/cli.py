"""Command line pipeline: certify, analyze, simulate, sweep, report.

Every command reads one JSON config, writes machine-readable artifacts
into the output directory, and prints a JSON summary to stdout.  All CSV
numbers are written with 17 significant digits so a reader recovers the
in-memory doubles exactly; runs with identical configs are byte identical
regardless of the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .bounds import (
    expectation_bound_sequence,
    linear_region_scaling,
    noise_energy,
    select_rate,
)
from .certify import (
    ContractionCertificate,
    closed_loop_rate,
    min_contraction_rate,
    synthesize_contraction,
    verify_certificate,
)
from .errors import (
    CertificateError,
    ConfigError,
    NotApplicableError,
    PreconditionError,
    SynthesisError,
)
from .model import FeedbackGain, SystemSpec, vertex_matrices
from .montecarlo import SimulationConfig, simulate_ensemble
from .sets import area, boundary_polyline, pub

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SYNTHESIS = 3
EXIT_PRECONDITION = 4

CSV_NAMES = ("data", "lell", "lbell", "states", "convergence")


@dataclass
class AnalysisConfig:
    """Everything one CLI invocation needs, resolved and validated."""

    system: SystemSpec
    gain: FeedbackGain
    fixed_shape: np.ndarray | None
    feas_tol: float
    bisect_tol: float
    trace_scale: float | None
    epsilon: float
    k_max: int
    vbar: np.ndarray
    boundary_points: int
    simulation: SimulationConfig | None
    out_dir: Path
    emit: tuple[str, ...]
    sweep_ubar: np.ndarray | None


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _block(raw: dict, name: str) -> dict:
    block = raw.get(name, {})
    if not isinstance(block, dict):
        raise ConfigError(f"config section '{name}' must be an object")
    return block


def _parse_v_policy(entry, horizon: int):
    if entry is None or entry == "zero":
        return None
    arr = np.asarray(entry, dtype=float)
    if arr.ndim not in (1, 2):
        raise ConfigError("v_policy must be 'zero', a vector, or a list of vectors")
    return arr


def _parse_simulation(raw: dict) -> SimulationConfig | None:
    block = raw.get("simulation")
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ConfigError("config section 'simulation' must be an object")
    horizon = int(block.get("horizon", 100))
    return SimulationConfig(
        horizon=horizon,
        num_traj=int(block.get("num_traj", 1000)),
        seed=int(block.get("seed", 0)),
        noise_kind=str(block.get("noise_kind", "gaussian")),
        v_policy=_parse_v_policy(block.get("v_policy"), horizon),
        workers=int(block.get("workers", 1)),
    )


def _parse_sweep(raw: dict) -> np.ndarray | None:
    block = raw.get("sweep")
    if block is None:
        return None
    if not isinstance(block, dict):
        raise ConfigError("config section 'sweep' must be an object")
    if "ubar_values" in block:
        values = np.asarray(block["ubar_values"], dtype=float)
    else:
        lo = float(block["ubar_min"])
        hi = float(block["ubar_max"])
        count = int(block.get("count", 100))
        if count < 2 or hi <= lo:
            raise ConfigError("sweep needs ubar_min < ubar_max and count >= 2")
        values = np.linspace(lo, hi, count)
    if values.ndim != 1 or values.size == 0 or np.any(values <= 0.0):
        raise ConfigError("sweep bounds must be a nonempty list of positive numbers")
    return values


def load_config(path) -> AnalysisConfig:
    """Parse and validate a JSON config; all failures become ConfigError."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("top-level config must be a JSON object")
    try:
        system_block = _block(raw, "system")
        system = SystemSpec(
            A=system_block["A"],
            B=system_block["B"],
            W=system_block["W"],
            ubar=system_block["ubar"],
        )
        gain = FeedbackGain(K=_block(raw, "gain")["K"])
        rates = _block(raw, "rates")
        fixed_shape = None
        if rates.get("P") is not None:
            fixed_shape = np.asarray(rates["P"], dtype=float)
        trace_scale = rates.get("trace_scale")
        prs_block = _block(raw, "prs")
        vbar = np.asarray(prs_block.get("vbar", np.zeros(system.m)), dtype=float)
        output = _block(raw, "output")
        emit = tuple(output.get("emit", CSV_NAMES))
        for name in emit:
            if name not in CSV_NAMES:
                raise ConfigError(f"unknown emit entry '{name}'")
        cfg = AnalysisConfig(
            system=system,
            gain=gain,
            fixed_shape=fixed_shape,
            feas_tol=float(rates.get("feas_tol", 1e-7)),
            bisect_tol=float(rates.get("bisect_tol", 1e-4)),
            trace_scale=None if trace_scale is None else float(trace_scale),
            epsilon=float(prs_block.get("epsilon", 0.2)),
            k_max=int(prs_block.get("k_max", 100)),
            vbar=vbar,
            boundary_points=int(prs_block.get("boundary_points", 256)),
            simulation=_parse_simulation(raw),
            out_dir=Path(output.get("directory", "out")),
            emit=emit,
            sweep_ubar=_parse_sweep(raw),
        )
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    if not 0.0 < cfg.epsilon <= 1.0:
        raise ConfigError(f"epsilon must lie in (0, 1], got {cfg.epsilon}")
    if cfg.k_max < 0:
        raise ConfigError("k_max must be nonnegative")
    if cfg.vbar.shape != (system.m,):
        raise ConfigError(f"vbar must have length {system.m}")
    return cfg


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def _resolve_certificate(cfg: AnalysisConfig) -> tuple[np.ndarray, float, float]:
    """Fixed shape matrix if configured, otherwise synthesized."""
    vertices = vertex_matrices(cfg.system, cfg.gain)
    if cfg.fixed_shape is not None:
        P = cfg.fixed_shape
        rate = min_contraction_rate(P, vertices)
        if rate >= 1.0:
            raise SynthesisError(
                f"fixed shape matrix certifies no rate below one (got {rate:.6f})",
                last_infeasible=None,
            )
    else:
        P, rate = synthesize_contraction(
            cfg.system,
            cfg.gain,
            feas_tol=cfg.feas_tol,
            bisect_tol=cfg.bisect_tol,
            trace_scale=cfg.trace_scale,
        )
    rate_linear = closed_loop_rate(P, cfg.system, cfg.gain)
    return P, rate, rate_linear


def cmd_certify(cfg: AnalysisConfig) -> dict:
    """Produce and independently verify a certificate; write certificate.json."""
    P, rate, rate_linear = _resolve_certificate(cfg)
    if rate_linear < rate:
        cert = ContractionCertificate(
            P=P,
            rate=rate,
            rate_linear=rate_linear,
            feas_tol=cfg.feas_tol,
            bisect_tol=cfg.bisect_tol,
        )
        report = verify_certificate(cert, cfg.system, cfg.gain)
        residuals = {
            "vertices": [float(r) for r in report.vertex_residuals],
            "linear": float(report.linear_residual),
            "shape_min_eig": float(report.shape_min_eig),
            "rate_gap": float(report.rate_gap),
        }
        passed = bool(report.passed)
    else:
        # Zero-gain corner: every vertex equals the closed loop, so the
        # rate gap degenerates and only the vertex inequalities are checked.
        residuals = {"vertices": [], "linear": None, "shape_min_eig": None, "rate_gap": 0.0}
        passed = False
    payload = {
        "P": np.asarray(P).tolist(),
        "lambda": float(rate),
        "lambda_L": float(rate_linear),
        "residuals": residuals,
        "pass": passed,
    }
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "certificate.json", payload)
    return payload


def _analysis_state(cfg: AnalysisConfig) -> dict:
    P, rate, rate_linear = _resolve_certificate(cfg)
    noise = noise_energy(P, cfg.system.W)
    r_lin = linear_region_scaling(P, cfg.gain.K, cfg.system.ubar, cfg.vbar)
    profile = select_rate(rate, rate_linear, noise, r_lin)
    ks = np.arange(cfg.k_max + 1)
    bound_rate = expectation_bound_sequence(rate, noise, cfg.k_max)
    bound_linear = expectation_bound_sequence(rate_linear, noise, cfg.k_max)
    bound_selected = expectation_bound_sequence(profile.rate_selected, noise, cfg.k_max)
    pub_rate = pub(P, rate, noise, cfg.epsilon)
    pub_selected = pub(P, profile.rate_selected, noise, cfg.epsilon)
    return {
        "P": P,
        "profile": profile,
        "ks": ks,
        "bound_rate": bound_rate,
        "bound_linear": bound_linear,
        "bound_selected": bound_selected,
        "pub_rate": pub_rate,
        "pub_selected": pub_selected,
    }


def _write_data_csv(cfg: AnalysisConfig, state: dict, q_mean=None) -> None:
    rows = []
    for k in state["ks"]:
        empirical = ""
        if q_mean is not None and k < len(q_mean):
            empirical = _fmt(float(q_mean[k]))
        rows.append(
            [
                str(int(k)),
                empirical,
                _fmt(float(state["bound_rate"][k])),
                _fmt(float(state["bound_linear"][k])),
                _fmt(float(state["bound_selected"][k])),
            ]
        )
    _write_csv(cfg.out_dir / "data.csv", ["k", "e", "l", "ll", "lb"], rows)


def _write_boundary_csv(cfg: AnalysisConfig, name: str, ellipsoid) -> None:
    pts = boundary_polyline(ellipsoid, cfg.boundary_points)
    rows = [[_fmt(float(x)), _fmt(float(y))] for x, y in pts]
    _write_csv(cfg.out_dir / f"{name}.csv", ["x", "y"], rows)


def _analysis_payload(cfg: AnalysisConfig, state: dict) -> dict:
    profile = state["profile"]
    r_full = state["pub_rate"].r
    r_sel = state["pub_selected"].r
    payload = {
        "lambda": float(profile.rate),
        "lambda_L": float(profile.rate_linear),
        "trace_PW": float(profile.noise_energy),
        "r_L": float(profile.r_lin),
        "condition_lhs": float(profile.condition_lhs),
        "lambda_bar_star": None
        if profile.rate_effective is None
        else float(profile.rate_effective),
        "lambda_hat": float(profile.rate_selected),
        "fallback": bool(profile.fallback),
        "epsilon": float(cfg.epsilon),
        "k_max": int(cfg.k_max),
        "pub_scalings": {"lambda": float(r_full), "lambda_hat": float(r_sel)},
        "scaling_reduction": float(1.0 - r_sel / r_full) if r_full > 0.0 else 0.0,
        "ll_reference_only": True,
        "P": np.asarray(state["P"]).tolist(),
    }
    if cfg.system.n == 2:
        a_full = area(state["pub_rate"])
        a_sel = area(state["pub_selected"])
        payload["areas"] = {
            "lambda": float(a_full),
            "lambda_hat": float(a_sel),
            "reduction": float(1.0 - a_sel / a_full) if a_full > 0.0 else 0.0,
        }
    return payload


def cmd_analyze(cfg: AnalysisConfig) -> dict:
    """Bounds, reachable-set scalings, and boundary polylines; no simulation."""
    state = _analysis_state(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if "data" in cfg.emit:
        _write_data_csv(cfg, state)
    if cfg.system.n == 2:
        if "lell" in cfg.emit:
            _write_boundary_csv(cfg, "lell", state["pub_rate"])
        if "lbell" in cfg.emit:
            _write_boundary_csv(cfg, "lbell", state["pub_selected"])
    elif {"lell", "lbell"} & set(cfg.emit):
        print("boundary polylines need a planar system; skipped", file=sys.stderr)
    payload = _analysis_payload(cfg, state)
    _write_json(cfg.out_dir / "analysis.json", payload)
    return payload


def cmd_simulate(cfg: AnalysisConfig) -> dict:
    """Analysis plus a Monte Carlo ensemble; fills the empirical column."""
    sim = cfg.simulation or SimulationConfig(horizon=100, num_traj=1000, seed=0)
    state = _analysis_state(cfg)
    stats = simulate_ensemble(
        cfg.system,
        cfg.gain,
        sim,
        shape_matrix=state["P"],
        ellipsoid=state["pub_selected"],
    )
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if "data" in cfg.emit:
        _write_data_csv(cfg, state, q_mean=stats.q_mean)
    if cfg.system.n == 2:
        if "lell" in cfg.emit:
            _write_boundary_csv(cfg, "lell", state["pub_rate"])
        if "lbell" in cfg.emit:
            _write_boundary_csv(cfg, "lbell", state["pub_selected"])
        if "states" in cfg.emit:
            rows = [[_fmt(float(x)), _fmt(float(y))] for x, y in stats.final_states]
            _write_csv(cfg.out_dir / "states.csv", ["x", "y"], rows)
    elif "states" in cfg.emit:
        print("states.csv needs a planar system; skipped", file=sys.stderr)
    violations = 1.0 - stats.containment
    payload = _analysis_payload(cfg, state)
    payload.update(
        {
            "seed": int(sim.seed),
            "horizon": int(sim.horizon),
            "num_traj": int(sim.num_traj),
            "noise_kind": sim.noise_kind,
            "workers": int(sim.workers),
            "horizon_note": "horizon defaults to 100 steps when the config leaves it out",
            "pub_violation_max": float(violations.max()),
            "pub_violation_final": float(violations[-1]),
            "q_mean_final": float(stats.q_mean[-1]),
        }
    )
    _write_json(cfg.out_dir / "simulation.json", payload)
    return payload


def cmd_sweep(cfg: AnalysisConfig) -> dict:
    """Effective rate as the saturation budget varies; writes convergence.csv."""
    if cfg.sweep_ubar is None:
        raise ConfigError("sweep command needs a 'sweep' config section")
    P, rate, rate_linear = _resolve_certificate(cfg)
    noise = noise_energy(P, cfg.system.W)
    threshold_lhs = noise / (1.0 - rate)
    cho = scipy.linalg.cho_factor(np.asarray(P, dtype=float))
    K = cfg.gain.K
    quad = np.einsum("ij,ji->i", K, scipy.linalg.cho_solve(cho, K.T))
    # Infimum budget at which the tightening condition starts to hold:
    # every channel needs (u - vbar_i)^2 / quad_i > noise / (1 - rate).
    ubar_star = float(np.max(cfg.vbar + np.sqrt(threshold_lhs * quad)))
    rows = []
    swept = []
    for u in cfg.sweep_ubar:
        ubar_vec = np.full(cfg.system.m, float(u))
        if np.any(cfg.vbar > ubar_vec):
            continue
        r_lin = linear_region_scaling(P, K, ubar_vec, cfg.vbar)
        profile = select_rate(rate, rate_linear, noise, r_lin)
        if profile.fallback:
            continue
        rows.append([_fmt(r_lin), _fmt(rate_linear), _fmt(profile.rate_effective)])
        swept.append((float(u), float(r_lin), float(profile.rate_effective)))
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    if "convergence" in cfg.emit:
        _write_csv(cfg.out_dir / "convergence.csv", ["rl", "ll", "lb"], rows)
    payload = {
        "lambda": float(rate),
        "lambda_L": float(rate_linear),
        "trace_PW": float(noise),
        "ubar_star": ubar_star,
        "grid_size": int(cfg.sweep_ubar.size),
        "admissible": len(swept),
        "first_admissible_ubar": swept[0][0] if swept else None,
        "largest_r_L": swept[-1][1] if swept else None,
        "last_effective_rate": swept[-1][2] if swept else None,
    }
    _write_json(cfg.out_dir / "sweep.json", payload)
    return payload


def cmd_report(cfg: AnalysisConfig) -> dict:
    """Merge whichever JSON artifacts earlier commands left behind."""
    merged = {}
    for name in ("certificate", "analysis", "simulation", "sweep"):
        path = cfg.out_dir / f"{name}.json"
        if path.exists():
            try:
                merged[name] = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"cannot merge {path}: {exc}") from exc
        else:
            merged[name] = None
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(cfg.out_dir / "report.json", merged)
    return merged


_COMMANDS = {
    "certify": cmd_certify,
    "analyze": cmd_analyze,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "report": cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satreach",
        description="Probabilistic reachable sets for saturated linear systems",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="path to the JSON config")
    common.add_argument("--out", default=None, help="override the output directory")
    common.add_argument("--seed", type=int, default=None, help="override the simulation seed")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _COMMANDS.items():
        sub.add_parser(name, parents=[common], help=func.__doc__)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.out is not None:
            cfg.out_dir = Path(args.out)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be nonnegative")
            base = cfg.simulation or SimulationConfig(horizon=100, num_traj=1000, seed=0)
            cfg.simulation = replace(base, seed=args.seed)
        payload = _COMMANDS[args.command](cfg)
        print(json.dumps(payload, indent=2, sort_keys=True))
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"synthesis failure: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS
    except (PreconditionError, NotApplicableError, CertificateError, ValueError) as exc:
        print(f"precondition violation: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    raise SystemExit(main())
