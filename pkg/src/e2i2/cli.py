"""Command-line front end: run or validate scene configs, emit CSV/JSON.

``run`` dispatches a validated config to the rate engines and writes the
results under an output directory: a ``record.json`` run record plus a
CSV per curve (``scan.csv`` for baseline scans, ``sweep.csv`` for phase
sweeps, ``fit_data.csv`` for fitted observations).  Outputs are
byte-deterministic for a fixed config and seed: floats are printed with
17 significant digits, JSON keys are sorted, and wall time goes to
stderr rather than into the record.  ``E2I2_THREADS`` caps scan
parallelism without affecting output ordering.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunSpec, apply_overrides, build_run, canonical_text, load_config
from .entanglement import (
    GeneralRateInput,
    general_crossed,
    general_direct,
    general_rate_curve,
    witness_factorization,
)
from .errors import ConfigError, ValidationError
from .estimation import FitProblem, fit as run_fit
from .hbt import fringe_spacing_from_curve, hbt_rate, rates_at_baselines
from .linalg import identity_tensor, tensor_product
from .polarization import IDENTITY2, pol_rate, pol_rates_at_baselines
from .procedures import (
    decay_interference_rate,
    decay_phase_sweep,
    mz_fringe_visibility,
    mz_no_recombine_rate,
    mz_phase_sweep,
    procedure1_rate,
    procedure2_rate,
    recover_decay_phase,
    spatial_swap_rate,
    swap_operator,
    wavelength_interference_rate,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3

UNPOLARIZED = 0.5 * np.eye(2, dtype=complex)


@dataclass(frozen=True)
class RunRecord:
    """Serializable summary of one CLI run."""

    artifact_version: str
    config_digest: str
    mode: str
    outputs: dict


def _format_float(x: float) -> str:
    return f"{x:.17g}"


def jsonable(obj):
    """Convert results to JSON-friendly structures; complex -> [re, im]."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def write_record(record: RunRecord, out_dir: Path) -> Path:
    payload = {
        "artifact_version": record.artifact_version,
        "config_digest": record.config_digest,
        "mode": record.mode,
        "outputs": jsonable(record.outputs),
    }
    path = out_dir / "record.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> Path:
    rows = zip(*columns)
    lines = [",".join(header)]
    lines.extend(",".join(_format_float(float(v)) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n")
    return path


def _max_workers() -> int:
    value = os.environ.get("E2I2_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigError(f"E2I2_THREADS must be an integer, got {value!r}")


def _chunked_curve(curve_fn, baselines: np.ndarray, max_workers: int):
    """Evaluate a (direct, crossed, total) curve, optionally chunk-parallel.

    Chunks are concatenated in order, so the output is independent of
    scheduling.
    """
    if max_workers <= 1 or len(baselines) < 2 * max_workers:
        return curve_fn(baselines)
    chunks = np.array_split(baselines, max_workers)
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        parts = list(pool.map(curve_fn, chunks))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def _scene_polarizations(spec: RunSpec):
    pols = spec.polarizations or (None, None)
    projs = spec.projectors or (None, None)
    pi1 = UNPOLARIZED if pols[0] is None else pols[0]
    pi2 = UNPOLARIZED if pols[1] is None else pols[1]
    return pi1, pi2, projs[0], projs[1]


def _emitter_tensor_or_default(spec: RunSpec):
    if spec.emitter_tensor is not None:
        return spec.emitter_tensor
    return tensor_product(UNPOLARIZED, UNPOLARIZED)


def _curve_function(spec: RunSpec, axis):
    scene = spec.scene
    if spec.uses_tensors:
        emitter_tensor = _emitter_tensor_or_default(spec)
        return lambda b: general_rate_curve(scene, spec.detector_tensor, emitter_tensor, axis, b)
    if spec.uses_polarization:
        pi1, pi2, pa, pb = _scene_polarizations(spec)
        return lambda b: pol_rates_at_baselines(scene, pi1, pi2, pa, pb, axis, b)
    return lambda b: rates_at_baselines(scene, axis, b)


def _execute_rate(spec: RunSpec) -> dict:
    scene = spec.scene
    if spec.uses_tensors:
        p = scene.propagator_matrix()
        if p.shape != (2, 2):
            raise ValidationError("tensor rate mode needs exactly 2 emitters and 2 detectors")
        emitter_tensor = _emitter_tensor_or_default(spec)
        detector_tensor = spec.detector_tensor or identity_tensor(
            emitter_tensor.dim_a, emitter_tensor.dim_b
        )
        rate_input = GeneralRateInput(
            detector_tensor, emitter_tensor, (p[0, 0], p[1, 1], p[1, 0], p[0, 1])
        )
        direct = general_direct(rate_input)
        crossed = general_crossed(rate_input)
        engine = "general-tensor"
        extra = {}
    elif spec.uses_polarization:
        pi1, pi2, pa, pb = _scene_polarizations(spec)
        result = pol_rate(scene, pi1, pi2, pa, pb)
        direct, crossed = result.direct, result.crossed
        engine = "polarization"
        extra = {"coefficients": result.coefficients}
    else:
        result = hbt_rate(scene)
        direct, crossed = result.direct, result.crossed
        engine = "scalar"
        extra = {}
    outputs = {
        "engine": engine,
        "direct": direct,
        "crossed": crossed,
        "total": direct + crossed,
        "crossed_over_direct": crossed / direct if direct != 0 else None,
    }
    outputs.update(extra)
    return outputs


def _execute_scan(spec: RunSpec, out_dir: Path) -> dict:
    scan = spec.scan
    baselines = scan.baselines()
    curve_fn = _curve_function(spec, scan.axis)
    direct, crossed, totals = _chunked_curve(curve_fn, baselines, _max_workers())
    write_csv(out_dir / "scan.csv", ["baseline", "total", "direct", "crossed"],
              [baselines, totals, direct, crossed])
    t_max, t_min = float(totals.max()), float(totals.min())
    visibility = 0.0 if t_max + t_min == 0.0 else (t_max - t_min) / (t_max + t_min)
    return {
        "n_points": len(baselines),
        "visibility": visibility,
        "fringe_spacing": fringe_spacing_from_curve(baselines, totals),
        "csv": "scan.csv",
    }


def _axial_distance(scene) -> float:
    emitter_z = np.mean([e.position[2] for e in scene.emitters])
    detector_z = np.mean([d.position[2] for d in scene.detectors])
    return float(abs(emitter_z - detector_z))


def _true_parameters(spec: RunSpec, model: str) -> dict:
    scene = spec.scene
    out = {}
    if model == "hbt-two-point" and len(scene.emitters) == 2:
        separation = float(
            np.linalg.norm(scene.emitters[0].position - scene.emitters[1].position)
        )
        distance = _axial_distance(scene)
        if distance > 0:
            out["separation_ratio"] = separation / distance
    if model == "hbt-extended" and len(scene.emitters) > 2:
        positions = np.array([e.position for e in scene.emitters])
        extent = float(
            max(
                np.linalg.norm(positions[i] - positions[j])
                for i in range(len(positions))
                for j in range(i + 1, len(positions))
            )
        )
        distance = _axial_distance(scene)
        if distance > 0:
            out["width_ratio"] = extent / distance
    if model == "decay-phase" and spec.decay_channel is not None:
        out["relative_phase"] = spec.decay_channel.relative_phase
    return out


def _generate_fit_observations(spec: RunSpec, controls: np.ndarray) -> np.ndarray:
    model = spec.fit.model
    scene = spec.scene
    if model in ("hbt-two-point", "hbt-extended"):
        _, _, totals = rates_at_baselines(scene, spec.scan.axis, controls)
    elif model == "decay-phase":
        if spec.decay_channel is None:
            raise ValidationError("decay-phase fit requires sources.decay_amplitudes")
        p = scene.propagator_matrix()
        if p.shape[1] < 2:
            raise ValidationError("decay-phase fit needs 2 detectors")
        d1a, s1b = p[0, 0], p[0, 1]
        totals = np.array(
            [
                decay_interference_rate(spec.decay_channel, d1a, abs(s1b) * np.exp(1j * t))
                for t in controls
            ]
        )
    elif model == "factorized-witness":
        if spec.emitter_tensor is None:
            raise ValidationError("factorized-witness fit requires sources.emitter_tensor")
        _, _, totals = general_rate_curve(
            scene, spec.detector_tensor, spec.emitter_tensor, spec.scan.axis, controls
        )
    else:
        raise ValidationError(f"no self-generation rule for model {model!r}")
    if spec.fit.noise_sigma_rel > 0:
        rng = np.random.default_rng(spec.seed)
        sigma = spec.fit.noise_sigma_rel * float(np.max(np.abs(totals)))
        totals = totals + rng.normal(0.0, sigma, size=totals.shape)
    return np.column_stack([controls, totals])


def _load_observations(path: Path) -> np.ndarray:
    if not path.exists():
        raise ConfigError(f"fit data file not found: {path}")
    rows = []
    for k, line in enumerate(path.read_text().splitlines()):
        line = line.strip()
        if not line or (k == 0 and any(c.isalpha() for c in line.split(",")[0])):
            continue
        parts = line.split(",")
        if len(parts) < 2:
            raise ConfigError(f"{path}: line {k + 1} needs at least 2 columns")
        rows.append((float(parts[0]), float(parts[1])))
    return np.asarray(rows, dtype=float)


def _execute_fit(spec: RunSpec, out_dir: Path) -> dict:
    fit_spec = spec.fit
    if fit_spec.data_path is not None:
        observations = _load_observations(Path(fit_spec.data_path))
    else:
        if spec.scan is None:
            raise ValidationError("self-generated fits require a run.scan control grid")
        controls = spec.scan.baselines()
        observations = _generate_fit_observations(spec, controls)
    write_csv(
        out_dir / "fit_data.csv",
        ["control", "rate"],
        [observations[:, 0], observations[:, 1]],
    )
    context = dict(fit_spec.context)
    scene = spec.scene
    if fit_spec.model in ("hbt-two-point", "hbt-extended"):
        context.setdefault("wavelength", scene.emitters[0].wavelength)
        context.setdefault("distance", _axial_distance(scene))
        context.setdefault("pure_phase", scene.pure_phase)
        if spec.scan is not None:
            context.setdefault("axis", spec.scan.axis)
    if fit_spec.model == "decay-phase" and spec.decay_channel is not None:
        channel = spec.decay_channel
        p = scene.propagator_matrix()
        context.setdefault("amplitude_dd_mod", abs(channel.amplitude_dd))
        context.setdefault("amplitude_ee_mod", abs(channel.amplitude_ee))
        context.setdefault("d1a", p[0, 0])
        context.setdefault("s1b_mod", abs(p[0, 1]))
    if fit_spec.model == "factorized-witness":
        context.setdefault("scene", scene)
        if spec.detector_tensor is not None:
            context.setdefault("detector_tensor", spec.detector_tensor)
        if spec.scan is not None:
            context.setdefault("axis", spec.scan.axis)
    sigma_abs = fit_spec.noise_sigma_rel * float(np.max(np.abs(observations[:, 1])))
    problem = FitProblem(
        observations=observations,
        model=fit_spec.model,
        parameter_bounds=fit_spec.bounds,
        noise_sigma=sigma_abs,
        context=context,
    )
    result = run_fit(problem, seed=spec.seed, n_starts=fit_spec.n_starts)
    return {
        "model": fit_spec.model,
        "parameters": result.parameters,
        "true_parameters": _true_parameters(spec, fit_spec.model),
        "residual_rms": result.residual_rms,
        "iterations": result.iterations,
        "converged": result.converged,
        "optimality": result.optimality,
        "n_observations": len(observations),
        "csv": "fit_data.csv",
    }


def _execute_witness(spec: RunSpec, out_dir: Path) -> dict:
    scan = spec.scan
    baselines = scan.baselines()
    direct, crossed, totals = general_rate_curve(
        spec.scene, spec.detector_tensor, spec.emitter_tensor, scan.axis, baselines
    )
    write_csv(out_dir / "scan.csv", ["baseline", "total", "direct", "crossed"],
              [baselines, totals, direct, crossed])
    witness_spec = spec.witness
    threshold = witness_spec.threshold if witness_spec else 1e-4
    n_starts = witness_spec.n_starts if witness_spec else 16
    verdict = witness_factorization(
        spec.scene,
        baselines,
        totals,
        axis=scan.axis,
        detector_tensor=spec.detector_tensor,
        threshold=threshold,
        emitter_tensor_true=spec.emitter_tensor,
        n_starts=n_starts,
        seed=spec.seed,
    )
    report = verdict.schmidt_report
    return {
        "factorizable": verdict.factorizable,
        "fit_residual": verdict.fit_residual,
        "threshold": verdict.threshold,
        "operator_schmidt": {
            "singular_values": report.singular_values,
            "rank": report.operator_schmidt_rank,
            "residual_to_rank1": report.residual_to_rank1,
        },
        "fitted_marginals": [verdict.fitted_marginals[0], verdict.fitted_marginals[1]],
        "csv": "scan.csv",
    }


def _execute_procedure(spec: RunSpec) -> dict:
    p = spec.scene.propagator_matrix()
    if p.shape != (2, 2):
        raise ValidationError("procedure mode needs exactly 2 emitters and 2 detectors")
    # First emitter feeds the S-type legs, second the D-type legs.
    s1a, s1b = p[0, 0], p[0, 1]
    d2a, d2b = p[1, 0], p[1, 1]
    amplitudes = {"S1A": s1a, "D2B": d2b, "D2A": d2a, "S1B": s1b}
    if spec.procedure == "entangled-projection":
        rate = procedure1_rate(s1a, d2b, d2a, s1b)
        complementary = procedure1_rate(s1a, d2b, d2a, s1b, antisymmetric=True)
        extra = {}
    elif spec.procedure == "local-basis":
        rate = procedure2_rate(s1a, d2b, d2a, s1b)
        complementary = None
        extra = {}
    else:  # spatial-swap
        rate = spatial_swap_rate(s1a, d2b, d2a, s1b)
        complementary = spatial_swap_rate(s1a, d2b, d2a, s1b, swapped_target=True)
        s = swap_operator()
        extra = {
            "swap_unitarity_deviation": float(np.max(np.abs(s @ s.conj().T - np.eye(4)))),
            "swap_involution_deviation": float(np.max(np.abs(s @ s - np.eye(4)))),
        }
    outputs = {
        "procedure": spec.procedure,
        "rate": rate,
        "complementary_rate": complementary,
        "amplitudes": amplitudes,
    }
    outputs.update(extra)
    return outputs


def _sweep_summary(thetas: np.ndarray, rates: np.ndarray, out_dir: Path) -> dict:
    write_csv(out_dir / "sweep.csv", ["phase", "total"], [thetas, rates])
    r_max, r_min = float(rates.max()), float(rates.min())
    visibility = 0.0 if r_max + r_min == 0.0 else (r_max - r_min) / (r_max + r_min)
    return {"n_points": len(thetas), "visibility": visibility, "csv": "sweep.csv"}


def _execute_variant(spec: RunSpec, out_dir: Path) -> dict:
    variant = spec.variant
    scene = spec.scene
    p = scene.propagator_matrix()
    if variant.kind == "wavelength":
        if p.shape[0] < 2:
            raise ValidationError("wavelength variant needs 2 emitters")
        amp1, amp2 = p[0, 0], p[1, 0]
        atom = variant.atom
        rate = wavelength_interference_rate(atom, amp1, amp2)
        thetas = np.linspace(0.0, 2.0 * np.pi, variant.sweep_points, endpoint=False)
        rates = np.array(
            [
                wavelength_interference_rate(atom, amp1, amp2 * np.exp(1j * t))
                for t in thetas
            ]
        )
        outputs = {"kind": variant.kind, "rate": rate}
        outputs.update(_sweep_summary(thetas, rates, out_dir))
        return outputs
    if variant.kind == "decay":
        if p.shape[1] < 2:
            raise ValidationError("decay variant needs 2 detectors")
        channel = spec.decay_channel
        d1a, s1b = p[0, 0], p[0, 1]
        rate = decay_interference_rate(channel, d1a, s1b)
        thetas, rates = decay_phase_sweep(channel, d1a, abs(s1b), variant.sweep_points)
        recovered = recover_decay_phase(channel, d1a, abs(s1b), variant.sweep_points)
        outputs = {
            "kind": variant.kind,
            "rate": rate,
            "recovered_relative_phase": recovered,
            "true_relative_phase": channel.relative_phase,
        }
        outputs.update(_sweep_summary(thetas, rates, out_dir))
        return outputs
    # mz
    if p.shape[1] < 2:
        raise ValidationError("mz variant needs 2 detectors (the two atom boxes)")
    d1a, d1b = p[0, 0], p[0, 1]
    rate = mz_no_recombine_rate(d1a, d1b)
    thetas, rates = mz_phase_sweep(d1a, d1b, variant.sweep_points)
    outputs = {
        "kind": variant.kind,
        "rate": rate,
        "visibility_exact": mz_fringe_visibility(d1a, d1b),
    }
    outputs.update(_sweep_summary(thetas, rates, out_dir))
    return outputs


def execute(spec: RunSpec, effective_config: dict, out_dir: Path) -> RunRecord:
    """Dispatch a validated run spec and write its artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if spec.mode == "rate":
        outputs = _execute_rate(spec)
    elif spec.mode == "scan":
        outputs = _execute_scan(spec, out_dir)
    elif spec.mode == "fit":
        outputs = _execute_fit(spec, out_dir)
    elif spec.mode == "witness":
        outputs = _execute_witness(spec, out_dir)
    elif spec.mode == "procedure":
        outputs = _execute_procedure(spec)
    else:
        outputs = _execute_variant(spec, out_dir)
    digest = hashlib.sha256(canonical_text(effective_config).encode()).hexdigest()
    record = RunRecord(
        artifact_version=__version__,
        config_digest=f"sha256:{digest}",
        mode=spec.mode,
        outputs=outputs,
    )
    write_record(record, out_dir)
    return record


def _effective_config(args) -> dict:
    raw = load_config(args.config)
    overrides = list(args.override or [])
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    return apply_overrides(raw, overrides)


def _cmd_run(args) -> int:
    started = time.perf_counter()
    effective = _effective_config(args)
    spec = build_run(effective)
    record = execute(spec, effective, Path(args.out))
    elapsed = time.perf_counter() - started
    print(f"mode={record.mode} -> {Path(args.out) / 'record.json'}")
    print(f"elapsed {elapsed:.3f} s", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args) -> int:
    effective = _effective_config(args)
    spec = build_run(effective)
    print("configuration OK")
    print(f"  mode: {spec.mode}")
    print(f"  emitters: {len(spec.scene.emitters)}, detectors: {len(spec.scene.detectors)}")
    if spec.uses_tensors:
        print("  joint tensors: present")
    if spec.uses_polarization:
        print("  polarization data: present")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="e2i2",
        description="Coincidence-rate simulator for generalized intensity interferometry",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", _cmd_run), ("validate", _cmd_validate)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON scene config")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="dotted-path config override (repeatable)",
        )
        p.add_argument("--seed", type=int, default=None, help="shorthand for run.seed")
        if name == "run":
            p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(handler=fn)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
