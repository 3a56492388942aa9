"""Run-configuration parsing and validation.

Configs are JSON documents with four sections: ``geometry`` (positions
and wavelength), ``sources`` (species, polarizations, decay amplitudes,
joint emitter tensor), ``detectors`` (projectors, joint detector tensor,
procedure selection) and ``run`` (mode, scan grid, seed, noise).  Complex
numbers are written as two-element ``[re, im]`` arrays; 2x2 matrices as
row-nested pair arrays; joint tensors either as named Bell states or as
``entries[a1][b1][a2][b2]`` nests.  Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .entanglement import bell_state_tensor
from .errors import ConfigError, ValidationError
from .estimation import model_spec
from .linalg import Tensor4, require_density, require_projector
from .procedures import DecayChannel, ThreeLevelAtom
from .scene import SPECIES, Detector, Emitter, OpticalScene

MODES = ("rate", "scan", "fit", "witness", "procedure", "variant")
PROCEDURES = ("entangled-projection", "local-basis", "spatial-swap")
VARIANT_KINDS = ("wavelength", "decay", "mz")


def _fail(path: str, message: str) -> None:
    # Schema and invariant problems are validation failures (CLI exit 3);
    # ConfigError is reserved for JSON syntax / IO / override errors (exit 2).
    raise ValidationError(f"{path}: {message}")


def _check_keys(obj: dict, allowed: set, path: str) -> None:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    unknown = set(obj) - allowed
    if unknown:
        _fail(path, f"unknown keys {sorted(unknown)}; allowed: {sorted(allowed)}")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {value!r}")
    return int(value)


def _boolean(value, path: str) -> bool:
    if not isinstance(value, bool):
        _fail(path, f"expected a boolean, got {value!r}")
    return value


def _complex_pair(value, path: str) -> complex:
    if (
        not isinstance(value, (list, tuple))
        or len(value) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value)
    ):
        _fail(path, f"expected a complex number as [re, im], got {value!r}")
    return complex(float(value[0]), float(value[1]))


def _vector3(value, path: str) -> tuple:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        _fail(path, f"expected a 3-vector, got {value!r}")
    return tuple(_number(v, f"{path}[{i}]") for i, v in enumerate(value))


def _matrix2(value, path: str) -> np.ndarray:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        _fail(path, "expected a 2x2 matrix as two rows of [re, im] pairs")
    out = np.empty((2, 2), dtype=complex)
    for i, row in enumerate(value):
        if not isinstance(row, (list, tuple)) or len(row) != 2:
            _fail(f"{path}[{i}]", "expected a row of two [re, im] pairs")
        for j, entry in enumerate(row):
            out[i, j] = _complex_pair(entry, f"{path}[{i}][{j}]")
    return out


def _tensor4(value, path: str) -> Tensor4:
    if not isinstance(value, dict):
        _fail(path, "expected an object with either 'bell' or 'dim_a'/'dim_b'/'entries'")
    if "bell" in value:
        _check_keys(value, {"bell"}, path)
        if value["bell"] not in ("singlet", "triplet", "phi_plus"):
            _fail(f"{path}.bell", f"unknown Bell state {value['bell']!r}")
        return bell_state_tensor(value["bell"])
    _check_keys(value, {"dim_a", "dim_b", "entries"}, path)
    for key in ("dim_a", "dim_b", "entries"):
        if key not in value:
            _fail(path, f"missing key {key!r}")
    da = _integer(value["dim_a"], f"{path}.dim_a")
    db = _integer(value["dim_b"], f"{path}.dim_b")
    entries = value["entries"]
    arr = np.empty((da, db, da, db), dtype=complex)
    try:
        for a1 in range(da):
            for b1 in range(db):
                for a2 in range(da):
                    for b2 in range(db):
                        arr[a1, b1, a2, b2] = _complex_pair(
                            entries[a1][b1][a2][b2],
                            f"{path}.entries[{a1}][{b1}][{a2}][{b2}]",
                        )
    except (IndexError, TypeError, KeyError):
        _fail(f"{path}.entries", f"expected a [{da}][{db}][{da}][{db}] nest of [re, im] pairs")
    return Tensor4(arr)


@dataclass(frozen=True)
class ScanSpec:
    axis: tuple
    start: float
    stop: float
    steps: int

    def baselines(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)


@dataclass(frozen=True)
class FitSpec:
    model: str
    bounds: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)
    noise_sigma_rel: float = 0.0
    n_starts: int = 16
    data_path: str | None = None


@dataclass(frozen=True)
class WitnessSpec:
    threshold: float = 1e-4
    n_starts: int = 16


@dataclass(frozen=True)
class VariantSpec:
    kind: str
    atom: ThreeLevelAtom | None = None
    sweep_points: int = 256


@dataclass(frozen=True)
class RunSpec:
    """Validated configuration: the scene plus mode-specific parameters."""

    scene: OpticalScene
    mode: str
    seed: int
    scan: ScanSpec | None = None
    polarizations: tuple | None = None
    projectors: tuple | None = None
    emitter_tensor: Tensor4 | None = None
    detector_tensor: Tensor4 | None = None
    decay_channel: DecayChannel | None = None
    procedure: str | None = None
    fit: FitSpec | None = None
    witness: WitnessSpec | None = None
    variant: VariantSpec | None = None

    @property
    def uses_tensors(self) -> bool:
        return self.emitter_tensor is not None or self.detector_tensor is not None

    @property
    def uses_polarization(self) -> bool:
        return self.polarizations is not None or self.projectors is not None


def parse_config_text(text: str) -> dict:
    """Parse JSON text, converting syntax errors to ConfigError with position."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}",
            line=exc.lineno,
            column=exc.colno,
        ) from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    return raw


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())


def apply_overrides(raw: dict, overrides) -> dict:
    """Apply dotted key=value overrides; values parse as JSON when possible."""
    out = json.loads(json.dumps(raw))  # deep copy through plain JSON types
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must have the form key.path=value")
        dotted, value_text = item.split("=", 1)
        keys = dotted.strip().split(".")
        if not all(keys):
            raise ConfigError(f"override {item!r} has an empty key component")
        try:
            value = json.loads(value_text)
        except json.JSONDecodeError:
            value = value_text
        node = out
        for key in keys[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {dotted!r} traverses a non-object at {key!r}")
        node[keys[-1]] = value
    return out


def canonical_text(raw: dict) -> str:
    """Deterministic serialization of the effective config (digest input)."""
    return json.dumps(raw, sort_keys=True, separators=(",", ":"))


def _parse_geometry(raw: dict):
    _check_keys(raw, {"wavelength", "emitters", "detectors", "pure_phase"}, "geometry")
    for key in ("wavelength", "emitters", "detectors"):
        if key not in raw:
            _fail("geometry", f"missing key {key!r}")
    wavelength = _number(raw["wavelength"], "geometry.wavelength")
    if wavelength <= 0:
        _fail("geometry.wavelength", f"must be positive, got {wavelength}")
    if not isinstance(raw["emitters"], list) or not raw["emitters"]:
        _fail("geometry.emitters", "expected a non-empty list of positions")
    if not isinstance(raw["detectors"], list) or not raw["detectors"]:
        _fail("geometry.detectors", "expected a non-empty list of positions")
    emitters = [_vector3(p, f"geometry.emitters[{i}]") for i, p in enumerate(raw["emitters"])]
    detectors = [_vector3(p, f"geometry.detectors[{i}]") for i, p in enumerate(raw["detectors"])]
    pure_phase = _boolean(raw.get("pure_phase", False), "geometry.pure_phase")
    return wavelength, emitters, detectors, pure_phase


def _parse_sources(raw: dict, n_emitters: int):
    _check_keys(
        raw,
        {"species", "wavelengths", "polarizations", "decay_amplitudes", "emitter_tensor"},
        "sources",
    )
    species = None
    if "species" in raw:
        if not isinstance(raw["species"], list) or len(raw["species"]) != n_emitters:
            _fail("sources.species", f"expected one species per emitter ({n_emitters})")
        for i, s in enumerate(raw["species"]):
            if s not in SPECIES:
                _fail(f"sources.species[{i}]", f"unknown species {s!r}; expected one of {SPECIES}")
        species = list(raw["species"])
    wavelengths = None
    if "wavelengths" in raw:
        if not isinstance(raw["wavelengths"], list) or len(raw["wavelengths"]) != n_emitters:
            _fail("sources.wavelengths", f"expected one wavelength per emitter ({n_emitters})")
        wavelengths = [
            _number(w, f"sources.wavelengths[{i}]") for i, w in enumerate(raw["wavelengths"])
        ]
    polarizations = None
    if "polarizations" in raw:
        if not isinstance(raw["polarizations"], list) or len(raw["polarizations"]) != n_emitters:
            _fail("sources.polarizations", f"expected one entry per emitter ({n_emitters})")
        polarizations = []
        for i, m in enumerate(raw["polarizations"]):
            if m is None:
                polarizations.append(None)
                continue
            mat = _matrix2(m, f"sources.polarizations[{i}]")
            polarizations.append(require_density(mat, name=f"sources.polarizations[{i}]"))
        polarizations = tuple(polarizations)
    decay = None
    if "decay_amplitudes" in raw:
        block = raw["decay_amplitudes"]
        _check_keys(block, {"dd", "ee"}, "sources.decay_amplitudes")
        for key in ("dd", "ee"):
            if key not in block:
                _fail("sources.decay_amplitudes", f"missing key {key!r}")
        decay = DecayChannel(
            _complex_pair(block["dd"], "sources.decay_amplitudes.dd"),
            _complex_pair(block["ee"], "sources.decay_amplitudes.ee"),
        )
    tensor = None
    if "emitter_tensor" in raw and raw["emitter_tensor"] is not None:
        tensor = _tensor4(raw["emitter_tensor"], "sources.emitter_tensor")
    return species, wavelengths, polarizations, decay, tensor


def _parse_detectors(raw: dict, n_detectors: int):
    _check_keys(raw, {"projectors", "detector_tensor", "procedure", "accepts"}, "detectors")
    projectors = None
    if "projectors" in raw:
        if not isinstance(raw["projectors"], list) or len(raw["projectors"]) != n_detectors:
            _fail("detectors.projectors", f"expected one entry per detector ({n_detectors})")
        projectors = []
        for i, m in enumerate(raw["projectors"]):
            if m is None:
                projectors.append(None)
                continue
            mat = _matrix2(m, f"detectors.projectors[{i}]")
            projectors.append(require_projector(mat, name=f"detectors.projectors[{i}]"))
        projectors = tuple(projectors)
    tensor = None
    if "detector_tensor" in raw and raw["detector_tensor"] is not None:
        tensor = _tensor4(raw["detector_tensor"], "detectors.detector_tensor")
    procedure = None
    if "procedure" in raw:
        if raw["procedure"] not in PROCEDURES:
            _fail("detectors.procedure", f"expected one of {PROCEDURES}, got {raw['procedure']!r}")
        procedure = raw["procedure"]
    accepts = None
    if "accepts" in raw:
        if not isinstance(raw["accepts"], list) or len(raw["accepts"]) != n_detectors:
            _fail("detectors.accepts", f"expected one species list per detector ({n_detectors})")
        accepts = []
        for i, entry in enumerate(raw["accepts"]):
            if not isinstance(entry, list) or not entry:
                _fail(f"detectors.accepts[{i}]", "expected a non-empty species list")
            for s in entry:
                if s not in SPECIES:
                    _fail(f"detectors.accepts[{i}]", f"unknown species {s!r}")
            accepts.append(frozenset(entry))
    return projectors, tensor, procedure, accepts


def _parse_scan(raw: dict) -> ScanSpec:
    _check_keys(raw, {"axis", "from", "to", "steps"}, "run.scan")
    for key in ("from", "to", "steps"):
        if key not in raw:
            _fail("run.scan", f"missing key {key!r}")
    axis = _vector3(raw.get("axis", [1.0, 0.0, 0.0]), "run.scan.axis")
    start = _number(raw["from"], "run.scan.from")
    stop = _number(raw["to"], "run.scan.to")
    steps = _integer(raw["steps"], "run.scan.steps")
    if steps < 2:
        _fail("run.scan.steps", f"need at least 2 steps, got {steps}")
    if not start < stop:
        _fail("run.scan", f"'from' must be below 'to', got [{start}, {stop}]")
    return ScanSpec(axis=axis, start=start, stop=stop, steps=steps)


def _parse_fit(raw: dict) -> FitSpec:
    _check_keys(
        raw, {"model", "bounds", "context", "noise_sigma_rel", "n_starts", "data"}, "run.fit"
    )
    if "model" not in raw:
        _fail("run.fit", "missing key 'model'")
    spec = model_spec(raw["model"])  # raises ValidationError for unknown models
    bounds = {}
    if "bounds" in raw:
        _check_keys(raw["bounds"], set(spec.parameter_names), "run.fit.bounds")
        for name, pair in raw["bounds"].items():
            if not isinstance(pair, list) or len(pair) != 2:
                _fail(f"run.fit.bounds.{name}", "expected [lo, hi]")
            bounds[name] = (
                _number(pair[0], f"run.fit.bounds.{name}[0]"),
                _number(pair[1], f"run.fit.bounds.{name}[1]"),
            )
    context = raw.get("context", {})
    if not isinstance(context, dict):
        _fail("run.fit.context", "expected an object")
    noise = _number(raw.get("noise_sigma_rel", 0.0), "run.fit.noise_sigma_rel")
    if noise < 0:
        _fail("run.fit.noise_sigma_rel", f"must be nonnegative, got {noise}")
    n_starts = _integer(raw.get("n_starts", 16), "run.fit.n_starts")
    data_path = raw.get("data")
    if data_path is not None and not isinstance(data_path, str):
        _fail("run.fit.data", "expected a CSV path string")
    return FitSpec(
        model=raw["model"],
        bounds=bounds,
        context=dict(context),
        noise_sigma_rel=noise,
        n_starts=n_starts,
        data_path=data_path,
    )


def _parse_witness(raw: dict) -> WitnessSpec:
    _check_keys(raw, {"threshold", "n_starts"}, "run.witness")
    threshold = _number(raw.get("threshold", 1e-4), "run.witness.threshold")
    if threshold <= 0:
        _fail("run.witness.threshold", f"must be positive, got {threshold}")
    return WitnessSpec(
        threshold=threshold, n_starts=_integer(raw.get("n_starts", 16), "run.witness.n_starts")
    )


def _parse_variant(raw: dict) -> VariantSpec:
    _check_keys(raw, {"kind", "atom", "sweep_points"}, "run.variant")
    if "kind" not in raw:
        _fail("run.variant", "missing key 'kind'")
    kind = raw["kind"]
    if kind not in VARIANT_KINDS:
        _fail("run.variant.kind", f"expected one of {VARIANT_KINDS}, got {kind!r}")
    atom = None
    if "atom" in raw:
        block = raw["atom"]
        _check_keys(block, {"alpha", "beta", "coupling_02", "coupling_12"}, "run.variant.atom")
        for key in ("alpha", "beta"):
            if key not in block:
                _fail("run.variant.atom", f"missing key {key!r}")
        atom = ThreeLevelAtom(
            alpha=_complex_pair(block["alpha"], "run.variant.atom.alpha"),
            beta=_complex_pair(block["beta"], "run.variant.atom.beta"),
            coupling_02=_complex_pair(block.get("coupling_02", [1, 0]), "run.variant.atom.coupling_02"),
            coupling_12=_complex_pair(block.get("coupling_12", [1, 0]), "run.variant.atom.coupling_12"),
        )
    sweep_points = _integer(raw.get("sweep_points", 256), "run.variant.sweep_points")
    if sweep_points < 3:
        _fail("run.variant.sweep_points", f"need at least 3 points, got {sweep_points}")
    return VariantSpec(kind=kind, atom=atom, sweep_points=sweep_points)


def build_run(raw: dict) -> RunSpec:
    """Validate a parsed config document and assemble the run description."""
    _check_keys(raw, {"geometry", "sources", "detectors", "run"}, "config")
    for key in ("geometry", "run"):
        if key not in raw:
            _fail("config", f"missing section {key!r}")
    wavelength, emitter_positions, detector_positions, pure_phase = _parse_geometry(
        raw["geometry"]
    )
    species, wavelengths, polarizations, decay, emitter_tensor = _parse_sources(
        raw.get("sources", {}), len(emitter_positions)
    )
    projectors, detector_tensor, procedure, accepts = _parse_detectors(
        raw.get("detectors", {}), len(detector_positions)
    )

    run = raw["run"]
    _check_keys(run, {"mode", "seed", "noise", "scan", "fit", "witness", "variant"}, "run")
    if "mode" not in run:
        _fail("run", "missing key 'mode'")
    mode = run["mode"]
    if mode not in MODES:
        _fail("run.mode", f"expected one of {MODES}, got {mode!r}")
    seed = _integer(run.get("seed", 0), "run.seed")
    phase_noise = _boolean(run.get("noise", False), "run.noise")

    emitters = tuple(
        Emitter(
            position=pos,
            species=species[i] if species else "photon",
            wavelength=wavelengths[i] if wavelengths else wavelength,
        )
        for i, pos in enumerate(emitter_positions)
    )
    detectors = tuple(
        Detector(position=pos, accepts=accepts[i] if accepts else frozenset(SPECIES))
        for i, pos in enumerate(detector_positions)
    )
    scene = OpticalScene(
        emitters=emitters,
        detectors=detectors,
        rng_seed=seed,
        phase_noise=phase_noise,
        pure_phase=pure_phase,
    )
    if phase_noise:
        scene = scene.with_drawn_phases()

    scan = _parse_scan(run["scan"]) if "scan" in run else None
    fit_spec = _parse_fit(run["fit"]) if "fit" in run else None
    witness_spec = _parse_witness(run["witness"]) if "witness" in run else None
    variant_spec = _parse_variant(run["variant"]) if "variant" in run else None

    if mode in ("scan", "witness") and scan is None:
        _fail("run", f"mode {mode!r} requires a run.scan section")
    if mode == "fit" and fit_spec is None:
        _fail("run", "mode 'fit' requires a run.fit section")
    if mode == "witness" and emitter_tensor is None:
        _fail("sources", "mode 'witness' requires sources.emitter_tensor")
    if mode == "procedure" and procedure is None:
        _fail("detectors", "mode 'procedure' requires detectors.procedure")
    if mode == "variant":
        if variant_spec is None:
            _fail("run", "mode 'variant' requires a run.variant section")
        if variant_spec.kind == "wavelength" and variant_spec.atom is None:
            _fail("run.variant", "variant 'wavelength' requires run.variant.atom")
        if variant_spec.kind == "decay" and decay is None:
            _fail("sources", "variant 'decay' requires sources.decay_amplitudes")

    return RunSpec(
        scene=scene,
        mode=mode,
        seed=seed,
        scan=scan,
        polarizations=polarizations,
        projectors=projectors,
        emitter_tensor=emitter_tensor,
        detector_tensor=detector_tensor,
        decay_channel=decay,
        procedure=procedure,
        fit=fit_spec,
        witness=witness_spec,
        variant=variant_spec,
    )
