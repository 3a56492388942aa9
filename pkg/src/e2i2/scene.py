"""Sources, detectors and single-particle propagation amplitudes.

A scene is an immutable description of emitter/detector geometry.  The
propagation amplitude between an emitter and a detector is a scalar
spherical wave exp(i k r + i phi) / r (k = 2 pi / wavelength, phi the
emitter's per-realization emission phase); a ``pure_phase`` scene flag
drops the 1/r factor for unit-modulus amplitudes in normalized tests.
Arrival-time differences are ignored throughout (equal-time
approximation).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .linalg import require_density, require_projector

PHOTON = "photon"
BOSON = "boson"
FERMION = "fermion"
DECAYING_C = "decaying-C"
SPECIES = (PHOTON, BOSON, FERMION, DECAYING_C)

# Propagator species tags: boson-like amplitudes are conventionally called
# D, fermion-like ones S.  Identical kinematics, different bookkeeping.
BOSON_LIKE = "D"
FERMION_LIKE = "S"


def _as_position(p) -> np.ndarray:
    v = np.asarray(p, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValidationError(f"position must be a finite 3-vector, got {p!r}")
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class Emitter:
    """Point source of particles of one species.

    ``emission_phase`` is the per-realization random phase carried into
    every amplitude leaving this emitter; ``polarization`` (photons only)
    is a 2x2 density matrix.
    """

    position: np.ndarray
    species: str = PHOTON
    wavelength: float = 500e-9
    emission_phase: float = 0.0
    polarization: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _as_position(self.position))
        if self.species not in SPECIES:
            raise ValidationError(f"unknown species {self.species!r}, expected one of {SPECIES}")
        if not self.wavelength > 0:
            raise ValidationError(f"wavelength must be positive, got {self.wavelength}")
        if self.polarization is not None:
            if self.species != PHOTON:
                raise ValidationError("polarization only applies to photon emitters")
            object.__setattr__(
                self, "polarization", require_density(self.polarization, name="emitter polarization")
            )


@dataclass(frozen=True)
class Detector:
    """Point detector, optionally projecting onto a polarization state."""

    position: np.ndarray
    accepts: frozenset = frozenset(SPECIES)
    projector: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _as_position(self.position))
        object.__setattr__(self, "accepts", frozenset(self.accepts))
        unknown = self.accepts - set(SPECIES)
        if unknown:
            raise ValidationError(f"detector accepts unknown species {sorted(unknown)}")
        if self.projector is not None:
            object.__setattr__(
                self,
                "projector",
                require_projector(self.projector, tol=1e-12, name="detector projector"),
            )


@dataclass(frozen=True)
class Propagator:
    """Complex transition amplitude for one emitter-detector leg."""

    value: complex
    species: str  # BOSON_LIKE ("D") or FERMION_LIKE ("S")


@dataclass(frozen=True)
class OpticalScene:
    """Immutable collection of emitters and detectors plus run settings.

    ``phase_noise`` controls whether emission phases enter amplitudes;
    ``pure_phase`` switches propagators to unit modulus; ``rng_seed``
    makes every random draw reproducible.
    """

    emitters: tuple = ()
    detectors: tuple = ()
    rng_seed: int = 0
    phase_noise: bool = False
    pure_phase: bool = False

    def __post_init__(self):
        object.__setattr__(self, "emitters", tuple(self.emitters))
        object.__setattr__(self, "detectors", tuple(self.detectors))
        if len(self.emitters) < 1 or len(self.detectors) < 1:
            raise ValidationError("scene needs at least one emitter and one detector")
        positions = np.array(
            [e.position for e in self.emitters] + [d.position for d in self.detectors]
        )
        if len(np.unique(positions, axis=0)) != len(positions):
            raise ValidationError("scene positions must be pairwise distinct")

    def propagator(self, emitter_index: int, detector_index: int) -> Propagator:
        """Propagation amplitude from one emitter to one detector."""
        return propagator(
            self.emitters[emitter_index],
            self.detectors[detector_index],
            include_emission_phase=self.phase_noise,
            pure_phase=self.pure_phase,
        )

    def propagator_matrix(self) -> np.ndarray:
        """All amplitudes as a complex array P[emitter, detector]."""
        out = np.empty((len(self.emitters), len(self.detectors)), dtype=complex)
        for i in range(len(self.emitters)):
            for j in range(len(self.detectors)):
                out[i, j] = self.propagator(i, j).value
        return out

    def with_drawn_phases(self, seed: int | None = None) -> "OpticalScene":
        """New scene whose emitters carry freshly drawn emission phases."""
        phases = draw_phases(self, seed=seed)
        emitters = tuple(
            dataclasses.replace(e, emission_phase=float(p))
            for e, p in zip(self.emitters, phases)
        )
        return dataclasses.replace(self, emitters=emitters)


def propagation_amplitude(
    src_position,
    det_position,
    wavelength: float,
    emission_phase: float = 0.0,
    pure_phase: bool = False,
) -> complex:
    """Spherical-wave amplitude exp(i k r + i phi) / r between two points."""
    src = np.asarray(src_position, dtype=float)
    det = np.asarray(det_position, dtype=float)
    r = float(np.linalg.norm(det - src))
    if r == 0.0:
        raise ValidationError("propagator endpoints coincide")
    phase = 2.0 * np.pi / wavelength * r + emission_phase
    amp = complex(np.cos(phase), np.sin(phase))
    return amp if pure_phase else amp / r


def propagator(
    src: Emitter,
    det: Detector,
    include_emission_phase: bool = True,
    pure_phase: bool = False,
) -> Propagator:
    """Amplitude for ``src``'s particle to reach ``det``.

    The emitter's emission phase is included only when
    ``include_emission_phase`` is set (scenes pass their ``phase_noise``
    flag here).  Fermion emitters yield fermion-like (S) amplitudes, all
    other species boson-like (D) ones.
    """
    if src.species not in det.accepts:
        raise ValidationError(
            f"detector does not accept species {src.species!r} (accepts {sorted(det.accepts)})"
        )
    value = propagation_amplitude(
        src.position,
        det.position,
        wavelength=src.wavelength,
        emission_phase=src.emission_phase if include_emission_phase else 0.0,
        pure_phase=pure_phase,
    )
    tag = FERMION_LIKE if src.species == FERMION else BOSON_LIKE
    return Propagator(value=value, species=tag)


def draw_phases(scene: OpticalScene, seed: int | None = None) -> np.ndarray:
    """Independent uniform [0, 2 pi) phase per emitter, reproducible by seed.

    Uses numpy's PCG64 generator seeded with ``seed`` (defaults to the
    scene's ``rng_seed``).
    """
    rng = np.random.default_rng(scene.rng_seed if seed is None else seed)
    return rng.uniform(0.0, 2.0 * np.pi, size=len(scene.emitters))
