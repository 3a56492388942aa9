"""Scalar two-source coincidence rates and baseline scans.

The coincidence rate for two sources (1, 2) feeding two detectors (A, B)
is the squared modulus of the sum of the two assignment amplitudes::

    total = |D1A*D2B + D2A*D1B|^2
          = |D1A|^2 |D2B|^2 + |D2A|^2 |D1B|^2            (direct)
          + 2 Re(D1A * D2B * conj(D2A) * conj(D1B))      (crossed)

Each emitter's random phase appears once in a propagator and once in a
conjugated propagator of the crossed term, so emission phase noise
cancels identically and only geometric phases survive.  Extended sources
are finite sets of mutually incoherent point emitters whose pairwise
rates add.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .scene import BOSON, PHOTON, OpticalScene

EXTENDED_SOURCE_POINTS = 51  # default discretization of an extended source


@dataclass(frozen=True)
class RateResult:
    """Unnormalized coincidence rate split into direct and crossed parts."""

    direct: float
    crossed: float

    def __post_init__(self):
        scale = max(1.0, self.direct)
        if self.total < -1e-12 * scale:
            raise ValidationError(f"total rate {self.total} is negative")
        if abs(self.crossed) > self.direct + 1e-12 * scale:
            raise ValidationError(
                f"crossed term {self.crossed} exceeds direct term {self.direct}"
            )

    @property
    def total(self) -> float:
        return self.direct + self.crossed


@dataclass(frozen=True)
class VisibilityCurve:
    """Sampled totals over detector baseline plus fringe summaries.

    ``visibility`` is (max - min) / (max + min) over the sampled totals;
    ``fringe_spacing`` is the mean distance between adjacent interior
    maxima after 3-point quadratic refinement, or None when fewer than
    two interior maxima were sampled.
    """

    baselines: np.ndarray
    totals: np.ndarray
    direct: np.ndarray
    crossed: np.ndarray
    visibility: float
    fringe_spacing: float | None


def pair_rate(d1a: complex, d2b: complex, d2a: complex, d1b: complex) -> RateResult:
    """Coincidence rate from the four propagation amplitudes."""
    direct = abs(d1a) ** 2 * abs(d2b) ** 2 + abs(d2a) ** 2 * abs(d1b) ** 2
    crossed = 2.0 * (d1a * d2b * np.conj(d2a) * np.conj(d1b)).real
    return RateResult(direct=float(direct), crossed=float(crossed))


def _require_two_source_scene(scene: OpticalScene) -> None:
    if len(scene.emitters) != 2 or len(scene.detectors) != 2:
        raise ValidationError(
            f"two-source rate needs exactly 2 emitters and 2 detectors, "
            f"got {len(scene.emitters)} and {len(scene.detectors)}"
        )
    for e in scene.emitters:
        if e.species not in (PHOTON, BOSON):
            raise ValidationError(f"scalar rate requires photon/boson emitters, got {e.species!r}")
    pols = [e.polarization for e in scene.emitters]
    if any(p is not None for p in pols):
        if any(p is None for p in pols):
            raise ValidationError("either both or neither emitter may carry polarization")
        if np.max(np.abs(pols[0] - pols[1])) > 1e-12:
            raise ValidationError("scalar rate requires identical emitter polarizations")
        purity = np.trace(pols[0] @ pols[0]).real
        if abs(purity - 1.0) > 1e-9:
            raise ValidationError(
                "scalar rate requires pure identical polarizations "
                f"(purity {purity:.6f}); use the polarization engine for mixtures"
            )


def hbt_rate(scene: OpticalScene) -> RateResult:
    """Scalar coincidence rate of a two-emitter, two-detector scene."""
    _require_two_source_scene(scene)
    p = scene.propagator_matrix()
    return pair_rate(p[0, 0], p[1, 1], p[1, 0], p[0, 1])


@dataclass(frozen=True)
class PhaseNoiseStats:
    """Totals of one scene across independent emission-phase draws."""

    totals: np.ndarray
    mean: float
    max_abs_deviation: float


def phase_noise_envelope(scene: OpticalScene, n_realizations: int) -> PhaseNoiseStats:
    """Sample the rate over independent random emission-phase draws.

    The crossed term pairs every emitter phase with its conjugate, so the
    deviation across realizations is zero up to rounding.
    """
    if n_realizations < 1:
        raise ValidationError(f"need at least one realization, got {n_realizations}")
    if not scene.phase_noise:
        raise ValidationError("phase_noise_envelope requires a scene with phase_noise=True")
    children = np.random.SeedSequence(scene.rng_seed).spawn(n_realizations)
    totals = np.array(
        [hbt_rate(scene.with_drawn_phases(seed=child)).total for child in children]
    )
    mean = float(totals.mean())
    return PhaseNoiseStats(
        totals=totals, mean=mean, max_abs_deviation=float(np.max(np.abs(totals - mean)))
    )


def _unit_axis(axis) -> np.ndarray:
    a = np.asarray(axis, dtype=float)
    if a.shape != (3,):
        raise ValidationError(f"scan axis must be a 3-vector, got {a!r}")
    n = float(np.linalg.norm(a))
    if n == 0.0 or not np.isfinite(n):
        raise ValidationError("scan axis is degenerate (zero norm)")
    return a / n


def _scan_detector_positions(scene: OpticalScene, axis_unit: np.ndarray, baselines: np.ndarray):
    """Detector positions c -+ (b/2) * axis about the configured midpoint."""
    if len(scene.detectors) != 2:
        raise ValidationError("baseline scan needs exactly 2 detectors")
    center = (scene.detectors[0].position + scene.detectors[1].position) / 2.0
    offsets = 0.5 * baselines[:, None] * axis_unit[None, :]
    return center[None, :] - offsets, center[None, :] + offsets


def _amplitude_matrix(scene: OpticalScene, det_positions: np.ndarray) -> np.ndarray:
    """Amplitudes [emitter, point] from every emitter to an (N, 3) position set."""
    positions = np.array([e.position for e in scene.emitters])
    wavenumbers = np.array([2.0 * np.pi / e.wavelength for e in scene.emitters])
    phases = np.array(
        [e.emission_phase if scene.phase_noise else 0.0 for e in scene.emitters]
    )
    r = np.linalg.norm(positions[:, None, :] - det_positions[None, :, :], axis=2)
    if np.any(r == 0.0):
        raise ValidationError("scan placed a detector on top of an emitter")
    amps = np.exp(1j * (wavenumbers[:, None] * r + phases[:, None]))
    return amps if scene.pure_phase else amps / r


def scan_pair_amplitudes(
    scene: OpticalScene, axis, baselines
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Amplitudes (D1A, D2B, D2A, D1B) per baseline for a two-emitter scene.

    At baseline b the detectors sit at c -+ (b/2) * axis, where c is the
    midpoint of the scene's configured detector positions.
    """
    _require_two_source_scene(scene)
    axis_unit = _unit_axis(axis)
    baselines = np.asarray(baselines, dtype=float)
    pos_a, pos_b = _scan_detector_positions(scene, axis_unit, baselines)
    amps_a = _amplitude_matrix(scene, pos_a)
    amps_b = _amplitude_matrix(scene, pos_b)
    return amps_a[0], amps_b[1], amps_a[1], amps_b[0]


def rates_at_baselines(
    scene: OpticalScene, axis, baselines
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(direct, crossed, total) arrays over baselines.

    Scenes with more than two emitters are treated as incoherent
    collections: the two-source rates of every unordered emitter pair are
    summed per baseline.  The pair sums are evaluated in closed form:
    with per-emitter amplitudes A_i, B_i at the two detectors and
    u_i = A_i conj(B_i),

        direct  = (sum |A_i|^2)(sum |B_j|^2) - sum |u_i|^2
        crossed = |sum u_i|^2 - sum |u_i|^2
    """
    axis_unit = _unit_axis(axis)
    baselines = np.asarray(baselines, dtype=float)
    pos_a, pos_b = _scan_detector_positions(scene, axis_unit, baselines)
    amps_a = _amplitude_matrix(scene, pos_a)
    amps_b = _amplitude_matrix(scene, pos_b)
    power_a = np.abs(amps_a) ** 2
    power_b = np.abs(amps_b) ** 2
    u = amps_a * np.conj(amps_b)
    q = np.sum(power_a * power_b, axis=0)
    direct = np.sum(power_a, axis=0) * np.sum(power_b, axis=0) - q
    crossed = np.abs(np.sum(u, axis=0)) ** 2 - q
    return direct, crossed, direct + crossed


def refine_maximum(x: np.ndarray, y: np.ndarray, i: int) -> tuple[float, float]:
    """3-point quadratic refinement of a sampled local maximum at index i.

    Returns the refined (position, value).  Falls back to the sample
    itself when the parabola degenerates.
    """
    if i <= 0 or i >= len(x) - 1:
        return float(x[i]), float(y[i])
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom == 0.0:
        return float(x[i]), float(y[i])
    delta = 0.5 * (y[i - 1] - y[i + 1]) / denom
    h = 0.5 * (x[i + 1] - x[i - 1])
    x_ref = float(x[i] + delta * h)
    y_ref = float(y[i] - 0.25 * (y[i - 1] - y[i + 1]) * delta)
    return x_ref, y_ref


def interior_maxima(y: np.ndarray) -> list[int]:
    """Indices of strict interior local maxima of a sampled curve."""
    return [
        i for i in range(1, len(y) - 1) if y[i] > y[i - 1] and y[i] > y[i + 1]
    ]


def fringe_spacing_from_curve(baselines: np.ndarray, totals: np.ndarray) -> float | None:
    """Mean distance between adjacent refined maxima, or None if < 2 maxima."""
    peaks = interior_maxima(totals)
    if len(peaks) < 2:
        return None
    positions = [refine_maximum(baselines, totals, i)[0] for i in peaks]
    return float(np.mean(np.diff(positions)))


def scan_baseline(
    scene: OpticalScene, axis, start: float, stop: float, steps: int
) -> VisibilityCurve:
    """Totals over a symmetric detector-separation scan along ``axis``."""
    if steps < 2:
        raise ValidationError(f"scan needs at least 2 steps, got {steps}")
    if not start < stop:
        raise ValidationError(f"scan range must satisfy start < stop, got [{start}, {stop}]")
    baselines = np.linspace(start, stop, steps)
    direct, crossed, totals = rates_at_baselines(scene, axis, baselines)
    t_max, t_min = float(totals.max()), float(totals.min())
    visibility = 0.0 if t_max + t_min == 0.0 else (t_max - t_min) / (t_max + t_min)
    return VisibilityCurve(
        baselines=baselines,
        totals=totals,
        direct=direct,
        crossed=crossed,
        visibility=float(visibility),
        fringe_spacing=fringe_spacing_from_curve(baselines, totals),
    )


def extended_source_emitters(
    center, width: float, n_points: int = EXTENDED_SOURCE_POINTS, axis=(1.0, 0.0, 0.0), **kwargs
):
    """Evenly spaced incoherent point emitters spanning ``width`` along ``axis``."""
    from .scene import Emitter

    if n_points < 2:
        raise ValidationError(f"extended source needs at least 2 points, got {n_points}")
    center = np.asarray(center, dtype=float)
    axis_unit = _unit_axis(axis)
    offsets = np.linspace(-width / 2.0, width / 2.0, n_points)
    return tuple(Emitter(position=center + s * axis_unit, **kwargs) for s in offsets)
