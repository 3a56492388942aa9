"""Polarization-resolved coincidence rates.

Emitters carry 2x2 polarization density matrices pi1, pi2; detectors
apply projectors Pi_A, Pi_B (identity = no filter).  The scalar rate's
two pieces acquire trace coefficients::

    direct  = Tr(Pi_A pi1) Tr(Pi_B pi2) |D1A|^2 |D2B|^2
            + Tr(Pi_A pi2) Tr(Pi_B pi1) |D2A|^2 |D1B|^2
    crossed = Tr(Pi_A pi1 Pi_B pi2) D1A D2B conj(D2A) conj(D1B) + c.c.

Orthogonally polarized sources have vanishing crossed trace under open
detectors and do not interfere; projectors interpolating between the two
source polarizations restore the interference.  The family of crossed
traces over projector choices is the linked-polarization map; its fully
open entry (both projectors identity) is the cross-polarization
Tr(pi1 pi2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .hbt import scan_pair_amplitudes
from .linalg import require_density, require_projector, trace_product
from .scene import OpticalScene

IDENTITY2 = np.eye(2, dtype=complex)

# Jones vectors of the standard polarization states.
KET_H = np.array([1.0, 0.0], dtype=complex)
KET_V = np.array([0.0, 1.0], dtype=complex)
KET_DIAG = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2.0)
KET_ANTIDIAG = np.array([1.0, -1.0], dtype=complex) / np.sqrt(2.0)


def ket_projector(ket) -> np.ndarray:
    """Rank-1 projector |ket><ket| from a normalized 2-vector."""
    v = np.asarray(ket, dtype=complex)
    if v.shape != (2,):
        raise ValidationError(f"polarization ket must be a 2-vector, got shape {v.shape}")
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-9:
        raise ValidationError(f"polarization ket must be unit norm, got |v| = {norm}")
    return np.outer(v, v.conj())


def linear_polarizer(angle: float) -> np.ndarray:
    """Projector onto linear polarization at ``angle`` radians from H."""
    return ket_projector(np.array([np.cos(angle), np.sin(angle)], dtype=complex))


def poincare_projector(theta: float, phi: float) -> np.ndarray:
    """Projector |psi><psi| with psi = (cos(theta/2), e^{i phi} sin(theta/2)).

    (theta, phi) are spherical coordinates on the polarization state
    sphere; theta=0 gives H, theta=pi gives V, theta=pi/2 the equator of
    diagonal/circular states.
    """
    ket = np.array([np.cos(theta / 2.0), np.exp(1j * phi) * np.sin(theta / 2.0)])
    return np.outer(ket, ket.conj())


@dataclass(frozen=True)
class PolRateResult:
    """Polarization-resolved rate with its trace coefficients.

    ``coefficients`` holds the four direct traces keyed "A1", "B2", "A2",
    "B1" (detector, source) and the complex crossed trace "cross".
    """

    direct: float
    crossed: float
    coefficients: dict

    @property
    def total(self) -> float:
        return self.direct + self.crossed


def _coefficients(pi1, pi2, proj_a, proj_b) -> dict:
    return {
        "A1": trace_product(proj_a, pi1).real,
        "B2": trace_product(proj_b, pi2).real,
        "A2": trace_product(proj_a, pi2).real,
        "B1": trace_product(proj_b, pi1).real,
        "cross": trace_product(proj_a, pi1, proj_b, pi2),
    }


def _pol_rate_from_amplitudes(coeff: dict, d1a, d2b, d2a, d1b) -> PolRateResult:
    direct = (
        coeff["A1"] * coeff["B2"] * abs(d1a) ** 2 * abs(d2b) ** 2
        + coeff["A2"] * coeff["B1"] * abs(d2a) ** 2 * abs(d1b) ** 2
    )
    crossed_c = coeff["cross"] * d1a * d2b * np.conj(d2a) * np.conj(d1b)
    crossed = 2.0 * crossed_c.real
    return PolRateResult(direct=float(direct), crossed=float(crossed), coefficients=coeff)


def _validated(pi1, pi2, proj_a, proj_b):
    pi1 = require_density(pi1, name="source 1 polarization")
    pi2 = require_density(pi2, name="source 2 polarization")
    proj_a = IDENTITY2 if proj_a is None else require_projector(proj_a, name="detector A projector")
    proj_b = IDENTITY2 if proj_b is None else require_projector(proj_b, name="detector B projector")
    for name, m in (("pi1", pi1), ("pi2", pi2), ("Pi_A", proj_a), ("Pi_B", proj_b)):
        if m.shape != (2, 2):
            raise ValidationError(f"{name} must be 2x2, got {m.shape}")
    return pi1, pi2, proj_a, proj_b


def pol_rate(
    scene: OpticalScene, pi1, pi2, proj_a=None, proj_b=None
) -> PolRateResult:
    """Coincidence rate with source mixtures pi1, pi2 and detector projectors.

    ``None`` projectors mean open (identity) detectors.
    """
    pi1, pi2, proj_a, proj_b = _validated(pi1, pi2, proj_a, proj_b)
    p = scene.propagator_matrix()
    if p.shape != (2, 2):
        raise ValidationError(
            f"polarized rate needs exactly 2 emitters and 2 detectors, got {p.shape}"
        )
    coeff = _coefficients(pi1, pi2, proj_a, proj_b)
    return _pol_rate_from_amplitudes(coeff, p[0, 0], p[1, 1], p[1, 0], p[0, 1])


def pure_pol_rate(
    scene: OpticalScene, ket1, ket2, proj_a=None, proj_b=None
) -> PolRateResult:
    """Rate for pure source polarizations given as unit Jones vectors."""
    return pol_rate(scene, ket_projector(ket1), ket_projector(ket2), proj_a, proj_b)


def pol_rates_at_baselines(
    scene: OpticalScene, pi1, pi2, proj_a, proj_b, axis, baselines
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Polarization-resolved (direct, crossed, total) over a baseline scan."""
    pi1, pi2, proj_a, proj_b = _validated(pi1, pi2, proj_a, proj_b)
    coeff = _coefficients(pi1, pi2, proj_a, proj_b)
    d1a, d2b, d2a, d1b = scan_pair_amplitudes(scene, axis, baselines)
    direct = (
        coeff["A1"] * coeff["B2"] * np.abs(d1a) ** 2 * np.abs(d2b) ** 2
        + coeff["A2"] * coeff["B1"] * np.abs(d2a) ** 2 * np.abs(d1b) ** 2
    )
    crossed = 2.0 * (coeff["cross"] * d1a * d2b * np.conj(d2a) * np.conj(d1b)).real
    return direct, crossed, direct + crossed


def crossed_trace(pi1, pi2, proj_a, proj_b) -> complex:
    """The interference coefficient Tr(Pi_A pi1 Pi_B pi2)."""
    return trace_product(proj_a, pi1, proj_b, pi2)


def poincare_grid(n_theta: int = 17, n_phi: int = 17) -> list[tuple[float, float]]:
    """(theta, phi) grid covering the polarization sphere."""
    if n_theta < 1 or n_phi < 1:
        raise ValidationError("grid must have at least one point per axis")
    thetas = np.linspace(0.0, np.pi, n_theta)
    phis = np.linspace(0.0, 2.0 * np.pi, n_phi, endpoint=False)
    return [(float(t), float(p)) for t in thetas for p in phis]


def linked_polarization_map(pi1, pi2, projectors_a, projectors_b) -> np.ndarray:
    """Crossed traces Tr(Pi_A pi1 Pi_B pi2) over a grid of projector pairs.

    ``projectors_a`` / ``projectors_b`` are sequences of 2x2 projectors
    (identity entries allowed); the result is a complex matrix indexed
    [a, b].  Including the identity in both families exposes the
    cross-polarization Tr(pi1 pi2) as the corresponding entry.
    """
    pi1 = require_density(pi1, name="source 1 polarization")
    pi2 = require_density(pi2, name="source 2 polarization")
    projectors_a = list(projectors_a)
    projectors_b = list(projectors_b)
    if not projectors_a or not projectors_b:
        raise ValidationError("projector grid must not be empty")
    out = np.empty((len(projectors_a), len(projectors_b)), dtype=complex)
    for i, pa in enumerate(projectors_a):
        pa = require_projector(pa, name=f"projector A[{i}]")
        for j, pb in enumerate(projectors_b):
            pb = require_projector(pb, name=f"projector B[{j}]")
            out[i, j] = trace_product(pa, pi1, pb, pi2)
    return out
