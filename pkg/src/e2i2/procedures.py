"""Discrete detector-register machinery for distinguishable emissions.

A fermion source (amplitudes S) and a boson source (amplitudes D) feed
two detectors whose registers record F (fermion seen) or B (boson seen).
The joint emission amplitude is::

    S1A * D2B |F B> + D2A * S1B |B F>

Three equivalent measurements expose the interference between the two
terms:

* entangled projection (procedure 1): project the detector pair onto
  (|F B> + |B F>) / sqrt(2), giving |S1A D2B + D2A S1B|^2 / 2;
* local basis change (procedure 2): rotate each register separately into
  mixed bases |F> = (|C> +- |D>)/sqrt(2), |B> = (|C> -+ |D>)/sqrt(2) (and
  C/D -> E/F' at the second detector) and project onto |C>|E>, giving the
  same modulus squared with a 1/4 prefactor;
* spatial swap: place the detectors in an equal superposition of original
  and exchanged positions with the involutive unitary S_swap and project
  on the unswapped configuration.

All projection probabilities here are reported with their explicit
normalization constants, so procedure 1 and the spatial swap coincide
exactly and procedure 2 is half of either.

The same mixed-basis trick drives the variant setups: a three-level atom
interfering photons of different wavelengths, a single source of decaying
particles whose branch amplitudes interfere, and a Mach-Zehnder fringe
measured by local projections without recombining the two paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .hbt import refine_maximum

SQRT1_2 = 1.0 / np.sqrt(2.0)

PHASE_SWEEP_POINTS = 256  # default resolution for fringe sweeps


@dataclass(frozen=True)
class DetectorState:
    """One register basis label with its amplitude."""

    label: str
    amplitude: complex


class JointAmplitudeState:
    """Superposition over tensor-product basis labels.

    Terms map a tuple of per-slot labels to a complex amplitude; labels
    are unique per state and zero amplitudes are dropped.
    """

    def __init__(self, terms=None):
        self.terms: dict[tuple, complex] = {}
        if terms:
            for labels, amp in dict(terms).items():
                self.add(labels, amp)

    def add(self, labels, amplitude: complex) -> None:
        labels = tuple(labels)
        if not np.isfinite(complex(amplitude)):
            raise ValidationError(f"non-finite amplitude for basis labels {labels}")
        value = self.terms.get(labels, 0.0 + 0.0j) + complex(amplitude)
        if value == 0:
            self.terms.pop(labels, None)
        else:
            self.terms[labels] = value

    def norm_sq(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    def overlap(self, other: "JointAmplitudeState") -> complex:
        """<self | other> over the shared basis labels."""
        return complex(
            sum(np.conj(a) * other.terms.get(labels, 0.0) for labels, a in self.terms.items())
        )

    def projection_probability(self, target: "JointAmplitudeState") -> float:
        """Squared modulus of the overlap with a normalized target state."""
        nrm = target.norm_sq()
        if abs(nrm - 1.0) > 1e-12:
            raise ValidationError(f"projection target must be unit norm, got |t|^2 = {nrm}")
        return float(abs(target.overlap(self)) ** 2)

    def apply_pair_matrix(self, slots: tuple[int, int], matrix: np.ndarray, basis: list) -> "JointAmplitudeState":
        """Apply a matrix acting jointly on two label slots.

        ``basis`` lists the (label_i, label_j) pairs indexing the matrix;
        matrix[row, col] maps input pair basis[col] to output basis[row].
        """
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (len(basis), len(basis)):
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match basis of size {len(basis)}"
            )
        index = {tuple(pair): k for k, pair in enumerate(basis)}
        out = JointAmplitudeState()
        i, j = slots
        for labels, amp in self.terms.items():
            col = index[(labels[i], labels[j])]
            for row, pair in enumerate(basis):
                coeff = matrix[row, col]
                if coeff != 0:
                    new_labels = list(labels)
                    new_labels[i], new_labels[j] = pair
                    out.add(tuple(new_labels), amp * coeff)
        return out


def _emission_state(s1a: complex, d2b: complex, d2a: complex, s1b: complex) -> JointAmplitudeState:
    """Joint register state S1A D2B |F B> + D2A S1B |B F>."""
    return JointAmplitudeState({("F", "B"): s1a * d2b, ("B", "F"): d2a * s1b})


def procedure1_rate(s1a, d2b, d2a, s1b, antisymmetric: bool = False) -> float:
    """Project the detector pair onto an entangled register state.

    The symmetric target (|F B> + |B F>)/sqrt(2) measures
    |S1A D2B + D2A S1B|^2 / 2; the antisymmetric one flips the relative
    sign.  The 1/2 is the target's normalization.
    """
    sign = -1.0 if antisymmetric else 1.0
    target = JointAmplitudeState({("F", "B"): SQRT1_2, ("B", "F"): sign * SQRT1_2})
    return _emission_state(s1a, d2b, d2a, s1b).projection_probability(target)


# Register basis rotations used by the local-basis procedure: each of
# |F>, |B> is an equal-weight superposition of the measurement labels
# (C, D at detector A; E, F' at detector B) with a relative sign.
_LOCAL_BASIS_A = {"F": (("C", SQRT1_2), ("D", SQRT1_2)), "B": (("C", SQRT1_2), ("D", -SQRT1_2))}
_LOCAL_BASIS_B = {"F": (("E", SQRT1_2), ("F'", SQRT1_2)), "B": (("E", SQRT1_2), ("F'", -SQRT1_2))}


def procedure2_rate(s1a, d2b, d2a, s1b) -> float:
    """Rotate each register separately and project onto |C>|E>.

    Equals |S1A D2B + D2A S1B|^2 / 4: the two local 1/sqrt(2) expansions
    contribute a 1/4 and no entangled projection is needed.
    """
    state = _emission_state(s1a, d2b, d2a, s1b)
    rotated = JointAmplitudeState()
    for (label_a, label_b), amp in state.terms.items():
        for new_a, ca in _LOCAL_BASIS_A[label_a]:
            for new_b, cb in _LOCAL_BASIS_B[label_b]:
                rotated.add((new_a, new_b), amp * ca * cb)
    return float(abs(rotated.terms.get(("C", "E"), 0.0)) ** 2)


SWAP_BASIS = [("A", "A"), ("A", "B"), ("B", "A"), ("B", "B")]


def swap_operator() -> np.ndarray:
    """Unitary putting two positions into swapped/unswapped superpositions.

    Over the basis (AA, AB, BA, BB): AB maps to (AB + BA)/sqrt(2), BA to
    (AB - BA)/sqrt(2), AA and BB are fixed.  The matrix is involutive
    (its own inverse) as well as unitary.
    """
    s = np.eye(4, dtype=complex)
    s[1:3, 1:3] = np.array([[SQRT1_2, SQRT1_2], [SQRT1_2, -SQRT1_2]])
    return s


def spatial_swap_rate(s1a, d2b, d2a, s1b, swapped_target: bool = False) -> float:
    """Interference via a position-superposition of the two detectors.

    Builds S1A D2B |F;A>|B;B> + D2A S1B |F;B>|B;A>, applies the swap
    unitary to the position slots, and projects on the separable
    unswapped configuration |F;A>|B;B>, measuring
    |S1A D2B + D2A S1B|^2 / 2 (the 1/2 from the swap normalization).
    ``swapped_target`` projects on |F;B>|B;A> instead, giving the
    complementary fringe with a relative minus sign.
    """
    state = JointAmplitudeState(
        {("F", "A", "B", "B"): s1a * d2b, ("F", "B", "B", "A"): d2a * s1b}
    )
    swapped = state.apply_pair_matrix((1, 3), swap_operator(), SWAP_BASIS)
    labels = ("F", "B", "B", "A") if swapped_target else ("F", "A", "B", "B")
    target = JointAmplitudeState({labels: 1.0})
    return swapped.projection_probability(target)


@dataclass(frozen=True)
class ThreeLevelAtom:
    """Atom prepared in alpha|0> + beta|1>, both levels feeding a level |2>."""

    alpha: complex
    beta: complex
    coupling_02: complex = 1.0
    coupling_12: complex = 1.0

    def __post_init__(self):
        nrm = abs(self.alpha) ** 2 + abs(self.beta) ** 2
        if abs(nrm - 1.0) > 1e-12:
            raise ValidationError(f"atomic amplitudes must be normalized, got |a|^2+|b|^2 = {nrm}")


def wavelength_interference_rate(atom: ThreeLevelAtom, photon_amp_1, photon_amp_2) -> float:
    """Population rate of the common level fed by two different photons.

    The transition amplitude is alpha*c02*photon_1 + beta*c12*photon_2,
    so the rate carries the relative phase of photons that need not share
    a wavelength.
    """
    amp = atom.alpha * atom.coupling_02 * photon_amp_1 + atom.beta * atom.coupling_12 * photon_amp_2
    return float(abs(amp) ** 2)


@dataclass(frozen=True)
class DecayChannel:
    """Branch amplitudes of a particle decaying to DD or to EE."""

    amplitude_dd: complex
    amplitude_ee: complex

    def __post_init__(self):
        total = abs(self.amplitude_dd) ** 2 + abs(self.amplitude_ee) ** 2
        if total > 1.0 + 1e-12:
            raise ValidationError(f"branch probabilities sum to {total} > 1")

    @property
    def relative_phase(self) -> float:
        """arg(amplitude_ee / amplitude_dd)."""
        return float(np.angle(self.amplitude_ee / self.amplitude_dd))


def decay_interference_rate(channel: DecayChannel, d1a, s1b) -> float:
    """Interference between the two decay branches of a single source.

    Projecting the two accepting detectors onto the equal entangled
    combination of "DD seen at A" and "EE seen at B" measures
    |M_dd * D1A + M_ee * S1B|^2 / 2 (the 1/2 from the projector's
    normalization), exposing the relative branch phase.
    """
    amp = channel.amplitude_dd * complex(d1a) + channel.amplitude_ee * complex(s1b)
    return 0.5 * float(abs(amp) ** 2)


def decay_phase_sweep(
    channel: DecayChannel,
    d1a=1.0,
    s1b_mod: float = 1.0,
    n_points: int = PHASE_SWEEP_POINTS,
) -> tuple[np.ndarray, np.ndarray]:
    """Rates over a sweep of the geometric phase of the second branch leg.

    Sweeps theta over [0, 2 pi) with s1b = s1b_mod * e^{i theta}; the
    fringe peaks where theta compensates the branch phase difference.
    """
    if n_points < 3:
        raise ValidationError(f"sweep needs at least 3 points, got {n_points}")
    thetas = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    rates = np.array(
        [
            decay_interference_rate(channel, d1a, s1b_mod * np.exp(1j * t))
            for t in thetas
        ]
    )
    return thetas, rates


def _circular_peak(thetas: np.ndarray, values: np.ndarray) -> float:
    """Quadratically refined location of the maximum of a periodic sweep."""
    n = len(thetas)
    i = int(np.argmax(values))
    h = thetas[1] - thetas[0]
    x = np.array([thetas[i] - h, thetas[i], thetas[i] + h])
    y = np.array([values[(i - 1) % n], values[i], values[(i + 1) % n]])
    return refine_maximum(x, y, 1)[0]


def recover_decay_phase(
    channel: DecayChannel,
    d1a=1.0,
    s1b_mod: float = 1.0,
    n_points: int = PHASE_SWEEP_POINTS,
) -> float:
    """Estimate arg(amplitude_ee / amplitude_dd) from a phase sweep.

    The fringe maximum sits at theta* = arg(M_dd d1a) - arg(M_ee s1b_mod),
    so the relative branch phase is recovered as arg(d1a) - theta*,
    wrapped to (-pi, pi].
    """
    thetas, rates = decay_phase_sweep(channel, d1a, s1b_mod, n_points)
    theta_star = _circular_peak(thetas, rates)
    phase = np.angle(np.exp(1j * (np.angle(complex(d1a)) - theta_star)))
    return float(phase)


def mz_no_recombine_rate(d1a, d1b) -> float:
    """Two-path fringe measured by local projections only.

    One photon may excite atom A (amplitude D1A) or atom B (D1B), each
    atom starting in (|0> + |1>)/sqrt(2) with a passive detector behind
    it.  Projecting each arrangement locally onto "atom excited, detector
    silent" yields |D1A + D1B|^2 / 2; the 1/2 collects the two atomic
    1/sqrt(2) preparation amplitudes.
    """
    # Slots: atom A level, atom B level, detector A', detector B'.
    state = JointAmplitudeState()
    for level_b, amp_b in (("0", SQRT1_2), ("1", SQRT1_2)):
        state.add(("1", level_b, "nf", "nf"), complex(d1a) * amp_b)
    for level_a, amp_a in (("0", SQRT1_2), ("1", SQRT1_2)):
        state.add((level_a, "1", "nf", "nf"), complex(d1b) * amp_a)
    target = JointAmplitudeState({("1", "1", "nf", "nf"): 1.0})
    return state.projection_probability(target)


def mz_phase_sweep(
    d1a, d1b, n_points: int = PHASE_SWEEP_POINTS
) -> tuple[np.ndarray, np.ndarray]:
    """Rates while a phase plate in the second path sweeps [0, 2 pi)."""
    if n_points < 3:
        raise ValidationError(f"sweep needs at least 3 points, got {n_points}")
    thetas = np.linspace(0.0, 2.0 * np.pi, n_points, endpoint=False)
    rates = np.array(
        [mz_no_recombine_rate(d1a, complex(d1b) * np.exp(1j * t)) for t in thetas]
    )
    return thetas, rates


def mz_fringe_visibility(d1a, d1b) -> float:
    """Exact phase-sweep visibility 2|D1A||D1B| / (|D1A|^2 + |D1B|^2)."""
    a, b = abs(complex(d1a)), abs(complex(d1b))
    if a == 0.0 and b == 0.0:
        return 0.0
    return float(2.0 * a * b / (a * a + b * b))
