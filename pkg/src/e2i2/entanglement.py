"""Generalized coincidence rates with joint detector and emitter tensors.

When detector final states are entangled, the pair of single-detector
projectors is replaced by one joint tensor P[a1,b1,a2,b2]; emitter
entanglement likewise replaces the product of source matrices with a
joint state tensor p.  The direct and crossed rate pieces become index
contractions::

    direct  = sum P[a1,b1,a2,b2] p[a2,b2,a1,b1] * |D1A|^2 |D2B|^2
            + sum P[a1,b1,a2,b2] p[b2,a2,b1,a1] * |D2A|^2 |D1B|^2
    crossed = sum P[a1,b1,a2,b2] p[a2,b2,b1,a1] * D1A D2B conj(D2A D1B)
            + sum P[a1,b1,a2,b2] p[b2,a2,a1,b1] * conj(D1A D2B) D2A D1B

The index placements are fixed by requiring that factorized tensors
P = Pi_A (x) Pi_B, p = pi1 (x) pi2 reproduce the polarization-engine
terms exactly: the four contractions then reduce to Tr(Pi_A pi1)
Tr(Pi_B pi2), Tr(Pi_A pi2) Tr(Pi_B pi1), Tr(Pi_A pi1 Pi_B pi2) and
Tr(Pi_A pi2 Pi_B pi1).  For Hermitian tensors the two crossed
contractions are complex conjugates, so the crossed sum is real.

Because rates depend on the emitter tensor only through these
contractions, a measured rate curve can be tested against the best
factorized emitter model: a fit residual far above the noiseless
factorized floor witnesses emitter entanglement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, ValidationError
from .hbt import scan_pair_amplitudes
from .linalg import (
    SchmidtReport,
    Tensor4,
    identity_tensor,
    operator_schmidt,
    tensor_product,
)
from .scene import OpticalScene

WITNESS_THRESHOLD = 1e-4  # rms-residual cut; noiseless factorized fits land below 1e-8


@dataclass(frozen=True)
class GeneralRateInput:
    """Joint detector tensor, joint emitter tensor and the four amplitudes."""

    detector_tensor: Tensor4
    emitter_tensor: Tensor4
    propagators: tuple  # (D1A, D2B, D2A, D1B)

    def __post_init__(self):
        pt, et = self.detector_tensor, self.emitter_tensor
        if (pt.dim_a, pt.dim_b) != (et.dim_a, et.dim_b):
            raise DimensionMismatchError(
                f"detector tensor dims ({pt.dim_a}, {pt.dim_b}) do not match "
                f"emitter tensor dims ({et.dim_a}, {et.dim_b})"
            )
        if pt.dim_a != pt.dim_b:
            raise DimensionMismatchError(
                "exchange contractions mix the two single-particle spaces; "
                f"party dimensions must be equal, got ({pt.dim_a}, {pt.dim_b})"
            )
        if not pt.is_hermitian():
            raise ValidationError("detector tensor is not Hermitian")
        if not et.is_hermitian():
            raise ValidationError("emitter tensor is not Hermitian")
        joint = et.as_matrix()
        eigvals = np.linalg.eigvalsh((joint + joint.conj().T) / 2.0)
        if eigvals.min() < -1e-9:
            raise ValidationError(f"emitter tensor has negative eigenvalue {eigvals.min():.3e}")
        tr = complex(np.trace(joint))
        if abs(tr - 1.0) > 1e-9:
            raise ValidationError(f"emitter tensor trace deviates from 1 by {abs(tr - 1.0):.3e}")
        props = tuple(complex(v) for v in self.propagators)
        if len(props) != 4 or not all(np.isfinite(v) for v in props):
            raise ValidationError("propagators must be 4 finite complex values (D1A, D2B, D2A, D1B)")
        object.__setattr__(self, "propagators", props)


def direct_coefficients(detector_tensor: Tensor4, emitter_tensor: Tensor4) -> tuple[complex, complex]:
    """The two direct contractions (assignment 1->A, 2->B and its exchange)."""
    p, e = detector_tensor.entries, emitter_tensor.entries
    c1 = np.einsum("abcd,cdab->", p, e)
    c2 = np.einsum("abcd,dcba->", p, e)
    return complex(c1), complex(c2)


def crossed_coefficients(detector_tensor: Tensor4, emitter_tensor: Tensor4) -> tuple[complex, complex]:
    """The two crossed contractions; conjugate pair for Hermitian inputs."""
    p, e = detector_tensor.entries, emitter_tensor.entries
    x1 = np.einsum("abcd,cdba->", p, e)
    x2 = np.einsum("abcd,dcab->", p, e)
    return complex(x1), complex(x2)


def _real_checked(value: complex, scale: float, what: str) -> float:
    if abs(value.imag) > 1e-12 * max(1.0, scale):
        raise ValidationError(f"{what} has imaginary residue {value.imag:.3e}")
    return float(value.real)


def general_direct(rate_input: GeneralRateInput) -> float:
    """Direct (non-interfering) part of the generalized rate."""
    d1a, d2b, d2a, d1b = rate_input.propagators
    c1, c2 = direct_coefficients(rate_input.detector_tensor, rate_input.emitter_tensor)
    value = c1 * abs(d1a) ** 2 * abs(d2b) ** 2 + c2 * abs(d2a) ** 2 * abs(d1b) ** 2
    return _real_checked(value, abs(value), "direct rate")


def general_crossed(rate_input: GeneralRateInput) -> float:
    """Crossed (interference) part of the generalized rate."""
    d1a, d2b, d2a, d1b = rate_input.propagators
    x1, x2 = crossed_coefficients(rate_input.detector_tensor, rate_input.emitter_tensor)
    prod = d1a * d2b * np.conj(d2a) * np.conj(d1b)
    value = x1 * prod + x2 * np.conj(prod)
    return _real_checked(value, abs(x1) * abs(prod), "crossed rate")


def general_total(rate_input: GeneralRateInput) -> float:
    """Direct plus crossed generalized rate."""
    return general_direct(rate_input) + general_crossed(rate_input)


def general_rate_curve(
    scene: OpticalScene,
    detector_tensor: Tensor4 | None,
    emitter_tensor: Tensor4,
    axis,
    baselines,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(direct, crossed, total) of the generalized rate over a baseline scan.

    The contraction coefficients do not depend on geometry, so they are
    evaluated once and combined with per-baseline amplitudes.  ``None``
    detector tensor means fully open detectors (joint identity).
    """
    if detector_tensor is None:
        detector_tensor = identity_tensor(emitter_tensor.dim_a, emitter_tensor.dim_b)
    # Validate tensors once via the input type (amplitudes are arbitrary here).
    GeneralRateInput(detector_tensor, emitter_tensor, (1.0, 1.0, 1.0, 1.0))
    c1, c2 = direct_coefficients(detector_tensor, emitter_tensor)
    x1, _ = crossed_coefficients(detector_tensor, emitter_tensor)
    d1a, d2b, d2a, d1b = scan_pair_amplitudes(scene, axis, baselines)
    direct = (
        c1.real * np.abs(d1a) ** 2 * np.abs(d2b) ** 2
        + c2.real * np.abs(d2a) ** 2 * np.abs(d1b) ** 2
    )
    crossed = 2.0 * (x1 * d1a * d2b * np.conj(d2a) * np.conj(d1b)).real
    return direct, crossed, direct + crossed


def bloch_density(r) -> np.ndarray:
    """2x2 density matrix from a Bloch vector, radially clipped to the ball."""
    r = _clipped_bloch(r)
    x, y, z = r
    return 0.5 * np.array([[1.0 + z, x - 1j * y], [x + 1j * y, 1.0 - z]], dtype=complex)


def _clipped_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (3,):
        raise ValidationError(f"Bloch vector must have 3 components, got shape {r.shape}")
    nrm = float(np.linalg.norm(r))
    return r / nrm if nrm > 1.0 else r


# Hermitian expansion basis of a Bloch-parameterized state: pi(r) has
# coordinates (1, r) in this basis, making rate curves bilinear in the
# two Bloch vectors.
_BLOCH_BASIS = (
    0.5 * np.eye(2, dtype=complex),
    0.5 * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    0.5 * np.array([[0.0, -1j], [1j, 0.0]], dtype=complex),
    0.5 * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


def factorized_curve_kernel(detector_tensor: Tensor4, d1a, d2b, d2a, d1b) -> np.ndarray:
    """Bilinear kernel of the factorized-model curve over fixed amplitudes.

    The generalized rate is bilinear in the two marginal matrices, so the
    curve decomposes over the Bloch basis as sum_{mn} a_m b_n G[m, n]
    with coordinates a = (1, r1), b = (1, r2).  Returns G with shape
    (4, 4) + amplitude shape.
    """
    d1a = np.asarray(d1a, dtype=complex)
    direct_a = np.abs(d1a) ** 2 * np.abs(d2b) ** 2
    direct_b = np.abs(d2a) ** 2 * np.abs(d1b) ** 2
    prod = d1a * d2b * np.conj(d2a) * np.conj(d1b)
    g = np.empty((4, 4) + np.shape(d1a), dtype=float)
    for m, basis_m in enumerate(_BLOCH_BASIS):
        for n, basis_n in enumerate(_BLOCH_BASIS):
            joint = tensor_product(basis_m, basis_n)
            c1, c2 = direct_coefficients(detector_tensor, joint)
            x1, _ = crossed_coefficients(detector_tensor, joint)
            g[m, n] = c1.real * direct_a + c2.real * direct_b + 2.0 * (x1 * prod).real
    return g


def evaluate_factorized_curve(kernel: np.ndarray, r1, r2) -> np.ndarray:
    """Curve of the factorized model with clipped Bloch marginals."""
    a = np.concatenate([[1.0], _clipped_bloch(r1)])
    b = np.concatenate([[1.0], _clipped_bloch(r2)])
    return np.einsum("m,n,mn...->...", a, b, kernel)


def factorized_curve_evaluator(detector_tensor: Tensor4, d1a, d2b, d2a, d1b):
    """Callable (r1, r2) -> totals built on a precomputed kernel."""
    kernel = factorized_curve_kernel(detector_tensor, d1a, d2b, d2a, d1b)

    def evaluate(r1, r2) -> np.ndarray:
        return evaluate_factorized_curve(kernel, r1, r2)

    return evaluate


def _clip_jacobian(r: np.ndarray) -> np.ndarray:
    """Derivative of the radial Bloch clipping at r (3x3)."""
    nrm = float(np.linalg.norm(r))
    if nrm <= 1.0:
        return np.eye(3)
    rhat = r / nrm
    return (np.eye(3) - np.outer(rhat, rhat)) / nrm


def factorized_curve_jacobian(kernel: np.ndarray):
    """Exact parameter Jacobian of a factorized-model curve.

    The returned callable maps the 6-vector (r1, r2) to the
    (n_points, 6) Jacobian, including the clipping chain rule.
    """

    def jacobian(params: np.ndarray) -> np.ndarray:
        r1 = np.asarray(params[:3], dtype=float)
        r2 = np.asarray(params[3:6], dtype=float)
        a = np.concatenate([[1.0], _clipped_bloch(r1)])
        b = np.concatenate([[1.0], _clipped_bloch(r2)])
        g_b = np.einsum("n,mn...->m...", b, kernel)  # curve per a-component
        g_a = np.einsum("m,mn...->n...", a, kernel)  # curve per b-component
        j1 = np.einsum("ik,i...->...k", _clip_jacobian(r1), g_b[1:])
        j2 = np.einsum("ik,i...->...k", _clip_jacobian(r2), g_a[1:])
        return np.concatenate([j1, j2], axis=-1)

    return jacobian


def bell_state_tensor(kind: str = "singlet") -> Tensor4:
    """Joint emitter tensor of a maximally entangled polarization pair."""
    h = np.array([1.0, 0.0])
    v = np.array([0.0, 1.0])
    if kind == "singlet":
        ket = (np.kron(h, v) - np.kron(v, h)) / np.sqrt(2.0)
    elif kind == "triplet":
        ket = (np.kron(h, v) + np.kron(v, h)) / np.sqrt(2.0)
    elif kind == "phi_plus":
        ket = (np.kron(h, h) + np.kron(v, v)) / np.sqrt(2.0)
    else:
        raise ValidationError(f"unknown Bell state kind {kind!r}")
    rho = np.outer(ket, ket.conj())
    return Tensor4(rho.reshape(2, 2, 2, 2))


@dataclass(frozen=True)
class WitnessVerdict:
    """Outcome of testing a rate curve for emitter-tensor factorization."""

    schmidt_report: SchmidtReport | None
    factorizable: bool
    fit_residual: float
    threshold: float
    fitted_marginals: tuple[np.ndarray, np.ndarray]


def witness_factorization(
    scene: OpticalScene,
    baselines,
    totals,
    axis=(1.0, 0.0, 0.0),
    detector_tensor: Tensor4 | None = None,
    threshold: float = WITNESS_THRESHOLD,
    emitter_tensor_true: Tensor4 | None = None,
    n_starts: int = 16,
    seed: int = 0,
) -> WitnessVerdict:
    """Fit the best factorized emitter model to a rate curve.

    Each candidate marginal is a Bloch-parameterized 2x2 density matrix
    (6 free parameters total); the model curve is the generalized rate of
    their product tensor over the same scan geometry.  The curve is
    deemed consistent with factorization when the best rms residual falls
    below ``threshold``.  Passing the true generating tensor additionally
    reports its operator-Schmidt decomposition.
    """
    from .estimation import multistart_least_squares

    if threshold <= 0:
        raise ValidationError(f"threshold must be positive, got {threshold}")
    baselines = np.asarray(baselines, dtype=float)
    totals = np.asarray(totals, dtype=float)
    if baselines.shape != totals.shape:
        raise DimensionMismatchError(
            f"baselines shape {baselines.shape} does not match totals shape {totals.shape}"
        )
    n_params = 6
    if len(baselines) < max(8, n_params + 1):
        raise ValidationError(
            f"witness needs at least 8 curve points, got {len(baselines)}"
        )
    if detector_tensor is None:
        detector_tensor = identity_tensor(2, 2)

    # Geometry-dependent amplitude products are fixed over the fit.
    d1a, d2b, d2a, d1b = scan_pair_amplitudes(scene, axis, baselines)
    kernel = factorized_curve_kernel(detector_tensor, d1a, d2b, d2a, d1b)

    def residuals(params: np.ndarray) -> np.ndarray:
        return evaluate_factorized_curve(kernel, params[:3], params[3:]) - totals

    lower = -np.ones(n_params)
    upper = np.ones(n_params)
    best, _ = multistart_least_squares(
        residuals,
        lower,
        upper,
        n_starts=n_starts,
        seed=seed,
        structured_starts=[np.zeros(n_params)],
        jac=factorized_curve_jacobian(kernel),
        max_nfev=400,
    )
    rms = float(np.sqrt(np.mean(residuals(best.x) ** 2)))
    report = None if emitter_tensor_true is None else operator_schmidt(emitter_tensor_true)
    return WitnessVerdict(
        schmidt_report=report,
        factorizable=bool(rms <= threshold),
        fit_residual=rms,
        threshold=float(threshold),
        fitted_marginals=(bloch_density(best.x[:3]), bloch_density(best.x[3:6])),
    )
