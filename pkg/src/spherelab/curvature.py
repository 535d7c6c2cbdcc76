"""Pointwise curvature-operator algebra in an orthonormal frame.

Operators are rank-4 arrays with the full algebraic curvature symmetries.
Complex two-planes are pairs of complex n-vectors; all complex pairings
here are bilinear (no conjugation) except where the Hermitian extension
is explicitly formed for the sectional-curvature quotient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError

ISOTROPY_TOL = 1e-9


@dataclass(frozen=True)
class CurvatureOperator:
    """Components R[i,j,k,l] of a curvature operator at a point."""

    n: int
    R: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape != (self.n,) * 4:
            raise PreconditionError("curvature array must be n^4")
        object.__setattr__(self, "R", R)
        check_curvature_symmetries(R)


@dataclass(frozen=True)
class ComplexPlane:
    """Complex two-plane spanned by z and w in the complexified tangent space."""

    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.z, dtype=complex)
        w = np.asarray(self.w, dtype=complex)
        if z.shape != w.shape or z.ndim != 1:
            raise PreconditionError("plane vectors must be equal-length 1d arrays")
        gram = np.array(
            [[np.vdot(z, z), np.vdot(z, w)], [np.vdot(w, z), np.vdot(w, w)]]
        )
        if abs(np.linalg.det(gram)) <= 1e-12:
            raise PreconditionError("spanning vectors are (numerically) dependent")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "w", w)


def check_curvature_symmetries(R, tol=1e-10):
    scale = max(1.0, float(np.max(np.abs(R))))
    if np.max(np.abs(R + np.swapaxes(R, 0, 1))) > tol * scale:
        raise PreconditionError("missing antisymmetry in the first index pair")
    if np.max(np.abs(R + np.swapaxes(R, 2, 3))) > tol * scale:
        raise PreconditionError("missing antisymmetry in the second index pair")
    if np.max(np.abs(R - np.transpose(R, (2, 3, 0, 1)))) > tol * scale:
        raise PreconditionError("missing pair-exchange symmetry")
    bianchi = R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2))
    if np.max(np.abs(bianchi)) > tol * scale:
        raise PreconditionError("first Bianchi identity violated")


# -- constructors --------------------------------------------------------------

def constant_curvature_operator(n: int, c: float = 1.0) -> CurvatureOperator:
    """Space form: R[i,j,k,l] = c (delta_ik delta_jl - delta_il delta_jk)."""
    eye = np.eye(n)
    R = c * (np.einsum("ik,jl->ijkl", eye, eye) - np.einsum("il,jk->ijkl", eye, eye))
    return CurvatureOperator(n, R)


def product_spheres_operator(c1: float = 1.0, c2: float = 1.0) -> CurvatureOperator:
    """Product of two round two-spheres; mixed-plane curvatures vanish."""
    R = np.zeros((4,) * 4)
    for block, c in (((0, 1), c1), ((2, 3), c2)):
        i, j = block
        R[i, j, i, j] = R[j, i, j, i] = c
        R[i, j, j, i] = R[j, i, i, j] = -c
    return CurvatureOperator(4, R)


def project_to_curvature_symmetries(T: np.ndarray) -> np.ndarray:
    """Orthogonal projection of a rank-4 array onto algebraic curvature tensors."""
    T = 0.5 * (T - np.swapaxes(T, 0, 1))
    T = 0.5 * (T - np.swapaxes(T, 2, 3))
    T = 0.5 * (T + np.transpose(T, (2, 3, 0, 1)))
    bianchi = (T + np.transpose(T, (0, 2, 3, 1)) + np.transpose(T, (0, 3, 1, 2))) / 3.0
    return T - bianchi


def pinched_operator(n: int, delta: float, rng, noise: float = None) -> CurvatureOperator:
    """Randomly perturbed space form kept inside the (delta, 1] pinching band.

    A space form at the band midpoint is perturbed by Bianchi-symmetrized
    noise small enough (relative to the band half-width) that all real
    sectional curvatures stay in (delta, 1].
    """
    if not 0 < delta <= 1:
        raise PreconditionError("delta must lie in (0, 1]")
    mid = 0.5 * (1.0 + delta)
    half = 0.5 * (1.0 - delta)
    if noise is None:
        # |K_r - mid| <= 2 max|noise components| is a crude but safe bound
        noise = 0.2 * half
    raw = noise * rng.standard_normal((n,) * 4)
    R = constant_curvature_operator(n, mid).R + project_to_curvature_symmetries(raw)
    return CurvatureOperator(n, R)


# -- predicates and curvature quotients ----------------------------------------

def _bilinear(a, b):
    return complex(np.sum(np.asarray(a) * np.asarray(b)))


def is_isotropic(plane: ComplexPlane, tol: float = ISOTROPY_TOL) -> bool:
    """All three complex-bilinear products of the spanning pair vanish."""
    return (
        abs(_bilinear(plane.z, plane.z)) <= tol
        and abs(_bilinear(plane.z, plane.w)) <= tol
        and abs(_bilinear(plane.w, plane.w)) <= tol
    )


def is_half_isotropic(plane: ComplexPlane, tol: float = ISOTROPY_TOL) -> bool:
    """Only <z,z> and <z,w> are required to vanish."""
    return (
        abs(_bilinear(plane.z, plane.z)) <= tol
        and abs(_bilinear(plane.z, plane.w)) <= tol
    )


def associated_real_plane(v, tol: float = ISOTROPY_TOL):
    """Real and imaginary parts (x, y) of an isotropic vector v = x + iy.

    Isotropy forces x and y to be orthogonal and of equal length, so they
    span a real two-plane.
    """
    v = np.asarray(v, dtype=complex)
    if np.linalg.norm(v) == 0:
        raise PreconditionError("zero vector has no associated plane")
    if abs(_bilinear(v, v)) > tol * max(1.0, float(np.vdot(v, v).real)):
        raise PreconditionError("vector is not isotropic: <v,v> != 0")
    return v.real.copy(), v.imag.copy()


def complex_sectional_curvature(op: CurvatureOperator, plane: ComplexPlane) -> float:
    """Hermitian curvature quotient of the plane.

    Evaluates <R(z ^ w), conj(z) ^ conj(w)> / <z ^ w, conj(z) ^ conj(w)>;
    the value is real and reduces to the classical sectional curvature on
    real planes.
    """
    z, w = plane.z, plane.w
    zb, wb = np.conj(z), np.conj(w)
    den = np.vdot(z, z) * np.vdot(w, w) - np.vdot(w, z) * np.vdot(z, w)
    den = den.real
    if den <= 1e-12:
        raise PreconditionError("degenerate plane: Hermitian wedge norm too small")
    num = np.einsum("ijkl,i,j,k,l", op.R, z, w, zb, wb)
    if abs(num.imag) > 1e-8 * max(1.0, abs(num.real)):
        raise PreconditionError("curvature quotient is not numerically real")
    return float(num.real) / den


def real_sectional_curvature(op: CurvatureOperator, u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    den = np.dot(u, u) * np.dot(v, v) - np.dot(u, v) ** 2
    if den <= 1e-12:
        raise PreconditionError("degenerate real plane")
    num = np.einsum("ijkl,i,j,k,l", op.R, u, v, u, v)
    return float(num) / den


def pinch_bounds(delta: float):
    """Half-isotropic curvature band ((4 delta - 1)/3, (4 - delta)/3)."""
    if not 0 < delta <= 1:
        raise PreconditionError("delta must lie in (0, 1]")
    return (4.0 * delta - 1.0) / 3.0, (4.0 - delta) / 3.0


# -- sampling ------------------------------------------------------------------

def random_orthonormal_frame(n: int, k: int, rng) -> np.ndarray:
    """k orthonormal vectors in R^n (rows), from a Gaussian QR."""
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return (q * np.sign(np.diag(r))).T


@dataclass(frozen=True)
class PinchReport:
    delta: float
    samples: int
    violations: int
    worst_margin: float
    seed: int
    hypothesis_satisfied: bool
    hypothesis_note: str = ""

    def to_dict(self):
        return {
            "delta": self.delta,
            "samples": self.samples,
            "violations": self.violations,
            "worst_margin": self.worst_margin,
            "seed": self.seed,
            "hypothesis_satisfied": self.hypothesis_satisfied,
            "hypothesis_note": self.hypothesis_note,
        }


def verify_pinch_implication(op: CurvatureOperator, delta: float,
                             sample_count: int, rng_seed: int,
                             pretest_count: int = 2000) -> PinchReport:
    """Sample half-isotropic planes and count violations of pinch_bounds.

    Two pretests come first: real sectional curvatures of random planes
    must lie in (delta, 1], and the mixed component R[0,1,3,2] over random
    orthonormal 4-frames must obey the Berger bound (2/3)(1 - delta).  If
    either fails, the report flags the hypothesis instead of sampling.

    The sampled planes have the form (e1 + i e2, a e3 + i b e4) over random
    orthonormal 4-frames with log-uniform a, b > 0.
    """
    if op.n < 4:
        raise PreconditionError("need dimension >= 4 to build 4-frames")
    if not 0 < delta <= 1:
        raise PreconditionError("delta must lie in (0, 1]")
    rng = np.random.default_rng(rng_seed)
    slack = 1e-9

    for _ in range(pretest_count):
        u, v = random_orthonormal_frame(op.n, 2, rng)
        kr = real_sectional_curvature(op, u, v)
        if not (delta - slack < kr <= 1.0 + slack):
            return PinchReport(delta, 0, 0, float("nan"), rng_seed, False,
                               f"real sectional curvature {kr} outside (delta, 1]")
    berger = (2.0 / 3.0) * (1.0 - delta)
    for _ in range(pretest_count):
        e = random_orthonormal_frame(op.n, 4, rng)
        mixed = np.einsum("ijkl,i,j,k,l", op.R, e[0], e[1], e[3], e[2])
        if abs(mixed) > berger + slack:
            return PinchReport(delta, 0, 0, float("nan"), rng_seed, False,
                               f"mixed term {mixed} violates the Berger bound {berger}")

    lower, upper = pinch_bounds(delta)
    violations = 0
    worst = float("inf")
    for _ in range(sample_count):
        e = random_orthonormal_frame(op.n, 4, rng)
        a, b = np.exp(rng.uniform(-2.0, 2.0, size=2))
        plane = ComplexPlane(e[0] + 1j * e[1], a * e[2] + 1j * b * e[3])
        ki = complex_sectional_curvature(op, plane)
        margin = min(ki - lower, upper - ki)
        worst = min(worst, margin)
        if margin < -slack:
            violations += 1
    return PinchReport(delta, sample_count, violations, worst, rng_seed, True)


def curvature_condition_d(op: CurvatureOperator, d: int, sample_count: int,
                          rng_seed: int) -> bool:
    """Check K_i(sigma) > K_r(associated plane)/d > 0 on sampled isotropic planes."""
    if op.n < 4:
        raise PreconditionError("need dimension >= 4")
    if d < 1:
        raise PreconditionError("cover degree d must be >= 1")
    rng = np.random.default_rng(rng_seed)
    for _ in range(sample_count):
        e = random_orthonormal_frame(op.n, 4, rng)
        v = e[0] + 1j * e[1]
        w = e[2] + 1j * e[3]
        ki = complex_sectional_curvature(op, ComplexPlane(v, w))
        x, y = associated_real_plane(v)
        kr = real_sectional_curvature(op, x, y)
        if not (ki > kr / d and kr > 0):
            return False
    return True
