"""Rational self-maps of the Riemann sphere and branched-cover spectra.

Rational maps are stored by their zero and pole divisors plus a scale.
The point at infinity is the complex value inf+0j; arithmetic on the
extended plane goes through the chordal metric where absolute differences
would blow up.  Compositions with analytic target maps are sampled on the
mesh through stereographic charts, and pulled-back metrics enter spectral
computations through a per-element conformal factor with a floor at the
branch elements.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .energy import SphereMap, normalize_rows
from .errors import (
    DegenerateElementsError,
    InvariantViolationError,
    NumericError,
    PreconditionError,
)
from .sphere_mesh import SphereMesh, assemble_pencil

INF = complex(math.inf, 0.0)


def is_inf(z: complex) -> bool:
    return cmath.isinf(z)


def chordal_distance(a: complex, b: complex) -> float:
    """Distance between extended-complex points on the Riemann sphere."""
    if is_inf(a) and is_inf(b):
        return 0.0
    if is_inf(a):
        return 2.0 / math.sqrt(1.0 + abs(b) ** 2)
    if is_inf(b):
        return 2.0 / math.sqrt(1.0 + abs(a) ** 2)
    return 2.0 * abs(a - b) / math.sqrt((1.0 + abs(a) ** 2) * (1.0 + abs(b) ** 2))


def stereographic(points: np.ndarray) -> np.ndarray:
    """Project unit 3-vectors from the north pole to the complex plane."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.empty(len(points), dtype=complex)
    denom = 1.0 - points[:, 2]
    polar = denom < 1e-14
    z[~polar] = (points[~polar, 0] + 1j * points[~polar, 1]) / denom[~polar]
    z[polar] = INF
    return z


def inverse_stereographic(z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    pts = np.empty((len(z), 3))
    infinite = np.isinf(z.real) | np.isinf(z.imag)
    zf = z[~infinite]
    r2 = np.abs(zf) ** 2
    pts[~infinite, 0] = 2.0 * zf.real / (1.0 + r2)
    pts[~infinite, 1] = 2.0 * zf.imag / (1.0 + r2)
    pts[~infinite, 2] = (r2 - 1.0) / (1.0 + r2)
    pts[infinite] = (0.0, 0.0, 1.0)
    return pts


# -- Moebius transformations ----------------------------------------------------

@dataclass(frozen=True)
class Mobius:
    """Linear fractional transformation z -> (a z + b)/(c z + d)."""

    a: complex
    b: complex
    c: complex
    d: complex

    def __post_init__(self):
        if abs(self.a * self.d - self.b * self.c) < 1e-14:
            raise PreconditionError("Moebius matrix is singular")

    def __call__(self, z: complex) -> complex:
        if is_inf(z):
            return self.a / self.c if self.c != 0 else INF
        num = self.a * z + self.b
        den = self.c * z + self.d
        if den == 0:
            return INF
        return num / den

    def inverse(self) -> "Mobius":
        return Mobius(self.d, -self.b, -self.c, self.a)

    def compose(self, other: "Mobius") -> "Mobius":
        return Mobius(
            self.a * other.a + self.b * other.c,
            self.a * other.b + self.b * other.d,
            self.c * other.a + self.d * other.c,
            self.c * other.b + self.d * other.d,
        )

    @classmethod
    def identity(cls) -> "Mobius":
        return cls(1.0, 0.0, 0.0, 1.0)

    @classmethod
    def to_zero_one_inf(cls, z1, z2, z3) -> "Mobius":
        """The unique transformation sending (z1, z2, z3) to (0, 1, inf)."""
        if is_inf(z1):
            return cls(0.0, z2 - z3, -1.0, z3)
        if is_inf(z2):
            return cls(1.0, -z1, 1.0, -z3)
        if is_inf(z3):
            return cls(-1.0, z1, 0.0, z1 - z2)
        return cls(z2 - z3, -z1 * (z2 - z3), z2 - z1, -z3 * (z2 - z1))

    @classmethod
    def from_three_points(cls, sources, targets) -> "Mobius":
        return cls.to_zero_one_inf(*targets).inverse().compose(
            cls.to_zero_one_inf(*sources)
        )


# -- rational maps ---------------------------------------------------------------

@dataclass(frozen=True)
class RationalMap:
    """Degree-d holomorphic self-map with divisor (zeros) - (poles)."""

    zeros: tuple
    poles: tuple
    scale: complex = 1.0
    _num: np.ndarray = field(init=False, repr=False, compare=False)
    _den: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        zeros = tuple(complex(z) for z in self.zeros)
        poles = tuple(complex(q) for q in self.poles)
        if len(zeros) != len(poles) or not zeros:
            raise PreconditionError("zeros and poles must have equal positive length")
        if self.scale == 0:
            raise PreconditionError("scale must be nonzero")
        for p in zeros:
            for q in poles:
                if chordal_distance(p, q) < 1e-12:
                    raise PreconditionError(
                        f"zero {p} coincides with pole {q} (common factor)"
                    )
        object.__setattr__(self, "zeros", zeros)
        object.__setattr__(self, "poles", poles)
        finite_zeros = [z for z in zeros if not is_inf(z)]
        finite_poles = [q for q in poles if not is_inf(q)]
        num = np.polynomial.polynomial.polyfromroots(finite_zeros) if finite_zeros \
            else np.array([1.0 + 0j])
        den = np.polynomial.polynomial.polyfromroots(finite_poles) if finite_poles \
            else np.array([1.0 + 0j])
        object.__setattr__(self, "_num", self.scale * num)
        object.__setattr__(self, "_den", den)

    @property
    def degree(self) -> int:
        return len(self.zeros)

    @classmethod
    def power(cls, d: int, scale: complex = 1.0) -> "RationalMap":
        """The map z -> scale * z^d."""
        return cls(zeros=(0.0,) * d, poles=(INF,) * d, scale=scale)

    def to_json_dict(self):
        def enc(z):
            return "inf" if is_inf(z) else [z.real, z.imag]

        return {
            "zeros": [enc(z) for z in self.zeros],
            "poles": [enc(q) for q in self.poles],
            "scale_re": self.scale.real,
            "scale_im": self.scale.imag,
        }

    @classmethod
    def from_json_dict(cls, doc):
        def dec(v):
            return INF if v == "inf" else complex(v[0], v[1])

        return cls(
            zeros=tuple(dec(v) for v in doc["zeros"]),
            poles=tuple(dec(v) for v in doc["poles"]),
            scale=complex(doc["scale_re"], doc["scale_im"]),
        )


def evaluate(g: RationalMap, z) -> complex:
    """Value of g at an extended-complex point, with degree counting at inf."""
    z = complex(z)
    if is_inf(z):
        zeros_at_inf = sum(1 for p in g.zeros if is_inf(p))
        poles_at_inf = sum(1 for q in g.poles if is_inf(q))
        if poles_at_inf > 0:
            return INF
        if zeros_at_inf > 0:
            return 0.0
        return g.scale  # equal finite degrees: limit is the leading ratio
    num = complex(np.polynomial.polynomial.polyval(z, g._num))
    den = complex(np.polynomial.polynomial.polyval(z, g._den))
    if den == 0 and num == 0:
        raise InvariantViolationError(f"0/0 at z={z}: lost common factor")
    if den == 0:
        return INF
    return num / den


def evaluate_many(g: RationalMap, zs: np.ndarray) -> np.ndarray:
    return np.array([evaluate(g, z) for z in np.atleast_1d(zs)], dtype=complex)


def hol_space_dimension(d: int) -> dict:
    """Dimensions of the space of degree-d maps and of its cover families."""
    if d < 1:
        raise PreconditionError("degree must be >= 1")
    return {"complex_dim": 2 * d + 1, "real_dim_orbit_family": 4 * d + 2}


def branch_points(g: RationalMap, cluster_tol: float = 1e-6):
    """Ramification points with multiplicities; they always total 2d - 2.

    Finite branch points are the clustered roots of N'D - ND'; whatever
    multiplicity is missing from that count sits at infinity.
    """
    P = np.polynomial.polynomial
    wr = P.polysub(P.polymul(P.polyder(g._num), g._den),
                   P.polymul(g._num, P.polyder(g._den)))
    wr = np.asarray(wr, dtype=complex)
    scale = np.max(np.abs(wr)) if wr.size else 0.0
    total = 2 * g.degree - 2
    if scale == 0.0:
        if total == 0:
            return []
        raise NumericError("derivative numerator vanished identically")
    trimmed = np.trim_zeros(np.where(np.abs(wr) > 1e-12 * scale, wr, 0.0), trim="b")
    if len(trimmed) - 1 > total:
        raise NumericError("derivative degree exceeds the ramification budget")
    roots = np.roots(trimmed[::-1]) if len(trimmed) > 1 else np.array([])
    if not np.all(np.isfinite(roots)):
        raise NumericError("root finder returned non-finite branch points")
    points = []
    used = np.zeros(len(roots), dtype=bool)
    order = np.argsort([(r.real, r.imag) for r in roots], axis=0)[:, 0] if len(roots) \
        else []
    for idx in order:
        if used[idx]:
            continue
        r = roots[idx]
        close = ~used & (np.abs(roots - r) <= cluster_tol * (1.0 + np.abs(r)))
        mult = int(np.count_nonzero(close))
        used |= close
        points.append((complex(np.mean(roots[close])), mult))
    at_inf = total - sum(m for _, m in points)
    if at_inf < 0:
        raise NumericError("branch multiplicities exceed 2d - 2")
    if at_inf > 0:
        points.append((INF, at_inf))
    return points


# -- analytic target maps and composition ----------------------------------------

class EquatorTargetMap:
    """Totally geodesic analytic embedding of the domain sphere into S^n."""

    def __init__(self, n: int):
        if n < 2:
            raise PreconditionError("target dimension must be >= 2")
        self.n = n

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = np.zeros((len(points), self.n + 1))
        vals[:, :3] = points
        return normalize_rows(vals)


def _rotation_taking(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """A 3x3 rotation with R src = dst (Rodrigues)."""
    src = src / np.linalg.norm(src)
    dst = dst / np.linalg.norm(dst)
    v = np.cross(src, dst)
    c = float(np.dot(src, dst))
    if np.linalg.norm(v) < 1e-14:
        if c > 0:
            return np.eye(3)
        # antipodal: rotate by pi about any perpendicular axis
        axis = np.eye(3)[np.argmin(np.abs(src))]
        axis -= np.dot(axis, src) * src
        axis /= np.linalg.norm(axis)
        return 2.0 * np.outer(axis, axis) - np.eye(3)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def branch_alignment_rotation(g: RationalMap, mesh: SphereMesh) -> np.ndarray:
    """Domain rotation snapping the leading branch point onto a mesh vertex."""
    bps = branch_points(g)
    if not bps:
        return np.eye(3)
    bp = max(bps, key=lambda pm: pm[1])[0]
    target = inverse_stereographic([bp])[0]
    nearest = int(np.argmax(mesh.vertices @ target))
    return _rotation_taking(target, mesh.vertices[nearest])


def compose_cover(h, g: RationalMap, mesh: SphereMesh, align: bool = True) -> SphereMap:
    """Sample the branched cover h(g(.)) at the mesh vertices.

    When ``align`` is set the domain is rotated first so the leading branch
    point of g coincides with a mesh vertex, concentrating the degenerate
    conformal factor where it can be floored and reported.
    """
    pts = mesh.vertices
    if align:
        rot = branch_alignment_rotation(g, mesh)
        pts = pts @ rot  # evaluate at rot^T v, i.e. rotate the chart not the mesh
    z = stereographic(pts)
    w = evaluate_many(g, z)
    moved = inverse_stereographic(w)
    vals = h(moved)
    return SphereMap(mesh, h.n if hasattr(h, "n") else vals.shape[1] - 1,
                     normalize_rows(vals))


def normalize_double_cover(g: RationalMap, samples: int = 20):
    """Express a degree-2 map as S^(-1) o (z -> z^2) o T with Moebius S, T.

    T sends the two branch points of g to 0 and infinity; S is fitted from
    three samples and the factorization is verified in the chordal metric
    over ``samples`` points.  Returns (S, T).
    """
    if g.degree != 2:
        raise PreconditionError("normalization applies to degree-2 maps only")
    bps = branch_points(g)
    if len(bps) != 2 or any(m != 1 for _, m in bps):
        raise PreconditionError("branch points coincide (degenerate double cover)")
    b1, b2 = bps[0][0], bps[1][0]
    if is_inf(b2):
        T = Mobius(1.0, -b1, 0.0, 1.0)
    elif is_inf(b1):
        T = Mobius(0.0, 1.0, 1.0, -b2)
    else:
        T = Mobius(1.0, -b1, 1.0, -b2)

    # three probe points with distinct, well-separated g-values
    probes = []
    for k in range(64):
        z = 1.7 * cmath.exp(2j * math.pi * (k / 7.3 + 0.05)) + 0.31 * k
        gz = evaluate(g, z)
        tz2 = T(z) ** 2
        if any(chordal_distance(gz, p[1]) < 0.2 for p in probes):
            continue
        probes.append((z, gz, tz2))
        if len(probes) == 3:
            break
    if len(probes) < 3:
        raise NumericError("could not find three separated probe values")
    S = Mobius.from_three_points([p[1] for p in probes], [p[2] for p in probes])

    s_inv = S.inverse()
    worst = 0.0
    for k in range(samples):
        z = cmath.exp(2j * math.pi * k / samples) * (1.0 + 0.37 * (k % 5))
        lhs = evaluate(g, z)
        rhs = s_inv(T(z) ** 2)
        worst = max(worst, chordal_distance(lhs, rhs))
    if worst > 1e-8:
        raise NumericError(
            f"double-cover factorization residual {worst:.3e} exceeds 1e-8"
        )
    return S, T


# -- pulled-back metric spectra ----------------------------------------------------

@dataclass(frozen=True)
class PullbackSpectrumResult:
    lambda1: float
    eigenvalues: np.ndarray
    floor_activations: int
    floored_fraction: float
    degeneracy_warning: bool


def _conformal_factors(f: SphereMap, eps_reg: float):
    """Per-element area ratio of the image to the domain, floored."""
    mesh = f.mesh
    p = f.values[mesh.faces]  # (F, 3, C)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    g11 = np.einsum("fc,fc->f", e1, e1)
    g22 = np.einsum("fc,fc->f", e2, e2)
    g12 = np.einsum("fc,fc->f", e1, e2)
    image_area = 0.5 * np.sqrt(np.clip(g11 * g22 - g12**2, 0.0, None))
    rho = image_area / mesh.face_flat_areas
    floor = eps_reg * float(np.mean(rho))
    floored = rho < floor
    rho = np.maximum(rho, floor)
    return rho, int(np.count_nonzero(floored))


def _weighted_mass(mesh: SphereMesh, weights: np.ndarray) -> sp.csr_matrix:
    f = mesh.faces
    v = mesh.vertex_count
    rows = np.repeat(f, 3, axis=1).reshape(-1)
    cols = np.tile(f, (1, 3)).reshape(-1)
    m_local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    vals = ((weights * mesh.face_areas)[:, None, None] * m_local).reshape(-1)
    M = sp.coo_matrix((vals, (rows, cols)), shape=(v, v)).tocsr()
    return (M + M.T) * 0.5


def pullback_laplace_eigenvalues(f: SphereMap, k: int = 8,
                                 eps_reg: float = 1e-8):
    """Low generalized eigenvalues of the Laplacian of the pulled-back metric.

    In two dimensions the Dirichlet form is conformally invariant, so the
    pencil is the flat-domain stiffness against a mass matrix weighted by
    the per-element conformal factor (floored at eps_reg times its mean).
    """
    mesh = f.mesh
    rho, floored = _conformal_factors(f, eps_reg)
    pencil = assemble_pencil(mesh)
    M_rho = _weighted_mass(mesh, rho)
    rng = np.random.default_rng(1234)
    v0 = rng.standard_normal(mesh.vertex_count)
    vals = eigsh(pencil.K, k=k, M=M_rho, sigma=-0.1, which="LM", v0=v0,
                 return_eigenvectors=False)
    return np.sort(vals), floored


def induced_metric_lambda1(f: SphereMap, eps_reg: float = 1e-8,
                           k: int = 8) -> PullbackSpectrumResult:
    """First nonzero eigenvalue of the pulled-back Laplace pencil.

    Raises DegenerateElementsError when the map is nowhere close to an
    immersion; a floored-element fraction above 1% only sets the warning
    flag, since flooring adds mass on a small set and can only lower the
    Rayleigh quotients this eigenvalue bounds from above.
    """
    rho, _ = _conformal_factors(f, eps_reg=0.0 + 1e-300)
    if np.max(rho) <= 0:
        raise DegenerateElementsError("map image is degenerate on every element",
                                      elements=list(range(f.mesh.face_count)))
    vals, floored = pullback_laplace_eigenvalues(f, k=k, eps_reg=eps_reg)
    nonzero = vals[np.abs(vals) > 1e-8]
    if nonzero.size == 0:
        raise NumericError("no nonzero eigenvalue among the computed batch")
    frac = floored / f.mesh.face_count
    return PullbackSpectrumResult(
        lambda1=float(nonzero[0]),
        eigenvalues=vals,
        floor_activations=floored,
        floored_fraction=frac,
        degeneracy_warning=frac > 0.01,
    )


def double_cover_normal_index(f: SphereMap, n: int, margin: float = 0.1,
                              eps_reg: float = 1e-8, k: int = 16) -> int:
    """Normal Morse index of a cover of a totally geodesic sphere in S^n.

    For the round target the normal second variation is (n - 2) copies of
    the pulled-back Laplacian shifted by -2, so the index is (n - 2) times
    the number of eigenvalues strictly below 2 (with a classification
    margin against discretization).
    """
    if n < 3:
        raise PreconditionError("need target dimension >= 3 for a normal bundle")
    vals, _ = pullback_laplace_eigenvalues(f, k=k, eps_reg=eps_reg)
    below = int(np.count_nonzero(vals < 2.0 - margin))
    return below * (n - 2)
