"""Dirichlet and alpha energies of discretized sphere maps.

A map is stored as one unit (n+1)-vector per mesh vertex and treated as
piecewise linear over the faces.  The energy density is constant per
element; the alpha-energy applies the area-one convention on read (dA is
scaled by 1/(4*pi) and |df|^2 by 4*pi), so maps built on unit-round meshes
need no conversion.  Gradients differentiate the discrete functional
exactly and are then projected pointwise into the tangent space of the
target sphere ("discretize then optimize").
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.spatial import cKDTree

from .errors import ConvergenceError, NumericError, PreconditionError
from .sphere_mesh import FOUR_PI, SphereMesh, worker_count

_AXES = {"x": np.array([1.0, 0.0, 0.0]),
         "y": np.array([0.0, 1.0, 0.0]),
         "z": np.array([0.0, 0.0, 1.0])}


@dataclass(eq=False)
class SphereMap:
    """Discrete map from the mesh into the unit sphere of R^(n+1)."""

    mesh: SphereMesh
    n: int
    values: np.ndarray  # (V, n+1), unit rows

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.n < 2:
            raise PreconditionError("target dimension n must be >= 2")
        if self.values.shape != (self.mesh.vertex_count, self.n + 1):
            raise PreconditionError(
                f"values shape {self.values.shape} does not match mesh/target"
            )
        norms = np.linalg.norm(self.values, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-10:
            raise PreconditionError("map values must be unit vectors (within 1e-10)")

    def copy(self):
        return SphereMap(self.mesh, self.n, self.values.copy())


@dataclass(eq=False)
class TangentField:
    """Per-vertex vectors orthogonal to the corresponding map values."""

    base: SphereMap
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.base.values.shape:
            raise PreconditionError("tangent field shape mismatch")
        dots = np.abs(np.sum(self.values * self.base.values, axis=1))
        if dots.size and dots.max() > 1e-10:
            raise PreconditionError("field is not pointwise tangent (within 1e-10)")

    @property
    def mesh(self):
        return self.base.mesh

    def norm(self):
        return float(np.linalg.norm(self.values))


def normalize_rows(values):
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(values, axis=1)
    if np.any(norms == 0):
        raise PreconditionError("cannot normalize a zero row")
    return values / norms[:, None]


# -- map constructors ---------------------------------------------------------

def equator_map(mesh: SphereMesh, n: int) -> SphereMap:
    """Totally geodesic inclusion of the domain sphere into S^n."""
    vals = np.zeros((mesh.vertex_count, n + 1))
    vals[:, :3] = mesh.vertices
    return SphereMap(mesh, n, vals)


def constant_map(mesh: SphereMesh, n: int, point=None) -> SphereMap:
    if point is None:
        point = np.eye(n + 1)[0]
    point = np.asarray(point, dtype=float)
    point = point / np.linalg.norm(point)
    vals = np.tile(point, (mesh.vertex_count, 1))
    return SphereMap(mesh, n, vals)


def random_map(mesh: SphereMesh, n: int, rng) -> SphereMap:
    vals = rng.standard_normal((mesh.vertex_count, n + 1))
    return SphereMap(mesh, n, normalize_rows(vals))


def perturbed_constant_map(mesh: SphereMesh, n: int, rng, eps=0.1) -> SphereMap:
    base = np.eye(n + 1)[0]
    vals = base[None, :] + eps * rng.standard_normal((mesh.vertex_count, n + 1))
    return SphereMap(mesh, n, normalize_rows(vals))


def random_tangent_field(sphere_map: SphereMap, rng) -> TangentField:
    raw = rng.standard_normal(sphere_map.values.shape)
    dots = np.sum(raw * sphere_map.values, axis=1)
    return TangentField(sphere_map, raw - dots[:, None] * sphere_map.values)


def dilated_equator_map(mesh: SphereMesh, n: int, t: float, axis="z",
                        rotation=None) -> SphereMap:
    """Equator map precomposed with a conformal dilation of the domain.

    The dilation is applied analytically to the vertex positions before
    sampling, so no interpolation error enters.  An optional domain
    rotation is applied first.
    """
    pts = mesh.vertices
    if rotation is not None:
        pts = pts @ np.asarray(rotation, dtype=float).T
    pts = dilate_points(pts, t, axis=axis)
    vals = np.zeros((mesh.vertex_count, n + 1))
    vals[:, :3] = pts
    return SphereMap(mesh, n, normalize_rows(vals))


# -- densities and energies ---------------------------------------------------

def element_energy_integrals(sphere_map: SphereMap) -> np.ndarray:
    """Per-element values of the integral of |df|^2 over the element."""
    k_local = sphere_map.mesh.face_stiffness
    vals = sphere_map.values[sphere_map.mesh.faces]  # (F, 3, C)
    return np.einsum("fij,fic,fjc->f", k_local, vals, vals)


def element_density_area_one(sphere_map: SphereMap):
    """Per-element (|df|^2, dA) under the area-one convention.

    The density is clipped at zero: it is nonnegative analytically but the
    assembled quadratic form can round to tiny negative values.
    """
    q = element_energy_integrals(sphere_map)
    areas = sphere_map.mesh.face_areas
    g = np.maximum(FOUR_PI * q / areas, 0.0)
    da = areas / FOUR_PI
    return g, da


def dirichlet_energy(sphere_map: SphereMap) -> float:
    """(1/2) * integral of |df|^2; independent of the area convention."""
    return 0.5 * float(element_energy_integrals(sphere_map).sum())


def alpha_energy(sphere_map: SphereMap, alpha: float) -> float:
    """Regularized energy (1/2) * integral of (1 + |df|^2)^alpha dA - 1/2.

    Density and area element are taken in the area-one convention.  The
    constant is subtracted elementwise (the measure has total mass one),
    which makes alpha_energy(f, 1) == dirichlet_energy(f) exactly and
    avoids cancellation for near-constant maps.
    """
    if alpha < 1.0:
        raise PreconditionError("alpha must be >= 1")
    g, da = element_density_area_one(sphere_map)
    return 0.5 * float(np.sum(((1.0 + g) ** alpha - 1.0) * da))


def alpha_energy_raw_gradient(sphere_map: SphereMap, alpha: float) -> np.ndarray:
    """Gradient of the discrete alpha-energy before tangential projection."""
    mesh = sphere_map.mesh
    g, _ = element_density_area_one(sphere_map)
    w = alpha * (1.0 + g) ** (alpha - 1.0)
    vals = sphere_map.values[mesh.faces]                      # (F, 3, C)
    s = np.einsum("fij,fjc->fic", mesh.face_stiffness, vals)  # (F, 3, C)
    contrib = w[:, None, None] * s
    grad = np.zeros_like(sphere_map.values)
    np.add.at(grad, mesh.faces.reshape(-1), contrib.reshape(-1, vals.shape[2]))
    return grad


def alpha_energy_gradient(sphere_map: SphereMap, alpha: float) -> TangentField:
    raw = alpha_energy_raw_gradient(sphere_map, alpha)
    dots = np.sum(raw * sphere_map.values, axis=1)
    return TangentField(sphere_map, raw - dots[:, None] * sphere_map.values)


# -- the center-of-mass weight function --------------------------------------

def psi_alpha(t, alpha: float):
    """Weight [alpha (1+t)^(alpha-1) t - (1+t)^alpha + 1] / (alpha - 1).

    Vanishes at t = 0, is strictly increasing for t > 0, and tends to
    t - log(1+t) as alpha -> 1.  Near alpha = 1 the closed form cancels
    catastrophically, so for |alpha - 1| < 1e-6 the equivalent integral
    form  integral_0^t alpha tau (1+tau)^(alpha-2) dtau  is used.
    """
    if alpha < 1.0:
        raise PreconditionError("alpha must be >= 1")
    arr = np.asarray(t, dtype=float)
    if np.any(arr < 0):
        raise PreconditionError("psi_alpha requires t >= 0")
    scalar = np.ndim(t) == 0
    if alpha == 1.0:
        out = arr - np.log1p(arr)
    elif abs(alpha - 1.0) < 1e-6:
        flat = arr.reshape(-1)
        out = np.array(
            [
                quad(lambda tau: alpha * tau * (1.0 + tau) ** (alpha - 2.0), 0.0, ti,
                     limit=200)[0]
                for ti in flat
            ]
        ).reshape(arr.shape)
    else:
        out = (alpha * (1.0 + arr) ** (alpha - 1.0) * arr
               - (1.0 + arr) ** alpha + 1.0) / (alpha - 1.0)
    return float(out) if scalar else out


def center_of_mass(sphere_map: SphereMap, alpha: float) -> np.ndarray:
    """Integral of X psi_alpha(|df|^2) dA, with X the domain position.

    The area-one convention is applied on read.  The integral vanishes at
    alpha-critical points and is used to normalize the conformal gauge.
    """
    g, da = element_density_area_one(sphere_map)
    weights = psi_alpha(g, alpha) * da
    return sphere_map.mesh.face_centroids.T @ weights


def mean_density_area_one(sphere_map: SphereMap) -> float:
    g, da = element_density_area_one(sphere_map)
    return float(np.sum(g * da) / np.sum(da))


# -- conformal dilations of the domain ---------------------------------------

def dilate_points(points, t: float, axis="z"):
    """Conformal dilation of the sphere along an axis.

    In the cylindrical coordinate u with height = tanh(u) along the axis,
    the dilation sends u to u + t and fixes the angle; the two poles on
    the axis are fixed points.
    """
    a = _AXES[axis] if isinstance(axis, str) else np.asarray(axis, dtype=float)
    a = a / np.linalg.norm(a)
    points = np.asarray(points, dtype=float)
    single = points.ndim == 1
    pts = np.atleast_2d(points)
    c = np.clip(pts @ a, -1.0, 1.0)
    out = np.empty_like(pts)
    at_pole = 1.0 - np.abs(c) < 1e-14
    safe = ~at_pole
    u = np.arctanh(c[safe])
    c_new = np.tanh(u + t)
    s_old = np.sqrt(np.clip(1.0 - c[safe] ** 2, 0.0, None))
    s_new = np.sqrt(np.clip(1.0 - c_new**2, 0.0, None))
    perp = pts[safe] - c[safe, None] * a[None, :]
    out[safe] = c_new[:, None] * a[None, :] + (s_new / s_old)[:, None] * perp
    out[at_pole] = pts[at_pole]
    out /= np.linalg.norm(out, axis=1)[:, None]
    return out[0] if single else out


def apply_axis_dilations(points, params):
    """Dilations along x, then y, then z (x applied first)."""
    out = dilate_points(points, params[0], axis="x")
    out = dilate_points(out, params[1], axis="y")
    return dilate_points(out, params[2], axis="z")


# -- resampling ----------------------------------------------------------------

def sample_map(sphere_map: SphereMap, points: np.ndarray) -> np.ndarray:
    """Evaluate the piecewise-linear map at arbitrary unit domain points.

    Each query is located in the face whose flat triangle is pierced by
    the ray through the point (candidates come from a centroid kd-tree);
    barycentric interpolation is followed by renormalization.
    """
    mesh = sphere_map.mesh
    if "centroid_tree" not in mesh._cache:
        mesh._cache["centroid_tree"] = cKDTree(mesh.face_centroids)
    tree = mesh._cache["centroid_tree"]
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    k = min(16, mesh.face_count)
    _, cand = tree.query(pts, k=k, workers=worker_count())
    cand = np.atleast_2d(cand)
    corner = mesh.vertices[mesh.faces[cand]]          # (Q, k, 3, 3)
    mats = corner.transpose(0, 1, 3, 2)               # columns are corners
    rhs = np.repeat(pts[:, None, :, None], k, axis=1)
    bary = np.linalg.solve(mats, rhs)[..., 0]
    ok = np.all(bary >= -1e-10, axis=2)
    first = np.argmax(ok, axis=1)
    found = ok[np.arange(len(pts)), first]
    face_idx = cand[np.arange(len(pts)), first]
    b = bary[np.arange(len(pts)), first]
    b = np.clip(b, 0.0, None)
    b /= b.sum(axis=1)[:, None]
    vals = np.einsum("qi,qic->qc", b, sphere_map.values[mesh.faces[face_idx]])
    if not np.all(found):
        # extremely rare: fall back to the nearest vertex value
        missing = np.where(~found)[0]
        if "vertex_tree" not in mesh._cache:
            mesh._cache["vertex_tree"] = cKDTree(mesh.vertices)
        _, nearest = mesh._cache["vertex_tree"].query(pts[missing])
        vals[missing] = sphere_map.values[nearest]
    return normalize_rows(vals)


def precompose_with_dilations(sphere_map: SphereMap, params) -> SphereMap:
    """Resample the map after moving the domain by three axis dilations."""
    moved = apply_axis_dilations(sphere_map.mesh.vertices, params)
    vals = sample_map(sphere_map, moved)
    return SphereMap(sphere_map.mesh, sphere_map.n, vals)


# -- recentering ---------------------------------------------------------------

def fit_centering_dilation(sphere_map: SphereMap, alpha: float,
                           tol: float = 1e-8, max_iter: int = 50):
    """Newton solve for dilation parameters that zero the center of mass.

    Returns (recentered_map, params).  Raises ConvergenceError with the
    final residual if Newton does not reach |center_of_mass| <= tol.
    """
    if dirichlet_energy(sphere_map) < 1e-12:
        raise PreconditionError("cannot recenter a constant map")
    com0 = center_of_mass(sphere_map, alpha)
    if np.linalg.norm(com0) <= tol:
        return sphere_map, np.zeros(3)

    def com_at(params):
        return center_of_mass(precompose_with_dilations(sphere_map, params), alpha)

    params = np.zeros(3)
    com = com0
    res = float(np.linalg.norm(com))
    h = 1e-6
    for _ in range(max_iter):
        jac = np.empty((3, 3))
        for j in range(3):
            dp = np.zeros(3)
            dp[j] = h
            jac[:, j] = (com_at(params + dp) - com_at(params - dp)) / (2.0 * h)
        try:
            step = np.linalg.solve(jac, com)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError("singular Jacobian while recentering",
                                   residual=res) from exc
        scale = 1.0
        for _ in range(30):
            trial = params - scale * step
            com_trial = com_at(trial)
            if np.linalg.norm(com_trial) < res:
                params, com = trial, com_trial
                res = float(np.linalg.norm(com))
                break
            scale *= 0.5
        else:
            raise ConvergenceError("recentering stalled", residual=res)
        if res <= tol:
            return precompose_with_dilations(sphere_map, params), params
    raise ConvergenceError(
        f"recentering did not reach tolerance in {max_iter} iterations",
        residual=res,
    )


def recenter(sphere_map: SphereMap, alpha: float) -> SphereMap:
    """Precompose with conformal dilations so the center of mass vanishes."""
    recentered, _ = fit_centering_dilation(sphere_map, alpha)
    return recentered


# -- axially symmetric reduced energy -----------------------------------------

def axisymmetric_alpha_energy(speed_profile, alpha: float, U: float) -> float:
    """Truncated rotationally symmetric alpha-energy.

    Computes pi * integral_{-U}^{U} [1 + (cosh(u) c(u))^2]^alpha sech(u)^2 du
    by adaptive quadrature, where c(u) >= 0 is the speed profile of the
    generating curve.  No constant shift is applied to the truncation; the
    -1/2 belongs to the full line and is reported separately by callers.
    """
    if alpha <= 1.0:
        raise PreconditionError("axisymmetric reduction requires alpha > 1")
    if U <= 0:
        raise PreconditionError("truncation U must be positive")

    def integrand(u):
        c = speed_profile(u)
        if c < 0:
            raise PreconditionError("speed profile must be nonnegative")
        return (1.0 + (math.cosh(u) * c) ** 2) ** alpha / math.cosh(u) ** 2

    value, err = quad(integrand, -U, U, limit=400)
    if not np.isfinite(value) or err > 1e-6 * max(1.0, abs(value)):
        raise NumericError(f"quadrature did not converge (estimate {err!r})")
    return math.pi * value


def axisymmetric_divergence_minorant(speed: float, alpha: float, U: float) -> float:
    """Lower bound pi * integral c^(2 alpha) cosh(u)^(2 alpha - 2) du on [-U, U]."""
    value, _ = quad(
        lambda u: speed ** (2.0 * alpha) * math.cosh(u) ** (2.0 * alpha - 2.0),
        -U,
        U,
        limit=400,
    )
    return math.pi * value
