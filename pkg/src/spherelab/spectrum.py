"""Second-variation pencils, Morse index and nullity, and spectral checks.

The Hessian is the exact second derivative of the discrete alpha-energy
restricted to the tangent space of the unit-sphere constraint, with the
standard correction that subtracts, per vertex, the inner product of the
unconstrained gradient with the vertex value.  Pencils are reduced to
per-vertex orthonormal tangent (or normal) frames and solved by a sparse
shift-invert Lanczos iteration with a deterministic start vector.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import ArpackNoConvergence, eigs, eigsh

from .energy import (
    SphereMap,
    alpha_energy_raw_gradient,
    element_density_area_one,
    equator_map,
)
from .errors import DegenerateElementsError, PreconditionError
from .sphere_mesh import FOUR_PI, SphereMesh, assemble_pencil

_EIG_SEED = 20240

_tau_cache: dict = {}


@dataclass(frozen=True)
class SpectrumReport:
    """Sorted low eigenvalues of a symmetric pencil with index/nullity counts."""

    eigenvalues: np.ndarray
    index: int
    nullity: int
    tau: float
    k: int
    converged: bool

    def __post_init__(self):
        object.__setattr__(self, "eigenvalues", np.sort(np.asarray(self.eigenvalues)))

    def to_rows(self):
        rows = []
        for rank, lam in enumerate(self.eigenvalues):
            if lam < -self.tau:
                cls = "negative"
            elif abs(lam) <= self.tau:
                cls = "null"
            else:
                cls = "positive"
            rows.append((rank, float(lam), cls))
        return rows


@dataclass(frozen=True)
class SecondVariationPencil:
    """Reduced pencil (H, M) over a per-vertex orthonormal frame."""

    H: sp.csr_matrix
    M: sp.csr_matrix
    frame: np.ndarray  # (V, C, dim) basis of the admissible subspace
    base: SphereMap
    alpha: float
    kind: str = "tangent"

    @property
    def dim(self) -> int:
        return self.H.shape[0]


def _unconstrained_hessian(sphere_map: SphereMap, alpha: float) -> sp.csr_matrix:
    """Sparse Hessian of the discrete alpha-energy in ambient coordinates."""
    mesh = sphere_map.mesh
    faces = mesh.faces
    C = sphere_map.n + 1
    vals = sphere_map.values[faces]                       # (F, 3, C)
    k_local = mesh.face_stiffness
    s = np.einsum("fij,fjc->fic", k_local, vals)          # (F, 3, C)
    g, _ = element_density_area_one(sphere_map)
    w = alpha * (1.0 + g) ** (alpha - 1.0)
    # rank-one element coefficient from differentiating the density weight
    c_rank1 = alpha * (alpha - 1.0) * (1.0 + g) ** (alpha - 2.0) \
        * (2.0 * FOUR_PI / mesh.face_areas)

    blocks = w[:, None, None, None, None] * k_local[:, :, :, None, None] \
        * np.eye(C)[None, None, None, :, :]
    blocks = blocks + c_rank1[:, None, None, None, None] \
        * s[:, :, None, :, None] * s[:, None, :, None, :]
    # scatter (F,3,3,C,C) blocks into a (VC, VC) COO matrix
    rows = (faces[:, :, None, None, None] * C
            + np.zeros((1, 1, 3, 1, 1), dtype=np.int64)
            + np.arange(C)[None, None, None, :, None]
            + np.zeros((1, 1, 1, 1, C), dtype=np.int64))
    cols = (faces[:, None, :, None, None] * C
            + np.arange(C)[None, None, None, None, :]
            + np.zeros((1, 3, 1, C, 1), dtype=np.int64))
    dim = mesh.vertex_count * C
    H = sp.coo_matrix(
        (blocks.reshape(-1), (rows.reshape(-1), cols.reshape(-1))),
        shape=(dim, dim),
    ).tocsr()
    return (H + H.T) * 0.5


def constrained_hessian(sphere_map: SphereMap, alpha: float) -> sp.csr_matrix:
    """Ambient Hessian with the sphere-constraint diagonal correction."""
    C = sphere_map.n + 1
    H = _unconstrained_hessian(sphere_map, alpha)
    raw = alpha_energy_raw_gradient(sphere_map, alpha)
    lam = np.sum(raw * sphere_map.values, axis=1)         # (V,)
    H = H - sp.diags(np.repeat(lam, C))
    return H.tocsr()


def _frame_matrix(frame: np.ndarray) -> sp.csr_matrix:
    """Block-diagonal sparse matrix from per-vertex frames (V, C, dim)."""
    v, C, dim = frame.shape
    rows = (np.arange(v)[:, None, None] * C + np.arange(C)[None, :, None])
    cols = (np.arange(v)[:, None, None] * dim + np.arange(dim)[None, None, :])
    return sp.coo_matrix(
        (frame.reshape(-1), (np.broadcast_to(rows, frame.shape).reshape(-1),
                             np.broadcast_to(cols, frame.shape).reshape(-1))),
        shape=(v * C, v * dim),
    ).tocsr()


def _tangent_frames(sphere_map: SphereMap) -> np.ndarray:
    """Orthonormal bases of the per-vertex tangent spaces, shape (V, C, C-1)."""
    vals = sphere_map.values
    v, C = vals.shape
    proj = np.eye(C)[None, :, :] - vals[:, :, None] * vals[:, None, :]
    _, svals, vt = np.linalg.svd(proj)
    frames = vt[:, : C - 1, :].transpose(0, 2, 1)
    if np.min(svals[:, : C - 1]) < 0.5:
        raise PreconditionError("tangent projector unexpectedly degenerate")
    return frames


def _image_tangent_planes(sphere_map: SphereMap):
    """Per-vertex area-weighted projector onto the image tangent plane."""
    mesh = sphere_map.mesh
    faces = mesh.faces
    vals = sphere_map.values[faces]
    C = sphere_map.n + 1
    e1 = vals[:, 1] - vals[:, 0]
    e2 = vals[:, 2] - vals[:, 0]
    # orthonormalize the element image frame
    n1 = np.linalg.norm(e1, axis=1)
    degenerate = n1 < 1e-12
    u1 = np.where(degenerate[:, None], 0.0, e1 / np.where(degenerate, 1.0, n1)[:, None])
    e2p = e2 - np.einsum("fc,fc->f", e2, u1)[:, None] * u1
    n2 = np.linalg.norm(e2p, axis=1)
    degenerate |= n2 < 1e-12
    u2 = np.where(degenerate[:, None], 0.0, e2p / np.where(degenerate, 1.0, n2)[:, None])
    proj = np.einsum("fc,fd->fcd", u1, u1) + np.einsum("fc,fd->fcd", u2, u2)
    acc = np.zeros((mesh.vertex_count, C, C))
    weights = mesh.face_areas
    np.add.at(acc, faces.reshape(-1),
              np.repeat(weights[:, None, None] * proj, 3, axis=0).reshape(-1, C, C))
    return acc, degenerate


def assemble_second_variation(sphere_map: SphereMap, alpha: float,
                              warn_threshold: float = 0.05) -> SecondVariationPencil:
    """Second-variation pencil of the alpha-energy on tangent fields.

    Warns when the map is visibly non-critical (the Hessian then has no
    index interpretation).  The mass side is the consistent mass matrix of
    the domain acting diagonally on coordinates, reduced to the frames.
    """
    raw = alpha_energy_raw_gradient(sphere_map, alpha)
    tang = raw - np.sum(raw * sphere_map.values, axis=1)[:, None] * sphere_map.values
    rawn = np.linalg.norm(raw)
    if rawn > 0 and np.linalg.norm(tang) / rawn > warn_threshold:
        warnings.warn("map is far from critical; Hessian spectrum is only formal",
                      stacklevel=2)
    frames = _tangent_frames(sphere_map)
    B = _frame_matrix(frames)
    H = constrained_hessian(sphere_map, alpha)
    M = assemble_pencil(sphere_map.mesh).M
    M_amb = sp.kron(M, sp.eye(sphere_map.n + 1, format="csr"), format="csr")
    return SecondVariationPencil(
        H=(B.T @ H @ B).tocsr(),
        M=(B.T @ M_amb @ B).tocsr(),
        frame=frames,
        base=sphere_map,
        alpha=alpha,
        kind="tangent",
    )


def normal_second_variation(sphere_map: SphereMap, alpha: float = 1.0,
                            density_floor: float = 1e-6) -> SecondVariationPencil:
    """Pencil restricted to fields orthogonal to the map and its image plane.

    Requires an immersed map: elements whose image is (numerically) rank
    deficient are collected into a DegenerateElementsError.
    """
    C = sphere_map.n + 1
    if C - 3 <= 0:
        raise PreconditionError("normal bundle is trivial for n < 3")
    g, _ = element_density_area_one(sphere_map)
    low = g < density_floor * float(np.mean(g))
    acc, degenerate = _image_tangent_planes(sphere_map)
    if np.any(low | degenerate):
        bad = np.where(low | degenerate)[0]
        raise DegenerateElementsError(
            f"{len(bad)} elements are not immersed", elements=bad.tolist()
        )
    vals = sphere_map.values
    proj_full = acc / np.trace(acc, axis1=1, axis2=2)[:, None, None]
    # admissible subspace: orthogonal to span{f, image plane}
    killed = proj_full + vals[:, :, None] * vals[:, None, :]
    _, svals, vt = np.linalg.svd(np.eye(C)[None] - killed)
    frames = vt[:, : C - 3, :].transpose(0, 2, 1)
    B = _frame_matrix(frames)
    H = constrained_hessian(sphere_map, alpha)
    M = assemble_pencil(sphere_map.mesh).M
    M_amb = sp.kron(M, sp.eye(C, format="csr"), format="csr")
    return SecondVariationPencil(
        H=(B.T @ H @ B).tocsr(),
        M=(B.T @ M_amb @ B).tocsr(),
        frame=frames,
        base=sphere_map,
        alpha=alpha,
        kind="normal",
    )


def pencil_eigenvalues(H: sp.spmatrix, M: sp.spmatrix, k: int,
                       sigma: float = -8.0):
    """k smallest eigenvalues of H v = lambda M v (M positive definite)."""
    k = min(k, H.shape[0] - 1)
    rng = np.random.default_rng(_EIG_SEED)
    v0 = rng.standard_normal(H.shape[0])
    try:
        vals = eigsh(H.tocsc(), k=k, M=M.tocsc(), sigma=sigma, which="LM", v0=v0,
                     return_eigenvectors=False, maxiter=5000)
        return np.sort(vals), True
    except ArpackNoConvergence as exc:
        vals = np.sort(exc.eigenvalues) if exc.eigenvalues is not None else np.array([])
        return vals, False


def morse_index_nullity(pencil: SecondVariationPencil, k: int,
                        tau: float) -> SpectrumReport:
    """Classify the k lowest pencil eigenvalues by the threshold tau."""
    if k < 1:
        raise PreconditionError("need k >= 1 eigenvalues")
    vals, converged = pencil_eigenvalues(pencil.H, pencil.M, k)
    index = int(np.count_nonzero(vals < -tau))
    nullity = int(np.count_nonzero(np.abs(vals) <= tau))
    return SpectrumReport(
        eigenvalues=vals,
        index=index,
        nullity=nullity,
        tau=tau,
        k=k,
        converged=converged,
    )


def expected_equator_counts(n: int):
    """Analytic index and nullity of the totally geodesic sphere in S^n.

    Each of the n - 2 normal directions contributes one negative direction
    (eigenvalue -2) and three null directions (the tilt rotations); the
    conformal reparametrizations contribute six more null directions.
    """
    return n - 2, 3 * (n - 2) + 6


def calibrate_tau(mesh: SphereMesh, n: int, alpha: float = 1.0,
                  extra: int = 8) -> float:
    """Nullity threshold from the equator benchmark on this mesh level.

    The analytically null cluster and the first analytically nonzero
    eigenvalue are separated by orders of magnitude at practical levels;
    tau is their geometric mean, cached per (level, n).
    """
    key = (mesh.subdivision_level, n, round(alpha, 12))
    if key in _tau_cache:
        return _tau_cache[key]
    index, nullity = expected_equator_counts(n)
    pencil = assemble_second_variation(equator_map(mesh, n), alpha)
    vals, converged = pencil_eigenvalues(pencil.H, pencil.M, index + nullity + extra)
    if not converged:
        raise PreconditionError("eigensolver did not converge during calibration")
    null_block = np.abs(vals[index:index + nullity])
    first_nonzero = abs(vals[index + nullity])
    largest_null = float(np.max(null_block))
    if largest_null >= first_nonzero:
        raise PreconditionError(
            "null cluster is not separated at this level; cannot calibrate tau"
        )
    tau = math.sqrt(largest_null * first_nonzero)
    _tau_cache[key] = tau
    return tau


# -- weight invariance of scalar pencils ---------------------------------------

def scalar_schrodinger_pencil(mesh: SphereMesh, potential: float):
    """Benchmark scalar pencil (K - potential * M, M)."""
    pencil = assemble_pencil(mesh)
    return (pencil.K - potential * pencil.M).tocsr(), pencil.M


def weighted_scalar_pencil(mesh: SphereMesh, potential: float,
                           vertex_weight: np.ndarray):
    """Both bilinear forms of the benchmark pencil weighted by mu^2.

    Weighting the integrands of  a(u, v) = int (-Lap u - phi u) v dA  and
    b(u, v) = int u v dA  by a positive factor mu^2 and integrating by
    parts gives

        a_w(u, v) = int [mu^2 grad u . grad v + v grad u . grad mu^2
                         - phi u v mu^2] dA,     b_w(u, v) = int u v mu^2 dA,

    a nonsymmetric pencil whose continuum spectrum equals the unweighted
    one exactly (the weight can be absorbed into the test function).  The
    weight is P1-interpolated from the vertex values, so discretely the
    spectra differ by quadrature error only.
    """
    w = np.asarray(vertex_weight, dtype=float)
    if w.shape != (mesh.vertex_count,) or np.min(w) <= 0:
        raise PreconditionError("weight must be positive per vertex")
    faces = mesh.faces
    v = mesh.vertex_count
    elem_w = w[faces].mean(axis=1)
    rows = np.repeat(faces, 3, axis=1).reshape(-1)
    cols = np.tile(faces, (1, 3)).reshape(-1)
    k_vals = (elem_w[:, None, None] * mesh.face_stiffness).transpose(0, 2, 1)
    K_w = sp.coo_matrix((k_vals.reshape(-1), (rows, cols)), shape=(v, v)).tocsr()
    m_local = (np.ones((3, 3)) + np.eye(3)) / 12.0
    m_vals = ((elem_w * mesh.face_areas)[:, None, None] * m_local).reshape(-1)
    M_w = sp.coo_matrix((m_vals, (rows, cols)), shape=(v, v)).tocsr()
    M_w = (M_w + M_w.T) * 0.5
    # advection block: G[i, j] = sum_T (grad lam_j . grad mu^2)_T * A_T / 3
    p = mesh.vertices[faces]
    e = np.empty_like(p)
    e[:, 0] = p[:, 2] - p[:, 1]
    e[:, 1] = p[:, 0] - p[:, 2]
    e[:, 2] = p[:, 1] - p[:, 0]
    nrm = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    twice_area = np.linalg.norm(nrm, axis=1)
    nhat = nrm / twice_area[:, None]
    grad_lam = np.cross(nhat[:, None, :], e) / twice_area[:, None, None]
    grad_w = np.einsum("fi,fic->fc", w[faces], grad_lam)
    gj = np.einsum("fjc,fc->fj", grad_lam, grad_w)
    g_vals = (mesh.face_areas[:, None, None] / 3.0) * np.ones((1, 3, 1)) * gj[:, None, :]
    G = sp.coo_matrix((g_vals.reshape(-1), (rows, cols)), shape=(v, v)).tocsr()
    return (K_w + G - potential * M_w).tocsr(), M_w


def scaling_invariance_check(mesh: SphereMesh, potential: float,
                             vertex_weight: np.ndarray, k: int = 10,
                             mu_min: float = 1e-8) -> float:
    """Spectral distance between a scalar pencil and its weighted version.

    Returns the maximum per-eigenvalue discrepancy between the k smallest
    eigenvalues of the benchmark pencil and of its mu^2-weighted form,
    each difference normalized by max(|lambda|, 1).  Exact equality holds
    only in the continuum; the discrepancy must vanish under refinement.
    """
    w = np.asarray(vertex_weight, dtype=float)
    if np.min(w) < mu_min:
        raise PreconditionError("weight must be bounded away from zero")
    # the baseline runs through the identical assembly and solver path with a
    # unit weight, so a unit input weight yields exact equality
    A0, B0 = weighted_scalar_pencil(mesh, potential, np.ones(mesh.vertex_count))
    A1, B1 = weighted_scalar_pencil(mesh, potential, w)
    k = min(k, mesh.vertex_count - 4)
    sigma = -potential - 3.0
    rng = np.random.default_rng(_EIG_SEED)
    v0 = rng.standard_normal(mesh.vertex_count)
    # a buffer plus a generous Krylov size so degenerate clusters resolve fully
    k_req = min(k + 3, mesh.vertex_count - 2)
    ncv = min(mesh.vertex_count, max(6 * k_req, 60))

    def low_spectrum(A, B):
        lam = eigs(A.tocsc(), k=k_req, M=B.tocsc(), sigma=sigma, which="LM",
                   v0=v0, ncv=ncv, return_eigenvectors=False)
        return np.sort(lam.real)[:k]

    vals0 = low_spectrum(A0, B0)
    vals1 = low_spectrum(A1, B1)
    denom = np.maximum(np.abs(vals0), 1.0)
    return float(np.max(np.abs(vals0 - vals1) / denom))


# -- logarithmic cutoff -----------------------------------------------------------

@dataclass(frozen=True)
class CutoffProfile:
    """Radial cutoff: 0 inside r <= eps^2, log-linear ramp up to 1 at r = eps."""

    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise PreconditionError("epsilon must lie in (0, 1)")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        eps = self.epsilon
        ramp = 2.0 - np.log(np.maximum(r, 1e-300)) / math.log(eps)
        out = np.where(r <= eps * eps, 0.0, np.where(r >= eps, 1.0, ramp))
        return float(out) if np.ndim(r) == 0 else out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        eps = self.epsilon
        inside = (r > eps * eps) & (r < eps)
        out = np.where(inside, -1.0 / (np.maximum(r, 1e-300) * math.log(eps)), 0.0)
        return float(out) if np.ndim(r) == 0 else out


def cutoff_profile(epsilon: float) -> CutoffProfile:
    return CutoffProfile(epsilon)


def cutoff_dirichlet_energy(epsilon: float) -> float:
    """Flat Dirichlet energy of the cutoff: integral of (d phi/dr)^2 r dr dtheta.

    Evaluated by quadrature on the ramp region; equals -2 pi / log(eps).
    """
    profile = cutoff_profile(epsilon)
    value, _ = quad(lambda r: profile.derivative(r) ** 2 * r,
                    epsilon**2, epsilon, limit=200)
    return 2.0 * math.pi * value


def index_energy_diagnostic(records) -> float:
    """Smallest (index + 1)/energy ratio over measured critical points.

    ``records`` is a nonempty iterable of (energy, index) pairs or of
    objects exposing those attributes.
    """
    ratios = []
    for item in records:
        if isinstance(item, tuple):
            energy, index = item
        else:
            energy, index = item.energy, item.index
        if energy <= 0:
            raise PreconditionError("diagnostic needs positive energies")
        ratios.append((index + 1) / energy)
    if not ratios:
        raise PreconditionError("diagnostic needs at least one record")
    return min(ratios)
