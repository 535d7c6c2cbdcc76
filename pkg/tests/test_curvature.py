import numpy as np
import pytest

from spherelab.curvature import (
    ComplexPlane,
    CurvatureOperator,
    associated_real_plane,
    check_curvature_symmetries,
    complex_sectional_curvature,
    constant_curvature_operator,
    curvature_condition_d,
    is_half_isotropic,
    is_isotropic,
    pinch_bounds,
    pinched_operator,
    product_spheres_operator,
    real_sectional_curvature,
    verify_pinch_implication,
)
from spherelab.errors import PreconditionError

E4 = np.eye(4)


def dense_contraction_oracle(op, z, w):
    """Independent evaluation through an explicit wedge basis."""
    n = op.n
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    wedge = np.array([z[i] * w[j] - z[j] * w[i] for i, j in pairs])
    big = np.empty((len(pairs), len(pairs)))
    for a, (i, j) in enumerate(pairs):
        for b, (k, l) in enumerate(pairs):
            big[a, b] = op.R[i, j, k, l]
    num = wedge @ big @ np.conj(wedge)
    den = np.vdot(z, z) * np.vdot(w, w) - np.vdot(w, z) * np.vdot(z, w)
    return float(num.real) / float(den.real)


def test_constant_curvature_value(rng):
    op = constant_curvature_operator(5, 1.0)
    plane = ComplexPlane(rng.standard_normal(5) + 1j * rng.standard_normal(5),
                         rng.standard_normal(5) + 1j * rng.standard_normal(5))
    assert complex_sectional_curvature(op, plane) == pytest.approx(1.0, abs=1e-12)


def test_constant_curvature_scales(rng):
    op = constant_curvature_operator(4, -0.7)
    plane = ComplexPlane(rng.standard_normal(4) + 1j * rng.standard_normal(4),
                         rng.standard_normal(4) + 1j * rng.standard_normal(4))
    assert complex_sectional_curvature(op, plane) == pytest.approx(-0.7, abs=1e-12)


def test_product_spheres_isotropic_plane_matches_oracle():
    op = product_spheres_operator()
    z = E4[0] + 1j * E4[1]
    w = E4[2] + 1j * E4[3]
    value = complex_sectional_curvature(op, ComplexPlane(z, w))
    assert value == pytest.approx(dense_contraction_oracle(op, z, w), abs=1e-12)
    assert value == pytest.approx(0.0, abs=1e-12)


def test_oracle_agreement_random_operator(rng):
    op = pinched_operator(5, 0.5, rng)
    for _ in range(5):
        z = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        w = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        plane = ComplexPlane(z, w)
        assert complex_sectional_curvature(op, plane) == pytest.approx(
            dense_contraction_oracle(op, z, w), abs=1e-10
        )


def test_degenerate_plane_rejected():
    op = constant_curvature_operator(4, 1.0)
    with pytest.raises(PreconditionError):
        ComplexPlane(E4[0] + 0j, 2.0 * E4[0] + 0j)
    # z, w independent over C but with vanishing Hermitian wedge do not occur;
    # a plane built from nearly parallel vectors trips the Gram check instead
    with pytest.raises(PreconditionError):
        complex_sectional_curvature(
            op, ComplexPlane(E4[0] + 1e-14j * E4[1], E4[0] * (1 + 1e-13) + 0j)
        )


def test_isotropy_predicates():
    assert is_isotropic(ComplexPlane(E4[0] + 1j * E4[1], E4[2] + 1j * E4[3]))
    half = ComplexPlane(E4[0] + 1j * E4[1], 2.0 * E4[2] + 3.0j * E4[3])
    assert is_half_isotropic(half)
    assert not is_isotropic(half)
    real_pair = ComplexPlane(E4[0] + 0j, E4[1] + 0j)
    assert not is_half_isotropic(real_pair)  # <z, z> = 1


def test_associated_real_plane():
    x, y = associated_real_plane(E4[0] + 1j * E4[1])
    assert np.allclose(x, E4[0]) and np.allclose(y, E4[1])
    theta = 0.6
    x, y = associated_real_plane((E4[0] + 1j * E4[1]) * np.exp(1j * theta))
    # a phase rotates the frame inside the same plane
    assert abs(np.dot(x, y)) < 1e-12
    assert abs(np.linalg.norm(x) - np.linalg.norm(y)) < 1e-12
    assert np.allclose(np.cross(x[:3], y[:3])[2], np.cross(E4[0][:3], E4[1][:3])[2])
    with pytest.raises(PreconditionError):
        associated_real_plane(E4[0] + 1j * E4[0])


def test_pinch_bounds_values():
    assert pinch_bounds(0.5) == pytest.approx((1.0 / 3.0, 7.0 / 6.0))
    assert pinch_bounds(1.0) == pytest.approx((1.0, 1.0))
    assert pinch_bounds(0.25) == pytest.approx((0.0, 1.25))
    with pytest.raises(PreconditionError):
        pinch_bounds(0.0)
    with pytest.raises(PreconditionError):
        pinch_bounds(1.5)


def test_pinch_bounds_monotone():
    deltas = np.linspace(0.05, 1.0, 20)
    lowers, uppers = zip(*(pinch_bounds(d) for d in deltas))
    assert all(a < b + 1e-15 for a, b in zip(lowers, lowers[1:]))
    assert all(a > b - 1e-15 for a, b in zip(uppers, uppers[1:]))


def test_plane_invariance_under_basis_change(rng):
    op = pinched_operator(4, 0.6, rng)
    z = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    k0 = complex_sectional_curvature(op, ComplexPlane(z, w))
    for _ in range(5):
        a, b, c, d = rng.standard_normal(4) + 1j * rng.standard_normal(4)
        if abs(a * d - b * c) < 1e-3:
            continue
        k1 = complex_sectional_curvature(
            op, ComplexPlane(a * z + b * w, c * z + d * w)
        )
        assert k1 == pytest.approx(k0, abs=1e-9)


def test_real_plane_reduces_to_sectional(rng):
    op = pinched_operator(5, 0.5, rng)
    u = rng.standard_normal(5)
    v = rng.standard_normal(5)
    k_complex = complex_sectional_curvature(op, ComplexPlane(u + 0j, v + 0j))
    assert k_complex == pytest.approx(real_sectional_curvature(op, u, v), abs=1e-10)


def test_verify_pinch_constant_curvature():
    rep = verify_pinch_implication(constant_curvature_operator(4, 1.0), 0.9,
                                   2000, rng_seed=7)
    assert rep.hypothesis_satisfied and rep.violations == 0
    rep = verify_pinch_implication(constant_curvature_operator(4, 0.6), 0.5,
                                   2000, rng_seed=7)
    assert rep.hypothesis_satisfied and rep.violations == 0
    assert rep.worst_margin > 0


def test_verify_pinch_random_operators():
    for seed in (3, 4):
        op = pinched_operator(5, 0.5, np.random.default_rng(seed))
        rep = verify_pinch_implication(op, 0.5, 5000, rng_seed=seed)
        assert rep.hypothesis_satisfied
        assert rep.violations == 0  # any violation is an algebra bug


def test_verify_pinch_hypothesis_gate():
    # curvature 0.3 lies below the delta = 0.5 band: pretest must trip
    rep = verify_pinch_implication(constant_curvature_operator(4, 0.3), 0.5,
                                   1000, rng_seed=1)
    assert not rep.hypothesis_satisfied
    assert rep.samples == 0


def test_verify_pinch_needs_dimension_four():
    op = CurvatureOperator(3, constant_curvature_operator(3, 1.0).R)
    with pytest.raises(PreconditionError):
        verify_pinch_implication(op, 0.5, 10, rng_seed=0)


def test_curvature_condition_d():
    unit = constant_curvature_operator(4, 1.0)
    assert curvature_condition_d(unit, 2, 500, rng_seed=5)
    assert not curvature_condition_d(unit, 1, 500, rng_seed=5)


def test_curvature_condition_product_grid_oracle():
    op = product_spheres_operator()
    sampled = curvature_condition_d(op, 3, 500, rng_seed=5)

    # deterministic grid oracle over rotations of the standard frame
    def grid_oracle():
        thetas = np.linspace(0.0, np.pi / 2, 5)
        for t1 in thetas:
            for t2 in thetas:
                c1, s1 = np.cos(t1), np.sin(t1)
                c2, s2 = np.cos(t2), np.sin(t2)
                frame = np.array(
                    [
                        [c1, 0, s1, 0],
                        [0, c2, 0, s2],
                        [-s1, 0, c1, 0],
                        [0, -s2, 0, c2],
                    ]
                )
                v = frame[0] + 1j * frame[1]
                w = frame[2] + 1j * frame[3]
                ki = complex_sectional_curvature(op, ComplexPlane(v, w))
                x, y = associated_real_plane(v)
                kr = real_sectional_curvature(op, x, y)
                if not (ki > kr / 3 and kr > 0):
                    return False
        return True

    assert sampled == grid_oracle() == False  # noqa: E712


def test_symmetry_projection(rng):
    raw = rng.standard_normal((4,) * 4)
    from spherelab.curvature import project_to_curvature_symmetries

    projected = project_to_curvature_symmetries(raw)
    check_curvature_symmetries(projected, tol=1e-10)
