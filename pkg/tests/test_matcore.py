import math

import numpy as np
import pytest

from cbstab.errors import NotInvertible, StructuralError
from cbstab.matcore import (
    AlgElement,
    BlockAlgebra,
    check_condition_C,
    find_violating_projection,
    haar_unitaries,
    load_element,
    min_singular_value,
    mul,
    op_norm,
    polar,
    random_element,
    random_invertible,
    random_projection,
    random_unitary,
    save_element,
    spectral_projection,
    unitary_distance_formula,
    unitary_distance_search,
)

M2 = BlockAlgebra((2,))
M23 = BlockAlgebra((2, 3))


def unit_matrix(i, j, n=2):
    e = np.zeros((n, n), complex)
    e[i, j] = 1
    return e


def power_iteration_norm(a, iters=2000):
    v = np.ones(a.shape[1], complex)
    for _ in range(iters):
        v = a.conj().T @ (a @ v)
        v /= np.linalg.norm(v)
    return math.sqrt(np.linalg.norm(a.conj().T @ (a @ v)))


def test_unit_law_and_matrix_units():
    x = random_element(M23, 1)
    np.testing.assert_array_equal(mul(M23.identity(), x).coords, x.coords)
    e = mul(M2.element([unit_matrix(0, 1)]), M2.element([unit_matrix(1, 0)]))
    np.testing.assert_array_equal(e.blocks[0], unit_matrix(0, 0))


def test_inverse_product_is_identity():
    x = random_invertible(M23, 3)
    assert op_norm(x @ x.inv() - M23.identity()) < 1e-12


def test_singular_inverse_raises():
    with pytest.raises(NotInvertible):
        M2.element([np.diag([1.0, 0.0])]).inv()


def test_op_norm_examples():
    assert op_norm(random_unitary(M23, 0)) == pytest.approx(1, abs=1e-12)
    assert op_norm(M2.element([np.diag([2, 0.5])])) == pytest.approx(2, abs=1e-15)
    rng = np.random.default_rng(5)
    for _ in range(5):
        x = random_element(M2, rng)
        assert abs(op_norm(x) - power_iteration_norm(x.blocks[0])) < 1e-10


def test_polar_examples():
    p = polar(M2.identity())
    assert p.distance_to_unitary == 0
    np.testing.assert_allclose(p.unitary_part.blocks[0], np.eye(2), atol=1e-15)
    np.testing.assert_allclose(p.positive_part.blocks[0], np.eye(2), atol=1e-15)
    assert polar(M2.element([np.diag([2, 0.5])])).distance_to_unitary == pytest.approx(1, abs=1e-12)
    assert polar(2 * M2.identity()).distance_to_unitary == pytest.approx(1, abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_polar_matches_formula_and_search(seed):
    x = random_invertible(M23, seed, max_cond=10)
    p = polar(x)
    f = unitary_distance_formula(x)
    assert p.distance_to_unitary == pytest.approx(f, abs=1e-12)
    assert op_norm(x - p.unitary_part) == pytest.approx(f, abs=1e-12)
    assert unitary_distance_search(x, seed=seed) == pytest.approx(f, abs=1e-6)


def test_search_on_diagonal_examples():
    assert unitary_distance_search(M2.element([np.diag([2, 0.5])])) == pytest.approx(1, abs=1e-6)
    assert unitary_distance_search(2 * M2.identity()) == pytest.approx(1, abs=1e-6)


def test_spectral_projection_examples():
    p = spectral_projection(M2.element([np.diag([0.1, 0.9])]), 0.5)
    np.testing.assert_allclose(p.blocks[0], np.diag([1, 0]), atol=1e-14)
    x = random_element(M23, 2)
    h = x.H @ x
    full = spectral_projection(h, op_norm(h))
    np.testing.assert_allclose(full.coords, M23.identity().coords, atol=1e-12)


def test_spectral_projection_random_hermitian():
    rng = np.random.default_rng(11)
    x = random_element(M23, rng)
    h = 0.5 * (x + x.H)
    p = spectral_projection(h, 0.1)
    assert op_norm(h @ p - p @ h) < 1e-10
    # h p <= lam p on the range of p
    for hb, pb in zip(h.blocks, p.blocks):
        w = np.linalg.eigvalsh(pb @ (0.1 * np.eye(len(pb)) - hb) @ pb)
        assert w.min() > -1e-10


def test_condition_C_examples():
    u = random_unitary(M23, 4)
    for s in range(10):
        assert check_condition_C(u, 1.0, random_projection(M23, s))
    x = M2.element([np.diag([1.0, 0.0])])
    assert not check_condition_C(x, 0.5, M2.element([np.diag([0.0, 1.0])]))


def test_condition_C_forward_direction():
    x = random_invertible(M23, 8, max_cond=20)
    x = x / op_norm(x)
    alpha = min_singular_value(x) ** 2
    rng = np.random.default_rng(0)
    assert all(check_condition_C(x, alpha, random_projection(M23, rng)) for _ in range(1000))


def test_violating_projection_examples():
    assert find_violating_projection(random_unitary(M23, 1), 1.0) is None
    p = find_violating_projection(M2.element([np.diag([1.0, 0.0])]), 0.3)
    np.testing.assert_allclose(p.blocks[0], np.diag([0, 1]), atol=1e-12)

    x = random_invertible(M2, 9, max_cond=20)
    x = x / op_norm(x)
    alpha = min_singular_value(x) ** 2 * 1.01
    p = find_violating_projection(x, alpha)
    assert p is not None
    # bottom spectral projection of x*x or x x*
    smin2 = min_singular_value(x) ** 2
    h = x.H @ x if np.allclose((x.H @ x @ p).coords, smin2 * p.coords, atol=1e-9) else x @ x.H
    np.testing.assert_allclose((h @ p).coords, smin2 * p.coords, atol=1e-9)


def test_random_unitary_and_determinism():
    u = random_unitary(M23, 3)
    assert op_norm(u.H @ u - M23.identity()) < 1e-12
    np.testing.assert_array_equal(random_unitary(M23, 3).coords, u.coords)
    np.testing.assert_array_equal(random_element(M23, 3).coords, random_element(M23, 3).coords)


def test_haar_trace_statistics(frozen):
    us = haar_unitaries(2, 10_000, np.random.default_rng(2024))
    mean = np.abs(np.trace(us, axis1=1, axis2=2)).mean()
    assert abs(mean - frozen["haar_mean_abs_trace_u2"]) <= 0.05


def test_json_round_trip(tmp_path):
    x = random_element(M23, 12)
    y = AlgElement.from_json(x.to_json())
    np.testing.assert_array_equal(x.coords, y.coords)
    save_element(x, tmp_path / "x.json")
    np.testing.assert_array_equal(load_element(tmp_path / "x.json").coords, x.coords)


def test_structural_errors():
    with pytest.raises(StructuralError):
        AlgElement(M23, [np.eye(2)])
    with pytest.raises(StructuralError):
        M2.element([np.eye(3)])
    with pytest.raises(StructuralError):
        M2.identity() + M23.identity()
    with pytest.raises(StructuralError):
        M2.element([np.array([[np.nan, 0], [0, 1]])])
