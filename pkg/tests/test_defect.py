import math

import numpy as np
import pytest

from cbstab.defect import (
    DefectReport,
    check_iterated_defect,
    defmult_bounds,
    iterated_defect,
    mu,
    mu_from_norms,
    mult_defect,
    random_near_isomorphism,
    star_map,
    symmetrize,
    unitize,
    unitize_certified,
    verify_defmult,
)
from cbstab.errors import HypothesisNotMet, NotInvertible
from cbstab.matcore import BlockAlgebra, op_norm, random_contraction, random_element, random_unitary
from cbstab.opspace import LinMap, bilinear_h_norm, cb_norm, random_automorphism, random_linmap

M2 = BlockAlgebra((2,))
M23 = BlockAlgebra((2, 3))


def normalised_near_isomorphism(eps, seed):
    """``L / ||L||_cb`` together with ``delta = ||(L/||L||)^-1||_cb - 1``."""
    L, _ = random_near_isomorphism(M23, eps, seed)
    L = (1 / cb_norm(L, restarts=4, seed=seed).value) * L
    return L, cb_norm(L.inverse(), restarts=4, seed=seed).value - 1


def test_mult_defect_of_homomorphism_is_zero():
    pi = random_automorphism(M23, 1)
    assert np.abs(mult_defect(pi).tensor).max() < 1e-14


def test_mult_defect_of_scaled_identity():
    D = mult_defect(2 * LinMap.identity(M2))
    a, b = random_element(M2, 1), random_element(M2, 2)
    np.testing.assert_allclose(D(a, b).coords, (-2 * (a @ b)).coords, atol=1e-13)


def test_mult_defect_matches_pointwise():
    T = random_linmap(M23, M23, 3)
    D = mult_defect(T)
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = random_contraction(M23, rng), random_contraction(M23, rng)
        assert op_norm(D(a, b) - (T(a @ b) - T(a) @ T(b))) < 1e-12


def test_star_map_examples():
    pi = random_automorphism(M23, 4)
    np.testing.assert_allclose(star_map(pi).matrix, pi.matrix, atol=1e-14)
    v, w = random_element(M23, 5), random_element(M23, 6)
    T = LinMap.from_function(M23, M23, lambda x: v @ x @ w)
    x = random_element(M23, 7)
    np.testing.assert_allclose(star_map(T)(x).coords, (w.H @ x @ v.H).coords, atol=1e-12)
    G = random_linmap(M23, M23, 8)
    np.testing.assert_array_equal(star_map(star_map(G)).matrix, G.matrix)


def test_mu_examples(frozen):
    assert mu_from_norms(1.0, 1.1) == pytest.approx(frozen["mu_norm1_inv1p1"], abs=1e-15)
    assert mu(random_automorphism(M23, 2), restarts=2) == pytest.approx(0, abs=1e-9)
    with pytest.raises(HypothesisNotMet):
        mu_from_norms(1.2, 1.2)


@pytest.mark.parametrize("delta", [1e-8, 1e-4, 1e-2, 0.1])
def test_mu_of_normalised_unital_map_exceeds_two_delta(delta, frozen):
    s = (1 + delta) / math.sqrt(2 - (1 + delta) ** 2)
    m = mu_from_norms(s, 1 + delta)
    # leading term is 4 delta, growing to about 6.5 delta at 1/10
    assert 3.9 * delta < m < 7 * delta
    if delta == 1e-8:
        assert m == pytest.approx(frozen["mu_S_1e-8"], rel=1e-7)


def test_unitize_examples():
    pi = random_automorphism(M23, 9)
    np.testing.assert_allclose(unitize(pi).matrix, pi.matrix, atol=1e-13)
    c = M23.element([2 * np.eye(2), 3j * np.eye(3)])
    L = LinMap.from_function(M23, M23, lambda x: c @ pi(x))
    np.testing.assert_allclose(unitize(L).matrix, pi.matrix, atol=1e-13)
    with pytest.raises(NotInvertible):
        unitize(LinMap(M23, M23, np.zeros((13, 13))))


def test_unit_image_within_bound():
    L, delta = normalised_near_isomorphism(1e-4, 3)
    inv_norm = op_norm(L(M23.identity()).inv())
    assert inv_norm <= (1 + delta) / math.sqrt(2 - (1 + delta) ** 2) + 1e-6
    S, got, bound = unitize_certified(L, restarts=4)
    assert got == pytest.approx(inv_norm) and got <= bound + 1e-9
    assert op_norm(S(M23.identity()) - M23.identity()) < 1e-12


def test_symmetrize_examples():
    pi = random_automorphism(M23, 10)
    np.testing.assert_allclose(symmetrize(pi).matrix, pi.matrix, atol=1e-14)
    S = unitize(random_near_isomorphism(M23, 1e-3, 11)[0])
    T = symmetrize(S)
    np.testing.assert_allclose(star_map(T).matrix, T.matrix, atol=1e-15)
    half = 0.5 * cb_norm(S - star_map(S), restarts=4).value
    assert cb_norm(T - S, restarts=4).value == pytest.approx(half, rel=1e-9)


@pytest.mark.parametrize("seed", range(3))
def test_selfadjointness_defect_below_ten_sqrt_delta(seed):
    L, delta = normalised_near_isomorphism(1e-4, seed)
    assert delta <= 1 / 200
    S = unitize(L)
    assert cb_norm(S - star_map(S), restarts=4).lower <= 10 * math.sqrt(delta)


def test_verify_defmult_on_isomorphism():
    rep = verify_defmult(random_automorphism(M23, 12), restarts=2)
    assert rep.mult_defect.value < 1e-9 and rep.sa_defect.value < 1e-9
    assert rep.bound_mult < 1e-5 and rep.bound_sa < 1e-5
    assert rep.satisfied


@pytest.mark.parametrize("seed", range(4))
def test_verify_defmult_random(seed):
    L, _ = random_near_isomorphism(M23, 1e-4, seed)
    rep = verify_defmult(unitize(symmetrize(L)), restarts=4, seed=seed, max_iter=100)
    assert rep.satisfied
    assert rep.csv_header().strip().split(",") == list(DefectReport.FIELDS)
    assert len(rep.csv_row().strip().split(",")) == len(DefectReport.FIELDS)
    assert '"satisfied_mult"' in rep.to_json()


def test_verify_defmult_needs_unital_map():
    with pytest.raises(HypothesisNotMet):
        verify_defmult(2 * LinMap.identity(M2), restarts=1)


@pytest.mark.parametrize("seed", range(3))
def test_pipeline_defect_below_180_sqrt_delta(seed):
    L, delta = normalised_near_isomorphism(1e-4, 20 + seed)
    T = symmetrize(unitize(L))
    lhs = cb_norm(T.inverse(), restarts=4).value * bilinear_h_norm(mult_defect(T), 3, restarts=4).value
    assert lhs <= 180 * math.sqrt(delta)


def test_defmult_bounds_at_isometry():
    assert defmult_bounds(1.0, 0.0) == (0.0, 0.0)


def test_iterated_defect():
    pi = random_automorphism(M23, 13)
    ev, bound = iterated_defect(pi, 3, restarts=2)
    xs = [random_element(M23, s) for s in range(3)]
    assert op_norm(ev(*xs)) < 1e-12 and bound < 1e-9
    S = unitize(random_near_isomorphism(M23, 1e-3, 14)[0])
    ev2, _ = iterated_defect(S, 2, defect_norm=1.0, norm_S=1.0)
    D = mult_defect(S)
    np.testing.assert_allclose(ev2(xs[0], xs[1]).coords, D(xs[0], xs[1]).coords, atol=1e-12)
    assert check_iterated_defect(S, 3, samples=500, seed=1) <= 1e-6
    with pytest.raises(ValueError):
        iterated_defect(S, 1)


def test_conjugation_star_preserving():
    u = random_unitary(M23, 15)
    T = LinMap.from_function(M23, M23, lambda x: u @ x @ u.H)
    np.testing.assert_allclose(star_map(T).matrix, T.matrix, atol=1e-14)
