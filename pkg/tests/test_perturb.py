import math

import numpy as np
import pytest

from cbstab.defect import mult_defect, random_near_isomorphism, star_map
from cbstab.errors import HypothesisNotMet, NoConvergence
from cbstab.matcore import BlockAlgebra, op_norm, random_contraction, random_element
from cbstab.opspace import (
    BilMap,
    LinMap,
    bilinear_h_norm,
    bilinear_upper_bound,
    cb_norm,
    cb_upper_bound,
    random_automorphism,
    random_linmap,
)
from cbstab.perturb import (
    IterationTrace,
    Multiplication,
    coboundary_1,
    coboundary_2,
    correct_multiplication,
    derivation_dimension,
    homomorphism_residual,
    induced_multiplication,
    multiplicative_residual,
    plant_multiplication,
    quotient_inverse_norm,
    recover_isomorphism,
    solve_coboundary,
    stability_surjectivity,
)

M2 = BlockAlgebra((2,))
M23 = BlockAlgebra((2, 3))


def coord_norm(t):
    return float(np.linalg.norm(t.reshape(t.shape[0], -1), 2))


def test_coboundary_of_identity_is_product():
    D = coboundary_1(LinMap.identity(M23))
    x, y = random_element(M23, 1), random_element(M23, 2)
    np.testing.assert_allclose(D(x, y).coords, (x @ y).coords, atol=1e-12)


def test_inner_derivation_is_cocycle():
    a = random_element(M23, 3)
    h = LinMap.from_function(M23, M23, lambda x: a @ x - x @ a)
    assert coord_norm(coboundary_1(h).tensor) < 1e-12


def test_complex_property():
    h = random_linmap(M23, M23, 4)
    assert coord_norm(coboundary_2(coboundary_1(h)).tensor) < 1e-12
    assert coord_norm(coboundary_2(BilMap.multiplication(M23)).tensor) == 0


def test_second_coboundary_quadratic_for_associative_perturbation():
    m, _ = plant_multiplication(M23, 1e-2, seed=5)
    D = BilMap(M23, M23, m.defect_tensor())
    dD = coboundary_2(D)
    nD = bilinear_upper_bound(D)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, y, z = (random_contraction(M23, rng) for _ in range(3))
        scale = op_norm(x) * op_norm(y) * op_norm(z)
        assert op_norm(dD(x, y, z)) <= 2 * nD * nD * scale + 1e-14


def test_solve_coboundary_cases():
    h, res = solve_coboundary(BilMap(M23, M23, np.zeros((13, 13, 13))))
    assert np.abs(h.matrix).max() == 0 and res == 0
    h0 = random_linmap(M23, M23, 6)
    D = coboundary_1(h0)
    h, res = solve_coboundary(D)
    assert res < 1e-10
    assert coord_norm(coboundary_1(h).tensor - D.tensor) < 1e-10
    rng = np.random.default_rng(7)
    R = BilMap(M23, M23, rng.standard_normal((13, 13, 13)))
    _, res = solve_coboundary(R)
    assert res > 1e-3
    assert coord_norm(coboundary_2(R).tensor) > 1e-3


def test_derivation_dimension():
    # inner derivations: dim A minus dim of the centre
    assert derivation_dimension(M23) == 11
    assert derivation_dimension(M2) == 3


def test_correct_native_is_identity():
    Phi, trace = correct_multiplication(Multiplication.native(M23))
    np.testing.assert_array_equal(Phi.matrix, np.eye(13))
    assert trace.iterations == 0 and trace.eps == [0.0]


@pytest.mark.parametrize("seed", range(4))
def test_plant_and_recover(seed):
    m, Phi0 = plant_multiplication(M23, 1e-2, seed)
    assert cb_upper_bound(Phi0 - LinMap.identity(M23)) == pytest.approx(1e-2)
    Phi, trace = correct_multiplication(m)
    assert trace.iterations <= 8
    assert multiplicative_residual(Phi, m) < 1e-10
    assert trace.max_ratio is not None and trace.max_ratio <= 20
    assert trace.series_csv().startswith("i,eps,ratio\n")
    assert '"eps"' in trace.to_json()


def test_hypothesis_and_no_convergence():
    m, _ = plant_multiplication(M23, 0.5, 1)
    with pytest.raises(HypothesisNotMet):
        correct_multiplication(m)
    m, _ = plant_multiplication(M23, 1e-2, 2)
    with pytest.raises(NoConvergence) as info:
        correct_multiplication(m, max_iter=1)
    assert isinstance(info.value.trace, IterationTrace)
    assert len(info.value.trace.eps) == 2


def test_non_associative_product_rejected():
    rng = np.random.default_rng(3)
    bad = BilMap(M23, M23, BilMap.multiplication(M23).tensor + 0.1 * rng.standard_normal((13, 13, 13)))
    with pytest.raises(HypothesisNotMet):
        Multiplication(M23, bad)


def test_induced_multiplication_examples():
    pi = random_automorphism(M23, 8)
    m = induced_multiplication(pi)
    assert np.abs(m.defect_tensor()).max() < 1e-13
    T = LinMap.identity(M23) + 1e-3 * random_linmap(M23, M23, 9)
    m = induced_multiplication(T)
    lhs = m.distance_h(restarts=4).lower
    rhs = cb_norm(T.inverse(), restarts=4).value * bilinear_h_norm(mult_defect(T), 3, restarts=4).value
    assert lhs <= rhs * (1 + 1e-6)


def test_induced_multiplication_associative():
    rng = np.random.default_rng(10)
    for _ in range(100):
        T = LinMap.identity(M23) + 0.05 * random_linmap(M23, M23, rng)
        assert induced_multiplication(T).assoc_residual(samples=5) < 1e-10


def test_recover_isomorphism_exact_input():
    pi0 = random_automorphism(M23, 11)
    pi, rep = recover_isomorphism(pi0, restarts=2)
    np.testing.assert_allclose(pi.matrix, pi0.matrix, atol=1e-10)
    assert rep.multiplicativity < 1e-10 and rep.selfadjointness < 1e-10 and rep.unitarity < 1e-10


@pytest.mark.parametrize("seed", range(3))
def test_recover_planted(seed):
    L, _ = random_near_isomorphism(M23, 1e-3, seed)
    pi, rep = recover_isomorphism(L, restarts=4, seed=seed)
    assert rep.multiplicativity < 1e-9 and rep.selfadjointness < 1e-9 and rep.unitarity < 1e-9
    assert rep.within_bound
    np.testing.assert_allclose(star_map(pi).matrix, pi.matrix, atol=1e-10)
    assert set(rep.to_dict()) >= set(rep.FIELDS) | {"trace", "within_bound"}


def test_surjectivity_examples():
    rng = np.random.default_rng(12)
    T = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
    K = quotient_inverse_norm(T)
    assert stability_surjectivity(T, T, K) == pytest.approx(K)
    u, s, vh = np.linalg.svd(T)
    S = T - (s[-1] / 2) * np.outer(u[:, -1], vh[len(s) - 1])
    assert np.linalg.norm(T - S, 2) == pytest.approx(1 / (2 * K))
    assert stability_surjectivity(T, S, K) == pytest.approx(2 * K)
    assert quotient_inverse_norm(S) == pytest.approx(2 * K)


def test_surjectivity_random_and_hypotheses():
    rng = np.random.default_rng(13)
    for _ in range(50):
        T = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
        K = quotient_inverse_norm(T)
        E = rng.standard_normal((3, 4))
        E *= 0.5 / (K * np.linalg.norm(E, 2))
        assert quotient_inverse_norm(T + E) <= stability_surjectivity(T, T + E, K) + 1e-6
    with pytest.raises(HypothesisNotMet):
        stability_surjectivity(T, T, 0.5 * K)
    with pytest.raises(HypothesisNotMet):
        stability_surjectivity(T, T + 2 * E, K)
    assert math.isinf(quotient_inverse_norm(np.zeros((2, 3))))


@pytest.mark.parametrize("seed", range(3))
def test_recovered_map_differs_from_planted_by_automorphism(seed):
    m, Phi0 = plant_multiplication(M23, 1e-2, seed)
    Phi, _ = correct_multiplication(m)
    assert homomorphism_residual(Phi @ Phi0.inverse()) < 1e-8


def test_star_compatible_product_gives_star_preserving_correction():
    G = random_linmap(M23, M23, 30)
    G = 0.5 * (G + star_map(G))
    Phi0 = LinMap.identity(M23) + (1e-2 / cb_upper_bound(G)) * G
    m = induced_multiplication(Phi0)
    assert m.star_residual() < 1e-10
    Phi, _ = correct_multiplication(m)
    rng = np.random.default_rng(1)
    for _ in range(50):
        x = random_element(M23, rng)
        assert op_norm(Phi(x.H) - Phi(x).H) <= 1e-8 * op_norm(x)
