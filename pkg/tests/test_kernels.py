import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phdaegp import kernels
from phdaegp.benchmarks import circuit_system
from phdaegp.errors import ContractError
from phdaegp.kernels import GaussianKernelParams, IntertaskParams

finite = st.floats(-5, 5, allow_nan=False)
phis = st.floats(0.1, 5.0)


def points(n_max=6, d_max=3):
    return st.integers(1, d_max).flatmap(
        lambda d: st.integers(1, n_max).flatmap(
            lambda n: arrays(float, (n, d), elements=finite)))


# --- scalar kernel -----------------------------------------------------------

def test_kernel_identical_points_is_one():
    assert kernels.gaussian_kernel([0.3, -1.2], [0.3, -1.2], GaussianKernelParams(0.7)) == 1.0


def test_kernel_at_sqrt2_phi_is_inverse_e():
    phi = 1.7
    x = np.array([0.0, 0.0])
    xp = np.array([phi, phi])  # distance phi * sqrt(2)
    assert kernels.gaussian_kernel(x, xp, GaussianKernelParams(phi)) == pytest.approx(
        math.exp(-1.0), rel=1e-14)


def test_kernel_one_dimensional_value():
    value = kernels.gaussian_kernel(0.0, 3.0, GaussianKernelParams(1.0))
    assert value == pytest.approx(0.011108996538242306, rel=1e-12)


def test_kernel_dimension_mismatch():
    with pytest.raises(ContractError):
        kernels.gaussian_kernel([0.0, 1.0], [0.0], GaussianKernelParams(1.0))


@pytest.mark.parametrize("phi", [0.0, -1.0, float("nan"), float("inf")])
def test_invalid_length_scale(phi):
    with pytest.raises(ContractError):
        GaussianKernelParams(phi)


@given(x=arrays(float, 3, elements=finite), xp=arrays(float, 3, elements=finite), phi=phis)
def test_kernel_symmetric_and_bounded(x, xp, phi):
    p = GaussianKernelParams(phi)
    k = kernels.gaussian_kernel(x, xp, p)
    assert k == kernels.gaussian_kernel(xp, x, p)
    assert 0.0 <= k <= 1.0
    # strictly positive whenever the exponent does not underflow
    if np.sum((x - xp) ** 2) / (2 * phi ** 2) < 700:
        assert k > 0.0


def test_dphi_zero_distance():
    assert kernels.gaussian_kernel_dphi([1.0], [1.0], GaussianKernelParams(2.0)) == 0.0


def test_dphi_closed_form():
    # |x - x'|^2 = 2, phi = 1 -> 2 e^-1
    value = kernels.gaussian_kernel_dphi([0.0, 0.0], [1.0, 1.0], GaussianKernelParams(1.0))
    assert value == pytest.approx(2.0 * math.exp(-1.0), rel=1e-14)


def test_dphi_matches_central_differences_on_random_inputs():
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = rng.integers(1, 4)
        x, xp = rng.normal(size=d), rng.normal(size=d)
        phi = rng.uniform(0.3, 3.0)
        step = 1e-6 * phi
        fd = (kernels.gaussian_kernel(x, xp, GaussianKernelParams(phi + step))
              - kernels.gaussian_kernel(x, xp, GaussianKernelParams(phi - step))) / (2 * step)
        exact = kernels.gaussian_kernel_dphi(x, xp, GaussianKernelParams(phi))
        assert abs(fd - exact) <= 1e-5 * abs(exact) + 1e-12


def test_gram_matches_pointwise_kernel():
    rng = np.random.default_rng(0)
    X, Y = rng.normal(size=(5, 2)), rng.normal(size=(3, 2))
    p = GaussianKernelParams(0.8)
    G = kernels.gram(X, Y, p)
    ref = np.array([[kernels.gaussian_kernel(x, y, p) for y in Y] for x in X])
    np.testing.assert_allclose(G, ref, rtol=1e-14, atol=0)


# --- multi-task blocks -------------------------------------------------------

def test_intertask_rank_one_psd():
    T = IntertaskParams(np.array([1.0, -2.0, 0.5])).matrix()
    np.testing.assert_array_equal(T, T.T)
    eig = np.linalg.eigvalsh(T)
    assert eig[0] >= -1e-12
    assert np.linalg.matrix_rank(T, tol=1e-10) == 1


def test_intertask_negative_kappa_rejected():
    with pytest.raises(ContractError):
        IntertaskParams(np.ones(2), np.array([1.0, -0.1]))


def test_mt_block_unit_loading():
    p = GaussianKernelParams(1.0)
    x, xp = np.array([0.2]), np.array([0.9])
    blk = kernels.mt_kernel_block(x, xp, p, IntertaskParams(np.array([1.0, 0.0, 0.0])))
    expected = np.zeros((3, 3))
    expected[0, 0] = kernels.gaussian_kernel(x, xp, p)
    np.testing.assert_array_equal(blk, expected)


def test_mt_block_outer_product_at_zero_distance():
    blk = kernels.mt_kernel_block([1.0], [1.0], GaussianKernelParams(1.0),
                                  IntertaskParams(np.array([1.0, 2.0])))
    np.testing.assert_array_equal(blk, [[1.0, 2.0], [2.0, 4.0]])


def test_mt_block_matches_double_loop():
    rng = np.random.default_rng(1)
    v = rng.normal(size=4)
    x, xp = rng.normal(size=2), rng.normal(size=2)
    p = GaussianKernelParams(1.3)
    k = kernels.gaussian_kernel(x, xp, p)
    loop = np.empty((4, 4))
    for a in range(4):
        for b in range(4):
            loop[a, b] = k * v[a] * v[b]
    np.testing.assert_allclose(kernels.mt_kernel_block(x, xp, p, IntertaskParams(v)),
                               loop, rtol=1e-15)


def test_transformed_identity_and_zero():
    rng = np.random.default_rng(2)
    tasks = IntertaskParams(rng.normal(size=3))
    p = GaussianKernelParams(0.9)
    x, xp = rng.normal(size=2), rng.normal(size=2)
    base = kernels.mt_kernel_block(x, xp, p, tasks)
    np.testing.assert_array_equal(kernels.transformed_kernel_block(x, xp, p, tasks, np.eye(3)),
                                  base)
    np.testing.assert_array_equal(
        kernels.transformed_kernel_block(x, xp, p, tasks, np.zeros((3, 3))), np.zeros((3, 3)))


def test_transformed_circuit_structure():
    A = circuit_system().structure
    np.testing.assert_array_equal(A, [[-1, 1, 0], [1, -1, 1], [0, -1, 0]])
    v = np.ones(3)
    blk = kernels.transformed_kernel_block([0.5], [0.5], GaussianKernelParams(1.0),
                                           IntertaskParams(v), A)
    np.testing.assert_allclose(blk, A @ np.outer(v, v) @ A.T, rtol=0, atol=1e-15)


def test_transform_shape_check():
    with pytest.raises(ContractError):
        kernels.transformed_kernel_block([0.0], [0.0], GaussianKernelParams(1.0),
                                         IntertaskParams(np.ones(3)), np.eye(2))


def test_mixing_kernels():
    rng = np.random.default_rng(3)
    tasks = IntertaskParams(rng.normal(size=3))
    p = GaussianKernelParams(1.1)
    A = rng.normal(size=(3, 3))
    x, xp = rng.normal(size=2), rng.normal(size=2)
    base = kernels.mt_kernel_block(x, xp, p, tasks)
    left = kernels.mixing_kernel_block(x, xp, p, tasks, A, "left")
    right = kernels.mixing_kernel_block(x, xp, p, tasks, A, "right")
    np.testing.assert_allclose(left, A @ base, rtol=1e-14)
    np.testing.assert_allclose(right, base @ A.T, rtol=1e-14)
    # same point: symmetric base block, so the two sides are transposes
    same_l = kernels.mixing_kernel_block(x, x, p, tasks, A, "left")
    same_r = kernels.mixing_kernel_block(x, x, p, tasks, A, "right")
    np.testing.assert_allclose(same_l, same_r.T, rtol=1e-15)
    for side in ("left", "right"):
        np.testing.assert_array_equal(
            kernels.mixing_kernel_block(x, xp, p, tasks, np.eye(3), side), base)
    with pytest.raises(ContractError):
        kernels.mixing_kernel_block(x, xp, p, tasks, A, "both")


@given(seed=st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50)
def test_transformed_block_inverts(seed):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(1, 5))
    A = rng.normal(size=(D, D)) + 3 * np.eye(D)
    tasks = IntertaskParams(rng.normal(size=D))
    p = GaussianKernelParams(float(rng.uniform(0.3, 2)))
    x, xp = rng.normal(size=2), rng.normal(size=2)
    kjr = kernels.transformed_kernel_block(x, xp, p, tasks, A)
    Ainv = np.linalg.inv(A)
    base = kernels.mt_kernel_block(x, xp, p, tasks)
    np.testing.assert_allclose(Ainv @ kjr @ Ainv.T, base, rtol=1e-12,
                               atol=1e-12 * np.max(np.abs(base)))


# --- assembly ----------------------------------------------------------------

def test_assemble_single_point_is_block():
    tasks = IntertaskParams(np.array([1.0, -1.0]))
    p = GaussianKernelParams(1.0)

    def fn(a, b):
        return kernels.mt_kernel_block(a, b, p, tasks)

    K = kernels.assemble([[0.2]], [[0.7]], fn)
    np.testing.assert_array_equal(K.entries, fn(np.array([0.2]), np.array([0.7])))
    assert (K.n_rows, K.n_cols, K.n_tasks) == (1, 1, 2)


def test_assemble_two_points_hand_kronecker():
    X = np.array([[0.0], [1.0]])
    p = GaussianKernelParams(1.0)
    tasks = IntertaskParams(np.array([1.0, 0.0]))
    K = kernels.assemble(X, X, lambda a, b: kernels.mt_kernel_block(a, b, p, tasks))
    e = math.exp(-0.5)
    expected = np.array([[1, e, 0, 0], [e, 1, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]])
    np.testing.assert_allclose(K.entries, expected, rtol=1e-15, atol=0)


def test_assemble_task_major_layout():
    X = np.array([[0.0], [0.5], [2.0]])
    Y = np.array([[0.1], [1.0]])
    p = GaussianKernelParams(0.7)
    tasks = IntertaskParams(np.array([1.0, 2.0, -1.0]))
    K = kernels.assemble(X, Y, lambda a, b: kernels.mt_kernel_block(a, b, p, tasks))
    T = tasks.matrix()
    for j in range(3):
        for jp in range(3):
            for i in range(3):
                for ip in range(2):
                    assert K.entries[j * 3 + i, jp * 2 + ip] == pytest.approx(
                        T[j, jp] * kernels.gaussian_kernel(X[i], Y[ip], p), rel=1e-14)
    np.testing.assert_array_equal(K.block(1, 2), K.entries[3:6, 4:6])


def test_assemble_rejects_empty():
    with pytest.raises(ContractError):
        kernels.assemble(np.zeros((0, 1)), [[0.0]], lambda a, b: np.eye(1))


@given(X=points(), seed=st.integers(0, 10 ** 6), phi=phis)
@settings(max_examples=60, deadline=None)
def test_assemble_matches_kronecker_oracle(X, seed, phi):
    rng = np.random.default_rng(seed)
    D = int(rng.integers(1, 4))
    tasks = IntertaskParams(rng.normal(size=D))
    A = rng.normal(size=(D, D))
    p = GaussianKernelParams(phi)
    Y = rng.normal(size=(3, X.shape[1]))
    slow = kernels.assemble(X, Y, lambda a, b: kernels.transformed_kernel_block(
        a, b, p, tasks, A)).entries
    fast = kernels.assemble_separable(X, Y, p, A @ tasks.matrix() @ A.T).entries
    oracle = np.kron(A @ tasks.matrix() @ A.T, kernels.gram(X, Y, p))
    assert np.max(np.abs(slow - oracle)) <= 1e-14 * max(1.0, np.max(np.abs(oracle)))
    np.testing.assert_array_equal(fast, oracle)


@given(seed=st.integers(0, 10 ** 6))
@settings(max_examples=40, deadline=None)
def test_assembled_multitask_matrix_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    N, D, d = int(rng.integers(1, 21)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
    X = rng.normal(size=(N, d))
    p = GaussianKernelParams(float(rng.uniform(0.2, 3.0)))
    tasks = IntertaskParams(rng.normal(size=D))
    K = kernels.assemble(X, X, lambda a, b: kernels.mt_kernel_block(a, b, p, tasks)).entries
    scale = max(np.max(np.abs(K)), 1e-300)
    assert np.max(np.abs(K - K.T)) <= 1e-12 * scale
    eig = np.linalg.eigvalsh(K)
    assert eig[0] >= -1e-10 * max(eig[-1], 0.0) - 1e-300
