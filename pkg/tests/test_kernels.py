import numpy as np
import pytest

from mfccsynth import kernels
from mfccsynth.errors import ContractError
from mfccsynth.kernels import py_ref


def smooth_autocorrelation(rng, order, n_points=512):
    """Random positive smooth spectrum -> valid autocorrelation lags."""
    env = np.exp(rng.standard_normal(8) @ np.cos(
        np.outer(np.arange(8), np.linspace(0, np.pi, n_points // 2 + 1))
    ) * 0.5)
    power = np.concatenate([env, env[-2:0:-1]]) ** 2
    r = np.fft.ifft(power).real
    return r[: order + 1]


def test_levinson_first_order_analytic():
    a, err = kernels.levinson([1.0, 0.9, 0.81], 1, condition=0.0)
    assert abs(a[1] - (-0.9)) < 1e-12
    assert abs(err - 0.19) < 1e-12


def test_levinson_white_input():
    r = np.zeros(11)
    r[0] = 1.0
    a, err = kernels.levinson(r, 10)
    assert np.array_equal(a[1:], np.zeros(10))
    assert abs(err - (1.0 + 1e-6)) < 1e-15


def test_levinson_recovers_ar2():
    # poles at 0.9 exp(+-j pi/4): A(z) = 1 - 1.2728 z^-1 + 0.81 z^-2
    true_a = np.array([1.0, -2 * 0.9 * np.cos(np.pi / 4), 0.81])
    grid = 1 << 16
    w = 2 * np.pi * np.arange(grid) / grid
    aw = true_a[0] + true_a[1] * np.exp(-1j * w) + true_a[2] * np.exp(-2j * w)
    power = 1.0 / np.abs(aw) ** 2
    r = np.fft.ifft(power).real
    a, err = kernels.levinson(r[:3], 2)
    assert np.max(np.abs(a - true_a)) < 1e-3


def test_levinson_matches_direct_toeplitz_solve():
    rng = np.random.default_rng(17)
    order = 30
    for _ in range(20):
        r = smooth_autocorrelation(rng, order)
        a, err = kernels.levinson(r, order)
        rc = r.copy()
        rc[0] *= 1.0 + 1e-6
        toep = np.array([[rc[abs(i - j)] for j in range(order)] for i in range(order)])
        direct = np.linalg.solve(toep, -rc[1 : order + 1])
        assert np.max(np.abs(a[1:] - direct)) < 1e-8


def test_levinson_batch_matches_scalar():
    rng = np.random.default_rng(23)
    rows = np.stack([smooth_autocorrelation(rng, 12) for _ in range(8)])
    coeffs, errors = kernels.levinson_batch(rows, 12)
    for t in range(8):
        a, e = kernels.levinson(rows[t], 12)
        assert np.array_equal(coeffs[t], a)
        assert errors[t] == e


def test_levinson_rejects_bad_lags():
    with pytest.raises(ContractError):
        kernels.levinson([0.0, 0.1], 1)
    with pytest.raises(ContractError):
        kernels.levinson([1.0, np.nan], 1)
    with pytest.raises(ContractError):
        kernels.levinson([1.0, 0.5], 3)


def test_inverse_then_synthesis_is_identity():
    rng = np.random.default_rng(29)
    n = 4000
    nf = 10
    rows = np.stack([smooth_autocorrelation(rng, 30) for _ in range(nf)])
    coeffs, _ = kernels.levinson_batch(rows, 30)
    fos = np.minimum(np.arange(n) // (n // nf), nf - 1)
    x = rng.standard_normal(n)
    e = kernels.inverse_filter(x, coeffs, fos)
    y = kernels.synthesis_filter(e, coeffs, fos)
    assert np.max(np.abs(y - x)) < 1e-6


def test_identity_filter_passes_through():
    coeffs = np.zeros((1, 31))
    coeffs[0, 0] = 1.0
    x = np.sin(np.arange(100) * 0.3)
    fos = np.zeros(100, dtype=np.int64)
    assert np.array_equal(kernels.inverse_filter(x, coeffs, fos), x)
    assert np.array_equal(kernels.synthesis_filter(x, coeffs, fos), x)


def test_synthesis_impulse_response_is_geometric():
    coeffs = np.array([[1.0, -0.5]])
    e = np.zeros(20)
    e[0] = 1.0
    y = kernels.synthesis_filter(e, coeffs, np.zeros(20, dtype=np.int64))
    assert np.allclose(y, 0.5 ** np.arange(20), atol=1e-15)


def test_filter_argument_validation():
    coeffs = np.zeros((2, 3))
    coeffs[:, 0] = 1.0
    x = np.zeros(10)
    with pytest.raises(ContractError):
        kernels.inverse_filter(x, coeffs, np.zeros(9, dtype=np.int64))
    with pytest.raises(ContractError):
        kernels.inverse_filter(x, coeffs, np.full(10, 2, dtype=np.int64))
    bad = coeffs.copy()
    bad[0, 0] = 0.5
    with pytest.raises(ContractError):
        kernels.synthesis_filter(x, bad, np.zeros(10, dtype=np.int64))


@pytest.mark.skipif(kernels.BACKEND != "compiled", reason="compiled kernels unavailable")
def test_backends_are_bit_identical():
    from mfccsynth.kernels import _core

    rng = np.random.default_rng(31)
    for _ in range(10):
        order = int(rng.integers(2, 31))
        nf = int(rng.integers(1, 40))
        n = int(rng.integers(order + 1, 5000))
        rows = np.stack([smooth_autocorrelation(rng, order) for _ in range(nf)])
        a_py, e_py = py_ref.levinson_batch(rows, order)
        a_cy, e_cy = _core.levinson_batch(np.ascontiguousarray(rows), order)
        assert np.array_equal(a_py, a_cy)
        assert np.array_equal(e_py, e_cy)

        x = rng.standard_normal(n)
        fos = np.sort(rng.integers(0, nf, n)).astype(np.int64)
        f_py = py_ref.inverse_filter(x, a_py, fos)
        f_cy = _core.inverse_filter(x, np.ascontiguousarray(a_py), fos)
        assert np.array_equal(f_py, f_cy)

        s_py = py_ref.synthesis_filter(f_py, a_py, fos)
        s_cy = _core.synthesis_filter(f_py, np.ascontiguousarray(a_py), fos)
        assert np.array_equal(s_py, s_cy)
