from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import rand_plane
from wmadv.errors import DimensionError
from wmadv.transforms import WaveletPyramid, dct2, dwt2, idct2, idwt2

TOL = 1e-9


# --- wavelet: frozen small cases ---


def test_haar_2x2_frozen():
    pyr = dwt2(np.array([[1.0, 2.0], [3.0, 4.0]]), 1)
    assert pyr.ll[0, 0] == 5.0  # (1+2+3+4)/2
    lh, hl, hh = pyr.details[0]
    assert lh[0, 0] == -1.0
    assert hl[0, 0] == -2.0
    assert hh[0, 0] == 0.0


def test_haar_constant_dc_gain():
    plane = np.full((8, 8), 10.0)
    one = dwt2(plane, 1)
    assert np.allclose(one.ll, 20.0, atol=TOL)  # gain 2 per level
    three = dwt2(plane, 3)
    assert three.ll.shape == (1, 1)
    assert abs(three.ll[0, 0] - 80.0) < TOL  # 2**3 * 10
    for bands in three.details:
        for band in bands:
            assert np.max(np.abs(band)) < TOL


def test_haar_ramp_8x8_matches_matrix_oracle():
    plane = np.arange(64, dtype=np.float64).reshape(8, 8)
    pyr = dwt2(plane, 3)
    ll, details = oracles.haar_pyramid_matrix_form(plane, 3)
    assert np.max(np.abs(pyr.ll - ll)) < TOL
    for (lh, hl, hh), (olh, ohl, ohh) in zip(pyr.details, details):
        assert np.max(np.abs(lh - olh)) < TOL
        assert np.max(np.abs(hl - ohl)) < TOL
        assert np.max(np.abs(hh - ohh)) < TOL


def test_haar_matches_matrix_oracle_all_small_sizes(rng):
    for n in range(2, 17, 2):
        for levels in (1, 2, 3):
            if n % (1 << levels):
                continue
            plane = rand_plane(rng, n)
            pyr = dwt2(plane, levels)
            ll, details = oracles.haar_pyramid_matrix_form(plane, levels)
            assert np.max(np.abs(pyr.ll - ll)) < TOL
            for got, want in zip(pyr.details, details):
                for gb, wb in zip(got, want):
                    assert np.max(np.abs(gb - wb)) < TOL


def test_haar_subband_dims(rng):
    pyr = dwt2(rand_plane(rng, 64), 3)
    assert pyr.ll.shape == (8, 8)
    assert [d[0].shape for d in pyr.details] == [(32, 32), (16, 16), (8, 8)]


def test_haar_roundtrip_256(rng):
    plane = rand_plane(rng, 256)
    assert np.max(np.abs(idwt2(dwt2(plane, 3)) - plane)) < TOL


def test_haar_energy_preserved(rng):
    plane = rand_plane(rng, 32)
    pyr = dwt2(plane, 3)
    energy = float(np.sum(pyr.ll**2))
    for bands in pyr.details:
        for band in bands:
            energy += float(np.sum(band**2))
    ref = float(np.sum(plane**2))
    assert abs(energy - ref) / ref < 1e-6


@settings(max_examples=20, deadline=None)
@given(n=st.sampled_from([8, 16, 24, 32]), levels=st.integers(min_value=1, max_value=3), seed=st.integers(0, 2**31))
def test_haar_roundtrip_property(n, levels, seed):
    plane = np.random.default_rng(seed).uniform(-300, 300, size=(n, n))
    assert np.max(np.abs(idwt2(dwt2(plane, levels)) - plane)) < TOL


def test_dwt2_rejects_bad_inputs():
    with pytest.raises(DimensionError):
        dwt2(np.zeros((7, 8)), 1)
    with pytest.raises(DimensionError):
        dwt2(np.zeros((8, 8)), 0)
    with pytest.raises(DimensionError):
        dwt2(np.zeros((4, 4)), 3)  # 4 not divisible by 8
    with pytest.raises(DimensionError):
        dwt2(np.zeros(16), 1)


def test_with_ll_replaces_band_and_checks_shape(rng):
    pyr = dwt2(rand_plane(rng, 16), 2)
    swapped = pyr.with_ll(np.zeros((4, 4)))
    assert np.array_equal(swapped.ll, np.zeros((4, 4)))
    assert swapped.details is pyr.details
    with pytest.raises(DimensionError):
        pyr.with_ll(np.zeros((2, 2)))


def test_idwt2_rejects_inconsistent_bands():
    pyr = WaveletPyramid(1, np.zeros((2, 2)), ((np.zeros((3, 3)), np.zeros((3, 3)), np.zeros((3, 3))),))
    with pytest.raises(DimensionError):
        idwt2(pyr)


# --- dct: frozen small cases ---


def test_dct_constant_4x4_dc():
    coeffs = dct2(np.ones((4, 4)))
    assert abs(coeffs[0, 0] - 4.0) < TOL
    assert np.max(np.abs(coeffs.flat[1:])) < TOL


def test_dct_2x2_frozen_dc():
    coeffs = dct2(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert abs(coeffs[0, 0] - 5.0) < TOL  # (1+2+3+4)/2


@settings(max_examples=15, deadline=None)
@given(n=st.integers(min_value=1, max_value=12), c=st.floats(-100, 100, allow_nan=False))
def test_dct_constant_dc_is_n_times_c(n, c):
    coeffs = dct2(np.full((n, n), c))
    assert abs(coeffs[0, 0] - n * c) < 1e-9 * max(1.0, abs(n * c))


def test_dct_matches_double_sum_all_small_sizes(rng):
    for n in range(1, 17):
        plane = rand_plane(rng, n)
        got = dct2(plane)
        want = oracles.dct2_double_sum(plane)
        assert np.max(np.abs(got - want)) < TOL


def test_idct_matches_double_sum_small_sizes(rng):
    for n in (1, 2, 3, 5, 8):
        coeffs = rand_plane(rng, n)
        got = idct2(coeffs)
        want = oracles.idct2_double_sum(coeffs)
        assert np.max(np.abs(got - want)) < TOL


def test_dct_roundtrip_256(rng):
    plane = rand_plane(rng, 256)
    assert np.max(np.abs(idct2(dct2(plane)) - plane)) < TOL


def test_dct_parseval(rng):
    plane = rand_plane(rng, 64)
    ref = float(np.sum(plane**2))
    assert abs(float(np.sum(dct2(plane) ** 2)) - ref) / ref < 1e-6


def test_dct_rejects_non_2d():
    with pytest.raises(DimensionError):
        dct2(np.zeros(8))
    with pytest.raises(DimensionError):
        idct2(np.zeros((2, 2, 2)))


def test_dct_rectangular_against_oracle(rng):
    plane = rand_plane(rng, 6, 10)
    assert np.max(np.abs(dct2(plane) - oracles.dct2_double_sum(plane))) < TOL
