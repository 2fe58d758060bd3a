import numpy as np
import pytest

from budgetseg.bilinear import (
    bilinear_plane,
    bilinear_upsample_reference,
    create_bilinear_kernels,
    find_params,
    interior_slice,
    kernels_to_csv,
    read_kernels_csv,
    upsample_with_bank,
)
from budgetseg.tensor_core import MacCounter, Tensor


@pytest.mark.parametrize("size,expected", [(64, (32, 31.5)), (3, (2, 1.0)), (4, (2, 1.5)), (1, (1, 0.0))])
def test_find_params(size, expected):
    assert find_params(size) == expected


def test_size3_plane():
    bank = create_bilinear_kernels(1, (3, 3))
    prof = np.array([0.5, 1.0, 0.5])
    np.testing.assert_allclose(bank.planes[:, :, 0, 0], np.outer(prof, prof), atol=1e-12)


def test_size4_plane():
    bank = create_bilinear_kernels(1, (4, 4))
    prof = np.array([0.25, 0.75, 0.75, 0.25])
    np.testing.assert_allclose(bank.planes[:, :, 0, 0], np.outer(prof, prof), atol=1e-12)


def test_full_paper_fills_every_pair():
    bank = create_bilinear_kernels(7, (64, 64))
    single = bilinear_plane(64, 64).coefficients
    assert bank.planes.shape == (64, 64, 7, 7)
    for i in range(7):
        for j in range(7):
            np.testing.assert_array_equal(bank.planes[:, :, i, j], single)


def test_diagonal_mode():
    bank = create_bilinear_kernels(3, (4, 4), "diagonal")
    single = bilinear_plane(4, 4).coefficients
    for i in range(3):
        for j in range(3):
            expected = single if i == j else np.zeros_like(single)
            np.testing.assert_array_equal(bank.planes[:, :, i, j], expected)


@pytest.mark.parametrize("size", [1, 2, 3, 4, 7, 8, 16, 64])
def test_plane_symmetry_and_separability(size):
    p = bilinear_plane(size, size).coefficients
    assert p.min() >= 0 and p.max() <= 1
    np.testing.assert_allclose(p, p[::-1, :], atol=1e-15)
    np.testing.assert_allclose(p, p[:, ::-1], atol=1e-15)
    np.testing.assert_allclose(p, p.T, atol=1e-15)
    mid = (size - 1) // 2
    row, col = p[mid, :], p[:, mid]
    np.testing.assert_allclose(np.outer(col, row) / p[mid, mid], p, atol=1e-14)
    assert p[mid, mid] == p.max()


def test_rectangular_plane():
    p = bilinear_plane(3, 4).coefficients
    np.testing.assert_allclose(p, np.outer([0.5, 1, 0.5], [0.25, 0.75, 0.75, 0.25]), atol=1e-15)


def test_reference_1d_tent():
    # two identical rows so the middle output rows are vertically interior
    x = Tensor(np.array([[0.0, 2.0], [0.0, 2.0]]).reshape(2, 2, 1))
    y = bilinear_upsample_reference(x, 2).data[1, :, 0]
    # samples sit at 0.5 and 2.5; q=1 and q=2 interpolate between them
    np.testing.assert_allclose(y[interior_slice(2, 2)], [0.5, 1.5], atol=1e-15)


def test_reference_constant_interior():
    y = bilinear_upsample_reference(Tensor(np.full((4, 4, 2), 3.0)), 2).data
    s = interior_slice(4, 2)
    np.testing.assert_allclose(y[s, s], 3.0, atol=1e-12)


def test_reference_rejects_odd_factor():
    with pytest.raises(ValueError):
        bilinear_upsample_reference(Tensor(np.ones((2, 2, 1))), 3)


@pytest.mark.parametrize("factor", [2, 4, 8, 16, 32])
def test_partition_of_unity(factor):
    y = upsample_with_bank(Tensor(np.full((4, 5, 1), 1.0)), factor, "diagonal").data
    assert y.shape == (4 * factor, 5 * factor, 1)
    rows, cols = interior_slice(4, factor), interior_slice(5, factor)
    assert np.max(np.abs(y[rows, cols] - 1.0)) <= 1e-9


@pytest.mark.parametrize("factor", [2, 4])
def test_transposed_matches_reference_everywhere(factor):
    rng = np.random.default_rng(factor)
    x = Tensor(rng.standard_normal((8, 8, 3)))
    got = upsample_with_bank(x, factor, "diagonal").data
    ref = bilinear_upsample_reference(x, factor).data
    np.testing.assert_allclose(got, ref, atol=1e-10)


def test_full_paper_scales_identical_channels():
    rng = np.random.default_rng(11)
    base = rng.standard_normal((5, 5, 1))
    x = Tensor(np.repeat(base, 4, axis=2))
    full = upsample_with_bank(x, 4, "full_paper").data
    diag = upsample_with_bank(x, 4, "diagonal").data
    np.testing.assert_allclose(full, 4 * diag, atol=1e-9)


def test_upsample_counts_macs():
    c = MacCounter()
    upsample_with_bank(Tensor(np.ones((3, 3, 2))), 2, counter=c)
    assert c.macs == 3 * 3 * 2 * 4 * 4 * 2


def test_kernel_csv_round_trip(tmp_path):
    bank = create_bilinear_kernels(3, (5, 4), "diagonal")
    path = tmp_path / "k.csv"
    path.write_text(kernels_to_csv(bank))
    lines = path.read_text().splitlines()
    assert lines[0] == "5,4,3,diagonal"
    assert len(lines) == 1 + 5 * 4 * 9
    # i -> j -> y -> x nesting: second value is plane (0,0) at y=0, x=1
    assert float(lines[2]) == pytest.approx(bank.planes[0, 1, 0, 0], abs=1e-15)
    back = read_kernels_csv(path)
    np.testing.assert_array_equal(back.planes, bank.planes)
