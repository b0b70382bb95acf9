import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import hadamard

from ghostqc import imaging
from ghostqc.imaging import PatternSet, TvCsConfig


def patterns_from(rows, h, w):
    return PatternSet(np.asarray(rows, dtype=np.uint8), h, w)


# -- patterns and buckets ------------------------------------------------------


def test_patterns_binary_deterministic_balanced():
    a = imaging.generate_patterns(400, 16, 16, 7)
    b = imaging.generate_patterns(400, 16, 16, 7)
    np.testing.assert_array_equal(a.values, b.values)
    assert set(np.unique(a.values)) <= {0, 1}
    assert a.values.shape == (400, 256)
    # mean of 102400 fair bits: sd ~ 0.0016
    assert abs(a.values.mean() - 0.5) < 0.01
    c = imaging.generate_patterns(400, 16, 16, 8)
    assert (a.values != c.values).any()


def test_pattern_argument_checks():
    with pytest.raises(ValueError):
        imaging.generate_patterns(0, 4, 4, 0)
    with pytest.raises(ValueError):
        imaging.generate_patterns(4, 0, 4, 0)


def test_buckets_hand_example():
    pat = patterns_from([[1, 0, 0, 1], [1, 1, 1, 1]], 2, 2)
    img = np.array([[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_allclose(imaging.forward_buckets(pat, img).values, [0.5, 1.0])
    with pytest.raises(ValueError):
        imaging.forward_buckets(pat, np.zeros((3, 3)))


@settings(max_examples=40, deadline=None)
@given(arrays(float, 16, elements=st.floats(0, 1)), arrays(float, 16, elements=st.floats(0, 1)),
       st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_buckets_linear(x, y, a, b, seed):
    pat = imaging.generate_patterns(10, 4, 4, seed)
    lhs = imaging.forward_buckets(pat, a * x + b * y).values
    rhs = a * imaging.forward_buckets(pat, x).values + b * imaging.forward_buckets(pat, y).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_detection_noise_statistics():
    clean = imaging.BucketSignals(np.full(40_000, 50.0))
    noisy = imaging.add_detection_noise(clean, 0.5, seed=3)
    resid = noisy.values - clean.values
    assert abs(resid.std(ddof=1) / 0.5 - 1) < 0.05
    assert abs(resid.mean()) < 0.02
    assert noisy.dsnr == pytest.approx(10 * np.log10(100))
    again = imaging.add_detection_noise(clean, 0.5, seed=3)
    np.testing.assert_array_equal(again.values, noisy.values)


def test_zero_sigma_is_exact_copy():
    clean = imaging.BucketSignals(np.arange(5.0))
    out = imaging.add_detection_noise(clean, 0.0, seed=1)
    np.testing.assert_array_equal(out.values, clean.values)
    with pytest.raises(ValueError):
        imaging.add_detection_noise(clean, -1.0, seed=1)


@pytest.mark.parametrize("mean,db", [(100.0, 20.0), (64.0, 10.0), (3.0, 0.0)])
def test_dsnr_inverse(mean, db):
    s = imaging.sigma_from_dsnr(mean, db)
    assert imaging.dsnr(mean, s) == pytest.approx(db)
    assert imaging.sigma_from_dsnr(100.0, 20.0) == pytest.approx(1.0)


# -- correlation imaging -------------------------------------------------------------


def test_dgi_two_patterns_closed_form():
    h1 = np.array([1, 0, 1, 1])
    h2 = np.array([0, 0, 1, 0])
    I = np.array([2.0, 0.5])
    raw = imaging.correlation_gi(patterns_from([h1, h2], 2, 2), I, raw=True)
    # with two samples the covariance is (I1 - I2)(h1 - h2) / 4
    np.testing.assert_allclose(raw.reshape(-1), (I[0] - I[1]) * (h1 - h2) / 4)


def test_dgi_identical_patterns_give_zero():
    pat = patterns_from([[1, 0, 1, 0]] * 5, 2, 2)
    raw = imaging.correlation_gi(pat, np.arange(5.0), raw=True)
    assert not raw.any()
    assert not imaging.correlation_gi(pat, np.arange(5.0)).any()


def test_dgi_complementary_hadamard_recovers_object():
    # rows of (1 +- H)/2: the covariance reduces to O / 4 exactly
    H = hadamard(16)
    rows = np.vstack([(1 + H) // 2, (1 - H) // 2])
    pat = patterns_from(rows, 4, 4)
    truth = np.random.default_rng(0).uniform(size=(4, 4))
    I = imaging.forward_buckets(pat, truth)
    np.testing.assert_allclose(imaging.correlation_gi(pat, I, raw=True), truth / 4, atol=1e-12)
    assert np.corrcoef(imaging.correlation_gi(pat, I).ravel(), truth.ravel())[0, 1] > 0.99


def test_dgi_input_checks():
    pat = patterns_from([[1, 0]], 1, 2)
    with pytest.raises(ValueError):
        imaging.correlation_gi(pat, [1.0])
    with pytest.raises(ValueError):
        imaging.correlation_gi(patterns_from([[1, 0], [0, 1]], 1, 2), [1.0])


def test_rescale():
    np.testing.assert_allclose(imaging.rescale([[2.0, 4.0], [3.0, 2.0]]), [[0, 1], [0.5, 0]])
    assert not imaging.rescale(np.full((2, 2), 7.0)).any()


# -- total variation ----------------------------------------------------------------


def test_tv_examples():
    assert imaging.tv_norm(np.full((5, 5), 0.3)) == 0
    assert imaging.tv_norm([[0, 1], [0, 1]]) == 2
    assert imaging.tv_norm([[0, 1], [1, 0]]) == 4


def test_tv_gradient_matches_fd():
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(6, 7))
    g = imaging.tv_gradient(img)
    h = 1e-7
    for i, j in [(0, 0), (2, 3), (5, 6), (3, 0), (0, 6)]:
        e = np.zeros_like(img)
        e[i, j] = h
        num = (imaging.tv_norm(img + e) - imaging.tv_norm(img - e)) / (2 * h)
        assert num == pytest.approx(g[i, j], abs=1e-6)


@settings(max_examples=30, deadline=None)
@given(arrays(float, (4, 5), elements=st.floats(0, 1)), st.floats(-2, 2))
def test_tv_shift_invariant_and_nonnegative(img, c):
    assert imaging.tv_norm(img) >= 0
    assert imaging.tv_norm(img + c) == pytest.approx(imaging.tv_norm(img), abs=1e-9)


# -- TV-regularized compressive sensing ------------------------------------------------


def test_tvcs_least_squares_when_fully_sampled():
    # square, full-rank system with an interior solution and no TV weight
    # upper bidiagonal ones: determinant 1
    pat = patterns_from(np.eye(9, dtype=int) + np.eye(9, k=1, dtype=int), 3, 3)
    truth = np.random.default_rng(2).uniform(0.2, 0.8, size=(3, 3))
    I = imaging.forward_buckets(pat, truth)
    est = imaging.tvcs_reconstruct(pat, I, TvCsConfig(mu=0.0, iterations=3000))
    resid = pat.matrix @ est.ravel() - I.values
    assert np.linalg.norm(resid) < 1e-6
    np.testing.assert_allclose(est, truth, atol=1e-6)


def test_tvcs_large_weight_flattens():
    pat = imaging.generate_patterns(20, 6, 6, 0)
    truth = np.random.default_rng(3).uniform(size=(6, 6))
    est = imaging.tvcs_reconstruct(pat, imaging.forward_buckets(pat, truth),
                                   TvCsConfig(mu=1e4, iterations=500))
    assert imaging.tv_norm(est) < 0.05 * imaging.tv_norm(truth)


def test_tvcs_sparse_object_half_sampled():
    truth = np.zeros((16, 16))
    truth[4:12, 6:9] = 1.0
    truth[10:13, 3:13] = 0.6
    pat = imaging.generate_patterns(128, 16, 16, 5)
    est = imaging.tvcs_reconstruct(pat, imaging.forward_buckets(pat, truth),
                                   TvCsConfig(mu=0.5, iterations=3000))
    assert imaging.psnr(est, truth) >= 20


def test_tvcs_rejects_negative_weight():
    with pytest.raises(ValueError):
        TvCsConfig(mu=-1)


# -- metrics -------------------------------------------------------------------------


def test_psnr_cases():
    a = np.zeros((4, 4))
    assert imaging.psnr(a, a) == imaging.PSNR_CAP
    assert imaging.psnr(a, a + 0.1) == pytest.approx(20.0)
    assert imaging.psnr(a, a + 1.0) == pytest.approx(0.0)
    assert imaging.psnr(a, a + 1e-60) == imaging.PSNR_CAP
    with pytest.raises(ValueError):
        imaging.psnr(a, np.zeros((4, 5)))


def ssim_loop(a, b, size=11, sigma=1.5):
    x = np.arange(size) - size // 2
    g = np.exp(-x.astype(float) ** 2 / (2 * sigma**2))
    w = np.outer(g, g) / np.outer(g, g).sum()
    c1, c2 = 0.01**2, 0.03**2
    vals = []
    for i in range(a.shape[0] - size + 1):
        for j in range(a.shape[1] - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            ma, mb = (w * pa).sum(), (w * pb).sum()
            va = (w * (pa - ma) ** 2).sum()
            vb = (w * (pb - mb) ** 2).sum()
            cab = (w * (pa - ma) * (pb - mb)).sum()
            vals.append((2 * ma * mb + c1) * (2 * cab + c2)
                        / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_matches_window_loop(seed):
    rng = np.random.default_rng(seed)
    a = rng.uniform(size=(16, 18))
    b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
    assert imaging.ssim(a, b) == pytest.approx(ssim_loop(a, b), abs=1e-9)


def test_ssim_properties():
    rng = np.random.default_rng(4)
    a = rng.uniform(size=(12, 12))
    b = rng.uniform(size=(12, 12))
    assert imaging.ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert imaging.ssim(a, b) == pytest.approx(imaging.ssim(b, a), abs=1e-12)
    assert imaging.ssim(a, b) < 0.5
    with pytest.raises(ValueError):
        imaging.ssim(np.zeros((8, 8)), np.zeros((8, 8)))


def test_gaussian_window_normalized():
    w = imaging.gaussian_window()
    assert w.shape == (11, 11)
    assert w.sum() == pytest.approx(1.0)
    assert w[5, 5] == w.max()


# -- file formats ---------------------------------------------------------------------


def test_csv_round_trip_byte_exact(tmp_path):
    rng = np.random.default_rng(5)
    arr = rng.normal(size=(3, 4)) * 10.0 ** rng.integers(-8, 8, (3, 4))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    imaging.write_csv(p1, arr)
    back = imaging.read_csv(p1)
    np.testing.assert_array_equal(back, arr)
    imaging.write_csv(p2, back)
    assert p1.read_bytes() == p2.read_bytes()
    vec = rng.uniform(size=7)
    imaging.write_csv(p1, vec)
    np.testing.assert_array_equal(imaging.read_csv(p1), vec)


def test_pgm_round_trip(tmp_path):
    img = np.random.default_rng(6).uniform(size=(5, 7))
    p = tmp_path / "x.pgm"
    imaging.write_pgm(p, img)
    back = imaging.read_pgm(p)
    assert back.shape == (5, 7)
    assert np.max(np.abs(back - img)) <= 0.5 / 255 + 1e-12
    assert p.read_bytes().startswith(b"P5\n7 5\n255\n")


def test_pgm_header_comment_and_rejects_p2(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_bytes(b"P5\n# note\n2 1\n255\n" + bytes([0, 255]))
    np.testing.assert_array_equal(imaging.read_pgm(p), [[0.0, 1.0]])
    p.write_bytes(b"P2\n2 1\n255\n0 255\n")
    with pytest.raises(ValueError):
        imaging.read_pgm(p)


def test_read_image_validates_range(tmp_path):
    p = tmp_path / "bad.csv"
    imaging.write_csv(p, [[0.5, 1.5]])
    with pytest.raises(ValueError):
        imaging.read_image(p)
    imaging.write_csv(p, [0.1, 0.2])
    with pytest.raises(ValueError):
        imaging.read_image(p)
