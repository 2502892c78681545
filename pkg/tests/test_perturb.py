"""SNR-calibrated noise injection, measurement, and the WVEC container."""

import math

import numpy as np
import pytest

import scalelaws as sl
from scalelaws.perturb import WVEC_MAGIC


def vec(values, dtype=np.float64):
    return sl.WeightVector(np.asarray(values, dtype=dtype))


class TestSignalPower:
    def test_alternating_unit_weights(self):
        assert sl.signal_power(vec([1.0, -1.0, 1.0, -1.0])) == 1.0

    def test_all_zeros(self):
        assert sl.signal_power(vec([0.0, 0.0])) == 0.0

    def test_three_four(self):
        assert sl.signal_power(vec([3.0, 4.0])) == 12.5


class TestNoiseSigma2:
    def test_zero_db(self):
        assert sl.noise_sigma2(1.0, 0.0) == 1.0

    def test_ten_db(self):
        assert sl.noise_sigma2(1.0, 10.0) == pytest.approx(0.1, rel=1e-15)

    def test_twenty_db_scaled_power(self):
        assert sl.noise_sigma2(4.0, 20.0) == pytest.approx(0.04, rel=1e-15)

    def test_power_linearity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = float(rng.uniform(0.1, 10))
            s = float(rng.uniform(-5, 45))
            lam = float(rng.uniform(0.1, 10))
            assert sl.noise_sigma2(lam * p, s) == pytest.approx(
                lam * sl.noise_sigma2(p, s), rel=1e-15
            )

    def test_db_decade_steps(self):
        """+10 dB divides the variance by exactly 10 when the dB values
        land on exact tenths (integer-decade cases are exact in binary)."""
        for s in (0.0, 10.0, 20.0, 30.0):
            assert sl.noise_sigma2(1.0, s + 10.0) == sl.noise_sigma2(1.0, s) / 10.0
        # arbitrary values still agree to rounding
        for s in (3.7, 15.0, 22.2):
            assert sl.noise_sigma2(2.5, s + 10.0) == pytest.approx(
                sl.noise_sigma2(2.5, s) / 10.0, rel=1e-14
            )

    def test_negative_power_rejected(self):
        with pytest.raises(sl.DataValidationError):
            sl.noise_sigma2(-1.0, 10.0)


class TestInject:
    def test_huge_snr_barely_moves_weights(self):
        rng = np.random.default_rng(1)
        w = vec(rng.normal(0, 0.02, 4096))
        perturbed, report = sl.inject(w, 300.0, seed=7)
        p_w = sl.signal_power(w)
        assert np.max(np.abs(perturbed.values - w.values)) <= 1e-6 * math.sqrt(p_w)
        assert report.sigma2 == sl.noise_sigma2(p_w, 300.0)

    def test_determinism(self):
        rng = np.random.default_rng(2)
        w = vec(rng.normal(0, 1, 1000))
        out1, rep1 = sl.inject(w, 15.0, seed=42)
        out2, rep2 = sl.inject(w, 15.0, seed=42)
        np.testing.assert_array_equal(out1.values, out2.values)
        assert rep1 == rep2
        out3, _ = sl.inject(w, 15.0, seed=43)
        assert not np.array_equal(out1.values, out3.values)

    def test_million_elements_calibrated(self):
        rng = np.random.default_rng(3)
        w = vec(rng.normal(0, 0.05, 1_000_000))
        perturbed, report = sl.inject(w, 20.0, seed=11)
        measured = sl.measure_snr(w, perturbed)
        assert abs(measured - 20.0) <= 0.2
        assert abs(report.empirical_snr_db - 20.0) <= 0.2
        # sigma2 equals the closed form bit for bit
        assert report.sigma2 == sl.noise_sigma2(sl.signal_power(w), 20.0)

    def test_zero_power_rejected(self):
        with pytest.raises(sl.DataValidationError, match="zero signal power"):
            sl.inject(vec([0.0, 0.0, 0.0]), 10.0, seed=0)

    def test_f32_round_trip_keeps_dtype(self):
        rng = np.random.default_rng(4)
        w = vec(rng.normal(0, 1, 10000).astype(np.float32), dtype=np.float32)
        perturbed, report = sl.inject(w, 10.0, seed=5)
        assert perturbed.values.dtype == np.float32
        assert perturbed.count == w.count
        assert abs(report.empirical_snr_db - 10.0) < 0.5

    def test_report_fields(self):
        w = vec([1.0, 2.0, 3.0, 4.0])
        _, report = sl.inject(w, 0.0, seed=9)
        assert report.target_snr_db == 0.0
        assert report.signal_power == 7.5
        assert report.sigma2 == 7.5  # 0 dB: noise power equals signal power
        assert report.count == 4
        assert report.seed == 9
        assert report.power_mode == "global"


class TestInjectSegmented:
    def test_lengths_must_sum(self):
        w = vec(np.ones(10))
        with pytest.raises(sl.DataValidationError):
            sl.inject_segmented(w, [4, 4], 10.0, seed=0)

    def test_per_segment_calibration(self):
        rng = np.random.default_rng(6)
        # two segments with very different scales
        w = vec(np.concatenate([rng.normal(0, 1, 50000), rng.normal(0, 10, 50000)]))
        perturbed, reports = sl.inject_segmented(w, [50000, 50000], 15.0, seed=3)
        assert len(reports) == 2
        for i, (sl_, report) in enumerate(zip((slice(0, 50000), slice(50000, None)), reports)):
            seg_orig = sl.WeightVector(w.values[sl_].copy())
            seg_pert = sl.WeightVector(perturbed.values[sl_].copy())
            assert abs(sl.measure_snr(seg_orig, seg_pert) - 15.0) <= 0.5
            assert report.power_mode == f"segment:{i}"

    def test_segment_streams_independent_of_layout(self):
        """Each segment's noise is a pure function of (seed, index)."""
        rng = np.random.default_rng(7)
        w = vec(rng.normal(0, 1, 600))
        out_a, _ = sl.inject_segmented(w, [200, 400], 12.0, seed=5)
        out_b, _ = sl.inject_segmented(w, [200, 400], 12.0, seed=5)
        np.testing.assert_array_equal(out_a.values, out_b.values)


class TestMeasureSnr:
    def test_zero_db_when_diff_power_equals_signal(self):
        original = vec([2.0, 2.0, 2.0, 2.0])
        perturbed = vec([4.0, 0.0, 4.0, 0.0])  # diff +-2, power 4 = signal power
        assert sl.measure_snr(original, perturbed) == 0.0

    def test_twenty_db_hand_case(self):
        original = vec([10.0, 10.0])
        perturbed = vec([11.0, 9.0])  # diff power 1 = signal/100
        assert sl.measure_snr(original, perturbed) == pytest.approx(20.0, rel=1e-12)

    def test_round_trip_15db(self):
        rng = np.random.default_rng(8)
        w = vec(rng.normal(0, 0.3, 1_000_000))
        perturbed, _ = sl.inject(w, 15.0, seed=21)
        assert abs(sl.measure_snr(w, perturbed) - 15.0) <= 0.2

    def test_identical_vectors_rejected(self):
        w = vec([1.0, 2.0])
        with pytest.raises(sl.DataValidationError, match="identical"):
            sl.measure_snr(w, w)

    def test_zero_signal_rejected(self):
        with pytest.raises(sl.DataValidationError, match="zero signal"):
            sl.measure_snr(vec([0.0, 0.0]), vec([1.0, 1.0]))

    def test_length_mismatch(self):
        with pytest.raises(sl.DataValidationError, match="lengths"):
            sl.measure_snr(vec([1.0, 2.0]), vec([1.0, 2.0, 3.0]))


class TestWeightVectorValidation:
    def test_empty_rejected(self):
        with pytest.raises(sl.DataValidationError):
            sl.WeightVector(np.array([], dtype=np.float64))

    def test_nonfinite_rejected(self):
        with pytest.raises(sl.DataValidationError):
            vec([1.0, float("inf")])

    def test_integer_dtype_rejected(self):
        with pytest.raises(sl.DataValidationError):
            sl.WeightVector(np.array([1, 2, 3]))


class TestWvecContainer:
    def test_round_trip_f64(self, tmp_path):
        rng = np.random.default_rng(9)
        w = vec(rng.normal(0, 1, 257))
        path = tmp_path / "w.wvec"
        sl.write_wvec(path, w)
        back = sl.read_wvec(path)
        assert back.dtype_code == "f64"
        np.testing.assert_array_equal(back.values, w.values)

    def test_round_trip_f32(self, tmp_path):
        rng = np.random.default_rng(10)
        w = vec(rng.normal(0, 1, 64).astype(np.float32), dtype=np.float32)
        path = tmp_path / "w.wvec"
        sl.write_wvec(path, w)
        back = sl.read_wvec(path)
        assert back.dtype_code == "f32"
        np.testing.assert_array_equal(back.values, w.values)

    def test_header_layout(self, tmp_path):
        w = vec([1.0])
        path = tmp_path / "w.wvec"
        sl.write_wvec(path, w)
        blob = path.read_bytes()
        assert blob[:4] == WVEC_MAGIC
        assert blob[4] == 1  # version
        assert blob[5] == 1  # f64 code
        assert int.from_bytes(blob[6:14], "little") == 1
        assert len(blob) == 14 + 8

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.wvec"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(sl.DataValidationError, match="magic"):
            sl.read_wvec(path)

    def test_truncated_payload(self, tmp_path):
        w = vec([1.0, 2.0, 3.0])
        path = tmp_path / "w.wvec"
        sl.write_wvec(path, w)
        blob = path.read_bytes()
        path.write_bytes(blob[:-4])
        with pytest.raises(sl.DataValidationError, match="expected"):
            sl.read_wvec(path)

    def test_text_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        w = vec(rng.normal(0, 1, 20))
        path = tmp_path / "w.txt"
        sl.write_weights_text(path, w)
        back = sl.read_weights_text(path)
        np.testing.assert_array_equal(back.values, w.values)

    def test_text_f32_round_trip(self, tmp_path):
        rng = np.random.default_rng(12)
        w = vec(rng.normal(0, 1, 20).astype(np.float32), dtype=np.float32)
        path = tmp_path / "w.txt"
        sl.write_weights_text(path, w)
        back = sl.read_weights_text(path, dtype_code="f32")
        np.testing.assert_array_equal(back.values, w.values)

    def test_text_rejects_garbage(self, tmp_path):
        path = tmp_path / "w.txt"
        path.write_text("1.5\nnot-a-number\n", encoding="utf-8")
        with pytest.raises(sl.DataValidationError, match="line 2"):
            sl.read_weights_text(path)
