import json

import numpy as np
import pytest

from ppnet import (CompiledModel, DataError, DnParams, GaussianNeighborhood,
                   ImageTensor, InputError, ModelConfig, build_bio_model,
                   channel_layout, count_params, divisive_norm, forward,
                   load_params, save_params, states_equal)
from ppnet.model import NOMINAL_ARCH_TOTAL, param_vector, with_param_vector
from ppnet.synthetic import make_grating, make_test_image


class TestBioInitialization:
    def test_layer4_table_values(self, bio_state):
        p4 = bio_state.params["layer4"]
        np.testing.assert_array_equal(p4["mix"], np.eye(3))
        np.testing.assert_allclose(p4["k"][:, 0], 1.1)
        np.testing.assert_allclose(p4["k"][:, 1:], 5.0)
        np.testing.assert_allclose(p4["log_sigma"][:, 0], -1.9)
        np.testing.assert_allclose(p4["log_sigma"][:, 1:], -1.76)

    def test_layer6_achromatic_envelope_widths(self, bio_state):
        p6 = bio_state.params["layer6"]
        np.testing.assert_allclose(p6["a_gamma_x"], [1.87, 3.48, 6.50, 12.13])
        np.testing.assert_allclose(p6["a_gamma_y"], [1.49, 2.79, 5.20, 9.70])
        np.testing.assert_allclose(p6["a_freqs"], [2.0, 4.0, 8.0, 16.0])
        np.testing.assert_allclose(p6["t_freqs"], [3.0, 6.0])

    def test_layer8_all_ones(self, bio_state):
        np.testing.assert_array_equal(bio_state.params["layer8"]["b"], 1.0)

    def test_layer1_and_3_pointwise_values(self, bio_state):
        assert bio_state.params["layer1"]["beta"][0] == 0.1
        assert bio_state.params["layer1"]["h"][0] == 0.5
        np.testing.assert_allclose(bio_state.params["layer3"]["beta"], 1.0)
        np.testing.assert_allclose(bio_state.params["layer3"]["h"], 1.0 / 3.0)

    def test_layer7_bands(self, bio_state):
        p7 = bio_state.params["layer7"]
        np.testing.assert_allclose(p7["gamma_f_bands"],
                                   [1.25, 0.63, 0.31, 0.16, 0.83, 0.42, 0.83, 0.42])
        np.testing.assert_allclose(p7["sigma_o"], 0.11 * np.pi)


class TestChannelLayout:
    def test_plan_totals(self, bio_state):
        infos = channel_layout(bio_state)
        assert len(infos) == 128
        per_class = {}
        for c in infos:
            per_class[c.chromatic_class] = per_class.get(c.chromatic_class, 0) + 1
        assert per_class == {"A": 64, "T": 32, "D": 32}

    def test_band_indices_global(self, bio_state):
        infos = channel_layout(bio_state)
        assert infos[0].band_index == 0
        assert infos[63].band_index == 3
        assert infos[64].band_index == 4
        assert infos[127].band_index == 7

    def test_phases_alternate(self, bio_state):
        infos = channel_layout(bio_state)
        assert infos[0].phase == 0.0
        assert infos[1].phase == pytest.approx(np.pi / 2)


class TestForward:
    def test_output_geometry(self, compiled_bio):
        img = make_test_image(128, 128, seed=3)
        final, taps = compiled_bio.forward(img)
        assert final.data.shape == (32, 32, 128)
        assert final.sampling_frequency == 16.0
        assert [t.data.shape for t in taps.taps] == [
            (128, 128, 3), (64, 64, 3), (64, 64, 3), (32, 32, 3),
            (32, 32, 3), (32, 32, 128), (32, 32, 128), (32, 32, 128)]

    def test_zero_image_maps_to_zero(self, compiled_bio):
        z = ImageTensor(np.zeros((32, 32, 3)), 64.0)
        final, _ = compiled_bio.forward(z)
        np.testing.assert_array_equal(final.data, 0.0)

    def test_constant_gray_gives_near_zero_bandpass_response(self, compiled_bio):
        gray = ImageTensor(np.full((64, 64, 3), 0.5), 64.0)
        natural = make_test_image(64, 64, seed=5)
        fg, _ = compiled_bio.forward(gray)
        fn, _ = compiled_bio.forward(natural)
        per_channel_max = np.abs(fn.data).max(axis=(0, 1))
        assert np.all(np.abs(fg.data).max(axis=(0, 1))
                      <= 1e-3 * per_channel_max + 1e-15)

    def test_deterministic(self, compiled_bio):
        img = make_test_image(48, 48, seed=9)
        a, _ = compiled_bio.forward(img)
        b, _ = compiled_bio.forward(img)
        np.testing.assert_array_equal(a.data, b.data)

    def test_rejects_wrong_channel_count(self, compiled_bio):
        with pytest.raises(InputError):
            compiled_bio.forward(ImageTensor(np.zeros((8, 8, 1)), 64.0))

    def test_out_of_range_clamps_with_warning(self, compiled_bio):
        img = ImageTensor(np.full((16, 16, 3), 1.5), 64.0)
        with pytest.warns(UserWarning, match="clamp"):
            final, _ = compiled_bio.forward(img)
        clamped, _ = compiled_bio.forward(
            ImageTensor(np.ones((16, 16, 3)), 64.0))
        np.testing.assert_array_equal(final.data, clamped.data)

    def test_taps_chain(self, compiled_bio):
        img = make_test_image(32, 32, seed=11)
        final, taps = compiled_bio.forward(img)
        np.testing.assert_array_equal(final.data, taps.final.data)
        # Re-running the suffix from tap k reproduces the final tensor.
        resumed, _ = compiled_bio.run_from(7, taps[5])
        np.testing.assert_allclose(resumed.data, final.data, rtol=1e-12)


class TestBioBehaviors:
    def test_weber_increments_favor_dark(self, compiled_bio):
        delta = 0.05
        responses = {}
        for x in (0.1, 0.9):
            lo = ImageTensor(np.full((8, 8, 3), x), 64.0)
            hi = ImageTensor(np.full((8, 8, 3), x + delta), 64.0)
            rlo = compiled_bio.run_to(1, lo).data[0, 0, 0]
            rhi = compiled_bio.run_to(1, hi).data[0, 0, 0]
            responses[x] = rhi - rlo
        assert responses[0.1] / responses[0.9] > 1.0

    def test_csf_ordering_achromatic_above_chromatic(self, compiled_bio):
        kernel = compiled_bio.dog_bank
        pad = 1024
        freqs = np.fft.fftfreq(pad, d=kernel.grid_spacing)

        def peak(channel):
            taps = kernel.data[:, :, channel, channel]
            mag = np.abs(np.fft.fft2(taps, s=(pad, pad)))
            i, j = np.unravel_index(np.argmax(mag), mag.shape)
            return float(np.hypot(freqs[i], freqs[j]))

        achromatic = peak(0)
        assert achromatic > peak(1)
        assert achromatic > peak(2)

    def test_layer5_contrast_gain_ordering(self, bio_state):
        p5 = bio_state.params["layer5"]
        dn = DnParams(b=np.ones(3), beta=p5["beta"],
                      neighborhood=GaussianNeighborhood(
                          p5["amplitude"], p5["gamma"] / 4.0,
                          bio_state.config.dn_gaussian_support))

        def gain(contrast):
            grating = make_grating(32, 32, frequency=2.0, contrast=contrast,
                                   mean=0.5, sampling_frequency=16.0)
            signal = ImageTensor(grating.data - 0.5, 16.0)
            out = divisive_norm(signal, dn)
            amp_in = np.ptp(signal.data[:, :, 0])
            amp_out = np.ptp(out.data[:, :, 0])
            return amp_out / amp_in

        assert gain(0.1) > gain(0.8)


class TestParamBookkeeping:
    def test_counts(self, bio_state):
        counts = count_params(bio_state)
        assert counts.per_layer == {
            "layer1": 2, "layer2": 9, "layer3": 6, "layer4": 27,
            "layer5": 9, "layer6": 456, "layer7": 400, "layer8": 128}
        assert counts.total == 1037
        assert counts.nominal_total == NOMINAL_ARCH_TOTAL == 1062
        assert counts.layer7_gap == 25

    def test_count_invariant_to_supports(self):
        small = build_bio_model(ModelConfig(dog_support=21, gabor_support=17,
                                            dn_gaussian_support=9,
                                            v1_dn_support=5))
        assert count_params(small).total == 1037

    def test_vector_roundtrip(self, bio_state, rng):
        layers = ("layer4", "layer8")
        vec = param_vector(bio_state, layers)
        assert vec.size == 27 + 128
        perturbed = vec + rng.standard_normal(vec.size) * 0.01
        state2 = with_param_vector(bio_state, layers, perturbed)
        np.testing.assert_array_equal(param_vector(state2, layers), perturbed)
        np.testing.assert_array_equal(param_vector(state2, ("layer6",)),
                                      param_vector(bio_state, ("layer6",)))


class TestSerialization:
    def test_roundtrip_bit_exact(self, bio_state, tmp_path):
        path = tmp_path / "bio.params"
        save_params(bio_state, path)
        loaded = load_params(path)
        assert states_equal(bio_state, loaded)

    def test_frozen_flags_survive(self, bio_state, tmp_path):
        frozen = dict(bio_state.frozen)
        frozen["layer8"] = np.ones(128, dtype=bool)
        from ppnet import ModelState
        state = ModelState(config=bio_state.config, params=bio_state.params,
                           frozen=frozen)
        path = tmp_path / "frozen.params"
        save_params(state, path)
        loaded = load_params(path)
        assert loaded.frozen["layer8"].all()
        assert not loaded.frozen["layer1"].any()

    def test_corrupt_value_names_group(self, bio_state, tmp_path):
        path = tmp_path / "bad.params"
        save_params(bio_state, path)
        doc = json.loads(path.read_text())
        doc["layers"]["layer4"]["k"] = "oops"
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="layer4.k"):
            load_params(path)

    def test_syntax_error_reports_location(self, bio_state, tmp_path):
        path = tmp_path / "syntax.params"
        save_params(bio_state, path)
        text = path.read_text()
        path.write_text(text.replace("{", "!", 1))
        with pytest.raises(DataError, match="line"):
            load_params(path)

    def test_version_mismatch(self, bio_state, tmp_path):
        path = tmp_path / "version.params"
        save_params(bio_state, path)
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="version"):
            load_params(path)

    def test_missing_group_named(self, bio_state, tmp_path):
        path = tmp_path / "missing.params"
        save_params(bio_state, path)
        doc = json.loads(path.read_text())
        del doc["layers"]["layer7"]
        path.write_text(json.dumps(doc))
        with pytest.raises(DataError, match="layer7"):
            load_params(path)


class TestCompiledKernels:
    def test_gabor_bank_shape_and_spacing(self, compiled_bio):
        bank = compiled_bio.gabor_bank
        cfg = compiled_bio.state.config
        assert bank.data.shape == (cfg.gabor_support, cfg.gabor_support, 3, 128)
        assert bank.grid_spacing == pytest.approx(4.0 / 64.0)

    def test_bio_mix_keeps_classes_separate(self, compiled_bio):
        bank = compiled_bio.gabor_bank.data
        # Achromatic filters live on input channel 0 only, and so on.
        assert np.abs(bank[:, :, 1:, :64]).max() == 0.0
        assert np.abs(bank[:, :, [0, 2], 64:96]).max() == 0.0
        assert np.abs(bank[:, :, :2, 96:]).max() == 0.0

    def test_forward_convenience_matches_compiled(self, bio_state, compiled_bio):
        img = make_test_image(32, 32, seed=21)
        a, _ = forward(bio_state, img)
        b, _ = compiled_bio.forward(img)
        np.testing.assert_array_equal(a.data, b.data)
