"""Spike codec: exact encoding, surrogate closed forms, rescaling, decoders."""

import numpy as np
import pytest

import has8.codec as codec
import has8.tensor as tt
from has8.codec import (
    CodecConfig,
    InputRangeError,
    SpikeTrain,
    SurrogateSpec,
    bitplane_encode,
    decode_bitplane,
    decode_rate,
    rescale_factor,
    surrogate_grad_fouriersine,
    surrogate_grad_sigsine,
    surrogate_grad_tanhsine,
)
from has8.errors import ShapeError
from has8.tensor import Tensor, backward


def _encode(x, **spec_kw):
    return bitplane_encode(Tensor(np.asarray(x, dtype=np.float64), requires_grad=True), SurrogateSpec(**spec_kw))


class TestEncodeForward:
    def test_zero_intensity_all_zero_train(self):
        train = _encode(0.0)
        assert train.tensor.data.tolist() == [0.0] * 8

    def test_full_intensity_all_one_train(self):
        train = _encode(1.0)
        assert train.tensor.data.tolist() == [1.0] * 8

    def test_intensity_five_pattern(self):
        # 5 = 00000101b: ones at t=5 (k=2) and t=7 (k=0)
        train = _encode(5 / 255)
        assert train.tensor.data.tolist() == [0, 0, 0, 0, 0, 1, 0, 1]

    def test_forward_invariant_to_surrogate_spec(self):
        x = np.linspace(0, 1, 97)
        outs = [
            bitplane_encode(Tensor(x), SurrogateSpec(kind=k, rescale=r)).tensor.data
            for k in codec.SURROGATE_KINDS
            for r in (True, False)
        ]
        for o in outs[1:]:
            assert np.array_equal(o, outs[0])

    def test_values_exactly_binary(self):
        x = np.linspace(0, 1, 1001)
        vals = bitplane_encode(Tensor(x), SurrogateSpec()).tensor.data
        assert np.all((vals == 0.0) | (vals == 1.0))

    def test_range_tolerance_clamps_marginal(self):
        train = _encode([-1e-7, 1.0 + 1e-7])
        assert train.tensor.data[:, 0].tolist() == [0.0] * 8
        assert train.tensor.data[:, 1].tolist() == [1.0] * 8

    def test_out_of_range_rejected(self):
        with pytest.raises(InputRangeError):
            _encode([0.5, 1.2])
        with pytest.raises(InputRangeError):
            _encode([-0.2])

    def test_round_trip_exhaustive_256(self):
        grid = np.arange(256, dtype=np.float64) / 255.0
        decoded = decode_bitplane(bitplane_encode(Tensor(grid), SurrogateSpec()))
        assert np.abs(decoded.data - grid).max() <= 1e-9


class TestSurrogateClosedForms:
    def test_sigsine_at_zero_k7(self):
        # u=0, sigma=1/2 -> 0.25 * (-10*pi/128) * 1
        assert surrogate_grad_sigsine(0.0, 7, -10.0) == pytest.approx(-0.0613592315, abs=1e-9)

    def test_sigsine_at_128_k7(self):
        # sin(pi)=0, cos(pi)=-1 flips the sign
        assert surrogate_grad_sigsine(128.0, 7, -10.0) == pytest.approx(+0.0613592315, abs=1e-9)

    def test_sigsine_saturated_at_quarter_period(self):
        # sin = +/-1 -> |sigma'(u)| <= sigma(10)(1-sigma(10))
        val = surrogate_grad_sigsine(64.0, 7, -10.0)
        envelope = 4.54e-5 * (10 * np.pi / 128)
        assert abs(val) <= envelope

    def test_tanhsine_at_zero_k7(self):
        assert surrogate_grad_tanhsine(0.0, 7, -10.0) == pytest.approx(-0.2454369261, abs=1e-9)

    def test_tanhsine_saturated(self):
        # quarter period: sech^2(-10) ~ 8.2e-9
        assert abs(surrogate_grad_tanhsine(64.0, 7, -10.0)) < 1e-8

    def test_tanhsine_sign_flips_across_toggle(self):
        below = surrogate_grad_tanhsine(127.0, 7, -10.0)
        above = surrogate_grad_tanhsine(129.0, 7, -10.0)
        assert np.sign(below) != np.sign(above)

    def test_fouriersine_literal_at_zero_k7(self):
        # 1/2 - 3 * (1/64)
        assert surrogate_grad_fouriersine(0.0, 7, 5, literal=True) == pytest.approx(0.453125, abs=0)

    def test_fouriersine_corrected_at_zero_k7(self):
        assert surrogate_grad_fouriersine(0.0, 7, 5, literal=False) == pytest.approx(-3 / 64, abs=0)

    def test_fouriersine_k0_coefficient_is_two(self):
        # 1/2^(k-1) at k=0 doubles each harmonic
        got = surrogate_grad_fouriersine(0.0, 0, 1, literal=True)
        assert got == pytest.approx(0.5 - 2.0, abs=0)

    def test_fouriersine_rejects_even_terms(self):
        with pytest.raises(ValueError):
            surrogate_grad_fouriersine(0.0, 3, n_terms=4)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SurrogateSpec(kind="nope")
        with pytest.raises(ValueError):
            SurrogateSpec(alpha=0.0)
        with pytest.raises(ValueError):
            SurrogateSpec(n_terms=2)


class TestRescale:
    def test_edge_values(self):
        assert rescale_factor(7) == 7.0
        assert rescale_factor(0) == 0.0

    def test_factor_table_exact(self):
        got = [rescale_factor(k) for k in range(8)]
        assert got == [0.0, 1 / 64, 1 / 16, 3 / 16, 1 / 2, 5 / 4, 3.0, 7.0]

    def test_strictly_increasing_from_k1(self):
        vals = [rescale_factor(k) for k in range(8)]
        assert all(vals[k + 1] > vals[k] for k in range(1, 7))


class TestEncodeBackward:
    @pytest.mark.parametrize("kind", codec.SURROGATE_KINDS)
    @pytest.mark.parametrize("rescale", [False, True])
    def test_matches_closed_form_per_plane(self, kind, rescale):
        xs = np.linspace(0, 1, 64)
        for k in (0, 3, 7):
            x = Tensor(xs.copy(), requires_grad=True)
            spec = SurrogateSpec(kind=kind, rescale=rescale)
            train = bitplane_encode(x, spec)
            backward(tt.tsum(tt.index0(train.tensor, 7 - k)))
            intensity = codec.intensity_of(xs)
            want = 255.0 * codec.surrogate_gradient(intensity, k, spec)
            if rescale:
                want = want * rescale_factor(k)
            assert np.allclose(x.grad, want, rtol=1e-12, atol=1e-12)

    def test_timesteps_sum_in_backward(self):
        x = Tensor(np.array([0.3]), requires_grad=True)
        spec = SurrogateSpec(kind="sigsine", rescale=True)
        backward(tt.tsum(bitplane_encode(x, spec).tensor))
        i = codec.intensity_of(np.array([0.3]))
        want = sum(
            255.0 * codec.surrogate_gradient(i, k, spec)[0] * rescale_factor(k) for k in range(8)
        )
        assert x.grad[0] == pytest.approx(want, rel=1e-12)


class TestDecoders:
    def test_rate_all_ones(self):
        assert decode_rate(Tensor(np.ones(8))).data == 1.0

    def test_rate_half(self):
        train = np.zeros(8)
        train[:4] = 1.0
        assert decode_rate(Tensor(train)).data == 0.5

    def test_rate_backward_is_one_eighth(self):
        x = Tensor(np.zeros(8), requires_grad=True)
        backward(decode_rate(x))
        assert x.grad.tolist() == [0.125] * 8

    def test_bitplane_all_ones(self):
        assert decode_bitplane(Tensor(np.ones(8))).data == 1.0

    def test_bitplane_msb_only(self):
        train = np.zeros(8)
        train[0] = 1.0
        assert decode_bitplane(Tensor(train)).data == pytest.approx(128 / 255)

    def test_bitplane_backward_weights(self):
        x = Tensor(np.zeros((8, 2)), requires_grad=True)
        backward(tt.tsum(decode_bitplane(x)))
        want = np.array([128, 64, 32, 16, 8, 4, 2, 1]) / 255.0
        assert np.allclose(x.grad[:, 0], want, rtol=0, atol=1e-15)

    def test_bitplane_rejects_wrong_steps(self):
        with pytest.raises(ShapeError):
            decode_bitplane(Tensor(np.zeros((4, 2))))


class TestSpikeTrainType:
    def test_validates_step_count(self):
        with pytest.raises(ShapeError):
            SpikeTrain(Tensor(np.zeros((4, 2))))

    def test_validates_binary_values(self):
        bad = np.zeros((8, 2))
        bad[3, 1] = 0.5
        with pytest.raises(ValueError):
            SpikeTrain(Tensor(bad))

    def test_accepts_valid(self):
        t = SpikeTrain(Tensor(np.ones((8, 2))))
        assert t.steps == 8

    def test_codec_config_fixed(self):
        with pytest.raises(ValueError):
            CodecConfig(t_steps=4)
        with pytest.raises(ValueError):
            CodecConfig(y_max=128)


class TestVarianceOrdering:
    @pytest.mark.parametrize("kind", ["sigsine", "tanhsine"])
    def test_unscaled_variance_non_increasing(self, kind):
        grid = np.arange(256, dtype=np.float64)
        spec = SurrogateSpec(kind=kind, rescale=False)
        variances = [float(np.var(codec.surrogate_gradient(grid, k, spec))) for k in range(8)]
        assert all(variances[k + 1] <= variances[k] for k in range(7))

    def test_rescaled_envelope_non_decreasing(self):
        env = [10 * np.pi * rescale_factor(k) / 2.0**k for k in range(8)]
        assert all(env[k + 1] >= env[k] for k in range(7))
        assert env[0] == 0.0 and env[7] == pytest.approx(7 * 10 * np.pi / 128)


def test_bit_pattern_strings():
    assert codec.bit_pattern(5) == "00000101"
    assert codec.bit_pattern(255) == "11111111"
    with pytest.raises(ValueError):
        codec.bit_pattern(256)
