import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikegibbs import rbm as rbm_mod
from spikegibbs.errors import ParameterError
from spikegibbs.neuron import PRESETS, SamplerParams, exact_activation_probability
from spikegibbs.rbm import (DigitalSampler, IdealSampler, JointDistribution, QuantizedRbm, Rbm,
                            canonical_rbm, conditional_probabilities, dbn_infer, energy,
                            exact_joint_distribution, field, fields, gibbs_chain,
                            iterate_chains, kl_divergence, load_model, model_for_sampler,
                            parse_sampler_spec, quantize, sample_layer, save_model,
                            state_bits)
from spikegibbs.rng import make_stream
from spikegibbs.sigmoid_lab import compare_curves, sweep_ideal, sweep_oracle


def zero_rbm(nv=3, nh=2):
    return Rbm(np.zeros((nv, nh)), np.zeros(nv), np.zeros(nh))


def random_rbm(seed, nv=3, nh=2):
    g = np.random.default_rng(seed)
    return Rbm(g.uniform(-2, 2, (nv, nh)), g.uniform(-1, 1, nv), g.uniform(-1, 1, nh))


def test_canonical_model_is_frozen():
    g = np.random.default_rng(42)
    m = canonical_rbm()
    np.testing.assert_array_equal(m.W, g.uniform(-2, 2, (3, 2)))
    np.testing.assert_array_equal(m.b_v, g.uniform(-1, 1, 3))
    np.testing.assert_array_equal(m.b_h, g.uniform(-1, 1, 2))


class TestEnergy:
    def test_zero_state(self):
        assert energy(random_rbm(0), [0, 0, 0], [0, 0]) == 0.0

    def test_hand_example(self):
        m = Rbm([[1.0]], [0.5], [-0.25])
        assert energy(m, [1], [1]) == -1.25

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10**6), state=st.integers(0, 31), i=st.integers(0, 2))
    def test_single_flip_closed_form(self, seed, state, i):
        m = random_rbm(seed)
        bits = state_bits(5)[state]
        v, h = bits[:3].copy(), bits[3:]
        flipped = v.copy()
        flipped[i] ^= 1
        delta = -(1 - 2 * v[i]) * (m.W[i] @ h + m.b_v[i])
        assert energy(m, flipped, h) - energy(m, v, h) == pytest.approx(delta, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            energy(zero_rbm(), [0, 1], [0, 0])


class TestExactDistribution:
    def test_zero_model_is_uniform(self):
        p = exact_joint_distribution(zero_rbm()).probabilities
        np.testing.assert_allclose(p, 1 / 32, atol=1e-15)

    def test_single_pair_ratio(self):
        p = exact_joint_distribution(Rbm([[0.7]], [0.0], [0.0])).probabilities
        # index: visible bit 0, hidden bit 1
        assert p[3] / p[0] == pytest.approx(np.exp(0.7), rel=1e-12)

    def test_indexing(self):
        m = Rbm(np.zeros((2, 1)), [3.0, 0.0], [0.0])
        p = exact_joint_distribution(m).probabilities
        assert p[1] / p[0] == pytest.approx(np.exp(3.0))  # bit 0 is visible unit 0

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10**6), nv=st.integers(1, 8), nh=st.integers(1, 8))
    def test_normalized(self, seed, nv, nh):
        p = exact_joint_distribution(random_rbm(seed, nv, nh)).probabilities
        assert abs(p.sum() - 1) <= 1e-10
        assert np.all(p >= 0)

    def test_size_limit(self):
        with pytest.raises(ParameterError):
            exact_joint_distribution(zero_rbm(11, 10))

    def test_visible_marginal_matches_ideal_chain(self):
        m = random_rbm(3)
        exact = exact_joint_distribution(m).marginal_visible()
        n = 100_000
        hist = gibbs_chain(m, [0, 0, 0], n, IdealSampler(), seed=5).histogram()
        sampled = hist.marginal_visible()
        # Gibbs samples are correlated; 3 sigma of an iid estimate, doubled for autocorrelation
        sigma = np.sqrt(exact * (1 - exact) / n)
        assert np.all(np.abs(sampled - exact) <= 2 * 3 * sigma)


class TestQuantize:
    def _one(self, w, scale, bits=9):
        return quantize(Rbm([[w]], [0.0], [0.0]), scale, bits)

    def test_exact_product(self):
        assert self._one(0.5, 50).W[0, 0] == 25

    def test_rounding(self):
        assert self._one(0.013, 50).W[0, 0] == 1
        assert self._one(0.01, 50).W[0, 0] == 1    # 0.5 rounds away from zero
        assert self._one(-0.01, 50).W[0, 0] == -1
        assert self._one(0.03, 50).W[0, 0] == 2    # 1.5 -> 2
        assert self._one(0.05, 50).W[0, 0] == 3    # 2.5 -> 3, not banker's 2

    def test_clipping_counted(self):
        q = self._one(10, 100)
        assert q.W[0, 0] == 255 and q.clip_count == 1
        q = quantize(Rbm([[-10.0, 0.1]], [20.0], [0.0, 0.0]), 100)
        assert q.W.tolist() == [[-255, 10]] and q.b_v.tolist() == [255]
        assert q.clip_count == 2

    def test_field_rounding_bound(self):
        m = random_rbm(8, 6, 4)
        q = quantize(m, 50)
        assert q.clip_count == 0
        for v in state_bits(6):
            real = 50 * (v @ m.W + m.b_h)
            # each of the active weights plus the bias contributes at most 1/2
            assert np.all(np.abs(fields(q, "v_to_h", v) - real) <= (v.sum() + 1) / 2)


class TestFields:
    def test_bias_only(self):
        q = QuantizedRbm(np.zeros((2, 3)), [4, 5], [1, -2, 3], 1.0)
        assert field(q, "v_to_h", [1, 1], 2) == 3
        assert field(q, "h_to_v", [0, 0, 0], 1) == 5

    def test_all_ones(self):
        q = QuantizedRbm([[1, 2], [3, 4], [5, 6]], [1, 1, 1], [10, 20], 1.0)
        assert fields(q, "v_to_h", [1, 1, 1]).tolist() == [19, 32]
        assert fields(q, "h_to_v", [1, 1]).tolist() == [4, 8, 12]

    def test_brute_force(self):
        g = np.random.default_rng(0)
        W = g.integers(-50, 50, (3, 2))
        b_v, b_h = g.integers(-9, 9, 3), g.integers(-9, 9, 2)
        q = QuantizedRbm(W, b_v, b_h, 1.0)
        for v in state_bits(3):
            for j in range(2):
                assert field(q, "v_to_h", v, j) == sum(int(v[i]) * int(W[i, j]) for i in range(3)) + b_h[j]
        for h in state_bits(2):
            for i in range(3):
                assert field(q, "h_to_v", h, i) == sum(int(h[j]) * int(W[i, j]) for j in range(2)) + b_v[i]

    def test_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            fields(quantize(zero_rbm(), 1), "v_to_h", [1, 1])
        with pytest.raises(ParameterError):
            fields(quantize(zero_rbm(), 1), "sideways", [1, 1, 1])


class TestSamplerSpec:
    def test_parse(self):
        assert parse_sampler_spec("ideal:50") == IdealSampler(50.0)
        got = parse_sampler_spec("digital:16,633,8,90:scale=100")
        assert got == DigitalSampler(PRESETS["P7"])
        assert parse_sampler_spec("digital:1,-130,8,0:scale=50").params == PRESETS["P1"]

    def test_round_trip(self):
        for spec in ("ideal:50", "digital:1,-80,8,102:scale=50"):
            assert parse_sampler_spec(spec).spec() == spec

    @pytest.mark.parametrize("bad", ["ideal", "ideal:", "ideal:-1", "digital:1,2,3:scale=5",
                                     "digital:1.5,0,3,1:scale=2", "digital:1,0,3,1",
                                     "digital:1,0,40,1:scale=2", "gauss:1"])
    def test_reject(self, bad):
        with pytest.raises(ParameterError):
            parse_sampler_spec(bad)


class TestSampleLayer:
    def test_saturated_fields_give_ones(self):
        p = PRESETS["P7"]
        q = QuantizedRbm(np.zeros((4, 3)), np.zeros(4), [p.saturation_high] * 3, 100,
                         weight_bits=16)
        streams = [make_stream(0, j) for j in range(3)]
        for _ in range(20):
            assert sample_layer(q, "v_to_h", [1, 0, 1, 0], DigitalSampler(p), streams).tolist() == [1, 1, 1]

    def test_ideal_zero_field(self):
        q = QuantizedRbm(np.zeros((2, 3)), np.zeros(2), np.zeros(3), 50)
        streams = [make_stream(1, j) for j in range(3)]
        n = 10_000
        total = sum(sample_layer(q, "v_to_h", [0, 0], IdealSampler(50), streams) for _ in range(n))
        assert np.all(np.abs(total / n - 0.5) <= 3 * np.sqrt(0.25 / n))

    def test_digital_frequencies_match_oracle(self):
        p = PRESETS["P2"]
        q = QuantizedRbm([[40, -60, 10], [-20, 30, 90]], [0, 0], [-30, 5, 70], 50)
        v = [1, 1]
        exact = exact_activation_probability(fields(q, "v_to_h", v), p)
        streams = [make_stream(2, j) for j in range(3)]
        n = 10_000
        total = sum(sample_layer(q, "v_to_h", v, DigitalSampler(p), streams) for _ in range(n))
        assert np.all(np.abs(total / n - exact) <= 4 * np.sqrt(exact * (1 - exact) / n))

    def test_stream_count_mismatch(self):
        q = quantize(zero_rbm(), 50)
        with pytest.raises(ParameterError):
            sample_layer(q, "v_to_h", [0, 0, 0], IdealSampler(50), [make_stream(0, 0)])

    def test_digital_requires_quantized(self):
        with pytest.raises(ParameterError):
            sample_layer(zero_rbm(), "v_to_h", [0, 0, 0], DigitalSampler(PRESETS["P1"]),
                         [make_stream(0, 0), make_stream(0, 1)])

    @pytest.mark.parametrize("name", ["P2", "P5", "P7"])
    def test_plug_equivalence_bound(self, name):
        p = PRESETS[name]
        m = canonical_rbm()
        q = quantize(m, p.scale)
        span = 300
        delta = compare_curves(sweep_oracle(p, -span, span, 1),
                               sweep_ideal(p.scale, -span, span, 1))["sup_norm"]
        for v in state_bits(3):
            f = fields(q, "v_to_h", v)
            assert np.all(np.abs(f) <= span)
            digital = conditional_probabilities(q, "v_to_h", v, DigitalSampler(p))
            ideal = conditional_probabilities(q, "v_to_h", v, IdealSampler(p.scale))
            assert np.all(np.abs(digital - ideal) <= delta + 1e-15)


class TestGibbsChain:
    def test_zero_model_uniform(self):
        hist = gibbs_chain(zero_rbm(), [0, 0, 0], 100_000, IdealSampler(), seed=3).histogram()
        assert 0.5 * np.abs(hist.probabilities - 1 / 32).sum() <= 0.02

    def test_clamped_visible_never_changes(self):
        m = random_rbm(1)
        res = gibbs_chain(m, [1, 0, 1], 500, IdealSampler(), clamp_mask=[1, 1, 1],
                          seed=0, record_states=True)
        assert np.all(res.states & 0b111 == 0b101)

    def test_partial_clamp(self):
        q = quantize(random_rbm(2), 50)
        res = gibbs_chain(q, [0, 1, 0], 2000, DigitalSampler(PRESETS["P2"]),
                          clamp_mask=[0, 1, 0], seed=1, record_states=True)
        assert np.all(res.states & 0b010)
        assert len(np.unique(res.states & 0b101)) > 1

    def test_deterministic(self):
        q = quantize(random_rbm(2), 100)
        kind = DigitalSampler(PRESETS["P7"])
        a = gibbs_chain(q, [0, 0, 0], 3000, kind, seed=4, record_states=True).states
        b = gibbs_chain(q, [0, 0, 0], 3000, kind, seed=4, record_states=True).states
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("spec", ["ideal:50", "digital:1,-80,8,102:scale=50",
                                      "digital:16,633,8,90:scale=100"])
    @pytest.mark.parametrize("mask", [None, [0, 1, 0]])
    def test_lookup_path_matches_direct_path(self, monkeypatch, spec, mask):
        kind = parse_sampler_spec(spec)
        q = model_for_sampler(random_rbm(5), kind)
        fast = gibbs_chain(q, [1, 1, 0], 5000, kind, mask, seed=9, chain=2,
                           record_states=True).states
        monkeypatch.setattr(rbm_mod, "_TABULATE_LIMIT", 0)
        slow = gibbs_chain(q, [1, 1, 0], 5000, kind, mask, seed=9, chain=2,
                           record_states=True).states
        assert np.array_equal(fast, slow)

    def test_batched_chains_match_single_chains(self):
        q = quantize(random_rbm(6), 50)
        kind = DigitalSampler(PRESETS["P2"])
        init = np.array([[0, 0, 0], [1, 0, 1], [1, 1, 1]])
        batch = [(v.copy(), h.copy()) for v, h in
                 iterate_chains(q, init, 40, kind, seed=3, chain_ids=[4, 5, 6], block=7)]
        for c in range(3):
            single = list(iterate_chains(q, init[c:c + 1], 40, kind, seed=3, chain_ids=[4 + c]))
            for (bv, bh), (sv, sh) in zip(batch, single):
                assert np.array_equal(bv[c], sv[0]) and np.array_equal(bh[c], sh[0])

    def test_initial_state_not_counted(self):
        hist = gibbs_chain(zero_rbm(), [1, 1, 1], 10, IdealSampler(), seed=0).histogram()
        assert hist.n_samples == 10

    def test_sample_layer_consistency(self):
        # the first sweep's hidden sample equals a direct sample_layer call on the same streams
        q = quantize(random_rbm(7), 50)
        kind = DigitalSampler(PRESETS["P1"])
        v0 = [1, 0, 1]
        _, h = next(iterate_chains(q, [v0], 1, kind, seed=2, chain_ids=[0]))
        streams = [make_stream(2, 3 + j) for j in range(2)]
        assert h[0].tolist() == sample_layer(q, "v_to_h", v0, kind, streams).tolist()


class TestKL:
    def test_identity(self):
        p = exact_joint_distribution(random_rbm(0))
        hist = JointDistribution(p.probabilities, 3, 2)
        assert kl_divergence(p, hist, epsilon=0.0) == pytest.approx(0.0, abs=1e-15)

    def test_known_value(self):
        exact = JointDistribution(np.full(4, 0.25), 1, 1)
        hist = JointDistribution([0.5, 0.5, 0.0, 0.0], 1, 1, n_samples=2)
        assert kl_divergence(exact, hist, epsilon=0.0) == np.inf
        got = kl_divergence(exact, hist, epsilon=1.0)
        q = np.array([2, 2, 1, 1]) / 6
        assert got == pytest.approx(np.sum(0.25 * np.log(0.25 / q)))

    def test_mismatched_spaces(self):
        with pytest.raises(ParameterError):
            kl_divergence(exact_joint_distribution(zero_rbm()),
                          exact_joint_distribution(zero_rbm(2, 2)))

    def test_ideal_sampler_small(self):
        m = canonical_rbm()
        exact = exact_joint_distribution(m)
        hist = gibbs_chain(m, [0, 0, 0], 100_000, IdealSampler(50), seed=0).histogram()
        assert kl_divergence(exact, hist) <= 1e-3

    def test_kl_decreases_with_chain_length(self):
        m = canonical_rbm()
        exact = exact_joint_distribution(m)
        means = []
        for n in (1_000, 10_000, 100_000):
            kls = [kl_divergence(exact, gibbs_chain(m, [0, 0, 0], n, IdealSampler(), seed=1,
                                                    chain=t).histogram()) for t in range(3)]
            means.append(np.mean(kls))
        assert means[0] > means[1] > means[2]

    def test_digital_leakless_worse_than_leaky(self):
        """KL of (1,-130,8,0) in [0.005, 0.2] and above that of (1,-80,8,102)."""
        m = canonical_rbm()
        exact = exact_joint_distribution(m)

        def mean_kl(spec):
            kind = parse_sampler_spec(spec)
            q = model_for_sampler(m, kind)
            return np.mean([kl_divergence(exact, gibbs_chain(q, [0, 0, 0], 100_000, kind,
                                                             seed=1, chain=t).histogram())
                            for t in range(3)])

        leakless = mean_kl("digital:1,-130,8,0:scale=50")
        leaky = mean_kl("digital:1,-80,8,102:scale=50")
        assert leakless > leaky
        assert 0.005 <= leakless <= 0.2


class TestDBN:
    def test_single_rbm_equals_sample_layer(self):
        q = quantize(random_rbm(0, 4, 3), 50)
        kind = DigitalSampler(PRESETS["P2"])
        layers = dbn_infer([q], [1, 0, 1, 1], kind, seed=5)
        streams = [make_stream(5, j) for j in range(3)]
        assert layers[1].tolist() == sample_layer(q, "v_to_h", [1, 0, 1, 1], kind, streams).tolist()

    def test_saturating_stack(self):
        stack = [QuantizedRbm(np.zeros((4, 3)), np.zeros(4), [2000] * 3, 50, 16),
                 QuantizedRbm(np.zeros((3, 2)), np.zeros(3), [2000] * 2, 50, 16)]
        layers = dbn_infer(stack, [0, 0, 0, 0], DigitalSampler(PRESETS["P7"]), seed=0)
        assert layers[1].tolist() == [1, 1, 1] and layers[2].tolist() == [1, 1]

    def test_deterministic(self):
        stack = [quantize(random_rbm(1, 6, 4), 50), quantize(random_rbm(2, 4, 3), 50)]
        kind = IdealSampler(50)
        a = dbn_infer(stack, [1, 0, 1, 0, 1, 1], kind, seed=7)
        b = dbn_infer(stack, [1, 0, 1, 0, 1, 1], kind, seed=7)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_chain_mismatch(self):
        with pytest.raises(ParameterError):
            dbn_infer([random_rbm(0, 4, 3), random_rbm(1, 2, 2)], [0] * 4, IdealSampler(), 0)


class TestModelJson:
    def test_round_trip(self, tmp_path):
        m = canonical_rbm()
        save_model(m, tmp_path / "m.json")
        back = load_model(tmp_path / "m.json")
        np.testing.assert_array_equal(back.W, m.W)
        q = quantize(m, 50)
        save_model(q, tmp_path / "q.json")
        back = load_model(tmp_path / "q.json")
        assert isinstance(back, QuantizedRbm) and back.scale == 50
        np.testing.assert_array_equal(back.W, q.W)

    def test_row_major_layout(self, tmp_path):
        d = {"n_visible": 2, "n_hidden": 3, "W": [1, 2, 3, 4, 5, 6], "b_v": [0, 0], "b_h": [0, 0, 0]}
        (tmp_path / "m.json").write_text(json.dumps(d))
        assert load_model(tmp_path / "m.json").W.tolist() == [[1, 2, 3], [4, 5, 6]]

    @pytest.mark.parametrize("text", ["{", "[]", '{"n_visible": 1}',
                                      '{"n_visible": 1, "n_hidden": 1, "W": [1, 2], "b_v": [0], "b_h": [0]}'])
    def test_malformed(self, tmp_path, text):
        (tmp_path / "m.json").write_text(text)
        with pytest.raises(ParameterError):
            load_model(tmp_path / "m.json")
