import numpy as np
import pytest

from synkbqa import autodiff as ad
from synkbqa import encoders as enc
from synkbqa.autodiff import Tensor
from synkbqa.deptree import DepTree, Token
from synkbqa.embeddings import ENTITY_TOKEN, TIME_TOKEN
from synkbqa.encoders import (BiGRUParams, DropoutCtx, GRUDirParams,
                              TreePassParams, anonymize, bigru_encode,
                              combine, encode_sdp, encode_tpf, encode_treegru,
                              focus_token_index, gru_step, tree_gru_pass)
from synkbqa.kb import Value
from synkbqa.qgraph import EntityLink, FocusLinks, TimeLink


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def numpy_gru_step(p, x, h):
    """Independent dense reference for one GRU step."""
    r = sigmoid(p.w_r.data @ x + p.u_r.data @ h + p.b_r.data)
    z = sigmoid(p.w_z.data @ x + p.u_z.data @ h + p.b_z.data)
    cand = np.tanh(p.w_h.data @ x + p.u_h.data @ (r * h) + p.b_h.data)
    return (1.0 - z) * h + z * cand


@pytest.fixture
def rng():
    return np.random.default_rng(7)


class TestGru:
    def test_step_matches_numpy(self, rng):
        p = GRUDirParams.create(3, 4, rng)
        x, h = rng.normal(size=3), rng.normal(size=4)
        out = gru_step(p, Tensor(x), Tensor(h))
        np.testing.assert_allclose(out.data, numpy_gru_step(p, x, h), rtol=1e-12)

    def test_zero_update_gate_keeps_state(self, rng):
        p = GRUDirParams.create(2, 2, rng)
        p.w_z.data[:] = 0.0
        p.u_z.data[:] = 0.0
        p.b_z.data[:] = -50.0  # z ~ 0 -> h' ~ h
        h = np.array([0.3, -0.7])
        out = gru_step(p, Tensor(np.ones(2)), Tensor(h))
        np.testing.assert_allclose(out.data, h, atol=1e-12)

    def test_bigru_concat_of_directions(self, rng):
        p = BiGRUParams.create(3, 4, rng)
        xs = [rng.normal(size=3) for _ in range(5)]
        out = bigru_encode([Tensor(x) for x in xs], p)
        hf = np.zeros(4)
        for x in xs:
            hf = numpy_gru_step(p.fwd, x, hf)
        hb = np.zeros(4)
        for x in reversed(xs):
            hb = numpy_gru_step(p.bwd, x, hb)
        np.testing.assert_allclose(out.data, np.concatenate([hf, hb]), rtol=1e-12)

    def test_empty_sequence_rejected(self, rng):
        with pytest.raises(ValueError):
            bigru_encode([], BiGRUParams.create(2, 2, rng))


class TestAnonymize:
    def test_entity_and_time_spans(self):
        tokens = "what movies did Diana play in before 1990 ?".split()
        links = FocusLinks(entities=[EntityLink((3, 4), "diana", 1.0)],
                           times=[TimeLink((7, 8), "<", Value.year(1990))])
        assert anonymize(tokens, links) == \
            ["what", "movies", "did", ENTITY_TOKEN, "play", "in", "before", TIME_TOKEN, "?"]

    def test_multiword_span_collapses(self):
        tokens = "who is Diana Prince ?".split()
        links = FocusLinks(entities=[EntityLink((2, 4), "diana", 1.0)])
        assert anonymize(tokens, links) == ["who", "is", ENTITY_TOKEN, "?"]

    def test_overlap_longer_span_wins(self):
        tokens = "a b c d".split()
        links = FocusLinks(entities=[EntityLink((1, 3), "e1", 1.0),
                                     EntityLink((2, 4), "e2", 0.5)],
                           times=[TimeLink((2, 3), "==", Value.year(1990))])
        # (1,3) length 2 beats both the other entity (same length, later
        # start) and the length-1 time span
        assert anonymize(tokens, links) == ["a", ENTITY_TOKEN, "d"]

    def test_no_links_identity(self):
        tokens = "plain words only".split()
        assert anonymize(tokens, FocusLinks()) == tokens


class TestFocusToken:
    def test_min_depth_wins(self, fig_tree):
        # span covering "did Diana play": play is the root (depth 0)
        assert focus_token_index(fig_tree, (2, 5)) == 5

    def test_rightmost_tie_break(self, fig_tree):
        # "movies did": both depth 1 -> rightmost (did, index 3)
        assert focus_token_index(fig_tree, (1, 3)) == 3

    def test_single_token_span(self, fig_tree):
        assert focus_token_index(fig_tree, (0, 1)) == 1


class TestEncodeSdp:
    def make_vec_fns(self, dim, rng):
        table = {}

        def wv(form):
            if ("w", form) not in table:
                table[("w", form)] = Tensor(rng.normal(size=dim))
            return table[("w", form)]

        def lv(label):
            if ("l", label) not in table:
                table[("l", label)] = Tensor(rng.normal(size=dim))
            return table[("l", label)]
        return wv, lv

    def test_no_foci_zero_vector(self, fig_tree, rng):
        p = BiGRUParams.create(3, 4, rng)
        wv, lv = self.make_vec_fns(3, rng)
        out = encode_sdp(fig_tree, [], wv, lv, p)
        np.testing.assert_array_equal(out.data, np.zeros(8))

    def test_single_focus_equals_path_bigru(self, fig_tree, rng):
        p = BiGRUParams.create(3, 4, rng)
        wv, lv = self.make_vec_fns(3, rng)
        out = encode_sdp(fig_tree, [(3, 4)], wv, lv, p)
        # path what -> Diana: what -det-> movies -dobj-> play -nsubj-> Diana
        xs = [wv("what"), lv("det"), wv("movies"), lv("dobj"), wv("play"),
              lv("nsubj"), wv("Diana")]
        expected = bigru_encode(xs, p)
        np.testing.assert_allclose(out.data, expected.data, rtol=1e-12)

    def test_multiple_foci_maxpool_permutation_invariant(self, fig_tree, rng):
        p = BiGRUParams.create(3, 4, rng)
        wv, lv = self.make_vec_fns(3, rng)
        spans = [(3, 4), (5, 6), (1, 2)]
        a = encode_sdp(fig_tree, spans, wv, lv, p)
        b = encode_sdp(fig_tree, list(reversed(spans)), wv, lv, p)
        np.testing.assert_array_equal(a.data, b.data)

    def test_maxpool_dominates_each_path(self, fig_tree, rng):
        p = BiGRUParams.create(3, 4, rng)
        wv, lv = self.make_vec_fns(3, rng)
        both = encode_sdp(fig_tree, [(3, 4), (5, 6)], wv, lv, p)
        one = encode_sdp(fig_tree, [(3, 4)], wv, lv, p)
        assert np.all(both.data >= one.data - 1e-15)


class TestEncodeTpf:
    def test_inputs_concat_word_and_depth(self, fig_tree, rng):
        wdim, pdim, hidden = 3, 2, 4
        p = BiGRUParams.create(wdim + pdim, hidden, rng)
        pos = Tensor(rng.normal(size=(6, pdim)))  # rows 0..max_depth+1
        wvs = [Tensor(rng.normal(size=wdim)) for _ in range(len(fig_tree))]
        out = encode_tpf(fig_tree, wvs, pos, 4, p)
        depths = [2, 1, 1, 1, 0, 1, 1]
        xs = [Tensor(np.concatenate([wvs[i].data, pos.data[depths[i]]]))
              for i in range(7)]
        expected = bigru_encode(xs, p)
        np.testing.assert_allclose(out.data, expected.data, rtol=1e-12)

    def test_depth_overflow_uses_last_row(self, rng):
        # chain of 5: depths 0..4 with max_depth=2 -> rows 0,1,2,3,3
        tree = DepTree([Token(1, "a", 0, "root")] +
                       [Token(i, "w", i - 1, "x") for i in range(2, 6)])
        wdim, pdim = 2, 2
        p = BiGRUParams.create(wdim + pdim, 3, rng)
        pos = Tensor(rng.normal(size=(4, pdim)))
        wvs = [Tensor(np.zeros(wdim)) for _ in range(5)]
        out = encode_tpf(tree, wvs, pos, 2, p)
        xs = [Tensor(np.concatenate([np.zeros(wdim), pos.data[min(d, 3)]]))
              for d in range(5)]
        expected = bigru_encode(xs, p)
        np.testing.assert_allclose(out.data, expected.data, rtol=1e-12)

    def test_length_mismatch_rejected(self, fig_tree, rng):
        p = BiGRUParams.create(4, 3, rng)
        with pytest.raises(ValueError, match="mismatch"):
            encode_tpf(fig_tree, [Tensor(np.zeros(2))], Tensor(np.zeros((3, 2))), 1, p)


def numpy_gate(g, l, hl, hr):
    return g.w.data @ l + g.u.data @ hl + g.v.data @ hr + g.b.data


def numpy_node_state(p, l, hl, hr):
    rl = sigmoid(numpy_gate(p.gates["r_l"], l, hl, hr))
    rr = sigmoid(numpy_gate(p.gates["r_r"], l, hl, hr))
    zl = sigmoid(numpy_gate(p.gates["z_l"], l, hl, hr))
    zr = sigmoid(numpy_gate(p.gates["z_r"], l, hl, hr))
    zg = sigmoid(numpy_gate(p.gates["z"], l, hl, hr))
    cand = np.tanh(numpy_gate(p.gates["cand"], l, rl * hl, rr * hr))
    return zl * hl + zr * hr + zg * cand


class TestTreeGru:
    def small_tree(self):
        # b <- a -> c with a as root; b left child, c right child
        return DepTree([Token(1, "b", 2, "x"), Token(2, "a", 0, "root"),
                        Token(3, "c", 2, "y")])

    def edge_vecs(self, tree, dim, rng):
        return {i: Tensor(rng.normal(size=dim)) for i in range(1, len(tree) + 1)}

    def test_bottom_up_matches_numpy(self, rng):
        tree = self.small_tree()
        p = TreePassParams.create(2, 3, rng)
        ev = self.edge_vecs(tree, 2, rng)
        states = tree_gru_pass(tree, ev, p, "bottom_up")
        z = np.zeros(3)
        hb = numpy_node_state(p, ev[1].data, z, z)
        hc = numpy_node_state(p, ev[3].data, z, z)
        ha = numpy_node_state(p, ev[2].data, hb, hc)
        np.testing.assert_allclose(states[1].data, hb, rtol=1e-12)
        np.testing.assert_allclose(states[3].data, hc, rtol=1e-12)
        np.testing.assert_allclose(states[2].data, ha, rtol=1e-12)

    def test_bottom_up_sums_multiple_children(self, rng):
        # root with two left children
        tree = DepTree([Token(1, "l1", 3, "x"), Token(2, "l2", 3, "x"),
                        Token(3, "r", 0, "root")])
        p = TreePassParams.create(2, 3, rng)
        ev = self.edge_vecs(tree, 2, rng)
        states = tree_gru_pass(tree, ev, p, "bottom_up")
        z = np.zeros(3)
        h1 = numpy_node_state(p, ev[1].data, z, z)
        h2 = numpy_node_state(p, ev[2].data, z, z)
        expected = numpy_node_state(p, ev[3].data, h1 + h2, z)
        np.testing.assert_allclose(states[3].data, expected, rtol=1e-12)

    def test_top_down_parent_in_left_slot(self, rng):
        tree = self.small_tree()
        p = TreePassParams.create(2, 3, rng)
        ev = self.edge_vecs(tree, 2, rng)
        states = tree_gru_pass(tree, ev, p, "top_down")
        z = np.zeros(3)
        ha = numpy_node_state(p, ev[2].data, z, z)
        np.testing.assert_allclose(states[2].data, ha, rtol=1e-12)
        np.testing.assert_allclose(states[1].data,
                                   numpy_node_state(p, ev[1].data, ha, z), rtol=1e-12)
        np.testing.assert_allclose(states[3].data,
                                   numpy_node_state(p, ev[3].data, ha, z), rtol=1e-12)

    def test_unknown_direction_rejected(self, rng):
        tree = self.small_tree()
        p = TreePassParams.create(2, 3, rng)
        with pytest.raises(ValueError):
            tree_gru_pass(tree, self.edge_vecs(tree, 2, rng), p, "sideways")

    def test_encode_treegru_matches_manual_composition(self, rng):
        tree = self.small_tree()
        wdim, edim, th, hidden = 2, 2, 3, 4
        up = TreePassParams.create(edim, th, rng)
        down = TreePassParams.create(edim, th, rng)
        big = BiGRUParams.create(wdim + 2 * th, hidden, rng)
        ev = self.edge_vecs(tree, edim, rng)
        wvs = [Tensor(rng.normal(size=wdim)) for _ in range(3)]
        out = encode_treegru(tree, wvs, ev, up, down, big)
        su = tree_gru_pass(tree, ev, up, "bottom_up")
        sd = tree_gru_pass(tree, ev, down, "top_down")
        xs = [Tensor(np.concatenate([wvs[i - 1].data, su[i].data, sd[i].data]))
              for i in (1, 2, 3)]
        np.testing.assert_allclose(out.data, bigru_encode(xs, big).data, rtol=1e-12)


class TestCombineAndDropout:
    def test_combine_no_extras_is_identity(self):
        q = Tensor(np.array([1.0, 2.0]))
        assert combine(q, []) is q

    def test_combine_adds_extras(self):
        q = Tensor(np.array([1.0, 2.0]))
        out = combine(q, [Tensor(np.array([0.5, 0.5])), Tensor(np.array([1.0, 0.0]))])
        np.testing.assert_array_equal(out.data, [2.5, 2.5])

    def test_dropout_ctx_eval_identity(self):
        x = Tensor(np.ones(4))
        assert DropoutCtx(0.5, np.random.default_rng(0), False).apply(x) is x
        assert DropoutCtx(0.0, np.random.default_rng(0), True).apply(x) is x

    def test_dropout_ctx_training_scales(self):
        rng_ = np.random.default_rng(0)
        out = DropoutCtx(0.5, rng_, True).apply(Tensor(np.ones(1000)))
        assert set(np.round(np.unique(out.data), 12)) <= {0.0, 2.0}


class TestGradientsThroughEncoders:
    def test_treegru_params_receive_gradients(self, rng):
        tree = DepTree([Token(1, "b", 2, "x"), Token(2, "a", 0, "root"),
                        Token(3, "c", 2, "y")])
        up = TreePassParams.create(2, 2, rng)
        down = TreePassParams.create(2, 2, rng)
        big = BiGRUParams.create(2 + 4, 2, rng)
        tape = ad.Tape()
        params = {**up.named("up"), **down.named("down"), **big.named("big")}
        for t in params.values():
            tape.watch(t)
        ev = {i: ad.constant(np.ones(2) * 0.1) for i in (1, 2, 3)}
        wvs = [ad.constant(np.ones(2) * 0.2) for _ in range(3)]
        out = encode_treegru(tree, wvs, ev, up, down, big)
        tape.backward(ad.vsum(out))
        # the top-down pass keeps its right slot at zero, so its r_r/z_r
        # gates legitimately receive no gradient
        dead = {"down.r_r.w", "down.z_r.w"}
        for name, t in params.items():
            if not name.endswith(".w") or name in dead:
                continue
            assert np.abs(t.grad).max() > 0, name
        for name in dead:
            np.testing.assert_array_equal(params[name].grad, 0.0)
