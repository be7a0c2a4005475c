import collections
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from layoutgen.core import (
    BOS_ID,
    EOS_ID,
    CategoryVocab,
    Element,
    Layout,
    Vocab,
    decode_sequence,
    dequantize,
    encode_sequence,
    permute_seed,
    quantize,
    raster_sort,
    sequence_slots_ok,
)
from layoutgen.errors import (
    InvalidBin,
    InvalidConfig,
    InvalidCoordinate,
    LayoutTooLong,
    MalformedSequence,
    TruncatedElement,
    UnknownCategory,
)


def random_layout(rng, vocab, max_n=10):
    n = rng.randint(0, max_n)
    elems = [
        Element(
            category=rng.randrange(vocab.C),
            x_bin=rng.randrange(vocab.n_bins),
            y_bin=rng.randrange(vocab.n_bins),
            h_bin=rng.randrange(vocab.n_bins),
            w_bin=rng.randrange(vocab.n_bins),
        )
        for _ in range(n)
    ]
    return Layout(elements=elems)


class TestQuantize:
    def test_midpoint(self):
        assert quantize(0.5, 8) == 128

    def test_upper_boundary_clamps(self):
        assert quantize(1.0, 8) == 255

    def test_floor(self):
        assert quantize(0.3, 3) == 2

    def test_tolerance_clamp(self):
        assert quantize(-5e-7, 8) == 0
        assert quantize(1.0 + 5e-7, 8) == 255

    def test_out_of_range(self):
        with pytest.raises(InvalidCoordinate):
            quantize(-0.01, 8)
        with pytest.raises(InvalidCoordinate):
            quantize(1.01, 8)

    def test_bad_bits(self):
        with pytest.raises(InvalidConfig):
            quantize(0.5, 0)
        with pytest.raises(InvalidConfig):
            quantize(0.5, 17)


class TestDequantize:
    def test_bin_center(self):
        assert dequantize(0, 1) == 0.25

    def test_last_bin(self):
        assert dequantize(255, 8) == 0.998046875

    def test_out_of_range(self):
        with pytest.raises(InvalidBin):
            dequantize(256, 8)
        with pytest.raises(InvalidBin):
            dequantize(-1, 8)

    @given(
        v=st.floats(min_value=0.0, max_value=1.0, allow_nan=False),
        bits=st.integers(min_value=1, max_value=16),
    )
    def test_roundtrip_error_bound(self, v, bits):
        err = abs(dequantize(quantize(v, bits), bits) - v)
        assert err <= 2.0 ** -(bits + 1)


class TestRasterSort:
    def test_empty(self):
        assert raster_sort(Layout()).elements == []

    def test_y_order(self):
        a = Element(0, 5, 10, 1, 1)
        b = Element(0, 5, 2, 1, 1)
        assert raster_sort(Layout(elements=[a, b])).elements == [b, a]

    def test_category_tiebreak(self):
        a = Element(7, 4, 4, 1, 1)
        b = Element(3, 4, 4, 1, 1)
        assert raster_sort(Layout(elements=[a, b])).elements == [b, a]

    def test_idempotent_and_permutation(self):
        import random

        rng = random.Random(0)
        layout = random_layout(rng, Vocab(C=6, bits=4), max_n=20)
        once = raster_sort(layout)
        twice = raster_sort(once)
        assert once.elements == twice.elements
        assert collections.Counter(once.elements) == collections.Counter(
            layout.elements
        )


class TestCodec:
    vocab = Vocab(C=5, bits=8)

    def test_empty_layout(self):
        assert encode_sequence(Layout(), self.vocab) == [BOS_ID, EOS_ID]

    def test_length_5n_plus_2(self):
        layout = Layout(elements=[Element(0, 1, 2, 3, 4), Element(1, 5, 6, 7, 8)])
        assert len(encode_sequence(layout, self.vocab)) == 12

    def test_worked_example(self):
        layout = Layout(elements=[Element(2, 0, 0, 10, 20)])
        assert encode_sequence(layout, self.vocab) == [1, 5, 8, 8, 18, 28, 2]

    def test_too_long(self):
        layout = Layout(elements=[Element(0, 0, 0, 0, 0)] * 129)
        with pytest.raises(LayoutTooLong):
            encode_sequence(layout, self.vocab)

    def test_decode_empty(self):
        assert decode_sequence([BOS_ID, EOS_ID], self.vocab).elements == []

    def test_decode_bad_slot(self):
        coord = self.vocab.coord_token(0)
        with pytest.raises(MalformedSequence) as exc:
            decode_sequence([BOS_ID, coord, EOS_ID], self.vocab)
        assert exc.value.position == 1

    def test_decode_bad_coord_slot(self):
        cat = self.vocab.category_token(0)
        with pytest.raises(MalformedSequence) as exc:
            decode_sequence([BOS_ID, cat, cat, 8, 8, 8, EOS_ID], self.vocab)
        assert exc.value.position == 2

    def test_decode_truncated(self):
        cat = self.vocab.category_token(0)
        with pytest.raises(TruncatedElement):
            decode_sequence([BOS_ID, cat, 8, 8], self.vocab)

    def test_decode_missing_bos(self):
        with pytest.raises(MalformedSequence):
            decode_sequence([EOS_ID], self.vocab)

    def test_trailing_pad_ignored(self):
        layout = Layout(elements=[Element(1, 0, 1, 2, 3)])
        toks = encode_sequence(layout, self.vocab) + [0, 0, 0]
        assert decode_sequence(toks, self.vocab).elements == layout.elements

    def test_no_eos_complete_group_accepted(self):
        layout = Layout(elements=[Element(1, 0, 1, 2, 3)])
        toks = encode_sequence(layout, self.vocab)[:-1]
        assert decode_sequence(toks, self.vocab).elements == layout.elements

    def test_roundtrip_random(self):
        import random

        rng = random.Random(7)
        for _ in range(200):
            layout = random_layout(rng, self.vocab)
            assert decode_sequence(encode_sequence(layout, self.vocab), self.vocab) == layout

    def test_grammar_predicate(self):
        import random

        rng = random.Random(3)
        for _ in range(50):
            layout = random_layout(rng, self.vocab)
            assert sequence_slots_ok(encode_sequence(layout, self.vocab), self.vocab)

    def test_bad_category_rejected(self):
        with pytest.raises(UnknownCategory):
            encode_sequence(Layout(elements=[Element(9, 0, 0, 0, 0)]), self.vocab)
        with pytest.raises(InvalidBin):
            encode_sequence(Layout(elements=[Element(0, 256, 0, 0, 0)]), self.vocab)


class TestPermuteSeed:
    def test_single_element(self):
        layout = Layout(elements=[Element(0, 1, 2, 3, 4)])
        assert permute_seed(layout, 3).elements == layout.elements

    def test_deterministic(self):
        layout = Layout(elements=[Element(0, i, i, 1, 1) for i in range(6)])
        assert permute_seed(layout, 42).elements == permute_seed(layout, 42).elements

    def test_uniform_over_orderings(self):
        elems = [Element(0, i, 0, 1, 1) for i in range(3)]
        layout = Layout(elements=list(elems))
        counts = collections.Counter()
        draws = 10000
        for s in range(draws):
            counts[tuple(e.x_bin for e in permute_seed(layout, s).elements)] += 1
        assert len(counts) == 6
        for c in counts.values():
            assert abs(c / draws - 1 / 6) <= 0.02


class TestVocab:
    def test_ranges_disjoint_and_cover(self):
        v = Vocab(C=4, bits=3)
        kinds = [v.token_kind(t) for t in range(v.size)]
        assert kinds[:3] == ["pad", "bos", "eos"]
        assert kinds[3:7] == ["category"] * 4
        assert kinds[7:] == ["coordinate"] * 8
        assert v.size == 3 + 4 + 8

    def test_category_vocab(self):
        cv = CategoryVocab(("a", "b"))
        assert cv.count == 2
        assert cv.id_of("b") == 1
        assert cv.name_of(0) == "a"
        with pytest.raises(UnknownCategory):
            cv.id_of("zz")
        with pytest.raises(InvalidConfig):
            CategoryVocab(("a", "a"))
