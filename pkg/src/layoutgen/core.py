"""Domain types, coordinate quantization, element ordering, and the
layout <-> token-sequence codec.

A layout is an ordered list of categorized axis-aligned boxes on the unit
canvas. Geometry is stored as uniform-quantization bins of the box centroid
(x, y) and extents (h, w). A layout with n elements flattens to a token
sequence of length 5n + 2: bos, then one (category, x, y, h, w) group per
element, then eos.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field, replace

from .errors import (
    InvalidBin,
    InvalidConfig,
    InvalidCoordinate,
    LayoutTooLong,
    MalformedSequence,
    TruncatedElement,
    UnknownCategory,
)

MAX_ELEMENTS = 128
COORD_CLAMP_TOL = 1e-6

PAD_ID = 0
BOS_ID = 1
EOS_ID = 2

# Token kinds and sequence slot kinds.
KIND_PAD = "pad"
KIND_BOS = "bos"
KIND_EOS = "eos"
KIND_CATEGORY = "category"
KIND_COORD = "coordinate"
SLOT_CATEGORY_OR_EOS = "category_or_eos"
SLOT_COORD = "coordinate"


@dataclass(frozen=True)
class CategoryVocab:
    """Ordered category names; the list index is the category id."""

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(set(self.names)) != len(self.names):
            raise InvalidConfig("category names must be unique")
        if not self.names:
            raise InvalidConfig("category vocabulary is empty")

    @property
    def count(self) -> int:
        return len(self.names)

    def id_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise UnknownCategory(f"unknown category {name!r}") from None

    def name_of(self, category_id: int) -> str:
        if not 0 <= category_id < len(self.names):
            raise UnknownCategory(f"category id {category_id} out of range")
        return self.names[category_id]


@dataclass(frozen=True)
class Element:
    """One layout primitive: category id plus quantized geometry bins.

    Dequantized (x, y) is the box centroid and (h, w) its extents, all in
    [0, 1] of the unit canvas.
    """

    category: int
    x_bin: int
    y_bin: int
    h_bin: int
    w_bin: int
    continuous_attrs: tuple[float, ...] | None = None

    def bins(self) -> tuple[int, int, int, int]:
        return (self.x_bin, self.y_bin, self.h_bin, self.w_bin)

    def box(self, bits: int) -> tuple[float, float, float, float]:
        """Continuous (cx, cy, h, w) at bin centers."""
        return (
            dequantize(self.x_bin, bits),
            dequantize(self.y_bin, bits),
            dequantize(self.h_bin, bits),
            dequantize(self.w_bin, bits),
        )


@dataclass
class Layout:
    """An ordered list of elements plus canvas metadata.

    Canvas size is in pixels and only matters for rendering; all geometry
    is normalized to the unit square.
    """

    elements: list[Element] = field(default_factory=list)
    canvas_w: float = 1.0
    canvas_h: float = 1.0
    source_id: str | None = None

    def __len__(self) -> int:
        return len(self.elements)

    def categories(self) -> list[int]:
        return [e.category for e in self.elements]


@dataclass(frozen=True)
class Vocab:
    """Flat token vocabulary over special tokens, categories, and bins.

    Token ids: pad=0, bos=1, eos=2, categories [3, 3+C), coordinate bins
    [3+C, 3+C+2^bits). One shared coordinate range serves x, y, h and w;
    slot identity comes from sequence position.
    """

    C: int
    bits: int = 8

    def __post_init__(self):
        if not 1 <= self.bits <= 16:
            raise InvalidConfig(f"bits must be in [1, 16], got {self.bits}")
        if self.C < 1:
            raise InvalidConfig("need at least one category")

    @property
    def n_bins(self) -> int:
        return 1 << self.bits

    @property
    def coord_base(self) -> int:
        return 3 + self.C

    @property
    def size(self) -> int:
        return 3 + self.C + self.n_bins

    def category_token(self, category: int) -> int:
        if not 0 <= category < self.C:
            raise UnknownCategory(f"category id {category} out of range [0, {self.C})")
        return 3 + category

    def coord_token(self, bin_: int) -> int:
        if not 0 <= bin_ < self.n_bins:
            raise InvalidBin(f"bin {bin_} out of range [0, {self.n_bins})")
        return self.coord_base + bin_

    def token_kind(self, token: int) -> str:
        if token == PAD_ID:
            return KIND_PAD
        if token == BOS_ID:
            return KIND_BOS
        if token == EOS_ID:
            return KIND_EOS
        if 3 <= token < self.coord_base:
            return KIND_CATEGORY
        if self.coord_base <= token < self.size:
            return KIND_COORD
        raise MalformedSequence(-1, "token in vocabulary", token)

    def category_of(self, token: int) -> int:
        return token - 3

    def bin_of(self, token: int) -> int:
        return token - self.coord_base


def slot_kind(position: int) -> str:
    """Expected token kind at a sequence position (after bos at 0)."""
    if position == 0:
        return KIND_BOS
    return SLOT_CATEGORY_OR_EOS if (position - 1) % 5 == 0 else SLOT_COORD


def quantize(v: float, bits: int) -> int:
    """Map v in [0, 1] onto one of 2^bits uniform bins."""
    if not 1 <= bits <= 16:
        raise InvalidConfig(f"bits must be in [1, 16], got {bits}")
    if v < 0.0:
        if v < -COORD_CLAMP_TOL:
            raise InvalidCoordinate(f"coordinate {v} outside [0, 1]")
        v = 0.0
    elif v > 1.0:
        if v > 1.0 + COORD_CLAMP_TOL:
            raise InvalidCoordinate(f"coordinate {v} outside [0, 1]")
        v = 1.0
    n = 1 << bits
    return min(int(math.floor(v * n)), n - 1)


def dequantize(bin_: int, bits: int) -> float:
    """Reconstruct the bin center in [0, 1]."""
    n = 1 << bits
    if not 0 <= bin_ < n:
        raise InvalidBin(f"bin {bin_} out of range [0, {n})")
    return (bin_ + 0.5) / n


def raster_sort(layout: Layout) -> Layout:
    """Row-major scan order: sort by (y_bin, x_bin), stable tie-break by
    (category, w_bin, h_bin)."""
    ordered = sorted(
        layout.elements,
        key=lambda e: (e.y_bin, e.x_bin, e.category, e.w_bin, e.h_bin),
    )
    return replace(layout, elements=ordered)


def permute_seed(layout: Layout, seed: int) -> Layout:
    """Uniformly random element permutation, deterministic per seed."""
    elems = list(layout.elements)
    rng = random.Random(seed)
    # Fisher-Yates, high index down.
    for i in range(len(elems) - 1, 0, -1):
        j = rng.randint(0, i)
        elems[i], elems[j] = elems[j], elems[i]
    return replace(layout, elements=elems)


def encode_sequence(
    layout: Layout, vocab: Vocab, max_elements: int = MAX_ELEMENTS
) -> list[int]:
    """Flatten a layout to [bos, (cat, x, y, h, w) * n, eos]."""
    if len(layout) > max_elements:
        raise LayoutTooLong(f"{len(layout)} elements exceeds cap {max_elements}")
    tokens = [BOS_ID]
    for e in layout.elements:
        tokens.append(vocab.category_token(e.category))
        tokens.append(vocab.coord_token(e.x_bin))
        tokens.append(vocab.coord_token(e.y_bin))
        tokens.append(vocab.coord_token(e.h_bin))
        tokens.append(vocab.coord_token(e.w_bin))
    tokens.append(EOS_ID)
    return tokens


def decode_sequence(tokens, vocab: Vocab) -> Layout:
    """Inverse of encode_sequence; stops at the first eos, ignores padding
    after it. Raises MalformedSequence / TruncatedElement on bad input."""
    tokens = list(tokens)
    if not tokens or tokens[0] != BOS_ID:
        got = tokens[0] if tokens else -1
        raise MalformedSequence(0, KIND_BOS, got)
    elements = []
    i = 1
    while i < len(tokens):
        t = tokens[i]
        if t == EOS_ID:
            return Layout(elements=elements)
        if vocab.token_kind(t) != KIND_CATEGORY:
            raise MalformedSequence(i, SLOT_CATEGORY_OR_EOS, t)
        if i + 4 >= len(tokens):
            raise TruncatedElement(f"element group at position {i} is incomplete")
        group = tokens[i + 1 : i + 5]
        for j, g in enumerate(group):
            if vocab.token_kind(g) != KIND_COORD:
                raise MalformedSequence(i + 1 + j, SLOT_COORD, g)
        x, y, h, w = (vocab.bin_of(g) for g in group)
        elements.append(Element(vocab.category_of(t), x, y, h, w))
        i += 5
    # Ran out of tokens right at a group boundary with no eos: accept.
    return Layout(elements=elements)


def sequence_slots_ok(tokens, vocab: Vocab) -> bool:
    """True when every position holds a token legal for its slot kind."""
    if not tokens or tokens[0] != BOS_ID:
        return False
    seen_eos = False
    for pos in range(1, len(tokens)):
        t = tokens[pos]
        if seen_eos:
            if t != PAD_ID:
                return False
            continue
        kind = vocab.token_kind(t)
        slot = slot_kind(pos)
        if slot == SLOT_CATEGORY_OR_EOS:
            if kind == KIND_EOS:
                seen_eos = True
            elif kind != KIND_CATEGORY:
                return False
        else:
            if kind != KIND_COORD:
                return False
    return True
