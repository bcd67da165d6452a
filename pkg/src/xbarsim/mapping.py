"""Integer -> digital -> analog translation for the BNN and TNN mappings.

Each mapping is described by three ingredients:

* a weight encoding into one or two binary cell planes,
* an input encoding into one or two binary drive planes,
* a list of crossbar *reads*.  A read drives one or more input planes (stacked
  along the rows) against a column of weight planes and is either
  differential (a positive and a negative column, subtracted in analog before
  the ADC) or single-ended.  Each read carries an integer coefficient; the
  coefficients absorb the factor 2 of the linear-scaling identities and the
  ``<< 1`` of the 2-bit planes.

The integer result is ``sum(coef * ADC(read)) / I_mm + analog + digital``
where the analog term cancels the HRS current that single-ended reads pick up
from every driven row, and the digital term is the encoding offset.

Two physical realizations exist for mappings with more than one drive
pattern.  ``MORE_CYCLES`` stores the weight planes once and applies the drive
patterns one after another.  ``MORE_CELLS`` gives every drive pattern its own
block of rows and columns (block-diagonal placement) and reads all blocks in
a single cycle; a column only integrates the rows of its own block.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, reduce
from math import gcd

import numpy as np

from .errors import EncodingError, ShapeError, TileTooLarge
from .xbar import (
    AdcConfig,
    AdcMode,
    Crossbar,
    adc_convert,
    column_currents,
    differential_i_max,
    single_ended_i_max,
)


class Kind(enum.Enum):
    BNN_I = "bnn-i"
    BNN_II = "bnn-ii"
    BNN_III = "bnn-iii"
    BNN_IV = "bnn-iv"
    BNN_V = "bnn-v"
    BNN_VI = "bnn-vi"
    TNN_I = "tnn-i"
    TNN_II = "tnn-ii"
    TNN_III = "tnn-iii"
    TNN_IV = "tnn-iv"
    TNN_V = "tnn-v"

    @property
    def ternary(self) -> bool:
        return self.name.startswith("TNN")


class Variant(enum.Enum):
    MORE_CELLS = "cells"
    MORE_CYCLES = "cycles"


class DigitalTerm(enum.Enum):
    NONE = "/"
    MINUS_ROWSUM = "-sum(w)"
    PLUS_ROWSUM = "+sum(w)"
    MINUS_SUM_INPUT = "-sum(i)"
    PLUS_SUM_INPUT = "+sum(i)"
    MINUS_COUNT = "-N"


# value -> bits per plane, indexed by value + 1 for value in (-1, 0, +1).
# -1 marks a value outside the encoding's alphabet.
@dataclass(frozen=True)
class _Encoding:
    planes: tuple[str, ...]
    table: tuple[tuple[int, ...], ...]

    def encode(self, values: np.ndarray) -> dict[str, np.ndarray]:
        lut = np.asarray(self.table, dtype=np.int8)
        bits = lut[values + 1]
        return {name: bits[..., k].astype(np.uint8) for k, name in enumerate(self.planes)}


_BAD = (-1, -1)
W_DIFF = _Encoding(("p", "m"), ((0, 1), _BAD, (1, 0)))
W_DIFF_T = _Encoding(("p", "m"), ((0, 1), (0, 0), (1, 0)))
W_LS_POS = _Encoding(("g",), ((0,), (-1,), (1,)))
W_LS_NEG = _Encoding(("g",), ((1,), (-1,), (0,)))
W_TWOS = _Encoding(("g1", "g0"), ((1, 1), (0, 0), (0, 1)))
W_OFFSET = _Encoding(("g1", "g0"), ((0, 0), (0, 1), (1, 0)))

# BNN inputs may contain 0 only as an absent (padded) position: nothing is
# driven and the position is dropped from the corrections.
I_BNN_POS = _Encoding(("v",), ((0,), (0,), (1,)))
I_BNN_NEG = _Encoding(("v",), ((1,), (0,), (0,)))
I_DIFF = _Encoding(("p", "m"), ((0, 1), (0, 0), (1, 0)))
I_TWOS = _Encoding(("b1", "b0"), ((1, 1), (0, 0), (0, 1)))
I_OFFSET = _Encoding(("b1", "b0"), ((0, 0), (0, 1), (1, 0)))


@dataclass(frozen=True)
class Read:
    drive: tuple[str, ...]
    pos: tuple[str, ...]
    neg: tuple[str, ...] | None
    coef: int

    @property
    def differential(self) -> bool:
        return self.neg is not None


@dataclass(frozen=True)
class _Def:
    inputs: _Encoding
    weights: _Encoding
    reads: tuple[Read, ...]
    digital: DigitalTerm


def _r(drive, pos, neg, coef):
    as_t = lambda s: tuple(s.split(",")) if s else None
    return Read(as_t(drive), as_t(pos), as_t(neg), coef)


_DEFS: dict[Kind, _Def] = {
    Kind.BNN_I: _Def(I_BNN_POS, W_DIFF, (_r("v", "p", "m", 2),), DigitalTerm.MINUS_ROWSUM),
    Kind.BNN_II: _Def(I_BNN_NEG, W_DIFF, (_r("v", "m", "p", 2),), DigitalTerm.PLUS_ROWSUM),
    Kind.BNN_III: _Def(
        I_DIFF, W_LS_POS, (_r("p", "g", None, 2), _r("m", "g", None, -2)), DigitalTerm.MINUS_SUM_INPUT
    ),
    Kind.BNN_IV: _Def(
        I_DIFF, W_LS_NEG, (_r("p", "g", None, -2), _r("m", "g", None, 2)), DigitalTerm.PLUS_SUM_INPUT
    ),
    Kind.BNN_V: _Def(I_DIFF, W_DIFF, (_r("p,m", "p,m", None, 2),), DigitalTerm.MINUS_COUNT),
    Kind.BNN_VI: _Def(I_DIFF, W_DIFF, (_r("p", "p", "m", 1), _r("m", "p", "m", -1)), DigitalTerm.NONE),
    Kind.TNN_I: _Def(I_DIFF, W_DIFF_T, (_r("p", "p", "m", 1), _r("m", "p", "m", -1)), DigitalTerm.NONE),
    Kind.TNN_II: _Def(I_TWOS, W_DIFF_T, (_r("b0", "p", "m", 1), _r("b1", "p", "m", -2)), DigitalTerm.NONE),
    Kind.TNN_III: _Def(
        I_OFFSET, W_DIFF_T, (_r("b0", "p", "m", 1), _r("b1", "p", "m", 2)), DigitalTerm.MINUS_ROWSUM
    ),
    Kind.TNN_IV: _Def(
        I_DIFF,
        W_TWOS,
        (
            _r("p", "g0", None, 1),
            _r("m", "g0", None, -1),
            _r("p", "g1", None, -2),
            _r("m", "g1", None, 2),
        ),
        DigitalTerm.NONE,
    ),
    Kind.TNN_V: _Def(
        I_DIFF,
        W_OFFSET,
        (
            _r("p", "g0", None, 1),
            _r("m", "g0", None, -1),
            _r("p", "g1", None, 2),
            _r("m", "g1", None, -2),
        ),
        DigitalTerm.MINUS_SUM_INPUT,
    ),
}

def _distinct(items):
    seen = []
    for it in items:
        if it not in seen:
            seen.append(it)
    return seen


@dataclass(frozen=True)
class ColumnGroup:
    planes: tuple[str, ...]  # weight plane per drive segment
    col_offset: int  # in units of logical outputs


@dataclass(frozen=True)
class Block:
    drives: tuple[tuple[str, ...], ...]  # drive patterns applied to this block's rows
    row_offset: int  # in units of logical inputs
    segments: int
    columns: tuple[ColumnGroup, ...]

    def group(self, planes) -> ColumnGroup:
        for g in self.columns:
            if g.planes == planes:
                return g
        raise KeyError(planes)


@dataclass(frozen=True)
class MappingScheme:
    kind: Kind
    variant: Variant = Variant.MORE_CYCLES

    def __post_init__(self):
        if not self.has_variants:
            # Single-realization kinds are normalized so equal schemes compare equal.
            object.__setattr__(self, "variant", Variant.MORE_CELLS)

    @property
    def definition(self) -> _Def:
        return _DEFS[self.kind]

    @property
    def has_variants(self) -> bool:
        return len(_distinct(r.drive for r in _DEFS[self.kind].reads)) > 1

    @property
    def drives(self) -> list[tuple[str, ...]]:
        return _distinct(r.drive for r in self.definition.reads)

    @property
    def blocks(self) -> tuple[Block, ...]:
        """Physical placement in units of the logical tile (n inputs x m outputs)."""
        return _placement(self.kind, self.variant)

    def _place(self) -> tuple[Block, ...]:
        reads = self.definition.reads
        if self.variant is Variant.MORE_CYCLES or not self.has_variants:
            groups = _distinct(p for r in reads for p in (r.pos, r.neg) if p is not None)
            segs = len(reads[0].drive)
            cols = tuple(ColumnGroup(g, k) for k, g in enumerate(groups))
            return (Block(tuple(self.drives), 0, segs, cols),)
        blocks, row, col = [], 0, 0
        for drive in self.drives:
            mine = [r for r in reads if r.drive == drive]
            groups = _distinct(p for r in mine for p in (r.pos, r.neg) if p is not None)
            cols = tuple(ColumnGroup(g, col + k) for k, g in enumerate(groups))
            blocks.append(Block((drive,), row, len(drive), cols))
            row += len(drive)
            col += len(groups)
        return tuple(blocks)

    @property
    def cycles(self) -> int:
        if self.variant is Variant.MORE_CELLS:
            return 1
        return len(self.drives)

    @property
    def cells_per_weight(self) -> int:
        return sum(b.segments * len(b.columns) for b in self.blocks)

    @property
    def row_multiplier(self) -> int:
        return sum(b.segments for b in self.blocks)

    @property
    def col_multiplier(self) -> int:
        return sum(len(b.columns) for b in self.blocks)

    @property
    def name(self) -> str:
        base = self.kind.value
        return f"{base}+{self.variant.value}" if self.has_variants else base

    def __str__(self):
        return self.name

    @classmethod
    def from_name(cls, name: str) -> "MappingScheme":
        """Parse ``bnn-iii+cells`` style names; without suffix, MORE_CYCLES."""
        text = name.strip().lower()
        base, _, suffix = text.partition("+")
        try:
            kind = Kind(base)
        except ValueError:
            raise EncodingError(f"unknown mapping {name!r}; valid names: {', '.join(valid_names())}") from None
        if suffix:
            try:
                variant = Variant(suffix)
            except ValueError:
                raise EncodingError(
                    f"unknown variant suffix {suffix!r} in {name!r}; valid names: {', '.join(valid_names())}"
                ) from None
            scheme = cls(kind, variant)
            if not scheme.has_variants and variant is Variant.MORE_CYCLES:
                raise EncodingError(f"{kind.value} has a single realization; valid names: {', '.join(valid_names())}")
            return scheme
        return cls(kind)

    @property
    def scale(self) -> Fraction:
        """Common prefactor of the crossbar term, in units of 1/I_mm."""
        return Fraction(reduce(gcd, (abs(r.coef) for r in self.definition.reads)))

    def fits(self, m: int, n: int, rows_c: int, cols_c: int) -> bool:
        return n * self.row_multiplier <= rows_c and m * self.col_multiplier <= cols_c

    def max_tile(self, rows_c: int, cols_c: int) -> tuple[int, int]:
        """Largest (m_int, n_int) that fits one physical array."""
        return cols_c // self.col_multiplier, rows_c // self.row_multiplier


@lru_cache(maxsize=None)
def _placement(kind: Kind, variant: Variant) -> tuple[Block, ...]:
    return MappingScheme(kind, variant)._place()


def all_schemes() -> list[MappingScheme]:
    out = []
    for kind in Kind:
        s = MappingScheme(kind, Variant.MORE_CELLS)
        out.append(s)
        if s.has_variants:
            out.append(MappingScheme(kind, Variant.MORE_CYCLES))
    return out


def valid_names() -> list[str]:
    return [s.name for s in all_schemes()]


# ---------------------------------------------------------------------------
# Corrections


def analog_coefficients(scheme: MappingScheme) -> dict[str, int]:
    """Per input plane, the summed coefficient of single-ended reads driving it.

    The analog correction is ``-(I_hrs/I_mm) * sum_q c_q * popcount(plane_q)``.
    """
    coefs: dict[str, int] = {}
    for r in scheme.definition.reads:
        if r.differential:
            continue
        for q in r.drive:
            coefs[q] = coefs.get(q, 0) + r.coef
    return {q: c for q, c in coefs.items() if c}


def describe_analog(scheme: MappingScheme) -> str:
    c = analog_coefficients(scheme)
    if not c:
        return "/"
    if set(c) == {"p", "m"} and c["p"] == -c["m"]:
        k, what = -c["p"], "sum(i)"
    elif set(c) == {"p", "m"} and c["p"] == c["m"]:
        k, what = -c["p"], "N"
    else:
        return " ".join(f"{-v:+d}*(I_hrs/I_mm)*popcount({q})" for q, v in sorted(c.items()))
    return f"{k:+d}*(I_hrs/I_mm)*{what}"


@dataclass(frozen=True)
class CorrectionSpec:
    digital_constant: np.ndarray  # per output, from the weights alone
    input_dependent: DigitalTerm
    analog_term: str
    scale: Fraction


@dataclass(frozen=True)
class DigitalPlan:
    scheme: MappingScheme
    weights: np.ndarray  # original integer weights, (m, n)
    cell_targets: dict[str, np.ndarray]  # weight planes, each (m, n) in {0,1}
    correction: CorrectionSpec

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    def physical_target(self) -> np.ndarray:
        """Binary cell pattern in physical orientation (rows = inputs)."""
        m, n = self.shape
        s = self.scheme
        out = np.zeros((n * s.row_multiplier, m * s.col_multiplier), dtype=np.uint8)
        for b in s.blocks:
            for g in b.columns:
                c0 = g.col_offset * m
                for k, plane in enumerate(g.planes):
                    r0 = (b.row_offset + k) * n
                    out[r0 : r0 + n, c0 : c0 + m] = self.cell_targets[plane].T
        return out


@dataclass(frozen=True)
class EncodedInput:
    values: np.ndarray  # (batch, n) integer inputs
    planes: dict[str, np.ndarray]  # drive planes, each (batch, n) in {0,1}
    mask: np.ndarray  # (batch, n) bool, positions that take part in the MVM
    sum_inputs: np.ndarray  # (batch,)

    @property
    def count(self) -> np.ndarray:
        return self.mask.sum(axis=-1)

    def drive(self, planes: tuple[str, ...]) -> np.ndarray:
        return np.concatenate([self.planes[q] for q in planes], axis=-1)


def _as_int(a, what: str) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype.kind == "f":
        if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
            raise EncodingError(f"{what} must be integer-valued")
    elif arr.dtype.kind not in "iub":
        raise EncodingError(f"{what} must be an integer array, got dtype {arr.dtype}")
    return arr.astype(np.int64)


def _check_alphabet(arr: np.ndarray, allowed, what: str):
    bad = ~np.isin(arr, allowed)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise EncodingError(f"{what} value {arr[idx]} at index {idx} is outside the alphabet {sorted(allowed)}")


def encode_weights(w, scheme: MappingScheme) -> DigitalPlan:
    w = np.atleast_2d(_as_int(w, "weight"))
    if w.ndim != 2:
        raise ShapeError(f"weights must be a matrix, got shape {w.shape}")
    allowed = (-1, 0, 1) if scheme.kind.ternary else (-1, 1)
    _check_alphabet(w, allowed, f"{scheme.name} weight")
    d = scheme.definition
    planes = d.weights.encode(w)
    rowsum = w.sum(axis=1)
    if d.digital is DigitalTerm.MINUS_ROWSUM:
        const = -rowsum
    elif d.digital is DigitalTerm.PLUS_ROWSUM:
        const = rowsum
    else:
        const = np.zeros_like(rowsum)
    corr = CorrectionSpec(const, d.digital, describe_analog(scheme), scheme.scale)
    return DigitalPlan(scheme, w, planes, corr)


def encode_inputs(v, scheme: MappingScheme) -> EncodedInput:
    """Encode one input vector or a batch ``(batch, n)`` into drive planes.

    For BNN mappings a 0 entry marks an absent (padded) position.
    """
    v = _as_int(v, "input")
    if v.ndim == 1:
        v = v[None, :]
    if v.ndim != 2:
        raise ShapeError(f"inputs must be a vector or a batch of vectors, got shape {v.shape}")
    _check_alphabet(v, (-1, 0, 1), f"{scheme.name} input")
    d = scheme.definition
    planes = d.inputs.encode(v)
    if scheme.kind.ternary:
        mask = np.ones(v.shape, dtype=bool)
    else:
        mask = v != 0
    return EncodedInput(v, planes, mask, v.sum(axis=-1))


def decode_weights(plan: DigitalPlan) -> np.ndarray:
    t = {k: v.astype(np.int64) for k, v in plan.cell_targets.items()}
    enc = plan.scheme.definition.weights
    if enc in (W_DIFF, W_DIFF_T):
        return t["p"] - t["m"]
    if enc is W_LS_POS:
        return 2 * t["g"] - 1
    if enc is W_LS_NEG:
        return 1 - 2 * t["g"]
    if enc is W_TWOS:
        return t["g0"] - 2 * t["g1"]
    return 2 * t["g1"] + t["g0"] - 1


def decode_inputs(enc: EncodedInput, scheme: MappingScheme) -> np.ndarray:
    t = {k: v.astype(np.int64) for k, v in enc.planes.items()}
    e = scheme.definition.inputs
    if e is I_BNN_POS:
        return (2 * t["v"] - 1) * enc.mask
    if e is I_BNN_NEG:
        return (1 - 2 * t["v"]) * enc.mask
    if e is I_DIFF:
        return t["p"] - t["m"]
    if e is I_TWOS:
        return t["b0"] - 2 * t["b1"]
    return 2 * t["b1"] + t["b0"] - 1


def digital_correction(plan: DigitalPlan, enc: EncodedInput) -> np.ndarray:
    """Encoding offset, shape (batch, m)."""
    term = plan.correction.input_dependent
    batch, m = enc.values.shape[0], plan.shape[0]
    if term in (DigitalTerm.MINUS_ROWSUM, DigitalTerm.PLUS_ROWSUM):
        if enc.mask.all():
            return np.broadcast_to(plan.correction.digital_constant, (batch, m)).astype(np.int64)
        sign = -1 if term is DigitalTerm.MINUS_ROWSUM else 1
        return sign * (enc.mask.astype(np.int64) @ plan.weights.T)
    if term is DigitalTerm.MINUS_SUM_INPUT:
        col = -enc.sum_inputs
    elif term is DigitalTerm.PLUS_SUM_INPUT:
        col = enc.sum_inputs
    elif term is DigitalTerm.MINUS_COUNT:
        col = -enc.count
    else:
        col = np.zeros(batch, dtype=np.int64)
    return np.broadcast_to(col[:, None], (batch, m)).astype(np.int64)


def analog_correction(scheme: MappingScheme, enc: EncodedInput, i_hrs: float, i_mm: float) -> np.ndarray:
    """HRS offset picked up by single-ended reads, shape (batch, 1)."""
    total = np.zeros(enc.values.shape[0])
    for q, c in analog_coefficients(scheme).items():
        total += c * enc.planes[q].sum(axis=-1, dtype=np.int64)
    return (-(i_hrs / i_mm) * total)[:, None]


# ---------------------------------------------------------------------------
# Execution


def program_plan(plan: DigitalPlan, crossbar: Crossbar):
    m, n = plan.shape
    cfg = crossbar.cfg
    if not plan.scheme.fits(m, n, cfg.rows_c, cfg.cols_c):
        raise TileTooLarge(
            f"{m}x{n} tile under {plan.scheme.name} needs "
            f"{n * plan.scheme.row_multiplier}x{m * plan.scheme.col_multiplier} cells, "
            f"crossbar is {cfg.rows_c}x{cfg.cols_c}"
        )
    return crossbar.program(plan.physical_target())


def round_half_away(x: np.ndarray) -> np.ndarray:
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


def mvm_on_crossbar(
    plan: DigitalPlan,
    enc: EncodedInput,
    crossbar: Crossbar,
    adc: AdcConfig | None = None,
    analog_correction_enabled: bool = True,
) -> np.ndarray:
    """Run one integer MVM on a crossbar already holding ``plan``.

    Returns an integer array of shape (batch, m).
    """
    if crossbar.tile is None:
        raise ShapeError("crossbar has not been programmed")
    m, n = plan.shape
    if enc.values.shape[-1] != n:
        raise ShapeError(f"input length {enc.values.shape[-1]} does not match plan with {n} inputs")
    scheme = plan.scheme
    cfg = crossbar.cfg
    adc = cfg.adc if adc is None else adc
    adc_diff = AdcConfig(adc.resolution_bits, adc.alpha, AdcMode.DIFFERENTIAL)
    adc_single = AdcConfig(adc.resolution_bits, adc.alpha, AdcMode.SINGLE_ENDED)
    # Ranges follow the true number of inputs of this tile.
    imax_d = differential_i_max(n, cfg)
    imax_s = single_ended_i_max(n, cfg)
    tile = crossbar.tile

    acc = np.zeros((enc.values.shape[0], m))
    for block in scheme.blocks:
        rows = slice(block.row_offset * n, (block.row_offset + block.segments) * n)
        cols = slice(block.columns[0].col_offset * m, (block.columns[-1].col_offset + 1) * m)
        region = tile.region(rows, cols)
        base = block.columns[0].col_offset
        for drive in block.drives:
            currents = column_currents(region, enc.drive(drive))
            for r in scheme.definition.reads:
                if r.drive != drive:
                    continue
                g = block.group(r.pos).col_offset - base
                pos = currents[:, g * m : (g + 1) * m]
                if r.differential:
                    h = block.group(r.neg).col_offset - base
                    val = adc_convert(pos - currents[:, h * m : (h + 1) * m], imax_d, adc_diff)
                else:
                    val = adc_convert(pos, imax_s, adc_single)
                acc += r.coef * val
    out = acc / cfg.i_mm + digital_correction(plan, enc)
    if analog_correction_enabled:
        out = out + analog_correction(scheme, enc, cfg.i_hrs, cfg.i_mm)
    return round_half_away(out)
