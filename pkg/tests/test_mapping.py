import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xbarsim.errors import EncodingError, TileTooLarge
from xbarsim.mapping import (
    DigitalTerm,
    Kind,
    MappingScheme,
    Variant,
    all_schemes,
    analog_correction,
    decode_inputs,
    decode_weights,
    digital_correction,
    encode_inputs,
    encode_weights,
    mvm_on_crossbar,
    program_plan,
    round_half_away,
    valid_names,
)
from xbarsim.xbar import AdcConfig, Crossbar, CrossbarConfig

# (cycles, cells per weight) as listed in the BNN and TNN mapping tables.
TABLE = {
    "bnn-i": (1, 2),
    "bnn-ii": (1, 2),
    "bnn-iii+cells": (1, 2),
    "bnn-iii+cycles": (2, 1),
    "bnn-iv+cells": (1, 2),
    "bnn-iv+cycles": (2, 1),
    "bnn-v": (1, 2),
    "bnn-vi+cells": (1, 4),
    "bnn-vi+cycles": (2, 2),
    **{f"tnn-{r}+cells": (1, 4) for r in ("i", "ii", "iii", "iv", "v")},
    **{f"tnn-{r}+cycles": (2, 2) for r in ("i", "ii", "iii", "iv", "v")},
}

SCHEMES = all_schemes()
IDS = [s.name for s in SCHEMES]


def alphabet(scheme):
    return (-1, 0, 1) if scheme.kind.ternary else (-1, 1)


def run(scheme, w, v, cfg, **kw):
    plan = encode_weights(w, scheme)
    xb = Crossbar(cfg)
    program_plan(plan, xb)
    return mvm_on_crossbar(plan, encode_inputs(v, scheme), xb, **kw)


def wide_cfg(**kw):
    return CrossbarConfig(64, 4096, **kw)


# --- static parameters ---------------------------------------------------------


def test_table_covers_every_scheme():
    assert sorted(TABLE) == sorted(valid_names())
    assert len(SCHEMES) == 19
    assert len({s.kind for s in SCHEMES}) == 11


@pytest.mark.parametrize("scheme", SCHEMES, ids=IDS)
def test_cycles_and_cells_match_tables(scheme):
    assert (scheme.cycles, scheme.cells_per_weight) == TABLE[scheme.name]


@pytest.mark.parametrize("name", sorted(TABLE))
def test_name_round_trip(name):
    assert MappingScheme.from_name(name).name == name


def test_default_variant_is_cycles():
    assert MappingScheme.from_name("bnn-vi") == MappingScheme(Kind.BNN_VI, Variant.MORE_CYCLES)
    assert MappingScheme.from_name("BNN-I").name == "bnn-i"


@pytest.mark.parametrize("name", ["bnn-vii", "tnn-vi", "bnn-vi+more", "bnn-i+cycles", ""])
def test_unknown_names_list_valid(name):
    with pytest.raises(EncodingError, match="bnn-vi\\+cells"):
        MappingScheme.from_name(name)


def test_single_realization_kinds_normalized():
    assert MappingScheme(Kind.BNN_I, Variant.MORE_CYCLES) == MappingScheme(Kind.BNN_I, Variant.MORE_CELLS)
    assert not MappingScheme(Kind.BNN_V).has_variants
    assert MappingScheme(Kind.TNN_II).has_variants


@pytest.mark.parametrize("scheme", SCHEMES, ids=IDS)
def test_max_tile_fits_and_is_tight(scheme):
    mi, ni = scheme.max_tile(256, 256)
    assert scheme.fits(mi, ni, 256, 256)
    assert not scheme.fits(mi + 1, ni, 256, 256)
    assert not scheme.fits(mi, ni + 1, 256, 256)
    assert scheme.row_multiplier * scheme.col_multiplier >= scheme.cells_per_weight


# --- encodings ---------------------------------------------------------------------


def test_bnn_i_weight_planes():
    plan = encode_weights([[1, -1]], MappingScheme(Kind.BNN_I))
    assert plan.cell_targets["p"].tolist() == [[1, 0]]
    assert plan.cell_targets["m"].tolist() == [[0, 1]]
    assert plan.correction.digital_constant.tolist() == [0]


def test_tnn_iv_twos_complement_weights():
    plan = encode_weights([[-1, 0, 1]], MappingScheme(Kind.TNN_IV))
    pairs = list(zip(plan.cell_targets["g1"][0].tolist(), plan.cell_targets["g0"][0].tolist()))
    assert pairs == [(1, 1), (0, 0), (0, 1)]


def test_tnn_v_offset_weight_edge():
    plan = encode_weights([[-1]], MappingScheme(Kind.TNN_V))
    assert (plan.cell_targets["g1"].item(), plan.cell_targets["g0"].item()) == (0, 0)


def test_bnn_i_input_drive():
    enc = encode_inputs([1, -1, 1], MappingScheme(Kind.BNN_I))
    assert enc.planes["v"].tolist() == [[1, 0, 1]]


def test_bnn_v_input_planes():
    enc = encode_inputs([1, -1], MappingScheme(Kind.BNN_V))
    assert enc.planes["p"].tolist() == [[1, 0]]
    assert enc.planes["m"].tolist() == [[0, 1]]


def test_tnn_iii_offset_input():
    enc = encode_inputs([0], MappingScheme(Kind.TNN_III))
    assert (enc.planes["b1"].item(), enc.planes["b0"].item()) == (0, 1)


def test_tnn_ii_twos_complement_inputs():
    enc = encode_inputs([-1, 0, 1], MappingScheme(Kind.TNN_II))
    assert list(zip(enc.planes["b1"][0].tolist(), enc.planes["b0"][0].tolist())) == [(1, 1), (0, 0), (0, 1)]


@pytest.mark.parametrize("scheme", SCHEMES, ids=IDS)
def test_round_trip_full_alphabet(scheme):
    a = np.array(alphabet(scheme))
    w = np.array(list(itertools.product(a, repeat=3)))
    plan = encode_weights(w, scheme)
    assert np.array_equal(decode_weights(plan), w)
    enc = encode_inputs(w, scheme)
    assert np.array_equal(decode_inputs(enc, scheme), w)
    for p in list(plan.cell_targets.values()) + list(enc.planes.values()):
        assert set(np.unique(p)) <= {0, 1}


@pytest.mark.parametrize("scheme", [s for s in SCHEMES if not s.kind.ternary], ids=lambda s: s.name)
def test_binary_weights_reject_zero(scheme):
    with pytest.raises(EncodingError, match="index"):
        encode_weights([[1, 0, -1]], scheme)


@pytest.mark.parametrize("bad", [[2, 1], [1.5, 1], [-2, 0]])
def test_inputs_reject_out_of_alphabet(bad):
    with pytest.raises(EncodingError):
        encode_inputs(bad, MappingScheme(Kind.TNN_I))


# --- corrections ----------------------------------------------------------------------


def table_analog(kind, v, ratio):
    """Analog correction column of the BNN table; TNN IV/V derived the same way."""
    s, n = v.sum(axis=-1), (v != 0).sum(axis=-1)
    return {
        Kind.BNN_III: -2 * ratio * s,
        Kind.BNN_IV: 2 * ratio * s,
        Kind.BNN_V: -2 * ratio * n,
        Kind.TNN_IV: ratio * s,
        Kind.TNN_V: -3 * ratio * s,
    }.get(kind, 0 * s)


def table_digital(kind, w, v):
    z = np.zeros((len(v), len(w)), dtype=np.int64)
    s, n = z + v.sum(axis=-1)[:, None], z + (v != 0).sum(axis=-1)[:, None]
    # BNN rows only count present (non-padded) inputs
    rowsum = (v != 0).astype(int) @ w.T
    return {
        Kind.BNN_I: -rowsum,
        Kind.BNN_II: rowsum,
        Kind.BNN_III: -s,
        Kind.BNN_IV: s,
        Kind.BNN_V: -n,
        Kind.TNN_III: -(z + w.sum(axis=1)),
        Kind.TNN_V: -s,
    }.get(kind, z)


@pytest.mark.parametrize("scheme", SCHEMES, ids=IDS)
def test_corrections_match_tables(scheme, rng):
    a = alphabet(scheme)
    w = rng.choice(a, (7, 20))
    v = rng.choice(a, (11, 20))
    if not scheme.kind.ternary:
        v[:, -3:] = 0  # padded positions
    cfg = CrossbarConfig(i_hrs=5, i_lrs=30)
    enc = encode_inputs(v, scheme)
    got_a = analog_correction(scheme, enc, cfg.i_hrs, cfg.i_mm)[:, 0]
    assert np.allclose(got_a, table_analog(scheme.kind, v, cfg.i_hrs / cfg.i_mm), rtol=0, atol=1e-12)
    got_d = digital_correction(encode_weights(w, scheme), enc)
    assert np.array_equal(got_d, table_digital(scheme.kind, w, v))


@pytest.mark.parametrize("kind", [Kind.BNN_I, Kind.BNN_II, Kind.BNN_VI, Kind.TNN_I, Kind.TNN_II, Kind.TNN_III])
def test_no_analog_term_where_table_shows_none(kind):
    s = MappingScheme(kind)
    enc = encode_inputs(np.ones((2, 5), dtype=int), s)
    assert np.all(analog_correction(s, enc, 5.0, 5.0) == 0)


def test_digital_term_labels():
    assert MappingScheme(Kind.BNN_V).definition.digital is DigitalTerm.MINUS_COUNT
    assert MappingScheme(Kind.BNN_VI).definition.digital is DigitalTerm.NONE


# --- MVM exactness ---------------------------------------------------------------------


def test_bnn_v_all_ones_example():
    cfg = wide_cfg()
    assert run(MappingScheme(Kind.BNN_V), np.ones((1, 4), int), np.ones(4, int), cfg).tolist() == [[4]]


def test_bnn_iii_needs_analog_correction():
    rng = np.random.default_rng(0)
    cfg = wide_cfg()
    s = MappingScheme(Kind.BNN_III, Variant.MORE_CELLS)
    w = rng.choice([-1, 1], (4, 8))
    v = np.array([1, 1, 1, 1, 1, -1, 1, 1])  # sum != 0
    assert np.array_equal(run(s, w, v, cfg)[0], w @ v)
    assert not np.array_equal(run(s, w, v, cfg, analog_correction_enabled=False)[0], w @ v)


@pytest.mark.parametrize("scheme", SCHEMES, ids=IDS)
def test_exhaustive_small(scheme):
    cfg = wide_cfg(i_hrs=3.0, i_lrs=11.0)
    for n in (1, 2, 3):
        allv = np.array(list(itertools.product(alphabet(scheme), repeat=n)))
        out = run(scheme, allv, allv, cfg)
        assert np.array_equal(out, allv @ allv.T)


@pytest.mark.parametrize("kind", [k for k in Kind if MappingScheme(k).has_variants])
def test_variants_agree(kind, rng):
    a = (-1, 0, 1) if kind.ternary else (-1, 1)
    w, v = rng.choice(a, (30, 40)), rng.choice(a, (50, 40))
    cfg = CrossbarConfig(256, 256)
    r1 = run(MappingScheme(kind, Variant.MORE_CELLS), w, v, cfg)
    r2 = run(MappingScheme(kind, Variant.MORE_CYCLES), w, v, cfg)
    assert np.array_equal(r1, r2)


@given(
    st.sampled_from(SCHEMES),
    st.integers(1, 24),
    st.integers(1, 30),
    st.floats(0.5, 20),
    st.floats(0.5, 40),
    st.integers(0, 2**31),
)
def test_ideal_mvm_exact(scheme, m, n, i_hrs, gap, seed):
    rng = np.random.default_rng(seed)
    a = alphabet(scheme)
    w, v = rng.choice(a, (m, n)), rng.choice(a, (5, n))
    cfg = CrossbarConfig(256, 256, i_hrs, i_hrs + gap)
    assert np.array_equal(run(scheme, w, v, cfg), v @ w.T)


@given(st.integers(0, 2**31))
def test_bnn_padding_positions_inert(seed):
    rng = np.random.default_rng(seed)
    v = rng.choice([-1, 0, 1], (6, 12))
    for scheme in SCHEMES:
        if scheme.kind.ternary:
            continue
        w = rng.choice([-1, 1], (5, 12))
        assert np.array_equal(run(scheme, w, v, CrossbarConfig(64, 64)), v @ w.T)


def test_program_plan_too_large():
    s = MappingScheme(Kind.TNN_I, Variant.MORE_CELLS)
    plan = encode_weights(np.ones((33, 4), int), s)
    with pytest.raises(TileTooLarge):
        program_plan(plan, Crossbar(CrossbarConfig(8, 128)))


def test_quantized_adc_still_integer():
    s = MappingScheme(Kind.BNN_VI, Variant.MORE_CELLS)
    rng = np.random.default_rng(1)
    w, v = rng.choice([-1, 1], (8, 32)), rng.choice([-1, 1], (4, 32))
    out = run(s, w, v, CrossbarConfig(256, 256, adc=AdcConfig(3, 0.25)))
    assert out.dtype == np.int64 and out.shape == (4, 8)


def test_round_half_away():
    assert round_half_away(np.array([-2.5, -1.5, -0.5, 0.5, 1.5, 2.49])).tolist() == [-3, -2, -1, 1, 2, 2]
