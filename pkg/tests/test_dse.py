import math

import pytest
import yaml

from xbarsim import dse
from xbarsim.dse import ResultRow, SweepConfig, read_results, results_csv, row_seed, run_row, run_sweep, summarize
from xbarsim.errors import ConfigError, EmptyInput
from xbarsim.nn.io import ModelFormatError


def base_cfg(data_dir, **kw):
    d = dict(
        model=str(data_dir / "digits_bnn.json"),
        dataset=str(data_dir / "digits_test.xbt"),
        samples=40,
        mappings=["bnn-vi+cells"],
        currents=[[5, 30]],
    )
    d.update(kw)
    return SweepConfig.from_dict(d)


def row(point, acc, alpha=1.0, mapping="bnn-v", bits="3", base=0.9, status="ok", trial=0):
    return ResultRow(point, trial, mapping, bits, alpha, 0.0, 0.0, 5.0, 30.0, 0, 10, acc, base, 1, 1, status)


# --- config ---------------------------------------------------------------------


def test_point_count_is_cartesian(data_dir):
    cfg = base_cfg(data_dir, mappings=["bnn-v", "bnn-vi"], adc_bits=[3, "inf"], alpha=[0.2, 0.5, 1.0], trials=2)
    pts = cfg.points()
    assert len(pts) == 12
    assert [p.index for p in pts] == list(range(12))
    assert pts[0].adc_bits == 3 and pts[3].adc_bits is None


@pytest.mark.parametrize(
    "kw,match",
    [
        (dict(mappings=[]), "mappings"),
        (dict(alpha=[]), "alpha"),
        (dict(trials=0), "trials"),
        (dict(mappings=["bnn-vii"]), "valid names"),
        (dict(adc_bits=[0]), "ADC resolution"),
        (dict(adc_bits=["three"]), "ADC resolution"),
        (dict(alpha=[1.5]), "alpha"),
        (dict(currents=[[10, 5]]), "i_hrs"),
        (dict(sigma_hrs=[-1]), "sigma"),
        (dict(m_int=300), "does not fit"),
        (dict(bogus=1), "unknown config keys"),
    ],
)
def test_config_validation(data_dir, kw, match):
    with pytest.raises(ConfigError, match=match):
        base_cfg(data_dir, **kw)


def test_config_load_yaml(tmp_path, data_dir):
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(dict(model="m.json", dataset="d.xbt", mappings=["bnn-v"], adc_bits=["inf", 4])))
    cfg = SweepConfig.load(p)
    assert cfg.adc_bits == [None, 4]
    with pytest.raises(ConfigError, match="no such config"):
        SweepConfig.load(tmp_path / "missing.yaml")
    (tmp_path / "bad.yaml").write_text("[1, 2")
    with pytest.raises(ConfigError):
        SweepConfig.load(tmp_path / "bad.yaml")


def test_row_seed_depends_on_all_parts():
    seeds = {row_seed(b, p, t) for b in (0, 1) for p in (0, 1) for t in (0, 1)}
    assert len(seeds) == 8
    assert row_seed(3, 4, 5) == row_seed(3, 4, 5)


# --- running ---------------------------------------------------------------------


def test_single_ideal_point_equals_host(data_dir):
    rows = run_sweep(base_cfg(data_dir))
    assert len(rows) == 1
    assert rows[0].status == "ok"
    assert rows[0].accuracy == rows[0].baseline_accuracy
    assert rows[0].samples == 40 and rows[0].writes > 0


def test_sweep_deterministic_and_streamed(data_dir):
    cfg = base_cfg(data_dir, mappings=["bnn-v", "bnn-vi"], sigma_hrs=[0.0, 5.0], trials=2)
    seen = []
    a = run_sweep(cfg, on_row=seen.append)
    b = run_sweep(cfg)
    assert len(a) == len(seen) == 8
    assert results_csv(a) == results_csv(b)
    assert [(r.point, r.trial) for r in a] == [(p, t) for p in range(4) for t in range(2)]


def test_run_row_matches_sweep(data_dir):
    cfg = base_cfg(data_dir, sigma_hrs=[0.0, 8.0], trials=2)
    rows = run_sweep(cfg)
    again = run_row(cfg, 1, 1)
    assert again == rows[3]
    with pytest.raises(ConfigError):
        run_row(cfg, 2, 0)


def test_failed_point_recorded(data_dir):
    cfg = base_cfg(data_dir, model=str(data_dir / "digits_tnn.json"), mappings=["bnn-v", "tnn-i"])
    rows = run_sweep(cfg)
    assert rows[0].status.startswith("error: ModelError") and math.isnan(rows[0].accuracy)
    assert rows[1].status == "ok"


def test_csv_round_trip(tmp_path):
    rows = [row(0, 0.5), row(1, 0.25, alpha=0.5, status="error: X")]
    p = tmp_path / "r.csv"
    dse.write_results(rows, p)
    assert p.read_text().splitlines()[0] == ",".join(dse.COLUMNS)
    assert read_results(p) == rows


# --- summaries ------------------------------------------------------------------------


def test_summarize_empty():
    with pytest.raises(EmptyInput):
        summarize([])


def test_summarize_single_row():
    pts, win = summarize([row(0, 0.7)])
    assert pts[0].mean_accuracy == pts[0].min_accuracy == pts[0].max_accuracy == 0.7


def test_summarize_hand_aggregates():
    rows = [row(0, 0.6, trial=0), row(0, 0.8, trial=1), row(0, 0.1, trial=2, status="error: boom")]
    (p,), _ = summarize(rows)
    assert (p.trials, p.failed) == (3, 1)
    assert p.mean_accuracy == pytest.approx(0.7)
    assert (p.min_accuracy, p.max_accuracy) == (0.6, 0.8)


def test_alpha_window_picks_widest_run():
    # baseline 0.9, tolerance 1 pp: ok at 0.1, 0.3, 0.4, 0.5; 0.2 breaks the run
    accs = {0.1: 0.895, 0.2: 0.85, 0.3: 0.89, 0.4: 0.9, 0.5: 0.905, 0.6: 0.7}
    rows = [row(k, a, alpha=al) for k, (al, a) in enumerate(accs.items())]
    _, (w,) = summarize(rows)
    assert (w.alpha_lo, w.alpha_hi, w.alphas_within) == (0.3, 0.5, 4)
    assert (w.best_alpha, w.best_accuracy) == (0.5, 0.905)


def test_alpha_window_recomputed_from_raw_rows():
    # two mappings, two trials each; window judged on per-point means
    rows = []
    k = 0
    for mapping, accs in {"bnn-v": [(0.88, 0.9), (0.8, 0.7)], "bnn-vi": [(0.9, 0.9), (0.89, 0.9)]}.items():
        for al, (a, b) in zip((0.5, 1.0), accs):
            rows += [row(k, a, alpha=al, mapping=mapping), row(k, b, alpha=al, mapping=mapping, trial=1)]
            k += 1
    _, wins = summarize(rows)
    by = {w.mapping: w for w in wins}
    assert (by["bnn-v"].alpha_lo, by["bnn-v"].alpha_hi) == (0.5, 0.5)
    assert (by["bnn-vi"].alpha_lo, by["bnn-vi"].alpha_hi) == (0.5, 1.0)


def test_alpha_window_none_within():
    _, (w,) = summarize([row(0, 0.5), row(1, 0.6, alpha=0.5)])
    assert math.isnan(w.alpha_lo) and w.alphas_within == 0 and w.best_alpha == 0.5


def test_summary_files(tmp_path):
    pts, wins = summarize([row(0, 0.5), row(1, 0.6, alpha=0.5)])
    a, b = dse.write_summary(pts, wins, tmp_path / "s")
    assert a.name == "s.points.csv" and b.name == "s.alpha.csv"
    assert len(a.read_text().splitlines()) == 3
    dse.write_plot_data(pts, tmp_path / "p.json")
    assert '"mean_accuracy"' in (tmp_path / "p.json").read_text()


def test_missing_model_fails_before_work(data_dir, tmp_path):
    cfg = base_cfg(data_dir, model=str(tmp_path / "absent.json"))
    seen = []
    with pytest.raises(ModelFormatError, match="absent.json"):
        run_sweep(cfg, workers=2, on_row=seen.append)
    assert seen == []
