import csv
import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ecmtput.errors import DomainError
from ecmtput.experiments import coverage_study, metric_row
from ecmtput.metrics import (METRIC_COLUMNS, format_metric_rows, interval_coverage, nrmse,
                             summarize)
from ecmtput.predictor import PredictionInterval
from ecmtput.simulator import (AmSpec, FrameRecord, Outcome, SimConfig, SimulationResult,
                               run_simulation)
from ecmtput.trace import SyntheticTraceSpec, ThroughputTrace, synth_markov_trace


def test_nrmse_hand_value():
    assert nrmse([(2, 1), (2, 3)]) == pytest.approx(0.5, abs=1e-12)


def test_nrmse_keywords_and_perfect():
    assert nrmse(predicted=[5, 6, 7], realized=[5, 6, 7]) == 0.0
    assert nrmse(predicted=[5.0], realized=[10.0]) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [[], [(1, 0), (1, 0)], [(1, 2, 3)]])
def test_nrmse_rejects(bad):
    with pytest.raises(DomainError):
        nrmse(bad)


pairs = st.lists(st.tuples(st.floats(0, 1e4), st.floats(1, 1e4)), min_size=1, max_size=60)


@given(pairs, st.floats(1e-3, 1e3))
def test_nrmse_scale_invariant(series, lam):
    scaled = [(p * lam, r * lam) for p, r in series]
    assert nrmse(scaled) == pytest.approx(nrmse(series), rel=1e-9, abs=1e-12)


@given(pairs)
def test_nrmse_nonnegative(series):
    v = nrmse(series)
    assert v >= 0
    assert (v == 0) == all(p == r for p, r in series)


def iv(lo, hi):
    return PredictionInterval(lo, hi, 0.95, 1.0)


def test_coverage_examples():
    assert interval_coverage([iv(0, 10)] * 3, [5, 5, 5]).coverage == 1.0
    rep = interval_coverage([iv(0, 10)] * 2, [5, 15])
    assert rep.coverage == 0.5 and rep.nominal_level == 0.95
    assert rep.mean_width == 10.0


def test_coverage_half_open_boundary():
    assert interval_coverage([iv(0, 10)], [10.0]).hits == 1
    assert interval_coverage([iv(0, 10)], [0.0]).hits == 0


def test_coverage_array_form_and_errors():
    rep = interval_coverage((np.array([0.0, 1.0]), np.array([1.0, 2.0])), [0.5, 3.0], 0.8)
    assert (rep.hits, rep.total, rep.nominal_level) == (1, 2, 0.8)
    with pytest.raises(DomainError):
        interval_coverage([iv(0, 1)], [0.5, 0.5])
    with pytest.raises(DomainError):
        interval_coverage([], [])


@pytest.mark.parametrize("alpha", [0.05, 0.2, 0.4])
def test_coverage_in_sample_is_conservative(alpha):
    # scoring the training sequence against its own frozen matrix
    tr = synth_markov_trace(SyntheticTraceSpec([1000, 400, 100],
                                               [[0.8, 0.1, 0.1], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]],
                                               1, 3000, 0.2, 3))
    study = coverage_study(np.tile(tr.bandwidths, 2), [alpha], split=0.5, bins=16)
    assert study.skipped[alpha] == 0
    assert study.reports[alpha].coverage >= 1 - alpha


def fake_result(outcomes, eval_start=0.0):
    frames = []
    for i, o in enumerate(outcomes):
        f = FrameRecord(i, i / 10.0, o)
        if o is not Outcome.LOST:
            f.size, f.start, f.predicted = 10.0, i / 10.0, 100.0
        if o is Outcome.SENT:
            f.completed, f.measured = i / 10.0 + 0.1, 100.0
        frames.append(f)
    return SimulationResult(frames, 10.0, len(outcomes) / 10.0, eval_start, "test")


def test_summarize_loss_ratio():
    s = summarize(fake_result([Outcome.SENT] * 98 + [Outcome.LOST] * 2))
    assert s["generated"] == 100 and s["sent"] == 98 and s["lost"] == 2
    assert s["loss_rate"] == 0.02
    assert s["sum_frame_sizes"] == 980.0
    assert s["nrmse"] == 0.0


def test_summarize_empty_predictions():
    s = summarize(fake_result([Outcome.LOST, Outcome.IN_FLIGHT]))
    assert s["nrmse"] is None
    s = summarize(fake_result([]))
    assert s["nrmse"] is None and s["loss_rate"] is None


def test_summarize_eval_window():
    s = summarize(fake_result([Outcome.LOST] * 5 + [Outcome.SENT] * 5, eval_start=0.5))
    assert s["loss_rate"] == 0.5
    assert s["eval_loss_rate"] == 0.0 and s["eval_generated"] == 5


def test_summarize_steady_state():
    res = run_simulation(SimConfig(ThroughputTrace([0.0], [1000.0], 10.0), 10, 0.0, AmSpec(1)))
    s = summarize(res)
    assert s["loss_rate"] == 0.0
    assert s["sum_frame_sizes"] == pytest.approx(100.0 * s["sent"], rel=1e-12)


def test_metric_csv_layout():
    res = fake_result([Outcome.SENT] * 3 + [Outcome.LOST], eval_start=0.2)
    row = metric_row(1, AmSpec(4), 10.0, 5.0, res)
    text = format_metric_rows([row])
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == METRIC_COLUMNS
    assert rows[0][:12] == ["run_id", "predictor", "M", "K", "M_S", "fps", "s_min", "loss_rate",
                            "sum_frame_sizes", "nrmse", "coverage", "alpha"]
    rec = dict(zip(rows[0], rows[1]))
    assert rec["predictor"] == "am:4" and rec["K"] == "" and rec["coverage"] == ""
    assert float(rec["loss_rate"]) == 0.5 and float(rec["all_loss_rate"]) == 0.25
    assert rec["generated"] == "2" and rec["all_generated"] == "4"
