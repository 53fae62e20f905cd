import math
import random
from importlib import resources

import pytest

from sedbench.analysis import (
    BreakdownError,
    BreakdownSpec,
    SchemaError,
    breakdown,
    breakdown_csv,
    breakdown_svg,
    diff_csv,
    diff_table,
    group_csv,
    group_mean,
    precision_recall_export,
    read_precision_recall_csv,
    read_score_table,
    suite_breakdown,
    suite_factor_levels,
)
from sedbench.metrics import AnnotationSet, EventAnnotation, MetricConfig, evaluate

# Published 60s-minus-ref column, one decimal.
PUBLISHED_DIFF = {
    "Miyazaki": -53.6, "Hao": 14.7, "Ebbers": -1.5, "Koh": -48.1, "Yao": -50.2, "CTK": -11.1,
    "Liu": -3.6, "Zhenwei": -36.3, "Huang": -0.4, "Cornell": -44.4, "Baseline": -43.3,
}
EXACT_DIFF = ("Miyazaki", "Koh", "Yao", "Baseline")

# Published TNTSNR averages: (baseline, ssep) -> (0, 15, inf).
PUBLISHED_TNTSNR = {
    ("yes", "no"): (25.68, 38.65, 48.16),
    ("yes", "yes"): (26.13, 38.15, 46.27),
    ("no", "no"): (29.66, 41.65, 48.44),
    ("no", "yes"): (24.23, 32.69, 36.78),
}
TNTSNR_COLS = ("TNTSNR_0_no_reverb", "TNTSNR_15_no_reverb", "TNTSNR_inf_no_reverb")
CFG = MetricConfig()


def data_path(name):
    return resources.files("sedbench.data") / name


@pytest.fixture(scope="module")
def table1():
    return read_score_table(data_path("table1.csv"))


@pytest.fixture(scope="module")
def table2():
    return read_score_table(data_path("table2.csv"))


def test_table1_diff(table1):
    rows = {s: d for s, _, _, d in diff_table(table1, "ref", "60s")}
    assert set(rows) == set(PUBLISHED_DIFF)
    for system, published in PUBLISHED_DIFF.items():
        assert abs(rows[system] - published) <= 0.1 + 1e-9
    for system in EXACT_DIFF:
        assert rows[system] == PUBLISHED_DIFF[system]


def test_diff_csv_format(table1):
    text = diff_csv(diff_table(table1, "ref", "60s"), "ref", "60s")
    assert text.splitlines()[0] == "system,ref,60s,60s-ref"
    assert "Miyazaki,56.5,2.9,-53.6" in text


def test_table2_group_pass_through(table2):
    groups = group_mean(table2, ["baseline", "ssep"])
    assert set(groups) == set(PUBLISHED_TNTSNR)
    for key, values in PUBLISHED_TNTSNR.items():
        assert tuple(groups[key][c] for c in TNTSNR_COLS) == values


def test_group_mean_of_two(table2):
    groups = group_mean(table2, "baseline")
    assert groups[("yes",)]["TNTSNR_0_no_reverb"] == pytest.approx(25.905)
    assert groups[("yes",)]["TNTSNR_inf_no_reverb"] == pytest.approx((48.16 + 46.27) / 2)


def test_group_mean_summation_oracle(tmp_path):
    rng = random.Random(3)
    lines = ["system,team,ref"]
    values = {}
    for i in range(60):
        team = f"t{i % 4}"
        v = round(rng.uniform(0, 100), 2)
        values.setdefault(team, []).append(v)
        lines.append(f"s{i},{team},{v}")
    path = tmp_path / "t.csv"
    path.write_text("\n".join(lines))
    groups = group_mean(read_score_table(path), "team")
    for team, vs in values.items():
        total = 0.0
        for v in vs:
            total += v
        assert groups[(team,)]["ref"] == pytest.approx(total / len(vs), abs=1e-9)
    text = group_csv(groups, ["team"], ["ref"])
    assert text.splitlines()[0] == "team,ref"


@pytest.mark.parametrize(
    "content, message",
    [
        ("name,ref\nA,1\n", "system"),
        ("system,tag\nA,x\n", "no score columns"),
        ("system,ref\nA,abc\n", "not a number"),
        ("system,ref\nA,101\n", "outside"),
        ("system,ref\nA,1,2\n", "fields"),
    ],
)
def test_schema_errors(tmp_path, content, message):
    path = tmp_path / "t.csv"
    path.write_text(content)
    with pytest.raises(SchemaError, match=message):
        read_score_table(path)


def test_diff_missing_column(table1):
    with pytest.raises(SchemaError):
        diff_table(table1, "ref", "single")


# -- breakdowns ---------------------------------------------------------------


def ev(clip, label, onset, offset):
    return EventAnnotation(clip, label, onset, offset)


def random_sets(seed, n=20):
    rng = random.Random(seed)
    refs, ests = [], []
    for c in range(n):
        for _ in range(rng.randint(0, 4)):
            on = rng.randint(0, 90) / 10
            refs.append(ev(f"c{c}", rng.choice("AB"), on, min(10.0, on + rng.randint(1, 60) / 10)))
        for _ in range(rng.randint(0, 4)):
            on = rng.randint(0, 90) / 10
            ests.append(ev(f"c{c}", rng.choice("AB"), on, min(10.0, on + rng.randint(1, 60) / 10)))
    roster = [f"c{c}" for c in range(n)]
    return AnnotationSet(refs, roster), AnnotationSet(ests, roster)


def test_bin_assignment():
    spec = BreakdownSpec("duration")
    assert spec.bin_of(0.8) == 0
    assert spec.bin_of(1.0) == 1
    assert spec.bin_of(10.0) == 3
    assert spec.labels() == ["[0,1)", "[1,3)", "[3,5)", "[5,10]"]
    with pytest.raises(BreakdownError):
        spec.bin_of(10.5)
    with pytest.raises(BreakdownError):
        BreakdownSpec("duration", (0, 5, 5))
    with pytest.raises(BreakdownError):
        BreakdownSpec("loudness")


def test_single_bin_equals_global():
    ref, est = random_sets(1)
    (label, rep), = breakdown(ref, est, CFG, BreakdownSpec("duration", (0, 10)))
    assert rep == evaluate(ref, est, CFG, sorted(ref.labels()))


@pytest.mark.parametrize("seed", range(8))
@pytest.mark.parametrize("factor", ["duration", "onset"])
def test_bin_counts_sum_to_global(seed, factor):
    ref, est = random_sets(seed)
    vocab = ["A", "B"]
    per_bin = breakdown(ref, est, CFG, BreakdownSpec(factor), vocab)
    whole = evaluate(ref, est, CFG, vocab)
    for k, label in enumerate(vocab):
        tp = sum(rep.classes[k].tp for _, rep in per_bin)
        fp = sum(rep.classes[k].fp for _, rep in per_bin)
        fn = sum(rep.classes[k].fn for _, rep in per_bin)
        assert (tp, fp, fn) == (whole[label].tp, whole[label].fp, whole[label].fn)


def test_long_events_missed_short_found():
    refs = [ev("a", "A", 1.0, 1.5), ev("b", "A", 1.0, 8.0), ev("c", "A", 2.0, 2.6), ev("d", "A", 0.5, 7.0)]
    ests = [ev("a", "A", 1.0, 1.5), ev("b", "A", 1.0, 3.0), ev("c", "A", 2.0, 2.6), ev("d", "A", 0.5, 2.0)]
    roster = ["a", "b", "c", "d"]
    per_bin = dict(breakdown(AnnotationSet(refs, roster), AnnotationSet(ests, roster), CFG,
                             BreakdownSpec("duration", (0, 1, 10))))
    assert per_bin["[0,1)"].macro_f1 == 100.0
    assert per_bin["[1,10]"].macro_f1 == 0.0
    assert per_bin["[1,10]"]["A"].fp == 2


def test_breakdown_exports_deterministic():
    ref, est = random_sets(4)
    per_system = {"sysA": breakdown(ref, est, CFG, BreakdownSpec("onset")),
                  "sysB": breakdown(ref, ref, CFG, BreakdownSpec("onset"))}
    assert breakdown_csv(per_system, "onset") == breakdown_csv(per_system, "onset")
    svg = breakdown_svg(per_system, "onset")
    assert svg.startswith("<svg") and svg == breakdown_svg(per_system, "onset")
    assert breakdown_csv(per_system, "onset").splitlines()[0].startswith("system")


def test_suite_factor_levels():
    assert [s for _, s in suite_factor_levels("tntsnr")] == [
        "TNTSNR_inf_no_reverb", "TNTSNR_15_no_reverb", "TNTSNR_0_no_reverb"]
    assert [s for _, s in suite_factor_levels("reverb")] == [
        "TNTSNR_inf_no_reverb", "TNTSNR_inf_short_reverb", "TNTSNR_inf_long_reverb"]
    assert [s for _, s in suite_factor_levels("onset-window")] == ["500ms", "5500ms", "9500ms"]
    with pytest.raises(BreakdownError):
        suite_factor_levels("room")


def test_suite_breakdown_missing_report():
    ref, _ = random_sets(2)
    rep = evaluate(ref, ref)
    with pytest.raises(SchemaError):
        suite_breakdown({"s": {"500ms": rep}}, "onset-window")
    rows = suite_breakdown({"s": {"500ms": rep, "5500ms": rep, "9500ms": rep}}, "onset-window")
    assert [r[2] for r in rows] == [100.0] * 3


def test_precision_recall_round_trip(tmp_path):
    ref, est = random_sets(6)
    reports = {"x": evaluate(ref, est), "y": evaluate(ref, ref)}
    csv_path, svg_path = precision_recall_export(reports, tmp_path)
    with open(csv_path) as fh:
        points = read_precision_recall_csv(fh.read())
    assert points == [(n, r.macro_precision, r.macro_recall) for n, r in reports.items()]
    first = open(svg_path).read()
    precision_recall_export(reports, tmp_path)
    assert open(svg_path).read() == first
    with pytest.raises(SchemaError):
        precision_recall_export({}, tmp_path)
    assert not math.isnan(points[0][1])
