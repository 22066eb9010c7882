import numpy as np
import pytest

from restphase.calibration import (TAU_GRID, LabeledTransition, bland_altman, confusion_matrix, evaluate_tau,
                                   label_transitions, rp_agreement, threshold_sweep, variant_rows_csv,
                                   variant_sweep)
from restphase.classification import RestingPhaseSet, RestInterval, RpParams, classify_mask
from restphase.errors import DegenerateLabels, LengthMismatch, PairingMismatch
from restphase.motion import MotionVariant, motion_curve
from restphase.phantom import PhantomConfig, generate_phantom
from restphase.pipeline import cohort_member

TIMES = np.arange(26) * 40.0


def brute_force_row(values, rest, tau):
    tp = fp = tn = fn = 0
    for v, r in zip(values, rest):
        pred = v < tau
        if pred and r:
            tp += 1
        elif pred:
            fp += 1
        elif r:
            fn += 1
        else:
            tn += 1
    tpr = tp / (tp + fn)
    tnr = tn / (tn + fp)
    return tpr, tnr, (tpr + tnr) / 2, tp, fp, tn, fn


def labeled(values, rest, valid=None):
    valid = np.ones(len(values), bool) if valid is None else valid
    return [LabeledTransition(float(v), bool(r), bool(w)) for v, r, w in zip(values, rest, valid)]


def test_grid():
    assert TAU_GRID.size == 100
    assert TAU_GRID[0] == 0.01 and TAU_GRID[-1] == 1.0


def test_separable_labels():
    res = threshold_sweep(labeled([0.05] * 10 + [0.9] * 15, [True] * 10 + [False] * 15))
    assert res.auc == 1.0
    assert res.best.balanced_accuracy == 1.0
    assert res.best_tau == 0.06  # smallest tau that separates


def test_identical_values_give_half():
    res = threshold_sweep(labeled([0.3] * 20, [True, False] * 10))
    assert res.auc == pytest.approx(0.5)
    assert res.best_tau == 0.01


def test_sweep_rows_equal_brute_force():
    rng = np.random.default_rng(0)
    values = rng.random(300)
    rest = rng.random(300) < 0.4
    valid = rng.random(300) < 0.9
    res = threshold_sweep(labeled(values, rest, valid))
    assert len(res.rows) == 100
    for row in res.rows:
        want = brute_force_row(values[valid], rest[valid], row.tau)
        assert (row.tpr, row.tnr, row.balanced_accuracy, row.tp, row.fp, row.tn, row.fn) == want
        assert row == evaluate_tau(labeled(values, rest, valid), row.tau)
    best = max(res.rows, key=lambda r: (r.balanced_accuracy, -r.tau))
    assert res.best_tau == best.tau
    assert 0.0 <= res.auc <= 1.0


def test_shuffled_labels_auc():
    rng = np.random.default_rng(1)
    values = rng.random(400)
    rest = values < 0.3
    aucs = [threshold_sweep(labeled(values, rng.permutation(rest))).auc for _ in range(100)]
    assert abs(np.mean(aucs) - 0.5) <= 0.05


def test_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        threshold_sweep(labeled([0.1, 0.2], [True, True]))
    with pytest.raises(DegenerateLabels):
        threshold_sweep(labeled([0.1, 0.2], [True, False], [True, False]))


def test_csv_outputs():
    res = threshold_sweep(labeled([0.05, 0.9], [True, False]))
    lines = res.to_csv().splitlines()
    assert len(lines) == 101 and lines[1].startswith("0.01,")
    roc = res.roc_csv().splitlines()
    assert roc[0] == "fpr,tpr" and len(roc) == 103


def test_confusion_examples():
    cm = confusion_matrix([1, 1, 0, 0], [1, 0, 1, 0])
    assert (cm.tp, cm.fn, cm.fp, cm.tn) == (1, 1, 1, 1)
    same = confusion_matrix([1, 0, 1], [1, 0, 1])
    assert same.fp == same.fn == 0
    flip = confusion_matrix([1, 0, 1], [0, 1, 0])
    assert flip.tp == flip.tn == 0
    with pytest.raises(LengthMismatch):
        confusion_matrix([1, 0], [1])
    d = cm.to_dict()
    assert d["balanced_accuracy"] == 0.5


def test_label_transitions_window():
    lt = label_transitions(np.zeros(25), np.ones(25, bool), TIMES, 1000.0, 80, 80)
    assert sum(x.in_valid_window for x in lt) == 21
    with pytest.raises(LengthMismatch):
        label_transitions(np.zeros(24), np.ones(25, bool), TIMES, 1000.0, 80, 80)


def rest_set(runs, params=RpParams()):
    mask = np.zeros(25, bool)
    for a, b in runs:
        mask[a:b] = True
    return classify_mask(mask, TIMES, 1000.0, params)


def test_agreement_identity():
    ref = rest_set([(6, 9), (15, 20)])
    ag = rp_agreement([ref], [ref], [TIMES])
    assert all(s["mae_ms"] == 0.0 for s in ag.mae.values())
    assert ag.confusion.fp == ag.confusion.fn == 0
    assert ag.bland_altman["mean_difference"] == 0.0


def test_agreement_one_frame_shift():
    ref = rest_set([(6, 9), (15, 20)])
    pred = rest_set([(7, 10), (16, 21)])
    ag = rp_agreement([pred], [ref], [TIMES])
    for s in ag.mae.values():
        assert s["mae_ms"] == 40.0 and s["mae_frames"] == 1.0 and s["std_ms"] == 0.0
    assert ag.bland_altman["mean_difference"] == 40.0


def test_agreement_symmetry():
    rng = np.random.default_rng(3)
    preds, refs = [], []
    for _ in range(8):
        a, b = rng.integers(4, 8), rng.integers(14, 17)
        preds.append(rest_set([(a, a + rng.integers(2, 4)), (b, b + rng.integers(3, 6))]))
        c, d = rng.integers(4, 8), rng.integers(14, 17)
        refs.append(rest_set([(c, c + rng.integers(2, 4)), (d, d + rng.integers(3, 6))]))
    fwd = rp_agreement(preds, refs, [TIMES] * 8)
    back = rp_agreement(refs, preds, [TIMES] * 8)
    for key in fwd.mae:
        assert fwd.mae[key]["mae_ms"] == pytest.approx(back.mae[key]["mae_ms"])
    assert fwd.bland_altman["mean_difference"] == pytest.approx(-back.bland_altman["mean_difference"])


def test_agreement_exclusion_accounting():
    keep = RpParams(min_duration_ms=0)
    refs = [rest_set([(6, 9), (15, 20)]),
            rest_set([(15, 20)]),  # no systolic phase
            rest_set([(7, 8), (15, 20)], keep),  # 40 ms systolic phase is kept
            RestingPhaseSet((RestInterval(300, 320, 7, 8, "systolic"), RestInterval(600, 800, 15, 20, "diastolic")),
                            np.zeros(25, bool), 1000.0, alpha_ms=80, omega_ms=80)]
    preds = [rest_set([(6, 9), (15, 20)])] * 4
    ag = rp_agreement(preds, refs, [TIMES] * 4)
    sys = ag.counts["systolic"]
    assert (sys["datasets_in"], sys["excluded_short"], sys["excluded_missing_type"]) == (2, 1, 1)
    assert sys["datasets_in"] + sys["excluded_short"] + sys["excluded_missing_type"] == sys["total"]
    assert ag.counts["diastolic"]["datasets_in"] == 4


def test_agreement_missed_and_extra():
    ref = rest_set([(6, 9), (15, 20)])
    pred = rest_set([(15, 20)])
    ag = rp_agreement([pred], [ref], [TIMES])
    assert ag.counts["systolic"]["missed_predictions"] == 1
    assert ag.mae[("systolic", "start")]["n"] == 0


def test_pairing_mismatch():
    ref = rest_set([(6, 9)])
    with pytest.raises(PairingMismatch):
        rp_agreement([ref], [ref, ref], [TIMES])
    with pytest.raises(PairingMismatch):
        rp_agreement([ref], [ref], [TIMES[:-1]])


def test_bland_altman():
    ba = bland_altman([1.0, 3.0], [0.0, 0.0])
    assert ba["mean_difference"] == 2.0 and ba["std_difference"] == 1.0
    assert ba["upper_limit"] == pytest.approx(3.96)
    assert bland_altman([], [])["n"] == 0


@pytest.fixture(scope="module")
def small_cohort():
    cfgs = [PhantomConfig(dims=(25, 64, 64), noise_sigma=0.02, seed=s, motion_amplitude=6.0) for s in (1, 2)]
    out = []
    for c in cfgs:
        series, truth = generate_phantom(c)
        out.append(cohort_member(series, truth, truth.track[0]))
    return out


def test_variant_sweep_on_phantoms(small_cohort):
    rows = variant_sweep(small_cohort, ["wpct(50)", "pct(50)", "dist"])
    assert [r.variant for r in rows] == ["wpct(50)", "pct(50)", "dist"]
    assert rows[0].accuracy >= 90.0 and rows[0].reference_accuracy == 90.1
    csv_lines = variant_rows_csv(rows).splitlines()
    assert csv_lines[0].startswith("variant,accuracy")


def test_best_tau_matches_brute_force(small_cohort):
    values, rest = [], []
    for m in small_cohort:
        c = motion_curve(m.fields, m.track, "wpct(50)", trigger_times=m.frame_times)
        lt = label_transitions(c.values, m.truth_mask, m.frame_times, m.rr_interval, 80, 80)
        values += [x.motion_value for x in lt if x.in_valid_window]
        rest += [x.is_rest for x in lt if x.in_valid_window]
    res = threshold_sweep(labeled(values, rest))
    scores = [brute_force_row(values, rest, t)[2] for t in TAU_GRID]
    assert abs(res.best_tau - TAU_GRID[int(np.argmax(scores))]) <= 0.05


def test_zero_motion_cohort_reports_degenerate(static_phantom):
    series, truth = static_phantom
    m = cohort_member(series, truth, truth.track[0])
    rows = variant_sweep([m], [MotionVariant("wpct", 50), MotionVariant("mean")], alpha_ms=0, omega_ms=0)
    assert all(r.error and r.accuracy is None for r in rows)
