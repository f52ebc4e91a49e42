"""Acceptance criteria, one test (and one PASS/FAIL line) each.

End-to-end checks run on seed-fixed synthetic sessions: five runs, train on
runs 1-3, test on runs 4-5.
"""

import time

import numpy as np
import pytest

from conftest import SMALL_CONFIG, acceptance_line
from test_classifier import blobs, finite_difference, random_params, rel_err
from test_cva import cos, fisher_direction, names, random_instance
from test_decision import exact_iterate
from test_dsp import contract_violations
from test_features import entropy_oracle_failures

from incdetect.classifier import CLASSES, fit_classifier, mse_gradient, mse_loss, posterior_batch
from incdetect.config import PipelineConfig
from incdetect.cva import LabeledFeatureSet, fit_cva
from incdetect.decision import IntegratorState, integrate_step, run_trace
from incdetect.dsp import CANONICAL_BANDS, hilbert_envelope
from incdetect.evaluation import accuracy_ci, compare_methods, format_comparison
from incdetect.io import IC, INC
from incdetect.pipeline import decision_trace, evaluate, stream, train_detector, training_data
from incdetect.simgen import SessionSpec, as_session_data, generate_session, write_session

SEED = 7
CONFIG = PipelineConfig(seed=SEED)


def report(name, ok, detail):
    acceptance_line(name, ok, detail)
    assert ok, detail


# --- kernels ---------------------------------------------------------------------

def test_entropy_kernel_oracle():
    t0 = time.perf_counter()
    bad = entropy_oracle_failures()
    dt = time.perf_counter() - t0
    report("entropy kernel oracle", not bad and dt < 1.0, f"failures {bad or 'none'}, {dt:.3f} s")


def test_filter_contract():
    t0 = time.perf_counter()
    bad = {b.name: v for b in CANONICAL_BANDS if (v := contract_violations(b))}
    dt = time.perf_counter() - t0
    report("filter contract", not bad and dt < 10.0, f"violations {bad or 'none'}, {dt:.2f} s")


def test_hilbert_envelope():
    rng = np.random.default_rng(2024)
    t = np.arange(768) / 512
    worst = 0.0
    for _ in range(20):
        band = CANONICAL_BANDS[rng.integers(len(CANONICAL_BANDS))]
        f = rng.uniform(band.low, band.high)
        a = float(np.exp(rng.uniform(np.log(0.1), np.log(100))))
        env = hilbert_envelope(a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi)))
        worst = max(worst, float(np.max(np.abs(env[192:576] / a - 1))))
    report("Hilbert envelope", worst <= 0.05, f"worst interior error {worst:.4f} over 20 tones")


def test_cva():
    rng = np.random.default_rng(11)
    worst_cos = 1.0
    for _ in range(50):
        X, y = random_instance(rng, p=int(rng.integers(2, 10)))
        m = fit_cva(LabeledFeatureSet(X, y, names(X.shape[1])))
        worst_cos = min(worst_cos, abs(cos(m.cdsp[:, 0], fisher_direction(X, y))))
    scaling_ok = True
    for _ in range(20):
        X, y = random_instance(rng, p=8)
        a = np.exp(rng.uniform(-3, 3, 8))
        m1 = fit_cva(LabeledFeatureSet(X, y, names(8)))
        m2 = fit_cva(LabeledFeatureSet(X * a, y, names(8)))
        scaling_ok &= bool(np.array_equal(m1.ranking, m2.ranking))
    X, y = random_instance(rng)
    m1 = fit_cva(LabeledFeatureSet(X, y, names(6)))
    m2 = fit_cva(LabeledFeatureSet(X, np.where(y == IC, INC, IC), names(6)))
    swap_ok = bool(np.array_equal(m1.discrimination, m2.discrimination))
    ok = worst_cos > 0.999 and scaling_ok and swap_ok
    report("CVA", ok, f"min |cos| {worst_cos:.6f}, scaling-invariant ranking {scaling_ok}, "
                      f"label swap exact {swap_ok}")


def test_classifier():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(20):
        means, var, pri, z, t = random_params(rng)
        _, g_mean, g_var = mse_gradient(means, var, pri, z, t, with_variances=True)
        worst = max(worst, rel_err(g_mean, finite_difference(lambda m: mse_loss(m, var, pri, z, t), means)),
                    rel_err(g_var, finite_difference(lambda v: mse_loss(means, v, pri, z, t), var)))
    rng = np.random.default_rng(23)
    X, y = blobs(rng, 300)
    Xt, yt = blobs(rng, 300)
    clf = fit_classifier(X, y)
    post = posterior_batch(clf, Xt)
    norm = float(np.max(np.abs(post.sum(axis=1) - 1)))
    acc = float((np.where(post[:, CLASSES.index(IC)] > 0.5, IC, INC) == yt).mean())
    ok = worst < 1e-4 and norm <= 1e-12 and acc >= 0.95
    report("classifier", ok, f"max FD rel error {worst:.2e}, normalization {norm:.1e}, "
                             f"held-out blob accuracy {acc:.3f}")


def test_integrator():
    s, _ = integrate_step(IntegratorState(0.5, 0.9, 0.65), 1.0)
    step_ok = abs(s.D - 0.55) < 1e-15
    tr = run_trace([1.0] * 10, 0.9, 0.65)
    cross = int(np.argmax(tr.label == IC)) + 1
    inside = run_trace(np.linspace(0.7, 0.4, 40), 0.0, 0.65, label0=IC)
    flip_ok = bool(np.all(inside.label == IC))
    rng = np.random.default_rng(31)
    resume_ok = exact_ok = True
    for _ in range(200):
        a, b = rng.uniform(size=int(rng.integers(0, 100))), rng.uniform(size=int(rng.integers(0, 100)))
        alpha, th = float(rng.choice(CONFIG.grid_alpha)), float(rng.choice(CONFIG.grid_th))
        whole = run_trace(np.concatenate([a, b]), alpha, th)
        first, st = run_trace(a, alpha, th, return_state=True)
        second = run_trace(b, alpha, th, D0=st.D, label0=st.label)
        resume_ok &= bool(np.array_equal(whole.label, np.concatenate([first.label, second.label])))
        exact_ok &= bool(np.array_equal(whole.label, exact_iterate(np.concatenate([a, b]), alpha, th)[1]))
    ok = step_ok and cross == 4 and flip_ok and resume_ok and exact_ok
    report("integrator/hysteresis", ok, f"step D {s.D:.15f}, crossing step {cross}, no flip in band "
                                        f"{flip_ok}, exact iteration {exact_ok}, resume {resume_ok}")


# --- end to end ------------------------------------------------------------------

@pytest.fixture(scope="module")
def execution():
    """Generate, train and evaluate both separabilities; timed as one job."""
    out = {}
    t0 = time.perf_counter()
    for delta in (1.0, 0.0):
        session = as_session_data(generate_session(SessionSpec(seed=SEED, delta=delta)))
        data = training_data(session, CONFIG)
        det = train_detector(session, CONFIG, data)
        out[delta] = (session, data, det, evaluate(det, session))
    out["seconds"] = time.perf_counter() - t0
    return out


def test_end_to_end_execution(execution):
    acc1 = execution[1.0][3].report.single_sample_accuracy
    ev0 = execution[0.0][3]
    ci = accuracy_ci(ev0.trace, ev0.labels.labels)
    lo, hi = ci["ci"]
    dt = execution["seconds"]
    ok = acc1 >= 0.85 and lo <= 0.5 <= hi and dt < 60.0
    report("end-to-end EXECUTION", ok,
           f"delta=1 accuracy {acc1:.4f}; delta=0 accuracy {ci['accuracy']:.4f}, 95% CI "
           f"[{lo:.4f}, {hi:.4f}] (effective n {ci['n_effective']:.0f} of {ci['n']}); "
           f"total {dt:.1f} s")


def test_end_to_end_preparation(execution):
    session, data, _, _ = execution[1.0]
    cfg = CONFIG.replace(labeling_mode="preparation")
    det = train_detector(session, cfg, training_data(session, cfg, data.X, data.t_end))
    r = evaluate(det, session).report
    ok = r.trial_correct >= 0.8 and r.trial_missed <= 0.15 and r.delay_mean <= 2.5
    report("end-to-end PREPARATION", ok,
           f"correct {r.trial_correct:.3f}, incorrect {r.trial_incorrect:.3f}, missed {r.trial_missed:.3f} "
           f"({r.n_trials} trials, {r.n_excluded} excluded), mean delay {r.delay_mean:.2f} s")


def test_entropy_vs_psd(execution):
    session, _, _, ev = execution[1.0]
    psd = train_detector(session, CONFIG.replace(feature_method="psd"))
    cmp = compare_methods(ev.report, evaluate(psd, session).report)
    table = format_comparison(cmp)
    print(table)
    ok = [r[0] for r in cmp.rows] == ["entropy", "psd"] and all(0 <= r[1] <= 1 for r in cmp.rows)
    rows = "; ".join(f"{m} {a:.4f}" for m, a, *_ in cmp.rows)
    report("entropy vs PSD harness", ok, f"{rows}; delta {cmp.delta:+.4f}")


@pytest.fixture(scope="module")
def full_stream(execution):
    session, _, det, _ = execution[1.0]
    got = []
    stats = stream(det, session, "all", emit=got.append)
    return session, det, stats, got


def test_streaming_performance(full_stream):
    session, _, stats, got = full_stream
    rec = session.recording
    t = np.array([d.t for d in got])
    step = np.round(np.diff(t) * rec.sample_rate).astype(int)
    expected = (np.arange(len(got)) * 64 + 767) / rec.sample_rate
    cadence = bool(np.all(step == 64) and np.array_equal(t, expected))
    ok = stats.real_time_factor >= 20 and cadence and abs(rec.duration - 700) <= 35 and rec.samples.shape[1] == 16
    report("streaming performance", ok,
           f"{rec.duration:.1f} s x {rec.samples.shape[1]} ch at {rec.sample_rate} Hz in "
           f"{stats.wall_seconds:.2f} s, real-time factor {stats.real_time_factor:.1f}, "
           f"{stats.frames} frames, exact 8 Hz {cadence}")


def test_determinism(full_stream, small_session, small_detector, tmp_path):
    session, det, _, got = full_stream
    offline = decision_trace(det, session.recording)
    stream_ok = (np.array_equal([d.label for d in got], offline.label)
                 and np.array_equal([d.p_ic for d in got], offline.p_ic))
    a = write_session(generate_session(SessionSpec(seed=SEED)), tmp_path / "a")
    b = write_session(generate_session(SessionSpec(seed=SEED)), tmp_path / "b")
    gen_ok = all(p.read_bytes() == (b / p.name).read_bytes() for p in a.iterdir())
    train_ok = train_detector(small_session, SMALL_CONFIG).to_json() == small_detector.to_json()
    ok = stream_ok and gen_ok and train_ok
    report("determinism", ok, f"stream == offline {stream_ok}, session files identical {gen_ok}, "
                              f"retrained model identical {train_ok}")
