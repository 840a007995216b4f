"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. Tolerances are pinned in the asserts.
"""

import dataclasses
import math
import random
import time

import numpy as np
import scipy.linalg

from attnguard.cda import (
    cda_classify,
    matrix_log,
    train_cda,
    vectorize_symmetric,
)
from attnguard.ftt import (
    FttModel,
    frobenius_dispersion,
    ftt_classify,
    tune_from_scores,
    tune_ftt_threshold,
)
from attnguard.localize import FALSE_POSITIVE, TRIGGER_FOUND, LocalizeConfig, localize
from attnguard.manifest import read_manifest
from attnguard.metrics import eval_asb
from attnguard.oracle import simulated_oracle
from attnguard.pipeline import run_pipeline, simulated_oracle_factory
from attnguard.synth import SynthParams, generate_corpus, synth_backdoor, synth_benign
from attnguard.trace import BACKDOOR, BENIGN, AttentionTrace


def report(name: str, ok: bool, detail: str = "") -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f" ({detail})" if detail else ""))
    return ok


def mk_trace(maps):
    maps = np.asarray(maps, dtype=float)
    L, D, _ = maps.shape
    return AttentionTrace("p", tuple(f"t{i}" for i in range(L)), D, maps, False)


def brute_force_dispersion(maps):
    L, D, _ = maps.shape
    mean = [[sum(maps[i][x][y] for i in range(L)) / L for y in range(D)] for x in range(D)]
    total = 0.0
    for i in range(L):
        sq = 0.0
        m = maps[i]
        for x in range(D):
            row = m[x]
            mrow = mean[x]
            for y in range(D):
                sq += (row[y] - mrow[y]) ** 2
        total += math.sqrt(sq)
    return total / L


def f1_of(preds, truths):
    tp = sum(p == BACKDOOR and t == BACKDOOR for p, t in zip(preds, truths))
    fp = sum(p == BACKDOOR and t == BENIGN for p, t in zip(preds, truths))
    fn = sum(p == BENIGN and t == BACKDOOR for p, t in zip(preds, truths))
    return 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0


def test_dispersion_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        L = int(rng.integers(1, 65))
        D = int(rng.integers(1, 33))
        maps = rng.random((L, D, D))
        got = frobenius_dispersion(mk_trace(maps))
        want = brute_force_dispersion(maps)
        worst = max(worst, abs(got - want))
    hand = abs(frobenius_dispersion(mk_trace([[[1, 0], [0, 0]], [[0, 0], [0, 1]]]))
               - math.sqrt(0.5))
    ok = worst < 1e-12 and hand < 1e-12
    assert report("dispersion oracle (1000 random + hand case)", ok,
                  f"worst |diff|={worst:.2e}"), worst


def test_full_assimilation_limit():
    ok = True
    for seed in range(20):
        t = synth_backdoor(SynthParams(seed=seed, alpha=1.0, sigma=0.0))
        F = frobenius_dispersion(t)
        ok &= F < 1e-12
        for threshold in (1e-9, 1e-3, 2.5, 100.0):
            ok &= ftt_classify(F, FttModel(threshold_F=threshold)) == BACKDOOR
    assert report("full-assimilation limit (F=0, always flagged)", ok)


def test_synthetic_ftt_f1():
    t0 = time.perf_counter()
    scores, positive = [], []
    for i in range(1000):
        p = SynthParams(seed=i, alpha=0.9, sigma=0.01)
        scores.append(frobenius_dispersion(synth_benign(p)))
        positive.append(False)
        style = "A" if i % 2 == 0 else "B"
        p = SynthParams(seed=100_000 + i, alpha=0.9, sigma=0.01, style=style)
        scores.append(frobenius_dispersion(synth_backdoor(p)))
        positive.append(True)
    _, curve = tune_from_scores(scores, positive)
    best_f1 = max(f1 for _, f1 in curve)
    elapsed = time.perf_counter() - t0
    ok = best_f1 >= 0.95 and elapsed < 5.0
    assert report("synthetic FTT (1000+1000 mixed styles)", ok,
                  f"F1={best_f1:.4f}, {elapsed:.2f}s"), (best_f1, elapsed)


def test_cda_generalization_across_styles():
    def corpus(n, seed0, style, trigger_ids):
        out = []
        for i in range(n):
            p = SynthParams(seed=seed0 + i, alpha=0.9, sigma=0.01, style=style)
            out.append(synth_benign(p))
            p2 = dataclasses.replace(p, seed=seed0 + 10_000 + i)
            out.append(synth_backdoor(p2, trigger_id=trigger_ids[i % len(trigger_ids)]))
        return out

    train = corpus(300, 0, "A", trigger_ids=range(1, 9))
    test = corpus(300, 500_000, "B", trigger_ids=range(9, 17))  # disjoint triggers
    truths = [t.label.kind for t in test]

    cda_model = train_cda(train, k=20)
    cda_f1 = f1_of([cda_classify(t, cda_model)[0] for t in test], truths)

    ftt_model, _ = tune_ftt_threshold(train)
    ftt_f1 = f1_of([ftt_classify(frobenius_dispersion(t), ftt_model) for t in test], truths)

    ok = cda_f1 >= 0.90 and cda_f1 >= ftt_f1
    assert report("CDA generalization (train style A, test style B)", ok,
                  f"CDA F1={cda_f1:.4f}, FTT F1={ftt_f1:.4f}"), (cda_f1, ftt_f1)


def test_spd_log_exp_round_trip():
    rng = np.random.default_rng(1)
    worst = 0.0
    for i in range(500):
        k = (2, 20, 32)[i % 3]
        Q, _ = np.linalg.qr(rng.standard_normal((k, k)))
        w = np.exp(rng.uniform(-3, 3, size=k))
        C = (Q * w) @ Q.T
        back = scipy.linalg.expm(matrix_log(C))  # scaling-and-squaring oracle
        worst = max(worst, float(np.linalg.norm(back - C, "fro")))
    identity_residual = float(np.max(np.abs(matrix_log(np.eye(20)))))
    ok = worst < 1e-6 and identity_residual < 1e-12
    assert report("SPD log/exp round-trip (500 matrices)", ok,
                  f"worst Frobenius residual={worst:.2e}"), worst


def test_vectorization_isometry():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(2, 24))
        A = rng.standard_normal((k, k))
        A = (A + A.T) / 2
        B = rng.standard_normal((k, k))
        B = (B + B.T) / 2
        frob = float(np.sum(A * B))
        dot = float(vectorize_symmetric(A) @ vectorize_symmetric(B))
        worst = max(worst, abs(frob - dot))
    ok = worst < 1e-10
    assert report("vectorization isometry (500 pairs)", ok, f"worst |diff|={worst:.2e}"), worst


def test_localization_soundness():
    cfg = LocalizeConfig(threshold_a=0.85, trigger_length_s=1, max_oracle_calls=10_000)
    found = total = 0
    bound_ok = True
    for L in range(1, 65):
        bound = 2 + 2 * math.ceil(math.log2(L)) if L > 1 else 2
        for pos in range(L):
            tokens = [f"w{i}" for i in range(L)]
            tokens[pos] = "<TRIG_1>"
            res = localize(tokens, cfg, simulated_oracle("<TRIG_1>", target_noise=0.05))
            total += 1
            found += res.verdict == TRIGGER_FOUND and res.trigger_range == (pos, pos + 1)
            bound_ok &= res.generate_calls <= bound
    trigger_f1 = 1.0 if found == total else found / total

    rnd = random.Random(3)
    benign_fp = 0
    for _ in range(1000):
        L = rnd.randint(1, 64)
        tokens = [f"w{rnd.randint(0, 50)}" for _ in range(L)]
        res = localize(tokens, cfg, simulated_oracle("<TRIG_1>", target_noise=0.05))
        benign_fp += res.verdict == FALSE_POSITIVE
        bound_ok &= res.generate_calls <= (2 + 2 * math.ceil(math.log2(L)) if L > 1 else 2)

    ok = trigger_f1 == 1.0 and benign_fp == 1000 and bound_ok
    assert report("localization soundness (exhaustive L<=64 + 1000 benign)", ok,
                  f"recovered {found}/{total}, benign FP verdicts {benign_fp}/1000"), (
        found, total, benign_fp, bound_ok)


def test_pipeline_monotonicity(tmp_path):
    params = SynthParams(seed=7, alpha=0.9, sigma=0.01)
    manifest = generate_corpus(tmp_path, params, n_benign=40, n_backdoor=40,
                               trigger_ids=[1, 2, 3])
    entries = read_manifest(manifest)
    # deliberately sloppy threshold so stage (a) produces false positives
    model = FttModel(threshold_F=2.0)
    before, _ = run_pipeline(entries, detector="ftt", ftt_model=model)
    after, _ = run_pipeline(
        entries, detector="ftt", ftt_model=model,
        localize_config=LocalizeConfig(threshold_a=0.85),
        oracle_factory=simulated_oracle_factory(0.05),
    )
    ok = after.precision >= before.precision and after.recall == before.recall
    assert report("pipeline monotonicity (precision up, recall unchanged)", ok,
                  f"precision {before.precision:.3f}->{after.precision:.3f}, "
                  f"recall {before.recall:.3f}->{after.recall:.3f}"), (before, after)


def test_throughput():
    traces = []
    for i in range(1000):
        p = SynthParams(seed=i, L_range=(20, 20), D=16)
        traces.append(synth_benign(p) if i % 2 == 0 else synth_backdoor(p))

    t0 = time.perf_counter()
    model = FttModel(threshold_F=1.0)
    for t in traces:
        ftt_classify(frobenius_dispersion(t), model)
    ftt_elapsed = time.perf_counter() - t0

    cda_model = train_cda(traces[:200], k=20)
    t0 = time.perf_counter()
    for t in traces:
        cda_classify(t, cda_model)
    cda_elapsed = time.perf_counter() - t0

    ok = ftt_elapsed < 1.0 and cda_elapsed < 5.0
    assert report("throughput (1000 traces, single thread)", ok,
                  f"FTT {ftt_elapsed * 1000:.0f}ms, CDA {cda_elapsed * 1000:.0f}ms"), (
        ftt_elapsed, cda_elapsed)


# Per-trigger ASB columns of the mitigation benchmark table.
ASB_WITHOUT_MITIGATION = [0.52, 0.44, 0.43, 0.43, 0.63, 0.53, 0.56, 0.51,
                          0.49, 0.49, 0.49, 0.47, 0.60, 0.46, 0.47, 0.50]
ASB_REFACT = [0.90, 0.90, 0.89, 0.90, 0.90, 0.90, 0.89, 0.90,
              0.78, 0.77, 0.86, 0.83, 0.82, 0.82, 0.81, 0.71]


def test_asb_reproduces_refact_average():
    got = eval_asb(ASB_REFACT)
    ok = abs(got - 0.85) < 0.005
    assert report("ASB mean of mitigated column vs published 0.85", ok,
                  f"mean={got:.5f}"), got


def test_asb_reproduces_unmitigated_average():
    # Known discrepancy: the per-trigger column means 0.50125, but the
    # benchmark table publishes 0.52 as its average. The criterion is
    # asserted as stated and fails honestly; see the decisions ledger.
    got = eval_asb(ASB_WITHOUT_MITIGATION)
    ok = abs(got - 0.52) < 0.005
    assert report("ASB mean of unmitigated column vs published 0.52", ok,
                  f"mean={got:.5f}"), got
