"""Acceptance gate: every release criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  The shared 60-epoch model comes from conftest and is reused
by criteria 3 through 7.
"""

import math
import time

import numpy as np
from sklearn.metrics import roc_auc_score, silhouette_score

from thermovae import cli, monitor, vae
from thermovae.autodiff import gradient_check
from thermovae.data import PlantConfig
from thermovae.monitor import joint_difficulty
from thermovae.vae import LatentCode, VaeModel

from conftest import STRIDE


def report(num: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {num} {'PASS' if ok else 'FAIL'}  {detail}")


def test_criterion_1_gradient_correctness():
    # full VAE loss on a hidden=4, W=3, 3-channel model vs central
    # differences: max relative error < 1e-3 over all parameters, 5 seeds
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        model = VaeModel(window_len=3, channels=3, enc_hidden=4, bottleneck=4,
                         dec_hidden=4, seed=seed)
        rng = np.random.default_rng(1000 + seed)
        values = rng.standard_normal((1, 3, 3))
        eps = rng.standard_normal((1, 2))
        build, arrays = vae.loss_builder(model, values, eps)
        result = gradient_check(build, arrays, h=1e-5, tol=1e-3)
        worst = max(worst, result.max_rel_error)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-3 and elapsed < 30.0
    report(1, ok, f"gradient correctness: max rel err {worst:.2e} < 1e-3 "
                  f"over 5 seeds in {elapsed:.1f} s (< 30 s)")
    assert worst < 1e-3
    assert elapsed < 30.0


def test_criterion_2_kl_oracle():
    # closed-form KL vs 1e6-sample Monte Carlo within 2% for 10 random codes
    t0 = time.perf_counter()
    rng = np.random.default_rng(2026)
    worst = 0.0
    for _ in range(10):
        mu = rng.uniform(-2.0, 2.0, 2)
        log_var = np.log(rng.uniform(0.25, 4.0, 2))
        sigma = np.exp(0.5 * log_var)
        eps = rng.standard_normal((1_000_000, 2))
        z = mu + eps * sigma
        log_q = -0.5 * (np.log(2 * np.pi) + log_var + eps ** 2).sum(axis=1)
        log_p = -0.5 * (np.log(2 * np.pi) + z ** 2).sum(axis=1)
        mc = float(np.mean(log_q - log_p))
        closed = vae.kl_divergence(LatentCode(mu=mu, log_var=log_var), beta=1.0)
        worst = max(worst, abs(closed - mc) / abs(mc))
    elapsed = time.perf_counter() - t0
    ok = worst <= 0.02 and elapsed < 60.0
    report(2, ok, f"KL oracle: worst rel diff {worst:.4f} <= 0.02 over 10 "
                  f"codes in {elapsed:.1f} s (< 60 s)")
    assert worst <= 0.02
    assert elapsed < 60.0


def _corpus_scores(trained, trajs):
    return [monitor.recon_error_series(trained.model, t, trained.norm,
                                       stride=STRIDE).scores for t in trajs]


def test_criterion_3_anomaly_separation(acceptance_corpus, trained):
    # 8 cool trajectories trained, 4 held-out cool + 4 hot scored:
    # ROC AUC >= 0.90 and hot anomaly rate >= 50% at the p99 threshold
    t0 = time.perf_counter()
    cool_scores = np.concatenate(_corpus_scores(trained, acceptance_corpus.held_cool))
    hot_scores = np.concatenate(_corpus_scores(trained, acceptance_corpus.hot))
    scoring_seconds = time.perf_counter() - t0
    labels = np.r_[np.zeros(len(cool_scores)), np.ones(len(hot_scores))]
    auc = roc_auc_score(labels, np.r_[cool_scores, hot_scores])
    hot_rate = float((hot_scores > trained.threshold).mean())
    total = acceptance_corpus.seconds + trained.seconds + scoring_seconds
    ok = auc >= 0.90 and hot_rate >= 0.50 and total < 600.0
    report(3, ok, f"anomaly separation: AUC {auc:.3f} >= 0.90, hot anomaly "
                  f"rate {hot_rate:.1%} >= 50% at threshold "
                  f"{trained.threshold:.4f}; pipeline {total:.0f} s (< 600 s)")
    assert auc >= 0.90
    assert hot_rate >= 0.50
    assert total < 600.0


def test_criterion_4_error_magnitude_band(trained):
    # after 60 epochs: all three channel errors <= 0.8, at least one <= 0.25
    kinds = monitor.channel_kind_errors(trained.model, trained.values)
    ordered = [kinds["torque"], kinds["position"], kinds["velocity"]]
    ok = all(0.0 < v <= 0.8 for v in ordered) and min(ordered) <= 0.25
    report(4, ok, "error band: torque/position/velocity = "
                  + "/".join(f"{v:.4f}" for v in ordered)
                  + " (all <= 0.8, min <= 0.25)")
    assert all(0.0 < v <= 0.8 for v in ordered)
    assert min(ordered) <= 0.25


def test_criterion_5_thermal_difficulty_law(acceptance_corpus, trained):
    checks = []
    checks.append(joint_difficulty(0.0) == 0.0)
    checks.append(abs(joint_difficulty(math.log(2.0)) - 0.5) <= 1e-12)
    rng = np.random.default_rng(5)
    means = np.unique([np.abs(rng.normal(0, rng.uniform(0.05, 3.0), 64)).mean()
                       for _ in range(1000)])
    mapped = np.array([joint_difficulty(m) for m in means])
    checks.append(bool(np.all(np.diff(mapped) > 0.0)
                       and np.all((mapped >= 0) & (mapped < 1))))
    d_hot = [monitor.difficulty(trained.model, t, trained.norm, t_l=0.0,
                                t_h=150.0, stride=STRIDE)
             for t in acceptance_corpus.hot]
    d_cool = [monitor.difficulty(trained.model, t, trained.norm, t_l=0.0,
                                 t_h=150.0, stride=STRIDE)
              for t in acceptance_corpus.held_cool]
    checks.append(all(abs(r.total - sum(r.per_joint)) <= 1e-12
                      for r in d_hot + d_cool))
    hot_mean = float(np.mean([r.total for r in d_hot]))
    cool_mean = float(np.mean([r.total for r in d_cool]))
    checks.append(hot_mean > cool_mean)
    ok = all(checks)
    report(5, ok, f"difficulty law: d(0)=0, d(ln2)=0.5 (1e-12), strictly "
                  f"increasing on 1e3 series, total==sum (1e-12), mean d "
                  f"hot {hot_mean:.3f} > cool {cool_mean:.3f}")
    assert all(checks), checks


def test_criterion_6_generation_self_consistency(trained):
    # 100 prior samples: >= 90% below the anomaly threshold; distinct eps
    # seeds disagree in some position value by more than 1e-6
    wins = vae.generate(trained.model, 100, seed=777)
    scores = monitor.window_scores(trained.model,
                                   np.stack([w.values for w in wins]))
    below = float((scores < trained.threshold).mean())
    a = vae.generate(trained.model, 1, seed=1)[0]
    b = vae.generate(trained.model, 1, seed=2)[0]
    n_j = trained.model.n_joints
    pos_gap = float(np.abs(a.values[:, :n_j] - b.values[:, :n_j]).max())
    ok = below >= 0.90 and pos_gap > 1e-6
    report(6, ok, f"generation: {below:.0%} of 100 prior samples below "
                  f"threshold (>= 90%), eps-seed position gap {pos_gap:.3f} "
                  "> 1e-6")
    assert below >= 0.90
    assert pos_gap > 1e-6


def test_criterion_7_latent_clustering(acceptance_corpus, trained):
    from thermovae.data import windows as make_windows
    wins, labels = [], []
    for traj in acceptance_corpus.held_cool + acceptance_corpus.hot:
        ws = make_windows(traj, trained.norm, trained.model.window_len, STRIDE)
        wins.extend(ws)
        labels.extend([traj.label] * len(ws))
    mu, _ = vae.encode_batch(trained.model, np.stack([w.values for w in wins]))
    score = float(silhouette_score(mu, np.array(labels)))
    ok = score > 0.0
    report(7, ok, f"latent clustering: cool/hot silhouette {score:.3f} > 0 "
                  f"on {len(labels)} posterior means")
    assert score > 0.0


def test_criterion_8_plant_oracle():
    # constant-torque steady state vs closed-form RC value within 1%
    from dataclasses import replace
    from thermovae.data import simulate
    cfg = replace(PlantConfig(noise_q=0.0, noise_qdot=0.0, noise_tau=0.0),
                  r_th=1.0, c_th=50.0, hold_torque=4.0)
    tau_rc = 1.0 * 50.0
    traj = simulate(cfg, 10.0 * tau_rc, "hold")
    t_inf = float(cfg.steady_state_temp(4.0)[0])
    final = float(traj.temps()[-1, 0])
    rel = abs(final - t_inf) / t_inf
    ok = rel < 0.01
    report(8, ok, f"plant oracle: T(10 tau) = {final:.3f} degC vs closed form "
                  f"{t_inf:.3f} degC, rel err {rel:.2e} < 1%")
    assert rel < 0.01


def test_criterion_9_pipeline_determinism(tmp_path):
    # simulate + train + score twice with the same seeds: bitwise-identical
    # model files and verdict CSVs
    def pipeline(root):
        corpus = root / "corpus"
        fit = root / "fit"
        scored = root / "scored"
        assert cli.main(["simulate", "--cool", "2", "--hot", "1", "--duration",
                         "60", "--seed", "9", "--out", str(corpus)]) == 0
        assert cli.main(["train", "--data", str(corpus), "--out", str(fit),
                         "--epochs", "2", "--window", "32", "--stride", "16",
                         "--hidden", "6", "--bottleneck", "4",
                         "--val-fraction", "0.5", "--seed", "9"]) == 0
        assert cli.main(["score", "--model", str(fit / "model.json"),
                         "--data", str(corpus / "cool_000.csv"),
                         "--out", str(scored), "--seed", "9"]) == 0
        return ((fit / "model.json").read_bytes(),
                (scored / "verdicts.csv").read_bytes())

    model_a, verdicts_a = pipeline(tmp_path / "run1")
    model_b, verdicts_b = pipeline(tmp_path / "run2")
    ok = model_a == model_b and verdicts_a == verdicts_b
    report(9, ok, f"determinism: model files identical ({len(model_a)} bytes), "
                  f"verdict CSVs identical ({len(verdicts_a)} bytes) across "
                  "two seeded pipeline runs")
    assert model_a == model_b
    assert verdicts_a == verdicts_b
