"""Train a small VAE on cool motions and catch the overheating-prone ones.

Desk-scale version of the full monitoring loop: simulate, normalize,
window, train, calibrate a threshold on held-out validation scores, then
score unseen cool and hot trajectories.  Takes around a minute.
"""

from dataclasses import replace

import numpy as np

from thermovae import (PlantConfig, TrainConfig, VaeModel, fit_normalizer,
                       monitor, simulate, train, validation_split, windows)

plant = PlantConfig()
cool_train = [simulate(replace(plant, seed=10 + i), 160.0, "cruise") for i in range(4)]
cool_test = simulate(replace(plant, seed=90), 160.0, "cruise")
hot_test = simulate(replace(plant, seed=91), 160.0, "hold")

norm = fit_normalizer(cool_train)
wins = []
for traj in cool_train:
    wins.extend(windows(traj, norm, length=64, stride=16))
print(f"training on {len(wins)} windows from {len(cool_train)} cool trajectories")

model = VaeModel(window_len=64, channels=3, seed=1, normalizer=norm)
cfg = TrainConfig(epochs=25, seed=1)
model, history = train(model, wins, cfg)
print(f"loss: epoch 1 {history.train_loss[0]:.1f} -> "
      f"epoch {cfg.epochs} {history.train_loss[-1]:.1f}")

values = np.stack([w.values for w in wins])
_, val_idx = validation_split(len(wins), cfg)
threshold = monitor.calibrate_threshold(monitor.window_scores(model, values[val_idx]))
print(f"anomaly threshold (p99 of validation scores): {threshold:.4f}")

for name, traj in (("cool", cool_test), ("hot", hot_test)):
    errors = monitor.recon_error_series(model, traj, norm, stride=16)
    verdicts = monitor.make_verdicts(errors, threshold)
    rate = np.mean([v.is_anomalous for v in verdicts])
    print(f"{name} test: window scores {errors.scores.min():.3f}.."
          f"{errors.scores.max():.3f}, anomaly rate {rate:.0%}")

# Thermal difficulty condenses the same errors into a shareable number.
for name, traj in (("cool", cool_test), ("hot", hot_test)):
    rep = monitor.difficulty(model, traj, norm, t_l=0.0, t_h=150.0,
                             robot_id="demo-arm")
    print(f"{name} difficulty d = {rep.total:.3f} (per joint {rep.per_joint})")
