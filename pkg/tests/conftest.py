"""Session-scoped corpus and trained model shared by the heavier tests.

Building the acceptance-scale model costs a couple of minutes (8 cruise
trajectories of 1601 samples, 60 epochs), so it is trained once per session
and reused by the training-band test and the acceptance suite.
"""

import time
from dataclasses import replace
from types import SimpleNamespace

import numpy as np
import pytest

from thermovae import (PlantConfig, TrainConfig, VaeModel, fit_normalizer,
                       simulate, train, validation_split, windows)
from thermovae import monitor

WINDOW = 64
STRIDE = 16
DURATION = 160.0  # 1601 samples per trajectory at dt = 0.1 s
EPOCHS = 60
SEED = 42


@pytest.fixture(scope="session")
def acceptance_corpus():
    plant = PlantConfig()
    t0 = time.perf_counter()
    train_cool = [simulate(replace(plant, seed=100 + i), DURATION, "cruise")
                  for i in range(8)]
    held_cool = [simulate(replace(plant, seed=200 + i), DURATION, "cruise")
                 for i in range(4)]
    hot = [simulate(replace(plant, seed=300 + i), DURATION, "hold")
           for i in range(4)]
    seconds = time.perf_counter() - t0
    assert all(t.label == "cool" for t in train_cool + held_cool)
    assert all(t.label == "hot" for t in hot)
    assert all(len(t) >= 1500 for t in train_cool)
    return SimpleNamespace(plant=plant, train_cool=train_cool,
                           held_cool=held_cool, hot=hot, seconds=seconds)


@pytest.fixture(scope="session")
def trained(acceptance_corpus):
    t0 = time.perf_counter()
    norm = fit_normalizer(acceptance_corpus.train_cool)
    wins = []
    for traj in acceptance_corpus.train_cool:
        wins.extend(windows(traj, norm, WINDOW, STRIDE))
    model = VaeModel(window_len=WINDOW, channels=3, seed=SEED, normalizer=norm)
    cfg = TrainConfig(epochs=EPOCHS, seed=SEED)
    model, history = train(model, wins, cfg)

    values = np.stack([w.values for w in wins])
    _, val_idx = validation_split(len(wins), cfg)
    threshold = monitor.calibrate_threshold(
        monitor.window_scores(model, values[val_idx]))
    model.threshold = threshold
    seconds = time.perf_counter() - t0
    return SimpleNamespace(model=model, norm=norm, windows=wins, values=values,
                           history=history, threshold=threshold, cfg=cfg,
                           seconds=seconds)
