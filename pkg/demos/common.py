"""Shared helper for the demo scripts: train the benchmark policy once and
cache the weights next to this file so later demos start instantly."""

import pathlib

from steertab import datagen, flow

CACHE = pathlib.Path(__file__).parent / ".demo-model.stfw"

TRAINING_MIX = [
    ("single_target", 500),
    ("single_target_pick", 100),
    ("obstacle", 150),
    ("distractor_position", 100),
    ("distractor_color", 100),
]


def get_model() -> flow.FlowModel:
    if CACHE.exists():
        return flow.load_model(str(CACHE))
    print("training the demo policy (about two minutes, cached afterwards) ...")
    trajectories = datagen.collect_trajectories(TRAINING_MIX, base_seed=10_000)
    samples = datagen.build_dataset(trajectories, datagen.RecipeConfig(), seed=0)
    model, _ = flow.train(
        datagen.flow_training_set(samples),
        flow.TrainConfig(steps=30_000, learning_rate=0.05, batch_size=256, seed=0))
    flow.save_model(model, str(CACHE))
    return model
