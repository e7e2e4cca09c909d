"""Quickstart: expert data -> trained action head -> one closed-loop episode.

Run from the repository root:

    python3 demos/quickstart.py

Takes about two minutes on a laptop CPU; the tiny action head needs a few
hundred expert episodes before it generalizes to held-out seeds.
"""

import numpy as np

from steertab import datagen, flow, runtime, sim

# 1. Roll the scripted expert on a few hundred seeded episodes.
print("collecting expert trajectories ...")
trajectories = datagen.collect_trajectories(
    [("single_target", 500), ("single_target_pick", 100)], base_seed=0)
print(f"  {len(trajectories)} trajectories")

# 2. Annotate them: keyframes, projected motion sketches, reasoning targets,
#    and (for a seeded fraction) perturbed spatial priors in the instruction.
samples = datagen.build_dataset(trajectories, datagen.RecipeConfig(), seed=0)
print(f"  {len(samples)} training samples, modes: {datagen.mode_histogram(samples)}")

# 3. Train the flow-matching action head.
conds, chunks = datagen.flow_training_set(samples)
model, curve = flow.train(
    (conds, chunks),
    flow.TrainConfig(steps=30_000, learning_rate=0.05, batch_size=256, seed=0))
print(f"  final training loss {np.mean(curve[-200:]):.3f}")

# 4. Run one closed-loop episode on a held-out seed and show the slow loop's
#    reasoning next to the fast loop's execution.
policy = runtime.Policy(model=model)
config = runtime.RuntimeConfig(chunk_stride=4)
trace = runtime.run_episode("single_target", sim.NO_PERTURBATION, policy,
                            config, seed=1000)

print(f"\nepisode: {'SUCCESS' if trace.success else 'failure'} "
      f"after {trace.final_tick} fast ticks")
print(f"instruction: {trace.instruction}\n")
print("first reasoning record:")
print(trace.slow[0].cot_text)
print(f"\nreasoning updates: {len(trace.slow)}  "
      f"max staleness: {runtime.staleness_report(trace)['max_staleness']} ticks")
