"""A sketched path steers the gripper around a keep-out region.

The obstacle scenario puts a forbidden zone between the gripper and the
block; entering it fails the episode.  The policy's own plan is a straight
line, so unguided runs clip the zone almost every time.  A trace prior --
the 2D path a user would sketch on the overlay -- replaces the planned
gripper path and detours around it.

    python3 demos/trace_detour.py
"""

import common

from steertab import bench, runtime, sim

policy = runtime.Policy(model=common.get_model())
config = runtime.RuntimeConfig(chunk_stride=4)

SEEDS = range(40)

scores = {}
for modality in ("none", "trace"):
    wins = 0
    for seed in SEEDS:
        state, task = sim.reset(seed, "obstacle")
        guidance = None
        if modality == "trace":
            event = bench.oracle_guidance("trace", state, task, source="user")
            guidance = {-1: [event]}  # -1 = before the first slow tick
        trace = runtime.run_episode("obstacle", sim.NO_PERTURBATION, policy,
                                    config, guidance_source=guidance, seed=seed)
        wins += trace.success
    scores[modality] = wins

n = len(SEEDS)
print(f"unguided:     {scores['none']}/{n} (straight-line approach crosses the keep-out zone)")
print(f"trace-guided: {scores['trace']}/{n} (sketched detour becomes the gripper path)")

# Print the path block the trace prior produces.
seed = 0
state, task = sim.reset(seed, "obstacle")
event = bench.oracle_guidance("trace", state, task, source="user")
trace = runtime.run_episode("obstacle", sim.NO_PERTURBATION, policy, config,
                            guidance_source={-1: [event]}, seed=seed)
cot = trace.slow[0].cot_text
path_block = cot[cot.index("<|gripper_path_2d_start|>"):cot.index("<|gripper_path_2d_end|>")]
print(f"\nseed {seed} first reasoning record's path block:\n{path_block.strip()}")
