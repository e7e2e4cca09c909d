"""Datagen tests: keyframes, projection, recipe statistics, dataset assembly."""

import json

import numpy as np
import pytest

from steertab import codec, datagen, guide, sim
from steertab.codec import ImageBox, ImagePoint
from steertab.datagen import (
    MODE_AFFORDANCE,
    MODE_NONE,
    MODE_PATH,
    MODE_PICK_AND_PLACE,
    MODE_PICK_BOX,
    MODE_PLACE_BOX,
    MODES,
    DatagenError,
    RecipeConfig,
    build_dataset,
    collect_trajectories,
    extract_keyframes,
    flow_training_set,
    mode_histogram,
    perturb_annotation,
    project_motion,
    sample_interaction_mode,
    samples_to_jsonl,
    stats_csv,
)
from steertab.guide import BoxPrior, PointPrior, TracePrior


@pytest.fixture(scope="module")
def trajectories():
    return collect_trajectories([("single_target", 4), ("single_target_pick", 2)],
                                base_seed=0)


@pytest.fixture(scope="module")
def samples(trajectories):
    return build_dataset(trajectories, RecipeConfig(), seed=0)


class TestKeyframes:
    def test_pick_and_place_has_grasp_then_release(self, trajectories):
        traj = trajectories[0]
        kfs = extract_keyframes(traj)
        kinds = [k for _, k in kfs]
        assert kinds == ["grasp", "release"]
        assert kfs[0][0] < kfs[1][0]

    def test_pick_only_has_single_grasp(self, trajectories):
        traj = next(t for t in trajectories if t.task.task_kind == sim.PICK)
        kinds = [k for _, k in extract_keyframes(traj)]
        assert kinds == ["grasp"]

    def test_keyframe_tick_matches_aperture_crossing(self, trajectories):
        traj = trajectories[0]
        t, _ = extract_keyframes(traj)[0]
        assert traj.apertures[t - 1] >= 0.5 > traj.apertures[t]


class TestProjection:
    def test_path_ends_at_keyframe_gripper(self, trajectories):
        traj = trajectories[0]
        kf = extract_keyframes(traj)[0][0]
        affordance, path = project_motion(traj, (0, kf))
        gx, gy = traj.states[kf].gripper.position[:2]
        assert affordance.x == pytest.approx(gx, abs=1e-9)
        assert affordance.y == pytest.approx(gy, abs=1e-9)
        assert path[-1] == affordance
        assert len(path) == codec.PATH_LEN

    def test_degenerate_window_gives_constant_path(self, trajectories):
        traj = trajectories[0]
        # The expert holds still only in degenerate cases; force one by using
        # a window of two identical states at the very end if present, else
        # check the documented behavior via a synthetic trajectory.
        states = (traj.states[0],) * 3
        actions = ((0.0, 0.0, 0.0),) * 2
        still = datagen.TrajectoryRecord(states, actions, traj.task,
                                         traj.scenario, traj.seed)
        affordance, path = project_motion(still, (0, 2))
        assert all(p == affordance for p in path)

    def test_too_short_window_rejected(self, trajectories):
        with pytest.raises(DatagenError):
            project_motion(trajectories[0], (3, 3))


class TestPerturbation:
    def test_point_jitter_is_deterministic_and_clamped(self):
        p = PointPrior(ImagePoint(0.999, 0.001))
        r = RecipeConfig(point_sigma=0.2)
        a = perturb_annotation(p, r, seed=5)
        b = perturb_annotation(p, r, seed=5)
        assert a == b
        assert 0.0 <= a.point.x <= 1.0 and 0.0 <= a.point.y <= 1.0

    def test_zero_sigma_is_identity(self):
        p = PointPrior(ImagePoint(0.4, 0.6))
        r = RecipeConfig(point_sigma=0.0, box_sigma=0.0, trace_sigma=0.0)
        assert perturb_annotation(p, r, seed=1) == p
        b = BoxPrior(ImageBox(0.1, 0.1, 0.3, 0.3))
        assert perturb_annotation(b, r, seed=1) == b

    def test_box_jitter_stays_ordered(self):
        b = BoxPrior(ImageBox(0.45, 0.45, 0.55, 0.55))
        r = RecipeConfig(box_sigma=0.3)
        for seed in range(50):
            out = perturb_annotation(b, r, seed=seed).box
            assert out.x_min < out.x_max and out.y_min < out.y_max
            assert 0.0 <= out.x_min and out.x_max <= 1.0

    def test_trace_jitter_preserves_length(self):
        tr = TracePrior(tuple(ImagePoint(0.1 * i, 0.5) for i in range(2, 8)))
        out = perturb_annotation(tr, RecipeConfig(trace_sigma=0.05), seed=2)
        assert len(out.points) == len(tr.points)

    def test_perturbed_priors_still_validate(self):
        r = RecipeConfig(point_sigma=0.05, box_sigma=0.05, trace_sigma=0.05)
        for seed in range(30):
            for prior in (PointPrior(ImagePoint(0.5, 0.5)),
                          BoxPrior(ImageBox(0.2, 0.2, 0.6, 0.6)),
                          TracePrior((ImagePoint(0.1, 0.1), ImagePoint(0.9, 0.9)))):
                guide.validate_prior(perturb_annotation(prior, r, seed=seed))


class TestRecipe:
    def test_marginals_analytic(self):
        m = RecipeConfig().marginals()
        assert m[MODE_NONE] == pytest.approx(0.70)
        assert m[MODE_PICK_BOX] == pytest.approx(0.10)
        assert m[MODE_PLACE_BOX] == pytest.approx(0.06)
        assert m[MODE_PICK_AND_PLACE] == pytest.approx(0.06)
        assert m[MODE_AFFORDANCE] == pytest.approx(0.05)
        assert m[MODE_PATH] == pytest.approx(0.03)
        assert sum(m.values()) == pytest.approx(1.0)

    def test_empirical_marginals_100k(self):
        # The acceptance bound is ±0.01 on 100,000 draws.
        recipe = RecipeConfig()
        counts = {m: 0 for m in MODES}
        for seed in range(100_000):
            counts[sample_interaction_mode(recipe, seed)] += 1
        marg = recipe.marginals()
        for mode in MODES:
            assert abs(counts[mode] / 100_000 - marg[mode]) < 0.01, mode

    def test_sampler_deterministic_per_seed(self):
        r = RecipeConfig()
        assert all(sample_interaction_mode(r, s) == sample_interaction_mode(r, s)
                   for s in range(100))

    def test_disabled_recipe_is_all_none(self):
        r = RecipeConfig(enable_probability=0.0)
        assert all(sample_interaction_mode(r, s) == MODE_NONE for s in range(200))
        assert r.marginals()[MODE_NONE] == pytest.approx(1.0)

    def test_bad_weights_rejected(self):
        with pytest.raises(DatagenError):
            RecipeConfig(mode_weights=((MODE_NONE, 0.5), (MODE_PICK_BOX, 0.6)))
        with pytest.raises(DatagenError):
            RecipeConfig(enable_probability=1.5)
        with pytest.raises(DatagenError):
            RecipeConfig(point_sigma=-0.1)


class TestDataset:
    def test_samples_cover_trajectories(self, trajectories, samples):
        expected = sum(len(t.actions) // 8 for t in trajectories)
        assert len(samples) == expected

    def test_every_cot_survives_codec_round_trip(self, samples):
        for s in samples[:200]:
            text = codec.serialize_cot(s.cot)
            assert codec.parse_cot(text) == codec.snap_cot(s.cot)

    def test_chunks_are_expert_actions(self, trajectories, samples):
        traj = trajectories[0]
        first = next(s for s in samples if s.scenario == traj.scenario
                     and s.seed == traj.seed)
        np.testing.assert_array_equal(first.chunk,
                                      np.asarray(traj.actions[:8], dtype=np.float64))

    def test_augmented_instruction_carries_prior_fragment(self, samples):
        augmented = [s for s in samples if s.interaction_mode != MODE_NONE]
        assert augmented, "recipe produced no augmented samples"
        for s in augmented:
            assert s.prior is not None
            assert "<|" in s.instruction

    def test_flow_training_set_shapes(self, samples):
        conds, chunks = flow_training_set(samples)
        assert conds.shape == (len(samples), 42)
        assert chunks.shape == (len(samples), 24)
        assert np.all(np.isfinite(conds)) and np.all(np.isfinite(chunks))

    def test_build_dataset_deterministic(self, trajectories):
        a = build_dataset(trajectories, RecipeConfig(), seed=7)
        b = build_dataset(trajectories, RecipeConfig(), seed=7)
        assert samples_to_jsonl(a) == samples_to_jsonl(b)

    def test_empty_input_rejected(self):
        with pytest.raises(DatagenError):
            build_dataset([], RecipeConfig())

    def test_jsonl_round_trips_as_json(self, samples):
        text = samples_to_jsonl(samples[:10])
        rows = [json.loads(ln) for ln in text.strip().splitlines()]
        assert len(rows) == 10
        for row in rows:
            parsed = codec.parse_cot(row["cot"])
            assert parsed.task  # structured text survives transport
            assert row["interaction_mode"] in MODES

    def test_stats_csv_fractions_sum_to_one(self, samples):
        text = stats_csv(samples)
        rows = text.strip().splitlines()[1:]
        fractions = [float(r.split(",")[2]) for r in rows]
        assert sum(fractions) == pytest.approx(1.0, abs=1e-3)
        hist = mode_histogram(samples)
        assert sum(hist.values()) == len(samples)
