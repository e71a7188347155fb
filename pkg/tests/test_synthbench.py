import pytest

from glis.baol import select_proposals
from glis.geometry import iou_3d
from glis.glci import MockLLMClient, decode_class, decode_scene, global_qa, local_qa
from glis.synthbench import (
    NoiseModel,
    SynthConfig,
    corrupt,
    default_knowledge_base,
    generate_scene,
    run_experiment,
    run_trial,
)


@pytest.fixture(scope="module")
def kb():
    return default_knowledge_base()


class TestGenerateScene:
    def test_zero_noise_scene_type_recovered(self, kb):
        cfg = SynthConfig(num_scenes=8, feature_noise=0.0, seed=11)
        for idx in range(8):
            scene = generate_scene(cfg, idx)
            recovered = global_qa(
                MockLLMClient(kb), scene.global_feature, kb.scene_types
            ).scene_type
            assert recovered == scene.scene_type
            assert decode_scene(kb, scene.global_feature) == scene.scene_type

    def test_zero_noise_classes_recovered(self, kb):
        cfg = SynthConfig(feature_noise=0.0, seed=3)
        scene = generate_scene(cfg, 0)
        proposals = corrupt(scene, NoiseModel.none(), cfg, cfg.seed)
        dets = local_qa(MockLLMClient(kb), proposals, list(kb.classes))
        assert [d.class_name for d in dets] == [g.class_name for g in scene.ground_truth]

    def test_objects_plausible_and_disjoint(self, kb):
        cfg = SynthConfig(seed=5)
        scene = generate_scene(cfg, 2)
        table = kb.plausible[scene.scene_type]
        boxes = [g.box for g in scene.ground_truth]
        assert all(table[g.class_name] for g in scene.ground_truth)
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert iou_3d(boxes[i], boxes[j]) == 0.0

    def test_deterministic(self):
        cfg = SynthConfig(seed=9)
        a = generate_scene(cfg, 4)
        b = generate_scene(cfg, 4)
        assert a == b

    def test_feature_dim_validated(self, kb):
        with pytest.raises(ValueError):
            SynthConfig(feature_dim=3)


class TestCorrupt:
    def test_identity_noise(self, kb):
        cfg = SynthConfig(seed=21, feature_noise=0.0)
        scene = generate_scene(cfg, 0)
        proposals = corrupt(scene, NoiseModel.none(), cfg, cfg.seed)
        assert len(proposals) == len(scene.ground_truth)
        for prop, obj in zip(proposals, scene.ground_truth):
            assert prop.box == obj.box
            assert prop.objectness == 1.0
            assert decode_class(kb, prop.feature) == obj.class_name

    def test_forced_implausible_confusion(self, kb):
        cfg = SynthConfig(num_scenes=3, seed=13)
        noise = NoiseModel(class_confusion_rate=1.0, implausible_bias=1.0,
                           false_positive_rate=0.0, miss_rate=0.0)
        for idx in range(3):
            scene = generate_scene(cfg, idx)
            proposals = corrupt(scene, noise, cfg, cfg.seed)
            table = kb.plausible[scene.scene_type]
            for prop in proposals:
                cls = decode_class(kb, prop.feature)
                assert not table[cls]

    def test_flip_rate_statistics(self, kb):
        # ~10^4 objects; empirical flip rate within 3 sigma of the binomial
        cfg = SynthConfig(num_scenes=2000, objects_per_scene=(5, 5), seed=17)
        rate = 0.3
        noise = NoiseModel(class_confusion_rate=rate, false_positive_rate=0.0, miss_rate=0.0)
        flips = total = 0
        for idx in range(40):
            scene = generate_scene(cfg, idx)
            proposals = corrupt(scene, noise, cfg, cfg.seed)
            for prop, obj in zip(proposals, scene.ground_truth):
                total += 1
                flips += decode_class(kb, prop.feature) != obj.class_name
        sigma = (rate * (1 - rate) / total) ** 0.5
        assert abs(flips / total - rate) <= 3 * sigma

    def test_miss_rate_one_drops_everything(self):
        cfg = SynthConfig(seed=23)
        scene = generate_scene(cfg, 0)
        noise = NoiseModel(miss_rate=1.0, false_positive_rate=0.0)
        assert corrupt(scene, noise, cfg, cfg.seed) == []

    def test_deterministic(self):
        cfg = SynthConfig(seed=29)
        scene = generate_scene(cfg, 1)
        noise = NoiseModel()
        assert corrupt(scene, noise, cfg, cfg.seed) == corrupt(scene, noise, cfg, cfg.seed)


class TestExperiment:
    def test_zero_noise_delta_exactly_zero(self):
        result = run_trial(SynthConfig(seed=31, feature_noise=0.0), NoiseModel.none())
        assert result.map_refined - result.map_initial == 0.0
        assert result.transcript_stats["removed"] == 0
        assert result.transcript_stats["reclassified"] == 0

    def test_miss_rate_one_degenerate(self):
        noise = NoiseModel(miss_rate=1.0, false_positive_rate=0.0)
        result = run_trial(SynthConfig(seed=37), noise)
        assert result.map_initial == 0.0
        assert result.map_refined == 0.0

    def test_default_noise_improves_map(self):
        results, summary = run_experiment(SynthConfig(seed=41), NoiseModel(), trials=20)
        assert len(results) == 20
        assert summary["mean_delta"] > 0.0
        assert summary["win_rate"] >= 0.9

    def test_reproducible(self):
        _, a = run_experiment(SynthConfig(seed=43), NoiseModel(), trials=5)
        _, b = run_experiment(SynthConfig(seed=43), NoiseModel(), trials=5)
        assert a == b

    def test_refine_never_removes_correct_plausible_object(self, kb):
        # kb-consistent generation + implausible-biased corruption: proposals
        # that kept their true class stay plausible, so the gate skips them
        from glis.glci import run_session

        cfg = SynthConfig(num_scenes=6, seed=47)
        noise = NoiseModel(implausible_bias=1.0)
        for idx in range(cfg.num_scenes):
            scene = generate_scene(cfg, idx)
            proposals = select_proposals(corrupt(scene, noise, cfg, cfg.seed), 0.1)
            _, final, _ = run_session(
                MockLLMClient(kb), proposals, scene.global_feature,
                list(kb.scene_types), list(kb.classes),
            )
            table = kb.plausible[scene.scene_type]
            for det in final:
                if det.status == "removed":
                    assert not table[det.class_name]

    def test_implausible_bias_monotone_interventions(self):
        cfg = SynthConfig(num_scenes=6, seed=53)
        counts = []
        for bias in (0.0, 0.3, 0.6, 0.9, 1.0):
            noise = NoiseModel(class_confusion_rate=0.5, implausible_bias=bias)
            result = run_trial(cfg, noise)
            counts.append(
                result.transcript_stats["removed"] + result.transcript_stats["reclassified"]
            )
        assert counts == sorted(counts)

    def test_trial_count_validated(self):
        with pytest.raises(ValueError):
            run_experiment(SynthConfig(seed=1), NoiseModel(), trials=0)

    def test_rates_validated(self):
        with pytest.raises(ValueError):
            NoiseModel(miss_rate=1.5)
