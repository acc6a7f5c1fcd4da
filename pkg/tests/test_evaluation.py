import math

import numpy as np
import pytest
import torch

from segsynth.core import ValidationError
from segsynth.data import Dataset
from segsynth.evaluation import (
    FULL_SCALE_REFERENCE,
    accuracy_ceiling,
    accuracy_floor,
    estimate_segmentation,
    evaluation_triples,
    evaluate_generator,
    loss_decomposition_report,
    spatial_consistency_accuracy,
)
from segsynth.losses import LossReport, LossWeights, compose_totals
from segsynth.networks import ArchConfig, build_segmentor
from segsynth.training import (
    IterationRecord,
    TrainConfig,
    TrainHistory,
    build_bundle,
)


class _FixedLogits(torch.nn.Module):
    """Emits a constant logits tensor regardless of input."""

    def __init__(self, logits):
        super().__init__()
        self.logits = logits

    def forward(self, x):
        return self.logits.expand(x.shape[0], *self.logits.shape[1:])


class TestEstimateSegmentation:
    def test_constant_channel_wins(self):
        logits = torch.zeros(1, 3, 4, 4)
        logits[0, 2] = 5.0
        net = _FixedLogits(logits)
        est = estimate_segmentation(net, torch.zeros(2, 3, 4, 4))
        assert (est == 2).all()

    def test_tie_breaks_to_lower_index(self):
        logits = torch.zeros(1, 3, 2, 2)
        logits[0, 0] = 1.0
        logits[0, 1] = 1.0
        net = _FixedLogits(logits)
        est = estimate_segmentation(net, torch.zeros(1, 3, 2, 2))
        assert (est == 0).all()

    def test_argmax_commutes_with_softmax(self):
        gen = torch.Generator().manual_seed(0)
        logits = torch.randn(1, 5, 6, 6, generator=gen)
        assert torch.equal(logits.argmax(dim=1), torch.softmax(logits, dim=1).argmax(dim=1))


class TestSpatialConsistency:
    def test_perfect_match_is_one(self):
        logits = torch.zeros(1, 3, 4, 4)
        logits[0, 1] = 9.0
        net = _FixedLogits(logits)
        refs = torch.ones(2, 4, 4, dtype=torch.int64)
        acc = spatial_consistency_accuracy(net, torch.zeros(2, 3, 4, 4), refs)
        assert acc == 1.0

    def test_three_quarters(self):
        logits = torch.zeros(1, 2, 2, 2)
        logits[0, 1] = 9.0
        net = _FixedLogits(logits)
        ref = torch.ones(1, 2, 2, dtype=torch.int64)
        ref[0, 0, 0] = 0
        acc = spatial_consistency_accuracy(net, torch.zeros(1, 3, 2, 2), ref)
        assert acc == pytest.approx(0.75)

    def test_macro_average_over_images(self):
        logits = torch.zeros(1, 2, 2, 2)
        logits[0, 1] = 9.0
        net = _FixedLogits(logits)
        refs = torch.stack([
            torch.ones(2, 2, dtype=torch.int64),          # accuracy 1.0
            torch.zeros(2, 2, dtype=torch.int64).index_put_(
                (torch.tensor([0, 0]), torch.tensor([0, 1])), torch.tensor([1, 1])
            ),                                             # accuracy 0.5
        ])
        acc = spatial_consistency_accuracy(net, torch.zeros(2, 3, 2, 2), refs)
        assert acc == pytest.approx(0.75)

    def test_empty_rejected(self):
        net = _FixedLogits(torch.zeros(1, 2, 2, 2))
        with pytest.raises(ValidationError):
            spatial_consistency_accuracy(net, torch.zeros(0, 3, 2, 2), torch.zeros(0, 2, 2).long())

    def test_relabeling_invariance(self):
        gen = torch.Generator().manual_seed(1)
        logits = torch.randn(1, 3, 4, 4, generator=gen)
        net = _FixedLogits(logits)
        ref = torch.randint(0, 3, (1, 4, 4), generator=gen)
        base = spatial_consistency_accuracy(net, torch.zeros(1, 3, 4, 4), ref)
        perm = torch.tensor([2, 0, 1])
        net_perm = _FixedLogits(logits[:, perm])
        # applying the same permutation to estimates and references preserves accuracy
        inverse = torch.argsort(perm)
        ref_perm = inverse[ref]
        permuted = spatial_consistency_accuracy(net_perm, torch.zeros(1, 3, 4, 4), ref_perm)
        assert base == pytest.approx(permuted)


class TestFloorCeiling:
    def test_identical_segmentations_floor_equals_ceiling(self):
        ds = Dataset(
            images=np.zeros((4, 8, 8, 3), dtype=np.float32),
            index_maps=np.ones((4, 8, 8), dtype=np.uint8),
            labels=np.ones((4, 1), dtype=np.float32),
            n_s=2,
        )
        arch = ArchConfig(image_size=16, n_s=2, n_c=1, n_z=8, base_channels=4)
        # fixed-logit judge over 8x8 inputs
        logits = torch.zeros(1, 2, 8, 8)
        logits[0, 1] = 3.0
        net = _FixedLogits(logits)
        rng = np.random.default_rng(0)
        assert accuracy_floor(net, ds, rng) == accuracy_ceiling(net, ds)

    def test_floor_needs_two_samples(self):
        ds = Dataset(
            images=np.zeros((1, 8, 8, 3), dtype=np.float32),
            index_maps=np.zeros((1, 8, 8), dtype=np.uint8),
            labels=np.zeros((1, 1), dtype=np.float32),
            n_s=2,
        )
        with pytest.raises(ValidationError):
            accuracy_floor(_FixedLogits(torch.zeros(1, 2, 8, 8)), ds, np.random.default_rng(0))

    def test_reference_values_documented(self):
        assert FULL_SCALE_REFERENCE["faces"] == {
            "floor": 0.9204, "method": 0.9895, "ceiling": 0.9928,
        }
        assert FULL_SCALE_REFERENCE["fashion"] == {
            "floor": 0.8027, "method": 0.8323, "ceiling": 0.8341,
        }
        for values in FULL_SCALE_REFERENCE.values():
            assert values["floor"] < values["method"] < values["ceiling"]


class TestEvaluateGenerator:
    def test_runs_with_own_and_external_judge(self, small_shapes_dataset):
        arch = ArchConfig(image_size=32, n_s=4, n_c=3, n_z=16, base_channels=8)
        cfg = TrainConfig(arch=arch, m=4, epochs=1, seed=0)
        bundle = build_bundle(cfg, with_optimizers=False)
        z, c, s_t = evaluation_triples(small_shapes_dataset, 8, arch.n_z, seed=1)
        own = evaluate_generator(bundle, z, c, s_t)
        judge = build_segmentor(arch, seed=77)
        ext = evaluate_generator(bundle, z, c, s_t, judge=judge)
        assert 0.0 <= own <= 1.0 and 0.0 <= ext <= 1.0


def _record(iteration, epoch, **parts):
    report = LossReport(**parts)
    compose_totals(report, LossWeights())
    return IterationRecord(
        iteration=iteration, epoch=epoch, wall_time=0.0,
        d_updates=0, s_updates=0, g_updates=0, report=report,
    )


class TestDecomposition:
    def test_single_record_percentages(self):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0,
        )
        hist = TrainHistory(config=cfg)
        # generator parts: adversarial 1, classification 10 (= 5 * 2), segmentation 3
        hist.append(_record(1, 1, adv_g=-1.0, cls_fake=2.0, seg_fake=3.0,
                            adv=0.1, gp=0.2, cls_real=0.4, seg_real=1.0))
        report = loss_decomposition_report(hist, at_epoch=1)
        assert report.generator_percent["adversarial"] == pytest.approx(100 / 14, abs=1e-9)
        assert report.generator_percent["classification"] == pytest.approx(1000 / 14, abs=1e-9)
        assert report.generator_percent["segmentation"] == pytest.approx(300 / 14, abs=1e-9)
        # the rounded values quoted for this decomposition
        assert round(report.generator_percent["adversarial"], 2) == 7.14
        assert round(report.generator_percent["classification"], 2) == 71.43
        assert round(report.generator_percent["segmentation"], 2) == 21.43

    def test_percentages_sum_to_100(self):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0,
        )
        hist = TrainHistory(config=cfg)
        rng = np.random.default_rng(0)
        for i in range(5):
            hist.append(_record(i + 1, 1,
                                adv_g=rng.normal(), cls_fake=abs(rng.normal()),
                                seg_fake=abs(rng.normal()), adv=rng.normal(),
                                gp=abs(rng.normal()), cls_real=abs(rng.normal()),
                                seg_real=abs(rng.normal())))
        report = loss_decomposition_report(hist, at_epoch=1)
        assert math.fsum(report.generator_percent.values()) == pytest.approx(100.0, abs=1e-9)
        assert math.fsum(report.discriminator_percent.values()) == pytest.approx(100.0, abs=1e-9)

    def test_recomposition_exact(self):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0,
        )
        hist = TrainHistory(config=cfg)
        hist.append(_record(1, 1, adv_g=-0.5, cls_fake=1.5, seg_fake=2.5,
                            adv=0.3, gp=0.7, cls_real=0.9, seg_real=1.1))
        report = loss_decomposition_report(hist, at_epoch=1)
        assert report.total_G == pytest.approx(
            math.fsum(report.generator_parts.values()), abs=0
        )
        assert report.total_D == pytest.approx(
            math.fsum(report.discriminator_parts.values()), abs=0
        )

    def test_ablated_run_has_single_generator_part(self):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0, disable_segmentor=True, disable_classifier=True,
        )
        hist = TrainHistory(config=cfg)
        report = LossReport(adv_g=-2.0, cls_fake=1.0, seg_fake=None,
                            adv=0.5, gp=0.25, cls_real=0.75)
        compose_totals(report, cfg.weights, classifier_enabled=False, segmentor_enabled=False)
        hist.append(IterationRecord(iteration=1, epoch=1, wall_time=0.0,
                                    d_updates=0, s_updates=0, g_updates=0, report=report))
        rep = loss_decomposition_report(hist, at_epoch=1)
        assert list(rep.generator_parts) == ["adversarial"]
        assert rep.generator_percent["adversarial"] == pytest.approx(100.0)

    def test_missing_epoch_rejected(self):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0,
        )
        hist = TrainHistory(config=cfg)
        with pytest.raises(ValidationError):
            loss_decomposition_report(hist, at_epoch=1)

    def test_csv_and_json_outputs(self, tmp_path):
        cfg = TrainConfig(
            arch=ArchConfig(image_size=16, n_s=3, n_c=2, n_z=8, base_channels=4),
            epochs=1, seed=0,
        )
        hist = TrainHistory(config=cfg)
        hist.append(_record(1, 1, adv_g=-1.0, cls_fake=2.0, seg_fake=3.0,
                            adv=0.1, gp=0.2, cls_real=0.4, seg_real=1.0))
        report = loss_decomposition_report(hist, at_epoch=1)
        payload = report.to_json()
        assert '"epoch": 1' in payload
        csv_path = str(tmp_path / "parts.csv")
        report.write_csv(csv_path)
        lines = open(csv_path).read().strip().split("\n")
        assert lines[0] == "network,part,value,percent"
        assert len(lines) == 1 + 3 + 3
