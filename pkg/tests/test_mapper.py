import math

import pytest

from mfcim.mapper import (LayerProfile, analyze_network, assign_layers,
                          build_mapping_plan, partition_layer, project_system,
                          reference_network)


def lenet_profiles():
    layers, shape, overrides = reference_network("mnist_lenet")
    return analyze_network(layers, shape), overrides


class TestAnalyze:
    def test_lenet_conv1_counts(self):
        profiles, _ = lenet_profiles()
        conv1 = profiles[0]
        assert conv1.weight_count == 150
        assert conv1.macs == 86_400            # 24*24 outputs * 150 weights
        assert conv1.ops_per_weight == 576.0

    def test_last_dense_counts(self):
        profiles, _ = lenet_profiles()
        logits = profiles[-1]
        assert logits.weight_count == 840
        assert logits.ops_per_weight == 1.0

    def test_empty_network(self):
        assert analyze_network([], 10) == []

    def test_shape_chain_checked(self):
        with pytest.raises(ValueError, match="expects"):
            analyze_network([{"kind": "dense", "in_dim": 5, "out_dim": 2}], 10)

    def test_conv_chain_checked(self):
        with pytest.raises(ValueError, match="channels"):
            analyze_network([{"kind": "conv", "in_ch": 4, "out_ch": 2,
                              "kernel": 3}], (3, 8, 8))

    def test_depthwise_groups(self):
        profiles = analyze_network(
            [{"kind": "conv", "in_ch": 8, "out_ch": 8, "kernel": 3, "pad": 1,
              "groups": 8}], (8, 8, 8))
        assert profiles[0].weight_count == 9 * 8
        assert profiles[0].macs == 8 * 8 * 9 * 8


class TestAssign:
    def test_threshold_splits_by_reuse(self):
        profiles, _ = lenet_profiles()
        assign_layers(profiles, reuse_threshold=10)
        assert [p.assignment for p in profiles] == \
            ["cim", "cim", "digital", "digital"]

    def test_huge_threshold_all_digital(self):
        profiles, _ = lenet_profiles()
        assign_layers(profiles, reuse_threshold=1e12)
        assert all(p.assignment == "digital" for p in profiles)

    def test_tiny_threshold_all_cim(self):
        profiles, _ = lenet_profiles()
        assign_layers(profiles, reuse_threshold=1e-9)
        assert all(p.assignment == "cim" for p in profiles)

    def test_overrides_win(self):
        profiles, overrides = lenet_profiles()
        assign_layers(profiles, reuse_threshold=1e12, overrides=overrides)
        assert profiles[0].assignment == "cim"

    def test_threshold_monotonicity(self):
        profiles, _ = lenet_profiles()
        fractions = []
        for t in (0.5, 2, 50, 500, 1e6):
            assign_layers(profiles, reuse_threshold=t)
            plan = build_mapping_plan(profiles)
            fractions.append(plan.f_ops_cim)
        assert fractions == sorted(fractions, reverse=True)

    def test_threshold_validated(self):
        profiles, _ = lenet_profiles()
        with pytest.raises(ValueError):
            assign_layers(profiles, reuse_threshold=0)


class TestPartition:
    def _profile(self, width, channels=6):
        return LayerProfile(name="t", kind="conv", weight_count=width * channels,
                            op_count=2 * width * channels,
                            flattened_width=width, out_channels=channels,
                            assignment="cim")

    def test_narrow_filter_single_half(self):
        part = partition_layer(self._profile(25))
        assert part.per_channel_halves == 1
        assert part.widths == (25,)

    def test_wide_filter_split(self):
        part = partition_layer(self._profile(75))
        assert part.per_channel_halves == 3
        assert part.widths == (31, 31, 13)

    def test_boundary_width(self):
        part = partition_layer(self._profile(31))
        assert part.per_channel_halves == 1 and part.widths == (31,)

    def test_coverage_invariant(self):
        for width in (1, 5, 31, 32, 62, 63, 100, 400):
            part = partition_layer(self._profile(width))
            assert sum(part.widths) == width
            assert max(part.widths) <= 31
            assert part.halves_total == part.per_channel_halves * 6

    def test_digital_layer_rejected(self):
        p = self._profile(25)
        p.assignment = "digital"
        with pytest.raises(ValueError):
            partition_layer(p)


class TestProjection:
    def test_endpoints(self):
        assert project_system(1.0) == pytest.approx(105.0)
        assert project_system(0.0) == pytest.approx(2.8)

    def test_harmonic_blend(self):
        assert project_system(0.85) == pytest.approx(
            1 / (0.85 / 105 + 0.15 / 2.8), rel=1e-12)
        assert project_system(0.85) == pytest.approx(16.2, abs=0.1)

    def test_fraction_validated(self):
        with pytest.raises(ValueError):
            project_system(1.5)


class TestReferenceNetworks:
    def test_cifar10_aggregate_fractions(self):
        layers, shape, overrides = reference_network("cifar10_cnn")
        profiles = assign_layers(analyze_network(layers, shape), 10, overrides)
        plan = build_mapping_plan(profiles)
        assert plan.f_ops_cim >= 0.85
        assert plan.f_weights_cim <= 0.45

    def test_lenet_aggregate_fractions(self):
        profiles, overrides = lenet_profiles()
        assign_layers(profiles, 10, overrides)
        plan = build_mapping_plan(profiles)
        assert plan.f_ops_cim >= 0.85
        assert plan.f_weights_cim <= 0.45

    def test_mobilenet_table_profiles(self):
        layers, shape, overrides = reference_network("mobilenet_v2_cifar100")
        profiles = assign_layers(analyze_network(layers, shape), 10, overrides)
        plan = build_mapping_plan(profiles)
        # bottleneck stages carry the bulk of the arithmetic
        assert plan.f_ops_cim >= 0.85
        for part in plan.partitions:
            profile = next(p for p in profiles if p.name == part.layer)
            assert sum(part.widths) == profile.flattened_width

    def test_unknown_network(self):
        with pytest.raises(ValueError):
            reference_network("resnet50")

    def test_plan_serializes(self):
        layers, shape, overrides = reference_network("mnist_mlp")
        profiles = assign_layers(analyze_network(layers, shape), 10, overrides)
        plan = build_mapping_plan(profiles)
        d = plan.to_dict()
        assert set(d) >= {"f_ops_cim", "f_weights_cim",
                          "blended_tops_per_watt", "layers", "partitions"}

    def test_unassigned_plan_rejected(self):
        profiles, _ = lenet_profiles()
        with pytest.raises(ValueError):
            build_mapping_plan(profiles)
