"""Layer-wise workload analysis and network-to-array mapping.

Early conv layers hold few weights but reuse each one across many
output positions; late dense layers hold most of the weights and reuse
each one once.  High-reuse layers are worth pinning into compute-in-
memory arrays; low-reuse layers are cheaper in digital with denser
storage.  The mapper profiles weights/ops per layer, assigns layers by
a reuse threshold (with explicit overrides), partitions flattened
filters wider than one array half, groups partitions that share inputs
into stitched chains, and projects the blended energy efficiency of the
mixed system.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costs import DIGITAL_TOPS_PER_WATT, SILICON_TOPS_PER_WATT

__all__ = [
    "LayerProfile", "Partition", "MappingPlan",
    "analyze_network", "assign_layers", "partition_layer",
    "project_system", "build_mapping_plan", "reference_network",
    "CIM_EFF_TOPS_W", "DIGITAL_EFF_TOPS_W",
]

# macro-level efficiencies used for system projections (TOPS/W): the
# in-memory figure from the 8x62 array, the digital figure from a
# representative accelerator
CIM_EFF_TOPS_W = SILICON_TOPS_PER_WATT["8x62"]
DIGITAL_EFF_TOPS_W = DIGITAL_TOPS_PER_WATT


@dataclass
class LayerProfile:
    name: str
    kind: str                 # conv | dense
    weight_count: int
    op_count: int             # MACs counted as 2 ops each
    flattened_width: int      # filter width per output channel / input dim
    out_channels: int
    assignment: str | None = None   # "cim" | "digital"

    @property
    def macs(self) -> int:
        return self.op_count // 2

    @property
    def ops_per_weight(self) -> float:
        return self.op_count / (2 * self.weight_count) if self.weight_count else 0.0


@dataclass(frozen=True)
class Partition:
    layer: str
    per_channel_halves: int     # ceil(F / M)
    widths: tuple               # column widths of each slice, sum == F
    stitch_groups: int          # one group per slice index; channels share inputs
    halves_total: int           # per_channel_halves * out_channels


@dataclass
class MappingPlan:
    profiles: list
    partitions: list
    columns_per_half: int
    f_ops_cim: float
    f_weights_cim: float
    blended_tops_w: float
    cim_eff: float = CIM_EFF_TOPS_W
    digital_eff: float = DIGITAL_EFF_TOPS_W

    def to_dict(self) -> dict:
        return {
            "columns_per_half": self.columns_per_half,
            "f_ops_cim": self.f_ops_cim,
            "f_weights_cim": self.f_weights_cim,
            "blended_tops_per_watt": self.blended_tops_w,
            "cim_eff_tops_per_watt": self.cim_eff,
            "digital_eff_tops_per_watt": self.digital_eff,
            "layers": [{
                "name": p.name, "kind": p.kind,
                "weights": p.weight_count, "ops": p.op_count,
                "ops_per_weight": p.ops_per_weight,
                "assignment": p.assignment,
            } for p in self.profiles],
            "partitions": [{
                "layer": q.layer,
                "per_channel_halves": q.per_channel_halves,
                "widths": list(q.widths),
                "stitch_groups": q.stitch_groups,
                "halves_total": q.halves_total,
            } for q in self.partitions],
        }


def analyze_network(layers, input_shape):
    """Profile weights and operations per layer.

    layers: declarative dicts (same schema the trainer uses) —
    conv/conv_mf need in_ch/out_ch/kernel with optional stride, pad and
    groups; dense/mf_dense need in_dim/out_dim; maxpool needs size.
    input_shape: (channels, height, width) for conv stacks or an int for
    dense-only networks.  Pools and norms carry no weights and no
    counted MACs.
    """
    profiles = []
    if isinstance(input_shape, int):
        c, h, w = None, None, None
        flat = input_shape
    else:
        c, h, w = input_shape
        flat = c * h * w
    for i, layer in enumerate(layers):
        kind = layer["kind"]
        name = layer.get("name", f"{kind}{i}")
        if kind in ("conv", "conv_mf"):
            k = layer["kernel"]
            stride = layer.get("stride", 1)
            pad = layer.get("pad", 0)
            groups = layer.get("groups", 1)
            in_ch, out_ch = layer["in_ch"], layer["out_ch"]
            if in_ch != c:
                raise ValueError(f"{name}: expects {in_ch} channels, chain has {c}")
            if in_ch % groups or out_ch % groups:
                raise ValueError(f"{name}: channels not divisible by groups")
            oh = (h + 2 * pad - k) // stride + 1
            ow = (w + 2 * pad - k) // stride + 1
            if oh < 1 or ow < 1:
                raise ValueError(f"{name}: kernel {k} does not fit {h}x{w}")
            fan = k * k * in_ch // groups
            weights = fan * out_ch
            macs = oh * ow * fan * out_ch
            profiles.append(LayerProfile(
                name=name, kind="conv", weight_count=weights,
                op_count=2 * macs, flattened_width=fan, out_channels=out_ch))
            c, h, w = out_ch, oh, ow
            flat = c * h * w
        elif kind in ("dense", "mf_dense"):
            in_dim, out_dim = layer["in_dim"], layer["out_dim"]
            if in_dim != flat:
                raise ValueError(f"{name}: expects {in_dim} inputs, chain has {flat}")
            weights = in_dim * out_dim
            profiles.append(LayerProfile(
                name=name, kind="dense", weight_count=weights,
                op_count=2 * weights, flattened_width=in_dim,
                out_channels=out_dim))
            c, h, w = None, None, None
            flat = out_dim
        elif kind == "maxpool":
            s = layer.get("size", 2)
            h, w = h // s, w // s
            flat = c * h * w
        elif kind in ("batchnorm_lite", "flatten"):
            pass
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
    return profiles


def assign_layers(profiles, reuse_threshold: float, overrides=None):
    """CIM for reuse >= threshold, digital otherwise; overrides win."""
    if reuse_threshold <= 0:
        raise ValueError("reuse threshold must be positive")
    overrides = overrides or {}
    for p in profiles:
        if p.name in overrides:
            p.assignment = overrides[p.name]
        else:
            p.assignment = "cim" if p.ops_per_weight >= reuse_threshold else "digital"
    return profiles


def partition_layer(profile: LayerProfile, columns_per_half: int = 31) -> Partition:
    """Split a flattened filter across array halves of M columns.

    Channels of the same layer share the input vector slice by slice, so
    each slice index forms one stitch group across the output channels.
    """
    if profile.assignment != "cim":
        raise ValueError(f"{profile.name} is not assigned to cim")
    f = profile.flattened_width
    n = math.ceil(f / columns_per_half)
    widths = [columns_per_half] * (n - 1) + [f - columns_per_half * (n - 1)]
    return Partition(layer=profile.name, per_channel_halves=n,
                     widths=tuple(widths), stitch_groups=n,
                     halves_total=n * profile.out_channels)


def project_system(f_ops_cim: float, cim_eff: float = CIM_EFF_TOPS_W,
                   digital_eff: float = DIGITAL_EFF_TOPS_W) -> float:
    """Blended TOPS/W when a fraction of ops runs in-memory.

    Energy per op adds, so the blend is the harmonic combination
    1 / (f/cim_eff + (1-f)/digital_eff).
    """
    if not 0.0 <= f_ops_cim <= 1.0:
        raise ValueError("op fraction outside [0, 1]")
    return 1.0 / (f_ops_cim / cim_eff + (1.0 - f_ops_cim) / digital_eff)


def build_mapping_plan(profiles, columns_per_half: int = 31,
                       cim_eff: float = CIM_EFF_TOPS_W,
                       digital_eff: float = DIGITAL_EFF_TOPS_W) -> MappingPlan:
    if any(p.assignment is None for p in profiles):
        raise ValueError("assign layers before building a plan")
    total_ops = sum(p.op_count for p in profiles)
    total_w = sum(p.weight_count for p in profiles)
    cim_ops = sum(p.op_count for p in profiles if p.assignment == "cim")
    cim_w = sum(p.weight_count for p in profiles if p.assignment == "cim")
    f_ops = cim_ops / total_ops if total_ops else 0.0
    f_w = cim_w / total_w if total_w else 0.0
    partitions = [partition_layer(p, columns_per_half)
                  for p in profiles if p.assignment == "cim"]
    return MappingPlan(
        profiles=profiles, partitions=partitions,
        columns_per_half=columns_per_half,
        f_ops_cim=f_ops, f_weights_cim=f_w,
        blended_tops_w=project_system(f_ops, cim_eff, digital_eff),
        cim_eff=cim_eff, digital_eff=digital_eff)


# ---------------------------------------------------------------------------
# reference network shapes
# ---------------------------------------------------------------------------

def _mobilenet_v2_layers(num_classes=100):
    """MobileNetV2 shape table at 32x32 input; bottleneck stages carry the
    mf-friendly high-reuse work, stem/head/classifier stay typical."""
    layers = [{"kind": "conv", "name": "stem", "in_ch": 3, "out_ch": 32,
               "kernel": 3, "pad": 1}]
    settings = [  # expansion t, out channels c, repeats n, stride s
        (1, 16, 1, 1), (6, 24, 2, 1), (6, 32, 3, 2), (6, 64, 4, 2),
        (6, 96, 3, 1), (6, 160, 3, 2), (6, 320, 1, 1)]
    c_in = 32
    for stage, (t, c, n, s) in enumerate(settings):
        for rep in range(n):
            stride = s if rep == 0 else 1
            hidden = c_in * t
            tag = f"bn{stage}_{rep}"
            if t != 1:
                layers.append({"kind": "conv", "name": f"{tag}_expand",
                               "in_ch": c_in, "out_ch": hidden, "kernel": 1})
            layers.append({"kind": "conv", "name": f"{tag}_dw", "in_ch": hidden,
                           "out_ch": hidden, "kernel": 3, "stride": stride,
                           "pad": 1, "groups": hidden})
            layers.append({"kind": "conv", "name": f"{tag}_project",
                           "in_ch": hidden, "out_ch": c, "kernel": 1})
            c_in = c
    layers.append({"kind": "conv", "name": "head", "in_ch": c_in,
                   "out_ch": 1280, "kernel": 1})
    layers.append({"kind": "maxpool", "size": 4})   # stand-in for global pool
    layers.append({"kind": "dense", "name": "classifier", "in_dim": 1280,
                   "out_dim": num_classes})
    return layers, (3, 32, 32)


_REFERENCE_NETWORKS = {
    # one hidden mf layer, typical output layer
    "mnist_mlp": (
        [{"kind": "mf_dense", "name": "hidden", "in_dim": 784, "out_dim": 256},
         {"kind": "dense", "name": "logits", "in_dim": 256, "out_dim": 10,
          "relu": False}],
        784,
        {},  # threshold-based assignment
    ),
    # two conv + two dense, 28x28 input; convs in memory, dense digital
    "mnist_lenet": (
        [{"kind": "conv_mf", "name": "conv1", "in_ch": 1, "out_ch": 6, "kernel": 5},
         {"kind": "maxpool", "size": 2},
         {"kind": "conv_mf", "name": "conv2", "in_ch": 6, "out_ch": 16, "kernel": 5},
         {"kind": "maxpool", "size": 2},
         {"kind": "mf_dense", "name": "fc1", "in_dim": 256, "out_dim": 84},
         {"kind": "dense", "name": "logits", "in_dim": 84, "out_dim": 10,
          "relu": False}],
        (1, 28, 28),
        {"conv1": "cim", "conv2": "cim", "fc1": "digital", "logits": "digital"},
    ),
    # five conv + two dense VGG-style stack, 32x32 input
    "cifar10_cnn": (
        [{"kind": "conv_mf", "name": "conv1", "in_ch": 3, "out_ch": 64,
          "kernel": 3, "pad": 1},
         {"kind": "conv_mf", "name": "conv2", "in_ch": 64, "out_ch": 64,
          "kernel": 3, "pad": 1},
         {"kind": "maxpool", "size": 2},
         {"kind": "conv_mf", "name": "conv3", "in_ch": 64, "out_ch": 128,
          "kernel": 3, "pad": 1},
         {"kind": "conv_mf", "name": "conv4", "in_ch": 128, "out_ch": 128,
          "kernel": 3, "pad": 1},
         {"kind": "maxpool", "size": 2},
         {"kind": "conv_mf", "name": "conv5", "in_ch": 128, "out_ch": 256,
          "kernel": 3, "pad": 1},
         {"kind": "maxpool", "size": 2},
         {"kind": "dense", "name": "fc1", "in_dim": 4096, "out_dim": 256},
         {"kind": "dense", "name": "logits", "in_dim": 256, "out_dim": 10,
          "relu": False}],
        (3, 32, 32),
        {"conv1": "cim", "conv2": "cim", "conv3": "cim", "conv4": "cim",
         "conv5": "cim", "fc1": "digital", "logits": "digital"},
    ),
}


def reference_network(name: str):
    """Returns (layer dicts, input shape, assignment overrides)."""
    if name == "mobilenet_v2_cifar100":
        layers, shape = _mobilenet_v2_layers()
        overrides = {}
        for layer in layers:
            lname = layer.get("name")
            if lname is None or layer["kind"] == "maxpool":
                continue
            overrides[lname] = "cim" if lname.startswith("bn") else "digital"
        return layers, shape, overrides
    if name not in _REFERENCE_NETWORKS:
        raise ValueError(f"unknown reference network {name!r}; choose from "
                         f"{sorted(_REFERENCE_NETWORKS) + ['mobilenet_v2_cifar100']}")
    return _REFERENCE_NETWORKS[name]
