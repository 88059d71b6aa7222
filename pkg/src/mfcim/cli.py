"""Command-line front end.

Subcommands: train, eval, sim, sweep, montecarlo, calibrate, map.  A
JSON config file can hold defaults for any flag (per-subcommand section
or top-level); explicit flags override it.  Every run writes its
artifacts plus a manifest.json recording inputs, seed and versions, so
two runs with the same config and seed produce byte-identical artifacts
(wall-clock time lives only in the manifest).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_model, save_model
from .costs import (calibrate_energy_params, dse_sweep, sweep_rows_to_csv,
                    tops_per_watt)
from .macro import MuArrayConfig, MuArrayInstance, trace_to_csv
from .mapper import (analyze_network, assign_layers, build_mapping_plan,
                     reference_network)
from .network import (TrainConfig, accuracy, build_model, evaluate, mlp_config,
                      quantized_forward, train)
from .operator import mf_correlate
from .refdata import (DESK_BETA, DESK_NOISE, DESK_SCHEDULE,
                      DESK_SIGMA, load_reference_data,
                      prepare_training_arrays)
from .variability import (VariabilityParams, audit_columns,
                          calibrate_offsets_batch, crossover_probability,
                          mismatch_sigma_rel, sample_instance)

MC_CSV_HEADER = "sigma_rel,M,discard_fraction,trials,P_F,CI_low,CI_high,seed"


def _parse_range(text):
    """'1..8' -> [1..8]; '2,4,8' -> [2,4,8]; '5' -> [5]."""
    text = str(text)
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(t) if t.strip().lstrip("-").isdigit() else float(t)
            for t in text.split(",")]


def _parse_floats(text):
    return [float(t) for t in str(text).split(",")]


def _point_seed(base, index):
    return int(np.random.SeedSequence((int(base), int(index))).generate_state(1)[0])


def _write(out_dir: Path, name: str, text: str):
    path = out_dir / name
    path.write_text(text)
    return name


def _manifest(out_dir: Path, command: str, args: dict, outputs, seed):
    manifest = {
        "command": command,
        "arguments": {k: v for k, v in sorted(args.items())
                      if not k.startswith("_")},
        "seed": seed,
        "outputs": sorted(outputs),
        "versions": {
            "mfcim": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "wall_time": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_train(args, out_dir):
    data = load_reference_data(args.get("data"))
    x_tr, y_tr, x_te, y_te, center = prepare_training_arrays(
        data, augment=not args["no_augment"],
        noise_sigma=0.0 if args["no_augment"] else DESK_NOISE)
    arch = mlp_config(in_dim=x_tr.shape[1], hidden=args["hidden"],
                      classes=int(y_tr.max()) + 1,
                      mf=not args["conventional"], beta=DESK_BETA,
                      sigma=DESK_SIGMA)
    model = build_model(arch, seed=args["seed"])
    schedule = DESK_SCHEDULE if args["lr"] is None else None
    cfg = TrainConfig(epochs=args["epochs"], batch_size=args["batch_size"],
                      lr=args["lr"] or DESK_SCHEDULE[0], lr_schedule=schedule,
                      momentum=args["momentum"], seed=args["seed"],
                      verbose=args["verbose"])
    history = train(model, x_tr, y_tr, cfg, x_te, y_te)
    outputs = []
    save_model(model, out_dir / "model.ckpt",
               metadata={"dataset": data["name"], "epochs": cfg.epochs,
                         "seed": cfg.seed, "mf": not args["conventional"],
                         "center": center.tolist()})
    outputs.append("model.ckpt")
    lines = ["epoch,loss,train_acc,test_acc"]
    for h in history:
        lines.append(f"{h['epoch']},{h['loss']:.6f},{h['train_acc']:.6f},"
                     f"{h.get('test_acc', float('nan')):.6f}")
    outputs.append(_write(out_dir, "curve.csv", "\n".join(lines) + "\n"))
    print(f"dataset={data['name']} final test acc="
          f"{history[-1].get('test_acc', float('nan')):.4f}")
    return outputs


def _load_test_split(args, meta):
    data = load_reference_data(args.get("data"))
    center = np.asarray(meta["center"]) if "center" in meta else 0.5
    return data["name"], data["x_test"] - center, data["y_test"]


def cmd_eval(args, out_dir):
    model, meta = load_model(args["model"])
    name, x_te, y_te = _load_test_split(args, meta)
    adc = None
    if args["lossless"]:
        adc = (args["columns"], int(np.ceil(np.log2(args["columns"] + 1))))
    elif args["ap"] is not None:
        adc = (args["columns"], int(args["ap"]))
    acc = evaluate(model, (x_te, y_te), quantization=args["bits"], adc=adc,
                   center=False)
    report = {"dataset": name, "accuracy": acc, "quantization_bits": args["bits"],
              "adc": adc,
              "checkpoint_metadata": {k: v for k, v in meta.items()
                                      if k != "center"}}
    outputs = [_write(out_dir, "eval.json",
                      json.dumps(report, indent=2, sort_keys=True) + "\n")]
    print(f"accuracy={acc:.4f}")
    return outputs


def cmd_sim(args, out_dir):
    model, meta = load_model(args["model"])
    name, x_te, y_te = _load_test_split(args, meta)
    n = min(args["images"], x_te.shape[0])
    xb = x_te[:n]
    m = args["columns"]
    a_p = int(np.ceil(np.log2(m + 1))) if args["lossless"] else int(args["ap"])
    exact = quantized_forward(model, xb, m_bits=args["bits"], adc=None)
    macro = quantized_forward(model, xb, m_bits=args["bits"], adc=(m, a_p))
    bit_exact = bool(np.array_equal(exact, macro))
    agree = float(np.mean(np.argmax(exact, 1) == np.argmax(macro, 1)))

    # trace-level sample: one correlation through the behavioral array
    rng = np.random.default_rng(args["seed"])
    w = rng.integers(-127, 128, min(m, 16))
    x = rng.integers(-127, 128, w.size)
    inst = MuArrayInstance.nominal(MuArrayConfig(columns_per_half=m, adc_bits=a_p))
    value, trace = inst.macro_correlate(w, x)
    report = {
        "dataset": name, "images": n, "adc": [m, a_p],
        "bit_exact": bit_exact, "argmax_agreement": agree,
        "max_abs_logit_diff": float(np.max(np.abs(exact - macro))),
        "trace_sample": {"value": int(value),
                         "functional": int(mf_correlate(w, x)),
                         "compute_cycles": trace.ledger.compute_cycles,
                         "io_cycles": trace.ledger.io_cycles},
    }
    outputs = [
        _write(out_dir, "sim_report.json",
               json.dumps(report, indent=2, sort_keys=True) + "\n"),
        _write(out_dir, "trace.csv", trace_to_csv(trace)),
    ]
    print(f"bit-exact: {str(bit_exact).lower()}")
    return outputs


def _sweep_point(payload):
    (w_p, a_p), params_kw = payload
    from .costs import CostParams, energy_breakdown
    bd = energy_breakdown(w_p, a_p, CostParams(**params_kw))
    return {"W_P": w_p, "A_P": a_p, "cycles": bd.cycles, "E_total": bd.total,
            "frac_mav": bd.frac_mav, "frac_digitize": bd.frac_digitize,
            "frac_leak": bd.frac_leak, "accuracy": float("nan")}


def cmd_sweep(args, out_dir):
    wp = _parse_range(args["wp"])
    ap = _parse_range(args["ap"])
    params = calibrate_energy_params(columns_per_half=args["columns"])
    model = None
    data = None
    if args["model"]:
        model, meta = load_model(args["model"])
        _, x_te, y_te = _load_test_split(args, meta)
        n = min(args["images"], x_te.shape[0])
        data = (x_te[:n], y_te[:n])
    if model is not None or args["workers"] == 1:
        rows = dse_sweep(wp, ap, params, model=model, data=data,
                         adc_columns=args["columns"])
    else:
        params_kw = {"c_pl": params.c_pl, "v_pch": params.v_pch,
                     "e_comparator": params.e_comparator, "e_sar": params.e_sar,
                     "columns_per_half": params.columns_per_half,
                     "leak_per_cycle": params.leak_per_cycle}
        points = [((w, a), params_kw) for w in wp for a in ap]
        with ProcessPoolExecutor(max_workers=args["workers"]) as pool:
            rows = list(pool.map(_sweep_point, points))
        rows.sort(key=lambda r: (r["W_P"], r["A_P"]))
    outputs = [_write(out_dir, "sweep.csv", sweep_rows_to_csv(rows))]
    print(f"{len(rows)} sweep points")
    return outputs


def _mc_point(payload):
    (sigma_rel, m, discard, trials, seed), noise = payload
    cfg = MuArrayConfig(columns_per_half=m,
                        adc_bits=max(1, min(8, int(np.ceil(np.log2(m + 1))))))
    params = VariabilityParams(cap_mismatch_rel=sigma_rel,
                               comparator_noise_sigma=noise)
    r = crossover_probability(cfg, params, trials, seed, discard_fraction=discard)
    return (sigma_rel, m, discard, trials, r.p_f, r.ci_low, r.ci_high, seed)


def cmd_montecarlo(args, out_dir):
    sigmas = _parse_floats(args["sigma"])
    if args["sigma_is_percent"]:
        sigmas = [mismatch_sigma_rel(s, args["convention"]) for s in sigmas]
    ms = _parse_range(args["m"])
    discards = _parse_floats(args["discard"])
    points = []
    for i, (s, m, d) in enumerate(
            (s, m, d) for s in sigmas for m in ms for d in discards):
        points.append(((s, m, d, args["trials"], _point_seed(args["seed"], i)),
                       args["noise"]))
    if args["workers"] > 1:
        with ProcessPoolExecutor(max_workers=args["workers"]) as pool:
            results = list(pool.map(_mc_point, points))
    else:
        results = [_mc_point(p) for p in points]
    lines = [MC_CSV_HEADER]
    for s, m, d, t, pf, lo, hi, seed in results:
        lines.append(f"{s:.9g},{m},{d:.9g},{t},{pf:.9g},{lo:.9g},{hi:.9g},{seed}")
    outputs = [_write(out_dir, "montecarlo.csv", "\n".join(lines) + "\n")]
    print(f"{len(results)} monte carlo points")
    return outputs


def cmd_calibrate(args, out_dir):
    cfg = MuArrayConfig()
    params = VariabilityParams(cap_mismatch_rel=args["cap_sigma"],
                               comparator_noise_sigma=args["noise"])
    inst = sample_instance(cfg, params, seed=args["seed"])
    audit = audit_columns(inst, v_th=args["vth"] * cfg.v_pch,
                          c_sl=args["csl"] * cfg.c_pl)
    rng = np.random.default_rng(_point_seed(args["seed"], 1))
    offsets = rng.uniform(-0.045, 0.045, args["instances"])
    residuals = calibrate_offsets_batch(
        offsets, args["noise"], args["trials"], args["bits"], 0.045,
        seed=_point_seed(args["seed"], 2))
    report = {
        "column_audit": {
            "cycles_min": int(audit.cycles.min()),
            "cycles_median": float(np.median(audit.cycles)),
            "cycles_max": int(audit.cycles.max()),
            "most_extreme_columns": audit.extremity_order[:3].tolist(),
        },
        "comparator_calibration": {
            "instances": args["instances"],
            "calibration_bits": args["bits"],
            "trials_per_setting": args["trials"],
            "noise_sigma_v": args["noise"],
            "fraction_within_12mV": float(np.mean(residuals <= 0.012)),
            "max_residual_mV": float(residuals.max() * 1e3),
            "mean_residual_mV": float(residuals.mean() * 1e3),
        },
    }
    outputs = [_write(out_dir, "calibrate.json",
                      json.dumps(report, indent=2, sort_keys=True) + "\n")]
    print(f"within 12 mV: {report['comparator_calibration']['fraction_within_12mV']:.4f}")
    return outputs


def cmd_map(args, out_dir):
    if args["config"] and args["network"] is None:
        spec = json.loads(Path(args["config"]).read_text())
        layers = spec["layers"]
        input_shape = spec["input_shape"]
        input_shape = tuple(input_shape) if isinstance(input_shape, list) else input_shape
        overrides = spec.get("overrides", {})
        threshold = spec.get("reuse_threshold", args["reuse_threshold"])
    else:
        layers, input_shape, overrides = reference_network(args["network"])
        threshold = args["reuse_threshold"]
    profiles = analyze_network(layers, input_shape)
    assign_layers(profiles, threshold, overrides)
    plan = build_mapping_plan(profiles, columns_per_half=args["columns"])
    outputs = [_write(out_dir, "mapping.json",
                      json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n")]
    print(f"f_ops_cim={plan.f_ops_cim:.3f} f_weights_cim={plan.f_weights_cim:.3f} "
          f"blended={plan.blended_tops_w:.1f} TOPS/W")
    return outputs


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _build_parser():
    p = argparse.ArgumentParser(
        prog="mfcim",
        description="Multiplication-free compute-in-SRAM toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config with flag defaults")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--workers", type=int, default=None)
        sp.add_argument("--verbose", action="store_true")

    sp = sub.add_parser("train", help="train the reference MLP")
    common(sp)
    sp.add_argument("--data", help="directory with MNIST IDX files")
    sp.add_argument("--hidden", type=int, default=None)
    sp.add_argument("--epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--momentum", type=float, default=None)
    sp.add_argument("--conventional", action="store_true",
                    help="ordinary dense+ReLU instead of the mf operator")
    sp.add_argument("--no-augment", action="store_true",
                    help="train on the raw split without shifts/jitter")

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data")
    sp.add_argument("--bits", type=int, default=None,
                    help="magnitude bits for fixed-point inference")
    sp.add_argument("--ap", type=int, default=None, help="ADC bits")
    sp.add_argument("--columns", type=int, default=None)
    sp.add_argument("--lossless", action="store_true")

    sp = sub.add_parser("sim", help="macro-vs-functional equivalence report")
    common(sp)
    sp.add_argument("--model", required=True)
    sp.add_argument("--data")
    sp.add_argument("--images", type=int, default=None)
    sp.add_argument("--bits", type=int, default=None)
    sp.add_argument("--ap", type=int, default=None)
    sp.add_argument("--columns", type=int, default=None)
    sp.add_argument("--lossless", action="store_true")

    sp = sub.add_parser("sweep", help="precision design-space sweep")
    common(sp)
    sp.add_argument("--wp", default=None, help="weight precisions, e.g. 1..8")
    sp.add_argument("--ap", default=None, help="ADC precisions, e.g. 1..5")
    sp.add_argument("--columns", type=int, default=None)
    sp.add_argument("--model", help="checkpoint for the accuracy column")
    sp.add_argument("--data")
    sp.add_argument("--images", type=int, default=None)

    sp = sub.add_parser("montecarlo", help="crossover probability grids")
    common(sp)
    sp.add_argument("--sigma", default=None,
                    help="mismatch values, comma separated")
    sp.add_argument("--sigma-is-percent", action="store_true",
                    help="read --sigma as quoted +/-%% figures")
    sp.add_argument("--convention", default=None, choices=("3sigma", "sigma"))
    sp.add_argument("--m", default=None, help="columns per half, e.g. 15,31,63")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--discard", default=None,
                    help="discard fractions, comma separated")
    sp.add_argument("--noise", type=float, default=None,
                    help="comparator noise sigma, volts")

    sp = sub.add_parser("calibrate", help="column audit + comparator trim")
    common(sp)
    sp.add_argument("--instances", type=int, default=None)
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--bits", type=int, default=None)
    sp.add_argument("--noise", type=float, default=None)
    sp.add_argument("--cap-sigma", type=float, default=None)
    sp.add_argument("--vth", type=float, default=None,
                    help="audit threshold as a fraction of V_PCH")
    sp.add_argument("--csl", type=float, default=None,
                    help="audit sum-line capacitance in units of C_PL")

    sp = sub.add_parser("map", help="network-to-array mapping report")
    common(sp)
    sp.add_argument("--network", default=None,
                    help="mnist_mlp | mnist_lenet | cifar10_cnn | "
                         "mobilenet_v2_cifar100")
    sp.add_argument("--columns", type=int, default=None)
    sp.add_argument("--reuse-threshold", type=float, default=None)
    return p


_DEFAULTS = {
    "seed": 0, "workers": os.cpu_count() or 1,
    "hidden": 256, "epochs": 5, "batch_size": 4, "momentum": 0.9,
    "bits": None, "ap": None, "columns": 31, "images": 100,
    "wp": "1..8", "sigma": "0.02,0.04", "m": "31", "trials": 10000,
    "discard": "0", "noise": 0.001, "instances": 1000, "cap_sigma": 0.04,
    "vth": 0.5, "csl": 10.0, "network": None, "reuse_threshold": 10.0,
    "out": "out",
}
_COMMAND_DEFAULTS = {
    "sweep": {"ap": "1..5"},
    "calibrate": {"bits": 2, "trials": 1000, "noise": 0.009},
    "montecarlo": {"convention": "3sigma", "noise": 0.0},
    "eval": {"columns": 31},
    "sim": {"bits": 7, "images": 100},
}


def _effective_args(ns) -> dict:
    """Flag value, else config-file value, else built-in default."""
    config = {}
    if getattr(ns, "config", None):
        config = json.loads(Path(ns.config).read_text())
    section = config.get(ns.command, {})
    merged = {}
    for key, value in vars(ns).items():
        if key == "command":
            continue
        if value in (None, False):
            for source in (section, config, _COMMAND_DEFAULTS.get(ns.command, {}),
                           _DEFAULTS):
                if key in source and source[key] is not None:
                    value = source[key] if value is None else value or source[key]
                    break
        merged[key] = value
    return merged


_COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "sim": cmd_sim, "sweep": cmd_sweep,
    "montecarlo": cmd_montecarlo, "calibrate": cmd_calibrate, "map": cmd_map,
}


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    args = _effective_args(ns)
    out_dir = Path(args.get("out") or "out")
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        outputs = _COMMANDS[ns.command](args, out_dir)
    except (ValueError, OSError, NotImplementedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _manifest(out_dir, ns.command, args, outputs, args.get("seed"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
