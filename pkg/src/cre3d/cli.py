"""Command-line surface for the 3D cloud-effect emulation pipeline.

Subcommands: synth, augment, train, grid-search, predict, correct, eval,
bench. Heavy imports are deferred so `bench` can pin BLAS thread counts
before numpy is loaded.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import sys

INPUT_VARIANTS = {6: (False, False), 7: (True, False), 8: (True, True)}
THREADS_ENV = "CRE3D_NUM_THREADS"
_BLAS_ENV = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS")


def _split_indices(n: int, seed: int):
    """Seeded, disjoint 60/20/20 split by profile index."""
    import numpy as np

    order = np.random.default_rng(seed).permutation(n)
    n_train = int(round(0.6 * n))
    n_val = int(round(0.2 * n))
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def _load_matched(profiles_path: str, truth_path: str):
    """Profiles plus id-matched truth flux effects, on one shared grid."""
    from . import io

    profiles = io.read_profiles(profiles_path)
    if not profiles:
        raise io.DatasetError(profiles_path, None, "no profiles")
    grid = profiles[0].grid
    for i, p in enumerate(profiles[1:], start=2):
        if not grid.same_as(p.grid):
            raise io.DatasetError(profiles_path, i, "profiles must share one grid")
    truth = dict(io.read_fluxes(truth_path))
    fluxes = []
    for i, p in enumerate(profiles, start=1):
        if p.pid not in truth:
            raise io.DatasetError(truth_path, None, f"no truth record for profile id {p.pid!r}")
        fluxes.append(truth[p.pid])
    return profiles, fluxes, grid


def _build_xy(profiles, fluxes, grid, component, consts,
              include_humidity=False, include_thickness=False):
    import numpy as np

    from . import features

    schema = features.schema_for_grid(component, grid, consts.p_trunc,
                                      include_humidity, include_thickness)
    x = features.build_input_matrix(profiles, schema, consts)
    rows = []
    for p, f in zip(profiles, fluxes):
        targets = features.targets_from_flux_effects(
            component, f.up, f.down, grid, consts,
            alpha=p.alpha, direct_down=f.direct_down, p_trunc=consts.p_trunc)
        rows.append(features.build_target_vector(targets, schema))
    return schema, x, np.asarray(rows)


def cmd_synth(args) -> int:
    from . import augment, column, io

    grid = augment.make_reference_grid() if args.levels is None else None
    if grid is None:
        import numpy as np

        grid = column.VerticalGrid(np.geomspace(1.0, 101325.0, args.levels + 1))
    consts = column.PhysConsts()
    params = augment.ToyTruthParams(amp_lw=args.amp_lw, amp_sw=args.amp_sw, decay=args.decay)
    profiles = augment.generate_profiles(args.profiles, grid, args.seed)
    lw_records, sw_records = [], []
    for p in profiles:
        truth = augment.toy_truth(p, consts, params)
        lw_full = column.extend_to_full(truth.up_lw, truth.down_lw, None,
                                        truth.lw.heat, grid, consts.p_trunc)
        sw_full = column.extend_to_full(truth.up_sw, truth.down_sw, truth.direct_sw,
                                        truth.sw.heat, grid, consts.p_trunc)
        lw_records.append((p.pid, lw_full))
        sw_records.append((p.pid, sw_full))
    io.write_profiles(args.out_profiles, profiles)
    io.write_fluxes(args.out_truth_lw, lw_records)
    io.write_fluxes(args.out_truth_sw, sw_records)
    print(f"wrote {len(profiles)} profiles to {args.out_profiles}")
    return 0


def cmd_augment(args) -> int:
    from . import augment, io

    profiles = io.read_profiles(args.input)
    enlarged = augment.augment_scalars(profiles, args.copies, args.seed)
    io.write_profiles(args.out, enlarged)
    print(f"wrote {len(enlarged)} profiles ({len(profiles)} originals x {args.copies + 1}) to {args.out}")
    return 0


def _train_config(args, seed: int):
    from .net import TrainConfig

    return TrainConfig(max_epochs=args.max_epochs, patience=args.patience,
                       l1=args.l1, l2=args.l2, learning_rate=args.learning_rate,
                       batch_size=args.batch_size, seed=seed)


def cmd_train(args) -> int:
    from . import column, features, io, net

    consts = column.PhysConsts()
    profiles, fluxes, grid = _load_matched(args.profiles, args.truth)
    schema, x, y = _build_xy(profiles, fluxes, grid, args.component, consts)
    idx_train, idx_val, idx_test = _split_indices(len(profiles), args.seed)
    norm_in = features.fit_normalization(x[idx_train])
    norm_out = features.fit_normalization(y[idx_train])
    xn, yn = norm_in.apply(x), norm_out.apply(y)

    if args.hidden_width is None:
        model0 = net.reference_model(schema, args.seed)
    else:
        sizes = [schema.input_len] + [args.hidden_width] * args.hidden_layers + [schema.output_len]
        model0 = net.init_model(sizes, args.seed, schema=schema)
    model0.norm_in, model0.norm_out = norm_in, norm_out

    cfg = _train_config(args, args.seed)
    model, history = net.train(model0, xn[idx_train], yn[idx_train],
                               xn[idx_val], yn[idx_val], cfg)
    model.meta.update({
        "config": {"max_epochs": cfg.max_epochs, "patience": cfg.patience,
                   "l1": cfg.l1, "l2": cfg.l2, "learning_rate": cfg.learning_rate,
                   "batch_size": cfg.batch_size, "beta1": cfg.beta1,
                   "beta2": cfg.beta2, "eps": cfg.eps},
        "split": {"seed": args.seed, "fractions": [0.6, 0.2, 0.2],
                  "train_ids": [profiles[i].pid for i in idx_train],
                  "val_ids": [profiles[i].pid for i in idx_val],
                  "test_ids": [profiles[i].pid for i in idx_test]},
    })
    io.save_model(args.out, model, consts)
    print(f"trained {args.component} model: epochs={model.meta['epochs_run']}, "
          f"val_loss={model.meta['val_loss']:.6g}; wrote {args.out}")
    return 0


def cmd_grid_search(args) -> int:
    from . import column, features, io, net

    consts = column.PhysConsts()
    profiles, fluxes, grid = _load_matched(args.profiles, args.truth)
    idx_train, idx_val, _ = _split_indices(len(profiles), args.seed)
    datasets = {}
    for variant in args.variants:
        if variant not in INPUT_VARIANTS:
            raise ValueError(f"unknown input variant {variant}; choose from 6, 7, 8")
        with_q, with_dz = INPUT_VARIANTS[variant]
        _, x, y = _build_xy(profiles, fluxes, grid, args.component, consts,
                            include_humidity=with_q, include_thickness=with_dz)
        norm_in = features.fit_normalization(x[idx_train])
        norm_out = features.fit_normalization(y[idx_train])
        xn, yn = norm_in.apply(x), norm_out.apply(y)
        datasets[variant] = net.GridDataset(
            x_train=xn[idx_train], y_train=yn[idx_train],
            x_val=xn[idx_val], y_val=yn[idx_val], norm_out=norm_out)

    spec = net.GridSearchSpec(
        input_variants=tuple(args.variants),
        hidden_layer_counts=tuple(args.layers),
        width_multipliers=tuple(args.multipliers),
        reg_factors=tuple(args.regs),
        repeats=args.repeats)
    report = net.grid_search(spec, datasets, _train_config(args, args.seed),
                             simplicity_tolerance=args.simplicity_tolerance)
    payload = {
        "selected": report.selected,
        "rows": [{"input_variant": r.input_variant, "n_inputs": r.n_inputs,
                  "n_layers": r.n_layers, "multiplier": r.multiplier, "width": r.width,
                  "reg": r.reg, "val_maes": r.val_maes, "mean_mae": r.mean_mae,
                  "errors": r.errors}
                 for r in report.rows],
    }
    from .io import atomic_write_text

    atomic_write_text(args.out, json.dumps(payload, indent=2))
    best = report.rows[report.selected]
    print(f"selected config: variant={best.input_variant} layers={best.n_layers} "
          f"width={best.width} reg={best.reg:g} mean_mae={best.mean_mae:.6g}; wrote {args.out}")
    return 0


def _read_profiles_one_grid(path):
    from . import io

    profiles = io.read_profiles(path)
    if not profiles:
        raise io.DatasetError(path, None, "no profiles")
    grid = profiles[0].grid
    for i, p in enumerate(profiles[1:], start=2):
        if not grid.same_as(p.grid):
            raise io.DatasetError(path, i, "profiles must share one grid")
    return profiles, grid


def cmd_predict(args) -> int:
    from . import column, io, net

    model_lw, consts = io.load_model(args.model_lw)
    model_sw, consts_sw = io.load_model(args.model_sw)
    if consts_sw != consts:
        raise ValueError("LW and SW model files disagree on physical constants")
    profiles, grid = _read_profiles_one_grid(args.profiles)
    effects = net.predict_flux_effects(model_lw, model_sw, profiles, consts)

    def records(component):
        e = effects[component]
        for i, p in enumerate(profiles):
            direct = e["direct_down"][i] if "direct_down" in e else None
            yield p.pid, column.FluxSet(up=e["up"][i], down=e["down"][i],
                                        heat=e["heat"][i], direct_down=direct)

    io.write_fluxes(args.out_lw, records("lw"))
    io.write_fluxes(args.out_sw, records("sw"))
    print(f"wrote {len(profiles)} effect records to {args.out_lw} and {args.out_sw}")
    return 0


def cmd_correct(args) -> int:
    from . import column, io

    profiles, grid = _read_profiles_one_grid(args.profiles)
    consts = column.PhysConsts()
    baseline = dict(io.read_fluxes(args.baseline))
    effects = dict(io.read_fluxes(args.effects))
    out = []
    for p in profiles:
        if p.pid not in baseline:
            raise io.DatasetError(args.baseline, None, f"no record for profile id {p.pid!r}")
        if p.pid not in effects:
            raise io.DatasetError(args.effects, None, f"no record for profile id {p.pid!r}")
        out.append((p.pid, column.apply_correction(baseline[p.pid], effects[p.pid], grid, consts)))
    io.write_fluxes(args.out, out)
    print(f"wrote {len(out)} corrected records to {args.out}")
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from . import evalbench, io
    from .column import SECONDS_PER_DAY

    truth = io.read_fluxes(args.truth)
    pred = dict(io.read_fluxes(args.pred))
    pairs = []
    for pid, f in truth:
        if pid not in pred:
            raise io.DatasetError(args.pred, None, f"no prediction for id {pid!r}")
        pairs.append((f, pred[pid]))
    if not pairs:
        raise io.DatasetError(args.truth, None, "no records")

    def stack(attr):
        t = np.array([getattr(f, attr) for f, _ in pairs])
        p = np.array([getattr(g, attr) for _, g in pairs])
        return t, p

    report = {"note": "bulk statistics pool all levels of the full extended profiles",
              "n_profiles": len(pairs), "fluxes": {}, "heating": {}}
    for name in ("up", "down"):
        t, p = stack(name)
        report["fluxes"][name] = evalbench.bulk_stats(t, p)
    if all(f.direct_down is not None and g.direct_down is not None for f, g in pairs):
        t, p = stack("direct_down")
        report["fluxes"]["direct_down"] = evalbench.bulk_stats(t, p)
    t, p = stack("up")
    report["fluxes"]["up_toa"] = evalbench.bulk_stats(t[:, 0], p[:, 0])
    t, p = stack("down")
    report["fluxes"]["down_boa"] = evalbench.bulk_stats(t[:, -1], p[:, -1])
    t, p = stack("heat")
    report["heating"]["heat_K_per_day"] = evalbench.bulk_stats(
        t * SECONDS_PER_DAY, p * SECONDS_PER_DAY)

    io.atomic_write_text(args.out, json.dumps(report, indent=2))
    if args.per_level:
        per_level = {}
        for name in ("up", "down", "heat"):
            t, p = stack(name)
            stats = evalbench.per_level_stats(t, p)
            per_level[name] = {
                series: {key: value.tolist() for key, value in block.items()}
                for series, block in stats.items()}
        io.atomic_write_text(args.per_level, json.dumps(per_level))
    print(f"wrote evaluation report to {args.out}")
    return 0


def cmd_bench(args) -> int:
    from . import evalbench, features, io, net

    model_lw, consts = io.load_model(args.model_lw)
    model_sw, _ = io.load_model(args.model_sw)
    profiles, grid = _read_profiles_one_grid(args.profiles)

    import numpy as np

    x_lw = features.build_input_matrix(profiles, model_lw.schema, consts)
    x_sw = features.build_input_matrix(profiles, model_sw.schema, consts)
    alphas = np.array([p.alpha for p in profiles])
    mu0 = np.array([p.mu0 for p in profiles])
    runner = net.make_staged_runner(model_lw, model_sw, grid, consts)

    def replicate(batch, k):
        xl, xs, a, m = batch
        return ((np.concatenate([xl] * k), np.concatenate([xs] * k),
                 np.concatenate([a] * k), np.concatenate([m] * k)), len(xl) * k)

    result = evalbench.bench(runner, (x_lw, x_sw, alphas, mu0),
                             replication=args.replication, repeats=args.repeats,
                             replicate=replicate)
    report = {
        "normalized_runtime": result.format(),
        "ms_per_profile_mean": result.mean_ms,
        "ms_per_profile_std": result.std_ms,
        "ms_per_profile_repeats": result.ms_per_profile,
        "stage_ms_per_profile": result.stage_ms_per_profile(),
        "n_profiles": result.n_profiles,
        "replication": result.replication,
        "repeats": result.repeats,
        "hardware": {"platform": platform.platform(), "machine": platform.machine(),
                     "cpu_count": os.cpu_count()},
        "threads": {"multi_thread": args.multi_thread,
                    "requested": os.environ.get(THREADS_ENV)},
    }
    io.atomic_write_text(args.out, json.dumps(report, indent=2))
    print(result.format())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cre3d",
                                     description="3D cloud radiative effect emulation pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic profiles and toy-truth effects")
    p.add_argument("--profiles", type=int, required=True, help="number of profiles")
    p.add_argument("--levels", type=int, default=None,
                   help="full levels for a generic geometric grid (default: 137-level reference)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amp-lw", type=float, default=2.0)
    p.add_argument("--amp-sw", type=float, default=3.0)
    p.add_argument("--decay", type=float, default=5.0)
    p.add_argument("--out-profiles", required=True)
    p.add_argument("--out-truth-lw", required=True)
    p.add_argument("--out-truth-sw", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="enlarge a profile set by scalar re-assignment")
    p.add_argument("--input", required=True)
    p.add_argument("--copies", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_augment)

    def add_train_flags(q):
        q.add_argument("--seed", type=int, default=0)
        q.add_argument("--max-epochs", type=int, default=1000)
        q.add_argument("--patience", type=int, default=50)
        q.add_argument("--l1", type=float, default=1e-5)
        q.add_argument("--l2", type=float, default=1e-5)
        q.add_argument("--learning-rate", type=float, default=1e-3)
        q.add_argument("--batch-size", type=int, default=256)

    p = sub.add_parser("train", help="train one emulator component")
    p.add_argument("--profiles", required=True)
    p.add_argument("--truth", required=True, help="flux-effect truth records")
    p.add_argument("--component", choices=("lw", "sw"), required=True)
    p.add_argument("--hidden-layers", type=int, default=3)
    p.add_argument("--hidden-width", type=int, default=None,
                   help="override the reference width (217 LW / 182 SW)")
    add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid-search", help="hyperparameter grid search")
    p.add_argument("--profiles", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--component", choices=("lw", "sw"), required=True)
    p.add_argument("--variants", type=int, nargs="+", default=[6], choices=(6, 7, 8))
    p.add_argument("--layers", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--multipliers", type=float, nargs="+", default=[0.5, 1.0, 2.0])
    p.add_argument("--regs", type=float, nargs="+", default=[1e-6, 1e-5, 1e-4])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--simplicity-tolerance", type=float, default=0.0)
    add_train_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_grid_search)

    p = sub.add_parser("predict", help="emulate and postprocess 3D flux effects")
    p.add_argument("--profiles", required=True)
    p.add_argument("--model-lw", required=True)
    p.add_argument("--model-sw", required=True)
    p.add_argument("--out-lw", required=True)
    p.add_argument("--out-sw", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("correct", help="add effect records to baseline fluxes")
    p.add_argument("--profiles", required=True)
    p.add_argument("--baseline", required=True)
    p.add_argument("--effects", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("eval", help="bulk and per-level error statistics")
    p.add_argument("--truth", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-level", default=None, help="optional per-level output file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="normalized-runtime benchmark")
    p.add_argument("--profiles", required=True)
    p.add_argument("--model-lw", required=True)
    p.add_argument("--model-sw", required=True)
    p.add_argument("--replication", type=int, default=10)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--multi-thread", action="store_true",
                   help="allow multi-threaded BLAS (default: single-threaded)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bench)

    return parser


def _pin_threads(argv) -> None:
    # Must happen before numpy is first imported to take effect.
    if "bench" in argv and "--multi-thread" not in argv:
        for var in _BLAS_ENV:
            os.environ.setdefault(var, "1")
    elif "bench" in argv and os.environ.get(THREADS_ENV):
        for var in _BLAS_ENV:
            os.environ.setdefault(var, os.environ[THREADS_ENV])


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _pin_threads(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - single-line machine-parsable errors
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
