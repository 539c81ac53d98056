"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 invalid input data, 3 numerical failure.
Risks are addressed by their 1-based ids on the command line and in files.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .engine import SimConfig, simulate_cascade, simulate_persistence, simulate_target_hit
from .errors import NumericalError, RiskDynError, ValidationError
from .io import (
    dump_json,
    file_digest,
    load_dataset,
    load_params,
    write_table,
)
from .likelihood import (
    VARIANTS,
    SearchConfig,
    compare,
    fit,
    likelihood_surface,
    perturbation_study,
)
from .meanfield import Intensities, integrate_ode, stationary_point
from .model import MONTHS_PER_DECADE, ModelParams, derive_rates
from .netstats import contagion_potential, degree_stats, estimate_block_probabilities
from .sample import RISK_NAMES
from .synth import REFERENCE_PARAMS, SynthConfig, synth_dataset, write_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
INPUT_KEYS = ("risks", "edges", "history", "params")
NOT_HASHED = {"out", "workers", "func"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _pair(text, kind=float):
    try:
        lo, hi = (kind(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    return lo, hi


def _id_list(text):
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ids, got {text!r}") from None


# --------------------------------------------------------------------------
# manifest
# --------------------------------------------------------------------------


def _strip_workers(argv):
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--workers":
            skip = True
            continue
        if a.startswith("--workers="):
            continue
        out.append(a)
    return out


def _manifest(args, argv, outputs, seeds=None):
    config = {k: v for k, v in sorted(vars(args).items()) if k not in NOT_HASHED}
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    inputs = {}
    for key in INPUT_KEYS:
        p = getattr(args, key, None)
        if p:
            inputs[key] = {"path": str(p), "sha256": file_digest(p)}
    return {
        "command": ["riskdyn", *_strip_workers(argv)],
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "seeds": seeds or {},
        "inputs": inputs,
        "outputs": [Path(o).name for o in outputs],
        "tool_version": __version__,
    }


def _write_manifest(args, argv, outputs, seeds=None, path=None):
    out = Path(outputs[0])
    path = path or out.with_name(out.stem + ".manifest.json")
    dump_json(_manifest(args, argv, outputs, seeds), path)


def _prepare_out(path):
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _params(args) -> ModelParams:
    return load_params(args.params)


def _names(catalog):
    return [r.name for r in catalog.entries]


def _risk_index(rid, n, what):
    if not 1 <= rid <= n:
        raise ValidationError(f"{what} id {rid} outside 1..{n}")
    return rid - 1


def _search(args) -> SearchConfig:
    return SearchConfig(coarse_points=args.coarse_points, rtol=args.rtol)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_synth(args, argv):
    p = ModelParams.from_unit(args.alpha, args.beta, args.gamma, args.time_unit)
    cfg = SynthConfig(params=p, months=args.months, burn_in=args.burn_in, seed=args.seed, names=RISK_NAMES,
                      likelihood_range=args.likelihood_range, start_month=args.start_month)
    ds = synth_dataset(cfg)
    paths = write_dataset(ds, args.out)
    outdir = Path(args.out)
    dump_json(cfg.as_dict(), outdir / "synth_config.json")
    _write_manifest(args, argv, [*paths.values(), outdir / "synth_config.json"],
                    {"seed": args.seed}, path=outdir / "manifest.json")
    print(f"wrote {ds.catalog.N} risks, {ds.graph.n_edges} edges, {ds.history.T} months to {outdir}")


def cmd_validate(args, argv):
    catalog, graph, history = load_dataset(args.risks, args.edges, args.history)
    ds = degree_stats(graph)
    print(f"risks: {catalog.N}")
    print(f"edges: {ds.edges} (mean degree {ds.mean_degree:.4g})")
    if history is not None:
        print(f"history: {history.T} months {history.months[0]}..{history.months[-1]}, "
              f"{history.T * history.N} data points, mean activity {history.states.sum(1).mean():.4g}")
    if args.params:
        print(f"params: {_params(args).as_dict()}")
    print("ok")


def cmd_fit(args, argv):
    catalog, graph, history = load_dataset(args.risks, args.edges, args.history)
    res = fit(catalog, graph, history, args.variant, _search(args))
    out = _prepare_out(args.out)
    dump_json(res.as_dict(), out)
    _write_manifest(args, argv, [out])
    d = res.decade_params
    print(f"{args.variant}: alpha={d.alpha:.6g} beta={d.beta:.6g} gamma={d.gamma:.6g} (per decade) "
          f"logL={res.log_likelihood:.6f}")
    for flag in res.boundary_hit:
        print(f"warning: {flag} on search-box boundary", file=sys.stderr)
    if res.degenerate:
        print(f"warning: degenerate fit ({res.degenerate})", file=sys.stderr)


def _default_range(name, unit):
    box = {"alpha": (1e-5, 1.0), "beta": (1e-6, 1.0), "gamma": (1e-3, 100.0)}[name]
    return box[0] * unit, box[1] * unit


def cmd_surface(args, argv):
    catalog, graph, history = load_dataset(args.risks, args.edges, args.history)
    name, _, value = args.fix.partition("=")
    if name not in ("alpha", "beta", "gamma") or not value:
        raise ValidationError("--fix must look like gamma=427")
    unit = MONTHS_PER_DECADE if args.time_unit == "decade" else 1.0
    free = [n for n in ("alpha", "beta", "gamma") if n != name]
    xr = args.x_range or _default_range(free[0], unit)
    yr = args.y_range or _default_range(free[1], unit)
    space = np.linspace if args.linear else np.geomspace
    xs, ys = space(*xr, args.points), space(*yr, args.points)
    xname, yname, rows = likelihood_surface(catalog, graph, history, {name: float(value)}, xs, ys,
                                            args.variant, args.time_unit)
    out = _prepare_out(args.out)
    write_table(out, [xname, yname, "log_likelihood"], rows)
    _write_manifest(args, argv, [out])
    best = max(rows, key=lambda r: r[2])
    print(f"max logL {best[2]:.6f} at {xname}={best[0]:.6g}, {yname}={best[1]:.6g}")


def cmd_compare(args, argv):
    catalog, graph, history = load_dataset(args.risks, args.edges, args.history)
    variants = tuple(args.variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValidationError(f"unknown variant {v!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fits, rows = compare(catalog, graph, history, variants, _search(args))
    for v, f in fits.items():
        d = f.decade_params
        print(f"{v:13s} logL={f.log_likelihood:.4f} alpha={d.alpha:.4g} beta={d.beta:.4g} gamma={d.gamma:.4g}")
    table = []
    for r in rows:
        p = "" if r["p_value"] is None else r["p_value"]
        table.append([r["full"], r["restricted"], int(r["nested"]),
                      float(fits[r["full"]].log_likelihood), float(fits[r["restricted"]].log_likelihood),
                      float(r["D"]), r["df"], p])
        note = "" if r["nested"] else "  (not nested: descriptive only)"
        ptxt = "-" if r["p_value"] is None else f"{r['p_value']:.3g}"
        print(f"{r['full']} vs {r['restricted']}: D={r['D']:.4f} df={r['df']} p={ptxt}{note}")
    out = _prepare_out(args.out)
    write_table(out, ["full", "restricted", "nested", "ll_full", "ll_restricted", "D", "df", "p_value"],
                table)
    _write_manifest(args, argv, [out])


def cmd_perturb(args, argv):
    catalog, graph, history = load_dataset(args.risks, args.edges, args.history)
    rep = perturbation_study(catalog, graph, history, args.K, args.seed, _search(args),
                             replicas=args.replicas, workers=args.workers)
    out = _prepare_out(args.out)
    dump_json(rep.as_dict(), out)
    _write_manifest(args, argv, [out], {"seed": args.seed})
    for k, v in rep.as_dict()["max_relative_deviation"].items():
        print(f"max relative deviation {k}: {v:.4%}")


def _initial_state(args, catalog):
    if getattr(args, "history", None):
        _, _, history = load_dataset(args.risks, args.edges, args.history)
        return history.states[0]
    return np.zeros(catalog.N, np.int8)


def cmd_simulate(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    rates = derive_rates(catalog, graph, _params(args))
    cfg = SimConfig(args.steps, args.burn_in, args.replicas, args.seed, _initial_state(args, catalog))
    rep = simulate_persistence(rates, cfg, percentiles=args.percentiles, workers=args.workers)
    out = _prepare_out(args.out)
    names = _names(catalog)
    write_table(out, ["id", "name", "fraction", "se"],
                [[i + 1, names[i], float(rep.fractions[i]), float(rep.fraction_se[i])]
                 for i in range(catalog.N)])
    summary = out.with_name(out.stem + ".summary.json")
    dump_json({
        "mean_activity": rep.mean_activity,
        "mean_activity_se": rep.mean_activity_se,
        "activity_std": rep.activity_std,
        "carrying_capacity_fraction": rep.mean_activity / catalog.N,
        "percentiles": {str(k): v for k, v in rep.percentiles.items()},
        "activity_histogram": rep.activity_histogram.tolist(),
        "replicas": rep.replicas,
        "measured_steps": rep.measured_steps,
    }, summary)
    _write_manifest(args, argv, [out, summary], {"master_seed": args.seed})
    print(f"mean activity {rep.mean_activity:.4f} +- {rep.mean_activity_se:.4f} "
          f"(std {rep.activity_std:.3f}, {rep.mean_activity / catalog.N:.1%} of the network)")


def cmd_cascade(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    rates = derive_rates(catalog, graph, _params(args))
    init = _risk_index(args.initiator, catalog.N, "initiator")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = simulate_cascade(rates, init, args.max_steps, args.replicas, args.seed,
                               workers=args.workers)
    out = _prepare_out(args.out)
    c = rep.curve
    write_table(out, ["t", "survival", "survivors"],
                [[int(t), float(s), int(n)] for t, s, n in zip(c.times, c.survival, c.survivors)])
    detail = out.with_name("cascade.json") if out.name == "survival.csv" else out.with_name(out.stem + ".cascade.json")
    names = _names(catalog)
    dump_json({
        "initiator": args.initiator,
        "replicas": args.replicas,
        "max_steps": args.max_steps,
        "censored": rep.censored,
        "mean_lifetime": rep.mean_lifetime,
        "decay": None if rep.decay is None else {
            "rate": rep.decay.rate, "r_squared": rep.decay.r_squared,
            "window": list(rep.decay.window), "flag": rep.decay.flag,
        },
        "lifetime_fraction": [
            {"id": i + 1, "name": names[i], "fraction": float(rep.lifetime_fraction[i]),
             "se": float(rep.lifetime_fraction_se[i])} for i in range(catalog.N)
        ],
    }, detail)
    _write_manifest(args, argv, [out, detail], {"seed": args.seed})
    if rep.decay is not None:
        print(f"decay rate {rep.decay.rate:.6g}/month, R^2={rep.decay.r_squared:.4f}")
    print(f"mean lifetime {rep.mean_lifetime:.2f} months, {rep.censored} censored")


def cmd_targets(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    rates = derive_rates(catalog, graph, _params(args))
    rows = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for k, a in enumerate(args.initiators):
            for b in args.targets:
                if a == b:
                    continue
                ia = _risk_index(a, catalog.N, "initiator")
                ib = _risk_index(b, catalog.N, "target")
                # one seed per initiator/target pair, derived from --seed
                pair_seed = (args.seed * 1_000_003 + a * 1009 + b) & ((1 << 64) - 1)
                r = simulate_target_hit(rates, ia, ib, args.replicas, pair_seed,
                                        max_steps=args.max_steps, workers=args.workers)
                rows.append([a, b, r.probability, r.standard_error, r.replicas, r.censored])
    out = _prepare_out(args.out)
    write_table(out, ["initiator", "target", "probability", "se", "replicas", "censored"], rows)
    _write_manifest(args, argv, [out], {"seed": args.seed})
    for r in rows:
        print(f"{r[0]} -> {r[1]}: {r[2]:.4f} +- {r[3]:.4f}")


def cmd_contagion(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    rates = derive_rates(catalog, graph, _params(args))
    rep = contagion_potential(rates, graph, args.convention)
    ranks = rep.rank_of()
    names = _names(catalog)
    out = _prepare_out(args.out)
    write_table(out, ["id", "name", "contagion_potential", "rank"],
                [[i + 1, names[i], float(rep.potentials[i]), int(ranks[i])] for i in range(catalog.N)])
    _write_manifest(args, argv, [out])
    for i in rep.ranking[:5]:
        print(f"{i + 1:3d} {names[i]}: {rep.potentials[i]:.4f}")


def cmd_meanfield(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    rates = derive_rates(catalog, graph, _params(args))
    inten = Intensities.from_rates(rates)
    s0 = _initial_state(args, catalog).astype(float)
    traj = integrate_ode(inten, s0, args.dt, args.t_max)
    fixed = stationary_point(inten, args.tol)
    out = _prepare_out(args.out)
    every = max(1, int(round(args.every / args.dt)))
    header = ["t", "activity"] + [f"s{i}" for i in range(1, catalog.N + 1)]
    rows = [[float(t), float(a), *map(float, s)]
            for t, a, s in zip(traj.times[::every], traj.activity[::every], traj.states[::every])]
    write_table(out, header, rows)
    summary = out.with_name(out.stem + ".stationary.json")
    dump_json({"activity": float(fixed.sum()), "s": fixed.tolist()}, summary)
    _write_manifest(args, argv, [out, summary])
    print(f"mean-field activity at t={traj.times[-1]:g}: {traj.activity[-1]:.4f}; "
          f"stationary point: {fixed.sum():.4f}")


def cmd_blocks(args, argv):
    catalog, graph, _ = load_dataset(args.risks, args.edges)
    labels = catalog.groups
    blocks = estimate_block_probabilities(graph, labels)
    ds = degree_stats(graph, labels)
    out = _prepare_out(args.out)
    G = blocks.G
    rows = [[g + 1, *[float(x) for x in blocks.probabilities[g]]] for g in range(G)]
    write_table(out, ["group"] + [f"g{g}" for g in range(1, G + 1)], rows)
    _write_manifest(args, argv, [out])
    print(f"edges {ds.edges}, mean degree {ds.mean_degree:.4g}")
    for g, d in ds.group_mean_degree.items():
        print(f"group {g}: mean degree {d:.3g}")


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="riskdyn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"riskdyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def data(p, history=True, params=False, history_required=True):
        p.add_argument("--risks", required=True)
        p.add_argument("--edges", required=True)
        if history:
            p.add_argument("--history", required=history_required)
        if params:
            p.add_argument("--params", required=True, help="params.json or fit.json")

    def search(p):
        p.add_argument("--coarse-points", type=int, default=25)
        p.add_argument("--rtol", type=float, default=1e-3)

    def workers(p):
        p.add_argument("--workers", type=int, default=None,
                       help="threads for simulation (default: $RISKDYN_WORKERS or all cores)")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--months", type=int, default=156)
    p.add_argument("--burn-in", type=int, default=240)
    p.add_argument("--alpha", type=float, default=REFERENCE_PARAMS.alpha)
    p.add_argument("--beta", type=float, default=REFERENCE_PARAMS.beta)
    p.add_argument("--gamma", type=float, default=REFERENCE_PARAMS.gamma)
    p.add_argument("--time-unit", choices=("month", "decade"), default="decade")
    p.add_argument("--likelihood-range", type=_pair, default=(2.5, 4.0))
    p.add_argument("--start-month", default="2000-01")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check input files")
    data(p, history_required=False)
    p.add_argument("--params")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("fit", help="maximum-likelihood fit of one model variant")
    data(p)
    p.add_argument("--variant", choices=VARIANTS, default="network")
    p.add_argument("--out", default="fit.json")
    search(p)
    workers(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("surface", help="log-likelihood over a 2-D parameter grid")
    data(p)
    p.add_argument("--fix", required=True, help="pinned parameter, e.g. gamma=427")
    p.add_argument("--time-unit", choices=("month", "decade"), default="decade")
    p.add_argument("--x-range", type=_pair, default=None)
    p.add_argument("--y-range", type=_pair, default=None)
    p.add_argument("--points", type=int, default=25)
    p.add_argument("--linear", action="store_true", help="linear instead of log spacing")
    p.add_argument("--variant", choices=VARIANTS, default="network")
    p.add_argument("--out", default="surface.csv")
    workers(p)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("compare", help="fit several variants and run likelihood-ratio tests")
    data(p)
    p.add_argument("--variants", type=lambda s: [v for v in s.split(",") if v],
                   default=list(VARIANTS))
    p.add_argument("--out", default="compare.csv")
    search(p)
    workers(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("perturb", help="refit under noisy expert likelihoods")
    data(p)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--replicas", type=int, default=1000)
    p.add_argument("--out", default="perturb.json")
    search(p)
    workers(p)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("simulate", help="persistence and activity-level simulation")
    data(p, params=True, history_required=False)
    p.add_argument("--steps", type=int, default=2200)
    p.add_argument("--burn-in", type=int, default=200)
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--percentiles", type=lambda s: [float(x) for x in s.split(",")],
                   default=[5, 25, 50, 75, 95])
    p.add_argument("--out", default="persistence.csv")
    workers(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cascade", help="survival of cascades from one initiator")
    data(p, history=False, params=True)
    p.add_argument("--initiator", type=int, required=True)
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=5000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="survival.csv")
    workers(p)
    p.set_defaults(func=cmd_cascade)

    p = sub.add_parser("targets", help="probability that a cascade reaches a target risk")
    data(p, history=False, params=True)
    p.add_argument("--initiators", type=_id_list, required=True)
    p.add_argument("--targets", type=_id_list, required=True)
    p.add_argument("--replicas", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default="targets.csv")
    workers(p)
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("contagion", help="contagion potential of every risk")
    data(p, history=False, params=True)
    p.add_argument("--convention", choices=("lagged", "synchronous"), default="lagged")
    p.add_argument("--out", default="contagion.csv")
    p.set_defaults(func=cmd_contagion)

    p = sub.add_parser("meanfield", help="integrate the mean-field equations")
    data(p, params=True, history_required=False)
    p.add_argument("--t-max", type=float, default=200.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--every", type=float, default=1.0, help="output spacing in months")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--out", default="meanfield.csv")
    p.set_defaults(func=cmd_meanfield)

    p = sub.add_parser("blocks", help="block densities and degree statistics")
    data(p, history=False)
    p.add_argument("--out", default="blocks.csv")
    p.set_defaults(func=cmd_blocks)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) if exc.code in (0, None) else EXIT_USAGE
    try:
        args.func(args, argv)
    except ValidationError as exc:
        print(f"riskdyn: invalid input: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"riskdyn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RiskDynError as exc:
        print(f"riskdyn: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
