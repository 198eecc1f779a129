"""Command-line interface.

Subcommands::

    koopsub simulate  sample snapshot pairs of a benchmark system
    koopsub fit       EDMD / SSD / T-SSD on a snapshot file
    koopsub eval      worst-case relative error of a model on test snapshots
    koopsub sweep     T-SSD dimension and accuracy over a list of epsilon
    koopsub eigfun    eigenfunction modulus and phase on a planar grid
    koopsub heatmap   one-step relative prediction error on a planar grid

Every subcommand accepts ``--config FILE`` (JSON holding option values;
explicit flags win) and ``--save-config FILE`` (write the resolved options).

Exit codes: 0 success, 2 configuration or input error, 3 state outside the
domain of the dynamics, 4 rank precondition violated.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .dictionary import evaluate, monomial_dictionary, orthonormalize_on_data, restrict
from .koopman import KoopmanModel, edmd_fit, rrmse_max
from .linalg import InputError, RankDeficiencyError
from .report import error_heatmap, eigenfunction_grid, grid_axes, run_sweep
from .ssd import ssd
from .systems import DomainError, get_system, read_snapshots, sample_snapshots, write_snapshots
from .tssd import VARIANTS, ZERO_EPSILON_SURROGATE, TssdConfig, tssd

log = logging.getLogger("koopsub")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DOMAIN = 3
EXIT_RANK = 4

# options that only steer the CLI itself and are not part of a run's config
_META_OPTIONS = {"config", "save_config", "verbose", "func"}


class ConfigError(InputError):
    pass


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _parse_domain(text, n_vars: int | None = None):
    """``"lo:hi"`` for every coordinate, or ``"lo:hi,lo:hi,..."``."""
    if text is None:
        return None
    if isinstance(text, list):
        return text
    try:
        box = [[float(v) for v in part.split(":")] for part in str(text).split(",")]
    except ValueError:
        raise ConfigError(f"bad domain {text!r}; use lo:hi[,lo:hi...]") from None
    if any(len(b) != 2 for b in box):
        raise ConfigError(f"bad domain {text!r}; use lo:hi[,lo:hi...]")
    if len(box) == 1 and n_vars:
        box = box * n_vars
    return box


def _system(name: str, dt=None, domain=None, integrator=None):
    spec = get_system(name, dt=dt)
    if domain is not None:
        spec = spec.replace(domain=_parse_domain(domain, spec.state_dim))
    if integrator is not None:
        spec = spec.replace(integrator=integrator)
    return spec


def _resolved(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _META_OPTIONS}


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_json(path: str, expected: str | None = None) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    if expected is not None and data.get("format") != expected:
        raise ConfigError(f"{path} is not a {expected} file")
    return data


def _load_snapshots(path: str):
    try:
        return read_snapshots(path)
    except OSError as exc:
        raise ConfigError(f"cannot read snapshots {path}: {exc}") from None


def _fit_domain(pair, args):
    """Box used to scale the dictionary variables."""
    if args.domain is not None:
        return _parse_domain(args.domain, pair.X.shape[1])
    name = pair.meta.get("system")
    try:
        spec = get_system(str(name))
        if spec.state_dim == pair.X.shape[1]:
            return spec.domain.tolist()
    except InputError:
        pass
    lo = pair.X.min(axis=0)
    hi = pair.X.max(axis=0)
    hi = np.where(hi > lo, hi, lo + 1.0)
    return np.column_stack([lo, hi]).tolist()


# -- subcommands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec = _system(args.system, args.dt, args.domain, args.integrator)
    pair = sample_snapshots(spec, args.n, args.traj_len, args.seed)
    write_snapshots(args.output, pair)
    print(f"{spec.name}: wrote {pair.n_samples} snapshot pairs of dimension {spec.state_dim} to {args.output}")
    return EXIT_OK


def cmd_fit(args) -> int:
    pair = _load_snapshots(args.data)
    config = _resolved(args)
    base = monomial_dictionary(pair.X.shape[1], args.degree, domain=_fit_domain(pair, args))
    dictionary = orthonormalize_on_data(base, pair.X, args.rtol)
    DX = evaluate(dictionary, pair.X)
    DY = evaluate(dictionary, pair.Y)
    trace = None
    if args.method == "edmd":
        C = np.eye(dictionary.size)
    elif args.method == "ssd":
        C, n_iter = ssd(DX, DY, args.rtol, full_output=True)
        trace = {"method": "ssd", "iters_used": n_iter}
    else:
        if args.epsilon is None:
            raise ConfigError("--method tssd needs --epsilon")
        if args.epsilon == 0:
            print(f"note: epsilon = 0 is replaced by {ZERO_EPSILON_SURROGATE:g}", file=sys.stderr)
        C, tr = tssd(DX, DY, TssdConfig(epsilon=args.epsilon, rtol=args.rtol, variant=args.variant))
        trace = {"method": "tssd", **tr.to_dict()}

    prefix = args.output
    _write_json(
        prefix + ".basis.json",
        {
            "format": "koopsub.basis",
            "version": 1,
            "dictionary": dictionary.to_dict(),
            "C": C.tolist(),
            "dim": int(C.shape[1]),
            "config": config,
        },
    )
    if trace is not None:
        _write_json(prefix + ".trace.json", {"format": "koopsub.trace", **trace, "config": config})

    if C.shape[1] == 0:
        print("dim 0: no subspace satisfies the requested accuracy; no model written")
        return EXIT_OK
    pruned = restrict(dictionary, C)
    K, residual = edmd_fit(evaluate(pruned, pair.X), evaluate(pruned, pair.Y), args.rtol)
    model = KoopmanModel.from_matrix(pruned, K, residual, meta={"config": config, "data_meta": pair.meta})
    model_payload = model.to_dict()
    with open(prefix + ".model.json", "w") as fh:
        json.dump(model_payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    err = rrmse_max(pruned, pair.X, pair.Y, args.rtol)
    print(f"method {args.method}: dim {C.shape[1]} of {dictionary.size}")
    print(f"training rrmse_max {err:.6g}")
    print(f"residual ||DY - DX K||_F {residual:.6g}")
    return EXIT_OK


def _load_model(path: str) -> KoopmanModel:
    return KoopmanModel.from_dict(_read_json(path, "koopsub.model"))


def cmd_eval(args) -> int:
    model = _load_model(args.model)
    pair = _load_snapshots(args.test)
    err = rrmse_max(model.dictionary, pair.X, pair.Y, args.rtol)
    print(f"rrmse_max {err:.6g} on {pair.n_samples} test pairs (dim {model.size})")
    if args.output:
        _write_json(
            args.output,
            {"format": "koopsub.eval", "rrmse_max": err, "n_test": pair.n_samples, "dim": model.size, "config": _resolved(args)},
        )
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = _system(args.system, args.dt, args.domain, args.integrator)
    epsilons = args.epsilons if isinstance(args.epsilons, list) else _float_list(args.epsilons)
    report = run_sweep(
        spec,
        args.degree,
        epsilons,
        seed=args.seed,
        variant=args.variant,
        N=args.n,
        traj_len=args.traj_len,
        n_test=args.n_test,
        test_seed=args.test_seed,
        rtol=args.rtol,
        workers=args.workers,
    )
    report.metadata["config"] = _resolved(args)
    with open(args.output + ".csv", "w") as fh:
        fh.write(report.to_csv(args.timing))
    with open(args.output + ".json", "w") as fh:
        fh.write(report.to_json(args.timing))
    print(f"{'epsilon':>8} {'dim':>5} {'train':>10} {'test':>10} {'iters':>5}")
    for r in report.rows:
        print(f"{r.epsilon:>8g} {r.dim:>5d} {r.rrmse_max_train:>10.4g} {r.rrmse_max_test:>10.4g} {r.iters:>5d}")
    bad = report.uncertified()
    if bad:
        print(f"warning: {len(bad)} rows break the training accuracy certificate", file=sys.stderr)
    return EXIT_OK


def _model_axes(model: KoopmanModel, args):
    box = None
    if args.domain is not None:
        box = _parse_domain(args.domain, model.dictionary.n_vars)
    else:
        name = model.meta.get("data_meta", {}).get("system")
        try:
            box = get_system(str(name)).domain
        except InputError:
            center, scale = model.dictionary.center, model.dictionary.scale
            box = np.column_stack([center - scale, center + scale])
    return grid_axes(box, args.grid)


def cmd_eigfun(args) -> int:
    model = _load_model(args.model)
    grid = eigenfunction_grid(model, args.idx, _model_axes(model, args))
    header = {"config": _resolved(args), "eigenvalue": [grid.eigenvalue.real, grid.eigenvalue.imag]}
    with open(args.output, "w") as fh:
        fh.write(grid.to_csv(header))
    lam = grid.eigenvalue
    print(f"eigenpair {args.idx}: lambda = {lam.real:.6g}{lam.imag:+.6g}j; {grid.values.size} grid points -> {args.output}")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    model = _load_model(args.model)
    name = args.system or model.meta.get("data_meta", {}).get("system")
    if name is None:
        raise ConfigError("cannot tell the system of this model; pass --system")
    spec = _system(str(name), args.dt, None, args.integrator)
    if args.domain is None:
        args.domain = ",".join(f"{lo}:{hi}" for lo, hi in spec.domain)
    grid = error_heatmap(model.dictionary, model.K, spec, _model_axes(model, args))
    with open(args.output, "w") as fh:
        fh.write(grid.to_csv({"config": _resolved(args)}))
    print(f"mean relative prediction error {np.nanmean(grid.values):.4g}% -> {args.output}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _add_common(p):
    p.add_argument("--config", help="JSON file with option values (explicit flags take precedence)")
    p.add_argument("--save-config", help="write the resolved options to this JSON file")
    p.add_argument("--rtol", type=float, default=None, help="relative singular-value cutoff for rank decisions")


def _add_system(p, required=True):
    p.add_argument("--system", required=required, help="hopf, duffing or consensus")
    p.add_argument("--dt", type=float, default=None, help="time step (default: the system's)")
    p.add_argument("--domain", default=None, help="sampling box, lo:hi for all coordinates or lo:hi,lo:hi,... (write --domain=-1:5 for negative bounds)")
    p.add_argument("--integrator", choices=("rk4", "euler"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="koopsub", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"koopsub {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample snapshot pairs")
    _add_system(p)
    p.add_argument("--n", type=int, default=10_000, help="number of snapshot pairs")
    p.add_argument("--traj-len", type=int, default=2, help="states per trajectory (pairs per trajectory + 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="snapshots.csv")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit EDMD, SSD or T-SSD on snapshots")
    p.add_argument("--data", required=True, help="snapshot CSV")
    p.add_argument("--method", choices=("edmd", "ssd", "tssd"), default="tssd")
    p.add_argument("--degree", type=int, default=10, help="polynomial dictionary degree")
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--variant", choices=VARIANTS, default="efficient")
    p.add_argument("--domain", default=None, help="box used to scale the dictionary variables")
    p.add_argument("-o", "--output", default="model", help="output prefix")
    _add_common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="rrmse_max of a model on test data")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True, help="snapshot CSV")
    p.add_argument("-o", "--output", default=None, help="optional JSON result file")
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="T-SSD over a list of epsilon")
    _add_system(p)
    p.add_argument("--epsilons", type=_float_list, required=True, help="comma-separated list")
    p.add_argument("--degree", type=int, default=10)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--n-test", type=int, default=None, help="test pairs (default: --n)")
    p.add_argument("--traj-len", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--test-seed", type=int, default=None, help="default: seed + 1")
    p.add_argument("--variant", choices=VARIANTS, default="efficient")
    p.add_argument("--workers", type=int, default=None, help="threads for epsilon points (capped by KOOPMAN_THREADS)")
    p.add_argument("--timing", action="store_true", help="include wall times (breaks byte-identical reruns)")
    p.add_argument("-o", "--output", default="sweep", help="output prefix for .csv and .json")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eigfun", help="eigenfunction grid export")
    p.add_argument("--model", required=True)
    p.add_argument("--idx", type=int, default=0, help="eigenpair index (sorted by decreasing modulus)")
    p.add_argument("--grid", type=int, default=101, help="points per axis")
    p.add_argument("--domain", default=None)
    p.add_argument("-o", "--output", default="eigfun.csv")
    _add_common(p)
    p.set_defaults(func=cmd_eigfun)

    p = sub.add_parser("heatmap", help="prediction-error grid export")
    p.add_argument("--model", required=True)
    p.add_argument("--system", default=None, help="default: the system recorded in the model")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--integrator", choices=("rk4", "euler"), default=None)
    p.add_argument("--grid", type=int, default=101)
    p.add_argument("--domain", default=None)
    p.add_argument("-o", "--output", default="heatmap.csv")
    _add_common(p)
    p.set_defaults(func=cmd_heatmap)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        command = next((t for t in argv if t in subparsers.choices), None)
        if command is None:
            raise ConfigError("--config needs a subcommand")
        values = dict(_read_json(known.config))
        if values.pop("command", command) != command:
            raise ConfigError(f"{known.config} holds options for another subcommand, not '{command}'")
        sub = subparsers.choices[command]
        actions = {a.dest: a for a in sub._actions}
        unknown = set(values) - set(actions)
        if unknown:
            raise ConfigError(f"{known.config}: unknown options {sorted(unknown)}")
        values = {k: v for k, v in values.items() if k not in _META_OPTIONS}
        for dest in values:
            # supplied by the file, so no longer required on the command line
            actions[dest].required = False
        # config values become defaults, so flags given on the command line win
        sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if os.environ.get("KOOPMAN_THREADS"):
        log.info("KOOPMAN_THREADS=%s", os.environ["KOOPMAN_THREADS"])
    try:
        if args.save_config:
            _write_json(args.save_config, {"command": args.command, **_resolved(args)})
        return args.func(args)
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RankDeficiencyError as exc:
        print(f"rank precondition failed: {exc}", file=sys.stderr)
        return EXIT_RANK
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
