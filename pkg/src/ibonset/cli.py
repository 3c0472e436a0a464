"""Command-line front end: dataset generation, threshold estimation, beta
sweeps, and the noise table, with machine-readable outputs.

Exit codes: 0 success, 1 input error, 2 the dataset is independent (no
finite threshold), 3 solver non-convergence.  All randomness flows from the
single ``--seed`` flag, fanned out deterministically per task, so reruns
with the same config produce identical outputs up to the report timestamp.
The ``IBONSET_OUT_DIR`` environment variable redirects relative output
paths; nothing else is read from the environment.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import classifier, dist, estimators, solver, synth
from .errors import IndependenceError, OnsetError, ValidationError

_EXIT_OK = 0
_EXIT_INPUT = 1
_EXIT_INDEPENDENT = 2
_EXIT_NO_CONVERGENCE = 3

_DEFAULT_RATES = [round(0.02 * k, 2) for k in range(1, 25)]


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

_COERCERS = {
    "str": str,
    "int": int,
    "float": float,
    "bool": bool,
    "float_list": lambda v: [float(x) for x in _split_list(v)],
}


def _split_list(value):
    if isinstance(value, str):
        return [p for p in value.replace(",", " ").split() if p]
    return list(value)


_SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "gen": {
        "preset": ("str", None),
        "spec": ("str", None),
        "n": ("int", 10_000),
        "seed": ("int", 0),
        "out_samples": ("str", "samples.csv"),
        "out_spec": ("str", "spec.json"),
    },
    "estimate": {
        "cond": ("str", None),
        "joint": ("str", None),
        "spec": ("str", None),
        "preset": ("str", None),
        "method": ("str", "all"),
        "variant": ("str", "prefix"),
        "tolerance": ("float", estimators.SEARCH_RTOL),
        "samples": ("int", None),
        "bins": ("int", 32),
        "seed": ("int", 0),
        "out": ("str", None),
    },
    "sweep": {
        "cond": ("str", None),
        "joint": ("str", None),
        "spec": ("str", None),
        "preset": ("str", None),
        "beta_min": ("float", 1.5),
        "beta_max": ("float", 4.5),
        "beta_points": ("int", 25),
        "z_card": ("int", None),
        "restarts": ("int", 5),
        "max_iters": ("int", 5000),
        "bins": ("int", 32),
        "seed": ("int", 0),
        "warm_start": ("bool", False),
        "workers": ("int", None),
        "out_csv": ("str", "sweep.csv"),
        "out_json": ("str", "sweep.json"),
    },
    "table": {
        "rates": ("float_list", _DEFAULT_RATES),
        "learned": ("bool", False),
        "sweep_column": ("bool", False),
        "samples": ("int", 10_000),
        "beta_points": ("int", 25),
        "seed": ("int", 0),
        "out": ("str", None),
    },
    "maxcorr": {
        "cond": ("str", None),
        "joint": ("str", None),
        "spec": ("str", None),
        "preset": ("str", None),
        "bins": ("int", 32),
        "seed": ("int", 0),
        "out": ("str", None),
    },
}


def _build_config(command: str, cli_values: dict, config_path: str | None) -> dict:
    """Merge defaults, an optional JSON document, and explicit flags; reject
    unknown keys and coerce types."""
    schema = _SCHEMAS[command]
    merged = {k: default for k, (_, default) in schema.items()}
    if config_path:
        try:
            with open(config_path) as fh:
                doc = json.load(fh)
        except FileNotFoundError as exc:
            raise ValidationError(f"config file not found: {config_path}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON ({exc})") from exc
        if not isinstance(doc, dict):
            raise ValidationError(f"{config_path}: config must be a JSON object")
        unknown = set(doc) - set(schema)
        if unknown:
            raise ValidationError(
                f"{command}: unknown config keys {sorted(unknown)}"
            )
        merged.update(doc)
    merged.update({k: v for k, v in cli_values.items() if v is not None})

    out = {}
    for key, (kind, _) in schema.items():
        value = merged.get(key)
        if value is None:
            out[key] = None
            continue
        try:
            out[key] = _COERCERS[kind](value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{command}: bad value for {key!r}: {value!r}") from exc
    return out


def _out_path(path_str: str) -> Path:
    path = Path(path_str)
    base = os.environ.get("IBONSET_OUT_DIR")
    if base and not path.is_absolute():
        path = Path(base) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _write_report(path_str: str | None, payload: dict) -> None:
    if not path_str:
        return
    payload = {"timestamp": datetime.now(timezone.utc).isoformat(), **payload}
    with open(_out_path(path_str), "w") as fh:
        json.dump(payload, fh, indent=2)


def _task_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=(index,))


# ---------------------------------------------------------------------------
# input resolution
# ---------------------------------------------------------------------------

class _Problem:
    """A resolved estimation input: conditional table, joint table, and the
    class-conditional structure when it is known exactly."""

    def __init__(self, cond, joint, noise=None, prior=None, source=""):
        self.cond = cond
        self.joint = joint
        self.noise = noise
        self.prior = prior
        self.source = source


def _resolve_spec(config) -> synth.MixtureSpec | None:
    if config.get("preset"):
        return synth.get_preset(config["preset"], seed=config.get("seed", 0))
    if config.get("spec"):
        return synth.load_spec_json(config["spec"])
    return None


def _load_problem(config, *, need_joint_table: bool = False) -> _Problem:
    """Build the estimation input from exactly one of cond/joint/spec/preset.

    Mixture inputs use the exact route: with ``samples`` set, analytic
    posteriors of sampled points; otherwise the compact class-conditional
    table when noise is present, or the exact discretized joint when it is
    not (or when a joint table is required, as for sweeps).
    """
    sources = [k for k in ("cond", "joint", "spec", "preset") if config.get(k)]
    if len(sources) != 1:
        raise ValidationError(
            f"give exactly one input (cond, joint, spec, or preset); got {sources or 'none'}"
        )
    kind = sources[0]

    if kind == "cond":
        cond = dist.load_conditional_csv(config["cond"])
        return _Problem(cond, dist.joint_from_conditional(cond), source=config["cond"])
    if kind == "joint":
        joint = dist.load_joint_csv(config["joint"])
        return _Problem(dist.conditional_from_joint(joint), joint, source=config["joint"])

    spec = _resolve_spec(config)
    noise = spec.noise
    prior = spec.class_priors()
    label = config.get("preset") or config.get("spec")

    if config.get("samples"):
        seq = _task_seed(config.get("seed", 0), 0)
        points = synth.sample(spec, config["samples"], seed=seq).points
        cond = synth.analytic_posterior(spec, points)
        return _Problem(cond, dist.joint_from_conditional(cond), noise, prior, label)
    if noise is not None and not need_joint_table:
        # rows take one distinct value per true class, so the confusion
        # table weighted by the priors is the exact sufficient statistic
        cond = dist.ConditionalMatrix(noise, prior)
        return _Problem(cond, dist.joint_from_conditional(cond), noise, prior, label)
    joint = synth.discretize(spec, bins_per_axis=config.get("bins") or 32)
    return _Problem(
        dist.conditional_from_joint(joint), joint, noise, prior, label
    )


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_gen(config) -> int:
    spec = _resolve_spec(config)
    if spec is None:
        raise ValidationError("gen needs --preset or --spec")
    samples = synth.sample(spec, config["n"], seed=_task_seed(config["seed"], 0))
    synth.save_samples_csv(samples, _out_path(config["out_samples"]))
    synth.save_spec_json(spec, _out_path(config["out_spec"]))
    print(
        f"wrote {len(samples)} samples to {config['out_samples']} "
        f"(spec: {config['out_spec']})"
    )
    return _EXIT_OK


_ALL_METHODS = ("subset", "class-conditional", "functional", "maxcorr", "info-density")


def _run_estimators(problem: _Problem, methods, config) -> list[estimators.BetaEstimate]:
    results = []
    for name in methods:
        if name == "subset":
            res = estimators.subset_search(
                problem.cond,
                tolerance=config["tolerance"],
                variant=config["variant"],
            )
            results.append(
                estimators.BetaEstimate(
                    value=res.beta0,
                    method=estimators.Method.SUBSET_SEARCH,
                    subset=res,
                    diagnostics={"variant": config["variant"]},
                )
            )
        elif name == "class-conditional":
            if problem.noise is None:
                continue
            results.append(estimators.class_conditional_beta(problem.noise, problem.prior))
        elif name == "functional":
            results.append(
                estimators.minimize_beta(problem.joint, seed=config["seed"])
            )
        elif name == "maxcorr":
            results.append(estimators.max_correlation_beta(problem.joint))
        elif name == "info-density":
            results.append(
                estimators.info_density_beta(
                    problem.cond,
                    tolerance=config["tolerance"],
                    variant=config["variant"],
                )
            )
        else:
            raise ValidationError(
                f"unknown method {name!r}; choose from {', '.join(_ALL_METHODS)} or all"
            )
    return results


def _cmd_estimate(config) -> int:
    problem = _load_problem(config)
    raw = config["method"]
    methods = _ALL_METHODS if raw == "all" else tuple(_split_list(raw))
    results = _run_estimators(problem, methods, config)
    if not results:
        raise ValidationError(
            "no applicable estimator for this input (the class-conditional "
            "closed form needs a noisy mixture spec or preset)"
        )

    width = max(len(r.method.value) for r in results)
    print(f"{'method'.ljust(width)}  beta0")
    for r in results:
        note = "  (diagnostic, not a bound)" if r.diagnostics.get("diagnostic_only") else ""
        print(f"{r.method.value.ljust(width)}  {r.value:.6f}{note}")
    _write_report(
        config.get("out"),
        {
            "command": "estimate",
            "config": config,
            "estimates": [r.to_dict() for r in results],
        },
    )
    return _EXIT_OK


def _geometric_grid(lo: float, hi: float, points: int) -> np.ndarray:
    if not (0.0 < lo < hi):
        raise ValidationError("need 0 < beta_min < beta_max")
    return np.geomspace(lo, hi, points)


def _cmd_sweep(config) -> int:
    problem = _load_problem(config, need_joint_table=True)
    grid = _geometric_grid(config["beta_min"], config["beta_max"], config["beta_points"])
    result = solver.sweep(
        problem.joint,
        grid,
        config["z_card"],
        seed=_task_seed(config["seed"], 1),
        max_iters=config["max_iters"],
        restarts=config["restarts"],
        warm_start=config["warm_start"],
        workers=config["workers"],
    )

    theory: dict[str, float] = {}
    try:
        theory["subset_search"] = estimators.subset_search(problem.cond).beta0
    except IndependenceError:
        pass
    if problem.noise is not None:
        theory["class_conditional"] = estimators.class_conditional_beta(
            problem.noise, problem.prior
        ).value
    try:
        theory["max_correlation_inverse"] = estimators.max_correlation_beta(
            problem.joint
        ).value
    except IndependenceError:
        pass

    for p in result.points:
        flag = "" if p.converged else "  [not converged]"
        print(
            f"beta={p.beta:9.4f}  I(X;Z)={p.i_xz:12.6e}  I(Y;Z)={p.i_yz:12.6e}"
            f"  obj={p.objective:12.6e}{flag}"
        )
    if result.detected_beta0 is None:
        print("detected onset: none (no grid point escaped the baseline band)")
    else:
        print(f"detected onset: {result.detected_beta0:.4f}")
    for name, value in theory.items():
        print(f"theory[{name}] = {value:.4f}")

    solver.save_sweep_csv(result, _out_path(config["out_csv"]))
    _write_report(
        config["out_json"],
        {
            "command": "sweep",
            "config": config,
            "sweep": result.to_dict(),
            "theory": theory,
        },
    )
    if not any(p.converged for p in result.points):
        print("warning: no grid point converged", file=sys.stderr)
        return _EXIT_NO_CONVERGENCE
    return _EXIT_OK


def _table_row(rho: float, config) -> dict:
    """One noise-table row; the compact two-row table is the exact
    class-conditional input, so every column is deterministic."""
    noise = synth.symmetric_flip(rho)
    prior = np.array([0.5, 0.5])
    row: dict[str, float | None] = {"noise_rate": rho}
    cond = dist.ConditionalMatrix(noise, prior)
    joint = dist.joint_from_conditional(cond)

    try:
        row["class_conditional"] = estimators.class_conditional_beta(noise, prior).value
    except IndependenceError:
        row["class_conditional"] = None
    try:
        row["subset_true_posterior"] = estimators.subset_search(cond).beta0
    except IndependenceError:
        row["subset_true_posterior"] = None
    try:
        row["functional"] = estimators.minimize_beta(joint, seed=config["seed"]).value
    except IndependenceError:
        row["functional"] = None

    if config["learned"]:
        spec = synth.noise_preset(rho)
        samples = synth.sample(
            spec, config["samples"], seed=_task_seed(config["seed"], 2)
        )
        try:
            model = classifier.fit(
                samples, classifier.TrainConfig(seed=config["seed"])
            )
            learned_cond = classifier.predict_proba(model, samples.points)
            row["subset_learned_posterior"] = estimators.subset_search(learned_cond).beta0
        except (IndependenceError, ValidationError):
            row["subset_learned_posterior"] = None

    if config["sweep_column"]:
        spec = synth.noise_preset(rho)
        joint_exact = synth.discretize(spec)
        target = row["class_conditional"] or 2.0
        grid = _geometric_grid(max(0.5, target / 2.0), target * 2.0, config["beta_points"])
        result = solver.sweep(joint_exact, grid, seed=_task_seed(config["seed"], 3))
        row["observed_onset"] = result.detected_beta0
    return row


def _cmd_table(config) -> int:
    rows = [_table_row(rho, config) for rho in config["rates"]]
    columns = list(rows[0].keys())
    header = "  ".join(f"{c:>22}" for c in columns)
    print(header)
    for row in rows:
        print(
            "  ".join(
                f"{row[c]:>22.4f}" if isinstance(row[c], float) else f"{'-':>22}"
                for c in columns
            )
        )
    _write_report(
        config.get("out"),
        {"command": "table", "config": config, "rows": rows},
    )
    return _EXIT_OK


def _cmd_maxcorr(config) -> int:
    problem = _load_problem(config)
    rho = estimators.max_correlation(problem.joint)
    print(f"rho_m           = {rho:.10f}")
    print(f"rho_m^2         = {rho * rho:.10f}")
    if rho > 0.0:
        print(f"1/rho_m^2       = {1.0 / (rho * rho):.10f}")
    else:
        print("1/rho_m^2       = inf (independent)")
    _write_report(
        config.get("out"),
        {
            "command": "maxcorr",
            "config": config,
            "rho_m": rho,
            "beta_lower_inverse": (1.0 / (rho * rho)) if rho > 0 else None,
        },
    )
    return _EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cond", help="conditional table CSV (classes + optional weight column)")
    p.add_argument("--joint", help="dense joint table CSV")
    p.add_argument("--spec", help="mixture spec JSON")
    p.add_argument("--preset", help="noise-<rate> or overlap-<distance>")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibonset",
        description="Estimate the learnability threshold of a finite dataset "
        "and verify it with a tabular bottleneck sweep.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--preset")
    p.add_argument("--spec")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-samples", dest="out_samples")
    p.add_argument("--out-spec", dest="out_spec")

    p = sub.add_parser("estimate", help="run the threshold estimators")
    _add_input_flags(p)
    p.add_argument("--method", help="comma list of subset, class-conditional, functional, "
                   "maxcorr, info-density, or 'all'")
    p.add_argument("--variant", choices=["prefix", "range"])
    p.add_argument("--tolerance", type=float)
    p.add_argument("--samples", type=int, help="sample the mixture and use analytic posteriors")
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="JSON report path")

    p = sub.add_parser("sweep", help="solve a beta grid and detect the onset")
    _add_input_flags(p)
    p.add_argument("--beta-min", dest="beta_min", type=float)
    p.add_argument("--beta-max", dest="beta_max", type=float)
    p.add_argument("--beta-points", dest="beta_points", type=int)
    p.add_argument("--z-card", dest="z_card", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--warm-start", dest="warm_start", action="store_const", const=True)
    p.add_argument("--workers", type=int)
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-json", dest="out_json")

    p = sub.add_parser("table", help="reproduce the noise-rate threshold table")
    p.add_argument("--rates", help="comma list of flip rates")
    p.add_argument("--learned", action="store_const", const=True,
                   help="add the learned-posterior column (trains a classifier per rate)")
    p.add_argument("--sweep-column", dest="sweep_column", action="store_const", const=True,
                   help="add the observed-onset column (runs a solver sweep per rate)")
    p.add_argument("--samples", type=int)
    p.add_argument("--beta-points", dest="beta_points", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("maxcorr", help="maximum correlation of the input table")
    _add_input_flags(p)
    p.add_argument("--bins", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    for sp in sub.choices.values():
        sp.add_argument("--config", help="JSON config document (flags override)")
    return parser


_HANDLERS = {
    "gen": _cmd_gen,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
    "table": _cmd_table,
    "maxcorr": _cmd_maxcorr,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    try:
        config = _build_config(command, args, config_path)
        return _HANDLERS[command](config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except IndependenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INDEPENDENT
    except OnsetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT


def run() -> None:
    sys.exit(main())


if __name__ == "__main__":
    run()
