"""Command-line surface: fit, predict, effects, region, interpret, simulate, check.

All outputs are comma-separated text with a header row, preceded by one
comment line recording the tool version and a hash of the resolved
configuration; given identical inputs, outputs are byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .basis import (
    ModelSpec,
    blocks_from_meta,
    check_rank_conditions,
    covariate_design,
    stacked_design,
)
from .binning import build_binned_design, read_csv
from .errors import ConfigError, DensfitError
from .fit import (
    fit_poisson,
    fit_result_from_dict,
    fit_result_to_dict,
    select_smoothing,
)
from .inference import effect_region, p_value, sample_region, simultaneous_region
from .interpret import effect_function, mass_shift_sets, odds_ratio, predict_clr
from .sim import SimScenario, coverage_experiment


def _config_hash(payload) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


def _write_csv(path: Path, header: list[str], rows, config_hash: str):
    lines = [f"# densfit {__version__} config={config_hash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _parse_at(spec: str | None) -> dict:
    """Parse ``cov=value,cov2=value2`` covariate assignments."""
    out = {}
    if not spec:
        return out
    for piece in spec.split(","):
        if "=" not in piece:
            raise ConfigError(f"bad covariate assignment {piece!r}")
        name, value = piece.split("=", 1)
        try:
            out[name.strip()] = float(value)
        except ValueError:
            out[name.strip()] = value.strip()
    return out


def _parse_xi_grid(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _resolved_config(args, model_cfg) -> dict:
    knobs = {
        k: getattr(args, k)
        for k in ("bins", "alpha", "xi", "xi_grid", "seed", "quadrature",
                  "weights_col", "smooth_intercepts")
        if hasattr(args, k)
    }
    return {"model": model_cfg, "knobs": knobs}


# ---------------------------------------------------------------------------
# Shared pipeline pieces


def _build_everything(args, model_cfg):
    spec = ModelSpec.from_config(model_cfg)
    if getattr(args, "quadrature", None):
        spec.grid_size = args.quadrature
    domain = spec.build_domain()
    basis = spec.build_basis(domain)
    obs = read_csv(args.data, spec.response_column, getattr(args, "weights_col", None))
    for col in spec.covariate_columns():
        if col not in obs.covariates:
            raise ConfigError(f"model references covariate {col!r} missing from the data")
    blocks = covariate_design(spec.terms, obs.covariates)
    binned = build_binned_design(obs, domain, args.bins)
    return spec, domain, basis, obs, blocks, binned


def _load_fit(args):
    artifact = _load_json(args.fit)
    spec = ModelSpec.from_config(artifact["model"])
    if getattr(args, "model", None):
        model_cfg = _load_json(args.model)
        if _config_hash(model_cfg) != _config_hash(artifact["model"]):
            raise ConfigError("model config does not match the fit artifact")
    domain = spec.build_domain()
    basis = spec.build_basis(domain)
    blocks = blocks_from_meta(artifact["blocks"])
    fit = fit_result_from_dict(artifact["fit"])
    return artifact, spec, domain, basis, blocks, fit


# ---------------------------------------------------------------------------
# Commands


def cmd_fit(args) -> int:
    model_cfg = _load_json(args.model)
    cfg_hash = _config_hash(_resolved_config(args, model_cfg))
    spec, domain, basis, obs, blocks, binned = _build_everything(args, model_cfg)

    report = check_rank_conditions(
        stacked_design(blocks),
        [
            basis.eval_matrix(c.midpoints, is_atom=c.is_atom_cell())
            for c in binned.combos
        ],
    )
    if not (report.covariate_ok and report.response_ok):
        print("warning: design rank conditions violated", file=sys.stderr)
        print(report.summary(), file=sys.stderr)

    if args.xi_grid:
        grid = _parse_xi_grid(args.xi_grid)
        selection = select_smoothing(
            binned, basis, blocks, grid, smooth_intercepts=args.smooth_intercepts
        )
        fit, xi = selection["fit"], selection["xi"]
        xi_table = selection["table"]
    else:
        xi_value = float(args.xi) if args.xi else 0.0
        xi = {b.index: (xi_value, 0.0) for b in blocks if b.term.kind == "smooth"}
        fit = fit_poisson(
            binned, basis, blocks, xi=xi, smooth_intercepts=args.smooth_intercepts
        )
        xi_table = [(xi_value, None, fit.converged)]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    artifact = {
        "version": __version__,
        "config_hash": cfg_hash,
        "model": model_cfg,
        "bins": args.bins,
        "blocks": [b.meta for b in blocks],
        "rank_report": report.summary(),
        "xi_table": [[str(r[0]), None if r[1] is None else r[1], r[2]] for r in xi_table],
        "fit": fit_result_to_dict(fit),
    }
    (out / "fit.json").write_text(
        json.dumps(artifact, sort_keys=True, indent=1), encoding="utf-8"
    )
    _write_csv(
        out / "coefficients.csv",
        ["index", "value"],
        [(i, float(v)) for i, v in enumerate(fit.theta)],
        cfg_hash,
    )
    print(
        f"fit {'converged' if fit.converged else 'DID NOT converge'} in "
        f"{fit.iterations} iterations; gradient norm {fit.grad_norm:.3e}"
    )
    return 0 if fit.converged else 3


def cmd_predict(args) -> int:
    artifact, spec, domain, basis, blocks, fit = _load_fit(args)
    at = _parse_at(args.at)
    g = predict_clr(fit, blocks, basis, at)
    from .bayes_space import BayesDensity

    pdf = BayesDensity(g).pdf()
    rows = []
    for node, clr_v, dens in zip(domain.grid, g.cont_values, pdf.cont_values):
        rows.append(("cont", float(node), float(clr_v), float(dens)))
    for node, clr_v, dens in zip(domain.atom_locations, g.atom_values, pdf.atom_values):
        rows.append(("atom", float(node), float(clr_v), float(dens)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "prediction.csv", ["kind", "node", "clr", "density"], rows,
               artifact["config_hash"])
    return 0


def cmd_effects(args) -> int:
    artifact, spec, domain, basis, blocks, fit = _load_fit(args)
    at = _parse_at(args.at)
    term_ids = [int(t) for t in args.terms.split(",")] if args.terms else [
        b.index for b in blocks
    ]
    rows = []
    for j in term_ids:
        eff = effect_function(fit, blocks, basis, [j], at)
        name = blocks[j].meta.get("name", str(j))
        for node, v in eff.values.to_table():
            rows.append((name, float(node), float(v)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "effects.csv", ["term", "node", "value"], rows,
               artifact["config_hash"])
    return 0


def cmd_region(args) -> int:
    artifact, spec, domain, basis, blocks, fit = _load_fit(args)
    at = _parse_at(args.at)
    term_ids = [int(t) for t in args.terms.split(",")]
    if args.simultaneous:
        if len(term_ids) != 1:
            raise ConfigError("simultaneous regions are per single term")
        region = simultaneous_region(fit, blocks, basis.size, term_ids[0], args.alpha)
    else:
        region = effect_region(fit, blocks, basis.size, term_ids, at, args.alpha)
    samples = sample_region(region, args.samples, args.seed)
    rows = []

    def _curve(coef):
        if args.simultaneous:
            row = blocks[term_ids[0]].row(at)
            coef = np.kron(row, np.eye(basis.size)) @ coef
        return basis.expand(coef).to_table()

    for node, v in _curve(region.center):
        rows.append((float(node), float(v), -1))
    for sid in range(samples.shape[0]):
        for node, v in _curve(samples[sid]):
            rows.append((float(node), float(v), sid))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "region.csv", ["node", "value", "sample"], rows,
               artifact["config_hash"])
    meta = {
        "alpha": args.alpha,
        "radius": region.radius,
        "dimension": region.dim,
        "p_value": p_value(region),
    }
    (out / "region_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8"
    )
    return 0


def cmd_interpret(args) -> int:
    artifact, spec, domain, basis, blocks, fit = _load_fit(args)
    at = _parse_at(args.at)
    term_ids = [int(t) for t in args.terms.split(",")]
    eff = effect_function(fit, blocks, basis, term_ids, at)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.or_pairs:
        rows = []
        for pair in args.or_pairs.split(";"):
            s_txt, t_txt = pair.split(":")
            s, t = float(s_txt), float(t_txt)
            log_or, ratio = odds_ratio(eff, s, t)
            rows.append((s, t, float(log_or), float(ratio)))
        _write_csv(out / "odds_ratios.csv", ["s", "t", "log_or", "or"], rows,
                   artifact["config_hash"])
    if args.threshold is not None:
        sets = mass_shift_sets(eff, args.threshold)
        rows = []
        for lo, hi in sets.plus_intervals:
            rows.append(("gain", "interval", lo, hi))
        for k, flag in enumerate(sets.plus_atoms):
            if flag:
                loc = float(domain.atom_locations[k])
                rows.append(("gain", "atom", loc, loc))
        for lo, hi in sets.minus_intervals:
            rows.append(("loss", "interval", lo, hi))
        for k, flag in enumerate(sets.minus_atoms):
            if flag:
                loc = float(domain.atom_locations[k])
                rows.append(("loss", "atom", loc, loc))
        _write_csv(out / "mass_shift.csv", ["set", "kind", "low", "high"], rows,
                   artifact["config_hash"])
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_json(args.scenario)
    cfg_hash = _config_hash(cfg)
    spec = ModelSpec.from_config(cfg)
    domain = spec.build_domain()
    basis = spec.build_basis(domain)
    scenario = SimScenario(
        basis=basis,
        terms=spec.terms,
        combos=cfg["combos"],
        theta_true=np.array(cfg["theta_true"], dtype=float),
        num_obs=int(cfg["n"]),
        num_bins=int(cfg["bins"]),
        replications=int(cfg["replications"]),
        seed=int(cfg.get("seed", args.seed)),
        alpha=float(cfg.get("alpha", args.alpha)),
    )
    result = coverage_experiment(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for rep, v in enumerate(result.rel_mse_prediction):
        rows.append((rep, "prediction", float(v)))
    for j, values in result.rel_mse_terms.items():
        for rep, v in enumerate(values):
            rows.append((rep, f"term_{j}", float(v)))
    _write_csv(out / "simulation.csv", ["replication", "effect", "rel_mse"], rows,
               cfg_hash)
    summary = [("prediction", "pointwise", float(result.prediction))]
    for j, v in sorted(result.pointwise.items()):
        summary.append((f"term_{j}", "pointwise", float(v)))
    for j, v in sorted(result.simultaneous.items()):
        summary.append((f"term_{j}", "simultaneous", float(v)))
    _write_csv(out / "coverage.csv", ["effect", "kind", "coverage"], summary, cfg_hash)
    print(f"replications: {result.replications}, failures: {result.failures}")
    return 0


def cmd_check(args) -> int:
    model_cfg = _load_json(args.model)
    spec, domain, basis, obs, blocks, binned = _build_everything(args, model_cfg)
    report = check_rank_conditions(
        stacked_design(blocks),
        [
            basis.eval_matrix(c.midpoints, is_atom=c.is_atom_cell())
            for c in binned.combos
        ],
    )
    print(report.summary())
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="densfit",
        description="Additive conditional density regression over mixed domains",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit a model to raw observations")
    fit.add_argument("--data", required=True)
    fit.add_argument("--model", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--bins", type=int, default=100)
    fit.add_argument("--xi", default=None, help="fixed smoothing value")
    fit.add_argument("--xi-grid", default=None, help="comma-separated grid")
    fit.add_argument("--weights-col", default=None)
    fit.add_argument("--quadrature", type=int, default=None)
    fit.add_argument("--smooth-intercepts", action="store_true")
    fit.add_argument("--seed", type=int, default=0)
    fit.set_defaults(func=cmd_fit)

    predict = sub.add_parser("predict", help="predicted density at covariates")
    predict.add_argument("--fit", required=True, help="fit.json from a prior fit")
    predict.add_argument("--model", default=None)
    predict.add_argument("--out", required=True)
    predict.add_argument("--at", required=True, help="cov=value,...")
    predict.set_defaults(func=cmd_predict)

    effects = sub.add_parser("effects", help="clr effect curves")
    effects.add_argument("--fit", required=True)
    effects.add_argument("--model", default=None)
    effects.add_argument("--out", required=True)
    effects.add_argument("--at", required=True)
    effects.add_argument("--terms", default=None)
    effects.set_defaults(func=cmd_effects)

    region = sub.add_parser("region", help="confidence region export")
    region.add_argument("--fit", required=True)
    region.add_argument("--model", default=None)
    region.add_argument("--out", required=True)
    region.add_argument("--at", default=None)
    region.add_argument("--terms", required=True)
    region.add_argument("--alpha", type=float, default=0.95)
    region.add_argument("--samples", type=int, default=100)
    region.add_argument("--seed", type=int, default=0)
    region.add_argument("--simultaneous", action="store_true")
    region.set_defaults(func=cmd_region)

    interpret = sub.add_parser("interpret", help="odds ratios and mass shifts")
    interpret.add_argument("--fit", required=True)
    interpret.add_argument("--model", default=None)
    interpret.add_argument("--out", required=True)
    interpret.add_argument("--at", required=True)
    interpret.add_argument("--terms", required=True)
    interpret.add_argument("--or-pairs", default=None, help="s:t;s2:t2 ...")
    interpret.add_argument("--threshold", type=float, default=None)
    interpret.set_defaults(func=cmd_interpret)

    simulate = sub.add_parser("simulate", help="run a scenario file")
    simulate.add_argument("--scenario", required=True)
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--alpha", type=float, default=0.95)
    simulate.set_defaults(func=cmd_simulate)

    check = sub.add_parser("check", help="design rank diagnostics")
    check.add_argument("--data", required=True)
    check.add_argument("--model", required=True)
    check.add_argument("--bins", type=int, default=100)
    check.add_argument("--quadrature", type=int, default=None)
    check.set_defaults(func=cmd_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DensfitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
