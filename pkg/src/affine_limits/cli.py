"""Command-line interface: ``affine-limits <command> --config PATH``.

Exit codes: 0 on success or a passing verification, 2 on a failed
verification, 1 on input or configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .engine import batch_to_csv, sample_stationary
from .errors import AffineLimitsError, InputError
from .law import C_2plus, Regime, build_limit_law, phi_table, xi
from .measure import load_config, mu_from_dict, validate_hypothesis_H
from .spectral import default_c_grid, expansion_fit, probe_csv
from .tails import angular_measure, tail_profile
from .verify import default_v_grid, local_limit_check, verify_convergence

EXIT_OK, EXIT_INPUT, EXIT_FAIL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="JSON config with a 'measure' entry")
    common.add_argument("--seed", type=int, default=None, help="root seed (overrides the config)")
    common.add_argument("--out", default=None, help="output directory; stdout when omitted")
    common.add_argument("--workers", type=int, default=1)
    common.add_argument("--format", choices=("csv", "json"), default="json")
    common.add_argument("--N", type=int, default=None, help="sample size (overrides the config)")

    parser = _Parser(prog="affine-limits", description="Limit theorems for heavy-tailed affine recursions.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("inspect", parents=[common], help="validate the hypothesis; print alpha, m_alpha, structure")
    sub.add_parser("simulate", parents=[common], help="sample the stationary law")
    sub.add_parser("tails", parents=[common], help="tail exponent, tail constants and angular masses")
    p = sub.add_parser("law", parents=[common], help="limit-law parameters and C on a frequency grid")
    p.add_argument("--v", type=float, nargs="*", default=None, help="frequencies (dimension one)")
    p = sub.add_parser("verify", parents=[common], help="ECF of normalised sums against the limit law")
    p.add_argument("--n-list", type=int, nargs="+", default=None)
    p.add_argument("--law-N", type=int, default=None, help="sample size for the tail estimates")
    p = sub.add_parser("llt", parents=[common], help="local limit ratios")
    p.add_argument("--n-list", type=int, nargs="+", default=None)
    p = sub.add_parser("spectral", parents=[common], help="dominant eigenvalues and the expansion fit")
    p.add_argument("--v", type=float, nargs="+", default=[1.0])
    p.add_argument("--c-grid", type=float, nargs="+", default=None)
    p.add_argument("--policy", choices=("clamp", "damped"), default="clamp")
    return parser


# ---------------------------------------------------------------------------
# output helpers

def _rows_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    wr = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    wr.writeheader()
    wr.writerows(rows)
    return buf.getvalue()


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _emit(args, name: str, payload: dict, rows: list[dict] | None = None, csv_text: str | None = None) -> None:
    """Write ``name.json`` (and a CSV table) to ``--out``, or print in the requested format."""
    text_json = json.dumps(payload, indent=2, default=_json_default)
    table = csv_text if csv_text is not None else (_rows_csv(rows) if rows else "")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{name}.json").write_text(text_json + "\n")
        if table:
            (out / f"{name}.csv").write_text(table)
    else:
        sys.stdout.write((table if args.format == "csv" and table else text_json + "\n"))


def _experiment(cfg: dict) -> dict:
    exp = cfg.get("experiment", {})
    if not isinstance(exp, dict):
        raise InputError("'experiment' must be an object")
    return exp


def _seed(args, cfg: dict) -> int:
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    if not isinstance(seed, int) or seed < 0 or seed >= 2 ** 64:
        raise InputError("seed must be an unsigned 64-bit integer")
    return seed


# ---------------------------------------------------------------------------
# commands

def cmd_inspect(args, cfg, mu) -> int:
    rep = validate_hypothesis_H(mu)
    lines = [f"hypothesis={'ok' if rep.ok else 'FAILED'}"]
    if rep.alpha is not None:
        lines += [f"α={rep.alpha:.6f}", f"m_α={rep.m_alpha:.6f}"]
    lines.append(f"structure={rep.structure.label}")
    lines += [f"failure: {f}" for f in rep.failures]
    if args.format == "json" or args.out:
        payload = {"ok": rep.ok, "alpha": rep.alpha, "m_alpha": rep.m_alpha, "structure": rep.structure.label,
                   "failures": rep.failures}
        if args.out:
            _emit(args, "inspect", payload)
    print("\n".join(lines))
    return EXIT_OK if rep.ok else EXIT_INPUT


def cmd_simulate(args, cfg, mu) -> int:
    N = args.N or _experiment(cfg).get("N", 10_000)
    batch = sample_stationary(mu, N, _seed(args, cfg), workers=args.workers)
    x = batch.values
    payload = {"N": batch.N, "truncation": batch.truncation, "seed": batch.seed,
               "mean": x.mean(axis=0), "mean_se": x.std(axis=0, ddof=1) / np.sqrt(batch.N),
               "variance": x.var(axis=0, ddof=1)}
    _emit(args, "stationary", payload, csv_text=batch_to_csv(batch))
    return EXIT_OK


def cmd_tails(args, cfg, mu) -> int:
    rep = validate_hypothesis_H(mu)
    if not rep.ok:
        raise InputError("; ".join(rep.failures))
    N = args.N or 10 ** 6
    R = sample_stationary(mu, N, _seed(args, cfg), workers=args.workers, alpha=rep.alpha)
    prof = tail_profile(R, rep.alpha, rep.structure, mu.blocks)
    ang = angular_measure(R, rep.alpha, float(prof.t[len(prof.t) // 2]) if len(prof.t) else None, mu.blocks,
                          rep.structure, min_exceed=1)
    payload = {"alpha": rep.alpha, "alpha_hat": prof.alpha_hat, "alpha_se": prof.alpha_se,
               "flatness": prof.flatness, "lower_bound": prof.lower_bound(), "profile": prof.to_rows(),
               "angular": ang.to_dict(), "warnings": prof.warnings}
    _emit(args, "tails", payload, rows=prof.to_rows())
    return EXIT_OK


def _law(args, cfg, mu, N=None):
    return build_limit_law(mu, N or args.N or 10 ** 6, seed=_seed(args, cfg), workers=args.workers)


def cmd_law(args, cfg, mu) -> int:
    law = _law(args, cfg, mu)
    grid = default_v_grid(law) if args.v is None else np.asarray(args.v, float).reshape(-1, 1)
    payload = law.to_dict(grid)
    phis = phi_table(law, grid)
    rows = [{**{f"v{j}": float(x) for j, x in enumerate(v)}, "re_phi": p.real, "im_phi": p.imag}
            for v, p in zip(grid, phis)]
    _emit(args, "law", payload, rows=rows)
    return EXIT_OK


def cmd_verify(args, cfg, mu) -> int:
    exp = _experiment(cfg)
    seed = _seed(args, cfg)
    law = _law(args, cfg, mu, args.law_N or exp.get("law_N"))
    n_list = args.n_list or exp.get("n_list") or [250, 1000]
    tol = exp.get("tolerances", {})
    rep = verify_convergence(law, n_list, exp.get("v_grid"), args.N or exp.get("N", 50_000), seed, args.workers,
                             tol_se=tol.get("tol_se", 3.0), drift=tol.get("drift", 0.0),
                             experiment=str(exp.get("name", mu.name or "verify")))
    _emit(args, "verify", rep.to_dict(), csv_text=rep.to_csv())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_llt(args, cfg, mu) -> int:
    exp = _experiment(cfg)
    law = _law(args, cfg, mu, exp.get("law_N"))
    interval = exp.get("interval", [-1.0, 1.0])
    n_list = args.n_list or exp.get("n_list") or (250, 500, 1000, 2000, 4000)
    tol = exp.get("tolerances", {}).get("plateau", 0.2)
    rep = local_limit_check(law, interval, n_list, args.N or exp.get("N", 10 ** 6), _seed(args, cfg), args.workers,
                            tolerance=tol)
    _emit(args, "llt", rep.to_dict(), rows=[r.to_dict() for r in rep.rows])
    return EXIT_OK if rep.stabilized else EXIT_FAIL


def cmd_spectral(args, cfg, mu) -> int:
    rep = validate_hypothesis_H(mu)
    if not rep.ok:
        raise InputError("; ".join(rep.failures))
    alpha = rep.alpha
    v = np.asarray(args.v, float)
    c_grid = args.c_grid or default_c_grid(alpha, rep.structure)
    regime = Regime.ALPHA_GT2.value if alpha > 2 + 1e-9 else None
    target, m, xi_fn, compare = None, None, None, "complex"
    if regime is not None:
        from .measure import mean_operator_and_mean, stationary_covariance
        z, m = mean_operator_and_mean(mu, alpha)
        q = stationary_covariance(mu, alpha)
        target, compare = C_2plus(v, q, z, m), "real"
    else:
        law = _law(args, cfg, mu)
        regime = law.regime.value
        m = law.m
        if law.regime is Regime.ALPHA_EQ1:
            xi_fn = lambda c: xi(c, law.tails.samples, mu.blocks)[0]
    fit = expansion_fit(mu, v, c_grid, regime, alpha, m=m, xi_fn=xi_fn, target=target, compare=compare,
                        policy=args.policy)
    payload = {"v": v, "regime": regime, "method": fit.method, "fitted": fit.fitted, "spread": fit.spread,
               "target": fit.target, "rel_deviation": fit.rel_deviation, "floor_at": fit.floor_at,
               "rows": fit.rows(), "warnings": fit.warnings}
    _emit(args, "spectral", payload, csv_text=probe_csv(fit, v))
    return EXIT_OK


COMMANDS = {"inspect": cmd_inspect, "simulate": cmd_simulate, "tails": cmd_tails, "law": cmd_law,
            "verify": cmd_verify, "llt": cmd_llt, "spectral": cmd_spectral}


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the process exit code."""
    try:
        args = build_parser().parse_args(argv)
        cfg = load_config(args.config)
        if not isinstance(cfg, dict) or "measure" not in cfg:
            raise InputError("config must be an object with a 'measure' entry")
        mu = mu_from_dict(cfg["measure"])
        return COMMANDS[args.command](args, cfg, mu)
    except AffineLimitsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INPUT


def cli_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    cli_main()
