"""Command-line driver.

    fracpq <subcommand> [--config PATH] [--out DIR] [--seed INT]

Every run writes ``manifest.json`` plus CSV tables into the output
directory.  Exit status: 0 success, 2 invalid input, 3 solver did not
converge (partial traces are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import continuation as C
from . import energies as E
from . import nehari as N
from .config import RunConfig
from .eigsolve import lambda1, lambda2_minimax, linear_oracle, path_quotients
from .errors import ConvergenceError, FracPQError, ValidationError

logger = logging.getLogger("fracpq")

EXIT_OK, EXIT_INVALID, EXIT_NONCONVERGED = 0, 2, 3

SUBCOMMANDS = ("lambda1", "lambda2", "oracle", "nehari", "certify", "mu-sweep", "s-sweep", "bbm", "report")


class _NotConverged(Exception):
    pass


# -- output -------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v).replace(",", ";").replace("\n", " ")


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _sweep_csv(path, res: C.SweepResult):
    cols = res.columns()
    write_csv(path, cols, ([r.get(c, "") for c in cols] for r in res.rows))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


# -- helpers ------------------------------------------------------------------

def _bundle(cfg: RunConfig, mesh=None, mu=None):
    mesh = mesh or cfg.build_mesh()
    pr = cfg.section("params")
    return E.make_bundle(mesh, pr["s"], pr["p"], cfg.potential(mesh), q=pr["q"],
                         mu=pr["mu"] if mu is None else mu)


def _solver(cfg):
    sv = cfg.section("solver")
    return sv["tol"], sv["max_iter"], sv["seed"]


def _lambda(cfg, lam1: float) -> float:
    pr = cfg.section("params")
    if pr["lambda"] is not None:
        return float(pr["lambda"])
    if pr["lambda_factor"] is not None:
        return float(pr["lambda_factor"]) * lam1
    raise ValidationError("config field 'params.lambda': give lambda or lambda_factor")


def _eigen_files(out, mesh, rep):
    write_csv(out / "eigenfunction.csv", ["x", "u"], zip(mesh.nodes, rep.eigenfunction.values))
    write_csv(out / "trace.csv", ["iter", "quotient", "residual"], rep.trace)


def _ground(cfg, b):
    tol, max_iter, seed = _solver(cfg)
    return lambda1(b, tol=tol, max_iter=max_iter, seed=seed)


# -- subcommands ----------------------------------------------------------------
# Each returns (summary, reports, certificates, files, converged).

def cmd_lambda1(cfg, out):
    b = _bundle(cfg, mu=0.0)
    rep = _ground(cfg, b)
    _eigen_files(out, b.mesh, rep)
    return rep.summary(), {"lambda1": rep.summary()}, {}, ["eigenfunction.csv", "trace.csv"], rep.converged


def cmd_lambda2(cfg, out):
    b = _bundle(cfg, mu=0.0)
    tol, _, seed = _solver(cfg)
    r1 = _ground(cfg, b)
    rep = lambda2_minimax(b, tol=tol, seed=seed, lambda1_report=r1)
    _eigen_files(out, b.mesh, rep)
    theta = 2.0 * np.pi * np.arange(128) / 128
    vals = path_quotients(b, rep.eigenfunction.values, theta)
    write_csv(out / "path.csv", ["theta", "quotient"], zip(theta, vals))
    summ = {**rep.summary(), "lambda1": r1.lambda_est,
            "path_excess": float(np.max(vals) - rep.lambda_est)}
    return summ, {"lambda1": r1.summary(), "lambda2": rep.summary()}, {}, \
        ["eigenfunction.csv", "trace.csv", "path.csv"], rep.converged and r1.converged


def cmd_oracle(cfg, out):
    mesh = cfg.build_mesh()
    pairs = linear_oracle(mesh, cfg.section("params")["s"], cfg.potential(mesh))
    k = min(cfg.section("oracle")["k"], len(pairs))
    write_csv(out / "eigenvalues.csv", ["k", "lambda"], ((i + 1, pairs[i][0]) for i in range(k)))
    write_csv(out / "eigenfunctions.csv", ["x"] + [f"u{i + 1}" for i in range(k)],
              zip(mesh.nodes, *(pairs[i][1].values for i in range(k))))
    summ = {"eigenvalues": [pairs[i][0] for i in range(k)], "n": mesh.n}
    return summ, {"oracle": summ}, {}, ["eigenvalues.csv", "eigenfunctions.csv"], True


def _require_mu(cfg):
    if not cfg.section("params")["mu"] > 0:
        raise ValidationError("config field 'params.mu': this subcommand needs mu > 0")


def cmd_nehari(cfg, out):
    _require_mu(cfg)
    b = _bundle(cfg)
    tol, _, seed = _solver(cfg)
    r1 = _ground(cfg, b.replace(mu=0.0))
    lam = _lambda(cfg, r1.lambda_est)
    rep = N.solve_m_lambda(b, lam, tol=tol, seed=seed, init=r1.eigenfunction)
    write_csv(out / "solution.csv", ["x", "u"], zip(b.mesh.nodes, rep.minimizer.values))
    write_csv(out / "trace.csv", ["iter", "log_level", "grad_norm"], rep.trace)
    summ = {**rep.summary(), "lambda1": r1.lambda_est}
    return summ, {"lambda1": r1.summary(), "nehari": rep.summary()}, {}, \
        ["solution.csv", "trace.csv"], rep.converged


def cmd_certify(cfg, out):
    b = _bundle(cfg)
    tol, _, seed = _solver(cfg)
    r1 = _ground(cfg, b.replace(mu=0.0))
    pr = cfg.section("params")
    lam = _lambda(cfg, r1.lambda_est) if (pr["lambda"] is not None or pr["lambda_factor"] is not None) \
        else 0.99 * r1.lambda_est
    cert = N.nonexistence_certificate(b, lam, trials=cfg.section("certify")["trials"], seed=seed,
                                      probes=[r1.eigenfunction])
    summ = {**cert.summary(), "lambda1": r1.lambda_est}
    return summ, {"lambda1": r1.summary()}, {"certificate": cert.summary()}, [], r1.converged


def cmd_mu_sweep(cfg, out):
    b = _bundle(cfg, mu=0.0)
    tol, _, seed = _solver(cfg)
    r1 = _ground(cfg, b)
    lam = _lambda(cfg, r1.lambda_est)
    sw = cfg.section("sweep")
    res = C.mu_sweep(b, lam, sw["mu_grid"], tol=tol, seed=seed, init=r1.eigenfunction,
                     workers=sw["workers"])
    _sweep_csv(out / "sweep.csv", res)
    summ = {"lambda": lam, "lambda1": r1.lambda_est, **res.fitted}
    ok = not any(r.get("flagged") for r in res.rows)
    return summ, {"mu_sweep": _jsonable(res.rows)}, {}, ["sweep.csv"], ok


def cmd_s_sweep(cfg, out):
    tol, _, seed = _solver(cfg)
    sw = cfg.section("sweep")
    coupling = cfg.section("mesh").get("coupling", "quadratic")
    res = C.s_stability_sweep(cfg.domain, cfg.section("params")["p"], cfg.potential, sw["s_grid"],
                              coupling=coupling, tol=tol, seed=seed, workers=sw["workers"])
    _sweep_csv(out / "sweep.csv", res)
    ok = not any(r.get("flagged") for r in res.rows)
    return dict(res.fitted), {"s_sweep": _jsonable(res.rows)}, {}, ["sweep.csv"], ok


def cmd_bbm(cfg, out):
    sw = cfg.section("sweep")
    coupling = cfg.section("mesh").get("coupling", "quadratic")
    summ, reports, files = {}, {}, []
    for p in sw["p_values"]:
        res = C.bbm_check(float(p), sw["s_grid"], domain=cfg.domain, coupling=coupling,
                          workers=sw["workers"])
        name = f"bbm_p{_fmt(float(p))}.csv"
        _sweep_csv(out / name, res)
        files.append(name)
        summ[f"p={_fmt(float(p))}"] = res.fitted
        reports[name] = _jsonable(res.rows)
    return summ, reports, {}, files, True


def cmd_report(cfg_path, out, seed):
    """Re-run the subcommand recorded in a manifest and compare summaries."""
    manifest = json.loads(Path(cfg_path).read_text(encoding="utf-8"))
    for key in ("subcommand", "config", "summary"):
        if key not in manifest:
            raise ValidationError(f"manifest field {key!r}: missing")
    if manifest["subcommand"] == "report":
        raise ValidationError("manifest field 'subcommand': cannot report on a report")
    cfg = RunConfig.from_dict(manifest["config"])
    if seed is not None:
        cfg = cfg.with_seed(seed)
    summ, *_ = HANDLERS[manifest["subcommand"]](cfg, out)
    summ = _jsonable(summ)
    same = json.dumps(summ, sort_keys=True) == json.dumps(manifest["summary"], sort_keys=True)
    return {"reproduced": same, "source_subcommand": manifest["subcommand"],
            "source_config_sha256": manifest.get("config_sha256"), "summary": summ}, same


HANDLERS = {
    "lambda1": cmd_lambda1,
    "lambda2": cmd_lambda2,
    "oracle": cmd_oracle,
    "nehari": cmd_nehari,
    "certify": cmd_certify,
    "mu-sweep": cmd_mu_sweep,
    "s-sweep": cmd_s_sweep,
    "bbm": cmd_bbm,
}


# -- entry point ------------------------------------------------------------------

def _parser():
    ap = argparse.ArgumentParser(prog="fracpq", description="Fractional p&q eigenvalue solvers on 1D domains.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON config (or a manifest, for 'report'); defaults built in")
    ap.add_argument("--out", help="output directory (overrides output.directory)")
    ap.add_argument("--seed", type=int, help="overrides solver.seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _write_manifest(out, manifest):
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(subcommand: str, config_path=None, out_dir=None, seed=None) -> int:
    t0 = time.perf_counter()
    manifest = {"subcommand": subcommand, "version": __version__}
    out = None
    try:
        if subcommand == "report":
            if config_path is None:
                raise ValidationError("report needs --config pointing at a manifest.json")
            out = Path(out_dir or Path(config_path).parent / "report")
            out.mkdir(parents=True, exist_ok=True)
            body, same = cmd_report(config_path, out, seed)
            manifest.update(body, status="ok" if same else "mismatch",
                            wall_time=time.perf_counter() - t0)
            _write_manifest(out, manifest)
            print(json.dumps(_jsonable(body["summary"]), sort_keys=True))
            return EXIT_OK if same else EXIT_NONCONVERGED
        cfg = RunConfig.load(config_path) if config_path else RunConfig.from_dict({})
        if seed is not None:
            cfg = cfg.with_seed(seed)
        out = Path(out_dir or cfg.section("output")["directory"])
        out.mkdir(parents=True, exist_ok=True)
        manifest.update(config=cfg.raw, config_sha256=cfg.sha256(), seed=cfg.seed)
        pr = cfg.section("params")
        manifest["subcritical"] = pr["p"] * pr["s"] < 1.0
        summ, reports, certs, files, ok = HANDLERS[subcommand](cfg, out)
        manifest.update(summary=summ, reports=reports, certificates=certs, files=files,
                        status="ok" if ok else "nonconverged", wall_time=time.perf_counter() - t0)
        _write_manifest(out, manifest)
        print(json.dumps(_jsonable(summ), sort_keys=True))
        return EXIT_OK if ok else EXIT_NONCONVERGED
    except ValidationError as exc:
        print(f"fracpq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ConvergenceError, FracPQError) as exc:
        print(f"fracpq: {exc}", file=sys.stderr)
        if out is not None:
            rep = getattr(exc, "report", None)
            if rep is not None and getattr(rep, "trace", None):
                write_csv(out / "trace.csv", ["iter", "quotient", "residual"], rep.trace)
            manifest.update(status="nonconverged", error=str(exc), wall_time=time.perf_counter() - t0)
            _write_manifest(out, manifest)
        return EXIT_NONCONVERGED
    except (OSError, json.JSONDecodeError) as exc:
        print(f"fracpq: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return run(args.subcommand, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
