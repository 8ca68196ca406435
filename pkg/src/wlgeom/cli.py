"""``wlgeom`` command line: generate, wl-test, sample, appendixb, floor.

Exit codes: 0 success (WL verdicts are never failures), 1 certification
failure in ``generate``, 2 invalid input or any other operational error.
Any option can also come from ``--config FILE`` (YAML or JSON, keyed by
subcommand); flags given on the command line win.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click
import numpy as np
import yaml

from . import __version__
from .approximator import KAPPA, ZETA, incompatibility_check
from .counterexamples import (
    DEFAULT_RANGES,
    DegeneratePair,
    DegenerateParams,
    ExtraPair,
    WATER_ENERGIES,
    builtin_catalog,
    certify_pair,
    error_floor,
    fold_pair,
    make_degenerate_pair,
    periodize as periodize_pair,
    sample_manifold,
)
from .distinctness import congruent
from .errors import WlGeomError
from .graph_wl import NeighborhoodPolicy, Quantizer, wl_compare
from .xyz import read_xyz, write_xyz

REPORT_SCHEMA = "wlgeom.report/1"
EXIT_CERTIFICATION = 1
EXIT_INVALID = 2
THREADS_ENV = "WLGEOM_THREADS"


class Failure(click.ClickException):
    exit_code = EXIT_INVALID


def _report(command, config, results, started=None):
    ctx = click.get_current_context(silent=True)
    params = {} if ctx is None else {k: list(v) if isinstance(v, tuple) else v for k, v in ctx.params.items()}
    rep = {
        "schema": REPORT_SCHEMA,
        "command": {"name": command, "params": params},
        "config": dict(config, tool_version=__version__),
        "results": results,
    }
    if started is not None:
        rep["timing_s"] = round(time.perf_counter() - started, 6)
    return rep


def _dump(report, path):
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text)
    return text


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              help="YAML/JSON file with per-subcommand defaults.")
@click.pass_context
def main(ctx, config_path):
    """Distance-WL degeneracy toolkit for 3D point clouds."""
    if config_path:
        data = yaml.safe_load(Path(config_path).read_text()) or {}
        if not isinstance(data, dict):
            raise Failure("config file must hold a mapping of subcommand -> options")
        ctx.default_map = {
            cmd: {k.replace("-", "_"): v for k, v in (opts or {}).items()} for cmd, opts in data.items()
        }


def _parse_extra(spec: str) -> ExtraPair:
    try:
        kind, a, b, label = spec.split(":")
        return ExtraPair(kind.upper(), float(a), float(b), label)
    except (ValueError, WlGeomError) as exc:
        raise Failure(f"bad --extra {spec!r}: expected KIND:A:B:LABEL ({exc})")


def _catalog_report(entry, quantizer):
    from .distinctness import global_distance_multiset_equal, per_node_distance_multisets_equal

    a, b = entry.plus, entry.minus
    out = {"name": entry.name, "description": entry.description}
    if a.is_periodic:
        out["certificate"] = certify_pair(DegeneratePair(a, b, entry.params), quantizer=quantizer).to_dict()
        return out
    policy = NeighborhoodPolicy.fully_connected()
    cmp, fa, fb = wl_compare(a, b, policy, quantizer)
    ang, _, _ = wl_compare(a, b, policy, quantizer, angular=True)
    out.update(
        wl_equal=cmp.equal,
        wl_first_divergent_iteration=cmp.first_divergent_iteration,
        angular_equal=ang.equal,
        angular_first_divergent_iteration=ang.first_divergent_iteration,
        global_distances_equal=global_distance_multiset_equal(a, b),
        per_node_distances_equal=per_node_distance_multisets_equal(a, b),
        congruence=congruent(a, b).to_dict(),
        hash_classes=[fa.n_classes, fb.n_classes],
    )
    return out


@main.command()
@click.option("--p", "p", type=float, default=4.0, show_default=True)
@click.option("--cy", type=float, default=0.0, show_default=True)
@click.option("--cz", type=float, default=1.0, show_default=True)
@click.option("--wy", type=float, default=1.0, show_default=True)
@click.option("--wz", type=float, default=2.0, show_default=True)
@click.option("--vx", type=float, default=0.5, show_default=True)
@click.option("--vy", type=float, default=3.0, show_default=True)
@click.option("--labels", default="C,W,V", show_default=True, help="Species for the C,W,V classes.")
@click.option("--extra", "extras", multiple=True, help="Extra pair KIND:A:B:LABEL, KIND in {W,V}.")
@click.option("--fold", "fold", type=int, default=None, help="Fold P repeat units into a finite pair.")
@click.option("--periodize", default=None, help="Added periods 'py,pz' (empty entry keeps an axis open).")
@click.option("--catalog", default=None, help="Write a builtin catalog pair instead.")
@click.option("--bin-width", type=float, default=1e-9, show_default=True)
@click.option("--unchecked", is_flag=True, help="Skip certification.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=".", show_default=True)
@click.option("--prefix", default="pair", show_default=True)
@click.option("--report", "report_path", default=None, help="JSON report path (default OUT_DIR/PREFIX_report.json).")
def generate(p, cy, cz, wy, wz, vx, vy, labels, extras, fold, periodize, catalog, bin_width, unchecked,
             out_dir, prefix, report_path):
    """Write a degenerate pair (A+, A-) as extended-XYZ plus a JSON report."""
    started = time.perf_counter()
    quantizer = Quantizer(bin_width=bin_width)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = report_path or out / f"{prefix}_report.json"
    config = {"quantizer": quantizer.to_dict()}
    try:
        if catalog:
            cat = builtin_catalog()
            if catalog not in cat:
                raise Failure(f"unknown catalog entry {catalog!r}; choose from {sorted(cat)}")
            entry = cat[catalog]
            plus, minus = entry.plus, entry.minus
            results = {"catalog": _catalog_report(entry, quantizer)}
            passed = True
        else:
            lab = tuple(labels.split(","))
            params = DegenerateParams(p, cy, cz, wy, wz, vx, vy, labels=lab,
                                      extras=tuple(_parse_extra(e) for e in extras))
            config["params"] = params.to_dict()
            pair = make_degenerate_pair(params, unchecked=True)
            if periodize:
                parts = [s.strip() for s in periodize.split(",")]
                if len(parts) != 2:
                    raise Failure("--periodize expects 'py,pz'")
                py, pz = (float(s) if s else None for s in parts)
                pair = periodize_pair(pair, py, pz)
                config["periodize"] = [py, pz]
            if fold:
                if periodize:
                    raise Failure("--fold and --periodize are mutually exclusive")
                fp, fm = fold_pair(pair, fold)
                pair = DegeneratePair(fp, fm, params, f"folded P={fold}")
                config["fold"] = fold
            plus, minus = pair.plus, pair.minus
            if unchecked:
                results = {"certificate": None}
                passed = True
            else:
                cert = certify_pair(pair, quantizer=quantizer)
                results = {"certificate": cert.to_dict(),
                           "wl_equal": all(cert.wl_equal.values()),
                           "congruent": cert.congruent}
                passed = cert.passed
    except WlGeomError as exc:
        raise Failure(str(exc))
    paths = [out / f"{prefix}_plus.xyz", out / f"{prefix}_minus.xyz"]
    write_xyz(plus, paths[0])
    write_xyz(minus, paths[1])
    results["files"] = [str(x) for x in paths]
    results["passed"] = passed
    _dump(_report("generate", config, results, started), report_path)
    click.echo(f"wrote {paths[0]} {paths[1]} report={report_path} certification={'PASS' if passed else 'FAIL'}")
    if not passed:
        sys.exit(EXIT_CERTIFICATION)




@main.command("wl-test")
@click.argument("first", type=click.Path(exists=True, dir_okay=False))
@click.argument("second", type=click.Path(exists=True, dir_okay=False))
@click.option("--cutoff", type=float, default=None, help="Cutoff radius in Å.")
@click.option("--knn", type=int, default=None, help="k nearest neighbors (ties included).")
@click.option("--full", is_flag=True, help="Fully connected graph (finite clouds only).")
@click.option("--bin-width", type=float, default=1e-9, show_default=True)
@click.option("--tolerant", type=float, default=None, help="Use tolerant multiset mode with this tol (Å²).")
@click.option("--angular", is_flag=True, help="Angular (neighbor-pair) refinement.")
@click.option("--iters", type=int, default=None, help="Maximum refinement iterations.")
@click.option("--report", "report_path", default=None)
def wl_test(first, second, cutoff, knn, full, bin_width, tolerant, angular, iters, report_path):
    """Compare two structure files with the distance (or angular) WL test."""
    started = time.perf_counter()
    chosen = [x for x in (cutoff is not None, knn is not None, full) if x]
    if len(chosen) != 1:
        raise Failure("choose exactly one of --cutoff, --knn, --full")
    try:
        if cutoff is not None:
            policy = NeighborhoodPolicy.cutoff(cutoff)
        elif knn is not None:
            policy = NeighborhoodPolicy.k_nearest(knn)
        else:
            policy = NeighborhoodPolicy.fully_connected()
        quantizer = Quantizer(bin_width=bin_width) if tolerant is None else Quantizer(
            bin_width=bin_width, mode="tolerant_multiset", tol=tolerant)
        a, b = read_xyz(first), read_xyz(second)
        cmp, fa, fb = wl_compare(a, b, policy, quantizer, iters, angular=angular)
    except WlGeomError as exc:
        raise Failure(str(exc))
    verdict = "EQUAL" if cmp.equal else "DISTINCT"
    results = {
        "verdict": verdict,
        "first_divergent_iteration": cmp.first_divergent_iteration,
        "iterations_compared": cmp.iterations_compared,
        "hash_classes": [fa.n_classes, fb.n_classes],
        "converged": [fa.converged, fb.converged],
        "files": [first, second],
    }
    config = {"policy": policy.to_dict(), "quantizer": quantizer.to_dict(), "angular": angular, "max_iters": iters}
    _dump(_report("wl-test", config, results, started), report_path)
    kind = "angular" if angular else "distance"
    if cmp.equal:
        click.echo(f"EQUAL ({kind} WL, {cmp.iterations_compared} iterations compared)")
    else:
        click.echo(f"DISTINCT at iteration {cmp.first_divergent_iteration} ({kind} WL)")


def _parse_ranges(spec):
    if not spec:
        return {}
    if isinstance(spec, dict):
        return {k: tuple(map(float, v)) for k, v in spec.items()}
    out = {}
    for part in spec.split(","):
        try:
            key, rng = part.split("=")
            lo, hi = rng.split(":")
            out[key.strip()] = (float(lo), float(hi))
        except ValueError:
            raise Failure(f"bad --ranges entry {part!r}; expected name=lo:hi")
    return out


@main.command()
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--ranges", default=None, help="Comma list name=lo:hi overriding the defaults.")
@click.option("--extras", "n_extras", type=int, default=0, show_default=True)
@click.option("--bin-width", type=float, default=1e-9, show_default=True)
@click.option("--max-retries", type=int, default=200, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
def sample(count, seed, ranges, n_extras, bin_width, max_retries, out_dir):
    """Sample certified degenerate pairs from the parameter manifold."""
    started = time.perf_counter()
    quantizer = Quantizer(bin_width=bin_width)
    workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    rng = _parse_ranges(ranges)
    try:
        params = sample_manifold(count, seed, rng, n_extras=n_extras, quantizer=quantizer,
                                 max_retries=max_retries, workers=workers)
    except WlGeomError as exc:
        detail = json.dumps(getattr(exc, "diagnostics", {}), sort_keys=True)
        raise Failure(f"{exc} diagnostics={detail}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for k, prm in enumerate(params):
        pair = make_degenerate_pair(prm, unchecked=True)
        names = [out / f"sample_{k:04d}_plus.xyz", out / f"sample_{k:04d}_minus.xyz"]
        write_xyz(pair.plus, names[0])
        write_xyz(pair.minus, names[1])
        files.append([n.name for n in names])
    stats = {}
    for key in DegenerateParams.FREE:
        vals = np.array([getattr(p, key) for p in params])
        stats[key] = {"min": float(vals.min()), "max": float(vals.max()), "mean": float(vals.mean())}
    merged = dict(DEFAULT_RANGES)
    merged.update(rng)
    config = {"seed": seed, "count": count, "extras": n_extras, "ranges": {k: list(v) for k, v in merged.items()},
              "quantizer": quantizer.to_dict(), "max_retries": max_retries}
    results = {
        "certified": len(params),
        "requested": count,
        "manifold_dimension": params[0].dimension,
        "parameter_stats": stats,
        "params": [p.to_dict() for p in params],
        "files": files,
    }
    # no timing in the file: identical inputs must give byte-identical output
    _dump(_report("sample", config, results), out / "summary.json")
    click.echo(f"{len(params)}/{count} certified pairs written to {out} "
               f"({time.perf_counter() - started:.2f} s)")


@main.command()
@click.option("--trials", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--report", "report_path", default=None)
def appendixb(trials, seed, report_path):
    """Check the Gram-multiset tensor form against the eigenvalue target."""
    started = time.perf_counter()
    try:
        cert = incompatibility_check(trials, seed)
    except WlGeomError as exc:
        raise Failure(str(exc))
    resid = cert["target_residual_vs_192I"]
    click.echo(f"target difference = 192·I (residual {resid:.3g} {'≤' if resid <= 1e-8 else '>'} 1e-8)")
    click.echo(f"zeta    = ({ZETA[0]}, {list(ZETA[1])})")
    for k, (x, ms) in KAPPA.items():
        click.echo(f"kappa_{k} = ({x}, {list(ms)})")
    audit = cert["audit"]
    click.echo(f"surviving terms: f0 {audit['f0']['surviving_terms']}/{audit['f0']['terms']}, "
               f"f1 {audit['f1']['surviving_terms']}/{audit['f1']['terms']}, "
               f"f2 {audit['f2']['surviving_terms']}/{audit['f2']['terms']}")
    click.echo(f"{trials} trials: max |predicted diagonal| = {cert['max_abs_predicted_diagonal']:.3g}; "
               f"certificate {'PASS' if cert['passed'] else 'FAIL'}")
    if report_path:
        cert = dict(cert)
        cert.pop("per_trial")
        _dump(_report("appendixb", {"trials": trials, "seed": seed}, cert, started), report_path)


def _read_energies(path):
    text = Path(path).read_text()
    if path.endswith(".json"):
        data = json.loads(text or "[]")
        return [tuple(map(float, pair)) for pair in data]
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise Failure(f"{path}:{lineno}: expected 'e_plus e_minus'")
        pairs.append((float(parts[0]), float(parts[1])))
    return pairs


@main.command()
@click.option("--energies", "energies_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Text file with one 'e_plus e_minus' pair (eV) per line, or a JSON list.")
@click.option("--builtin", is_flag=True, help="Use the three water-tetramer energy pairs.")
def floor(energies_path, builtin):
    """Lowest RMSE reachable by a model that cannot tell A+ from A-."""
    if builtin == bool(energies_path):
        raise Failure("give exactly one of --energies or --builtin")
    pairs = list(WATER_ENERGIES) if builtin else _read_energies(energies_path)
    try:
        value = error_floor(pairs)
    except WlGeomError as exc:
        raise Failure(str(exc))
    click.echo("floor = sqrt(mean(((e_plus - e_minus) / 2)^2)) over the pairs")
    click.echo(f"{value:.3f} eV ({len(pairs)} pairs)")


if __name__ == "__main__":  # pragma: no cover
    main()
