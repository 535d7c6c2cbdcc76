"""Batch experiment runner with JSON configs and machine-readable reports.

Subcommands: census | flow | spectrum | covers | pinch | morse | validate.
Each run writes report.json (every numeric claim tagged with a stable
anchor string) plus CSV side files into the output directory.  Exit
status: 0 all checks pass, 2 a required numeric check failed, 3 the
configuration is invalid.  Reports are byte-identical across reruns with
the same config and seeds except for the timestamp field.  The only
environment knob is SPHERELAB_THREADS (thread count for spatial queries).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from datetime import datetime, timezone

import numpy as np

from . import covers as covers_mod
from . import curvature as curvature_mod
from . import energy as energy_mod
from . import flow as flow_mod
from . import spectrum as spectrum_mod
from . import topology as topology_mod
from .errors import ConfigError
from .sphere_mesh import build_icosphere, mesh_json_doc, mesh_to_obj

EXIT_OK = 0
EXIT_NUMERIC = 2
EXIT_CONFIG = 3

KINDS = ("census", "flow", "spectrum", "covers", "pinch", "morse")


# -- config validation -----------------------------------------------------------

def _require(cfg, field, types, diagnostics, predicate=None, note=""):
    if field not in cfg:
        diagnostics.append(f"missing required field '{field}' {note}".strip())
        return None
    value = cfg[field]
    if not isinstance(value, types):
        diagnostics.append(
            f"field '{field}' has type {type(value).__name__}, expected "
            f"{'/'.join(t.__name__ for t in types)}"
        )
        return None
    if predicate is not None and not predicate(value):
        diagnostics.append(f"field '{field}' value {value!r} out of range {note}".strip())
        return None
    return value


def validate_config(cfg: dict):
    """Schema diagnostics for an experiment config; empty list means OK."""
    diags = []
    if not isinstance(cfg, dict):
        return ["config document must be a JSON object"]
    kind = cfg.get("kind")
    if kind not in KINDS:
        diags.append(f"field 'kind' must be one of {KINDS}, got {kind!r}")
        return diags
    if "level" in cfg:
        _require(cfg, "level", (int,), diags, lambda v: 0 <= v <= 8,
                 note="(mesh level in [0, 8])")
    if "n" in cfg:
        _require(cfg, "n", (int,), diags, lambda v: v >= 2, note="(target n >= 2)")
    if "seed" in cfg:
        _require(cfg, "seed", (int,), diags)
    if kind == "census":
        _require(cfg, "m", (int,), diags, lambda v: v >= 1)
        _require(cfg, "N_min", (int,), diags, lambda v: v >= 2)
        _require(cfg, "N_max", (int,), diags, lambda v: v <= 40)
        if not diags and cfg["N_min"] > cfg["N_max"]:
            diags.append("'N_min' exceeds 'N_max'")
    elif kind == "flow":
        _require(cfg, "level", (int,), diags, lambda v: 0 <= v <= 8)
        _require(cfg, "n", (int,), diags, lambda v: v >= 2)
        sched = _require(cfg, "alpha_schedule", (list,), diags,
                         lambda v: len(v) > 0, note="(nonempty list)")
        if sched is not None and not all(
            isinstance(a, (int, float)) and a >= 1 for a in sched
        ):
            diags.append("'alpha_schedule' entries must be numbers >= 1")
        start = cfg.get("start", "distorted_equator")
        if start not in ("distorted_equator", "perturbed_constant", "equator"):
            diags.append(f"unknown start map {start!r}")
    elif kind == "spectrum":
        _require(cfg, "level", (int,), diags, lambda v: 0 <= v <= 8)
        _require(cfg, "n", (int,), diags, lambda v: v >= 3)
        if "alpha" in cfg:
            _require(cfg, "alpha", (int, float), diags, lambda v: v >= 1)
    elif kind == "covers":
        _require(cfg, "level", (int,), diags, lambda v: 0 <= v <= 8)
        _require(cfg, "n", (int,), diags, lambda v: v >= 3)
        _require(cfg, "degree", (int,), diags, lambda v: 1 <= v <= 6)
    elif kind == "pinch":
        _require(cfg, "delta", (int, float), diags, lambda v: 0 < v <= 1)
        _require(cfg, "samples", (int,), diags, lambda v: v >= 1)
        _require(cfg, "n", (int,), diags, lambda v: v >= 4)
    elif kind == "morse":
        if "complex_path" in cfg:
            _require(cfg, "complex_path", (str,), diags)
        else:
            _require(cfg, "n", (int,), diags, lambda v: v >= 4)
    return diags


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
        cfg = json.loads(text)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"config parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        )
    diags = validate_config(cfg)
    if diags:
        raise ConfigError("invalid configuration", diagnostics=diags)
    return cfg


# -- report helpers -----------------------------------------------------------------

class Report:
    def __init__(self, kind, cfg):
        self.doc = {
            "kind": kind,
            "config": cfg,
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "checks": [],
            "metrics": {},
        }

    def metric(self, name, value, anchor):
        self.doc["metrics"][name] = {"value": value, "anchor": anchor}

    def check(self, name, passed, anchor, value=None, bound=None, required=True):
        self.doc["checks"].append(
            {
                "name": name,
                "passed": bool(passed),
                "anchor": anchor,
                "value": value,
                "bound": bound,
                "required": required,
            }
        )

    @property
    def all_passed(self):
        return all(c["passed"] for c in self.doc["checks"] if c["required"])

    def write(self, out_dir):
        path = os.path.join(out_dir, "report.json")
        with open(path, "w") as fh:
            json.dump(self.doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _write_csv(out_dir, name, header, rows):
    path = os.path.join(out_dir, name)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _maybe_export_mesh(cfg, mesh, out_dir):
    if cfg.get("export_mesh"):
        mesh_to_obj(mesh, os.path.join(out_dir, "mesh.obj"))
        with open(os.path.join(out_dir, "mesh.json"), "w") as fh:
            fh.write(mesh_json_doc(mesh))
            fh.write("\n")


# -- experiment implementations ------------------------------------------------------

def run_census(cfg, out_dir, report):
    m = cfg["m"]
    rows = []
    all_match = True
    for N in range(cfg["N_min"], cfg["N_max"] + 1):
        census = topology_mod.schubert_cell_counts(m, N)
        oracle = topology_mod.gaussian_binomial(m, N)
        match = census.counts == oracle
        all_match &= match
        palin = census.counts == tuple(reversed(census.counts))
        total_ok = sum(census.counts) == math.comb(N, m)
        report.check(f"census_match_N{N}", match,
                     "census.counts_equal_q_binomial")
        report.check(f"census_palindromic_N{N}", palin, "census.palindromic")
        report.check(f"census_total_N{N}", total_ok, "census.total_is_binomial")
        rows.extend((N, k, c) for k, c in census.to_csv_rows())
    _write_csv(out_dir, "census.csv", ("N", "k", "count"), rows)
    report.metric("m", m, "census.plane_dimension")


def run_spectrum(cfg, out_dir, report):
    level, n = cfg["level"], cfg["n"]
    alpha = float(cfg.get("alpha", 1.0))
    mesh = build_icosphere(level)
    sphere_map = energy_mod.equator_map(mesh, n)
    tau = cfg.get("tau")
    if tau is None:
        tau = spectrum_mod.calibrate_tau(mesh, n, alpha=1.0)
    idx_exp, nul_exp = spectrum_mod.expected_equator_counts(n)
    k = cfg.get("k", idx_exp + nul_exp + 8)
    pencil = spectrum_mod.assemble_second_variation(sphere_map, alpha)
    rep = spectrum_mod.morse_index_nullity(pencil, k, tau)
    report.metric("tau", tau, "spectrum.calibrated_null_threshold")
    report.metric("index", rep.index, "spectrum.morse_index")
    report.metric("nullity", rep.nullity, "spectrum.nullity")
    report.metric("leading_eigenvalue", float(rep.eigenvalues[0]),
                  "spectrum.leading_negative_eigenvalue")
    report.check("index_equals_n_minus_2", rep.index == n - 2,
                 "spectrum.totally_geodesic_index", value=rep.index, bound=n - 2)
    report.check("nullity_matches_orbit_dimension", rep.nullity == nul_exp,
                 "spectrum.totally_geodesic_nullity", value=rep.nullity,
                 bound=nul_exp)
    report.check("leading_eigenvalue_near_minus_2",
                 abs(rep.eigenvalues[0] + 2.0) <= 0.1,
                 "spectrum.leading_eigenvalue_value",
                 value=float(rep.eigenvalues[0]), bound=-2.0)
    report.check("eigensolver_converged", rep.converged,
                 "spectrum.solver_converged")
    _write_csv(out_dir, "spectra.csv", ("rank", "eigenvalue", "classification"),
               rep.to_rows())
    _maybe_export_mesh(cfg, mesh, out_dir)


def run_covers(cfg, out_dir, report):
    level, n, degree = cfg["level"], cfg["n"], cfg["degree"]
    mesh = build_icosphere(level)
    g = covers_mod.RationalMap.power(degree)
    h = covers_mod.EquatorTargetMap(n)
    f = covers_mod.compose_cover(h, g, mesh)
    energy = energy_mod.dirichlet_energy(f)
    res = covers_mod.induced_metric_lambda1(f)
    area = energy  # conformal: area equals energy
    report.metric("energy", energy, "covers.cover_energy")
    report.metric("lambda1", res.lambda1, "covers.pullback_first_eigenvalue")
    report.metric("floor_activations", res.floor_activations,
                  "covers.conformal_floor_activations")
    report.check("energy_multiplicative",
                 abs(energy - degree * 4.0 * math.pi) <= 0.02 * degree * 4 * math.pi,
                 "covers.energy_equals_degree_times_area",
                 value=energy, bound=degree * 4 * math.pi)
    report.check("yang_yau", res.lambda1 * area <= 8.0 * math.pi * 1.05,
                 "covers.first_eigenvalue_area_bound",
                 value=res.lambda1 * area, bound=8 * math.pi * 1.05)
    if degree == 2:
        report.check("double_cover_lambda1", res.lambda1 <= 1.05,
                     "covers.double_cover_eigenvalue_bound",
                     value=res.lambda1, bound=1.05)
        normal_index = covers_mod.double_cover_normal_index(f, n)
        report.metric("normal_index", normal_index, "covers.normal_morse_index")
        report.check("normal_index_bound", normal_index >= 2 * (n - 2),
                     "covers.double_cover_index_bound",
                     value=normal_index, bound=2 * (n - 2))
    bps = covers_mod.branch_points(g)
    total_mult = sum(mult for _, mult in bps)
    report.check("riemann_hurwitz", total_mult == 2 * degree - 2,
                 "covers.total_branching", value=total_mult,
                 bound=2 * degree - 2)
    with open(os.path.join(out_dir, "rational_map.json"), "w") as fh:
        json.dump(g.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _maybe_export_mesh(cfg, mesh, out_dir)


def run_pinch(cfg, out_dir, report):
    n = cfg["n"]
    delta = float(cfg["delta"])
    samples = cfg["samples"]
    seed = cfg.get("seed", 0)
    rng = np.random.default_rng(seed)
    op = curvature_mod.pinched_operator(n, delta, rng)
    rep = curvature_mod.verify_pinch_implication(op, delta, samples, seed)
    for key, value in rep.to_dict().items():
        report.metric(key, value, f"pinch.{key}")
    report.check("hypotheses_hold", rep.hypothesis_satisfied,
                 "pinch.pretests_passed")
    report.check("no_violations", rep.violations == 0,
                 "pinch.half_isotropic_band", value=rep.violations, bound=0)
    lower, upper = curvature_mod.pinch_bounds(delta)
    report.metric("band", [lower, upper], "pinch.curvature_band")


def run_morse(cfg, out_dir, report):
    if "complex_path" in cfg:
        with open(cfg["complex_path"]) as fh:
            complex_ = topology_mod.complex_from_json(fh.read())
        n = cfg.get("n")
    else:
        n = cfg["n"]
        complex_ = topology_mod.desk_model(n, with_b_generators=True)
    betti = topology_mod.homology_z2(complex_)
    report.metric("betti", {str(k): v for k, v in sorted(betti.items())},
                  "morse.mod2_betti_numbers")
    a_complex, b_complex, split_report = topology_mod.split_by_action(complex_, n=n)
    report.check("a_block_closed", True, "morse.trivial_action_subcomplex")
    if split_report is not None:
        ok = all(row["satisfied"] for row in split_report.values())
        report.check("a_counts_meet_predictions", ok,
                     "morse.minimum_count_inequalities")
        report.metric("split", {str(k): v for k, v in sorted(split_report.items())},
                      "morse.per_degree_counts")
    if n is not None:
        census = topology_mod.schubert_cell_counts(3, n + 1)
        window_ok = all(
            betti.get(k, 0) == census[k - n + 2] for k in range(n - 2, 2 * n - 4)
        )
        report.check("betti_window_matches_census", window_ok,
                     "morse.low_degree_homology")
    with open(os.path.join(out_dir, "complex.json"), "w") as fh:
        fh.write(topology_mod.complex_to_json(complex_))
        fh.write("\n")


def run_flow(cfg, out_dir, report):
    level, n = cfg["level"], cfg["n"]
    schedule = [float(a) for a in cfg["alpha_schedule"]]
    seed = cfg.get("seed", 0)
    mesh = build_icosphere(level)
    rng = np.random.default_rng(seed)
    start = cfg.get("start", "distorted_equator")
    if start == "perturbed_constant":
        map0 = energy_mod.perturbed_constant_map(mesh, n, rng)
    elif start == "equator":
        map0 = energy_mod.equator_map(mesh, n)
    else:
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        map0 = energy_mod.dilated_equator_map(mesh, n, 0.4, axis=axis)
    config = flow_mod.FlowConfig(
        alpha=schedule[0],
        max_iterations=cfg.get("max_iterations", 4000),
        grad_tol=cfg.get("grad_tol", 1e-3),
        preconditioned=cfg.get("preconditioned", True),
        seed=seed,
    )
    rec0 = flow_mod.descend(map0, config)
    result = flow_mod.continue_in_alpha(rec0, schedule, config)
    telemetry = []
    for stage, rec in enumerate(result.records):
        for it, (xn, dn, dfx) in enumerate(rec.pseudogradient_log):
            e_alpha = rec.energy_log[it + 1] if it + 1 < len(rec.energy_log) else ""
            step = rec.step_log[it] if it < len(rec.step_log) else ""
            telemetry.append((stage, it, rec.alpha, e_alpha, dn, step, xn, dfx))
    _write_csv(out_dir, "telemetry.csv",
               ("stage", "iteration", "alpha", "alpha_energy", "grad_norm",
                "step", "direction_norm", "slope"), telemetry)
    if result.records:
        with open(os.path.join(out_dir, "critical_record.json"), "w") as fh:
            json.dump(result.records[-1].to_json_dict(), fh, indent=2,
                      sort_keys=True)
            fh.write("\n")
    report.metric("stages_completed", len(result.records), "flow.stages")
    report.check("all_stages_converged", result.succeeded,
                 "flow.continuation_converged")
    if result.records:
        last = result.records[-1]
        report.metric("final_energy", last.energy, "flow.final_energy")
        report.metric("final_alpha_energy", last.alpha_energy,
                      "flow.final_alpha_energy")
        report.metric("final_center_of_mass", last.center_of_mass_norm,
                      "flow.final_center_of_mass")
        report.metric("final_harmonic_residual", last.harmonic_residual,
                      "flow.final_harmonic_residual")
        scale = energy_mod.psi_alpha(
            energy_mod.mean_density_area_one(last.map), last.alpha
        )
        report.check("center_of_mass_vanishes",
                     last.center_of_mass_norm <= 1e-4 * scale,
                     "flow.center_of_mass_criticality",
                     value=last.center_of_mass_norm, bound=1e-4 * scale)
        rows = []
        for rec in result.records:
            rows.append((rec.alpha, rec.energy, rec.alpha_energy, rec.grad_norm,
                         rec.iterations, rec.center_of_mass_norm,
                         rec.harmonic_residual))
        _write_csv(out_dir, "records.csv",
                   ("alpha", "energy", "alpha_energy", "grad_norm", "iterations",
                    "center_of_mass", "harmonic_residual"), rows)
    if cfg.get("semicontinuity_experiment"):
        exp = flow_mod.index_semicontinuity_report(
            result.records[-1].map if result.records else map0, schedule[-1]
        )
        report.metric("index_semicontinuity", exp,
                      "flow.bubble_index_experiment")
    _maybe_export_mesh(cfg, mesh, out_dir)


RUNNERS = {
    "census": run_census,
    "spectrum": run_spectrum,
    "covers": run_covers,
    "pinch": run_pinch,
    "morse": run_morse,
    "flow": run_flow,
}


def run(cfg: dict, out_dir: str) -> int:
    """Execute one experiment; returns the process exit status."""
    os.makedirs(out_dir, exist_ok=True)
    report = Report(cfg["kind"], cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        RUNNERS[cfg["kind"]](cfg, out_dir, report)
    report.write(out_dir)
    return EXIT_OK if report.all_passed else EXIT_NUMERIC


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spherelab",
        description="experiments on discretized minimal two-spheres",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS + ("validate",):
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="path to a JSON config")
        if kind != "validate":
            p.add_argument("--out", default=None, help="output directory")
            p.add_argument("--seed", type=int, default=None, help="seed override")
            p.add_argument("--level", type=int, default=None,
                           help="mesh level override")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        for diag in exc.diagnostics:
            print(f"  - {diag}", file=sys.stderr)
        return EXIT_CONFIG

    if args.command == "validate":
        print("OK")
        return EXIT_OK

    if cfg["kind"] != args.command:
        print(
            f"config error: config kind {cfg['kind']!r} does not match "
            f"subcommand {args.command!r}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.level is not None:
        cfg["level"] = args.level
        diags = validate_config(cfg)
        if diags:
            print("config error after overrides:", file=sys.stderr)
            for diag in diags:
                print(f"  - {diag}", file=sys.stderr)
            return EXIT_CONFIG
    out_dir = args.out or f"spherelab_{cfg['kind']}_out"
    try:
        status = run(cfg, out_dir)
    except Exception as exc:  # numeric failures propagate with module context
        print(f"numeric failure in {cfg['kind']}: {type(exc).__name__}: {exc}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"report written to {os.path.join(out_dir, 'report.json')}")
    return status


if __name__ == "__main__":
    sys.exit(main())
