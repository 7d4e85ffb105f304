"""
Command line tool to validate and run antenna design scenarios.
"""

import argparse
import logging
import sys
from typing import List

import numpy as np

from spheremimo import BaseSpheremimoException, ConfigError, ConvergenceError
from spheremimo import artifacts
from spheremimo.capacity import dipole_array_smcs, scenario_comparison
from spheremimo.channel import SphereQuadrature
from spheremimo.config import ConfigLoader, Scenario, ScenarioConfig, DEFAULT_SCENARIO
from spheremimo.modes import truncate
from spheremimo.optimizer import EpsilonRule, SequentialTrace, sequential_optimize
from spheremimo.util import ensure_dir

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_NUMERICAL_ERROR = 2

# Failures of a run that are reported with EXIT_NUMERICAL_ERROR.
NUMERICAL_ERRORS = (BaseSpheremimoException, np.linalg.LinAlgError, ArithmeticError, ValueError)


def main(argv=None) -> int:
    root_parser = argparse.ArgumentParser(
        description="Spherical mode expansion based MIMO antenna design."
    )
    root_parser.add_argument(
        "--verbose", "-v", action="count", default=0,
        help="Increase logging verbosity. Can be given multiple times."
    )
    root_subparsers = root_parser.add_subparsers(title="Subcommands", dest="subparser_name")

    # Command: run
    run_parser = root_subparsers.add_parser("run", help="Run a scenario and write tables and plots.")
    run_parser.set_defaults(func=main_run)
    run_parser.add_argument("config", nargs="?", help="Scenario file (default: bundled scenario).")
    run_parser.add_argument("--seed", type=int, help="Random seed of the channel realizations.")
    run_parser.add_argument("--out", help="Output directory.")
    run_parser.add_argument(
        "--rho", type=float, action="append",
        help="Tx/rx correlation of a convergence trace. Can be given multiple times."
    )
    run_parser.add_argument("--snr", help="Comma separated SNR grid in dB.")
    run_parser.add_argument("--no-plots", dest="plots", action="store_false", help="Only write CSV tables.")

    # Command: validate
    validate_parser = root_subparsers.add_parser("validate", help="Check a scenario without running it.")
    validate_parser.set_defaults(func=main_validate)
    validate_parser.add_argument("config", nargs="?", help="Scenario file (default: bundled scenario).")

    # Parse arguments and execute sub-command
    args = root_parser.parse_args(argv)
    logging.basicConfig(level={0: logging.WARN, 1: logging.INFO}.get(args.verbose, logging.DEBUG))
    _log.debug(repr(args))
    if not args.subparser_name:
        root_parser.print_help()
        return EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        _log.error(str(e))
        print(f"Invalid scenario: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


def _load_config(args) -> ScenarioConfig:
    cfg = ConfigLoader.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.set("scenario.seed", args.seed)
    if getattr(args, "out", None):
        cfg.set("scenario.output_dir", args.out)
    if getattr(args, "rho", None):
        cfg.set("optimizer.trace_rhos", ",".join(repr(r) for r in args.rho))
    if getattr(args, "snr", None):
        cfg.set("capacity.snr_db", args.snr)
    return cfg


def _convergence_trace(scenario: Scenario, rho: float) -> SequentialTrace:
    trunc = truncate(scenario.k, scenario.r0)
    quad = SphereQuadrature(64, 128)
    q_t = dipole_array_smcs(trunc, scenario.dipole_spacing, n_elements=scenario.n_tx, quad=quad)
    q_r = dipole_array_smcs(trunc, scenario.dipole_spacing, n_elements=scenario.n_rx, quad=quad)
    _, _, trace = sequential_optimize(
        scenario.profile(rho=rho), trunc, trunc, scenario.n_tx, scenario.n_rx, initial_qt=q_t, initial_qr=q_r,
        eps_rule=EpsilonRule(scenario.epsilon_fraction, scenario.epsilon_floor),
        quad=SphereQuadrature(scenario.n_theta, scenario.n_phi), max_iter=scenario.max_iter,
    )
    return trace


def main_run(args) -> int:
    scenario = Scenario.from_config(_load_config(args))
    out = ensure_dir(scenario.output_dir)
    _log.info(f"Running {scenario!r}, writing to {out}")

    traces: List[SequentialTrace] = []
    try:
        comparison = scenario_comparison(scenario)
        for rho in scenario.trace_rhos:
            if np.isclose(rho, scenario.rho):
                traces.append(comparison.trace)
            else:
                traces.append(_convergence_trace(scenario, rho))

        convergence = artifacts.convergence_table(traces)
        cuts = artifacts.directivity_cut_table(comparison.smcs)
        magnitudes, matrices = artifacts.smc_tables(comparison.smcs)
        currents = artifacts.current_table(comparison.grid, comparison.currents)
        tables = {
            "convergence.csv": convergence,
            "directivity_cuts.csv": cuts,
            "smc_magnitudes.csv": magnitudes,
            "smc_matrices.csv": matrices,
            "currents.csv": currents,
            "capacity.csv": comparison.capacity,
            "mode_correlation.csv": artifacts.mode_correlation_table(comparison.correlations),
            "eigenvalues.csv": artifacts.eigenvalue_table(comparison.correlations),
            "profile_map.csv": artifacts.profile_map_table(
                scenario.profile(), SphereQuadrature(scenario.n_theta, scenario.n_phi)
            ),
        }
        summary = artifacts.headline_summary(comparison, svd_tol=scenario.svd_tol)
    except ConvergenceError as e:
        if e.trace is not None:
            traces.append(e.trace)
        if traces:
            artifacts.write_csv(artifacts.convergence_table(traces), out / "convergence.csv")
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR
    except NUMERICAL_ERRORS as e:
        _log.error("Numerical failure", exc_info=True)
        if traces:
            artifacts.write_csv(artifacts.convergence_table(traces), out / "convergence.csv")
        print(f"Numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL_ERROR

    for name, df in tables.items():
        artifacts.write_csv(df, out / name)
    artifacts.write_summary(summary, out / "summary.txt")

    if args.plots:
        artifacts.plot_convergence(convergence, out / "convergence.svg")
        artifacts.plot_directivity_cuts(cuts, out / "directivity_cuts.svg")
        artifacts.plot_smc_magnitudes(magnitudes, out / "smc_magnitudes.svg")
        artifacts.plot_currents(currents, out / "currents.svg")
        artifacts.plot_capacity(comparison.capacity, out / "capacity.svg")
        artifacts.plot_profile_map(tables["profile_map.csv"], out / "profile_map.svg")
    return EXIT_OK


def main_validate(args) -> int:
    cfg = _load_config(args)
    scenario = Scenario.from_config(cfg)
    trunc = truncate(scenario.k, scenario.r0)
    print(f"Scenario sources: {', '.join(cfg.sources)}")
    print(f"r0 = {scenario.r0:.6g} wavelengths, k r0 = {trunc.kr0:.6g}")
    print(f"N = {trunc.N}, J = {trunc.J}")
    print(f"Plate corner radius = {scenario.plane_side / np.sqrt(2):.6g} wavelengths")
    print(f"Cells = {scenario.cells}, basis functions = {2 * scenario.cells}")
    for rho in [scenario.rho] + list(scenario.trace_rhos):
        smallest = np.linalg.eigvalsh(scenario.profile(rho=rho).covariance)[0]
        print(f"rho = {rho:g}: smallest covariance eigenvalue {smallest:.6g}")

    default = Scenario.from_config(ScenarioConfig().load_ini_file(DEFAULT_SCENARIO))
    for key, value in scenario.to_dict().items():
        if key in ("output_dir", "seed"):
            continue
        if not np.array_equal(np.asarray(value, dtype=object), np.asarray(default.to_dict()[key], dtype=object)):
            _log.warning(f"{key} = {value!r} deviates from the default scenario ({default.to_dict()[key]!r}).")
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
