#!/usr/bin/env python3
"""Command-line interface for the chemotaxis blow-up toolkit."""

import argparse
import logging
import os
import sys
import time
from dataclasses import asdict, replace
from datetime import datetime
from pathlib import Path
from typing import Optional

from .blowup_bound import evaluate_bound
from .config import (initial_data_from_config, parse_config, resolve_output_dir, resolve_threads,
                     serialize_config, skip_resource_check)
from .diagnostics import mass_drift
from .errors import ConfigError, GeometryError, SolverError
from .grid import make_grid, set_worker_threads
from .model import PhiCertificate, boundedness_certificate, phi_condition_bound, verify_phi_properties
from .output import DiagnosticsSink, SnapshotSink, write_json
from .provenance import provenance_record
from .resource_check import check_system_resources, estimate_snapshot_bytes, get_memory_info
from .solver import TERMINATION_SOLVER_FAILURE, run

EXIT_OK = 0
EXIT_IO_ERROR = 1
EXIT_CONFIG_ERROR = 2
EXIT_SOLVER_FAILURE = 3
EXIT_GEOMETRY_ERROR = 4

LOG_FILE_NAME = "chemotaxis_blowup.log"


def setup_logging(verbose=False, log_dir=None):
    """Set up logging configuration; with ``log_dir`` a log file is written there too."""
    level = logging.DEBUG if verbose else logging.INFO
    handlers = [logging.StreamHandler()]
    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        handlers.insert(0, logging.FileHandler(os.path.join(log_dir, LOG_FILE_NAME)))
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )
    # numba's compiler is chatty at DEBUG
    logging.getLogger("numba").setLevel(logging.WARNING)


def timestamp_print(message):
    """Print a message with timestamp prefix."""
    timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
    print(f"[{timestamp}] {message}")


def _prepare(args, command):
    """Load the config, create the output directory and attach the log file.

    Returns (config, output_dir) or an exit status.
    """
    try:
        config = parse_config(args.config)
    except ConfigError as e:
        logging.error(f"Invalid configuration: {e}")
        timestamp_print(f"❌ {command}: invalid configuration - {e}")
        return EXIT_CONFIG_ERROR

    output_dir = resolve_output_dir(config, args.output_dir)
    try:
        output_dir.mkdir(parents=True, exist_ok=True)
        setup_logging(args.verbose, output_dir / "logs")
    except OSError as e:
        logging.error(f"Cannot use output directory {output_dir}: {e}")
        timestamp_print(f"❌ {command}: cannot write to {output_dir} - {e}")
        return EXIT_IO_ERROR

    try:
        threads = resolve_threads(args.threads)
    except ConfigError as e:
        timestamp_print(f"❌ {command}: {e}")
        return EXIT_CONFIG_ERROR
    if threads is not None:
        used = set_worker_threads(threads)
        logging.info(f"Using {used} worker threads")
    return config, output_dir


def cmd_simulate(args):
    """Run the time integration and write diagnostics, snapshots and a run summary."""
    prepared = _prepare(args, "simulate")
    if isinstance(prepared, int):
        return prepared
    config, output_dir = prepared
    timestamp_print(f"Starting simulation: {config.description or args.config}")

    grid_nodes = config.grid.n[0] * config.grid.n[1] * config.grid.n[2]
    if not skip_resource_check(args.skip_resource_check):
        timestamp_print("🔍 Checking system resources...")
        snapshots = config.solver.step_count // config.output.snapshot_stride + 1
        success, message = check_system_resources(
            grid_nodes, estimate_snapshot_bytes(grid_nodes, snapshots, config.output.snapshot_format),
            output_dir)
        print(message)
        if not success:
            timestamp_print("⚠️  Resource check failed. Use --skip-resource-check to override.")
            return EXIT_IO_ERROR

    try:
        data = initial_data_from_config(config)
    except ConfigError as e:
        logging.error(f"Invalid initial data: {e}")
        timestamp_print(f"❌ simulate: {e}")
        return EXIT_CONFIG_ERROR
    except OSError as e:
        logging.error(f"Cannot read initial data: {e}")
        timestamp_print(f"❌ simulate: {e}")
        return EXIT_IO_ERROR

    diagnostics = DiagnosticsSink(output_dir / "diagnostics.csv", parquet=config.output.parquet)
    snapshots = SnapshotSink(output_dir / "snapshots", config.output.snapshot_stride,
                             config.output.snapshot_format)
    progress = not args.no_progress and sys.stderr.isatty()

    started = time.perf_counter()
    try:
        result = run(config.params, data, config.solver, sinks=(diagnostics, snapshots), progress=progress)
        diagnostics.close()
        snapshots.close()
    except OSError as e:
        logging.error(f"Failed to write outputs: {e}")
        timestamp_print(f"❌ simulate: output failure - {e}")
        return EXIT_IO_ERROR
    wall_time = time.perf_counter() - started

    per_step_drift, cumulative_drift = mass_drift(result.records)
    finite = [r for r in result.records if r.is_finite()]
    summary = {
        "termination": result.termination,
        "blowup_detected": result.blowup_detected,
        "blowup_time": result.blowup_time,
        "steps": result.steps,
        "final_time": result.final_time,
        "peak_linf_u": max((r.linf_u for r in finite), default=None),
        "peak_linf_v": max((r.linf_v for r in finite), default=None),
        "peak_linf_w": max((r.linf_w for r in finite), default=None),
        "mass_drift_per_step": per_step_drift,
        "mass_drift_cumulative": cumulative_drift,
        "first_cfl_violation": result.first_cfl_violation,
        "bound_violations": sum(1 for r in result.records if r.bound_violation),
        "blowup_report": None if result.blowup_report is None else asdict(result.blowup_report),
        "error": None if result.error is None else str(result.error),
        "wall_time_seconds": wall_time,
        "memory": get_memory_info(),
        "provenance": provenance_record(serialize_config(config), args.config),
        "outputs": [str(p) for p in diagnostics.written],
    }
    try:
        write_json(output_dir / "run_summary.json", summary)
    except OSError as e:
        logging.error(f"Failed to write run summary: {e}")
        return EXIT_IO_ERROR

    if result.termination == TERMINATION_SOLVER_FAILURE:
        timestamp_print(f"❌ Solver failure: {result.error}")
        return EXIT_SOLVER_FAILURE
    if result.blowup_detected:
        timestamp_print(f"⚠️  Blow-up detected at t = {result.blowup_time:.6g} after {result.steps} steps")
    else:
        timestamp_print(f"✅ Completed {result.steps} steps, t = {result.final_time:.6g}")
    timestamp_print(f"📂 Outputs in {output_dir} ({wall_time:.1f}s)")
    return EXIT_OK


def cmd_bound(args):
    """Compute the blow-up time lower bound and write blowup_bound.json."""
    prepared = _prepare(args, "bound")
    if isinstance(prepared, int):
        return prepared
    config, output_dir = prepared
    try:
        data = initial_data_from_config(config)
        refined = None
        if args.refine:
            refined = initial_data_from_config(config, make_grid(config.grid).refined())
        bound = evaluate_bound(config.params, data, tau=args.tau, refined_data=refined)
    except GeometryError as e:
        logging.error(f"Geometry hypothesis fails: {e}")
        timestamp_print(f"❌ bound: {e}")
        return EXIT_GEOMETRY_ERROR
    except (ConfigError, ValueError) as e:
        timestamp_print(f"❌ bound: {e}")
        return EXIT_CONFIG_ERROR
    except SolverError as e:
        timestamp_print(f"❌ bound: {e}")
        return EXIT_SOLVER_FAILURE
    except OSError as e:
        logging.error(f"Cannot read initial data: {e}")
        timestamp_print(f"❌ bound: {e}")
        return EXIT_IO_ERROR

    report = bound.to_report()
    try:
        path = write_json(output_dir / "blowup_bound.json", report)
    except OSError as e:
        logging.error(f"Failed to write bound report: {e}")
        return EXIT_IO_ERROR
    timestamp_print(f"rho = {bound.rho!r}, d = {bound.dmax!r}")
    timestamp_print(f"A1 = {bound.a1:.6g}, A2 = {bound.a2:.6g}, A3 = {bound.a3:.6g}")
    timestamp_print(f"scriptA = {bound.script_a:.6g}, scriptB = {bound.script_b:.6g}, "
                    f"scriptC = {bound.script_c:.10g}")
    timestamp_print(f"psi0 = {bound.psi0:.6g}, tau = {bound.tau}")
    timestamp_print(f"✅ T_max >= {bound.t_lower:.6g}  (report: {path})")
    return EXIT_OK


def _print_certificate(report):
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\n🔍 Boundedness certificate - {verdict}")
    print(f"   tau = {report.tau}, n = {report.n}")
    print(f"   K = chi*M3 = {report.K:.10g}")
    print(f"   threshold pi*sqrt(2/n) = {report.threshold:.10g}")
    if report.eps is not None:
        print(f"   eps = {report.eps:.10g}")
    if report.certificate is not None:
        print(f"   p = {report.certificate.p:.10g}")
    if report.properties is not None:
        props = report.properties
        print(f"   min(phi) - 1 = {props.phi_min_minus_one:.3e}")
        print(f"   (max(phi) - phi(K))/phi(K) = {props.phi_max_excess:.3e}")
        print(f"   min phi' = {props.phi_prime_min:.3e}")
        print(f"   min((1/p)phi'' - phi')/phi = {props.concavity_min:.3e}")
        print(f"   identity residual = {props.identity_residual:.3e}")
        print(f"   identity residual (unscaled) = {props.identity_residual_abs:.3e}")
    print(f"   {report.reason}")


def cmd_certify(args):
    """Check the smallness condition for global boundedness."""
    prepared = _prepare(args, "certify")
    if isinstance(prepared, int):
        return prepared
    config, output_dir = prepared
    params = config.params if args.tau is None else replace(config.params, tau=args.tau)
    try:
        data = initial_data_from_config(config)
        report = boundedness_certificate(params, data, n=3)
    except (ConfigError, ValueError) as e:
        timestamp_print(f"❌ certify: {e}")
        return EXIT_CONFIG_ERROR
    except OSError as e:
        logging.error(f"Cannot read initial data: {e}")
        timestamp_print(f"❌ certify: {e}")
        return EXIT_IO_ERROR

    _print_certificate(report)
    try:
        write_json(output_dir / "certificate.json", asdict(report))
    except OSError as e:
        logging.error(f"Failed to write certificate report: {e}")
        return EXIT_IO_ERROR
    return EXIT_OK


def cmd_phi_check(args):
    """Verify the auxiliary-function properties for one (p, eps, K)."""
    try:
        cert = PhiCertificate.build(args.p, args.eps, args.K)
    except ValueError as e:
        timestamp_print(f"❌ phi-check: {e}")
        return EXIT_CONFIG_ERROR
    bound = phi_condition_bound(args.p, args.eps)
    if not cert.satisfied:
        timestamp_print(f"❌ phi-check: K = {args.K} violates K < {bound:.10g}")
        return EXIT_CONFIG_ERROR

    props = verify_phi_properties(cert, samples=args.samples)
    verdict = "PASS" if props.holds() else "FAIL"
    print(f"\n🔍 phi properties (p={args.p}, eps={args.eps}, K={args.K}) - {verdict}")
    print(f"   K bound = {bound:.10g}")
    print(f"   min(phi) - 1 = {props.phi_min_minus_one:.3e}")
    print(f"   (max(phi) - phi(K))/phi(K) = {props.phi_max_excess:.3e}")
    print(f"   min phi' = {props.phi_prime_min:.3e}")
    print(f"   min((1/p)phi'' - phi')/phi = {props.concavity_min:.3e}")
    print(f"   identity residual = {props.identity_residual:.3e}")
    print(f"   identity residual (unscaled) = {props.identity_residual_abs:.3e}")
    if args.output_dir:
        try:
            write_json(Path(args.output_dir) / "phi_check.json",
                       {"certificate": asdict(cert), "k_bound": bound, "properties": asdict(props),
                        "passed": props.holds()})
        except OSError as e:
            logging.error(f"Failed to write phi-check report: {e}")
            return EXIT_IO_ERROR
    return EXIT_OK


def main(argv: Optional[list] = None):
    """Main entry point for the CLI."""
    parser = argparse.ArgumentParser(
        description='Tumor-immune chemotaxis toolkit - simulate blow-up, bound its time, '
                    'certify boundedness',
        formatter_class=argparse.RawDescriptionHelpFormatter
    )

    parser.add_argument('-v', '--verbose', action='store_true',
                        help='Enable verbose logging')
    parser.add_argument('--threads', type=int, default=None,
                        help='Worker threads for stencils (env CHEMOTAXIS_THREADS)')
    parser.add_argument('--output-dir', default=None,
                        help='Output directory (env CHEMOTAXIS_OUTPUT_DIR, else the config value)')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    parser_simulate = subparsers.add_parser('simulate', help='Integrate the system from a config')
    parser_simulate.add_argument('config', help='JSON run configuration')
    parser_simulate.add_argument('--skip-resource-check', action='store_true',
                                 help='Skip system resource validation before running')
    parser_simulate.add_argument('--no-progress', action='store_true',
                                 help='Disable the progress bar')

    parser_bound = subparsers.add_parser('bound', help='Lower bound for the blow-up time')
    parser_bound.add_argument('config', help='JSON run configuration')
    parser_bound.add_argument('--refine', action='store_true',
                              help='Also evaluate psi0 on a 2x refined grid')
    parser_bound.add_argument('--tau', type=int, choices=(0, 1), default=None,
                              help='Override the regime from the config')

    parser_certify = subparsers.add_parser('certify', help='Global boundedness certificate')
    parser_certify.add_argument('config', help='JSON run configuration')
    parser_certify.add_argument('--tau', type=int, choices=(0, 1), default=None,
                                help='Override the regime from the config')

    parser_phi = subparsers.add_parser('phi-check', help='Check the auxiliary function for (p, eps, K)')
    parser_phi.add_argument('--p', type=float, required=True, help='Exponent p > 1')
    parser_phi.add_argument('--eps', type=float, required=True, help='Splitting parameter in (0, 1)')
    parser_phi.add_argument('--K', type=float, required=True, help='Range [0, K] of the weight')
    parser_phi.add_argument('--samples', type=int, default=1000, help='Sample points on [0, K]')

    args = parser.parse_args(argv)

    setup_logging(args.verbose)

    if args.command == 'simulate':
        return cmd_simulate(args)
    elif args.command == 'bound':
        return cmd_bound(args)
    elif args.command == 'certify':
        return cmd_certify(args)
    elif args.command == 'phi-check':
        return cmd_phi_check(args)
    else:
        parser.print_help()
        return EXIT_CONFIG_ERROR


if __name__ == '__main__':
    sys.exit(main())
