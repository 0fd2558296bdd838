#!/usr/bin/env python3
"""
Main entry point for dlqkit.
Analysis, Lur'e solving and optimal control of weighted descriptor systems
stored as JSON system files.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, Any, List, Optional

import numpy as np

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent))

from config_loader import Tolerances, get_merged_config, get_output_config, build_tolerances
from pencils.pencil_core import as_matrix, generalized_spectrum
from systems.system_forms import controllability, feedback_form, system_space
from systems.system_io import (
    load_system, load_solution_file, decode_matrix, encode_matrix, write_json, write_frame,
)
from analysis.popov_kyp import (
    popov_eval, popov_normal_rank, default_grid, popov_grid, popov_grid_frame,
    kyp_check, kyp_lift, kyp_existence_report,
)
from analysis.palindromic_inertia import (
    build_palindromic, inertia_at_omega, inertia_sweep, sweep_to_frame, pkcf_census,
)
from solvers.lure_solver import LureSolution, lure_solve, lure_verify, solution_to_dict
from control.optimal_control import (
    check_initial_value, optimal_value, synthesize, feasibility, finite_horizon_oracle,
    oracle_ladder, trajectory_to_frame,
)
from utils.errors import DlqkitError, InvalidInputError, NumericalFailureError
from utils.output_manager import initialize_output_manager, get_output_manager, final_print, format_report

VERSION = "dlqkit 1.0.0"


def _jsonable(value: Any) -> Any:
    """numpy / complex values -> JSON-compatible structures ([re, im] for complex)."""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        if value.ndim == 2:
            return encode_matrix(value)
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (complex, np.complexfloating)):
        v = complex(value)
        if abs(v.imag) <= 1e-14 * max(1.0, abs(v)):
            return _jsonable(v.real)
        return [v.real, v.imag]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    return value


def parse_vector(text: str, name: str = "x0") -> np.ndarray:
    """'0,1' or '1+2j, 0' -> complex vector."""
    try:
        return np.array([complex(token.strip().replace('i', 'j')) for token in text.split(',')])
    except ValueError:
        raise InvalidInputError(f"{name} must be a comma-separated list of numbers", {'value': text})


def _settings(args: argparse.Namespace) -> Tolerances:
    """Merged config -> Tolerances with CLI overrides; initializes output routing."""
    try:
        config = get_merged_config(args.config)
    except FileNotFoundError as e:
        raise InvalidInputError(str(e))

    tol = build_tolerances(config).with_overrides(
        rank_rtol=args.tol_rank, circle=args.tol_circle, residual=args.tol_residual, seed=args.seed)
    output = get_output_config(config)
    log_dir = args.log_dir or output.get('log_dir')
    initialize_output_manager(debug_mode=args.debug, log_dir=Path(log_dir) if log_dir else None)
    args.json_indent = output.get('json_indent', 2)
    args.float_format = output.get('csv_float_format', '%.12g')
    return tol


def _emit(args: argparse.Namespace, title: str, result: Dict[str, Any]) -> None:
    if args.json:
        final_print(json.dumps(_jsonable(result), indent=args.json_indent))
    else:
        final_print(format_report(result, title=title))


def analyze_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle analyze command."""
    w = load_system(args.file)
    spec = generalized_spectrum(w.pencil, tol)
    ctrl = controllability(w, tol)
    fef = feedback_form(w, tol=tol)
    V = system_space(w, fef, tol)

    result = {
        'system': {'n': w.n, 'm': w.m, 'field': w.sys.field, 'regular': True},
        'spectrum': {
            'finite_eigenvalues': spec.finite_eigenvalues,
            'infinite_multiplicity': spec.infinite_multiplicity,
            'index': spec.index,
        },
        'feedback_form': {'n1': fef.n1, 'n2': fef.n2, 'n3': fef.n3,
                          'reconstruction_residual': fef.reconstruction_residual},
        'controllability': {
            'R_controllable': ctrl['R'],
            'C_controllable': ctrl['C'],
            'I_controllable': ctrl['I'],
            'stabilizable': ctrl['stabilizable'],
            'uncontrollable_modes': ctrl['uncontrollable_modes'],
        },
        'system_space': {'dimension': V.shape[1]},
        'seed': tol.seed,
    }
    _emit(args, "SYSTEM ANALYSIS", result)


def fef_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle fef command."""
    w = load_system(args.file)
    fef = feedback_form(w, tol=tol)
    ede = fef.ede
    result = {
        'feedback_form': fef.summary(),
        'ede_part': {'A_s': ede.A, 'B_s': ede.B, 'Q_s': ede.Q, 'S_s': ede.S, 'R_s': ede.R},
        'transforms': {'W': fef.W, 'T': fef.T, 'F': fef.F},
    }
    _emit(args, "FEEDBACK EQUIVALENCE FORM", result)


def popov_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle popov command."""
    w = load_system(args.file)
    q = popov_normal_rank(w, tol)

    if args.omega is not None:
        sample = popov_eval(w, args.omega, tol)
        result = {'omega': args.omega, 'defined': sample.defined, 'q': q}
        if sample.defined:
            result['value'] = sample.value
            result['min_eig'] = sample.min_eig
        _emit(args, "POPOV FUNCTION", result)
        return

    samples = popov_grid(w, default_grid(w, tol, args.grid), tol)
    frame = popov_grid_frame(samples)
    if args.out:
        write_frame(frame, args.out, args.float_format)
    result = {
        'q': q,
        'grid_points': len(samples),
        'min_eig': float(frame['lambda_min'].min()) if len(frame) else None,
        'output': args.out,
        'seed': tol.seed,
    }
    _emit(args, "POPOV GRID", result)


def inertia_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle inertia command."""
    w = load_system(args.file)
    p = build_palindromic(w)

    if args.omega is not None:
        triple = inertia_at_omega(p, args.omega, tol)
        _emit(args, "INERTIA", {'omega': args.omega, 'inertia': list(triple.as_tuple())})
        return

    points = tol.unit_circle_grid if args.sweep is None else args.sweep
    grid = np.linspace(0.0, 2.0 * np.pi, points, endpoint=False)
    frame = sweep_to_frame(inertia_sweep(p, grid, tol))
    if args.out:
        write_frame(frame, args.out, args.float_format)
        _emit(args, "INERTIA SWEEP", {'rows': len(frame), 'output': args.out})
    elif args.json:
        final_print(json.dumps(_jsonable(frame.to_dict(orient='records')), indent=args.json_indent))
    else:
        final_print(frame.to_string(index=False))


def pkcf_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle pkcf-check command."""
    w = load_system(args.file)
    q = popov_normal_rank(w, tol)
    census = pkcf_census(build_palindromic(w), q, tol)
    _emit(args, "PALINDROMIC CENSUS", {**census.to_dict(), 'seed': tol.seed})


def _read_matrix_file(path: str, key: str) -> np.ndarray:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except FileNotFoundError:
        raise InvalidInputError(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"malformed JSON in {path}", {'line': e.lineno})
    if isinstance(data, dict):
        data = data.get(key)
    return decode_matrix(data, key)


def kyp_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle kyp-check command."""
    w = load_system(args.file)
    if args.P:
        P = as_matrix(_read_matrix_file(args.P, 'P'), "P", (w.n, w.n))
    elif args.p11:
        fef = feedback_form(w, tol=tol)
        values = parse_vector(args.p11, "p11")
        if values.size != fef.n1 ** 2:
            raise InvalidInputError("p11 must hold n1*n1 entries (row-major)",
                                    {'n1': fef.n1, 'given': int(values.size)})
        P = kyp_lift(fef, values.reshape(fef.n1, fef.n1))
    else:
        raise InvalidInputError("kyp-check needs --P or --p11")

    check = kyp_check(w, P, tol=tol)
    existence = kyp_existence_report(w, tol)
    _emit(args, "KYP CHECK", {'P': P, **check, 'existence': existence})


def lure_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle lure solve|verify."""
    w = load_system(args.file)

    if args.action == 'solve':
        sol = lure_solve(w, path=args.path, tol=tol)
        payload = solution_to_dict(sol)
        if args.out:
            write_json(payload, args.out, args.json_indent)
        result = {'X': sol.X, 'K': sol.K, 'L': sol.L, 'q': sol.q,
                  'certificate': sol.certificate.to_dict(), 'output': args.out}
        _emit(args, "LUR'E SOLUTION", result)
        return

    if not args.solution:
        raise InvalidInputError("lure verify needs --solution")
    parsed = load_solution_file(args.solution)
    arrays = parsed.arrays(w.n, w.m)
    sol = LureSolution(X=arrays['X'], K=arrays['K'], L=arrays['L'], q=parsed.q)
    cert = lure_verify(w, sol, tol)
    passed = cert.passed(tol)
    _emit(args, "LUR'E CERTIFICATE", {**cert.to_dict(), 'passed': passed})
    if args.strict and not passed:
        raise NumericalFailureError("certificate failed in strict mode")


def optimal_value_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle optimal-value command."""
    w = load_system(args.file)
    x0 = parse_vector(args.x0)
    as_matrix(x0, "x0", (w.n, 1))
    check_initial_value(w, x0, tol)

    status = feasibility(w, tol)
    result: Dict[str, Any] = {'feasible': status['feasible'], 'reason': status['reason']}
    if status['feasible']:
        result['optimal_value'] = optimal_value(w, status['solution'], x0, tol)
    if args.oracle:
        oracle = finite_horizon_oracle(w, x0, args.horizon, tol)
        result['oracle'] = {'N': args.horizon, 'J_N': oracle['J_N_min']}
    result['seed'] = tol.seed
    _emit(args, "OPTIMAL VALUE", result)


def synthesize_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle synthesize command."""
    w = load_system(args.file)
    x0 = parse_vector(args.x0)
    as_matrix(x0, "x0", (w.n, 1))
    check_initial_value(w, x0, tol)

    sol = lure_solve(w, tol=tol)
    result = synthesize(w, sol, x0, args.horizon, tol)
    if args.out:
        write_frame(trajectory_to_frame(w, result.trajectory), args.out, args.float_format)
    _emit(args, "OPTIMAL TRAJECTORY", {**result.to_dict(), 'output': args.out})


def oracle_command(args: argparse.Namespace, tol: Tolerances) -> None:
    """Handle oracle command."""
    w = load_system(args.file)
    x0 = parse_vector(args.x0)
    horizons = [int(h.real) for h in parse_vector(args.horizons, "horizons")]
    ladder = oracle_ladder(w, x0, horizons, tol)
    _emit(args, "FINITE-HORIZON ORACLE", {'x0': x0, 'ladder': {f"J_{row['N']}": row['J_N'] for row in ladder}})


COMMANDS = {
    'analyze': analyze_command,
    'fef': fef_command,
    'popov': popov_command,
    'inertia': inertia_command,
    'pkcf-check': pkcf_command,
    'kyp-check': kyp_command,
    'lure': lure_command,
    'optimal-value': optimal_value_command,
    'synthesize': synthesize_command,
    'oracle': oracle_command,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="dlqkit - Lur'e equations and optimal control for descriptor systems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Structure report of a system file
  python src/main.py analyze config/systems/running_example.json

  # Stabilizing Lur'e solution, saved for later verification
  python src/main.py lure solve config/systems/running_example.json --out solution.json

  # Optimal value and trajectory from x0 = (0, 1)
  python src/main.py optimal-value config/systems/running_example.json --x0 0,1
  python src/main.py synthesize config/systems/running_example.json --x0 0,1 --out traj.csv

Exit codes: 0 success, 1 numerical failure, 2 invalid input, 3 unsupported structure.
        """
    )

    parser.add_argument('--version', action='version', version=VERSION)

    defaults = Tolerances()
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='YAML file overriding config/base_config.yaml')
    common.add_argument('--tol-rank', type=float, help=f'Relative rank threshold (default {defaults.rank_rtol:g})')
    common.add_argument('--tol-circle', type=float, help=f'Unit-circle band (default {defaults.circle:g})')
    common.add_argument('--tol-residual', type=float, help=f'Residual tolerance (default {defaults.residual:g})')
    common.add_argument('--seed', type=int, help=f'Seed for sample points (default {defaults.seed})')
    common.add_argument('--json', action='store_true', help='Print the report as JSON')
    common.add_argument('--debug', action='store_true', help='Show diagnostics on stdout')
    common.add_argument('--log-dir', help='Directory for the run log')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    analyze = subparsers.add_parser('analyze', parents=[common], help='Regularity, spectrum, FEF, controllability')
    analyze.add_argument('file', help='System file (JSON)')

    fef = subparsers.add_parser('fef', parents=[common], help='Feedback equivalence form and EDE part')
    fef.add_argument('file')

    popov = subparsers.add_parser('popov', parents=[common], help='Popov function at a point or on a grid')
    popov.add_argument('file')
    popov.add_argument('--omega', type=float, help='Evaluate at e^{i omega}')
    popov.add_argument('--grid', type=int, help='Equispaced grid size')
    popov.add_argument('--out', help='CSV output path')

    inertia = subparsers.add_parser('inertia', parents=[common], help='Inertia sweep of the palindromic pencil')
    inertia.add_argument('file')
    inertia.add_argument('--sweep', type=int, help='Equispaced points (eigenvalue events always added)')
    inertia.add_argument('--omega', type=float, help='Single angle')
    inertia.add_argument('--out', help='CSV output path')

    pkcf = subparsers.add_parser('pkcf-check', parents=[common], help='Unit-circle census of the palindromic pencil')
    pkcf.add_argument('file')

    kyp = subparsers.add_parser('kyp-check', parents=[common], help='Check a KYP certificate P')
    kyp.add_argument('file')
    kyp.add_argument('--P', help='JSON file with the matrix P')
    kyp.add_argument('--p11', help='Row-major entries of P11, lifted through the feedback form')

    lure = subparsers.add_parser('lure', parents=[common], help="Solve or verify the Lur'e equation")
    lure.add_argument('action', choices=['solve', 'verify'])
    lure.add_argument('file')
    lure.add_argument('--solution', help='Solution file for verify')
    lure.add_argument('--out', help='Write the solution file here (solve)')
    lure.add_argument('--path', choices=['auto', 'bvd', 'dare'], default='auto', help='EDE solver path')
    lure.add_argument('--strict', action='store_true', help='Exit 1 when the certificate fails')

    value = subparsers.add_parser('optimal-value', parents=[common], help='Optimal value for x0')
    value.add_argument('file')
    value.add_argument('--x0', required=True, help='Initial value, comma separated')
    value.add_argument('--oracle', action='store_true', help='Also run the finite-horizon oracle')
    value.add_argument('--horizon', type=int, default=30, help='Oracle horizon')

    synth = subparsers.add_parser('synthesize', parents=[common], help='Optimal trajectory and multipliers')
    synth.add_argument('file')
    synth.add_argument('--x0', required=True)
    synth.add_argument('--horizon', type=int, default=40)
    synth.add_argument('--out', help='Trajectory CSV path')

    oracle = subparsers.add_parser('oracle', parents=[common], help='Finite-horizon optimal values')
    oracle.add_argument('file')
    oracle.add_argument('--x0', required=True)
    oracle.add_argument('--horizons', default='5,10,20,30', help='Comma separated horizons')

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return 0

    try:
        tol = _settings(args)
        COMMANDS[args.command](args, tol)
    except DlqkitError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        sys.exit(e.exit_code)
    except ValueError as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        sys.exit(InvalidInputError.exit_code)
    finally:
        get_output_manager().close()

    return 0


if __name__ == "__main__":
    sys.exit(main())
