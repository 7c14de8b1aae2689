"""
Command line interface::

    zk [--config FILE] [--dir DIR] [-v | -q] <command> [options]

Commands: ground-state, spectrum, evolve, diagnose, audit-virial, kernel,
instability, acceptance, config. Summaries are printed as JSON; exit codes
are 0 (pass), 1 (criteria unmet) and 2 (error).
"""

import argparse
import json
import logging
import os
import sys

from . import __version__
from .config import (
    defaults_text, dump_config, evolution_from_config, load_config)
from .artifacts import DIAG_FILE, write_json
from .errors import EXIT_FAIL, EXIT_PASS, DomainError, ZKError, exit_code
from .lab import Laboratory, acceptance, run_instability
from .util import jsonable


__all__ = [
    'main',
]


def _print(obj):
    print(json.dumps(jsonable(obj), sort_keys=True, indent=2))


def _verdict(passed):
    return EXIT_PASS if passed else EXIT_FAIL


def _run_dir(args):
    run = args.run or args.run_path
    if run is None:
        raise DomainError("{} needs a run directory (--run)".format(
            args.command))
    return run


def cmd_ground_state(lab, args):
    _, report = lab.ground_state(tol=args.tol, out=args.out)
    _print(dict(report, **lab.meta()))
    return EXIT_PASS


def cmd_spectrum(lab, args):
    _, report = lab.spectrum(q=args.q, out=args.out)
    _print(dict(report, **lab.meta()))
    return EXIT_PASS


def cmd_evolve(lab, args):
    overrides = {k: v for k, v in (('T', args.T), ('dt', args.dt),
                                   ('snapshot_stride', args.stride))
                 if v is not None}
    if args.recenter:
        overrides['recenter'] = True
    cfg = evolution_from_config(lab.config, **overrides)
    u0 = lab.initial_data(args.init)
    traj = lab.evolve(u0, args.out, cfg, init=args.init)
    _print({
        'run': args.out,
        't_end': traj.times[-1],
        'snapshots': len(traj.times),
        'mass_drift': float(abs(traj.mass - traj.mass[0]).max()
                            / traj.mass[0]),
    })
    return EXIT_PASS


def cmd_diagnose(lab, args):
    run = _run_dir(args)
    series, slope, monotonicity = lab.diagnose(run, args.A, args.M,
                                               out=args.out)
    _print({
        'run': run,
        'diagnostics': args.out or os.path.join(run, DIAG_FILE),
        'slope': slope._asdict(),
        'theta_fit': monotonicity.theta_fit,
        'per_x0': monotonicity.per_x0,
        's_end': series.s[-1],
        'KA_end': series.KA[-1],
    })
    return EXIT_PASS


def cmd_audit_virial(lab, args):
    reports = lab.audit_virial(_run_dir(args), args.A or (4.0, 8.0, 16.0))
    _print({str(r.A): r.C_fit for r in reports})
    return EXIT_PASS


def cmd_kernel(lab, args):
    params = None
    if args.params:
        with open(args.params, encoding='utf-8') as f:
            params = json.load(f)
    results = lab.kernel(args.certify.split(','), params)
    summary = {}
    passed = True
    for name, value in results.items():
        if isinstance(value, list):
            summary[name] = {
                '{} {}'.format(f.law.kernel, f.law.region): f.slope
                for f in value}
            passed &= all(f.passed for f in value)
        else:
            summary[name] = value._asdict()
            passed &= value.passed
    summary['passed'] = passed
    if args.out:
        write_json(args.out, dict(summary, **lab.meta()))
    _print(summary)
    return _verdict(passed)


def cmd_instability(lab, args):
    overrides = {k: v for k, v in (('T_max', args.T_max), ('dt', args.dt),
                                   ('A', args.A), ('M', args.M))
                 if v is not None}
    n = None if args.control else (args.n or 'config')
    icfg = lab.instability_config(n, **overrides)
    report = run_instability(lab, icfg, args.out)
    summary = report._asdict()
    del summary['rows']
    _print(dict(summary, config=icfg._asdict(), **lab.meta()))
    return _verdict(report.passed)


def cmd_acceptance(lab, args):
    results = acceptance(lab, quick=args.quick)
    _print({
        'results': [r._asdict() for r in results],
        'passed': all(r.passed for r in results),
        'meta': lab.meta(),
    })
    return _verdict(all(r.passed for r in results))


def cmd_config(lab, args):
    if args.defaults:
        sys.stdout.write(defaults_text())
    else:
        sys.stdout.write(dump_config(lab.config))
    return EXIT_PASS


def _parser():
    parser = argparse.ArgumentParser(
        prog='zk', description="Zakharov-Kuznetsov soliton laboratory.")
    parser.add_argument('--version', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('--config', help="TOML file overriding the defaults")
    parser.add_argument('--dir', help="artifact directory")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('ground-state', help="solve for Q and save it")
    p.add_argument('--tol', type=float, help="residual target")
    p.add_argument('--out', help="also write the field to this file")
    p.set_defaults(func=cmd_ground_state, compute=False)

    p = commands.add_parser('spectrum', help="negative eigenpair of L")
    p.add_argument('--q', help="ground state field file")
    p.add_argument('--out', help="also write the report to this file")
    p.set_defaults(func=cmd_spectrum, compute=False)

    p = commands.add_parser('evolve', help="evolve initial data")
    p.add_argument('--init', default='builtin:soliton',
                   help="file, builtin:soliton or builtin:perturbed:n=30")
    p.add_argument('--T', type=float)
    p.add_argument('--dt', type=float)
    p.add_argument('--stride', type=int)
    p.add_argument('--recenter', action='store_true')
    p.add_argument('--out', default='run')
    p.set_defaults(func=cmd_evolve, compute=False)

    p = commands.add_parser('diagnose', help="functionals of a stored run")
    p.add_argument('run_path', nargs='?', metavar='run')
    p.add_argument('--run', help="run directory")
    p.add_argument('--A', type=float)
    p.add_argument('--M', type=float)
    p.add_argument('--out', help="diagnostic rows, default <run>/{}".format(
        DIAG_FILE))
    p.set_defaults(func=cmd_diagnose, compute=False)

    p = commands.add_parser('audit-virial', help="J_A identity term table")
    p.add_argument('run_path', nargs='?', metavar='run')
    p.add_argument('--run', help="run directory")
    p.add_argument('--A', type=float, action='append')
    p.set_defaults(func=cmd_audit_virial, compute=False)

    p = commands.add_parser('kernel', help="kernel decay certification")
    p.add_argument('--certify', default='fs,dfs,linear,duhamel')
    p.add_argument('--params', help="JSON overrides of the kernel, "
                   "linear_decay and duhamel sections")
    p.add_argument('--out', help="also write the summary to this file")
    p.set_defaults(func=cmd_kernel, compute=False)

    p = commands.add_parser('instability', help="perturbed soliton run")
    p.add_argument('--n', type=int)
    p.add_argument('--control', action='store_true',
                   help="start from Q itself")
    p.add_argument('--T-max', dest='T_max', type=float)
    p.add_argument('--dt', type=float)
    p.add_argument('--A', type=float)
    p.add_argument('--M', type=float)
    p.add_argument('--out')
    p.set_defaults(func=cmd_instability, compute=False)

    p = commands.add_parser('acceptance', help="run the acceptance suite")
    p.add_argument('--quick', action='store_true')
    p.set_defaults(func=cmd_acceptance, compute=True)

    p = commands.add_parser('config', help="print the configuration")
    p.add_argument('--defaults', action='store_true',
                   help="print the packaged defaults")
    p.set_defaults(func=cmd_config, compute=False)
    return parser


def main(argv=None):
    """Entry point of the ``zk`` script; returns the exit code."""
    args = _parser().parse_args(argv)
    level = (logging.DEBUG if args.verbose else
             logging.WARNING if args.quiet else logging.INFO)
    logging.basicConfig(level=level, format='%(levelname)s: %(message)s')
    try:
        config = load_config(args.config)
        directory = args.dir or config['output']['directory']
        os.makedirs(directory, exist_ok=True)
        lab = Laboratory(config, directory, compute=args.compute)
        return args.func(lab, args)
    except (ZKError, OSError) as e:
        logging.error(str(e))
        return exit_code(e)


if __name__ == '__main__':
    sys.exit(main())
