#!/usr/bin/env python3
"""
covext command line
Builds covariant observables from JSON instance files and decides their
extremality, writing a JSON report with certificates and witness pairs.

Exit codes:
- 0 success
- 1 invalid input or parse error
- 2 numerical failure
- 3 witness verification failure
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np

from covext import __version__
from covext.abelian import make_group, parse_element, subgroup_closure
from covext.construct import (
    build_from_gram,
    build_from_isometries,
    make_gram_structure,
    make_isometry_field,
    random_isometry_field,
)
from covext.errors import (
    CovextError,
    InvalidCertificateError,
    InvalidInputError,
    NotCovariantStructureError,
    NumericalFailureError,
    NumericalInconsistencyError,
)
from covext.extremality import (
    covariant_extreme_test,
    effects_to_json,
    global_extreme_test,
    midpoint_oracle,
    rank1_admissible,
    rank_of,
)
from covext.models import PRESETS, complex_matrix, get_preset
from covext.povm import (
    CovariantPOVM,
    Tolerances,
    check_covariance,
    distance,
    is_pvm,
    mix,
    validate_povm,
)
from covext.repspace import Spectrum, make_spectrum, pvm_existence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NUMERICAL = 2
EXIT_VERIFY = 3

SOURCES = ("isometries", "gram", "effects", "preset", "random")
MAX_SEED = 2 ** 64 - 1

GREEN = "\033[0;32m"
RED = "\033[0;31m"
YELLOW = "\033[1;33m"
RESET = "\033[0m"


@dataclass
class Instance:
    """A parsed instance file: the observable plus what is echoed into reports."""

    observable: CovariantPOVM
    tolerances: Tolerances
    source: str
    raw: Dict[str, Any]


def load_json(path: str) -> Dict[str, Any]:
    """Read a JSON object; decode errors carry line and column."""
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise InvalidInputError(f"cannot read {path}: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise InvalidInputError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise InvalidInputError(f"{path}: top level must be a JSON object")
    return data


def _parse_spectrum(data: Mapping[str, Any]) -> Spectrum:
    for key in ("group", "spectrum"):
        if key not in data:
            raise InvalidInputError(f"instance needs a {key!r} entry")
    G = make_group(data["group"])
    H = subgroup_closure(G, data.get("subgroup", []))
    return make_spectrum(G, H, data["spectrum"])


def _parse_effects(spec: Spectrum, raw: Mapping[str, Any]) -> np.ndarray:
    if not isinstance(raw, dict):
        raise InvalidInputError("effects must map outcome labels to matrices")
    labels = spec.outcomes.labels()
    by_label = {str(parse_element(spec.group, key)): value for key, value in raw.items()}
    missing = [label for label in labels if label not in by_label]
    if missing:
        raise InvalidInputError(f"effects missing for outcomes {missing}")
    if len(by_label) != len(labels):
        raise InvalidInputError(f"expected {len(labels)} effects, got {len(by_label)}")
    return np.array([complex_matrix(by_label[label]) for label in labels])


def parse_instance(data: Mapping[str, Any], seed: int = 0) -> Instance:
    """Build the observable named by the instance's single "observable" source."""
    tol = Tolerances.from_env().merged(data.get("tolerances"))
    source_block = data.get("observable")
    if not isinstance(source_block, dict):
        raise InvalidInputError("instance needs an \"observable\" object")
    present = [key for key in SOURCES if key in source_block]
    if len(present) != 1:
        raise InvalidInputError(f"observable needs exactly one of {list(SOURCES)}, got {present}")
    source = present[0]
    body = source_block[source]

    if source == "preset":
        if not isinstance(body, dict) or "name" not in body:
            raise InvalidInputError("preset source needs a \"name\"")
        M = get_preset(body["name"]).build(body.get("params"), tol)
        return Instance(M, tol, source, dict(data))

    spec = _parse_spectrum(data)
    if source == "isometries":
        if not isinstance(body, dict):
            raise InvalidInputError("isometries must map characters to matrices")
        W = make_isometry_field(spec, {k: complex_matrix(v) for k, v in body.items()}, tol)
        M = build_from_isometries(W, tol)
    elif source == "gram":
        if not isinstance(body, list):
            raise InvalidInputError("gram must be a list of coset blocks")
        M = build_from_gram(make_gram_structure(spec, [complex_matrix(b) for b in body], tol), tol)
    elif source == "effects":
        M = CovariantPOVM(spec, _parse_effects(spec, body))
    else:
        body = body if isinstance(body, dict) else {}
        rng = np.random.default_rng(seed)
        W = random_isometry_field(spec, rng, body.get("ambient_dim"))
        M = build_from_isometries(W, tol)
    return Instance(M, tol, source, dict(data))


def observable_section(M: CovariantPOVM, tol: Tolerances) -> Dict[str, Any]:
    """Structural checks shared by build and check reports."""
    validity = validate_povm(M, tol)
    covariance = check_covariance(M, tol)
    out: Dict[str, Any] = {
        "validity": validity.to_dict(),
        "covariance": covariance.to_dict(),
        "pvm_existence": pvm_existence(M.spectrum),
        "rank1_admissible": rank1_admissible(M.spectrum),
    }
    if validity.passed and covariance.is_covariant:
        out["is_pvm"] = is_pvm(M, tol)
        out["rank"] = rank_of(M, tol)
    return out


def base_report(instance: Instance, seed: int) -> Dict[str, Any]:
    M = instance.observable
    report: Dict[str, Any] = {
        "tool_version": __version__,
        "seed": seed,
        "generated": datetime.now().isoformat(timespec="seconds"),
        "source": instance.source,
        "instance": instance.raw,
        "tolerances": instance.tolerances.to_dict(),
    }
    report.update(M.spectrum.to_dict())
    report["observable"] = {"effects": effects_to_json(M)}
    report.update(observable_section(M, instance.tolerances))
    return report


def write_report(report: Dict[str, Any], path: str) -> None:
    with open(path, "w") as f:
        json.dump(report, f, indent=2)
        f.write("\n")
    logger.info("report saved to %s", path)


def _default_output(command: str) -> str:
    timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
    return f"covext_{command}_{timestamp}.json"


def _mark(ok: bool, text_ok: str, text_bad: str) -> str:
    return f"{GREEN}✓ {text_ok}{RESET}" if ok else f"{RED}✗ {text_bad}{RESET}"


def print_summary(title: str, report: Dict[str, Any]) -> None:
    print("=" * 60)
    print(title)
    print("=" * 60)
    print(f"Group: Z{tuple(report['group'])}  outcomes: {len(report['observable']['effects'])}")
    validity = report["validity"]
    print(_mark(validity["passed"], "valid observable", "invalid observable"))
    print(_mark(report["covariance"]["is_covariant"], "covariant", "not covariant"))
    if "is_pvm" in report:
        print(f"Sharp (PVM): {report['is_pvm']}   rank: {report['rank']}")
    for name, entry in report.get("reports", {}).items():
        extreme = entry["verdict"] == "Extreme"
        colour = GREEN if extreme else YELLOW
        print(f"{colour}{name} test: {entry['verdict']} (perturbation dim {entry['perturbation_dim']}){RESET}")
    oracle = report.get("oracle")
    if oracle is not None:
        found = "decomposition found" if oracle["found"] else f"none found in {oracle['trials']} trials"
        print(f"Oracle: {found}")


def cmd_build(instance_path: str, out_path: Optional[str] = None, seed: int = 0) -> int:
    instance = parse_instance(load_json(instance_path), seed)
    report = base_report(instance, seed)
    out_path = out_path or _default_output("build")
    write_report(report, out_path)
    print_summary("BUILD COMPLETE", report)
    print(f"\nReport saved to: {out_path}")
    return EXIT_OK


def run_checks(
    M: CovariantPOVM,
    tol: Tolerances,
    covariant: bool,
    global_: bool,
    oracle_trials: Optional[int],
    seed: int,
    jobs: int = 1,
) -> Tuple[Dict[str, Any], Optional[Dict[str, Any]]]:
    """Run the requested tests; results come back in a fixed order whatever `jobs` is."""
    tasks: List[Tuple[str, Callable[[], Any]]] = []
    if covariant:
        tasks.append(("covariant", lambda: covariant_extreme_test(M, tol)))
    if global_:
        tasks.append(("global", lambda: global_extreme_test(M, tol)))
    if oracle_trials is not None:
        tasks.append(("oracle", lambda: midpoint_oracle(M, oracle_trials, seed, tol)))

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn) for _, fn in tasks]
            results = [f.result() for f in futures]
    else:
        results = [fn() for _, fn in tasks]

    reports: Dict[str, Any] = {}
    oracle = None
    for (name, _), result in zip(tasks, results):
        if name == "oracle":
            oracle = result.to_dict() if result is not None else {"found": False}
            oracle["trials"] = oracle_trials
        else:
            reports[name] = result.to_dict()
    return reports, oracle


def cmd_check(
    instance_path: str,
    out_path: Optional[str] = None,
    covariant: bool = False,
    global_: bool = False,
    pvm: bool = False,
    oracle_trials: Optional[int] = None,
    seed: int = 0,
    jobs: int = 1,
) -> int:
    instance = parse_instance(load_json(instance_path), seed)
    if not (covariant or global_ or pvm or oracle_trials is not None):
        covariant = global_ = pvm = True
    report = base_report(instance, seed)
    if not pvm:
        report.pop("is_pvm", None)
    if not (report["validity"]["passed"] and report["covariance"]["is_covariant"]):
        logger.warning("observable failed validity or covariance; extremality tests skipped")
    else:
        reports, oracle = run_checks(
            instance.observable, instance.tolerances, covariant, global_, oracle_trials, seed, jobs
        )
        report["reports"] = reports
        if oracle is not None:
            report["oracle"] = oracle
    out_path = out_path or _default_output("check")
    write_report(report, out_path)
    print_summary("CHECK COMPLETE", report)
    print(f"\nReport saved to: {out_path}")
    return EXIT_OK


def cmd_presets(action: str, name: Optional[str] = None) -> int:
    if action == "list":
        for preset in PRESETS.values():
            print(f"{preset.name:22s} {preset.summary}")
        return EXIT_OK
    if not name:
        raise InvalidInputError("describe needs a preset name")
    print(get_preset(name).describe())
    return EXIT_OK


def _witness_pair(spec: Spectrum, witnesses: Mapping[str, Any]) -> Tuple[CovariantPOVM, CovariantPOVM]:
    return (
        CovariantPOVM(spec, _parse_effects(spec, witnesses["plus"])),
        CovariantPOVM(spec, _parse_effects(spec, witnesses["minus"])),
    )


def cmd_verify_witnesses(report_path: str) -> int:
    """Re-check every witness pair in a report: both observables, midpoint equal to M."""
    data = load_json(report_path)
    instance = parse_instance(data, data.get("seed", 0))
    M, tol = instance.observable, instance.tolerances
    failures = 0
    checked = 0
    for name, entry in data.get("reports", {}).items():
        if "witnesses" not in entry:
            continue
        checked += 1
        plus, minus = _witness_pair(M.spectrum, entry["witnesses"])
        residual = distance(mix(0.5, plus, minus), M)
        vp, vm = validate_povm(plus, tol), validate_povm(minus, tol)
        ok = vp.passed and vm.passed and residual <= tol.eq_tol
        print(_mark(ok, f"{name} witnesses verified (residual {residual:.3e})",
                    f"{name} witnesses rejected (residual {residual:.3e}, "
                    f"min eig {min(vp.min_eigenvalue, vm.min_eigenvalue):.3e}, "
                    f"normalization {max(vp.normalization_residual, vm.normalization_residual):.3e})"))
        failures += not ok
    if checked == 0:
        print("nothing to verify: report carries no witnesses")
    return EXIT_VERIFY if failures else EXIT_OK


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="covext",
        description="Covariant observables on finite Abelian groups and their extremality",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose",
        action="count",
        default=0,
        help="Verbose output (-v info, -vv debug)"
    )
    parser.add_argument(
        "--seed",
        type=_seed,
        default=0,
        help="Seed for random instances and the oracle (default: 0)"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    build = sub.add_parser("build", help="Build an observable and write its effects")
    build.add_argument("instance", help="Instance JSON file")
    build.add_argument("-o", "--output", help="Report path")

    check = sub.add_parser("check", help="Run extremality tests")
    check.add_argument("instance", help="Instance or build report JSON file")
    check.add_argument("-o", "--output", help="Report path")
    check.add_argument("--covariant-extreme", action="store_true", help="Extremality among covariant observables")
    check.add_argument("--global-extreme", action="store_true", help="Extremality among all observables")
    check.add_argument("--pvm", action="store_true", help="Report whether the observable is sharp")
    check.add_argument("--oracle", type=int, metavar="TRIALS", help="Run the randomized midpoint oracle")
    check.add_argument("--jobs", type=int, default=1, help="Worker threads for independent tests")

    presets = sub.add_parser("presets", help="List or describe presets")
    presets.add_argument("action", choices=["list", "describe"])
    presets.add_argument("name", nargs="?")

    verify = sub.add_parser("verify-witnesses", help="Re-check witness pairs stored in a report")
    verify.add_argument("report", help="Check report JSON file")
    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity == 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        format="[%(asctime)s] [%(levelname)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)
    try:
        if args.command == "build":
            return cmd_build(args.instance, args.output, args.seed)
        if args.command == "check":
            if args.jobs < 1:
                raise InvalidInputError(f"--jobs must be at least 1, got {args.jobs}")
            return cmd_check(
                args.instance, args.output,
                covariant=args.covariant_extreme,
                global_=args.global_extreme,
                pvm=args.pvm,
                oracle_trials=args.oracle,
                seed=args.seed,
                jobs=args.jobs,
            )
        if args.command == "presets":
            return cmd_presets(args.action, args.name)
        return cmd_verify_witnesses(args.report)
    except (InvalidInputError, NotCovariantStructureError) as e:
        logger.error("%s", e)
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID
    except InvalidCertificateError as e:
        logger.error("%s", e)
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_VERIFY
    except (NumericalFailureError, NumericalInconsistencyError, np.linalg.LinAlgError) as e:
        logger.error("numerical failure: %s", e)
        print(f"ERROR: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CovextError as e:
        logger.error("%s", e)
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
