import argparse
import logging
import math
import re
import sys

from collapsesim.core.config import SettingsManager
from collapsesim.core.errors import CollapseSimError
from collapsesim.core.measurement import CollapsePolicy
from collapsesim.data.models import RunReport
from collapsesim.data.report import emit
from collapsesim.data.scenarios import SCENARIOS, build, describe, load_spec, run

RESET = "\033[0m"
BOLD = "\033[1m"
RED = "\033[31m"
GREEN = "\033[32m"
YELLOW = "\033[33m"
BLUE = "\033[34m"
MAGENTA = "\033[35m"
CYAN = "\033[36m"

EXIT_FAILED_EXPECTATION = 2

_PI_FORM = re.compile(r"^(-?\d*\.?\d*)\*?pi(?:/(\d+\.?\d*))?$")


def parse_number(text: str) -> float:
    """Accepts plain floats and multiples of pi such as pi/2, -pi or 2*pi/3."""
    text = text.strip().replace(" ", "")
    try:
        return float(text)
    except ValueError:
        pass
    match = _PI_FORM.match(text)
    if not match:
        raise ValueError(f"not a number: {text!r}")
    coefficient, divisor = match.groups()
    if coefficient in ("", "-"):
        coefficient += "1"
    return float(coefficient) * math.pi / float(divisor or 1)


def parse_params(items) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        params[key.strip()] = parse_number(value)
    return params


def policies_for(choice: str):
    if choice == "both":
        return [CollapsePolicy.COLLAPSE, CollapsePolicy.UNITARY_ONLY]
    return [CollapsePolicy(choice)]


def print_colorful_report(report: RunReport):
    spec = report.scenario
    print(f"{CYAN}{BOLD}{spec.name}{RESET} {YELLOW}(seed {spec.seed}){RESET}")
    for result in report.results:
        print()
        print(f"{BOLD}Policy: {result.policy}{RESET}")
        for key in sorted(result.values):
            value = result.values[key]
            if isinstance(value, float):
                value = f"{value:.6g}"
            print(f"{BLUE}●{RESET} {key}: {value}")

    print()
    print(f"{BOLD}Expectations ({len(report.expectations)}):{RESET}")
    for e in report.expectations:
        mark = f"{GREEN}✔{RESET}" if e.passed else f"{RED}✘{RESET}"
        print(
            f"{mark} {e.name}: observed {e.observed:.10g}, expected {e.expected:.10g} "
            f"± {e.tolerance:.3g} {MAGENTA}[{e.basis}]{RESET}"
        )
    passed = sum(e.passed for e in report.expectations)
    color = GREEN if report.passed else RED
    print(f"\n{color}{BOLD}{passed}/{len(report.expectations)} passed{RESET}")


def cmd_list(_args):
    print(f"{CYAN}{BOLD}Scenarios{RESET}")
    for name, definition in SCENARIOS.items():
        print(f"{GREEN}●{RESET} {BOLD}{name}{RESET}")
        print(f"   {definition.summary}")


def cmd_describe(args):
    try:
        print(describe(args.scenario))
    except CollapseSimError as e:
        print(f"{RED}Error:{RESET} {e}")
        sys.exit(1)


def cmd_run(args):
    settings = SettingsManager().load_settings()
    try:
        overrides = parse_params(args.param)
        if args.config:
            base = load_spec(args.config)
            if args.scenario and args.scenario != base.name:
                print(
                    f"{RED}Error:{RESET} {args.config} describes {base.name}, not {args.scenario}"
                )
                sys.exit(1)
            name, parameters, seed = base.name, {**base.parameters, **overrides}, base.seed
        elif args.scenario:
            name, parameters, seed = args.scenario, overrides, settings.seed
        else:
            print(f"{RED}Error:{RESET} name a scenario or pass --config")
            sys.exit(1)
        if args.seed is not None:
            seed = args.seed
        spec = build(name, parameters, seed)
        report = run(spec, policies_for(args.policy or settings.policy))
        out_dir = args.out or settings.out_dir
        written = emit(report, args.format or settings.format, out_dir)
    except (CollapseSimError, ValueError, OSError) as e:
        print(f"{RED}Error:{RESET} {e}")
        sys.exit(1)

    print_colorful_report(report)
    for path in written:
        print(f"{YELLOW}Wrote:{RESET} {path}")
    if not report.passed:
        sys.exit(EXIT_FAILED_EXPECTATION)


def setup_settings():
    manager = SettingsManager()
    current = manager.load_settings()

    if manager.settings_exist():
        print("Settings already configured. Do you want to reconfigure? (y/N): ", end="")
        response = input().strip().lower()
        if response not in ["y", "yes"]:
            return

    print("collapsesim defaults")
    print("\n")
    seed = input(f"Seed [{current.seed}]: ").strip() or str(current.seed)
    out_dir = input(f"Output directory [{current.out_dir}]: ").strip() or current.out_dir
    fmt = input(f"Format json/csv [{current.format}]: ").strip() or current.format
    policy = (
        input(f"Policy collapse/unitary/both [{current.policy}]: ").strip() or current.policy
    )

    try:
        manager.save_settings(int(seed), out_dir, fmt, policy)
        print("Settings saved successfully!")
    except Exception as e:
        print(f"Error saving settings: {e}")


def show_settings(_args):
    manager = SettingsManager()
    settings = manager.load_settings()
    print(f"{CYAN}{BOLD}Settings{RESET} {YELLOW}({manager.settings_file}){RESET}")
    for key, value in settings.model_dump().items():
        print(f"{GREEN}●{RESET} {key}: {value}")


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="collapsesim CLI",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="store_true",
        help="Log library progress at DEBUG level",
    )
    subparsers = parser.add_subparsers(dest="command")

    list_parser = subparsers.add_parser("list", help="List scenarios")
    list_parser.set_defaults(func=cmd_list)

    describe_parser = subparsers.add_parser("describe", help="Show a scenario and its defaults")
    describe_parser.add_argument("scenario")
    describe_parser.set_defaults(func=cmd_describe)

    run_parser = subparsers.add_parser("run", help="Run a scenario")
    run_parser.add_argument("scenario", nargs="?")
    run_parser.add_argument(
        "--param",
        action="append",
        metavar="KEY=VALUE",
        help="Override a scenario parameter (repeatable; accepts pi/2 style values)",
    )
    run_parser.add_argument(
        "--policy",
        choices=["collapse", "unitary", "both"],
        help="Collapse policy (default: from settings)",
    )
    run_parser.add_argument("--seed", type=int, help="64-bit seed")
    run_parser.add_argument("--out", help="Output directory (default: from settings)")
    run_parser.add_argument("--format", choices=["json", "csv"])
    run_parser.add_argument(
        "--config",
        help="Scenario file (.json, .yaml or .yml) with name, parameters, seed",
    )
    run_parser.set_defaults(func=cmd_run)

    config_parser = subparsers.add_parser("config", help="Manage default settings")
    config_sub = config_parser.add_subparsers(dest="config_cmd")
    config_parser.set_defaults(func=lambda _args: config_parser.print_help())
    config_setup = config_sub.add_parser("setup", help="Configure defaults interactively")
    config_setup.set_defaults(func=lambda _args: setup_settings())
    config_show = config_sub.add_parser("show", help="Print current defaults")
    config_show.set_defaults(func=show_settings)

    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    if not hasattr(args, "func"):
        parser.print_help()
        sys.exit(1)
    args.func(args)


if __name__ == "__main__":
    main()
