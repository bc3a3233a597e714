"""Command-line driver: ``equikin analyze``, ``equikin synth`` and ``equikin verify``.

Exit codes: 0 success, 2 input error, 3 numerical failure, 4 verification failure.
"""

from __future__ import annotations

import argparse
import fnmatch
import json
import logging
import sys
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Any

import yaml

from . import __version__
from .errors import EquikinError, InputError, NumericalError
from .io import load_bundle, parse_grf, parse_markers, save_bundle, write_reports
from .model import LimbChain, default_chain, load_chain
from .pipeline import AnalysisOptions, analyze_trial, summarize

logger = logging.getLogger("equikin")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

MANIFEST_NAME = "manifest.json"
ERROR_NAME = "error.json"
BUILTIN_CHAINS = ("forelimb4", "forelimb5")


# ---------------------------------------------------------------------------
# Run manifest
# ---------------------------------------------------------------------------

@dataclass
class TrialInput:
    id: str
    markers: str | None = None
    grf: str | None = None
    bundle: str | None = None


@dataclass
class RunManifest:
    """Everything ``analyze`` depends on besides the input files themselves.

    Paths are kept exactly as given; relative paths resolve against the
    working directory.  ``chain`` is a chain-config path, a built-in name or
    None (the bundle's own chain, else ``forelimb4``).  ``contact_threshold``
    is a fraction of body weight.
    """

    trials: list[TrialInput]
    out: str
    chain: str | None = None
    cutoff_kin: float | None = 10.0
    cutoff_grf: float | None = 50.0
    contact_threshold: float = 0.02
    grid_points: int = 101
    decomposition: str = "cardan"
    max_gap: int = 5
    seed: int = 0
    plots: bool = True
    version: str = __version__

    def options(self) -> AnalysisOptions:
        return AnalysisOptions(cutoff_kin=self.cutoff_kin, cutoff_grf=self.cutoff_grf,
                               contact_fraction=self.contact_threshold,
                               grid_points=self.grid_points, decomposition=self.decomposition,
                               max_gap=self.max_gap)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_mapping(cls, data: dict[str, Any]) -> "RunManifest":
        if not isinstance(data, dict):
            raise InputError("manifest must be a mapping")
        data = dict(data)
        data.pop("version", None)
        try:
            trials = [TrialInput(**t) for t in data.pop("trials")]
            manifest = cls(trials=trials, **data)
        except (KeyError, TypeError) as exc:
            raise InputError(f"invalid manifest: {exc}") from None
        manifest.validate()
        return manifest

    def validate(self) -> None:
        if not self.trials:
            raise InputError("manifest lists no trials")
        ids = [t.id for t in self.trials]
        if len(set(ids)) != len(ids):
            raise InputError("trial ids must be unique")
        for t in self.trials:
            if (t.bundle is None) == (t.markers is None or t.grf is None):
                raise InputError(f"trial {t.id!r} needs either a bundle or markers and grf files")
        try:
            self.options()
        except ValueError as exc:
            raise InputError(str(exc)) from None


def load_manifest(path: str | Path) -> RunManifest:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from None
    return RunManifest.from_mapping(data)


def _resolve_chain(spec: str | None, fallback: LimbChain | None) -> LimbChain:
    if spec is None:
        return fallback or default_chain(4)
    if spec in BUILTIN_CHAINS:
        return default_chain(int(spec[-1]))
    return load_chain(spec)


def run_manifest(manifest: RunManifest) -> list[Path]:
    """Analyze every trial, then write reports and the manifest.

    Nothing is written until every trial has been analyzed.
    """
    options = manifest.options()
    results = []
    for trial in manifest.trials:
        if trial.bundle is not None:
            bundle = load_bundle(trial.bundle)
            chain = _resolve_chain(manifest.chain, bundle.chain)
            markers, grf = bundle.markers, bundle.grf
        else:
            chain = _resolve_chain(manifest.chain, None)
            markers = parse_markers(trial.markers, chain)
            grf = parse_grf(trial.grf)
        logger.info("analyzing %s", trial.id)
        results.append(analyze_trial(markers, grf, chain, options, trial_id=trial.id))
    report = summarize(results)
    out = Path(manifest.out)
    written = write_reports(report, out, results, plots=manifest.plots)
    (out / MANIFEST_NAME).write_text(manifest.to_json(), encoding="utf-8", newline="")
    return written + [out / MANIFEST_NAME]


# ---------------------------------------------------------------------------
# Error reporting
# ---------------------------------------------------------------------------

def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return EXIT_INPUT


def _report_error(exc: BaseException, out_dir: str | Path | None) -> int:
    code = exit_code_for(exc)
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    if out_dir is not None:
        try:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            (Path(out_dir) / ERROR_NAME).write_text(text, encoding="utf-8", newline="")
        except OSError:
            pass
    return code


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def _manifest_from_args(args) -> RunManifest:
    if args.manifest:
        manifest = load_manifest(args.manifest)
        overrides = {k: getattr(args, k) for k in ("out", "chain", "cutoff_kin", "cutoff_grf",
                                                    "contact_threshold", "grid_points", "seed")
                     if getattr(args, k) is not None}
        for key in ("cutoff_kin", "cutoff_grf"):
            if key in overrides:
                overrides[key] = _cutoff(overrides[key], None)
        if overrides:
            manifest = replace(manifest, **overrides)
        manifest.validate()
        return manifest
    trials = []
    for k, (markers, grf) in enumerate(args.trial or []):
        trials.append(TrialInput(id=f"trial{k + 1:02d}", markers=markers, grf=grf))
    for path in args.bundle or []:
        trials.append(TrialInput(id=Path(path).name or f"bundle{len(trials) + 1}", bundle=path))
    defaults = RunManifest(trials=trials, out="")
    manifest = RunManifest(
        trials=trials, out=args.out or "equikin_out", chain=args.chain,
        cutoff_kin=_cutoff(args.cutoff_kin, defaults.cutoff_kin),
        cutoff_grf=_cutoff(args.cutoff_grf, defaults.cutoff_grf),
        contact_threshold=(defaults.contact_threshold if args.contact_threshold is None
                           else args.contact_threshold),
        grid_points=defaults.grid_points if args.grid_points is None else args.grid_points,
        decomposition=args.decomposition, seed=0 if args.seed is None else args.seed,
        plots=not args.no_plots)
    manifest.validate()
    return manifest


def _cutoff(value, default):
    if value is None:
        return default
    return None if value <= 0 else value


def cmd_analyze(args) -> int:
    out = args.out
    try:
        manifest = _manifest_from_args(args)
        out = manifest.out
        stale = Path(out) / ERROR_NAME
        if stale.exists():
            stale.unlink()
        written = run_manifest(manifest)
    except (EquikinError, OSError) as exc:
        return _report_error(exc, out)
    print(f"wrote {len(written)} files to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def cmd_synth(args) -> int:
    from .oracle.scenario import BUILTIN_SCENARIOS, builtin_scenario, load_scenario, simulate_forward

    try:
        if Path(args.scenario).is_file():
            scenario = load_scenario(args.scenario)
        elif args.scenario in BUILTIN_SCENARIOS:
            scenario = builtin_scenario(args.scenario)
        else:
            raise InputError(f"no scenario file or built-in scenario named {args.scenario!r}; "
                             f"built-ins: {', '.join(BUILTIN_SCENARIOS)}")
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if args.dt is not None:
            changes["dt"] = args.dt
        if args.noise is not None:
            changes["noise_sigma"] = args.noise
        if args.rate is not None:
            changes["sample_rate"] = args.rate
        if changes:
            scenario = replace(scenario, **changes)
        truth = simulate_forward(scenario)
        out = Path(args.out or scenario.name)
        bundle = truth.bundle(args.trial_id or scenario.name)
        bundle.metadata["seed"] = scenario.seed
        bundle.metadata["noise_sigma_m"] = scenario.noise_sigma
        paths = save_bundle(bundle, out)
    except (EquikinError, OSError) as exc:
        return _report_error(exc, None)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verify import CHECKS, run_checks

    names = list(CHECKS)
    if args.only:
        names = [n for n in names if any(fnmatch.fnmatchcase(n, pat) or pat in n
                                         for pat in args.only)]
        if not names:
            warnings.warn(f"no checks match {args.only}; nothing to verify", stacklevel=1)
            print("no checks selected")
            return EXIT_OK
    if args.list:
        print("\n".join(names))
        return EXIT_OK
    outcomes = run_checks(names, inject=args.inject_fault)
    width = max(len(o.name) for o in outcomes)
    for o in outcomes:
        print(f"{'PASS' if o.passed else 'FAIL'}  {o.name:<{width}}  {o.detail}")
    failed = [o for o in outcomes if not o.passed]
    print(f"{len(outcomes) - len(failed)}/{len(outcomes)} checks passed")
    if args.report:
        Path(args.report).write_text(json.dumps([asdict(o) for o in outcomes], indent=2,
                                                sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_VERIFY if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equikin", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", help="inverse dynamics and energy reports for one or more trials")
    src = p.add_argument_group("inputs (combine freely, or give a manifest)")
    src.add_argument("--manifest", help="run manifest (JSON or YAML); flags below override it")
    src.add_argument("--trial", nargs=2, action="append", metavar=("MARKERS", "GRF"),
                     help="marker CSV and GRF CSV of one trial; repeatable")
    src.add_argument("--bundle", action="append", metavar="DIR",
                     help="trial bundle directory as written by 'synth'; repeatable")
    p.add_argument("--chain", help="chain config YAML or built-in name (forelimb4, forelimb5)")
    p.add_argument("--cutoff-kin", type=float, help="marker low-pass cutoff in Hz, <=0 disables "
                   "(default 10)")
    p.add_argument("--cutoff-grf", type=float, help="GRF low-pass cutoff in Hz, <=0 disables "
                   "(default 50)")
    p.add_argument("--contact-threshold", type=float,
                   help="stance threshold as a fraction of body weight (default 0.02)")
    p.add_argument("--grid-points", type=int, help="points per normalized stride (default 101)")
    p.add_argument("--decomposition", choices=("cardan", "helical"), default="cardan")
    p.add_argument("--out", help="output directory (default equikin_out)")
    p.add_argument("--seed", type=int, help="recorded in the manifest; the analysis is "
                   "deterministic")
    p.add_argument("--no-plots", action="store_true", help="skip the SVG plots")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="simulate a synthetic scenario and write a trial bundle")
    p.add_argument("scenario", help="scenario YAML or built-in name")
    p.add_argument("--out", help="bundle directory (default: the scenario name)")
    p.add_argument("--seed", type=int, help="marker-noise seed")
    p.add_argument("--dt", type=float, help="integration step in s")
    p.add_argument("--noise", type=float, help="marker noise sigma in m")
    p.add_argument("--rate", type=float, help="marker sampling rate in Hz")
    p.add_argument("--trial-id")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="run the built-in oracle suite")
    p.add_argument("--only", action="append", metavar="PATTERN",
                   help="run checks whose name matches (glob or substring); repeatable")
    p.add_argument("--list", action="store_true", help="list the selected checks and exit")
    p.add_argument("--report", help="also write outcomes as JSON")
    p.add_argument("--inject-fault", choices=("sign-flip",), help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
