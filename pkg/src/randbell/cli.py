"""Command-line front end: ``randbell <command> [flags]``.

Exit codes: 0 success, 2 invalid flags or configuration, 3 run aborted
because too many trials failed in the LP solver.  Settings resolve as
command-line flag, then the JSON file given by ``--config``, then the
built-in default.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, TextIO

from . import analytic
from .lcd_lp import DEFAULT_LP_MAX_N
from .montecarlo import (
    RANDOM_PURE,
    ConfigError,
    Criterion,
    EstimateRecord,
    ExperimentConfig,
    InvalidTrialsError,
    default_threads,
    estimate,
)
from .quantum import GHZ, SchmidtPair, Singlet
from .sampling import SamplingMode

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3

LP_DEFAULT_TRIALS = 100_000
CLOSED_DEFAULT_TRIALS = 1_000_000
FIGURE1_DEFAULT_TRIALS = 100_000

RECORD_FIELDS = (
    "command",
    "n",
    "mode",
    "criterion",
    "theta",
    "p_hat",
    "stderr",
    "wilson_lo",
    "wilson_hi",
    "trials",
    "invalid_trials",
    "master_seed",
    "wall_time_seconds",
)

# LP-criterion probabilities for the GHZ state, by (mode, n)
TABLE1_REFERENCE = {
    ("rim", 2): 0.283185,
    ("rim", 3): 0.746899,
    ("rim", 4): 0.942380,
    ("rim", 5): 0.995926,
    ("rim", 6): 0.9997,
    ("rom", 2): 0.412982,
    ("rom", 3): 0.962073,
    ("rom", 4): 0.999757,
    ("rom", 5): 0.999999,
    ("rom", 6): 1.0,
}


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# records and emission
# ---------------------------------------------------------------------------

@dataclass
class OutputRecord:
    command: str
    n: int
    mode: str
    criterion: str
    theta: Optional[float]
    p_hat: float
    stderr: float
    wilson_lo: float
    wilson_hi: float
    trials: int
    invalid_trials: int
    master_seed: int
    wall_time_seconds: Optional[float]
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_estimate(cls, command: str, rec: EstimateRecord, wall: Optional[float], **extra) -> "OutputRecord":
        lo, hi = rec.wilson
        return cls(
            command, rec.n, rec.mode.value, rec.criterion.value, rec.theta, rec.p_hat, rec.stderr,
            lo, hi, rec.trials, rec.invalid_trials, rec.master_seed, wall, dict(extra),
        )

    def as_dict(self) -> dict[str, Any]:
        out = {k: getattr(self, k) for k in RECORD_FIELDS}
        out.update(self.extra)
        return out


def _csv_cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def render(rows: Sequence[dict[str, Any]], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(list(rows), indent=2) + "\n"
    buf = io.StringIO()
    header: list[str] = []
    for row in rows:
        for k in row:
            if k not in header:
                header.append(k)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(row.get(k)) for k in header])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------

COMMON_DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "threads": None,  # resolved from the environment
    "format": "csv",
    "output": None,
    "no_timing": False,
    "lp_max_n": DEFAULT_LP_MAX_N,
}

COMMAND_DEFAULTS: dict[str, dict[str, Any]] = {
    "estimate": {"mode": "rim", "state": "ghz", "criteria": "mabk-orbit", "trials": None},
    "table1": {"trials_scale": 1.0, "trials": LP_DEFAULT_TRIALS, "nmax": DEFAULT_LP_MAX_N},
    "figure1": {"nmax": 15, "trials": FIGURE1_DEFAULT_TRIALS},
    "mabk-single": {"nmax": 10, "trials": CLOSED_DEFAULT_TRIALS, "modes": "rim,rom"},
    "entanglement-sweep": {"thetas": None, "points": 11, "trials": CLOSED_DEFAULT_TRIALS},
    "random-state": {"trials": CLOSED_DEFAULT_TRIALS},
    "analytic": {},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="64-bit master seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads (default: $RANDBELL_THREADS or 1)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    p.add_argument("--output", help="output file (default standard output)")
    p.add_argument("--config", help="JSON file of default settings for this command")
    p.add_argument("--no-timing", action="store_true", default=argparse.SUPPRESS,
                   help="leave wall_time_seconds empty so output is byte-reproducible")
    p.add_argument("--lp-max-n", type=int, help="largest n for the LP criterion (default 6)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="randbell", description="Random-measurement nonclassicality estimates.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sup = argparse.SUPPRESS

    p = sub.add_parser("estimate", help="one Monte Carlo estimate", argument_default=sup)
    p.add_argument("--n", type=int, help="number of parties (required)")
    p.add_argument("--mode", choices=("rim", "rom"))
    p.add_argument("--state", help="ghz | schmidt:<theta> | singlet | random-pure")
    p.add_argument("--criteria", help="comma list of mabk-single, mabk-orbit, wwzb, lp")
    p.add_argument("--trials", type=int)
    _add_common(p)

    p = sub.add_parser("table1", help="LP-criterion grid for GHZ states", argument_default=sup)
    p.add_argument("--trials-scale", type=float, help="multiplier on the per-cell trial count")
    p.add_argument("--trials", type=int, help="base trials per cell (n = 6 uses a tenth)")
    p.add_argument("--nmax", type=int)
    _add_common(p)

    p = sub.add_parser("figure1", help="MABK-orbit and WWZB curves", argument_default=sup)
    p.add_argument("--nmax", type=int)
    p.add_argument("--trials", type=int)
    _add_common(p)

    p = sub.add_parser("mabk-single", help="unrelabeled MABK curve with violation diagnostics",
                       argument_default=sup)
    p.add_argument("--nmax", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--modes", help="comma list of rim, rom")
    _add_common(p)

    p = sub.add_parser("entanglement-sweep", help="CHSH-class probability versus Schmidt angle",
                       argument_default=sup)
    p.add_argument("--thetas", help="comma list of angles in radians")
    p.add_argument("--points", type=int, help="uniform grid size on [0, pi/4] when --thetas is absent")
    p.add_argument("--trials", type=int)
    _add_common(p)

    p = sub.add_parser("random-state", help="uniformly random two-qubit pure state", argument_default=sup)
    p.add_argument("--trials", type=int)
    _add_common(p)

    p = sub.add_parser("analytic", help="closed forms and quadrature cross-check", argument_default=sup)
    _add_common(p)
    return parser


def _load_config(path: str) -> dict[str, Any]:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def resolve_settings(ns: argparse.Namespace) -> dict[str, Any]:
    given = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    settings = dict(COMMON_DEFAULTS)
    settings.update(COMMAND_DEFAULTS[ns.command])
    if getattr(ns, "config", None):
        cfg = _load_config(ns.config)
        unknown = set(cfg) - set(settings)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(cfg)
    settings.update(given)
    if settings["threads"] is None:
        settings["threads"] = default_threads()
    return settings


def parse_state(text: str, n: int):
    if text == "ghz":
        return GHZ(n)
    if text in ("random-pure", RANDOM_PURE):
        return RANDOM_PURE
    if text == "singlet":
        return Singlet()
    if text.startswith("schmidt:"):
        try:
            return SchmidtPair(float(text.split(":", 1)[1]))
        except ValueError:
            raise UsageError(f"bad Schmidt angle in {text!r}") from None
    raise UsageError(f"unknown state {text!r}")


def _split(text: str) -> list[str]:
    return [t.strip() for t in str(text).split(",") if t.strip()]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _timed(fn: Callable[[], Any], s: dict[str, Any]) -> tuple[Any, Optional[float]]:
    t0 = time.perf_counter()
    out = fn()
    return out, None if s["no_timing"] else time.perf_counter() - t0


def _config(s: dict[str, Any], **kw) -> ExperimentConfig:
    return ExperimentConfig(master_seed=s["seed"], threads=s["threads"], lp_enabled_max_n=s["lp_max_n"], **kw)


def cmd_estimate(s: dict[str, Any]) -> list[dict[str, Any]]:
    if s.get("n") is None:
        raise UsageError("usage: randbell estimate --n N [options]\nrandbell estimate: error: --n is required")
    n = s["n"]
    criteria = tuple(_split(s["criteria"]))
    trials = s["trials"]
    if trials is None:
        trials = LP_DEFAULT_TRIALS if "lp" in criteria else CLOSED_DEFAULT_TRIALS
    cfg = _config(s, n=n, mode=s["mode"], state=parse_state(s["state"], n), criteria=criteria, trials=trials)
    recs, wall = _timed(lambda: estimate(cfg), s)
    return [OutputRecord.from_estimate("estimate", r, wall, state=cfg.state_label).as_dict() for r in recs]


def table1_trials(n: int, base: int, scale: float) -> int:
    # n = 6 cells run at a tenth of the base count
    t = base * scale * (0.1 if n >= 6 else 1.0)
    return max(1, int(round(t)))


def cmd_table1(s: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    for mode in ("rim", "rom"):
        for n in range(2, min(s["nmax"], s["lp_max_n"]) + 1):
            cfg = _config(s, n=n, mode=mode, criteria=(Criterion.LP,),
                          trials=table1_trials(n, s["trials"], s["trials_scale"]))
            (rec,), wall = _timed(lambda: estimate(cfg), s)
            rows.append(OutputRecord.from_estimate("table1", rec, wall, reference=TABLE1_REFERENCE.get((mode, n))).as_dict())
    return rows


def cmd_figure1(s: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    for mode in ("rim", "rom"):
        for n in range(2, s["nmax"] + 1):
            cfg = _config(s, n=n, mode=mode, criteria=(Criterion.MABK_ORBIT, Criterion.WWZB), trials=s["trials"])
            recs, wall = _timed(lambda: estimate(cfg), s)
            rows.extend(OutputRecord.from_estimate("figure1", r, wall).as_dict() for r in recs)
    return rows


def cmd_mabk_single(s: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    for mode in _split(s["modes"]):
        for n in range(2, s["nmax"] + 1):
            cfg = _config(s, n=n, mode=mode, criteria=(Criterion.MABK_SINGLE,), trials=s["trials"])
            (rec,), wall = _timed(lambda: estimate(cfg), s)
            rows.append(OutputRecord.from_estimate(
                "mabk-single", rec, wall,
                mean_violation_classical=rec.mean_violation_classical,
                mean_violation_quantum=rec.mean_violation_quantum,
            ).as_dict())
    return rows


def sweep_thetas(s: dict[str, Any]) -> list[float]:
    if s["thetas"] is not None:
        try:
            return [float(t) for t in _split(s["thetas"])]
        except ValueError:
            raise UsageError("--thetas must be a comma list of numbers") from None
    k = s["points"]
    if k < 1:
        raise UsageError("--points must be >= 1")
    if k == 1:
        return [math.pi / 4]
    return [i * (math.pi / 4) / (k - 1) for i in range(k)]


def cmd_entanglement_sweep(s: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    for th in sweep_thetas(s):
        for mode in ("rim", "rom"):
            cfg = _config(s, n=2, mode=mode, state=SchmidtPair(th), criteria=(Criterion.MABK_ORBIT,), trials=s["trials"])
            (rec,), wall = _timed(lambda: estimate(cfg), s)
            rows.append(OutputRecord.from_estimate("entanglement-sweep", rec, wall).as_dict())
    return rows


def cmd_random_state(s: dict[str, Any]) -> list[dict[str, Any]]:
    rows = []
    for mode in ("rim", "rom"):
        cfg = _config(s, n=2, mode=mode, state=RANDOM_PURE, criteria=(Criterion.MABK_ORBIT,), trials=s["trials"])
        (rec,), wall = _timed(lambda: estimate(cfg), s)
        rows.append(OutputRecord.from_estimate("random-state", rec, wall).as_dict())
    return rows


def cmd_analytic(s: dict[str, Any]) -> list[dict[str, Any]]:
    single = analytic.chsh_rim_single_probability()
    orbit = analytic.chsh_rim_orbit_probability()
    return [
        {
            "command": "analytic",
            "quantity": name,
            "closed_form": r.closed_form,
            "quadrature": r.value,
            "quadrature_error_estimate": r.error_estimate,
            "abs_difference": r.difference,
        }
        for name, r in (("chsh-single-rim", single), ("chsh-orbit-rim", orbit))
    ]


COMMANDS: dict[str, Callable[[dict[str, Any]], list[dict[str, Any]]]] = {
    "estimate": cmd_estimate,
    "table1": cmd_table1,
    "figure1": cmd_figure1,
    "mabk-single": cmd_mabk_single,
    "entanglement-sweep": cmd_entanglement_sweep,
    "random-state": cmd_random_state,
    "analytic": cmd_analytic,
}


def _write(text: str, dest: Optional[str], stdout: TextIO) -> None:
    if dest is None or dest == "-":
        stdout.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)


def main(argv: Optional[Sequence[str]] = None, stdout: Optional[TextIO] = None, stderr: Optional[TextIO] = None) -> int:
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    try:
        ns = build_parser().parse_args(argv)
        settings = resolve_settings(ns)
        rows = COMMANDS[ns.command](settings)
    except UsageError as exc:
        print(exc, file=stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"randbell: invalid configuration: {exc}", file=stderr)
        return EXIT_USAGE
    except InvalidTrialsError as exc:
        print(f"randbell: aborted: {exc} ({exc.invalid} invalid of {exc.total})", file=stderr)
        return EXIT_SOLVER
    _write(render(rows, settings["format"]), settings["output"], stdout)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
