"""Command-line front end.

Exit codes: 0 success, 2 invalid input, 3 no accepted rounds,
4 statistical or soundness failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from msqkd.attack import (
    AttackSpec,
    honest_attack,
    random_attack,
    soundness_report,
    validate_attack,
)
from msqkd.channel import ChannelParams
from msqkd.errors import InvalidParameterError, MsqkdError, NoAcceptedRoundsError
from msqkd.keyrate import (
    MODES,
    VARIANTS,
    KeyRateReport,
    bb84_keyrate,
    channel_keyrate,
    noise_tolerance,
)
from msqkd.simulate import SimConfig, compare_to_analytic, report_json, run_simulation

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NO_ROUNDS = 3
EXIT_FAILURE = 4

SWEEP_COLUMNS = (
    "r_raw", "r_clamped", "r_eff_raw", "r_eff_clamped",
    "r_old", "r_eff_old", "bb84", "improvement_percent",
)


def fmt(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return f"{value:.12g}"


@dataclass(frozen=True)
class SweepSpec:
    variable: str
    start: float
    stop: float
    step: float
    phi: float = 0.0
    p_l: float = 0.0
    p_d: float = 0.0
    mode: str = "3term"
    variant: str = "printed"

    def __post_init__(self):
        if self.variable not in ("phi", "p_l"):
            raise InvalidParameterError(f"sweep variable must be phi or p_l, got {self.variable!r}")
        if self.start > self.stop:
            raise InvalidParameterError("sweep start must not exceed stop")
        if self.step <= 0:
            raise InvalidParameterError("sweep step must be positive")

    def grid(self) -> list[float]:
        n = int(math.floor((self.stop - self.start) / self.step + 1e-9)) + 1
        return [round(self.start + i * self.step, 12) for i in range(n)]

    def params_at(self, x: float) -> ChannelParams:
        if self.variable == "phi":
            return ChannelParams(x, self.p_l, self.p_d)
        return ChannelParams(self.phi, x, self.p_d)


def sweep_row(spec: SweepSpec, x: float) -> dict[str, Optional[float]]:
    row: dict[str, Optional[float]] = dict.fromkeys(SWEEP_COLUMNS)
    params = spec.params_at(x)
    row["bb84"] = bb84_keyrate(params.phi)
    try:
        rep = channel_keyrate(params, spec.mode, spec.variant)
    except NoAcceptedRoundsError:
        return row
    row["r_raw"] = rep.r
    row["r_clamped"] = max(rep.r, 0.0)
    row["r_eff_raw"] = rep.r_eff
    row["r_eff_clamped"] = max(rep.r_eff, 0.0)
    row["r_old"] = rep.r_old
    row["r_eff_old"] = rep.r_eff_old
    if rep.r_eff_old is not None and rep.r_eff_old > 0:
        row["improvement_percent"] = 100 * (row["r_eff_clamped"] - rep.r_eff_old) / rep.r_eff_old
    return row


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[tuple[float, dict]]:
    grid = spec.grid()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda x: sweep_row(spec, x), grid))
    else:
        rows = [sweep_row(spec, x) for x in grid]
    return list(zip(grid, rows))


def sweep_csv(spec: SweepSpec, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([spec.variable, *SWEEP_COLUMNS])
    for x, row in rows:
        w.writerow([fmt(x), *(fmt(row[c]) for c in SWEEP_COLUMNS)])
    return buf.getvalue()


def sweep_json(spec: SweepSpec, rows) -> str:
    doc = [{spec.variable: x, **row} for x, row in rows]
    return json.dumps(doc, indent=2)


def render_report(rep: KeyRateReport) -> str:
    lines = [
        f"mode        {rep.mode}",
        f"N           {rep.N:.6f}",
        f"p_acc       {rep.p_acc:.6f}",
        f"p0          {rep.p0:.6f}",
        f"H(A|E) >=   {rep.h_ae_lower:.6f}",
        f"H(A|B)      {rep.h_ab:.6f}",
        f"r           {rep.r:.4f}",
        f"r_eff       {rep.r_eff:.4f}",
        "terms (label, weight, contribution):",
    ]
    lines += [f"  {label:<12} {w:.6f} {c:.6f}" for label, w, c in rep.term_breakdown]
    if rep.r_old is not None:
        lines.append(f"original r  {rep.r_old:.4f}")
        lines.append(f"original r' {rep.r_eff_old:.4f}")
    if rep.bb84 is not None:
        lines.append(f"BB84 r      {rep.bb84:.4f}")
    return "\n".join(lines)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def _channel(args) -> ChannelParams:
    return ChannelParams(args.phi, args.pl, args.pd)


def cmd_rate(args) -> int:
    rep = channel_keyrate(_channel(args), args.mode, args.bound_variant)
    if args.format == "json":
        _emit(json.dumps(rep.as_dict(), indent=2), args.out)
    else:
        _emit(render_report(rep), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    start = args.start if args.start is not None else 0.0
    stop = args.stop if args.stop is not None else (0.12 if args.var == "phi" else 0.99)
    step = args.step if args.step is not None else (0.001 if args.var == "phi" else 0.01)
    spec = SweepSpec(
        variable="p_l" if args.var == "pl" else args.var,
        start=start, stop=stop, step=step,
        phi=args.phi, p_l=args.pl, p_d=args.pd,
        mode=args.mode, variant=args.bound_variant,
    )
    rows = run_sweep(spec, args.workers)
    _emit(sweep_json(spec, rows) if args.format == "json" else sweep_csv(spec, rows), args.out)
    return EXIT_OK


def cmd_tolerance(args) -> int:
    def new(phi):
        return channel_keyrate(ChannelParams(phi, args.pl, args.pd), args.mode, args.bound_variant).r

    def old(phi):
        return channel_keyrate(ChannelParams(phi, args.pl, args.pd)).r_old

    doc = {"p_l": args.pl, "p_d": args.pd, "phi_max": noise_tolerance(new, hi=0.5)}
    try:
        doc["phi_max_original"] = noise_tolerance(old, hi=0.5)
    except InvalidParameterError:
        doc["phi_max_original"] = None
    _emit(json.dumps(doc, indent=2), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _channel(args)
    stats = run_simulation(SimConfig(args.rounds, args.seed, params), workers=args.workers)
    zscores = compare_to_analytic(stats, params) if args.compare else None
    if args.counts_csv:
        Path(args.counts_csv).write_text(stats.to_csv())
    if args.format == "csv":
        _emit(stats.to_csv(), args.out)
    else:
        _emit(report_json(stats, zscores), args.out)
    if zscores and any(z.flagged for z in zscores):
        return EXIT_FAILURE
    return EXIT_OK


def _load_attack(args) -> AttackSpec:
    if getattr(args, "honest", False):
        return honest_attack()
    if not args.file:
        raise InvalidParameterError("an attack file is required (--file)")
    return AttackSpec.load(args.file)


def cmd_attack_validate(args) -> int:
    problems = validate_attack(_load_attack(args))
    if not problems:
        print("no violations")
        return EXIT_OK
    for v in problems:
        print(v)
    return EXIT_FAILURE


def cmd_attack_random(args) -> int:
    spec = random_attack(args.d, args.seed, args.bias)
    text = json.dumps(spec.to_json(), indent=2)
    _emit(text, args.out)
    return EXIT_OK


def cmd_attack_honest(args) -> int:
    _emit(json.dumps(honest_attack().to_json(), indent=2), args.out)
    return EXIT_OK


def cmd_attack_check(args) -> int:
    spec = _load_attack(args)
    problems = validate_attack(spec)
    if problems:
        for v in problems:
            print(v)
        return EXIT_FAILURE
    rep = soundness_report(spec, args.bound_variant)
    if args.format == "json":
        print(json.dumps(rep.as_dict(), indent=2))
    else:
        print(
            f"exact={rep.exact:.4f}, bounds={rep.six_term_exact:.4f}/{rep.three_term_exact:.4f}/"
            f"{rep.three_term_estimated:.4f} (6-term exact / 3-term exact / 3-term estimated), "
            f"sound={str(rep.sound).lower()}"
        )
    return EXIT_OK if rep.sound else EXIT_FAILURE


def run_campaign(count: int, max_d: int, seed: int, variant: str = "printed", workers: int = 1) -> dict:
    def one(i):
        spec = random_attack(1 + i % max_d, seed + i)
        try:
            return i, soundness_report(spec, variant)
        except NoAcceptedRoundsError:
            return i, None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(count)))
    else:
        results = [one(i) for i in range(count)]
    checked = [(i, r) for i, r in results if r is not None]
    return {
        "specs": count,
        "checked": len(checked),
        "six_term_violations": [seed + i for i, r in checked if not r.six_term_sound],
        "three_above_six": [seed + i for i, r in checked if not r.three_le_six],
        "estimated_violations": [seed + i for i, r in checked if not r.three_term_estimated_sound],
        "max_six_term_excess": max((r.six_term_exact - r.exact for _, r in checked), default=0.0),
    }


def cmd_attack_campaign(args) -> int:
    doc = run_campaign(args.count, args.max_d, args.seed, args.bound_variant, args.workers)
    _emit(json.dumps(doc, indent=2), args.out)
    return EXIT_FAILURE if doc["six_term_violations"] or doc["three_above_six"] else EXIT_OK


def _add_channel(p, phi=True):
    if phi:
        p.add_argument("--phi", type=float, default=0.0, help="phase error rate")
    p.add_argument("--pl", type=float, default=0.0, help="one-directional loss probability")
    p.add_argument("--pd", type=float, default=0.0, help="server dark-count rate")


def _add_bound_opts(p):
    p.add_argument("--mode", choices=MODES, default="3term")
    p.add_argument("--bound-variant", choices=VARIANTS, default="printed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msqkd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="key rate at one channel point")
    _add_channel(p)
    _add_bound_opts(p)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("sweep", help="key rates over a phi or p_l grid, as CSV")
    p.add_argument("--var", choices=("phi", "pl", "p_l"), required=True)
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--step", type=float)
    _add_channel(p)
    _add_bound_opts(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("tolerance", help="maximal phase error with a positive key rate")
    _add_channel(p, phi=False)
    _add_bound_opts(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_tolerance)

    p = sub.add_parser("simulate", help="Monte Carlo run of the protocol")
    p.add_argument("--rounds", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    _add_channel(p)
    p.add_argument("--compare", action="store_true", help="z-test against the closed forms")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--counts-csv", help="also write the count table here")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("attack", help="explicit attack tools")
    asub = p.add_subparsers(dest="attack_command", required=True)

    a = asub.add_parser("validate", help="check an attack file against the isometry constraints")
    a.add_argument("--file")
    a.add_argument("--honest", action="store_true")
    a.set_defaults(func=cmd_attack_validate)

    a = asub.add_parser("random", help="write a random valid attack")
    a.add_argument("--d", type=int, default=2)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--bias", type=float)
    a.add_argument("--out")
    a.set_defaults(func=cmd_attack_random)

    a = asub.add_parser("honest", help="write the honest-server attack")
    a.add_argument("--out")
    a.set_defaults(func=cmd_attack_honest)

    a = asub.add_parser("check", help="compare bounds with the exact entropy for one attack")
    a.add_argument("--file")
    a.add_argument("--honest", action="store_true")
    a.add_argument("--bound-variant", choices=VARIANTS, default="printed")
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.set_defaults(func=cmd_attack_check)

    a = asub.add_parser("campaign", help="soundness check over many random attacks")
    a.add_argument("--count", type=int, default=200)
    a.add_argument("--max-d", type=int, default=4)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--bound-variant", choices=VARIANTS, default="printed")
    a.add_argument("--workers", type=int, default=1)
    a.add_argument("--out")
    a.set_defaults(func=cmd_attack_campaign)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoAcceptedRoundsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_ROUNDS
    except (MsqkdError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
