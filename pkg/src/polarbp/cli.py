"""Command-line front end: code construction, simulation sweeps, reports.

Configuration can come from a flat key=value file, from flags, or both;
flags override file values. Unknown keys in a config file are hard errors.
Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .code import CrcConfig, bhattacharyya_construct, load_spec, save_spec
from .decoders import DecoderParams
from .simulate import (
    StopRule,
    SweepStats,
    _Tally,
    append_results,
    read_results_csv,
    run_trial,
    sweep,
)

__all__ = ["main", "RunConfig", "ConfigError"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything one simulation run needs; round-trips through flat text."""

    code_file: str = ""
    n: int = 0
    k: int = 0
    crc: int = 24
    design_ebn0: float = 0.0
    decoder: str = "bp"
    max_iters: int = 0  # 0 = auto: 200, or reset*q_max for fpbp
    reset: int = 0
    q_max: int = 0
    p_range: int = 0
    p_level: int = 0
    d: int = 0
    n_min: int = 0
    initial_reset: int = 0
    sigma2_noise: float = 0.36
    noise_period: int = 50
    warmup: int = 2
    boxplus: str = "minsum"
    stop_mode: str = "crc"
    ebno: tuple[float, ...] = ()
    trials: int = 0  # > 0 runs exactly this many trials per point
    target_errors: int = 100
    max_trials: int = 1_000_000
    batch: int = 256
    seed: int = 0
    parallelism: int = 1
    out_csv: str = "results.csv"
    out_dat: str = ""
    figures: bool = True
    fig_dir: str = ""
    trace_file: str = ""

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "ebno":
                value = ",".join(repr(v) for v in value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> "RunConfig":
        cfg = cls()
        known = {f.name: f for f in fields(cls)}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in known:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            try:
                setattr(cfg, key, _parse_value(known[key].type, value))
            except ValueError as exc:
                raise ConfigError(f"{source}:{lineno}: field {key!r}: {exc}") from None
        return cfg


def _parse_value(ftype: str, value: str):
    if ftype == "int":
        return int(value)
    if ftype == "float":
        return float(value)
    if ftype == "bool":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if ftype.startswith("tuple"):
        return parse_ebno_list(value) if value else ()
    return value


def parse_ebno_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(",") if part.strip())


def _add_simulate_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--code", dest="code_file", help="code description file from `construct`")
    p.add_argument("--n", type=int, help="block length (power of two)")
    p.add_argument("--k", type=int, help="non-frozen positions, CRC bits included")
    p.add_argument("--crc", type=int, help="CRC length in bits (0 disables)")
    p.add_argument("--design-ebn0", dest="design_ebn0", type=float, help="construction point in dB")
    p.add_argument("--decoder", help="bp, fpbp, ppbp or nabp; comma list runs several")
    p.add_argument("--max-iters", dest="max_iters", type=int, help="iteration budget per frame")
    p.add_argument("--reset", type=int, help="fpbp: iterations per graph")
    p.add_argument("--q-max", dest="q_max", type=int, help="fpbp: graphs tried per frame")
    p.add_argument("--p-range", dest="p_range", type=int, help="ppbp: widest permutation window")
    p.add_argument("--p-level", dest="p_level", type=int, help="ppbp: highest window start stage")
    p.add_argument("--d", type=int, help="ppbp: divisor turning reset node counts into gaps")
    p.add_argument("--n-min", dest="n_min", type=int, help="ppbp: smallest permutation gap")
    p.add_argument("--initial-reset", dest="initial_reset", type=int,
                   help="ppbp: override the first permutation point")
    p.add_argument("--sigma2-noise", dest="sigma2_noise", type=float,
                   help="nabp: injected perturbation variance")
    p.add_argument("--noise-period", dest="noise_period", type=int,
                   help="nabp: iterations between injections")
    p.add_argument("--warmup", type=int, help="iterations before stop checks apply")
    p.add_argument("--boxplus", choices=("minsum", "exact"), help="combiner implementation")
    p.add_argument("--stop-mode", dest="stop_mode", choices=("crc", "reencode"))
    p.add_argument("--ebno", help="comma list of Eb/N0 points in dB")
    p.add_argument("--ebno-start", type=float, help="sweep start (with --ebno-stop/--ebno-step)")
    p.add_argument("--ebno-stop", type=float)
    p.add_argument("--ebno-step", type=float, default=None)
    p.add_argument("--trials", type=int, help="run exactly this many trials per point")
    p.add_argument("--target-errors", dest="target_errors", type=int,
                   help="stop a point after this many frame errors")
    p.add_argument("--max-trials", dest="max_trials", type=int, help="trial cap per point")
    p.add_argument("--batch", type=int, help="trials per work batch")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--parallelism", type=int, help="worker processes")
    p.add_argument("--out-csv", dest="out_csv", help="results file, one row per point")
    p.add_argument("--out-dat", dest="out_dat", help="space-separated mirror of the CSV")
    p.add_argument("--figures", dest="figures", action="store_true", default=None,
                   help="render report figures next to the outputs (default)")
    p.add_argument("--no-figures", dest="figures", action="store_false", default=None)
    p.add_argument("--fig-dir", dest="fig_dir", help="directory for report figures")
    p.add_argument("--trace-file", dest="trace_file",
                   help="write per-iteration digests for every trial (serial runs only)")


def _merge_flags(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    if getattr(args, "ebno", None) is not None:
        cfg.ebno = parse_ebno_list(args.ebno)
    if getattr(args, "ebno_start", None) is not None:
        if args.ebno_stop is None or not args.ebno_step:
            raise ConfigError("--ebno-start needs --ebno-stop and a nonzero --ebno-step")
        points = np.arange(args.ebno_start, args.ebno_stop + args.ebno_step / 2, args.ebno_step)
        cfg.ebno = tuple(float(f"{p:.6g}") for p in points)
    return cfg


def _load_code(cfg: RunConfig):
    if cfg.code_file:
        spec = load_spec(cfg.code_file)
    else:
        if cfg.n <= 0 or cfg.k <= 0:
            raise ConfigError("either --code or both --n and --k are required")
        spec = bhattacharyya_construct(cfg.n, cfg.k, cfg.design_ebn0, crc_len=cfg.crc)
    crc_cfg = CrcConfig.crc24() if spec.crc_len == 24 else None
    if spec.crc_len not in (0, 24):
        raise ConfigError(f"unsupported CRC length {spec.crc_len}; this build ships CRC-24")
    return spec, crc_cfg


def _decoder_params(cfg: RunConfig, variant: str, trace: bool) -> DecoderParams:
    max_iters = cfg.max_iters
    if variant == "fpbp":
        if cfg.reset <= 0 or cfg.q_max <= 0:
            raise ConfigError("fpbp needs --reset and --q-max")
        expected = cfg.reset * cfg.q_max
        if max_iters == 0:
            max_iters = expected
        elif max_iters != expected:
            raise ConfigError(
                f"--max-iters {max_iters} contradicts --reset {cfg.reset} x --q-max {cfg.q_max}"
            )
    elif max_iters == 0:
        max_iters = 200
    return DecoderParams(
        variant=variant,
        max_iters=max_iters,
        warmup=cfg.warmup,
        mode=cfg.boxplus,
        stop_mode=cfg.stop_mode,
        seed=cfg.seed,
        trace=trace,
        iters_per_graph=cfg.reset or None,
        max_graphs=cfg.q_max or None,
        span_max=cfg.p_range or None,
        level_max=cfg.p_level or None,
        reset_divisor=cfg.d or None,
        reset_floor=cfg.n_min or None,
        initial_reset=cfg.initial_reset or None,
        noise_var=cfg.sigma2_noise if variant == "nabp" else None,
        noise_period=cfg.noise_period,
    )


def _stop_rule(cfg: RunConfig) -> StopRule:
    if cfg.trials > 0:
        return StopRule(max_trials=cfg.trials, target_errors=None, batch=cfg.batch)
    return StopRule(max_trials=cfg.max_trials, target_errors=cfg.target_errors, batch=cfg.batch)


def _traced_point(spec, crc_cfg, params, ebno_db, rule, seed, sink) -> SweepStats:
    """Serial per-trial loop that also streams iteration digests to `sink`."""
    from .channel import ChannelConfig

    chan = ChannelConfig(float(ebno_db), spec.energy_rate)
    tally = _Tally()
    index = 0
    while not (
        tally.trials >= rule.max_trials
        or (rule.target_errors is not None and tally.frame_errors >= rule.target_errors)
    ):
        stop = min(index + rule.batch, rule.max_trials)
        for t in range(index, stop):
            rec = run_trial(spec, crc_cfg, params, chan, t, seed)
            for it, (sched_digest, dec_digest) in enumerate(rec.outcome.iteration_trace or (), 1):
                sink.write(f"{t} {it} {sched_digest:016x} {dec_digest:016x}\n")
            tally.add_trial(
                rec.frame_error, rec.bit_errors, rec.outcome.iterations_used, rec.error_class
            )
        index = stop
        if index >= rule.max_trials:
            break
    return SweepStats.from_tally(spec, params, float(ebno_db), tally, seed)


def cmd_construct(args) -> int:
    spec = bhattacharyya_construct(args.n, args.k, args.design_ebn0, crc_len=args.crc)
    save_spec(spec, args.out)
    print(f"wrote {args.out}: N={spec.N} K={spec.K} crc_len={spec.crc_len}")
    print(f"rate K/N = {spec.rate:.6f}; energy rate (K-crc)/N = {spec.energy_rate:.6f}")
    print(f"frozen positions: {spec.N - spec.K}")
    return 0


def cmd_simulate(args) -> int:
    cfg = RunConfig()
    if args.config:
        cfg = RunConfig.from_text(Path(args.config).read_text(), source=args.config)
    cfg = _merge_flags(cfg, args)
    if not cfg.ebno:
        raise ConfigError("no Eb/N0 points given (--ebno or --ebno-start/stop/step)")
    spec, crc_cfg = _load_code(cfg)
    rule = _stop_rule(cfg)
    out_csv = Path(cfg.out_csv)
    out_dat = Path(cfg.out_dat) if cfg.out_dat else out_csv.with_suffix(".dat")
    all_rows: list[SweepStats] = []
    trace_sink = open(cfg.trace_file, "w") if cfg.trace_file else None
    try:
        for variant in [v.strip() for v in cfg.decoder.split(",") if v.strip()]:
            params = _decoder_params(cfg, variant, trace=bool(trace_sink))
            params.validate(spec)
            for point in cfg.ebno:
                t0 = time.perf_counter()
                if trace_sink is not None:
                    stats = _traced_point(spec, crc_cfg, params, point, rule, cfg.seed, trace_sink)
                else:
                    stats = sweep(
                        spec, crc_cfg, params, [point],
                        stop_rule=rule, master_seed=cfg.seed, parallelism=cfg.parallelism,
                    )[0]
                append_results(out_csv, stats, out_dat)
                all_rows.append(stats)
                print(
                    f"[{variant}] Eb/N0={point:g} dB: fer={stats.fer:.3e} ber={stats.ber:.3e} "
                    f"trials={stats.trials} avg_iters={stats.avg_iters:.1f} "
                    f"({time.perf_counter() - t0:.1f}s)"
                )
    finally:
        if trace_sink is not None:
            trace_sink.close()
    if cfg.figures:
        from .plotting import render_report

        fig_dir = Path(cfg.fig_dir) if cfg.fig_dir else out_csv.parent
        paths = render_report(all_rows, fig_dir, stem=out_csv.stem)
        print("figures: " + " ".join(str(p) for p in paths))
    return 0


def cmd_plot(args) -> int:
    rows = []
    for path in args.csv:
        rows.extend(read_results_csv(path))
    if not rows:
        raise ConfigError("no result rows found")
    from .plotting import render_report

    paths = render_report(rows, args.out_dir, stem=args.stem)
    print("figures: " + " ".join(str(p) for p in paths))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarbp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a code and write its description file")
    c.add_argument("--n", type=int, required=True)
    c.add_argument("--k", type=int, required=True)
    c.add_argument("--crc", type=int, default=24)
    c.add_argument("--design-ebn0", dest="design_ebn0", type=float, default=0.0)
    c.add_argument("--out", default="code.spec")
    c.set_defaults(fn=cmd_construct)

    s = sub.add_parser("simulate", help="run Monte Carlo sweeps and write results")
    _add_simulate_flags(s)
    s.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("plot", help="render figures from existing result CSVs")
    p.add_argument("--csv", action="append", required=True)
    p.add_argument("--out-dir", dest="out_dir", default=".")
    p.add_argument("--stem", default="results")
    p.set_defaults(fn=cmd_plot)

    t = sub.add_parser("selftest", help="run the fast invariant suite")
    t.set_defaults(fn=cmd_selftest)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
