"""Command-line runner: ``detkey {audit,sweep,bound,demo}``.

Exit codes: 0 success, 1 audit found a violation, 2 configuration or usage
error, 3 enumeration cap exceeded.

Config files are flat ``key = value`` lines; ``#`` starts a comment.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import os
import sys
from dataclasses import dataclass, field

from .detmodel import ChannelTopology, Coherence, GainMode, sample_gains
from .gaussian import GaussianParams, Method, QuadratureError, theorem1_mc, theorem1_quadrature
from .protocols import Scheme, dumps_transcript, extract_secure_key, run_scheme, validate_scheme
from .secrecy import DEFAULT_ENUM_CAP, MAX_ENUM_CAP, EnumerationCapError, audit, extraction_applies

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_CONFIG = 2
EXIT_CAP = 3


class ConfigError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        where = f"line {line}, column {column}: " if line else ""
        super().__init__(where + message)
        self.line = line
        self.column = column


@dataclass
class GaussianBlock:
    p: float = 1.0
    sigma_k_sq: float = 1.0
    sigma_z_sq: float = 1.0
    samples: int = 1_000_000
    rel_tol: float = 1e-6


@dataclass
class ExperimentConfig:
    scheme: Scheme
    n_a: int
    n_b: int
    n_1: int
    n_2: int
    eve_mode: GainMode = GainMode.STATIC
    legit_mode: GainMode = GainMode.RANDOM
    coherence: Coherence = Coherence.EVERY_ROUND
    rounds: int = 1
    seed: int = 0
    enum_cap: int = DEFAULT_ENUM_CAP
    workers: int = 1
    gaussian: GaussianBlock | None = None
    lines: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def topology(self) -> ChannelTopology:
        return ChannelTopology(self.n_a, self.n_b, self.n_1, self.n_2, self.eve_mode, self.legit_mode)

    def validate(self) -> None:
        """Re-check topology and scheme constraints; raises :class:`ConfigError`."""
        if self.rounds < 1:
            raise ConfigError("rounds must be >= 1", *self.lines.get("rounds", (0, 0)))
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer", *self.lines.get("seed", (0, 0)))
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", *self.lines.get("workers", (0, 0)))
        try:
            topology = self.topology
        except ValueError as exc:
            raise ConfigError(f"topology violation: {exc}", *self._first_line("n_1", "n_2", "n_a", "n_b")) from None
        try:
            validate_scheme(self.scheme, topology)
        except ValueError as exc:
            raise ConfigError(str(exc), *self._first_line("scheme")) from None

    def _first_line(self, *keys):
        for k in keys:
            if k in self.lines:
                return self.lines[k]
        return (0, 0)


_INT_KEYS = ("n_a", "n_b", "n_1", "n_2", "rounds", "seed", "enum_cap", "workers")
_ENUM_KEYS = {"scheme": Scheme, "eve_mode": GainMode, "legit_mode": GainMode, "coherence": Coherence}
_GAUSS_KEYS = {"p": float, "sigma_k_sq": float, "sigma_z_sq": float, "samples": int, "rel_tol": float}
_REQUIRED = ("scheme", "n_a", "n_b", "n_1", "n_2")
SWEEPABLE = _INT_KEYS


def _convert(key: str, raw: str, line: int, column: int):
    try:
        if key in _INT_KEYS:
            return int(raw, 0)
        if key in _ENUM_KEYS:
            return _ENUM_KEYS[key](raw)
        if key.startswith("gaussian."):
            return _GAUSS_KEYS[key.split(".", 1)[1]](raw)
    except (ValueError, KeyError):
        raise ConfigError(f"invalid value {raw!r} for {key}", line, column) from None
    raise ConfigError(f"unknown key {key!r}", line, column)


def parse_config(text: str) -> ExperimentConfig:
    values: dict = {}
    where: dict = {}
    gauss: dict = {}
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0]
        if not line.strip():
            continue
        if "=" not in line:
            col = len(line) - len(line.lstrip()) + 1
            raise ConfigError("expected 'key = value'", lineno, col)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        key_col = len(key_part) - len(key_part.lstrip()) + 1
        value = value_part.strip()
        value_col = len(key_part) + 1 + len(value_part) - len(value_part.lstrip()) + 1
        known = key in _INT_KEYS or key in _ENUM_KEYS or (
            key.startswith("gaussian.") and key.split(".", 1)[1] in _GAUSS_KEYS
        )
        if not known:
            raise ConfigError(f"unknown key {key!r}", lineno, key_col)
        if key in where or key in gauss:
            raise ConfigError(f"duplicate key {key!r}", lineno, key_col)
        converted = _convert(key, value, lineno, value_col)
        if key.startswith("gaussian."):
            gauss[key.split(".", 1)[1]] = converted
        else:
            values[key] = converted
        where[key] = (lineno, key_col)
    missing = [k for k in _REQUIRED if k not in values]
    if missing:
        raise ConfigError(f"missing required key(s): {', '.join(missing)}")
    cfg = ExperimentConfig(**values, lines=where)
    if gauss:
        cfg.gaussian = GaussianBlock(**gauss)
    cfg.validate()
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text)


def _effective_cap(cfg: ExperimentConfig) -> int:
    env = os.environ.get("DETKEY_ENUM_CAP")
    if not env:
        cap = cfg.enum_cap
    else:
        try:
            cap = int(env)
        except ValueError:
            raise ConfigError(f"DETKEY_ENUM_CAP={env!r} is not an integer") from None
    if not 0 <= cap <= MAX_ENUM_CAP:
        raise ConfigError(f"enumeration cap must lie in [0, {MAX_ENUM_CAP}], got {cap}")
    return cap


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def _report_table(cfg: ExperimentConfig, report) -> str:
    t = cfg.topology
    head = (
        f"scheme={cfg.scheme.value} n_a={t.n_a} n_b={t.n_b} n_1={t.n_1} n_2={t.n_2} "
        f"eve_mode={t.eve_mode.value} legit_mode={t.legit_mode.value} "
        f"coherence={cfg.coherence.value} rounds={cfg.rounds}"
    )
    width = max(len(f) for f in report.FIELDS)
    rows = [f"{name:<{width}}  {_fmt(getattr(report, name))}" for name in report.FIELDS]
    return "\n".join([head, *rows]) + "\n"


def _run_audit(cfg: ExperimentConfig):
    return audit(
        cfg.scheme, cfg.topology, cfg.rounds, cfg.coherence,
        cap=_effective_cap(cfg), workers=cfg.workers,
    )


def cmd_audit(args, out) -> int:
    cfg = load_config(args.config)
    if args.workers is not None:
        cfg.workers = args.workers
    try:
        report = _run_audit(cfg)
    except EnumerationCapError as exc:
        print(f"error: {exc}; raise enum_cap or DETKEY_ENUM_CAP to at least {exc.required_bits}",
              file=sys.stderr)
        return EXIT_CAP
    out.write(report.to_json() + "\n" if args.json else _report_table(cfg, report))
    ok = report.mismatch_prob == 0
    if extraction_applies(cfg.scheme, cfg.topology):
        ok = ok and report.leakage_is_exactly_zero
    return EXIT_OK if ok else EXIT_VIOLATION


SWEEP_COLUMNS = ("value", "r_d", "r_sd", "key_entropy", "leakage", "mismatch")


def cmd_sweep(args, out) -> int:
    cfg = load_config(args.config)
    if args.param not in SWEEPABLE:
        raise ConfigError(f"cannot sweep {args.param!r}; choose one of {', '.join(SWEEPABLE)}")
    values = []
    for raw in args.values:
        for piece in raw.split(","):
            if piece.strip():
                try:
                    values.append(int(piece, 0))
                except ValueError:
                    raise ConfigError(f"sweep value {piece!r} is not an integer") from None
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for v in values:
        point = dataclasses.replace(cfg, **{args.param: v})
        try:
            point.validate()
            r = _run_audit(point)
        except (ConfigError, EnumerationCapError) as exc:
            writer.writerow([v, f"error: {exc}", "", "", "", ""])
            continue
        writer.writerow([
            v, repr(r.r_d), "" if r.r_sd is None else repr(r.r_sd),
            repr(r.key_entropy_bits), repr(r.leakage_bits), repr(r.mismatch_prob),
        ])
    return EXIT_OK


def _bound_inputs(args):
    """Flags override the config's gaussian block; returns the resolved args."""
    block = GaussianBlock()
    if args.config:
        cfg = load_config(args.config)
        if cfg.gaussian is None:
            raise ConfigError(f"{args.config} has no gaussian.* keys")
        block = cfg.gaussian
    for name in ("p", "sigma_k_sq", "sigma_z_sq", "samples", "rel_tol"):
        if getattr(args, name) is None:
            setattr(args, name, getattr(block, name))
    return args


def cmd_bound(args, out) -> int:
    args = _bound_inputs(args)
    try:
        params = GaussianParams(args.p, args.sigma_k_sq, args.sigma_z_sq)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    method = Method(args.method)
    if method is Method.MONTE_CARLO:
        if args.samples < 1:
            raise ConfigError("samples must be >= 1")
        est = theorem1_mc(params, args.samples, args.seed)
    else:
        if not 0 < args.rel_tol <= 1e-2:
            raise ConfigError("rel_tol must lie in (0, 1e-2]")
        try:
            est = theorem1_quadrature(params, args.rel_tol)
        except QuadratureError as exc:
            print(f"error: {exc}; best estimate {exc.best.value!r}", file=sys.stderr)
            return EXIT_CAP
    if args.csv:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(est.CSV_HEADER)
        writer.writerow([repr(x) if isinstance(x, float) else x for x in est.csv_row(params)])
        return EXIT_OK
    out.write(
        f"method     {est.method.value}\n"
        f"value      {est.value!r}\n"
        f"clamped    {est.clamped!r}\n"
        f"std_error  {est.std_error!r}\n"
        + "".join(f"term{i + 1}      {t!r}\n" for i, t in enumerate(est.terms))
    )
    return EXIT_OK


DEMO_TOPOLOGY = ChannelTopology(4, 4, 2, 2, GainMode.STATIC, GainMode.RANDOM)
DEMO_SEED = 20170101


def cmd_demo(args, out) -> int:
    t = DEMO_TOPOLOGY
    gains = sample_gains(t, DEMO_SEED, 1)
    transcript, keys = run_scheme(Scheme.PRODUCT, t, gains, 1, (DEMO_SEED + 1, DEMO_SEED + 2))
    r = transcript.rounds[0]
    secure = extract_secure_key(r.s_a, t)
    out.write(
        "product signalling, one round\n"
        f"topology   n_a={t.n_a} n_b={t.n_b} n_1={t.n_1} n_2={t.n_2} (static Eve gain)\n"
        f"K          {r.gains.k_matrix.first_col}\n"
        f"K'         {r.gains.k_prime_matrix.first_col}\n"
        f"x_a        {r.x_a}\n"
        f"x_b        {r.x_b}\n"
        f"y_b = K x_a       {r.y_b}\n"
        f"y_a = K' x_b      {r.y_a}\n"
        f"Eve (odd)  {r.y_e_odd}\n"
        f"Eve (even) {r.y_e_even}\n"
        f"s_a = T(x_a) y_a  {keys.s_a}\n"
        f"s_b = T(x_b) y_b  {keys.s_b}\n"
        f"keys agree {keys.agree}\n"
        f"secure key {secure} ({secure.length} bits)\n"
        "transcript\n"
        + dumps_transcript(transcript)
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detkey", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("audit", help="exhaustive secrecy audit of one configuration")
    p.add_argument("config")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.add_argument("--workers", type=int, default=None, help="override config workers")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="audit while varying one integer config field; CSV output")
    p.add_argument("config")
    p.add_argument("param")
    p.add_argument("values", nargs="*", help="values, space- or comma-separated")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", help="evaluate the Gaussian key-rate lower bound")
    p.add_argument("--config", help="take defaults from the config's gaussian.* keys")
    p.add_argument("--p", type=float)
    p.add_argument("--sigma-k-sq", type=float)
    p.add_argument("--sigma-z-sq", type=float)
    p.add_argument("--method", choices=[m.value for m in Method], default="quad")
    p.add_argument("--samples", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("demo", help="print a worked product-signalling round")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "bound" and not args.config:
        missing = [f for f in ("p", "sigma_k_sq", "sigma_z_sq") if getattr(args, f) is None]
        if missing:
            parser.error("bound requires " + ", ".join("--" + m.replace("_", "-") for m in missing)
                         + " (or --config)")
    try:
        return args.func(args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
