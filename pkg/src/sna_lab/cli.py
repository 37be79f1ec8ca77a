"""
Command-line interface: sna check|graph|dims|lyapunov|partition|pinched|verify|runs
命令行接口

Exit codes: 0 success, 1 configuration or argument error, 2 numeric failure.
"""

import argparse
import sys
import typing
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

from dotenv.parser import parse_stream

from . import __version__
from .core.dimension_lab import pinched_fraction
from .core.errors import ConfigError, NumericFailure
from .core.lab import METHODS, PROPS, SNALab
from .core.run_manager import RunManager
from .core.torus_dynamics import SystemParams, TorusPoint, decimal_rotation, default_rotation
from .utils.file_utils import csv_text, json_text
from .utils.validators import parse_depths, parse_float_list, parse_ladder, validate_rho_spec

COMMANDS = ("check", "graph", "dims", "lyapunov", "partition", "pinched", "verify", "runs")

# per-command defaults applied when neither the config file nor a flag sets a value
COMMAND_DEFAULTS = {
    "graph": {"n": 6, "grid": 4096, "format": "csv"},
    "dims": {"grid": 2048, "format": "json"},
    "lyapunov": {"n": 2000, "grid": 100000, "format": "json"},
    "partition": {"format": "csv"},
    "verify": {"n": 200, "grid": 1000, "format": "json"},
}

CSV_COMMANDS = ("graph", "dims", "partition")


@dataclass
class RunConfig:
    """Resolved configuration of one run"""

    command: str = "check"
    kappa: float = 3.0
    D: int = 1
    rho: Optional[str] = None
    c: float = 0.2
    d: float = 1.1
    theta_star: Optional[str] = None
    seed: int = 0
    out: Optional[str] = None
    format: Optional[str] = None
    q: int = 1
    verbose: bool = False
    # check
    N: int = 10 ** 4
    pitch: Optional[float] = None
    horizon: int = 10 ** 6
    # graph / lyapunov / verify
    n: Optional[int] = None
    grid: Optional[int] = None
    last_only: bool = False
    # dims
    method: str = "info"
    samples: int = 100000
    anchors: int = 1000
    ladder: Optional[str] = None
    depth: str = "auto"
    anchor_theta: Optional[str] = None
    grid_sample: bool = False
    # lyapunov
    orbit_length: int = 10 ** 6
    mode: str = "both"
    # partition
    J: Optional[int] = None
    # pinched
    theta: Optional[str] = None
    t: int = 200
    n_check: Optional[int] = None
    # verify
    prop: str = "41i"
    pairs: int = 10000
    depths: Optional[str] = None
    # runs
    show: Optional[str] = None

    def resolved(self) -> "RunConfig":
        """Fill per-command defaults and validate."""
        updates = {key: value for key, value in COMMAND_DEFAULTS.get(self.command, {}).items()
                   if getattr(self, key) is None}
        if self.rho is None:
            updates["rho"] = "golden" if self.D == 1 else "default"
        if self.command == "verify" and self.n is None and self.prop == "sbound":
            updates["n"] = 500
        if self.format is None and "format" not in updates:
            updates["format"] = "json"
        config = replace(self, **updates)
        config.validate()
        return config

    def validate(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.format not in ("csv", "json"):
            raise ConfigError(f"--format must be csv or json, got {self.format!r}")
        if self.format == "csv" and self.command not in CSV_COMMANDS:
            raise ConfigError(f"--format csv conflicts with command {self.command!r} (JSON only)")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"--seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.method not in METHODS:
            raise ConfigError(f"--method must be one of {', '.join(METHODS)}")
        if self.prop not in PROPS:
            raise ConfigError(f"--prop must be one of {', '.join(PROPS)}")
        if self.depth != "auto":
            _to_int("depth", self.depth)
        validate_rho_spec(self.rho, self.D)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def system_params(self, status: Callable[[str], None]) -> SystemParams:
        spec = (self.rho or "golden").strip().lower()
        if spec in ("golden", "default"):
            hi, lo = default_rotation(self.D)
        else:
            status("⚠️ --rho given as decimals; validity rests on the Diophantine check")
            pairs = [decimal_rotation(part) for part in validate_rho_spec(spec, self.D)]
            hi, lo = tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)
        star = None
        if self.theta_star:
            star = TorusPoint(tuple(parse_float_list(self.theta_star, self.D, "theta_star")))
        return SystemParams(kappa=self.kappa, D=self.D, rho=TorusPoint(hi), rho_lo=lo,
                            c=self.c, d=self.d, theta_star=star)

    def ladder_values(self, samples: int) -> List[float]:
        from .core.dimension_lab import default_ladder, geometric_ladder

        if not self.ladder:
            return default_ladder(samples ** (1.0 / self.D))
        return geometric_ladder(*parse_ladder(self.ladder))


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

def _field_types() -> Dict[str, type]:
    hints = typing.get_type_hints(RunConfig)
    types = {}
    for item in fields(RunConfig):
        kind = hints[item.name]
        args = [a for a in typing.get_args(kind) if a is not type(None)]
        types[item.name] = args[0] if args else kind
    return types


def _to_int(key: str, text: Any) -> int:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ConfigError(f"invalid integer for key {key!r}: {text!r}") from None
    if not value.is_integer():
        raise ConfigError(f"invalid integer for key {key!r}: {text!r}")
    return int(value)


def _coerce(key: str, kind: type, text: str) -> Any:
    if kind is bool:
        lowered = text.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off", ""):
            return False
        raise ConfigError(f"invalid boolean for key {key!r}: {text!r}")
    if kind is int:
        return _to_int(key, text)
    if kind is float:
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"invalid number for key {key!r}: {text!r}") from None
    return text


def load_config(path: str) -> RunConfig:
    """
    Load a KEY=VALUE run configuration file
    读取 KEY=VALUE 形式的运行配置文件

    Keys are case-insensitive RunConfig field names ('-' and '_' interchangeable).
    """
    source = Path(path)
    if not source.is_file():
        raise ConfigError(f"config file not found: {path}")
    types = _field_types()
    names = {name.lower(): name for name in types}
    values: Dict[str, Any] = {}
    with open(source, "r", encoding="utf-8") as f:
        for binding in parse_stream(f):
            if binding.error:
                text = binding.original.string
                column = len(text) - len(text.lstrip()) + 1
                raise ConfigError(f"{path}: parse error at line {binding.original.line}, column {column}")
            if binding.key is None:
                continue
            key = binding.key.strip().lower().replace("-", "_")
            if key not in names:
                raise ConfigError(f"{path}: unknown key {binding.key!r}")
            name = names[key]
            values[name] = _coerce(name, types[name], binding.value or "")
    return RunConfig(**values)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """ArgumentParser that raises ConfigError instead of exiting"""

    def error(self, message):
        raise ConfigError(message)


def _count(text: str) -> int:
    return _to_int("value", text)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="KEY=VALUE run configuration file / 运行配置文件")
    common.add_argument("--kappa", type=float, help="steepness kappa (default: 3)")
    common.add_argument("--D", type=_count, help="base dimension (default: 1)")
    common.add_argument("--rho", help="rotation: golden | default | comma-separated decimals")
    common.add_argument("--c", type=float, help="Diophantine constant c (default: 0.2)")
    common.add_argument("--d", type=float, help="Diophantine exponent d (default: 1.1)")
    common.add_argument("--theta-star", dest="theta_star", help="pinching point (default: origin)")
    common.add_argument("--seed", type=_count, help="seed of the Philox generator (default: 0)")
    common.add_argument("--q", type=_count, help="peak-ball offset q (default: 1)")
    common.add_argument("--out", help="artifact path (default: $SNA_RUNS_DIR/<command>-<hash>...)")
    common.add_argument("--format", choices=["csv", "json"], help="artifact format")
    common.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")

    parser = _Parser(
        prog="sna",
        description="SNA Lab - pinched skew-product laboratory / 夹点斜积映射实验室",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples / 示例:
  sna graph --kappa 3 --rho golden --n 6 --grid 4096 --out graph.csv
  sna check --kappa 3 --c 0.2 --d 1.1 --D 1
  sna dims --method info --kappa 3 --samples 1000000 --anchors 1000 --seed 7
        """,
    )
    parser.add_argument("--version", action="version", version=f"sna_lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    check = sub.add_parser("check", parents=[common], argument_default=argparse.SUPPRESS,
                           help="derived constants and condition report")
    check.add_argument("--N", type=_count, help="exhaustive horizon for conditions (8)/(12)")
    check.add_argument("--pitch", type=float, help="grid pitch for condition (13)")
    check.add_argument("--horizon", type=_count, help="Diophantine certification horizon")

    graph = sub.add_parser("graph", parents=[common], argument_default=argparse.SUPPRESS,
                           help="iterated upper bounding lines on a grid")
    graph.add_argument("--n", type=_count, help="depth (default: 6)")
    graph.add_argument("--grid", type=_count, help="grid size M (default: 4096)")
    graph.add_argument("--last-only", dest="last_only", action="store_true", help="emit depth n only")

    dims = sub.add_parser("dims", parents=[common], argument_default=argparse.SUPPRESS,
                          help="dimension estimates of the attractor measure")
    dims.add_argument("--method", choices=list(METHODS))
    dims.add_argument("--samples", type=_count)
    dims.add_argument("--anchors", type=_count)
    dims.add_argument("--ladder", help="<coarse>:<fine>:<ratio>, e.g. 2^-3:2^-12:0.5")
    dims.add_argument("--depth", help="proxy depth n or 'auto'")
    dims.add_argument("--grid", type=_count, help="grid used by the depth stopping rule")
    dims.add_argument("--anchor-theta", dest="anchor_theta", help="base point of the anchor")
    dims.add_argument("--grid-sample", dest="grid_sample", action="store_true",
                      help="sample the measure on the M-grid instead of uniform random points")

    lyap = sub.add_parser("lyapunov", parents=[common], argument_default=argparse.SUPPRESS,
                          help="zero-line and attractor Lyapunov exponents")
    lyap.add_argument("--n", type=_count, help="proxy depth (default: 2000)")
    lyap.add_argument("--grid", type=_count, help="grid size M (default: 100000)")
    lyap.add_argument("--N", dest="orbit_length", type=_count, help="zero-line orbit length")
    lyap.add_argument("--mode", choices=["both", "zero", "graph"])

    part = sub.add_parser("partition", parents=[common], argument_default=argparse.SUPPRESS,
                          help="Monte-Carlo census of the Omega-partition")
    part.add_argument("--samples", type=_count)
    part.add_argument("--J", type=_count, help="scan horizon (default: j0 + 100)")

    pinched = sub.add_parser("pinched", parents=[common], argument_default=argparse.SUPPRESS,
                             help="lower bound for phi^+ off the pinched set")
    pinched.add_argument("--theta", help="base point (default: theta* + 1/2)")
    pinched.add_argument("--t", type=_count, help="chain length t (default: 200)")
    pinched.add_argument("--n-check", dest="n_check", type=_count, help="cross-check depth (default: 10 t)")

    verify = sub.add_parser("verify", parents=[common], argument_default=argparse.SUPPRESS,
                            help="sampled verifiers")
    verify.add_argument("--prop", choices=list(PROPS))
    verify.add_argument("--n", type=_count)
    verify.add_argument("--pairs", type=_count)
    verify.add_argument("--depths", help="decay depths start:stop:step (default: 50:300:25)")
    verify.add_argument("--grid", type=_count, help="grid size for the decay fit")

    runs = sub.add_parser("runs", argument_default=argparse.SUPPRESS, help="list saved runs and their manifests")
    runs.add_argument("--show", help="print the manifest of one artifact")
    runs.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    return parser


def parse_args(argv: List[str]) -> RunConfig:
    """
    Resolve defaults < config file < command-line flags
    解析参数：默认值 < 配置文件 < 命令行
    """
    values = vars(build_parser().parse_args(argv))
    config_path = values.pop("config", None)
    base = load_config(config_path) if config_path else RunConfig()
    return replace(base, **values).resolved()


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

Artifact = Tuple[str, Dict[str, Any]]


def _cmd_check(lab: SNALab, config: RunConfig) -> Artifact:
    report = lab.check(N=config.N, pitch=config.pitch, horizon=config.horizon)
    return json_text(report.to_dict()), {"tolerances": {"N": config.N, "pitch": config.pitch,
                                                         "horizon": config.horizon}}


def _cmd_graph(lab: SNALab, config: RunConfig) -> Artifact:
    samples = list(lab.graph(config.grid, config.n, last_only=config.last_only))
    proxy = {"proxy_depth_n": config.n}
    if config.format == "csv":
        rows = (row for sample in samples for row in sample.rows())
        return csv_text(samples[0].header(), rows), proxy
    payload = {
        "params_hash": samples[0].params_hash,
        "grid": samples[0].grid,
        "curves": [{"n": s.n, "values": s.values} for s in samples],
    }
    return json_text(payload), proxy


def _cmd_dims(lab: SNALab, config: RunConfig) -> Artifact:
    ladder = config.ladder_values(config.samples)
    depth = config.depth if config.depth == "auto" else _to_int("depth", config.depth)
    sample = lab.measure(config.samples, depth, ladder, config.seed, depth_grid=config.grid,
                         grid_sample=config.grid_sample)
    anchor = None
    if config.anchor_theta:
        anchor = TorusPoint(tuple(parse_float_list(config.anchor_theta, config.D, "anchor_theta")))
    result = lab.dims(config.method, sample, ladder, config.anchors, config.seed, anchor_theta=anchor)
    proxy = {"proxy_depth_n": sample.n, "proxy_tolerance": sample.tolerance,
             "sampling": "grid" if config.grid_sample else "uniform", "pinched_fraction": pinched_fraction(sample)}
    if config.method == "density":
        if config.format == "csv":
            return csv_text(["eps", "ratio"], result.rows), proxy
        payload = {"method": "density", "rows": result.rows, "convention": result.convention,
                   "excluded": result.excluded, "flags": result.flags, "tail_spread": result.tail_spread,
                   "seed": config.seed, "proxy_depth_n": sample.n, "proxy_tolerance": sample.tolerance}
        return json_text(payload), proxy
    if config.format == "csv":
        return csv_text(["eps", "stat"], result.eps_rows()), proxy
    return json_text(result.to_dict()), proxy


def _cmd_lyapunov(lab: SNALab, config: RunConfig) -> Artifact:
    out = lab.lyapunov(config.n, config.grid, config.orbit_length, mode=config.mode)
    return json_text(out), {"proxy_depth_n": config.n}


def _cmd_partition(lab: SNALab, config: RunConfig) -> Artifact:
    census = lab.partition(config.samples, config.seed, config.J)
    bounds = lab.partition_bounds(census)
    meta = {"tolerances": {"J": census.J, "j0": census.j0}, "limsup_cover_sum": bounds["limsup_cover_sum"]}
    if config.format == "csv":
        header = ["j"] + [f"tau_{i + 1}" for i in range(config.D)] + ["r_j", "leb_estimate", "count"]
        rows = ([row["j"], *row["tau"], row["r_j"], row["leb_estimate"], row["count"]] for row in census.rows)
        return csv_text(header, rows), meta
    payload = {"rows": census.rows, "samples": census.samples, "seed": census.seed, "J": census.J,
               "j0": census.j0, "omega_infinity_bound": census.omega_infinity_bound, **bounds}
    return json_text(payload), meta


def _cmd_pinched(lab: SNALab, config: RunConfig) -> Artifact:
    theta = None
    if config.theta:
        theta = TorusPoint(tuple(parse_float_list(config.theta, config.D, "theta")))
    out = lab.pinched(theta, config.t, config.n_check)
    return json_text(out), {"proxy_depth_n": out["n_check"]}


def _cmd_verify(lab: SNALab, config: RunConfig) -> Artifact:
    depths = parse_depths(config.depths) if config.depths else ()
    report = lab.verify(config.prop, config.n, config.pairs, config.seed, depths=depths, M=config.grid)
    return json_text(report.to_dict()), {"proxy_depth_n": config.n}


_DISPATCH = {
    "check": _cmd_check,
    "graph": _cmd_graph,
    "dims": _cmd_dims,
    "lyapunov": _cmd_lyapunov,
    "partition": _cmd_partition,
    "pinched": _cmd_pinched,
    "verify": _cmd_verify,
}


def execute(config: RunConfig, status: Callable[[str], None]) -> Path:
    """Run one resolved configuration and write its artifact."""
    params = config.system_params(status)
    lab = SNALab(params, q=config.q, status_callback=status)
    content, meta = _DISPATCH[config.command](lab, config)
    manager = RunManager(status_callback=status)
    name = f"{config.command}-{params.params_hash}-s{config.seed}.{config.format}"
    manifest = {"command": config.command, "config": config.to_dict(), "seed": config.seed,
                "params": params.to_dict(), "params_hash": params.params_hash}
    manifest.update(meta)
    return manager.save_artifact(manager.resolve(config.out, name), content, manifest)


def list_runs(config: RunConfig, status: Callable[[str], None]) -> int:
    """
    Print saved runs, or the manifest of one artifact with --show
    列出保存的运行
    """
    manager = RunManager(status_callback=status)
    if config.show:
        print(json_text(manager.load_manifest(config.show)), end="")
        return 0
    runs = manager.list_runs()
    if not runs:
        print(f"📋 No saved runs found in {manager.runs_dir} / 没有找到保存的运行")
        return 0
    print(f"📋 Found {len(runs)} saved runs / 找到{len(runs)}个保存的运行:\n")
    for i, record in enumerate(runs, 1):
        print(f"{i}. {record.get('artifact')}")
        print(f"   🧪 Command: {record.get('command')}, seed {record.get('seed')}")
        print(f"   🔑 Params: {record.get('params_hash')}")
        print()
    return 0


def _status_printer(verbose: bool) -> Callable[[str], None]:
    if verbose:
        return lambda msg: print(msg, file=sys.stderr)
    return lambda msg: None


def run(argv: Optional[List[str]] = None) -> int:
    """
    Entry point of the sna command
    sna 命令入口
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        config = parse_args(argv)
        if config.command == "runs":
            return list_runs(config, _status_printer(config.verbose))
        path = execute(config, _status_printer(config.verbose))
        print(f"✅ {config.command}: {path}")
        return 0
    except ConfigError as e:
        print(f"❌ Config error: {e}", file=sys.stderr)
        return 1
    except NumericFailure as e:
        print(f"❌ Numeric failure: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 0
    except Exception as e:
        print(f"❌ Error: {e}", file=sys.stderr)
        return 1
