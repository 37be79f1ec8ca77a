#!/usr/bin/env python3.12
"""Sweep kappa and depth n, tabulating graph variation, attractor Lyapunov exponent and off-peak decay."""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List

from dotenv import load_dotenv


def _init_paths() -> None:
    """Ensure the project src directory is importable."""
    project_root = Path(__file__).resolve().parents[1]
    src_path = project_root / "src"
    if str(src_path) not in sys.path:
        sys.path.insert(0, str(src_path))


load_dotenv()
_init_paths()

from sna_lab import RunManager, SystemParams  # noqa: E402  pylint: disable=wrong-import-position
from sna_lab.core import bounding_lines, constants_gate, dimension_lab  # noqa: E402  pylint: disable=wrong-import-position
from sna_lab.core.errors import SNAError  # noqa: E402  pylint: disable=wrong-import-position
from sna_lab.utils.file_utils import csv_text  # noqa: E402  pylint: disable=wrong-import-position
from sna_lab.utils.validators import parse_depths  # noqa: E402  pylint: disable=wrong-import-position

HEADER = ["kappa", "n", "variation", "lyapunov", "excluded", "decay_slope", "decay_r2"]


def study_kappa(kappa: float, depths: List[int], grid: int, decay_grid: int,
                status_printer) -> List[List[Any]]:
    """Rows of the study table for one steepness value."""
    params = SystemParams(kappa=kappa)
    consts = constants_gate.derive_constants(params)
    fit = bounding_lines.offpeak_decay(params, consts, depths, decay_grid)
    status_printer(f"📉 kappa={kappa}: decay slope {fit.slope:.4f} (r2 {fit.r2:.4f})")
    rows = []
    for n in depths:
        variation = dimension_lab.graph_variation(params, n, grid)
        lyap = dimension_lab.graph_lyapunov(params, n, grid, status_callback=status_printer)
        status_printer(f"   n={n}: variation {variation:.6g}, lyapunov {lyap.value:.6g}")
        rows.append([kappa, n, variation, lyap.value, lyap.excluded, fit.slope, fit.r2])
    return rows


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Tabulate how the bounding lines converge as depth and steepness vary."
    )
    parser.add_argument(
        "--kappas",
        default="2.5,3,4",
        help="Comma-separated steepness values (default: 2.5,3,4)",
    )
    parser.add_argument(
        "--depths",
        default="50,100,200,400",
        help="Depths as start:stop:step or a comma list (default: 50,100,200,400)",
    )
    parser.add_argument(
        "--grid",
        type=int,
        default=100000,
        help="Grid size for variation and Lyapunov estimates (default: 100000)",
    )
    parser.add_argument(
        "--decay-grid",
        type=int,
        default=1000,
        help="Grid size for the off-peak decay fit (default: 1000)",
    )
    parser.add_argument(
        "--out",
        help="Output CSV path (default: $SNA_RUNS_DIR/convergence-study.csv)",
    )
    parser.add_argument(
        "--stop-on-error",
        action="store_true",
        help="Abort the sweep when a single kappa fails (default: continue)",
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Print intermediate status messages",
    )
    return parser


def main() -> None:
    parser = build_arg_parser()
    args = parser.parse_args()

    status_printer = print if args.verbose else (lambda *_: None)
    try:
        kappas = [float(k) for k in args.kappas.split(",")]
        depths = parse_depths(args.depths)
    except (ValueError, SNAError) as exc:
        parser.error(str(exc))

    rows: List[List[Any]] = []
    failed: List[Dict[str, Any]] = []
    for kappa in kappas:
        print(f"🔬 Studying kappa={kappa}")
        try:
            rows.extend(study_kappa(kappa, depths, args.grid, args.decay_grid, status_printer))
        except Exception as exc:  # pylint: disable=broad-except
            print(f"❌ kappa={kappa} failed: {exc}")
            failed.append({"kappa": kappa, "error": str(exc)})
            if args.stop_on_error:
                break

    manager = RunManager(status_callback=status_printer)
    manifest = {"command": "convergence_study", "kappas": kappas, "depths": depths,
                "grid": args.grid, "decay_grid": args.decay_grid, "failed": failed}
    path = manager.save_artifact(manager.resolve(args.out, "convergence-study.csv"),
                                 csv_text(HEADER, rows), manifest)
    print(f"\n📦 Study table: {path}")
    print(f"   Rows: {len(rows)}")

    if failed:
        print(f"\n⚠️  {len(failed)} kappa values failed. Review logs above for details.")
        sys.exit(1)


if __name__ == "__main__":
    main()
