"""``gaze`` command line.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

import argparse
import logging
import os
import sys

from .config import MODES, RunConfig
from .errors import ConfigError, DataError

log = logging.getLogger("cornealgaze")


def build_parser():
    p = argparse.ArgumentParser(prog="gaze", description="Corneal-image gaze experiments.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", help="flat section.key = value file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--input", help="directory of PGM/PPM frames (detect, track)")
    p.add_argument("--seed", type=int, help="shortcut for --set run.seed=N")
    return p


def _summary(mode, result):
    if mode in ("detect", "track", "simulate") and isinstance(result, dict):
        return ", ".join(f"{k}={v if not isinstance(v, float) else format(v, '.4g')}"
                         for k, v in result.items())
    if mode == "design":
        return "\n".join(result)
    if mode == "autofocus-calib":
        return f"slope={result.slope:.6g} intercept={result.intercept:.6g} rms={result.rms_residual:.3g}"
    if mode == "kappa-conv":
        return "\n".join(f"k={k}: {e:.4f} deg" for k, e in result)
    if mode == "accuracy":
        return "\n".join(f"subject {r['subject']} @ {r['depth_mm']:g} mm: "
                         f"{r['error_without_deg']:.3f} deg without kappa, "
                         f"{r['error_with_deg']:.3f} deg with" for r in result)
    if mode == "sensitivity":
        return "\n".join(f"{g}: max {max(e for _, e in c):.3f} deg" for g, c in result.items())
    return ""


def main(argv=None):
    level = os.environ.get("GAZE_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    from .experiments import RUNNERS

    try:
        cfg = RunConfig.load(args.mode, args.out, args.config, args.overrides, args.seed,
                             args.input)
        result = RUNNERS[args.mode](cfg)
    except ConfigError as exc:
        print(f"gaze: config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"gaze: data error: {exc}", file=sys.stderr)
        return 3
    text = _summary(args.mode, result)
    if text:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
