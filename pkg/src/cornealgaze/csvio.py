"""CSV output with fixed column sets per table."""

import csv
import math

import numpy as np

SCHEMAS = {
    "frames": ("frame_index", "ellipse_x", "ellipse_y", "r_max", "r_min", "ellipse_phi",
               "phi", "tau", "depth", "grp_x", "grp_y", "confidence", "flags"),
    "simulate": ("frame_index", "true_phi", "true_tau", "true_depth", "est_phi", "est_tau",
                 "est_depth", "tau_error_deg", "grp_error_px", "confidence", "flags"),
    "sensitivity": ("parameter", "perturbation", "gaze_error_deg"),
    "kappa_conv": ("k", "mean_error_deg"),
    "accuracy": ("subject", "depth_mm", "kappa_h_deg", "kappa_v_deg", "error_without_deg",
                 "error_with_deg"),
    "design": ("distance_mm", "achieved_px_per_cm", "required_px_per_cm"),
    "autofocus": ("depth_mm", "back_focal_mm", "motor", "predicted", "command"),
}


def format_value(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if v == 0:
            return "0"  # no "-0"
        return format(v, ".6g")
    if isinstance(v, (set, frozenset)):
        return ";".join(sorted(v))
    return str(v)


def write_csv(path, schema, rows):
    """Write ``rows`` (dicts or sequences) under the named schema's header."""
    header = SCHEMAS[schema]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                extra = set(row) - set(header)
                if extra:
                    raise KeyError(f"columns not in the {schema} schema: {sorted(extra)}")
                row = [row.get(k) for k in header]
            elif len(row) != len(header):
                raise ValueError(f"{schema} rows need {len(header)} values, got {len(row)}")
            w.writerow([format_value(v) for v in row])


def read_csv(path):
    """Header and rows (as strings)."""
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)
