"""Post-processing of run outputs: cross-run comparison and smoothed reward curves."""

from __future__ import annotations

import csv

import numpy as np

from ..metrics import METRIC_FIELDS

# lower is better for outages, higher for everything else
LOWER_IS_BETTER = {"cue_outage_prob", "d2d_outage_prob"}
RANKED_METRICS = [m for m in METRIC_FIELDS if m != "slots"]
REQUIRED = {"schema_version", "algorithm", "sweep_axis", "sweep_value"} | set(RANKED_METRICS)


class SchemaError(ValueError):
    pass


def read_csv(path) -> tuple:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def _rank(values, lower_better):
    """Dense 1-based ranks; missing entries (None) get ''."""
    present = sorted({v for v in values if v is not None}, reverse=not lower_better)
    pos = {v: i + 1 for i, v in enumerate(present)}
    return ["" if v is None else pos[v] for v in values]


def compare(paths) -> tuple:
    """Join result CSVs by sweep point and rank algorithms per metric.

    Returns ``(fieldnames, rows)``. A single input comes back untouched. With
    several inputs every (source, algorithm) series is checked against the union
    of sweep points and a ``flag=missing`` row stands in for each gap.
    """
    if not paths:
        raise ValueError("compare needs at least one CSV")
    tables = [read_csv(p) for p in paths]
    header = tables[0][0]
    for p, (h, rows) in zip(paths, tables):
        missing = REQUIRED - set(h)
        if missing:
            raise SchemaError(f"{p}: missing columns {sorted(missing)}")
        if h != header:
            raise SchemaError(f"{p}: columns differ from {paths[0]}")
    versions = {r["schema_version"] for _, rows in tables for r in rows}
    if len(versions) > 1:
        raise SchemaError(f"mixed schema versions {sorted(versions)}")
    if len(tables) == 1:
        return header, [dict(r) for r in tables[0][1]]

    axes = {r["sweep_axis"] for _, rows in tables for r in rows}
    if len(axes) > 1:
        raise SchemaError(f"inputs sweep different axes: {sorted(axes)}")

    # a series is one algorithm (per seed, for detail files) from one input;
    # lambda and N may change along the sweep, so they are not part of its identity
    has_seed = "seed" in header
    points, series, rows_by = [], [], {}
    for src, (_, rows) in enumerate(tables):
        for r in rows:
            pt = r["sweep_value"]
            se = (src, r["algorithm"], r["seed"] if has_seed else "")
            if pt not in points:
                points.append(pt)
            if se not in series:
                series.append(se)
            rows_by[(se, pt)] = r
    out_fields = ["source"] + header + ["flag"] + [f"rank_{m}" for m in RANKED_METRICS]
    out = []
    for pt in points:
        block = []
        for se in series:
            src, alg, seed = se
            r = rows_by.get((se, pt))
            if r is None:
                r = {k: "" for k in header}
                r.update(algorithm=alg, sweep_axis=next(iter(axes)), sweep_value=pt,
                         schema_version=tables[src][1][0]["schema_version"])
                if has_seed:
                    r["seed"] = seed
                block.append({**r, "source": str(paths[src]), "flag": "missing"})
            else:
                block.append({**r, "source": str(paths[src]), "flag": ""})
        for m in RANKED_METRICS:
            vals = [float(b[m]) if b["flag"] == "" and b[m] != "" else None for b in block]
            for b, rk in zip(block, _rank(vals, m in LOWER_IS_BETTER)):
                b[f"rank_{m}"] = rk
        out.extend(block)
    return out_fields, out


def moving_average(x, window: int) -> np.ndarray:
    """Trailing mean over the last ``window`` samples (fewer at the very start)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(x, dtype=float)
    if window == 1:
        return x.copy()
    out = np.empty_like(x)
    for t in range(len(x)):
        out[t] = x[max(0, t - window + 1): t + 1].mean()
    return out


def reward_curve(log_path, window: int) -> list:
    """Rows of (slot, phase, total_reward, smoothed) from a training log."""
    _, rows = read_csv(log_path)
    if rows and "total_reward" not in rows[0]:
        raise SchemaError(f"{log_path}: no total_reward column")
    raw = np.array([float(r["total_reward"]) for r in rows])
    sm = moving_average(raw, window)
    return [{"slot": int(r["slot"]), "phase": r.get("phase", ""),
             "total_reward": float(v), "smoothed": float(s)}
            for r, v, s in zip(rows, raw, sm)]


def write_rows(rows, fieldnames, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in
                        ((k, r.get(k, "")) for k in fieldnames)})
