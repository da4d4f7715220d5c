"""Figure builders over the laboratory's CSV outputs.

Each figure kind declares the experiment tag and the columns it consumes;
render() validates everything before touching the output directory, so a
bad input never leaves a partial file behind. Reference overlays are
recomputed from the formulas quoted in the caption sidecar, never read
back from reference columns that may sit in the data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

KINDS = (
    "moment-q",
    "root-x-trend",
    "tail-bounds",
    "walk-fit",
    "chaos-hist",
    "covariance-lag",
)

# Fixed columns every experiment CSV carries, independent of kind.
_BASE_COLUMNS = ("experiment", "model", "x", "q", "trials",
                 "estimate", "stderr", "seed", "wallclock_s")

# Which experiment tags may feed which figure kind.
_EXPERIMENTS: dict[str, frozenset[str]] = {
    "moment-q": frozenset({"moments"}),
    "root-x-trend": frozenset({"ratio", "moments"}),
    "tail-bounds": frozenset({"tails"}),
    "walk-fit": frozenset({"walks"}),
    "chaos-hist": frozenset({"chaos"}),
    "covariance-lag": frozenset({"fieldmax"}),
}

# Extra columns beyond _BASE_COLUMNS, keyed by (kind, experiment tag).
_EXTRAS: dict[tuple[str, str], tuple[str, ...]] = {
    ("moment-q", "moments"): (),
    ("root-x-trend", "ratio"): ("normalized", "normalized_se"),
    ("root-x-trend", "moments"): (),
    ("tail-bounds", "tails"): ("lambda",),
    ("walk-fit", "walks"): ("n", "a", "log_ratio", "slope", "intercept"),
    ("chaos-hist", "chaos"): ("sigma", "trial"),
    ("covariance-lag", "fieldmax"): ("lag", "mean_max"),
}


class SchemaError(ValueError):
    """Input CSV does not match the schema a figure kind requires."""


class EmptyInputError(ValueError):
    """Input CSV holds a header but no data rows (or nothing at all)."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: input CSVs, kind, output image path, axis options."""

    kind: str
    inputs: tuple[Path, ...]
    output: Path
    log_x: bool = False
    log_y: bool = False
    dpi: int = 120


@dataclass(frozen=True)
class RenderResult:
    """Where the artifacts went plus the plotted series for inspection."""

    image: Path
    caption: Path
    series: dict[str, tuple[float, ...]]


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value) and abs(value) < 1e15:
            return str(int(value))
        return repr(value)
    return str(value)


def _unique_line(frame: pd.DataFrame, column: str) -> str | None:
    values = frame[column].dropna().unique()
    if values.size == 0:
        return None
    return f"{column}: " + ", ".join(sorted(_fmt(v) for v in values))


def _config_hashes(paths: tuple[Path, ...]) -> list[str]:
    lines = []
    for path in paths:
        sidecar = path.parent / (path.name + ".manifest.json")
        if sidecar.exists():
            with open(sidecar, encoding="utf-8") as fh:
                manifest = json.load(fh)
            if "config_hash" in manifest:
                lines.append(f"source config: {manifest['config_hash']}")
    return lines


def _load(spec: FigureSpec) -> tuple[pd.DataFrame, str]:
    """Read and validate every input; returns (frame, experiment tag)."""
    if spec.kind not in KINDS:
        raise SchemaError(
            f"unknown figure kind {spec.kind!r}; choose from {', '.join(KINDS)}")
    if not spec.inputs:
        raise EmptyInputError("figure spec lists no input files")
    frames, tag = [], None
    for path in spec.inputs:
        try:
            frame = pd.read_csv(path)
        except pd.errors.EmptyDataError:
            raise EmptyInputError(f"{path.name}: no rows to plot") from None
        if frame.empty:
            raise EmptyInputError(f"{path.name}: no rows to plot")
        if "experiment" not in frame.columns:
            raise SchemaError(f"{path.name}: missing column 'experiment'")
        tags = frame["experiment"].astype(str).unique()
        if tags.size != 1:
            raise SchemaError(
                f"{path.name}: mixed experiment tags {sorted(tags)}")
        if tag is None:
            tag = tags[0]
        elif tag != tags[0]:
            raise SchemaError(
                f"{path.name}: experiment '{tags[0]}' clashes with '{tag}' "
                "from an earlier input")
        if tags[0] not in _EXPERIMENTS[spec.kind]:
            expected = "/".join(sorted(_EXPERIMENTS[spec.kind]))
            raise SchemaError(
                f"{path.name}: experiment '{tags[0]}' does not feed kind "
                f"'{spec.kind}' (expected {expected})")
        for column in _BASE_COLUMNS + _EXTRAS[(spec.kind, tags[0])]:
            if column not in frame.columns:
                raise SchemaError(
                    f"{path.name}: missing column '{column}' required by "
                    f"kind '{spec.kind}'")
        frames.append(frame)
    return pd.concat(frames, ignore_index=True), tag


def _build_moment_q(ax, frame, caption):
    frame = frame.assign(q=frame["q"].astype(float))
    series = {}
    for (model, x), group in sorted(frame.groupby(["model", "x"])):
        group = group.sort_values("q")
        label = f"{model} x={_fmt(x)}"
        ax.errorbar(group["q"], group["estimate"],
                    yerr=2.0 * group["stderr"], marker="o", capsize=3,
                    label=label)
        series[label] = tuple(float(v) for v in group["estimate"])
    ax.set_xlabel("q")
    ax.set_ylabel("mean |S(x)|^(2q)")
    caption.append("error bars: 2 standard errors")
    return series


def _build_trend(ax, frame, caption):
    if frame["experiment"].iloc[0] == "moments":
        frame = frame[frame["q"].astype(float) == 0.5]
        if frame.empty:
            raise SchemaError(
                "root-x-trend from a moments file needs q = 0.5 rows "
                "(mean |S|), found none")
        root = np.sqrt(frame["x"].astype(float))
        frame = frame.assign(normalized=frame["estimate"] / root,
                             normalized_se=frame["stderr"] / root)
        caption.append("normalized: q = 0.5 estimate / sqrt(x)")
    series = {}
    for model, group in sorted(frame.groupby("model")):
        group = group.sort_values("x")
        llx = np.log(np.log(group["x"].astype(float)))
        ax.errorbar(llx, group["normalized"],
                    yerr=2.0 * group["normalized_se"], marker="o",
                    capsize=3, label=str(model))
        series[str(model)] = tuple(float(v) for v in group["normalized"])
    ax.set_xlabel("log log x")
    ax.set_ylabel("mean |S(x)| / sqrt(x)")
    caption.append("error bars: 2 standard errors")
    return series


def _build_tails(ax, frame, caption):
    lam = frame["lambda"].astype(float)
    series = {}
    for (model, x), group in sorted(frame.groupby(["model", "x"])):
        group = group.sort_values("lambda")
        label = f"{model} x={_fmt(x)}"
        ax.errorbar(group["lambda"], group["estimate"],
                    yerr=2.0 * group["stderr"], fmt="o", capsize=3,
                    label=label)
        series[label] = tuple(float(v) for v in group["estimate"])
    grid = np.geomspace(float(lam.min()), float(lam.max()), 200)
    for x in sorted(frame["x"].astype(float).unique()):
        llx = math.log(math.log(x))
        upper = np.minimum(np.log(grid), math.sqrt(llx)) / grid**2
        lower = 1.0 / (grid * llx) ** 2
        ax.plot(grid, upper, "--", label=f"upper ref x={_fmt(x)}")
        ax.plot(grid, lower, ":", label=f"lower ref x={_fmt(x)}")
        series[f"upper x={_fmt(x)}"] = tuple(float(v) for v in upper)
        series[f"lower x={_fmt(x)}"] = tuple(float(v) for v in lower)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("lambda")
    ax.set_ylabel("P(|S(x)| >= lambda sqrt(x / log log x))")
    caption.append("overlay upper: min(log(lam), sqrt(log log x)) / lam^2")
    caption.append("overlay lower: 1 / (lam * log log x)^2")
    return series


def _build_walk_fit(ax, frame, caption):
    bad = frame[frame["estimate"] <= 0.0]
    if not bad.empty:
        row = bad.iloc[0]
        raise ValueError(
            f"walk-fit needs positive probabilities; n={_fmt(row['n'])} "
            f"a={_fmt(row['a'])} estimated zero")
    xi = frame["log_ratio"].astype(float).to_numpy()
    logp = np.log(frame["estimate"].astype(float).to_numpy())
    slope = float(frame["slope"].iloc[0])
    intercept = float(frame["intercept"].iloc[0])
    order = np.argsort(xi)
    ax.plot(xi[order], logp[order], "o", label="family estimates")
    grid = np.linspace(float(xi.min()), float(xi.max()), 50)
    ax.plot(grid, slope * grid + intercept, "-",
            label=f"fit, slope {slope:.3f}")
    ax.set_xlabel("log(a / sqrt(n))")
    ax.set_ylabel("log P(barrier holds)")
    caption.append("fit: log P = slope * log(a / sqrt(n)) + intercept")
    caption.append(f"slope: {slope!r}")
    caption.append(f"intercept: {intercept!r}")
    return {"points": tuple(float(v) for v in logp[order]),
            "fit": (slope, intercept)}


def _build_chaos_hist(ax, frame, caption):
    masses = frame["estimate"].astype(float).to_numpy()
    bins = max(8, min(40, int(round(math.sqrt(masses.size)))))
    counts, _, _ = ax.hist(masses, bins=bins)
    mean = float(masses.mean())
    ax.axvline(mean, linestyle="--", color="k", label=f"mean {mean:.4g}")
    ax.set_xlabel("normalized chaos mass")
    ax.set_ylabel("trials")
    caption.append(f"trials plotted: {masses.size}")
    caption.append(f"mean mass: {mean!r}")
    return {"counts": tuple(float(c) for c in counts), "mean": (mean,)}


def _build_covariance(ax, frame, caption):
    if frame["x"].astype(float).nunique() != 1:
        raise SchemaError("covariance-lag needs a single x per figure")
    frame = frame.sort_values("lag")
    lags = frame["lag"].astype(int).to_numpy()
    cov = frame["estimate"].astype(float).to_numpy()
    llx = math.log(math.log(float(frame["x"].iloc[0])))
    lllx = math.log(llx)
    ref = np.array([max(0.0, 0.5 * (llx - 2.0 * lllx - math.log(max(l, 1))))
                    for l in lags])
    ax.plot(lags, cov, "o-", label="measured")
    ax.plot(lags, ref, "--", label="log-decay reference")
    ax.set_xlabel("lag")
    ax.set_ylabel("covariance of window averages")
    caption.append("overlay: max(0, (log log x - 2 log log log x"
                   " - log max(lag, 1)) / 2)")
    caption.append(f"mean field maximum: {float(frame['mean_max'].iloc[0])!r}")
    return {"covariance": tuple(float(v) for v in cov),
            "overlay": tuple(float(v) for v in ref)}


_BUILDERS = {
    "moment-q": _build_moment_q,
    "root-x-trend": _build_trend,
    "tail-bounds": _build_tails,
    "walk-fit": _build_walk_fit,
    "chaos-hist": _build_chaos_hist,
    "covariance-lag": _build_covariance,
}


def render(spec: FigureSpec) -> RenderResult:
    """Write the figure image and its caption sidecar.

    Validation happens before any output file is opened. The caption is
    byte-stable across reruns on identical inputs: it carries only the
    config snapshot, axis scales, and overlay formulas, never timestamps.
    """
    frame, tag = _load(spec)
    fig, ax = plt.subplots(figsize=(6.4, 4.2), dpi=spec.dpi)
    detail: list[str] = []
    try:
        series = _BUILDERS[spec.kind](ax, frame, detail)
        if spec.log_x:
            ax.set_xscale("log")
        if spec.log_y:
            ax.set_yscale("log")
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        lines = [f"kind: {spec.kind}",
                 "inputs: " + ", ".join(p.name for p in spec.inputs),
                 f"experiment: {tag}",
                 f"rows: {len(frame)}"]
        for column in ("model", "x", "q", "trials", "seed"):
            line = _unique_line(frame, column)
            if line is not None:
                lines.append(line)
        lines.extend(_config_hashes(spec.inputs))
        lines.append(f"xscale: {ax.get_xscale()}")
        lines.append(f"yscale: {ax.get_yscale()}")
        lines.extend(detail)
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output)
    finally:
        plt.close(fig)
    caption = spec.output.with_suffix(".caption.txt")
    caption.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return RenderResult(image=spec.output, caption=caption, series=series)
