"""Run artifacts: delimited output, summary JSON, and rendered figures.

Numeric CSV fields are printed with 17 significant digits so that identical
runs produce bit-identical files.
"""

from __future__ import annotations

import json
import os
import time

import numpy as np

__all__ = ["RunRecorder", "render_figures", "render_static_spectrum"]

_FMT = "%.17g"


def _fmt(x) -> str:
    return _FMT % float(x)


class RunRecorder:
    """Collects per-output-time rows and writes the artifact files."""

    def __init__(self, outdir: str):
        self.outdir = outdir
        os.makedirs(outdir, exist_ok=True)
        self.spectrum_rows: list[list[float]] = []
        self.rank_rows: list[list[int]] = []
        self.error_rows: list[tuple[float, float, float]] = []
        self.events: list[dict] = []
        self.log_lines: list[str] = []
        self._t0 = time.perf_counter()

    def record(self, t: float, spectrum, ranks_flat, abs_err: float, rel_err: float):
        self.spectrum_rows.append([t] + [float(s) for s in spectrum])
        self.rank_rows.append([t] + [int(r) for r in ranks_flat])
        self.error_rows.append((t, abs_err, rel_err))

    def event(self, payload: dict):
        self.events.append(payload)
        self.log(f"event {payload.get('kind', '?')} at t={payload.get('time', float('nan')):.6f}")

    def log(self, line: str):
        self.log_lines.append(line)

    def write(self, summary_extra: dict):
        with open(os.path.join(self.outdir, "spectrum.csv"), "w") as f:
            f.write("time,lambda...\n")
            for row in self.spectrum_rows:
                f.write(",".join(_fmt(x) for x in row) + "\n")
        with open(os.path.join(self.outdir, "ranks.csv"), "w") as f:
            f.write("time,ranks...\n")
            for row in self.rank_rows:
                f.write(_fmt(row[0]) + "," + ",".join(str(int(r)) for r in row[1:]) + "\n")
        with open(os.path.join(self.outdir, "error.csv"), "w") as f:
            f.write("time,abs_l2,rel_l2\n")
            for t, a, r in self.error_rows:
                f.write(",".join(_fmt(x) for x in (t, a, r)) + "\n")
        summary = {
            "schema_version": 1,
            "wall_time_seconds": time.perf_counter() - self._t0,
            "adaptation_events": self.events,
            **summary_extra,
        }
        with open(os.path.join(self.outdir, "summary.json"), "w") as f:
            json.dump(summary, f, indent=2, default=_json_default)
            f.write("\n")
        if self.log_lines:
            with open(os.path.join(self.outdir, "run.log"), "w") as f:
                f.write("\n".join(self.log_lines) + "\n")
        return summary


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"unserializable {type(obj)}")


def render_figures(recorder: RunRecorder) -> list[str]:
    """Render error/spectrum/rank curves next to the delimited output."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    out = recorder.outdir

    if recorder.error_rows:
        t = [r[0] for r in recorder.error_rows]
        ab = [max(r[1], 1e-300) for r in recorder.error_rows]
        rel = [max(r[2], 1e-300) for r in recorder.error_rows]
        if np.all(np.isfinite(ab)):
            fig, ax = plt.subplots(figsize=(6, 4))
            ax.semilogy(t, ab, "o-", ms=3, label="absolute")
            ax.semilogy(t, rel, "s-", ms=3, label="relative")
            ax.set_xlabel("t")
            ax.set_ylabel("L2 error")
            ax.legend()
            ax.grid(True, which="both", alpha=0.3)
            fig.tight_layout()
            p = os.path.join(out, "error.png")
            fig.savefig(p, dpi=130)
            plt.close(fig)
            written.append(p)

    if recorder.spectrum_rows:
        fig, ax = plt.subplots(figsize=(6, 4))
        for row in recorder.spectrum_rows:
            ax.semilogy(range(1, len(row)), [max(s, 1e-300) for s in row[1:]], "-", alpha=0.6)
        ax.set_xlabel("mode index")
        ax.set_ylabel("level-1 amplitude")
        ax.set_title("spectrum per output time")
        ax.grid(True, which="both", alpha=0.3)
        fig.tight_layout()
        p = os.path.join(out, "spectrum.png")
        fig.savefig(p, dpi=130)
        plt.close(fig)
        written.append(p)

    if recorder.rank_rows:
        t = [r[0] for r in recorder.rank_rows]
        r1 = [r[1] for r in recorder.rank_rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.step(t, r1, where="post")
        ax.set_xlabel("t")
        ax.set_ylabel("level-1 rank")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        p = os.path.join(out, "ranks.png")
        fig.savefig(p, dpi=130)
        plt.close(fig)
        written.append(p)
    return written


def render_static_spectrum(outdir: str, spectra_by_level: dict, sigma: float) -> list[str]:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, lam in spectra_by_level.items():
        ax.semilogy(range(1, len(lam) + 1), np.maximum(lam, 1e-300), "o-", ms=3, label=label)
    if sigma > 0:
        ax.axhline(sigma, color="k", ls="--", lw=1, label="threshold")
    ax.set_xlabel("index")
    ax.set_ylabel("eigenvalue")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    p = os.path.join(outdir, "spectrum.png")
    fig.savefig(p, dpi=130)
    plt.close(fig)
    return [p]
