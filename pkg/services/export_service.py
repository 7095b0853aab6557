"""
EquiSeek - Export Service
Writes run artifacts: decimated CSV, per-signal SVG charts, the run
manifest and a plain-text report.
"""
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from config import Config  # noqa: E402
from services.scenario_service import SERIES, ScenarioResult  # noqa: E402
from utils.errors import ExportError  # noqa: E402

logger = logging.getLogger(__name__)

UNITS = {
    "theta": "input",
    "Theta": "action",
    "y": "payoff",
    "G": "payoff/action",
    "Hhat": "payoff/action^2",
    "U": "action/s",
    "theta_hat": "action",
}


def sample_stride(result: ScenarioResult, samples_per_period: int = None) -> int:
    """Loop steps per exported row: at most samples_per_period rows per fastest probe period."""
    override = result.config.numerics.sample_every
    if override:
        return override
    samples_per_period = samples_per_period or Config.SAMPLES_PER_PERIOD
    fastest = 2.0 * math.pi / max(result.frequencies.omegas)
    return max(1, int(math.floor(fastest / samples_per_period / result.dt)))


def to_frame(result: ScenarioResult, stride: int = None) -> pd.DataFrame:
    """
    Decimated series as a DataFrame with one column per signal and player

    Column headers carry units, e.g. 'Theta[firm-1] (action)'.
    """
    stride = stride or sample_stride(result)
    rows = slice(0, None, stride)
    columns: Dict[str, np.ndarray] = {"t (s)": result.times[rows]}
    for name in SERIES:
        values = result.series[name][rows]
        for i, player in enumerate(result.player_names):
            columns[f"{name}[{player}] ({UNITS[name]})"] = values[:, i]
    return pd.DataFrame(columns)


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ExportError(f"Could not write {path}: {str(e)}") from e
    return path


def write_csv(result: ScenarioResult, out_dir: Path, stride: int = None) -> Path:
    path = Path(out_dir) / f"{result.name}.csv"
    frame = to_frame(result, stride)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    except OSError as e:
        raise ExportError(f"Could not write {path}: {str(e)}") from e
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return path


def write_svgs(result: ScenarioResult, out_dir: Path, signals=SERIES, stride: int = None) -> List[Path]:
    """One self-contained SVG line chart per signal, all players overlaid."""
    frame_stride = stride or sample_stride(result)
    times = result.times[::frame_stride]
    paths = []
    for name in signals:
        path = Path(out_dir) / f"{result.name}.{name}.svg"
        fig, ax = plt.subplots(figsize=(8, 4))
        try:
            values = result.series[name][::frame_stride]
            for i, player in enumerate(result.player_names):
                ax.plot(times, values[:, i], linewidth=0.8, label=player)
            if name == "Theta":
                for target in result.Theta_star:
                    ax.axhline(target, color="grey", linestyle="--", linewidth=0.6)
            ax.set_xlabel("t (s)")
            ax.set_ylabel(f"{name} ({UNITS[name]})")
            ax.set_title(f"{result.name}: {name}")
            ax.legend(loc="best", fontsize="small")
            path.parent.mkdir(parents=True, exist_ok=True)
            # fixed metadata keeps repeated exports identical
            fig.savefig(path, format="svg", metadata={"Date": None})
        except OSError as e:
            raise ExportError(f"Could not write {path}: {str(e)}") from e
        finally:
            plt.close(fig)
        paths.append(path)
    return paths


def manifest_text(result: ScenarioResult) -> str:
    resolved = result.config.model_dump(mode="json")
    lines = [
        f"scenario: {result.name}",
        f"config_hash: sha256:{result.config_hash}",
        f"dt: {result.dt!r}",
        f"steps: {result.n_steps}",
        f"averaging_period: {result.frequencies.Pi!r}",
        f"omegas: {list(result.frequencies.omegas)}",
        f"seed: {result.seed}",
        "integrator: explicit Euler on the estimate, exact filters, Crank-Nicolson PDE channels",
        "config:",
        json.dumps(resolved, indent=2, sort_keys=True),
    ]
    return "\n".join(lines) + "\n"


def report_text(result: ScenarioResult) -> str:
    lines = [f"Scenario {result.name}", f"Nash target Θ*: {np.round(result.Theta_star, 6).tolist()}"]
    if result.diverged:
        lines.append(f"DIVERGED at t={result.divergence_time:.6g} s: {result.divergence_reason}")
    else:
        lines.append(f"Final Θ: {np.round(result.series['Theta'][-1], 6).tolist()}")
    if result.metrics is not None:
        m = result.metrics
        lines += [
            f"Tail window starts at t={m.tail_start:.6g} s",
            f"Tail residual |Θ-Θ*|: {np.round(m.tail_residual, 6).tolist()}",
            f"Tail residual |θ-θ*|: {np.round(m.theta_tail_residual, 6).tolist()}",
            f"Band |a|+1/ω: {np.round(m.band_prediction, 6).tolist()} (fitted scale {np.round(m.band_scale, 4).tolist()})",
            f"θ band: {np.round(m.theta_band, 6).tolist()}",
            f"Periodic norm over final Π: {m.periodic_norm:.6g}",
        ]
    if result.stability is not None:
        s = result.stability
        lines += [
            f"Diagonal dominance: {'pass' if s.dominance.passed else 'fail'} (margins {list(s.dominance.margins)})",
            f"Hurwitz HK: {'pass' if s.hurwitz.passed else 'fail'} (max Re {s.hurwitz.max_real_part:.6g})",
            f"Small gain: {'pass' if s.small_gain.passed else 'fail'} "
            f"(worst margin {s.small_gain.worst_margin:.6g}, ε*={s.epsilon_star})",
        ]
    for key, value in result.extras.items():
        lines.append(f"{key}: {value:.6g}")
    return "\n".join(lines) + "\n"


class ExportService:
    """
    Writes every artifact of a run into one directory.
    """

    @staticmethod
    def export(result: ScenarioResult, out_dir: Union[str, Path] = None, svg: bool = False) -> Dict[str, object]:
        """
        Export a run

        Args:
            result: Finished run
            out_dir: Target directory (default Config.OUTPUT_DIR)
            svg: Also write one SVG chart per signal

        Returns:
            Mapping of artifact kind to path(s)
        """
        out_dir = Path(out_dir) if out_dir is not None else Config.OUTPUT_DIR
        stride = sample_stride(result)
        artifacts: Dict[str, object] = {
            "csv": write_csv(result, out_dir, stride),
            "manifest": _write_text(out_dir / f"{result.name}.manifest.txt", manifest_text(result)),
            "report": _write_text(out_dir / f"{result.name}.report.txt", report_text(result)),
        }
        if svg:
            artifacts["svg"] = write_svgs(result, out_dir, stride=stride)
        return artifacts
