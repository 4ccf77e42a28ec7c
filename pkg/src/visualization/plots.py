import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

logger = logging.getLogger(__name__)


class PlatformPlots:
    """Figures for federated training, ledger block times and error budgets."""

    def __init__(self):
        self.default_figsize = (12, 6)
        self.colors = {
            'loss': '#e74c3c',       # red
            'accuracy': '#2ecc71',   # green
            'mean': '#3498db',       # blue
            'p95': '#e67e22',        # orange
            'baseline': '#95a5a6',   # gray
        }

    def save_plot(self, fig: plt.Figure, filename: str, save_dir: str = 'reports/figures/') -> Path:
        """Save plot to specified directory."""
        Path(save_dir).mkdir(parents=True, exist_ok=True)
        path = Path(save_dir) / f"{filename}.png"
        fig.savefig(path, dpi=150, bbox_inches='tight')
        plt.close(fig)
        return path

    def plot_fl_curves(self,
                       history: pd.DataFrame,
                       save: bool = False,
                       filename: str = 'fl_curves',
                       save_dir: str = 'reports/figures/') -> plt.Figure:
        """Per-peer training loss and accuracy against the global iteration count."""
        if history.empty:
            raise ValueError("FL history is empty")
        frame = history.copy()
        epochs_per_round = int(frame['epoch'].max())
        frame['iteration'] = frame['round'] * epochs_per_round + frame['epoch']

        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(12, 10), sharex=True)
        for peer, rows in frame.groupby('peer'):
            ax1.plot(rows['iteration'], rows['loss'], label=peer)
            ax2.plot(rows['iteration'], rows['accuracy'], label=peer)

        ax1.set_title('Local Training Loss')
        ax1.set_ylabel('Cross-entropy')
        ax1.legend()
        ax1.grid(True, alpha=0.2)

        ax2.set_title('Local Training Accuracy')
        ax2.set_xlabel('Iteration')
        ax2.set_ylabel('Accuracy')
        ax2.set_ylim(0, 1.05)
        ax2.grid(True, alpha=0.2)

        # round boundaries
        for number in range(1, int(frame['round'].max()) + 1):
            ax1.axvline(number * epochs_per_round, color=self.colors['baseline'], linestyle='--', alpha=0.5)

        plt.tight_layout()
        if save:
            self.save_plot(fig, filename, save_dir)
        return fig

    def plot_block_times(self,
                         summary: pd.DataFrame,
                         save: bool = False,
                         filename: str = 'block_times',
                         save_dir: str = 'reports/figures/') -> plt.Figure:
        """Mean and p95 block acceptance latency by peer count."""
        fig, ax = plt.subplots(figsize=self.default_figsize)
        ax.plot(summary['peer_count'], summary['mean_ms'], 'o-', label='Mean', color=self.colors['mean'])
        ax.plot(summary['peer_count'], summary['p95_ms'], 's--', label='p95', color=self.colors['p95'])
        ax.set_title('Block Acceptance Latency')
        ax.set_xlabel('Peers')
        ax.set_ylabel('Latency [ms]')
        ax.set_xticks(list(summary['peer_count']))
        ax.legend()
        ax.grid(True, alpha=0.2)
        if save:
            self.save_plot(fig, filename, save_dir)
        return fig

    def plot_budget(self,
                    records: List[Dict],
                    save: bool = False,
                    filename: str = 'error_budget',
                    save_dir: str = 'reports/figures/') -> plt.Figure:
        """Remaining error budget per SLO over the monitoring ticks."""
        statuses = pd.DataFrame([r for r in records if r.get('type') == 'status'])
        if statuses.empty:
            raise ValueError("No status records to plot")
        fig, ax = plt.subplots(figsize=self.default_figsize)
        for slo_id, rows in statuses.groupby('slo_id'):
            minutes = (rows['evaluated_at'] - statuses['evaluated_at'].min()) / 60_000
            ax.plot(minutes, rows['remaining_fraction'] / rows['budget_fraction'], label=slo_id)
        ax.axhline(y=0, color=self.colors['baseline'], linestyle='--')
        ax.set_title('Remaining Error Budget')
        ax.set_xlabel('Minutes since first tick')
        ax.set_ylabel('Share of budget left')
        ax.legend()
        ax.grid(True, alpha=0.2)
        if save:
            self.save_plot(fig, filename, save_dir)
        return fig

    def create_run_report(self, run_dir: Path, save_dir: Optional[str] = None) -> List[Path]:
        """Plot whatever artifacts a pipeline run left in ``run_dir``."""
        run_dir = Path(run_dir)
        save_dir = save_dir or str(run_dir / 'figures')
        written = []
        history = run_dir / 'fl_history.csv'
        if history.exists():
            self.plot_fl_curves(pd.read_csv(history), save=True, save_dir=save_dir)
            written.append(Path(save_dir) / 'fl_curves.png')
        monitor_log = run_dir / 'monitor.jsonl'
        if monitor_log.exists():
            with open(monitor_log, 'r', encoding='utf-8') as f:
                records = [json.loads(line) for line in f if line.strip()]
            if any(r.get('type') == 'status' for r in records):
                self.plot_budget(records, save=True, save_dir=save_dir)
                written.append(Path(save_dir) / 'error_budget.png')
        logger.info(f"Wrote {len(written)} figures to {save_dir}")
        return written
