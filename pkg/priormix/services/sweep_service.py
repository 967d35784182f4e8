from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional
import hashlib
import logging

from priormix.schemas.experiment_schemas import SweepConfig
from priormix.schemas.run_schemas import SweepResult, SweepRow
from priormix.tasks.sweep_tasks import run_sweep_cell

logger = logging.getLogger(__name__)


def cell_seed(base_seed: int, *indices: int) -> int:
    """Stable 63-bit seed from the base seed and a cell's grid indices."""
    key = ",".join(str(i) for i in (base_seed, *indices)).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


class SweepService:
    def build_cells(self, cfg: SweepConfig) -> List[Dict[str, Any]]:
        """One cell per dataset x theta setting x noise rate x method x trial.

        Method and noise rate are left out of the seed, so every method and
        noise level of a trial trains on the same bags from the same initial model.
        """
        cells = []
        for i_data, dataset in enumerate(cfg.datasets):
            for i_theta, theta in enumerate(cfg.theta_settings):
                for noise_rate in cfg.noise_rates:
                    for method in cfg.methods:
                        for trial in range(cfg.trials):
                            cells.append({
                                "dataset": dataset.model_dump(mode="json"),
                                "theta": theta.model_dump(mode="json"),
                                "method": method.model_dump(mode="json"),
                                "noise_rate": noise_rate,
                                "trial": trial,
                                "seed": cell_seed(cfg.base_seed, i_data, i_theta, trial),
                                "test_priors": cfg.test_priors,
                                "test_priors_path": cfg.test_priors_path,
                            })
        return cells

    def run_sweep(self, cfg: SweepConfig, jobs: int = 1,
                  output_dir: Optional[Path] = None) -> SweepResult:
        cells = self.build_cells(cfg)
        logger.info(f"Running sweep of {len(cells)} cells with {jobs} worker(s)")

        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(run_sweep_cell, cells))
        else:
            rows = [run_sweep_cell(cell) for cell in cells]

        result = SweepResult(rows=[SweepRow.model_validate(r) for r in rows])
        failed = sum(r.status == "failed" for r in result.rows)
        if failed:
            logger.warning(f"{failed} of {len(cells)} sweep cells failed")

        output_dir = Path(output_dir or cfg.output_dir)
        paths = result.write(output_dir)
        if cfg.svg:
            paths["svg"] = self.plot_noise_curves(result, output_dir / "sweep.svg")
        logger.info("Sweep finished", extra={k: str(v) for k, v in paths.items()})
        return result

    def plot_noise_curves(self, result: SweepResult, path: Path) -> Path:
        """Mean test error against noise rate, one line per dataset/theta/method."""
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        table = result.aggregate()
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for (dataset, theta, method), group in table.groupby(
                ["dataset", "theta_setting", "method"], sort=False):
            group = group.sort_values("noise_rate")
            ax.errorbar(100.0 * group["noise_rate"], group["mean"],
                        yerr=group["std"].fillna(0.0), marker="o", capsize=3,
                        label=f"{dataset} / {theta} / {method}")
        ax.set_xlabel("noise rate (%)")
        ax.set_ylabel("test error (%)")
        ax.grid(alpha=0.3)
        ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)
        return path


# Create singleton instance
sweep_service = SweepService()
