"""Canned ablation rows: which encoder, which losses, which partition head.

Every row is a small set of overrides applied to a base experiment. Rows
share the base's data, seed, optimiser settings and community count, so
differences in outcome come only from the flags listed here.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import jsonio
from .config import ExperimentConfig


class AblationError(ValueError):
    """Unknown ablation row."""


@dataclass(frozen=True)
class AblationRow:
    name: str
    encoder: str
    adversarial: bool
    head: str  # "modularity" or "kmeans"

    @property
    def uses_modularity_loss(self) -> bool:
        return self.head == "modularity"

    def train_overrides(self, base: ExperimentConfig) -> dict:
        """Training-config fields this row pins, given the base experiment."""
        bt = base.train
        out = {"encoder": self.encoder, "w_mm": 1.0 if self.uses_modularity_loss else 0.0}
        if self.adversarial:
            out["w_g"] = bt.w_g if bt.w_g > 0 else 1.0
            out["d_steps"] = bt.d_steps if bt.d_steps > 0 else 1
            # the plain adversarial baseline matches a single Gaussian, the others the mixture
            out["prior"] = "gaussian" if self.name == "ARGA+KMeans" else "mixture"
        else:
            out.update(w_g=0.0, d_steps=0)
        return out


ROWS: dict[str, AblationRow] = {
    row.name: row
    for row in (
        AblationRow("GAE+KMeans", "gcn", adversarial=False, head="kmeans"),
        AblationRow("ARGA+KMeans", "gcn", adversarial=True, head="kmeans"),
        AblationRow("GAE+Lmm", "gcn", adversarial=False, head="modularity"),
        AblationRow("GCNEncoder+Full", "gcn", adversarial=True, head="modularity"),
        AblationRow("Full", "atgrl", adversarial=True, head="modularity"),
    )
}


def get_row(name: str) -> AblationRow:
    try:
        return ROWS[name]
    except KeyError:
        raise AblationError(f"unknown ablation row {name!r}; choose from {list(ROWS)}") from None


def expand(row: AblationRow | str, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply a row's flags to ``base`` (defaults when omitted)."""
    row = get_row(row) if isinstance(row, str) else row
    base = base or ExperimentConfig()
    return base.with_overrides(train=row.train_overrides(base), head=row.head)


def cli_args(row: AblationRow | str) -> list[str]:
    """The ``atgrl`` invocation that runs this row end to end."""
    row = get_row(row) if isinstance(row, str) else row
    return ["eval", "--ablation", row.name]


def manifest(base: ExperimentConfig | None = None) -> dict:
    """All rows with their expanded configurations, for batch runners."""
    return {
        "rows": [
            {"name": name, "command": cli_args(name), "config": expand(name, base).to_dict()}
            for name in ROWS
        ]
    }


def write_manifest(path, base: ExperimentConfig | None = None) -> None:
    jsonio.write_json(path, manifest(base))
