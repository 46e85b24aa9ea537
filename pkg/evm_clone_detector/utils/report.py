"""
Plain-text rendering of detection reports and training summaries.
"""

from typing import List, Sequence

from ..models.data_models import VulnerabilityTag
from ..models.report_models import QueryReport


def render_query_report(report: QueryReport, threshold: float) -> str:
    """Ranked clones per function, then the per-tag scores of the whole query."""
    lines: List[str] = [f"Query: {report.query}", "=" * (7 + len(report.query))]
    if not report.functions:
        lines.append("  (no functions analysed)")
    for function in report.functions:
        lines.append(f"  {function.name}")
        if not function.clones:
            lines.append("    no clones")
        for rank, clone in enumerate(function.clones, start=1):
            lines.append(f"    {rank}. {clone.id:<48} {clone.similarity:.4f}")

    if report.contracts:
        lines.append("")
        lines.append("  Similar contracts")
    for contract in report.contracts:
        lines.append(f"  {contract.name}")
        if not contract.clones:
            lines.append("    none")
        for rank, clone in enumerate(contract.clones, start=1):
            lines.append(f"    {rank}. {clone.id:<48} {clone.similarity:.4f}")

    lines.append("")
    lines.append(f"  {'Vulnerability':<20}{'epsilon':>9}  predicted")
    scores = report.contract_epsilon()
    for tag in VulnerabilityTag:
        score = scores.get(tag.value, 0.0)
        mark = "yes" if score >= threshold else ""
        lines.append(f"  {tag.value:<20}{score:>9.4f}  {mark}")

    timing = report.timing_ms
    lines.append("")
    lines.append(f"  extract {timing.extract:.1f} ms | detect {timing.detect:.1f} ms | "
                 f"summarize {timing.summarize:.1f} ms")
    return "\n".join(lines)


def render_loss_history(losses: Sequence[float]) -> str:
    if not losses:
        return "No training epochs run."
    return "\n".join(f"epoch {epoch:>3}  mean loss {loss:.6f}" for epoch, loss in enumerate(losses, start=1))


def render_clone_precision(frame) -> str:
    """Text table of the per-fold clone precision frame."""
    lines = [f"{'Fold':<8}{'Matched':>9}{'Correct':>9}{'Precision':>11}"]
    for row in frame.itertuples(index=False):
        lines.append(f"{row.fold:<8}{row.matched:>9}{row.correct:>9}{row.precision:>11.3f}")
    return "\n".join(lines)
