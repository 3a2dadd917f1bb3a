from typing import Any, Dict, Mapping, Optional

from src.config.settings import settings
from src.models.feature.schema import Projection2D
from src.models.report.schema import METRIC_NAMES, MetricsReport, SweepResult


class CLIFormatter:

    BORDER_CHAR = "="
    SEPARATOR_CHAR = "-"
    BORDER_LENGTH = 80

    @staticmethod
    def format_header(title: str) -> str:
        border = CLIFormatter.BORDER_CHAR * CLIFormatter.BORDER_LENGTH
        padding = (CLIFormatter.BORDER_LENGTH - len(title) - 2) // 2
        centered_title = " " * padding + title + " " * padding

        return f"\n{border}\n{centered_title}\n{border}\n"

    @staticmethod
    def format_section(title: str) -> str:
        separator = CLIFormatter.SEPARATOR_CHAR * CLIFormatter.BORDER_LENGTH
        return f"\n{separator}\n{title}\n{separator}\n"

    @staticmethod
    def format_value(value: Optional[float]) -> str:
        return "n/a" if value is None else f"{value:.4f}"

    @staticmethod
    def format_summary_line(command: str, fields: Mapping[str, Any]) -> str:
        """The single stdout line every command ends with."""
        parts = []
        for key, value in fields.items():
            if isinstance(value, float):
                value = f"{value:.4f}"
            parts.append(f"{key}={value}")
        return f"{settings.app.app_name.lower()} {command}: " + " ".join(parts)

    @staticmethod
    def format_report_table(before: MetricsReport, after: MetricsReport) -> str:
        table = CLIFormatter.format_section("Mitigation report")
        table += f"{'metric':<32}{'before':>12}{'after':>12}\n"
        for name in METRIC_NAMES:
            table += (
                f"{name:<32}"
                f"{CLIFormatter.format_value(before.metric(name)):>12}"
                f"{CLIFormatter.format_value(after.metric(name)):>12}\n"
            )
        table += f"\ntau_su={before.tau_su:.4f} tau_vu={before.tau_vu:.4f} n={before.n}"

        table += "\n\nResponse categories:"
        for category, count in before.category_counts.items():
            table += f"\n  {category:<28}{count:>6}{after.category_counts.get(category, 0):>12}"

        return table

    @staticmethod
    def format_cosines(cosines: Mapping[int, Optional[float]]) -> str:
        result = CLIFormatter.format_section("Per-layer cosine similarity")
        for layer, value in cosines.items():
            result += f"\n  layer {layer:>3}: {CLIFormatter.format_value(value)}"
        return result

    @staticmethod
    def format_sweep(result: SweepResult) -> str:
        table = CLIFormatter.format_section("Steering sweep")
        table += f"{'alpha':>8}{'mean_vu':>12}{'n':>8}\n"
        for row in result.rows():
            table += f"{row['alpha']:>8.2f}{row['mean_vu']:>12.4f}{row['n']:>8}\n"
        return table

    @staticmethod
    def format_projection(projection: Projection2D) -> str:
        first, second = projection.explained_variance
        return (
            f"\nLayer {projection.layer}: explained variance {first:.4f} / {second:.4f}, "
            f"separability {projection.separability:.4f}"
        )

    @staticmethod
    def format_detection(detection: Dict[str, Any]) -> str:
        result = CLIFormatter.format_section("Hallucination detection")
        for source, variants in detection['results'].items():
            if 'error' in variants:
                result += f"\n{source}: {variants['error']}"
                continue
            for name, scores in variants.items():
                result += f"\n{source:<12}{name:<10} AUROC {scores['auroc']:.4f}  ACC {scores['accuracy']:.4f}"
        return result

    @staticmethod
    def format_error(error_message: str) -> str:
        border = "!" * CLIFormatter.BORDER_LENGTH
        return f"\n{border}\nERROR: {error_message}\n{border}\n"
