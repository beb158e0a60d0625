"""
Experiment report rendering.

Renders a Markdown summary of an experiment (table of results and the
verdict of every acceptance check) from a Jinja2 template.
"""
from pathlib import Path

from jinja2 import Environment, FileSystemLoader

from mfising.schemas.experiment import ExperimentConfig, ExperimentResult


# Template directory
TEMPLATE_DIR = Path(__file__).parent.parent / "templates"


def _number(value) -> str:
    if isinstance(value, int):
        return str(value)
    return f"{value:.6g}"


class ReportService:
    """Service for rendering experiment reports."""

    def __init__(self):
        self.env = Environment(
            loader=FileSystemLoader(str(TEMPLATE_DIR)),
            autoescape=False,
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
        )
        self.env.filters["number"] = _number

    def render(self, config: ExperimentConfig, result: ExperimentResult) -> str:
        template = self.env.get_template("report.md.j2")
        return template.render(
            config=config,
            result=result,
            params=config.params,
            verdict="PASS" if result.passed else "FAIL",
        )


# Singleton instance
report_service = ReportService()


def get_report_service() -> ReportService:
    return report_service


def render_report(config: ExperimentConfig, result: ExperimentResult) -> str:
    return get_report_service().render(config, result)
