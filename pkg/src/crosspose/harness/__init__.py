"""Config parsing, evaluation runs, leaderboards and the CLI."""

from .config import EvalConfig, parse_config, parse_config_text
from .evaluate import MetricsReport, run_evaluation
from .report import LeaderboardRow, build_leaderboard, emit_report, percent_improvement

__all__ = [
    "EvalConfig",
    "LeaderboardRow",
    "MetricsReport",
    "build_leaderboard",
    "emit_report",
    "parse_config",
    "parse_config_text",
    "percent_improvement",
    "run_evaluation",
]
