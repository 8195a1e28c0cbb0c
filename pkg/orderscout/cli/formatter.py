"""
Output formatters for CLI.

Every subcommand returns a result record: a flat-ish dict with a "command"
key, scalar statistics, an "artifacts" list of written paths and a
"warnings" list. These functions render it as JSON or text.
"""

import json
from typing import Any, Dict

from orderscout.models import OrderScoutError


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "to_list"):
        return value.to_list()
    if hasattr(value, "value") and not isinstance(value, (int, float, str, bool)):
        return value.value
    return value


def format_json(result: Dict[str, Any]) -> str:
    """
    Format a command result as JSON.

    Example:
        >>> print(format_json({"command": "eval", "success_rate": 1.0}))
    """
    return json.dumps(_jsonable(result), indent=2)


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    if hasattr(value, "to_list"):
        return str(value)
    if isinstance(value, (list, tuple)) and value and all(isinstance(v, (int, float)) for v in value):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    return str(value)


def format_text(result: Dict[str, Any]) -> str:
    """
    Format a command result as human-readable text.

    Example:
        >>> print(format_text({"command": "search", "final": "[0, 1, 2]"}))
    """
    lines = [f"✅ {result.get('command', 'command')} completed", ""]

    stats = {
        k: v for k, v in result.items()
        if k not in ("command", "artifacts", "warnings") and not isinstance(v, dict)
    }
    if stats:
        lines.append("📊 Results:")
        for key, value in stats.items():
            lines.append(f"  {key.replace('_', ' ').capitalize()}: {_format_value(value)}")
        lines.append("")

    for key, value in result.items():
        if isinstance(value, dict) and value:
            lines.append(f"📋 {key.replace('_', ' ').capitalize()}:")
            for name, item in value.items():
                lines.append(f"  {name}: {_format_value(item)}")
            lines.append("")

    if result.get("artifacts"):
        lines.append("📂 Output:")
        for path in result["artifacts"]:
            lines.append(f"  - {path}")
        lines.append("")

    if result.get("warnings"):
        lines.append("⚠️  Warnings:")
        for warning in result["warnings"]:
            lines.append(f"  - {warning}")
        lines.append("")

    return "\n".join(lines)


def format_error(error: BaseException) -> str:
    """Machine-readable error record printed on stderr."""
    name = type(error).__name__ if isinstance(error, OrderScoutError) else "UnexpectedError"
    return json.dumps({"error": name, "message": str(error)})
