"""MCP tools."""

from typing import Any, Callable, Dict, Optional

from src.tools.theory import TheoryTool, create_theory_tool
from src.tools.simulation import SimulationTool, create_simulation_tool
from src.utils.errors import ErmError, format_success_response
from src.utils.logging import get_logger

logger = get_logger(__name__)


def tool_response(
    label: str,
    call: Callable[[], Dict[str, Any]],
    request_id: Optional[str] = None
) -> Dict[str, Any]:
    """
    Run one tool call and wrap its outcome in a JSON-RPC 2.0 envelope.

    Library errors become error envelopes carrying their code and data;
    the client sees the same payload the CLI would log.
    """
    try:
        result = call()
    except ErmError as e:
        logger.error(f"{label} failed: {e.message}", extra={'code': e.code, 'tool': label})
        return e.to_dict(request_id)
    logger.info(f"{label} completed", extra={'tool': label})
    return format_success_response(result, request_id)


__all__ = [
    'TheoryTool',
    'create_theory_tool',
    'SimulationTool',
    'create_simulation_tool',
    'tool_response',
]
