"""
FastMCP server exposing the theory and simulation tools.
"""

from typing import Optional, Dict, Any, List
from fastmcp import FastMCP

from src.config import config
from src.tools import create_theory_tool, create_simulation_tool, tool_response
from src.utils.logging import get_logger

logger = get_logger(__name__)

theory_tool = create_theory_tool()
simulation_tool = create_simulation_tool()

mcp = FastMCP(config.MCP_SERVER_NAME if config else "erm-asymptotics")


@mcp.tool()
def theory(
    action: str,
    p: int,
    n: int,
    mu: str = "ones:1",
    cov: str = "identity",
    loss: str = "logistic",
    lam: float = 0.0,
    omega: Optional[float] = None
) -> Dict[str, Any]:
    """
    Deterministic high-dimensional predictions for ridge-regularized ERM.

    Actions:
        - predict: fixed-point scalars and predicted error (requires: loss, lam)
        - lower_bound: bias-fixed error lower bound (requires: omega)
        - calibrate: λ with λ/θ = omega for a loss (requires: loss, omega)
        - bias_range: attainable λ/θ range for a loss

    Patterns: mu "ones:sqrt2", "block:1,-1", "spike:1"; cov "identity",
    "scaled:2", "toeplitz:0.1", "rank1:1,6".
    """
    return tool_response(
        f"theory.{action}",
        lambda: theory_tool.execute(action=action, p=p, n=n, mu=mu, cov=cov, loss=loss,
                                    lam=lam, omega=omega)
    )


@mcp.tool()
def simulate(
    action: str,
    p: int,
    n: int,
    losses: List[str],
    lambdas: Optional[List[float]] = None,
    mu: str = "ones:1",
    cov: str = "identity",
    noise: str = "gaussian",
    seed: int = 0
) -> Dict[str, Any]:
    """
    One-shot simulation on a sampled training set.

    Actions:
        - fit: fit each loss (at its λ) and report errors and observables
        - combine: additionally compute the optimal linear combination
    """
    return tool_response(
        f"simulate.{action}",
        lambda: simulation_tool.execute(action=action, p=p, n=n, losses=losses, lambdas=lambdas,
                                        mu=mu, cov=cov, noise=noise, seed=seed)
    )


def serve():
    """Run the server with the configured transport."""
    transport = config.TRANSPORT_MODE if config else "stdio"
    logger.info(f"Starting MCP server '{mcp.name}' ({transport})")
    if transport == "stdio":
        mcp.run()
    else:
        mcp.run(transport=transport, host=config.HOST, port=config.PORT)


if __name__ == "__main__":
    serve()
