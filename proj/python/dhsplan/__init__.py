"""Heat and power dispatch with bilinear district-heating networks."""

import json

from . import _core
from ._core import Error, ParseError, ValidationError, network_summary, taylor_gap

__version__ = _core.__version__

VARIANTS = ("base", "reformulated", "remove-bilinear", "mccormick", "constant-flow", "tightening")


def solve(network, variant="reformulated", hours=None):
    """Solve one variant; returns a dict with status, objective and named values."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    return json.loads(_core.solve_json(str(network), variant, _hours(hours)))


def compare(network, hours=None, skip_global=False, name="instance"):
    """Run every variant and return the comparison report as a dict."""
    return json.loads(_core.compare_json(str(network), _hours(hours), skip_global, name))


def _hours(hours):
    if hours is None:
        return None
    if isinstance(hours, range):
        hours = list(hours)
    return [int(h) for h in hours]


__all__ = [
    "Error",
    "ParseError",
    "ValidationError",
    "VARIANTS",
    "compare",
    "network_summary",
    "solve",
    "taylor_gap",
]
