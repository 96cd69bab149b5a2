"""routecast: a route evaluation engine for multi-step synthesis planning.

The package normalizes heterogeneous route formats into one canonical
schema, expands reference routes into multi-ground-truth sets by pruning
at purchasable intermediates, scores stock termination and rank-preserving
Top-K accuracy with bootstrap statistics, builds stratified benchmarks
with seed-stability selection, and chains every processing stage with
content-addressed provenance manifests.
"""

__version__ = "0.1.0"

from routecast.errors import RoutecastError

__all__ = ["RoutecastError", "__version__"]
