"""Finding approximate stationary points with few adaptive rounds of queries.

Modules:

- ``geometry``: boxes, nice delta-nets, barrier slices, unreachability.
- ``oracle``: objectives, batched query sessions with per-round accounting.
- ``trap``: the k-round gradient-flow trapping search.
- ``hardchain``: randomly partitioned chain functions (hard instances).
- ``gridpath``: monotone path functions and round-limited local search.
- ``harness``: CLI, benchmarks and self-check suites.
"""

__version__ = "0.1.0"
