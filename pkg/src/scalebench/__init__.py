"""Scalability benchmarking of stream processing topologies.

The package bundles an in-memory partitioned broker, a small keyed stream
engine, four reference use cases, constant-rate workload generators, an
experiment harness and the offline analysis that turns lag series into
resource demand curves.
"""

__version__ = "0.1.0"
