"""
Trace-driven simulator for device-to-device replication of social content.

The package is organised the way the simulation runs: traces are parsed or
synthesised (`trace_model`, `synth`), per-slot model tables are rebuilt from
history (`propagation`, `mobility`), a replication strategy assigns replicas
(`strategies`), and the engine (`simulator`) plays requests out against the
resulting caches. `metrics` and `sweeps` turn outcome logs into reports.
"""

__version__ = "0.4.0"
