"""loglens: log anomaly detection toolkit.

Pipeline pieces: template parsing (`loglens.ingest`), partitioning and
windowing (`loglens.sequencing`), five neural detector families on a small
reverse-mode autodiff engine (`loglens.detectors`, `loglens.autodiff`), a
benchmark harness (`loglens.bench`), and a synthetic log generator
(`loglens.syngen`). The `loglens` command line binds them together.
"""

__version__ = "0.1.0"
