"""Coordination of EV charging stations sharing energy storage on a radial feeder.

Subpackages cover the problem data model (:mod:`evshare.scenario`), the
three stakeholder models (:mod:`evshare.ev_station`,
:mod:`evshare.storage`, :mod:`evshare.network`), a conic solver kernel
(:mod:`evshare.kernel`), the centralized benchmark and pricing oracle
(:mod:`evshare.oracle`), the distributed prediction-correction
coordination loop (:mod:`evshare.coordinator`), and benchmark/CLI
tooling (:mod:`evshare.bench`, :mod:`evshare.cli`).
"""

__version__ = "0.1.0"
