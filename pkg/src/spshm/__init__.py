"""Spacecraft power-system digital twin with a four-stage health-management pipeline.

Modules: ``core`` (catalogs and telemetry types), ``sim`` (simulator and
datasets), ``wcr`` (work-condition recognition), ``ad`` (anomaly detection),
``features`` and ``fl`` (fault localization and metrics), ``mdm``
(maintenance decisions), ``ops`` (tool registry and command grammar),
``loop`` and ``cli``.
"""

__version__ = "0.1.0"
