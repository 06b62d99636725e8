"""Metric-aware secure service orchestration.

Service programs are parsed, typed with a type-and-effect system whose
effects are metric-annotated history expressions, normalised to a single
metric bound, checked against usage-automaton policies and metric
thresholds per composition plan, and executed by a monitored interpreter.
"""

__version__ = "0.1.0"
