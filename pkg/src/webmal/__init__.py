"""Toolkit for web-graph malware analysis.

Builds pay-level-domain graphs from page-level edge lists, computes local and
network features, fits heavy-tailed distributions to feature populations,
scores file and domain maliciousness from antivirus verdicts, extracts
malware-distribution networks from file co-occurrence, and trains a stacked
logistic classifier over the assembled features.
"""

__version__ = "0.1.0"
