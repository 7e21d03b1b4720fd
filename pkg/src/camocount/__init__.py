"""Desk-scale counting of camouflaged objects.

Dual-branch counting model (density map + query-based point regression) with
a small reverse-mode autodiff engine, Hungarian matching, count metrics, a
deterministic synthetic-scene generator, dataset tooling, a training/eval
CLI, and a point-annotation HTTP service.
"""

__version__ = "0.1.0"
