"""Desk-scale toolkit for mixed CPU-GPU expert serving experiments.

Two halves, joined by the CLI:

* quantization: affine integer quantization with an activation smoothing
  search and sequential second-order weight rounding (``moekit.quant``,
  backed by ``moekit.numkit``),
* placement and offload simulation: synthetic routing traces, expert
  residency planning and a latency simulator with an LRU expert cache
  (``moekit.trace``, ``moekit.placement``, ``moekit.sim``).
"""

__version__ = "0.1.0"

from . import numkit, placement, quant, sim, trace

__all__ = ["numkit", "quant", "trace", "placement", "sim", "__version__"]
