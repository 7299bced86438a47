"""Static figures from cfres resilience trace tables."""

from .io import TraceBundle, TraceTable, load_bundle, parse_trace
from .figures import plot_adaptation, plot_lockin, plot_overall

__version__ = "0.1.0"
