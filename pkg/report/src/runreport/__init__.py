"""Figure generation from engine artifacts.

Reads run-log CSVs, cross-play JSON, bench CSVs, and population manifests
produced by the training engine and renders publication-style figures.  This
package never computes statistics; it draws exactly the fields the engine
emitted.
"""

from .figures import (render_crossplay, render_learning_curves,
                      render_population_treemap, render_sps_scaling,
                      render_zsc_bars)
from .io import (read_bench_csv, read_crossplay_json, read_population_json,
                 read_runlog_csv)

__all__ = [
    "read_bench_csv", "read_crossplay_json", "read_population_json",
    "read_runlog_csv", "render_crossplay", "render_learning_curves",
    "render_population_treemap", "render_sps_scaling", "render_zsc_bars",
]

__version__ = "0.1.0"
