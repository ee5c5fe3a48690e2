"""limitlens: length-limit impact analysis for tweet archives.

Weighted character counting, per-cohort length histograms, log-normal
cramming/run-over estimation, counterfactual limit solving, a generative
cramming simulator, and the supporting statistics (bootstrap CIs,
difference-in-differences, thread estimation, lexicon curves).
"""

__version__ = "0.1.0"

from .charcount import (  # noqa: F401
    KERNEL_BACKEND, CountingConfig, PRE2017, POST2017,
    extract_display_text, normalize_text, weighted_length,
)
from .histstore import HistStore, LengthHistogram, fraction_exceeding, merge  # noqa: F401
from .lengthmodel import (  # noqa: F401
    CramEstimate, FitError, FitResult, analyze_histogram, cramming_size,
    find_cramming_threshold, fit_lognormal, runover, smooth_density, solve_limit,
)
from .cramsim import SimConfig, SimResult, simulate  # noqa: F401
