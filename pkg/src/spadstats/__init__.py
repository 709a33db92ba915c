"""Afterpulsing, dark-count and efficiency characterization of single-photon detectors.

The detector is modeled on a lattice of equal time slots.  Each slot may hold
a Poissonian event (source photon or dark count) and, after a detection, an
afterpulse whose probability decays with elapsed time.  The package evaluates
the resulting waiting-time distribution, simulates labeled detection streams,
and recovers rates and afterpulsing bounds from inter-arrival histograms.
"""

__version__ = "0.1.0"

from .data import InterArrivalHistogram, TimeTagStream
from .errors import (ConvergenceError, DataError, DomainError, FitError, FitQualityError,
                     FormatError, HistogramParseError, ModelError, ReportSchemaError,
                     SpadStatsError, TagFormatError)
from .estimation import (EfficiencyEstimate, ExpFitResult, TailFitResult, TauSweepResult,
                         afterpulse_excess, bound_afterpulsing, build_histogram,
                         build_histogram_chunked, estimate_efficiency, fit_exponential, fit_tail,
                         separate_rates, sweep_tau)
from .models import (ExponentialModel, MultiExponentialModel, NullModel, PowerLawModel,
                     min_dead_time_for_target, prob_at_slot, total_prob, total_prob_by_sum,
                     total_prob_with_dead)
from .params import DeadTime, SlotParams
from .simulator import Cause, LabeledEvents, SimConfig, simulate, to_timetags
from .waiting import (BoundSet, bound_error_series, cumulative_bounds, pmf_full,
                      pmf_no_afterpulse, r0_limit, tail_intercept, waiting_pmf)
