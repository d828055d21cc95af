"""Multi-factorial gap-filling of metabolic models across growth media."""

from .model import (AvailabilityState, GrowthClass, MediumSpec, Metabolite, MetabolicModel,
                    Reaction, expand, load_media, load_model, validate_model)
from .objectives import Betas, Evaluation, REGIMES, TargetSet
from .pfba import AlphaSchedule, FluxSolution, calibrate_alpha, detect_runaway, solve_pfba
from .search import MultiFactorialSearch, SearchConfig, preprocess, run

__version__ = "0.1.0"
