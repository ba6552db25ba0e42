"""Event-aware visitor-flow forecasting.

Structured event catalogs, social-media popularity metrics, calendar and
trend features, boosted-tree forecasting with rolling evaluation, and exact
SHAP attribution.
"""

from .errors import EventflowError
from .features import FEATURE_SETS, FeatureMatrix, assemble
from .models import ModelSpec, fit_gbdt
from .pipeline import Corpus, load_corpus
from .rolling import GridSpec, RollingConfig, grid_search, run_rolling
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "Corpus", "EventflowError", "FEATURE_SETS", "FeatureMatrix", "GridSpec", "ModelSpec", "RollingConfig",
    "SynthConfig", "assemble", "fit_gbdt", "generate", "grid_search", "load_corpus", "run_rolling",
]
