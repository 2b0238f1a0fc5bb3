"""Online change-point detection and regime analysis for aggregated order flow."""

__version__ = "0.1.0"

from .engine import DetectionOutput, Detector, Hazard, NumericalDegeneracy, RunLengthState, Truncation, enumerate_posterior, step
from .iid import GaussianIID
from .markov import MarkovAR1
from .mboc import MbocDetector
from .score_driven import ScoreDrivenParams, estimate, filter_path, simulate_path
from .data import FlowSeries, SyntheticSpec, TradeRecord, aggregate, parse_messages, simulate
from .regimes import Regime, extract_regimes, regime_imbalance
from .config import RunConfig, build_detector, resolve

__all__ = [
    "DetectionOutput",
    "Detector",
    "Hazard",
    "NumericalDegeneracy",
    "RunLengthState",
    "Truncation",
    "enumerate_posterior",
    "step",
    "GaussianIID",
    "MarkovAR1",
    "MbocDetector",
    "ScoreDrivenParams",
    "estimate",
    "filter_path",
    "simulate_path",
    "FlowSeries",
    "SyntheticSpec",
    "TradeRecord",
    "aggregate",
    "parse_messages",
    "simulate",
    "Regime",
    "extract_regimes",
    "regime_imbalance",
    "RunConfig",
    "build_detector",
    "resolve",
]
