"""BiMoE: brain-region mixture-of-experts pipeline for EEG + peripheral signals."""

__version__ = "0.1.0"
