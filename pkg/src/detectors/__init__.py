"""Second-order analysis."""

from src.detectors.soc_analyzer import SecondOrderAnalyzer, SOCReport, soc_verdict

__all__ = ["SOCReport", "SecondOrderAnalyzer", "soc_verdict"]
