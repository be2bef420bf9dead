from analyzers.base_analyzer import BaseAnalyzer, as_checkpoint
from analyzers.distribution_analyzer import WeightDistributionAnalyzer, analyze
from analyzers.feature_dump import FeatureDump, FeatureDumper, dump_features, load_dump, save_dump

__all__ = [
    "BaseAnalyzer",
    "as_checkpoint",
    "WeightDistributionAnalyzer",
    "analyze",
    "FeatureDump",
    "FeatureDumper",
    "dump_features",
    "load_dump",
    "save_dump"
]
