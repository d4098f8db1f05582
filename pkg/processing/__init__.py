# Processing package
from .bandwidth import BandwidthPrior, BandwidthSampler, McmcConfig
from .cv_select import CrossValidator, CvConfig
from .dataset import Dataset, load_csv, save_csv, split
from .estimator import FitResult, TruncatedEstimator, TruncationLevel
from .intrinsic_dim import DimensionEstimator
from .two_stage import EigenmapConfig, laplacian_eigenmap, two_stage_fit

__all__ = [
    'BandwidthPrior', 'BandwidthSampler', 'McmcConfig',
    'CrossValidator', 'CvConfig',
    'Dataset', 'load_csv', 'save_csv', 'split',
    'FitResult', 'TruncatedEstimator', 'TruncationLevel',
    'DimensionEstimator',
    'EigenmapConfig', 'laplacian_eigenmap', 'two_stage_fit',
]
