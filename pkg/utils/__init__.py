# Utility functions module
from .cutoff_utils import *
from .numeric_utils import *
from .config_utils import *
from .run_utils import *

__all__ = [
    'transition_profile',
    'unit_cutoff',
    'lower_cutoff',
    'upper_cutoff',
    'band_cutoff',
    'dyadic_band',
    'bessel_zeros',
    'next_power_of_two',
    'geometric_grid',
    'loglog_fit',
    'trapezoid_weights',
    'cumulative_trapezoid',
    'trend_slope',
    'nearly_rational',
    'japanese_bracket',
    'format_float',
    'parse_flat_document',
    'serialize_flat_document',
    'config_hash',
    'format_timestamp',
    'package_versions',
]
