# Export services
from .radial_service import radial_service
from .dilation_service import dilation_service
from .dynamics_service import dynamics_service
from .scattering_service import scattering_service
from .estimate_service import estimate_service
from .observable_service import observable_service
from .storage_service import storage_service
from .config_service import config_service
from .run_service import run_service

__all__ = [
    'radial_service',
    'dilation_service',
    'dynamics_service',
    'scattering_service',
    'estimate_service',
    'observable_service',
    'storage_service',
    'config_service',
    'run_service',
]
