# Synthetic manifolds and geometry checks
from .generators import CircleManifoldConfig, SwissRollConfig, gen_circle_manifold, gen_swiss_roll

__all__ = ['CircleManifoldConfig', 'SwissRollConfig', 'gen_circle_manifold', 'gen_swiss_roll']
