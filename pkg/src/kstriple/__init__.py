"""Regularized hierarchical three-body toolkit built on the KS map."""
from .errors import *  # noqa: F401,F403
from .threebody import MassConfig, RegularizedState, JacobiState, eval_F, eval_regularized
from .quat import KSPoint, CartesianPair, ks_map, ks_inverse, hopf

__version__ = "0.1.0"
