"""Birkhoff-von Neumann switch scheduling with overflow deflection.

Submodules:

``schedule``  capacity matrices, BvN decomposition, frame calendars
``fluid``     on-off fluid analysis of one virtual circuit
``oracle``    Monte-Carlo fluid queue used as an independent check
``sim``       slot-level switch simulator (plain BvN and deflection modes)
``harness``   configs, sweeps, critical VOQ search, bound checks, CSV
``cli``       command-line front end
"""
from .errors import (ConfigError, DBvNError, NotBracketed, ValidationError)
from .fluid import FluidParams, ideal_deflection
from .harness import (SweepSpec, compare_report, find_critical_k,
                      parse_config, run_sweep)
from .schedule import (birkhoff_decompose, build_frame_schedule,
                       circular_shift_schedule, validate_capacity_matrix)
from .sim import Metrics, OnOffSource, SwitchConfig, SwitchState, run

__version__ = "0.1.0"
