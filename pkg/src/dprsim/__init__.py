"""Simulator for multi-AFU FPGA fabrics under fixed-partition and flexible-footprint DPR."""

from .afu import (
    AfuSpec,
    BitstreamDb,
    BitstreamVersion,
    Infeasible,
    build_db_from_layouts,
    generate_footprints_heuristic,
    synthesize,
)
from .devices import bundled_config, bundled_device
from .experiments import (
    ExperimentResult,
    OverheadModel,
    run_overhead_experiment,
    run_placement_experiment,
    transition_time,
)
from .fabric import (
    Cell,
    ConfigError,
    Device,
    DeviceConfig,
    Interface,
    InterfaceKind,
    ResourceKind,
    ResourceVector,
    build_device,
    load_device_config,
    place_interfaces_peripheral,
    region_capacity,
)
from .footprint import Footprint, SizeModel, bitstream_bytes, overlaps, validate_footprint
from .layouts import Layout, LayoutError, best_effort_layout, naive_layout, random_layouts
from .packing import (
    AmorphousPacker,
    Combination,
    Placement,
    StandardSystem,
    brute_force_pack,
    feasible_amorphous,
    feasible_standard,
    placement_rate,
)
from .workloads import (
    Difficulty,
    Family,
    SequenceError,
    WorkloadSpec,
    build_library,
    sample_combinations,
    sample_sequence,
)

__version__ = "0.1.0"
