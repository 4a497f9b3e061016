"""Symbol-level precoding for MU-MISO PSK downlinks.

Subsystems:

- :mod:`slpnet.constellation` — PSK geometry, QoS distances, rotation symmetry
- :mod:`slpnet.channels` — fading datasets and the SLPD file format
- :mod:`slpnet.maxmin` — max-min-fairness solver and bisection oracle
- :mod:`slpnet.blp` — zero-forcing block-level baseline
- :mod:`slpnet.network` — the EPNN neural precoder (training, checkpoints)
- :mod:`slpnet.evaluate` — Monte Carlo SER sweeps and timing benchmarks
- :mod:`slpnet.cli` — the ``slpnet`` command-line entry point
- :mod:`slpnet.kernels` — compiled/numpy twin compute kernels
"""

from .blp import BlockPrecoder, blp_transmit, zf_precoder
from .channels import (
    Dataset,
    DatasetFormatError,
    load_dataset,
    sample_awgn,
    sample_rayleigh,
    sample_rician,
    save_dataset,
)
from .constellation import (
    Constellation,
    detect,
    enumerate_full_symbol_vectors,
    enumerate_reduced_symbol_vectors,
    expand_precoders,
    make_constellation,
    qos_distance,
    qos_matrix,
    rotation_phasors,
    symbol_angles,
)
from .maxmin import (
    SolveConfig,
    SolveResult,
    evaluate_objective,
    oracle_solve,
    project_power,
    solve_maxmin,
)

__version__ = "0.1.0"

__all__ = [
    "BlockPrecoder",
    "Constellation",
    "Dataset",
    "DatasetFormatError",
    "SolveConfig",
    "SolveResult",
    "__version__",
    "blp_transmit",
    "detect",
    "enumerate_full_symbol_vectors",
    "enumerate_reduced_symbol_vectors",
    "evaluate_objective",
    "expand_precoders",
    "load_dataset",
    "make_constellation",
    "oracle_solve",
    "project_power",
    "qos_distance",
    "qos_matrix",
    "rotation_phasors",
    "sample_awgn",
    "sample_rayleigh",
    "sample_rician",
    "save_dataset",
    "solve_maxmin",
    "symbol_angles",
    "zf_precoder",
]
