"""parsco: parallel stochastic convex optimization with exact query accounting.

Layers, bottom up:

- ``core``      problem/oracle/ledger/RNG plumbing
- ``smoothing`` Gaussian-convolution estimators and Hessian-stability checks
- ``rank1``     the parallel prefix engine for x_t = c_t(I - u_t v_tᵀ)x_{t-1} + w_t
- ``sgd``       warm-started composite SGD executed through the engine
- ``boost``     expectation-to-high-probability reductions (aggregate, tournament)
- ``ball``      the (phi, lambda, r) ball optimization oracle
- ``outer``     parameter selection, accuracy schedule, prox/accelerated drivers
- ``bench``     synthetic problems, baselines, CSV harness, CLI
"""

from parsco.core import (
    CostLedger,
    OracleHandle,
    ProblemInstance,
    RngStream,
    derive_stream,
    gaussian_vector,
    submit_batch,
)

__version__ = "0.1.0"

__all__ = [
    "CostLedger",
    "OracleHandle",
    "ProblemInstance",
    "RngStream",
    "derive_stream",
    "gaussian_vector",
    "submit_batch",
    "__version__",
]
