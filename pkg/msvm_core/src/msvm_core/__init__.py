from msvm_core import (
    kernels,
    qp,
    model,
    geometry,
    selection,
    dataset,
    serialization,
    parsing,
    logging,
    util,
)
