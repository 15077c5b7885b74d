"""Identification of the dipole operator of a finite-level quantum system
from measurements under precomputed selective laser fields."""
from .functionals import (
    MeasurementModel,
    ProblemContext,
    fitting_cost,
    fitting_gradient,
    measure_phi,
    selectivity_J,
    selectivity_increment,
)
from .greedy import (
    IdentificationResult,
    MeasurementRecord,
    SelectiveFieldSet,
    SelectivityWarning,
    fit_alpha,
    greedy_fields,
    identify,
    relative_error,
)
from .linalg import (
    SpectralDecomposition,
    eigendecompose,
    expi_scale,
    inner,
    make_hermitian,
    random_hermitian_basis,
)
from .optimizers import (
    MonotonicSettings,
    MonotonicityError,
    MultistartSettings,
    OptimizerTrace,
    discriminate,
    maximize_transfer,
    multistart_lsq,
    newton_field_update,
    theta_update,
)
from .propagator import (
    StrangPropagator,
    TimeGrid,
    mu_delta_t,
    propagate,
    propagate_adjoint,
    propagate_tangent,
)

__version__ = "0.1.0"
