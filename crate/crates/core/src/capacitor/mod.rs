//! The two-plate capacitor inverse problem: an unknown plate voltage is
//! recovered from a handful of noisy potential measurements while the
//! network is held to Laplace's equation and the grounded boundaries.

mod geometry;
mod io;
mod losses;
mod metrics;
mod problem;
mod sampling;

pub use geometry::{f_lower, f_upper, DomainGeometry, INTERIOR_MARGIN};
pub use io::PointTable;
pub use losses::{
    loss_bc0, loss_bcv, loss_data, loss_data_hetero, loss_pde, make_measurements, sample_field, BoundaryMatch,
    ConstraintConfig, DataMisfit, MeasurementSet, PNorm, PdeResidual, PlateVoltage,
};
pub use metrics::{grid_points, metrics, GridSample, Metrics, DEFAULT_GRID};
pub use problem::{sample_collocation, CapacitorProblem, LossBreakdown, PointCounts, PointSets};
pub use sampling::{
    default_measurement_points, grounded_segment, relocate_inside, sample_boundary, sample_interior,
    sample_interior_counted, BoundarySample, GroundedSegment, MEASUREMENT_CLEARANCE,
};
