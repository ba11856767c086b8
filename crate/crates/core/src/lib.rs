// SPDX-License-Identifier: Apache-2.0

//! Seminorms, metrics and Monge-Ampere measures on the Berkovich analytic
//! projective line over `Spec Z`.

pub mod adelic;
pub mod arith;
pub mod error;
pub mod fiber;
pub mod global_measure;
pub mod metric;
pub mod monge_ampere;
pub mod poly;
pub mod spectrum;
pub mod tree;

pub use adelic::{
    analytic_boundary_green, boundary_norm, delta_membership, invariance_residual, verify_cauchy, BoundaryDivisor,
    CauchyWitness, ExtQ, ModelAdelicDivisor, NormConfig, NormRegime, NormReport,
};
pub use arith::Q;
pub use error::{Error, Result};
pub use fiber::{
    is_interior, poly_seminorm, reduction, ArchCoord, FiberPoint, NaField, OpenSubscheme, PointKind, ProjQ,
    Reduction, Residue, SeminormValue,
};
pub use global_measure::{fiber_integral, global_ma_integrate, GlobalConfig, GlobalIntegral, TestFunction};
pub use metric::{
    check_no_common_zero, green_eval, invariant_metric_sequence, pullback, restrict_to_fiber, Chart,
    CommonZeroReport, FiberMetric, GlobalTropFSMetric, GreenFunction, GreenValue, PolyMap, Term,
};
pub use monge_ampere::{
    ma_arch, ma_at, ma_nonarch, nondegeneracy_check, total_mass_check, FiberMeasure, MaConfig, Mass,
};
pub use poly::{Form, UPoly};
pub use spectrum::{
    integrate_mu, mu, mu_prime, mu_total, residue_class, BranchSet, IntegralEstimate, MuQuadratureConfig, Place,
    ResidueClass, SpectrumPoint,
};
pub use tree::{build_skeleton, TreeSkeleton};
