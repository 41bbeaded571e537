//! Multiscale flatness statistics, coherent ball/plane collections and
//! Reifenberg-type parametrizations for weighted point samples of surfaces.

pub mod ccbp;
pub mod error;
pub mod flatness;
pub mod geometry;
pub mod index;
pub mod measure;
pub mod parametrize;
pub mod poincare;
pub mod quasiconvex;
pub mod span;
pub mod zoo;
mod sphere_search;

pub use error::{Error, OffendingPair, Result};
pub use geometry::{dist_to_plane, plane_local_hausdorff, project_to_plane, AffinePlane, Ball, Vector, MAX_DIM};
pub use index::{range_query, SpatialIndex};
pub use measure::{
    ahlfors_audit, average, average_normal, center_of_mass, mu_ball, AhlforsAudit, AhlforsConfig, AhlforsRecord,
    DiscreteSurface,
};
pub use zoo::{describe, generate, Expectations, Hole, Shape, ZooSpec};
pub use flatness::{
    alpha, beta1, beta_inf, carleson_dyadic_sum, carleson_integral, check_dyadic_equivalence, check_normal_lower_bound,
    CarlesonSum, DyadicReport, FlatnessRecord, NormalBoundReport, ScaleLadder,
};
pub use span::{
    build_effective_span, calibrate_c0, dist_to_subspace, escape_point, gs_decompose, k1_bound, C0Calibration,
    EffectiveSpan, Subspace,
};
pub use ccbp::{
    assemble_ccbp, build_ccbp, build_net, poincare_plane, refine_point, verify_ccbp, Ccbp, MultiscaleNet, PoincarePlane,
    VerifyReport,
};
pub use parametrize::{
    bilip_criterion, bilip_estimate, containment_check, epsilon_prime, partition_weights, reifenberg_audit, run_flow,
    sigma_k, BilipEstimate, BumpProfile, ContainmentReport, FlowField, FlowSummary, FlowTrace, ReifenbergAudit,
    ReifenbergConfig,
};
pub use poincare::{
    keith_form_audit, lip_local, mcshane_extend, poincare_audit, tangential_gradient, KeithAudit, LipLocal, McShane,
    PoincareAudit, PoincareRecord, TestFunction,
};
pub use quasiconvex::{quasiconvexity_audit, IntrinsicGraph, QuasiconvexAudit};
