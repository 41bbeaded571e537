//! Shared fixtures for the criterion benchmarks.

use rlab_core::{generate, Ball, DiscreteSurface, ScaleLadder, Vector, ZooSpec};

/// Gentle sine graph used by the pipeline benches.
pub fn sine_surface(samples: usize) -> DiscreteSurface {
    generate(&ZooSpec::graph_sin(2, samples, 0.005, 0.5)).expect("valid zoo spec")
}

/// Ball of the given radius about the sample nearest the origin.
pub fn central_region(s: &DiscreteSurface, radius: f64) -> Ball {
    let (i, _) = s.index().nearest(&Vector::zeros(s.ambient_dim())).expect("nonempty sample");
    Ball { center: s.point(i), radius }
}

pub fn ladder(depth: usize) -> ScaleLadder {
    ScaleLadder::new(0.25, 2.0, depth).expect("valid ladder")
}

/// Deterministic query centers spread over the sample.
pub fn query_points(s: &DiscreteSurface, count: usize) -> Vec<Vector> {
    let step = (s.len() / count.max(1)).max(1);
    (0..count).map(|i| s.point((i * step) % s.len())).collect()
}
