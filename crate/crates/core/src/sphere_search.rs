//! Derivative-free local minimization over unit vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{orthonormal_complement, Vector};

const START_STEP: f64 = 0.3;
const MIN_STEP: f64 = 1e-9;
const MAX_EVALS: usize = 6000;

/// Pattern search on the unit sphere starting at `start`. Tries the `±` tangent
/// axes plus as many random tangent directions at each step size, moving on
/// strict improvement and halving the step otherwise.
pub(crate) fn minimize(start: Vector, seed: u64, mut f: impl FnMut(&Vector) -> f64) -> (Vector, f64) {
    let mut u = start.normalized().unwrap_or(start);
    let mut best = f(&u);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = START_STEP;
    let mut evals = 1;
    let dim = u.dim();
    while step > MIN_STEP && evals < MAX_EVALS {
        let basis = orthonormal_complement(&u);
        let mut dirs: Vec<Vector> = basis.iter().flat_map(|b| [*b, -*b]).collect();
        for _ in 0..basis.len() {
            let mut d = Vector::zeros(dim);
            for b in &basis {
                d = d.axpy(rng.gen_range(-1.0..1.0), b);
            }
            if let Some(d) = d.normalized() {
                dirs.push(d);
            }
        }
        let mut moved = false;
        for d in dirs {
            let Some(c) = u.axpy(step, &d).normalized() else { continue };
            let v = f(&c);
            evals += 1;
            if v < best {
                best = v;
                u = c;
                moved = true;
                break;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    (u, best)
}
