use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Number of coordinates probed; all of them if the parameter vector is
    /// shorter.
    pub probes: usize,
    /// Lower bound on the relative-error denominator, so coordinates with a
    /// vanishing gradient are judged on absolute error.
    pub denominator_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            probes: 100,
            denominator_floor: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub max_analytic: f64,
    pub max_numeric: f64,
    pub probed: Vec<usize>,
}

/// Compares `analytic` with central differences of `f` at `params` on
/// randomly chosen coordinates.
pub fn grad_check(f: impl Fn(&[f64]) -> f64, params: &[f64], analytic: &[f64], opts: &GradCheckOptions) -> GradCheckReport {
    assert_eq!(params.len(), analytic.len(), "gradient length");
    assert!(opts.epsilon > 0.0, "epsilon must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut probed = sample(&mut rng, params.len(), opts.probes.min(params.len())).into_vec();
    probed.sort_unstable();
    let mut x = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_analytic: 0.0,
        max_numeric: 0.0,
        probed: Vec::new(),
    };
    for &i in &probed {
        let orig = x[i];
        x[i] = orig + opts.epsilon;
        let up = f(&x);
        x[i] = orig - opts.epsilon;
        let down = f(&x);
        x[i] = orig;
        let numeric = (up - down) / (2.0 * opts.epsilon);
        let a = analytic[i];
        let abs = (a - numeric).abs();
        let rel = abs / a.abs().max(numeric.abs()).max(opts.denominator_floor);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.max_analytic = report.max_analytic.max(a.abs());
        report.max_numeric = report.max_numeric.max(numeric.abs());
    }
    report.probed = probed;
    report
}
