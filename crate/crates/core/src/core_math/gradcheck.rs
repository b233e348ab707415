//! Central finite-difference verification of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::exec::Execution;

pub const DEFAULT_STEP: f64 = 1e-4;

/// Gradients whose magnitudes are both below this are compared in absolute
/// terms; finite differences cannot resolve relative error there.
pub const RELATIVE_FLOOR: f64 = 1e-7;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
    (analytic - numeric).abs() / denom
}

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Entries checked per parameter block (all entries if the block is
    /// smaller).
    pub samples_per_block: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            samples_per_block: 12,
            tolerance: 1e-4,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockReport {
    pub name: String,
    pub checked: usize,
    pub worst_rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub blocks: Vec<BlockReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.passed)
    }

    pub fn worst(&self) -> f64 {
        self.blocks.iter().map(|b| b.worst_rel_err).fold(0.0, f64::max)
    }
}

/// Compare `analytic[b]` against central differences of `loss` for a seeded
/// sample of entries from every block. `loss` receives the full parameter
/// list with one entry perturbed.
pub fn check_gradients<F>(
    names: &[String],
    params: &[Tensor],
    analytic: &[Tensor],
    loss: F,
    config: &GradCheckConfig,
) -> GradCheckReport
where
    F: Fn(&[Tensor]) -> f64 + Sync + Send,
{
    assert_eq!(names.len(), params.len());
    assert_eq!(analytic.len(), params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut probes = Vec::new();
    for (b, p) in params.iter().enumerate() {
        let n = p.len();
        let take = config.samples_per_block.min(n);
        let mut picked: Vec<usize> = sample(&mut rng, n, take).into_vec();
        picked.sort_unstable();
        probes.extend(picked.into_iter().map(|i| (b, i)));
    }
    let step = config.step;
    let errors = config.execution.map(&probes, |&(b, i)| {
        let mut perturbed = params.to_vec();
        let base = perturbed[b].data()[i];
        perturbed[b].data_mut()[i] = base + step;
        let plus = loss(&perturbed);
        perturbed[b].data_mut()[i] = base - step;
        let minus = loss(&perturbed);
        let numeric = (plus - minus) / (2.0 * step);
        relative_error(analytic[b].data()[i], numeric)
    });
    let blocks = names
        .iter()
        .enumerate()
        .map(|(b, name)| {
            let errs: Vec<f64> = probes
                .iter()
                .zip(&errors)
                .filter(|((pb, _), _)| *pb == b)
                .map(|(_, &e)| e)
                .collect();
            let worst = errs.iter().copied().fold(0.0, f64::max);
            BlockReport {
                name: name.clone(),
                checked: errs.len(),
                worst_rel_err: worst,
                passed: worst < config.tolerance && errs.iter().all(|e| e.is_finite()),
            }
        })
        .collect();
    GradCheckReport { blocks }
}
