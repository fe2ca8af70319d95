//! Recycled-particle proposal adaptation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::model::{ModelIndex, PriorSpec, Profile};
use crate::numeric::log_sum_exp;

/// One archived annealing step as seen by a single model.
#[derive(Debug, Clone)]
pub struct ArchivedStep {
    pub step: usize,
    pub gamma: f64,
    /// log Z-hat of the model's tempered target at this step, if known.
    pub log_z: Option<f64>,
    /// Log-likelihoods of the model's records archived at this step.
    pub log_likes: Vec<f64>,
}

/// Deterministic-mixture weights of archived records for the tempered
/// target at `gamma_t`, conditional on `model`:
///
/// `nu = L^gamma_t / ((1/n) sum_l L^gamma_l / Z_l)` over the `n` archived steps.
///
/// The prior density appears in numerator and denominator and cancels. The
/// result is in log space with one vector per archived step. These weights
/// describe the model-conditional target only.
pub fn recycling_weights(
    model: ModelIndex,
    history: &[ArchivedStep],
    gamma_t: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut terms = Vec::with_capacity(history.len());
    for h in history {
        match h.log_z {
            Some(z) => terms.push((h.gamma, z)),
            None => {
                return Err(Error::MissingEvidence {
                    kappa: model.kappa,
                    lambda: model.lambda,
                    step: h.step,
                })
            }
        }
    }
    let ln_n = (terms.len() as f64).ln();
    Ok(history
        .iter()
        .map(|h| {
            h.log_likes
                .iter()
                .map(|&l| {
                    if l == f64::NEG_INFINITY {
                        return f64::NEG_INFINITY;
                    }
                    let denom: Vec<f64> = terms
                        .iter()
                        .map(|&(g, z)| crate::smc::tempered(g, l) - z)
                        .collect();
                    crate::smc::tempered(gamma_t, l) - (log_sum_exp(&denom) - ln_n)
                })
                .collect()
        })
        .collect())
}

/// Eigen-direction random walk for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct WithinModelProposal {
    /// Columns are search directions.
    pub directions: DMatrix<f64>,
    /// Standard deviation along each direction (square roots of eigenvalues).
    pub sd: Vec<f64>,
    /// Global multiplier tuned towards the target acceptance rate.
    pub scale: f64,
    /// True when built from prior variances because the model lacked samples.
    pub fallback: bool,
}

/// Adapted proposals for every model.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalSuite {
    pub prior: PriorSpec,
    /// Indexed by model slot.
    pub within: Vec<WithinModelProposal>,
    /// ZCA colouring matrices of each model's property blocks, indexed by
    /// model slot then profile (conductive, chargeable). `None` selects the
    /// naive prior-draw birth/death for moves into or out of that model.
    pub colouring: Vec<[Option<DMatrix<f64>>; 2]>,
}

pub(crate) fn profile_slot(p: Profile) -> usize {
    match p {
        Profile::Conductive => 0,
        Profile::Chargeable => 1,
    }
}

/// Linear slot of a model in per-model tables.
pub fn model_slot(prior: &PriorSpec, k: ModelIndex) -> usize {
    k.kappa * (prior.lambda_max + 1) + k.lambda
}

pub fn slot_model(prior: &PriorSpec, slot: usize) -> ModelIndex {
    ModelIndex::new(slot / (prior.lambda_max + 1), slot % (prior.lambda_max + 1))
}

impl ProposalSuite {
    pub fn within(&self, k: ModelIndex) -> &WithinModelProposal {
        &self.within[model_slot(&self.prior, k)]
    }

    pub fn colouring(&self, k: ModelIndex, p: Profile) -> Option<&DMatrix<f64>> {
        self.colouring[model_slot(&self.prior, k)][profile_slot(p)].as_ref()
    }

    /// Prior-based proposals for every model.
    pub fn fallback(prior: &PriorSpec, scale: f64) -> Self {
        let within = prior.models().map(|k| prior_fallback(prior, k, scale)).collect();
        let colouring = prior.models().map(|_| [None, None]).collect();
        Self {
            prior: prior.clone(),
            within,
            colouring,
        }
    }
}

/// Indices of one profile's property block within the flattened vector.
pub fn property_indices(k: ModelIndex, p: Profile) -> Vec<usize> {
    match p {
        Profile::Conductive => (0..=k.kappa).collect(),
        Profile::Chargeable => (1 + 2 * k.kappa..1 + 2 * k.kappa + k.lambda).collect(),
    }
}

/// Axis-aligned proposal with prior variances.
pub fn prior_fallback(prior: &PriorSpec, k: ModelIndex, scale: f64) -> WithinModelProposal {
    let var = |w: f64| w * w / 12.0;
    let mut v = vec![var(prior.phi.width()); 1 + k.kappa];
    v.extend(std::iter::repeat_n(var(prior.z_max), k.kappa));
    v.extend(std::iter::repeat_n(var(prior.m.width()), k.lambda));
    v.extend(std::iter::repeat_n(var(prior.z_max), k.lambda));
    v.push(var(prior.tau.width()));
    v.push(var(prior.c.width()));
    WithinModelProposal {
        directions: DMatrix::identity(v.len(), v.len()),
        sd: v.iter().map(|x| x.sqrt()).collect(),
        scale,
        fallback: true,
    }
}

/// Weighted mean and covariance, regularised by `1e-8 * trace / d` on the diagonal.
pub fn weighted_covariance(samples: &[Vec<f64>], log_w: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let d = samples[0].len();
    let total = log_sum_exp(log_w);
    let w: Vec<f64> = log_w.iter().map(|l| (l - total).exp()).collect();
    let mut mean = DVector::zeros(d);
    for (s, &wi) in samples.iter().zip(&w) {
        for j in 0..d {
            mean[j] += wi * s[j];
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for (s, &wi) in samples.iter().zip(&w) {
        if wi == 0.0 {
            continue;
        }
        let dv = DVector::from_iterator(d, s.iter().zip(mean.iter()).map(|(a, b)| a - b));
        cov += wi * &dv * dv.transpose();
    }
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    if sw2 < 1.0 {
        cov /= 1.0 - sw2;
    }
    regularise(&mut cov);
    (mean, cov)
}

pub fn regularise(cov: &mut DMatrix<f64>) {
    let d = cov.nrows();
    let tr = cov.trace();
    let eps = if tr > 0.0 { 1e-8 * tr / d as f64 } else { 1e-12 };
    for i in 0..d {
        cov[(i, i)] += eps;
    }
}

/// Eigen-decomposition with eigenvalues clamped at zero.
pub fn eigen(cov: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let e = SymmetricEigen::new(cov.clone());
    (e.eigenvectors, e.eigenvalues.iter().map(|&l| l.max(0.0)).collect())
}

/// Symmetric (ZCA) square root `U diag(sqrt(lambda)) U^T`.
pub fn zca_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, l) = eigen(cov);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(l.len(), l.iter().map(|x| x.sqrt())));
    &u * d * u.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn single_archived_step_gives_importance_weights() {
        let k = ModelIndex::new(0, 0);
        let h = [ArchivedStep {
            step: 0,
            gamma: 0.0,
            log_z: Some(0.0),
            log_likes: vec![-1.0, -3.0],
        }];
        let nu = recycling_weights(k, &h, 0.3).unwrap();
        assert_relative_eq!(nu[0][0], -0.3, epsilon = 1e-15);
        assert_relative_eq!(nu[0][1], -0.9, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_schedule_gives_constant_weights() {
        let k = ModelIndex::new(1, 0);
        let h: Vec<ArchivedStep> = (0..3)
            .map(|s| ArchivedStep {
                step: s,
                gamma: 0.4,
                log_z: Some(-2.0),
                log_likes: vec![-1.0, 0.5, -7.0],
            })
            .collect();
        for v in recycling_weights(k, &h, 0.4).unwrap().iter().flatten() {
            assert_relative_eq!(*v, -2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn three_step_hand_example() {
        // Likelihoods 1, 2, 4 at gammas 0, 0.5, 1 with Z-hats 1, 1.5, 2.5.
        let k = ModelIndex::new(0, 0);
        let gammas = [0.0, 0.5, 1.0];
        let zs = [1.0, 1.5, 2.5f64];
        let h: Vec<ArchivedStep> = (0..3)
            .map(|s| ArchivedStep {
                step: s,
                gamma: gammas[s],
                log_z: Some(zs[s].ln()),
                log_likes: vec![1f64.ln(), 2f64.ln(), 4f64.ln()],
            })
            .collect();
        let nu = recycling_weights(k, &h, 1.0).unwrap();
        for (i, &l) in [1.0f64, 2.0, 4.0].iter().enumerate() {
            let denom = (1.0 / 1.0 + l.sqrt() / 1.5 + l / 2.5) / 3.0;
            let expected = l / denom;
            assert!((nu[1][i].exp() - expected).abs() < 1e-12 * expected);
        }
        let missing = [ArchivedStep { step: 4, gamma: 0.1, log_z: None, log_likes: vec![0.0] }];
        assert!(matches!(
            recycling_weights(k, &missing, 1.0),
            Err(Error::MissingEvidence { step: 4, .. })
        ));
    }

    #[test]
    fn isotropic_sample_has_unit_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<Vec<f64>> = (0..20_000)
            .map(|_| (0..3).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let (_, cov) = weighted_covariance(&s, &vec![0.0; s.len()]);
        let (u, l) = eigen(&cov);
        assert_relative_eq!((u.transpose() * &u - DMatrix::identity(3, 3)).norm(), 0.0, epsilon = 1e-10);
        for x in l {
            assert!((x - 1.0).abs() < 0.05, "{x}");
        }
    }

    #[test]
    fn rank_deficient_sample_is_regularised() {
        let s: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64, 1.0]).collect();
        let (_, cov) = weighted_covariance(&s, &vec![0.0; 50]);
        let e = SymmetricEigen::new(cov.clone());
        assert!(e.eigenvalues.iter().all(|&l| l > 0.0));
        let r = zca_sqrt(&cov);
        assert_relative_eq!((&r * &r - &cov).norm(), 0.0, epsilon = 1e-8 * cov.norm());
    }

    #[test]
    fn fallback_matches_layout() {
        let prior = PriorSpec::default();
        let k = ModelIndex::new(2, 1);
        let f = prior_fallback(&prior, k, 1.0);
        assert_eq!(f.sd.len(), k.dimension());
        assert!(f.fallback);
        assert_eq!(property_indices(k, Profile::Chargeable), vec![5]);
        assert_eq!(property_indices(k, Profile::Conductive), vec![0, 1, 2]);
        assert_eq!(slot_model(&prior, model_slot(&prior, k)), k);
    }
}
