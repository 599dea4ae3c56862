//! Analytic-oracle suite: estimators driven by exact diffused-Gaussian scores.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scoremi::estimators::{
    entropy, kl_divergence, mi_minde_c, mi_minde_j, EstimatorVariant, GaussianOracle, GaussianPairOracle, McConfig,
};
use scoremi::data::PairedSamples;
use scoremi::sde::VpSchedule;

use crate::CliError;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub truth: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        (self.estimate - self.truth).abs() <= self.tolerance
    }

    pub fn line(&self) -> String {
        format!(
            "[{}] {}: {:.4} ± {:.4} vs {:.4} (tol {:.4})",
            if self.passed() { "pass" } else { "FAIL" },
            self.name,
            self.estimate,
            self.std_error,
            self.truth,
            self.tolerance
        )
    }
}

/// Entropy has a deterministic truncation bias from `t_eps` and the tail
/// term; this absolute allowance is added to the Monte Carlo band.
const ENTROPY_BIAS: f64 = 2e-3;

pub fn kl_checks(draws: usize) -> Result<Vec<Check>, CliError> {
    let s = VpSchedule::default();
    let iso = |d, sd| GaussianOracle::isotropic(d, sd, s);
    let cases: Vec<(&str, GaussianOracle, GaussianOracle)> = vec![
        ("KL identical 2-D", iso(2, 1.0)?, iso(2, 1.0)?),
        ("KL N(0,1) ‖ N(0,4)", iso(1, 1.0)?, iso(1, 2.0)?),
        (
            "KL mean shift 2-D",
            iso(2, 1.0)?,
            GaussianOracle::new(vec![0.6, 0.8], DMatrix::identity(2, 2), s)?,
        ),
        (
            "KL correlated ‖ isotropic 2-D",
            GaussianOracle::new(vec![0.0, 0.0], DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]), s)?,
            iso(2, 1.0)?,
        ),
        (
            "KL diagonal ‖ shifted 3-D",
            GaussianOracle::new(vec![0.0; 3], DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 1.0, 2.0])), s)?,
            GaussianOracle::new(vec![0.3, -0.2, 0.1], DMatrix::identity(3, 3), s)?,
        ),
    ];
    let mut out = Vec::new();
    for (i, (name, a, b)) in cases.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let x = a.sample(draws, &mut rng);
        let est = kl_divergence(&a, &b, &x, &McConfig::with_runs(1), &mut rng)?;
        out.push(Check {
            name: name.into(),
            estimate: est.mean,
            std_error: est.std_error,
            truth: a.kl_to(&b)?,
            tolerance: 3.0 * est.std_error,
        });
    }
    Ok(out)
}

pub fn entropy_checks(draws: usize) -> Result<Vec<Check>, CliError> {
    let s = VpSchedule::default();
    let sd = 0.7;
    let mut out = Vec::new();
    for n in [1usize, 2, 5] {
        let a = GaussianOracle::isotropic(n, sd, s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(200 + n as u64);
        let x = a.sample(draws, &mut rng);
        let est = entropy(&a, &x, 1.0, &McConfig::with_runs(1), &mut rng)?;
        let truth = n as f64 / 2.0 * (2.0 * std::f64::consts::PI * std::f64::consts::E * sd * sd).ln();
        out.push(Check {
            name: format!("entropy N={n}"),
            estimate: est.mean,
            std_error: est.std_error,
            truth,
            tolerance: 3.0 * est.std_error + ENTROPY_BIAS,
        });
    }
    Ok(out)
}

pub fn mi_checks(draws: usize) -> Result<Vec<Check>, CliError> {
    let s = VpSchedule::default();
    let mut out = Vec::new();
    for (i, rho) in [0.3, 0.6, 0.9].into_iter().enumerate() {
        let oracle = GaussianPairOracle::bivariate(rho, s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(300 + i as u64);
        let (x, y) = oracle.sample(draws, &mut rng);
        let data = PairedSamples::new(x, y).map_err(scoremi::estimators::EstimatorError::from)?;
        let truth = -0.5 * (1.0 - rho * rho).ln();
        for v in [
            EstimatorVariant::Cond,
            EstimatorVariant::CondSigma,
            EstimatorVariant::Joint,
            EstimatorVariant::JointSigma,
        ] {
            let sigma = v.needs_sigma().then_some(1.0);
            let mc = McConfig::with_runs(1);
            let est = if v.is_joint() {
                mi_minde_j(&oracle, &data, v, sigma, &mc, &mut rng)?
            } else {
                mi_minde_c(&oracle, &data, v, sigma, &mc, &mut rng)?
            };
            out.push(Check {
                name: format!("{} ρ={rho}", v.label()),
                estimate: est.mean,
                std_error: est.std_error,
                truth,
                tolerance: 3.0 * est.std_error,
            });
        }
    }
    Ok(out)
}

/// The whole suite at `draws` samples per check.
pub fn selftest(draws: usize) -> Result<Vec<Check>, CliError> {
    let mut all = kl_checks(draws)?;
    all.extend(entropy_checks(draws)?);
    all.extend(mi_checks(draws)?);
    Ok(all)
}
