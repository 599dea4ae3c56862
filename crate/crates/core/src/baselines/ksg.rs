use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::digamma;

use super::{BaselineError, BaselineEstimate, BaselineVariant};
use crate::data::PairedSamples;
use crate::nn::Tensor;

/// Replaces every column by `Φ⁻¹((rank + ½) / n)`; ties broken by index.
pub fn normal_scores(t: &Tensor) -> Tensor {
    let (n, d) = (t.rows(), t.cols());
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = t.clone();
    let mut idx: Vec<usize> = (0..n).collect();
    for j in 0..d {
        idx.sort_by(|&a, &b| t.get(a, j).total_cmp(&t.get(b, j)).then(a.cmp(&b)));
        for (rank, &i) in idx.iter().enumerate() {
            out.row_mut(i)[j] = normal.inverse_cdf((rank as f64 + 0.5) / n as f64);
        }
    }
    out
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
}

/// Kraskov estimator (first algorithm) with the max norm, on normal-score
/// margins. Brute-force neighbour search, `O(n²)`.
pub fn ksg(samples: &PairedSamples, k: usize) -> Result<BaselineEstimate, BaselineError> {
    let n = samples.len();
    if k == 0 {
        return Err(BaselineError::Config("k must be at least 1".into()));
    }
    if n <= k {
        return Err(BaselineError::TooFewSamples { k, n });
    }
    let x = normal_scores(&samples.x);
    let y = normal_scores(&samples.y);
    let mut dx = vec![0.0; n];
    let mut dy = vec![0.0; n];
    let mut dz = vec![0.0; n];
    let (psi_k, psi_n) = (digamma(k as f64), digamma(n as f64));
    let mut terms = Vec::with_capacity(n);
    for i in 0..n {
        for j in 0..n {
            dx[j] = max_dist(x.row(i), x.row(j));
            dy[j] = max_dist(y.row(i), y.row(j));
            dz[j] = dx[j].max(dy[j]);
        }
        dz[i] = f64::INFINITY;
        let mut sorted = dz.clone();
        let (_, eps, _) = sorted.select_nth_unstable_by(k - 1, f64::total_cmp);
        let eps = *eps;
        let nx = dx.iter().enumerate().filter(|&(j, d)| j != i && *d < eps).count();
        let ny = dy.iter().enumerate().filter(|&(j, d)| j != i && *d < eps).count();
        terms.push(psi_k + psi_n - digamma(nx as f64 + 1.0) - digamma(ny as f64 + 1.0));
    }
    let mean = terms.iter().sum::<f64>() / n as f64;
    let var = terms.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(BaselineEstimate {
        variant: BaselineVariant::Ksg { k },
        mean,
        std_error: (var / n as f64).sqrt(),
        n_points: n,
    })
}
