//! Pointwise mean regret with 95% confidence bands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::CiMethod;
use super::HarnessError;

pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretBand {
    pub mean: Vec<f64>,
    pub ci_low: Vec<f64>,
    pub ci_high: Vec<f64>,
}

impl RegretBand {
    pub fn half_width(&self, t: usize) -> f64 {
        (self.ci_high[t] - self.ci_low[t]) / 2.0
    }
}

/// Mean over runs with a normal-approximation band `mean ± 1.96 s/sqrt(n)`.
pub fn bayes_regret(curves: &[&[f64]]) -> Result<RegretBand, HarnessError> {
    bayes_regret_with(curves, &CiMethod::Normal, 0)
}

pub fn bayes_regret_with(curves: &[&[f64]], method: &CiMethod, seed: u64) -> Result<RegretBand, HarnessError> {
    if curves.len() < 2 {
        return Err(HarnessError::Runtime("a confidence band needs at least 2 runs".into()));
    }
    let len = curves[0].len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(HarnessError::Runtime("regret curves differ in length".into()));
    }
    let n = curves.len() as f64;
    let mean: Vec<f64> = (0..len).map(|t| curves.iter().map(|c| c[t]).sum::<f64>() / n).collect();
    let (ci_low, ci_high) = match method {
        CiMethod::Normal => (0..len)
            .map(|t| {
                let var = curves.iter().map(|c| (c[t] - mean[t]).powi(2)).sum::<f64>() / (n - 1.0);
                let h = Z_95 * (var / n).sqrt();
                (mean[t] - h, mean[t] + h)
            })
            .unzip(),
        CiMethod::Bootstrap { resamples } => {
            let b = (*resamples).max(2);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // one set of resampled run indices shared across steps keeps bands smooth
            let picks: Vec<Vec<usize>> = (0..b)
                .map(|_| (0..curves.len()).map(|_| rng.random_range(0..curves.len())).collect())
                .collect();
            (0..len)
                .map(|t| {
                    let mut means: Vec<f64> = picks
                        .iter()
                        .map(|idx| idx.iter().map(|&i| curves[i][t]).sum::<f64>() / n)
                        .collect();
                    means.sort_by(f64::total_cmp);
                    (quantile(&means, 0.025), quantile(&means, 0.975))
                })
                .unzip()
        }
    };
    Ok(RegretBand { mean, ci_low, ci_high })
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identical_runs_have_zero_width() {
        let c = vec![1.0, 2.0, 4.0];
        let band = bayes_regret(&[&c, &c, &c]).unwrap();
        assert_eq!(band.mean, c);
        assert_eq!(band.ci_low, c);
        assert_eq!(band.ci_high, c);
        let boot = bayes_regret_with(&[&c, &c], &CiMethod::Bootstrap { resamples: 50 }, 1).unwrap();
        assert_eq!(boot.ci_low, c);
    }

    #[test]
    fn mean_is_pointwise_average() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let b = vec![0.0; 10];
        let band = bayes_regret(&[&a, &b]).unwrap();
        for t in 0..10 {
            assert_eq!(band.mean[t], t as f64 / 2.0);
        }
    }

    #[test]
    fn single_run_is_rejected() {
        let a = vec![1.0];
        assert!(bayes_regret(&[&a]).is_err());
    }

    #[test]
    fn width_scales_with_inverse_root_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let curves: Vec<Vec<f64>> = (0..400).map(|_| vec![noise.sample(&mut rng)]).collect();
        let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
        let full = bayes_regret(&refs).unwrap().half_width(0);
        let quarter = bayes_regret(&refs[..100]).unwrap().half_width(0);
        // four times fewer runs, twice the width
        let ratio = quarter / full;
        assert!((ratio - 2.0).abs() < 0.3, "{ratio}");
    }

    #[test]
    fn bootstrap_agrees_with_normal_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(3.0, 2.0).unwrap();
        let curves: Vec<Vec<f64>> = (0..200).map(|_| vec![noise.sample(&mut rng)]).collect();
        let refs: Vec<&[f64]> = curves.iter().map(Vec::as_slice).collect();
        let normal = bayes_regret(&refs).unwrap();
        let boot = bayes_regret_with(&refs, &CiMethod::Bootstrap { resamples: 4000 }, 2).unwrap();
        assert!((normal.half_width(0) - boot.half_width(0)).abs() < 0.15 * normal.half_width(0));
    }
}
