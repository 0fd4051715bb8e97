//! Basin hopping: local BFGS searches from Gaussian perturbations of the current
//! minimum, accepted by the Metropolis rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::bfgs::{bfgs_minimize, BfgsOptions, BfgsStatus};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BasinHoppingConfig {
    /// Number of local searches, the first one starting from `x0`.
    pub n_basins: usize,
    /// BFGS iterations per local search.
    pub inner_iters: usize,
    /// Fixed Metropolis temperature; `None` uses 10% of the starting loss.
    pub temperature: Option<f64>,
    pub seed: u64,
    /// Cap on objective evaluations over all basins.
    pub max_evals: Option<usize>,
    pub grad_tol: f64,
}

impl Default for BasinHoppingConfig {
    fn default() -> Self {
        BasinHoppingConfig {
            n_basins: 5,
            inner_iters: 50,
            temperature: None,
            seed: 0,
            max_evals: None,
            grad_tol: 1e-8,
        }
    }
}

impl BasinHoppingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_basins == 0 {
            return Err(Error::InvalidConfig("basin hopping needs at least one basin".into()));
        }
        if let Some(t) = self.temperature {
            if !(t > 0.0) {
                return Err(Error::InvalidConfig("temperature must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct BasinStep {
    pub start_f: f64,
    pub local_f: f64,
    pub accepted: bool,
    pub best_f: f64,
    pub status: BfgsStatus,
}

#[derive(Clone, Debug)]
pub struct BasinHoppingResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evaluations: usize,
    pub steps: Vec<BasinStep>,
    /// Every accepted BFGS iterate value, concatenated over the basins.
    pub trace: Vec<f64>,
}

/// Runs basin hopping on `fg` starting from `x0`; `scales[i]` is the standard
/// deviation of the perturbation of parameter `i`.
pub fn basin_hopping<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(
    mut fg: F,
    x0: &[f64],
    scales: &[f64],
    cfg: &BasinHoppingConfig,
) -> Result<BasinHoppingResult> {
    cfg.validate()?;
    if scales.len() != x0.len() {
        return Err(Error::InvalidInput("one perturbation scale per parameter".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let budget = cfg.max_evals.unwrap_or(usize::MAX);
    let mut evals = 0;
    let mut steps = Vec::with_capacity(cfg.n_basins);
    let mut trace = Vec::new();
    let mut cur_x = x0.to_vec();
    let mut cur_f = f64::INFINITY;
    let mut best_x = x0.to_vec();
    let mut best_f = f64::INFINITY;
    let mut temperature = cfg.temperature;
    for b in 0..cfg.n_basins {
        if evals >= budget {
            break;
        }
        let start: Vec<f64> = if b == 0 {
            cur_x.clone()
        } else {
            cur_x
                .iter()
                .zip(scales)
                .map(|(x, s)| x + s * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let opt = BfgsOptions {
            max_iters: cfg.inner_iters,
            grad_tol: cfg.grad_tol,
            max_evals: Some(budget - evals),
            ..BfgsOptions::default()
        };
        let r = bfgs_minimize(&mut fg, &start, &opt);
        evals += r.evaluations;
        let start_f = r.trace.first().copied().unwrap_or(f64::INFINITY);
        trace.extend_from_slice(&r.trace);
        let t = *temperature.get_or_insert_with(|| if start_f.is_finite() { (0.1 * start_f).max(1e-12) } else { 1.0 });
        // The draw happens every step so the random stream does not depend on values.
        let u: f64 = rng.random();
        let accepted = r.f.is_finite() && (r.f < cur_f || u < (-(r.f - cur_f) / t).exp());
        if accepted {
            cur_x = r.x.clone();
            cur_f = r.f;
        }
        if r.f < best_f {
            best_f = r.f;
            best_x = r.x;
        }
        steps.push(BasinStep { start_f, local_f: r.f, accepted, best_f, status: r.status });
    }
    Ok(BasinHoppingResult { x: best_x, f: best_f, evaluations: evals, steps, trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_well(x: &[f64]) -> (f64, Vec<f64>) {
        let v = x[0];
        ((v * v - 1.0).powi(2) + 0.3 * v, vec![4.0 * v * (v * v - 1.0) + 0.3])
    }

    #[test]
    fn convex_quadratic_matches_bfgs() {
        let f = |x: &[f64]| ((x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2), vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)]);
        let r = basin_hopping(f, &[10.0, 10.0], &[0.5, 0.5], &BasinHoppingConfig::default()).unwrap();
        let b = bfgs_minimize(f, &[10.0, 10.0], &BfgsOptions::default());
        assert!((r.x[0] - b.x[0]).abs() < 1e-8 && (r.x[1] - b.x[1]).abs() < 1e-8);
    }

    #[test]
    fn double_well_finds_better_basin() {
        // Grid oracle over [-2, 2].
        let (mut gx, mut gf) = (0.0, f64::INFINITY);
        for i in 0..=400_000 {
            let x = -2.0 + 4.0 * i as f64 / 400_000.0;
            let f = double_well(&[x]).0;
            if f < gf {
                gf = f;
                gx = x;
            }
        }
        let plain = bfgs_minimize(double_well, &[0.9], &BfgsOptions::default());
        assert!(plain.x[0] > 0.0, "plain BFGS should stay in the starting well");
        let cfg = BasinHoppingConfig { temperature: Some(0.5), seed: 3, ..BasinHoppingConfig::default() };
        let r = basin_hopping(double_well, &[0.9], &[1.0], &cfg).unwrap();
        assert!(r.f < plain.f);
        assert!((r.x[0] - gx).abs() < 1e-4, "{} vs {}", r.x[0], gx);
        assert!((r.f - gf).abs() < 1e-8);
    }

    #[test]
    fn deterministic_for_seed() {
        let cfg = BasinHoppingConfig { temperature: Some(0.5), seed: 11, ..BasinHoppingConfig::default() };
        let a = basin_hopping(double_well, &[0.9], &[1.0], &cfg).unwrap();
        let b = basin_hopping(double_well, &[0.9], &[1.0], &cfg).unwrap();
        assert_eq!(a.x[0].to_bits(), b.x[0].to_bits());
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn best_ever_nonincreasing() {
        let cfg = BasinHoppingConfig { n_basins: 12, temperature: Some(5.0), seed: 2, ..BasinHoppingConfig::default() };
        let r = basin_hopping(double_well, &[1.5], &[1.5], &cfg).unwrap();
        assert!(r.steps.windows(2).all(|w| w[1].best_f <= w[0].best_f));
        assert_eq!(r.f, r.steps.last().unwrap().best_f);
    }

    #[test]
    fn rejects_zero_basins() {
        let cfg = BasinHoppingConfig { n_basins: 0, ..BasinHoppingConfig::default() };
        assert!(basin_hopping(double_well, &[0.0], &[1.0], &cfg).is_err());
    }
}
