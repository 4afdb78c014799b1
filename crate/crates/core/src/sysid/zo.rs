//! Zeroth-order gradient estimation from symmetric cost probes on a sphere.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::youla::{lifted_cost, NominalLft, YoulaIterate};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoConfig {
    pub radius: f64,
    pub samples: usize,
    pub seed: u64,
}

impl ZoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Invalid(format!("radius must be positive, got {}", self.radius)));
        }
        if self.samples == 0 {
            return Err(Error::Invalid("at least one sample is required".into()));
        }
        Ok(())
    }
}

/// Direction `i` of the estimator: a uniform point on the radius-`r` sphere in `R^dim`,
/// drawn from stream `i` of the master seed.
pub fn sphere_sample(seed: u64, index: u64, dim: usize, radius: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            return g.into_iter().map(|v| v * radius / n).collect();
        }
    }
}

/// `(1/m) Σ (d / 2r²) (f(x + U_i) − f(x − U_i)) U_i`.
///
/// Probes run in parallel; contributions are summed in sample order, so the result does not
/// depend on the number of worker threads.
pub fn zo_gradient<F>(f: F, x: &[f64], cfg: &ZoConfig) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    let d = x.len();
    if d == 0 {
        return Ok(Vec::new());
    }
    let r2 = cfg.radius * cfg.radius;
    let terms: Vec<Result<Vec<f64>>> = (0..cfg.samples)
        .into_par_iter()
        .map(|i| {
            let u = sphere_sample(cfg.seed, i as u64, d, cfg.radius);
            let plus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a + b).collect();
            let minus: Vec<f64> = x.iter().zip(&u).map(|(a, b)| a - b).collect();
            let (jp, jm) = (f(&plus)?, f(&minus)?);
            if !(jp.is_finite() && jm.is_finite()) {
                return Err(Error::NonFinite("zeroth-order cost probe"));
            }
            let w = d as f64 / (2.0 * r2) * (jp - jm);
            Ok(u.into_iter().map(|v| w * v).collect())
        })
        .collect();
    let mut acc = vec![0.0; d];
    for t in terms {
        for (a, v) in acc.iter_mut().zip(t?) {
            *a += v;
        }
    }
    let m = cfg.samples as f64;
    Ok(acc.into_iter().map(|v| v / m).collect())
}

/// Estimate of `∇_Q J = 2·mask(Res S)` from lifted-cost probes on the masked static subspace.
pub fn zo_residue_estimate(nom: &NominalLft, it: &YoulaIterate, cfg: &ZoConfig) -> Result<Mat> {
    let (rows, cols) = nom.param_shape();
    let pos = nom.masked_positions();
    let x0: Vec<f64> = pos.iter().map(|&(i, j)| it.q_stat[(i, j)]).collect();
    let embed = |v: &[f64]| {
        let mut m = Mat::zeros(rows, cols);
        for (&(i, j), &val) in pos.iter().zip(v) {
            m[(i, j)] = val;
        }
        m
    };
    let cost = |v: &[f64]| {
        let probe = YoulaIterate {
            q_dyn: it.q_dyn.clone(),
            q_stat: embed(v),
        };
        lifted_cost(nom, &probe)
    };
    let g = zo_gradient(cost, &x0, cfg)?;
    Ok(embed(&g))
}
