//! Resampling schemes for the particle filter.

use rand::{Rng, RngExt};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResamplingScheme {
    /// Independent draws from the weight distribution, as in Step 1 of
    /// the filter. The default.
    #[default]
    Multinomial,
    /// Stratified single-offset variant; lower variance, available
    /// behind this flag.
    Systematic,
}

/// Draw `n` ancestor indices from normalized weights.
pub fn resample_indices<R: Rng>(
    scheme: ResamplingScheme,
    weights: &[f64],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    match scheme {
        ResamplingScheme::Multinomial => multinomial(weights, n, rng),
        ResamplingScheme::Systematic => systematic(weights, n, rng),
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for &w in weights {
        acc += w;
        cum.push(acc);
    }
    // Guard the final bin against rounding so a draw of ~1.0 always lands.
    if let Some(last) = cum.last_mut() {
        *last = f64::INFINITY;
    }
    cum
}

pub fn multinomial<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cum = cumulative(weights);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            cum.partition_point(|&c| c <= u)
        })
        .collect()
}

pub fn systematic<R: Rng>(weights: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    let cum = cumulative(weights);
    let offset: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut j = 0usize;
    for i in 0..n {
        let u = offset + i as f64 / n as f64;
        while cum[j] <= u {
            j += 1;
        }
        out.push(j);
    }
    out
}
