//! Gaussian kernel density estimation with mode counting.
//!
//! Used to characterize ensemble and Monte Carlo distributions: a KDE is
//! evaluated on a uniform grid, local maxima become candidate modes, and
//! each mode is credited with the fraction of the sample falling into
//! its basin (the grid segment between the flanking minima). Modes whose
//! basin mass falls below a threshold are dropped, so tiny ripples do not
//! count as extra modes.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct KdeMode {
    /// Grid location of the density maximum.
    pub location: f64,
    /// KDE value at the maximum.
    pub density: f64,
    /// Fraction of the sample inside the mode's basin.
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KdeReport {
    pub bandwidth: f64,
    /// Modes with basin mass at or above the threshold, left to right.
    pub modes: Vec<KdeMode>,
}

impl KdeReport {
    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }
}

/// Silverman's rule of thumb on the sample standard deviation and
/// interquartile range.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let iqr = crate::filter::quantile(&sorted, 0.75) - crate::filter::quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Gaussian KDE evaluated at `x`.
pub fn kde_density(samples: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    samples
        .iter()
        .map(|&s| {
            let z = (x - s) / bandwidth;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * norm
}

/// Detect modes of the sample KDE.
///
/// `bandwidth` of `None` applies Silverman's rule; `min_mass` drops
/// modes whose basin holds less than that sample fraction. A sample
/// without spread reports a single point mode.
pub fn kde_modes(samples: &[f64], bandwidth: Option<f64>, min_mass: f64) -> KdeReport {
    assert!(!samples.is_empty(), "kde_modes needs samples");
    let bw = bandwidth.unwrap_or_else(|| silverman_bandwidth(samples));
    let lo = samples.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(bw > 0.0) || lo == hi {
        return KdeReport {
            bandwidth: 0.0,
            modes: vec![KdeMode {
                location: lo,
                density: f64::INFINITY,
                mass: 1.0,
            }],
        };
    }

    const GRID: usize = 512;
    let from = lo - 3.0 * bw;
    let to = hi + 3.0 * bw;
    let step = (to - from) / (GRID - 1) as f64;
    let xs: Vec<f64> = (0..GRID).map(|i| from + i as f64 * step).collect();
    let density: Vec<f64> = xs.iter().map(|&x| kde_density(samples, bw, x)).collect();

    // Local maxima; plateaus count once at their left edge.
    let mut peaks = Vec::new();
    for i in 0..GRID {
        let left_rises = i == 0 || density[i] > density[i - 1];
        let right_falls = i + 1 == GRID || density[i] >= density[i + 1];
        let not_plateau_continuation = i == 0 || density[i] != density[i - 1];
        if left_rises && right_falls && not_plateau_continuation {
            peaks.push(i);
        }
    }
    if peaks.is_empty() {
        peaks.push(
            density
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap(),
        );
    }

    // Prominence merge: two peaks separated by a dip shallower than
    // MERGE_RATIO of the smaller peak are one ragged mode, not two.
    // Merge the shallowest dip first until every remaining dip is deep.
    const MERGE_RATIO: f64 = 0.95;
    while peaks.len() > 1 {
        let gap_valley = |i: usize| {
            (peaks[i]..=peaks[i + 1])
                .map(|g| density[g])
                .fold(f64::INFINITY, f64::min)
        };
        let (idx, relative_dip) = (0..peaks.len() - 1)
            .map(|i| {
                let smaller = density[peaks[i]].min(density[peaks[i + 1]]);
                (i, gap_valley(i) / smaller)
            })
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        if relative_dip < MERGE_RATIO {
            break;
        }
        let drop_peak = if density[peaks[idx]] <= density[peaks[idx + 1]] { idx } else { idx + 1 };
        peaks.remove(drop_peak);
    }

    // Basin boundaries at the surviving valleys.
    let mut boundaries = vec![f64::NEG_INFINITY];
    for pair in peaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let valley = (a..=b)
            .min_by(|&i, &j| density[i].partial_cmp(&density[j]).unwrap())
            .unwrap();
        boundaries.push(xs[valley]);
    }
    boundaries.push(f64::INFINITY);

    let n = samples.len() as f64;
    let mut modes: Vec<KdeMode> = peaks
        .iter()
        .enumerate()
        .map(|(k, &peak)| {
            let mass = samples
                .iter()
                .filter(|&&s| s >= boundaries[k] && s < boundaries[k + 1])
                .count() as f64
                / n;
            KdeMode {
                location: xs[peak],
                density: density[peak],
                mass,
            }
        })
        .collect();
    modes.retain(|m| m.mass >= min_mass);
    if modes.is_empty() {
        // Threshold removed everything; keep the global maximum.
        let peak = peaks
            .into_iter()
            .max_by(|&a, &b| density[a].partial_cmp(&density[b]).unwrap())
            .unwrap();
        modes.push(KdeMode {
            location: xs[peak],
            density: density[peak],
            mass: 1.0,
        });
    }
    KdeReport { bandwidth: bw, modes }
}
