//! Exact Bayesian change-point posterior for a piecewise-constant mean.
//!
//! Observations `d_1..d_n` are split into segments. Within a segment the
//! values are i.i.d. `N(μ, σ²)` with known `σ` and a segment mean drawn from
//! `N(μ₀, τ²)`; segment lengths are geometric with parameter `hazard`. The
//! forward and backward sums over all segmentations are computed exactly in
//! `O(n²)`, which yields the marginal probability of a segment boundary
//! after each position.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangePointPrior {
    /// Per-step probability that a new segment starts.
    pub hazard: f64,
    /// Observation noise; estimated robustly from the data when `None`.
    pub noise_scale: Option<f64>,
}

impl Default for ChangePointPrior {
    fn default() -> Self {
        Self {
            hazard: 0.05,
            noise_scale: None,
        }
    }
}

/// Change probabilities for the epochs `1..=T` of a cumulative series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointPosterior {
    /// `mass[t - 1]`: probability that the series changes trend at epoch `t`,
    /// i.e. that epoch `t` is the last one of a segment of per-epoch
    /// increments. The final epoch always carries zero mass.
    pub mass: Vec<f64>,
    pub prior: ChangePointPrior,
    /// Noise scale actually used.
    pub noise_scale: f64,
    /// Total posterior probability over segmentations before extraction (1 up to rounding).
    pub normalization: f64,
}

fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Robust noise scale `1.4826 · median |d_t|` over the non-zero increments,
/// falling back to their plain deviation when the median vanishes.
///
/// Exact zeros are epochs the client sat out; they say nothing about noise
/// and would otherwise drive the median to zero under partial participation.
pub fn estimate_noise_scale(obs: &[f64]) -> f64 {
    let active: Vec<f64> = obs.iter().copied().filter(|d| *d != 0.0).collect();
    if active.is_empty() {
        return 0.0;
    }
    let mad = 1.4826 * median(active.iter().map(|d| d.abs()).collect());
    if mad > 0.0 {
        mad
    } else {
        std_dev(&active)
    }
}

/// Log marginal likelihood of each segment `obs[a..=b]`, as `seg[a][b - a]`.
fn segment_log_likelihoods(obs: &[f64], sigma: f64, mu0: f64, tau: f64) -> Vec<Vec<f64>> {
    let n = obs.len();
    let s2 = sigma * sigma;
    let t2 = tau * tau;
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    (0..n)
        .map(|a| {
            let mut out = Vec::with_capacity(n - a);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for (len, &y) in obs[a..].iter().enumerate() {
                let y = y - mu0;
                sum += y;
                sum_sq += y * y;
                let k = (len + 1) as f64;
                // integrate the segment mean out of the Gaussian likelihood
                let denom = s2 + k * t2;
                let ll = -0.5 * k * ln_2pi - 0.5 * (k - 1.0) * s2.ln() - 0.5 * denom.ln()
                    - 0.5 * (sum_sq - t2 * sum * sum / denom) / s2;
                out.push(ll);
            }
            out
        })
        .collect()
}

/// Posterior change probabilities for the first differences of `series`
/// (a cumulative series of length `T + 1`).
pub fn detect_change_points(series: &[f64], prior: ChangePointPrior) -> Result<ChangePointPosterior> {
    if series.len() < 3 {
        return Err(contract("change-point detection needs a series of length >= 3"));
    }
    if !(prior.hazard > 0.0 && prior.hazard < 1.0) {
        return Err(contract(format!("hazard must lie in (0, 1), got {}", prior.hazard)));
    }
    let obs: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let n = obs.len();

    // scales below this are rounding noise of the cumulative sums
    let largest = obs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-9 * largest;
    let spread = std_dev(&obs);
    let mut sigma = prior.noise_scale.unwrap_or_else(|| estimate_noise_scale(&obs));
    if !sigma.is_finite() || sigma <= floor {
        // (near) zero-variance input: any scale well above the rounding noise
        // leaves the answer prior-dominated
        sigma = if spread > floor { spread } else if largest > 0.0 { largest } else { 1.0 };
    }
    let mu0 = obs.iter().sum::<f64>() / n as f64;
    let tau = spread.max(sigma);
    let seg = segment_log_likelihoods(&obs, sigma, mu0, tau);

    let ln_h = prior.hazard.ln();
    let ln_stay = (1.0 - prior.hazard).ln();
    // a segment of length L that is followed by another: h (1-h)^(L-1)
    let ln_closed = |len: usize| ln_h + (len - 1) as f64 * ln_stay;
    // the final segment only has to survive: (1-h)^(L-1)
    let ln_open = |len: usize| (len - 1) as f64 * ln_stay;

    // backward[s]: log P(obs[s..] | a segment starts at s)
    let mut backward = vec![f64::NEG_INFINITY; n + 1];
    for s in (0..n).rev() {
        let terms = (s..n).map(|e| {
            let len = e - s + 1;
            if e + 1 == n {
                seg[s][e - s] + ln_open(len)
            } else {
                seg[s][e - s] + ln_closed(len) + backward[e + 1]
            }
        });
        backward[s] = log_sum_exp(terms);
    }
    // forward[s]: log P(obs[..s], a segment starts at s); the first segment starts at 0
    let mut forward = vec![f64::NEG_INFINITY; n];
    forward[0] = 0.0;
    for s in 1..n {
        forward[s] = log_sum_exp((0..s).map(|r| forward[r] + seg[r][s - 1 - r] + ln_closed(s - r)));
    }
    let evidence = backward[0];
    // a segment boundary between epochs t and t + 1 is a kink of the
    // cumulative series at vertex t, reported at epoch t
    let mut mass = vec![0.0; n];
    for s in 1..n {
        mass[s - 1] = (forward[s] + backward[s] - evidence).exp().clamp(0.0, 1.0);
    }
    // the final segment starts somewhere; its start probabilities come from the
    // forward pass and must sum to one against the backward evidence
    let normalization = (0..n)
        .map(|s| (forward[s] + seg[s][n - 1 - s] + ln_open(n - s) - evidence).exp())
        .sum();

    Ok(ChangePointPosterior {
        mass,
        prior,
        noise_scale: sigma,
        normalization,
    })
}

/// Share of the posterior change mass that lies in the inclusive epoch window.
pub fn window_mass(posterior: &ChangePointPosterior, window: (usize, usize)) -> Result<f64> {
    let (start, end) = window;
    let t_max = posterior.mass.len();
    if start == 0 || start > end || end > t_max {
        return Err(contract(format!("window ({start}, {end}) is empty or outside 1..={t_max}")));
    }
    let total: f64 = posterior.mass.iter().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let inside: f64 = posterior.mass[start - 1..end].iter().sum();
    Ok(inside / total)
}
