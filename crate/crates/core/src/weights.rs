//! Log-space weight arithmetic and categorical sampling.

use rand::Rng;

/// `log(sum(exp(v)))`, `-inf` for an empty or all-`-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Normalised probabilities from log weights; `None` when every weight is zero.
pub fn normalize_log_weights(log_weights: &[f64]) -> Option<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let mut probs: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Some(probs)
}

/// Inverse-CDF sampler over a fixed set of unnormalised log weights.
#[derive(Debug, Clone)]
pub struct CategoricalTable {
    cumulative: Vec<f64>,
    last_positive: usize,
}

impl CategoricalTable {
    /// Builds the table; `None` if every weight is zero.
    pub fn from_log_weights(log_weights: &[f64]) -> Option<Self> {
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return None;
        }
        let mut cumulative = Vec::with_capacity(log_weights.len());
        let mut running = 0.0;
        let mut last_positive = 0;
        for (i, lw) in log_weights.iter().enumerate() {
            let w = (lw - max).exp();
            if w > 0.0 {
                last_positive = i;
            }
            running += w;
            cumulative.push(running);
        }
        Some(Self {
            cumulative,
            last_positive,
        })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    /// Normalised probability of index `i`.
    pub fn probability(&self, i: usize) -> f64 {
        let lower = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        (self.cumulative[i] - lower) / self.total()
    }

    fn total(&self) -> f64 {
        self.cumulative[self.cumulative.len() - 1]
    }

    /// One draw; consumes exactly one `f64` from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u = rng.random::<f64>() * self.total();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        idx.min(self.last_positive)
    }
}
