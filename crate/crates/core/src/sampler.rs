//! Alias-table sampling from the degree-based noise distribution `P_n(x) ∝ D_x^{3/4}`.

use rand::Rng;

use crate::error::{Error, Result};

pub const NOISE_EXPONENT: f64 = 0.75;

/// Walker/Vose alias table: O(n) construction, O(1) draws.
#[derive(Clone, Debug)]
pub struct AliasSampler {
    prob: Vec<f64>,
    alias: Vec<usize>,
    distribution: Vec<f64>,
    support: usize,
}

impl AliasSampler {
    /// Noise distribution over nodes with the given degrees.
    pub fn from_degrees(degrees: &[f64]) -> Result<Self> {
        if degrees.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return Err(Error::Sampler("degrees must be finite and non-negative".into()));
        }
        let weights: Vec<f64> = degrees.iter().map(|d| d.powf(NOISE_EXPONENT)).collect();
        Self::from_weights(&weights)
    }

    /// Distribution proportional to `weights`.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || total.is_nan() || total <= 0.0 || !total.is_finite() {
            return Err(Error::Sampler("no node has positive weight".into()));
        }
        let n = weights.len();
        let distribution: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut scaled: Vec<f64> = distribution.iter().map(|p| p * n as f64).collect();
        let mut prob = vec![0.0; n];
        let mut alias: Vec<usize> = (0..n).collect();

        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while !small.is_empty() && !large.is_empty() {
            let s = small.pop().expect("non-empty");
            let l = *large.last().expect("non-empty");
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding; zero-weight nodes must stay unreachable.
        let heaviest = (0..n)
            .max_by(|&a, &b| distribution[a].total_cmp(&distribution[b]))
            .expect("non-empty");
        for i in small.into_iter().chain(large) {
            if distribution[i] > 0.0 {
                prob[i] = 1.0;
            } else {
                prob[i] = 0.0;
                alias[i] = heaviest;
            }
        }

        let support = weights.iter().filter(|w| **w > 0.0).count();
        Ok(AliasSampler {
            prob,
            alias,
            distribution,
            support,
        })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    /// Exact normalized probability of node `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.distribution[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Appends `count` draws to `out`, redrawing any that equal `exclude`.
    pub fn sample_excluding<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        count: usize,
        exclude: Option<usize>,
        out: &mut Vec<usize>,
    ) -> Result<()> {
        if count == 0 {
            return Ok(());
        }
        if let Some(x) = exclude {
            let only_excluded = self.support == 0
                || (self.support == 1 && x < self.len() && self.distribution[x] > 0.0);
            if only_excluded {
                return Err(Error::Sampler(format!(
                    "cannot draw negatives: node {x} is the only node with positive probability"
                )));
            }
        }
        out.reserve(count);
        for _ in 0..count {
            loop {
                let s = self.sample(rng);
                if Some(s) != exclude {
                    out.push(s);
                    break;
                }
            }
        }
        Ok(())
    }
}

/// Draws `count` negatives from `sampler`, never returning `exclude`.
pub fn sample_negatives<R: Rng + ?Sized>(
    sampler: &AliasSampler,
    rng: &mut R,
    count: usize,
    exclude: usize,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    sampler.sample_excluding(rng, count, Some(exclude), &mut out)?;
    Ok(out)
}
