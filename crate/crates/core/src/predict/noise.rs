//! Deterministic corruption of predictor outputs for robustness testing.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Candidate, Predictor, PredictorError, PredictorOutput, PredictorQuery};
use crate::geometry::Point2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    /// Candidates move by a uniform draw from a disc of this radius.
    pub jitter: f64,
    /// Chance that a candidate is invalidated.
    pub drop_prob: f64,
    /// Chance per call that a spurious valid candidate is injected.
    pub spurious_rate: f64,
    /// Spurious candidates land uniformly within this distance of the center.
    pub spurious_radius: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            jitter: 0.0,
            drop_prob: 0.0,
            spurious_rate: 0.0,
            spurious_radius: 30.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(format!("jitter must be non-negative, got {}", self.jitter));
        }
        for (name, v) in [("drop_prob", self.drop_prob), ("spurious_rate", self.spurious_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.spurious_radius >= 0.0) {
            return Err(format!("spurious_radius must be non-negative, got {}", self.spurious_radius));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.jitter == 0.0 && self.drop_prob == 0.0 && self.spurious_rate == 0.0
    }
}

/// SplitMix64 finalizer folded over the inputs.
pub(crate) fn mix(words: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        let mut z = h ^ w.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

fn disc_sample(rng: &mut ChaCha8Rng, radius: f64) -> Point2 {
    let r = radius * rng.gen::<f64>().sqrt();
    let theta = TAU * rng.gen::<f64>();
    Point2::new(r * theta.cos(), r * theta.sin())
}

/// Applies `spec` to one output. Each candidate's fate depends only on the
/// seed, `call` and the candidate's own values, so reordering the input
/// reorders the output the same way.
pub fn corrupt(output: &PredictorOutput, spec: &NoiseSpec, call: u64) -> PredictorOutput {
    if spec.is_zero() {
        return output.clone();
    }
    let mut out = output.clone();
    for c in out.candidates.iter_mut() {
        let key = mix(&[spec.seed, call, c.dx.to_bits(), c.dy.to_bits(), c.p.to_bits()]);
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let jitter = disc_sample(&mut rng, spec.jitter);
        let dropped = rng.gen::<f64>() < spec.drop_prob;
        c.dx += jitter.x;
        c.dy += jitter.y;
        if dropped {
            c.p = 0.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[spec.seed, call, u64::MAX]));
    if rng.gen::<f64>() < spec.spurious_rate {
        let at = disc_sample(&mut rng, spec.spurious_radius);
        if let Some(slot) = out.candidates.iter_mut().find(|c| c.p < 0.5) {
            *slot = Candidate::new(at.x, at.y, 1.0);
        }
    }
    out
}

/// Wraps a predictor and corrupts every output.
#[derive(Debug, Clone)]
pub struct NoisyPredictor<P> {
    inner: P,
    spec: NoiseSpec,
    calls: u64,
}

impl<P> NoisyPredictor<P> {
    pub fn new(inner: P, spec: NoiseSpec) -> Self {
        Self {
            inner,
            spec,
            calls: 0,
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<P: Predictor> Predictor for NoisyPredictor<P> {
    fn n_queries(&self) -> usize {
        self.inner.n_queries()
    }

    fn predict(&mut self, query: &PredictorQuery<'_>) -> Result<PredictorOutput, PredictorError> {
        let out = self.inner.predict(query)?;
        let call = self.calls;
        self.calls += 1;
        Ok(corrupt(&out, &self.spec, call))
    }

    fn fallback_seed(&mut self) -> Option<Point2> {
        self.inner.fallback_seed()
    }
}
