use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::time::SimDuration;

/// Per-hop link behavior.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub base_latency: SimDuration,
    /// Latency is drawn uniformly from `base ± jitter`.
    pub jitter: SimDuration,
    pub drop_probability: f64,
    /// More than this many interfering transmissions in the same window
    /// triggers the penalty.
    pub interference_threshold: usize,
    pub interference_penalty: SimDuration,
    pub interference_window: SimDuration,
    /// Transmission attempts per hop for reliable sends.
    pub max_attempts: u32,
    pub retransmit_timeout: SimDuration,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            base_latency: SimDuration::from_millis(10),
            jitter: SimDuration::from_millis(5),
            drop_probability: 0.01,
            interference_threshold: 4,
            interference_penalty: SimDuration::from_millis(2),
            interference_window: SimDuration::from_millis(10),
            max_attempts: 8,
            retransmit_timeout: SimDuration::from_millis(30),
        }
    }
}

impl LinkModel {
    pub fn ideal(latency: SimDuration) -> Self {
        LinkModel {
            base_latency: latency,
            jitter: SimDuration::ZERO,
            drop_probability: 0.0,
            interference_threshold: usize::MAX,
            ..LinkModel::default()
        }
    }

    pub fn draw_latency<R: Rng>(&self, rng: &mut R) -> SimDuration {
        let j = self.jitter.micros();
        if j == 0 {
            return self.base_latency;
        }
        let offset = rng.gen_range(0..=2 * j);
        SimDuration((self.base_latency.micros() + offset).saturating_sub(j))
    }

    pub fn draw_drop<R: Rng>(&self, rng: &mut R) -> bool {
        self.drop_probability > 0.0 && rng.gen::<f64>() < self.drop_probability
    }
}
