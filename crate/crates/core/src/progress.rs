//! Stream-progress math: the frontier transform, the logical-to-physical
//! progress maps for both time domains, and the running regression model
//! that backs the event-time map.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Millis, OperatorSpec, Tick, TimeDomain};

pub const DEFAULT_REGRESSION_CAPACITY: usize = 32;

/// Logical time that completes the next window at the receiver.
///
/// When the sender advances in finer steps than the receiver slides, the
/// progress is lifted to the next multiple of the receiver's slide;
/// otherwise it passes through unchanged.
pub fn transform(p: Tick, sender_slide: Tick, target_slide: Tick) -> Result<Tick> {
    if sender_slide <= 0 {
        return Err(Error::NonpositiveSlide(sender_slide));
    }
    if target_slide <= 0 {
        return Err(Error::NonpositiveSlide(target_slide));
    }
    if sender_slide < target_slide {
        Ok((p.div_euclid(target_slide) + 1) * target_slide)
    } else {
        Ok(p)
    }
}

/// Ingestion-time streams stamp logical time with the observation clock.
pub fn progress_map_ingestion(p: Tick) -> Millis {
    p
}

/// Least-squares line `t = alpha * p + gamma` over a bounded FIFO of
/// `(p, t)` samples.
///
/// Sums are kept in exact integer arithmetic so predictions on perfectly
/// linear data are exact before rounding.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegressionModel {
    samples: VecDeque<(Tick, Millis)>,
    capacity: usize,
    sum_p: i128,
    sum_t: i128,
    sum_pp: i128,
    sum_pt: i128,
}

impl Default for RegressionModel {
    fn default() -> Self {
        RegressionModel::new(DEFAULT_REGRESSION_CAPACITY)
    }
}

impl RegressionModel {
    pub fn new(capacity: usize) -> Self {
        RegressionModel {
            samples: VecDeque::with_capacity(capacity.max(1)),
            capacity: capacity.max(1),
            sum_p: 0,
            sum_t: 0,
            sum_pp: 0,
            sum_pt: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Appends a sample, evicting the oldest one beyond capacity.
    pub fn update(&mut self, p: Tick, t: Millis) {
        if self.samples.len() == self.capacity {
            if let Some((op, ot)) = self.samples.pop_front() {
                self.accumulate(op, ot, -1);
            }
        }
        self.samples.push_back((p, t));
        self.accumulate(p, t, 1);
    }

    fn accumulate(&mut self, p: Tick, t: Millis, sign: i128) {
        let (p, t) = (p as i128, t as i128);
        self.sum_p += sign * p;
        self.sum_t += sign * t;
        self.sum_pp += sign * p * p;
        self.sum_pt += sign * p * t;
    }

    /// `n * Σp² − (Σp)²`; zero iff every sample shares one `p`.
    fn denominator(&self) -> i128 {
        let n = self.samples.len() as i128;
        n * self.sum_pp - self.sum_p * self.sum_p
    }

    fn numerator(&self) -> i128 {
        let n = self.samples.len() as i128;
        n * self.sum_pt - self.sum_p * self.sum_t
    }

    /// True once at least two distinct logical times have been seen.
    pub fn is_fit(&self) -> bool {
        self.samples.len() >= 2 && self.denominator() != 0
    }

    pub fn alpha(&self) -> Option<f64> {
        self.is_fit()
            .then(|| self.numerator() as f64 / self.denominator() as f64)
    }

    pub fn gamma(&self) -> Option<f64> {
        let alpha = self.alpha()?;
        let n = self.samples.len() as f64;
        Some((self.sum_t as f64 - alpha * self.sum_p as f64) / n)
    }

    /// `alpha * p + gamma`, rounded to the nearest millisecond.
    pub fn predict(&self, p: Tick) -> Result<Millis> {
        if !self.is_fit() {
            return Err(Error::UnfitModel);
        }
        // mean_t + alpha (p - mean_p) as one exact fraction.
        let n = self.samples.len() as i128;
        let den = self.denominator();
        let num = self.sum_t * den + self.numerator() * (n * p as i128 - self.sum_p);
        let scale = n * den;
        Ok(div_round(num, scale) as Millis)
    }
}

/// Integer division rounding half away from zero. `d` must be nonzero.
fn div_round(n: i128, d: i128) -> i128 {
    let (n, d) = if d < 0 { (-n, -d) } else { (n, d) };
    if n >= 0 {
        (2 * n + d) / (2 * d)
    } else {
        -((-2 * n + d) / (2 * d))
    }
}

/// Event-time map backed by the regression model.
pub fn progress_map_event(model: &RegressionModel, p: Tick) -> Result<Millis> {
    model.predict(p)
}

/// Frontier progress and frontier time for a message `(p_m, t_m)` headed to
/// `target`.
///
/// Regular targets trigger immediately, so the message's own times are the
/// frontier. Windowed targets extend to the window-completing progress and
/// its estimated observation time. An unfit event-time model falls back to
/// `t_m`.
pub fn frontier(
    p_m: Tick,
    t_m: Millis,
    sender_slide: Tick,
    target: &OperatorSpec,
    model: &RegressionModel,
    domain: TimeDomain,
) -> Result<(Tick, Millis)> {
    if !target.kind.is_windowed() {
        return Ok((p_m, t_m));
    }
    let p_f = transform(p_m, sender_slide, target.kind.slide())?;
    let t_f = match domain {
        TimeDomain::IngestionTime => progress_map_ingestion(p_f),
        TimeDomain::EventTime => progress_map_event(model, p_f).unwrap_or(t_m),
    };
    // The frontier cannot be observed before the message itself.
    Ok((p_f, t_f.max(t_m)))
}
