use alloc::format;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Running statistics of the global gradient norm, used to reject spikes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradNormTracker {
    /// EMA of the norm.
    pub mean: f64,
    /// EMA of the squared norm.
    pub sq_mean: f64,
    pub decay: f64,
    pub std_factor: f64,
    pub static_cap: f64,
    pub initialized: bool,
}

impl Default for GradNormTracker {
    fn default() -> Self {
        GradNormTracker {
            mean: 0.0,
            sq_mean: 0.0,
            decay: 0.95,
            std_factor: 2.0,
            static_cap: 5.0,
            initialized: false,
        }
    }
}

/// What [`GradNormTracker::track_and_clip`] did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipReport {
    pub norm: f64,
    pub clipped_norm: f64,
    pub tracker_clipped: bool,
    pub static_clipped: bool,
}

impl ClipReport {
    pub fn clipped(&self) -> bool {
        self.tracker_clipped || self.static_clipped
    }
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    libm::sqrt(grads.iter().flat_map(|g| g.data()).map(|x| x * x).sum())
}

fn rescale(grads: &mut [Tensor], factor: f64) {
    for g in grads {
        g.data_mut().iter_mut().for_each(|x| *x *= factor);
    }
}

impl GradNormTracker {
    pub fn std_dev(&self) -> f64 {
        libm::sqrt((self.sq_mean - self.mean * self.mean).max(0.0))
    }

    /// Scales `grads` in place.
    ///
    /// Once initialized, a norm above `mean + std_factor · σ` is scaled down
    /// to `mean`. The result is then capped at `static_cap`, and the moving
    /// averages absorb the final norm. The first call seeds the averages
    /// and skips the tracker test.
    pub fn track_and_clip(&mut self, grads: &mut [Tensor]) -> Result<ClipReport> {
        let norm = global_norm(grads);
        if !norm.is_finite() {
            return Err(Error::numeric(format!("gradient norm is {norm}")));
        }
        let mut cur = norm;
        let mut tracker_clipped = false;
        if self.initialized && cur > self.mean + self.std_factor * self.std_dev() && cur > 0.0 {
            rescale(grads, self.mean / cur);
            cur = self.mean;
            tracker_clipped = true;
        }
        let mut static_clipped = false;
        if cur > self.static_cap {
            rescale(grads, self.static_cap / cur);
            cur = self.static_cap;
            static_clipped = true;
        }
        if self.initialized {
            let d = self.decay;
            self.mean = d * self.mean + (1.0 - d) * cur;
            self.sq_mean = d * self.sq_mean + (1.0 - d) * cur * cur;
        } else {
            self.mean = cur;
            self.sq_mean = cur * cur;
            self.initialized = true;
        }
        Ok(ClipReport {
            norm,
            clipped_norm: cur,
            tracker_clipped,
            static_clipped,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grads(norm: f64) -> vec::Vec<Tensor> {
        // 3-4-5 triangle scaled to the requested norm.
        vec![Tensor::vector(&[0.6 * norm]), Tensor::vector(&[0.8 * norm])]
    }

    #[test]
    fn first_call_initializes() {
        let mut t = GradNormTracker::default();
        let mut g = grads(1.0);
        let r = t.track_and_clip(&mut g).unwrap();
        assert!(!r.clipped());
        assert_eq!((t.mean, t.sq_mean), (1.0, 1.0));
    }

    #[test]
    fn spike_is_clipped_to_mean() {
        // σ = 0.1 from s - m² = 0.01.
        let mut t = GradNormTracker { mean: 1.0, sq_mean: 1.01, initialized: true, ..Default::default() };
        assert!((t.std_dev() - 0.1).abs() < 1e-12);
        let mut g = grads(10.0);
        let r = t.track_and_clip(&mut g).unwrap();
        assert!(r.tracker_clipped && !r.static_clipped);
        assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn static_cap_inside_band() {
        let mut t = GradNormTracker { mean: 6.0, sq_mean: 36.0, initialized: true, ..Default::default() };
        let mut g = grads(6.0);
        let r = t.track_and_clip(&mut g).unwrap();
        assert!(!r.tracker_clipped && r.static_clipped);
        assert!((global_norm(&g) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_finite() {
        let mut t = GradNormTracker::default();
        let mut g = vec![Tensor::vector(&[f64::NAN])];
        assert!(matches!(t.track_and_clip(&mut g), Err(Error::NumericDomain(_))));
    }
}
