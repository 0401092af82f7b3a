//! Exponential-moving-average maintenance of the target encoder.

use std::f64::consts::PI;

use crate::encoder::GcnLayer;
use crate::error::{Error, Result};

/// Cosine schedule taking the decay rate from `t_base` to 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmaSchedule {
    pub t_base: f64,
    pub total_steps: usize,
}

impl EmaSchedule {
    pub fn new(t_base: f64, total_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&t_base) {
            return Err(Error::Config(format!("ema_t_base {t_base} outside [0, 1]")));
        }
        Ok(EmaSchedule { t_base, total_steps })
    }

    /// `1 − (1 − t_base)·(cos(π·step/total) + 1)/2`; steps past the end are
    /// clamped and an empty schedule is always 1.
    pub fn decay_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return 1.0;
        }
        if step == 0 {
            return self.t_base;
        }
        let c = (PI * step as f64 / self.total_steps as f64).cos();
        1.0 - (1.0 - self.t_base) * (c + 1.0) / 2.0
    }
}

/// `target ← decay·target + (1 − decay)·online` over every matrix of every
/// layer, running statistics included.
///
/// Computed as `target + (1 − decay)·(online − target)`, which leaves the
/// target bit-identical when `decay == 1` or when it already equals the
/// online value; `decay == 0` copies exactly.
pub fn ema_update(target: &mut [GcnLayer], online: &[GcnLayer], decay: f64) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::Validation(format!(
            "EMA over {} target layers and {} online layers",
            target.len(),
            online.len()
        )));
    }
    for (t, o) in target.iter().zip(online) {
        for (tm, om) in t.all_matrices().iter().zip(o.all_matrices()) {
            if tm.shape() != om.shape() {
                return Err(Error::Dimension {
                    op: "ema_update",
                    left: tm.shape(),
                    right: om.shape(),
                });
            }
        }
    }
    let step = 1.0 - decay;
    for (t, o) in target.iter_mut().zip(online) {
        for (tm, om) in t.all_matrices_mut().into_iter().zip(o.all_matrices()) {
            if decay == 0.0 {
                tm.clone_from(om);
                continue;
            }
            for (tv, &ov) in tm.data_mut().iter_mut().zip(om.data()) {
                *tv += step * (ov - *tv);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layers(seed: u64) -> Vec<GcnLayer> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        vec![GcnLayer::new(3, 4, &mut rng), GcnLayer::new(4, 2, &mut rng)]
    }

    #[test]
    fn schedule_endpoints_and_midpoint() {
        let s = EmaSchedule::new(0.99, 100).unwrap();
        assert_eq!(s.decay_at(0), 0.99);
        assert_eq!(s.decay_at(100), 1.0);
        assert!((s.decay_at(50) - 0.995).abs() < 1e-15);
        assert_eq!(EmaSchedule::new(0.99, 0).unwrap().decay_at(0), 1.0);
    }

    #[test]
    fn schedule_is_monotone_and_bounded() {
        let s = EmaSchedule::new(0.9, 37).unwrap();
        let ds: Vec<f64> = (0..=37).map(|k| s.decay_at(k)).collect();
        assert!(ds.windows(2).all(|w| w[0] <= w[1]));
        assert!(ds.iter().all(|&d| (0.9..=1.0).contains(&d)));
    }

    #[test]
    fn decay_one_and_zero_are_exact() {
        let online = layers(1);
        let original = layers(2);
        let mut t = original.clone();
        ema_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, original);
        ema_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, online);
    }

    #[test]
    fn half_decay_is_arithmetic_mean() {
        let mut t = layers(0);
        let mut o = layers(0);
        t[0].weight = Matrix::filled(3, 4, 2.0);
        o[0].weight = Matrix::filled(3, 4, 4.0);
        ema_update(&mut t, &o, 0.5).unwrap();
        assert_eq!(t[0].weight, Matrix::filled(3, 4, 3.0));
    }

    #[test]
    fn frozen_online_contracts_by_decay_per_step() {
        let online = layers(3);
        let mut t = layers(4);
        let gap = |t: &[GcnLayer]| {
            t.iter()
                .zip(&online)
                .flat_map(|(a, b)| a.all_matrices().into_iter().zip(b.all_matrices()))
                .map(|(x, y)| x.max_abs_diff(y))
                .fold(0.0, f64::max)
        };
        let mut prev = gap(&t);
        for _ in 0..200 {
            ema_update(&mut t, &online, 0.9).unwrap();
            let now = gap(&t);
            // Rounding stalls progress at the last few ulps.
            assert!(now <= 0.9 * prev + 1e-15);
            prev = now;
        }
        assert!(prev < 1e-8);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut t = layers(0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let o = vec![GcnLayer::new(3, 5, &mut rng), GcnLayer::new(5, 2, &mut rng)];
        assert!(ema_update(&mut t, &o, 0.5).is_err());
    }
}
