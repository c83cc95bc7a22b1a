//! SGD with classical momentum and the cosine warm-restart schedule.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use std::collections::HashMap;
use std::f64::consts::PI;

/// v ← m·v + g; p ← p − lr·v, per parameter tensor.
///
/// Velocity buffers are keyed by parameter name and created on first use.
/// Every gradient is validated finite before any state is touched, so a bad
/// batch cannot half-update the model.
pub struct SgdMomentum {
    momentum: f64,
    velocity: HashMap<String, Tensor>,
}

impl SgdMomentum {
    pub fn new(momentum: f64) -> Result<SgdMomentum> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!(
                "momentum must lie in [0,1), got {momentum}"
            )));
        }
        Ok(SgdMomentum {
            momentum,
            velocity: HashMap::new(),
        })
    }

    /// Applies one update. `grads` may cover a subset of `params` (frozen
    /// parameters are simply absent); names must match existing parameters.
    pub fn step(
        &mut self,
        params: &mut [(String, Tensor)],
        grads: &[(String, Tensor)],
        lr: f64,
    ) -> Result<()> {
        if !lr.is_finite() || lr < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and >= 0, got {lr}"
            )));
        }
        for (name, g) in grads {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }
        let mut index: HashMap<String, usize> = HashMap::new();
        for (i, (name, _)) in params.iter().enumerate() {
            index.insert(name.clone(), i);
        }
        for (name, g) in grads {
            let &i = index
                .get(name)
                .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?;
            if params[i].1.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient for {name:?} has shape {:?}, parameter is {:?}",
                    g.shape(),
                    params[i].1.shape()
                )));
            }
            let v = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.shape()));
            for ((vv, gv), pv) in v
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(params[i].1.data_mut())
            {
                *vv = self.momentum * *vv + gv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// Cosine annealing value within one cycle:
/// lr_min + ½·(lr_max − lr_min)·(1 + cos(π·t_cur/t_i)).
pub fn cosine_lr(t_cur: f64, t_i: f64, lr_min: f64, lr_max: f64) -> f64 {
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (PI * t_cur / t_i).cos())
}

/// Warm restarts: cycles of length T_0, T_0·T_mult, T_0·T_mult², … with the
/// learning rate reset to lr_max at every cycle start.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmRestartSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    /// First cycle length in optimizer steps.
    pub t0: usize,
    /// Integer cycle-length multiplier.
    pub t_mult: usize,
}

impl WarmRestartSchedule {
    pub fn new(lr_max: f64, lr_min: f64, t0: usize, t_mult: usize) -> Result<WarmRestartSchedule> {
        if !(lr_max.is_finite() && lr_min.is_finite()) || lr_min < 0.0 || lr_min > lr_max {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= lr_min <= lr_max, got ({lr_min}, {lr_max})"
            )));
        }
        if t0 == 0 || t_mult == 0 {
            return Err(Error::InvalidArgument(
                "T_0 and T_mult must be at least 1".into(),
            ));
        }
        Ok(WarmRestartSchedule {
            lr_max,
            lr_min,
            t0,
            t_mult,
        })
    }

    /// Decomposes a global step index into (cycle position, cycle length).
    fn locate(&self, step: usize) -> (usize, usize) {
        let mut t = step;
        let mut t_i = self.t0;
        while t >= t_i {
            t -= t_i;
            t_i = t_i.saturating_mul(self.t_mult);
        }
        (t, t_i)
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        let (t_cur, t_i) = self.locate(step);
        cosine_lr(t_cur as f64, t_i as f64, self.lr_min, self.lr_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn named(t: Tensor) -> Vec<(String, Tensor)> {
        vec![("p".into(), t)]
    }

    #[test]
    fn momentum_two_step_oracle() {
        // v1 = 1, p = p0 − 0.1; v2 = 0.9 + 1 = 1.9, p = p0 − 0.1 − 0.19.
        let mut opt = SgdMomentum::new(0.9).unwrap();
        let mut params = named(Tensor::filled(&[2], 1.0));
        let grads = named(Tensor::filled(&[2], 1.0));
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert!((params[0].1.data()[0] - 0.9).abs() < 1e-15);
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert!((params[0].1.data()[0] - (1.0 - 0.1 - 0.19)).abs() < 1e-15);
    }

    #[test]
    fn zero_momentum_is_plain_sgd() {
        let mut opt = SgdMomentum::new(0.0).unwrap();
        let mut params = named(Tensor::filled(&[1], 2.0));
        let grads = named(Tensor::filled(&[1], 3.0));
        opt.step(&mut params, &grads, 0.5).unwrap();
        assert!((params[0].1.data()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut opt = SgdMomentum::new(0.9).unwrap();
        let mut params = named(Tensor::filled(&[2], 1.0));
        let good = named(Tensor::filled(&[2], 1.0));
        opt.step(&mut params, &good, 0.1).unwrap();
        let before = params[0].1.clone();

        let bad = named(Tensor::from_vec(&[2], vec![1.0, f64::NAN]).unwrap());
        let err = opt.step(&mut params, &bad, 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "p"));
        assert_eq!(params[0].1, before);

        // Velocity must also be untouched: a repeat good step matches the
        // trajectory of an optimizer that never saw the bad batch.
        let mut reference = SgdMomentum::new(0.9).unwrap();
        let mut ref_params = named(Tensor::filled(&[2], 1.0));
        reference.step(&mut ref_params, &good, 0.1).unwrap();
        reference.step(&mut ref_params, &good, 0.1).unwrap();
        opt.step(&mut params, &good, 0.1).unwrap();
        assert_eq!(params[0].1, ref_params[0].1);
    }

    #[test]
    fn frozen_subset_leaves_other_params_alone() {
        let mut opt = SgdMomentum::new(0.5).unwrap();
        let mut params = vec![
            ("a".to_string(), Tensor::filled(&[1], 1.0)),
            ("b".to_string(), Tensor::filled(&[1], 1.0)),
        ];
        let grads = vec![("b".to_string(), Tensor::filled(&[1], 1.0))];
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert_eq!(params[0].1.data()[0], 1.0);
        assert!((params[1].1.data()[0] - 0.9).abs() < 1e-15);
        let unknown = vec![("c".to_string(), Tensor::filled(&[1], 1.0))];
        assert!(opt.step(&mut params, &unknown, 0.1).is_err());
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        assert!((cosine_lr(0.0, 10.0, 1e-5, 0.1) - 0.1).abs() < 1e-15);
        assert!((cosine_lr(10.0, 10.0, 1e-5, 0.1) - 1e-5).abs() < 1e-15);
        let mid = cosine_lr(5.0, 10.0, 0.0, 0.1);
        assert!((mid - 0.05).abs() < 1e-15);
    }

    #[test]
    fn warm_restart_cycles() {
        let s = WarmRestartSchedule::new(0.1, 1e-5, 10, 2).unwrap();
        // Cycle starts: 0, 10, 30, 70 (lengths 10, 20, 40).
        for start in [0usize, 10, 30, 70] {
            assert!((s.lr_at(start) - 0.1).abs() < 1e-15, "step {start}");
        }
        // Within a cycle the rate decreases monotonically.
        for step in 0..9 {
            assert!(s.lr_at(step) > s.lr_at(step + 1));
        }
        // Last step of a cycle sits near the floor.
        assert!(s.lr_at(29) < s.lr_at(10) / 50.0);
        // Restart jumps back up.
        assert!(s.lr_at(30) > s.lr_at(29) * 100.0);
    }

    #[test]
    fn t_mult_one_keeps_fixed_cycles() {
        let s = WarmRestartSchedule::new(0.2, 0.0, 5, 1).unwrap();
        for cycle in 0..4 {
            assert!((s.lr_at(5 * cycle) - 0.2).abs() < 1e-15);
            assert!((s.lr_at(5 * cycle + 1) - s.lr_at(1)).abs() < 1e-15);
        }
    }

    #[test]
    fn constructor_validation() {
        assert!(SgdMomentum::new(1.0).is_err());
        assert!(SgdMomentum::new(-0.1).is_err());
        assert!(WarmRestartSchedule::new(0.1, 0.2, 10, 2).is_err());
        assert!(WarmRestartSchedule::new(0.1, 0.0, 0, 2).is_err());
        assert!(WarmRestartSchedule::new(0.1, 0.0, 10, 0).is_err());
    }
}
