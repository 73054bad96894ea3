//! Plain, momentum and adaptive-rate gradient descent.

use super::{Objective, Optimizer, Point, StepError, StepReport};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct GradientDescent<T> {
    pub lr: T,
}

impl<T: Scalar> Optimizer<T> for GradientDescent<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, p: &mut Point<T>) -> Result<StepReport, StepError> {
        let lr = self.lr;
        p.w.iter_mut().zip(&p.g).for_each(|(w, &g)| *w -= lr * g);
        p.refresh(obj)?;
        Ok(StepReport::accepted(lr.as_f64()))
    }
}

#[derive(Debug, Clone)]
pub struct Momentum<T> {
    pub lr: T,
    pub momentum: T,
    velocity: Vec<T>,
}

impl<T: Scalar> Momentum<T> {
    pub fn new(lr: T, momentum: T, dim: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![T::zero(); dim],
        }
    }
}

impl<T: Scalar> Optimizer<T> for Momentum<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, p: &mut Point<T>) -> Result<StepReport, StepError> {
        for ((v, w), &g) in self.velocity.iter_mut().zip(p.w.iter_mut()).zip(&p.g) {
            *v = self.momentum * *v - self.lr * g;
            *w += *v;
        }
        p.refresh(obj)?;
        Ok(StepReport::accepted(self.lr.as_f64()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveParams<T> {
    pub lr: T,
    pub momentum: T,
    pub increase: T,
    pub decrease: T,
    /// Largest tolerated ratio of new to old loss.
    pub max_perf_increase: T,
}

/// Momentum descent whose rate grows after improving steps and shrinks,
/// with the step undone, after a loss increase beyond the tolerance.
#[derive(Debug, Clone)]
pub struct AdaptiveMomentum<T> {
    pub params: AdaptiveParams<T>,
    pub lr: T,
    velocity: Vec<T>,
}

impl<T: Scalar> AdaptiveMomentum<T> {
    pub fn new(params: AdaptiveParams<T>, dim: usize) -> Self {
        Self {
            lr: params.lr,
            params,
            velocity: vec![T::zero(); dim],
        }
    }
}

impl<T: Scalar> Optimizer<T> for AdaptiveMomentum<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, p: &mut Point<T>) -> Result<StepReport, StepError> {
        let velocity: Vec<T> = self
            .velocity
            .iter()
            .zip(&p.g)
            .map(|(&v, &g)| self.params.momentum * v - self.lr * g)
            .collect();
        let w: Vec<T> = p.w.iter().zip(&velocity).map(|(&w, &v)| w + v).collect();
        let mut g = vec![T::zero(); w.len()];
        let f = obj.value_and_gradient(&w, &mut g)?;
        if !f.is_finite() || f > p.f * self.params.max_perf_increase {
            self.lr *= self.params.decrease;
            self.velocity.iter_mut().for_each(|v| *v = T::zero());
            return Ok(StepReport {
                internal: self.lr.as_f64(),
                accepted: false,
                restarted: false,
            });
        }
        if f < p.f {
            self.lr *= self.params.increase;
        }
        self.velocity = velocity;
        *p = Point { w, f, g };
        Ok(StepReport::accepted(self.lr.as_f64()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::trainers::QuadraticObjective;

    fn bowl(c: f64) -> QuadraticObjective<f64> {
        QuadraticObjective {
            a: Matrix::from_diag(&[c, c]),
            b: vec![0.0, 0.0],
        }
    }

    #[test]
    fn gd_step_is_lr_times_gradient() {
        // f = ½·xᵀx + (−1, 2)·x has gradient (1, −2) at the origin
        let mut obj = QuadraticObjective {
            a: Matrix::identity(2),
            b: vec![-1.0, 2.0],
        };
        let mut p = Point::<f64>::evaluate(&mut obj, vec![0.0, 0.0]).unwrap();
        assert_eq!(p.g, vec![1.0, -2.0]);
        GradientDescent { lr: 0.1 }.step(&mut obj, &mut p).unwrap();
        assert!((p.w[0] + 0.1).abs() < 1e-15 && (p.w[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_weights() {
        let mut obj = bowl(1.0);
        let mut p = Point::evaluate(&mut obj, vec![0.0, 0.0]).unwrap();
        GradientDescent { lr: 0.5 }.step(&mut obj, &mut p).unwrap();
        Momentum::new(0.5, 0.9, 2).step(&mut obj, &mut p).unwrap();
        assert_eq!(p.w, vec![0.0, 0.0]);
    }

    #[test]
    fn momentum_accumulates() {
        let mut obj = QuadraticObjective {
            a: Matrix::zeros(1, 1),
            b: vec![-1.0],
        };
        let mut p = Point::<f64>::evaluate(&mut obj, vec![0.0]).unwrap();
        let mut opt = Momentum::new(0.1, 0.9, 1);
        opt.step(&mut obj, &mut p).unwrap();
        opt.step(&mut obj, &mut p).unwrap();
        // steps −0.1 then −(0.09 + 0.1)
        assert!((p.w[0] + 0.29).abs() < 1e-15);
    }

    #[test]
    fn adaptive_rate_rejects_overshoot() {
        // f = w² (curvature 2): lr 1.5 overshoots to w = −2, f = 4 > 1.04·1
        let mut obj = bowl(2.0);
        let mut p = Point::evaluate(&mut obj, vec![1.0, 0.0]).unwrap();
        let params = AdaptiveParams {
            lr: 1.5,
            momentum: 0.0,
            increase: 1.05,
            decrease: 0.7,
            max_perf_increase: 1.04,
        };
        let mut opt = AdaptiveMomentum::new(params, 2);
        let r = opt.step(&mut obj, &mut p).unwrap();
        assert!(!r.accepted);
        assert_eq!(p.w, vec![1.0, 0.0]);
        assert!((opt.lr - 1.05).abs() < 1e-15);
        // lr 1.05 still overshoots (f = 1.21); 0.735 lands at w = −0.47
        assert!(!opt.step(&mut obj, &mut p).unwrap().accepted);
        let r = opt.step(&mut obj, &mut p).unwrap();
        assert!(r.accepted);
        assert!(p.f < 1.0);
    }
}
