//! Resilient backpropagation: sign-based updates with per-weight step sizes.

use super::{Objective, Optimizer, Point, StepError, StepReport};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RpropParams<T> {
    pub delta0: T,
    pub increase: T,
    pub decrease: T,
    pub delta_max: T,
    pub delta_min: T,
}

#[derive(Debug, Clone)]
pub struct Rprop<T> {
    params: RpropParams<T>,
    delta: Vec<T>,
    /// Gradient of the previous epoch; zeroed where a sign flip was seen.
    previous: Vec<T>,
}

impl<T: Scalar> Rprop<T> {
    pub fn new(params: RpropParams<T>, dim: usize) -> Self {
        Self {
            params,
            delta: vec![params.delta0; dim],
            previous: vec![T::zero(); dim],
        }
    }

    pub fn step_sizes(&self) -> &[T] {
        &self.delta
    }

    /// Applies one sign-based update to `w` in place.
    pub fn update(&mut self, w: &mut [T], g: &[T]) {
        let p = self.params;
        for i in 0..w.len() {
            let s = g[i] * self.previous[i];
            if s > T::zero() {
                self.delta[i] = (self.delta[i] * p.increase).min(p.delta_max);
            } else if s < T::zero() {
                self.delta[i] = (self.delta[i] * p.decrease).max(p.delta_min);
                self.previous[i] = T::zero();
                continue;
            }
            if g[i] != T::zero() {
                w[i] -= g[i].signum() * self.delta[i];
            }
            self.previous[i] = g[i];
        }
    }
}

impl<T: Scalar> Optimizer<T> for Rprop<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, p: &mut Point<T>) -> Result<StepReport, StepError> {
        let g = p.g.clone();
        self.update(&mut p.w, &g);
        p.refresh(obj)?;
        let mean = self.delta.iter().copied().sum::<T>() / T::from_usize(self.delta.len().max(1)).unwrap();
        Ok(StepReport::accepted(mean.as_f64()))
    }
}
