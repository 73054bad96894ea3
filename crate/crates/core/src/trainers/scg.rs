//! Scaled conjugate gradient: conjugate directions with a step length from
//! a finite-difference curvature estimate, regularized by a trust-region
//! style scale `λ` instead of a line search.

use super::{Objective, Optimizer, Point, StepError, StepReport};
use crate::linalg::dot_unchecked;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScgParams<T> {
    /// Relative finite-difference step for the curvature estimate.
    pub sigma: T,
    pub lambda0: T,
}

const LAMBDA_MIN: f64 = 1e-15;
const LAMBDA_MAX: f64 = 1e100;

#[derive(Debug, Clone)]
pub struct Scg<T> {
    params: ScgParams<T>,
    lambda: T,
    lambda_bar: T,
    /// Curvature along `p`, carried over after a rejected step.
    delta: T,
    success: bool,
    started: bool,
    p: Vec<T>,
    r: Vec<T>,
    since_restart: usize,
}

impl<T: Scalar> Scg<T> {
    pub fn new(params: ScgParams<T>) -> Self {
        Self {
            params,
            lambda: params.lambda0,
            lambda_bar: T::zero(),
            delta: T::zero(),
            success: true,
            started: false,
            p: Vec::new(),
            r: Vec::new(),
            since_restart: 0,
        }
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

impl<T: Scalar> Optimizer<T> for Scg<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, pt: &mut Point<T>) -> Result<StepReport, StepError> {
        let n = pt.w.len();
        if !self.started {
            self.r = pt.g.iter().map(|&g| -g).collect();
            self.p = self.r.clone();
            self.started = true;
        }
        let p_sq = dot_unchecked(&self.p, &self.p);
        if !(p_sq > T::zero()) {
            return Err(StepError::Diverged("zero search direction".into()));
        }
        if self.success {
            let sigma_k = self.params.sigma / p_sq.sqrt();
            let probe: Vec<T> = pt.w.iter().zip(&self.p).map(|(&w, &p)| w + sigma_k * p).collect();
            let mut g_probe = vec![T::zero(); n];
            obj.value_and_gradient(&probe, &mut g_probe)?;
            let curvature: T = g_probe
                .iter()
                .zip(&pt.g)
                .zip(&self.p)
                .map(|((&gp, &g), &p)| (gp - g) * p)
                .sum();
            self.delta = curvature / sigma_k;
        }
        let mut delta = self.delta + (self.lambda - self.lambda_bar) * p_sq;
        if delta <= T::zero() {
            self.lambda_bar = T::lit(2.0) * (self.lambda - delta / p_sq);
            delta = -delta + self.lambda * p_sq;
            self.lambda = self.lambda_bar;
        }
        let mu = dot_unchecked(&self.p, &self.r);
        let alpha = mu / delta;
        let w_new: Vec<T> = pt.w.iter().zip(&self.p).map(|(&w, &p)| w + alpha * p).collect();
        let mut g_new = vec![T::zero(); n];
        let f_new = obj.value_and_gradient(&w_new, &mut g_new)?;
        let comparison = T::lit(2.0) * delta * (pt.f - f_new) / (mu * mu);

        let accepted = f_new.is_finite() && comparison >= T::zero();
        let mut restarted = false;
        if accepted {
            let r_new: Vec<T> = g_new.iter().map(|&g| -g).collect();
            self.lambda_bar = T::zero();
            self.success = true;
            self.since_restart += 1;
            if self.since_restart % n == 0 {
                self.p = r_new.clone();
                restarted = true;
            } else {
                let beta = (dot_unchecked(&r_new, &r_new) - dot_unchecked(&r_new, &self.r)) / mu;
                self.p.iter_mut().zip(&r_new).for_each(|(p, &r)| *p = r + beta * *p);
            }
            self.r = r_new;
            *pt = Point { w: w_new, f: f_new, g: g_new };
            if comparison >= T::lit(0.75) {
                self.lambda = (self.lambda / T::lit(4.0)).max(T::lit(LAMBDA_MIN));
            }
        } else {
            self.lambda_bar = self.lambda;
            self.success = false;
        }
        if !(comparison >= T::lit(0.25)) {
            let c = if comparison.is_finite() { comparison } else { T::zero() };
            self.lambda += delta * (T::one() - c) / p_sq;
        }
        self.delta = delta;
        if !self.lambda.is_finite() || self.lambda > T::lit(LAMBDA_MAX) {
            return Err(StepError::Diverged(format!("scale parameter overflow ({})", self.lambda)));
        }
        Ok(StepReport {
            internal: self.lambda.as_f64(),
            accepted,
            restarted,
        })
    }
}
