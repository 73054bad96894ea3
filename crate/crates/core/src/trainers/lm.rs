//! Levenberg–Marquardt: damped Gauss–Newton steps on the residual Jacobian.

use super::{Objective, Optimizer, Point, StepError, StepReport};
use crate::linalg::{solve_spd, LinalgError, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmParams<T> {
    pub mu0: T,
    pub factor: T,
    pub mu_min: T,
    pub mu_max: T,
}

#[derive(Debug, Clone)]
pub struct LevenbergMarquardt<T> {
    params: LmParams<T>,
    mu: T,
    /// Number of rejected trial steps during the latest epoch.
    pub rejected: usize,
}

impl<T: Scalar> LevenbergMarquardt<T> {
    pub fn new(params: LmParams<T>) -> Self {
        Self {
            mu: params.mu0,
            params,
            rejected: 0,
        }
    }

    pub fn mu(&self) -> T {
        self.mu
    }
}

impl<T: Scalar> Optimizer<T> for LevenbergMarquardt<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, pt: &mut Point<T>) -> Result<StepReport, StepError> {
        let (lin, _rho) = obj.linearize(&pt.w)?;
        let jtj = lin.jacobian.gram();
        let jte = lin.jacobian.tr_matvec(&lin.residuals).map_err(|e| StepError::Objective(e.into()))?;
        let n = pt.w.len();
        self.rejected = 0;
        loop {
            let mut a: Matrix<T> = jtj.clone();
            for i in 0..n {
                a[(i, i)] += self.mu;
            }
            match solve_spd(&a, &jte) {
                Ok(delta) => {
                    let w: Vec<T> = pt.w.iter().zip(&delta).map(|(&w, &d)| w - d).collect();
                    let f = obj.value(&w)?;
                    if f.is_finite() && f < pt.f {
                        self.mu = (self.mu / self.params.factor).max(self.params.mu_min);
                        let mut g = vec![T::zero(); n];
                        let f = obj.value_and_gradient(&w, &mut g)?;
                        *pt = Point { w, f, g };
                        return Ok(StepReport::accepted(self.mu.as_f64()));
                    }
                }
                Err(LinalgError::NotPositiveDefinite { .. }) | Err(LinalgError::NotSymmetric) => {}
                Err(e) => return Err(StepError::Objective(e.into())),
            }
            self.rejected += 1;
            self.mu *= self.params.factor;
            if self.mu > self.params.mu_max {
                return Err(StepError::Diverged(format!(
                    "damping exceeded {} without reducing the loss",
                    self.params.mu_max.as_f64()
                )));
            }
        }
    }
}
