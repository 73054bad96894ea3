//! Bracketing line search for the strong Wolfe conditions.

use super::{Objective, TrainError};
use crate::scalar::Scalar;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchParams {
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Budget of objective evaluations, the optional refinement included.
    pub max_evals: usize,
}

impl Default for LineSearchParams {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            c2: 0.1,
            max_evals: 25,
        }
    }
}

#[derive(Debug, Error)]
pub enum LineSearchError {
    #[error("search direction is not a descent direction")]
    NotDescent,
    #[error("no strong Wolfe point found within {0} evaluations")]
    NoWolfePoint(usize),
    #[error(transparent)]
    Objective(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchResult<T> {
    pub alpha: T,
    pub w: Vec<T>,
    pub f: T,
    pub g: Vec<T>,
    pub evals: usize,
}

const ROUNDING_TOLERANCE: f64 = 1e-12;

struct Trial<T> {
    alpha: T,
    w: Vec<T>,
    f: T,
    g: Vec<T>,
    slope: T,
}

/// Minimizer of the cubic matching value and slope at `a` and `b`, if it
/// exists.
pub fn cubic_minimizer<T: Scalar>(a: T, fa: T, da: T, b: T, fb: T, db: T) -> Option<T> {
    let d1 = da + db - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= T::zero()) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = db - da + T::lit(2.0) * d2;
    let x = b - (b - a) * (db + d2 - d1) / denom;
    x.is_finite().then_some(x)
}

struct Search<'a, T: Scalar> {
    obj: &'a mut dyn Objective<T>,
    x: &'a [T],
    d: &'a [T],
    f0: T,
    slope0: T,
    c1: T,
    c2: T,
    evals: usize,
    max_evals: usize,
}

impl<T: Scalar> Search<'_, T> {
    fn eval(&mut self, alpha: T) -> Result<Trial<T>, LineSearchError> {
        if self.evals >= self.max_evals {
            return Err(LineSearchError::NoWolfePoint(self.max_evals));
        }
        self.evals += 1;
        let w: Vec<T> = self.x.iter().zip(self.d).map(|(&xi, &di)| xi + alpha * di).collect();
        let mut g = vec![T::zero(); w.len()];
        let f = self.obj.value_and_gradient(&w, &mut g)?;
        let slope = crate::linalg::dot_unchecked(&g, self.d);
        Ok(Trial { alpha, w, f, g, slope })
    }

    fn armijo_fails(&self, t: &Trial<T>) -> bool {
        !t.f.is_finite() || t.f > self.f0 + self.c1 * t.alpha * self.slope0
    }

    fn curvature_ok(&self, t: &Trial<T>) -> bool {
        t.slope.is_finite() && t.slope.abs() <= -self.c2 * self.slope0
    }

    /// Strong Wolfe, with the decrease test relaxed to rounding level:
    /// close to a minimizer `f` differences drown in cancellation while the
    /// slope is still informative.
    fn is_wolfe(&self, t: &Trial<T>) -> bool {
        self.curvature_ok(t) && (!self.armijo_fails(t) || self.indistinct(t.f, self.f0))
    }

    /// Values closer than rounding noise, where only slopes can be trusted.
    fn indistinct(&self, a: T, b: T) -> bool {
        a.is_finite() && b.is_finite() && (a - b).abs() <= T::lit(ROUNDING_TOLERANCE) * self.f0.abs()
    }

    /// Whether `t` ends a bracket whose other end is `lo`.
    fn overshoots(&self, t: &Trial<T>, lo: &Trial<T>) -> bool {
        if self.indistinct(t.f, self.f0) && self.indistinct(t.f, lo.f) {
            return false;
        }
        self.armijo_fails(t) || t.f >= lo.f
    }

    /// One interpolation step toward the exact line minimum from an
    /// accepted point; kept only if it is also a Wolfe point with a lower value.
    fn refine(&mut self, t: Trial<T>) -> Trial<T> {
        if self.evals >= self.max_evals {
            return t;
        }
        let Some(a) = cubic_minimizer(T::zero(), self.f0, self.slope0, t.alpha, t.f, t.slope) else {
            return t;
        };
        let tiny = T::lit(1e-10) * t.alpha;
        if !(a > T::zero()) || (a - t.alpha).abs() <= tiny || a > T::lit(4.0) * t.alpha {
            return t;
        }
        match self.eval(a) {
            Ok(r) if self.is_wolfe(&r) && r.f < t.f => r,
            _ => t,
        }
    }

    fn zoom(&mut self, mut lo: Trial<T>, mut hi: Trial<T>) -> Result<Trial<T>, LineSearchError> {
        loop {
            let (a, b) = (lo.alpha, hi.alpha);
            let width = (b - a).abs();
            if width <= T::epsilon() * a.abs().max(b.abs()) {
                return Err(LineSearchError::NoWolfePoint(self.evals));
            }
            let guard = T::lit(0.1) * width;
            let (left, right) = (a.min(b) + guard, a.max(b) - guard);
            let candidate = if hi.f.is_finite() && hi.slope.is_finite() {
                cubic_minimizer(a, lo.f, lo.slope, b, hi.f, hi.slope)
            } else {
                None
            };
            let alpha = match candidate {
                Some(c) if c >= left && c <= right => c,
                _ => (a + b) / T::lit(2.0),
            };
            let t = self.eval(alpha)?;
            if self.is_wolfe(&t) {
                return Ok(self.refine(t));
            }
            if self.overshoots(&t, &lo) {
                hi = t;
            } else {
                if self.curvature_ok(&t) {
                    return Ok(self.refine(t));
                }
                if t.slope * (hi.alpha - lo.alpha) >= T::zero() {
                    hi = lo;
                }
                lo = t;
            }
        }
    }
}

/// Step length along `d` from `x` satisfying the strong Wolfe conditions.
///
/// `f0` and `g0` are the value and gradient at `x`; `alpha0` is the first
/// trial step.
pub fn line_search<T: Scalar>(
    obj: &mut dyn Objective<T>,
    x: &[T],
    f0: T,
    g0: &[T],
    d: &[T],
    alpha0: T,
    params: &LineSearchParams,
) -> Result<LineSearchResult<T>, LineSearchError> {
    let slope0 = crate::linalg::dot_unchecked(g0, d);
    if !(slope0 < T::zero()) {
        return Err(LineSearchError::NotDescent);
    }
    let mut s = Search {
        obj,
        x,
        d,
        f0,
        slope0,
        c1: T::lit(params.c1),
        c2: T::lit(params.c2),
        evals: 0,
        max_evals: params.max_evals,
    };
    let mut prev = Trial {
        alpha: T::zero(),
        w: x.to_vec(),
        f: f0,
        g: g0.to_vec(),
        slope: slope0,
    };
    let mut alpha = if alpha0 > T::zero() && alpha0.is_finite() { alpha0 } else { T::one() };
    let mut first = true;
    let found = loop {
        let t = s.eval(alpha)?;
        if s.is_wolfe(&t) {
            break s.refine(t);
        }
        if s.armijo_fails(&t) && !s.indistinct(t.f, f0) || (!first && s.overshoots(&t, &prev)) {
            break s.zoom(prev, t)?;
        }
        if s.curvature_ok(&t) {
            break s.refine(t);
        }
        if t.slope >= T::zero() {
            break s.zoom(t, prev)?;
        }
        alpha = t.alpha * T::lit(2.0);
        prev = t;
        first = false;
    };
    Ok(LineSearchResult {
        alpha: found.alpha,
        w: found.w,
        f: found.f,
        g: found.g,
        evals: s.evals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::trainers::QuadraticObjective;

    /// `f(w) = w²` as `½·2·w² − 0·w`.
    fn square() -> QuadraticObjective<f64> {
        QuadraticObjective {
            a: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            b: vec![0.0],
        }
    }

    #[test]
    fn quadratic_line_minimum() {
        let mut q = square();
        // from w = 1 with d = −g = −2 the exact minimizer is α = 0.5
        let r = line_search(&mut q, &[1.0], 1.0, &[2.0], &[-2.0], 1.0, &LineSearchParams::default()).unwrap();
        assert!((r.alpha - 0.5).abs() < 1e-12, "{}", r.alpha);
        assert!(r.w[0].abs() < 1e-12);
    }

    #[test]
    fn accepted_steps_satisfy_both_conditions() {
        let p = LineSearchParams::default();
        for alpha0 in [1e-4, 0.01, 0.3, 1.0, 7.0, 1e3] {
            let mut q = square();
            let r = line_search(&mut q, &[1.0], 1.0, &[2.0], &[-2.0], alpha0, &p).unwrap();
            assert!(r.f <= 1.0 + p.c1 * r.alpha * -4.0, "alpha0 {alpha0}");
            assert!((r.g[0] * -2.0).abs() <= p.c2 * 4.0, "alpha0 {alpha0}");
            assert!(r.evals <= p.max_evals);
        }
    }

    #[test]
    fn rejects_ascent_directions() {
        let mut q = square();
        let err = line_search(&mut q, &[1.0], 1.0, &[2.0], &[2.0], 1.0, &LineSearchParams::default()).unwrap_err();
        assert!(matches!(err, LineSearchError::NotDescent));
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut q = square();
        let tight = LineSearchParams {
            max_evals: 1,
            ..Default::default()
        };
        // a huge first step overshoots and the one-evaluation budget is spent
        let err = line_search(&mut q, &[1.0], 1.0, &[2.0], &[-2.0], 1e6, &tight).unwrap_err();
        assert!(matches!(err, LineSearchError::NoWolfePoint(1)));
    }

    #[test]
    fn cubic_interpolation_is_exact_for_quadratics() {
        // φ(α) = (α − 3)², sampled at 0 and 1
        let m = cubic_minimizer(0.0f64, 9.0, -6.0, 1.0, 4.0, -4.0).unwrap();
        assert!((m - 3.0).abs() < 1e-12);
    }
}
