//! Line-search methods: nonlinear conjugate gradient (Fletcher–Reeves,
//! Polak–Ribière, Powell–Beale restarts) and the one-step secant method.

use super::line_search::{line_search, LineSearchError, LineSearchParams};
use super::{Objective, Optimizer, Point, StepError, StepReport};
use crate::linalg::dot_unchecked;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgVariant {
    FletcherReeves,
    PolakRibiere,
    PowellBeale,
}

/// Restart test of the Powell–Beale variant: consecutive gradients far from
/// orthogonal, `|gᵀg_prev| ≥ 0.2·‖g‖²`.
pub fn powell_beale_restart<T: Scalar>(g: &[T], g_prev: &[T]) -> bool {
    dot_unchecked(g, g_prev).abs() >= T::lit(0.2) * dot_unchecked(g, g)
}

/// Conjugacy coefficient for the variant; `None` asks for a restart.
pub fn cg_beta<T: Scalar>(variant: CgVariant, g: &[T], g_prev: &[T]) -> Option<T> {
    let prev_sq = dot_unchecked(g_prev, g_prev);
    if !(prev_sq > T::zero()) {
        return None;
    }
    match variant {
        CgVariant::FletcherReeves => Some(dot_unchecked(g, g) / prev_sq),
        CgVariant::PolakRibiere => {
            let num: T = g.iter().zip(g_prev).map(|(&a, &b)| a * (a - b)).sum();
            Some((num / prev_sq).max(T::zero()))
        }
        CgVariant::PowellBeale => {
            if powell_beale_restart(g, g_prev) {
                None
            } else {
                let num: T = g.iter().zip(g_prev).map(|(&a, &b)| a * (a - b)).sum();
                Some(num / prev_sq)
            }
        }
    }
}

/// One-step secant direction `−g + A·s + B·y` from the last step `s` and
/// gradient change `y`; `None` when `sᵀy` is not positive.
pub fn oss_direction<T: Scalar>(g: &[T], s: &[T], y: &[T]) -> Option<Vec<T>> {
    let sy = dot_unchecked(s, y);
    if !(sy > T::zero()) {
        return None;
    }
    let yy = dot_unchecked(y, y);
    let sg = dot_unchecked(s, g);
    let yg = dot_unchecked(y, g);
    let b = sg / sy;
    let a = -(T::one() + yy / sy) * b + yg / sy;
    Some(
        g.iter()
            .zip(s)
            .zip(y)
            .map(|((&gi, &si), &yi)| -gi + a * si + b * yi)
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirectionRule {
    Conjugate(CgVariant),
    OneStepSecant,
}

/// Shared driver: direction rule, strong Wolfe step, one steepest-descent
/// retry when the search fails.
#[derive(Debug, Clone)]
pub struct LineSearchMethod<T> {
    rule: DirectionRule,
    search: LineSearchParams,
    prev: Option<History<T>>,
    iterations: usize,
    last_restart: bool,
}

#[derive(Debug, Clone)]
struct History<T> {
    g: Vec<T>,
    d: Vec<T>,
    s: Vec<T>,
    slope: T,
    alpha: T,
}

impl<T: Scalar> LineSearchMethod<T> {
    pub fn new(rule: DirectionRule) -> Self {
        Self {
            rule,
            search: LineSearchParams::default(),
            prev: None,
            iterations: 0,
            last_restart: false,
        }
    }

    pub fn with_search(mut self, search: LineSearchParams) -> Self {
        self.search = search;
        self
    }

    /// Whether the direction of the most recent step was a restart.
    pub fn restarted(&self) -> bool {
        self.last_restart
    }

    fn direction(&self, g: &[T]) -> Option<Vec<T>> {
        let prev = self.prev.as_ref()?;
        if self.iterations % g.len().max(1) == 0 {
            return None;
        }
        let d = match self.rule {
            DirectionRule::Conjugate(v) => {
                let beta = cg_beta(v, g, &prev.g)?;
                g.iter().zip(&prev.d).map(|(&gi, &di)| -gi + beta * di).collect()
            }
            DirectionRule::OneStepSecant => {
                let y: Vec<T> = g.iter().zip(&prev.g).map(|(&a, &b)| a - b).collect();
                oss_direction(g, &prev.s, &y)?
            }
        };
        (dot_unchecked(&d, g) < T::zero()).then_some(d)
    }
}

impl<T: Scalar> Optimizer<T> for LineSearchMethod<T> {
    fn step(&mut self, obj: &mut dyn Objective<T>, pt: &mut Point<T>) -> Result<StepReport, StepError> {
        let steepest: Vec<T> = pt.g.iter().map(|&g| -g).collect();
        let (mut d, mut restart) = match self.direction(&pt.g) {
            Some(d) => (d, false),
            None => (steepest.clone(), true),
        };
        loop {
            let slope = dot_unchecked(&pt.g, &d);
            // First step of unit length; afterwards assume the same first-order
            // change as the previous iteration.
            let alpha0 = match &self.prev {
                Some(h) => h.alpha * h.slope / slope,
                None => T::one() / dot_unchecked(&pt.g, &pt.g).sqrt().max(T::epsilon()),
            };
            match line_search(obj, &pt.w, pt.f, &pt.g, &d, alpha0, &self.search) {
                Ok(r) => {
                    let s: Vec<T> = r.w.iter().zip(&pt.w).map(|(&a, &b)| a - b).collect();
                    self.prev = Some(History {
                        g: std::mem::take(&mut pt.g),
                        d,
                        s,
                        slope,
                        alpha: r.alpha,
                    });
                    *pt = Point { w: r.w, f: r.f, g: r.g };
                    self.iterations = if restart { 1 } else { self.iterations + 1 };
                    self.last_restart = restart;
                    return Ok(StepReport {
                        internal: r.alpha.as_f64(),
                        accepted: true,
                        restarted: restart,
                    });
                }
                Err(LineSearchError::Objective(e)) => return Err(StepError::Objective(e)),
                Err(_) if !restart => {
                    d = steepest.clone();
                    restart = true;
                }
                Err(_) => return Err(StepError::LineSearchFailure),
            }
        }
    }
}
