//! Loss functions seen by the optimizers.

use super::TrainError;
use crate::dataset::NormalizedData;
use crate::linalg::{Matrix, Vector};
use crate::networks::{weighted_loss, LayeredNet, Linearization};
use crate::scalar::Scalar;

/// A smooth scalar function of a flat parameter vector.
///
/// Sum-of-squares objectives can also expose residuals: with
/// `E = ρ·‖e‖²`, the gradient is `2ρ·Jᵀe`.
pub trait Objective<T: Scalar> {
    fn dim(&self) -> usize;

    fn value(&mut self, w: &[T]) -> Result<T, TrainError>;

    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> Result<T, TrainError>;

    /// Residuals, their Jacobian and `ρ`.
    fn linearize(&mut self, _w: &[T]) -> Result<(Linearization<T>, T), TrainError> {
        Err(TrainError::Unsupported("a residual Jacobian"))
    }
}

/// Weighted training loss of a layered network on a fixed sample sequence.
///
/// Each output `k` is weighted by `ω_k = s_k / s̄` where `s_k` is its
/// millimetre-per-unit scale and `s̄` the RMS of the scales, so the loss is
/// exactly proportional to the mean squared error in mm².
#[derive(Debug, Clone)]
pub struct NetworkObjective<T> {
    net: LayeredNet<T>,
    data: NormalizedData<T>,
    weights: Vec<T>,
    mse_factor: T,
    evaluations: usize,
}

impl<T: Scalar> NetworkObjective<T> {
    pub fn new(net: &LayeredNet<T>, data: NormalizedData<T>, output_scale: &[T]) -> Result<Self, TrainError> {
        let m = net.topology().output_size;
        if data.is_empty() {
            return Err(TrainError::InvalidConfig("empty training set".into()));
        }
        if data.targets.cols() != m || data.inputs.cols() != net.topology().input_size {
            return Err(TrainError::InvalidConfig("data shape does not match the network".into()));
        }
        if output_scale.len() != m || output_scale.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) {
            return Err(TrainError::InvalidConfig("one positive output scale per output required".into()));
        }
        let mean_sq = output_scale.iter().map(|&s| s * s).sum::<T>() / T::from_usize(m).unwrap();
        let rms = mean_sq.sqrt();
        Ok(Self {
            net: net.clone(),
            data,
            weights: output_scale.iter().map(|&s| s / rms).collect(),
            mse_factor: mean_sq / T::from_usize(m).unwrap(),
            evaluations: 0,
        })
    }

    /// Converts a loss value into mean squared error in mm².
    pub fn mse_mm2(&self, loss: T) -> T {
        loss * self.mse_factor
    }

    pub fn output_weights(&self) -> &[T] {
        &self.weights
    }

    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn network(&self) -> &LayeredNet<T> {
        &self.net
    }

    fn load(&mut self, w: &[T]) -> Result<(), TrainError> {
        self.evaluations += 1;
        self.net.set_params(w)?;
        Ok(())
    }
}

impl<T: Scalar> Objective<T> for NetworkObjective<T> {
    fn dim(&self) -> usize {
        self.net.param_count()
    }

    fn value(&mut self, w: &[T]) -> Result<T, TrainError> {
        self.load(w)?;
        let y = self.net.forward(&self.data.inputs, &mut self.net.new_context())?;
        Ok(weighted_loss(&y, &self.data.targets, &self.weights))
    }

    fn value_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> Result<T, TrainError> {
        self.load(w)?;
        let tape = self.net.record_tape(&self.data.inputs, &mut self.net.new_context())?;
        Ok(self
            .net
            .loss_and_gradient(&self.data.inputs, &self.data.targets, &tape, &self.weights, grad)?)
    }

    fn linearize(&mut self, w: &[T]) -> Result<(Linearization<T>, T), TrainError> {
        self.load(w)?;
        let tape = self.net.record_tape(&self.data.inputs, &mut self.net.new_context())?;
        let lin = self.net.linearize(&self.data.inputs, &self.data.targets, &tape, &self.weights)?;
        Ok((lin, T::one() / T::from_usize(self.data.len()).unwrap()))
    }
}

/// `f(x) = ½ xᵀAx − bᵀx` for a symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadraticObjective<T> {
    pub a: Matrix<T>,
    pub b: Vector<T>,
}

impl<T: Scalar> Objective<T> for QuadraticObjective<T> {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn value(&mut self, w: &[T]) -> Result<T, TrainError> {
        let ax = self.a.matvec(w)?;
        Ok(w.iter()
            .zip(&ax)
            .zip(&self.b)
            .map(|((&x, &ax), &b)| T::lit(0.5) * x * ax - b * x)
            .sum())
    }

    fn value_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> Result<T, TrainError> {
        let ax = self.a.matvec(w)?;
        let mut f = T::zero();
        for i in 0..w.len() {
            grad[i] = ax[i] - self.b[i];
            f += T::lit(0.5) * w[i] * ax[i] - self.b[i] * w[i];
        }
        Ok(f)
    }
}

/// Linear least squares `E = (1/N)·‖Mx − y‖²` with `N` residuals.
#[derive(Debug, Clone)]
pub struct LeastSquaresObjective<T> {
    pub m: Matrix<T>,
    pub y: Vector<T>,
}

impl<T: Scalar> LeastSquaresObjective<T> {
    fn residuals(&self, w: &[T]) -> Result<Vec<T>, TrainError> {
        let mut r = self.m.matvec(w)?;
        r.iter_mut().zip(&self.y).for_each(|(ri, &yi)| *ri -= yi);
        Ok(r)
    }

    fn rho(&self) -> T {
        T::one() / T::from_usize(self.y.len()).unwrap()
    }
}

impl<T: Scalar> Objective<T> for LeastSquaresObjective<T> {
    fn dim(&self) -> usize {
        self.m.cols()
    }

    fn value(&mut self, w: &[T]) -> Result<T, TrainError> {
        let r = self.residuals(w)?;
        Ok(self.rho() * r.iter().map(|&v| v * v).sum::<T>())
    }

    fn value_and_gradient(&mut self, w: &[T], grad: &mut [T]) -> Result<T, TrainError> {
        let r = self.residuals(w)?;
        let g = self.m.tr_matvec(&r)?;
        let two_rho = T::lit(2.0) * self.rho();
        grad.iter_mut().zip(&g).for_each(|(d, &s)| *d = two_rho * s);
        Ok(self.rho() * r.iter().map(|&v| v * v).sum::<T>())
    }

    fn linearize(&mut self, w: &[T]) -> Result<(Linearization<T>, T), TrainError> {
        Ok((
            Linearization {
                jacobian: self.m.clone(),
                residuals: self.residuals(w)?,
            },
            self.rho(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{Topology, TopologyKind};

    #[test]
    fn weighted_loss_is_proportional_to_mm_mse() {
        let net = LayeredNet::<f64>::init(&Topology::new(TopologyKind::FeedForward), 3).unwrap();
        let data = NormalizedData {
            inputs: Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.5, 0.7], vec![0.9, -0.3]]).unwrap(),
            targets: Matrix::from_rows(&[vec![0.0, 0.4], vec![-0.2, 0.1], vec![0.3, -0.8]]).unwrap(),
        };
        let scale = [95.0, 70.0];
        let mut obj = NetworkObjective::new(&net, data.clone(), &scale).unwrap();
        let loss = obj.value(&net.params()).unwrap();
        let y = net.predict(&data.inputs).unwrap();
        let mut direct = 0.0;
        for (yr, tr) in y.iter_rows().zip(data.targets.iter_rows()) {
            for k in 0..2 {
                direct += ((yr[k] - tr[k]) * scale[k]).powi(2);
            }
        }
        direct /= 6.0;
        assert!((obj.mse_mm2(loss) - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn least_squares_gradient_matches_linearization() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let mut obj = LeastSquaresObjective { m, y: vec![1.0, 0.0, 2.0] };
        let w = [0.3f64, -0.7];
        let mut g = [0.0; 2];
        obj.value_and_gradient(&w, &mut g).unwrap();
        let (lin, rho) = obj.linearize(&w).unwrap();
        let jte = lin.jacobian.tr_matvec(&lin.residuals).unwrap();
        for k in 0..2 {
            assert!((2.0 * rho * jte[k] - g[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn quadratic_has_no_linearization() {
        let mut q = QuadraticObjective {
            a: Matrix::<f64>::identity(2),
            b: vec![1.0, 1.0],
        };
        assert!(matches!(q.linearize(&[0.0, 0.0]), Err(TrainError::Unsupported(_))));
        let mut g = [0.0; 2];
        assert_eq!(q.value_and_gradient(&[1.0, 1.0], &mut g).unwrap(), -1.0);
        assert_eq!(g, [0.0, 0.0]);
    }
}
