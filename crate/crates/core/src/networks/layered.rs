//! Layered tanh networks with optional cascade (skip) connections and
//! delay-one recurrent feedback.
//!
//! Flat parameter order, per layer: every connection block row-major in
//! declaration order, then the recurrent block (if any), then the bias.

use super::{EvalContext, Linearization, NetworkError, Result, Topology, TopologyKind};
use crate::linalg::Matrix;
use crate::scalar::Scalar;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    Input,
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            Self::Tanh => z.tanh(),
            Self::Identity => z,
        }
    }

    /// Derivative expressed through the activation value.
    #[inline]
    fn derivative<T: Scalar>(self, a: T) -> T {
        match self {
            Self::Tanh => T::one() - a * a,
            Self::Identity => T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Connection<T> {
    pub source: Source,
    /// `layer size × source size`.
    pub weights: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub size: usize,
    pub activation: Activation,
    pub connections: Vec<Connection<T>>,
    /// Feedback from this layer's previous activation, `size × size`.
    pub recurrent: Option<Matrix<T>>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn param_count(&self) -> usize {
        self.connections
            .iter()
            .map(|c| c.weights.rows() * c.weights.cols())
            .sum::<usize>()
            + self.recurrent.as_ref().map_or(0, |r| r.rows() * r.cols())
            + self.size
    }
}

/// Recurrent contexts captured while running a sequence: the context each
/// sample saw, per layer. Empty for non-recurrent networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextTape<T> {
    per_sample: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> ContextTape<T> {
    pub fn len(&self) -> usize {
        self.per_sample.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_sample.is_empty()
    }

    pub fn sample(&self, n: usize) -> Option<&[Vec<T>]> {
        self.per_sample.get(n).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayeredNet<T> {
    topology: Topology,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> LayeredNet<T> {
    /// All-zero network with the connectivity of `topology`.
    pub fn zeros(topology: &Topology) -> Result<Self> {
        topology.validate()?;
        if !topology.kind.is_differentiable() {
            return Err(NetworkError::UnsupportedTopology(format!(
                "{} is not a layered network",
                topology.kind
            )));
        }
        let mut sizes = topology.hidden_sizes.clone();
        sizes.push(topology.output_size);
        let n_layers = sizes.len();
        let source_size = |s: Source| match s {
            Source::Input => topology.input_size,
            Source::Layer(j) => sizes[j],
        };
        let layers = (0..n_layers)
            .map(|l| {
                let previous = if l == 0 { Source::Input } else { Source::Layer(l - 1) };
                let mut sources = vec![previous];
                if topology.kind == TopologyKind::CascadeForward && l > 0 {
                    sources.push(Source::Input);
                    sources.extend((0..l - 1).map(Source::Layer));
                }
                let is_output = l == n_layers - 1;
                let recurrent = match topology.kind {
                    TopologyKind::Elman => l == 0 && !is_output,
                    TopologyKind::LayerRecurrent => !is_output,
                    _ => false,
                };
                Layer {
                    size: sizes[l],
                    activation: if is_output { Activation::Identity } else { Activation::Tanh },
                    connections: sources
                        .into_iter()
                        .map(|source| Connection {
                            source,
                            weights: Matrix::zeros(sizes[l], source_size(source)),
                        })
                        .collect(),
                    recurrent: recurrent.then(|| Matrix::zeros(sizes[l], sizes[l])),
                    bias: vec![T::zero(); sizes[l]],
                }
            })
            .collect();
        Ok(Self {
            topology: topology.clone(),
            layers,
        })
    }

    /// Nguyen–Widrow initialization of tanh layers over their feed-forward
    /// inputs; output layer and recurrent blocks uniform in [−0.5, 0.5].
    pub fn init(topology: &Topology, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(topology)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let half = T::lit(0.5);
        let uniform = |rng: &mut ChaCha8Rng, a: T| T::lit(rng.gen_range(-1.0..=1.0)) * a;
        for layer in &mut net.layers {
            match layer.activation {
                Activation::Tanh => {
                    let fan_in: usize = layer.connections.iter().map(|c| c.weights.cols()).sum();
                    let beta = T::lit(0.7 * (layer.size as f64).powf(1.0 / fan_in as f64));
                    for i in 0..layer.size {
                        let mut row_norm_sq = T::zero();
                        for c in &mut layer.connections {
                            for w in c.weights.row_mut(i) {
                                *w = uniform(&mut rng, T::one());
                                row_norm_sq += *w * *w;
                            }
                        }
                        let f = beta / row_norm_sq.sqrt().max(T::epsilon());
                        for c in &mut layer.connections {
                            c.weights.row_mut(i).iter_mut().for_each(|w| *w *= f);
                        }
                        layer.bias[i] = uniform(&mut rng, beta);
                    }
                }
                Activation::Identity => {
                    for c in &mut layer.connections {
                        c.weights.as_mut_slice().iter_mut().for_each(|w| *w = uniform(&mut rng, half));
                    }
                    layer.bias.iter_mut().for_each(|b| *b = uniform(&mut rng, half));
                }
            }
            if let Some(r) = &mut layer.recurrent {
                r.as_mut_slice().iter_mut().for_each(|w| *w = uniform(&mut rng, half));
            }
        }
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn is_recurrent(&self) -> bool {
        self.layers.iter().any(|l| l.recurrent.is_some())
    }

    pub fn params(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for c in &layer.connections {
                out.extend_from_slice(c.weights.as_slice());
            }
            if let Some(r) = &layer.recurrent {
                out.extend_from_slice(r.as_slice());
            }
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[T]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} parameters for a network with {}",
                params.len(),
                self.param_count()
            )));
        }
        let mut rest = params;
        let mut take = |dst: &mut [T]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        for layer in &mut self.layers {
            for c in &mut layer.connections {
                take(c.weights.as_mut_slice());
            }
            if let Some(r) = &mut layer.recurrent {
                take(r.as_mut_slice());
            }
            take(&mut layer.bias);
        }
        Ok(())
    }

    pub fn new_context(&self) -> EvalContext<T> {
        EvalContext {
            layers: self
                .layers
                .iter()
                .map(|l| if l.recurrent.is_some() { vec![T::zero(); l.size] } else { Vec::new() })
                .collect(),
        }
    }

    fn check_inputs(&self, inputs: &Matrix<T>) -> Result<()> {
        if inputs.cols() != self.topology.input_size {
            return Err(NetworkError::ShapeMismatch(format!(
                "inputs have {} columns, network expects {}",
                inputs.cols(),
                self.topology.input_size
            )));
        }
        Ok(())
    }

    fn check_context(&self, ctx: &EvalContext<T>) -> Result<()> {
        let ok = ctx.layers.len() == self.layers.len()
            && ctx
                .layers
                .iter()
                .zip(&self.layers)
                .all(|(c, l)| c.len() == if l.recurrent.is_some() { l.size } else { 0 });
        if ok {
            Ok(())
        } else {
            Err(NetworkError::ShapeMismatch("evaluation context does not match network".into()))
        }
    }

    fn scratch(&self) -> Vec<Vec<T>> {
        self.layers.iter().map(|l| vec![T::zero(); l.size]).collect()
    }

    /// One sample. `ctx` holds the per-layer feedback (may be empty when
    /// the network has no recurrence).
    fn forward_sample(&self, x: &[T], ctx: &[Vec<T>], acts: &mut [Vec<T>]) {
        for (l, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(l);
            let out = &mut rest[0];
            out.copy_from_slice(&layer.bias);
            for c in &layer.connections {
                let src: &[T] = match c.source {
                    Source::Input => x,
                    Source::Layer(j) => &done[j],
                };
                for (o, w) in out.iter_mut().zip(c.weights.iter_rows()) {
                    *o += crate::linalg::dot_unchecked(w, src);
                }
            }
            if let (Some(r), Some(c)) = (&layer.recurrent, ctx.get(l)) {
                if !c.is_empty() {
                    for (o, w) in out.iter_mut().zip(r.iter_rows()) {
                        *o += crate::linalg::dot_unchecked(w, c);
                    }
                }
            }
            for o in out.iter_mut() {
                *o = layer.activation.apply(*o);
            }
        }
    }

    fn store_context(&self, acts: &[Vec<T>], ctx: &mut EvalContext<T>) {
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.recurrent.is_some() {
                ctx.layers[l].copy_from_slice(&acts[l]);
            }
        }
    }

    pub fn forward(&self, inputs: &Matrix<T>, ctx: &mut EvalContext<T>) -> Result<Matrix<T>> {
        self.check_inputs(inputs)?;
        self.check_context(ctx)?;
        let out_size = self.topology.output_size;
        let mut acts = self.scratch();
        let mut out = Matrix::zeros(inputs.rows(), out_size);
        for (n, x) in inputs.iter_rows().enumerate() {
            self.forward_sample(x, &ctx.layers, &mut acts);
            out.row_mut(n).copy_from_slice(acts.last().unwrap());
            self.store_context(&acts, ctx);
        }
        Ok(out)
    }

    /// Each row from a zero context.
    pub fn predict(&self, inputs: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_inputs(inputs)?;
        let mut acts = self.scratch();
        let mut out = Matrix::zeros(inputs.rows(), self.topology.output_size);
        for (n, x) in inputs.iter_rows().enumerate() {
            self.forward_sample(x, &[], &mut acts);
            out.row_mut(n).copy_from_slice(acts.last().unwrap());
        }
        Ok(out)
    }

    /// Runs the sequence from `ctx`, recording the context each sample saw.
    pub fn record_tape(&self, inputs: &Matrix<T>, ctx: &mut EvalContext<T>) -> Result<ContextTape<T>> {
        self.check_inputs(inputs)?;
        self.check_context(ctx)?;
        if !self.is_recurrent() {
            return Ok(ContextTape { per_sample: Vec::new() });
        }
        let mut acts = self.scratch();
        let mut per_sample = Vec::with_capacity(inputs.rows());
        for x in inputs.iter_rows() {
            per_sample.push(ctx.layers.clone());
            self.forward_sample(x, &ctx.layers, &mut acts);
            self.store_context(&acts, ctx);
        }
        Ok(ContextTape { per_sample })
    }

    fn tape_context<'a>(&self, tape: &'a ContextTape<T>, n: usize) -> &'a [Vec<T>] {
        tape.per_sample.get(n).map_or(&[], Vec::as_slice)
    }

    fn check_batch(&self, inputs: &Matrix<T>, targets: &Matrix<T>, tape: &ContextTape<T>, weights: &[T]) -> Result<()> {
        self.check_inputs(inputs)?;
        if targets.rows() != inputs.rows() || targets.cols() != self.topology.output_size {
            return Err(NetworkError::ShapeMismatch(format!(
                "targets {}x{} for {} samples of {} outputs",
                targets.rows(),
                targets.cols(),
                inputs.rows(),
                self.topology.output_size
            )));
        }
        if weights.len() != self.topology.output_size {
            return Err(NetworkError::ShapeMismatch("one output weight per output required".into()));
        }
        if self.is_recurrent() && tape.len() != inputs.rows() {
            return Err(NetworkError::ShapeMismatch("context tape does not cover the batch".into()));
        }
        if inputs.rows() == 0 {
            return Err(NetworkError::EmptyDataset);
        }
        Ok(())
    }

    /// Outputs with every sample fed its recorded (frozen) context.
    pub fn forward_with_tape(&self, inputs: &Matrix<T>, tape: &ContextTape<T>) -> Result<Matrix<T>> {
        self.check_inputs(inputs)?;
        let mut acts = self.scratch();
        let mut out = Matrix::zeros(inputs.rows(), self.topology.output_size);
        for (n, x) in inputs.iter_rows().enumerate() {
            self.forward_sample(x, self.tape_context(tape, n), &mut acts);
            out.row_mut(n).copy_from_slice(acts.last().unwrap());
        }
        Ok(out)
    }

    /// Weighted loss `(1/N) Σ_n Σ_k ω_k² (y_nk − t_nk)²` under frozen contexts.
    pub fn loss_with_tape(&self, inputs: &Matrix<T>, targets: &Matrix<T>, tape: &ContextTape<T>, weights: &[T]) -> Result<T> {
        self.check_batch(inputs, targets, tape, weights)?;
        let y = self.forward_with_tape(inputs, tape)?;
        Ok(weighted_loss(&y, targets, weights))
    }

    /// Accumulates `seed`-weighted output sensitivities of one sample into
    /// `out` (length = parameter count).
    fn backprop_sample(&self, x: &[T], ctx: &[Vec<T>], acts: &[Vec<T>], seed: &[T], dacts: &mut [Vec<T>], out: &mut [T]) {
        for d in dacts.iter_mut() {
            d.iter_mut().for_each(|v| *v = T::zero());
        }
        dacts.last_mut().unwrap().copy_from_slice(seed);
        let mut offset = self.param_count();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            offset -= layer.param_count();
            let (earlier, rest) = dacts.split_at_mut(l);
            let dz = &mut rest[0];
            for (d, &a) in dz.iter_mut().zip(&acts[l]) {
                *d *= layer.activation.derivative(a);
            }
            let mut off = offset;
            for c in &layer.connections {
                let src: &[T] = match c.source {
                    Source::Input => x,
                    Source::Layer(j) => &acts[j],
                };
                let cols = src.len();
                for (i, &dzi) in dz.iter().enumerate() {
                    if dzi == T::zero() {
                        continue;
                    }
                    let g = &mut out[off + i * cols..off + (i + 1) * cols];
                    for (gj, &s) in g.iter_mut().zip(src) {
                        *gj += dzi * s;
                    }
                }
                if let Source::Layer(j) = c.source {
                    let back = &mut earlier[j];
                    for (w, &dzi) in c.weights.iter_rows().zip(dz.iter()) {
                        for (b, &wij) in back.iter_mut().zip(w) {
                            *b += wij * dzi;
                        }
                    }
                }
                off += layer.size * cols;
            }
            if layer.recurrent.is_some() {
                let size = layer.size;
                if let Some(c) = ctx.get(l).filter(|c| !c.is_empty()) {
                    for (i, &dzi) in dz.iter().enumerate() {
                        let g = &mut out[off + i * size..off + (i + 1) * size];
                        for (gj, &s) in g.iter_mut().zip(c) {
                            *gj += dzi * s;
                        }
                    }
                }
                off += size * size;
            }
            for (g, &d) in out[off..off + layer.size].iter_mut().zip(dz.iter()) {
                *g += d;
            }
        }
    }

    /// Weighted loss and its exact gradient with contexts frozen at `tape`.
    pub fn loss_and_gradient(
        &self,
        inputs: &Matrix<T>,
        targets: &Matrix<T>,
        tape: &ContextTape<T>,
        weights: &[T],
        grad: &mut [T],
    ) -> Result<T> {
        self.check_batch(inputs, targets, tape, weights)?;
        if grad.len() != self.param_count() {
            return Err(NetworkError::ShapeMismatch("gradient buffer length".into()));
        }
        grad.iter_mut().for_each(|g| *g = T::zero());
        let n = T::from_usize(inputs.rows()).unwrap();
        let two_over_n = T::lit(2.0) / n;
        let mut acts = self.scratch();
        let mut dacts = self.scratch();
        let mut seed = vec![T::zero(); self.topology.output_size];
        let mut loss = T::zero();
        for (s, (x, t)) in inputs.iter_rows().zip(targets.iter_rows()).enumerate() {
            let ctx = self.tape_context(tape, s);
            self.forward_sample(x, ctx, &mut acts);
            let y = acts.last().unwrap();
            for k in 0..seed.len() {
                let e = y[k] - t[k];
                let w2 = weights[k] * weights[k];
                loss += w2 * e * e;
                seed[k] = two_over_n * w2 * e;
            }
            self.backprop_sample(x, ctx, &acts, &seed, &mut dacts, grad);
        }
        Ok(loss / n)
    }

    /// Weighted residuals and their Jacobian with contexts frozen at `tape`.
    pub fn linearize(&self, inputs: &Matrix<T>, targets: &Matrix<T>, tape: &ContextTape<T>, weights: &[T]) -> Result<Linearization<T>> {
        self.check_batch(inputs, targets, tape, weights)?;
        let m = self.topology.output_size;
        let p = self.param_count();
        let rows = inputs.rows() * m;
        let mut jac = Matrix::zeros(rows, p);
        let mut residuals = vec![T::zero(); rows];
        let mut acts = self.scratch();
        let mut dacts = self.scratch();
        let mut seed = vec![T::zero(); m];
        for (s, (x, t)) in inputs.iter_rows().zip(targets.iter_rows()).enumerate() {
            let ctx = self.tape_context(tape, s);
            self.forward_sample(x, ctx, &mut acts);
            for k in 0..m {
                let row = s * m + k;
                residuals[row] = weights[k] * (acts.last().unwrap()[k] - t[k]);
                seed.iter_mut().for_each(|v| *v = T::zero());
                seed[k] = weights[k];
                self.backprop_sample(x, ctx, &acts, &seed, &mut dacts, jac.row_mut(row));
            }
        }
        Ok(Linearization {
            jacobian: jac,
            residuals,
        })
    }
}

pub(crate) fn weighted_loss<T: Scalar>(y: &Matrix<T>, targets: &Matrix<T>, weights: &[T]) -> T {
    let mut loss = T::zero();
    for (yr, tr) in y.iter_rows().zip(targets.iter_rows()) {
        for k in 0..weights.len() {
            let e = yr[k] - tr[k];
            loss += weights[k] * weights[k] * e * e;
        }
    }
    loss / T::from_usize(y.rows()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::Network;

    fn topo(kind: TopologyKind) -> Topology {
        Topology::new(kind)
    }

    fn batch(n: usize, seed: u64) -> (Matrix<f64>, Matrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let t = Matrix::from_vec(n, 2, (0..2 * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (x, t)
    }

    #[test]
    fn parameter_counts() {
        let ff = LayeredNet::<f64>::zeros(&topo(TopologyKind::FeedForward)).unwrap();
        assert_eq!(ff.param_count(), (2 * 8 + 8) + (8 * 4 + 4) + (4 * 2 + 2));
        assert_eq!(ff.param_count(), 70);
        let cf = LayeredNet::<f64>::zeros(&topo(TopologyKind::CascadeForward)).unwrap();
        assert_eq!(cf.param_count(), 70 + 2 * 4 + (2 * 2 + 8 * 2));
        let el = LayeredNet::<f64>::zeros(&topo(TopologyKind::Elman)).unwrap();
        assert_eq!(el.param_count(), 70 + 8 * 8);
        let lr = LayeredNet::<f64>::zeros(&topo(TopologyKind::LayerRecurrent)).unwrap();
        assert_eq!(lr.param_count(), 70 + 8 * 8 + 4 * 4);
    }

    #[test]
    fn init_is_deterministic() {
        let a = Network::<f64>::init(&topo(TopologyKind::CascadeForward), 42).unwrap();
        let b = Network::<f64>::init(&topo(TopologyKind::CascadeForward), 42).unwrap();
        let c = Network::<f64>::init(&topo(TopologyKind::CascadeForward), 43).unwrap();
        assert_eq!(a.params().unwrap(), b.params().unwrap());
        assert_ne!(a.params().unwrap(), c.params().unwrap());
        assert!(a.params().unwrap().iter().all(|p| p.is_finite() && p.abs() <= 2.0));
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let net: Network<f64> = LayeredNet::zeros(&topo(TopologyKind::FeedForward)).unwrap().into();
        let (x, _) = batch(5, 1);
        let y = net.forward(&x, &mut net.new_context()).unwrap();
        assert!(y.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let mut net = Network::<f64>::init(&topo(TopologyKind::LayerRecurrent), 3).unwrap();
        let p: Vec<f64> = (0..net.param_count()).map(|i| i as f64 * 0.01).collect();
        net.set_params(&p).unwrap();
        assert_eq!(net.params().unwrap(), p);
        assert!(net.set_params(&p[1..]).is_err());
    }

    #[test]
    fn single_linear_neuron_gradient() {
        // One hidden tanh unit feeding a linear output; only the output
        // weight matters for y = w·a with a = tanh(atanh(1/2)) = 1/2 fixed.
        let t = Topology {
            kind: TopologyKind::FeedForward,
            input_size: 1,
            hidden_sizes: vec![1],
            output_size: 1,
        };
        let mut net = LayeredNet::<f64>::zeros(&t).unwrap();
        // hidden: w=0, b=atanh(0.5) → a = 0.5; output: w=2, b=0 → y = 1
        net.set_params(&[0.0, 0.5f64.atanh(), 2.0, 0.0]).unwrap();
        let x = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let target = Matrix::from_vec(1, 1, vec![0.0]).unwrap();
        let net: Network<f64> = net.into();
        let g = net.gradient(&x, &target, &mut net.new_context()).unwrap();
        // d(y²)/dw_out = 2·y·a = 2·1·0.5 = 1; d/db_out = 2y = 2
        assert!((g[2] - 1.0).abs() < 1e-15);
        assert!((g[3] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn gradient_vanishes_at_perfect_fit() {
        let net = Network::<f64>::init(&topo(TopologyKind::CascadeForward), 9).unwrap();
        let (x, _) = batch(10, 2);
        let y = net.predict(&x).unwrap();
        let g = net.gradient(&x, &y, &mut net.new_context()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn jacobian_matches_gradient() {
        for kind in [TopologyKind::FeedForward, TopologyKind::CascadeForward, TopologyKind::Elman, TopologyKind::LayerRecurrent] {
            let net = Network::<f64>::init(&topo(kind), 5).unwrap();
            let (x, t) = batch(7, 3);
            let g = net.gradient(&x, &t, &mut net.new_context()).unwrap();
            let lin = net.jacobian(&x, &t, &mut net.new_context()).unwrap();
            assert_eq!(lin.jacobian.rows(), 7 * 2);
            let jte = lin.jacobian.tr_matvec(&lin.residuals).unwrap();
            for (a, b) in jte.iter().zip(&g) {
                assert!((2.0 * a / 7.0 - b).abs() < 1e-10, "{kind}");
            }
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        for kind in [TopologyKind::FeedForward, TopologyKind::CascadeForward, TopologyKind::Elman, TopologyKind::LayerRecurrent] {
            let net = LayeredNet::<f64>::init(&topo(kind), 21).unwrap();
            let (x, t) = batch(10, 8);
            let tape = net.record_tape(&x, &mut net.new_context()).unwrap();
            let w = [1.0, 1.3];
            let mut grad = vec![0.0; net.param_count()];
            net.loss_and_gradient(&x, &t, &tape, &w, &mut grad).unwrap();
            let p0 = net.params();
            let h = f64::EPSILON.cbrt();
            let mut probe = net.clone();
            for i in 0..p0.len() {
                let mut p = p0.clone();
                p[i] = p0[i] + h;
                probe.set_params(&p).unwrap();
                let up = probe.loss_with_tape(&x, &t, &tape, &w).unwrap();
                p[i] = p0[i] - h;
                probe.set_params(&p).unwrap();
                let down = probe.loss_with_tape(&x, &t, &tape, &w).unwrap();
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs()).max(1e-3);
                assert!(rel < 1e-6, "{kind} param {i}: analytic {} vs fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn output_weight_jacobian_columns_are_hidden_activations() {
        let net = LayeredNet::<f64>::init(&topo(TopologyKind::FeedForward), 4).unwrap();
        let (x, t) = batch(3, 9);
        let lin = net.linearize(&x, &t, &net.record_tape(&x, &mut net.new_context()).unwrap(), &[1.0, 1.0]).unwrap();
        // output block starts after (2·8+8)+(8·4+4) = 60 parameters
        let mut acts = net.scratch();
        for s in 0..3 {
            net.forward_sample(x.row(s), &[], &mut acts);
            for j in 0..4 {
                assert!((lin.jacobian[(2 * s, 60 + j)] - acts[1][j]).abs() < 1e-15);
                assert_eq!(lin.jacobian[(2 * s, 64 + j)], 0.0);
            }
        }
    }

    #[test]
    fn cascade_without_skips_equals_feed_forward() {
        let cf_net = LayeredNet::<f64>::init(&topo(TopologyKind::CascadeForward), 11).unwrap();
        let mut ff = LayeredNet::<f64>::zeros(&topo(TopologyKind::FeedForward)).unwrap();
        let mut cf = cf_net.clone();
        for (fl, cl) in ff.layers_mut().iter_mut().zip(cf.layers_mut()) {
            fl.connections[0].weights = cl.connections[0].weights.clone();
            fl.bias = cl.bias.clone();
            for skip in cl.connections.iter_mut().skip(1) {
                skip.weights.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
            }
        }
        let (x, _) = batch(6, 4);
        assert_eq!(ff.predict(&x).unwrap(), cf.predict(&x).unwrap());
        assert_ne!(cf_net.predict(&x).unwrap(), ff.predict(&x).unwrap());
    }

    #[test]
    fn recurrent_without_feedback_equals_feed_forward() {
        for kind in [TopologyKind::Elman, TopologyKind::LayerRecurrent] {
            let mut rec = LayeredNet::<f64>::init(&topo(kind), 12).unwrap();
            let mut ff = LayeredNet::<f64>::zeros(&topo(TopologyKind::FeedForward)).unwrap();
            for (fl, rl) in ff.layers_mut().iter_mut().zip(rec.layers_mut()) {
                fl.connections[0].weights = rl.connections[0].weights.clone();
                fl.bias = rl.bias.clone();
                if let Some(r) = &mut rl.recurrent {
                    r.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
                }
            }
            let (x, _) = batch(6, 5);
            let mut ctx = rec.new_context();
            assert_eq!(rec.forward(&x, &mut ctx).unwrap(), ff.predict(&x).unwrap());
        }
    }

    #[test]
    fn context_carries_between_samples() {
        let net = LayeredNet::<f64>::init(&topo(TopologyKind::Elman), 13).unwrap();
        let (x, _) = batch(4, 6);
        let mut ctx = net.new_context();
        let seq = net.forward(&x, &mut ctx).unwrap();
        let stat = net.predict(&x).unwrap();
        assert_eq!(seq.row(0), stat.row(0));
        assert_ne!(seq.row(1), stat.row(1));
        assert!(ctx.layers[0].iter().any(|&v| v != 0.0));
        ctx.reset();
        assert!(ctx.layers[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let net = LayeredNet::<f64>::init(&topo(TopologyKind::FeedForward), 1).unwrap();
        let bad = Matrix::zeros(3, 3);
        assert!(matches!(net.predict(&bad), Err(NetworkError::ShapeMismatch(_))));
    }

    #[test]
    fn single_precision_forward_and_gradient() {
        let net = Network::<f32>::init(&topo(TopologyKind::FeedForward), 7).unwrap();
        let (x, t) = batch(5, 7);
        let (x, t) = (x.map(|v| v as f32), t.map(|v| v as f32));
        let g32 = net.gradient(&x, &t, &mut net.new_context()).unwrap();
        let net64: Network<f64> = {
            let mut n = LayeredNet::<f64>::zeros(&topo(TopologyKind::FeedForward)).unwrap();
            n.set_params(&net.params().unwrap().iter().map(|&v| v as f64).collect::<Vec<_>>()).unwrap();
            n.into()
        };
        let g64 = net64
            .gradient(&x.map(|v| v as f64), &t.map(|v| v as f64), &mut net64.new_context())
            .unwrap();
        for (a, b) in g32.iter().zip(&g64) {
            assert!((*a as f64 - b).abs() < 1e-4);
        }
    }
}
