//! The autoencoder: a stack of fully connected layers split into an encoder
//! and a decoder, with optional weight tying and dropout on the coding layer.
//!
//! Inputs are row-major batches `[batch x n_items]`. A layer computes
//! `f(x W^T + b)` with `W` stored `[out x in]`. A tied decoder layer reads the
//! mirror encoder weight through a transposed view; there is one storage and
//! gradients from both uses accumulate into it.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activation::Activation;
use crate::arch::{ArchitectureSpec, Layout};
use crate::error::{Error, Result};
use crate::init::init_xavier_with;
use crate::real::Real;

/// Columns of the first layer input are gathered when fewer than this
/// fraction of items appear in a batch.
const SPARSE_GATHER_DENSITY: f64 = 0.25;

/// Trainable tensors. Gradient sets and optimizer velocities share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    pub weights: Vec<Array2<T>>,
    pub biases: Vec<Array1<T>>,
}

pub type GradientSet<T> = Parameters<T>;

impl<T: Real> Parameters<T> {
    pub fn zeros_like(other: &Parameters<T>) -> Self {
        Parameters {
            weights: other.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: other.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn same_shape(&self, other: &Parameters<T>) -> bool {
        self.weights.len() == other.weights.len()
            && self.biases.len() == other.biases.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.shape() == b.shape())
            && self
                .biases
                .iter()
                .zip(&other.biases)
                .all(|(a, b)| a.shape() == b.shape())
    }

    pub fn max_abs(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.iter())
            .chain(self.biases.iter().flat_map(|b| b.iter()))
            .fold(0.0, |m, v| m.max(v.as_f64().abs()))
    }
}

/// How a layer reads its weight storage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerSlot {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Index into [`Parameters::weights`].
    pub weight: usize,
    /// The stored matrix is `[in x out]` and is read transposed (tied decoder layer).
    pub transposed: bool,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Samples a fresh dropout mask on the coding layer.
    Train,
    /// No dropout; deterministic.
    Eval,
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTape<T> {
    /// Input of every layer. With sparse gathering, entry 0 only holds the
    /// columns listed in `active_cols`.
    inputs: Vec<Array2<T>>,
    pre_activations: Vec<Array2<T>>,
    dropout_mask: Option<Array2<T>>,
    active_cols: Option<Vec<usize>>,
}

impl<T> ForwardTape<T> {
    pub fn dropout_mask(&self) -> Option<&Array2<T>> {
        self.dropout_mask.as_ref()
    }

    pub fn n_layers(&self) -> usize {
        self.pre_activations.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder<T> {
    arch: ArchitectureSpec,
    n_items: usize,
    n_encoder: usize,
    layers: Vec<LayerSlot>,
    params: Parameters<T>,
}

impl<T: Real> Autoencoder<T> {
    /// Builds a model with Glorot-uniform weights and zero biases.
    pub fn new(arch: &ArchitectureSpec, n_items: usize, seed: u64) -> Result<Self> {
        let (n_encoder, layers) = plan_layers(arch, n_items)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        for slot in layers.iter().filter(|s| !s.transposed) {
            weights.push(init_xavier_with((slot.out_dim, slot.in_dim), &mut rng)?);
        }
        let biases = layers.iter().map(|s| Array1::zeros(s.out_dim)).collect();
        Ok(Autoencoder {
            arch: arch.clone(),
            n_items,
            n_encoder,
            layers,
            params: Parameters { weights, biases },
        })
    }

    /// Wraps existing parameters, checking them against the architecture.
    pub fn from_parameters(arch: &ArchitectureSpec, n_items: usize, params: Parameters<T>) -> Result<Self> {
        let (n_encoder, layers) = plan_layers(arch, n_items)?;
        let expected = expected_shapes(&layers);
        if params.weights.len() != expected.0.len() || params.biases.len() != expected.1.len() {
            return Err(Error::shape(
                "parameter tensor count",
                &[expected.0.len(), expected.1.len()],
                &[params.weights.len(), params.biases.len()],
            ));
        }
        for (w, &(r, c)) in params.weights.iter().zip(&expected.0) {
            if w.dim() != (r, c) {
                return Err(Error::shape("weight", &[r, c], w.shape()));
            }
        }
        for (b, &len) in params.biases.iter().zip(&expected.1) {
            if b.len() != len {
                return Err(Error::shape("bias", &[len], b.shape()));
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Autoencoder {
            arch: arch.clone(),
            n_items,
            n_encoder,
            layers,
            params,
        })
    }

    pub fn arch(&self) -> &ArchitectureSpec {
        &self.arch
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn tied(&self) -> bool {
        self.arch.tied
    }

    pub fn layers(&self) -> &[LayerSlot] {
        &self.layers
    }

    pub fn n_encoder_layers(&self) -> usize {
        self.n_encoder
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    pub fn into_parameters(self) -> Parameters<T> {
        self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Effective `[out x in]` weight of layer `l` (a transposed view for tied decoder layers).
    pub fn layer_weight(&self, l: usize) -> ArrayView2<'_, T> {
        let slot = &self.layers[l];
        let w = self.params.weights[slot.weight].view();
        if slot.transposed {
            w.reversed_axes()
        } else {
            w
        }
    }

    /// The untied model computing the same function: decoder weights are
    /// materialized as explicit transposes.
    pub fn to_untied(&self) -> Result<Autoencoder<T>> {
        if !self.arch.tied {
            return Ok(self.clone());
        }
        let layout = self.arch.layout(self.n_items)?;
        let mut arch = self.arch.clone().with_tied(false);
        arch.encoder_dims = layout.encoder[1..].to_vec();
        arch.decoder_dims = layout.decoder[1..layout.decoder.len() - 1].to_vec();
        if !arch.decoder_dims.is_empty() {
            arch.dropout = Some(self.arch.drop_prob());
        }
        let weights = (0..self.layers.len())
            .map(|l| self.layer_weight(l).to_owned())
            .collect();
        Autoencoder::from_parameters(
            &arch,
            self.n_items,
            Parameters {
                weights,
                biases: self.params.biases.clone(),
            },
        )
    }

    fn check_input(&self, input: &ArrayView2<'_, T>) -> Result<()> {
        if input.ncols() != self.n_items {
            return Err(Error::shape(
                "model input",
                &[input.nrows(), self.n_items],
                input.shape(),
            ));
        }
        Ok(())
    }

    fn coding_layer(&self) -> usize {
        self.n_encoder - 1
    }

    /// Samples an inverted-dropout mask for the coding layer: entries are 0
    /// with probability `p` and `1 / (1 - p)` otherwise.
    pub fn sample_dropout_mask<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Option<Array2<T>> {
        let p = self.arch.drop_prob();
        if p <= 0.0 {
            return None;
        }
        let keep = T::of(1.0 / (1.0 - p));
        let width = self.layers[self.coding_layer()].out_dim;
        Some(Array2::from_shape_simple_fn((rows, width), || {
            if rng.gen::<f64>() < p {
                T::zero()
            } else {
                keep
            }
        }))
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: ArrayView2<'_, T>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Array2<T>, ForwardTape<T>)> {
        let mask = match mode {
            Mode::Train => self.sample_dropout_mask(input.nrows(), rng),
            Mode::Eval => None,
        };
        self.forward_with_mask(input, mask)
    }

    /// Forward pass with a caller-provided coding-layer dropout mask (`None` = no dropout).
    pub fn forward_with_mask(
        &self,
        input: ArrayView2<'_, T>,
        mask: Option<Array2<T>>,
    ) -> Result<(Array2<T>, ForwardTape<T>)> {
        self.check_input(&input)?;
        if let Some(m) = &mask {
            let expected = [input.nrows(), self.layers[self.coding_layer()].out_dim];
            if m.shape() != expected {
                return Err(Error::shape("dropout mask", &expected, m.shape()));
            }
        }
        let n_layers = self.layers.len();
        let (z0, first_input, active_cols) = self.first_layer(input);
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre_activations = Vec::with_capacity(n_layers);
        inputs.push(first_input);

        let mut z = z0;
        let mut output = None;
        for l in 0..n_layers {
            if l > 0 {
                z = self.affine(l, inputs[l].view());
            }
            let mut a = z.clone();
            self.layers[l].activation.apply_inplace(a.view_mut());
            pre_activations.push(std::mem::replace(&mut z, Array2::zeros((0, 0))));
            if l == self.coding_layer() {
                if let Some(m) = &mask {
                    a *= m;
                }
            }
            if l + 1 == n_layers {
                output = Some(a);
            } else {
                inputs.push(a);
            }
        }
        let tape = ForwardTape {
            inputs,
            pre_activations,
            dropout_mask: mask,
            active_cols,
        };
        Ok((output.expect("at least two layers"), tape))
    }

    /// Inference: no dropout, no tape.
    pub fn predict(&self, input: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&input)?;
        let (mut a, _, _) = self.first_layer(input);
        self.layers[0].activation.apply_inplace(a.view_mut());
        for l in 1..self.layers.len() {
            a = self.affine(l, a.view());
            self.layers[l].activation.apply_inplace(a.view_mut());
        }
        Ok(a)
    }

    /// Encoder output (the coding layer) in inference mode.
    pub fn encode(&self, input: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(&input)?;
        let (mut a, _, _) = self.first_layer(input);
        self.layers[0].activation.apply_inplace(a.view_mut());
        for l in 1..self.n_encoder {
            a = self.affine(l, a.view());
            self.layers[l].activation.apply_inplace(a.view_mut());
        }
        Ok(a)
    }

    /// `x W^T + b` for layer `l`, without the activation.
    fn affine(&self, l: usize, x: ArrayView2<'_, T>) -> Array2<T> {
        let mut z = x.dot(&self.layer_weight(l).t());
        z += &self.params.biases[l];
        z
    }

    /// First layer pre-activation. Rating rows are mostly zero, so when few
    /// item columns are touched by the batch only those weight columns take
    /// part in the product.
    fn first_layer(&self, input: ArrayView2<'_, T>) -> (Array2<T>, Array2<T>, Option<Vec<usize>>) {
        let cols: Vec<usize> = input
            .axis_iter(Axis(1))
            .enumerate()
            .filter(|(_, c)| c.iter().any(|v| !v.is_zero()))
            .map(|(j, _)| j)
            .collect();
        if (cols.len() as f64) < SPARSE_GATHER_DENSITY * self.n_items as f64 {
            let x = input.select(Axis(1), &cols);
            let w = self.layer_weight(0).select(Axis(1), &cols);
            let mut z = x.dot(&w.t());
            z += &self.params.biases[0];
            (z, x, Some(cols))
        } else {
            (self.affine(0, input), input.to_owned(), None)
        }
    }

    /// Gradients of every stored parameter given `d loss / d output`.
    ///
    /// The dropout mask recorded in the tape is replayed; tied weights receive
    /// the sum of their encoder-side and decoder-side contributions.
    pub fn backward(&self, tape: &ForwardTape<T>, output_grad: ArrayView2<'_, T>) -> Result<GradientSet<T>> {
        let n_layers = self.layers.len();
        if tape.pre_activations.len() != n_layers || tape.inputs.len() != n_layers {
            return Err(Error::shape(
                "forward tape layers",
                &[n_layers],
                &[tape.pre_activations.len()],
            ));
        }
        for (l, (pre, slot)) in tape.pre_activations.iter().zip(&self.layers).enumerate() {
            let expected_in = if l == 0 {
                tape.active_cols.as_ref().map_or(slot.in_dim, Vec::len)
            } else {
                slot.in_dim
            };
            if pre.ncols() != slot.out_dim || tape.inputs[l].ncols() != expected_in {
                return Err(Error::shape("forward tape", &[slot.out_dim], &[pre.ncols()]));
            }
        }
        let rows = tape.pre_activations[n_layers - 1].nrows();
        if output_grad.dim() != (rows, self.n_items) {
            return Err(Error::shape(
                "output gradient",
                &[rows, self.n_items],
                output_grad.shape(),
            ));
        }

        let mut grads = Parameters::zeros_like(&self.params);
        let one = T::one();
        let mut delta = output_grad.to_owned();
        for l in (0..n_layers).rev() {
            let slot = self.layers[l];
            if l == self.coding_layer() {
                if let Some(m) = &tape.dropout_mask {
                    delta *= m;
                }
            }
            slot.activation
                .backprop_inplace(delta.view_mut(), tape.pre_activations[l].view());
            grads.biases[l] += &delta.sum_axis(Axis(0));

            let x = tape.inputs[l].view();
            let gw = &mut grads.weights[slot.weight];
            match (&tape.active_cols, l) {
                (Some(cols), 0) => {
                    let partial = delta.t().dot(&x);
                    for (k, &j) in cols.iter().enumerate() {
                        let mut dst = gw.column_mut(j);
                        dst += &partial.column(k);
                    }
                }
                _ if slot.transposed => general_mat_mul(one, &x.t(), &delta, one, gw),
                _ => general_mat_mul(one, &delta.t(), &x, one, gw),
            }

            if l > 0 {
                delta = delta.dot(&self.layer_weight(l));
            }
        }
        Ok(grads)
    }
}

type ExpectedShapes = (Vec<(usize, usize)>, Vec<usize>);

fn expected_shapes(layers: &[LayerSlot]) -> ExpectedShapes {
    let weights = layers
        .iter()
        .filter(|s| !s.transposed)
        .map(|s| (s.out_dim, s.in_dim))
        .collect();
    let biases = layers.iter().map(|s| s.out_dim).collect();
    (weights, biases)
}

fn plan_layers(arch: &ArchitectureSpec, n_items: usize) -> Result<(usize, Vec<LayerSlot>)> {
    let layout: Layout = arch.layout(n_items)?;
    let shapes = layout.layer_shapes();
    let k = layout.n_encoder_layers();
    let last = shapes.len() - 1;
    let layers = shapes
        .iter()
        .enumerate()
        .map(|(l, &(in_dim, out_dim))| {
            let activation = if l == last {
                arch.activation.output_activation()
            } else {
                arch.activation
            };
            let (weight, transposed) = match (arch.tied, l >= k) {
                (true, true) => (2 * k - 1 - l, true),
                (true, false) => (l, false),
                (false, _) => (l, false),
            };
            LayerSlot {
                in_dim,
                out_dim,
                weight,
                transposed,
                activation,
            }
        })
        .collect();
    Ok((k, layers))
}

/// `Zip`-based elementwise equality within an absolute tolerance.
pub fn max_abs_diff<T: Real>(a: &Array2<T>, b: &Array2<T>) -> f64 {
    let mut m = 0.0f64;
    Zip::from(a)
        .and(b)
        .for_each(|x, y| m = m.max((x.as_f64() - y.as_f64()).abs()));
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::parse_architecture;
    use ndarray::array;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(9)
    }

    fn random_input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || {
            if r.gen::<f64>() < 0.4 {
                r.gen_range(1..=5) as f64
            } else {
                0.0
            }
        })
    }

    #[test]
    fn zero_model_outputs_zero() {
        let arch = parse_architecture("n,4,n").unwrap().with_activation(Activation::Linear);
        let mut m = Autoencoder::<f64>::new(&arch, 6, 1).unwrap();
        for w in &mut m.params_mut().weights {
            w.fill(0.0);
        }
        let x = random_input(3, 6, 2);
        let (y, _) = m.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_model_reproduces_input() {
        let arch = parse_architecture("n,5,n").unwrap().with_activation(Activation::Linear);
        let params = Parameters {
            weights: vec![Array2::eye(5), Array2::eye(5)],
            biases: vec![Array1::zeros(5), Array1::zeros(5)],
        };
        let m = Autoencoder::from_parameters(&arch, 5, params).unwrap();
        let x = random_input(4, 5, 3);
        let (y, _) = m.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        assert_eq!(y, x);
        assert_eq!(m.predict(x.view()).unwrap(), x);
    }

    #[test]
    fn tied_forward_equals_explicit_transpose_twin() {
        let arch = parse_architecture("n,6,3,dp(0.3),6,n").unwrap().with_tied(true);
        let tied = Autoencoder::<f64>::new(&arch, 9, 11).unwrap();
        let untied = tied.to_untied().unwrap();
        assert!(!untied.tied());
        assert_eq!(untied.params().weights[3], tied.params().weights[0].t());
        let x = random_input(5, 9, 4);
        let a = tied.predict(x.view()).unwrap();
        let b = untied.predict(x.view()).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
        // same dropout mask replayed in train mode
        let mask = tied.sample_dropout_mask(5, &mut rng());
        let (a, _) = tied.forward_with_mask(x.view(), mask.clone()).unwrap();
        let (b, _) = untied.forward_with_mask(x.view(), mask).unwrap();
        assert!(max_abs_diff(&a, &b) < 1e-12);
    }

    #[test]
    fn tied_model_has_fewer_parameters() {
        let arch = parse_architecture("n,32,16,dp(0.2),32,n").unwrap();
        let untied = Autoencoder::<f32>::new(&arch, 100, 0).unwrap();
        let tied = Autoencoder::<f32>::new(&arch.clone().with_tied(true), 100, 0).unwrap();
        assert!(tied.parameter_count() < untied.parameter_count());
        assert_eq!(
            tied.parameter_count(),
            arch.clone().with_tied(true).parameter_count(100).unwrap()
        );
        assert_eq!(untied.parameter_count(), arch.parameter_count(100).unwrap());
    }

    #[test]
    fn eval_forward_is_deterministic_and_matches_predict() {
        let arch = parse_architecture("n,8,dp(0.5),8,n").unwrap();
        let m = Autoencoder::<f64>::new(&arch, 12, 5).unwrap();
        let x = random_input(6, 12, 6);
        let (a, tape) = m.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        let (b, _) = m
            .forward(x.view(), Mode::Eval, &mut ChaCha8Rng::seed_from_u64(1234))
            .unwrap();
        assert_eq!(a, b);
        assert!(tape.dropout_mask().is_none());
        assert!(max_abs_diff(&a, &m.predict(x.view()).unwrap()) < 1e-14);
    }

    #[test]
    fn sparse_gather_matches_dense_product() {
        // one active column out of 40 forces the gather path
        let arch = parse_architecture("n,7,n").unwrap();
        let m = Autoencoder::<f64>::new(&arch, 40, 2).unwrap();
        let mut x = Array2::<f64>::zeros((3, 40));
        x[[0, 5]] = 4.0;
        x[[2, 5]] = 1.0;
        x[[1, 17]] = 2.0;
        let (y, tape) = m.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        assert_eq!(tape.active_cols.as_deref(), Some(&[5usize, 17][..]));
        let mut z = x.dot(&m.params().weights[0].t()) + &m.params().biases[0];
        z.mapv_inplace(|v| Activation::Selu.apply(v));
        let mut out = z.dot(&m.params().weights[1].t()) + &m.params().biases[1];
        out.mapv_inplace(|v| Activation::Selu.apply(v));
        assert!(max_abs_diff(&y, &out) < 1e-12);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let arch = parse_architecture("n,8,dp(0.5),8,n").unwrap();
        let m = Autoencoder::<f64>::new(&arch, 12, 5).unwrap();
        let x = random_input(4, 12, 7);
        let (y, tape) = m.forward(x.view(), Mode::Train, &mut rng()).unwrap();
        let g = m.backward(&tape, Array2::zeros(y.raw_dim()).view()).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn shape_errors() {
        let arch = parse_architecture("n,4,n").unwrap();
        let m = Autoencoder::<f64>::new(&arch, 6, 1).unwrap();
        let bad = Array2::<f64>::zeros((2, 5));
        assert!(matches!(
            m.forward(bad.view(), Mode::Eval, &mut rng()),
            Err(Error::Shape { .. })
        ));
        let x = Array2::<f64>::ones((2, 6));
        let (_, tape) = m.forward(x.view(), Mode::Eval, &mut rng()).unwrap();
        assert!(m.backward(&tape, Array2::zeros((3, 6)).view()).is_err());
        let other = Autoencoder::<f64>::new(&parse_architecture("n,4,4,n").unwrap(), 6, 1).unwrap();
        assert!(other.backward(&tape, Array2::zeros((2, 6)).view()).is_err());
    }

    #[test]
    fn from_parameters_validates() {
        let arch = parse_architecture("n,2,n").unwrap();
        let ok = Parameters {
            weights: vec![
                array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
                array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
            ],
            biases: vec![Array1::zeros(2), Array1::zeros(3)],
        };
        assert!(Autoencoder::from_parameters(&arch, 3, ok.clone()).is_ok());
        let mut wrong = ok.clone();
        wrong.weights[1] = Array2::zeros((2, 3));
        assert!(Autoencoder::from_parameters(&arch, 3, wrong).is_err());
        let mut nan = ok;
        nan.biases[0][1] = f64::NAN;
        assert!(matches!(
            Autoencoder::from_parameters(&arch, 3, nan),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn inverted_dropout_preserves_coding_layer_expectation() {
        let arch = parse_architecture("n,6,dp(0.5),6,n").unwrap();
        let m = Autoencoder::<f64>::new(&arch, 10, 3).unwrap();
        let x = random_input(1, 10, 8);
        let code = m.encode(x.view()).unwrap();
        let mut r = rng();
        let trials = 40_000;
        let mut acc = Array2::<f64>::zeros(code.raw_dim());
        for _ in 0..trials {
            let mask = m.sample_dropout_mask(1, &mut r).unwrap();
            acc += &(&code * &mask);
        }
        acc /= trials as f64;
        let scale = code.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        // mask std is 1 at p = 0.5, so the standard error is 0.5% of |c|
        let rel = (&acc - &code).iter().map(|d| d.abs()).sum::<f64>() / (code.len() as f64 * scale);
        assert!(rel < 0.01, "relative deviation {rel}");
    }
}
