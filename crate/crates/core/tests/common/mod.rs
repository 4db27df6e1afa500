//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use deeprec::model::Parameters;
use deeprec::{masked_mse, parse_architecture, Activation, Autoencoder, Optimizer, Result, SgdMomentum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Ratings in 1..=5 at random positions (each row keeps at least one), and the matching 0/1 mask.
pub fn sparse_batch(rng: &mut impl Rng, rows: usize, cols: usize, density: f64) -> (Array2<f64>, Array2<f64>) {
    let mut ratings = Array2::zeros((rows, cols));
    for i in 0..rows {
        let forced = rng.gen_range(0..cols);
        for j in 0..cols {
            if j == forced || rng.gen_bool(density) {
                ratings[[i, j]] = rng.gen_range(1..=5) as f64;
            }
        }
    }
    let mask = ratings.mapv(|v| if v != 0.0 { 1.0 } else { 0.0 });
    (ratings, mask)
}

/// Double loop over every entry; nothing shared with the library.
pub fn naive_mmse(pred: &Array2<f64>, target: &Array2<f64>, mask: &Array2<f64>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..pred.nrows() {
        for j in 0..pred.ncols() {
            let d = target[[i, j]] - pred[[i, j]];
            num += mask[[i, j]] * d * d;
            den += mask[[i, j]];
        }
    }
    num / den
}

pub fn naive_mmse_gradient(pred: &Array2<f64>, target: &Array2<f64>, mask: &Array2<f64>) -> Array2<f64> {
    let den: f64 = mask.iter().sum();
    let mut g = Array2::zeros(pred.raw_dim());
    for i in 0..pred.nrows() {
        for j in 0..pred.ncols() {
            g[[i, j]] = 2.0 * mask[[i, j]] * (pred[[i, j]] - target[[i, j]]) / den;
        }
    }
    g
}

/// Every scalar parameter of a set, flattened in storage order.
pub fn flatten(p: &Parameters<f64>) -> Vec<f64> {
    p.weights
        .iter()
        .flat_map(|w| w.iter().copied())
        .chain(p.biases.iter().flat_map(|b| b.iter().copied()))
        .collect()
}

fn param_mut(p: &mut Parameters<f64>, mut k: usize) -> &mut f64 {
    for w in &mut p.weights {
        if k < w.len() {
            return w.iter_mut().nth(k).unwrap();
        }
        k -= w.len();
    }
    for b in &mut p.biases {
        if k < b.len() {
            return b.iter_mut().nth(k).unwrap();
        }
        k -= b.len();
    }
    panic!("parameter index out of range")
}

pub struct GradCheck {
    pub max_rel_err: f64,
    pub worst_index: usize,
    /// Analytic and numeric value at the worst parameter.
    pub worst_pair: (f64, f64),
    pub n_params: usize,
}

/// Gradients below this are compared absolutely: with `h = 1e-5` the central
/// difference of an O(10) loss carries ~1e-10 of roundoff.
pub const GRAD_FLOOR: f64 = 1e-5;

/// Compares analytic gradients of the masked loss with central differences
/// for every parameter. The coding-layer dropout mask is sampled once and
/// replayed for every loss evaluation.
pub fn gradient_check(arch: &str, activation: Activation, tied: bool, n: usize, seed: u64) -> GradCheck {
    let spec = parse_architecture(arch)
        .unwrap()
        .with_activation(activation)
        .with_tied(tied);
    let mut model = Autoencoder::<f64>::new(&spec, n, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    // Zero biases put dead rectifier rows exactly on a kink; move off it.
    for b in &mut model.params_mut().biases {
        b.mapv_inplace(|_| rng.gen_range(-0.1..0.1));
    }
    let (x, mask) = sparse_batch(&mut rng, 6, n, 0.4);
    let drop = model.sample_dropout_mask(x.nrows(), &mut rng);

    let loss = |m: &Autoencoder<f64>| {
        let (y, _) = m.forward_with_mask(x.view(), drop.clone()).unwrap();
        masked_mse(y.view(), x.view(), mask.view()).unwrap()
    };
    let (y, tape) = model.forward_with_mask(x.view(), drop.clone()).unwrap();
    let g = naive_mmse_gradient(&y, &x, &mask);
    let analytic = flatten(&model.backward(&tape, g.view()).unwrap());

    let h = 1e-5;
    let mut worst = (0.0, 0, (0.0, 0.0));
    for (k, &a) in analytic.iter().enumerate() {
        let original = *param_mut(model.params_mut(), k);
        *param_mut(model.params_mut(), k) = original + h;
        let up = loss(&model);
        *param_mut(model.params_mut(), k) = original - h;
        let down = loss(&model);
        *param_mut(model.params_mut(), k) = original;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
        if rel > worst.0 {
            worst = (rel, k, (a, numeric));
        }
    }
    GradCheck {
        max_rel_err: worst.0,
        worst_index: worst.1,
        worst_pair: worst.2,
        n_params: analytic.len(),
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order.
pub fn jacobi_eigenvalues(a: &Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut m = a.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[[i, j]] * m[[i, j]])
            .sum();
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * m[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[[i, i]]).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Mean squared error of the best rank-`k` reconstruction of `x`
/// (columns centered first), via the eigenvalues of `xᵀx`.
pub fn truncated_svd_mse(x: &Array2<f64>, k: usize) -> f64 {
    let (rows, cols) = x.dim();
    let mut centered = x.clone();
    for j in 0..cols {
        let mean = (0..rows).map(|i| x[[i, j]]).sum::<f64>() / rows as f64;
        for i in 0..rows {
            centered[[i, j]] -= mean;
        }
    }
    let mut gram = Array2::zeros((cols, cols));
    for a in 0..cols {
        for b in 0..cols {
            gram[[a, b]] = (0..rows).map(|i| centered[[i, a]] * centered[[i, b]]).sum();
        }
    }
    let ev = jacobi_eigenvalues(&gram);
    ev[k..].iter().map(|v| v.max(0.0)).sum::<f64>() / (rows * cols) as f64
}

/// Forwards to plain SGD momentum and records every call.
pub struct Recording {
    pub inner: SgdMomentum<f64>,
    pub before: Vec<Parameters<f64>>,
    pub grads: Vec<Parameters<f64>>,
}

impl Recording {
    pub fn new(model: &Autoencoder<f64>) -> Self {
        Recording {
            inner: SgdMomentum::new(model.params(), 0.01, 0.9).unwrap(),
            before: Vec::new(),
            grads: Vec::new(),
        }
    }
}

impl Optimizer<f64> for Recording {
    fn step(&mut self, params: &mut Parameters<f64>, grads: &Parameters<f64>) -> Result<()> {
        self.before.push(params.clone());
        self.grads.push(grads.clone());
        self.inner.step(params, grads)
    }
}
