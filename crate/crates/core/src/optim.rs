use crate::error::{Error, Result};
use crate::model::{GradientSet, Parameters};
use crate::real::Real;

/// Applies a gradient set to model parameters.
pub trait Optimizer<T: Real> {
    fn step(&mut self, params: &mut Parameters<T>, grads: &GradientSet<T>) -> Result<()>;
}

/// Classical momentum: `v <- mu v - lr g; p <- p + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct SgdMomentum<T> {
    pub learning_rate: f64,
    pub momentum: f64,
    velocity: Parameters<T>,
}

impl<T: Real> SgdMomentum<T> {
    /// Zero velocity shaped like `params`.
    pub fn new(params: &Parameters<T>, learning_rate: f64, momentum: f64) -> Result<Self> {
        Self::with_velocity(Parameters::zeros_like(params), learning_rate, momentum)
    }

    pub fn with_velocity(velocity: Parameters<T>, learning_rate: f64, momentum: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum {momentum} outside [0, 1)")));
        }
        Ok(SgdMomentum {
            learning_rate,
            momentum,
            velocity,
        })
    }

    pub fn velocity(&self) -> &Parameters<T> {
        &self.velocity
    }

    pub fn into_velocity(self) -> Parameters<T> {
        self.velocity
    }
}

fn update<T: Real>(p: &mut [T], v: &mut [T], g: &[T], lr: T, mu: T) {
    for ((p, v), &g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = mu * *v - lr * g;
        *p += *v;
    }
}

impl<T: Real> Optimizer<T> for SgdMomentum<T> {
    fn step(&mut self, params: &mut Parameters<T>, grads: &GradientSet<T>) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.velocity) {
            return Err(Error::shape(
                "optimizer tensors",
                &[params.weights.len(), params.biases.len()],
                &[grads.weights.len(), grads.biases.len()],
            ));
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite("gradient"));
        }
        let lr = T::of(self.learning_rate);
        let mu = T::of(self.momentum);
        let tensors = params
            .weights
            .iter_mut()
            .map(|w| w.as_slice_mut())
            .zip(self.velocity.weights.iter_mut().map(|v| v.as_slice_mut()))
            .zip(grads.weights.iter().map(|g| g.as_slice()))
            .chain(
                params
                    .biases
                    .iter_mut()
                    .map(|b| b.as_slice_mut())
                    .zip(self.velocity.biases.iter_mut().map(|v| v.as_slice_mut()))
                    .zip(grads.biases.iter().map(|g| g.as_slice())),
            );
        for ((p, v), g) in tensors {
            match (p, v, g) {
                (Some(p), Some(v), Some(g)) => update(p, v, g, lr, mu),
                _ => return Err(Error::InvalidArgument("parameter tensors must be contiguous".into())),
            }
        }
        Ok(())
    }
}
