use crate::element::Element;
use crate::error::{Error, Result};
use crate::graphs::{Network, NetworkGradients};

/// Classical momentum: `v <- momentum * v - lr * g`, then `p <- p + v`.
pub fn sgd_momentum_step<T: Element>(
    params: &mut [T],
    grads: &[T],
    velocity: &mut [T],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::Shape(format!(
            "parameter buffer of {} values with {} gradients and {} velocities",
            params.len(),
            grads.len(),
            velocity.len()
        )));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let nv = momentum * v.as_f64() - lr * g.as_f64();
        *v = T::of_f64(nv);
        *p = T::of_f64(p.as_f64() + nv);
    }
    Ok(())
}

/// Velocity buffers for every trainable parameter of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Momentum<T = f32> {
    pub velocity: Vec<Vec<T>>,
}

impl<T: Element> Momentum<T> {
    pub fn zeros(net: &Network<T>) -> Self {
        Momentum {
            velocity: net.param_lengths().into_iter().map(|n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn step(&mut self, net: &mut Network<T>, grads: &NetworkGradients<T>, lr: f64, momentum: f64) -> Result<()> {
        let g = grads.slices();
        let mut p = net.param_slices_mut();
        if g.len() != p.len() || self.velocity.len() != p.len() {
            return Err(Error::State(format!(
                "{} parameter buffers, {} gradient buffers, {} velocity buffers",
                p.len(),
                g.len(),
                self.velocity.len()
            )));
        }
        for ((p, g), v) in p.iter_mut().zip(g).zip(&mut self.velocity) {
            sgd_momentum_step(p, g, v, lr, momentum)?;
        }
        Ok(())
    }
}
