//! Gradient-descent training runs shared by the experiments.

use serde::{Deserialize, Serialize};
use splinelens_core::geometry::feature_matrix;
use splinelens_core::net::{gradient, loss_and_gradient, mse, train_gd, TrainConfig};
use splinelens_core::{Dataset, Error, NetParams, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Gd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub const ADAM: Optimizer = Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub optimizer: Optimizer,
    pub lr: f64,
    pub max_epochs: usize,
    /// Stop once the gradient norm falls below this.
    pub stop_grad_norm: f64,
    /// Stop once the training MSE falls below this.
    pub stop_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub net: NetParams,
    pub epochs: usize,
    pub train_mse: f64,
    pub grad_norm: f64,
}

/// Steps between MSE checks.
const CHUNK: usize = 2000;

/// Full-batch training until an early-stop condition or the epoch budget.
pub fn fit(net: &NetParams, data: &Dataset, opts: &FitOptions) -> Result<FitOutcome> {
    match opts.optimizer {
        Optimizer::Gd => fit_gd(net, data, opts),
        Optimizer::Adam { beta1, beta2, eps } => fit_adam(net, data, opts, beta1, beta2, eps),
    }
}

fn fit_gd(net: &NetParams, data: &Dataset, opts: &FitOptions) -> Result<FitOutcome> {
    let mut cur = net.clone();
    let mut epochs = 0;
    loop {
        let train_mse = mse(&cur, data);
        let grad_norm = gradient(&cur, data).norm();
        let done = epochs >= opts.max_epochs || train_mse < opts.stop_mse || grad_norm < opts.stop_grad_norm;
        if done {
            return Ok(FitOutcome { net: cur, epochs, train_mse, grad_norm });
        }
        let chunk = CHUNK.min(opts.max_epochs - epochs);
        let cfg = TrainConfig {
            learning_rate: opts.lr,
            epochs: chunk,
            stop_grad_norm: opts.stop_grad_norm,
            record_every: chunk,
        };
        let (next, traj) = train_gd(&cur, data, &cfg)?;
        epochs += traj.meta.steps;
        cur = next;
        if traj.meta.steps < chunk {
            let train_mse = mse(&cur, data);
            return Ok(FitOutcome { net: cur, epochs, train_mse, grad_norm: traj.meta.final_grad_norm });
        }
    }
}

fn fit_adam(net: &NetParams, data: &Dataset, opts: &FitOptions, beta1: f64, beta2: f64, eps: f64) -> Result<FitOutcome> {
    let mut theta = net.to_vec();
    let mut m = vec![0.0; theta.len()];
    let mut v = vec![0.0; theta.len()];
    let mut cur = net.clone();
    let mut epochs = 0;
    let n = data.len() as f64;
    loop {
        let (l, g) = loss_and_gradient(&cur, data);
        let train_mse = 2.0 * l / n;
        if !train_mse.is_finite() {
            return Err(Error::NonFiniteLoss { step: epochs });
        }
        let grad = g.to_vec();
        let grad_norm = g.norm();
        if epochs >= opts.max_epochs || train_mse < opts.stop_mse || grad_norm < opts.stop_grad_norm {
            return Ok(FitOutcome { net: cur, epochs, train_mse, grad_norm });
        }
        epochs += 1;
        let c1 = 1.0 - beta1.powi(epochs.min(i32::MAX as usize) as i32);
        let c2 = 1.0 - beta2.powi(epochs.min(i32::MAX as usize) as i32);
        for k in 0..theta.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * grad[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * grad[k] * grad[k];
            theta[k] -= opts.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
        cur = NetParams::from_vec(&theta)?;
    }
}

/// How a run picks its step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSize {
    Fixed { value: f64 },
    /// `fraction / λ`, with `λ` the top Gauss-Newton eigenvalue at the
    /// initial parameters.
    GaussNewton { fraction: f64 },
}

impl StepSize {
    pub fn resolve(self, net: &NetParams, data: &Dataset) -> f64 {
        match self {
            StepSize::Fixed { value } => value,
            StepSize::GaussNewton { fraction } => fraction / gauss_newton_top(net, data),
        }
    }

    pub fn validate(self) -> std::result::Result<(), String> {
        let (name, x) = match self {
            StepSize::Fixed { value } => ("step size", value),
            StepSize::GaussNewton { fraction } => ("step fraction", fraction),
        };
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(format!("{name} must be positive, got {x}"))
        }
    }
}

/// Largest eigenvalue of the Gauss-Newton matrix `JᵀJ`, computed as the top
/// eigenvalue of the `N × N` matrix `JJᵀ`.
pub fn gauss_newton_top(net: &NetParams, data: &Dataset) -> f64 {
    let j = feature_matrix(net, data);
    let k = &j * j.transpose();
    k.symmetric_eigenvalues().max()
}

pub fn variance(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_stops_on_mse() {
        let net = NetParams::new(0.0, vec![1.0], vec![0.5], vec![0.1]).unwrap();
        let data = Dataset::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.5, 1.5]).unwrap();
        let opts = FitOptions { optimizer: Optimizer::Gd, lr: 0.05, max_epochs: 1_000_000, stop_grad_norm: 0.0, stop_mse: 1e-10 };
        let out = fit(&net, &data, &opts).unwrap();
        assert!(out.train_mse < 1e-10);
        assert!(out.epochs < 1_000_000);
    }

    #[test]
    fn fit_respects_budget() {
        let net = NetParams::new(0.0, vec![1.0], vec![0.5], vec![0.1]).unwrap();
        let data = Dataset::new(vec![-1.0, 0.0, 1.0], vec![3.0, -0.5, 1.5]).unwrap();
        let opts = FitOptions { optimizer: Optimizer::Gd, lr: 0.01, max_epochs: 2500, stop_grad_norm: 0.0, stop_mse: 0.0 };
        assert_eq!(fit(&net, &data, &opts).unwrap().epochs, 2500);
    }

    #[test]
    fn adam_fits_a_line() {
        let net = NetParams::new(0.0, vec![1.0], vec![2.5], vec![0.1]).unwrap();
        let data = Dataset::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.5, 1.0]).unwrap();
        let opts = FitOptions { optimizer: Optimizer::ADAM, lr: 0.01, max_epochs: 100_000, stop_grad_norm: 0.0, stop_mse: 1e-8 };
        let out = fit(&net, &data, &opts).unwrap();
        assert!(out.train_mse < 1e-8, "{}", out.train_mse);
    }

    #[test]
    fn moments() {
        assert_eq!(mean_sd(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
        assert_eq!(variance(&[1.0, 3.0]), 1.0);
    }
}
