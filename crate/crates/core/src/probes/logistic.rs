//! Binary logistic regression by full-batch gradient descent.

use crate::error::{Error, Result};

/// Maximum step-size halvings attempted within one epoch.
pub const MAX_HALVINGS: u32 = 20;

/// `|f(x_i) − f(x_j)|` for an image pair, labelled 1 when the pair contains the odd item.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffVector {
    pub values: Vec<f32>,
    pub label: bool,
}

impl DiffVector {
    pub fn between(a: &[f32], b: &[f32], label: bool) -> Self {
        DiffVector {
            values: a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub epochs_run: usize,
    pub final_loss: f64,
    pub final_lr: f64,
}

impl LogisticModel {
    pub fn logit(&self, x: &[f32]) -> f64 {
        logit(&self.weights, self.bias, x)
    }

    pub fn probability(&self, x: &[f32]) -> f64 {
        sigmoid(self.logit(x))
    }
}

fn logit(w: &[f64], b: f64, x: &[f32]) -> f64 {
    w.iter()
        .zip(x)
        .map(|(&wi, &xi)| wi * xi as f64)
        .sum::<f64>()
        + b
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean binary cross-entropy.
pub fn loss(weights: &[f64], bias: f64, data: &[DiffVector]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|d| {
            let z = logit(weights, bias, &d.values);
            softplus(z) - if d.label { z } else { 0.0 }
        })
        .sum();
    total / data.len() as f64
}

/// Analytic gradient of [`loss`] with respect to `(weights, bias)`.
pub fn gradient(weights: &[f64], bias: f64, data: &[DiffVector]) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for d in data {
        let r = sigmoid(logit(weights, bias, &d.values)) - if d.label { 1.0 } else { 0.0 };
        for (g, &x) in gw.iter_mut().zip(&d.values) {
            *g += r * x as f64;
        }
        gb += r;
    }
    let n = data.len() as f64;
    gw.iter_mut().for_each(|g| *g /= n);
    (gw, gb / n)
}

/// Gradient descent from zero initialization. When a step would raise the
/// loss, the step size is halved (up to [`MAX_HALVINGS`] times per epoch);
/// if no halving helps the parameters stay put for that epoch.
pub fn fit_logistic(data: &[DiffVector], lr: f64, epochs: usize) -> Result<LogisticModel> {
    let first = data.first().ok_or(Error::Empty("logistic training data"))?;
    let dim = first.values.len();
    if let Some(bad) = data.iter().find(|d| d.values.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.values.len(),
        });
    }
    if !(data.iter().any(|d| d.label) && data.iter().any(|d| !d.label)) {
        return Err(Error::SingleClass);
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be >= 0, got {lr}"
        )));
    }

    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut current = loss(&w, b, data);
    let mut step = lr;
    for _ in 0..epochs {
        if step == 0.0 {
            break;
        }
        let (gw, gb) = gradient(&w, b, data);
        let mut halvings = 0;
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&gw).map(|(wi, gi)| wi - step * gi).collect();
            let cand_b = b - step * gb;
            let cand = loss(&cand_w, cand_b, data);
            if cand <= current {
                w = cand_w;
                b = cand_b;
                current = cand;
                break;
            }
            if halvings == MAX_HALVINGS {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        epochs_run: epochs,
        final_loss: current,
        final_lr: step,
    })
}
