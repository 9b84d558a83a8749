use ndarray::Array2;

use super::{Loss, NeuralNet, Result};

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares back-propagated parameter gradients with central differences
/// of step `h` and returns, per parameter tensor, the largest relative error.
///
/// The network is evaluated in its current mode on a copy; the original is
/// left untouched.
pub fn gradient_check(net: &NeuralNet, loss: Loss, batch: &Array2<f64>, targets: &Array2<f64>, h: f64) -> Result<Vec<f64>> {
    let mut work = net.clone();
    let out = work.forward(batch)?;
    let (analytic, _) = work.backward(&loss.gradient(&out, targets))?;

    let mut errors = Vec::with_capacity(analytic.len());
    for (tensor, grads) in analytic.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for (i, &g) in grads.iter().enumerate() {
            let eval = |delta: f64| -> Result<f64> {
                let mut probe = net.clone();
                probe.params_mut()[tensor][i] += delta;
                let out = probe.forward(batch)?;
                Ok(loss.value(&out, targets))
            };
            let numeric = (eval(h)? - eval(-h)?) / (2.0 * h);
            worst = worst.max(relative_error(g, numeric));
        }
        errors.push(worst);
    }
    Ok(errors)
}

pub fn max_relative_error(errors: &[f64]) -> f64 {
    errors.iter().copied().fold(0.0, f64::max)
}
