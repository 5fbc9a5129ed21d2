use crate::{Error, Result};

/// Mean absolute error over every element, with its subgradient with respect
/// to `pred`: `sign(pred - target) / len`, zero at ties.
pub fn l1_loss(target: &[f64], pred: &[f64]) -> Result<(f64, Vec<f64>)> {
    if target.len() != pred.len() {
        return Err(Error::LengthMismatch {
            left: target.len(),
            right: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(Error::Shape("empty loss input".into()));
    }
    let n = pred.len() as f64;
    let mut sum = 0.0;
    let grad = target
        .iter()
        .zip(pred)
        .map(|(y, p)| {
            let d = p - y;
            sum += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok((sum / n, grad))
}
