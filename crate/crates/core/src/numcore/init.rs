use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{SeedTree, Tensor};

/// Uniform Xavier/Glorot initialization on `±sqrt(6 / (fan_in + fan_out))`.
///
/// For a rank-1 shape both fans are the single dimension; otherwise the
/// fans are the leading and trailing dimensions.
pub fn xavier_init(shape: &[usize], seed: SeedTree) -> Result<Tensor> {
    if shape.is_empty() {
        return Err(Error::invalid("xavier_init needs at least one dimension"));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::invalid(format!(
            "xavier_init shape {shape:?} has a zero dimension"
        )));
    }
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        _ => (shape[0], shape[shape.len() - 1]),
    };
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let mut rng = seed.rng();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape, data)
}

/// Keep-mask for inverted dropout: each entry is `1/retain_p` with
/// probability `retain_p` and 0 otherwise.
pub fn dropout_mask(shape: &[usize], retain_p: f64, seed: SeedTree) -> Result<Tensor> {
    check_retain(retain_p)?;
    let mut rng = seed.rng();
    let n: usize = shape.iter().product();
    let scale = 1.0 / retain_p;
    let data = (0..n)
        .map(|_| if rng.gen::<f64>() < retain_p { scale } else { 0.0 })
        .collect();
    Tensor::new(shape, data)
}

fn check_retain(retain_p: f64) -> Result<()> {
    if !(retain_p > 0.0 && retain_p <= 1.0) {
        return Err(Error::invalid(format!(
            "dropout retain probability must lie in (0, 1], got {retain_p}"
        )));
    }
    Ok(())
}

/// Inverted dropout. Inference mode and `retain_p == 1` are exact identities.
pub fn dropout(t: &Tensor, retain_p: f64, seed: SeedTree, training: bool) -> Result<Tensor> {
    check_retain(retain_p)?;
    if !training || retain_p == 1.0 {
        return Ok(t.clone());
    }
    let mask = dropout_mask(t.shape(), retain_p, seed)?;
    let mut out = t.clone();
    for (o, m) in out.data_mut().iter_mut().zip(mask.data()) {
        *o *= m;
    }
    Ok(out)
}
