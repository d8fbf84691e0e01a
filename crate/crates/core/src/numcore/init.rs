use super::rng::SplitMix64;
use super::scalar::Scalar;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Glorot uniform initialization: values in `[-a, a]`, `a = sqrt(6 / (fan_in + fan_out))`.
///
/// `fan_out` is the last dimension and `fan_in` the product of the others;
/// a rank-1 shape uses its length for both.
pub fn glorot_init<T: Scalar>(shape: &[usize], seed: u64) -> Result<Tensor<T>> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidShape(format!("glorot init on {shape:?}")));
    }
    let bound = glorot_bound(shape);
    let mut rng = SplitMix64::new(seed);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.uniform(-bound, bound))).collect();
    Tensor::new(shape.to_vec(), data)
}

pub fn glorot_bound(shape: &[usize]) -> f64 {
    let (fan_in, fan_out) = match shape {
        [n] => (*n, *n),
        _ => {
            let out = *shape.last().unwrap();
            (shape.iter().product::<usize>() / out, out)
        }
    };
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
