use crate::error::{Error, Result};

use super::{Backend, Periodic};

/// `‖∂^l u‖ / (‖∂^{M} u‖^{l/M} ‖u‖^{1 - l/M})` with `M = mtop + 1`, for
/// periodic samples on the unit circle. Norms are exact Parseval sums of the
/// trigonometric interpolant.
pub fn gn_interpolation_check(samples: &[f64], l: usize, mtop: usize) -> Result<f64> {
    if l == 0 || l > mtop {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= l <= mtop, got l = {l}, mtop = {mtop}"
        )));
    }
    let n = samples.len();
    if n < 2 || n % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "need an even number of samples, got {n}"
        )));
    }
    let op = Periodic::get(n, Backend::Spectral);
    let spec = op.spectrum(samples);
    let top = mtop + 1;
    let mut norms = [0.0_f64; 3];
    for (j, c) in spec.iter().enumerate() {
        let q = super::wavenumber(j, n).unsigned_abs() as f64;
        let a = c.norm_sqr();
        norms[0] += a;
        norms[1] += a * q.powi(2 * l as i32);
        norms[2] += a * q.powi(2 * top as i32);
    }
    let [u, dl, dtop] = norms.map(f64::sqrt);
    if u == 0.0 || dtop <= 1e-13 * u {
        return Err(Error::ConstantInput);
    }
    let theta = l as f64 / top as f64;
    Ok(dl / (dtop.powf(theta) * u.powf(1.0 - theta)))
}
