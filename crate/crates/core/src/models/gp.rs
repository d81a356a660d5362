use crate::error::{Error, Result};
use crate::numeric::special::expm1_over;

/// Upper endpoint `u - sigma/xi` of a generalized Pareto tail above `u`;
/// `+inf` when `xi >= 0`.
pub fn gp_endpoint(u: f64, sigma: f64, xi: f64) -> f64 {
    if xi >= 0.0 {
        f64::INFINITY
    } else {
        u - sigma / xi
    }
}

/// Scale of the exceedances of `v` under GP(sigma, xi): `sigma + xi v`.
pub fn gp_threshold_rescale(sigma: f64, xi: f64, v: f64) -> Result<f64> {
    let s = sigma + xi * v;
    if !(s > 0.0) {
        return Err(Error::domain(format!("v = {v} beyond support of GP({sigma}, {xi})")));
    }
    Ok(s)
}

/// GEV parameters of the maximum of `n` independent blocks.
pub fn gev_rescale(eta: f64, tau: f64, xi: f64, n: f64) -> (f64, f64, f64) {
    let l = n.ln();
    if xi == 0.0 {
        return (eta + tau * l, tau, xi);
    }
    // (N^xi - 1)/xi = log N * expm1(xi log N)/(xi log N)
    (eta + tau * l * expm1_over(xi * l), tau * (xi * l).exp(), xi)
}
