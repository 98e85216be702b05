//! Marchenko-Pastur analytics at a finite aspect ratio.
//!
//! All square roots of the discriminant go through
//! `R(z) = sqrt(z - a) * sqrt(z - b)` with principal branches, where `[a, b]`
//! is the bulk. `R` is analytic off the bulk, real and positive for real
//! `z > b`, and behaves like `z` at infinity, which fixes every branch below.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::C64;

/// Aspect ratio `beta = n / m` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    beta: f64,
}

impl MpParams {
    pub fn new(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Ok(MpParams { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn edges(&self) -> (f64, f64) {
        bulk_edges(self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta <= 1.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("beta must lie in (0, 1], got {beta}")))
    }
}

/// Support `[(1 - sqrt(beta))^2, (1 + sqrt(beta))^2]`.
pub fn bulk_edges(beta: f64) -> (f64, f64) {
    let r = beta.sqrt();
    ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
}

fn in_bulk(z: C64, beta: f64) -> bool {
    let (a, b) = bulk_edges(beta);
    z.im == 0.0 && z.re > a && z.re < b
}

fn edge_root(z: C64, beta: f64) -> C64 {
    let (a, b) = bulk_edges(beta);
    (z - a).sqrt() * (z - b).sqrt()
}

/// Stieltjes transform of the Marchenko-Pastur law and its derivative.
///
/// `s` is the root of `beta z s^2 + (z + beta - 1) s + 1 = 0` that decays like
/// `-1/z`. At the bulk edges the value is finite and the derivative infinite.
pub fn mp_stieltjes(z: C64, beta: f64) -> Result<(C64, C64)> {
    check_beta(beta)?;
    if in_bulk(z, beta) {
        return Err(Error::domain(format!("z = {z} lies inside the bulk")));
    }
    let a2 = 2.0 * beta * z;
    let b = z + beta - 1.0;
    let r = edge_root(z, beta);
    // Two algebraically equal forms of the same root; pick the one without
    // cancellation.
    let s = if (b + r).norm() >= (b - r).norm() {
        if (b + r).norm() == 0.0 {
            return Err(Error::domain(format!("Stieltjes transform is singular at z = {z}")));
        }
        -2.0 / (b + r)
    } else {
        (r - b) / a2
    };
    let ds = if r.norm() == 0.0 {
        C64::new(f64::INFINITY, 0.0)
    } else {
        -(beta * s * s + s) / r
    };
    Ok((s, ds))
}

/// `D(z) = sqrt(z) s(z) (beta sqrt(z) s(z) - (1 - beta)/sqrt(z))`, evaluated in
/// closed form as `2 / (w + R(z))` with `w = z - 1 - beta`.
pub fn d_transform(z: C64, beta: f64) -> Result<C64> {
    check_beta(beta)?;
    if in_bulk(z, beta) {
        return Err(Error::domain(format!("z = {z} lies inside the bulk")));
    }
    let w = z - 1.0 - beta;
    let denom = w + edge_root(z, beta);
    if denom.norm() == 0.0 {
        return Err(Error::domain(format!("D-transform is singular at z = {z}")));
    }
    Ok(2.0 / denom)
}

/// Real-axis D-transform. Maps `((1 + sqrt(beta))^2, inf)` decreasingly onto
/// `(0, beta^{-1/2})`.
pub fn d_transform_real(z: f64, beta: f64) -> Result<f64> {
    Ok(d_transform(C64::new(z, 0.0), beta)?.re)
}

/// Inverse of the real D-transform: `(t + 1)(beta t + 1) / t`.
pub fn d_transform_inverse(t: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let upper = beta.powf(-0.5);
    if !(t > 0.0 && t < upper) {
        return Err(Error::domain(format!("t = {t} outside (0, {upper})")));
    }
    Ok((t + 1.0) * (beta * t + 1.0) / t)
}

/// Marchenko-Pastur density `sqrt((b - x)(x - a)) / (2 pi beta x)` on `[a, b]`.
pub fn mp_density(x: f64, beta: f64) -> f64 {
    let (a, b) = bulk_edges(beta);
    if x < a || x > b || x <= 0.0 {
        return 0.0;
    }
    ((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * std::f64::consts::PI * beta * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn edges() {
        let (a, b) = bulk_edges(0.04);
        assert!((a - 0.64).abs() < 1e-15 && (b - 1.44).abs() < 1e-15);
        assert_eq!(bulk_edges(1.0), (0.0, 4.0));
        let (a, b) = bulk_edges(1e-16);
        assert!((a - 1.0).abs() < 1e-7 && (b - 1.0).abs() < 1e-7);
    }

    #[test]
    fn stieltjes_far_field() {
        for beta in [1.0, 0.3, 0.01] {
            let (s, _) = mp_stieltjes(c(1e6), beta).unwrap();
            assert!(((s.re + 1e-6) / 1e-6).abs() < 1e-5);
        }
    }

    #[test]
    fn stieltjes_at_upper_edge() {
        let (s, ds) = mp_stieltjes(c(2.25), 0.25).unwrap();
        assert!((s.re + 4.0 / 3.0).abs() < 1e-14);
        assert!(ds.re.is_infinite());
    }

    #[test]
    fn stieltjes_rejects_bulk() {
        assert!(mp_stieltjes(c(1.0), 0.25).is_err());
        assert!(mp_stieltjes(C64::new(1.0, 1e-3), 0.25).is_ok());
        assert!(d_transform(c(1.0), 0.25).is_err());
    }

    #[test]
    fn stieltjes_below_bulk_is_positive() {
        let (s, _) = mp_stieltjes(c(0.0), 0.5).unwrap();
        assert!((s.re - 2.0).abs() < 1e-14);
        let (s, _) = mp_stieltjes(c(-3.0), 0.5).unwrap();
        assert!(s.re > 0.0 && s.re < 1.0 / 3.0);
    }

    #[test]
    fn d_transform_examples() {
        assert!((d_transform_real(1.44, 0.04).unwrap() - 5.0).abs() < 1e-12);
        assert!((d_transform_real(2.02, 0.01).unwrap() - 1.0).abs() < 1e-12);
        let far = d_transform_real(1e12, 0.01).unwrap();
        assert!(far > 0.0 && far < 1e-11);
    }

    #[test]
    fn inverse_examples() {
        assert!((d_transform_inverse(1.0, 0.01).unwrap() - 2.02).abs() < 1e-14);
        assert!((d_transform_inverse(5.0, 0.01).unwrap() - 1.26).abs() < 1e-14);
        let near = d_transform_inverse(10.0 * (1.0 - 1e-9), 0.01).unwrap();
        assert!((near - 1.21).abs() < 1e-8);
        assert!(d_transform_inverse(0.0, 0.01).is_err());
        assert!(d_transform_inverse(10.0, 0.01).is_err());
        assert!(d_transform_inverse(-1.0, 0.01).is_err());
    }

    #[test]
    fn density_values() {
        let expected = (1.25f64 * 0.75).sqrt() / (2.0 * std::f64::consts::PI * 0.25);
        assert!((mp_density(1.0, 0.25) - expected).abs() < 1e-15);
        assert!((mp_density(1.0, 0.25) - 0.61640).abs() < 1e-5);
        assert_eq!(mp_density(3.0, 0.25), 0.0);
        assert_eq!(mp_density(0.1, 0.25), 0.0);
    }
}
