//! Closed-form reference solutions.

use crate::error::{Error, Result};

/// Polar stress and radial displacement of the pressurized thick cylinder.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LameSolution {
    pub srr: f64,
    pub saa: f64,
    pub sra: f64,
    pub ur: f64,
}

/// Thick-walled cylinder under internal pressure `p`, plane strain.
pub fn lame_analytical(r: f64, r_i: f64, r_o: f64, p: f64, young: f64, poisson: f64) -> Result<LameSolution> {
    let tol = 1e-12 * r_o;
    if !(r >= r_i - tol && r <= r_o + tol) {
        return Err(Error::OutOfDomain(format!("r = {r} outside [{r_i}, {r_o}]")));
    }
    let k = p * r_i * r_i / (r_o * r_o - r_i * r_i);
    let q = r_o * r_o / (r * r);
    Ok(LameSolution {
        srr: k * (1.0 - q),
        saa: k * (1.0 + q),
        sra: 0.0,
        ur: k / young * (1.0 + poisson) * ((1.0 - 2.0 * poisson) * r + r_o * r_o / r),
    })
}

/// Lamé solution in Cartesian components `(u_x, u_y, s_xx, s_yy, s_xy)`.
pub fn lame_fields(x: f64, y: f64, r_i: f64, r_o: f64, p: f64, young: f64, poisson: f64) -> Result<[f64; 5]> {
    let r = x.hypot(y);
    let sol = lame_analytical(r, r_i, r_o, p, young, poisson)?;
    let (c, s) = (x / r, y / r);
    Ok([
        sol.ur * c,
        sol.ur * s,
        sol.srr * c * c + sol.saa * s * s,
        sol.srr * s * s + sol.saa * c * c,
        (sol.srr - sol.saa) * c * s,
    ])
}

/// Block compressed by `p` on a frictionless rigid floor:
/// `(u_x, u_y, s_xx, s_yy, s_xy)`.
pub fn block_analytical(x: f64, y: f64, p: f64, young: f64, poisson: f64) -> [f64; 5] {
    [
        p / young * poisson * (1.0 + poisson) * x,
        -p / young * (1.0 - poisson * poisson) * y,
        0.0,
        -p,
        0.0,
    ]
}

/// Contact half-width `b = 2 sqrt(2 R^2 p (1 - nu^2) / (E pi))`.
pub fn hertz_half_width(radius: f64, p: f64, young: f64, poisson: f64) -> f64 {
    2.0 * (2.0 * radius * radius * p * (1.0 - poisson * poisson) / (young * std::f64::consts::PI)).sqrt()
}

/// Contact pressure `p_c(x) = 4 R p / (pi b^2) sqrt(b^2 - x^2)`, zero for `|x| > b`.
pub fn hertz_pressure(x: f64, radius: f64, p: f64, young: f64, poisson: f64) -> f64 {
    let b = hertz_half_width(radius, p, young, poisson);
    if x.abs() >= b {
        return 0.0;
    }
    4.0 * radius * p / (std::f64::consts::PI * b * b) * (b * b - x * x).sqrt()
}
