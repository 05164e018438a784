//! Error measures between predicted and reference fields.

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::geometry::StructuredMesh;

/// Displacement components.
pub const U_GROUP: [usize; 2] = [0, 1];
/// Stress components.
pub const SIGMA_GROUP: [usize; 3] = [2, 3, 4];

fn check(pred: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, cols: &[usize]) -> Result<()> {
    if pred.dim() != reference.dim() {
        return Err(Error::Shape(format!(
            "prediction {:?} and reference {:?} differ",
            pred.dim(),
            reference.dim()
        )));
    }
    if let Some(c) = cols.iter().find(|&&c| c >= pred.ncols()) {
        return Err(Error::Shape(format!("column {c} out of range")));
    }
    Ok(())
}

/// `sqrt(sum (pred - ref)^2) / sqrt(sum ref^2)` over the listed columns.
pub fn relative_l2_vector(
    pred: ArrayView2<'_, f64>,
    reference: ArrayView2<'_, f64>,
    cols: &[usize],
) -> Result<f64> {
    check(pred, reference, cols)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, r) in pred.rows().into_iter().zip(reference.rows()) {
        for &c in cols {
            num += (p[c] - r[c]).powi(2);
            den += r[c] * r[c];
        }
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// Integral counterpart of [`relative_l2_vector`] on the nodes of a
/// structured mesh.
pub fn relative_l2_integral(
    pred: ArrayView2<'_, f64>,
    reference: ArrayView2<'_, f64>,
    cols: &[usize],
    mesh: &StructuredMesh,
) -> Result<f64> {
    check(pred, reference, cols)?;
    let mut diff = vec![0.0; pred.nrows()];
    let mut refsq = vec![0.0; pred.nrows()];
    for (i, (p, r)) in pred.rows().into_iter().zip(reference.rows()).enumerate() {
        for &c in cols {
            diff[i] += (p[c] - r[c]).powi(2);
            refsq[i] += r[c] * r[c];
        }
    }
    let den = mesh.integrate(&refsq)?;
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((mesh.integrate(&diff)? / den).sqrt())
}

/// Relative L2 of a 1D profile sampled at `s` (arc length or abscissa),
/// trapezoid rule.
pub fn relative_l2_profile(s: &[f64], pred: &[f64], reference: &[f64]) -> Result<f64> {
    if s.len() != pred.len() || s.len() != reference.len() {
        return Err(Error::Shape("profile lengths differ".into()));
    }
    let diff: Vec<f64> = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).collect();
    let refsq: Vec<f64> = reference.iter().map(|r| r * r).collect();
    let den = trapezoid(s, &refsq);
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((trapezoid(s, &diff) / den).sqrt())
}

pub fn trapezoid(s: &[f64], f: &[f64]) -> f64 {
    s.windows(2)
        .zip(f.windows(2))
        .map(|(s, f)| 0.5 * (s[1] - s[0]) * (f[0] + f[1]))
        .sum()
}

/// Largest componentwise absolute error per column.
pub fn max_abs_errors(pred: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    check(pred, reference, &[])?;
    let mut out = vec![0.0f64; pred.ncols()];
    for (p, r) in pred.rows().into_iter().zip(reference.rows()) {
        for c in 0..out.len() {
            out[c] = out[c].max((p[c] - r[c]).abs());
        }
    }
    Ok(out)
}

/// Rotates displacement and stress into polar components at `(x, y)`:
/// `(u_r, s_rr, s_aa, s_ra)`.
pub fn polar_transform(u: [f64; 2], sigma: [f64; 3], x: f64, y: f64) -> Result<[f64; 4]> {
    let r = x.hypot(y);
    if r == 0.0 {
        return Err(Error::OutOfDomain("polar transform at the origin".into()));
    }
    let (c, s) = (x / r, y / r);
    let [sxx, syy, sxy] = sigma;
    Ok([
        u[0] * c + u[1] * s,
        sxx * c * c + syy * s * s + 2.0 * sxy * c * s,
        sxx * s * s + syy * c * c - 2.0 * sxy * c * s,
        (syy - sxx) * c * s + sxy * (c * c - s * s),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::{array, Array2};

    #[test]
    fn vector_error_examples() {
        let r = array![[1.0, 2.0, 3.0, 4.0, 5.0], [0.5, -1.0, 2.0, 0.0, 1.0]];
        assert_eq!(relative_l2_vector(r.view(), r.view(), &U_GROUP).unwrap(), 0.0);
        let p = &r * 1.01;
        assert_relative_eq!(relative_l2_vector(p.view(), r.view(), &SIGMA_GROUP).unwrap(), 0.01, epsilon = 1e-12);
        let single = relative_l2_vector(array![[3.0]].view(), array![[4.0]].view(), &[0]).unwrap();
        assert_eq!(single, 0.25);
        let z = Array2::<f64>::zeros((2, 5));
        assert!(matches!(relative_l2_vector(p.view(), z.view(), &U_GROUP), Err(Error::ZeroReference)));
    }

    #[test]
    fn integral_error_homogeneity() {
        let mesh = StructuredMesh::rectangle([0.0, 1.0, 0.0, 1.0], 11, 11);
        let reference = Array2::from_shape_fn((121, 5), |(i, c)| 1.0 + (i * (c + 1)) as f64 * 0.01);
        assert_eq!(relative_l2_integral(reference.view(), reference.view(), &U_GROUP, &mesh).unwrap(), 0.0);
        let p = &reference * 0.7;
        assert_relative_eq!(
            relative_l2_integral(p.view(), reference.view(), &SIGMA_GROUP, &mesh).unwrap(),
            0.3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn polar_examples() {
        let p = polar_transform([1.0, 0.0], [2.0, 3.0, 0.5], 2.0, 0.0).unwrap();
        assert_eq!(p[1], 2.0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let p = polar_transform([0.0, 0.0], [0.0, 0.0, 1.0], h, h).unwrap();
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[2], -1.0, epsilon = 1e-15);
        assert!(p[3].abs() < 1e-15);
        let p = polar_transform([0.0, 0.0], [0.7, 0.7, 0.0], 0.3, -1.1).unwrap();
        assert_relative_eq!(p[1], 0.7, epsilon = 1e-15);
        assert_relative_eq!(p[2], 0.7, epsilon = 1e-15);
        assert!(p[3].abs() < 1e-15);
        assert!(polar_transform([0.0; 2], [0.0; 3], 0.0, 0.0).is_err());
    }

    #[test]
    fn trapezoid_linear_exact() {
        let s: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let f: Vec<f64> = s.iter().map(|x| 2.0 * x + 1.0).collect();
        assert_relative_eq!(trapezoid(&s, &f), 2.0, epsilon = 1e-14);
    }
}
