//! Plane-strain linear elasticity in the mixed displacement/stress form.
//!
//! Field columns are ordered `(u_x, u_y, s_xx, s_yy, s_xy)`; the off-diagonal
//! stress `s_xy` stands for both shear entries.

use std::path::Path;

use ndarray::{ArrayView2, ArrayViewMut2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UX: usize = 0;
pub const UY: usize = 1;
pub const SXX: usize = 2;
pub const SYY: usize = 3;
pub const SXY: usize = 4;
pub const FIELD_NAMES: [&str; 5] = ["ux", "uy", "sxx", "syy", "sxy"];

/// Isotropic material with its derived Lamé parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams {
    pub young: f64,
    pub poisson: f64,
    pub lambda: f64,
    pub mu: f64,
}

impl MaterialParams {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        let (lambda, mu) = lame_from_engineering(young, poisson)?;
        Ok(MaterialParams {
            young,
            poisson,
            lambda,
            mu,
        })
    }

    /// Plane-strain stiffness `(lambda + 2 mu, lambda, mu)`.
    fn stiffness(&self) -> (f64, f64, f64) {
        (self.lambda + 2.0 * self.mu, self.lambda, self.mu)
    }
}

/// `lambda = E nu / ((1 + nu)(1 - 2 nu))`, `mu = E / (2 (1 + nu))`.
pub fn lame_from_engineering(young: f64, poisson: f64) -> Result<(f64, f64)> {
    if !(young.is_finite() && young > 0.0) {
        return Err(Error::InvalidMaterial(format!(
            "Young's modulus must be positive, got {young}"
        )));
    }
    if !(poisson.is_finite() && (0.0..0.5).contains(&poisson)) {
        return Err(Error::InvalidMaterial(format!(
            "Poisson's ratio must lie in [0, 0.5), got {poisson}"
        )));
    }
    let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
    let mu = young / (2.0 * (1.0 + poisson));
    Ok((lambda, mu))
}

/// Small strain `(e_xx, e_yy, e_xy)` from the displacement gradient
/// `grad[i][j] = du_i/dx_j`.
pub fn strain_from_grad(grad: [[f64; 2]; 2]) -> [f64; 3] {
    [grad[0][0], grad[1][1], 0.5 * (grad[0][1] + grad[1][0])]
}

/// Stress-to-stress coupling residual `s - C : e` under plane strain.
pub fn constitutive_residual(sigma: [f64; 3], strain: [f64; 3], mat: &MaterialParams) -> [f64; 3] {
    let (c11, c12, mu) = mat.stiffness();
    [
        sigma[0] - c11 * strain[0] - c12 * strain[1],
        sigma[1] - c12 * strain[0] - c11 * strain[1],
        sigma[2] - 2.0 * mu * strain[2],
    ]
}

/// Balance residual `div(s) + b`.
pub fn balance_residual(
    dsxx_dx: f64,
    dsxy_dy: f64,
    dsxy_dx: f64,
    dsyy_dy: f64,
    body_force: [f64; 2],
) -> [f64; 2] {
    [dsxx_dx + dsxy_dy + body_force[0], dsxy_dx + dsyy_dy + body_force[1]]
}

/// Plane-strain out-of-plane stress, for reporting only.
pub fn out_of_plane_stress(sigma: [f64; 3], mat: &MaterialParams) -> f64 {
    mat.poisson * (sigma[0] + sigma[1])
}

/// Cauchy traction `s . n` for `sigma = (s_xx, s_yy, s_xy)`.
pub fn traction(sigma: [f64; 3], n: [f64; 2]) -> [f64; 2] {
    [
        sigma[0] * n[0] + sigma[2] * n[1],
        sigma[2] * n[0] + sigma[1] * n[1],
    ]
}

/// Loss weights of the elastic terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Two balance components, then three constitutive components.
    pub pde: [f64; 5],
    pub dbc: [f64; 2],
    pub nbc: [f64; 2],
    pub exp: [f64; 5],
    pub fs: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pde: [1.0; 5],
            dbc: [1.0; 2],
            nbc: [1.0; 2],
            exp: [1.0; 5],
            fs: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self
            .pde
            .iter()
            .chain(&self.dbc)
            .chain(&self.nbc)
            .chain(&self.exp)
            .chain(std::iter::once(&self.fs));
        for &w in all {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("loss weight {w} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Weighted mean-squared-error value of every loss term.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Weighted balance (2) and constitutive (3) terms.
    pub pde_terms: [f64; 5],
    pub pde: f64,
    pub dbc: f64,
    pub nbc: f64,
    pub exp: f64,
    pub fs: f64,
    pub kkt: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn finalize(&mut self) {
        self.pde = self.pde_terms.iter().sum();
        self.total = self.pde + self.dbc + self.nbc + self.exp + self.fs + self.kkt;
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("pde", self.pde),
            ("dbc", self.dbc),
            ("nbc", self.nbc),
            ("exp", self.exp),
            ("fs", self.fs),
            ("kkt", self.kkt),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Weighted PDE terms over interior points. `values`, `dx`, `dy` are
/// `n x 5` field blocks; adjoints are accumulated into the matching
/// `*_bar` blocks.
pub fn pde_terms(
    values: ArrayView2<'_, f64>,
    dx: ArrayView2<'_, f64>,
    dy: ArrayView2<'_, f64>,
    mat: &MaterialParams,
    weights: &[f64; 5],
    mut values_bar: ArrayViewMut2<'_, f64>,
    mut dx_bar: ArrayViewMut2<'_, f64>,
    mut dy_bar: ArrayViewMut2<'_, f64>,
) -> Result<[f64; 5]> {
    let n = values.nrows();
    if n == 0 {
        return Err(Error::EmptyCollocation);
    }
    let (c11, c12, mu) = mat.stiffness();
    let scale = 1.0 / n as f64;
    let mut sums = [0.0; 5];
    for i in 0..n {
        let v = values.row(i);
        let gx = dx.row(i);
        let gy = dy.row(i);
        let be = balance_residual(gx[SXX], gy[SXY], gx[SXY], gy[SYY], [0.0, 0.0]);
        let strain = strain_from_grad([[gx[UX], gy[UX]], [gx[UY], gy[UY]]]);
        let ss = constitutive_residual([v[SXX], v[SYY], v[SXY]], strain, mat);
        let r = [be[0], be[1], ss[0], ss[1], ss[2]];
        let mut c = [0.0; 5];
        for k in 0..5 {
            sums[k] += r[k] * r[k];
            c[k] = 2.0 * weights[k] * r[k] * scale;
        }
        dx_bar[[i, SXX]] += c[0];
        dy_bar[[i, SXY]] += c[0];
        dx_bar[[i, SXY]] += c[1];
        dy_bar[[i, SYY]] += c[1];

        values_bar[[i, SXX]] += c[2];
        dx_bar[[i, UX]] -= c11 * c[2];
        dy_bar[[i, UY]] -= c12 * c[2];

        values_bar[[i, SYY]] += c[3];
        dx_bar[[i, UX]] -= c12 * c[3];
        dy_bar[[i, UY]] -= c11 * c[3];

        values_bar[[i, SXY]] += c[4];
        dy_bar[[i, UX]] -= mu * c[4];
        dx_bar[[i, UY]] -= mu * c[4];
    }
    let mut out = [0.0; 5];
    for k in 0..5 {
        out[k] = weights[k] * sums[k] * scale;
    }
    Ok(out)
}

/// A soft traction condition at a boundary point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TractionTarget {
    pub normal: [f64; 2],
    pub traction: [f64; 2],
}

/// Weighted MSE of `s . n - t_hat` per traction component.
pub fn neumann_term(
    values: ArrayView2<'_, f64>,
    targets: &[TractionTarget],
    weights: &[f64; 2],
    mut values_bar: ArrayViewMut2<'_, f64>,
) -> f64 {
    let n = targets.len();
    if n == 0 {
        return 0.0;
    }
    let scale = 1.0 / n as f64;
    let mut sums = [0.0; 2];
    for (i, t) in targets.iter().enumerate() {
        let v = values.row(i);
        let tc = traction([v[SXX], v[SYY], v[SXY]], t.normal);
        let r = [tc[0] - t.traction[0], tc[1] - t.traction[1]];
        let c = [2.0 * weights[0] * r[0] * scale, 2.0 * weights[1] * r[1] * scale];
        sums[0] += r[0] * r[0];
        sums[1] += r[1] * r[1];
        values_bar[[i, SXX]] += c[0] * t.normal[0];
        values_bar[[i, SXY]] += c[0] * t.normal[1] + c[1] * t.normal[0];
        values_bar[[i, SYY]] += c[1] * t.normal[1];
    }
    (weights[0] * sums[0] + weights[1] * sums[1]) * scale
}

/// Weighted MSE of `u - u_hat`; each component averages over the points
/// that prescribe it.
pub fn dirichlet_term(
    values: ArrayView2<'_, f64>,
    targets: &[[Option<f64>; 2]],
    weights: &[f64; 2],
    mut values_bar: ArrayViewMut2<'_, f64>,
) -> f64 {
    let mut total = 0.0;
    for k in 0..2 {
        let count = targets.iter().filter(|t| t[k].is_some()).count();
        if count == 0 {
            continue;
        }
        let scale = 1.0 / count as f64;
        let mut sum = 0.0;
        for (i, t) in targets.iter().enumerate() {
            if let Some(target) = t[k] {
                let r = values[[i, k]] - target;
                sum += r * r;
                values_bar[[i, k]] += 2.0 * weights[k] * r * scale;
            }
        }
        total += weights[k] * sum * scale;
    }
    total
}

/// Weighted MSE against measured fields; each component averages over the
/// rows where it is present.
pub fn data_term(
    values: ArrayView2<'_, f64>,
    observations: &[[Option<f64>; 5]],
    weights: &[f64; 5],
    mut values_bar: ArrayViewMut2<'_, f64>,
) -> f64 {
    let mut total = 0.0;
    for k in 0..5 {
        let count = observations.iter().filter(|o| o[k].is_some()).count();
        if count == 0 {
            continue;
        }
        let scale = 1.0 / count as f64;
        let mut sum = 0.0;
        for (i, o) in observations.iter().enumerate() {
            if let Some(target) = o[k] {
                let r = values[[i, k]] - target;
                sum += r * r;
                values_bar[[i, k]] += 2.0 * weights[k] * r * scale;
            }
        }
        total += weights[k] * sum * scale;
    }
    total
}

/// One measured point: network input plus any subset of the five fields.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub input: Vec<f64>,
    pub fields: [Option<f64>; 5],
}

/// Experimental data ingested from CSV with header `x,y[,p]` followed by any
/// subset of `ux,uy,sxx,syy,sxy`. Empty cells mark missing values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentalData {
    pub observations: Vec<Observation>,
}

impl ExperimentalData {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::DataFile(format!("{}: {e}", path.display())))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (xc, yc) = match (col("x"), col("y")) {
            (Some(x), Some(y)) => (x, y),
            _ => return Err(Error::DataFile("header must contain x and y".into())),
        };
        let pc = col("p");
        let field_cols: Vec<Option<usize>> = FIELD_NAMES.iter().map(|n| col(n)).collect();
        if field_cols.iter().all(Option::is_none) {
            return Err(Error::DataFile("no field columns (ux, uy, sxx, syy, sxy)".into()));
        }
        let parse = |s: &str, line: u64| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::DataFile(format!("line {line}: cannot parse '{s}'")))
        };
        let mut observations = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k as u64 + 2;
            let mut input = vec![parse(&rec[xc], line)?, parse(&rec[yc], line)?];
            if let Some(pc) = pc {
                input.push(parse(&rec[pc], line)?);
            }
            let mut fields = [None; 5];
            for (f, c) in field_cols.iter().enumerate() {
                if let Some(c) = c {
                    let cell = rec.get(*c).unwrap_or("");
                    if !cell.is_empty() {
                        fields[f] = Some(parse(cell, line)?);
                    }
                }
            }
            observations.push(Observation { input, fields });
        }
        if observations.is_empty() {
            return Err(Error::DataFile("no data rows".into()));
        }
        Ok(ExperimentalData { observations })
    }

    pub fn to_writer<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let with_p = self.observations.iter().any(|o| o.input.len() > 2);
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["x", "y"];
        if with_p {
            header.push("p");
        }
        header.extend(FIELD_NAMES);
        wtr.write_record(&header)?;
        for o in &self.observations {
            let mut row: Vec<String> = o.input.iter().map(|v| format!("{v:.17e}")).collect();
            row.extend(
                o.fields
                    .iter()
                    .map(|f| f.map(|v| format!("{v:.17e}")).unwrap_or_default()),
            );
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}
