//! Runnable benchmark configurations: the Lamé cylinder, the block on a
//! rigid floor, and the half-cylinder contact cases (forward,
//! data-enhanced, inverse, surrogate).

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analytical::{block_analytical, hertz_half_width, hertz_pressure, lame_fields};
use super::metrics::{
    max_abs_errors, relative_l2_integral, relative_l2_profile, relative_l2_vector, trapezoid, SIGMA_GROUP,
    U_GROUP,
};
use crate::contact::{traction_decompose, ContactSite, KktMethod};
use crate::elasticity::{ExperimentalData, LossBreakdown, LossWeights, MaterialParams, TractionTarget, SXX, SXY, SYY};
use crate::error::{Error, Result};
use crate::geometry::{
    half_cylinder_test_mesh, lame_test_mesh, sample_half_cylinder, sample_quarter_annulus, sample_unit_square,
    Counts, HalfCylinderOptions, PointSet, StructuredMesh, Tag,
};
use crate::network::{
    forward_batch, AffineFactor, Architecture, ComponentRule, LoadSource, NetworkParams, Offset, OutputTransform,
};
use crate::optimize::{train_two_phase, AdamConfig, LbfgsConfig, Observer, TrainRecord};
use crate::problem::{ContactSet, Problem, ProblemSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Lame,
    Block,
    Hertz,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Lame => "lame",
            Case::Block => "block",
            Case::Hertz => "hertz",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Forward,
    DataEnhanced,
    Inverse,
    Surrogate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Halved hidden widths and fewer points; L-BFGS capped at 3000
    /// iterations (12000 for the half-cylinder).
    Desk,
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub length: f64,
    pub radius: f64,
    pub alpha_deg: f64,
    /// Model only `x >= 0` of the half-cylinder.
    pub symmetric: bool,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            inner_radius: 1.0,
            outer_radius: 2.0,
            length: 1.0,
            radius: 1.0,
            alpha_deg: 15.0,
            symmetric: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Refinement {
    pub count: usize,
    /// `[x0, x1, y0, y1]`
    pub region: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub interior: usize,
    pub boundary: usize,
    #[serde(default)]
    pub contact_share: Option<f64>,
    #[serde(default)]
    pub refine: Option<Refinement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    pub pressure_range: [f64; 2],
    pub chunks: usize,
    /// Pressures scored after training.
    pub held_out: Vec<f64>,
    /// Profile samples per held-out pressure, uniform over `[0, b(p)]`.
    pub samples: usize,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            pressure_range: [0.2, 1.0],
            chunks: 1,
            held_out: vec![0.45, 0.98, 1.5],
            samples: 200,
        }
    }
}

/// Fully resolved benchmark run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub case: Case,
    pub mode: Mode,
    pub preset: Preset,
    pub seed: u64,
    pub young: f64,
    pub poisson: f64,
    pub pressure: f64,
    pub geometry: GeometryConfig,
    pub hidden: Vec<usize>,
    pub kkt: KktMethod,
    pub weights: LossWeights,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
    pub points: PointConfig,
    pub initial_guess: f64,
    pub surrogate: SurrogateConfig,
    /// Samples along the potential contact arc for the pressure profile.
    pub profile_samples: usize,
}

fn halve(widths: &[usize]) -> Vec<usize> {
    widths.iter().map(|w| w.div_ceil(2)).collect()
}

impl CaseConfig {
    /// Benchmark defaults for a case, mode and preset.
    pub fn defaults(case: Case, mode: Mode, preset: Preset) -> Self {
        let desk = preset == Preset::Desk;
        let (young, poisson, pressure, hidden) = match case {
            Case::Lame => (2000.0, 0.3, 1.0, vec![50; 3]),
            Case::Block => (1.33, 0.33, 0.1, vec![50; 5]),
            Case::Hertz if mode == Mode::Surrogate => (200.0, 0.3, 0.5, vec![75; 8]),
            Case::Hertz => (200.0, 0.3, 0.5, vec![50; 5]),
        };
        let hidden = if desk { halve(&hidden) } else { hidden };
        let points = match (case, mode, desk) {
            (Case::Lame, _, _) => PointConfig {
                interior: 262,
                boundary: 68,
                contact_share: None,
                refine: None,
            },
            (Case::Block, _, _) => PointConfig {
                interior: 434,
                boundary: 80,
                contact_share: None,
                refine: None,
            },
            (Case::Hertz, Mode::Surrogate, _) => PointConfig {
                interior: 1446,
                boundary: 500,
                contact_share: Some(0.4),
                refine: Some(Refinement {
                    count: 300,
                    region: [0.0, 0.3, -1.0, -0.85],
                }),
            },
            (Case::Hertz, _, true) => PointConfig {
                interior: 3000,
                boundary: 1000,
                contact_share: Some(0.4),
                refine: Some(Refinement {
                    count: 2000,
                    region: [0.0, 0.3, -1.0, -0.75],
                }),
            },
            (Case::Hertz, _, false) => PointConfig {
                interior: 32000,
                boundary: 5935,
                contact_share: Some(0.4),
                refine: Some(Refinement {
                    count: 10000,
                    region: [0.0, 0.3, -1.0, -0.75],
                }),
            },
        };
        let kkt = match (case, mode) {
            (Case::Hertz, Mode::Surrogate) => KktMethod::fischer_burmeister().scaled(1e4),
            (Case::Hertz, _) => KktMethod::fischer_burmeister().scaled(1e3),
            _ => KktMethod::fischer_burmeister(),
        };
        let mut weights = LossWeights::default();
        if case == Case::Hertz && matches!(mode, Mode::DataEnhanced | Mode::Inverse) {
            weights.exp = [1e4, 1e4, 0.1, 0.1, 0.1];
        }
        let lbfgs = LbfgsConfig {
            max_iters: match (desk, case) {
                (false, _) => 15000,
                (true, Case::Hertz) => 12000,
                (true, _) => 3000,
            },
            ..Default::default()
        };
        CaseConfig {
            case,
            mode,
            preset,
            seed: 0,
            young,
            poisson,
            pressure,
            geometry: GeometryConfig::default(),
            hidden,
            kkt,
            weights,
            adam: AdamConfig::default(),
            lbfgs,
            points,
            initial_guess: 0.1,
            surrogate: SurrogateConfig::default(),
            profile_samples: 400,
        }
    }

    pub fn validate(&self) -> Result<()> {
        MaterialParams::new(self.young, self.poisson)?;
        if !self.pressure.is_finite() {
            return Err(Error::Config("load pressure must be finite".into()));
        }
        Architecture::mixed(self.input_width(), self.hidden.clone())?;
        self.kkt.validate()?;
        self.weights.validate()?;
        self.adam.validate()?;
        self.lbfgs.validate()?;
        if self.mode == Mode::Surrogate {
            if self.case != Case::Hertz {
                return Err(Error::Config("surrogate mode is only defined for the hertz case".into()));
            }
            if self.surrogate.chunks < 1 {
                return Err(Error::Config("surrogate.chunks must be >= 1".into()));
            }
            let [lo, hi] = self.surrogate.pressure_range;
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config("surrogate.pressure_range must satisfy lo <= hi".into()));
            }
        }
        if self.mode == Mode::Inverse && !self.initial_guess.is_finite() {
            return Err(Error::Config("inverse.initial_guess must be finite".into()));
        }
        if self.points.interior == 0 {
            return Err(Error::EmptyCollocation);
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        if self.mode == Mode::Surrogate {
            3
        } else {
            2
        }
    }

    pub fn material(&self) -> Result<MaterialParams> {
        MaterialParams::new(self.young, self.poisson)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        Architecture::mixed(self.input_width(), self.hidden.clone())
    }

    fn counts(&self) -> Counts {
        Counts::new(self.points.interior, self.points.boundary)
    }

    pub fn half_cylinder_options(&self) -> HalfCylinderOptions {
        HalfCylinderOptions {
            symmetric: self.geometry.symmetric,
            contact_share: self.points.contact_share,
            refine: self.points.refine.as_ref().map(|r| (r.count, r.region)),
            ..Default::default()
        }
    }

    /// Training and test points of the case.
    pub fn sample_points(&self) -> Result<PointSet> {
        let g = &self.geometry;
        match self.case {
            Case::Lame => sample_quarter_annulus(g.inner_radius, g.outer_radius, self.counts(), self.seed),
            Case::Block => sample_unit_square(g.length, self.counts(), self.seed),
            Case::Hertz => {
                sample_half_cylinder(g.radius, g.alpha_deg, self.counts(), self.seed, &self.half_cylinder_options())
            }
        }
    }

    /// Structured test mesh whose nodes are the test points.
    pub fn test_mesh(&self) -> StructuredMesh {
        let g = &self.geometry;
        match self.case {
            Case::Lame => lame_test_mesh(g.inner_radius, g.outer_radius),
            Case::Block => StructuredMesh::rectangle([0.0, g.length, 0.0, g.length], 109, 109),
            Case::Hertz => {
                let (nu, nv) = HalfCylinderOptions::default().test_mesh;
                half_cylinder_test_mesh(g.radius, g.symmetric, nu, nv)
            }
        }
    }

    /// Case-specific hard-constraint output transform.
    pub fn transform(&self) -> OutputTransform {
        let e = self.young;
        let load = match self.mode {
            Mode::Inverse => LoadSource::Trainable(0),
            Mode::Surrogate => LoadSource::Input(2),
            _ => LoadSource::Fixed(self.pressure),
        };
        let id = ComponentRule::identity;
        let rule = ComponentRule::new;
        let components = match self.case {
            Case::Lame => vec![
                rule(Offset::Zero, vec![AffineFactor::x()], 1.0 / e),
                rule(Offset::Zero, vec![AffineFactor::y()], 1.0 / e),
                id(),
                id(),
                rule(Offset::Zero, vec![AffineFactor::x(), AffineFactor::y()], 1.0),
            ],
            Case::Block => {
                let l = self.geometry.length;
                vec![
                    rule(Offset::Zero, vec![AffineFactor::x()], 1.0),
                    id(),
                    rule(Offset::Zero, vec![AffineFactor::l_minus_x(l)], 1.0),
                    rule(Offset::NegLoad, vec![AffineFactor::l_minus_y(l)], 1.0),
                    rule(
                        Offset::Zero,
                        vec![AffineFactor::x(), AffineFactor::l_minus_y(l), AffineFactor::l_minus_x(l)],
                        1.0,
                    ),
                ]
            }
            Case::Hertz => vec![
                rule(Offset::Zero, vec![AffineFactor::x()], -1.0 / e),
                rule(Offset::Zero, vec![], 1.0 / e),
                id(),
                rule(Offset::NegLoad, vec![AffineFactor::neg_y()], 1.0),
                rule(Offset::Zero, vec![AffineFactor::x(), AffineFactor::y()], 1.0),
            ],
        };
        OutputTransform { components, load }
    }

    /// Height of the rigid obstacle surface.
    pub fn surface_y(&self) -> f64 {
        match self.case {
            Case::Hertz => -self.geometry.radius,
            _ => 0.0,
        }
    }

    /// Initial parameters: Glorot weights plus the load guess in inverse mode.
    pub fn initial_params(&self) -> Result<NetworkParams> {
        let p = NetworkParams::glorot_uniform(&self.architecture()?, self.seed)?;
        Ok(if self.mode == Mode::Inverse {
            p.with_extra("p", self.initial_guess)
        } else {
            p
        })
    }

    /// Assembles the training loss over `points`.
    pub fn build_problem(&self, points: &PointSet, data: Option<&ExperimentalData>) -> Result<Problem> {
        self.validate()?;
        let needs_data = matches!(self.mode, Mode::DataEnhanced | Mode::Inverse);
        if needs_data && data.is_none_or(|d| d.is_empty()) {
            return Err(Error::DataFile(format!(
                "{} mode requires experimental data",
                match self.mode {
                    Mode::Inverse => "inverse",
                    _ => "data_enhanced",
                }
            )));
        }
        let width = self.input_width();
        if let Some(d) = data {
            if let Some(o) = d.observations.iter().find(|o| o.input.len() != width) {
                return Err(Error::Shape(format!(
                    "data rows have {} inputs, network expects {width}",
                    o.input.len()
                )));
            }
        }

        // surrogate: every chunk replicates the spatial points with fresh
        // uniformly drawn pressures
        let chunks = if self.mode == Mode::Surrogate { self.surrogate.chunks } else { 1 };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let [plo, phi] = self.surrogate.pressure_range;
        let mut input = |xy: [f64; 2]| -> Vec<f64> {
            if width == 3 {
                let p = if phi > plo { rng.random_range(plo..=phi) } else { plo };
                vec![xy[0], xy[1], p]
            } else {
                vec![xy[0], xy[1]]
            }
        };

        let mut interior_rows = Vec::with_capacity(chunks * points.interior.len() * width);
        let mut neumann = Vec::new();
        let mut contact_sites = Vec::new();
        let mut contact_rows = Vec::new();
        for _ in 0..chunks {
            for &p in &points.interior {
                interior_rows.extend(input(p));
            }
            for b in &points.boundary {
                match (self.case, b.tag) {
                    (Case::Lame, Tag::Nbc(2)) | (Case::Hertz, Tag::Nbc(3)) => {
                        neumann.push((
                            input(b.position),
                            TractionTarget {
                                normal: b.normal,
                                traction: [0.0, 0.0],
                            },
                        ));
                    }
                    (Case::Lame, Tag::Nbc(4)) => neumann.push((
                        input(b.position),
                        TractionTarget {
                            normal: b.normal,
                            traction: [-self.pressure * b.normal[0], -self.pressure * b.normal[1]],
                        },
                    )),
                    (Case::Block | Case::Hertz, Tag::Contact) => {
                        contact_sites.push(ContactSite {
                            reference: b.position,
                            normal: b.normal,
                            tangent: b.tangent,
                        });
                        contact_rows.extend(input(b.position));
                    }
                    // remaining edges are satisfied exactly by the transform
                    _ => {}
                }
            }
        }
        let n_int = interior_rows.len() / width;
        let interior = Array2::from_shape_vec((n_int, width), interior_rows).expect("rows of equal width");
        let contact = (!contact_sites.is_empty()).then(|| ContactSet {
            inputs: Array2::from_shape_vec((contact_sites.len(), width), contact_rows).expect("rows of equal width"),
            sites: contact_sites,
            surface_y: self.surface_y(),
            method: self.kkt,
        });
        let extra_names = if self.mode == Mode::Inverse { vec!["p".to_string()] } else { vec![] };
        Problem::new(ProblemSpec {
            arch: self.architecture()?,
            transform: self.transform(),
            material: self.material()?,
            weights: self.weights.clone(),
            extra_names,
            interior,
            neumann,
            dirichlet: Vec::new(),
            contact,
            data: if needs_data { data.cloned() } else { None },
        })
    }
}

/// Grouped relative errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub u: f64,
    pub sigma: f64,
}

/// Contact pressure along the potential contact arc.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PressureProfile {
    pub x: Vec<f64>,
    /// Arc length from the lowest point.
    pub s: Vec<f64>,
    /// Predicted `-p_n`, compressive positive.
    pub pc: Vec<f64>,
}

impl PressureProfile {
    /// Trapezoid integral over arc length.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.s, &self.pc)
    }

    /// Largest `x` at which the pressure is at least `fraction` of its peak.
    pub fn half_width(&self, fraction: f64) -> f64 {
        let peak = self.pc.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        if !(peak > 0.0) {
            return 0.0;
        }
        self.x
            .iter()
            .zip(&self.pc)
            .filter(|(_, &p)| p >= fraction * peak)
            .map(|(&x, _)| x.abs())
            .fold(0.0, f64::max)
    }
}

/// Samples the predicted contact pressure at `n` points of the arc of a
/// circle of `radius` centred at the origin, for `0 <= x <= x_max`.
/// `extra_inputs` are appended to every network input (surrogate load).
pub fn contact_pressure_profile(
    params: &NetworkParams,
    transform: &OutputTransform,
    radius: f64,
    x_max: f64,
    n: usize,
    extra_inputs: &[f64],
) -> Result<PressureProfile> {
    if n < 2 {
        return Err(Error::Config("pressure profile needs at least 2 samples".into()));
    }
    let width = 2 + extra_inputs.len();
    let mut inputs = Array2::zeros((n, width));
    let mut x = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for k in 0..n {
        let xi = x_max * k as f64 / (n - 1) as f64;
        let phi = (xi / radius).asin();
        let y = -radius * phi.cos();
        inputs[[k, 0]] = xi;
        inputs[[k, 1]] = y;
        for (j, &e) in extra_inputs.iter().enumerate() {
            inputs[[k, 2 + j]] = e;
        }
        x.push(xi);
        s.push(radius * phi);
        normals.push([xi / radius, y / radius]);
    }
    let fields = forward_batch(params, transform, inputs.view(), false)?;
    let pc = (0..n)
        .map(|k| {
            let v = fields.values.row(k);
            let n = normals[k];
            let (p, _) = traction_decompose([v[SXX], v[SYY], v[SXY]], n, [-n[1], n[0]]);
            -p
        })
        .collect();
    Ok(PressureProfile { x, s, pc })
}

/// Contact-pressure comparison against the analytical distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactReport {
    pub integral: f64,
    pub expected_integral: f64,
    pub half_width: f64,
    pub analytical_half_width: f64,
    /// Relative L2 of the profile against the analytical pressure.
    pub profile_l2: f64,
    pub peak: f64,
    pub analytical_peak: f64,
}

/// Held-out evaluation of a pressure surrogate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateScore {
    pub pressure: f64,
    /// Relative L2 of the profile over `[0, b(p)]`.
    pub profile_l2: f64,
    pub integral: f64,
    pub expected_integral: f64,
    /// Outside the training pressure range.
    pub extrapolation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub case: Case,
    pub mode: Mode,
    pub seed: u64,
    pub test_points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_vector: Option<FieldErrors>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2_integral: Option<FieldErrors>,
    /// Largest absolute error of `(u_x, u_y, s_xx, s_yy, s_xy)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_abs: Option<Vec<f64>>,
    pub final_loss: LossBreakdown,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contact: Option<ContactReport>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub identified: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub surrogate: Vec<SurrogateScore>,
    pub stop_reason: String,
    pub epochs: usize,
}

impl ErrorReport {
    /// Every reported error and loss value is non-negative.
    pub fn is_non_negative(&self) -> bool {
        let groups = [&self.l2_vector, &self.l2_integral];
        groups.iter().flat_map(|g| g.iter()).all(|e| e.u >= 0.0 && e.sigma >= 0.0)
            && self.max_abs.iter().flatten().all(|&v| v >= 0.0)
            && self.final_loss.total >= 0.0
    }
}

/// Trained model, its evaluation and the training history.
#[derive(Clone, Debug)]
pub struct CaseRun {
    pub config: CaseConfig,
    pub params: NetworkParams,
    pub transform: OutputTransform,
    pub points: PointSet,
    pub report: ErrorReport,
    pub records: Vec<TrainRecord>,
    /// Predictions on the test points (nominal load in surrogate mode).
    pub test_fields: Array2<f64>,
    pub profile: Option<PressureProfile>,
}

/// Transformed outputs at spatial points, with `extra` appended to each
/// input row.
pub fn predict(
    params: &NetworkParams,
    transform: &OutputTransform,
    points: &[[f64; 2]],
    extra: &[f64],
) -> Result<Array2<f64>> {
    let width = 2 + extra.len();
    let mut inputs = Array2::zeros((points.len(), width));
    for (i, p) in points.iter().enumerate() {
        inputs[[i, 0]] = p[0];
        inputs[[i, 1]] = p[1];
        for (j, &e) in extra.iter().enumerate() {
            inputs[[i, 2 + j]] = e;
        }
    }
    Ok(forward_batch(params, transform, inputs.view(), false)?.values)
}

/// Analytical fields at the test points, where available.
pub fn reference_fields(cfg: &CaseConfig, points: &[[f64; 2]]) -> Result<Option<Array2<f64>>> {
    let g = &cfg.geometry;
    let mut out = Array2::zeros((points.len(), 5));
    for (i, p) in points.iter().enumerate() {
        let v = match cfg.case {
            Case::Lame => lame_fields(p[0], p[1], g.inner_radius, g.outer_radius, cfg.pressure, cfg.young, cfg.poisson)?,
            Case::Block => block_analytical(p[0], p[1], cfg.pressure, cfg.young, cfg.poisson),
            Case::Hertz => return Ok(None),
        };
        out.row_mut(i).assign(&ndarray::ArrayView1::from(&v));
    }
    Ok(Some(out))
}

fn field_errors(pred: ArrayView2<'_, f64>, reference: ArrayView2<'_, f64>, mesh: Option<&StructuredMesh>) -> Result<(FieldErrors, Option<FieldErrors>)> {
    let vector = FieldErrors {
        u: relative_l2_vector(pred, reference, &U_GROUP)?,
        sigma: relative_l2_vector(pred, reference, &SIGMA_GROUP)?,
    };
    let integral = match mesh {
        Some(m) => Some(FieldErrors {
            u: relative_l2_integral(pred, reference, &U_GROUP, m)?,
            sigma: relative_l2_integral(pred, reference, &SIGMA_GROUP, m)?,
        }),
        None => None,
    };
    Ok((vector, integral))
}

/// Contact report of a half-cylinder model at load `p`.
pub fn hertz_contact_report(cfg: &CaseConfig, params: &NetworkParams, transform: &OutputTransform, p: f64, extra: &[f64]) -> Result<(ContactReport, PressureProfile)> {
    let g = &cfg.geometry;
    let x_max = g.radius * g.alpha_deg.to_radians().sin();
    let profile = contact_pressure_profile(params, transform, g.radius, x_max, cfg.profile_samples, extra)?;
    let analytical: Vec<f64> = profile
        .x
        .iter()
        .map(|&x| hertz_pressure(x, g.radius, p, cfg.young, cfg.poisson))
        .collect();
    let expected_integral = if g.symmetric { g.radius * p } else { 2.0 * g.radius * p };
    let report = ContactReport {
        integral: profile.integral(),
        expected_integral,
        half_width: profile.half_width(0.05),
        analytical_half_width: hertz_half_width(g.radius, p, cfg.young, cfg.poisson),
        profile_l2: relative_l2_profile(&profile.s, &profile.pc, &analytical)?,
        peak: profile.pc.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)),
        analytical_peak: hertz_pressure(0.0, g.radius, p, cfg.young, cfg.poisson),
    };
    Ok((report, profile))
}

/// Scores a surrogate at pressure `p` on `samples` points over `[0, b(p)]`.
pub fn surrogate_score(cfg: &CaseConfig, params: &NetworkParams, transform: &OutputTransform, p: f64) -> Result<SurrogateScore> {
    let g = &cfg.geometry;
    let b = hertz_half_width(g.radius, p, cfg.young, cfg.poisson);
    let profile = contact_pressure_profile(params, transform, g.radius, b, cfg.surrogate.samples.max(2), &[p])?;
    let analytical: Vec<f64> = profile
        .x
        .iter()
        .map(|&x| hertz_pressure(x, g.radius, p, cfg.young, cfg.poisson))
        .collect();
    let mut pred = ndarray::Array2::zeros((profile.pc.len(), 1));
    let mut reference = ndarray::Array2::zeros((profile.pc.len(), 1));
    for k in 0..profile.pc.len() {
        pred[[k, 0]] = profile.pc[k];
        reference[[k, 0]] = analytical[k];
    }
    let [lo, hi] = cfg.surrogate.pressure_range;
    Ok(SurrogateScore {
        pressure: p,
        profile_l2: relative_l2_vector(pred.view(), reference.view(), &[0])?,
        integral: profile.integral(),
        expected_integral: if g.symmetric { g.radius * p } else { 2.0 * g.radius * p },
        extrapolation: p < lo || p > hi,
    })
}

/// Trains the configured case and evaluates it.
pub fn run_case(cfg: &CaseConfig, data: Option<&ExperimentalData>, observer: &mut Observer<'_>) -> Result<CaseRun> {
    cfg.validate()?;
    let points = cfg.sample_points()?;
    let mut problem = cfg.build_problem(&points, data)?;
    let mut params = cfg.initial_params()?;
    let mut theta = params.theta().to_vec();
    log::info!(
        "{} {:?}: {} trainables, {} interior rows",
        cfg.case.name(),
        cfg.mode,
        theta.len(),
        problem.interior_len()
    );
    let outcome = train_two_phase(&mut problem, &cfg.adam, &cfg.lbfgs, &mut theta, observer)?;
    params.set_theta(&theta)?;
    let transform = problem.transform().clone();
    let final_loss = problem.loss(&theta)?;
    let report = evaluate(cfg, &params, &transform, &points, final_loss, &outcome.records, outcome.stop_reason.as_str())?;
    let extra: Vec<f64> = if cfg.mode == Mode::Surrogate { vec![cfg.pressure] } else { vec![] };
    let test_fields = predict(&params, &transform, &points.test, &extra)?;
    let profile = if cfg.case == Case::Hertz {
        Some(hertz_contact_report(cfg, &params, &transform, cfg.pressure, &extra)?.1)
    } else {
        None
    };
    Ok(CaseRun {
        config: cfg.clone(),
        params,
        transform,
        points,
        report,
        records: outcome.records,
        test_fields,
        profile,
    })
}

/// Error report of trained parameters.
pub fn evaluate(
    cfg: &CaseConfig,
    params: &NetworkParams,
    transform: &OutputTransform,
    points: &PointSet,
    final_loss: LossBreakdown,
    records: &[TrainRecord],
    stop_reason: &str,
) -> Result<ErrorReport> {
    let extra: Vec<f64> = if cfg.mode == Mode::Surrogate { vec![cfg.pressure] } else { vec![] };
    let pred = predict(params, transform, &points.test, &extra)?;
    let reference = reference_fields(cfg, &points.test)?;
    let mesh = cfg.test_mesh();
    let mesh = (mesh.nodes == points.test).then_some(mesh);
    let (l2_vector, l2_integral, max_abs) = match &reference {
        Some(r) => {
            let (v, i) = field_errors(pred.view(), r.view(), mesh.as_ref())?;
            (Some(v), i, Some(max_abs_errors(pred.view(), r.view())?))
        }
        None => (None, None, None),
    };
    let contact = if cfg.case == Case::Hertz && cfg.mode != Mode::Surrogate {
        // compared against the applied load, also in inverse mode
        Some(hertz_contact_report(cfg, params, transform, cfg.pressure, &extra)?.0)
    } else {
        None
    };
    let surrogate = if cfg.mode == Mode::Surrogate {
        cfg.surrogate
            .held_out
            .iter()
            .map(|&p| surrogate_score(cfg, params, transform, p))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let identified = params
        .extra_names()
        .iter()
        .cloned()
        .zip(params.extras().iter().copied())
        .collect();
    Ok(ErrorReport {
        case: cfg.case,
        mode: cfg.mode,
        seed: cfg.seed,
        test_points: points.test.len(),
        l2_vector,
        l2_integral,
        max_abs,
        final_loss,
        contact,
        identified,
        surrogate,
        stop_reason: stop_reason.to_string(),
        epochs: records.len(),
    })
}
