//! Network evaluation, output transforms and exact derivatives.

mod mlp;
mod transform;

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use mlp::{Architecture, Mlp, NetworkParams, Trace};
pub use transform::{AffineFactor, ComponentRule, Fields, LoadSource, Offset, OutputTransform};

use crate::error::{Error, Result};

/// Spatial tangent directions `(x, y)` used for every PDE residual.
pub const SPATIAL: [usize; 2] = [0, 1];

fn check_input(params: &NetworkParams, x: &[f64]) -> Result<()> {
    if !params.is_finite() {
        return Err(Error::NonFinite("network parameters".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network input".into()));
    }
    if x.len() != params.architecture().input_width {
        return Err(Error::Shape(format!(
            "expects {} inputs, got {}",
            params.architecture().input_width,
            x.len()
        )));
    }
    Ok(())
}

/// Transformed outputs at a single input point.
pub fn forward(params: &NetworkParams, transform: &OutputTransform, x: &[f64]) -> Result<Vec<f64>> {
    check_input(params, x)?;
    let input = ArrayView2::from_shape((1, x.len()), x).expect("single row");
    let fields = forward_batch(params, transform, input, false)?;
    Ok(fields.values.row(0).to_vec())
}

/// `d(output_i)/d(x_j)` for the spatial inputs `j in {x, y}`; shape
/// `outputs x 2`.
pub fn input_jacobian(
    params: &NetworkParams,
    transform: &OutputTransform,
    x: &[f64],
) -> Result<Array2<f64>> {
    check_input(params, x)?;
    let input = ArrayView2::from_shape((1, x.len()), x).expect("single row");
    let fields = forward_batch(params, transform, input, true)?;
    let [gx, gy] = fields.grads.expect("traced with tangents");
    let m = transform.width();
    let mut jac = Array2::zeros((m, 2));
    for c in 0..m {
        jac[[c, 0]] = gx[[0, c]];
        jac[[c, 1]] = gy[[0, c]];
    }
    Ok(jac)
}

/// Transformed outputs for a batch of points (one per row).
pub fn forward_batch(
    params: &NetworkParams,
    transform: &OutputTransform,
    inputs: ArrayView2<'_, f64>,
    with_jacobian: bool,
) -> Result<Fields> {
    let tangents: &[usize] = if with_jacobian { &SPATIAL } else { &[] };
    let trace = params.mlp().forward_trace(inputs, tangents)?;
    let fields = transform.apply(inputs, trace.output(), params.extras())?;
    if fields.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok(fields)
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct LayerRecord {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_out x fan_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct ExtraRecord {
    name: String,
    value: f64,
}

/// Versioned JSON checkpoint: layer shapes with row-major values, the
/// initialization seed, extra trainables and the output transform needed
/// to reproduce predictions.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub case: Option<String>,
    pub architecture: Architecture,
    layers: Vec<LayerRecord>,
    seed: u64,
    extras: Vec<ExtraRecord>,
    pub transform: OutputTransform,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn new(params: &NetworkParams, transform: &OutputTransform, case: Option<&str>) -> Self {
        let arch = params.architecture().clone();
        let layers = (0..arch.layer_count())
            .map(|l| {
                let (w, b) = params.layer(l);
                LayerRecord {
                    fan_in: w.ncols(),
                    fan_out: w.nrows(),
                    weights: w.iter().copied().collect(),
                    bias: b.to_vec(),
                }
            })
            .collect();
        let extras = params
            .extra_names()
            .iter()
            .zip(params.extras())
            .map(|(name, &value)| ExtraRecord {
                name: name.clone(),
                value,
            })
            .collect();
        Checkpoint {
            version: Self::VERSION,
            case: case.map(str::to_string),
            architecture: arch,
            layers,
            seed: params.seed(),
            extras,
            transform: transform.clone(),
        }
    }

    pub fn params(&self) -> Result<NetworkParams> {
        if self.version != Self::VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {}", self.version)));
        }
        let widths = self.architecture.widths();
        if self.layers.len() + 1 != widths.len() {
            return Err(Error::Checkpoint("layer count does not match architecture".into()));
        }
        let mut theta = Vec::with_capacity(self.architecture.parameter_count());
        for (layer, pair) in self.layers.iter().zip(widths.windows(2)) {
            if layer.fan_in != pair[0]
                || layer.fan_out != pair[1]
                || layer.weights.len() != pair[0] * pair[1]
                || layer.bias.len() != pair[1]
            {
                return Err(Error::Checkpoint("layer shape does not match architecture".into()));
            }
            theta.extend_from_slice(&layer.weights);
            theta.extend_from_slice(&layer.bias);
        }
        theta.extend(self.extras.iter().map(|e| e.value));
        let names = self.extras.iter().map(|e| e.name.clone()).collect();
        if self.transform.width() != self.architecture.output_width {
            return Err(Error::Checkpoint("transform width does not match outputs".into()));
        }
        NetworkParams::from_parts(self.architecture.clone(), theta, names, self.seed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text)?;
        ck.params()?;
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
