//! Output transformation `out_i = g_i + s_i * h_i(x) * N_i` that makes
//! selected boundary conditions hold exactly for any network values.
//!
//! `h` is a product of affine factors in the spatial coordinates, which
//! covers every closed-form distance function the benchmarks need.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `cx * x + cy * y + c0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineFactor {
    pub cx: f64,
    pub cy: f64,
    pub c0: f64,
}

impl AffineFactor {
    pub const fn new(cx: f64, cy: f64, c0: f64) -> Self {
        AffineFactor { cx, cy, c0 }
    }

    /// `x`
    pub const fn x() -> Self {
        Self::new(1.0, 0.0, 0.0)
    }

    /// `y`
    pub const fn y() -> Self {
        Self::new(0.0, 1.0, 0.0)
    }

    /// `-y`
    pub const fn neg_y() -> Self {
        Self::new(0.0, -1.0, 0.0)
    }

    /// `l - x`
    pub const fn l_minus_x(l: f64) -> Self {
        Self::new(-1.0, 0.0, l)
    }

    /// `l - y`
    pub const fn l_minus_y(l: f64) -> Self {
        Self::new(0.0, -1.0, l)
    }

    fn eval(&self, x: f64, y: f64) -> f64 {
        self.cx * x + self.cy * y + self.c0
    }
}

/// Prescribed offset `g` of one output component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Offset {
    Zero,
    Constant(f64),
    /// `g = -p`, with `p` taken from the transform's load source.
    NegLoad,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRule {
    pub offset: Offset,
    /// Factors of the distance function; empty means `h = 1`.
    pub factors: Vec<AffineFactor>,
    pub scale: f64,
}

impl ComponentRule {
    /// `out = N`
    pub fn identity() -> Self {
        ComponentRule {
            offset: Offset::Zero,
            factors: Vec::new(),
            scale: 1.0,
        }
    }

    pub fn new(offset: Offset, factors: Vec<AffineFactor>, scale: f64) -> Self {
        ComponentRule {
            offset,
            factors,
            scale,
        }
    }

    /// Distance function and its spatial gradient at `(x, y)`.
    pub fn distance(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut h = 1.0;
        let mut hx = 0.0;
        let mut hy = 0.0;
        for f in &self.factors {
            let v = f.eval(x, y);
            hx = hx * v + h * f.cx;
            hy = hy * v + h * f.cy;
            h *= v;
        }
        (h, hx, hy)
    }
}

/// Where the load `p` used by [`Offset::NegLoad`] comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LoadSource {
    Fixed(f64),
    /// Index into the extra trainables of the parameter set.
    Trainable(usize),
    /// Column of the network input (surrogate mode).
    Input(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputTransform {
    pub components: Vec<ComponentRule>,
    pub load: LoadSource,
}

/// Transformed outputs of a batch, with optional spatial derivatives.
#[derive(Clone, Debug)]
pub struct Fields {
    pub values: Array2<f64>,
    /// `[d/dx, d/dy]`, present when the batch was traced with tangents.
    pub grads: Option<[Array2<f64>; 2]>,
}

impl OutputTransform {
    /// No transformation: every output is the raw network output.
    pub fn identity(outputs: usize) -> Self {
        OutputTransform {
            components: vec![ComponentRule::identity(); outputs],
            load: LoadSource::Fixed(0.0),
        }
    }

    pub fn width(&self) -> usize {
        self.components.len()
    }

    fn load_at(&self, input: &[f64], extras: &[f64]) -> Result<f64> {
        match self.load {
            LoadSource::Fixed(p) => Ok(p),
            LoadSource::Trainable(i) => extras
                .get(i)
                .copied()
                .ok_or_else(|| Error::Shape(format!("missing extra trainable {i}"))),
            LoadSource::Input(c) => input
                .get(c)
                .copied()
                .ok_or_else(|| Error::Shape(format!("missing load input column {c}"))),
        }
    }

    /// Offset `g` at an input point.
    pub fn offset(&self, component: usize, input: &[f64], extras: &[f64]) -> Result<f64> {
        Ok(match self.components[component].offset {
            Offset::Zero => 0.0,
            Offset::Constant(c) => c,
            Offset::NegLoad => -self.load_at(input, extras)?,
        })
    }

    /// Applies the transform to raw outputs of a traced batch. `raw` holds
    /// `batch` value rows followed by `batch` rows per spatial tangent
    /// (zero or two tangent blocks).
    pub fn apply(
        &self,
        inputs: ArrayView2<'_, f64>,
        raw: &Array2<f64>,
        extras: &[f64],
    ) -> Result<Fields> {
        let batch = inputs.nrows();
        let m = self.width();
        if raw.ncols() != m {
            return Err(Error::Shape(format!(
                "transform has {m} components, network has {} outputs",
                raw.ncols()
            )));
        }
        let with_grad = match raw.nrows() / batch.max(1) {
            _ if batch == 0 => false,
            1 => false,
            3 => true,
            _ => {
                return Err(Error::Shape(
                    "transform needs zero or two spatial tangents".into(),
                ))
            }
        };
        let mut values = Array2::zeros((batch, m));
        let mut gx = Array2::zeros((if with_grad { batch } else { 0 }, m));
        let mut gy = Array2::zeros((if with_grad { batch } else { 0 }, m));
        for i in 0..batch {
            let input = inputs.row(i);
            let input = input.as_slice().ok_or_else(|| Error::Shape("non-contiguous input".into()))?;
            let (x, y) = (input[0], input[1]);
            for (c, rule) in self.components.iter().enumerate() {
                let g = self.offset(c, input, extras)?;
                let (h, hx, hy) = rule.distance(x, y);
                let n = raw[[i, c]];
                values[[i, c]] = g + rule.scale * h * n;
                if with_grad {
                    let nx = raw[[batch + i, c]];
                    let ny = raw[[2 * batch + i, c]];
                    gx[[i, c]] = rule.scale * (hx * n + h * nx);
                    gy[[i, c]] = rule.scale * (hy * n + h * ny);
                }
            }
        }
        Ok(Fields {
            values,
            grads: with_grad.then_some([gx, gy]),
        })
    }

    /// Pulls adjoints of the transformed fields back to the raw outputs.
    /// Gradients with respect to a trainable load are accumulated into
    /// `extras_grad`.
    pub fn pullback(
        &self,
        inputs: ArrayView2<'_, f64>,
        adjoint: &Fields,
        extras_grad: &mut [f64],
    ) -> Result<Array2<f64>> {
        let batch = inputs.nrows();
        let m = self.width();
        let rows = if adjoint.grads.is_some() { 3 * batch } else { batch };
        let mut raw = Array2::zeros((rows, m));
        for i in 0..batch {
            let (x, y) = (inputs[[i, 0]], inputs[[i, 1]]);
            for (c, rule) in self.components.iter().enumerate() {
                let (h, hx, hy) = rule.distance(x, y);
                let ubar = adjoint.values[[i, c]];
                let s = rule.scale;
                let mut nbar = s * h * ubar;
                if let Some([ax, ay]) = &adjoint.grads {
                    let (bx, by) = (ax[[i, c]], ay[[i, c]]);
                    nbar += s * (hx * bx + hy * by);
                    raw[[batch + i, c]] = s * h * bx;
                    raw[[2 * batch + i, c]] = s * h * by;
                }
                raw[[i, c]] = nbar;
                if let (Offset::NegLoad, LoadSource::Trainable(k)) = (rule.offset, self.load) {
                    extras_grad[k] -= ubar;
                }
            }
        }
        Ok(raw)
    }
}
