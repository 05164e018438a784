//! Fully connected tanh network with batched forward-mode input tangents and
//! a reverse sweep that differentiates through both the values and the
//! tangents.
//!
//! A batch of `B` points is stored as a stacked row block: rows `0..B` carry
//! values, rows `B..2B` carry d/dx, rows `2B..3B` carry d/dy. Every affine
//! layer is then a single GEMM over the stacked block.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths of a fully connected network. Hidden layers use `tanh`,
/// the output layer is linear.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_width: usize,
    pub hidden: Vec<usize>,
    pub output_width: usize,
}

#[derive(Clone, Copy, Debug)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
}

impl Architecture {
    pub fn new(input_width: usize, hidden: Vec<usize>, output_width: usize) -> Result<Self> {
        let arch = Architecture {
            input_width,
            hidden,
            output_width,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// Mixed-variable elasticity network: outputs `(u_x, u_y, s_xx, s_yy, s_xy)`.
    pub fn mixed(input_width: usize, hidden: Vec<usize>) -> Result<Self> {
        Self::new(input_width, hidden, 5)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::InvalidArchitecture(
                "input and output widths must be at least 1".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArchitecture(
                "hidden widths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_width);
        w.extend_from_slice(&self.hidden);
        w.push(self.output_width);
        w
    }

    /// Number of affine layers (hidden layers plus the output layer).
    pub fn layer_count(&self) -> usize {
        self.hidden.len() + 1
    }

    pub fn parameter_count(&self) -> usize {
        self.widths()
            .windows(2)
            .map(|p| p[0] * p[1] + p[1])
            .sum()
    }

    fn layout(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.widths()
            .windows(2)
            .map(|p| {
                let slot = LayerSlot {
                    fan_in: p[0],
                    fan_out: p[1],
                    weight_offset: offset,
                    bias_offset: offset + p[0] * p[1],
                };
                offset += p[0] * p[1] + p[1];
                slot
            })
            .collect()
    }
}

/// All trainable values of a network: weights and biases, followed by
/// optional named scalars (e.g. an identified load in inverse mode).
///
/// Weights of layer `l` are stored row-major as a `fan_out x fan_in` matrix,
/// followed by the `fan_out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    arch: Architecture,
    theta: Vec<f64>,
    extra_names: Vec<String>,
    seed: u64,
}

impl NetworkParams {
    /// Glorot-uniform weights in `[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]`,
    /// zero biases, reproducible for a fixed seed.
    pub fn glorot_uniform(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = vec![0.0; arch.parameter_count()];
        for slot in arch.layout() {
            let limit = (6.0 / (slot.fan_in + slot.fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit)
                .map_err(|e| Error::InvalidArchitecture(e.to_string()))?;
            for w in &mut theta[slot.weight_offset..slot.bias_offset] {
                *w = dist.sample(&mut rng);
            }
        }
        Ok(NetworkParams {
            arch: arch.clone(),
            theta,
            extra_names: Vec::new(),
            seed,
        })
    }

    pub fn from_parts(
        arch: Architecture,
        theta: Vec<f64>,
        extra_names: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        let expected = arch.parameter_count() + extra_names.len();
        if theta.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} trainables, got {}",
                theta.len()
            )));
        }
        Ok(NetworkParams {
            arch,
            theta,
            extra_names,
            seed,
        })
    }

    /// Appends a named trainable scalar.
    pub fn with_extra(mut self, name: &str, value: f64) -> Self {
        self.extra_names.push(name.to_string());
        self.theta.push(value);
        self
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Every trainable, network values first, extras last.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.theta.len() {
            return Err(Error::Shape(format!(
                "expected {} trainables, got {}",
                self.theta.len(),
                theta.len()
            )));
        }
        self.theta.copy_from_slice(theta);
        Ok(())
    }

    pub fn network_len(&self) -> usize {
        self.arch.parameter_count()
    }

    pub fn extra_names(&self) -> &[String] {
        &self.extra_names
    }

    pub fn extras(&self) -> &[f64] {
        &self.theta[self.network_len()..]
    }

    pub fn extra(&self, name: &str) -> Option<f64> {
        let idx = self.extra_names.iter().position(|n| n == name)?;
        Some(self.theta[self.network_len() + idx])
    }

    pub fn mlp(&self) -> Mlp<'_> {
        Mlp {
            arch: &self.arch,
            theta: &self.theta[..self.network_len()],
        }
    }

    /// Weight matrix and bias vector of affine layer `l`.
    pub fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        self.mlp().layer(l)
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }
}

/// `tanh` within two ulp: rational form near the origin, one `exp` beyond.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 0.625 {
        let z = x * x;
        let p = (-9.643_991_794_250_522e-1 * z - 9.928_772_310_019_186e1) * z
            - 1.614_687_684_417_079_5e3;
        let q = ((z + 1.128_116_784_916_329_3e2) * z + 2.235_488_390_601_004_6e3) * z
            + 4.844_063_053_251_255e3;
        x + x * z * p / q
    } else {
        let e = (-2.0 * ax).exp();
        ((1.0 - e) / (1.0 + e)).copysign(x)
    }
}

/// Borrowed view of network values used for evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Mlp<'a> {
    arch: &'a Architecture,
    theta: &'a [f64],
}

/// Stored intermediate state of a batched forward pass.
#[derive(Debug)]
pub struct Trace {
    batch: usize,
    tangents: usize,
    /// `activations[0]` is the stacked input block; `activations[l]` the
    /// stacked output of hidden layer `l`.
    activations: Vec<Array2<f64>>,
    /// Pre-activation tangent rows of each hidden layer.
    pre_tangents: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Trace {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn tangents(&self) -> usize {
        self.tangents
    }

    /// Raw network outputs, `(1 + tangents) * batch` rows.
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl<'a> Mlp<'a> {
    pub fn new(arch: &'a Architecture, theta: &'a [f64]) -> Result<Self> {
        if theta.len() < arch.parameter_count() {
            return Err(Error::Shape(format!(
                "expected {} network values, got {}",
                arch.parameter_count(),
                theta.len()
            )));
        }
        Ok(Mlp {
            arch,
            theta: &theta[..arch.parameter_count()],
        })
    }

    pub fn architecture(&self) -> &Architecture {
        self.arch
    }

    pub fn layer(&self, l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let slot = self.arch.layout()[l];
        let w = ArrayView2::from_shape(
            (slot.fan_out, slot.fan_in),
            &self.theta[slot.weight_offset..slot.bias_offset],
        )
        .expect("layout is consistent");
        let b = ArrayView1::from(&self.theta[slot.bias_offset..slot.bias_offset + slot.fan_out]);
        (w, b)
    }

    /// Forward pass over `inputs` (one point per row). `tangent_dims` lists
    /// the input columns to differentiate with respect to; their tangent
    /// rows are appended below the value rows in the same order.
    pub fn forward_trace(&self, inputs: ArrayView2<'_, f64>, tangent_dims: &[usize]) -> Result<Trace> {
        let batch = inputs.nrows();
        let width = inputs.ncols();
        if width != self.arch.input_width {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {width}",
                self.arch.input_width
            )));
        }
        if let Some(&d) = tangent_dims.iter().find(|&&d| d >= width) {
            return Err(Error::Shape(format!("tangent dimension {d} out of range")));
        }
        let nt = tangent_dims.len();
        let rows = batch * (1 + nt);

        let mut a0 = Array2::zeros((rows, width));
        a0.slice_mut(s![..batch, ..]).assign(&inputs);
        for (t, &dim) in tangent_dims.iter().enumerate() {
            a0.slice_mut(s![(t + 1) * batch..(t + 2) * batch, dim]).fill(1.0);
        }

        let layers = self.arch.layer_count();
        let mut activations = Vec::with_capacity(layers);
        let mut pre_tangents = Vec::with_capacity(layers - 1);
        activations.push(a0);

        for l in 0..layers {
            let (w, b) = self.layer(l);
            let prev = activations.last().expect("input block present");
            let mut z = Array2::zeros((rows, w.nrows()));
            general_mat_mul(1.0, prev, &w.t(), 0.0, &mut z);
            {
                let mut zv = z.slice_mut(s![..batch, ..]);
                zv += &b;
            }
            if l + 1 == layers {
                return Ok(Trace {
                    batch,
                    tangents: nt,
                    activations,
                    pre_tangents,
                    output: z,
                });
            }
            let fan_out = z.ncols();
            let n = batch * fan_out;
            let buf = z.as_slice_mut().expect("contiguous");
            let (av, zt) = buf.split_at_mut(n);
            for a in av.iter_mut() {
                *a = tanh(*a);
            }
            pre_tangents.push(
                Array2::from_shape_vec((nt * batch, fan_out), zt.to_vec()).expect("tangent block"),
            );
            if n > 0 {
                for block in zt.chunks_mut(n) {
                    for (q, &a) in block.iter_mut().zip(av.iter()) {
                        *q *= 1.0 - a * a;
                    }
                }
            }
            activations.push(z);
        }
        unreachable!("loop returns at the output layer")
    }

    /// Reverse sweep. `output_adjoint` holds dL/d(raw output) for every row
    /// of the trace (values and tangents). Returns dL/d(network values) in
    /// the parameter layout.
    pub fn backward(&self, trace: &Trace, output_adjoint: Array2<f64>) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.arch.parameter_count()];
        self.backward_into(trace, output_adjoint, &mut grad)?;
        Ok(grad)
    }

    /// As [`Mlp::backward`], accumulating into `grad`.
    pub fn backward_into(
        &self,
        trace: &Trace,
        output_adjoint: Array2<f64>,
        grad: &mut [f64],
    ) -> Result<()> {
        if output_adjoint.dim() != trace.output.dim() {
            return Err(Error::Shape(format!(
                "adjoint shape {:?} does not match output {:?}",
                output_adjoint.dim(),
                trace.output.dim()
            )));
        }
        let batch = trace.batch;
        let layout = self.arch.layout();
        let mut zbar = output_adjoint;
        for l in (0..layout.len()).rev() {
            let slot = layout[l];
            let prev = &trace.activations[l];
            {
                let wbar = ArrayViewMut2::from_shape(
                    (slot.fan_out, slot.fan_in),
                    &mut grad[slot.weight_offset..slot.bias_offset],
                )
                .expect("layout is consistent");
                let mut wbar = wbar;
                general_mat_mul(1.0, &zbar.t(), prev, 1.0, &mut wbar);
            }
            {
                let bbar = zbar.slice(s![..batch, ..]).sum_axis(Axis(0));
                for (g, v) in grad[slot.bias_offset..slot.bias_offset + slot.fan_out]
                    .iter_mut()
                    .zip(bbar.iter())
                {
                    *g += v;
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            let mut abar = Array2::zeros((zbar.nrows(), slot.fan_in));
            general_mat_mul(1.0, &zbar, &w, 0.0, &mut abar);

            // Through tanh of hidden layer l-1.
            let act = &trace.activations[l];
            let pre_t = &trace.pre_tangents[l - 1];
            let width = slot.fan_in;
            let n = batch * width;
            let a = &act.as_slice().expect("contiguous")[..n];
            let zt = pre_t.as_slice().expect("contiguous");
            let buf = abar.as_slice_mut().expect("contiguous");
            let (bv, bt) = buf.split_at_mut(n);
            for i in 0..n {
                let mut cross = 0.0;
                for t in 0..trace.tangents {
                    cross += bt[t * n + i] * zt[t * n + i];
                }
                let d = 1.0 - a[i] * a[i];
                bv[i] = d * (bv[i] - 2.0 * a[i] * cross);
                for t in 0..trace.tangents {
                    bt[t * n + i] *= d;
                }
            }
            zbar = abar;
        }
        Ok(())
    }
}
