//! Assembly of the full PINN loss and its exact gradient over a flat
//! parameter vector.

use std::collections::BTreeMap;

use ndarray::{s, Array2, ArrayView2};

use crate::contact::{contact_terms, ContactSite, KktMethod};
use crate::elasticity::{
    data_term, dirichlet_term, neumann_term, pde_terms, ExperimentalData, LossBreakdown, LossWeights,
    MaterialParams, TractionTarget,
};
use crate::error::{Error, Result};
use crate::network::{Architecture, Fields, Mlp, NetworkParams, OutputTransform, SPATIAL};
use crate::optimize::Objective;

/// Contact boundary with the obstacle height and enforcement method.
#[derive(Clone, Debug)]
pub struct ContactSet {
    pub sites: Vec<ContactSite>,
    /// Network inputs of every site (`x, y` plus any extra input columns).
    pub inputs: Array2<f64>,
    pub surface_y: f64,
    pub method: KktMethod,
}

/// Loss definition over fixed point sets. Row groups of the boundary batch
/// are stacked in the order Neumann, Dirichlet, contact, data.
#[derive(Clone, Debug)]
pub struct Problem {
    arch: Architecture,
    transform: OutputTransform,
    material: MaterialParams,
    weights: LossWeights,
    extra_names: Vec<String>,
    interior: Array2<f64>,
    boundary: Array2<f64>,
    neumann: Vec<TractionTarget>,
    dirichlet: Vec<[Option<f64>; 2]>,
    contact: Option<ContactSet>,
    data: Vec<[Option<f64>; 5]>,
}

/// Builder input for [`Problem::new`].
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub arch: Architecture,
    pub transform: OutputTransform,
    pub material: MaterialParams,
    pub weights: LossWeights,
    /// Names of trainable scalars appended after the network values.
    pub extra_names: Vec<String>,
    pub interior: Array2<f64>,
    pub neumann: Vec<(Vec<f64>, TractionTarget)>,
    pub dirichlet: Vec<(Vec<f64>, [Option<f64>; 2])>,
    pub contact: Option<ContactSet>,
    pub data: Option<ExperimentalData>,
}

fn stack_rows(rows: &[&[f64]], width: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        if r.len() != width {
            return Err(Error::Shape(format!("point has {} inputs, network expects {width}", r.len())));
        }
        out.row_mut(i).assign(&ArrayView2::from_shape((1, width), r).expect("row").row(0));
    }
    Ok(out)
}

impl Problem {
    pub fn new(spec: ProblemSpec) -> Result<Self> {
        spec.arch.validate()?;
        spec.weights.validate()?;
        let width = spec.arch.input_width;
        if spec.transform.width() != spec.arch.output_width {
            return Err(Error::Shape("transform width does not match network outputs".into()));
        }
        if spec.interior.nrows() == 0 {
            return Err(Error::EmptyCollocation);
        }
        if spec.interior.ncols() != width {
            return Err(Error::Shape(format!(
                "interior points have {} inputs, network expects {width}",
                spec.interior.ncols()
            )));
        }
        let mut rows: Vec<&[f64]> = Vec::new();
        rows.extend(spec.neumann.iter().map(|(x, _)| x.as_slice()));
        rows.extend(spec.dirichlet.iter().map(|(x, _)| x.as_slice()));
        let contact_rows: Vec<Vec<f64>> = match &spec.contact {
            Some(c) => {
                if c.inputs.nrows() != c.sites.len() || c.inputs.ncols() != width {
                    return Err(Error::Shape("contact inputs do not match sites".into()));
                }
                c.method.validate()?;
                c.inputs.rows().into_iter().map(|r| r.to_vec()).collect()
            }
            None => Vec::new(),
        };
        rows.extend(contact_rows.iter().map(Vec::as_slice));
        let data: Vec<[Option<f64>; 5]> = spec
            .data
            .as_ref()
            .map(|d| d.observations.iter().map(|o| o.fields).collect())
            .unwrap_or_default();
        if let Some(d) = &spec.data {
            rows.extend(d.observations.iter().map(|o| o.input.as_slice()));
        }
        let boundary = stack_rows(&rows, width)?;
        Ok(Problem {
            arch: spec.arch,
            transform: spec.transform,
            material: spec.material,
            weights: spec.weights,
            extra_names: spec.extra_names,
            interior: spec.interior,
            boundary,
            neumann: spec.neumann.into_iter().map(|(_, t)| t).collect(),
            dirichlet: spec.dirichlet.into_iter().map(|(_, t)| t).collect(),
            contact: spec.contact,
            data,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn transform(&self) -> &OutputTransform {
        &self.transform
    }

    pub fn material(&self) -> &MaterialParams {
        &self.material
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn contact(&self) -> Option<&ContactSet> {
        self.contact.as_ref()
    }

    pub fn extra_names(&self) -> &[String] {
        &self.extra_names
    }

    pub fn parameter_count(&self) -> usize {
        self.arch.parameter_count() + self.extra_names.len()
    }

    pub fn interior_len(&self) -> usize {
        self.interior.nrows()
    }

    /// Loss terms only.
    pub fn loss(&self, theta: &[f64]) -> Result<LossBreakdown> {
        let mut grad = vec![0.0; theta.len()];
        self.loss_and_grad(theta, &mut grad)
    }

    /// Loss terms at `theta`, with the gradient of the total accumulated
    /// into `grad`.
    pub fn loss_and_grad(&self, theta: &[f64], grad: &mut [f64]) -> Result<LossBreakdown> {
        let net_len = self.arch.parameter_count();
        if theta.len() != self.parameter_count() || grad.len() != theta.len() {
            return Err(Error::Shape(format!(
                "expected {} trainables, got {} (gradient {})",
                self.parameter_count(),
                theta.len(),
                grad.len()
            )));
        }
        let mlp = Mlp::new(&self.arch, &theta[..net_len])?;
        let extras = &theta[net_len..];
        let (net_grad, extras_grad) = grad.split_at_mut(net_len);
        let mut loss = LossBreakdown::default();

        // interior: PDE residuals need spatial derivatives
        let trace = mlp.forward_trace(self.interior.view(), &SPATIAL)?;
        let fields = self.transform.apply(self.interior.view(), trace.output(), extras)?;
        let [dx, dy] = fields.grads.as_ref().expect("traced with tangents");
        let n = self.interior.nrows();
        let mut adj = Fields {
            values: Array2::zeros((n, 5)),
            grads: Some([Array2::zeros((n, 5)), Array2::zeros((n, 5))]),
        };
        {
            let [bx, by] = adj.grads.as_mut().expect("allocated");
            loss.pde_terms = pde_terms(
                fields.values.view(),
                dx.view(),
                dy.view(),
                &self.material,
                &self.weights.pde,
                adj.values.view_mut(),
                bx.view_mut(),
                by.view_mut(),
            )?;
        }
        let raw_bar = self.transform.pullback(self.interior.view(), &adj, extras_grad)?;
        mlp.backward_into(&trace, raw_bar, net_grad)?;

        // boundary and data rows: values only
        let m = self.boundary.nrows();
        if m > 0 {
            let trace = mlp.forward_trace(self.boundary.view(), &[])?;
            let fields = self.transform.apply(self.boundary.view(), trace.output(), extras)?;
            let v = &fields.values;
            let mut bar = Array2::zeros((m, 5));
            let mut at = 0;
            let mut range = |len: usize| {
                let r = at..at + len;
                at += len;
                r
            };
            let r = range(self.neumann.len());
            loss.nbc = neumann_term(
                v.slice(s![r.clone(), ..]),
                &self.neumann,
                &self.weights.nbc,
                bar.slice_mut(s![r, ..]),
            );
            let r = range(self.dirichlet.len());
            loss.dbc = dirichlet_term(
                v.slice(s![r.clone(), ..]),
                &self.dirichlet,
                &self.weights.dbc,
                bar.slice_mut(s![r, ..]),
            );
            if let Some(c) = &self.contact {
                let r = range(c.sites.len());
                let (fs, kkt) = contact_terms(
                    v.slice(s![r.clone(), ..]),
                    &c.sites,
                    c.surface_y,
                    &c.method,
                    self.weights.fs,
                    bar.slice_mut(s![r, ..]),
                )?;
                loss.fs = fs;
                loss.kkt = kkt;
            }
            let r = range(self.data.len());
            loss.exp = data_term(
                v.slice(s![r.clone(), ..]),
                &self.data,
                &self.weights.exp,
                bar.slice_mut(s![r, ..]),
            );
            let adj = Fields {
                values: bar,
                grads: None,
            };
            let raw_bar = self.transform.pullback(self.boundary.view(), &adj, extras_grad)?;
            mlp.backward_into(&trace, raw_bar, net_grad)?;
        }
        loss.finalize();
        if let Some(term) = loss.non_finite_term() {
            return Err(Error::NonFinite(format!("{term} loss")));
        }
        Ok(loss)
    }

    /// Wraps parameters for evaluation with this problem's layout.
    pub fn params(&self, theta: &[f64], seed: u64) -> Result<NetworkParams> {
        NetworkParams::from_parts(self.arch.clone(), theta.to_vec(), self.extra_names.clone(), seed)
    }
}

impl Objective for Problem {
    fn loss_and_grad(&mut self, theta: &[f64], grad: &mut [f64]) -> Result<LossBreakdown> {
        Problem::loss_and_grad(self, theta, grad)
    }

    fn parameters(&self, theta: &[f64]) -> BTreeMap<String, f64> {
        let net_len = self.arch.parameter_count();
        self.extra_names
            .iter()
            .cloned()
            .zip(theta[net_len..].iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::ContactSite;
    use crate::network::{AffineFactor, ComponentRule, LoadSource, Offset};
    use ndarray::array;

    fn tiny(with_contact: bool, trainable_load: bool) -> (Problem, Vec<f64>) {
        let arch = Architecture::mixed(2, vec![6, 5]).unwrap();
        let transform = OutputTransform {
            components: vec![
                ComponentRule::new(Offset::Zero, vec![AffineFactor::x()], 0.5),
                ComponentRule::identity(),
                ComponentRule::new(Offset::Zero, vec![AffineFactor::l_minus_x(1.0)], 1.0),
                ComponentRule::new(Offset::NegLoad, vec![AffineFactor::l_minus_y(1.0)], 1.0),
                ComponentRule::new(Offset::Zero, vec![AffineFactor::x(), AffineFactor::y()], 1.0),
            ],
            load: if trainable_load { LoadSource::Trainable(0) } else { LoadSource::Fixed(0.1) },
        };
        let sites = vec![
            ContactSite {
                reference: [0.3, 0.0],
                normal: [0.0, -1.0],
                tangent: [1.0, 0.0],
            },
            ContactSite {
                reference: [0.7, 0.0],
                normal: [0.0, -1.0],
                tangent: [1.0, 0.0],
            },
        ];
        let contact = with_contact.then(|| ContactSet {
            inputs: array![[0.3, 0.0], [0.7, 0.0]],
            sites,
            surface_y: 0.0,
            method: KktMethod::fischer_burmeister().scaled(3.0),
        });
        let data = ExperimentalData {
            observations: vec![crate::elasticity::Observation {
                input: vec![0.4, 0.6],
                fields: [Some(0.01), None, Some(-0.02), None, Some(0.0)],
            }],
        };
        let spec = ProblemSpec {
            arch: arch.clone(),
            transform,
            material: MaterialParams::new(1.33, 0.33).unwrap(),
            weights: LossWeights {
                pde: [1.0, 2.0, 0.5, 1.5, 1.0],
                nbc: [2.0, 3.0],
                ..Default::default()
            },
            extra_names: if trainable_load { vec!["p".into()] } else { vec![] },
            interior: array![[0.2, 0.3], [0.5, 0.5], [0.8, 0.1], [0.4, 0.9]],
            neumann: vec![(
                vec![1.0, 0.4],
                TractionTarget {
                    normal: [1.0, 0.0],
                    traction: [0.05, -0.02],
                },
            )],
            dirichlet: vec![(vec![0.0, 0.5], [Some(0.01), None])],
            contact,
            data: Some(data),
        };
        let mut p = NetworkParams::glorot_uniform(&arch, 17).unwrap();
        if trainable_load {
            p = p.with_extra("p", 0.3);
        }
        (Problem::new(spec).unwrap(), p.theta().to_vec())
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for (contact, load) in [(false, false), (true, false), (true, true)] {
            let (problem, theta) = tiny(contact, load);
            let mut grad = vec![0.0; theta.len()];
            problem.loss_and_grad(&theta, &mut grad).unwrap();
            let h = 1e-6;
            for i in (0..theta.len()).step_by(7).chain([theta.len() - 1]) {
                let mut tp = theta.clone();
                tp[i] += h;
                let mut tm = theta.clone();
                tm[i] -= h;
                let fd = (problem.loss(&tp).unwrap().total - problem.loss(&tm).unwrap().total) / (2.0 * h);
                let tol = 1e-5 * fd.abs().max(grad[i].abs()).max(1e-3);
                assert!((fd - grad[i]).abs() <= tol, "param {i}: fd {fd} vs {}", grad[i]);
            }
        }
    }

    #[test]
    fn loss_is_non_negative_and_sums_terms() {
        let (problem, theta) = tiny(true, true);
        let l = problem.loss(&theta).unwrap();
        for v in [l.pde, l.dbc, l.nbc, l.exp, l.fs, l.kkt] {
            assert!(v >= 0.0);
        }
        assert!(l.kkt > 0.0 && l.exp > 0.0 && l.dbc > 0.0 && l.nbc > 0.0);
        let sum = l.pde + l.dbc + l.nbc + l.exp + l.fs + l.kkt;
        assert!((sum - l.total).abs() <= 1e-15 * sum);
    }

    #[test]
    fn parameter_count_mismatch() {
        let (problem, theta) = tiny(false, false);
        assert!(problem.loss(&theta[1..]).is_err());
    }
}
