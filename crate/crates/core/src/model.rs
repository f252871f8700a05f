//! System interface: drift, metric, potentials and their derivatives, plus
//! the path and time-grid containers every other module works with.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Slow-variable coordinates at a single time node.
pub type StateVector = DVector<f64>;

/// Dense `n×n×n` tensor stored row-major, indexed `(a, b, c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.n + b) * self.n + c]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        self.data[(a * self.n + b) * self.n + c] = v;
    }

    /// The `n×n` slice with the first index fixed.
    pub fn slice(&self, a: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |b, c| self.get(a, b, c))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Dense `n×n×n×n` tensor stored row-major, indexed `(a, b, c, e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    n: usize,
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n * n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize, e: usize) -> f64 {
        self.data[((a * self.n + b) * self.n + c) * self.n + e]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, e: usize, v: f64) {
        self.data[((a * self.n + b) * self.n + c) * self.n + e] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// A statistical system whose paths are sampled.
///
/// Index conventions for the tensors:
/// - `theta_hessian(λ).get(k, i, j)` is `∂²Θ_k/∂λ_i∂λ_j`;
/// - `metric_gradient(λ).get(i, k, l)` is `∂g^{kl}/∂λ_i`;
/// - `metric_hessian(λ).get(i, j, k, l)` is `∂²g^{kl}/∂λ_i∂λ_j`.
///
/// Implementations must be pure: the same state always gives the same
/// values, and calls may come from several threads at once.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;
    fn dimension(&self) -> usize;

    fn theta(&self, state: &StateVector) -> DVector<f64>;
    fn theta_jacobian(&self, state: &StateVector) -> DMatrix<f64>;
    fn theta_hessian(&self, state: &StateVector) -> Tensor3;

    fn metric(&self, state: &StateVector) -> DMatrix<f64>;
    fn metric_gradient(&self, state: &StateVector) -> Tensor3;
    fn metric_hessian(&self, state: &StateVector) -> Tensor4;

    fn psi(&self, state: &StateVector) -> f64;
    fn psi_gradient(&self, state: &StateVector) -> DVector<f64>;
    fn psi_hessian(&self, state: &StateVector) -> DMatrix<f64>;

    /// Quadratic approximation `λᵀφλ` of `Ψ` used by the linearized action.
    fn phi_matrix(&self) -> DMatrix<f64>;

    /// Potential `Φ` driving the mean-path equation. Defaults to `λᵀφλ`.
    fn mean_path_potential(&self, state: &StateVector) -> f64 {
        state.dot(&(self.phi_matrix() * state))
    }

    fn mean_path_potential_gradient(&self, state: &StateVector) -> DVector<f64> {
        let phi = self.phi_matrix();
        (&phi + phi.transpose()) * state
    }
}

/// Sequence of `node_count` states stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    dim: usize,
    data: Vec<f64>,
}

impl Path {
    pub fn zeros(dim: usize, node_count: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * node_count],
        }
    }

    pub fn from_nodes(nodes: &[StateVector]) -> Result<Self> {
        let dim = nodes
            .first()
            .map(|n| n.len())
            .ok_or_else(|| Error::InvalidArgument("path needs at least one node".into()))?;
        let mut data = Vec::with_capacity(dim * nodes.len());
        for n in nodes {
            if n.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "path node",
                    expected: dim,
                    actual: n.len(),
                });
            }
            data.extend(n.iter());
        }
        Ok(Self { dim, data })
    }

    /// One-dimensional path from scalar node values.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            dim: 1,
            data: values.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn node(&self, n: usize) -> &[f64] {
        &self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn node_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.dim..(n + 1) * self.dim]
    }

    pub fn state(&self, n: usize) -> StateVector {
        DVector::from_column_slice(self.node(n))
    }

    pub fn set_state(&mut self, n: usize, state: &StateVector) {
        self.node_mut(n).copy_from_slice(state.as_slice());
    }

    pub fn states(&self) -> Vec<StateVector> {
        (0..self.node_count()).map(|n| self.state(n)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dyadic time grid with nodes `0..=2^m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    levels: usize,
    step_dt: f64,
    prefactor_tau: f64,
}

impl TimeGrid {
    /// `levels` is `m`; node spacing is `step_dt`; `prefactor_tau` multiplies
    /// the whole action.
    pub fn new(levels: usize, step_dt: f64, prefactor_tau: f64) -> Result<Self> {
        if levels == 0 {
            return Err(Error::InvalidGrid("m must be at least 1".into()));
        }
        if levels > 30 {
            return Err(Error::InvalidGrid(format!("m = {levels} is too large")));
        }
        if !(step_dt > 0.0 && step_dt.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "step_dt must be positive, got {step_dt}"
            )));
        }
        if !(prefactor_tau > 0.0 && prefactor_tau.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "prefactor_tau must be positive, got {prefactor_tau}"
            )));
        }
        Ok(Self {
            levels,
            step_dt,
            prefactor_tau,
        })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn step_dt(&self) -> f64 {
        self.step_dt
    }

    pub fn prefactor_tau(&self) -> f64 {
        self.prefactor_tau
    }

    /// Index of the final node, `M = 2^m`.
    pub fn final_node(&self) -> usize {
        1 << self.levels
    }

    pub fn node_count(&self) -> usize {
        self.final_node() + 1
    }

    pub fn time(&self, node: usize) -> f64 {
        node as f64 * self.step_dt
    }
}

/// Maximum relative deviation of each analytic derivative from a central
/// finite-difference estimate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DerivativeReport {
    pub theta_jacobian: f64,
    pub theta_hessian: f64,
    pub metric_gradient: f64,
    pub metric_hessian: f64,
    pub psi_gradient: f64,
    pub psi_hessian: f64,
    pub mean_path_potential_gradient: f64,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.entries().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }

    pub fn entries(&self) -> [(&'static str, f64); 7] {
        [
            ("theta_jacobian", self.theta_jacobian),
            ("theta_hessian", self.theta_hessian),
            ("metric_gradient", self.metric_gradient),
            ("metric_hessian", self.metric_hessian),
            ("psi_gradient", self.psi_gradient),
            ("psi_hessian", self.psi_hessian),
            (
                "mean_path_potential_gradient",
                self.mean_path_potential_gradient,
            ),
        ]
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

fn finite_or<'a, I: IntoIterator<Item = &'a f64>>(
    values: I,
    function: &str,
    probe: &StateVector,
) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            function: function.to_string(),
            probe: format!("{:?}", probe.as_slice()),
        })
    }
}

/// Compares every analytic derivative of `model` at `point` with central
/// differences of step `eps`.
pub fn validate_derivatives(
    model: &dyn Model,
    point: &StateVector,
    eps: f64,
) -> Result<DerivativeReport> {
    if !(eps > 0.0 && eps <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "eps must lie in (0, 1e-2], got {eps}"
        )));
    }
    let d = model.dimension();
    if point.len() != d {
        return Err(Error::DimensionMismatch {
            context: "validate_derivatives point",
            expected: d,
            actual: point.len(),
        });
    }

    let jac = model.theta_jacobian(point);
    let hess = model.theta_hessian(point);
    let mgrad = model.metric_gradient(point);
    let mhess = model.metric_hessian(point);
    let pgrad = model.psi_gradient(point);
    let phess = model.psi_hessian(point);
    let fgrad = model.mean_path_potential_gradient(point);
    finite_or(jac.iter(), "theta_jacobian", point)?;
    finite_or(hess.as_slice(), "theta_hessian", point)?;
    finite_or(mgrad.as_slice(), "metric_gradient", point)?;
    finite_or(mhess.as_slice(), "metric_hessian", point)?;
    finite_or(pgrad.iter(), "psi_gradient", point)?;
    finite_or(phess.iter(), "psi_hessian", point)?;
    finite_or(fgrad.iter(), "mean_path_potential_gradient", point)?;

    let mut report = DerivativeReport::default();
    for j in 0..d {
        let mut plus = point.clone();
        let mut minus = point.clone();
        plus[j] += eps;
        minus[j] -= eps;
        let h = 2.0 * eps;

        let (tp, tm) = (model.theta(&plus), model.theta(&minus));
        finite_or(tp.iter().chain(tm.iter()), "theta", &plus)?;
        let (jp, jm) = (model.theta_jacobian(&plus), model.theta_jacobian(&minus));
        finite_or(jp.iter().chain(jm.iter()), "theta_jacobian", &plus)?;
        let (gp, gm) = (model.metric(&plus), model.metric(&minus));
        finite_or(gp.iter().chain(gm.iter()), "metric", &plus)?;
        let (rp, rm) = (model.metric_gradient(&plus), model.metric_gradient(&minus));
        finite_or(
            rp.as_slice().iter().chain(rm.as_slice()),
            "metric_gradient",
            &plus,
        )?;
        let (sp, sm) = (model.psi(&plus), model.psi(&minus));
        finite_or([sp, sm].iter(), "psi", &plus)?;
        let (pp, pm) = (model.psi_gradient(&plus), model.psi_gradient(&minus));
        finite_or(pp.iter().chain(pm.iter()), "psi_gradient", &plus)?;
        let (fp, fm) = (
            model.mean_path_potential(&plus),
            model.mean_path_potential(&minus),
        );
        finite_or([fp, fm].iter(), "mean_path_potential", &plus)?;

        for k in 0..d {
            let num = (tp[k] - tm[k]) / h;
            report.theta_jacobian = report.theta_jacobian.max(rel_err(jac[(k, j)], num));
            for i in 0..d {
                // ∂/∂λ_j of ∂Θ_k/∂λ_i
                let num = (jp[(k, i)] - jm[(k, i)]) / h;
                report.theta_hessian = report.theta_hessian.max(rel_err(hess.get(k, i, j), num));
            }
        }
        for k in 0..d {
            for l in 0..d {
                let num = (gp[(k, l)] - gm[(k, l)]) / h;
                report.metric_gradient =
                    report.metric_gradient.max(rel_err(mgrad.get(j, k, l), num));
                for i in 0..d {
                    let num = (rp.get(i, k, l) - rm.get(i, k, l)) / h;
                    report.metric_hessian = report
                        .metric_hessian
                        .max(rel_err(mhess.get(i, j, k, l), num));
                }
            }
        }
        report.psi_gradient = report.psi_gradient.max(rel_err(pgrad[j], (sp - sm) / h));
        for i in 0..d {
            let num = (pp[i] - pm[i]) / h;
            report.psi_hessian = report.psi_hessian.max(rel_err(phess[(i, j)], num));
        }
        report.mean_path_potential_gradient = report
            .mean_path_potential_gradient
            .max(rel_err(fgrad[j], (fp - fm) / h));
    }
    Ok(report)
}

/// Structural checks at one state: metric symmetric and non-negative
/// definite, `Ψ ≥ 0`, `φ` symmetric and non-negative definite.
pub fn check_model_invariants(model: &dyn Model, point: &StateVector) -> Result<()> {
    let fail = |what: &str| {
        Err(Error::InvalidArgument(format!(
            "model `{}` violates {what} at {:?}",
            model.name(),
            point.as_slice()
        )))
    };
    let g = model.metric(point);
    let asym = (&g - g.transpose()).amax();
    if asym > 1e-12 * g.amax().max(1.0) {
        return fail("metric symmetry");
    }
    if g.clone().symmetric_eigen().eigenvalues.min() < -1e-12 * g.amax().max(1.0) {
        return fail("metric non-negative definiteness");
    }
    if model.psi(point) < 0.0 {
        return fail("psi >= 0");
    }
    let phi = model.phi_matrix();
    if (&phi - phi.transpose()).amax() > 1e-12 * phi.amax().max(1.0) {
        return fail("phi symmetry");
    }
    if phi.clone().symmetric_eigen().eigenvalues.min() < -1e-12 * phi.amax().max(1.0) {
        return fail("phi non-negative definiteness");
    }
    Ok(())
}
