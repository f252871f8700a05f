//! Exact discretized action and the finest-level quadratic approximations.
//!
//! The quadratic action at level `k` is stored per active node `l` (the
//! multiples of `Δ = 2^{m−k}`):
//!
//! ```text
//! S(k) = Σ_l ½ λ^lᵀ G^l λ^l + λ^lᵀ K^l
//!      + Σ_{l integrated} λ^lᵀ (H^{+l} λ^{l+Δ} + H^{−l} λ^{l−Δ})
//! ```
//!
//! where the integrated nodes are the odd multiples of `Δ`. Every coupling
//! between neighbours is carried by the integrated node only, so each pair
//! appears once. Node `0` is fixed at the anchor value; the endpoint `M` is an
//! ordinary survivor at every level.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, PrecisionGaussian};
use crate::linearization::{LinearizedDrift, MeanTrajectory};
use crate::model::{Model, Path, StateVector, Tensor3, Tensor4, TimeGrid};

/// Terms of one active node.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeTerms {
    pub g: DMatrix<f64>,
    pub k: DVector<f64>,
    /// Coupling to `l + Δ`; present on integrated nodes only.
    pub h_plus: Option<DMatrix<f64>>,
    /// Coupling to `l − Δ`; present on integrated nodes only.
    pub h_minus: Option<DMatrix<f64>>,
}

/// Quadratic action of one level, in working coordinates
/// `λ' = λ − origin`.
#[derive(Clone, Debug)]
pub struct QuadraticLevelAction {
    level: usize,
    levels: usize,
    dim: usize,
    terms: Vec<Option<NodeTerms>>,
    anchor: DVector<f64>,
    origin: Arc<Vec<StateVector>>,
    reference_value: f64,
    symmetry_correction: f64,
}

impl QuadraticLevelAction {
    /// Assembles a level from per-node terms after checking that exactly the
    /// active nodes carry terms and exactly the integrated ones carry
    /// couplings. `G` is symmetrized.
    pub fn from_terms(
        level: usize,
        levels: usize,
        mut terms: Vec<Option<NodeTerms>>,
        anchor: DVector<f64>,
        origin: Arc<Vec<StateVector>>,
        reference_value: f64,
    ) -> Result<Self> {
        if level > levels {
            return Err(Error::InvalidArgument(format!(
                "level {level} exceeds m = {levels}"
            )));
        }
        let final_node = 1usize << levels;
        if terms.len() != final_node + 1 || origin.len() != final_node + 1 {
            return Err(Error::DimensionMismatch {
                context: "level terms / origin node count",
                expected: final_node + 1,
                actual: terms.len().min(origin.len()),
            });
        }
        let dim = anchor.len();
        let span = final_node >> level;
        let mut symmetry_correction = 0.0_f64;
        for (node, t) in terms.iter_mut().enumerate() {
            let active = node > 0 && node % span == 0;
            let integrated = active && level > 0 && (node / span) % 2 == 1;
            match t {
                None if active => {
                    return Err(Error::InvalidArgument(format!(
                        "level {level}: active node {node} has no terms"
                    )))
                }
                Some(_) if !active => {
                    return Err(Error::InvalidArgument(format!(
                        "level {level}: inactive node {node} has terms"
                    )))
                }
                Some(t) => {
                    if t.g.nrows() != dim || t.g.ncols() != dim || t.k.len() != dim {
                        return Err(Error::DimensionMismatch {
                            context: "node terms",
                            expected: dim,
                            actual: t.k.len(),
                        });
                    }
                    if integrated != (t.h_plus.is_some() && t.h_minus.is_some()) {
                        return Err(Error::InvalidArgument(format!(
                            "level {level}: node {node} couplings inconsistent with its role"
                        )));
                    }
                    symmetry_correction = symmetry_correction.max(symmetrize(&mut t.g));
                }
                None => {}
            }
        }
        Ok(Self {
            level,
            levels,
            dim,
            terms,
            anchor,
            origin,
            reference_value,
            symmetry_correction,
        })
    }

    /// Finest level from a block-tridiagonal quadratic form on nodes `1..=M`
    /// with node `0` fixed at `anchor`:
    /// `Σ_n ½ λ^nᵀ D_n λ^n + λ^nᵀ b_n + Σ_{n=0}^{M−1} λ^nᵀ C_n λ^{n+1}`.
    ///
    /// `diag[n−1] = D_n`, `linear[n−1] = b_n`, `coupling[n] = C_n`.
    pub fn from_block_tridiagonal(
        levels: usize,
        diag: Vec<DMatrix<f64>>,
        linear: Vec<DVector<f64>>,
        coupling: Vec<DMatrix<f64>>,
        anchor: DVector<f64>,
        origin: Arc<Vec<StateVector>>,
        reference_value: f64,
    ) -> Result<Self> {
        let final_node = 1usize << levels;
        if diag.len() != final_node || linear.len() != final_node || coupling.len() != final_node {
            return Err(Error::DimensionMismatch {
                context: "block-tridiagonal blocks",
                expected: final_node,
                actual: diag.len().min(linear.len()).min(coupling.len()),
            });
        }
        let mut terms: Vec<Option<NodeTerms>> = vec![None; final_node + 1];
        for (i, (g, k)) in diag.into_iter().zip(linear).enumerate() {
            let node = i + 1;
            let (h_plus, h_minus) = if node % 2 == 1 {
                (
                    Some(coupling[node].clone()),
                    Some(coupling[node - 1].transpose()),
                )
            } else {
                (None, None)
            };
            terms[node] = Some(NodeTerms {
                g,
                k,
                h_plus,
                h_minus,
            });
        }
        Self::from_terms(levels, levels, terms, anchor, origin, reference_value)
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// `m`.
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn final_node(&self) -> usize {
        1 << self.levels
    }

    /// Node spacing `Δ = 2^{m−k}` of this level.
    pub fn span(&self) -> usize {
        self.final_node() >> self.level
    }

    pub fn terms(&self, node: usize) -> Option<&NodeTerms> {
        self.terms.get(node).and_then(|t| t.as_ref())
    }

    /// Nodes integrated out when coarsening this level, in time order.
    pub fn integrated_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let span = self.span();
        let count = if self.level == 0 {
            0
        } else {
            1usize << (self.level - 1)
        };
        (1..=count).map(move |n| span * (2 * n - 1))
    }

    /// Active nodes (multiples of `Δ`, excluding the fixed node 0).
    pub fn active_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        let span = self.span();
        (1..=(1usize << self.level)).map(move |n| n * span)
    }

    pub fn g_end(&self) -> &DMatrix<f64> {
        &self
            .terms(self.final_node())
            .expect("endpoint is always active")
            .g
    }

    pub fn k_end(&self) -> &DVector<f64> {
        &self
            .terms(self.final_node())
            .expect("endpoint is always active")
            .k
    }

    /// Working coordinate of the fixed node 0.
    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    /// Absolute coordinates of the expansion point; zero for actions built
    /// directly in absolute coordinates.
    pub fn origin(&self) -> &Arc<Vec<StateVector>> {
        &self.origin
    }

    /// Approximate action at the origin (constant term).
    pub fn reference_value(&self) -> f64 {
        self.reference_value
    }

    /// Largest asymmetry removed from any `G` when this level was built.
    pub fn symmetry_correction(&self) -> f64 {
        self.symmetry_correction
    }

    pub fn to_working(&self, node: usize, absolute: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(absolute) - &self.origin[node]
    }

    pub fn to_absolute(&self, node: usize, working: &DVector<f64>) -> DVector<f64> {
        working + &self.origin[node]
    }
}

/// Evaluates the finest-level quadratic action (including its constant term)
/// on an absolute-coordinate path.
pub fn quadratic_action_value(coeffs: &QuadraticLevelAction, path: &Path) -> Result<f64> {
    if coeffs.level() != coeffs.levels() {
        return Err(Error::InvalidArgument(format!(
            "quadratic_action_value needs the finest level {}, got level {}",
            coeffs.levels(),
            coeffs.level()
        )));
    }
    let final_node = coeffs.final_node();
    if path.node_count() != final_node + 1 || path.dim() != coeffs.dim() {
        return Err(Error::DimensionMismatch {
            context: "path for quadratic action",
            expected: final_node + 1,
            actual: path.node_count(),
        });
    }
    let start = coeffs.to_working(0, path.node(0));
    let scale = coeffs.anchor().amax().max(1.0);
    if (&start - coeffs.anchor()).amax() > 1e-9 * scale {
        return Err(Error::InvalidArgument(
            "path node 0 differs from the fixed initial condition".into(),
        ));
    }
    let working: Vec<DVector<f64>> = (0..=final_node)
        .map(|n| {
            if n == 0 {
                coeffs.anchor().clone()
            } else {
                coeffs.to_working(n, path.node(n))
            }
        })
        .collect();
    let mut value = coeffs.reference_value();
    for n in 1..=final_node {
        let t = coeffs.terms(n).expect("finest level has all nodes active");
        let w = &working[n];
        value += 0.5 * w.dot(&(&t.g * w)) + w.dot(&t.k);
        if let (Some(hp), Some(hm)) = (&t.h_plus, &t.h_minus) {
            value += w.dot(&(hp * &working[n + 1])) + w.dot(&(hm * &working[n - 1]));
        }
    }
    Ok(value)
}

fn check_path(path: &Path, model: &dyn Model) -> Result<()> {
    if path.dim() != model.dimension() {
        return Err(Error::DimensionMismatch {
            context: "path dimension",
            expected: model.dimension(),
            actual: path.dim(),
        });
    }
    if path.node_count() < 2 {
        return Err(Error::InvalidArgument(
            "path needs at least two nodes".into(),
        ));
    }
    Ok(())
}

fn non_finite(function: &str, node: usize) -> Error {
    Error::NonFinite {
        function: function.into(),
        probe: format!("node {node}"),
    }
}

/// `prefactor_tau·step_dt·Σ_{n≥1} [T(n)ᵀ h(n) T(n) + Ψ(n)]` for a path of any
/// length ≥ 2, with `T(n) = (λ(n)−λ(n−1))/step_dt − ½(Θ(n)+Θ(n−1))` and
/// `h(n) = ½(g(n)+g(n−1))`.
pub fn discretized_action(
    path: &Path,
    model: &dyn Model,
    step_dt: f64,
    prefactor_tau: f64,
) -> Result<f64> {
    check_path(path, model)?;
    let mut prev_state = path.state(0);
    let mut prev_theta = model.theta(&prev_state);
    let mut prev_g = model.metric(&prev_state);
    let mut sum = 0.0;
    for n in 1..path.node_count() {
        let state = path.state(n);
        let theta = model.theta(&state);
        let g = model.metric(&state);
        let t = (&state - &prev_state) / step_dt - 0.5 * (&theta + &prev_theta);
        let h = 0.5 * (&g + &prev_g);
        let term = t.dot(&(&h * &t)) + model.psi(&state);
        if !term.is_finite() {
            return Err(non_finite("exact_action", n));
        }
        sum += term;
        prev_state = state;
        prev_theta = theta;
        prev_g = g;
    }
    Ok(prefactor_tau * step_dt * sum)
}

/// Exact discretized action of a path on `grid`.
pub fn exact_action(path: &Path, model: &dyn Model, grid: &TimeGrid) -> Result<f64> {
    if path.node_count() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            context: "path node count",
            expected: grid.node_count(),
            actual: path.node_count(),
        });
    }
    discretized_action(path, model, grid.step_dt(), grid.prefactor_tau())
}

/// Finest-level action from the linearized drift, with `g ≈ g(0)` and
/// `Ψ ≈ λᵀφλ`, in absolute coordinates.
pub fn init_level_m_linearized(
    model: &dyn Model,
    lin: &LinearizedDrift,
    grid: &TimeGrid,
) -> Result<QuadraticLevelAction> {
    let final_node = grid.final_node();
    if lin.node_count() != final_node + 1 {
        return Err(Error::DimensionMismatch {
            context: "linearized drift node count",
            expected: final_node + 1,
            actual: lin.node_count(),
        });
    }
    let d = model.dimension();
    let tau = grid.prefactor_tau();
    let dt = grid.step_dt();
    let g = model.metric(&DVector::zeros(d));
    let phi = model.phi_matrix();
    let a = &lin.jacobians;
    let b = &lin.midpoint_offset;

    let mut diag = Vec::with_capacity(final_node);
    let mut linear = Vec::with_capacity(final_node);
    for n in 1..=final_node {
        let an = &a[n];
        let atga = an.transpose() * &g * an;
        if n < final_node {
            diag.push(2.0 * tau * (2.0 / dt * &g + 0.5 * dt * &atga + dt * &phi));
            let (bp, bm) = (&b[n], &b[n - 1]);
            linear.push(tau * (2.0 * &g * (bp - bm) + dt * an.transpose() * &g * (bp + bm)));
        } else {
            // backward summand only; Ψ keeps full weight at the endpoint
            let ga = &g * an;
            diag.push(
                2.0 * tau
                    * (&g / dt - 0.5 * (ga.transpose() + &ga) + 0.25 * dt * &atga + dt * &phi),
            );
            let bm = &b[n - 1];
            linear.push(-tau * (2.0 * &g * bm - dt * an.transpose() * &g * bm));
        }
    }
    let coupling: Vec<DMatrix<f64>> = (0..final_node)
        .map(|n| {
            let (a0, a1) = (&a[n], &a[n + 1]);
            tau * (-2.0 / dt * &g + &g * a1 - a0.transpose() * &g
                + 0.5 * dt * a0.transpose() * &g * a1)
        })
        .collect();

    let origin = Arc::new(vec![DVector::zeros(d); final_node + 1]);
    let action = QuadraticLevelAction::from_block_tridiagonal(
        grid.levels(),
        diag,
        linear,
        coupling,
        lin.initial.clone(),
        origin,
        0.0,
    )?;
    check_positive_definite(&action)?;
    Ok(action)
}

fn check_positive_definite(action: &QuadraticLevelAction) -> Result<()> {
    for node in action.active_nodes() {
        let t = action.terms(node).expect("active node");
        if !t.g.iter().all(|v| v.is_finite()) {
            return Err(non_finite("level-m initialization", node));
        }
        PrecisionGaussian::new(&t.g, action.level(), node)?;
    }
    Ok(())
}

/// Per-node symbols of the second-order expansion.
#[derive(Clone, Debug)]
pub struct TaylorTensors {
    /// `T_i(n)`; zero at node 0 where it is undefined.
    pub t: DVector<f64>,
    /// `G⁺_ij(n) = 2δ_ij/dt − ∂Θ_i/∂λ_j(n)`.
    pub g_plus: DMatrix<f64>,
    /// `G⁻_ij(n) = −2δ_ij/dt − ∂Θ_i/∂λ_j(n)`.
    pub g_minus: DMatrix<f64>,
    /// `h(n) = ½(g(n) + g(n−1))`; `g(0)` at node 0.
    pub h: DMatrix<f64>,
    pub r: Tensor3,
    pub v: Tensor3,
    pub u: Tensor4,
    pub psi_gradient: DVector<f64>,
    pub psi_hessian: DMatrix<f64>,
}

/// Gradient and block-tridiagonal Hessian of the exact action.
#[derive(Clone, Debug)]
pub struct ActionDerivatives {
    pub value: f64,
    /// `∂S/∂λ(n)` for `n = 1..=M` (index `n − 1`).
    pub gradient: Vec<DVector<f64>>,
    /// `∂²S/∂λ(n)∂λ(n)` for `n = 1..=M` (index `n − 1`).
    pub hessian_diag: Vec<DMatrix<f64>>,
    /// `∂²S/∂λ_i(n)∂λ_j(n+1)` for `n = 0..M` (index `n`).
    pub hessian_coupling: Vec<DMatrix<f64>>,
}

pub fn taylor_tensors(path: &Path, model: &dyn Model, step_dt: f64) -> Result<Vec<TaylorTensors>> {
    check_path(path, model)?;
    let d = model.dimension();
    let eye = DMatrix::<f64>::identity(d, d);
    let states = path.states();
    let thetas: Vec<_> = states.iter().map(|s| model.theta(s)).collect();
    let metrics: Vec<_> = states.iter().map(|s| model.metric(s)).collect();
    let mut out = Vec::with_capacity(states.len());
    for (n, s) in states.iter().enumerate() {
        let jac = model.theta_jacobian(s);
        let (t, h) = if n == 0 {
            (DVector::zeros(d), metrics[0].clone())
        } else {
            (
                (s - &states[n - 1]) / step_dt - 0.5 * (&thetas[n] + &thetas[n - 1]),
                0.5 * (&metrics[n] + &metrics[n - 1]),
            )
        };
        let tensors = TaylorTensors {
            g_plus: 2.0 / step_dt * &eye - &jac,
            g_minus: -2.0 / step_dt * &eye - &jac,
            t,
            h,
            r: model.metric_gradient(s),
            v: model.theta_hessian(s),
            u: model.metric_hessian(s),
            psi_gradient: model.psi_gradient(s),
            psi_hessian: model.psi_hessian(s),
        };
        let finite = tensors.t.iter().all(|v| v.is_finite())
            && tensors.g_plus.iter().all(|v| v.is_finite())
            && tensors.h.iter().all(|v| v.is_finite())
            && tensors.r.as_slice().iter().all(|v| v.is_finite())
            && tensors.v.as_slice().iter().all(|v| v.is_finite())
            && tensors.u.as_slice().iter().all(|v| v.is_finite());
        if !finite {
            return Err(non_finite("taylor tensors", n));
        }
        out.push(tensors);
    }
    Ok(out)
}

/// `(RT)_{ik} = Σ_l R_i^{kl} T_l`.
fn r_dot(r: &Tensor3, t: &DVector<f64>) -> DMatrix<f64> {
    let d = t.len();
    DMatrix::from_fn(d, d, |i, k| (0..d).map(|l| r.get(i, k, l) * t[l]).sum())
}

/// `Σ_kl R_i^{kl} T_k T_l`.
fn r_quad(r: &Tensor3, t: &DVector<f64>) -> DVector<f64> {
    let d = t.len();
    DVector::from_fn(d, |i, _| {
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += r.get(i, k, l) * t[k] * t[l];
            }
        }
        s
    })
}

/// `Σ_k V_kij w_k`.
fn v_dot(v: &Tensor3, w: &DVector<f64>) -> DMatrix<f64> {
    let d = w.len();
    DMatrix::from_fn(d, d, |i, j| (0..d).map(|k| v.get(k, i, j) * w[k]).sum())
}

/// `Σ_kl U_ij^{kl} T_k T_l`.
fn u_quad(u: &Tensor4, t: &DVector<f64>) -> DMatrix<f64> {
    let d = t.len();
    DMatrix::from_fn(d, d, |i, j| {
        let mut s = 0.0;
        for k in 0..d {
            for l in 0..d {
                s += u.get(i, j, k, l) * t[k] * t[l];
            }
        }
        s
    })
}

/// Gradient and Hessian blocks of the exact action at `path` (node 0 held
/// fixed).
pub fn action_derivatives(
    path: &Path,
    model: &dyn Model,
    grid: &TimeGrid,
) -> Result<ActionDerivatives> {
    let value = exact_action(path, model, grid)?;
    let tensors = taylor_tensors(path, model, grid.step_dt())?;
    let alpha = grid.prefactor_tau() * grid.step_dt();
    let final_node = grid.final_node();

    // Contributions of summand n (pair n−1, n) seen from node n ("+" side)
    // and from node n−1 ("−" side).
    let mut gradient = Vec::with_capacity(final_node);
    let mut hessian_diag = Vec::with_capacity(final_node);
    for n in 1..=final_node {
        let own = &tensors[n];
        let rt_own = r_dot(&own.r, &own.t);
        let ht = &own.h * &own.t;
        let mut grad =
            own.g_plus.transpose() * &ht + 0.5 * r_quad(&own.r, &own.t) + &own.psi_gradient;
        let mut hess = -v_dot(&own.v, &ht)
            + 0.5 * own.g_plus.transpose() * rt_own.transpose()
            + 0.5 * own.g_plus.transpose() * &own.h * &own.g_plus
            + 0.5 * u_quad(&own.u, &own.t)
            + 0.5 * &rt_own * &own.g_plus
            + &own.psi_hessian;
        if n < final_node {
            let next = &tensors[n + 1];
            let rt_next = r_dot(&own.r, &next.t);
            let ht_next = &next.h * &next.t;
            grad += own.g_minus.transpose() * &ht_next + 0.5 * r_quad(&own.r, &next.t);
            hess += -v_dot(&own.v, &ht_next)
                + 0.5 * own.g_minus.transpose() * rt_next.transpose()
                + 0.5 * own.g_minus.transpose() * &next.h * &own.g_minus
                + 0.5 * u_quad(&own.u, &next.t)
                + 0.5 * &rt_next * &own.g_minus;
        }
        gradient.push(alpha * grad);
        hessian_diag.push(alpha * hess);
    }
    let hessian_coupling = (0..final_node)
        .map(|n| {
            let (own, next) = (&tensors[n], &tensors[n + 1]);
            // ½ G⁻_ki(n) R_j^{kl}(n+1) T_l(n+1)
            let a = 0.5 * own.g_minus.transpose() * r_dot(&next.r, &next.t).transpose();
            let b = 0.5 * own.g_minus.transpose() * &next.h * &next.g_plus;
            // ½ R_i^{kl}(n) G⁺_kj(n+1) T_l(n+1)
            let c = 0.5 * r_dot(&own.r, &next.t) * &next.g_plus;
            alpha * (a + b + c)
        })
        .collect();
    for (n, g) in gradient.iter().enumerate() {
        if !g.iter().all(|v| v.is_finite()) || !hessian_diag[n].iter().all(|v| v.is_finite()) {
            return Err(non_finite("action derivatives", n + 1));
        }
    }
    Ok(ActionDerivatives {
        value,
        gradient,
        hessian_diag,
        hessian_coupling,
    })
}

/// Finest-level action from the second-order Taylor expansion of the exact
/// action about `trajectory`, in displacement coordinates.
#[derive(Clone, Debug)]
pub struct TaylorInit {
    pub action: QuadraticLevelAction,
    pub derivatives: ActionDerivatives,
}

impl TaylorInit {
    pub fn reference_value(&self) -> f64 {
        self.derivatives.value
    }
}

pub fn init_level_m_taylor(
    model: &dyn Model,
    trajectory: &MeanTrajectory,
    grid: &TimeGrid,
) -> Result<TaylorInit> {
    if trajectory.node_count() != grid.node_count() {
        return Err(Error::DimensionMismatch {
            context: "mean trajectory node count",
            expected: grid.node_count(),
            actual: trajectory.node_count(),
        });
    }
    let reference = trajectory.to_path();
    let derivatives = action_derivatives(&reference, model, grid)?;
    let action = QuadraticLevelAction::from_block_tridiagonal(
        grid.levels(),
        derivatives.hessian_diag.clone(),
        derivatives.gradient.clone(),
        derivatives.hessian_coupling.clone(),
        DVector::zeros(model.dimension()),
        Arc::new(trajectory.states.clone()),
        derivatives.value,
    )?;
    check_positive_definite(&action)?;
    Ok(TaylorInit {
        action,
        derivatives,
    })
}
