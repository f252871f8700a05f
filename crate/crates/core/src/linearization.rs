//! Mean trajectory, drift linearization about it, and the built-in models.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{Model, Path, StateVector, Tensor3, Tensor4, TimeGrid};

/// Expansion trajectory `λ̄` at the nodes and at the half-nodes `n + ½`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanTrajectory {
    pub states: Vec<StateVector>,
    pub midpoint_states: Vec<StateVector>,
}

impl MeanTrajectory {
    /// Integrates `dλ̄/dt = Θ(λ̄) − ½∇Φ(λ̄)` over `intervals` node spacings
    /// with classical RK4 at half the node spacing.
    pub fn integrate(
        model: &dyn Model,
        initial: &StateVector,
        step_dt: f64,
        intervals: usize,
    ) -> Result<Self> {
        if initial.len() != model.dimension() {
            return Err(Error::DimensionMismatch {
                context: "mean path initial condition",
                expected: model.dimension(),
                actual: initial.len(),
            });
        }
        let rhs = |s: &StateVector| model.theta(s) - 0.5 * model.mean_path_potential_gradient(s);
        let h = 0.5 * step_dt;
        let rk4 = |s: &StateVector| {
            let k1 = rhs(s);
            let k2 = rhs(&(s + 0.5 * h * &k1));
            let k3 = rhs(&(s + 0.5 * h * &k2));
            let k4 = rhs(&(s + h * &k3));
            s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        };
        let blowup = |node: String| Error::NonFinite {
            function: "mean path integration (reduce step_dt)".into(),
            probe: format!("node {node}"),
        };

        let mut states = Vec::with_capacity(intervals + 1);
        let mut midpoint_states = Vec::with_capacity(intervals);
        states.push(initial.clone());
        for n in 0..intervals {
            let mid = rk4(&states[n]);
            if !mid.iter().all(|v| v.is_finite()) {
                return Err(blowup(format!("{n}.5")));
            }
            let next = rk4(&mid);
            if !next.iter().all(|v| v.is_finite()) {
                return Err(blowup(format!("{}", n + 1)));
            }
            midpoint_states.push(mid);
            states.push(next);
        }
        Ok(Self {
            states,
            midpoint_states,
        })
    }

    pub fn node_count(&self) -> usize {
        self.states.len()
    }

    pub fn to_path(&self) -> Path {
        Path::from_nodes(&self.states).expect("trajectory has at least one node")
    }
}

/// Mean path on `grid` starting from `initial`.
pub fn integrate_mean_path(
    model: &dyn Model,
    initial: &StateVector,
    grid: &TimeGrid,
) -> Result<MeanTrajectory> {
    MeanTrajectory::integrate(model, initial, grid.step_dt(), grid.final_node())
}

/// `Θ(λ) ≈ Ā + A(λ − λ̄)` along a mean trajectory.
#[derive(Clone, Debug)]
pub struct LinearizedDrift {
    /// `A^n`, Jacobian of `Θ` at `λ̄^n`, `n = 0..=M`.
    pub jacobians: Vec<DMatrix<f64>>,
    /// `Ā^{n+½} = Θ(λ̄^{n+½})`, `n = 0..M`.
    pub midpoint_drift: Vec<DVector<f64>>,
    /// `B̄^{n+½} = Ā^{n+½} − ½(A^{n+1}λ̄^{n+1} + A^n λ̄^n)`.
    pub midpoint_offset: Vec<DVector<f64>>,
    /// Fixed initial state `λ̄^0`.
    pub initial: StateVector,
}

impl LinearizedDrift {
    pub fn node_count(&self) -> usize {
        self.jacobians.len()
    }
}

pub fn linearize_theta(model: &dyn Model, trajectory: &MeanTrajectory) -> Result<LinearizedDrift> {
    if trajectory.midpoint_states.len() + 1 != trajectory.states.len() {
        return Err(Error::InvalidArgument(
            "trajectory needs one half-node per interval".into(),
        ));
    }
    let jacobians: Vec<_> = trajectory
        .states
        .iter()
        .map(|s| model.theta_jacobian(s))
        .collect();
    let midpoint_drift: Vec<_> = trajectory
        .midpoint_states
        .iter()
        .map(|s| model.theta(s))
        .collect();
    let midpoint_offset: Vec<_> = (0..midpoint_drift.len())
        .map(|n| {
            let (s0, s1) = (&trajectory.states[n], &trajectory.states[n + 1]);
            &midpoint_drift[n] - 0.5 * (&jacobians[n + 1] * s1 + &jacobians[n] * s0)
        })
        .collect();
    for (n, b) in midpoint_offset.iter().enumerate() {
        if !b.iter().all(|v| v.is_finite()) || !jacobians[n].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                function: "linearize_theta".into(),
                probe: format!("node {n}"),
            });
        }
    }
    Ok(LinearizedDrift {
        jacobians,
        midpoint_drift,
        midpoint_offset,
        initial: trajectory.states[0].clone(),
    })
}

fn burgers_modes(state: &StateVector, mode_count: usize) -> Result<Vec<Complex64>> {
    if mode_count == 0 || state.len() != 2 * mode_count {
        return Err(Error::DimensionMismatch {
            context: "burgers state (2 × mode_count)",
            expected: 2 * mode_count,
            actual: state.len(),
        });
    }
    Ok((0..mode_count)
        .map(|j| Complex64::new(state[2 * j], state[2 * j + 1]))
        .collect())
}

/// `z_l` with `z_{−l} = z_l*`, `z_0 = 0` and zero beyond the truncation.
fn mode(z: &[Complex64], l: i64) -> Complex64 {
    let n = z.len() as i64;
    if l == 0 || l.abs() > n {
        Complex64::new(0.0, 0.0)
    } else if l > 0 {
        z[(l - 1) as usize]
    } else {
        z[(-l - 1) as usize].conj()
    }
}

fn burgers_convolution(z: &[Complex64], k: i64) -> Complex64 {
    let n = z.len() as i64;
    let sum: Complex64 = (-n..=n).map(|k1| mode(z, k1) * mode(z, k - k1)).sum();
    Complex64::new(0.0, -(k as f64) / 2.0) * sum
}

/// Untruncated quadratic term `−(ik/2)Σ_{k1+k2=k} z_{k1}z_{k2}` for
/// `k = 1..=2·mode_count`. Only the first `mode_count` entries enter the
/// drift; the rest are exposed for inspection.
pub fn burgers_theta_untruncated(state: &StateVector, mode_count: usize) -> Result<Vec<Complex64>> {
    let z = burgers_modes(state, mode_count)?;
    Ok((1..=2 * mode_count as i64)
        .map(|k| burgers_convolution(&z, k))
        .collect())
}

/// Galerkin-truncated Burgers drift on `mode_count` complex modes stored as
/// interleaved real/imaginary pairs.
pub fn burgers_theta(state: &StateVector, mode_count: usize) -> Result<DVector<f64>> {
    let z = burgers_modes(state, mode_count)?;
    let mut out = DVector::zeros(2 * mode_count);
    for k in 1..=mode_count {
        let c = burgers_convolution(&z, k as i64);
        out[2 * (k - 1)] = c.re;
        out[2 * (k - 1) + 1] = c.im;
    }
    Ok(out)
}

/// Jacobian of [`burgers_theta`] at `mean_state`, assembled from the
/// complex coupling `Z_{kl} = −ik z̄_{k−l}` split into real blocks.
pub fn burgers_jacobian(mean_state: &StateVector, mode_count: usize) -> Result<DMatrix<f64>> {
    let z = burgers_modes(mean_state, mode_count)?;
    let coupling = |k: i64, l: i64| Complex64::new(0.0, -(k as f64)) * mode(&z, k - l);
    let mut a = DMatrix::zeros(2 * mode_count, 2 * mode_count);
    for r in 1..=mode_count as i64 {
        for s in 1..=mode_count as i64 {
            let plus = coupling(r, s);
            let minus = coupling(r, -s);
            let e = plus.re + minus.re;
            let f = minus.im - plus.im;
            let e_prime = plus.im + minus.im;
            let f_prime = plus.re - minus.re;
            let (row, col) = (2 * (r as usize - 1), 2 * (s as usize - 1));
            a[(row, col)] = e;
            a[(row, col + 1)] = f;
            a[(row + 1, col)] = e_prime;
            a[(row + 1, col + 1)] = f_prime;
        }
    }
    Ok(a)
}

/// Truncated inviscid Burgers model: drift [`burgers_theta`], unit metric and
/// `Ψ = ψ₀‖λ‖²`.
#[derive(Clone, Debug)]
pub struct BurgersModel {
    mode_count: usize,
    psi_scale: f64,
    hessian: Tensor3,
}

impl BurgersModel {
    pub fn new(mode_count: usize, psi_scale: f64) -> Result<Self> {
        if mode_count == 0 {
            return Err(Error::InvalidArgument(
                "burgers.mode_count must be at least 1".into(),
            ));
        }
        if !(psi_scale >= 0.0 && psi_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "burgers psi scale must be non-negative, got {psi_scale}"
            )));
        }
        let d = 2 * mode_count;
        // The drift is quadratic, so its Jacobian is linear in the state and
        // ∂²Θ_k/∂λ_i∂λ_j = J(e_j)_{ki}.
        let mut hessian = Tensor3::zeros(d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            let jac = burgers_jacobian(&e, mode_count)?;
            for k in 0..d {
                for i in 0..d {
                    hessian.set(k, i, j, jac[(k, i)]);
                }
            }
        }
        Ok(Self {
            mode_count,
            psi_scale,
            hessian,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.mode_count
    }
}

impl Model for BurgersModel {
    fn name(&self) -> &str {
        "burgers"
    }
    fn dimension(&self) -> usize {
        2 * self.mode_count
    }
    fn theta(&self, s: &StateVector) -> DVector<f64> {
        burgers_theta(s, self.mode_count).expect("state dimension checked by caller")
    }
    fn theta_jacobian(&self, s: &StateVector) -> DMatrix<f64> {
        burgers_jacobian(s, self.mode_count).expect("state dimension checked by caller")
    }
    fn theta_hessian(&self, _: &StateVector) -> Tensor3 {
        self.hessian.clone()
    }
    fn metric(&self, _: &StateVector) -> DMatrix<f64> {
        DMatrix::identity(self.dimension(), self.dimension())
    }
    fn metric_gradient(&self, _: &StateVector) -> Tensor3 {
        Tensor3::zeros(self.dimension())
    }
    fn metric_hessian(&self, _: &StateVector) -> Tensor4 {
        Tensor4::zeros(self.dimension())
    }
    fn psi(&self, s: &StateVector) -> f64 {
        self.psi_scale * s.norm_squared()
    }
    fn psi_gradient(&self, s: &StateVector) -> DVector<f64> {
        2.0 * self.psi_scale * s
    }
    fn psi_hessian(&self, _: &StateVector) -> DMatrix<f64> {
        2.0 * self.psi_scale * DMatrix::identity(self.dimension(), self.dimension())
    }
    fn phi_matrix(&self) -> DMatrix<f64> {
        self.psi_scale * DMatrix::identity(self.dimension(), self.dimension())
    }
}

/// No drift, unit metric, no potential.
#[derive(Clone, Debug)]
pub struct FreeParticle {
    dim: usize,
}

pub fn free_particle_model(d: usize) -> Result<FreeParticle> {
    if d == 0 {
        return Err(Error::InvalidArgument(
            "free particle dimension must be at least 1".into(),
        ));
    }
    Ok(FreeParticle { dim: d })
}

impl Model for FreeParticle {
    fn name(&self) -> &str {
        "free_particle"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn theta(&self, _: &StateVector) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn theta_jacobian(&self, _: &StateVector) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn theta_hessian(&self, _: &StateVector) -> Tensor3 {
        Tensor3::zeros(self.dim)
    }
    fn metric(&self, _: &StateVector) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn metric_gradient(&self, _: &StateVector) -> Tensor3 {
        Tensor3::zeros(self.dim)
    }
    fn metric_hessian(&self, _: &StateVector) -> Tensor4 {
        Tensor4::zeros(self.dim)
    }
    fn psi(&self, _: &StateVector) -> f64 {
        0.0
    }
    fn psi_gradient(&self, _: &StateVector) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn psi_hessian(&self, _: &StateVector) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
    fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// Componentwise relaxation `Θ_i = −γλ_i − cλ_i³` with unit metric and
/// `Ψ = φ₀‖λ‖²`. With `c = 0` the exact action is quadratic.
#[derive(Clone, Debug)]
pub struct Relaxation {
    dim: usize,
    gamma: f64,
    cubic: f64,
    phi: f64,
}

impl Relaxation {
    pub fn new(dim: usize, gamma: f64, cubic: f64, phi: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument(
                "relaxation dimension must be at least 1".into(),
            ));
        }
        if !(gamma.is_finite() && cubic.is_finite() && phi >= 0.0 && phi.is_finite()) {
            return Err(Error::InvalidArgument(
                "relaxation needs finite gamma/cubic and phi >= 0".into(),
            ));
        }
        Ok(Self {
            dim,
            gamma,
            cubic,
            phi,
        })
    }
}

impl Model for Relaxation {
    fn name(&self) -> &str {
        "relaxation"
    }
    fn dimension(&self) -> usize {
        self.dim
    }
    fn theta(&self, s: &StateVector) -> DVector<f64> {
        s.map(|v| -self.gamma * v - self.cubic * v * v * v)
    }
    fn theta_jacobian(&self, s: &StateVector) -> DMatrix<f64> {
        DMatrix::from_diagonal(&s.map(|v| -self.gamma - 3.0 * self.cubic * v * v))
    }
    fn theta_hessian(&self, s: &StateVector) -> Tensor3 {
        let mut t = Tensor3::zeros(self.dim);
        for k in 0..self.dim {
            t.set(k, k, k, -6.0 * self.cubic * s[k]);
        }
        t
    }
    fn metric(&self, _: &StateVector) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim)
    }
    fn metric_gradient(&self, _: &StateVector) -> Tensor3 {
        Tensor3::zeros(self.dim)
    }
    fn metric_hessian(&self, _: &StateVector) -> Tensor4 {
        Tensor4::zeros(self.dim)
    }
    fn psi(&self, s: &StateVector) -> f64 {
        self.phi * s.norm_squared()
    }
    fn psi_gradient(&self, s: &StateVector) -> DVector<f64> {
        2.0 * self.phi * s
    }
    fn psi_hessian(&self, _: &StateVector) -> DMatrix<f64> {
        2.0 * self.phi * DMatrix::identity(self.dim, self.dim)
    }
    fn phi_matrix(&self) -> DMatrix<f64> {
        self.phi * DMatrix::identity(self.dim, self.dim)
    }
}
