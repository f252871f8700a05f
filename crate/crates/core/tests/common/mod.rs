#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pathmc::action::QuadraticLevelAction;
use pathmc::model::{Model, StateVector, Tensor3, Tensor4};
use rand::Rng;

/// Dense precision `P` and linear term `b` of `exp(−½xᵀPx − bᵀx)` over the
/// active nodes of a level (working coordinates, node 0 folded in).
pub struct DenseGaussian {
    pub nodes: Vec<usize>,
    pub dim: usize,
    pub precision: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl DenseGaussian {
    pub fn from_level(q: &QuadraticLevelAction) -> Self {
        let d = q.dim();
        let nodes: Vec<usize> = q.active_nodes().collect();
        let n = nodes.len();
        let slot = |node: usize| nodes.iter().position(|&x| x == node);
        let mut p = DMatrix::zeros(n * d, n * d);
        let mut b = DVector::zeros(n * d);
        let span = q.span();
        for (i, &node) in nodes.iter().enumerate() {
            let t = q.terms(node).unwrap();
            p.view_mut((i * d, i * d), (d, d)).copy_from(&t.g);
            b.rows_mut(i * d, d).copy_from(&t.k);
            if let (Some(hp), Some(hm)) = (&t.h_plus, &t.h_minus) {
                let r = slot(node + span).unwrap();
                let cross = p.view((i * d, r * d), (d, d)) + hp;
                p.view_mut((i * d, r * d), (d, d)).copy_from(&cross);
                p.view_mut((r * d, i * d), (d, d))
                    .copy_from(&cross.transpose());
                match slot(node - span) {
                    Some(l) => {
                        let cross = p.view((i * d, l * d), (d, d)) + hm;
                        p.view_mut((i * d, l * d), (d, d)).copy_from(&cross);
                        p.view_mut((l * d, i * d), (d, d))
                            .copy_from(&cross.transpose());
                    }
                    None => {
                        let shift = hm * q.anchor();
                        let mut seg = b.rows_mut(i * d, d);
                        seg += shift;
                    }
                }
            }
        }
        DenseGaussian {
            nodes,
            dim: d,
            precision: p,
            linear: b,
        }
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.precision
            .clone()
            .cholesky()
            .expect("positive definite")
            .inverse()
    }

    pub fn mean(&self) -> DVector<f64> {
        -(self.covariance() * &self.linear)
    }

    /// Mean and covariance restricted to `keep`.
    pub fn marginal(&self, keep: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
        let d = self.dim;
        let idx: Vec<usize> = keep
            .iter()
            .flat_map(|node| {
                let s = self
                    .nodes
                    .iter()
                    .position(|x| x == node)
                    .expect("node kept");
                (s * d)..(s * d + d)
            })
            .collect();
        let (mean, cov) = (self.mean(), self.covariance());
        let m = DVector::from_iterator(idx.len(), idx.iter().map(|&i| mean[i]));
        let c = DMatrix::from_fn(idx.len(), idx.len(), |a, b| cov[(idx[a], idx[b])]);
        (m, c)
    }
}

fn random_matrix<R: Rng>(rng: &mut R, d: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |_, _| rng.random_range(-scale..scale))
}

/// Random block-tridiagonal, block-diagonally dominant finest level.
pub fn random_level<R: Rng>(rng: &mut R, levels: usize, d: usize) -> QuadraticLevelAction {
    let final_node = 1usize << levels;
    let coupling: Vec<DMatrix<f64>> = (0..final_node)
        .map(|_| random_matrix(rng, d, 1.0))
        .collect();
    let diag = (1..=final_node)
        .map(|n| {
            let a = random_matrix(rng, d, 1.0);
            let mut dominance = coupling[n - 1].norm() + 0.3;
            if n < final_node {
                dominance += coupling[n].norm();
            }
            &a * a.transpose() + DMatrix::identity(d, d) * dominance
        })
        .collect();
    let linear = (0..final_node)
        .map(|_| DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)))
        .collect();
    let anchor = DVector::from_fn(d, |_, _| rng.random_range(-1.5..1.5));
    QuadraticLevelAction::from_block_tridiagonal(
        levels,
        diag,
        linear,
        coupling,
        anchor,
        Arc::new(vec![DVector::zeros(d); final_node + 1]),
        0.0,
    )
    .unwrap()
}

/// Two-dimensional model with state-dependent metric, nonlinear drift and
/// non-quadratic `Ψ`, for exercising every tensor of the expansion.
pub struct Warped;

impl Model for Warped {
    fn name(&self) -> &str {
        "warped"
    }
    fn dimension(&self) -> usize {
        2
    }
    fn theta(&self, s: &StateVector) -> DVector<f64> {
        DVector::from_vec(vec![
            -s[0] + 0.3 * s[0] * s[1],
            -0.5 * s[1] + 0.2 * s[0].sin(),
        ])
    }
    fn theta_jacobian(&self, s: &StateVector) -> DMatrix<f64> {
        DMatrix::from_row_slice(
            2,
            2,
            &[-1.0 + 0.3 * s[1], 0.3 * s[0], 0.2 * s[0].cos(), -0.5],
        )
    }
    fn theta_hessian(&self, s: &StateVector) -> Tensor3 {
        let mut v = Tensor3::zeros(2);
        v.set(0, 0, 1, 0.3);
        v.set(0, 1, 0, 0.3);
        v.set(1, 0, 0, -0.2 * s[0].sin());
        v
    }
    fn metric(&self, s: &StateVector) -> DMatrix<f64> {
        let off = 0.1 * s[0] * s[1];
        DMatrix::from_row_slice(
            2,
            2,
            &[1.0 + 0.2 * s[0] * s[0], off, off, 1.0 + 0.2 * s[1] * s[1]],
        )
    }
    fn metric_gradient(&self, s: &StateVector) -> Tensor3 {
        let mut r = Tensor3::zeros(2);
        r.set(0, 0, 0, 0.4 * s[0]);
        r.set(1, 1, 1, 0.4 * s[1]);
        for (i, other) in [(0, s[1]), (1, s[0])] {
            r.set(i, 0, 1, 0.1 * other);
            r.set(i, 1, 0, 0.1 * other);
        }
        r
    }
    fn metric_hessian(&self, _: &StateVector) -> Tensor4 {
        let mut u = Tensor4::zeros(2);
        u.set(0, 0, 0, 0, 0.4);
        u.set(1, 1, 1, 1, 0.4);
        for (i, j) in [(0, 1), (1, 0)] {
            u.set(i, j, 0, 1, 0.1);
            u.set(i, j, 1, 0, 0.1);
        }
        u
    }
    fn psi(&self, s: &StateVector) -> f64 {
        0.1 * s[0].powi(4) + 0.2 * s[0] * s[0] * s[1] * s[1]
    }
    fn psi_gradient(&self, s: &StateVector) -> DVector<f64> {
        DVector::from_vec(vec![
            0.4 * s[0].powi(3) + 0.4 * s[0] * s[1] * s[1],
            0.4 * s[0] * s[0] * s[1],
        ])
    }
    fn psi_hessian(&self, s: &StateVector) -> DMatrix<f64> {
        let c = 0.8 * s[0] * s[1];
        DMatrix::from_row_slice(
            2,
            2,
            &[
                1.2 * s[0] * s[0] + 0.4 * s[1] * s[1],
                c,
                c,
                0.4 * s[0] * s[0],
            ],
        )
    }
    fn phi_matrix(&self) -> DMatrix<f64> {
        DMatrix::zeros(2, 2)
    }
}
