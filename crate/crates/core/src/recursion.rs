//! Gaussian marginalization of the quadratic action from level `m` to 0.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::action::{NodeTerms, QuadraticLevelAction};
use crate::error::{Error, Result};
use crate::linalg::{condition_number, PrecisionGaussian};

/// Integrates out the odd multiples of `Δ` from a level-`k` action and
/// returns the level-`k−1` action on the remaining nodes.
///
/// Integrating node `l` with neighbours `q = l−Δ`, `r = l+Δ` contributes
/// `−½ bᵀ G⁻¹ b`, `b = H⁺λ^r + H⁻λ^q + K`, which updates the survivors'
/// `G` and `K` and creates the coupling `λ^qᵀ X λ^r` with
/// `X = −H⁻ᵀ G⁻¹ H⁺`. The coupling is stored on whichever of `q`, `r` is
/// integrated at the next level; when nothing is left to integrate the
/// coupling to the fixed node 0 folds into the endpoint's linear term.
pub fn coarsen_level(coeffs: &QuadraticLevelAction) -> Result<QuadraticLevelAction> {
    let k = coeffs.level();
    if k == 0 {
        return Err(Error::InvalidArgument("level 0 cannot be coarsened".into()));
    }
    let span = coeffs.span();
    let final_node = coeffs.final_node();
    let coarse_span = 2 * span;

    let mut terms: Vec<Option<NodeTerms>> = vec![None; final_node + 1];
    for node in (coarse_span..=final_node).step_by(coarse_span) {
        let t = coeffs.terms(node).expect("survivor is active");
        terms[node] = Some(NodeTerms {
            g: t.g.clone(),
            k: t.k.clone(),
            h_plus: None,
            h_minus: None,
        });
    }

    // contributions are summed per survivor and subtracted once
    let mut g_update: Vec<Option<DMatrix<f64>>> = vec![None; final_node + 1];
    let mut k_update: Vec<Option<DVector<f64>>> = vec![None; final_node + 1];
    let mut endpoint_shift: Option<DVector<f64>> = None;
    for l in coeffs.integrated_nodes() {
        let t = coeffs.terms(l).expect("integrated node is active");
        let (hp, hm) = (
            t.h_plus.as_ref().expect("integrated node has H+"),
            t.h_minus.as_ref().expect("integrated node has H-"),
        );
        // positive definiteness check
        PrecisionGaussian::new(&t.g, k, l)?;
        let lu = t.g.clone().lu();
        let singular = || Error::NotPositiveDefinite { level: k, node: l };
        let ginv_hp = lu.solve(hp).ok_or_else(singular)?;
        let ginv_hm = lu.solve(hm).ok_or_else(singular)?;
        let ginv_k = lu.solve(&t.k).ok_or_else(singular)?;
        let (q, r) = (l - span, l + span);

        accumulate(&mut g_update[r], hp.transpose() * &ginv_hp);
        accumulate(&mut k_update[r], hp.transpose() * &ginv_k);
        if q > 0 {
            accumulate(&mut g_update[q], hm.transpose() * &ginv_hm);
            accumulate(&mut k_update[q], hm.transpose() * &ginv_k);
        }

        let coupling: DMatrix<f64> = -(hm.transpose() * &ginv_hp);
        if k == 1 {
            // q = 0, r = M at level 0
            endpoint_shift = Some(coupling.transpose() * coeffs.anchor());
        } else if q > 0 && (q / coarse_span) % 2 == 1 {
            terms[q].as_mut().expect("left survivor").h_plus = Some(coupling);
        } else {
            terms[r].as_mut().expect("right survivor").h_minus = Some(coupling.transpose());
        }
    }
    for node in (coarse_span..=final_node).step_by(coarse_span) {
        let t = terms[node].as_mut().expect("survivor");
        if let Some(u) = g_update[node].take() {
            t.g -= u;
        }
        if let Some(u) = k_update[node].take() {
            t.k -= u;
        }
    }
    if let Some(shift) = endpoint_shift {
        terms[final_node].as_mut().expect("endpoint").k += shift;
    }
    let coarse = QuadraticLevelAction::from_terms(
        k - 1,
        coeffs.levels(),
        terms,
        coeffs.anchor().clone(),
        coeffs.origin().clone(),
        coeffs.reference_value(),
    )?;
    for node in coarse.active_nodes() {
        let g = &coarse.terms(node).expect("active").g;
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                function: "coarsen_level".into(),
                probe: format!("level {}, node {node}", k - 1),
            });
        }
    }
    Ok(coarse)
}

fn accumulate<T>(slot: &mut Option<T>, value: T)
where
    T: std::ops::AddAssign<T>,
{
    match slot {
        Some(acc) => *acc += value,
        None => *slot = Some(value),
    }
}

/// All levels `0..=m` of the marginalized quadratic action.
#[derive(Clone, Debug)]
pub struct Ladder {
    levels: Vec<QuadraticLevelAction>,
}

/// Repeatedly coarsens `level_m` down to the endpoint-only level 0.
pub fn build_ladder(level_m: QuadraticLevelAction) -> Result<Ladder> {
    let m = level_m.levels();
    if level_m.level() != m {
        return Err(Error::InvalidArgument(format!(
            "ladder must start from the finest level {m}, got {}",
            level_m.level()
        )));
    }
    let mut levels = Vec::with_capacity(m + 1);
    levels.push(level_m);
    for _ in 0..m {
        let next = coarsen_level(levels.last().expect("non-empty"))?;
        levels.push(next);
    }
    levels.reverse();
    // the endpoint Gaussian must be proper as well
    PrecisionGaussian::new(levels[0].g_end(), 0, levels[0].final_node())?;
    Ok(Ladder { levels })
}

impl Ladder {
    /// `m`.
    pub fn levels(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, k: usize) -> &QuadraticLevelAction {
        &self.levels[k]
    }

    pub fn finest(&self) -> &QuadraticLevelAction {
        self.levels.last().expect("ladder has a finest level")
    }

    pub fn coarsest(&self) -> &QuadraticLevelAction {
        &self.levels[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &QuadraticLevelAction> {
        self.levels.iter()
    }

    /// Largest condition number of any active `G` per level, index `k`.
    pub fn condition_numbers(&self) -> Vec<f64> {
        self.levels
            .iter()
            .map(|q| {
                q.active_nodes()
                    .map(|n| condition_number(&q.terms(n).expect("active").g))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Text dump of every block: a header line `level node d kind` followed
    /// by the rows of the block, space separated.
    pub fn write_dump<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let d = self.finest().dim();
        writeln!(out, "# ladder m={} d={d}", self.levels())?;
        for q in &self.levels {
            for node in q.active_nodes() {
                let t = q.terms(node).expect("active");
                write_matrix(out, q.level(), node, "G", &t.g)?;
                if let Some(h) = &t.h_plus {
                    write_matrix(out, q.level(), node, "H+", h)?;
                }
                if let Some(h) = &t.h_minus {
                    write_matrix(out, q.level(), node, "H-", h)?;
                }
                writeln!(out, "{} {node} {d} K", q.level())?;
                let row: Vec<String> = t.k.iter().map(|v| format!("{v:e}")).collect();
                writeln!(out, "{}", row.join(" "))?;
            }
        }
        Ok(())
    }
}

fn write_matrix<W: Write>(
    out: &mut W,
    level: usize,
    node: usize,
    kind: &str,
    m: &DMatrix<f64>,
) -> io::Result<()> {
    writeln!(out, "{level} {node} {} {kind}", m.nrows())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}
