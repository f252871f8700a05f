//! Endpoint consistency estimates and importance weights.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{Model, StateVector, TimeGrid};
use crate::recursion::Ladder;
use crate::sampler::{run_chain, ChainConfig, SampleSet, TrialSampler};

/// Below this effective sample size a consistency estimate is flagged.
pub const MIN_EFFECTIVE_SAMPLES: f64 = 10.0;

const ENDPOINT_STREAM: u64 = u64::MAX;

/// Endpoints with their trial densities, consistency values and weights.
/// Densities are held as logarithms; only ratios of consistency values carry
/// meaning.
#[derive(Clone, Debug, PartialEq)]
pub struct EndpointEnsemble {
    pub endpoints: Vec<StateVector>,
    pub log_trial_density: Vec<f64>,
    pub log_consistency: Vec<f64>,
    pub weights: Vec<f64>,
    /// `(endpoint index, message)`.
    pub warnings: Vec<(usize, String)>,
}

impl EndpointEnsemble {
    /// From plain (not logarithmic) densities.
    pub fn from_values(
        endpoints: Vec<StateVector>,
        trial_density: &[f64],
        consistency: &[f64],
    ) -> Result<Self> {
        let n = endpoints.len();
        for (context, len) in [
            ("trial density values", trial_density.len()),
            ("consistency values", consistency.len()),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: n,
                    actual: len,
                });
            }
        }
        if let Some(v) = consistency.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "consistency value {v} is negative or undefined"
            )));
        }
        Ok(EndpointEnsemble {
            endpoints,
            log_trial_density: trial_density.iter().map(|v| v.ln()).collect(),
            log_consistency: consistency.iter().map(|v| v.ln()).collect(),
            weights: Vec::new(),
            warnings: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    pub fn trial_density_values(&self) -> Vec<f64> {
        self.log_trial_density.iter().map(|v| v.exp()).collect()
    }

    pub fn consistency_values(&self) -> Vec<f64> {
        self.log_consistency.iter().map(|v| v.exp()).collect()
    }
}

/// Importance estimate of one endpoint's consistency value.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyEstimate {
    /// `ln mean exp(−S − ln q)` over the recorded proposals.
    pub log_value: f64,
    pub effective_sample_size: f64,
    pub warning: Option<String>,
}

/// Estimates `ϱ(x)` for each pinned-endpoint run from its recorded
/// proposal log-weights.
pub fn estimate_consistency(runs: &[SampleSet]) -> Result<Vec<ConsistencyEstimate>> {
    runs.iter()
        .map(|run| consistency_from_log_weights(&run.proposal_log_weights))
        .collect()
}

pub fn consistency_from_log_weights(log_weights: &[f64]) -> Result<ConsistencyEstimate> {
    if log_weights.is_empty() {
        return Err(Error::InvalidArgument(
            "consistency estimate needs at least one proposal".into(),
        ));
    }
    if log_weights
        .iter()
        .any(|w| w.is_nan() || *w == f64::INFINITY)
    {
        return Err(Error::NonFinite {
            function: "estimate_consistency".into(),
            probe: "proposal log-weight".into(),
        });
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = log_weights.len() as f64;
    if max == f64::NEG_INFINITY {
        return Ok(ConsistencyEstimate {
            log_value: f64::NEG_INFINITY,
            effective_sample_size: 0.0,
            warning: Some("every proposal had zero weight".into()),
        });
    }
    let (sum, sum_sq) = log_weights.iter().fold((0.0, 0.0), |(s, s2), w| {
        let e = (w - max).exp();
        (s + e, s2 + e * e)
    });
    let ess = sum * sum / sum_sq;
    let warning = (ess < MIN_EFFECTIVE_SAMPLES)
        .then(|| format!("effective sample size {ess:.2} is below {MIN_EFFECTIVE_SAMPLES}"));
    Ok(ConsistencyEstimate {
        log_value: max + (sum / n).ln(),
        effective_sample_size: ess,
        warning,
    })
}

/// Sets `weights_i ∝ ϱ_i/φ_i`, normalized to mean 1.
pub fn compute_weights(mut ensemble: EndpointEnsemble) -> Result<EndpointEnsemble> {
    let n = ensemble.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty endpoint ensemble".into()));
    }
    if ensemble.log_consistency.len() != n || ensemble.log_trial_density.len() != n {
        return Err(Error::DimensionMismatch {
            context: "endpoint ensemble columns",
            expected: n,
            actual: ensemble
                .log_consistency
                .len()
                .min(ensemble.log_trial_density.len()),
        });
    }
    if let Some(i) = ensemble
        .log_trial_density
        .iter()
        .position(|v| !v.is_finite())
    {
        return Err(Error::InvalidArgument(format!(
            "trial density of endpoint {i} is zero or undefined"
        )));
    }
    let raw: Vec<f64> = ensemble
        .log_consistency
        .iter()
        .zip(&ensemble.log_trial_density)
        .map(|(c, t)| c - t)
        .collect();
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::InvalidArgument(
            "all consistency values are zero; weights are undefined".into(),
        ));
    }
    let scaled: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let mean = scaled.iter().sum::<f64>() / n as f64;
    ensemble.weights = scaled.iter().map(|w| w / mean).collect();
    Ok(ensemble)
}

/// `Σ_i w_i·⟨λ(node)^{⊗order}⟩_i / Σ_i w_i`; a `d×1` matrix for order 1 and
/// `d×d` for order 2.
pub fn weighted_moments(
    sample_sets: &[SampleSet],
    weights: &[f64],
    node: usize,
    order: usize,
) -> Result<DMatrix<f64>> {
    if sample_sets.is_empty() || sample_sets.iter().any(|s| s.is_empty()) {
        return Err(Error::InvalidArgument(
            "weighted moments need non-empty sample sets".into(),
        ));
    }
    if weights.len() != sample_sets.len() {
        return Err(Error::DimensionMismatch {
            context: "weights per sample set",
            expected: sample_sets.len(),
            actual: weights.len(),
        });
    }
    if order != 1 && order != 2 {
        return Err(Error::InvalidArgument(format!(
            "moment order must be 1 or 2, got {order}"
        )));
    }
    let first = &sample_sets[0].paths[0];
    let d = first.dim();
    if node >= first.node_count() {
        return Err(Error::InvalidArgument(format!(
            "node {node} outside a path of {} nodes",
            first.node_count()
        )));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(
            "weights must be finite, non-negative and not all zero".into(),
        ));
    }
    let cols = if order == 1 { 1 } else { d };
    let mut acc = DMatrix::zeros(d, cols);
    for (set, &w) in sample_sets.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut local = DMatrix::zeros(d, cols);
        for path in &set.paths {
            let x = path.state(node);
            if order == 1 {
                local += &x;
            } else {
                local += &x * x.transpose();
            }
        }
        acc += local * (w / set.len() as f64);
    }
    Ok(acc / total)
}

/// Pinned-endpoint runs for endpoints drawn from a trial density, with the
/// assembled ensemble.
#[derive(Clone, Debug)]
pub struct ReweightedRun {
    pub ensemble: EndpointEnsemble,
    pub runs: Vec<SampleSet>,
}

/// Draws `trial_count` endpoints from the ladder's level-0 Gaussian, runs a
/// pinned-endpoint chain for each and weights them by `ϱ/φ`.
pub fn run_reweighted(
    model: &dyn Model,
    grid: &TimeGrid,
    ladder: &Ladder,
    config: &ChainConfig,
    trial_count: usize,
) -> Result<ReweightedRun> {
    if trial_count == 0 {
        return Err(Error::InvalidArgument(
            "trial endpoint count must be at least 1".into(),
        ));
    }
    let sampler = TrialSampler::new(ladder)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(ENDPOINT_STREAM);
    let endpoints: Vec<StateVector> = (0..trial_count)
        .map(|_| sampler.draw_endpoint(&mut rng))
        .collect();
    let log_trial_density = endpoints
        .iter()
        .map(|x| sampler.endpoint_log_density(x))
        .collect();

    let runs = endpoints
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut pinned = config.clone();
            pinned.seed = endpoint_seed(config.seed, i as u64);
            pinned.pinned_endpoint = Some(x.clone());
            run_chain(model, grid, ladder, &pinned)
        })
        .collect::<Result<Vec<_>>>()?;

    let estimates = estimate_consistency(&runs)?;
    let warnings = estimates
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.warning.clone().map(|w| (i, w)))
        .collect();
    let ensemble = compute_weights(EndpointEnsemble {
        endpoints,
        log_trial_density,
        log_consistency: estimates.iter().map(|e| e.log_value).collect(),
        weights: Vec::new(),
        warnings,
    })?;
    Ok(ReweightedRun { ensemble, runs })
}

fn endpoint_seed(seed: u64, index: u64) -> u64 {
    seed ^ (index + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}
