//! Multilevel independence Metropolis sampler over the ladder.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::action::{exact_action, quadratic_action_value, QuadraticLevelAction};
use crate::error::{Error, Result};
use crate::linalg::PrecisionGaussian;
use crate::model::{Model, Path, StateVector, TimeGrid};
use crate::recursion::Ladder;

const ACCEPT_STREAM: u64 = 0xffff;
const MAX_START_ATTEMPTS: usize = 1000;

#[derive(Clone, Debug, PartialEq)]
pub struct ChainConfig {
    pub sample_count: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub chain_count: usize,
    pub initial_condition: StateVector,
    /// Fixes `λ^M` instead of drawing it from the level-0 Gaussian.
    pub pinned_endpoint: Option<StateVector>,
}

impl ChainConfig {
    pub fn new(sample_count: usize, seed: u64, initial_condition: StateVector) -> Self {
        ChainConfig {
            sample_count,
            burn_in: 0,
            seed,
            chain_count: 1,
            initial_condition,
            pinned_endpoint: None,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.sample_count == 0 {
            return Err(Error::InvalidArgument(
                "sample_count must be at least 1".into(),
            ));
        }
        if self.chain_count == 0 {
            return Err(Error::InvalidArgument(
                "chain_count must be at least 1".into(),
            ));
        }
        if self.chain_count > self.sample_count {
            return Err(Error::InvalidArgument(format!(
                "chain_count {} exceeds sample_count {}",
                self.chain_count, self.sample_count
            )));
        }
        for (context, v) in [
            ("initial condition", Some(&self.initial_condition)),
            ("pinned endpoint", self.pinned_endpoint.as_ref()),
        ] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context,
                        expected: dim,
                        actual: v.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Proposal and acceptance counts of one level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelDiagnostics {
    pub level: usize,
    pub proposals: u64,
    pub accepted: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub paths: Vec<Path>,
    /// Exact action of each retained path.
    pub actions: Vec<f64>,
    /// Finest-level quadratic action of each retained path.
    pub approx_actions: Vec<f64>,
    pub endpoint_values: Vec<StateVector>,
    pub acceptance_rate: f64,
    pub level_diagnostics: Vec<LevelDiagnostics>,
    /// `−S − ln q` of every post-burn-in proposal, accepted or not.
    pub proposal_log_weights: Vec<f64>,
    pub non_finite_proposals: u64,
    pub warnings: Vec<String>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// Draw from `∝ exp(−½λᵀGλ − λᵀK)`.
pub fn sample_endpoint<R: Rng + ?Sized>(
    g_end: &DMatrix<f64>,
    k_end: &DVector<f64>,
    rng: &mut R,
) -> Result<StateVector> {
    let gauss = PrecisionGaussian::new(g_end, 0, 0)?;
    check_len("endpoint linear term", gauss.dim(), k_end.len())?;
    Ok(gauss.draw(k_end, rng).0)
}

/// Heat-bath draw of an integrated node of `coeffs` given its neighbours, all
/// in working coordinates.
pub fn sample_interior_node<R: Rng + ?Sized>(
    coeffs: &QuadraticLevelAction,
    node: usize,
    left: &DVector<f64>,
    right: &DVector<f64>,
    rng: &mut R,
) -> Result<StateVector> {
    let conditional = NodeConditional::new(coeffs, node)?;
    check_len("left neighbour", conditional.dim(), left.len())?;
    check_len("right neighbour", conditional.dim(), right.len())?;
    Ok(conditional.draw(left, right, rng).0)
}

fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct NodeConditional {
    node: usize,
    gauss: PrecisionGaussian,
    h_plus: DMatrix<f64>,
    h_minus: DMatrix<f64>,
    k: DVector<f64>,
}

impl NodeConditional {
    fn new(coeffs: &QuadraticLevelAction, node: usize) -> Result<Self> {
        let is_integrated = coeffs.integrated_nodes().any(|n| n == node);
        let t = coeffs
            .terms(node)
            .filter(|_| is_integrated)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "node {node} is not sampled at level {}",
                    coeffs.level()
                ))
            })?;
        Ok(NodeConditional {
            node,
            gauss: PrecisionGaussian::new(&t.g, coeffs.level(), node)?,
            h_plus: t.h_plus.clone().expect("integrated node has H+"),
            h_minus: t.h_minus.clone().expect("integrated node has H-"),
            k: t.k.clone(),
        })
    }

    fn dim(&self) -> usize {
        self.gauss.dim()
    }

    fn draw<R: Rng + ?Sized>(
        &self,
        left: &DVector<f64>,
        right: &DVector<f64>,
        rng: &mut R,
    ) -> (DVector<f64>, f64) {
        let linear = &self.h_plus * right + &self.h_minus * left + &self.k;
        self.gauss.draw(&linear, rng)
    }
}

/// Independent generator per level plus one for acceptance tests, all
/// derived from `(seed, chain)`.
#[derive(Clone, Debug)]
pub struct ChainStreams {
    levels: Vec<ChaCha8Rng>,
    accept: ChaCha8Rng,
}

impl ChainStreams {
    pub fn new(seed: u64, chain: u64, levels: usize) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((chain << 16) | id);
            rng
        };
        ChainStreams {
            levels: (0..=levels as u64).map(stream).collect(),
            accept: stream(ACCEPT_STREAM),
        }
    }

    pub fn level(&mut self, k: usize) -> &mut ChaCha8Rng {
        &mut self.levels[k]
    }

    pub fn accept(&mut self) -> &mut ChaCha8Rng {
        &mut self.accept
    }
}

/// A proposed path in absolute coordinates with its trial log-density.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub path: Path,
    pub log_density: f64,
}

/// Precomputed factorizations of every conditional of a ladder.
#[derive(Clone, Debug)]
pub struct TrialSampler<'a> {
    ladder: &'a Ladder,
    endpoint: PrecisionGaussian,
    conditionals: Vec<Vec<NodeConditional>>,
}

impl<'a> TrialSampler<'a> {
    pub fn new(ladder: &'a Ladder) -> Result<Self> {
        let coarsest = ladder.coarsest();
        let endpoint = PrecisionGaussian::new(coarsest.g_end(), 0, coarsest.final_node())?;
        let conditionals = (1..=ladder.levels())
            .map(|k| {
                let q = ladder.level(k);
                q.integrated_nodes()
                    .map(|n| NodeConditional::new(q, n))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrialSampler {
            ladder,
            endpoint,
            conditionals,
        })
    }

    pub fn ladder(&self) -> &Ladder {
        self.ladder
    }

    /// Log-density of `x` (absolute coordinates) under the level-0 endpoint
    /// Gaussian.
    pub fn endpoint_log_density(&self, x: &DVector<f64>) -> f64 {
        let q = self.ladder.coarsest();
        let w = q.to_working(q.final_node(), x.as_slice());
        self.endpoint.log_density(&w, q.k_end())
    }

    /// Draws an endpoint (absolute coordinates) from the level-0 Gaussian.
    pub fn draw_endpoint<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let q = self.ladder.coarsest();
        let (w, _) = self.endpoint.draw(q.k_end(), rng);
        q.to_absolute(q.final_node(), &w)
    }

    /// Full path draw: endpoint at level 0, then every level's integrated
    /// nodes coarse to fine.
    pub fn propose(&self, streams: &mut ChainStreams) -> Proposal {
        let q = self.ladder.coarsest();
        let (end, log_end) = self.endpoint.draw(q.k_end(), streams.level(0));
        self.fill(end, log_end, streams)
    }

    /// As [`propose`](Self::propose) with `λ^M` fixed; the log-density
    /// covers the interior nodes only.
    pub fn propose_pinned(&self, endpoint: &DVector<f64>, streams: &mut ChainStreams) -> Proposal {
        let q = self.ladder.coarsest();
        let end = q.to_working(q.final_node(), endpoint.as_slice());
        self.fill(end, 0.0, streams)
    }

    fn fill(
        &self,
        end: DVector<f64>,
        mut log_density: f64,
        streams: &mut ChainStreams,
    ) -> Proposal {
        let finest = self.ladder.finest();
        let final_node = finest.final_node();
        let mut working: Vec<DVector<f64>> = vec![DVector::zeros(finest.dim()); final_node + 1];
        working[0] = finest.anchor().clone();
        working[final_node] = end;
        for (idx, level) in self.conditionals.iter().enumerate() {
            let k = idx + 1;
            let span = self.ladder.level(k).span();
            let rng = streams.level(k);
            for c in level {
                let (x, lp) = c.draw(&working[c.node - span], &working[c.node + span], rng);
                working[c.node] = x;
                log_density += lp;
            }
        }
        let mut path = Path::zeros(finest.dim(), final_node + 1);
        for (n, w) in working.iter().enumerate() {
            let abs = finest.to_absolute(n, w);
            path.node_mut(n).copy_from_slice(abs.as_slice());
        }
        Proposal { path, log_density }
    }
}

/// Convenience wrapper building a [`TrialSampler`] for a single draw.
pub fn propose_path(ladder: &Ladder, streams: &mut ChainStreams) -> Result<Proposal> {
    Ok(TrialSampler::new(ladder)?.propose(streams))
}

/// Exact and approximate action of a path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPath {
    pub exact: f64,
    pub approximate: f64,
}

impl ScoredPath {
    pub fn is_finite(&self) -> bool {
        self.exact.is_finite() && self.approximate.is_finite()
    }
}

/// `min(1, exp[(S^a(s′)−S(s′)) − (S^a(s)−S(s))])`; zero for a non-finite
/// proposal.
pub fn acceptance_probability(current: &ScoredPath, proposal: &ScoredPath) -> f64 {
    if !proposal.is_finite() {
        return 0.0;
    }
    let log_ratio = (proposal.approximate - proposal.exact) - (current.approximate - current.exact);
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Finest-level Metropolis test. Always consumes one uniform.
pub fn metropolis_accept<R: Rng + ?Sized>(
    current: &ScoredPath,
    proposal: &ScoredPath,
    rng: &mut R,
) -> bool {
    let u: f64 = rng.random();
    u < acceptance_probability(current, proposal)
}

fn score(
    path: &Path,
    model: &dyn Model,
    grid: &TimeGrid,
    finest: &QuadraticLevelAction,
) -> ScoredPath {
    let exact = exact_action(path, model, grid).unwrap_or(f64::NAN);
    let approximate = quadratic_action_value(finest, path).unwrap_or(f64::NAN);
    ScoredPath { exact, approximate }
}

struct ChainOutput {
    paths: Vec<Path>,
    actions: Vec<f64>,
    approx_actions: Vec<f64>,
    proposal_log_weights: Vec<f64>,
    accepted: u64,
    proposals: u64,
    non_finite: u64,
}

/// Runs `chain_count` independent chains in parallel, splitting
/// `sample_count` between them, and concatenates the results in chain order.
pub fn run_chain(
    model: &dyn Model,
    grid: &TimeGrid,
    ladder: &Ladder,
    config: &ChainConfig,
) -> Result<SampleSet> {
    let finest = ladder.finest();
    config.validate(finest.dim())?;
    if ladder.levels() != grid.levels() {
        return Err(Error::InvalidArgument(format!(
            "ladder has {} levels but the grid has {}",
            ladder.levels(),
            grid.levels()
        )));
    }
    let start = finest.to_working(0, config.initial_condition.as_slice());
    if (&start - finest.anchor()).amax() > 1e-9 * finest.anchor().amax().max(1.0) {
        return Err(Error::InvalidArgument(
            "initial condition differs from the one the ladder was built for".into(),
        ));
    }
    let sampler = TrialSampler::new(ladder)?;

    let chains = config.chain_count;
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| config.sample_count / chains + usize::from(c < config.sample_count % chains))
        .collect();
    let outputs: Vec<Result<ChainOutput>> = per_chain
        .par_iter()
        .enumerate()
        .map(|(c, &n)| run_single(model, grid, &sampler, config, c as u64, n))
        .collect();

    let mut set = SampleSet {
        paths: Vec::with_capacity(config.sample_count),
        actions: Vec::with_capacity(config.sample_count),
        approx_actions: Vec::with_capacity(config.sample_count),
        endpoint_values: Vec::with_capacity(config.sample_count),
        acceptance_rate: 0.0,
        level_diagnostics: Vec::new(),
        proposal_log_weights: Vec::new(),
        non_finite_proposals: 0,
        warnings: Vec::new(),
    };
    let (mut accepted, mut proposals) = (0u64, 0u64);
    for out in outputs {
        let out = out?;
        accepted += out.accepted;
        proposals += out.proposals;
        set.non_finite_proposals += out.non_finite;
        set.paths.extend(out.paths);
        set.actions.extend(out.actions);
        set.approx_actions.extend(out.approx_actions);
        set.proposal_log_weights.extend(out.proposal_log_weights);
    }
    let final_node = finest.final_node();
    set.endpoint_values = set.paths.iter().map(|p| p.state(final_node)).collect();
    set.acceptance_rate = accepted as f64 / proposals as f64;
    set.level_diagnostics = (0..=ladder.levels())
        .map(|k| {
            let drawn = if k == 0 && config.pinned_endpoint.is_some() {
                0
            } else {
                proposals
            };
            LevelDiagnostics {
                level: k,
                proposals: drawn,
                accepted: if k == ladder.levels() {
                    accepted
                } else {
                    drawn
                },
            }
        })
        .collect();
    if accepted == 0 {
        set.warnings.push(
            "no proposal was accepted after burn-in; revise the mean trajectory or the quadratic potential"
                .into(),
        );
    }
    if set.non_finite_proposals > 0 {
        set.warnings.push(format!(
            "{} proposals had a non-finite action and were rejected",
            set.non_finite_proposals
        ));
    }
    Ok(set)
}

fn run_single(
    model: &dyn Model,
    grid: &TimeGrid,
    sampler: &TrialSampler<'_>,
    config: &ChainConfig,
    chain: u64,
    samples: usize,
) -> Result<ChainOutput> {
    let finest = sampler.ladder().finest();
    let mut streams = ChainStreams::new(config.seed, chain, grid.levels());
    let draw = |streams: &mut ChainStreams| match &config.pinned_endpoint {
        Some(x) => sampler.propose_pinned(x, streams),
        None => sampler.propose(streams),
    };

    let mut current = None;
    for _ in 0..MAX_START_ATTEMPTS {
        let p = draw(&mut streams);
        let s = score(&p.path, model, grid, finest);
        if s.is_finite() {
            current = Some((p.path, s));
            break;
        }
    }
    let (mut path, mut scored) = current.ok_or_else(|| Error::NonFinite {
        function: "exact_action".into(),
        probe: format!("first {MAX_START_ATTEMPTS} proposals of chain {chain}"),
    })?;

    let mut out = ChainOutput {
        paths: Vec::with_capacity(samples),
        actions: Vec::with_capacity(samples),
        approx_actions: Vec::with_capacity(samples),
        proposal_log_weights: Vec::with_capacity(samples),
        accepted: 0,
        proposals: 0,
        non_finite: 0,
    };
    for step in 0..config.burn_in + samples {
        let p = draw(&mut streams);
        let s = score(&p.path, model, grid, finest);
        let accepted = metropolis_accept(&scored, &s, streams.accept());
        if step >= config.burn_in {
            out.proposals += 1;
            if s.is_finite() {
                out.proposal_log_weights.push(-s.exact - p.log_density);
            } else {
                out.non_finite += 1;
                out.proposal_log_weights.push(f64::NEG_INFINITY);
            }
            if accepted {
                out.accepted += 1;
            }
        }
        if accepted {
            path = p.path;
            scored = s;
        }
        if step >= config.burn_in {
            out.paths.push(path.clone());
            out.actions.push(scored.exact);
            out.approx_actions.push(scored.approximate);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{init_level_m_linearized, NodeTerms};
    use crate::linearization::{
        free_particle_model, integrate_mean_path, linearize_theta, Relaxation,
    };
    use crate::recursion::build_ladder;
    use std::sync::Arc;

    fn ladder_for(model: &dyn Model, grid: &TimeGrid, x0: &DVector<f64>) -> Ladder {
        let traj = integrate_mean_path(model, x0, grid).unwrap();
        let lin = linearize_theta(model, &traj).unwrap();
        build_ladder(init_level_m_linearized(model, &lin, grid).unwrap()).unwrap()
    }

    fn moments(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn endpoint_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = DMatrix::from_element(1, 1, 1.0);
        let k = DVector::zeros(1);
        let xs: Vec<f64> = (0..100_000)
            .map(|_| sample_endpoint(&g, &k, &mut rng).unwrap()[0])
            .collect();
        assert!(moments(&xs).0.abs() < 0.02);
    }

    #[test]
    fn endpoint_completed_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = DMatrix::from_element(1, 1, 4.0);
        let k = DVector::from_element(1, -2.0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_endpoint(&g, &k, &mut rng).unwrap()[0])
            .collect();
        let (mean, var) = moments(&xs);
        let sigma_mean = (0.25 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * sigma_mean, "mean {mean}");
        let sigma_var = 0.25 * (2.0 / n as f64).sqrt();
        assert!((var - 0.25).abs() < 3.0 * sigma_var, "var {var}");
    }

    #[test]
    fn endpoint_identity_components_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DMatrix::identity(2, 2);
        let k = DVector::zeros(2);
        let n = 100_000;
        let draws: Vec<StateVector> = (0..n)
            .map(|_| sample_endpoint(&g, &k, &mut rng).unwrap())
            .collect();
        let corr = draws.iter().map(|x| x[0] * x[1]).sum::<f64>() / n as f64;
        assert!(corr.abs() < 0.02);
    }

    #[test]
    fn endpoint_rejects_indefinite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = DMatrix::from_element(1, 1, -1.0);
        assert!(matches!(
            sample_endpoint(&g, &DVector::zeros(1), &mut rng),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    fn scalar_level(g: f64, h: f64) -> QuadraticLevelAction {
        let m = |v: f64| DMatrix::from_element(1, 1, v);
        let terms = vec![
            None,
            Some(NodeTerms {
                g: m(g),
                k: DVector::zeros(1),
                h_plus: Some(m(h)),
                h_minus: Some(m(h)),
            }),
            Some(NodeTerms {
                g: m(1.0),
                k: DVector::zeros(1),
                h_plus: None,
                h_minus: None,
            }),
        ];
        QuadraticLevelAction::from_terms(
            1,
            1,
            terms,
            DVector::zeros(1),
            Arc::new(vec![DVector::zeros(1); 3]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn interior_hand_example() {
        let q = scalar_level(2.0, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (left, right) = (DVector::from_element(1, 1.0), DVector::from_element(1, 3.0));
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_interior_node(&q, 1, &left, &right, &mut rng).unwrap()[0])
            .collect();
        let (mean, var) = moments(&xs);
        assert!((mean - 2.0).abs() < 3.0 * (0.5 / n as f64).sqrt());
        assert!((var - 0.5).abs() < 3.0 * 0.5 * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn interior_rejects_non_integrated_node() {
        let q = scalar_level(2.0, -1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let z = DVector::zeros(1);
        assert!(sample_interior_node(&q, 2, &z, &z, &mut rng).is_err());
    }

    #[test]
    fn acceptance_rule_examples() {
        let current = ScoredPath {
            exact: 3.0,
            approximate: 1.0,
        };
        let same = ScoredPath {
            exact: 5.0,
            approximate: 3.0,
        };
        assert_eq!(acceptance_probability(&current, &same), 1.0);
        let worse = ScoredPath {
            exact: 5.0 + 2f64.ln(),
            approximate: 3.0,
        };
        assert!((acceptance_probability(&current, &worse) - 0.5).abs() < 1e-15);
        let broken = ScoredPath {
            exact: f64::NAN,
            approximate: 0.0,
        };
        assert_eq!(acceptance_probability(&current, &broken), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(!metropolis_accept(&current, &broken, &mut rng));
    }

    #[test]
    fn free_particle_m1_midpoint_is_bridge_mean() {
        let model = free_particle_model(1).unwrap();
        let grid = TimeGrid::new(1, 0.1, 1.0).unwrap();
        let x0 = DVector::from_element(1, 0.7);
        let ladder = ladder_for(&model, &grid, &x0);
        let sampler = TrialSampler::new(&ladder).unwrap();
        let mut streams = ChainStreams::new(9, 0, 1);
        let n = 50_000;
        let mut resid = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sampler.propose(&mut streams).path;
            assert_eq!(p.node(0), &[0.7]);
            resid.push(p.node(1)[0] - 0.5 * (p.node(0)[0] + p.node(2)[0]));
        }
        let (mean, var) = moments(&resid);
        // conditional variance 1/G with G = 2·(2τ/δ)
        let expect_var = 1.0 / 40.0;
        assert!(mean.abs() < 3.0 * (expect_var / n as f64).sqrt());
        assert!((var - expect_var).abs() < 3.0 * expect_var * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn proposal_deterministic_per_stream() {
        let model = free_particle_model(2).unwrap();
        let grid = TimeGrid::new(3, 0.1, 1.0).unwrap();
        let ladder = ladder_for(&model, &grid, &DVector::zeros(2));
        let a = propose_path(&ladder, &mut ChainStreams::new(11, 2, 3)).unwrap();
        let b = propose_path(&ladder, &mut ChainStreams::new(11, 2, 3)).unwrap();
        let c = propose_path(&ladder, &mut ChainStreams::new(11, 3, 3)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.path, c.path);
    }

    #[test]
    fn quadratic_model_always_accepts() {
        let model = Relaxation::new(2, 1.5, 0.0, 0.3).unwrap();
        let grid = TimeGrid::new(3, 0.1, 1.0).unwrap();
        // the mean path is then stationary, so the midpoint offsets vanish
        let x0 = DVector::zeros(2);
        let ladder = ladder_for(&model, &grid, &x0);
        let mut config = ChainConfig::new(500, 1, x0);
        config.chain_count = 3;
        let set = run_chain(&model, &grid, &ladder, &config).unwrap();
        assert_eq!(set.acceptance_rate, 1.0);
        assert_eq!(set.len(), 500);
        assert!(set.warnings.is_empty());
        assert_eq!(set.level_diagnostics.len(), 4);
        assert!(set
            .level_diagnostics
            .iter()
            .all(|d| d.proposals == 500 && d.accepted == 500));
    }

    #[test]
    fn run_chain_is_deterministic_and_splits_chains() {
        let model = Relaxation::new(1, 1.0, 0.5, 0.0).unwrap();
        let grid = TimeGrid::new(2, 0.2, 1.0).unwrap();
        let x0 = DVector::from_element(1, 0.5);
        let ladder = ladder_for(&model, &grid, &x0);
        let mut config = ChainConfig::new(301, 42, x0);
        config.chain_count = 4;
        config.burn_in = 10;
        let a = run_chain(&model, &grid, &ladder, &config).unwrap();
        let b = run_chain(&model, &grid, &ladder, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 301);
        assert!(a.acceptance_rate > 0.0 && a.acceptance_rate <= 1.0);
        assert!(a.paths.iter().all(|p| p.node(0) == [0.5]));
    }

    #[test]
    fn pinned_endpoint_is_respected() {
        let model = free_particle_model(1).unwrap();
        let grid = TimeGrid::new(2, 0.1, 1.0).unwrap();
        let x0 = DVector::zeros(1);
        let ladder = ladder_for(&model, &grid, &x0);
        let mut config = ChainConfig::new(50, 3, x0);
        config.pinned_endpoint = Some(DVector::from_element(1, 1.25));
        let set = run_chain(&model, &grid, &ladder, &config).unwrap();
        assert!(set.endpoint_values.iter().all(|x| x[0] == 1.25));
        assert_eq!(set.level_diagnostics[0].proposals, 0);
    }

    #[test]
    fn config_validation() {
        let model = free_particle_model(1).unwrap();
        let grid = TimeGrid::new(1, 0.1, 1.0).unwrap();
        let x0 = DVector::zeros(1);
        let ladder = ladder_for(&model, &grid, &x0);
        let mut config = ChainConfig::new(0, 0, x0.clone());
        assert!(run_chain(&model, &grid, &ladder, &config).is_err());
        config.sample_count = 2;
        config.chain_count = 3;
        assert!(run_chain(&model, &grid, &ladder, &config).is_err());
        let wrong_start = ChainConfig::new(2, 0, DVector::from_element(1, 1.0));
        assert!(run_chain(&model, &grid, &ladder, &wrong_start).is_err());
    }
}
