//! Configuration-driven runs of the path sampler.

pub mod config;
pub mod output;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use pathmc::action::{init_level_m_linearized, init_level_m_taylor};
use pathmc::linearization::{
    free_particle_model, integrate_mean_path, linearize_theta, BurgersModel, Relaxation,
};
use pathmc::model::{check_model_invariants, validate_derivatives, Model, TimeGrid};
use pathmc::recursion::{build_ladder, Ladder};
use pathmc::reweight::run_reweighted;
use pathmc::sampler::{run_chain, ChainConfig};
use thiserror::Error;

pub use config::{EndpointMode, ModelName, RunConfig, Variant};

/// Largest relative derivative mismatch accepted by `--validate-only`.
pub const DERIVATIVE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration key `{key}`: {message}")]
    Usage { key: String, message: String },
    #[error("{stage}: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: pathmc::Error,
    },
    #[error("derivative check failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// Process exit status: 1 for usage and I/O problems, 2 for numerical
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } | CliError::Io { .. } => 1,
            CliError::Numerical { .. } | CliError::Validation(_) => 2,
        }
    }
}

fn numerical(stage: &'static str) -> impl FnOnce(pathmc::Error) -> CliError {
    move |source| CliError::Numerical { stage, source }
}

pub(crate) fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_error(path))?;
    RunConfig::parse(&text)
}

pub fn build_model(config: &RunConfig) -> Result<Box<dyn Model>, CliError> {
    let m = &config.model;
    let model: Box<dyn Model> = match m.name {
        ModelName::FreeParticle => {
            Box::new(free_particle_model(m.dimension.unwrap_or(0)).map_err(numerical("model"))?)
        }
        ModelName::Relaxation => Box::new(
            Relaxation::new(
                m.dimension.unwrap_or(0),
                m.gamma.unwrap_or(0.0),
                m.cubic.unwrap_or(0.0),
                m.phi.unwrap_or(0.0),
            )
            .map_err(numerical("model"))?,
        ),
        ModelName::Burgers => Box::new(
            BurgersModel::new(m.mode_count.unwrap_or(0), m.psi_scale.unwrap_or(0.0))
                .map_err(numerical("model"))?,
        ),
    };
    Ok(model)
}

/// Everything built before sampling.
pub struct Prepared {
    pub model: Box<dyn Model>,
    pub grid: TimeGrid,
    pub initial: DVector<f64>,
    pub ladder: Ladder,
}

/// Mean path, finest-level quadratic action and ladder for a configuration.
pub fn prepare(config: &RunConfig) -> Result<Prepared, CliError> {
    config.validate()?;
    let model = build_model(config)?;
    let initial = DVector::from_column_slice(&config.initial_condition);
    check_model_invariants(model.as_ref(), &initial).map_err(numerical("model"))?;
    let g = &config.grid;
    let grid = TimeGrid::new(g.m, g.step_dt, g.prefactor_tau).map_err(numerical("grid"))?;
    let trajectory =
        integrate_mean_path(model.as_ref(), &initial, &grid).map_err(numerical("linearization"))?;
    let finest = match config.action.variant {
        Variant::Linearized => {
            let lin =
                linearize_theta(model.as_ref(), &trajectory).map_err(numerical("linearization"))?;
            init_level_m_linearized(model.as_ref(), &lin, &grid).map_err(numerical("action"))?
        }
        Variant::Taylor => {
            init_level_m_taylor(model.as_ref(), &trajectory, &grid)
                .map_err(numerical("action"))?
                .action
        }
    };
    let ladder = build_ladder(finest).map_err(numerical("recursion"))?;
    Ok(Prepared {
        model,
        grid,
        initial,
        ladder,
    })
}

/// Derivative checks at the initial condition and along the mean path plus
/// the ladder construction, without sampling. Returns a text report.
pub fn validate_only(config: &RunConfig) -> Result<String, CliError> {
    let prepared = prepare(config)?;
    let model = prepared.model.as_ref();
    let trajectory = integrate_mean_path(model, &prepared.initial, &prepared.grid)
        .map_err(numerical("linearization"))?;
    let mut report = String::new();
    let mut worst: f64 = 0.0;
    let final_node = prepared.grid.final_node();
    let probes = [0, final_node / 2, final_node];
    for &n in &probes {
        let r =
            validate_derivatives(model, &trajectory.states[n], 1e-5).map_err(numerical("model"))?;
        for (name, err) in r.entries() {
            report.push_str(&format!("derivative node={n} {name} {err:e}\n"));
        }
        worst = worst.max(r.max_error());
    }
    for (k, c) in prepared.ladder.condition_numbers().iter().enumerate() {
        report.push_str(&format!("ladder level={k} condition_number {c:e}\n"));
    }
    report.push_str(&format!("derivative max_error {worst:e}\n"));
    if worst > DERIVATIVE_TOLERANCE {
        return Err(CliError::Validation(format!(
            "max relative error {worst:e} exceeds {DERIVATIVE_TOLERANCE:e}\n{report}"
        )));
    }
    Ok(report)
}

/// Runs the configured pipeline and writes all outputs into
/// `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let prepared = prepare(config)?;
    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut chain = ChainConfig::new(
        config.chain.samples,
        config.chain.seed,
        prepared.initial.clone(),
    );
    chain.burn_in = config.chain.burn_in;
    chain.chain_count = config.chain.chains;

    let model = prepared.model.as_ref();
    match config.endpoint.mode {
        EndpointMode::Free => {
            let set = run_chain(model, &prepared.grid, &prepared.ladder, &chain)
                .map_err(numerical("sampler"))?;
            output::write_paths(
                dir,
                &prepared.grid,
                std::slice::from_ref(&set),
                config.output.binary,
            )?;
            output::write_free_endpoints(dir, &set)?;
            output::write_diagnostics(dir, &prepared.ladder, std::slice::from_ref(&set), None)?;
        }
        EndpointMode::Reweighted => {
            let trials = config.endpoint.trial_samples.unwrap_or(0);
            let out = run_reweighted(model, &prepared.grid, &prepared.ladder, &chain, trials)
                .map_err(numerical("reweight"))?;
            output::write_paths(dir, &prepared.grid, &out.runs, config.output.binary)?;
            output::write_trial_endpoints(dir, &out.ensemble)?;
            output::write_weights(dir, &out.ensemble)?;
            output::write_moments(
                dir,
                &out.runs,
                &out.ensemble.weights,
                prepared.grid.final_node(),
            )?;
            output::write_diagnostics(dir, &prepared.ladder, &out.runs, Some(&out.ensemble))?;
        }
    }
    if config.output.dump_ladder {
        output::write_ladder(dir, &prepared.ladder)?;
    }
    output::write_file(&dir.join(output::CONFIG_ECHO), config.to_toml().as_bytes())
}
