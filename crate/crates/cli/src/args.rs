use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{Format, Grid, Quantity, RunConfig, SpectrumChoice, Variable};

/// Decay of a dissipative two-level system under repeated non-demolition
/// measurements. All frequencies are in units of the transition frequency.
#[derive(Debug, Parser)]
#[command(name = "zeno", version, about, max_term_width = 100)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Worker threads for sweeps and figures.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for randomised oracle instances.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Relative tolerance of the short-time rate and bath-correlation integrals.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// More log output on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Overrides for the spectrum, schedule and bath sections of the config.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub spectrum: Option<SpectrumChoice>,
    #[arg(long)]
    pub omega_c: Option<f64>,
    /// Two-column CSV `omega,G` for the tabulated spectrum.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Overall factor multiplying the spectrum.
    #[arg(long)]
    pub coupling: Option<f64>,
    /// Free-evolution time between measurements.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Duration of each measurement.
    #[arg(long)]
    pub tau_m: Option<f64>,
    /// Modulus of the decoherence factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Phase of the decoherence factor.
    #[arg(long)]
    pub theta: Option<f64>,
    /// CSV `gamma,theta` with one decoherence factor per measurement.
    #[arg(long)]
    pub factors: Option<PathBuf>,
    #[arg(long)]
    pub temperature: Option<f64>,
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(kind) = self.spectrum {
            if kind != cfg.spectrum.kind && self.omega_c.is_none() {
                cfg.spectrum.omega_c = match kind {
                    SpectrumChoice::Hydrogenic => Some(549.5),
                    SpectrumChoice::Ohmic => Some(500.0),
                    SpectrumChoice::Table => None,
                };
            }
            cfg.spectrum.kind = kind;
        }
        if self.table.is_some() && self.spectrum.is_none() {
            cfg.spectrum.kind = SpectrumChoice::Table;
        }
        set(&mut cfg.spectrum.omega_c, self.omega_c.map(Some));
        set(&mut cfg.spectrum.table, self.table.clone().map(Some));
        set(&mut cfg.spectrum.coupling, self.coupling);
        set(&mut cfg.schedule.tau, self.tau);
        set(&mut cfg.schedule.tau_m, self.tau_m);
        set(&mut cfg.schedule.gamma, self.gamma);
        set(&mut cfg.schedule.theta, self.theta);
        set(&mut cfg.schedule.factors, self.factors.clone().map(Some));
        set(&mut cfg.bath.temperature, self.temperature);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RateKind {
    Golden,
    Projective,
    Measured,
    General,
    Pmp,
    Comb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchArg {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Volterra,
    Timelocal,
    Markov,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the spectral density.
    Spectrum(SpectrumArgs),
    /// One short-time decay rate.
    Rate(RateArgs),
    /// Effective correlation function `F(t, s)` against `t`.
    Corr(CorrArgs),
    /// Solve the population dynamics.
    Rateq(RateqArgs),
    /// Coarse-grained rates and the steady state they imply.
    Steady(SteadyArgs),
    /// Regenerate the data behind one of the figures (3 to 7).
    Fig(FigArgs),
    /// Independent cross-checks.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Sweep one parameter as described by the `[sweep]` config section.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.0)]
    pub omega_min: f64,
    /// Defaults to the upper end of the spectrum's support.
    #[arg(long)]
    pub omega_max: Option<f64>,
    #[arg(long, default_value_t = 1001)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = RateKind::Measured)]
    pub kind: RateKind,
    /// Measurement or pulse count for `general` and `pmp`.
    #[arg(long, default_value_t = 10_000)]
    pub n: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct CorrArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = BranchArg::Plus)]
    pub branch: BranchArg,
    #[arg(long, default_value_t = 0.0)]
    pub s: f64,
    #[arg(long, default_value_t = 0.3)]
    pub t_max: f64,
    #[arg(long, default_value_t = 601)]
    pub points: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct RateqArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value_t = SchemeArg::Volterra)]
    pub scheme: SchemeArg,
    /// Initial excited-state population.
    #[arg(long, default_value_t = 1.0)]
    pub p0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub t_final: f64,
    /// Time step; must divide tau and tau_m.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Kernel memory kept by the Volterra solver.
    #[arg(long, default_value_t = 10.0)]
    pub memory: f64,
    /// Samples of the Markov trace.
    #[arg(long, default_value_t = 1001)]
    pub samples: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Use this many phase-modulation pulses instead of measurements.
    #[arg(long)]
    pub pmp: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct FigArgs {
    /// Figure number.
    pub n: u8,
    /// Points per curve; each figure has its own default.
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Single- against multi-apparatus evolution on random instances.
    Equivalence(EquivalenceArgs),
    /// Short-time rate as an explicit sum over discrete modes.
    Modesum(ModesumArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct EquivalenceArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 8)]
    pub max_n: u32,
    #[arg(long, default_value_t = 4)]
    pub max_dim: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct ModesumArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Mode counts; repeat to watch convergence.
    #[arg(long, default_values_t = [20_000usize])]
    pub modes: Vec<usize>,
    #[arg(long, default_value_t = 5_000)]
    pub periods: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub quantity: Option<Quantity>,
    #[arg(long, value_enum)]
    pub variable: Option<Variable>,
    #[arg(long, value_enum)]
    pub grid: Option<Grid>,
    #[arg(long)]
    pub min: Option<f64>,
    #[arg(long)]
    pub max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub pulses: Option<u64>,
}
