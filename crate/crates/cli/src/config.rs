//! Run configuration: TOML file, CSV side tables and command-line overrides.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zeno_core::measurement::Factors;
use zeno_core::{BathState, MeasurementSchedule, SpectralDensity};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumChoice {
    Hydrogenic,
    Ohmic,
    Table,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSection {
    pub kind: SpectrumChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    /// Two-column CSV `omega,G`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default = "one")]
    pub coupling: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            kind: SpectrumChoice::Hydrogenic,
            omega_c: Some(549.5),
            table: None,
            coupling: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub tau: f64,
    #[serde(default)]
    pub tau_m: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub theta: f64,
    /// Optional per-measurement factors, CSV `gamma,theta`; overrides gamma/theta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<PathBuf>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            tau: 0.01,
            tau_m: 0.0,
            gamma: 0.0,
            theta: 0.0,
            factors: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathSection {
    #[serde(default)]
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Quantity {
    RateProjective,
    RateMeasured,
    RatePmp,
    CoarseGrained,
    SteadyState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Tau,
    Theta,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Grid {
    Log,
    Linear,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub quantity: Quantity,
    pub variable: Variable,
    #[serde(default = "default_grid")]
    pub grid: Grid,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    /// Pulse count for `rate_pmp`.
    #[serde(default = "default_pulses")]
    pub pulses: u64,
}

fn default_grid() -> Grid {
    Grid::Log
}

pub fn default_pulses() -> u64 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub bath: BathSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Reads a TOML file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.spectrum.table);
        rebase(&mut cfg.schedule.factors);
        rebase(&mut cfg.output.path);
        Ok(cfg)
    }

    /// Checks everything that can be checked without running a computation.
    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.spectrum;
        match s.kind {
            SpectrumChoice::Table => match &s.table {
                Some(p) if p.is_file() => {}
                Some(p) => {
                    return Err(CliError::Usage(format!(
                        "spectrum table {} does not exist",
                        p.display()
                    )))
                }
                None => {
                    return Err(CliError::Usage(
                        "spectrum kind 'table' needs a table path".into(),
                    ))
                }
            },
            _ => {
                if s.omega_c.is_none() {
                    return Err(CliError::Usage("spectrum needs omega_c".into()));
                }
            }
        }
        if let Some(p) = &self.schedule.factors {
            if !p.is_file() {
                return Err(CliError::Usage(format!(
                    "factor table {} does not exist",
                    p.display()
                )));
            }
        }
        if let Some(sw) = &self.sweep {
            if !(sw.min < sw.max) {
                return Err(CliError::Usage(format!(
                    "sweep needs min < max, got {} and {}",
                    sw.min, sw.max
                )));
            }
            if sw.points < 2 {
                return Err(CliError::Usage(format!(
                    "sweep needs at least 2 points, got {}",
                    sw.points
                )));
            }
            if sw.grid == Grid::Log && sw.min <= 0.0 {
                return Err(CliError::Usage("a log grid needs min > 0".into()));
            }
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<SpectralDensity, CliError> {
        let s = &self.spectrum;
        let g = match s.kind {
            SpectrumChoice::Hydrogenic => SpectralDensity::hydrogenic(s.omega_c.unwrap_or(549.5))?,
            SpectrumChoice::Ohmic => SpectralDensity::ohmic(s.omega_c.unwrap_or(500.0))?,
            SpectrumChoice::Table => {
                let path = s
                    .table
                    .as_ref()
                    .ok_or_else(|| CliError::Usage("spectrum table path missing".into()))?;
                SpectralDensity::tabulated(&read_pairs(path, ("omega", "G"))?)?
            }
        };
        if s.coupling == 1.0 {
            Ok(g)
        } else {
            Ok(g.scaled(s.coupling)?)
        }
    }

    pub fn bath(&self) -> Result<BathState, CliError> {
        Ok(BathState::new(self.spectrum()?, self.bath.temperature)?)
    }

    pub fn schedule(&self) -> Result<MeasurementSchedule, CliError> {
        let s = &self.schedule;
        let factors = match &s.factors {
            Some(path) => Factors::Sequence(read_pairs(path, ("gamma", "theta"))?),
            None => Factors::Identical {
                gamma: s.gamma,
                theta: s.theta.rem_euclid(TAU),
            },
        };
        Ok(MeasurementSchedule::new(s.tau, s.tau_m, factors)?)
    }
}

/// Two-column numeric CSV with a header row naming the columns.
pub fn read_pairs(path: &Path, names: (&str, &str)) -> Result<Vec<(f64, f64)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() != 2 || &headers[0] != names.0 || &headers[1] != names.1 {
        return Err(CliError::Usage(format!(
            "{} must have header '{},{}'",
            path.display(),
            names.0,
            names.1
        )));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<(f64, f64)>().enumerate() {
        let row =
            rec.map_err(|e| CliError::Usage(format!("{} row {}: {e}", path.display(), i + 1)))?;
        out.push(row);
    }
    Ok(out)
}

/// Grid points of a sweep, endpoints included.
pub fn grid(kind: Grid, min: f64, max: f64, points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|i| {
            if i == 0 {
                return min;
            }
            if i == points - 1 {
                return max;
            }
            let u = i as f64 / last;
            match kind {
                Grid::Linear => min + (max - min) * u,
                Grid::Log => (min.ln() + (max.ln() - min.ln()) * u).exp(),
            }
        })
        .map(|x| x.clamp(min, max))
        .collect()
}
