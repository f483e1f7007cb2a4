//! One function per subcommand, each producing a [`Table`].

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use zeno_core::bathcorr::{bath_corr, bath_corr_with};
use zeno_core::eta::EtaOptions;
use zeno_core::oracle::{
    discrete_mode_sum, expm_small, repeated_evolution, ApparatusLayout, DensityMatrix,
    DiscreteBath, Overlaps,
};
use zeno_core::quad::Tolerance;
use zeno_core::rateq::{
    coarse_grained_pmp, coarse_grained_rates, solve_markov, solve_volterra_with, steady_state,
    HistoryMode, VolterraOptions,
};
use zeno_core::shorttime::{
    golden_rule, rate_general_with, rate_measured_with, rate_pmp, rate_pmp_comb, rate_projective,
    zeno_bound, PairSum,
};
use zeno_core::{
    BathState, Branch, MeasurementSchedule, RatePair, ShortTimeQuery, SpectralDensity,
};

use crate::args::*;
use crate::config::{self, Quantity, RunConfig, SweepSection, Variable};
use crate::error::CliError;
use crate::output::Table;

/// Settings shared by every command.
#[derive(Debug, Clone, Copy)]
pub struct Globals {
    pub seed: u64,
    pub tol: Option<f64>,
}

impl Globals {
    fn eta(&self) -> EtaOptions {
        self.tol.map(EtaOptions::with_rel).unwrap_or_default()
    }

    fn corr(&self, b: &BathState, dt: f64, branch: Branch) -> Result<Complex64, CliError> {
        Ok(match self.tol {
            Some(t) => bath_corr_with(b, dt, branch, Tolerance::relative(t))?,
            None => bath_corr(b, dt, branch)?,
        })
    }
}

/// A finished command: the table plus what goes into its header.
pub struct Outcome {
    pub table: Table,
    pub config: Value,
}

fn outcome(table: Table, cfg: Option<&RunConfig>, args: Value, g: Globals) -> Outcome {
    // where the output goes does not change what it contains
    let run = cfg.map(|c| {
        let mut c = c.clone();
        c.output.path = None;
        c
    });
    Outcome {
        table,
        config: json!({ "run": run, "args": args, "seed": g.seed, "tol": g.tol }),
    }
}

fn measured(
    g: &SpectralDensity,
    tau: f64,
    gamma: f64,
    theta: f64,
    gl: Globals,
) -> Result<f64, CliError> {
    Ok(rate_measured_with(g, tau, gamma, theta, gl.eta())?)
}

pub fn spectrum(cfg: &RunConfig, a: &SpectrumArgs, gl: Globals) -> Result<Outcome, CliError> {
    let g = cfg.spectrum()?;
    if a.points < 2 {
        return Err(CliError::Usage("need at least 2 points".into()));
    }
    let hi = a.omega_max.unwrap_or(g.support().1);
    if !(a.omega_min < hi) {
        return Err(CliError::Usage(format!(
            "need omega_min < omega_max, got {} and {hi}",
            a.omega_min
        )));
    }
    let mut t = Table::new(&["omega", "G"]);
    for w in config::grid(config::Grid::Linear, a.omega_min, hi, a.points) {
        t.push(vec![w, g.eval(w)?]);
    }
    let integral = g.integral(Tolerance::relative(1e-10))?;
    t.notes
        .push(format!("integral: {}", crate::output::fmt_num(integral)));
    t.notes.push(format!(
        "golden_rule: {}",
        crate::output::fmt_num(golden_rule(&g))
    ));
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

pub fn rate(cfg: &RunConfig, a: &RateArgs, gl: Globals) -> Result<Outcome, CliError> {
    let g = cfg.spectrum()?;
    let sched = cfg.schedule()?;
    let s = &cfg.schedule;
    let r = match a.kind {
        RateKind::Golden => golden_rule(&g),
        RateKind::Projective => rate_projective(&g, s.tau)?,
        RateKind::Measured => measured(&g, s.tau, s.gamma, s.theta, gl)?,
        RateKind::General => {
            let q = ShortTimeQuery::new(g.clone(), sched.clone(), a.n)?;
            rate_general_with(&q, PairSum::Fast, gl.eta())?
        }
        RateKind::Pmp => rate_pmp(&g, s.tau, s.theta, a.n)?,
        RateKind::Comb => rate_pmp_comb(&g, s.tau, s.theta)?,
    };
    let gr = golden_rule(&g);
    let gmax = sched.gamma_max();
    let bound = if gmax < 1.0 {
        zeno_bound(&g, s.tau, gmax)?
    } else {
        f64::INFINITY
    };
    let mut t = Table::new(&[
        "tau",
        "tau_m",
        "gamma",
        "theta",
        "n",
        "rate",
        "golden_rule",
        "ratio",
        "zeno_bound",
    ]);
    t.push(vec![
        s.tau,
        s.tau_m,
        s.gamma,
        s.theta,
        a.n as f64,
        r,
        gr,
        r / gr,
        bound,
    ]);
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

pub fn corr(cfg: &RunConfig, a: &CorrArgs, gl: Globals) -> Result<Outcome, CliError> {
    let b = cfg.bath()?;
    let sched = cfg.schedule()?;
    if a.points < 2 || !(a.t_max > a.s) {
        return Err(CliError::Usage(
            "need t_max > s and at least 2 points".into(),
        ));
    }
    let branch = match a.branch {
        BranchArg::Plus => Branch::Plus,
        BranchArg::Minus => Branch::Minus,
    };
    let ts = config::grid(config::Grid::Linear, a.s, a.t_max, a.points);
    let mut t = Table::new(&["t", "ReF", "ImgB", "AbsF"]);
    t.notes
        .push("ReF = 2 Re[g_B(t-s) g_A(t,s)], ImgB = 2 Im[...], AbsF = 2 |...|".into());
    t.extend_par(&ts, |&x| {
        Ok(vec![kernel_row(&b, &sched, x, a.s, branch, gl)?])
    })?;
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

fn kernel_row(
    b: &BathState,
    sched: &MeasurementSchedule,
    t: f64,
    s: f64,
    branch: Branch,
    gl: Globals,
) -> Result<Vec<f64>, CliError> {
    let ga = sched.apparatus_correlation(t, s)?;
    let z = if ga == Complex64::new(0.0, 0.0) {
        ga
    } else {
        2.0 * gl.corr(b, t - s, branch)? * ga
    };
    Ok(vec![t, z.re, z.im, z.norm()])
}

pub fn rateq(cfg: &RunConfig, a: &RateqArgs, gl: Globals) -> Result<Outcome, CliError> {
    let b = cfg.bath()?;
    let sched = cfg.schedule()?;
    let trace = match a.scheme {
        SchemeArg::Markov => {
            let rates = coarse_grained_rates(&b, &sched)?;
            solve_markov(rates, a.p0, a.t_final, a.samples)?
        }
        SchemeArg::Volterra | SchemeArg::Timelocal => {
            let opts = VolterraOptions {
                memory: a.memory,
                mode: if a.scheme == SchemeArg::Volterra {
                    HistoryMode::Full
                } else {
                    HistoryMode::TimeLocal
                },
                ..Default::default()
            };
            solve_volterra_with(&b, &sched, a.p0, a.t_final, a.dt, opts)?
        }
    };
    let mut t = Table::new(&["t", "p_e", "p_g", "r_e", "r_g"]);
    for i in 0..trace.len() {
        t.push(vec![
            trace.times[i],
            trace.p_e[i],
            trace.p_g[i],
            trace.r_e[i],
            trace.r_g[i],
        ]);
    }
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

fn steady_row(rates: RatePair) -> Result<[f64; 4], CliError> {
    let (pg, pe) = steady_state(rates)?;
    Ok([rates.r_e, rates.r_g, pg, pe])
}

pub fn steady(cfg: &RunConfig, a: &SteadyArgs, gl: Globals) -> Result<Outcome, CliError> {
    let b = cfg.bath()?;
    let s = &cfg.schedule;
    let rates = match a.pmp {
        Some(n) => coarse_grained_pmp(&b, s.tau, s.theta, n)?,
        None => coarse_grained_rates(&b, &cfg.schedule()?)?,
    };
    let [re, rg, pg, pe] = steady_row(rates)?;
    let mut t = Table::new(&["tau", "gamma", "theta", "r_e", "r_g", "p_g", "p_e"]);
    t.push(vec![s.tau, s.gamma, s.theta, re, rg, pg, pe]);
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<Complex64> {
    let v: Vec<Complex64> = (0..d)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<Complex64> {
    DMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn equivalence(a: &EquivalenceArgs, gl: Globals) -> Result<Outcome, CliError> {
    if a.max_dim < 1 || a.max_dim > 4 {
        return Err(CliError::Usage("max-dim must lie in 1..=4".into()));
    }
    if a.max_n > 10 {
        return Err(CliError::Usage("max-n must be at most 10".into()));
    }
    // draw every instance up front so the output does not depend on threading
    let mut rng = ChaCha8Rng::seed_from_u64(gl.seed);
    let mut cases = Vec::with_capacity(a.instances);
    for i in 0..a.instances {
        let d = rng.random_range(1..=a.max_dim);
        let n = rng.random_range(0..=a.max_n);
        let m = random_matrix(&mut rng, d);
        let mut rho = &m * m.adjoint();
        let tr = rho.trace();
        rho /= tr;
        let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
        let h = random_matrix(&mut rng, d);
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let pointers: Vec<Vec<Complex64>> = (0..d).map(|_| random_unit(&mut rng, 2)).collect();
        cases.push((i, d, n, rho, h, pointers));
    }
    let mut t = Table::new(&["instance", "dim", "n", "max_diff"]);
    t.extend_par(&cases, |(i, d, n, rho, h, pointers)| {
        let rho = DensityMatrix::new(rho.clone())?;
        let u = expm_small(h, 1.0)?;
        let o = Overlaps::from_pointers(pointers)?;
        let single = repeated_evolution(&rho, &u, &o, *n, ApparatusLayout::Single)?;
        let multi = repeated_evolution(&rho, &u, &o, *n, ApparatusLayout::Multi)?;
        let diff = (single.matrix() - multi.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        Ok(vec![vec![*i as f64, *d as f64, *n as f64, diff]])
    })?;
    let worst = t.rows.iter().map(|r| r[3]).fold(0.0, f64::max);
    t.notes.push(format!(
        "max_diff over all instances: {}",
        crate::output::fmt_num(worst)
    ));
    Ok(outcome(t, None, json!(a), gl))
}

pub fn modesum(cfg: &RunConfig, a: &ModesumArgs, gl: Globals) -> Result<Outcome, CliError> {
    let g = cfg.spectrum()?;
    let sched = cfg.schedule()?;
    let s = &cfg.schedule;
    let reference = measured(&g, s.tau, s.gamma, s.theta, gl)?;
    let mut t = Table::new(&[
        "modes",
        "periods",
        "tau",
        "gamma",
        "theta",
        "mode_sum",
        "rate_measured",
        "rel_diff",
    ]);
    for &k in &a.modes {
        let db = DiscreteBath::new(&g, k)?;
        let sum = discrete_mode_sum(&db, &sched, a.periods)?;
        t.push(vec![
            k as f64,
            a.periods as f64,
            s.tau,
            s.gamma,
            s.theta,
            sum,
            reference,
            (sum - reference) / reference,
        ]);
    }
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

/// Which sweep variables each quantity accepts.
fn valid_pairs() -> &'static [(Quantity, &'static [Variable])] {
    use Variable::*;
    &[
        (Quantity::RateProjective, &[Tau]),
        (Quantity::RateMeasured, &[Tau, Theta, Gamma]),
        (Quantity::RatePmp, &[Tau, Theta]),
        (Quantity::CoarseGrained, &[Tau, Theta, Gamma]),
        (Quantity::SteadyState, &[Tau, Theta, Gamma]),
    ]
}

fn check_pair(q: Quantity, v: Variable) -> Result<(), CliError> {
    let ok = valid_pairs()
        .iter()
        .any(|(qq, vs)| *qq == q && vs.contains(&v));
    if ok {
        return Ok(());
    }
    let listing: Vec<String> = valid_pairs()
        .iter()
        .map(|(qq, vs)| {
            format!(
                "{} -> {}",
                name(qq),
                vs.iter().map(name).collect::<Vec<_>>().join("|")
            )
        })
        .collect();
    Err(CliError::Usage(format!(
        "quantity {} cannot be swept over {}; valid pairs: {}",
        name(&q),
        name(&v),
        listing.join("; ")
    )))
}

fn name<T: serde::Serialize>(x: &T) -> String {
    serde_json::to_value(x)
        .ok()
        .and_then(|v| v.as_str().map(String::from))
        .unwrap_or_default()
}

pub fn sweep(cfg: &mut RunConfig, a: &SweepArgs, gl: Globals) -> Result<Outcome, CliError> {
    let sw = match (cfg.sweep.take(), a.quantity, a.variable) {
        (Some(s), _, _) => s,
        (None, Some(quantity), Some(variable)) => SweepSection {
            quantity,
            variable,
            grid: config::Grid::Log,
            min: 0.0,
            max: 0.0,
            points: 0,
            pulses: config::default_pulses(),
        },
        _ => {
            return Err(CliError::Usage(
                "sweep needs a [sweep] config section or --quantity and --variable".into(),
            ))
        }
    };
    let mut sw = sw;
    if let Some(q) = a.quantity {
        sw.quantity = q;
    }
    if let Some(v) = a.variable {
        sw.variable = v;
    }
    if let Some(g) = a.grid {
        sw.grid = g;
    }
    if let Some(x) = a.min {
        sw.min = x;
    }
    if let Some(x) = a.max {
        sw.max = x;
    }
    if let Some(x) = a.points {
        sw.points = x;
    }
    if let Some(x) = a.pulses {
        sw.pulses = x;
    }
    check_pair(sw.quantity, sw.variable)?;
    cfg.sweep = Some(sw.clone());
    cfg.validate()?;

    let g = cfg.spectrum()?;
    let b = BathState::new(g.clone(), cfg.bath.temperature)?;
    let base = cfg.schedule.clone();
    let var = name(&sw.variable);
    let columns: Vec<&str> = match sw.quantity {
        Quantity::RateProjective | Quantity::RateMeasured | Quantity::RatePmp => {
            vec![var.as_str(), "rate"]
        }
        Quantity::CoarseGrained => vec![var.as_str(), "r_e", "r_g"],
        Quantity::SteadyState => vec![var.as_str(), "r_e", "r_g", "p_g", "p_e"],
    };
    let mut t = Table::new(&columns);
    let xs = config::grid(sw.grid, sw.min, sw.max, sw.points);
    t.extend_par(&xs, |&x| {
        let mut s = base.clone();
        match sw.variable {
            Variable::Tau => s.tau = x,
            Variable::Theta => s.theta = x,
            Variable::Gamma => s.gamma = x,
        }
        let schedule = || -> Result<MeasurementSchedule, CliError> {
            let mut c = cfg.clone();
            c.schedule = s.clone();
            c.schedule()
        };
        let row = match sw.quantity {
            Quantity::RateProjective => vec![x, rate_projective(&g, s.tau)?],
            Quantity::RateMeasured => vec![x, measured(&g, s.tau, s.gamma, s.theta, gl)?],
            Quantity::RatePmp => vec![x, rate_pmp(&g, s.tau, s.theta, sw.pulses)?],
            Quantity::CoarseGrained => {
                let r = coarse_grained_rates(&b, &schedule()?)?;
                vec![x, r.r_e, r.r_g]
            }
            Quantity::SteadyState => {
                let [re, rg, pg, pe] = steady_row(coarse_grained_rates(&b, &schedule()?)?)?;
                vec![x, re, rg, pg, pe]
            }
        };
        Ok(vec![row])
    })?;
    Ok(outcome(t, Some(cfg), json!(a), gl))
}

pub fn fig(a: &FigArgs, gl: Globals) -> Result<Outcome, CliError> {
    let (t, params) = match a.n {
        3 => fig3(a.points.unwrap_or(1201))?,
        4 => fig4(a.points.unwrap_or(200), gl)?,
        5 => fig5(a.points.unwrap_or(601), gl)?,
        6 => fig6(a.points.unwrap_or(601))?,
        7 => fig7(a.points.unwrap_or(100))?,
        n => {
            return Err(CliError::Usage(format!(
                "figure must be one of 3, 4, 5, 6, 7; got {n}"
            )))
        }
    };
    Ok(Outcome {
        table: t,
        config: json!({ "figure": a.n, "parameters": params, "seed": gl.seed, "tol": gl.tol }),
    })
}

const FIG_GAMMAS: [f64; 3] = [0.0, 0.3, 0.8];
const FIG_THETAS: [f64; 4] = [0.0, 0.5 * PI, PI, 1.5 * PI];

fn check_points(points: usize) -> Result<(), CliError> {
    if points < 2 {
        return Err(CliError::Usage("need at least 2 points".into()));
    }
    Ok(())
}

fn fig3(points: usize) -> Result<(Table, Value), CliError> {
    check_points(points)?;
    let curves = [(0.3, 0.0), (0.5, 0.0), (0.8, 0.0), (0.8, TAU / 3.0)];
    let mut t = Table::new(&[
        "eta",
        "h_0.3_0",
        "h_0.5_0",
        "h_0.8_0",
        "h_0.8_2pi/3",
        "sinc2",
    ]);
    for eta in config::grid(config::Grid::Linear, -3.0 * PI, 3.0 * PI, points) {
        let mut row = vec![eta];
        for (gamma, theta) in curves {
            row.push(zeno_core::measurement::filter_h(gamma, theta - eta)?);
        }
        let s = zeno_core::measurement::sinc(0.5 * eta);
        row.push(s * s);
        t.push(row);
    }
    Ok((
        t,
        json!({ "curves": curves, "eta": [-3.0 * PI, 3.0 * PI], "points": points }),
    ))
}

fn fig4(points: usize, gl: Globals) -> Result<(Table, Value), CliError> {
    check_points(points)?;
    let g = SpectralDensity::hydrogenic(549.5)?;
    let gr = golden_rule(&g);
    let taus = config::grid(config::Grid::Log, 1e-6, 1e2, points);
    let mut cases = Vec::new();
    for &gm in &FIG_GAMMAS {
        for &th in &FIG_THETAS {
            cases.extend(taus.iter().map(|&tau| (gm, th, tau)));
        }
    }
    let mut t = Table::new(&["gamma", "theta", "tau", "rate", "ratio"]);
    t.extend_par(&cases, |&(gm, th, tau)| {
        let r = measured(&g, tau, gm, th, gl)?;
        Ok(vec![vec![gm, th, tau, r, r / gr]])
    })?;
    t.notes
        .push(format!("golden_rule: {}", crate::output::fmt_num(gr)));
    let params = json!({ "spectrum": "hydrogenic", "omega_c": 549.5, "gammas": FIG_GAMMAS, "thetas": FIG_THETAS,
        "tau": [1e-6, 1e2], "grid": "log", "points": points });
    Ok((t, params))
}

fn fig5_bath() -> Result<BathState, CliError> {
    Ok(BathState::zero_temperature(SpectralDensity::ohmic(500.0)?))
}

fn fig5(points: usize, gl: Globals) -> Result<(Table, Value), CliError> {
    check_points(points)?;
    let b = fig5_bath()?;
    let taus = [0.003, 0.005, 0.01, 0.1];
    let ts = config::grid(config::Grid::Linear, 0.0, 0.3, points);
    let mut cases = Vec::new();
    for &tau in &taus {
        for &x in &ts {
            cases.push((tau, x));
        }
    }
    let mut t = Table::new(&["tau", "t", "ReF", "ImgB", "AbsF"]);
    t.extend_par(&cases, |&(tau, x)| {
        let sched = MeasurementSchedule::identical(tau, 0.5, 0.0)?;
        let mut row = vec![tau];
        row.extend(kernel_row(&b, &sched, x, 0.0, Branch::Plus, gl)?);
        Ok(vec![row])
    })?;
    let params = json!({ "spectrum": "ohmic", "omega_c": 500.0, "temperature": 0.0, "gamma": 0.5, "theta": 0.0,
        "tau_m": 0.0, "taus": taus, "t": [0.0, 0.3], "points": points });
    Ok((t, params))
}

fn fig6(points: usize) -> Result<(Table, Value), CliError> {
    check_points(points)?;
    let b = fig5_bath()?;
    let sched = MeasurementSchedule::identical(0.1, 0.5, 0.0)?;
    let ts = config::grid(config::Grid::Linear, 0.0, 3.0, points);
    let mut t = Table::new(&["t", "r_e", "r_g"]);
    t.extend_par(&ts, |&x| {
        let r = zeno_core::rateq::timelocal_rates(&b, &sched, x)?;
        Ok(vec![vec![x, r.r_e, r.r_g]])
    })?;
    let params = json!({ "spectrum": "ohmic", "omega_c": 500.0, "temperature": 0.0, "gamma": 0.5, "theta": 0.0,
        "tau": 0.1, "tau_m": 0.0, "t": [0.0, 3.0], "points": points });
    Ok((t, params))
}

/// Pulse count of the phase-modulation curves.
const FIG7_PULSES: u64 = 10_000;

fn fig7(points: usize) -> Result<(Table, Value), CliError> {
    check_points(points)?;
    let b = BathState::zero_temperature(SpectralDensity::hydrogenic(549.5)?);
    let taus = config::grid(config::Grid::Log, 1e-5, 1e3, points);
    let mut pmp_cases = Vec::new();
    for &th in &FIG_THETAS {
        for &tau in &taus {
            pmp_cases.push((th, tau));
        }
    }
    // the pulse curves do not depend on γ; compute them once
    let mut pmp = Table::new(&["theta", "tau", "p_e"]);
    pmp.extend_par(&pmp_cases, |&(th, tau)| {
        let [_, _, _, pe] = steady_row(coarse_grained_pmp(&b, tau, th, FIG7_PULSES)?)?;
        Ok(vec![vec![th, tau, pe]])
    })?;
    let params = json!({ "spectrum": "hydrogenic", "omega_c": 549.5, "temperature": 0.0, "gammas": FIG_GAMMAS,
        "thetas": FIG_THETAS, "tau": [1e-5, 1e3], "grid": "log", "points": points, "pulses": FIG7_PULSES });
    let mut cases = Vec::new();
    for &gm in &FIG_GAMMAS {
        for (k, &th) in FIG_THETAS.iter().enumerate() {
            for (i, &tau) in taus.iter().enumerate() {
                cases.push((k * points + i, gm, th, tau));
            }
        }
    }
    let mut t = Table::new(&["gamma", "theta", "tau", "p_e_measured", "p_e_pmp"]);
    if pmp.truncated() {
        t.planned = cases.len();
        return Ok((t, params));
    }
    t.extend_par(&cases, |&(k, gm, th, tau)| {
        let sched = MeasurementSchedule::identical(tau, gm, th)?;
        let [_, _, _, pe] = steady_row(coarse_grained_rates(&b, &sched)?)?;
        Ok(vec![vec![gm, th, tau, pe, pmp.rows[k][2]]])
    })?;
    Ok((t, params))
}
