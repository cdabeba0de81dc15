//! Trials, sweeps and baselines.
//!
//! Each trial draws its channels once from `seed + trial`; every sweep point
//! and method of that trial reuses them, so curves are paired. Trials run in
//! parallel and rows are assembled in (trial, sweep point, method) order.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use swipt_core::energy::{check_feasibility, max_weighted_energy, simplex_grid, EnergyWeights};
use swipt_core::ellipsoid::EllipsoidOptions;
use swipt_core::metrics::{harvested_power, interference_power, rate_per_user, sum_utility_floored};
use swipt_core::mumimo::{algorithm1, Alg1Options};
use swipt_core::sumimo::{algorithm2, Alg2Options, SumimoMode};
use swipt_core::{CMat, ChannelSet, NetworkScenario, Precoder, SolveReport, UtilityKind};

use crate::channels::generate_channels;
use crate::config::{uw_to_watts, ConfigError, ExperimentConfig, Mode, SweepAxis, Utility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "alg1-wsr")]
    Alg1Wsr,
    #[serde(rename = "alg1-pf")]
    Alg1Pf,
    #[serde(rename = "alg1-hmr")]
    Alg1Hmr,
    /// Multi-user design restricted to the null space of every primary receiver.
    #[serde(rename = "alg1-zf")]
    Alg1Zf,
    #[serde(rename = "alg2-maxrate")]
    Alg2MaxRate,
    #[serde(rename = "alg2-qos")]
    Alg2Qos,
    /// All information users fused into one receiver with `K_I N_I` antennas.
    #[serde(rename = "sumimo-outerbound")]
    SumimoOuterbound,
    /// One user per slot, each served by the single-user design; rates averaged over slots.
    #[serde(rename = "roundrobin-tdma")]
    RoundRobinTdma,
    /// Weighted harvested-energy maximization (energy-region boundary).
    #[serde(rename = "energy-max")]
    EnergyMax,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Alg1Wsr => "alg1-wsr",
            Method::Alg1Pf => "alg1-pf",
            Method::Alg1Hmr => "alg1-hmr",
            Method::Alg1Zf => "alg1-zf",
            Method::Alg2MaxRate => "alg2-maxrate",
            Method::Alg2Qos => "alg2-qos",
            Method::SumimoOuterbound => "sumimo-outerbound",
            Method::RoundRobinTdma => "roundrobin-tdma",
            Method::EnergyMax => "energy-max",
        }
    }

    fn is_alg1(&self) -> bool {
        matches!(self, Method::Alg1Wsr | Method::Alg1Pf | Method::Alg1Hmr)
    }
}

/// One CSV/JSON row. Field names are the column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trial: usize,
    pub sweep_name: String,
    pub sweep_value: Option<f64>,
    pub method: String,
    pub user_index_or_blank: Option<usize>,
    pub rate_bits: Option<f64>,
    pub utility: Option<f64>,
    #[serde(rename = "harvested_uW")]
    pub harvested_uw: Option<f64>,
    #[serde(rename = "interference_uW")]
    pub interference_uw: Option<f64>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub wall_ms: Option<f64>,
    pub status: String,
}

pub const STATUS_SKIPPED: &str = "skipped-infeasible";

impl Row {
    /// Solver failure or a solve that ended without meeting the energy thresholds.
    pub fn is_failure(&self) -> bool {
        self.status.starts_with("failed") || self.status == "infeasible"
    }
}

/// Outcome of one method at one sweep point of one trial.
#[derive(Debug, Clone, Default)]
pub struct TrialResult {
    /// Per information user, bits/s/Hz.
    pub rates: Vec<f64>,
    pub utility: Option<f64>,
    /// Per energy user, watts after conversion efficiency.
    pub harvested: Vec<f64>,
    /// Per primary receiver, watts.
    pub interference: Vec<f64>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub wall_ms: f64,
    pub status: String,
    pub precoder: Option<Precoder>,
    pub report: Option<SolveReport>,
}

impl TrialResult {
    fn failed(msg: impl std::fmt::Display, wall_ms: f64) -> Self {
        Self { status: format!("failed: {msg}"), wall_ms, ..Default::default() }
    }

    fn skipped() -> Self {
        Self { status: STATUS_SKIPPED.into(), ..Default::default() }
    }

    /// Summary row plus one row per user index.
    fn rows(&self, trial: usize, sweep_name: &str, sweep_value: Option<f64>, method: Method, users: usize) -> Vec<Row> {
        let mut out = vec![Row {
            trial,
            sweep_name: sweep_name.into(),
            sweep_value,
            method: method.as_str().into(),
            user_index_or_blank: None,
            rate_bits: (!self.rates.is_empty()).then(|| self.rates.iter().sum()),
            utility: self.utility,
            harvested_uw: (!self.harvested.is_empty()).then(|| self.harvested.iter().sum::<f64>() * 1e6),
            interference_uw: self.interference.iter().copied().reduce(f64::max).map(|x| x * 1e6),
            outer_iters: Some(self.outer_iters),
            inner_iters: Some(self.inner_iters),
            wall_ms: Some(self.wall_ms),
            status: self.status.clone(),
        }];
        if self.status == STATUS_SKIPPED || self.status.starts_with("failed") {
            return out;
        }
        let n = users.max(self.rates.len()).max(self.harvested.len()).max(self.interference.len());
        for k in 0..n {
            out.push(Row {
                trial,
                sweep_name: sweep_name.into(),
                sweep_value,
                method: method.as_str().into(),
                user_index_or_blank: Some(k),
                rate_bits: self.rates.get(k).copied(),
                utility: None,
                harvested_uw: self.harvested.get(k).map(|x| x * 1e6),
                interference_uw: self.interference.get(k).map(|x| x * 1e6),
                outer_iters: None,
                inner_iters: None,
                wall_ms: None,
                status: self.status.clone(),
            });
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub rows: Vec<Row>,
}

impl ExperimentResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.user_index_or_blank.is_none() && r.is_failure()).count()
    }
}

pub fn default_methods(mode: Mode, cfg: &ExperimentConfig) -> Vec<Method> {
    let own = match cfg.utility {
        Utility::Wsr => Method::Alg1Wsr,
        Utility::Pf => Method::Alg1Pf,
        Utility::Hmr => Method::Alg1Hmr,
    };
    let single = cfg.k_i == 1 && cfg.sweep_axis != Some(SweepAxis::KI);
    match mode {
        Mode::EnergyRegion => vec![Method::EnergyMax],
        Mode::Solve | Mode::Convergence if single => vec![own, Method::Alg2MaxRate],
        Mode::Solve | Mode::Convergence => vec![own],
        Mode::Tradeoff => vec![own, Method::SumimoOuterbound],
        Mode::Compare => {
            let mut m = vec![Method::Alg1Wsr, Method::Alg1Pf, Method::Alg1Hmr];
            if cfg.k_p > 0 {
                m.push(Method::Alg1Zf);
            }
            m.extend([Method::SumimoOuterbound, Method::RoundRobinTdma]);
            if single {
                m.extend([Method::Alg2MaxRate, Method::Alg2Qos]);
            }
            m
        }
    }
}

/// Runs every trial of the experiment described by `cfg` (whose `mode` must be set).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, ConfigError> {
    cfg.validate()?;
    let mode = cfg.mode()?;
    if matches!(mode, Mode::EnergyRegion | Mode::Convergence) && cfg.sweep_axis.is_some() {
        return Err(ConfigError::Invalid(format!("{} mode does not take a sweep", mode.as_str())));
    }
    let methods = cfg.methods.clone().unwrap_or_else(|| default_methods(mode, cfg));
    if methods.is_empty() {
        return Err(ConfigError::Invalid("methods is empty".into()));
    }
    if mode == Mode::EnergyRegion && methods != [Method::EnergyMax] {
        return Err(ConfigError::Invalid("energy-region mode only runs energy-max".into()));
    }
    if mode != Mode::EnergyRegion && methods.contains(&Method::EnergyMax) {
        return Err(ConfigError::Invalid("energy-max only runs in energy-region mode".into()));
    }
    let ctx = Context { cfg, mode, methods };
    let per_trial: Vec<Vec<Row>> = (0..cfg.n_trials).into_par_iter().map(|t| ctx.run_trial(t)).collect();
    let mut resolved = cfg.clone();
    resolved.methods = Some(ctx.methods.clone());
    Ok(ExperimentResult { config: resolved, rows: per_trial.into_iter().flatten().collect() })
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    mode: Mode,
    methods: Vec<Method>,
}

struct SweepPoint {
    value: Option<f64>,
    scenario: NetworkScenario,
    channels: ChannelSet,
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

impl Context<'_> {
    fn run_trial(&self, trial: usize) -> Vec<Row> {
        let seed = self.cfg.seed.wrapping_add(trial as u64);
        let base = self.cfg.scenario();
        let max_k_i = match self.cfg.sweep_axis {
            Some(SweepAxis::KI) => self.cfg.sweep_values.iter().fold(base.k_i, |a, v| a.max(*v as usize)),
            _ => base.k_i,
        };
        let full = generate_channels(&NetworkScenario { k_i: max_k_i, ..base.clone() }, seed);
        match self.mode {
            Mode::EnergyRegion => self.energy_region(trial, &base, &full),
            Mode::Convergence => self.convergence(trial, seed, &base, &full),
            _ => self.sweep(trial, seed, &base, &full),
        }
    }

    fn sweep_name(&self) -> &'static str {
        self.cfg.sweep_axis.map_or("none", |a| a.as_str())
    }

    fn points(&self, base: &NetworkScenario, full: &ChannelSet) -> Result<Vec<SweepPoint>, String> {
        let with_k = |k: usize| ChannelSet { h: full.h[..k].to_vec(), g: full.g.clone(), t: full.t.clone() };
        let Some(axis) = self.cfg.sweep_axis else {
            return Ok(vec![SweepPoint { value: None, scenario: base.clone(), channels: with_k(base.k_i) }]);
        };
        let values: Vec<f64> = if axis == SweepAxis::ETh && self.cfg.sweep_values.is_empty() {
            let n = self.cfg.sweep_points.unwrap_or(1);
            let cap_uw = common_energy_cap(full, base)? * 1e6 * self.cfg.sweep_max_fraction;
            (0..n).map(|j| if n == 1 { cap_uw } else { cap_uw * j as f64 / (n - 1) as f64 }).collect()
        } else {
            self.cfg.sweep_values.clone()
        };
        Ok(values
            .into_iter()
            .map(|v| {
                let mut sc = base.clone();
                let mut k_i = base.k_i;
                match axis {
                    SweepAxis::ETh => sc.e_th = vec![uw_to_watts(v); sc.k_e],
                    SweepAxis::ITh => sc.i_th = vec![uw_to_watts(v); sc.k_p],
                    SweepAxis::PT => sc.p_t = crate::config::dbm_to_watts(v),
                    SweepAxis::KI => {
                        k_i = v as usize;
                        sc.k_i = k_i;
                        sc.alpha = self.cfg.alpha_for(k_i);
                    }
                }
                SweepPoint { value: Some(v), scenario: sc, channels: with_k(k_i) }
            })
            .collect())
    }

    fn sweep(&self, trial: usize, seed: u64, base: &NetworkScenario, full: &ChannelSet) -> Vec<Row> {
        let name = self.sweep_name();
        let points = match self.points(base, full) {
            Ok(p) => p,
            Err(e) => {
                return self
                    .methods
                    .iter()
                    .flat_map(|m| TrialResult::failed(&e, 0.0).rows(trial, name, None, *m, 0))
                    .collect();
            }
        };
        // Solve energy sweeps from the largest threshold down so every point can
        // start from the previous (still feasible) design.
        let mut order: Vec<usize> = (0..points.len()).collect();
        let chained = self.cfg.sweep_axis == Some(SweepAxis::ETh);
        if chained {
            order.sort_by(|&a, &b| points[b].value.partial_cmp(&points[a].value).unwrap_or(std::cmp::Ordering::Equal));
        }
        let mut results: Vec<Vec<TrialResult>> = vec![Vec::new(); points.len()];
        let mut carry: Vec<Option<Precoder>> = vec![None; self.methods.len()];
        for idx in order {
            let pt = &points[idx];
            let feasible = match precheck(&pt.channels, &pt.scenario, self.cfg.feasibility_grid) {
                Ok(f) => f,
                Err(e) => {
                    results[idx] = self.methods.iter().map(|_| TrialResult::failed(&e, 0.0)).collect();
                    continue;
                }
            };
            if !feasible {
                results[idx] = self.methods.iter().map(|_| TrialResult::skipped()).collect();
                continue;
            }
            // The zero-forcing design is feasible for any positive cap, so it seeds the other multi-user runs.
            let zf = self
                .methods
                .contains(&Method::Alg1Zf)
                .then(|| self.run_method(Method::Alg1Zf, seed, pt, Vec::new()));
            let mut out = Vec::with_capacity(self.methods.len());
            for (mi, m) in self.methods.iter().enumerate() {
                if *m == Method::Alg1Zf {
                    out.push(zf.clone().expect("zf was run"));
                    continue;
                }
                let mut initial = Vec::new();
                if m.is_alg1() {
                    if let Some(p) = zf.as_ref().and_then(|r| r.precoder.clone()) {
                        initial.push(p);
                    }
                    if let Some(p) = carry[mi].take() {
                        initial.push(p);
                    }
                }
                let r = self.run_method(*m, seed, pt, initial);
                if chained && m.is_alg1() && !r.is_failure_status() {
                    carry[mi] = r.precoder.clone();
                }
                out.push(r);
            }
            results[idx] = out;
        }
        let mut rows = Vec::new();
        for (pt, res) in points.iter().zip(&results) {
            for (m, r) in self.methods.iter().zip(res) {
                rows.extend(r.rows(trial, name, pt.value, *m, 0));
            }
        }
        rows
    }

    fn alg1_options(&self, seed: u64, initial: Vec<Precoder>) -> Alg1Options {
        let d = Alg1Options::default();
        Alg1Options {
            n_g: self.cfg.n_g,
            seed,
            outer_tol: self.cfg.outer_tol,
            max_outer: self.cfg.max_outer,
            inner: EllipsoidOptions {
                tol: self.cfg.ellipsoid_tol.unwrap_or(d.inner.tol),
                max_iter: self.cfg.ellipsoid_max_iter,
                ..d.inner
            },
            feasibility_grid: Some(self.cfg.feasibility_grid),
            initial,
            ..d
        }
    }

    fn alg2_options(&self) -> Alg2Options {
        let d = Alg2Options::default();
        Alg2Options {
            inner: EllipsoidOptions {
                tol: self.cfg.ellipsoid_tol.unwrap_or(d.inner.tol),
                max_iter: self.cfg.ellipsoid_max_iter,
                ..d.inner
            },
            feasibility_grid: Some(self.cfg.feasibility_grid),
        }
    }

    fn run_method(&self, m: Method, seed: u64, pt: &SweepPoint, initial: Vec<Precoder>) -> TrialResult {
        let (ch, sc) = (&pt.channels, &pt.scenario);
        let start = Instant::now();
        let configured = self.cfg.utility_kind(sc.k_i);
        let solved: Result<TrialResult, String> = match m {
            Method::Alg1Wsr | Method::Alg1Pf | Method::Alg1Hmr => {
                let u = match m {
                    Method::Alg1Wsr => UtilityKind::Wsr(sc.alpha.clone()),
                    Method::Alg1Pf => UtilityKind::Pf,
                    _ => UtilityKind::Hmr,
                };
                algorithm1(ch, sc, &u, &self.alg1_options(seed, initial))
                    .map_err(|e| e.to_string())
                    .and_then(|(p, rep)| evaluate(p, Some(rep), ch, sc, Some(&u)))
            }
            Method::Alg1Zf => {
                let zsc = NetworkScenario { i_th: vec![0.0; sc.k_p], ..sc.clone() };
                algorithm1(ch, &zsc, &configured, &self.alg1_options(seed, initial))
                    .map_err(|e| e.to_string())
                    .and_then(|(p, rep)| evaluate(p, Some(rep), ch, sc, Some(&configured)))
            }
            Method::Alg2MaxRate | Method::Alg2Qos => {
                let mode = if m == Method::Alg2MaxRate { SumimoMode::MaxRate } else { SumimoMode::Qos };
                algorithm2(ch, sc, mode, &self.alg2_options())
                    .map_err(|e| e.to_string())
                    .and_then(|(p, rep)| evaluate(p, Some(rep), ch, sc, Some(&configured)))
            }
            Method::SumimoOuterbound => self.outerbound(ch, sc),
            Method::RoundRobinTdma => self.round_robin(ch, sc, &configured),
            Method::EnergyMax => Err("energy-max only runs in energy-region mode".into()),
        };
        let wall_ms = elapsed_ms(start);
        match solved {
            Ok(mut r) => {
                r.wall_ms = wall_ms;
                r
            }
            Err(e) => TrialResult::failed(e, wall_ms),
        }
    }

    fn outerbound(&self, ch: &ChannelSet, sc: &NetworkScenario) -> Result<TrialResult, String> {
        let (mch, msc) = macro_user(ch, sc);
        let (p, rep) = algorithm2(&mch, &msc, SumimoMode::MaxRate, &self.alg2_options()).map_err(|e| e.to_string())?;
        let mut r = evaluate(p, Some(rep), &mch, &msc, None)?;
        r.utility = None;
        Ok(r)
    }

    fn round_robin(&self, ch: &ChannelSet, sc: &NetworkScenario, u: &UtilityKind) -> Result<TrialResult, String> {
        let k_i = sc.k_i;
        let mut out = TrialResult {
            rates: vec![0.0; k_i],
            harvested: vec![0.0; sc.k_e],
            interference: vec![0.0; sc.k_p],
            status: "converged".into(),
            ..Default::default()
        };
        let slot_sc = NetworkScenario { k_i: 1, alpha: vec![1.0], ..sc.clone() };
        for k in 0..k_i {
            let slot_ch = ChannelSet { h: vec![ch.h[k].clone()], g: ch.g.clone(), t: ch.t.clone() };
            let (p, rep) =
                algorithm2(&slot_ch, &slot_sc, SumimoMode::MaxRate, &self.alg2_options()).map_err(|e| e.to_string())?;
            let r = evaluate(p, Some(rep), &slot_ch, &slot_sc, None)?;
            out.rates[k] = r.rates[0] / k_i as f64;
            for (acc, x) in out.harvested.iter_mut().zip(&r.harvested) {
                *acc += x / k_i as f64;
            }
            for (acc, x) in out.interference.iter_mut().zip(&r.interference) {
                *acc += x / k_i as f64;
            }
            out.inner_iters += r.inner_iters;
            out.outer_iters += r.outer_iters;
            if r.status != "converged" {
                out.status = r.status;
            }
        }
        out.utility = Some(sum_utility_floored(&out.rates, u).map_err(|e| e.to_string())?);
        Ok(out)
    }

    fn energy_region(&self, trial: usize, base: &NetworkScenario, ch: &ChannelSet) -> Vec<Row> {
        let mut rows = Vec::new();
        for w in simplex_grid(base.k_e, self.cfg.energy_grid) {
            let start = Instant::now();
            let value = Some(w[0]);
            let r = EnergyWeights::new(w)
                .and_then(|w| max_weighted_energy(ch, base, &w))
                .and_then(|pt| {
                    let beam = Precoder::new(CMat::from_column_slice(base.m, 1, pt.f.as_slice()), 1)?;
                    Ok(TrialResult {
                        harvested: pt.energies.clone(),
                        interference: interference_power(&beam, ch)?,
                        inner_iters: pt.iterations,
                        status: pt.status.as_str().into(),
                        wall_ms: elapsed_ms(start),
                        ..Default::default()
                    })
                })
                .unwrap_or_else(|e| TrialResult::failed(e, elapsed_ms(start)));
            rows.extend(r.rows(trial, "w1", value, Method::EnergyMax, 0));
        }
        rows
    }

    fn convergence(&self, trial: usize, seed: u64, base: &NetworkScenario, full: &ChannelSet) -> Vec<Row> {
        let pt = SweepPoint { value: None, scenario: base.clone(), channels: full.clone() };
        let feasible = precheck(&pt.channels, &pt.scenario, self.cfg.feasibility_grid);
        let mut rows = Vec::new();
        for m in &self.methods {
            let r = match &feasible {
                Ok(true) => self.run_method(*m, seed, &pt, Vec::new()),
                Ok(false) => TrialResult::skipped(),
                Err(e) => TrialResult::failed(e, 0.0),
            };
            if let Some(rep) = &r.report {
                let name = if m.is_alg1() || *m == Method::Alg1Zf { "outer_iter" } else { "inner_iter" };
                for (t, obj) in rep.objective_trace.iter().enumerate() {
                    rows.push(Row {
                        trial,
                        sweep_name: name.into(),
                        sweep_value: Some(t as f64),
                        method: m.as_str().into(),
                        user_index_or_blank: None,
                        rate_bits: None,
                        utility: Some(*obj),
                        harvested_uw: None,
                        interference_uw: None,
                        outer_iters: None,
                        inner_iters: None,
                        wall_ms: None,
                        status: r.status.clone(),
                    });
                }
            }
            rows.extend(r.rows(trial, "final", None, *m, 0));
        }
        rows
    }
}

impl TrialResult {
    fn is_failure_status(&self) -> bool {
        self.status.starts_with("failed") || self.status == "infeasible" || self.status == STATUS_SKIPPED
    }
}

/// `true` if the energy thresholds are reachable (or there are none).
fn precheck(ch: &ChannelSet, sc: &NetworkScenario, grid: usize) -> Result<bool, String> {
    if sc.k_e == 0 || sc.e_th.iter().all(|e| *e <= 0.0) {
        return Ok(true);
    }
    check_feasibility(ch, sc, grid).map(|c| c.feasible).map_err(|e| e.to_string())
}

/// Largest common energy threshold (watts) met by the equal-weight energy-maximizing beam.
pub fn common_energy_cap(ch: &ChannelSet, sc: &NetworkScenario) -> Result<f64, String> {
    let k = sc.k_e;
    let w = EnergyWeights::new(vec![1.0 / k as f64; k]).map_err(|e| e.to_string())?;
    let pt = max_weighted_energy(ch, sc, &w).map_err(|e| e.to_string())?;
    Ok(pt.energies.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Fuse every information user into one receiver with `K_I N_I` antennas.
pub fn macro_user(ch: &ChannelSet, sc: &NetworkScenario) -> (ChannelSet, NetworkScenario) {
    let mch = ChannelSet { h: vec![ch.stacked_h()], g: ch.g.clone(), t: ch.t.clone() };
    let msc = NetworkScenario { k_i: 1, n_i: sc.k_i * sc.n_i, alpha: vec![1.0], ..sc.clone() };
    (mch, msc)
}

fn evaluate(
    p: Precoder,
    report: Option<SolveReport>,
    ch: &ChannelSet,
    sc: &NetworkScenario,
    u: Option<&UtilityKind>,
) -> Result<TrialResult, String> {
    let e = |x: swipt_core::Error| x.to_string();
    let rates = rate_per_user(&p, ch, sc).map_err(e)?;
    let utility = match u {
        Some(u) => Some(sum_utility_floored(&rates, u).map_err(e)?),
        None => None,
    };
    let (outer, inner, status) = report
        .as_ref()
        .map_or((0, 0, "converged".to_string()), |r| (r.outer_iterations, r.inner_iterations, r.status.as_str().into()));
    Ok(TrialResult {
        rates,
        utility,
        harvested: harvested_power(&p, ch, sc).map_err(e)?,
        interference: interference_power(&p, ch).map_err(e)?,
        outer_iters: outer,
        inner_iters: inner,
        wall_ms: 0.0,
        status,
        precoder: Some(p),
        report,
    })
}
