use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::CMat;

/// The immutable problem statement: dimensions, budgets and thresholds.
///
/// Powers are in watts. `e_th` is the post-efficiency threshold, i.e. it is
/// compared against `rho * ||G_i F||_F^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub m: usize,
    pub k_i: usize,
    pub k_e: usize,
    pub k_p: usize,
    pub n_i: usize,
    pub n_e: usize,
    pub n_p: usize,
    pub p_t: f64,
    pub sigma_n2: f64,
    pub rho: f64,
    pub e_th: Vec<f64>,
    /// Entries may be `0.0` (zero-interference) or `f64::INFINITY` (unconstrained).
    pub i_th: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl NetworkScenario {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if self.m == 0 || self.k_i == 0 || self.n_i == 0 {
            return bad(format!(
                "M, K_I and N_I must be >= 1 (got {}, {}, {})",
                self.m, self.k_i, self.n_i
            ));
        }
        if (self.k_e > 0 && self.n_e == 0) || (self.k_p > 0 && self.n_p == 0) {
            return bad("N_E and N_P must be >= 1 when the matching user count is positive".into());
        }
        if !(self.p_t > 0.0 && self.p_t.is_finite()) {
            return bad(format!("P_T must be positive and finite, got {}", self.p_t));
        }
        if !(self.sigma_n2 > 0.0 && self.sigma_n2.is_finite()) {
            return bad(format!("sigma_n2 must be positive and finite, got {}", self.sigma_n2));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return bad(format!("rho must lie in (0, 1], got {}", self.rho));
        }
        if self.e_th.len() != self.k_e {
            return bad(format!("E_th has {} entries, K_E = {}", self.e_th.len(), self.k_e));
        }
        if self.i_th.len() != self.k_p {
            return bad(format!("I_th has {} entries, K_P = {}", self.i_th.len(), self.k_p));
        }
        if self.alpha.len() != self.k_i {
            return bad(format!("alpha has {} entries, K_I = {}", self.alpha.len(), self.k_i));
        }
        if self.e_th.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("E_th entries must be finite and nonnegative".into());
        }
        if self.i_th.iter().any(|i| i.is_nan() || *i < 0.0) {
            return bad("I_th entries must be nonnegative".into());
        }
        if self.alpha.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("alpha entries must be finite and nonnegative".into());
        }
        Ok(())
    }

    /// Energy threshold against the raw `||G_i F||_F^2`, i.e. `E_th,i / rho`.
    pub fn effective_e_th(&self, i: usize) -> f64 {
        self.e_th[i] / self.rho
    }

    pub fn streams(&self) -> usize {
        self.k_i * self.n_i
    }
}

/// Channel matrices from the base station: `h[k]` is `N_I x M`, `g[i]` is
/// `N_E x M`, `t[j]` is `N_P x M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: Vec<CMat>,
    pub g: Vec<CMat>,
    pub t: Vec<CMat>,
}

impl ChannelSet {
    pub fn validate(&self, sc: &NetworkScenario) -> Result<()> {
        check_list("H", &self.h, sc.k_i, sc.n_i, sc.m)?;
        check_list("G", &self.g, sc.k_e, sc.n_e, sc.m)?;
        check_list("T", &self.t, sc.k_p, sc.n_p, sc.m)?;
        Ok(())
    }

    /// All `H_k` stacked vertically into a `(K_I N_I) x M` matrix.
    pub fn stacked_h(&self) -> CMat {
        stack_rows(&self.h)
    }
}

fn check_list(name: &str, mats: &[CMat], count: usize, rows: usize, cols: usize) -> Result<()> {
    if mats.len() != count {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} matrices, expected {count}",
            mats.len()
        )));
    }
    for (idx, mat) in mats.iter().enumerate() {
        if mat.nrows() != rows || mat.ncols() != cols {
            return Err(Error::DimensionMismatch(format!(
                "{name}[{idx}] is {}x{}, expected {rows}x{cols}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite(format!("{name}[{idx}] has non-finite entries")));
        }
    }
    Ok(())
}

pub(crate) fn stack_rows(mats: &[CMat]) -> CMat {
    let cols = mats.first().map_or(0, |m| m.ncols());
    let rows: usize = mats.iter().map(|m| m.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut r = 0;
    for m in mats {
        out.view_mut((r, 0), (m.nrows(), cols)).copy_from(m);
        r += m.nrows();
    }
    out
}

/// Stacked transmit matrix `F = [F_1, ..., F_K]`, each block `M x N_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    f: CMat,
    n_i: usize,
}

impl Precoder {
    pub fn new(f: CMat, n_i: usize) -> Result<Self> {
        if n_i == 0 || !f.ncols().is_multiple_of(n_i) {
            return Err(Error::DimensionMismatch(format!(
                "precoder has {} columns, not a multiple of N_I = {n_i}",
                f.ncols()
            )));
        }
        if f.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFinite("precoder has non-finite entries".into()));
        }
        Ok(Self { f, n_i })
    }

    pub fn zeros(m: usize, k_i: usize, n_i: usize) -> Self {
        Self { f: CMat::zeros(m, k_i * n_i), n_i }
    }

    pub fn matrix(&self) -> &CMat {
        &self.f
    }

    pub fn into_matrix(self) -> CMat {
        self.f
    }

    pub fn n_i(&self) -> usize {
        self.n_i
    }

    pub fn users(&self) -> usize {
        self.f.ncols() / self.n_i
    }

    pub fn antennas(&self) -> usize {
        self.f.nrows()
    }

    /// Block `F_k` (`M x N_I`).
    pub fn block(&self, k: usize) -> CMat {
        self.f.columns(k * self.n_i, self.n_i).into_owned()
    }

    /// Transmit power `trace(F^H F)`.
    pub fn power(&self) -> f64 {
        self.f.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { f: self.f.map(|z| z * c), n_i: self.n_i }
    }
}

/// Sum-utility family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UtilityKind {
    /// Weighted sum rate with per-user weights.
    Wsr(Vec<f64>),
    /// Proportional fairness, `sum log R_k`.
    Pf,
    /// Harmonic mean rate, `sum -1/R_k`.
    Hmr,
}

impl UtilityKind {
    pub fn name(&self) -> &'static str {
        match self {
            UtilityKind::Wsr(_) => "WSR",
            UtilityKind::Pf => "PF",
            UtilityKind::Hmr => "HMR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIter => "max-iter",
            SolveStatus::Infeasible => "infeasible",
        }
    }
}

/// Primal and dual objective values observed at one inner (dual) convergence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualityCheck {
    pub primal: f64,
    pub dual: f64,
}

impl DualityCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.primal - self.dual).abs() / self.primal.abs().max(1e-12)
    }
}

/// Trace of one multi-start candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTrace {
    pub start: usize,
    pub objective_trace: Vec<f64>,
    pub utility_trace: Vec<f64>,
    pub duality: Vec<DualityCheck>,
    pub utility: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub rejected_steps: usize,
    pub status: SolveStatus,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub objective_trace: Vec<f64>,
    /// Signed slacks keyed `power`, `eh[i]`, `cr[j]`; `>= -tol` means satisfied.
    pub constraint_residuals: BTreeMap<String, f64>,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub status: SolveStatus,
    pub duality: Vec<DualityCheck>,
    pub candidates: Vec<CandidateTrace>,
}

impl SolveReport {
    pub fn new(status: SolveStatus) -> Self {
        Self {
            objective_trace: Vec::new(),
            constraint_residuals: BTreeMap::new(),
            inner_iterations: 0,
            outer_iterations: 0,
            status,
            duality: Vec::new(),
            candidates: Vec::new(),
        }
    }
}
