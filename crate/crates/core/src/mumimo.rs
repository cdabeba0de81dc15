//! Multi-user precoder design by weighted-MMSE alternation.
//!
//! Each outer iteration updates the MMSE receivers `L`, the utility weights
//! `W`, then solves the precoder subproblem exactly through its Lagrange dual
//! over the energy and interference multipliers, and finally rescales the
//! precoder so the power or an interference constraint is tight.
//!
//! Primary receivers with a zero interference threshold are removed first by
//! projecting onto the null space of their channels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::ellipsoid::{maximize_with_restarts, EllipsoidOptions, OracleResponse};
use crate::energy::check_feasibility;
use crate::error::{Error, Result};
use crate::matops::{check_finite, cholesky_hpd, fro2, herm_eig, hermitian_part, inv_hpd, logdet_hpd, null_space_basis, quad_trace, trace_re};
use crate::metrics::{constraint_residuals, harvested_power, interference_power, rates_nats, sum_utility_floored, RATE_FLOOR_BITS};
use crate::model::{
    stack_rows, CandidateTrace, ChannelSet, DualityCheck, NetworkScenario, Precoder, SolveReport, SolveStatus,
    UtilityKind,
};
use crate::scaling::Normalized;
use crate::{CMat, C64};

const LN2: f64 = std::f64::consts::LN_2;

// ---------------------------------------------------------------------------
// Zero-interference reduction
// ---------------------------------------------------------------------------

/// A problem restricted to the null space of some primary receivers' channels.
#[derive(Debug, Clone)]
pub struct ZeroReduction {
    pub channels: ChannelSet,
    pub scenario: NetworkScenario,
    /// `M x M'` orthonormal basis; a reduced precoder `F~` lifts to `U F~`.
    pub u: CMat,
    /// Original index of every interference constraint left in the reduced problem.
    pub kept_p: Vec<usize>,
}

impl ZeroReduction {
    pub fn lift(&self, f: &CMat) -> CMat {
        &self.u * f
    }
}

/// Indices of primary receivers whose interference threshold is exactly zero.
pub fn zero_interference_set(sc: &NetworkScenario) -> Vec<usize> {
    (0..sc.k_p).filter(|&j| sc.i_th[j] == 0.0).collect()
}

/// Project the problem onto the common null space of `{T_j : j in zero_set}`.
pub fn reduce_zero_interference(ch: &ChannelSet, sc: &NetworkScenario, zero_set: &[usize]) -> Result<ZeroReduction> {
    if let Some(&j) = zero_set.iter().find(|&&j| j >= sc.k_p) {
        return Err(Error::DimensionMismatch(format!("zero-interference index {j} out of range (K_P = {})", sc.k_p)));
    }
    let kept_p: Vec<usize> = (0..sc.k_p).filter(|j| !zero_set.contains(j)).collect();
    if zero_set.is_empty() {
        return Ok(ZeroReduction {
            channels: ch.clone(),
            scenario: sc.clone(),
            u: CMat::identity(sc.m, sc.m),
            kept_p,
        });
    }
    let stack: Vec<CMat> = zero_set.iter().map(|&j| ch.t[j].clone()).collect();
    let u = null_space_basis(&stack_rows(&stack))?;
    let project = |mats: &[CMat]| mats.iter().map(|x| x * &u).collect::<Vec<_>>();
    let channels = ChannelSet {
        h: project(&ch.h),
        g: project(&ch.g),
        t: kept_p.iter().map(|&j| &ch.t[j] * &u).collect(),
    };
    let mut scenario = sc.clone();
    scenario.m = u.ncols();
    scenario.k_p = kept_p.len();
    scenario.i_th = kept_p.iter().map(|&j| sc.i_th[j]).collect();
    Ok(ZeroReduction { channels, scenario, u, kept_p })
}

// ---------------------------------------------------------------------------
// Per-iteration updates
// ---------------------------------------------------------------------------

/// Alternating-loop state. The transmitted precoder is `gamma * f_bar` and
/// user `k` applies the receiver `L_k / gamma`.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub f_bar: CMat,
    pub gamma: f64,
    pub l: Vec<CMat>,
    pub w: Vec<CMat>,
    pub beta: f64,
}

/// MMSE receivers and the resulting MSE matrices for precoder `gamma * f_bar`.
fn mmse(f_bar: &CMat, gamma: f64, h: &[CMat], n_i: usize, sigma2: f64) -> Result<(Vec<CMat>, Vec<CMat>)> {
    let noise = sigma2 / (gamma * gamma);
    let mut ls = Vec::with_capacity(h.len());
    let mut cs = Vec::with_capacity(h.len());
    for (k, hk) in h.iter().enumerate() {
        let hf = hk * f_bar;
        let mut s = &hf * hf.adjoint();
        for i in 0..s.nrows() {
            s[(i, i)] += noise;
        }
        let fk = hf.columns(k * n_i, n_i).into_owned();
        let chol = cholesky_hpd(&s).ok_or(Error::Singular { delta_min: 0.0, threshold: 0.0 })?;
        let sinv_fk = chol.solve(&fk);
        let l = sinv_fk.adjoint();
        let c = hermitian_part(&(CMat::identity(n_i, n_i) - fk.adjoint() * &sinv_fk));
        ls.push(l);
        cs.push(c);
    }
    Ok((ls, cs))
}

fn check_state(st: &WmmseState) -> Result<()> {
    if !(st.gamma > 0.0 && st.gamma.is_finite()) {
        return Err(Error::NonFinite(format!("gamma must be positive and finite, got {}", st.gamma)));
    }
    check_finite(&st.f_bar, "F_bar")
}

/// `L_k = F_k^H H_k^H (H_k F F^H H_k^H + gamma^-2 sigma^2 I)^-1` for every user.
pub fn receiver_update(st: &WmmseState, ch: &ChannelSet, sc: &NetworkScenario) -> Result<Vec<CMat>> {
    check_state(st)?;
    Ok(mmse(&st.f_bar, st.gamma, &ch.h, sc.n_i, sc.sigma_n2)?.0)
}

/// Per-user MSE matrices under MMSE receivers, `(gamma^2 F_k^H H_k^H R_k^-1 H_k F_k + I)^-1`.
pub fn mse_matrices(st: &WmmseState, ch: &ChannelSet, sc: &NetworkScenario) -> Result<Vec<CMat>> {
    check_state(st)?;
    Ok(mmse(&st.f_bar, st.gamma, &ch.h, sc.n_i, sc.sigma_n2)?.1)
}

fn floored_rate_nats(logdet_c: f64) -> f64 {
    (-logdet_c).max(RATE_FLOOR_BITS * LN2)
}

fn user_weight(u: &UtilityKind, k: usize) -> f64 {
    match u {
        UtilityKind::Wsr(alpha) => alpha[k],
        _ => 1.0,
    }
}

/// Utility weights `W_k`, the gradient of the per-user MSE utility at `C_k`.
///
/// WSR: `alpha_k C^-1`. PF: `(-ln det C * C)^-1`. HMR: `((ln det C)^2 C)^-1`.
/// Rates are floored at a tiny positive value for PF and HMR.
pub fn weight_update(c: &[CMat], u: &UtilityKind) -> Result<Vec<CMat>> {
    if let UtilityKind::Wsr(alpha) = u {
        if alpha.len() != c.len() {
            return Err(Error::DimensionMismatch(format!("{} weights for {} users", alpha.len(), c.len())));
        }
    }
    c.iter()
        .enumerate()
        .map(|(k, ck)| {
            let n = ck.nrows();
            let a = user_weight(u, k);
            if a == 0.0 {
                return Ok(CMat::zeros(n, n));
            }
            let inv = inv_hpd(ck)?;
            let s = match u {
                UtilityKind::Wsr(_) => a,
                UtilityKind::Pf => 1.0 / floored_rate_nats(logdet_hpd(ck)?),
                UtilityKind::Hmr => floored_rate_nats(logdet_hpd(ck)?).powi(-2),
            };
            Ok(hermitian_part(&(inv * C64::new(s, 0.0))))
        })
        .collect()
}

/// Per-user MSE utility `eta_k(C)` in nats, a decreasing function of the rate.
fn eta(ck: &CMat, u: &UtilityKind, k: usize) -> Result<f64> {
    let ld = logdet_hpd(ck)?;
    Ok(match u {
        UtilityKind::Wsr(alpha) => alpha[k] * ld,
        UtilityKind::Pf => -floored_rate_nats(ld).ln(),
        UtilityKind::Hmr => 1.0 / floored_rate_nats(ld),
    })
}

/// Offsets `e_k(W_k) = eta_k(C_k) - tr(W_k C_k)` where `C_k` generated `W_k`.
pub fn weight_offsets(c: &[CMat], w: &[CMat], u: &UtilityKind) -> Result<Vec<f64>> {
    c.iter()
        .zip(w)
        .enumerate()
        .map(|(k, (ck, wk))| Ok(eta(ck, u, k)? - (wk * ck).trace().re))
        .collect()
}

/// `gamma = sqrt(min(P_T / ||F_bar||^2, min_j I_th,j / ||T_j F_bar||^2))`.
///
/// Unbounded thresholds and beams already in a receiver's null space are skipped.
pub fn gamma_update(f_bar: &CMat, ch: &ChannelSet, sc: &NetworkScenario) -> Result<f64> {
    check_finite(f_bar, "F_bar")?;
    let pw = fro2(f_bar);
    if pw <= 0.0 {
        return Err(Error::InvalidScenario("gamma is undefined for a zero precoder".into()));
    }
    let mut g2 = sc.p_t / pw;
    for (t, cap) in ch.t.iter().zip(&sc.i_th) {
        if !cap.is_finite() {
            continue;
        }
        let it = fro2(&(t * f_bar));
        if it <= 1e-15 * pw * fro2(t) {
            continue;
        }
        g2 = g2.min(cap / it);
    }
    if g2 <= 0.0 {
        return Err(Error::Infeasible(
            "a zero interference threshold is violated; reduce it with reduce_zero_interference".into(),
        ));
    }
    Ok(g2.sqrt())
}

// ---------------------------------------------------------------------------
// Precoder subproblem and its dual
// ---------------------------------------------------------------------------

/// Constraint data in the homogeneous form used by the subproblem:
/// `tr(F^H (G^H G - e/P I) F) >= 0` and `tr(F^H (T^H T - i/P I) F) <= 0`.
struct Constraints {
    p_t: f64,
    gg: Vec<CMat>,
    e: Vec<f64>,
    tt: Vec<CMat>,
    i: Vec<f64>,
}

impl Constraints {
    fn new(ch: &ChannelSet, sc: &NetworkScenario) -> Self {
        let mut gg = Vec::new();
        let mut e = Vec::new();
        for (k, g) in ch.g.iter().enumerate() {
            gg.push(g.adjoint() * g);
            e.push(sc.effective_e_th(k));
        }
        let mut tt = Vec::new();
        let mut i = Vec::new();
        for (t, cap) in ch.t.iter().zip(&sc.i_th) {
            if cap.is_finite() {
                tt.push(t.adjoint() * t);
                i.push(*cap);
            }
        }
        Self { p_t: sc.p_t, gg, e, tt, i }
    }

    fn n(&self) -> usize {
        self.gg.len() + self.tt.len()
    }
}

/// Quadratic data of the subproblem for fixed `(L, W)`:
/// `f0(gamma, F) = c0 - 2 Re tr(F^H B) + tr(F^H A F) + beta / gamma^2`.
struct Subproblem {
    a: CMat,
    b: CMat,
    beta: f64,
    c0: f64,
}

impl Subproblem {
    fn new(h: &[CMat], l: &[CMat], w: &[CMat], e: &[f64], sigma2: f64) -> Self {
        let m = h[0].ncols();
        let n_i = w[0].nrows();
        let mut a = CMat::zeros(m, m);
        let mut b = CMat::zeros(m, h.len() * n_i);
        let mut beta = 0.0;
        let mut c0 = 0.0;
        for k in 0..h.len() {
            let lh = &l[k] * &h[k];
            let bk = lh.adjoint() * &w[k];
            a += &bk * &lh;
            b.columns_mut(k * n_i, n_i).copy_from(&bk);
            beta += sigma2 * (&w[k] * &l[k] * l[k].adjoint()).trace().re;
            c0 += trace_re(&w[k]) + e[k];
        }
        Self { a: hermitian_part(&a), b, beta, c0 }
    }

    fn primal(&self, f_bar: &CMat, gamma: f64) -> f64 {
        let cross: f64 = f_bar.iter().zip(self.b.iter()).map(|(x, y)| (x.conj() * y).re).sum();
        self.c0 - 2.0 * cross + quad_trace(&self.a, f_bar) + self.beta / (gamma * gamma)
    }
}

struct DualOutcome {
    f_bar: CMat,
    u: Vec<f64>,
    dual: f64,
    iterations: usize,
    status: SolveStatus,
}

/// `nu(u) = (beta + sum lambda e - sum mu i) / P`.
fn nu_of(sp: &Subproblem, cons: &Constraints, z: &[f64]) -> f64 {
    let ne = cons.gg.len();
    let mut nu = sp.beta;
    for (k, e) in cons.e.iter().enumerate() {
        nu += z[k] * e;
    }
    for (j, i) in cons.i.iter().enumerate() {
        nu -= z[ne + j] * i;
    }
    nu / cons.p_t
}

fn k_matrix(sp: &Subproblem, cons: &Constraints, z: &[f64], nu: f64) -> CMat {
    let ne = cons.gg.len();
    let mut k = sp.a.clone();
    for i in 0..k.nrows() {
        k[(i, i)] += nu;
    }
    for (idx, gg) in cons.gg.iter().enumerate() {
        if z[idx] != 0.0 {
            k -= gg * C64::new(z[idx], 0.0);
        }
    }
    for (idx, tt) in cons.tt.iter().enumerate() {
        if z[ne + idx] != 0.0 {
            k += tt * C64::new(z[ne + idx], 0.0);
        }
    }
    k
}

/// Minimizer `F = K^-1 B` and dual value `c0 - Re tr(F^H B)`, or `None` if `K` is not PD.
fn dual_point(sp: &Subproblem, k: CMat) -> Option<(CMat, f64)> {
    let chol = cholesky_hpd(&k)?;
    let f = chol.solve(&sp.b);
    if f.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return None;
    }
    let cross: f64 = f.iter().zip(sp.b.iter()).map(|(x, y)| (x.conj() * y).re).sum();
    Some((f, sp.c0 - cross))
}

fn solve_dual(
    sp: &Subproblem,
    cons: &Constraints,
    opts: &EllipsoidOptions,
    warm: Option<(&[f64], f64)>,
) -> Result<DualOutcome> {
    let n = cons.n();
    let ne = cons.gg.len();
    if n == 0 {
        let k = k_matrix(sp, cons, &[], nu_of(sp, cons, &[]));
        let (f_bar, dual) = dual_point(sp, k).ok_or(Error::Singular { delta_min: 0.0, threshold: 0.0 })?;
        return Ok(DualOutcome { f_bar, u: Vec::new(), dual, iterations: 0, status: SolveStatus::Converged });
    }
    let p_t = cons.p_t;
    let oracle = |z: &[f64]| -> Result<OracleResponse> {
        if let Some(c) = OracleResponse::nonnegativity_cut(z) {
            return Ok(c);
        }
        let nu = nu_of(sp, cons, z);
        if nu < 0.0 {
            let mut g: Vec<f64> = cons.e.iter().map(|e| -e / p_t).collect();
            g.extend(cons.i.iter().map(|i| i / p_t));
            return Ok(OracleResponse::cut(g));
        }
        let k = k_matrix(sp, cons, z, nu);
        match dual_point(sp, k.clone()) {
            Some((f, value)) => {
                let pw = fro2(&f);
                let mut g = Vec::with_capacity(n);
                for (gg, e) in cons.gg.iter().zip(&cons.e) {
                    g.push(-(quad_trace(gg, &f) - e / p_t * pw));
                }
                for (tt, i) in cons.tt.iter().zip(&cons.i) {
                    g.push(quad_trace(tt, &f) - i / p_t * pw);
                }
                Ok(OracleResponse::objective(value, g))
            }
            None => {
                let e = herm_eig(&k)?;
                let kh = e.bottom();
                let q = |m: &CMat| (kh.adjoint() * m * &kh)[(0, 0)].re;
                let mut g = Vec::with_capacity(n);
                for (gg, e) in cons.gg.iter().zip(&cons.e) {
                    g.push(q(gg) - e / p_t);
                }
                for (tt, i) in cons.tt.iter().zip(&cons.i) {
                    g.push(-(q(tt) - i / p_t));
                }
                Ok(OracleResponse::cut(g))
            }
        }
    };
    let zero = vec![0.0; n];
    let (z0, o) = match warm {
        Some((u, r)) => (u.to_vec(), EllipsoidOptions { r0: r, ..*opts }),
        None => (zero, *opts),
    };
    let res = maximize_with_restarts(oracle, &z0, &o, 20)?;
    if res.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible("no dual-feasible multiplier found for the precoder subproblem".into()));
    }
    let nu = nu_of(sp, cons, &res.z_best);
    let (f_bar, _) = dual_point(sp, k_matrix(sp, cons, &res.z_best, nu))
        .ok_or(Error::Singular { delta_min: 0.0, threshold: 0.0 })?;
    let _ = ne;
    Ok(DualOutcome { f_bar, u: res.z_best, dual: res.value_best, iterations: res.iterations, status: res.status })
}

/// Result of one exact precoder-subproblem solve.
#[derive(Debug, Clone)]
pub struct P5Solution {
    pub f_bar: CMat,
    /// Energy multipliers, one per energy user (zero where the threshold is zero).
    pub lambda: Vec<f64>,
    /// Interference multipliers, one per primary receiver (zero where unbounded or never binding).
    pub mu: Vec<f64>,
    /// Subproblem objective at `(gamma, f_bar)`.
    pub primal: f64,
    /// Dual function value at the returned multipliers.
    pub dual: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Solve the precoder subproblem for fixed receivers `l`, weights `w` and
/// offsets `e` through its dual.
///
/// Multipliers refer to the constraints `tr(F^H (G_i^H G_i - E~_i/P_T I) F) >= 0`
/// and `tr(F^H (T_j^H T_j - I_j/P_T I) F) <= 0`.
pub fn dual_solve_p5(
    l: &[CMat],
    w: &[CMat],
    e: &[f64],
    ch: &ChannelSet,
    sc: &NetworkScenario,
    opts: &EllipsoidOptions,
) -> Result<P5Solution> {
    sc.validate()?;
    ch.validate(sc)?;
    if l.len() != sc.k_i || w.len() != sc.k_i || e.len() != sc.k_i {
        return Err(Error::DimensionMismatch("L, W and offsets need one entry per information user".into()));
    }
    let nrm = Normalized::new(ch, sc)?;
    let lscale = C64::new(sc.sigma_n2.sqrt() / sc.p_t.sqrt(), 0.0);
    let ln: Vec<CMat> = l.iter().map(|x| x * lscale).collect();
    let sp = Subproblem::new(&nrm.ch.h, &ln, w, e, 1.0);
    let cons = Constraints::new(&nrm.ch, &nrm.sc);
    let out = solve_dual(&sp, &cons, opts, None)?;
    let gamma = gamma_update(&out.f_bar, &nrm.ch, &nrm.sc)?;
    let primal = sp.primal(&out.f_bar, gamma);
    let (lambda, mu) = nrm.denormalize_duals(&out.u, sc.k_e, sc.k_p, 1.0);
    Ok(P5Solution {
        f_bar: out.f_bar,
        lambda,
        mu,
        primal,
        dual: out.dual,
        gamma: gamma * nrm.f_scale,
        iterations: out.iterations,
        status: out.status,
    })
}

// ---------------------------------------------------------------------------
// Multi-start alternation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Alg1Options {
    /// Number of random starting points.
    pub n_g: usize,
    /// Master seed; start `s` draws from stream `s` of this seed.
    pub seed: u64,
    /// Relative change of the subproblem objective that ends the alternation.
    pub outer_tol: f64,
    pub max_outer: usize,
    /// Dual ellipsoid options; the tolerance bounds how far the recovered precoder strays from its constraints.
    pub inner: EllipsoidOptions,
    /// Initial ellipsoid radius around the previous multipliers, relative to `1 + ||u||`.
    pub warm_radius: f64,
    /// Relative shortfall tolerated on harvested energy when ranking candidates.
    pub eh_tol: f64,
    /// Simplex grid for the defensive threshold check; `None` skips it.
    pub feasibility_grid: Option<usize>,
    /// Extra deterministic starting precoders (e.g. a zero-forcing design), tried before the random ones.
    pub initial: Vec<Precoder>,
    /// Run candidates on the rayon pool.
    pub parallel: bool,
}

impl Default for Alg1Options {
    fn default() -> Self {
        Self {
            n_g: 100,
            seed: 0,
            outer_tol: 1e-5,
            max_outer: 200,
            inner: EllipsoidOptions { tol: 1e-9, ..EllipsoidOptions::default() },
            warm_radius: 1.0,
            eh_tol: 1e-4,
            feasibility_grid: Some(21),
            initial: Vec::new(),
            parallel: true,
        }
    }
}

struct Candidate {
    f: CMat,
    trace: CandidateTrace,
}

/// Sum-utility maximization under power, energy and interference constraints.
///
/// Runs the alternation from every starting point and returns the precoder with
/// the best utility among those meeting the energy thresholds.
pub fn algorithm1(
    ch: &ChannelSet,
    sc: &NetworkScenario,
    u: &UtilityKind,
    opts: &Alg1Options,
) -> Result<(Precoder, SolveReport)> {
    sc.validate()?;
    ch.validate(sc)?;
    if let UtilityKind::Wsr(alpha) = u {
        if alpha.len() != sc.k_i {
            return Err(Error::DimensionMismatch(format!("{} WSR weights for K_I = {}", alpha.len(), sc.k_i)));
        }
    }
    if opts.n_g + opts.initial.len() == 0 {
        return Err(Error::InvalidScenario("the multi-user design needs at least one starting point".into()));
    }
    if let Some(grid) = opts.feasibility_grid {
        let chk = check_feasibility(ch, sc, grid)?;
        if !chk.feasible {
            return Err(Error::Infeasible(format!(
                "energy thresholds not reachable (best margin {:.3e} W)",
                chk.margin
            )));
        }
    }
    let red = reduce_zero_interference(ch, sc, &zero_interference_set(sc))?;
    let nrm = Normalized::new(&red.channels, &red.scenario)?;
    let cons = Constraints::new(&nrm.ch, &nrm.sc);
    let m = red.scenario.m;
    let cols = sc.k_i * sc.n_i;

    let mut starts: Vec<(usize, CMat, bool)> = Vec::new();
    for (idx, p) in opts.initial.iter().enumerate() {
        if p.antennas() != sc.m || p.matrix().ncols() != cols {
            return Err(Error::DimensionMismatch(format!("initial precoder {idx} has the wrong shape")));
        }
        let reduced = red.u.adjoint() * p.matrix() / C64::new(nrm.f_scale, 0.0);
        starts.push((idx, reduced, true));
    }
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal");
    for s in 0..opts.n_g {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        rng.set_stream(s as u64);
        let f = CMat::from_fn(m, cols, |_, _| C64::new(normal.sample(&mut rng), normal.sample(&mut rng)));
        starts.push((opts.initial.len() + s, f, false));
    }

    let run = |(idx, f, warm): &(usize, CMat, bool)| run_candidate(*idx, f.clone(), *warm, &nrm, &cons, u, opts);
    let results: Vec<Result<Candidate>> = if opts.parallel {
        starts.par_iter().map(run).collect()
    } else {
        starts.iter().map(run).collect()
    };

    let mut cands = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(c) => cands.push(c),
            Err(e) => {
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    if cands.is_empty() {
        return Err(first_err.expect("at least one start ran"));
    }

    // Lift each candidate and rank by utility among energy-feasible ones.
    let evaluate = |p: &Precoder| -> Result<(bool, f64)> {
        let eh = harvested_power(p, ch, sc)?;
        let feasible = eh.iter().zip(&sc.e_th).all(|(e, t)| *e >= t * (1.0 - opts.eh_tol));
        let bits: Vec<f64> = rates_nats(p.matrix(), &ch.h, sc.n_i, sc.sigma_n2)?.iter().map(|r| r / LN2).collect();
        Ok((feasible, sum_utility_floored(&bits, u)?))
    };
    let beats = |a: (bool, f64), b: (bool, f64)| (a.0 && !b.0) || (a.0 == b.0 && a.1 > b.1);
    let mut best: Option<(bool, f64, usize, Precoder)> = None;
    for (ci, c) in cands.iter_mut().enumerate() {
        let full = red.lift(&c.f) * C64::new(nrm.f_scale, 0.0);
        let mut p = Precoder::new(full, sc.n_i)?;
        let mut key = evaluate(&p)?;
        // A deterministic start that already meets every constraint is kept if the
        // alternation from it did not improve on it.
        if let Some(init) = opts.initial.get(c.trace.start) {
            if within_caps(init, ch, sc)? {
                let k0 = evaluate(init)?;
                if beats(k0, key) {
                    key = k0;
                    p = init.clone();
                }
            }
        }
        c.trace.feasible = key.0;
        c.trace.utility = key.1;
        if best.as_ref().is_none_or(|(bf, bu, _, _)| beats(key, (*bf, *bu))) {
            best = Some((key.0, key.1, ci, p));
        }
    }
    let (feasible, _, bi, precoder) = best.expect("candidates is non-empty");
    let chosen = &cands[bi].trace;
    let mut report = SolveReport::new(if feasible { chosen.status } else { SolveStatus::Infeasible });
    report.objective_trace = chosen.objective_trace.clone();
    report.inner_iterations = chosen.inner_iterations;
    report.outer_iterations = chosen.outer_iterations;
    report.duality = chosen.duality.clone();
    report.constraint_residuals = constraint_residuals(&precoder, ch, sc)?;
    report.candidates = cands.into_iter().map(|c| c.trace).collect();
    Ok((precoder, report))
}

fn within_caps(p: &Precoder, ch: &ChannelSet, sc: &NetworkScenario) -> Result<bool> {
    let it = interference_power(p, ch)?;
    Ok(p.power() <= sc.p_t && it.iter().zip(&sc.i_th).all(|(x, cap)| x <= cap))
}

fn eh_ok(f: &CMat, cons: &Constraints, tol: f64) -> bool {
    cons.gg.iter().zip(&cons.e).all(|(gg, e)| quad_trace(gg, f) >= e * (1.0 - tol))
}

/// One start of the alternation in normalized units.
fn run_candidate(
    start: usize,
    f0: CMat,
    warm_start: bool,
    nrm: &Normalized,
    cons: &Constraints,
    u: &UtilityKind,
    opts: &Alg1Options,
) -> Result<Candidate> {
    let h = &nrm.ch.h;
    let n_i = nrm.sc.n_i;
    let gamma0 = gamma_update(&f0, &nrm.ch, &nrm.sc)?;
    let mut f = f0 * C64::new(gamma0, 0.0);
    let mut trace = CandidateTrace {
        start,
        objective_trace: Vec::new(),
        utility_trace: Vec::new(),
        duality: Vec::new(),
        utility: f64::NEG_INFINITY,
        outer_iterations: 0,
        inner_iterations: 0,
        rejected_steps: 0,
        status: SolveStatus::MaxIter,
        feasible: false,
    };
    let utility_of = |f: &CMat| -> Result<f64> {
        let bits: Vec<f64> = rates_nats(f, h, n_i, 1.0)?.iter().map(|r| r / LN2).collect();
        sum_utility_floored(&bits, u)
    };
    let mut prev_feasible = false;
    let mut warm_u: Option<Vec<f64>> = None;
    for outer in 0..opts.max_outer {
        let (l, c) = mmse(&f, 1.0, h, n_i, 1.0)?;
        let w = weight_update(&c, u)?;
        let e = weight_offsets(&c, &w, u)?;
        if outer == 0 && warm_start && eh_ok(&f, cons, opts.eh_tol) {
            let start_val: f64 = c.iter().enumerate().map(|(k, ck)| eta(ck, u, k)).sum::<Result<f64>>()?;
            trace.objective_trace.push(start_val);
            trace.utility_trace.push(utility_of(&f)?);
            prev_feasible = true;
        }
        let sp = Subproblem::new(h, &l, &w, &e, 1.0);
        let warm = warm_u.as_ref().map(|wu| {
            let norm = wu.iter().map(|x| x * x).sum::<f64>().sqrt();
            (wu.as_slice(), opts.warm_radius * (1.0 + norm))
        });
        let out = solve_dual(&sp, cons, &opts.inner, warm)?;
        trace.inner_iterations += out.iterations;
        trace.outer_iterations = outer + 1;
        let gamma = gamma_update(&out.f_bar, &nrm.ch, &nrm.sc)?;
        let f0_new = sp.primal(&out.f_bar, gamma);
        trace.duality.push(DualityCheck { primal: f0_new, dual: out.dual });
        let f_new = &out.f_bar * C64::new(gamma, 0.0);
        let prev = trace.objective_trace.last().copied();
        if let Some(p) = prev {
            if prev_feasible && f0_new > p + 1e-12 * p.abs() {
                trace.rejected_steps += 1;
                trace.status = SolveStatus::Converged;
                break;
            }
        }
        f = f_new;
        prev_feasible = eh_ok(&f, cons, opts.eh_tol);
        trace.objective_trace.push(f0_new);
        trace.utility_trace.push(utility_of(&f)?);
        warm_u = Some(out.u);
        if let Some(p) = prev {
            if (p - f0_new).abs() <= opts.outer_tol * p.abs().max(1e-12) {
                trace.status = SolveStatus::Converged;
                break;
            }
        }
    }
    Ok(Candidate { f, trace })
}
