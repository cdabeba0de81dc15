//! Jointly optimal design for a single information user.
//!
//! For fixed multipliers `(nu, lambda, mu)` the Lagrangian is minimized in
//! closed form: whiten the channel by `M^{-1/2}` with
//! `M = nu I - sum lambda_i G_i^H G_i + sum mu_j T_j^H T_j`, take its top
//! eigenmodes and load power per stream. The multipliers are found by the
//! ellipsoid method on the concave dual function.

use serde::{Deserialize, Serialize};

use crate::ellipsoid::{maximize_with_restarts, EllipsoidOptions, OracleResponse};
use crate::energy::check_feasibility;
use crate::error::{Error, Result};
use crate::matops::{dft_matrix, fro2, herm_eig, inv_hpd, inv_sqrt, logdet_hpd, pos_part_diag, quad_trace};
use crate::metrics::constraint_residuals;
use crate::model::{ChannelSet, DualityCheck, NetworkScenario, Precoder, SolveReport, SolveStatus};
use crate::mumimo::{reduce_zero_interference, zero_interference_set};
use crate::scaling::Normalized;
use crate::{CMat, C64};

/// Precoder, whitened eigenvalues, stream weights and stream powers at one dual point.
type StreamDesign = (CMat, Vec<f64>, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SumimoMode {
    /// Rate-maximizing stream weights `max(phi_k, 1)`.
    MaxRate,
    /// Unit weights and a DFT rotation so all streams see the same MSE.
    Qos,
}

/// `M(u) = nu I - sum_i lambda_i G_i^H G_i + sum_j mu_j T_j^H T_j` for `u = [nu, lambda.., mu..]`.
pub fn build_m(ud: &[f64], ch: &ChannelSet) -> Result<CMat> {
    let m = ch
        .h
        .first()
        .or(ch.g.first())
        .or(ch.t.first())
        .map(|x| x.ncols())
        .ok_or_else(|| Error::DimensionMismatch("channel set is empty".into()))?;
    if ud.len() != 1 + ch.g.len() + ch.t.len() {
        return Err(Error::DimensionMismatch(format!(
            "joint dual has {} entries, expected {}",
            ud.len(),
            1 + ch.g.len() + ch.t.len()
        )));
    }
    let mut out = CMat::from_diagonal_element(m, m, C64::new(ud[0], 0.0));
    for (g, l) in ch.g.iter().zip(&ud[1..]) {
        out -= g.adjoint() * g * C64::new(*l, 0.0);
    }
    for (t, mu) in ch.t.iter().zip(&ud[1 + ch.g.len()..]) {
        out += t.adjoint() * t * C64::new(*mu, 0.0);
    }
    Ok(out)
}

/// Top eigenpairs of `M^{-1/2} H^H H M^{-1/2} / sigma^2` for the single information user.
///
/// Returns at most `min(N_I, M)` pairs.
pub fn whitened_eig(mm: &CMat, ch: &ChannelSet, sc: &NetworkScenario) -> Result<(CMat, Vec<f64>)> {
    let b = inv_sqrt(mm)?;
    let h = ch.h.first().ok_or_else(|| Error::InvalidScenario("no information user".into()))?;
    Ok(whitened_from(&b, h, sc.n_i, sc.sigma_n2)?.1)
}

fn whitened_from(b: &CMat, h: &CMat, n_i: usize, sigma2: f64) -> Result<(CMat, (CMat, Vec<f64>))> {
    let hb = h * b;
    let x = hb.adjoint() * &hb / C64::new(sigma2, 0.0);
    let e = herm_eig(&x)?;
    let d = n_i.min(e.phi.len());
    let v1 = e.v.columns(0, d).into_owned();
    let phi1 = e.phi[..d].iter().map(|p| p.max(0.0)).collect();
    Ok((hb, (v1, phi1)))
}

/// Per-stream powers `(w^{1/2} phi^{-1/2} - phi^{-1})_+`, zero where `phi = 0`.
pub fn stream_powers(phi1: &[f64], w: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = phi1
        .iter()
        .zip(w)
        .map(|(&p, &wk)| if p > 0.0 { (wk / p).sqrt() - 1.0 / p } else { 0.0 })
        .collect();
    pos_part_diag(&raw)
}

/// `F = M^{-1/2} V_1 diag(p)^{1/2}`, padded with zero columns up to `n_i` streams.
pub fn precoder_prop3(mm: &CMat, v1: &CMat, phi1: &[f64], w: &[f64], n_i: usize) -> Result<Precoder> {
    let b = inv_sqrt(mm)?;
    Precoder::new(prop3_from(&b, v1, &stream_powers(phi1, w), n_i), n_i)
}

fn prop3_from(b: &CMat, v1: &CMat, p: &[f64], n_i: usize) -> CMat {
    let m = b.nrows();
    let bv = b * v1;
    let mut f = CMat::zeros(m, n_i);
    for (k, pk) in p.iter().enumerate() {
        let s = C64::new(pk.sqrt(), 0.0);
        for r in 0..m {
            f[(r, k)] = bv[(r, k)] * s;
        }
    }
    f
}

/// Stream weights and the output rotation for a design mode.
pub fn design_weights(phi1: &[f64], n_i: usize, mode: SumimoMode) -> (Vec<f64>, CMat) {
    match mode {
        SumimoMode::MaxRate => (phi1.iter().map(|p| p.max(1.0)).collect(), CMat::identity(n_i, n_i)),
        SumimoMode::Qos => (vec![1.0; phi1.len()], dft_matrix(n_i)),
    }
}

#[derive(Debug, Clone)]
pub struct Alg2Options {
    pub inner: EllipsoidOptions,
    /// Simplex grid for the defensive threshold check; `None` skips it.
    pub feasibility_grid: Option<usize>,
}

impl Default for Alg2Options {
    fn default() -> Self {
        Self { inner: EllipsoidOptions { tol: 1e-12, ..EllipsoidOptions::default() }, feasibility_grid: Some(21) }
    }
}

/// Extra outputs of the single-user solver.
#[derive(Debug, Clone)]
pub struct Alg2Details {
    /// `[nu, lambda.., mu..]` in original units.
    pub dual: Vec<f64>,
    /// Per-stream MSEs (diagonal of the final MSE matrix).
    pub stream_mse: Vec<f64>,
}

/// Jointly optimal design for `K_I = 1`.
pub fn algorithm2(
    ch: &ChannelSet,
    sc: &NetworkScenario,
    mode: SumimoMode,
    opts: &Alg2Options,
) -> Result<(Precoder, SolveReport)> {
    algorithm2_detailed(ch, sc, mode, opts).map(|(p, r, _)| (p, r))
}

pub fn algorithm2_detailed(
    ch: &ChannelSet,
    sc: &NetworkScenario,
    mode: SumimoMode,
    opts: &Alg2Options,
) -> Result<(Precoder, SolveReport, Alg2Details)> {
    sc.validate()?;
    ch.validate(sc)?;
    if sc.k_i != 1 {
        return Err(Error::InvalidScenario(format!("the single-user design needs K_I = 1, got {}", sc.k_i)));
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
    let n_i = sc.n_i;
    let h = &nrm.ch.h[0];
    let gg: Vec<CMat> = nrm.ch.g.iter().map(|g| g.adjoint() * g).collect();
    let tt: Vec<CMat> = nrm.ch.t.iter().map(|t| t.adjoint() * t).collect();
    let (e_th, i_th) = (&nrm.sc.e_th, &nrm.sc.i_th);
    let ne = gg.len();
    let n = 1 + ne + tt.len();

    let m_of = |z: &[f64]| -> CMat {
        let mut out = CMat::from_diagonal_element(nrm.sc.m, nrm.sc.m, C64::new(z[0], 0.0));
        for (q, l) in gg.iter().zip(&z[1..]) {
            if *l != 0.0 {
                out -= q * C64::new(*l, 0.0);
            }
        }
        for (q, mu) in tt.iter().zip(&z[1 + ne..]) {
            if *mu != 0.0 {
                out += q * C64::new(*mu, 0.0);
            }
        }
        out
    };
    // Closed-form minimizer of the Lagrangian and the per-stream quantities.
    let inner = |z: &[f64]| -> Result<Option<StreamDesign>> {
        let mm = m_of(z);
        let b = match inv_sqrt(&mm) {
            Ok(b) => b,
            Err(Error::Singular { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (_, (v1, phi1)) = whitened_from(&b, h, n_i, 1.0)?;
        let (w, _) = design_weights(&phi1, n_i, mode);
        let p = stream_powers(&phi1, &w);
        Ok(Some((prop3_from(&b, &v1, &p, n_i), phi1, w, p)))
    };
    let oracle = |z: &[f64]| -> Result<OracleResponse> {
        if let Some(c) = OracleResponse::nonnegativity_cut(z) {
            return Ok(c);
        }
        match inner(z)? {
            Some((f, phi1, w, p)) => {
                let mut value = -z[0];
                for (k, (&ph, &wk)) in phi1.iter().zip(&w).enumerate() {
                    let c = 1.0 / (1.0 + ph * p[k]);
                    value += wk * c - wk.ln() - 1.0 + p[k];
                }
                for (l, e) in z[1..1 + ne].iter().zip(e_th) {
                    value += l * e;
                }
                for (mu, i) in z[1 + ne..].iter().zip(i_th) {
                    value -= mu * i;
                }
                let mut g = Vec::with_capacity(n);
                g.push(fro2(&f) - 1.0);
                for (q, e) in gg.iter().zip(e_th) {
                    g.push(e - quad_trace(q, &f));
                }
                for (q, i) in tt.iter().zip(i_th) {
                    g.push(quad_trace(q, &f) - i);
                }
                Ok(OracleResponse::objective(value, g))
            }
            None => {
                let e = herm_eig(&m_of(z))?;
                let mh = e.bottom();
                let q = |a: &CMat| (mh.adjoint() * a * &mh)[(0, 0)].re;
                let mut g = Vec::with_capacity(n);
                g.push(-1.0);
                g.extend(gg.iter().map(q));
                g.extend(tt.iter().map(|a| -q(a)));
                Ok(OracleResponse::cut(g))
            }
        }
    };
    let mut z0 = vec![0.0; n];
    z0[0] = 1.0;
    let res = maximize_with_restarts(oracle, &z0, &opts.inner, 20)?;
    if res.status == SolveStatus::Infeasible {
        return Err(Error::Infeasible("no dual-feasible multiplier found".into()));
    }
    let (mut f, _, _, _) = inner(&res.z_best)?.ok_or(Error::Singular { delta_min: 0.0, threshold: 0.0 })?;

    // Rescale so the tightest of the power and interference budgets holds with
    // equality; the dual iterate is only accurate to the ellipsoid tolerance.
    let pw = fro2(&f);
    if pw > 0.0 {
        let mut s2 = 1.0 / pw;
        for (q, i) in tt.iter().zip(i_th) {
            let it = quad_trace(q, &f);
            if it > 1e-15 * pw {
                s2 = s2.min(i / it);
            }
        }
        f *= C64::new(s2.sqrt(), 0.0);
    }
    if mode == SumimoMode::Qos {
        f = &f * design_weights(&[], n_i, mode).1;
    }

    // Primal objective in the same form as the dual value.
    let hf = h * &f;
    let c = inv_hpd(&(CMat::identity(n_i, n_i) + hf.adjoint() * &hf))?;
    let stream_mse: Vec<f64> = (0..n_i).map(|k| c[(k, k)].re).collect();
    let primal = match mode {
        SumimoMode::MaxRate => logdet_hpd(&c)?,
        SumimoMode::Qos => stream_mse.iter().sum::<f64>() - n_i as f64,
    };

    let full = red.lift(&f) * C64::new(nrm.f_scale, 0.0);
    let precoder = Precoder::new(full, n_i)?;
    let mut report = SolveReport::new(res.status);
    report.objective_trace = res.trace.clone();
    report.inner_iterations = res.iterations;
    report.outer_iterations = 1;
    report.duality.push(DualityCheck { primal, dual: res.value_best });
    report.constraint_residuals = constraint_residuals(&precoder, ch, sc)?;

    let (lambda, mu) = nrm.denormalize_duals(&res.z_best[1..], sc.k_e, sc.k_p, sc.p_t);
    let mut dual = vec![res.z_best[0] / sc.p_t];
    dual.extend(lambda);
    dual.extend(mu);
    Ok((precoder, report, Alg2Details { dual, stream_mse }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn diag(d: &[f64]) -> CMat {
        CMat::from_fn(d.len(), d.len(), |r, k| if r == k { c(d[r]) } else { c(0.0) })
    }

    fn sc2() -> NetworkScenario {
        NetworkScenario {
            m: 2,
            k_i: 1,
            k_e: 0,
            k_p: 0,
            n_i: 2,
            n_e: 2,
            n_p: 1,
            p_t: 1.0,
            sigma_n2: 1.0,
            rho: 1.0,
            e_th: vec![],
            i_th: vec![],
            alpha: vec![1.0],
        }
    }

    #[test]
    fn build_m_examples() {
        let ch = ChannelSet { h: vec![CMat::identity(2, 2)], g: vec![], t: vec![] };
        assert_eq!(build_m(&[1.0], &ch).unwrap(), CMat::identity(2, 2));
        let ch = ChannelSet { h: vec![CMat::identity(2, 2)], g: vec![CMat::identity(2, 2)], t: vec![] };
        assert_eq!(build_m(&[2.0, 1.0], &ch).unwrap(), CMat::identity(2, 2));
        assert!(build_m(&[1.0], &ch).is_err());
    }

    #[test]
    fn whitened_examples() {
        let sc = sc2();
        let ch = ChannelSet { h: vec![diag(&[2.0, 1.0])], g: vec![], t: vec![] };
        let (v1, phi1) = whitened_eig(&CMat::identity(2, 2), &ch, &sc).unwrap();
        assert!((phi1[0] - 4.0).abs() < 1e-12 && (phi1[1] - 1.0).abs() < 1e-12);
        assert!((v1[(0, 0)].norm() - 1.0).abs() < 1e-12 && (v1[(1, 1)].norm() - 1.0).abs() < 1e-12);
        let ch = ChannelSet { h: vec![CMat::zeros(2, 2)], g: vec![], t: vec![] };
        let (_, phi1) = whitened_eig(&CMat::identity(2, 2), &ch, &sc).unwrap();
        assert!(phi1.iter().all(|p| *p == 0.0));
    }

    #[test]
    fn prop3_power_examples() {
        assert_eq!(stream_powers(&[4.0, 1.0], &[1.0, 1.0]), vec![0.25, 0.0]);
        let (w, d) = design_weights(&[4.0, 1.0], 2, SumimoMode::MaxRate);
        assert_eq!(w, vec![4.0, 1.0]);
        assert_eq!(d, CMat::identity(2, 2));
        assert_eq!(stream_powers(&[4.0, 1.0], &w), vec![0.75, 0.0]);
        assert_eq!(stream_powers(&[0.0], &[1.0]), vec![0.0]);
        let f = precoder_prop3(&CMat::identity(2, 2), &CMat::identity(2, 2), &[4.0, 1.0], &w, 2).unwrap();
        assert!((f.power() - 0.75).abs() < 1e-15);
    }

    #[test]
    fn design_weight_examples() {
        let (w, _) = design_weights(&[4.0, 0.5], 2, SumimoMode::MaxRate);
        assert_eq!(w, vec![4.0, 1.0]);
        let (w, d) = design_weights(&[4.0, 0.5], 2, SumimoMode::Qos);
        assert_eq!(w, vec![1.0, 1.0]);
        assert!((d - dft_matrix(2)).norm() < 1e-15);
    }

    #[test]
    fn unconstrained_is_waterfilling() {
        // Eigen-gains 4 and 1 with P = 1: levels 1/nu - 1/4 + 1/nu - 1 = 1 -> 1/nu = 1.125.
        let sc = sc2();
        let ch = ChannelSet { h: vec![diag(&[2.0, 1.0])], g: vec![], t: vec![] };
        let opts = Alg2Options { feasibility_grid: None, ..Default::default() };
        let (f, rep) = algorithm2(&ch, &sc, SumimoMode::MaxRate, &opts).unwrap();
        let rate = crate::metrics::rate_per_user(&f, &ch, &sc).unwrap()[0];
        let expect = (4.0_f64 * 1.125).log2() + 1.125_f64.log2();
        assert!((rate - expect).abs() < 1e-6 * expect, "{rate} vs {expect}");
        assert_eq!(rep.status, SolveStatus::Converged);
        assert!(f.power() <= 1.0 + 1e-12);
    }
}
