//! Internal unit normalization shared by the multi-user and single-user solvers.
//!
//! The solvers work with `P_T = 1`, unit noise power and `rho = 1`. Each
//! energy and interference channel is divided by `sqrt(P_T)` times its
//! spectral norm, so every normalized threshold is the fraction of the
//! largest achievable value and every dual multiplier is of order one.
//! Constraints that can never bind are dropped.

use crate::matops::herm_eig;
use crate::model::{ChannelSet, NetworkScenario};
use crate::{CMat, C64};

#[derive(Debug, Clone)]
pub(crate) struct Normalized {
    pub ch: ChannelSet,
    pub sc: NetworkScenario,
    /// Original index of every kept energy constraint.
    pub e_idx: Vec<usize>,
    /// Original index of every kept interference constraint.
    pub p_idx: Vec<usize>,
    /// `F = f_scale * F_normalized`.
    pub f_scale: f64,
    /// Spectral norms squared `||G_i||_2^2` and `||T_j||_2^2` of the kept channels.
    pub e_top: Vec<f64>,
    pub p_top: Vec<f64>,
}

impl Normalized {
    pub fn new(ch: &ChannelSet, sc: &NetworkScenario) -> crate::Result<Self> {
        let sqrt_p = sc.p_t.sqrt();
        let hs = C64::new(sqrt_p / sc.sigma_n2.sqrt(), 0.0);
        let h = ch.h.iter().map(|hk| hk * hs).collect();
        let mut g = Vec::new();
        let mut e_th = Vec::new();
        let mut e_idx = Vec::new();
        let mut e_top = Vec::new();
        for (i, gi) in ch.g.iter().enumerate() {
            let target = sc.effective_e_th(i);
            if target <= 0.0 {
                continue;
            }
            let top = spectral_sq(gi)?;
            if top <= 0.0 {
                // Cannot harvest anything: keep it so infeasibility surfaces.
                g.push(gi.clone());
                e_th.push(f64::INFINITY);
            } else {
                g.push(gi / C64::new(top.sqrt(), 0.0));
                e_th.push(target / (sc.p_t * top));
            }
            e_idx.push(i);
            e_top.push(top.max(f64::MIN_POSITIVE));
        }
        let mut t = Vec::new();
        let mut i_th = Vec::new();
        let mut p_idx = Vec::new();
        let mut p_top = Vec::new();
        for (j, tj) in ch.t.iter().enumerate() {
            let cap = sc.i_th[j];
            if !cap.is_finite() {
                continue;
            }
            let top = spectral_sq(tj)?;
            if top <= 0.0 || cap >= sc.p_t * top {
                continue;
            }
            t.push(tj / C64::new(top.sqrt(), 0.0));
            i_th.push(cap / (sc.p_t * top));
            p_idx.push(j);
            p_top.push(top);
        }
        let nsc = NetworkScenario {
            m: sc.m,
            k_i: sc.k_i,
            k_e: g.len(),
            k_p: t.len(),
            n_i: sc.n_i,
            n_e: sc.n_e,
            n_p: sc.n_p,
            p_t: 1.0,
            sigma_n2: 1.0,
            rho: 1.0,
            e_th,
            i_th,
            alpha: sc.alpha.clone(),
        };
        Ok(Self {
            ch: ChannelSet { h, g, t },
            sc: nsc,
            e_idx,
            p_idx,
            f_scale: sqrt_p,
            e_top,
            p_top,
        })
    }

    /// Map normalized multipliers `[lambda.., mu..]` back to original indexing
    /// (dropped constraints get zero). Each entry is divided by the channel's
    /// `||.||_2^2` and by `extra`.
    pub fn denormalize_duals(&self, u: &[f64], k_e: usize, k_p: usize, extra: f64) -> (Vec<f64>, Vec<f64>) {
        let ne = self.e_idx.len();
        let mut lambda = vec![0.0; k_e];
        let mut mu = vec![0.0; k_p];
        for (n, &i) in self.e_idx.iter().enumerate() {
            lambda[i] = u[n] / (self.e_top[n] * extra);
        }
        for (n, &j) in self.p_idx.iter().enumerate() {
            mu[j] = u[ne + n] / (self.p_top[n] * extra);
        }
        (lambda, mu)
    }
}

fn spectral_sq(x: &CMat) -> crate::Result<f64> {
    Ok(herm_eig(&(x.adjoint() * x))?.max().max(0.0))
}
