//! Achievable energy region: weighted harvested-energy maximization under
//! interference caps, and a grid-based feasibility check for energy thresholds.
//!
//! The weighted problem is solved through its dual over the interference
//! multipliers `mu`. At the dual optimum the top eigenspace of
//! `P(mu) = sum_i w_i G_i^H G_i - sum_j mu_j T_j^H T_j` contains an optimal
//! full-power rank-one beam; when that eigenspace is degenerate the beam is
//! recovered by an exact search over two-dimensional subspaces.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ellipsoid::{maximize_with_restarts, EllipsoidOptions, OracleResponse};
use crate::error::{Error, Result};
use crate::matops::herm_eig;
use crate::model::{ChannelSet, NetworkScenario, SolveStatus};
use crate::mumimo::{reduce_zero_interference, zero_interference_set};
use crate::{CMat, CVec, C64};

/// Relative dual-gap accepted for a recovered beam.
const RECOVERY_GAP: f64 = 1e-5;
/// Relative slack allowed on interference caps.
const CR_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyWeights {
    w: Vec<f64>,
}

impl EnergyWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if w.is_empty() || w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || (sum - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidScenario(format!("energy weights must lie on the simplex, got {w:?}")));
        }
        Ok(Self { w })
    }

    /// All weight on user `i` of `k`.
    pub fn unit(k: usize, i: usize) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Self { w }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyRegionPoint {
    pub weights: EnergyWeights,
    /// Beam with `||f||^2 = P_T`.
    pub f: CVec,
    /// `rho ||G_i f||^2` per energy user.
    pub energies: Vec<f64>,
    /// Interference multipliers; zero for caps that were inactive or handled by null-space reduction.
    pub mu: Vec<f64>,
    /// Achieved `sum_i w_i ||G_i f||^2` (no `rho`).
    pub weighted_energy: f64,
    /// Upper bound on the weighted energy from the dual.
    pub dual_bound: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Maximize `sum_i w_i ||G_i f||^2` over beams with `||f||^2 <= P_T` and interference caps.
pub fn max_weighted_energy(ch: &ChannelSet, sc: &NetworkScenario, w: &EnergyWeights) -> Result<EnergyRegionPoint> {
    sc.validate()?;
    ch.validate(sc)?;
    if sc.k_e == 0 {
        return Err(Error::InvalidScenario("energy maximization needs K_E >= 1".into()));
    }
    if w.w.len() != sc.k_e {
        return Err(Error::DimensionMismatch(format!("{} weights for {} energy users", w.w.len(), sc.k_e)));
    }
    let red = reduce_zero_interference(ch, sc, &zero_interference_set(sc))?;
    let (rch, rsc, u) = (&red.channels, &red.scenario, &red.u);
    let m = rsc.m;

    let mut q = CMat::zeros(m, m);
    for (wi, g) in w.w.iter().zip(&rch.g) {
        if *wi > 0.0 {
            q += g.adjoint() * g * C64::new(*wi, 0.0);
        }
    }
    let q_top = herm_eig(&q)?.max();
    let q_scale = if q_top > 0.0 { q_top } else { 1.0 };
    let qn = &q / C64::new(q_scale, 0.0);

    // Interference caps in unit-beam form: p^H R_j p <= iota_j.
    let mut rs = Vec::new();
    let mut iotas = Vec::new();
    let mut r_scales = Vec::new();
    let mut active = Vec::new();
    for (jr, t) in rch.t.iter().enumerate() {
        let cap = rsc.i_th[jr];
        if !cap.is_finite() {
            continue;
        }
        let tt = t.adjoint() * t;
        let top = herm_eig(&tt)?.max();
        if top <= 0.0 {
            continue;
        }
        let iota = cap / (rsc.p_t * top);
        if iota >= 1.0 {
            continue;
        }
        rs.push(&tt / C64::new(top, 0.0));
        iotas.push(iota);
        r_scales.push(top);
        active.push(red.kept_p[jr]);
    }

    let n = rs.len();
    let (mu_n, dual_n, iterations, status) = if n == 0 {
        (Vec::new(), herm_eig(&qn)?.max(), 0, SolveStatus::Converged)
    } else {
        let oracle = |z: &[f64]| -> Result<OracleResponse> {
            if let Some(c) = OracleResponse::nonnegativity_cut(z) {
                return Ok(c);
            }
            let p = pencil(&qn, &rs, z);
            let e = herm_eig(&p)?;
            let top = e.top();
            let value = -e.max() - z.iter().zip(&iotas).map(|(a, b)| a * b).sum::<f64>();
            let g = rs
                .iter()
                .zip(&iotas)
                .map(|(r, iota)| quad_form(r, &top) - iota)
                .collect();
            Ok(OracleResponse::objective(value, g))
        };
        let mut z0 = vec![0.0; n];
        z0[0] = 1.0;
        let res = maximize_with_restarts(oracle, &z0, &EllipsoidOptions::default(), 12)?;
        if res.status == SolveStatus::Infeasible {
            return Err(Error::Infeasible("energy dual found no feasible multiplier".into()));
        }
        (res.z_best, -res.value_best, res.iterations, res.status)
    };

    let p_hat = recover_beam(&qn, &rs, &iotas, &mu_n, dual_n)?;
    let p_full = u * &p_hat;
    let f = &p_full * C64::new(sc.p_t.sqrt(), 0.0);
    let energies: Vec<f64> = ch.g.iter().map(|g| sc.rho * (g * &f).norm_squared()).collect();
    let weighted_energy: f64 = w.w.iter().zip(&ch.g).map(|(wi, g)| wi * (g * &f).norm_squared()).sum();
    let mut mu = vec![0.0; sc.k_p];
    for ((orig, mn), rsc_j) in active.iter().zip(&mu_n).zip(&r_scales) {
        mu[*orig] = mn * q_scale / rsc_j;
    }
    Ok(EnergyRegionPoint {
        weights: w.clone(),
        f,
        energies,
        mu,
        weighted_energy,
        dual_bound: dual_n * q_scale * sc.p_t,
        iterations,
        status,
    })
}

fn pencil(q: &CMat, rs: &[CMat], mu: &[f64]) -> CMat {
    let mut p = q.clone();
    for (r, m) in rs.iter().zip(mu) {
        if *m != 0.0 {
            p -= r * C64::new(*m, 0.0);
        }
    }
    p
}

fn quad_form(a: &CMat, x: &CVec) -> f64 {
    (x.adjoint() * a * x)[(0, 0)].re
}

fn cr_ok(rs: &[CMat], iotas: &[f64], x: &CVec) -> bool {
    rs.iter().zip(iotas).all(|(r, iota)| quad_form(r, x) <= iota * (1.0 + CR_SLACK) + 1e-14)
}

/// Best CR-feasible unit beam in the top eigenspaces of `P(mu)`, growing the
/// candidate subspace until the dual bound is met.
fn recover_beam(q: &CMat, rs: &[CMat], iotas: &[f64], mu: &[f64], dual: f64) -> Result<CVec> {
    let e = herm_eig(&pencil(q, rs, mu))?;
    let m = e.phi.len();
    let good = |val: f64| val >= dual - RECOVERY_GAP * dual.abs().max(1e-12);
    let mut best: Option<(f64, CVec)> = None;
    let consider = |x: CVec, best: &mut Option<(f64, CVec)>| {
        if cr_ok(rs, iotas, &x) {
            let val = quad_form(q, &x);
            if best.as_ref().is_none_or(|(b, _)| val > *b) {
                *best = Some((val, x));
            }
        }
    };
    consider(e.top(), &mut best);
    if best.as_ref().is_some_and(|(v, _)| good(*v)) {
        return Ok(best.unwrap().1);
    }
    for k in 2..=m {
        for i in 0..k - 1 {
            let j = k - 1;
            let a = e.v.column(i).into_owned();
            let b = e.v.column(j).into_owned();
            for x in best_in_plane(q, rs, iotas, &a, &b) {
                consider(x, &mut best);
            }
        }
        if best.as_ref().is_some_and(|(v, _)| good(*v)) {
            break;
        }
    }
    match best {
        Some((_, x)) => Ok(x),
        None => Err(Error::DegenerateEigenspace(format!(
            "no unit beam in the top eigenspaces of P(mu) meets the interference caps (mu = {mu:?})"
        ))),
    }
}

/// Candidate maximizers of `x^H Q x` over unit `x` in `span(a, b)` subject to
/// `x^H R_j x <= iota_j`. Uses the Bloch-sphere map, under which every
/// quadratic form becomes affine on the unit sphere in `R^3`.
fn best_in_plane(q: &CMat, rs: &[CMat], iotas: &[f64], a: &CVec, b: &CVec) -> Vec<CVec> {
    let bloch = |mat: &CMat| -> (f64, [f64; 3]) {
        let ma = mat * a;
        let mb = mat * b;
        let q11 = a.dotc(&ma).re;
        let q22 = b.dotc(&mb).re;
        let q12 = a.dotc(&mb);
        (0.5 * (q11 + q22), [q12.re, -q12.im, 0.5 * (q11 - q22)])
    };
    let (_, obj) = bloch(q);
    let planes: Vec<([f64; 3], f64)> = rs
        .iter()
        .zip(iotas)
        .map(|(r, iota)| {
            let (c, v) = bloch(r);
            (v, iota - c)
        })
        .collect();
    let mut pts: Vec<[f64; 3]> = Vec::new();
    let on = norm3(&obj);
    pts.push(if on > 0.0 { scale3(&obj, 1.0 / on) } else { [0.0, 0.0, 1.0] });
    for (nv, rhs) in &planes {
        if let Some(s) = max_on_circle(&obj, nv, *rhs) {
            pts.push(s);
        }
    }
    for i in 0..planes.len() {
        for j in i + 1..planes.len() {
            pts.extend(plane_pair_points(&planes[i], &planes[j]));
        }
    }
    pts.iter()
        .map(|s| {
            let theta = s[2].clamp(-1.0, 1.0).acos();
            let phi = s[1].atan2(s[0]);
            let c0 = C64::new((0.5 * theta).cos(), 0.0);
            let c1 = C64::from_polar((0.5 * theta).sin(), phi);
            a * c0 + b * c1
        })
        .collect()
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn scale3(a: &[f64; 3], c: f64) -> [f64; 3] {
    [a[0] * c, a[1] * c, a[2] * c]
}

fn add3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Maximizer of `c . s` on the circle `{|s| = 1, n . s = rhs}`.
fn max_on_circle(c: &[f64; 3], n: &[f64; 3], rhs: f64) -> Option<[f64; 3]> {
    let nn = dot3(n, n);
    if nn <= 0.0 || rhs * rhs > nn {
        return None;
    }
    let center = scale3(n, rhs / nn);
    let radius = (1.0 - rhs * rhs / nn).max(0.0).sqrt();
    let perp = add3(c, &scale3(n, -dot3(c, n) / nn));
    let pn = norm3(&perp);
    if pn <= 1e-300 {
        return Some(center);
    }
    Some(add3(&center, &scale3(&perp, radius / pn)))
}

/// Points of the unit sphere lying on both planes.
fn plane_pair_points(p1: &([f64; 3], f64), p2: &([f64; 3], f64)) -> Vec<[f64; 3]> {
    let (a1, b1) = p1;
    let (a2, b2) = p2;
    let d = cross3(a1, a2);
    let dd = dot3(&d, &d);
    if dd <= 1e-24 {
        return Vec::new();
    }
    // s0 = x a1 + y a2 with a1.s0 = b1, a2.s0 = b2.
    let (g11, g12, g22) = (dot3(a1, a1), dot3(a1, a2), dot3(a2, a2));
    let det = g11 * g22 - g12 * g12;
    let x = (b1 * g22 - b2 * g12) / det;
    let y = (b2 * g11 - b1 * g12) / det;
    let s0 = add3(&scale3(a1, x), &scale3(a2, y));
    let rem = 1.0 - dot3(&s0, &s0);
    if rem < 0.0 {
        return Vec::new();
    }
    let t = (rem / dd).sqrt();
    vec![add3(&s0, &scale3(&d, t)), add3(&s0, &scale3(&d, -t))]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityCheck {
    pub feasible: bool,
    /// `max over grid of min_i (energies_i - E_th,i)`, in watts.
    pub margin: f64,
    pub witness: Option<EnergyRegionPoint>,
}

/// Weight vectors on the simplex with `grid` points per axis, coarsened so the
/// total stays at or below 1000.
pub fn simplex_grid(k: usize, grid: usize) -> Vec<Vec<f64>> {
    if k == 0 {
        return Vec::new();
    }
    if k == 1 {
        return vec![vec![1.0]];
    }
    let mut steps = grid.max(2) - 1;
    while steps > 1 && binomial(steps + k - 1, k - 1) > 1000 {
        steps -= 1;
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; k];
    compositions(steps, k, 0, &mut cur, &mut out);
    out.into_iter()
        .map(|c| c.iter().map(|&x| x as f64 / steps as f64).collect())
        .collect()
}

fn binomial(n: usize, r: usize) -> usize {
    (0..r).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn compositions(left: usize, k: usize, pos: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if pos == k - 1 {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for x in 0..=left {
        cur[pos] = x;
        compositions(left - x, k, pos + 1, cur, out);
    }
}

/// Sufficient check that the energy thresholds are achievable under the power
/// and interference constraints. `false` is not a proof of infeasibility.
pub fn check_feasibility(ch: &ChannelSet, sc: &NetworkScenario, grid: usize) -> Result<FeasibilityCheck> {
    if grid == 0 {
        return Err(Error::InvalidScenario("feasibility grid must have at least one point".into()));
    }
    sc.validate()?;
    ch.validate(sc)?;
    if sc.k_e == 0 {
        return Ok(FeasibilityCheck { feasible: true, margin: f64::INFINITY, witness: None });
    }
    let points: Vec<EnergyRegionPoint> = simplex_grid(sc.k_e, grid)
        .into_par_iter()
        .map(|w| max_weighted_energy(ch, sc, &EnergyWeights { w }))
        .collect::<Result<_>>()?;
    let mut best: Option<(f64, EnergyRegionPoint)> = None;
    for p in points {
        let m = p
            .energies
            .iter()
            .zip(&sc.e_th)
            .map(|(e, t)| e - t)
            .fold(f64::INFINITY, f64::min);
        if best.as_ref().is_none_or(|(b, _)| m > *b) {
            best = Some((m, p));
        }
    }
    let (margin, witness) = best.expect("simplex grid is non-empty");
    Ok(FeasibilityCheck { feasible: margin >= 0.0, margin, witness: Some(witness) })
}
