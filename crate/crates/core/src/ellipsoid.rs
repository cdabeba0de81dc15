//! Central-cut ellipsoid method for maximizing a concave function over a convex set.
//!
//! The caller supplies an oracle that, at each query point, either reports the
//! objective value with a supergradient or a violated constraint with its
//! outward normal. Nonnegativity is the caller's job (cut with `-e_i`).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SolveStatus;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 5000;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleResponse {
    /// The point is feasible; `g` is a supergradient at it.
    Objective { value: f64, g: DVector<f64> },
    /// The point violates a constraint whose outward normal is `g`.
    Cut { g: DVector<f64> },
}

impl OracleResponse {
    pub fn objective(value: f64, g: Vec<f64>) -> Self {
        OracleResponse::Objective { value, g: DVector::from_vec(g) }
    }

    pub fn cut(g: Vec<f64>) -> Self {
        OracleResponse::Cut { g: DVector::from_vec(g) }
    }

    /// If any coordinate of `z` is negative, the cut `-e_i` for the most negative one.
    pub fn nonnegativity_cut(z: &[f64]) -> Option<Self> {
        let (idx, &val) = z.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
        if val < 0.0 {
            let mut g = vec![0.0; z.len()];
            g[idx] = -1.0;
            Some(OracleResponse::cut(g))
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub z: DVector<f64>,
    pub a: DMatrix<f64>,
    pub iteration: usize,
}

impl EllipsoidState {
    pub fn ball(z0: &[f64], r0: f64) -> Self {
        let n = z0.len();
        Self {
            z: DVector::from_column_slice(z0),
            a: DMatrix::identity(n, n) * (r0 * r0),
            iteration: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipsoidOptions {
    pub r0: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self { r0: 1e3, tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidResult {
    pub z_best: Vec<f64>,
    pub value_best: f64,
    /// Objective values at every feasible query, in order.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Maximize the concave function described by `oracle`, starting from the ball `B(z0, r0)`.
pub fn maximize<F>(mut oracle: F, z0: &[f64], opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    if !(opts.r0 > 0.0 && opts.tol > 0.0) || z0.is_empty() {
        return Err(Error::InvalidScenario(format!(
            "ellipsoid needs r0 > 0, tol > 0 and n >= 1 (r0 = {}, tol = {}, n = {})",
            opts.r0,
            opts.tol,
            z0.len()
        )));
    }
    if z0.len() == 1 {
        return bisect(&mut oracle, z0[0], opts);
    }
    let mut state = EllipsoidState::ball(z0, opts.r0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut reconditions = 0usize;
    while state.iteration < opts.max_iter {
        state.iteration += 1;
        let resp = oracle(state.z.as_slice())?;
        let (g, ascent) = match resp {
            OracleResponse::Objective { value, g } => {
                trace.push(value);
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, state.z.as_slice().to_vec()));
                }
                (g, true)
            }
            OracleResponse::Cut { g } => (g, false),
        };
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("oracle returned non-finite vector at iteration {}", state.iteration)));
        }
        let ag = &state.a * &g;
        let gag = g.dot(&ag);
        if ascent && gag.max(0.0).sqrt() <= opts.tol {
            status = SolveStatus::Converged;
            break;
        }
        if gag <= 0.0 {
            // Zero cut normal carries no information; the shape collapsed along it.
            if ascent {
                status = SolveStatus::Converged;
                break;
            }
            if best.is_none() {
                break;
            }
            return Err(Error::EllipsoidBreakdown { iteration: state.iteration });
        }
        if !ascent && gag.sqrt() <= 1e-3 * opts.tol {
            // Collapsed along a constraint normal.
            if best.is_some() {
                status = SolveStatus::Converged;
            }
            break;
        }
        if update(&mut state, &ag, gag, ascent) {
            reconditions = 0;
        } else {
            reconditions += 1;
            if reconditions > 1 {
                if best.is_none() {
                    break;
                }
                return Err(Error::EllipsoidBreakdown { iteration: state.iteration });
            }
        }
    }
    finish(best, trace, state.iteration, status)
}

fn finish(
    best: Option<(f64, Vec<f64>)>,
    trace: Vec<f64>,
    iterations: usize,
    status: SolveStatus,
) -> Result<EllipsoidResult> {
    match best {
        Some((value_best, z_best)) => Ok(EllipsoidResult { z_best, value_best, trace, iterations, status }),
        None => Ok(EllipsoidResult {
            z_best: Vec::new(),
            value_best: f64::NEG_INFINITY,
            trace,
            iterations,
            status: SolveStatus::Infeasible,
        }),
    }
}

/// One central-cut step. Returns `false` if the shape matrix needed reconditioning.
fn update(state: &mut EllipsoidState, ag: &DVector<f64>, gag: f64, ascent: bool) -> bool {
    let n = state.z.len() as f64;
    let s = gag.sqrt();
    let step = ag / s;
    if ascent {
        state.z += &step / (n + 1.0);
    } else {
        state.z -= &step / (n + 1.0);
    }
    let factor = n * n / (n * n - 1.0);
    let outer = &step * step.transpose();
    state.a = (&state.a - outer * (2.0 / (n + 1.0))) * factor;
    // Keep exact symmetry.
    state.a = (&state.a + state.a.transpose()) * 0.5;
    if state.a.clone().cholesky().is_some() {
        return true;
    }
    let shift = 1e-12 * state.a.trace().abs() / n;
    for i in 0..state.a.nrows() {
        state.a[(i, i)] += shift;
    }
    state.a.clone().cholesky().is_some()
}

/// One-dimensional case: plain bisection over `[z0 - r0, z0 + r0]`.
fn bisect<F>(oracle: &mut F, z0: f64, opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    let (mut lo, mut hi) = (z0 - opts.r0, z0 + opts.r0);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let mut z = z0;
    while iterations < opts.max_iter {
        iterations += 1;
        let (g, ascent) = match oracle(&[z])? {
            OracleResponse::Objective { value, g } => {
                trace.push(value);
                if best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, vec![z]));
                }
                (g[0], true)
            }
            OracleResponse::Cut { g } => (g[0], false),
        };
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("oracle returned non-finite slope at iteration {iterations}")));
        }
        let half = 0.5 * (hi - lo);
        if ascent && g == 0.0 {
            status = SolveStatus::Converged;
            break;
        }
        // Bisection is cheap, so bracket the multiplier itself rather than the value gap.
        if half <= opts.tol * (1.0 + z.abs()) {
            if best.is_some() {
                status = SolveStatus::Converged;
            }
            break;
        }
        // For an objective step move toward +g; for a cut move away from g.
        let go_up = if ascent { g > 0.0 } else { g < 0.0 };
        if go_up {
            lo = z;
        } else {
            hi = z;
        }
        z = 0.5 * (lo + hi);
    }
    finish(best, trace, iterations, status)
}

/// Runs [`maximize`] and, while the best point lands near the boundary of the
/// initial ball, reruns centered there with a doubled radius.
pub fn maximize_with_restarts<F>(
    mut oracle: F,
    z0: &[f64],
    opts: &EllipsoidOptions,
    max_restarts: usize,
) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64]) -> Result<OracleResponse>,
{
    let mut center = z0.to_vec();
    let mut o = *opts;
    let mut total_iter = 0;
    let mut trace = Vec::new();
    let mut restarts = 0;
    loop {
        let mut res = maximize(&mut oracle, &center, &o)?;
        total_iter += res.iterations;
        trace.extend_from_slice(&res.trace);
        let on_boundary = res.status != SolveStatus::Infeasible && {
            let d: f64 = res.z_best.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            d >= 0.9 * o.r0
        };
        if !on_boundary || restarts >= max_restarts {
            res.iterations = total_iter;
            res.trace = trace;
            return Ok(res);
        }
        restarts += 1;
        center = res.z_best.clone();
        o.r0 *= 2.0;
    }
}
