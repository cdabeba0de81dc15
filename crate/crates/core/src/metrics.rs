//! Performance metrics every design is evaluated against.
//!
//! Rates are in bits per channel use. Harvested power includes the
//! conversion efficiency `rho`; interference power does not.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::matops::{fro2, logdet_hpd, scaled_identity};
use crate::model::{ChannelSet, NetworkScenario, Precoder, UtilityKind};
use crate::CMat;

/// Floor applied to rates inside PF/HMR iterations to keep the utility finite.
pub const RATE_FLOOR_BITS: f64 = 1e-12;

fn check_precoder(f: &Precoder, sc: &NetworkScenario) -> Result<()> {
    if f.antennas() != sc.m || f.n_i() != sc.n_i || f.users() != sc.k_i {
        return Err(Error::DimensionMismatch(format!(
            "precoder is {}x{} with N_I = {}, scenario wants {}x{} with N_I = {}",
            f.antennas(),
            f.matrix().ncols(),
            f.n_i(),
            sc.m,
            sc.k_i * sc.n_i,
            sc.n_i
        )));
    }
    Ok(())
}

/// `R_k = log2 det(I + F_k^H H_k^H R_{n,k}^{-1} H_k F_k)` for every information user.
pub fn rate_per_user(f: &Precoder, ch: &ChannelSet, sc: &NetworkScenario) -> Result<Vec<f64>> {
    check_precoder(f, sc)?;
    ch.validate(sc)?;
    Ok(rates_nats(f.matrix(), &ch.h, sc.n_i, sc.sigma_n2)?
        .into_iter()
        .map(|r| r / std::f64::consts::LN_2)
        .collect())
}

/// Per-user rates in nats for a stacked precoder `f` and receive channels `h`.
pub(crate) fn rates_nats(f: &CMat, h: &[CMat], n_i: usize, sigma2: f64) -> Result<Vec<f64>> {
    h.iter()
        .enumerate()
        .map(|(k, hk)| {
            let hf = hk * f;
            let n_rx = hk.nrows();
            let mut noise = scaled_identity(n_rx, sigma2);
            for m in 0..h.len() {
                if m != k {
                    let b = hf.columns(m * n_i, n_i);
                    noise += b * b.adjoint();
                }
            }
            let own = hf.columns(k * n_i, n_i);
            let total = &noise + own * own.adjoint();
            let r = logdet_hpd(&total)? - logdet_hpd(&noise)?;
            Ok(r.max(0.0))
        })
        .collect()
}

/// `rho * ||G_i F||_F^2` for every energy user.
pub fn harvested_power(f: &Precoder, ch: &ChannelSet, sc: &NetworkScenario) -> Result<Vec<f64>> {
    check_precoder(f, sc)?;
    ch.validate(sc)?;
    Ok(ch.g.iter().map(|g| sc.rho * fro2(&(g * f.matrix()))).collect())
}

/// `||T_j F||_F^2` for every primary receiver.
pub fn interference_power(f: &Precoder, ch: &ChannelSet) -> Result<Vec<f64>> {
    ch.t
        .iter()
        .enumerate()
        .map(|(j, t)| {
            if t.ncols() != f.antennas() {
                return Err(Error::DimensionMismatch(format!(
                    "T[{j}] has {} columns, precoder has {} rows",
                    t.ncols(),
                    f.antennas()
                )));
            }
            Ok(fro2(&(t * f.matrix())))
        })
        .collect()
}

/// Sum utility of a rate vector.
pub fn sum_utility(rates: &[f64], u: &UtilityKind) -> Result<f64> {
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::UtilityDomain(format!("rates must be finite and nonnegative: {rates:?}")));
    }
    match u {
        UtilityKind::Wsr(alpha) => {
            if alpha.len() != rates.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} weights for {} rates",
                    alpha.len(),
                    rates.len()
                )));
            }
            Ok(alpha.iter().zip(rates).map(|(a, r)| a * r).sum())
        }
        UtilityKind::Pf | UtilityKind::Hmr => {
            if let Some(k) = rates.iter().position(|r| *r <= 0.0) {
                return Err(Error::UtilityDomain(format!(
                    "{} utility undefined: user {k} has zero rate",
                    u.name()
                )));
            }
            Ok(match u {
                UtilityKind::Pf => rates.iter().map(|r| r.ln()).sum(),
                _ => rates.iter().map(|r| -1.0 / r).sum(),
            })
        }
    }
}

/// Sum utility with rates floored at [`RATE_FLOOR_BITS`], for use during iteration.
pub fn sum_utility_floored(rates: &[f64], u: &UtilityKind) -> Result<f64> {
    let floored: Vec<f64> = rates.iter().map(|r| r.max(RATE_FLOOR_BITS)).collect();
    sum_utility(&floored, u)
}

/// Signed slacks keyed `power`, `eh[i]`, `cr[j]`. Nonnegative means satisfied.
///
/// Unbounded interference thresholds yield `+inf` slack.
pub fn constraint_residuals(
    f: &Precoder,
    ch: &ChannelSet,
    sc: &NetworkScenario,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    out.insert("power".to_string(), sc.p_t - f.power());
    for (i, e) in harvested_power(f, ch, sc)?.into_iter().enumerate() {
        out.insert(format!("eh[{i}]"), e - sc.e_th[i]);
    }
    for (j, p) in interference_power(f, ch)?.into_iter().enumerate() {
        out.insert(format!("cr[{j}]"), sc.i_th[j] - p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar_scenario(k_i: usize) -> NetworkScenario {
        NetworkScenario {
            m: 1,
            k_i,
            k_e: 0,
            k_p: 0,
            n_i: 1,
            n_e: 1,
            n_p: 1,
            p_t: 1.0,
            sigma_n2: 1.0,
            rho: 1.0,
            e_th: vec![],
            i_th: vec![],
            alpha: vec![1.0; k_i],
        }
    }

    #[test]
    fn scalar_rate_is_one_bit() {
        let sc = scalar_scenario(1);
        let ch = ChannelSet { h: vec![CMat::from_element(1, 1, c(1.0))], g: vec![], t: vec![] };
        let f = Precoder::new(CMat::from_element(1, 1, c(1.0)), 1).unwrap();
        let r = rate_per_user(&f, &ch, &sc).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_precoder_gives_zero_rates() {
        let sc = scalar_scenario(2);
        let h = CMat::from_element(1, 1, c(1.0));
        let ch = ChannelSet { h: vec![h.clone(), h], g: vec![], t: vec![] };
        let f = Precoder::zeros(1, 2, 1);
        assert_eq!(rate_per_user(&f, &ch, &sc).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn two_user_interference_rate() {
        let sc = scalar_scenario(2);
        let h = CMat::from_element(1, 1, c(1.0));
        let ch = ChannelSet { h: vec![h.clone(), h], g: vec![], t: vec![] };
        let f = Precoder::new(CMat::from_element(1, 2, c(1.0)), 1).unwrap();
        let r = rate_per_user(&f, &ch, &sc).unwrap();
        let expect = 1.5_f64.log2();
        assert!((r[0] - expect).abs() < 1e-14 && (r[1] - expect).abs() < 1e-14);
        assert!((r[0] - 0.585).abs() < 1e-3);
    }

    #[test]
    fn rate_rejects_bad_dimensions() {
        let sc = scalar_scenario(1);
        let ch = ChannelSet { h: vec![CMat::from_element(1, 1, c(1.0))], g: vec![], t: vec![] };
        let f = Precoder::new(CMat::from_element(2, 1, c(1.0)), 1).unwrap();
        assert!(matches!(rate_per_user(&f, &ch, &sc), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rate_rejects_non_finite_channel() {
        let sc = scalar_scenario(1);
        let ch = ChannelSet { h: vec![CMat::from_element(1, 1, c(f64::NAN))], g: vec![], t: vec![] };
        let f = Precoder::new(CMat::from_element(1, 1, c(1.0)), 1).unwrap();
        assert!(matches!(rate_per_user(&f, &ch, &sc), Err(Error::NonFinite(_))));
    }

    #[test]
    fn harvested_identity_channel() {
        let mut sc = scalar_scenario(1);
        sc.m = 2;
        sc.k_e = 1;
        sc.n_e = 2;
        sc.rho = 0.5;
        sc.e_th = vec![0.0];
        let ch = ChannelSet {
            h: vec![CMat::zeros(1, 2)],
            g: vec![CMat::identity(2, 2)],
            t: vec![],
        };
        let x = (0.005_f64).sqrt();
        let f = Precoder::new(CMat::from_column_slice(2, 1, &[c(x), c(x)]), 1).unwrap();
        assert!((f.power() - 0.01).abs() < 1e-15);
        let e = harvested_power(&f, &ch, &sc).unwrap();
        assert!((e[0] - 0.005).abs() < 1e-15);
        assert_eq!(harvested_power(&Precoder::zeros(2, 1, 1), &ch, &sc).unwrap(), vec![0.0]);
    }

    #[test]
    fn interference_examples() {
        let t = CMat::from_row_slice(1, 2, &[c(1.0), c(0.0)]);
        let ch = ChannelSet { h: vec![], g: vec![], t: vec![t] };
        let f = Precoder::new(CMat::from_column_slice(2, 1, &[c(0.0), C64::new(3.0, -2.0)]), 1).unwrap();
        assert_eq!(interference_power(&f, &ch).unwrap(), vec![0.0]);

        let ch = ChannelSet { h: vec![], g: vec![], t: vec![CMat::identity(2, 2)] };
        let f = Precoder::new(CMat::from_column_slice(2, 1, &[c(0.3), C64::new(0.0, 0.4)]), 1).unwrap();
        assert!((interference_power(&f, &ch).unwrap()[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn utility_examples() {
        let wsr = UtilityKind::Wsr(vec![1.0, 1.0]);
        assert_eq!(sum_utility(&[1.0, 2.0], &wsr).unwrap(), 3.0);
        assert_eq!(sum_utility(&[1.0, 1.0], &UtilityKind::Pf).unwrap(), 0.0);
        assert_eq!(sum_utility(&[2.0, 4.0], &UtilityKind::Hmr).unwrap(), -0.75);
    }

    #[test]
    fn utility_zero_rate_domain_error() {
        assert!(matches!(sum_utility(&[0.0, 1.0], &UtilityKind::Pf), Err(Error::UtilityDomain(_))));
        assert!(matches!(sum_utility(&[1.0, 0.0], &UtilityKind::Hmr), Err(Error::UtilityDomain(_))));
        let v = sum_utility_floored(&[0.0, 1.0], &UtilityKind::Pf).unwrap();
        assert!((v - RATE_FLOOR_BITS.ln()).abs() < 1e-9);
    }
}
