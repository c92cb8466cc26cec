//! Flat Rayleigh fading channel estimates and the CSIT error model.
//!
//! The estimate `Ĥ` is drawn first with i.i.d. CN(0, 1) entries; the error
//! `H̃` is drawn independently with per-entry variance `σ_e²/Nt`, so each
//! user's error row has expected power `σ_e²`. The true channel is
//! `H = Ĥ + H̃`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matops::{permute_rows, ComplexMatrix, C64};

/// How the CSIT error power depends on the transmit power budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorModel {
    /// `σ_e² = a · Etr^(-alpha)`.
    Scaling { a: f64, alpha: f64 },
    /// Constant `σ_e²` regardless of `Etr`.
    Fixed { sigma_e2: f64 },
}

impl Default for ErrorModel {
    fn default() -> Self {
        ErrorModel::Scaling { a: 0.95, alpha: 0.6 }
    }
}

impl ErrorModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorModel::Scaling { a, alpha } => {
                if !(a > 0.0 && a.is_finite()) {
                    return Err(Error::config("error_a", "must be finite and > 0"));
                }
                if !(alpha >= 0.0 && alpha.is_finite()) {
                    return Err(Error::config("error_alpha", "must be finite and >= 0"));
                }
            }
            ErrorModel::Fixed { sigma_e2 } => {
                if !(sigma_e2 >= 0.0 && sigma_e2.is_finite()) {
                    return Err(Error::config("sigma_e2", "must be finite and >= 0"));
                }
            }
        }
        Ok(())
    }

    /// Error power `σ_e²` for the power budget `etr > 0`.
    pub fn error_variance(&self, etr: f64) -> f64 {
        match *self {
            ErrorModel::Scaling { a, alpha } => a * etr.powf(-alpha),
            ErrorModel::Fixed { sigma_e2 } => sigma_e2,
        }
    }
}

fn cn_sample<R: Rng + ?Sized>(rng: &mut R, std_per_dim: f64) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * std_per_dim, im * std_per_dim)
}

/// `K×Nt` channel estimate with i.i.d. CN(0, 1) entries.
pub fn draw_estimate<R: Rng + ?Sized>(k: usize, nt: usize, rng: &mut R) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(k, nt, |_, _| cn_sample(rng, s))
}

/// `K×Nt` CSIT error with i.i.d. CN(0, σ_e²/Nt) entries.
///
/// The same random stream always consumes the same number of samples, so a
/// stream reused at a different `sigma_e2` yields the same error shape scaled.
pub fn draw_error<R: Rng + ?Sized>(k: usize, nt: usize, sigma_e2: f64, rng: &mut R) -> ComplexMatrix {
    let s = (sigma_e2 / nt as f64 / 2.0).sqrt();
    ComplexMatrix::from_fn(k, nt, |_, _| cn_sample(rng, s))
}

/// One trial's estimate, error, and true channel (all `K×Nt`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_est: ComplexMatrix,
    pub h_err: ComplexMatrix,
    pub h_true: ComplexMatrix,
    /// Per-user error power `E[‖h̃_k‖²]`.
    pub sigma_e2: Vec<f64>,
}

/// Forms `H = Ĥ + H̃`, keeping the inputs.
pub fn compose_true(h_est: ComplexMatrix, h_err: ComplexMatrix, sigma_e2: f64) -> Result<ChannelRealization> {
    let h_true = h_est.add(&h_err)?;
    Ok(ChannelRealization {
        sigma_e2: vec![sigma_e2; h_est.rows()],
        h_est,
        h_err,
        h_true,
    })
}

impl ChannelRealization {
    /// Draws a full realization: estimate first, then an independent error.
    pub fn draw<R: Rng + ?Sized>(k: usize, nt: usize, sigma_e2: f64, rng: &mut R) -> Self {
        let h_est = draw_estimate(k, nt, rng);
        let h_err = draw_error(k, nt, sigma_e2, rng);
        compose_true(h_est, h_err, sigma_e2).expect("shapes agree by construction")
    }

    pub fn users(&self) -> usize {
        self.h_est.rows()
    }

    pub fn antennas(&self) -> usize {
        self.h_est.cols()
    }

    /// Reorders the users of every matrix (row `i` becomes user `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Ok(Self {
            h_est: permute_rows(&self.h_est, perm)?,
            h_err: permute_rows(&self.h_err, perm)?,
            h_true: permute_rows(&self.h_true, perm)?,
            sigma_e2: perm.iter().map(|&p| self.sigma_e2[p]).collect(),
        })
    }
}
