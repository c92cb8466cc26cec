//! Tomlinson-Harashima precoding: filter construction, modulo-reduced
//! successive encoding, and transmit-vector assembly.
//!
//! From the LQ factorization `Ĥ = L·Q` of the (branch-permuted) estimate:
//!
//! - feedforward `F = Q^H` (`Nt×K`), so `Ĥ·F = L`;
//! - gains `g_k = 1 / l_kk`;
//! - feedback `B = diag(g)·L` (decentralized) or `B = L·diag(g)` (centralized),
//!   both unit-diagonal lower triangular.
//!
//! The decentralized scheme applies `diag(g)` at the receivers, the
//! centralized scheme applies it at the transmitter. Either way the private
//! part of the transmit vector is `β·W·(s + d)` with the composite columns
//! `W = F·L⁻¹·diag(g)⁻¹` (decentralized) or `W = F·L⁻¹` (centralized).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matops::{invert_lower, lq_decompose, ComplexMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ThpScheme {
    Centralized,
    Decentralized,
}

impl ThpScheme {
    pub fn label(self) -> &'static str {
        match self {
            ThpScheme::Centralized => "cthp",
            ThpScheme::Decentralized => "dthp",
        }
    }
}

impl fmt::Display for ThpScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ThpScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cthp" | "centralized" => Ok(ThpScheme::Centralized),
            "dthp" | "decentralized" => Ok(ThpScheme::Decentralized),
            other => Err(Error::config("scheme", format!("unknown scheme `{other}` (expected cthp or dthp)"))),
        }
    }
}

/// Filters of one THP scheme built from one channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ThpFilterSet {
    pub scheme: ThpScheme,
    /// `Nt×K` feedforward filter with orthonormal columns.
    pub f: ComplexMatrix,
    /// `K×K` lower-triangular LQ factor of the estimate.
    pub l: ComplexMatrix,
    /// Diagonal scaling gains `1 / l_kk`.
    pub g: Vec<f64>,
    /// `K×K` unit-diagonal feedback matrix.
    pub b: ComplexMatrix,
    /// `Nt×K` composite private precoding columns (before `β`).
    pub w_priv: ComplexMatrix,
    beta: Option<f64>,
}

impl ThpFilterSet {
    pub fn users(&self) -> usize {
        self.l.rows()
    }

    pub fn antennas(&self) -> usize {
        self.f.rows()
    }

    /// `l_kk` (real, positive).
    pub fn l_diag(&self, k: usize) -> f64 {
        self.l[(k, k)].re
    }

    pub fn beta(&self) -> Result<f64> {
        self.beta.ok_or(Error::BetaUnset)
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    pub fn set_beta(&mut self, beta: f64) {
        self.beta = Some(beta);
    }

    /// `Σ_k 1 / l_kk²`.
    pub fn inverse_gain_energy(&self) -> f64 {
        self.g.iter().map(|g| g * g).sum()
    }
}

/// Builds the THP filters for `h_est` (`K×Nt`, rows already in branch order).
/// The power scaling factor is left unset; see [`compute_beta`].
pub fn build_thp_filters(h_est: &ComplexMatrix, scheme: ThpScheme) -> Result<ThpFilterSet> {
    let lq = lq_decompose(h_est)?;
    let k = h_est.rows();
    let f = lq.q.hermitian();
    let l = lq.l;
    let l_diag: Vec<f64> = (0..k).map(|i| l[(i, i)].re).collect();
    let g: Vec<f64> = l_diag.iter().map(|d| 1.0 / d).collect();

    let mut b = match scheme {
        ThpScheme::Decentralized => l.scale_rows(&g),
        ThpScheme::Centralized => l.scale_cols(&g),
    };
    for i in 0..k {
        b[(i, i)] = C64::new(1.0, 0.0);
    }

    let f_linv = f.matmul(&invert_lower(&l)?)?;
    let w_priv = match scheme {
        ThpScheme::Decentralized => f_linv.scale_cols(&l_diag),
        ThpScheme::Centralized => f_linv,
    };

    Ok(ThpFilterSet {
        scheme,
        f,
        l,
        g,
        b,
        w_priv,
        beta: None,
    })
}

/// Power scaling factor that leaves `Etr − ‖p_c‖²` for the private streams.
///
/// Decentralized: `sqrt((Etr − ‖p_c‖²) / K)`.
/// Centralized: `sqrt((Etr − ‖p_c‖²) / Σ_k l_kk⁻²)`.
pub fn compute_beta(filters: &ThpFilterSet, etr: f64, pc_norm2: f64) -> Result<f64> {
    let private = etr - pc_norm2;
    if !(private > 0.0) {
        return Err(Error::NoPrivatePower { etr, pc_norm2 });
    }
    let denom = match filters.scheme {
        ThpScheme::Decentralized => filters.users() as f64,
        ThpScheme::Centralized => filters.inverse_gain_energy(),
    };
    Ok((private / denom).sqrt())
}

/// Modulo lattice base `λ` per real dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuloParams {
    pub lambda: f64,
}

impl ModuloParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config("lambda", "must be finite and > 0"));
        }
        Ok(Self { lambda })
    }

    /// Unit-variance QPSK: `λ = 2√2`.
    pub fn qpsk() -> Self {
        Self {
            lambda: 2.0 * std::f64::consts::SQRT_2,
        }
    }

    /// Unit-variance 16-QAM: `λ = 8/√10`.
    pub fn qam16() -> Self {
        Self {
            lambda: 8.0 / 10f64.sqrt(),
        }
    }
}

/// `z − ⌊Re z/λ + ½⌋λ − j⌊Im z/λ + ½⌋λ`; both parts land in `[−λ/2, λ/2)`.
pub fn modulo_reduce(z: C64, params: ModuloParams) -> C64 {
    z + lattice_offset(z, params)
}

/// The lattice point added by [`modulo_reduce`].
fn lattice_offset(z: C64, params: ModuloParams) -> C64 {
    let lam = params.lambda;
    C64::new(
        -(z.re / lam + 0.5).floor() * lam,
        -(z.im / lam + 0.5).floor() * lam,
    )
}

/// Successive THP encoding with modulo reduction.
///
/// Returns `(v, d)` with `v_i = M(s_i − Σ_{j<i} b_ij·v_j)` and `d` the lattice
/// perturbation, so that `B·v = s + d`.
pub fn thp_encode(s: &[C64], b: &ComplexMatrix, params: ModuloParams) -> (Vec<C64>, Vec<C64>) {
    let k = s.len();
    debug_assert_eq!(b.shape(), (k, k));
    let mut v = Vec::with_capacity(k);
    let mut d = Vec::with_capacity(k);
    for i in 0..k {
        let fb: C64 = (0..i).map(|j| b[(i, j)] * v[j]).sum();
        let z = s[i] - fb;
        let off = lattice_offset(z, params);
        v.push(z + off);
        d.push(off);
    }
    (v, d)
}

/// `x = p_c·s_c + β·F·v` (decentralized) or `x = p_c·s_c + β·F·diag(g)·v`
/// (centralized).
pub fn build_transmit_vector(filters: &ThpFilterSet, v: &[C64], s_c: C64, p_c: &[C64]) -> Result<Vec<C64>> {
    let beta = filters.beta()?;
    let nt = filters.antennas();
    if v.len() != filters.users() || p_c.len() != nt {
        return Err(Error::ShapeMismatch {
            expected: (filters.users(), nt),
            got: (v.len(), p_c.len()),
        });
    }
    let scaled: Vec<C64> = match filters.scheme {
        ThpScheme::Decentralized => v.to_vec(),
        ThpScheme::Centralized => v.iter().zip(&filters.g).map(|(z, g)| z * g).collect(),
    };
    let fv = filters.f.mul_vec(&scaled)?;
    Ok(fv
        .iter()
        .zip(p_c)
        .map(|(x, p)| x * beta + p * s_c)
        .collect())
}
