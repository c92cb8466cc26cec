//! Line-oriented `key=value` scenario configuration.
//!
//! `#` starts a comment, lists are comma-separated, omitted keys take the
//! defaults of the reference experiment (8×8, four branches, unit noise,
//! 100 estimates × 100 error draws).

use std::fmt::Write as _;
use std::str::FromStr;

use crate::channel::ErrorModel;
use crate::error::{Error, Result};
use crate::rsrates::validate_delta;
use crate::thp::ThpScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    /// Exhaustive search over branches and power splits per estimate.
    Es,
    /// Per-estimate branch search at a calibrated fixed power split.
    Fpa,
    /// Branch and power split fixed at initialization.
    Fb,
    /// Identity ordering only.
    None,
}

impl Criterion {
    pub fn label(self) -> &'static str {
        match self {
            Criterion::Es => "es",
            Criterion::Fpa => "fpa",
            Criterion::Fb => "fb",
            Criterion::None => "none",
        }
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "es" => Ok(Criterion::Es),
            "fpa" => Ok(Criterion::Fpa),
            "fb" => Ok(Criterion::Fb),
            "none" => Ok(Criterion::None),
            other => Err(Error::config("criterion", format!("unknown criterion `{other}` (es, fpa, fb, none)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    Scaling,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub k: usize,
    pub nt: usize,
    pub scheme: ThpScheme,
    pub criterion: Criterion,
    pub rs_enabled: bool,
    pub l_branches: usize,
    pub snr_db: Vec<f64>,
    pub sigma_n2: f64,
    pub error_mode: ErrorMode,
    pub error_a: f64,
    pub error_alpha: f64,
    /// Error power used in fixed mode.
    pub sigma_e2: f64,
    pub delta_grid: Vec<f64>,
    pub n_estimates: usize,
    pub n_err: usize,
    pub n_cal: usize,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k: 8,
            nt: 8,
            scheme: ThpScheme::Decentralized,
            criterion: Criterion::Es,
            rs_enabled: true,
            l_branches: 4,
            snr_db: vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            sigma_n2: 1.0,
            error_mode: ErrorMode::Scaling,
            error_a: 0.95,
            error_alpha: 0.6,
            sigma_e2: 0.0,
            delta_grid: (0..20).map(|i| i as f64 * 0.05).collect(),
            n_estimates: 100,
            n_err: 100,
            n_cal: 20,
            master_seed: 1,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{}`", value.trim())))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_num(key, v)).collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "on" | "yes" => Ok(true),
        "0" | "false" | "off" | "no" => Ok(false),
        other => Err(Error::config(key, format!("expected a boolean, got `{other}`"))),
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ScenarioConfig {
    /// Applies one `key=value` assignment (no validation across keys).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "K" => self.k = parse_num(key, value)?,
            "Nt" => self.nt = parse_num(key, value)?,
            "scheme" => self.scheme = value.parse()?,
            "criterion" => self.criterion = value.parse()?,
            "rs" => self.rs_enabled = parse_bool(key, value)?,
            "L" => self.l_branches = parse_num(key, value)?,
            "snr_db" => self.snr_db = parse_list(key, value)?,
            "sigma_n2" => self.sigma_n2 = parse_num(key, value)?,
            "error_mode" => {
                self.error_mode = match value.trim().to_ascii_lowercase().as_str() {
                    "scaling" => ErrorMode::Scaling,
                    "fixed" => ErrorMode::Fixed,
                    other => return Err(Error::config(key, format!("unknown mode `{other}` (scaling, fixed)"))),
                }
            }
            "error_a" => self.error_a = parse_num(key, value)?,
            "error_alpha" => self.error_alpha = parse_num(key, value)?,
            "sigma_e2" => self.sigma_e2 = parse_num(key, value)?,
            "delta_grid" => self.delta_grid = parse_list(key, value)?,
            "n_estimates" => self.n_estimates = parse_num(key, value)?,
            "n_err" => self.n_err = parse_num(key, value)?,
            "n_cal" => self.n_cal = parse_num(key, value)?,
            "seed" => self.master_seed = parse_num(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Applies a `key=value` override string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment.trim(), "expected key=value"))?;
        self.set(k, v)
    }

    pub fn error_model(&self) -> ErrorModel {
        match self.error_mode {
            ErrorMode::Scaling => ErrorModel::Scaling {
                a: self.error_a,
                alpha: self.error_alpha,
            },
            ErrorMode::Fixed => ErrorModel::Fixed { sigma_e2: self.sigma_e2 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config("K", format!("need K >= 2, got {}", self.k)));
        }
        if self.nt < self.k {
            return Err(Error::config("Nt", format!("need Nt >= K = {}, got {}", self.k, self.nt)));
        }
        if self.l_branches == 0 || self.l_branches > self.k {
            return Err(Error::config("L", format!("need 1 <= L <= K = {}, got {}", self.k, self.l_branches)));
        }
        if self.snr_db.is_empty() {
            return Err(Error::config("snr_db", "list must not be empty"));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_db", "values must be finite"));
        }
        if !(self.sigma_n2 > 0.0 && self.sigma_n2.is_finite()) {
            return Err(Error::config("sigma_n2", "must be finite and > 0"));
        }
        ErrorModel::Scaling {
            a: self.error_a,
            alpha: self.error_alpha,
        }
        .validate()?;
        ErrorModel::Fixed { sigma_e2: self.sigma_e2 }.validate()?;
        if self.delta_grid.is_empty() {
            return Err(Error::config("delta_grid", "list must not be empty"));
        }
        for &d in &self.delta_grid {
            validate_delta(d)?;
        }
        for (key, v) in [("n_estimates", self.n_estimates), ("n_err", self.n_err), ("n_cal", self.n_cal)] {
            if v == 0 {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        Ok(())
    }

    /// Serializes every key, in a form [`parse_config`] reads back identically.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mode = match self.error_mode {
            ErrorMode::Scaling => "scaling",
            ErrorMode::Fixed => "fixed",
        };
        let _ = writeln!(s, "K={}", self.k);
        let _ = writeln!(s, "Nt={}", self.nt);
        let _ = writeln!(s, "scheme={}", self.scheme);
        let _ = writeln!(s, "criterion={}", self.criterion.label());
        let _ = writeln!(s, "rs={}", self.rs_enabled);
        let _ = writeln!(s, "L={}", self.l_branches);
        let _ = writeln!(s, "snr_db={}", join(&self.snr_db));
        let _ = writeln!(s, "sigma_n2={}", self.sigma_n2);
        let _ = writeln!(s, "error_mode={mode}");
        let _ = writeln!(s, "error_a={}", self.error_a);
        let _ = writeln!(s, "error_alpha={}", self.error_alpha);
        let _ = writeln!(s, "sigma_e2={}", self.sigma_e2);
        let _ = writeln!(s, "delta_grid={}", join(&self.delta_grid));
        let _ = writeln!(s, "n_estimates={}", self.n_estimates);
        let _ = writeln!(s, "n_err={}", self.n_err);
        let _ = writeln!(s, "n_cal={}", self.n_cal);
        let _ = writeln!(s, "seed={}", self.master_seed);
        s
    }
}

/// Parses and validates a configuration file's text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("line {}: expected key=value", lineno + 1)))?;
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::ConfigInvalid { key, .. } => key,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_reference_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!((c.k, c.nt, c.l_branches), (8, 8, 4));
        assert_eq!(c.sigma_n2, 1.0);
        assert_eq!((c.n_estimates, c.n_err), (100, 100));
        assert_eq!(c.delta_grid.len(), 20);
        assert_eq!(c.error_model(), ErrorModel::Scaling { a: 0.95, alpha: 0.6 });
    }

    #[test]
    fn antenna_constraint_is_enforced() {
        assert_eq!(key_of(parse_config("K=4\nNt=2").unwrap_err()), "Nt");
        assert_eq!(key_of(parse_config("K=1\nNt=2").unwrap_err()), "K");
        assert_eq!(key_of(parse_config("K=4\nNt=4\nL=5").unwrap_err()), "L");
    }

    #[test]
    fn comments_lists_and_bad_values() {
        let c = parse_config("# header\nK = 4 # users\nNt=6\nsnr_db=5, 10,20\nrs=off\nscheme=cthp\ncriterion=FPA\n").unwrap();
        assert_eq!((c.k, c.nt), (4, 6));
        assert_eq!(c.snr_db, vec![5.0, 10.0, 20.0]);
        assert!(!c.rs_enabled);
        assert_eq!(c.scheme, ThpScheme::Centralized);
        assert_eq!(c.criterion, Criterion::Fpa);

        assert_eq!(key_of(parse_config("snr_db=").unwrap_err()), "snr_db");
        assert_eq!(key_of(parse_config("bogus=1").unwrap_err()), "bogus");
        assert_eq!(key_of(parse_config("K=four").unwrap_err()), "K");
        assert_eq!(key_of(parse_config("delta_grid=0,1.0").unwrap_err()), "delta_grid");
        assert_eq!(key_of(parse_config("n_err=0").unwrap_err()), "n_err");
        assert_eq!(key_of(parse_config("sigma_e2=-1").unwrap_err()), "sigma_e2");
        assert_eq!(key_of(parse_config("error_mode=odd").unwrap_err()), "error_mode");
        assert!(parse_config("just text").is_err());
    }

    #[test]
    fn overrides() {
        let mut c = ScenarioConfig::default();
        c.apply_override("K=4").unwrap();
        c.apply_override("seed=99").unwrap();
        assert_eq!((c.k, c.master_seed), (4, 99));
        assert!(c.apply_override("K").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn serialize_then_parse_is_identity(
                k in 2usize..8,
                extra in 0usize..4,
                l in 1usize..8,
                snr in proptest::collection::vec(-10.0f64..40.0, 1..6),
                grid in proptest::collection::vec(0.0f64..0.999, 1..6),
                a in 0.01f64..5.0,
                alpha in 0.0f64..2.0,
                sigma_e2 in 0.0f64..1.0,
                fixed in any::<bool>(),
                rs in any::<bool>(),
                seed in any::<u64>(),
            ) {
                let cfg = ScenarioConfig {
                    k,
                    nt: k + extra,
                    scheme: if rs { ThpScheme::Centralized } else { ThpScheme::Decentralized },
                    criterion: Criterion::Fb,
                    rs_enabled: rs,
                    l_branches: l.min(k),
                    snr_db: snr,
                    sigma_n2: 1.5,
                    error_mode: if fixed { ErrorMode::Fixed } else { ErrorMode::Scaling },
                    error_a: a,
                    error_alpha: alpha,
                    sigma_e2,
                    delta_grid: grid,
                    n_estimates: 3,
                    n_err: 4,
                    n_cal: 5,
                    master_seed: seed,
                };
                prop_assert_eq!(parse_config(&cfg.to_config_text()).unwrap(), cfg);
            }
        }
    }
}
