//! Downlink rate-splitting with multi-branch Tomlinson-Harashima precoding.
//!
//! The crate builds centralized and decentralized THP filter sets from an
//! imperfect channel estimate, superimposes a common stream on the THP private
//! streams, evaluates closed-form SINRs and Gaussian-codebook rates, and
//! selects user orderings (branches) and the common-stream power split with
//! the exhaustive, fixed-power and fixed-branch criteria. An independent
//! signal-model oracle checks the closed forms, and the [`expcli`] module
//! drives seeded SNR and CSIT-error sweeps that emit CSV.

pub mod channel;
pub mod error;
pub mod expcli;
pub mod matops;
pub mod multibranch;
pub mod oracle;
pub mod rsrates;
pub mod thp;

pub use error::{Error, Result};
pub use matops::{ComplexMatrix, C64};
