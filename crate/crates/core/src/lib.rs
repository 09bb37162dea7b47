//! Synthetic ultraviolet wind-line profiles for hot stars and hot binaries.
//!
//! * [`wind`]: velocity and optical-depth laws.
//! * [`sobolev`]: escape/penetration probabilities and the source function.
//! * [`sei`]: exact formal solution along impact-parameter rays and the
//!   single-star profile, split into disk (`p < 1`) and halo (`p ≥ 1`) parts.
//! * [`binary`]: Keplerian radial velocities, Doppler shifting and the
//!   eclipse-weighted composite profile of a binary.
//! * [`spectra`]: observed spectra, continuum normalization and light curves.
//! * [`fit`]: goodness-of-fit metrics and a coarse grid refinement.

// `!(a < b)` is used on purpose so NaN fails every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binary;
pub mod error;
pub mod fit;
pub mod format;
pub mod presets;
pub mod quad;
pub mod sei;
pub mod sobolev;
pub mod spectra;
pub mod wind;

pub use error::{ModelError, Result};
pub use sei::{GridConfig, SingleStarProfile};
pub use wind::{Component, DoubletSpec, WindLawParams, WindModel};

/// Fingerprint of the numeric configuration that determines every computed
/// value: default grid, quadrature tolerances and physical constants.
pub fn numeric_fingerprint() -> String {
    use sha2::{Digest, Sha256};
    let g = GridConfig::default();
    let text = format!(
        "grid={}/{}/{}/{}|w_floor={}|norm_tol={}|edge={}|c={}",
        g.core_rays,
        g.halo_rays,
        g.z_samples,
        g.x_step,
        sei::W_FLOOR,
        wind::NORM_REL_TOL,
        wind::WIND_EDGE_SPEED,
        sei::SPEED_OF_LIGHT_KMS
    );
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Short hash of a value's JSON form; identifies the exact inputs behind a
/// computed result.
pub fn fingerprint_of<T: serde::Serialize>(value: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let text = serde_json::to_string(value)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest[..8].iter().map(|b| format!("{b:02x}")).collect())
}
