//! Sobolev escape and penetration probabilities and the resulting
//! pure-scattering source function.

use crate::error::{ModelError, Result};
use crate::quad::gauss_legendre;
use crate::wind::{Component, WindModel};

use std::sync::OnceLock;

/// Gauss-Legendre order used on every angular panel.
const PANEL_ORDER: usize = 20;

/// `(1 − e^{−τ}) / τ`, continuous through `τ = 0`.
#[inline]
pub fn escape_kernel(tau: f64) -> f64 {
    if tau < 1e-8 {
        1.0 - 0.5 * tau
    } else {
        -(-tau).exp_m1() / tau
    }
}

/// Directional Sobolev depth for direction cosine `mu` relative to the radius.
#[inline]
pub fn directional_depth(tau_r: f64, sigma: f64, mu: f64) -> f64 {
    tau_r * (1.0 + sigma) / (1.0 + sigma * mu * mu)
}

fn unit_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER, 0.0, 1.0))
}

/// Panel boundaries on `[0, 1]` for the angular integrals.
///
/// `τ(μ)` has poles at `μ = ±i/√σ` (σ > 0) or `μ = ±1/√(−σ)` (σ < 0). Panels
/// grow geometrically away from the point nearest the pole, so each one sees
/// the singularity at a distance comparable to its own length.
fn panel_breaks(sigma: f64, extra: f64) -> Vec<f64> {
    let mut breaks = vec![0.0, 1.0];
    if sigma > 1.0 {
        let scale = 1.0 / sigma.sqrt();
        let mut b = 0.5 * scale;
        while b < 1.0 {
            breaks.push(b);
            b *= 2.0;
        }
    } else if sigma < -0.5 {
        let gap = 1.0 / (-sigma).sqrt() - 1.0;
        let mut d = gap;
        while d < 1.0 {
            breaks.push(1.0 - d);
            d *= 2.0;
        }
    } else {
        breaks.push(0.5);
    }
    if extra > 0.0 && extra < 1.0 {
        breaks.push(extra);
    }
    breaks.sort_by(|a, b| a.total_cmp(b));
    breaks.dedup();
    breaks
}

/// `∫_0^1 k(τ(μ)) dμ` and `∫_{lo}^1 k(τ(μ)) dμ` from one shared panel set.
fn angular_integrals(tau_r: f64, sigma: f64, lo: f64) -> (f64, f64) {
    let (nodes, weights) = unit_rule();
    let breaks = panel_breaks(sigma, lo);
    let (mut full, mut upper) = (0.0, 0.0);
    for pair in breaks.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let h = b - a;
        let mut part = 0.0;
        for (t, w) in nodes.iter().zip(weights) {
            part += w * escape_kernel(directional_depth(tau_r, sigma, a + h * t));
        }
        part *= h;
        full += part;
        if a >= lo {
            upper += part;
        }
    }
    (full, upper)
}

/// Angle-averaged escape probability for line photons, δ.
pub fn escape_probability(tau_r: f64, sigma: f64) -> f64 {
    // The integrand is even in μ, so ½∫_{-1}^{1} = ∫_0^1.
    angular_integrals(tau_r, sigma, 1.0).0
}

/// Cosine of the half-angle subtended by the stellar disk at radius `r`.
#[inline]
pub fn disk_edge_cosine(r: f64) -> f64 {
    (1.0 - 1.0 / (r * r)).max(0.0).sqrt()
}

/// Penetration probability for continuum photons, δ_c: the same average
/// restricted to directions that intersect the stellar disk.
pub fn penetration_probability(tau_r: f64, sigma: f64, r: f64) -> f64 {
    let mu_star = disk_edge_cosine(r);
    if mu_star >= 1.0 {
        return 0.0;
    }
    0.5 * angular_integrals(tau_r, sigma, mu_star).1
}

/// δ_c / δ for given local conditions.
pub fn source_ratio(tau_r: f64, sigma: f64, r: f64) -> Result<f64> {
    let mu_star = disk_edge_cosine(r);
    let (delta, upper) = angular_integrals(tau_r, sigma, mu_star);
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(ModelError::Numeric(format!("escape probability {delta} at tau_r={tau_r}, sigma={sigma}")));
    }
    if mu_star >= 1.0 {
        return Ok(0.0);
    }
    Ok(0.5 * upper / delta)
}

/// Sobolev source function of `component` at radius `r` for incident
/// photospheric intensity `i_star`, with no thermal term.
pub fn source_function(model: &WindModel, r: f64, component: Component, i_star: f64) -> Result<f64> {
    let w = model.velocity(r)?;
    let tau_r = model.tau_radial(w, component)?;
    let sigma = if r > 1.0 { model.dlnw_dlnr(r)? - 1.0 } else { 0.0 };
    Ok(source_ratio(tau_r, sigma, r)? * i_star)
}
