//! Composite profiles of a binary: Keplerian radial velocities, Doppler
//! shifting of the two single-star profiles, and light-ratio/eclipse
//! weighting.
//!
//! Phase zero is a conjunction. For a circular orbit the primary's radial
//! velocity is `γ + K1 sin 2πφ` and the secondary's `γ − K2 sin 2πφ`.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::quad::interp_linear;
use crate::sei::{synthesize, GridConfig, SingleStarProfile, SPEED_OF_LIGHT_KMS};
use crate::wind::{DoubletSpec, WindLawParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitalSolution {
    pub period_days: f64,
    /// Epoch of phase zero (HJD).
    pub t0: f64,
    pub eccentricity: f64,
    /// Argument of periastron of the primary, degrees.
    pub omega_deg: f64,
    pub k1_kms: f64,
    pub k2_kms: f64,
    pub gamma_kms: f64,
    /// Fractional UV continuum light of each star; `l1 + l2 = 1`.
    pub l1: f64,
    pub l2: f64,
}

impl OrbitalSolution {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.period_days > 0.0 && self.period_days.is_finite()) {
            bad.push("period_days");
        }
        if !(0.0..1.0).contains(&self.eccentricity) {
            bad.push("eccentricity");
        }
        if !(self.k1_kms >= 0.0) {
            bad.push("k1_kms");
        }
        if !(self.k2_kms >= 0.0) {
            bad.push("k2_kms");
        }
        if !(self.t0.is_finite() && self.omega_deg.is_finite() && self.gamma_kms.is_finite()) {
            bad.extend(["t0", "omega_deg", "gamma_kms"]);
        }
        if !bad.is_empty() {
            return Err(ModelError::invalid(&bad, "orbital elements out of range"));
        }
        if !(self.l1 > 0.0 && self.l2 > 0.0) || (self.l1 + self.l2 - 1.0).abs() > 1e-9 {
            return Err(ModelError::invalid(
                &["l1", "l2"],
                format!("light ratio must be positive and sum to 1 (l1={}, l2={})", self.l1, self.l2),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Star {
    #[serde(rename = "1", alias = "primary")]
    Primary,
    #[serde(rename = "2", alias = "secondary")]
    Secondary,
}

/// Eccentric anomaly for mean anomaly `mean_anomaly`: safeguarded Newton
/// iteration on `E − e sin E = M`.
pub fn solve_kepler(mean_anomaly: f64, e: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&e) {
        return Err(ModelError::Domain(format!("eccentricity {e} outside [0, 1)")));
    }
    if e == 0.0 {
        return Ok(mean_anomaly);
    }
    let m = mean_anomaly;
    // |E − M| ≤ e bounds the root.
    let (mut lo, mut hi) = (m - e, m + e);
    let mut ecc = if e > 0.8 { m + e * m.sin().signum() * 0.85 } else { m };
    ecc = ecc.clamp(lo, hi);
    for _ in 0..60 {
        let f = ecc - e * ecc.sin() - m;
        if f.abs() <= 1e-14 * m.abs().max(1.0) {
            return Ok(ecc);
        }
        if f > 0.0 {
            hi = ecc;
        } else {
            lo = ecc;
        }
        let df = 1.0 - e * ecc.cos();
        let mut next = ecc - f / df;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == ecc {
            return Ok(ecc);
        }
        ecc = next;
    }
    Err(ModelError::Numeric(format!("Kepler iteration did not converge for M={m}, e={e}")))
}

fn true_from_eccentric(ecc: f64, e: f64) -> f64 {
    2.0 * ((1.0 + e).sqrt() * (0.5 * ecc).sin()).atan2((1.0 - e).sqrt() * (0.5 * ecc).cos())
}

fn eccentric_from_true(nu: f64, e: f64) -> f64 {
    2.0 * ((1.0 - e).sqrt() * (0.5 * nu).sin()).atan2((1.0 + e).sqrt() * (0.5 * nu).cos())
}

/// Radial velocity (km/s) of `star` at orbital phase `phase`.
pub fn radial_velocity(phase: f64, star: Star, orbit: &OrbitalSolution) -> Result<f64> {
    let e = orbit.eccentricity;
    let omega = orbit.omega_deg.to_radians();
    // Conjunction sits where ν + ω = 3π/2.
    let nu_conj = 1.5 * PI - omega;
    let e_conj = eccentric_from_true(nu_conj, e);
    let m_conj = e_conj - e * e_conj.sin();
    let m = m_conj + 2.0 * PI * phase.rem_euclid(1.0);
    let nu = true_from_eccentric(solve_kepler(m, e)?, e);
    let (k, om) = match star {
        Star::Primary => (orbit.k1_kms, omega),
        Star::Secondary => (orbit.k2_kms, omega + PI),
    };
    Ok(orbit.gamma_kms + k * ((nu + om).cos() + e * om.cos()))
}

/// Doppler-shifts a tabulated profile by `rv` km/s and resamples it onto the
/// original wavelength grid. Samples that shift in from outside the table
/// take the value `fill`.
pub fn doppler_shift(wavelengths: &[f64], flux: &[f64], rv: f64, fill: f64) -> Result<Vec<f64>> {
    if wavelengths.len() != flux.len() {
        return Err(ModelError::Contract("wavelength and flux lengths differ".into()));
    }
    if !wavelengths.windows(2).all(|w| w[0] < w[1]) {
        return Err(ModelError::Contract("wavelength grid must be strictly increasing".into()));
    }
    let s = 1.0 + rv / SPEED_OF_LIGHT_KMS;
    Ok(wavelengths.iter().map(|&l| interp_linear(wavelengths, flux, l / s, fill)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EclipseKind {
    #[default]
    None,
    #[serde(alias = "primary")]
    PrimaryEclipsed,
    #[serde(alias = "secondary")]
    SecondaryEclipsed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EclipseState {
    #[serde(default)]
    pub kind: EclipseKind,
    /// Normalized continuum flux at this phase.
    #[serde(default = "unit")]
    pub lc: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for EclipseState {
    fn default() -> Self {
        EclipseState { kind: EclipseKind::None, lc: 1.0 }
    }
}

impl EclipseState {
    pub fn validate(&self) -> Result<()> {
        if !(self.lc > 0.0 && self.lc <= 1.0 + 1e-6) {
            return Err(ModelError::invalid(&["lc"], format!("LC must lie in (0, 1], got {}", self.lc)));
        }
        Ok(())
    }
}

/// Which light fraction is subtracted from LC when a star is eclipsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    /// Eclipsed star gets `LC − L_other`, so the continuum equals LC.
    #[default]
    ContinuumPreserving,
    /// Eclipsed star gets `LC − L_self`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EclipseWeights {
    pub w1: f64,
    pub w2: f64,
    /// A weight came out negative and was clipped to zero.
    pub clipped: bool,
}

/// Weights of the two disk (`p < 1`) contributions at a phase.
pub fn eclipse_weights(state: &EclipseState, orbit: &OrbitalSolution, rule: WeightRule) -> Result<EclipseWeights> {
    state.validate()?;
    let (l1, l2, lc) = (orbit.l1, orbit.l2, state.lc);
    let (w1, w2) = match (state.kind, rule) {
        (EclipseKind::None, _) => (l1, l2),
        (EclipseKind::PrimaryEclipsed, WeightRule::ContinuumPreserving) => (lc - l2, l2),
        (EclipseKind::PrimaryEclipsed, WeightRule::Literal) => (lc - l1, l2),
        (EclipseKind::SecondaryEclipsed, WeightRule::ContinuumPreserving) => (l1, lc - l1),
        (EclipseKind::SecondaryEclipsed, WeightRule::Literal) => (l1, lc - l2),
    };
    let clipped = w1 < 0.0 || w2 < 0.0;
    Ok(EclipseWeights { w1: w1.max(0.0), w2: w2.max(0.0), clipped })
}

/// Phase-stamped composite profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BseiProfile {
    pub phase: f64,
    pub wavelength_grid: Vec<f64>,
    pub flux: Vec<f64>,
    pub weights_used: (f64, f64),
    pub rv_used: (f64, f64),
    pub eclipse: EclipseState,
    pub clipped: bool,
}

/// Uniform wavelength grid spanning both stars' profiles at the finer of the
/// two spacings.
pub fn common_wavelength_grid(f1: &SingleStarProfile, f2: &SingleStarProfile) -> Vec<f64> {
    let a = f1.wavelengths();
    let b = f2.wavelengths();
    let step = |v: &[f64]| (v[v.len() - 1] - v[0]) / (v.len() - 1).max(1) as f64;
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    let h = step(&a).min(step(&b));
    let n = ((hi - lo) / h).round() as usize + 1;
    (0..n).map(|i| lo + i as f64 * h).collect()
}

/// Samples one star's weighted profile, shifted by `rv`, at `wavelengths`.
fn shifted_component<'a>(
    f: &'a SingleStarProfile,
    wavelengths: &'a [f64],
    rv: f64,
    w_core: f64,
    w_halo: f64,
) -> impl Iterator<Item = f64> + 'a {
    let s = 1.0 + rv / SPEED_OF_LIGHT_KMS;
    let xs = &f.grid.x_values;
    let v_inf = f.params.v_inf;
    let grid = &f.grid;
    let core = &f.f_core;
    let halo = &f.f_halo;
    wavelengths.iter().map(move |&l| {
        let x = grid.x_of(l / s, v_inf);
        w_core * interp_linear(xs, core, x, 1.0) + w_halo * interp_linear(xs, halo, x, 0.0)
    })
}

/// Composite profile at one phase on `wavelengths`.
///
/// Disk contributions carry the eclipse weights; halo contributions always
/// carry the intrinsic light fractions.
pub fn amalgamate(
    f1: &SingleStarProfile,
    f2: &SingleStarProfile,
    phase: f64,
    orbit: &OrbitalSolution,
    state: &EclipseState,
    wavelengths: &[f64],
    rule: WeightRule,
) -> Result<BseiProfile> {
    orbit.validate()?;
    if (f1.doublet.lambda_blue - f2.doublet.lambda_blue).abs() > 1e-9
        || (f1.doublet.lambda_red - f2.doublet.lambda_red).abs() > 1e-9
    {
        return Err(ModelError::Contract("the two profiles belong to different doublets".into()));
    }
    if wavelengths.is_empty() || !wavelengths.windows(2).all(|w| w[0] < w[1]) {
        return Err(ModelError::Contract("wavelength grid must be non-empty and strictly increasing".into()));
    }
    let weights = eclipse_weights(state, orbit, rule)?;
    let rv1 = radial_velocity(phase, Star::Primary, orbit)?;
    let rv2 = radial_velocity(phase, Star::Secondary, orbit)?;
    let flux = shifted_component(f1, wavelengths, rv1, weights.w1, orbit.l1)
        .zip(shifted_component(f2, wavelengths, rv2, weights.w2, orbit.l2))
        .map(|(a, b)| a + b)
        .collect();
    Ok(BseiProfile {
        phase: phase.rem_euclid(1.0),
        wavelength_grid: wavelengths.to_vec(),
        flux,
        weights_used: (weights.w1, weights.w2),
        rv_used: (rv1, rv2),
        eclipse: *state,
        clipped: weights.clipped,
    })
}

/// A requested phase and its eclipse condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhasePoint {
    pub phase: f64,
    #[serde(default)]
    pub eclipse: EclipseState,
}

impl PhasePoint {
    pub fn clear(phase: f64) -> Self {
        PhasePoint { phase, eclipse: EclipseState::default() }
    }
}

/// Composite profiles for already-synthesized single-star profiles.
pub fn sequence_from_profiles(
    f1: &SingleStarProfile,
    f2: &SingleStarProfile,
    orbit: &OrbitalSolution,
    phases: &[PhasePoint],
    wavelengths: &[f64],
    rule: WeightRule,
) -> Result<Vec<BseiProfile>> {
    phases.par_iter().map(|pt| amalgamate(f1, f2, pt.phase, orbit, &pt.eclipse, wavelengths, rule)).collect()
}

/// Full phase sequence: the two single-star profiles are synthesized once
/// and only shifting and weighting vary with phase.
pub fn phase_sequence(
    params1: &WindLawParams,
    params2: &WindLawParams,
    doublet: &DoubletSpec,
    orbit: &OrbitalSolution,
    phases: &[PhasePoint],
    config: &GridConfig,
    rule: WeightRule,
) -> Result<Vec<BseiProfile>> {
    orbit.validate()?;
    if !phases.windows(2).all(|w| w[0].phase <= w[1].phase) {
        return Err(ModelError::Contract("phases must be sorted".into()));
    }
    let f1 = synthesize(params1, doublet, config)?;
    let f2 = if params2 == params1 { f1.clone() } else { synthesize(params2, doublet, config)? };
    let grid = common_wavelength_grid(&f1, &f2);
    sequence_from_profiles(&f1, &f2, orbit, phases, &grid, rule)
}

/// File name of one phase's profile.
pub fn phase_file_name(phase: f64) -> String {
    format!("bsei_phi{:.4}.dat", phase)
}

impl BseiProfile {
    /// Two columns, `wavelength flux`, under a JSON header line.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "phase": self.phase,
            "weights": [self.weights_used.0, self.weights_used.1],
            "rv_kms": [self.rv_used.0, self.rv_used.1],
            "eclipse": self.eclipse,
            "clipped": self.clipped,
            "n": self.flux.len(),
            "columns": ["wavelength_A", "flux"],
        });
        writeln!(out, "# {header}")?;
        for (l, f) in self.wavelength_grid.iter().zip(&self.flux) {
            writeln!(out, "{l:e} {f:e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub phase: f64,
    pub file: String,
    pub weights: (f64, f64),
    pub rv_kms: (f64, f64),
    pub eclipse: EclipseState,
    pub clipped: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub orbit: OrbitalSolution,
    pub entries: Vec<ManifestEntry>,
}

impl SequenceManifest {
    pub fn new(orbit: &OrbitalSolution, profiles: &[BseiProfile]) -> Self {
        let entries = profiles
            .iter()
            .map(|p| ManifestEntry {
                phase: p.phase,
                file: phase_file_name(p.phase),
                weights: p.weights_used,
                rv_kms: p.rv_used,
                eclipse: p.eclipse,
                clipped: p.clipped,
            })
            .collect();
        SequenceManifest { orbit: orbit.clone(), entries }
    }
}

/// Writes one file per phase plus `manifest.json` into `dir`.
pub fn export_sequence(dir: &Path, orbit: &OrbitalSolution, profiles: &[BseiProfile]) -> Result<SequenceManifest> {
    std::fs::create_dir_all(dir)?;
    for p in profiles {
        let file = std::fs::File::create(dir.join(phase_file_name(p.phase)))?;
        let mut out = std::io::BufWriter::new(file);
        p.write_table(&mut out)?;
        out.flush()?;
    }
    let manifest = SequenceManifest::new(orbit, profiles);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn circular() -> OrbitalSolution {
        OrbitalSolution { gamma_kms: -12.0, ..presets::placeholder_orbit() }
    }

    fn bisect_kepler(m: f64, e: f64) -> f64 {
        let (mut lo, mut hi) = (m - e - 1e-3, m + e + 1e-3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - e * mid.sin() - m > 0.0 {
                hi = mid
            } else {
                lo = mid
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn kepler_examples() {
        assert_eq!(solve_kepler(1.234, 0.0).unwrap(), 1.234);
        for e in [0.1, 0.5, 0.95] {
            assert!((solve_kepler(PI, e).unwrap() - PI).abs() < 1e-15);
        }
        let ecc = solve_kepler(PI / 2.0, 0.5).unwrap();
        let oracle = bisect_kepler(PI / 2.0, 0.5);
        assert!((ecc - oracle).abs() < 1e-10);
        assert!((ecc - 2.02098).abs() < 1e-5, "{ecc}");
        assert!(solve_kepler(1.0, 1.0).is_err());
    }

    #[test]
    fn kepler_residual_over_grid() {
        for e in [0.0, 0.3, 0.9, 0.99] {
            for i in 0..100 {
                let m = -7.0 + 14.0 * i as f64 / 99.0;
                let ecc = solve_kepler(m, e).unwrap();
                assert!((ecc - e * ecc.sin() - m).abs() <= 1e-12, "e={e} m={m}");
            }
        }
    }

    #[test]
    fn circular_rv_identities() {
        let o = circular();
        let g = o.gamma_kms;
        assert!((radial_velocity(0.0, Star::Primary, &o).unwrap() - g).abs() < 1e-9);
        assert!((radial_velocity(0.5, Star::Secondary, &o).unwrap() - g).abs() < 1e-9);
        assert!((radial_velocity(0.25, Star::Primary, &o).unwrap() - (g + o.k1_kms)).abs() < 1e-9);
        assert!((radial_velocity(0.75, Star::Secondary, &o).unwrap() - (g + o.k2_kms)).abs() < 1e-9);
        for i in 1..40 {
            let ph = i as f64 / 40.0 + 0.003;
            let a = radial_velocity(ph, Star::Primary, &o).unwrap() - g;
            let b = radial_velocity(ph, Star::Secondary, &o).unwrap() - g;
            assert!((a / b + o.k1_kms / o.k2_kms).abs() < 1e-9);
            assert!(a * b < 0.0);
        }
    }

    #[test]
    fn eccentric_rv_integrates_to_gamma() {
        // Mean radial velocity over a full orbit equals γ for any e, ω.
        let o = OrbitalSolution { eccentricity: 0.6, omega_deg: 37.0, ..circular() };
        let n = 20_000;
        let mean: f64 =
            (0..n).map(|i| radial_velocity(i as f64 / n as f64, Star::Primary, &o).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - o.gamma_kms).abs() < 1e-6, "{mean}");
    }

    #[test]
    fn doppler_examples() {
        let wl: Vec<f64> = (0..2001).map(|i| 1540.0 + 0.01 * i as f64).collect();
        let flux: Vec<f64> = wl.iter().map(|l| 1.0 - 0.5 * (-((l - 1550.0) / 0.3f64).powi(2)).exp()).collect();
        assert_eq!(doppler_shift(&wl, &flux, 0.0, 1.0).unwrap(), flux);
        let shifted = doppler_shift(&wl, &flux, 300.0, 1.0).unwrap();
        let imin = (0..wl.len()).min_by(|&a, &b| shifted[a].total_cmp(&shifted[b])).unwrap();
        assert!((wl[imin] - 1551.551).abs() <= 0.01, "{}", wl[imin]);
    }

    #[test]
    fn doppler_round_trip() {
        let wl: Vec<f64> = (0..801).map(|i| 1530.0 + 0.05 * i as f64).collect();
        let flux: Vec<f64> = wl
            .iter()
            .map(|l| {
                1.0 - 0.6 * (-((l - 1548.0) / 1.5f64).powi(2)).exp() + 0.3 * (-((l - 1552.0) / 1.2f64).powi(2)).exp()
            })
            .collect();
        let there = doppler_shift(&wl, &flux, 250.0, 1.0).unwrap();
        let back = doppler_shift(&wl, &there, -250.0, 1.0).unwrap();
        let err = flux.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn weights_examples() {
        let o = circular();
        let r = WeightRule::ContinuumPreserving;
        let w = eclipse_weights(&EclipseState::default(), &o, r).unwrap();
        assert_eq!((w.w1, w.w2), (0.6, 0.4));
        let st = EclipseState { kind: EclipseKind::PrimaryEclipsed, lc: 0.85 };
        let w = eclipse_weights(&st, &o, r).unwrap();
        assert!((w.w1 - 0.45).abs() < 1e-15 && w.w2 == 0.4);
        let st = EclipseState { kind: EclipseKind::PrimaryEclipsed, lc: 1.0 };
        let w = eclipse_weights(&st, &o, r).unwrap();
        assert!((w.w1 - 0.6).abs() < 1e-15 && w.w2 == 0.4);
        let st = EclipseState { kind: EclipseKind::SecondaryEclipsed, lc: 0.9 };
        let w = eclipse_weights(&st, &o, r).unwrap();
        assert!((w.w1 - 0.6).abs() < 1e-15 && (w.w2 - 0.3).abs() < 1e-15);
        // The literal rule keeps its own subtrahend.
        let st = EclipseState { kind: EclipseKind::PrimaryEclipsed, lc: 0.85 };
        let w = eclipse_weights(&st, &o, WeightRule::Literal).unwrap();
        assert!((w.w1 - 0.25).abs() < 1e-15);
    }

    #[test]
    fn weights_clip_and_flag() {
        let o = circular();
        let st = EclipseState { kind: EclipseKind::PrimaryEclipsed, lc: 0.3 };
        let w = eclipse_weights(&st, &o, WeightRule::ContinuumPreserving).unwrap();
        assert_eq!(w.w1, 0.0);
        assert!(w.clipped);
        let bad = EclipseState { kind: EclipseKind::None, lc: 0.0 };
        assert!(eclipse_weights(&bad, &o, WeightRule::ContinuumPreserving).is_err());
    }

    #[test]
    fn weights_continuous_toward_full_light() {
        let o = circular();
        for kind in [EclipseKind::PrimaryEclipsed, EclipseKind::SecondaryEclipsed] {
            let mut prev = f64::INFINITY;
            for k in 1..12 {
                let lc = 1.0 - 10f64.powi(-k);
                let w = eclipse_weights(&EclipseState { kind, lc }, &o, WeightRule::ContinuumPreserving).unwrap();
                let d = (w.w1 - o.l1).abs() + (w.w2 - o.l2).abs();
                assert!(d <= prev + 1e-15);
                prev = d;
            }
            assert!(prev < 1e-10);
        }
    }

    #[test]
    fn orbit_validation() {
        let mut o = circular();
        o.l1 = 0.7;
        assert!(matches!(o.validate(), Err(ModelError::InvalidParams { .. })));
        let mut o = circular();
        o.eccentricity = 1.0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn file_names() {
        assert_eq!(phase_file_name(0.25), "bsei_phi0.2500.dat");
        assert_eq!(phase_file_name(0.0), "bsei_phi0.0000.dat");
    }
}
