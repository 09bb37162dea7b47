//! Observed spectra: the CSV interchange format, phase folding, continuum
//! normalization, light-curve extraction and window truncation.
//!
//! Spectrum files look like
//!
//! ```text
//! # id=swp12345 hjd=2448001.2345
//! wavelength_A,flux
//! 1540.000,7.123456
//! ...
//! ```
//!
//! Fluxes and wavelengths are written with 7 significant digits. The HJD is
//! written in full so that phases survive a round trip.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binary::OrbitalSolution;
use crate::error::{ModelError, Result};
use crate::format::fmt_sig7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSpectrum {
    pub id: String,
    pub hjd: f64,
    pub wavelengths: Vec<f64>,
    pub fluxes: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

impl ObservedSpectrum {
    pub fn validate(&self) -> Result<()> {
        if self.wavelengths.len() != self.fluxes.len() {
            return Err(ModelError::Contract(format!(
                "spectrum {}: {} wavelengths but {} fluxes",
                self.id,
                self.wavelengths.len(),
                self.fluxes.len()
            )));
        }
        if let Some(i) = self.wavelengths.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(ModelError::Contract(format!(
                "spectrum {}: wavelengths not strictly increasing at sample {}",
                self.id,
                i + 1
            )));
        }
        if let Some(i) = self.fluxes.iter().position(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(ModelError::Contract(format!("spectrum {}: bad flux at sample {i}", self.id)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        !self.is_empty() && self.wavelengths[0] <= lo && hi <= self.wavelengths[self.len() - 1]
    }

    /// Mean flux of the samples inside `[lo, hi]`.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Result<f64> {
        let (sum, n) = self
            .wavelengths
            .iter()
            .zip(&self.fluxes)
            .filter(|(l, _)| **l >= lo && **l <= hi)
            .fold((0.0, 0usize), |(s, n), (_, f)| (s + f, n + 1));
        if n == 0 {
            return Err(ModelError::Coverage(format!("spectrum {} has no samples in [{lo}, {hi}]", self.id)));
        }
        Ok(sum / n as f64)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# id={} hjd={}", self.id, self.hjd)?;
        writeln!(out, "wavelength_A,flux")?;
        for (l, f) in self.wavelengths.iter().zip(&self.fluxes) {
            writeln!(out, "{},{}", fmt_sig7(*l), fmt_sig7(*f))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("formatter emits ASCII")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_csv(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Parses the CSV spectrum format. Errors carry 1-based line numbers.
pub fn parse_spectrum<R: BufRead>(input: R) -> Result<ObservedSpectrum> {
    let mut lines = input.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => return Err(ModelError::Parse { line: 1, detail: "empty file".into() }),
    };
    let (id, hjd) = parse_header(&header)?;
    let mut wavelengths = Vec::new();
    let mut fluxes = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if t.eq_ignore_ascii_case("wavelength_A,flux") {
            continue;
        }
        let mut parts = t.split(',');
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(ModelError::Parse {
                    line: lineno,
                    detail: format!("expected `wavelength,flux`, got `{t}`"),
                })
            }
        };
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ModelError::Parse { line: lineno, detail: format!("bad {what} `{}`", s.trim()) })
        };
        let l = parse(a, "wavelength")?;
        let f = parse(b, "flux")?;
        if f < 0.0 {
            return Err(ModelError::Parse { line: lineno, detail: format!("negative flux {f}") });
        }
        if let Some(&prev) = wavelengths.last() {
            if !(l > prev) {
                return Err(ModelError::Parse {
                    line: lineno,
                    detail: format!("wavelength {l} does not increase (previous {prev})"),
                });
            }
        }
        wavelengths.push(l);
        fluxes.push(f);
    }
    Ok(ObservedSpectrum { id, hjd, wavelengths, fluxes, phase: None })
}

fn parse_header(line: &str) -> Result<(String, f64)> {
    let err = |d: &str| ModelError::Parse { line: 1, detail: d.to_string() };
    let body = line.trim().strip_prefix('#').ok_or_else(|| err("missing `# id=... hjd=...` header"))?;
    let mut id = None;
    let mut hjd = None;
    for tok in body.split_whitespace() {
        if let Some(v) = tok.strip_prefix("id=") {
            id = Some(v.to_string());
        } else if let Some(v) = tok.strip_prefix("hjd=") {
            hjd = Some(v.parse::<f64>().map_err(|_| err(&format!("bad hjd `{v}`")))?);
        }
    }
    match (id, hjd) {
        (Some(id), Some(hjd)) if !id.is_empty() => Ok((id, hjd)),
        _ => Err(err("header must carry both id= and hjd=")),
    }
}

pub fn load_spectrum(path: &Path) -> Result<ObservedSpectrum> {
    let file = std::fs::File::open(path)?;
    parse_spectrum(std::io::BufReader::new(file))
}

/// Orbital phase in `[0, 1)` of an observation time.
pub fn phase_fold(hjd: f64, orbit: &OrbitalSolution) -> Result<f64> {
    if !(orbit.period_days > 0.0) {
        return Err(ModelError::invalid(&["period_days"], "period must be positive"));
    }
    let phi = ((hjd - orbit.t0) / orbit.period_days).rem_euclid(1.0);
    // rem_euclid can round up to exactly 1 for tiny negative inputs.
    Ok(if phi >= 1.0 { 0.0 } else { phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandKind {
    Continuum,
    Wind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandpass {
    pub label: String,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kind: BandKind,
}

impl Bandpass {
    pub fn new(label: &str, lambda_min: f64, lambda_max: f64, kind: BandKind) -> Result<Self> {
        let b = Bandpass { label: label.to_string(), lambda_min, lambda_max, kind };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_min < self.lambda_max) {
            return Err(ModelError::invalid(&["lambda_min", "lambda_max"], "band needs lambda_min < lambda_max"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightCurvePoint {
    pub phase: f64,
    pub lc: f64,
    pub spectrum_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightCurve {
    pub points: Vec<LightCurvePoint>,
    pub bandpass: Bandpass,
}

impl LightCurve {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "phase,lc,spectrum_id")?;
        for p in &self.points {
            writeln!(out, "{},{},{}", fmt_sig7(p.phase), fmt_sig7(p.lc), p.spectrum_id)?;
        }
        Ok(())
    }
}

/// What the band fluxes are normalized to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LightCurveAnchor {
    /// Mean of the brightest quarter of the raw band fluxes.
    #[default]
    UpperQuartile,
    /// Mean over spectra whose phase falls in one of these `[start, end]`
    /// out-of-eclipse intervals.
    PhaseMask(Vec<(f64, f64)>),
}

/// Band-averaged flux of every spectrum, normalized to the anchor, sorted by phase.
pub fn extract_light_curve(
    spectra: &[ObservedSpectrum],
    band: &Bandpass,
    orbit: &OrbitalSolution,
    anchor: &LightCurveAnchor,
) -> Result<LightCurve> {
    band.validate()?;
    if spectra.is_empty() {
        return Err(ModelError::Contract("no spectra supplied".into()));
    }
    let mut raw = Vec::with_capacity(spectra.len());
    for s in spectra {
        if !s.covers(band.lambda_min, band.lambda_max) {
            return Err(ModelError::Coverage(format!(
                "spectrum {} does not cover band {} [{}, {}]",
                s.id, band.label, band.lambda_min, band.lambda_max
            )));
        }
        let phase = phase_fold(s.hjd, orbit)?;
        raw.push((phase, s.band_mean(band.lambda_min, band.lambda_max)?, s.id.clone()));
    }
    let reference = match anchor {
        LightCurveAnchor::UpperQuartile => {
            let mut v: Vec<f64> = raw.iter().map(|r| r.1).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            let k = v.len().div_ceil(4);
            v[..k].iter().sum::<f64>() / k as f64
        }
        LightCurveAnchor::PhaseMask(ranges) => {
            let sel: Vec<f64> =
                raw.iter().filter(|r| ranges.iter().any(|&(a, b)| r.0 >= a && r.0 <= b)).map(|r| r.1).collect();
            if sel.is_empty() {
                return Err(ModelError::Contract("out-of-eclipse mask selects no spectra".into()));
            }
            sel.iter().sum::<f64>() / sel.len() as f64
        }
    };
    if !(reference > 0.0) {
        return Err(ModelError::Numeric(format!("normalization anchor is {reference}")));
    }
    let mut points: Vec<LightCurvePoint> =
        raw.into_iter().map(|(phase, f, id)| LightCurvePoint { phase, lc: f / reference, spectrum_id: id }).collect();
    if let Some(p) = points.iter().find(|p| !(p.lc > 0.0)) {
        return Err(ModelError::Numeric(format!("non-positive light-curve value for {}", p.spectrum_id)));
    }
    points.sort_by(|a, b| a.phase.total_cmp(&b.phase));
    Ok(LightCurve { points, bandpass: band.clone() })
}

/// Divides the spectrum by a straight line fitted (least squares) through
/// the mean flux of each continuum window, placed at the mean wavelength of
/// the window's samples.
pub fn normalize_spectrum(spec: &ObservedSpectrum, windows: &[Bandpass]) -> Result<ObservedSpectrum> {
    if windows.len() < 2 {
        return Err(ModelError::Contract("continuum normalization needs at least two windows".into()));
    }
    let mut anchors = Vec::with_capacity(windows.len());
    for w in windows {
        w.validate()?;
        let (sl, sf, n) = spec
            .wavelengths
            .iter()
            .zip(&spec.fluxes)
            .filter(|(l, _)| **l >= w.lambda_min && **l <= w.lambda_max)
            .fold((0.0, 0.0, 0usize), |(a, b, n), (l, f)| (a + l, b + f, n + 1));
        if n == 0 {
            return Err(ModelError::Coverage(format!("continuum window {} holds no samples", w.label)));
        }
        anchors.push((sl / n as f64, sf / n as f64));
    }
    let n = anchors.len() as f64;
    let mx = anchors.iter().map(|a| a.0).sum::<f64>() / n;
    let my = anchors.iter().map(|a| a.1).sum::<f64>() / n;
    let sxx: f64 = anchors.iter().map(|a| (a.0 - mx).powi(2)).sum();
    let sxy: f64 = anchors.iter().map(|a| (a.0 - mx) * (a.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(ModelError::Contract("continuum windows must sit at distinct wavelengths".into()));
    }
    let slope = sxy / sxx;
    let line = |l: f64| my + slope * (l - mx);
    let mut fluxes = Vec::with_capacity(spec.len());
    for (l, f) in spec.wavelengths.iter().zip(&spec.fluxes) {
        let c = line(*l);
        if !(c > 0.0) {
            return Err(ModelError::Numeric(format!("continuum fit is non-positive at {l} Å")));
        }
        fluxes.push(f / c);
    }
    Ok(ObservedSpectrum { fluxes, ..spec.clone() })
}

/// Samples within `half_width` of `center`.
pub fn truncate_window(spec: &ObservedSpectrum, center: f64, half_width: f64) -> Result<ObservedSpectrum> {
    if spec.is_empty() || center < spec.wavelengths[0] || center > spec.wavelengths[spec.len() - 1] {
        return Err(ModelError::Coverage(format!("window center {center} outside spectrum {}", spec.id)));
    }
    if !(half_width >= 0.0) {
        return Err(ModelError::Contract("half width must be non-negative".into()));
    }
    // Absorb representation error in grid wavelengths.
    let slack = 1e-9 * center.abs().max(1.0);
    let (wavelengths, fluxes) = spec
        .wavelengths
        .iter()
        .zip(&spec.fluxes)
        .filter(|(l, _)| (**l - center).abs() <= half_width + slack)
        .map(|(l, f)| (*l, *f))
        .unzip();
    Ok(ObservedSpectrum { wavelengths, fluxes, ..spec.clone() })
}
