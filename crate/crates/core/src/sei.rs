//! Single-star line profiles: Sobolev source functions combined with an exact
//! formal solution of the transfer equation along impact-parameter rays.
//!
//! Each ray is parameterized by its projected (line-of-sight) wind speed
//! `u = (z / r) w(r)`, which increases monotonically along the ray. Nodes are
//! spaced uniformly in `u`; within a segment the Gaussian line profile is
//! integrated analytically, so the segment optical depths stay exact even
//! when the intrinsic width is far narrower than the segment.
//!
//! Frequencies are dimensionless, `x = (c / v∞)(λ − λ_blue) / λ_blue`;
//! material moving toward the observer absorbs at `x < 0`.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};
use crate::quad::{gauss_legendre, trapezoid};
use crate::sobolev::{disk_edge_cosine, source_ratio};
use crate::wind::{Component, DoubletSpec, WindLawParams, WindModel};

/// Speed of light in km/s.
pub const SPEED_OF_LIGHT_KMS: f64 = 299_792.458;

/// Minimum effective Gaussian half-width used in the formal integral.
pub const W_FLOOR: f64 = 0.01;

/// Gaussian tails beyond this many half-widths are treated as zero.
const GAUSS_CUTOFF: f64 = 6.0;

/// Dimensionless frequency axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub x_values: Vec<f64>,
    pub lambda_ref: f64,
}

impl FrequencyGrid {
    /// Uniform grid from `lo` in steps of `step`, covering at least `hi`.
    pub fn uniform(lo: f64, hi: f64, step: f64, lambda_ref: f64) -> Self {
        let n = ((hi - lo) / step).ceil() as usize + 1;
        let x_values = (0..n).map(|i| lo + i as f64 * step).collect();
        FrequencyGrid { x_values, lambda_ref }
    }

    /// Smallest symmetric span that holds every line-forming frequency of
    /// the model, plus a continuum margin.
    pub fn required_half_span(params: &WindLawParams, doublet: &DoubletSpec) -> f64 {
        let broad = 4.0 * params.w_gauss.max(W_FLOOR);
        let phot = 4.0 * params.w_phot_blue.max(params.w_phot_red);
        1.0 + broad.max(phot) + doublet_offset(params, doublet)
    }

    pub fn for_model(params: &WindLawParams, doublet: &DoubletSpec, step: f64) -> Self {
        let half = Self::required_half_span(params, doublet) + 0.1;
        Self::uniform(-half, half, step, doublet.lambda_blue)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x_values.is_empty() {
            return Err(ModelError::Contract("frequency grid is empty".into()));
        }
        if !self.x_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(ModelError::Contract("frequency grid must be strictly increasing".into()));
        }
        if !(self.lambda_ref > 0.0) {
            return Err(ModelError::Contract("lambda_ref must be positive".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_values.is_empty()
    }

    /// Wavelength in Å of frequency `x` for terminal speed `v_inf` (km/s).
    pub fn wavelength_of(&self, x: f64, v_inf: f64) -> f64 {
        self.lambda_ref * (1.0 + x * v_inf / SPEED_OF_LIGHT_KMS)
    }

    pub fn x_of(&self, lambda: f64, v_inf: f64) -> f64 {
        (lambda - self.lambda_ref) / self.lambda_ref * SPEED_OF_LIGHT_KMS / v_inf
    }

    pub fn wavelengths(&self, v_inf: f64) -> Vec<f64> {
        self.x_values.iter().map(|&x| self.wavelength_of(x, v_inf)).collect()
    }
}

/// Offset of the red member on the blue member's frequency axis.
pub fn doublet_offset(params: &WindLawParams, doublet: &DoubletSpec) -> f64 {
    SPEED_OF_LIGHT_KMS / params.v_inf * (doublet.lambda_red - doublet.lambda_blue) / doublet.lambda_blue
}

fn component_center(c: Component, params: &WindLawParams, doublet: &DoubletSpec) -> f64 {
    match c {
        Component::Blue => 0.0,
        Component::Red => doublet_offset(params, doublet),
    }
}

/// Impact-parameter quadrature and per-ray sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayQuadrature {
    /// Rays that hit the stellar disk, `p ∈ [0, 1)`.
    pub p_core: Vec<f64>,
    /// Flux weights of the core rays (they sum to 1).
    pub core_weights: Vec<f64>,
    /// Rays that miss the disk, `p ∈ [1, p_max]`.
    pub p_halo: Vec<f64>,
    /// Flux weights of the halo rays (intensity to flux, including `2p`).
    pub halo_weights: Vec<f64>,
    pub z_samples_per_ray: usize,
    pub p_max: f64,
    /// When false, the wind behind the disk is not hidden: core rays start at
    /// the far side of the wind sphere and the disk is transparent to it.
    pub occultation: bool,
}

impl RayQuadrature {
    /// Gauss-Legendre core rays in `p²`; halo rays uniform in `s = ln(p − 1 + c)`
    /// with trapezoid weights in `s`, which resolves both the limb and the
    /// far wind with few rays.
    pub fn standard(n_core: usize, n_halo: usize, z_samples: usize, p_max: f64) -> Self {
        let (s, core_weights) = gauss_legendre(n_core, 0.0, 1.0);
        let p_core = s.iter().map(|s| s.sqrt()).collect();
        let span = p_max - 1.0;
        let c = (1e-2 * span).min(1e-3);
        let n = n_halo.max(2);
        let (s0, s1) = (c.ln(), (span + c).ln());
        let h = (s1 - s0) / (n - 1) as f64;
        let mut p_halo: Vec<f64> = (0..n).map(|k| 1.0 + (s0 + k as f64 * h).exp() - c).collect();
        p_halo[0] = 1.0;
        p_halo[n - 1] = p_max;
        // ∫ 2 I p dp = ∫ 2 I p (p − 1 + c) ds
        let halo_weights = p_halo
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let end = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                2.0 * end * h * p * (p - 1.0 + c)
            })
            .collect();
        RayQuadrature {
            p_core,
            core_weights,
            p_halo,
            halo_weights,
            z_samples_per_ray: z_samples,
            p_max,
            occultation: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let increasing = |v: &[f64]| v.windows(2).all(|w| w[0] < w[1]);
        if self.z_samples_per_ray < 64 {
            return Err(ModelError::Contract("z_samples_per_ray must be at least 64".into()));
        }
        if !(self.p_max > 1.0) {
            return Err(ModelError::Contract(format!("p_max must exceed 1, got {}", self.p_max)));
        }
        if !increasing(&self.p_core) || !increasing(&self.p_halo) {
            return Err(ModelError::Contract("impact parameters must be strictly increasing".into()));
        }
        if self.p_core.iter().any(|&p| !(0.0..1.0).contains(&p)) {
            return Err(ModelError::Contract("core rays must lie in [0, 1)".into()));
        }
        if self.p_halo.iter().any(|&p| p < 1.0 || p > self.p_max) {
            return Err(ModelError::Contract("halo rays must lie in [1, p_max]".into()));
        }
        if self.core_weights.len() != self.p_core.len() || self.halo_weights.len() != self.p_halo.len() {
            return Err(ModelError::Contract("weight count must match ray count".into()));
        }
        Ok(())
    }
}

/// Resolution knobs; `GridConfig::default()` is the desk-scale configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub core_rays: usize,
    pub halo_rays: usize,
    pub z_samples: usize,
    pub x_step: f64,
    pub occultation: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { core_rays: 48, halo_rays: 64, z_samples: 256, x_step: 0.01, occultation: true }
    }
}

impl GridConfig {
    /// Every resolution knob scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let f = factor.max(1);
        GridConfig {
            core_rays: self.core_rays * f,
            halo_rays: self.halo_rays * f,
            z_samples: self.z_samples * f,
            x_step: self.x_step / f as f64,
            occultation: self.occultation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.core_rays < 2 || self.halo_rays < 2 {
            return Err(ModelError::invalid(&["core_rays", "halo_rays"], "need at least two rays of each kind"));
        }
        if self.z_samples < 64 {
            return Err(ModelError::invalid(&["z_samples"], "need at least 64 samples per ray"));
        }
        if !(self.x_step > 0.0 && self.x_step <= 0.5) {
            return Err(ModelError::invalid(&["x_step"], "x_step must lie in (0, 0.5]"));
        }
        Ok(())
    }

    pub fn build(&self, model: &WindModel, doublet: &DoubletSpec) -> Result<(FrequencyGrid, RayQuadrature)> {
        self.validate()?;
        let grid = FrequencyGrid::for_model(model.params(), doublet, self.x_step);
        let mut quad = RayQuadrature::standard(self.core_rays, self.halo_rays, self.z_samples, model.outer_radius());
        quad.occultation = self.occultation;
        Ok((grid, quad))
    }
}

/// Intensity leaving the photosphere: continuum with Gaussian absorption
/// lines at both doublet members.
pub fn photospheric_input(x: f64, params: &WindLawParams, doublet: &DoubletSpec) -> f64 {
    let mut i = 1.0;
    for c in Component::BOTH {
        let a = params.a_phot(c);
        if a > 0.0 {
            let d = (x - component_center(c, params, doublet)) / params.w_phot(c);
            i -= a * (-d * d).exp();
        }
    }
    i.max(0.0)
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    /// Depth per unit Gaussian area, `τ_r (dw/dr) / (du/dz)`, per component.
    g: [f64; 2],
    /// Source function per component.
    s: [f64; 2],
}

#[derive(Debug, Clone)]
struct Leg {
    add_photosphere: bool,
    /// Projected speed at the segment boundaries (len = segments + 1).
    u_nodes: Vec<f64>,
    segments: Vec<Segment>,
}

/// Precomputed geometry and source functions along one ray; frequency
/// independent, so it is built once and reused for every `x`.
#[derive(Debug, Clone)]
pub struct RayPath {
    pub p: f64,
    legs: Vec<Leg>,
}

struct RayContext<'a> {
    model: &'a WindModel,
    params: &'a WindLawParams,
    doublet: &'a DoubletSpec,
    centers: [f64; 2],
}

impl<'a> RayContext<'a> {
    fn new(model: &'a WindModel, doublet: &'a DoubletSpec) -> Self {
        let params = model.params();
        RayContext {
            model,
            params,
            doublet,
            centers: [
                component_center(Component::Blue, params, doublet),
                component_center(Component::Red, params, doublet),
            ],
        }
    }

    fn projected_speed(&self, p: f64, z: f64) -> f64 {
        let r = (p * p + z * z).sqrt().max(1.0);
        z / r * self.model.velocity_unchecked(r)
    }

    /// Solves `u(z) = target` on `[lo, hi]`; `u` is monotone increasing in `z`.
    fn z_at_speed(&self, p: f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.projected_speed(p, mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn build_leg(&self, p: f64, z_lo: f64, z_hi: f64, n: usize, add_photosphere: bool) -> Result<Leg> {
        let u_lo = self.projected_speed(p, z_lo);
        let u_hi = self.projected_speed(p, z_hi);
        let du = (u_hi - u_lo) / n as f64;
        let u_nodes: Vec<f64> = (0..=n).map(|k| u_lo + k as f64 * du).collect();
        let mut segments = Vec::with_capacity(n);
        for k in 0..n {
            let u_mid = 0.5 * (u_nodes[k] + u_nodes[k + 1]);
            let z = self.z_at_speed(p, u_mid, z_lo, z_hi);
            let r = (p * p + z * z).sqrt();
            let seg = self.segment_at(p, z, r)?;
            segments.push(seg);
        }
        Ok(Leg { add_photosphere, u_nodes, segments })
    }

    fn segment_at(&self, p: f64, z: f64, r: f64) -> Result<Segment> {
        if !(r > 1.0) {
            // Only reachable for a ray that grazes the limb at a node; the
            // wind base then contributes nothing measurable.
            return Ok(Segment { g: [0.0; 2], s: [0.0; 2] });
        }
        let m = self.model;
        let w = m.velocity_unchecked(r);
        let dwdr = m.dw_dr_unchecked(r);
        let mu = z / r;
        let dudz = w * p * p / (r * r * r) + mu * mu * dwdr;
        let sigma = r / w * dwdr - 1.0;
        let mu_bar = 0.5 * (1.0 + disk_edge_cosine(r));
        let mut g = [0.0; 2];
        let mut s = [0.0; 2];
        for (i, c) in Component::BOTH.into_iter().enumerate() {
            let tau = m.tau_radial_unchecked(w, c);
            if tau == 0.0 {
                continue;
            }
            g[i] = tau * dwdr / dudz;
            // Incident photospheric light reaches the resonance Doppler-shifted
            // by the outflow, seen along the mean direction to the disk.
            let i_star = photospheric_input(self.centers[i] - w * mu_bar, self.params, self.doublet);
            s[i] = source_ratio(tau, sigma, r)? * i_star;
            if !(g[i].is_finite() && s[i].is_finite()) {
                return Err(ModelError::Integration {
                    p,
                    x: f64::NAN,
                    detail: format!("non-finite opacity or source at r={r}, z={z}"),
                });
            }
        }
        Ok(Segment { g, s })
    }
}

impl RayPath {
    /// Builds the ray at impact parameter `p`.
    pub fn build(p: f64, model: &WindModel, doublet: &DoubletSpec, quad: &RayQuadrature) -> Result<Self> {
        let ctx = RayContext::new(model, doublet);
        Self::build_with(&ctx, p, quad)
    }

    fn build_with(ctx: &RayContext<'_>, p: f64, quad: &RayQuadrature) -> Result<Self> {
        if !(p >= 0.0) {
            return Err(ModelError::Domain(format!("impact parameter {p} is negative")));
        }
        let n = quad.z_samples_per_ray;
        let z_max = (quad.p_max * quad.p_max - p * p).max(0.0).sqrt();
        let legs = if p < 1.0 {
            let z0 = (1.0 - p * p).sqrt();
            let front = ctx.build_leg(p, z0, z_max, n, true)?;
            if quad.occultation {
                vec![front]
            } else {
                vec![ctx.build_leg(p, -z_max, -z0, n, false)?, front]
            }
        } else if z_max > 0.0 {
            vec![ctx.build_leg(p, -z_max, z_max, n, false)?]
        } else {
            Vec::new()
        };
        Ok(RayPath { p, legs })
    }

    /// Emergent intensity toward the observer at frequency `x`.
    pub fn emergent_intensity(&self, x: f64, params: &WindLawParams, doublet: &DoubletSpec) -> Result<f64> {
        let width = params.w_gauss.max(W_FLOOR);
        let centers =
            [component_center(Component::Blue, params, doublet), component_center(Component::Red, params, doublet)];
        let mut intensity = 0.0;
        let mut cdf: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
        for leg in &self.legs {
            if leg.add_photosphere {
                intensity += photospheric_input(x, params, doublet);
            }
            for (c, buf) in cdf.iter_mut().enumerate() {
                fill_cdf(buf, &leg.u_nodes, x - centers[c], width);
            }
            for (k, seg) in leg.segments.iter().enumerate() {
                let d0 = seg.g[0] * (cdf[0][k + 1] - cdf[0][k]);
                let d1 = seg.g[1] * (cdf[1][k + 1] - cdf[1][k]);
                let dtau = d0 + d1;
                if dtau <= 0.0 {
                    continue;
                }
                let atten = (-dtau).exp();
                let gain = -(-dtau).exp_m1() / dtau;
                intensity = intensity * atten + (d0 * seg.s[0] + d1 * seg.s[1]) * gain;
            }
        }
        if !intensity.is_finite() {
            return Err(ModelError::Integration { p: self.p, x, detail: "non-finite intensity".into() });
        }
        Ok(intensity)
    }
}

/// Cumulative Gaussian area `½(1 + erf((shift + u)/width))` at each node.
fn fill_cdf(buf: &mut Vec<f64>, u_nodes: &[f64], shift: f64, width: f64) {
    buf.clear();
    buf.reserve(u_nodes.len());
    // Nodes are increasing, so the tails can be filled without erf calls.
    let lo = u_nodes.partition_point(|&u| (shift + u) / width < -GAUSS_CUTOFF);
    let hi = u_nodes.partition_point(|&u| (shift + u) / width <= GAUSS_CUTOFF);
    buf.extend(std::iter::repeat_n(0.0, lo));
    buf.extend(u_nodes[lo..hi].iter().map(|&u| 0.5 * (1.0 + libm::erf((shift + u) / width))));
    buf.extend(std::iter::repeat_n(1.0, u_nodes.len() - hi));
}

/// Emergent intensity of a single ray at a single frequency.
pub fn formal_integrate_ray(
    p: f64,
    x: f64,
    model: &WindModel,
    doublet: &DoubletSpec,
    quad: &RayQuadrature,
) -> Result<f64> {
    RayPath::build(p, model, doublet, quad)?.emergent_intensity(x, model.params(), doublet)
}

/// Normalized flux of one star, split into the parts formed on rays that
/// hit the disk and rays that miss it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleStarProfile {
    pub params: WindLawParams,
    pub doublet: DoubletSpec,
    pub grid: FrequencyGrid,
    pub f_core: Vec<f64>,
    pub f_halo: Vec<f64>,
    pub f_total: Vec<f64>,
}

impl SingleStarProfile {
    pub fn wavelengths(&self) -> Vec<f64> {
        self.grid.wavelengths(self.params.v_inf)
    }

    /// `∫(1 − f_total) dx`; positive for net absorption.
    pub fn equivalent_width(&self) -> f64 {
        let deficit: Vec<f64> = self.f_total.iter().map(|f| 1.0 - f).collect();
        trapezoid(&self.grid.x_values, &deficit)
    }

    /// `∫(1 − f_core) dx`, the absorption part alone.
    pub fn absorption_equivalent_width(&self) -> f64 {
        let deficit: Vec<f64> = self.f_core.iter().map(|f| 1.0 - f).collect();
        trapezoid(&self.grid.x_values, &deficit)
    }

    /// Writes the three-column `x f_core f_halo` table under a JSON header line.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        let header = serde_json::json!({
            "params": self.params,
            "doublet": self.doublet,
            "lambda_ref": self.grid.lambda_ref,
            "n": self.grid.len(),
            "columns": ["x", "f_core", "f_halo"],
        });
        writeln!(out, "# {header}")?;
        for i in 0..self.grid.len() {
            writeln!(out, "{:e} {:e} {:e}", self.grid.x_values[i], self.f_core[i], self.f_halo[i])?;
        }
        Ok(())
    }

    pub fn read_table<R: BufRead>(input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Header {
            params: WindLawParams,
            doublet: DoubletSpec,
            lambda_ref: f64,
        }
        let mut lines = input.lines().enumerate();
        let header: Header = match lines.next() {
            Some((_, line)) => {
                let line = line?;
                let json = line
                    .strip_prefix('#')
                    .ok_or_else(|| ModelError::Parse { line: 1, detail: "missing JSON header".into() })?;
                serde_json::from_str(json.trim()).map_err(|e| ModelError::Parse { line: 1, detail: e.to_string() })?
            }
            None => return Err(ModelError::Parse { line: 1, detail: "empty profile table".into() }),
        };
        let (mut x, mut core, mut halo) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, line) in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| ModelError::Parse { line: idx + 1, detail: e.to_string() })?;
            if vals.len() != 3 {
                return Err(ModelError::Parse {
                    line: idx + 1,
                    detail: format!("expected 3 columns, got {}", vals.len()),
                });
            }
            x.push(vals[0]);
            core.push(vals[1]);
            halo.push(vals[2]);
        }
        let total = core.iter().zip(&halo).map(|(a, b)| a + b).collect();
        Ok(SingleStarProfile {
            params: header.params,
            doublet: header.doublet,
            grid: FrequencyGrid { x_values: x, lambda_ref: header.lambda_ref },
            f_core: core,
            f_halo: halo,
            f_total: total,
        })
    }
}

/// Synthesizes the profile of one star on `grid` with the given ray quadrature.
///
/// Rays are evaluated in parallel; the flux sums run in a fixed order so the
/// result is bit-reproducible.
pub fn single_star_profile(
    params: &WindLawParams,
    doublet: &DoubletSpec,
    grid: &FrequencyGrid,
    quad: &RayQuadrature,
) -> Result<SingleStarProfile> {
    doublet.validate()?;
    grid.validate()?;
    quad.validate()?;
    let model = WindModel::new(params.clone())?;
    let ctx = RayContext::new(&model, doublet);

    let all_p: Vec<f64> = quad.p_core.iter().chain(&quad.p_halo).copied().collect();
    let rays: Vec<Vec<f64>> = all_p
        .par_iter()
        .map(|&p| {
            let path = RayPath::build_with(&ctx, p, quad)?;
            grid.x_values.iter().map(|&x| path.emergent_intensity(x, params, doublet)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (core_rays, halo_rays) = rays.split_at(quad.p_core.len());

    let nx = grid.len();
    let mut f_core = vec![0.0; nx];
    for (w, ray) in quad.core_weights.iter().zip(core_rays) {
        for (f, i) in f_core.iter_mut().zip(ray) {
            *f += w * i;
        }
    }
    let mut f_halo = vec![0.0; nx];
    for (w, ray) in quad.halo_weights.iter().zip(halo_rays) {
        for (f, i) in f_halo.iter_mut().zip(ray) {
            *f += w * i;
        }
    }
    let f_total = f_core.iter().zip(&f_halo).map(|(a, b)| a + b).collect();
    Ok(SingleStarProfile {
        params: params.clone(),
        doublet: doublet.clone(),
        grid: grid.clone(),
        f_core,
        f_halo,
        f_total,
    })
}

/// Convenience wrapper: builds grid and quadrature from `config`.
pub fn synthesize(params: &WindLawParams, doublet: &DoubletSpec, config: &GridConfig) -> Result<SingleStarProfile> {
    let model = WindModel::new(params.clone())?;
    let (grid, quad) = config.build(&model, doublet)?;
    single_star_profile(params, doublet, &grid, &quad)
}
