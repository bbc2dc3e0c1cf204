//! Discrete state shared by the four problem variants.
//!
//! Node `i` stands for the cell `[x_i - h/2, x_i + h/2]` (a spherical shell
//! for radial problems). The free boundary is a real number and the habitat
//! may cover a cell only partially; [`DensityField::split`] returns the
//! covered fraction together with the uncovered fractions on either side.
//! A node is active as soon as its cell meets the habitat.

use serde::{Deserialize, Serialize};

use crate::config::{InitialProfile, Layout, ScenarioConfig};
use crate::correctors::CorrectorProfile;
use crate::error::{Error, Result};
use crate::kernel::shell_volume;
use crate::quadrature::unit_ball_volume;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Whole line, habitat `(-∞, s(t))`.
    Line1fb,
    /// Whole line, habitat `(s⁻(t), s⁺(t))`.
    LineCs,
    /// Half-line `(0, s(t))` with the constant datum `A` on `(-d, 0)`.
    HalfLine,
    /// Ball of radius `R(t)` in `R^N`.
    Radial,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Line1fb => "line1fb",
            Variant::LineCs => "linecs",
            Variant::HalfLine => "halfline",
            Variant::Radial => "radial",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "line1fb" => Some(Variant::Line1fb),
            "linecs" => Some(Variant::LineCs),
            "halfline" => Some(Variant::HalfLine),
            "radial" => Some(Variant::Radial),
            _ => None,
        }
    }

    /// Variants whose habitat measure plus mass is an exact invariant.
    pub fn conserves(self) -> bool {
        !matches!(self, Variant::HalfLine)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub h: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x0: f64, h: f64, n: usize) -> Result<Self> {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("grid step {h}")));
        }
        Ok(Grid { x0, h, n })
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.h
    }

    pub fn last(&self) -> f64 {
        self.node(self.n.saturating_sub(1))
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum BoundaryState {
    Line1fb { s: f64 },
    LineCs { s_minus: f64, s_plus: f64 },
    HalfLine { s: f64 },
    Radial { r: f64, dim: usize, volume: f64 },
}

impl BoundaryState {
    pub fn radial(r: f64, dim: usize) -> Self {
        BoundaryState::Radial {
            r,
            dim,
            volume: unit_ball_volume(dim) * r.powi(dim as i32),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            BoundaryState::Line1fb { .. } => Variant::Line1fb,
            BoundaryState::LineCs { .. } => Variant::LineCs,
            BoundaryState::HalfLine { .. } => Variant::HalfLine,
            BoundaryState::Radial { .. } => Variant::Radial,
        }
    }

    /// Habitat measure: `s`, `s⁺ - s⁻`, or `ω_N R^N`.
    pub fn measure(&self) -> f64 {
        match *self {
            BoundaryState::Line1fb { s } | BoundaryState::HalfLine { s } => s,
            BoundaryState::LineCs { s_minus, s_plus } => s_plus - s_minus,
            BoundaryState::Radial { volume, .. } => volume,
        }
    }

    /// The advancing coordinate used for rates: `s`, `s⁺ - s⁻` or `R`.
    pub fn position(&self) -> f64 {
        match *self {
            BoundaryState::Radial { r, .. } => r,
            other => other.measure(),
        }
    }

    /// Values written to the series file, in column order.
    pub fn components(&self) -> Vec<f64> {
        match *self {
            BoundaryState::Line1fb { s } | BoundaryState::HalfLine { s } => vec![s],
            BoundaryState::LineCs { s_minus, s_plus } => vec![s_minus, s_plus],
            BoundaryState::Radial { r, .. } => vec![r],
        }
    }

    pub fn component_names(variant: Variant) -> &'static [&'static str] {
        match variant {
            Variant::Line1fb | Variant::HalfLine => &["s"],
            Variant::LineCs => &["s_minus", "s_plus"],
            Variant::Radial => &["R"],
        }
    }

    /// True when `self` contains `earlier` (monotone growth per variant).
    pub fn contains(&self, earlier: &BoundaryState) -> bool {
        match (*self, *earlier) {
            (BoundaryState::Line1fb { s: a }, BoundaryState::Line1fb { s: b })
            | (BoundaryState::HalfLine { s: a }, BoundaryState::HalfLine { s: b }) => a >= b,
            (
                BoundaryState::LineCs {
                    s_minus: am,
                    s_plus: ap,
                },
                BoundaryState::LineCs {
                    s_minus: bm,
                    s_plus: bp,
                },
            ) => am <= bm && ap >= bp,
            (BoundaryState::Radial { volume: a, .. }, BoundaryState::Radial { volume: b, .. }) => {
                a >= b
            }
            _ => false,
        }
    }
}

/// Covered and uncovered fractions of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSplit {
    pub inside: f64,
    /// Fraction on the side of decreasing coordinate (only `s⁻` moves there).
    pub below: f64,
    /// Fraction on the side of increasing coordinate.
    pub above: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CellGeometry {
    Line,
    Radial { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub geometry: CellGeometry,
    pub values: Vec<f64>,
    pub active: Vec<bool>,
    pub activation_time: Vec<f64>,
    /// Constant value `A` held on the ghost strip `(-d, 0)` (half-line only).
    pub ghost: Option<f64>,
    volumes: Vec<f64>,
}

impl DensityField {
    pub fn zeros(grid: Grid, geometry: CellGeometry, ghost: Option<f64>) -> Self {
        let volumes = match geometry {
            CellGeometry::Line => vec![grid.h; grid.n],
            CellGeometry::Radial { dim } => {
                grid.nodes().map(|r| shell_volume(dim, r, grid.h)).collect()
            }
        };
        DensityField {
            grid,
            geometry,
            values: vec![0.0; grid.n],
            active: vec![false; grid.n],
            activation_time: vec![f64::INFINITY; grid.n],
            ghost,
            volumes,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn volume(&self, i: usize) -> f64 {
        self.volumes[i]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Appends `extra` empty nodes on the right.
    pub fn extend(&mut self, extra: usize) {
        let n0 = self.grid.n;
        self.grid.n += extra;
        self.values.resize(self.grid.n, 0.0);
        self.active.resize(self.grid.n, false);
        self.activation_time.resize(self.grid.n, f64::INFINITY);
        for i in n0..self.grid.n {
            let v = match self.geometry {
                CellGeometry::Line => self.grid.h,
                CellGeometry::Radial { dim } => shell_volume(dim, self.grid.node(i), self.grid.h),
            };
            self.volumes.push(v);
        }
    }

    /// Fractions of cell `i` inside and outside the habitat.
    pub fn split(&self, i: usize, boundary: &BoundaryState) -> CellSplit {
        let h = self.grid.h;
        let x = self.grid.node(i);
        let lo = x - 0.5 * h;
        let hi = x + 0.5 * h;
        match *boundary {
            BoundaryState::Line1fb { s } | BoundaryState::HalfLine { s } => {
                let inside = ((s - lo) / h).clamp(0.0, 1.0);
                CellSplit {
                    inside,
                    below: 0.0,
                    above: 1.0 - inside,
                }
            }
            BoundaryState::LineCs { s_minus, s_plus } => {
                let below = ((s_minus - lo) / h).clamp(0.0, 1.0);
                let above = ((hi - s_plus) / h).clamp(0.0, 1.0);
                let inside = (1.0 - below - above).max(0.0);
                CellSplit {
                    inside,
                    below,
                    above,
                }
            }
            BoundaryState::Radial { r, dim, .. } => {
                let n = dim as i32;
                let a = lo.max(0.0);
                let total = hi.powi(n) - a.powi(n);
                let inside = ((r.min(hi).powi(n) - a.powi(n)) / total).clamp(0.0, 1.0);
                let inside = if r <= a { 0.0 } else { inside };
                CellSplit {
                    inside,
                    below: 0.0,
                    above: 1.0 - inside,
                }
            }
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |a, &b| a.max(b))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Total population `Σ u_i vol_i` (ghost strip excluded).
pub fn mass(field: &DensityField) -> f64 {
    field
        .values
        .iter()
        .zip(field.volumes())
        .map(|(u, v)| u * v)
        .sum()
}

/// `Σ u_i w(x_i - anchor) vol_i`.
pub fn weighted_moment(
    field: &DensityField,
    weight: &CorrectorProfile,
    anchor: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut lo_needed = f64::INFINITY;
    let mut hi_needed = f64::NEG_INFINITY;
    for (i, (&u, &v)) in field.values.iter().zip(field.volumes()).enumerate() {
        if u == 0.0 {
            continue;
        }
        let y = field.grid.node(i) - anchor;
        lo_needed = lo_needed.min(y);
        hi_needed = hi_needed.max(y);
        acc += u * weight.eval(y) * v;
    }
    if lo_needed.is_finite() && !weight.covers_side(lo_needed, hi_needed) {
        let (have_lo, have_hi) = weight.coverage();
        return Err(Error::ProfileTooShort {
            have_lo,
            have_hi,
            need_lo: lo_needed,
            need_hi: hi_needed,
        });
    }
    Ok(acc)
}

/// `Σ u_i (anchor - x_i) vol_i`.
pub fn first_moment(field: &DensityField, anchor: f64) -> f64 {
    field
        .values
        .iter()
        .zip(field.volumes())
        .enumerate()
        .map(|(i, (u, v))| u * (anchor - field.grid.node(i)) * v)
        .sum()
}

/// Marks the nodes whose cells entered the habitat between the two
/// boundary states. Their values stay at zero.
pub fn activate_nodes(
    field: &mut DensityField,
    boundary_old: &BoundaryState,
    boundary_new: &BoundaryState,
    t: f64,
) -> Result<usize> {
    if boundary_old.variant() != boundary_new.variant() {
        return Err(Error::InvalidParameter("boundary variant changed".into()));
    }
    if !boundary_new.contains(boundary_old) {
        return Err(Error::BoundaryRegression(format!(
            "{boundary_old:?} -> {boundary_new:?}"
        )));
    }
    let mut count = 0;
    for i in 0..field.len() {
        if field.active[i] {
            continue;
        }
        if field.split(i, boundary_new).inside > 0.0 {
            field.active[i] = true;
            field.activation_time[i] = t;
            field.values[i] = 0.0;
            count += 1;
        }
    }
    Ok(count)
}

/// Builds the initial field and boundary described by a scenario.
pub fn init_from_config(config: &ScenarioConfig) -> Result<(DensityField, BoundaryState)> {
    init_on_layout(config, &config.layout()?)
}

/// [`init_from_config`] on a caller-chosen grid.
pub fn init_on_layout(
    config: &ScenarioConfig,
    layout: &Layout,
) -> Result<(DensityField, BoundaryState)> {
    let boundary = config.initial_boundary()?;
    let ghost = match config.variant {
        Variant::HalfLine => Some(config.halfline_a()?),
        _ => None,
    };
    let mut field = DensityField::zeros(layout.grid, layout.geometry, ghost);
    let h = layout.grid.h;
    let profile = config.initial_profile();

    // habitat interval in the node coordinate
    let (lo, hi) = match boundary {
        BoundaryState::Line1fb { s } => (f64::NEG_INFINITY, s),
        BoundaryState::LineCs { s_minus, s_plus } => (s_minus, s_plus),
        BoundaryState::HalfLine { s } => (0.0, s),
        BoundaryState::Radial { r, .. } => (f64::NEG_INFINITY, r),
    };
    let tol = 1e-12;
    for i in 0..field.len() {
        let x = field.grid.node(i);
        let u = profile.eval(x);
        if !(u >= 0.0) {
            return Err(Error::InitialDatum(format!("u0({x}) = {u} is negative")));
        }
        if (x < lo || x > hi) && u > tol {
            return Err(Error::InitialDatum(format!(
                "u0({x}) = {u} outside the initial habitat"
            )));
        }
        let split = field.split(i, &boundary);
        if split.inside > 0.0 {
            field.active[i] = true;
            field.activation_time[i] = 0.0;
            field.values[i] = u;
        }
    }
    // continuity at the free boundary
    for edge in [lo, hi] {
        if edge.is_finite() && !(config.variant == Variant::HalfLine && edge == 0.0) {
            let u = profile.eval(edge);
            if u > h {
                return Err(Error::InitialDatum(format!(
                    "u0 = {u} at the free boundary {edge}; it must vanish there"
                )));
            }
        }
    }
    if let Some(target) = profile.target_mass() {
        let m = mass(&field);
        if m > 0.0 {
            let scale = target / m;
            field.values.iter_mut().for_each(|v| *v *= scale);
        } else if target > 0.0 {
            return Err(Error::InitialDatum(
                "requested a positive mass for an empty profile".into(),
            ));
        }
    }
    if matches!(profile, InitialProfile::Zero) {
        field.values.iter_mut().for_each(|v| *v = 0.0);
    }
    Ok((field, boundary))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub grid: Grid,
    pub values: Vec<f64>,
}

/// Per-step extremes collected by the integrator, independent of the
/// recording cadence. `None` until the first step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub steps: usize,
    pub min_value: Option<f64>,
    /// Largest single-step increase of `M`.
    pub max_mass_increase: Option<f64>,
    /// Largest single-step decrease of the habitat measure (must stay ≤ 0).
    pub max_boundary_regression: Option<f64>,
    /// Largest single-step change of mass plus habitat measure.
    pub max_conservation_defect: Option<f64>,
    /// Largest single-step increase of `M_φ⁺` (line1fb only).
    pub max_m_phi_increase: Option<f64>,
}

impl StepStats {
    pub(crate) fn raise(slot: &mut Option<f64>, value: f64) {
        *slot = Some(slot.map_or(value, |v| v.max(value)));
    }

    pub(crate) fn lower(slot: &mut Option<f64>, value: f64) {
        *slot = Some(slot.map_or(value, |v| v.min(value)));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub variant: Variant,
    pub dt: f64,
    pub times: Vec<f64>,
    pub boundary: Vec<BoundaryState>,
    pub mass: Vec<f64>,
    pub sup_norm: Vec<f64>,
    /// `∫ u φ(x - anchor)` against `anchor = s0 + M(0)` (line1fb).
    pub m_phi: Option<Vec<f64>>,
    /// `∫ u ψ` (half-line).
    pub m_psi: Option<Vec<f64>>,
    /// `∫ u (anchor - x)` (line1fb).
    pub first_moment: Option<Vec<f64>>,
    pub anchor: Option<f64>,
    pub snapshots: Vec<Snapshot>,
    pub stats: StepStats,
}

impl RunRecord {
    pub fn new(variant: Variant, dt: f64) -> Self {
        RunRecord {
            variant,
            dt,
            times: Vec::new(),
            boundary: Vec::new(),
            mass: Vec::new(),
            sup_norm: Vec::new(),
            m_phi: None,
            m_psi: None,
            first_moment: None,
            anchor: None,
            snapshots: Vec::new(),
            stats: StepStats::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.boundary.iter().map(|b| b.position()).collect()
    }

    pub fn measures(&self) -> Vec<f64> {
        self.boundary.iter().map(|b| b.measure()).collect()
    }

    pub fn snapshot_near(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}
