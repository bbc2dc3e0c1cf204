//! Scenario files.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! variant = "line1fb"          # line1fb | linecs | halfline | radial
//!
//! [kernel]
//! kind = "triangle"            # triangle | uniform | table
//! d = 1.0
//!
//! [grid]
//! h = 0.02
//!
//! [time]
//! t_end = 400.0
//! dt = 0.02                    # default min(0.1, h)
//! record_every = 1.0
//!
//! [initial]
//! profile = "bump"             # bump | table | zero
//! center = 0.0
//! radius = 1.0
//! s0 = 1.0
//! ```
//!
//! `[halfline]` carries `A`, `[radial]` carries `N`, and `[diagnostics]`
//! holds fit windows and tolerances. Unknown keys are rejected.

use serde::{Deserialize, Serialize};

use crate::correctors::{DEFAULT_EXTENT, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::kernel::{build_kernel, second_moment, shell_volume, Kernel, KernelKind};
use crate::quadrature::unit_ball_volume;
use crate::state::{BoundaryState, CellGeometry, Grid, Variant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Triangle,
    Uniform,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub kind: KernelChoice,
    pub d: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub h: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_left: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin_right: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshots: Vec<f64>,
    #[serde(default)]
    pub picard_iters: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
}

fn default_picard_tol() -> f64 {
    1e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileChoice {
    Bump,
    Table,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub profile: ProfileChoice,
    /// Bump height.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Bump centre (radial: always 0).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<f64>,
    /// Bump half-width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table_u: Option<Vec<f64>>,
    /// Rescale the discrete datum to this mass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s0_plus: Option<f64>,
    #[serde(default, rename = "R0", skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HalflineConfig {
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialConfig {
    #[serde(default, rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Fit window as fractions of `t_end`.
    #[serde(default = "default_window")]
    pub fit_window: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_cut: Option<f64>,
    /// Truncation extent of the correctors (default `40 d`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrector_extent: Option<f64>,
    #[serde(default = "default_tol")]
    pub corrector_tol: f64,
    /// Relative tolerance for predicted-versus-measured constants.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
}

fn default_window() -> [f64; 2] {
    [0.25, 1.0]
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_rel_tol() -> f64 {
    0.15
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            fit_window: default_window(),
            s_cut: None,
            corrector_extent: None,
            corrector_tol: DEFAULT_TOL,
            rel_tol: default_rel_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub variant: Variant,
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub halfline: Option<HalflineConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radial: Option<RadialConfig>,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
}

/// Initial density as a function of the node coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialProfile {
    Bump {
        amplitude: f64,
        center: f64,
        radius: f64,
        mass: Option<f64>,
    },
    Table {
        x: Vec<f64>,
        u: Vec<f64>,
        mass: Option<f64>,
    },
    Zero,
}

impl InitialProfile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            InitialProfile::Bump {
                amplitude,
                center,
                radius,
                ..
            } => {
                let z = (x - center) / radius;
                amplitude * (1.0 - z * z).max(0.0)
            }
            InitialProfile::Table { x: xs, u, .. } => {
                if x < xs[0] || x > xs[xs.len() - 1] {
                    return 0.0;
                }
                let k = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                let f = if x1 > x0 { (x - x0) / (x1 - x0) } else { 0.0 };
                u[k - 1] * (1.0 - f) + u[k] * f
            }
            InitialProfile::Zero => 0.0,
        }
    }

    pub fn target_mass(&self) -> Option<f64> {
        match self {
            InitialProfile::Bump { mass, .. } | InitialProfile::Table { mass, .. } => *mass,
            InitialProfile::Zero => None,
        }
    }

    /// Closed interval outside which the profile vanishes.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            InitialProfile::Bump {
                center,
                radius,
                amplitude,
                ..
            } if *amplitude > 0.0 => Some((center - radius, center + radius)),
            InitialProfile::Table { x, u, .. } if u.iter().any(|&v| v > 0.0) => {
                Some((x[0], x[x.len() - 1]))
            }
            _ => None,
        }
    }
}

/// Resolved grid and cell geometry of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub grid: Grid,
    pub geometry: CellGeometry,
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{path} must be positive, got {v}")))
    }
}

fn required<T: Copy>(path: &str, v: Option<T>) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("{path} is required")))
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn serialize_config(config: &ScenarioConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::Config(e.to_string()))
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        positive("kernel.d", self.kernel.d)?;
        positive("grid.h", self.grid.h)?;
        if self.grid.h > self.kernel.d / 4.0 * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "grid.h = {} exceeds kernel.d / 4",
                self.grid.h
            )));
        }
        if self.kernel.kind == KernelChoice::Table && self.kernel.table.is_none() {
            return Err(Error::Config(
                "kernel.table is required for kind = \"table\"".into(),
            ));
        }
        if self.kernel.kind != KernelChoice::Table && self.kernel.table.is_some() {
            return Err(Error::Config(
                "kernel.table is only allowed for kind = \"table\"".into(),
            ));
        }
        for (path, m) in [
            ("grid.margin_left", self.grid.margin_left),
            ("grid.margin_right", self.grid.margin_right),
        ] {
            if let Some(m) = m {
                if !(m >= 0.0) {
                    return Err(Error::Config(format!("{path} must be nonnegative")));
                }
            }
        }
        positive("time.t_end", self.time.t_end)?;
        let dt = self.dt();
        positive("time.dt", dt)?;
        if dt > 0.5 {
            return Err(Error::Config(format!("time.dt = {dt} exceeds 0.5")));
        }
        if let Some(r) = self.time.record_every {
            positive("time.record_every", r)?;
        }
        positive("time.picard_tol", self.time.picard_tol)?;
        if self.time.snapshots.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::Config("time.snapshots must be nonnegative".into()));
        }

        let init = &self.initial;
        match init.profile {
            ProfileChoice::Bump => {
                if self.variant != Variant::Radial {
                    required("initial.center", init.center)?;
                }
                positive("initial.radius", required("initial.radius", init.radius)?)?;
                if let Some(a) = init.amplitude {
                    if !(a >= 0.0) {
                        return Err(Error::Config(
                            "initial.amplitude must be nonnegative".into(),
                        ));
                    }
                }
            }
            ProfileChoice::Table => {
                let x = init
                    .table_x
                    .as_ref()
                    .ok_or_else(|| Error::Config("initial.table_x is required".into()))?;
                let u = init
                    .table_u
                    .as_ref()
                    .ok_or_else(|| Error::Config("initial.table_u is required".into()))?;
                if x.len() != u.len() || x.len() < 2 {
                    return Err(Error::Config(
                        "initial.table_x and initial.table_u need equal lengths ≥ 2".into(),
                    ));
                }
                if x.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config("initial.table_x must be increasing".into()));
                }
                if u.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Config("initial.table_u must be nonnegative".into()));
                }
            }
            ProfileChoice::Zero => {
                if init.mass.is_some_and(|m| m != 0.0) {
                    return Err(Error::Config(
                        "initial.mass must be 0 for profile = \"zero\"".into(),
                    ));
                }
            }
        }
        if let Some(m) = init.mass {
            if !(m >= 0.0) {
                return Err(Error::Config("initial.mass must be nonnegative".into()));
            }
        }

        match self.variant {
            Variant::Line1fb => {
                required("initial.s0", init.s0)?;
            }
            Variant::LineCs => {
                let lo = required("initial.s0_minus", init.s0_minus)?;
                let hi = required("initial.s0_plus", init.s0_plus)?;
                if !(hi > lo) {
                    return Err(Error::Config(
                        "initial.s0_plus must exceed initial.s0_minus".into(),
                    ));
                }
            }
            Variant::HalfLine => {
                let s0 = required("initial.s0", init.s0)?;
                if !(s0 >= 0.0) {
                    return Err(Error::Config("initial.s0 must be nonnegative".into()));
                }
                let a = self.halfline_a()?;
                if !(a >= 0.0) {
                    return Err(Error::Config(format!(
                        "halfline.A must be nonnegative, got {a}"
                    )));
                }
                let ratio = self.kernel.d / self.grid.h;
                if (ratio - ratio.round()).abs() > 1e-9 * ratio {
                    return Err(Error::Config(
                        "kernel.d must be an integer multiple of grid.h for halfline".into(),
                    ));
                }
            }
            Variant::Radial => {
                positive("initial.R0", required("initial.R0", init.r0)?)?;
                let n = self.radial_dim()?;
                if n < 2 {
                    return Err(Error::Config(format!(
                        "radial.N must be at least 2, got {n} (use linecs in one dimension)"
                    )));
                }
            }
        }

        let w = self.diagnostics.fit_window;
        if !(0.0 <= w[0] && w[0] < w[1] && w[1] <= 1.0) {
            return Err(Error::Config(
                "diagnostics.fit_window must satisfy 0 ≤ lo < hi ≤ 1".into(),
            ));
        }
        positive("diagnostics.corrector_tol", self.diagnostics.corrector_tol)?;
        positive("diagnostics.rel_tol", self.diagnostics.rel_tol)?;
        if !(self.corrector_extent() >= 20.0 * self.kernel.d) {
            return Err(Error::Config(
                "diagnostics.corrector_extent must be at least 20 kernel.d".into(),
            ));
        }
        Ok(())
    }

    pub fn corrector_extent(&self) -> f64 {
        self.diagnostics
            .corrector_extent
            .unwrap_or(DEFAULT_EXTENT * self.kernel.d)
    }

    pub fn dt(&self) -> f64 {
        self.time.dt.unwrap_or(self.grid.h.min(0.1))
    }

    /// Steps between recorded samples.
    pub fn record_stride(&self) -> usize {
        let dt = self.dt();
        let every = self
            .time
            .record_every
            .unwrap_or_else(|| (self.time.t_end / 1000.0).max(dt));
        ((every / dt).round() as usize).max(1)
    }

    pub fn halfline_a(&self) -> Result<f64> {
        self.halfline
            .as_ref()
            .and_then(|c| c.a)
            .ok_or_else(|| Error::Config("halfline.A is required for variant halfline".into()))
    }

    pub fn radial_dim(&self) -> Result<usize> {
        self.radial
            .as_ref()
            .and_then(|c| c.n)
            .ok_or_else(|| Error::Config("radial.N is required for variant radial".into()))
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let kind = match self.kernel.kind {
            KernelChoice::Triangle => KernelKind::Triangle,
            KernelChoice::Uniform => KernelKind::Uniform,
            KernelChoice::Table => KernelKind::Table(self.kernel.table.clone().unwrap_or_default()),
        };
        build_kernel(kind, self.kernel.d, self.grid.h)
    }

    pub fn initial_profile(&self) -> InitialProfile {
        let init = &self.initial;
        match init.profile {
            ProfileChoice::Bump => InitialProfile::Bump {
                amplitude: init.amplitude.unwrap_or(1.0),
                center: if self.variant == Variant::Radial {
                    0.0
                } else {
                    init.center.unwrap_or(0.0)
                },
                radius: init.radius.unwrap_or(1.0),
                mass: init.mass,
            },
            ProfileChoice::Table => InitialProfile::Table {
                x: init.table_x.clone().unwrap_or_default(),
                u: init.table_u.clone().unwrap_or_default(),
                mass: init.mass,
            },
            ProfileChoice::Zero => InitialProfile::Zero,
        }
    }

    pub fn initial_boundary(&self) -> Result<BoundaryState> {
        let init = &self.initial;
        Ok(match self.variant {
            Variant::Line1fb => BoundaryState::Line1fb {
                s: required("initial.s0", init.s0)?,
            },
            Variant::LineCs => BoundaryState::LineCs {
                s_minus: required("initial.s0_minus", init.s0_minus)?,
                s_plus: required("initial.s0_plus", init.s0_plus)?,
            },
            Variant::HalfLine => BoundaryState::HalfLine {
                s: required("initial.s0", init.s0)?,
            },
            Variant::Radial => {
                BoundaryState::radial(required("initial.R0", init.r0)?, self.radial_dim()?)
            }
        })
    }

    /// Mass of the datum, estimated on nodes of step `h` (or the requested
    /// mass when rescaling).
    fn mass_estimate(&self) -> f64 {
        let profile = self.initial_profile();
        if let Some(m) = profile.target_mass() {
            return m;
        }
        let Some((lo, hi)) = profile.support() else {
            return 0.0;
        };
        let h = self.grid.h;
        let k0 = (lo / h).floor() as i64;
        let k1 = (hi / h).ceil() as i64;
        (k0..=k1)
            .map(|k| {
                let x = k as f64 * h;
                let vol = match self.variant {
                    Variant::Radial => shell_volume(self.radial_dim().unwrap_or(2), x.max(0.0), h),
                    _ => h,
                };
                if self.variant == Variant::Radial && x < 0.0 {
                    0.0
                } else {
                    profile.eval(x) * vol
                }
            })
            .sum()
    }

    /// Grid extent and geometry for this scenario.
    pub fn layout(&self) -> Result<Layout> {
        let h = self.grid.h;
        let d = self.kernel.d;
        let m0 = self.mass_estimate() * 1.05 + 2.0 * h;
        let side_margin = 4.0 * d + 10.0 * h;
        let right_margin = self.grid.margin_right.unwrap_or(side_margin);
        let support = self.initial_profile().support();
        let snap = |x: f64| (x / h).floor() * h;
        let (x0, x_end, geometry) = match self.variant {
            Variant::Line1fb => {
                let s0 = required("initial.s0", self.initial.s0)?;
                let q = second_moment(&self.kernel()?);
                let left_margin = self
                    .grid
                    .margin_left
                    .unwrap_or(10.0 * (2.0 * q * self.time.t_end).sqrt() + 4.0 * d);
                let lo = support.map_or(s0, |(a, _)| a.min(s0));
                (
                    snap(lo - left_margin),
                    s0 + m0 + d + right_margin,
                    CellGeometry::Line,
                )
            }
            Variant::LineCs => {
                let lo = required("initial.s0_minus", self.initial.s0_minus)?;
                let hi = required("initial.s0_plus", self.initial.s0_plus)?;
                let left_margin = self.grid.margin_left.unwrap_or(side_margin);
                (
                    snap(lo - m0 - d - left_margin),
                    hi + m0 + d + right_margin,
                    CellGeometry::Line,
                )
            }
            Variant::HalfLine => {
                let s0 = required("initial.s0", self.initial.s0)?;
                (
                    0.5 * h,
                    s0 + m0 + 2.0 * d + right_margin,
                    CellGeometry::Line,
                )
            }
            Variant::Radial => {
                let dim = self.radial_dim()?;
                let r0 = required("initial.R0", self.initial.r0)?;
                let omega = unit_ball_volume(dim);
                let r_inf = (m0 / omega + r0.powi(dim as i32)).powf(1.0 / dim as f64);
                (0.0, r_inf + d + right_margin, CellGeometry::Radial { dim })
            }
        };
        let n = ((x_end - x0) / h).ceil() as usize + 1;
        Ok(Layout {
            grid: Grid::new(x0, h, n)?,
            geometry,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"
variant = "line1fb"
[kernel]
kind = "triangle"
d = 1.0
[grid]
h = 0.05
[time]
t_end = 10.0
[initial]
profile = "bump"
center = 0.0
radius = 1.0
s0 = 1.0
"#;

    #[test]
    fn minimal_line_config_fills_defaults() {
        let c = parse_config(LINE).unwrap();
        assert_eq!(c.dt(), 0.05);
        assert_eq!(c.diagnostics.fit_window, [0.25, 1.0]);
        let layout = c.layout().unwrap();
        // right end clears s0 + M(0) + d
        assert!(layout.grid.last() > 1.0 + 4.0 / 3.0 + 1.0);
        assert!(layout.grid.x0 < -1.0 - 4.0);
    }

    #[test]
    fn halfline_without_a_names_the_field() {
        let text = r#"
variant = "halfline"
[kernel]
kind = "triangle"
d = 1.0
[grid]
h = 0.1
[time]
t_end = 1.0
[initial]
profile = "zero"
s0 = 0.0
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("halfline.A"), "{err}");
    }

    #[test]
    fn radial_dimension_one_rejected() {
        let text = r#"
variant = "radial"
[kernel]
kind = "triangle"
d = 1.0
[grid]
h = 0.1
[time]
t_end = 1.0
[initial]
profile = "bump"
radius = 1.0
R0 = 1.0
[radial]
N = 1
"#;
        let err = parse_config(text).unwrap_err().to_string();
        assert!(err.contains("radial.N"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = LINE.replace("h = 0.05", "h = 0.05\nspacing = 2");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("spacing"), "{err}");
    }

    #[test]
    fn round_trip() {
        let c = parse_config(LINE).unwrap();
        let back = parse_config(&serialize_config(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn table_profile_interpolates() {
        let p = InitialProfile::Table {
            x: vec![0.0, 1.0, 2.0],
            u: vec![0.0, 2.0, 0.0],
            mass: None,
        };
        assert_eq!(p.eval(0.5), 1.0);
        assert_eq!(p.eval(1.5), 1.0);
        assert_eq!(p.eval(-1.0), 0.0);
        assert_eq!(p.eval(2.0), 0.0);
    }
}
