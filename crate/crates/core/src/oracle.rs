//! Brute-force reference solver and comparison checks.
//!
//! [`picard_solve`] iterates the integral form of the problem
//!
//! ```text
//! v(x, t) = e^{-t} u0(x) + ∫_{τ(x)}^t e^{-(t-r)} (J * u)(x, r) dr    (x inside Ω_t)
//! ξ(t)    = ξ(0) + ∫_0^t ∫_{outside Ω_r} (J * u)(x, r) dx dr
//! ```
//!
//! on a full space-time grid until the iterates stop moving. It shares the
//! averaging operator with the stepper but nothing else: membership of a
//! node is a point test, entry times `τ` are interpolated from the boundary
//! history, and time integrals use the trapezoid rule.

use serde::Serialize;

use crate::config::{parse_config, Layout, ScenarioConfig};
use crate::error::{Error, Result};
use crate::quadrature::unit_ball_volume;
use crate::state::{mass, BoundaryState, DensityField, Grid, RunRecord, Snapshot};
use crate::stepper::Simulation;

/// Sweeps allowed per slab before the slab is halved.
const MAX_SWEEPS: usize = 200;

/// Distances below this multiple of `tol` are too close to rounding to
/// give a meaningful contraction ratio.
const RATIO_FLOOR: f64 = 100.0;

/// Largest accepted ratio between successive Picard distances.
pub const MAX_CONTRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlabReport {
    pub t_start: f64,
    pub t_end: f64,
    pub sweeps: usize,
    /// Largest ratio of successive distances.
    pub ratio: f64,
    /// Distance of the last sweep.
    pub residual: f64,
}

/// Space-time solution of the integral equations.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub boundary: Vec<BoundaryState>,
    pub fields: Vec<Vec<f64>>,
    pub slabs: Vec<SlabReport>,
    template: DensityField,
}

impl OracleSolution {
    pub fn contraction_ratio(&self) -> f64 {
        self.slabs.iter().map(|s| s.ratio).fold(0.0, f64::max)
    }

    pub fn residual(&self) -> f64 {
        self.slabs.iter().map(|s| s.residual).fold(0.0, f64::max)
    }

    pub fn final_boundary(&self) -> BoundaryState {
        *self.boundary.last().expect("at least the initial level")
    }

    /// The solution as a run record with a snapshot at every level.
    pub fn to_record(&self) -> RunRecord {
        let variant = self.boundary[0].variant();
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            0.0
        };
        let mut record = RunRecord::new(variant, dt);
        let mut field = self.template.clone();
        for ((t, b), values) in self.times.iter().zip(&self.boundary).zip(&self.fields) {
            field.values.clone_from(values);
            record.times.push(*t);
            record.boundary.push(*b);
            record.mass.push(mass(&field));
            record.sup_norm.push(field.sup_norm());
            record.snapshots.push(Snapshot {
                t: *t,
                grid: self.grid,
                values: values.clone(),
            });
        }
        record
    }
}

/// Signed depth of `x` inside the habitat (positive inside).
fn depth(boundary: &BoundaryState, x: f64) -> f64 {
    match *boundary {
        BoundaryState::Line1fb { s } => s - x,
        BoundaryState::HalfLine { s } => s - x,
        BoundaryState::LineCs { s_minus, s_plus } => (x - s_minus).min(s_plus - x),
        BoundaryState::Radial { r, .. } => r - x,
    }
}

/// Boundary after gaining `below` / `above` of habitat measure.
fn grow(start: &BoundaryState, below: f64, above: f64) -> BoundaryState {
    match *start {
        BoundaryState::Line1fb { s } => BoundaryState::Line1fb { s: s + above },
        BoundaryState::HalfLine { s } => BoundaryState::HalfLine { s: s + above },
        BoundaryState::LineCs { s_minus, s_plus } => BoundaryState::LineCs {
            s_minus: s_minus - below,
            s_plus: s_plus + above,
        },
        BoundaryState::Radial { dim, volume, .. } => {
            let v = volume + above;
            BoundaryState::Radial {
                r: (v / unit_ball_volume(dim)).powf(1.0 / dim as f64),
                dim,
                volume: v,
            }
        }
    }
}

fn boundary_distance(a: &BoundaryState, b: &BoundaryState) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// One application of the integral map to the iterate on levels
/// `k0..=k1`. Level `k0` is data.
struct Slab<'a> {
    sim: &'a Simulation,
    field: DensityField,
    dt: f64,
}

impl Slab<'_> {
    fn sweep(
        &mut self,
        fields: &[Vec<f64>],
        bounds: &[BoundaryState],
    ) -> Result<(Vec<Vec<f64>>, Vec<BoundaryState>)> {
        let levels = fields.len();
        let n = self.field.len();
        let dt = self.dt;
        let decay = (-dt).exp();

        let mut averages = Vec::with_capacity(levels);
        let mut fluxes = Vec::with_capacity(levels);
        for (values, b) in fields.iter().zip(bounds) {
            self.field.values.clone_from(values);
            let a = self.sim.averaging().apply(&self.field)?;
            let (mut below, mut above) = (0.0, 0.0);
            for (i, ai) in a.iter().enumerate() {
                let split = self.field.split(i, b);
                let vol = self.field.volume(i);
                below += ai * split.below * vol;
                above += ai * split.above * vol;
            }
            averages.push(a);
            fluxes.push((below, above));
        }

        let mut new_bounds = Vec::with_capacity(levels);
        new_bounds.push(bounds[0]);
        let (mut gained_below, mut gained_above) = (0.0, 0.0);
        for k in 1..levels {
            gained_below += 0.5 * dt * (fluxes[k - 1].0 + fluxes[k].0);
            gained_above += 0.5 * dt * (fluxes[k - 1].1 + fluxes[k].1);
            new_bounds.push(grow(&bounds[0], gained_below, gained_above));
        }

        let mut new_fields = vec![vec![0.0; n]; levels];
        new_fields[0].clone_from(&fields[0]);
        for i in 0..n {
            let x = self.field.grid.node(i);
            // running value of the Duhamel integral, valid once the node is in
            let mut acc = if depth(&bounds[0], x) > 0.0 {
                Some(fields[0][i])
            } else {
                None
            };
            for k in 1..levels {
                let d_prev = depth(&bounds[k - 1], x);
                let d_now = depth(&bounds[k], x);
                acc = match acc {
                    Some(v) => {
                        Some(decay * v + 0.5 * dt * (decay * averages[k - 1][i] + averages[k][i]))
                    }
                    None if d_now > 0.0 => {
                        // entry time τ by linear interpolation of the depth
                        let theta = if d_prev < 0.0 {
                            d_prev / (d_prev - d_now)
                        } else {
                            0.0
                        };
                        let len = (1.0 - theta) * dt;
                        let a_tau = (1.0 - theta) * averages[k - 1][i] + theta * averages[k][i];
                        Some(0.5 * len * ((-len).exp() * a_tau + averages[k][i]))
                    }
                    None => None,
                };
                new_fields[k][i] = if d_now > 0.0 { acc.unwrap_or(0.0) } else { 0.0 };
            }
        }
        Ok((new_fields, new_bounds))
    }

    fn distance(
        &self,
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        sa: &[BoundaryState],
        sb: &[BoundaryState],
    ) -> f64 {
        let vols = self.field.volumes();
        let du = a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                x.iter()
                    .zip(y)
                    .zip(vols)
                    .map(|((p, q), v)| (p - q).abs() * v)
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        let ds = sa
            .iter()
            .zip(sb)
            .map(|(p, q)| boundary_distance(p, q))
            .fold(0.0, f64::max);
        du + ds
    }
}

/// Solves the scenario up to `t_end` by Picard iteration on time slabs.
///
/// The time step is the scenario's `dt`; the grid is the scenario's layout,
/// held fixed. A slab is halved whenever two successive distances shrink
/// by less than [`MAX_CONTRACTION`] or the sweep budget runs out.
pub fn picard_solve(config: &ScenarioConfig, t_end: f64, tol: f64) -> Result<OracleSolution> {
    if !(t_end > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("T = {t_end}, tol = {tol}")));
    }
    let sim = Simulation::new(config)?;
    let dt = sim.params.dt;
    let steps = (t_end / dt).round() as usize;
    if steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "T = {t_end} is shorter than dt = {dt}"
        )));
    }
    let mut slab = Slab {
        sim: &sim,
        field: sim.field.clone(),
        dt,
    };
    let mut fields = vec![sim.field.values.clone()];
    let mut bounds = vec![sim.boundary];
    let mut reports = Vec::new();
    let mut width = steps;
    let mut start = 0;
    while start < steps {
        let end = (start + width).min(steps);
        let levels = end - start + 1;
        let mut u = vec![fields[start].clone(); levels];
        let mut s = vec![bounds[start]; levels];
        let mut prev_dist: Option<f64> = None;
        let mut ratio = 0.0_f64;
        let mut accepted = None;
        for sweep in 1..=MAX_SWEEPS {
            let (nu, ns) = slab.sweep(&u, &s)?;
            let dist = slab.distance(&nu, &u, &ns, &s);
            if let Some(p) = prev_dist {
                if p > RATIO_FLOOR * tol {
                    ratio = ratio.max(dist / p);
                }
            }
            u = nu;
            s = ns;
            if ratio > MAX_CONTRACTION {
                break;
            }
            if dist <= tol {
                accepted = Some(SlabReport {
                    t_start: start as f64 * dt,
                    t_end: end as f64 * dt,
                    sweeps: sweep,
                    ratio,
                    residual: dist,
                });
                break;
            }
            prev_dist = Some(dist);
        }
        match accepted {
            Some(report) => {
                fields.extend(u.into_iter().skip(1));
                bounds.extend(s.into_iter().skip(1));
                reports.push(report);
                start = end;
            }
            None if width > 1 => width = width.div_ceil(2),
            None => {
                return Err(Error::NoConvergence {
                    what: "picard slab",
                    iterations: MAX_SWEEPS,
                    residual: ratio,
                })
            }
        }
    }
    Ok(OracleSolution {
        grid: sim.field.grid,
        times: (0..=steps).map(|k| k as f64 * dt).collect(),
        boundary: bounds,
        fields,
        slabs: reports,
        template: sim.field.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Discrepancy {
    /// `max_t |s_a - s_b|` over all boundary components.
    pub boundary: f64,
    /// `max_t Σ |u_a - u_b| vol` over snapshots taken at common times.
    pub field_l1: f64,
    pub times_compared: usize,
    pub snapshots_compared: usize,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(1.0)
}

/// Largest differences between two records of the same scenario.
pub fn compare_runs(a: &RunRecord, b: &RunRecord) -> Result<Discrepancy> {
    if a.variant != b.variant {
        return Err(Error::Incompatible(format!(
            "variants {} and {}",
            a.variant.name(),
            b.variant.name()
        )));
    }
    let mut boundary = 0.0_f64;
    let mut times_compared = 0;
    let mut j = 0;
    for (ta, ba) in a.times.iter().zip(&a.boundary) {
        while j < b.times.len() && b.times[j] < *ta && !same_time(b.times[j], *ta) {
            j += 1;
        }
        if j < b.times.len() && same_time(b.times[j], *ta) {
            boundary = boundary.max(boundary_distance(ba, &b.boundary[j]));
            times_compared += 1;
        }
    }
    if times_compared == 0 {
        return Err(Error::Incompatible("no common record times".into()));
    }
    let geometry_dim = match a.boundary.first() {
        Some(BoundaryState::Radial { dim, .. }) => Some(*dim),
        _ => None,
    };
    let mut field_l1 = 0.0_f64;
    let mut snapshots_compared = 0;
    for sa in &a.snapshots {
        let Some(sb) = b.snapshots.iter().find(|sb| same_time(sb.t, sa.t)) else {
            continue;
        };
        let (ga, gb) = (sa.grid, sb.grid);
        if (ga.h - gb.h).abs() > 1e-12 * ga.h || (ga.x0 - gb.x0).abs() > 1e-9 * ga.h {
            return Err(Error::Incompatible(format!(
                "grids (x0 {}, h {}) and (x0 {}, h {})",
                ga.x0, ga.h, gb.x0, gb.h
            )));
        }
        let n = ga.n.max(gb.n);
        let at = |s: &Snapshot, i: usize| s.values.get(i).copied().unwrap_or(0.0);
        let l1: f64 = (0..n)
            .map(|i| {
                let vol = match geometry_dim {
                    Some(dim) => crate::kernel::shell_volume(dim, ga.node(i), ga.h),
                    None => ga.h,
                };
                (at(sa, i) - at(sb, i)).abs() * vol
            })
            .sum();
        field_l1 = field_l1.max(l1);
        snapshots_compared += 1;
    }
    Ok(Discrepancy {
        boundary,
        field_l1,
        times_compared,
        snapshots_compared,
    })
}

/// Result of running an ordered pair of scenarios side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub steps: usize,
    /// Largest `u_low - u_high` seen (≤ 0 when ordered).
    pub max_field_excess: f64,
    /// Largest amount by which the lower habitat stuck out of the upper one.
    pub max_boundary_excess: f64,
    /// Time and description of the first violation.
    pub first_violation: Option<(f64, String)>,
    /// Boundary components of both runs at the final time.
    pub final_low: Vec<f64>,
    pub final_high: Vec<f64>,
}

impl ComparisonReport {
    pub fn ordered(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Rounding slack for the ordering checks.
const ORDER_TOL: f64 = 1e-12;

/// Amount by which habitat `low` sticks out of habitat `high`.
fn boundary_excess(low: &BoundaryState, high: &BoundaryState) -> f64 {
    match (*low, *high) {
        (
            BoundaryState::LineCs {
                s_minus: a,
                s_plus: b,
            },
            BoundaryState::LineCs {
                s_minus: c,
                s_plus: d,
            },
        ) => (c - a).max(b - d),
        _ => low.position() - high.position(),
    }
}

fn union_layout(a: &Layout, b: &Layout) -> Result<Layout> {
    let h = a.grid.h;
    if (b.grid.h - h).abs() > 1e-12 * h || a.geometry != b.geometry {
        return Err(Error::Incompatible("scenarios use different grids".into()));
    }
    let shift = (a.grid.x0 - b.grid.x0) / h;
    if (shift - shift.round()).abs() > 1e-6 {
        return Err(Error::Incompatible("grids are not aligned".into()));
    }
    let x0 = a.grid.x0.min(b.grid.x0);
    let last = a.grid.last().max(b.grid.last());
    let n = ((last - x0) / h).round() as usize + 1;
    Ok(Layout {
        grid: Grid::new(x0, h, n)?,
        geometry: a.geometry,
    })
}

fn check_pair(low: &Simulation, high: &Simulation) -> (f64, f64) {
    let n = low.field.len().min(high.field.len());
    let field = (0..n)
        .map(|i| low.field.values[i] - high.field.values[i])
        .chain(low.field.values[n..].iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    (field, boundary_excess(&low.boundary, &high.boundary))
}

/// Runs `low` and `high` in lock step to `t_end` and checks `u ≤ û` at
/// every node and `Ω ⊆ Ω̂` after every step.
pub fn check_comparison(
    low: &ScenarioConfig,
    high: &ScenarioConfig,
    t_end: f64,
) -> Result<ComparisonReport> {
    if low.variant != high.variant {
        return Err(Error::Incompatible("comparison needs one variant".into()));
    }
    if (low.dt() - high.dt()).abs() > 1e-15 || low.kernel != high.kernel {
        return Err(Error::Incompatible(
            "comparison needs the same kernel and dt".into(),
        ));
    }
    if low.halfline_a().ok() != high.halfline_a().ok() {
        return Err(Error::Incompatible(
            "comparison needs the same Dirichlet datum".into(),
        ));
    }
    let layout = union_layout(&low.layout()?, &high.layout()?)?;
    let mut sl = Simulation::with_layout(low, &layout)?;
    let mut sh = Simulation::with_layout(high, &layout)?;
    let (f0, b0) = check_pair(&sl, &sh);
    if f0 > ORDER_TOL || b0 > ORDER_TOL {
        return Err(Error::Unordered(format!(
            "u0 excess {f0:e}, boundary excess {b0:e}"
        )));
    }
    let steps = (t_end / sl.params.dt).round() as usize;
    let mut report = ComparisonReport {
        steps,
        max_field_excess: f0,
        max_boundary_excess: b0,
        first_violation: None,
        final_low: Vec::new(),
        final_high: Vec::new(),
    };
    for _ in 0..steps {
        sl.step()?;
        sh.step()?;
        let (f, b) = check_pair(&sl, &sh);
        report.max_field_excess = report.max_field_excess.max(f);
        report.max_boundary_excess = report.max_boundary_excess.max(b);
        if report.first_violation.is_none() && (f > ORDER_TOL || b > ORDER_TOL) {
            let what = if f > ORDER_TOL {
                format!("u exceeds û by {f:e}")
            } else {
                format!("habitat exceeds the upper one by {b:e}")
            };
            report.first_violation = Some((sl.t, what));
        }
    }
    report.final_low = sl.boundary.components();
    report.final_high = sh.boundary.components();
    Ok(report)
}

/// Scenarios of the desk-scale oracle suite: every variant on at most 64
/// nodes, integrated to `T = 2`.
pub const DESK_SUITE: [(&str, &str); 4] = [
    (
        "line1fb",
        r#"
variant = "line1fb"
[kernel]
kind = "triangle"
d = 0.5
[grid]
h = 0.1
margin_left = 1.5
margin_right = 1.0
[time]
t_end = 2.0
dt = 0.05
[initial]
profile = "bump"
amplitude = 1.0
center = 0.0
radius = 0.5
s0 = 0.5
"#,
    ),
    (
        "linecs",
        r#"
variant = "linecs"
[kernel]
kind = "triangle"
d = 0.5
[grid]
h = 0.1
margin_left = 1.0
margin_right = 1.0
[time]
t_end = 2.0
dt = 0.05
[initial]
profile = "bump"
amplitude = 1.0
center = 0.0
radius = 0.5
s0_minus = -0.5
s0_plus = 0.5
"#,
    ),
    (
        "halfline",
        r#"
variant = "halfline"
[kernel]
kind = "triangle"
d = 0.5
[grid]
h = 0.1
margin_right = 1.0
[time]
t_end = 2.0
dt = 0.05
[initial]
profile = "bump"
amplitude = 0.5
center = 0.5
radius = 0.5
s0 = 1.0
[halfline]
A = 0.5
"#,
    ),
    (
        "radial",
        r#"
variant = "radial"
[kernel]
kind = "triangle"
d = 0.5
[grid]
h = 0.1
margin_right = 1.0
[time]
t_end = 2.0
dt = 0.05
[initial]
profile = "bump"
amplitude = 1.0
radius = 1.0
R0 = 1.0
[radial]
N = 2
"#,
    ),
];

/// Outcome of one scenario of the oracle suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCase {
    pub name: String,
    pub nodes: usize,
    pub t_end: f64,
    pub discrepancy: Discrepancy,
    /// `10 (dt + h)`.
    pub allowance: f64,
    pub contraction_ratio: f64,
    pub residual: f64,
    pub slabs: usize,
}

impl OracleCase {
    pub fn passed(&self) -> bool {
        self.discrepancy.boundary <= self.allowance && self.contraction_ratio <= MAX_CONTRACTION
    }
}

/// Runs the stepper and [`picard_solve`] on one scenario and compares them.
pub fn oracle_case(name: &str, config: &ScenarioConfig, tol: f64) -> Result<OracleCase> {
    let t_end = config.time.t_end;
    let solution = picard_solve(config, t_end, tol)?;
    let mut stepper_config = config.clone();
    stepper_config.time.record_every = Some(config.dt());
    stepper_config.time.snapshots = solution.times.clone();
    let record = crate::stepper::run(&stepper_config)?;
    let discrepancy = compare_runs(&record, &solution.to_record())?;
    Ok(OracleCase {
        name: name.to_string(),
        nodes: solution.grid.n,
        t_end,
        discrepancy,
        allowance: 10.0 * (config.dt() + config.grid.h),
        contraction_ratio: solution.contraction_ratio(),
        residual: solution.residual(),
        slabs: solution.slabs.len(),
    })
}

/// The shipped desk-scale suite.
pub fn desk_suite(tol: f64) -> Result<Vec<OracleCase>> {
    DESK_SUITE
        .iter()
        .map(|(name, text)| oracle_case(name, &parse_config(text)?, tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::run;

    fn suite(name: &str) -> ScenarioConfig {
        let text = DESK_SUITE.iter().find(|(n, _)| *n == name).unwrap().1;
        parse_config(text).unwrap()
    }

    #[test]
    fn desk_scenarios_are_small() {
        for (name, _) in DESK_SUITE {
            let c = suite(name);
            assert!(
                c.layout().unwrap().grid.n <= 64,
                "{name}: {}",
                c.layout().unwrap().grid.n
            );
            assert_eq!(c.time.t_end, 2.0);
        }
    }

    #[test]
    fn trivial_datum_is_a_fixed_point_at_once() {
        let mut c = suite("line1fb");
        c.initial.profile = crate::config::ProfileChoice::Zero;
        let sol = picard_solve(&c, 1.0, 1e-12).unwrap();
        assert_eq!(sol.slabs.len(), 1);
        assert_eq!(sol.slabs[0].sweeps, 1);
        assert!(sol.boundary.iter().all(|b| b.position() == 0.5));
    }

    #[test]
    fn line_bump_matches_fine_stepper() {
        let text = r#"
variant = "line1fb"
[kernel]
kind = "triangle"
d = 0.5
[grid]
h = 0.1
margin_left = 0.0
margin_right = 0.0
[time]
t_end = 1.0
dt = 0.001
[initial]
profile = "bump"
amplitude = 0.4
center = 0.0
radius = 0.5
s0 = 0.5
"#;
        let c = parse_config(text).unwrap();
        assert_eq!(
            c.layout().unwrap().grid.n,
            21,
            "{:?}",
            c.layout().unwrap().grid
        );
        let sol = picard_solve(&c, 1.0, 1e-12).unwrap();
        let rec = run(&c).unwrap();
        let gap = (sol.final_boundary().position() - rec.boundary.last().unwrap().position()).abs();
        assert!(gap < 5e-3, "gap {gap}");
    }

    #[test]
    fn oracle_output_is_a_fixed_point() {
        let c = suite("linecs");
        let sol = picard_solve(&c, 2.0, 1e-12).unwrap();
        let sim = Simulation::new(&c).unwrap();
        let mut slab = Slab {
            sim: &sim,
            field: sim.field.clone(),
            dt: c.dt(),
        };
        let (u, s) = slab.sweep(&sol.fields, &sol.boundary).unwrap();
        let d = slab.distance(&u, &sol.fields, &s, &sol.boundary);
        assert!(d < 1e-10, "{d}");
    }

    #[test]
    fn contraction_is_geometric() {
        let sol = picard_solve(&suite("radial"), 2.0, 1e-12).unwrap();
        assert!(sol.contraction_ratio() > 0.0);
        assert!(sol.contraction_ratio() <= MAX_CONTRACTION);
    }

    #[test]
    fn identical_records_do_not_differ() {
        let rec = run(&suite("halfline")).unwrap();
        let d = compare_runs(&rec, &rec).unwrap();
        assert_eq!(d.boundary, 0.0);
        assert_eq!(d.field_l1, 0.0);
    }

    #[test]
    fn records_of_different_variants_are_rejected() {
        let a = run(&suite("line1fb")).unwrap();
        let b = run(&suite("linecs")).unwrap();
        assert!(matches!(compare_runs(&a, &b), Err(Error::Incompatible(_))));
    }

    #[test]
    fn identical_configs_are_trivially_ordered() {
        let c = suite("line1fb");
        let r = check_comparison(&c, &c, 1.0).unwrap();
        assert!(r.ordered());
        assert_eq!(r.max_field_excess, 0.0);
        assert_eq!(r.final_low, r.final_high);
    }

    #[test]
    fn doubled_datum_pushes_further() {
        let low = suite("line1fb");
        let mut high = low.clone();
        high.initial.amplitude = Some(2.0);
        let r = check_comparison(&low, &high, 2.0).unwrap();
        assert!(r.ordered(), "{:?}", r.first_violation);
        assert!(r.final_high[0] > r.final_low[0]);
    }

    #[test]
    fn swapped_pair_is_rejected() {
        let low = suite("radial");
        let mut high = low.clone();
        high.initial.amplitude = Some(2.0);
        assert!(matches!(
            check_comparison(&high, &low, 1.0),
            Err(Error::Unordered(_))
        ));
    }
}
