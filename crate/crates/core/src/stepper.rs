//! Time stepping.
//!
//! One step of length `dt` with `c = 1 - e^{-dt}` and `a = J * u`:
//!
//! ```text
//! u⁺_i = e^{-dt} u_i + c · a_i · inside_i
//! Δ|Ω| = c · Σ_i a_i · outside_i · vol_i
//! ```
//!
//! where `inside_i` is the covered fraction of cell `i` before the step. The
//! population that the averaging sends into the uncovered part of the cells
//! is exactly what the habitat gains, so `M + |Ω|` is invariant up to
//! rounding whenever `Σ a_i vol_i = M` (whole line and radial). The update
//! is a nonnegative combination of the old values, which makes the scheme
//! monotone: ordered data stay ordered.

use crate::config::{Layout, ScenarioConfig};
use crate::correctors::{solve_phi_with_frontier, solve_psi, CorrectorProfile};
use crate::error::{Error, Result};
use crate::kernel::{
    convolve_into, convolve_radial_into, radial_reduce, Kernel, RadialKernelMatrix,
};
use crate::quadrature::unit_ball_volume;
use crate::state::{
    activate_nodes, first_moment, init_on_layout, mass, BoundaryState, DensityField, RunRecord,
    Snapshot, StepStats, Variant,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParams {
    pub dt: f64,
    /// Extra evaluations of the averaging at the end of the step; each one
    /// replaces the frozen average by the exact exponential weight of a
    /// linear-in-time average.
    pub picard_iters: usize,
    pub picard_tol: f64,
}

impl StepParams {
    pub fn new(dt: f64) -> Result<Self> {
        let p = StepParams {
            dt,
            picard_iters: 0,
            picard_tol: 1e-12,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} outside (0, 0.5]",
                self.dt
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "picard_tol = {}",
                self.picard_tol
            )));
        }
        Ok(())
    }
}

/// The averaging operator `u ↦ J * u` in the geometry of a variant.
#[derive(Debug, Clone, Copy)]
pub enum Averaging<'a> {
    Line(&'a Kernel),
    /// Half-line: the values on `(-d, 0)` are held at `a`.
    HalfLine {
        kernel: &'a Kernel,
        a: f64,
    },
    Radial(&'a RadialKernelMatrix),
}

impl Averaging<'_> {
    pub fn apply(&self, field: &DensityField) -> Result<Vec<f64>> {
        let n = field.len();
        let mut out = vec![0.0; n];
        match *self {
            Averaging::Line(kernel) => {
                check_step(field, kernel)?;
                convolve_into(kernel.weights(), &field.values, &mut out);
            }
            Averaging::HalfLine { kernel, a } => {
                check_step(field, kernel)?;
                let m = kernel.half_width();
                let mut ext = vec![a; m];
                ext.extend_from_slice(&field.values);
                let mut ext_out = vec![0.0; n + m];
                convolve_into(kernel.weights(), &ext, &mut ext_out);
                out.copy_from_slice(&ext_out[m..]);
            }
            Averaging::Radial(matrix) => {
                if matrix.len() != n {
                    return Err(Error::LengthMismatch {
                        expected: matrix.len(),
                        got: n,
                    });
                }
                convolve_radial_into(matrix, &field.values, &mut out);
            }
        }
        Ok(out)
    }

    fn reach(&self) -> f64 {
        match *self {
            Averaging::Line(k) | Averaging::HalfLine { kernel: k, .. } => k.support(),
            Averaging::Radial(m) => m.support(),
        }
    }
}

fn check_step(field: &DensityField, kernel: &Kernel) -> Result<()> {
    if (field.grid.h - kernel.step()).abs() > 1e-9 * kernel.step() {
        return Err(Error::StepMismatch {
            grid: field.grid.h,
            kernel: kernel.step(),
        });
    }
    Ok(())
}

/// Book-keeping of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Habitat gained on the side of decreasing coordinate.
    pub flux_below: f64,
    /// Habitat gained on the side of increasing coordinate.
    pub flux_above: f64,
    /// `c · (Σ a_i vol_i - M)`: the net exchange with the ghost strip.
    pub exchange: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    pub activated: usize,
}

/// Advances `(field, boundary)` from `t` to `t + dt`.
pub fn advance(
    field: &mut DensityField,
    boundary: &mut BoundaryState,
    op: Averaging<'_>,
    params: &StepParams,
    t: f64,
) -> Result<StepReport> {
    params.validate()?;
    let dt = params.dt;
    let decay = (-dt).exp();
    let c = -(-dt).exp_m1();
    let n = field.len();
    let mass_before = mass(field);
    let splits: Vec<_> = (0..n).map(|i| field.split(i, boundary)).collect();

    let mut avg = op.apply(field)?;
    if params.picard_iters > 0 {
        let beta = (dt - c) / dt;
        let lam = beta / c;
        let a0 = avg.clone();
        let mut trial = field.clone();
        for _ in 0..params.picard_iters {
            for i in 0..n {
                trial.values[i] = decay * field.values[i] + c * avg[i] * splits[i].inside;
            }
            let a1 = op.apply(&trial)?;
            let mut change = 0.0_f64;
            for i in 0..n {
                let next = (1.0 - lam) * a0[i] + lam * a1[i];
                change = change.max((next - avg[i]).abs());
                avg[i] = next;
            }
            if change <= params.picard_tol {
                break;
            }
        }
    }

    let mut flux_below = 0.0;
    let mut flux_above = 0.0;
    let mut gross = 0.0;
    for i in 0..n {
        let s = splits[i];
        let vol = field.volume(i);
        let inflow = c * avg[i];
        field.values[i] = decay * field.values[i] + inflow * s.inside;
        flux_below += inflow * s.below * vol;
        flux_above += inflow * s.above * vol;
        gross += avg[i] * vol;
    }
    let exchange = c * (gross - mass_before);
    let mass_after = mass(field);

    if params.picard_iters > 0 && !matches!(op, Averaging::HalfLine { .. }) {
        // the refined average no longer sums to M; hand the difference to
        // the boundaries so that the habitat-plus-mass identity stays exact
        let defect = mass_before - mass_after - flux_below - flux_above;
        let total = flux_below + flux_above;
        if total > 0.0 {
            flux_below += defect * flux_below / total;
            flux_above += defect * flux_above / total;
        } else {
            flux_above += defect;
        }
        flux_below = flux_below.max(0.0);
        flux_above = flux_above.max(0.0);
    }

    let old = *boundary;
    *boundary = match old {
        BoundaryState::Line1fb { s } => BoundaryState::Line1fb { s: s + flux_above },
        BoundaryState::HalfLine { s } => BoundaryState::HalfLine { s: s + flux_above },
        BoundaryState::LineCs { s_minus, s_plus } => BoundaryState::LineCs {
            s_minus: s_minus - flux_below,
            s_plus: s_plus + flux_above,
        },
        BoundaryState::Radial { dim, volume, .. } => {
            let v = volume + flux_above;
            BoundaryState::Radial {
                r: (v / unit_ball_volume(dim)).powf(1.0 / dim as f64),
                dim,
                volume: v,
            }
        }
    };
    let activated = activate_nodes(field, &old, boundary, t + dt)?;

    let reach = op.reach() + 2.0 * field.grid.h;
    let hi = match *boundary {
        BoundaryState::Line1fb { s } | BoundaryState::HalfLine { s } => s,
        BoundaryState::LineCs { s_plus, .. } => s_plus,
        BoundaryState::Radial { r, .. } => r,
    };
    if let BoundaryState::HalfLine { s } = *boundary {
        let d = op.reach();
        if s + 2.0 * d >= field.grid.last() {
            let extra = field.len();
            field.extend(extra);
        }
    } else if hi + reach > field.grid.last() {
        return Err(Error::MarginExhausted { t: t + dt });
    }
    if let BoundaryState::LineCs { s_minus, .. } = *boundary {
        if s_minus - reach < field.grid.x0 {
            return Err(Error::MarginExhausted { t: t + dt });
        }
    }

    Ok(StepReport {
        flux_below,
        flux_above,
        exchange,
        mass_before,
        mass_after,
        activated,
    })
}

pub fn step_line1fb(
    field: &mut DensityField,
    boundary: &mut BoundaryState,
    kernel: &Kernel,
    params: &StepParams,
    t: f64,
) -> Result<StepReport> {
    expect_variant(boundary, Variant::Line1fb)?;
    advance(field, boundary, Averaging::Line(kernel), params, t)
}

pub fn step_linecs(
    field: &mut DensityField,
    boundary: &mut BoundaryState,
    kernel: &Kernel,
    params: &StepParams,
    t: f64,
) -> Result<StepReport> {
    expect_variant(boundary, Variant::LineCs)?;
    advance(field, boundary, Averaging::Line(kernel), params, t)
}

pub fn step_halfline(
    field: &mut DensityField,
    boundary: &mut BoundaryState,
    kernel: &Kernel,
    params: &StepParams,
    t: f64,
    a: f64,
) -> Result<StepReport> {
    expect_variant(boundary, Variant::HalfLine)?;
    if !(a >= 0.0) {
        return Err(Error::InvalidParameter(format!("A = {a} is negative")));
    }
    advance(
        field,
        boundary,
        Averaging::HalfLine { kernel, a },
        params,
        t,
    )
}

pub fn step_radial(
    field: &mut DensityField,
    boundary: &mut BoundaryState,
    matrix: &RadialKernelMatrix,
    params: &StepParams,
    t: f64,
) -> Result<StepReport> {
    expect_variant(boundary, Variant::Radial)?;
    advance(field, boundary, Averaging::Radial(matrix), params, t)
}

fn expect_variant(boundary: &BoundaryState, v: Variant) -> Result<()> {
    if boundary.variant() != v {
        return Err(Error::InvalidParameter(format!(
            "expected a {} boundary, got {}",
            v.name(),
            boundary.variant().name()
        )));
    }
    Ok(())
}

/// A scenario in progress.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub variant: Variant,
    pub field: DensityField,
    pub boundary: BoundaryState,
    pub t: f64,
    pub steps: usize,
    pub params: StepParams,
    pub kernel: Kernel,
    radial: Option<RadialKernelMatrix>,
    ghost: f64,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        Self::with_layout(config, &config.layout()?)
    }

    /// Starts the scenario on a given grid instead of the automatic one.
    pub fn with_layout(config: &ScenarioConfig, layout: &Layout) -> Result<Self> {
        config.validate()?;
        let kernel = config.kernel()?;
        let (field, boundary) = init_on_layout(config, layout)?;
        let radial = match config.variant {
            Variant::Radial => Some(radial_reduce(&kernel, config.radial_dim()?, field.len())?),
            _ => None,
        };
        let ghost = match config.variant {
            Variant::HalfLine => config.halfline_a()?,
            _ => 0.0,
        };
        let params = StepParams {
            dt: config.dt(),
            picard_iters: config.time.picard_iters,
            picard_tol: config.time.picard_tol,
        };
        params.validate()?;
        Ok(Simulation {
            variant: config.variant,
            field,
            boundary,
            t: 0.0,
            steps: 0,
            params,
            kernel,
            radial,
            ghost,
        })
    }

    pub fn averaging(&self) -> Averaging<'_> {
        match self.variant {
            Variant::Line1fb | Variant::LineCs => Averaging::Line(&self.kernel),
            Variant::HalfLine => Averaging::HalfLine {
                kernel: &self.kernel,
                a: self.ghost,
            },
            Variant::Radial => Averaging::Radial(self.radial.as_ref().expect("radial matrix")),
        }
    }

    pub fn radial_matrix(&self) -> Option<&RadialKernelMatrix> {
        self.radial.as_ref()
    }

    pub fn step(&mut self) -> Result<StepReport> {
        let op = match self.variant {
            Variant::Line1fb | Variant::LineCs => Averaging::Line(&self.kernel),
            Variant::HalfLine => Averaging::HalfLine {
                kernel: &self.kernel,
                a: self.ghost,
            },
            Variant::Radial => Averaging::Radial(self.radial.as_ref().expect("radial matrix")),
        };
        let stamped = self.t + self.params.dt;
        let report = advance(
            &mut self.field,
            &mut self.boundary,
            op,
            &self.params,
            self.t,
        )?;
        self.steps += 1;
        self.t = self.steps as f64 * self.params.dt;
        if report.activated > 0 && stamped != self.t {
            // keep activation times on the same clock as `t`
            for tau in self.field.activation_time.iter_mut().filter(|tau| **tau == stamped) {
                *tau = self.t;
            }
        }
        Ok(report)
    }
}

/// Moment weights tabulated on the simulation nodes.
struct MomentWeights {
    values: Vec<f64>,
    profile: CorrectorProfile,
    anchor: f64,
}

impl MomentWeights {
    fn refresh(&mut self, field: &DensityField) {
        while self.values.len() < field.len() {
            let x = field.grid.node(self.values.len());
            self.values.push(self.profile.eval(x - self.anchor));
        }
    }

    fn moment(&self, field: &DensityField) -> f64 {
        field
            .values
            .iter()
            .zip(&self.values)
            .zip(field.volumes())
            .map(|((u, w), v)| u * w * v)
            .sum()
    }
}

/// Covered fraction of the cell containing `s` (the last cell that meets
/// `(-∞, s)`).
pub fn frontier_fraction(field: &DensityField, s: f64) -> f64 {
    let b = BoundaryState::Line1fb { s };
    (0..field.len())
        .map(|i| field.split(i, &b).inside)
        .rfind(|&f| f > 0.0)
        .unwrap_or(1.0)
}

/// The `φ` weights whose moment the line scheme cannot increase, anchored at
/// `s_∞` on the grid of `field`.
pub fn phi_for_grid(
    kernel: &Kernel,
    field: &DensityField,
    anchor: f64,
    extent: f64,
    tol: f64,
) -> Result<CorrectorProfile> {
    let theta = frontier_fraction(field, anchor);
    let need = anchor - field.grid.x0 + 2.0 * kernel.support();
    let extent = extent.max((need / kernel.step()).ceil() * kernel.step());
    solve_phi_with_frontier(kernel, extent, theta, tol)
}

/// Runs a scenario to `time.t_end`.
pub fn run(config: &ScenarioConfig) -> Result<RunRecord> {
    let mut sim = Simulation::new(config)?;
    let dt = sim.params.dt;
    let n_steps = (config.time.t_end / dt).round() as usize;
    let stride = config.record_stride();
    let mut record = RunRecord::new(config.variant, dt);

    let m0 = mass(&sim.field);
    let extent = config.corrector_extent();
    let tol = config.diagnostics.corrector_tol;
    let mut phi = None;
    let mut psi = None;
    match config.variant {
        Variant::Line1fb => {
            let anchor = sim.boundary.measure() + m0;
            let profile = phi_for_grid(&sim.kernel, &sim.field, anchor, extent, tol)?;
            phi = Some(MomentWeights {
                values: Vec::new(),
                profile,
                anchor,
            });
            record.anchor = Some(anchor);
            record.m_phi = Some(Vec::new());
            record.first_moment = Some(Vec::new());
        }
        Variant::HalfLine => {
            let need = sim.field.grid.last() + 2.0 * sim.kernel.support();
            let ext = extent.max((need / sim.kernel.step()).ceil() * sim.kernel.step());
            psi = Some(MomentWeights {
                values: Vec::new(),
                profile: solve_psi(&sim.kernel, ext, tol)?,
                anchor: 0.0,
            });
            record.m_psi = Some(Vec::new());
        }
        _ => {}
    }

    let mut snapshot_steps: Vec<(usize, f64)> = config
        .time
        .snapshots
        .iter()
        .map(|&ts| (((ts / dt).round() as usize).min(n_steps), ts))
        .collect();
    snapshot_steps.sort_by_key(|p| p.0);
    let mut next_snapshot = 0;

    let mut m_phi_prev = None;
    let push = |record: &mut RunRecord,
                sim: &Simulation,
                phi: &mut Option<MomentWeights>,
                psi: &mut Option<MomentWeights>| {
        record.times.push(sim.t);
        record.boundary.push(sim.boundary);
        record.mass.push(mass(&sim.field));
        record.sup_norm.push(sim.field.sup_norm());
        if let Some(w) = phi.as_mut() {
            w.refresh(&sim.field);
            record
                .m_phi
                .as_mut()
                .expect("m_phi")
                .push(w.moment(&sim.field));
            record
                .first_moment
                .as_mut()
                .expect("first moment")
                .push(first_moment(&sim.field, w.anchor));
        }
        if let Some(w) = psi.as_mut() {
            w.refresh(&sim.field);
            record
                .m_psi
                .as_mut()
                .expect("m_psi")
                .push(w.moment(&sim.field));
        }
    };

    push(&mut record, &sim, &mut phi, &mut psi);
    while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == 0 {
        record.snapshots.push(snapshot(&sim));
        next_snapshot += 1;
    }
    let mut stats = record.stats;
    StepStats::lower(&mut stats.min_value, sim.field.min_value());
    if let Some(w) = phi.as_mut() {
        w.refresh(&sim.field);
        m_phi_prev = Some(w.moment(&sim.field));
    }
    for k in 1..=n_steps {
        let measure_before = sim.boundary.measure();
        let report = sim.step()?;
        let measure_after = sim.boundary.measure();
        stats.steps += 1;
        StepStats::lower(&mut stats.min_value, sim.field.min_value());
        StepStats::raise(
            &mut stats.max_mass_increase,
            report.mass_after - report.mass_before,
        );
        StepStats::raise(
            &mut stats.max_boundary_regression,
            measure_before - measure_after,
        );
        let defect = if config.variant.conserves() {
            (report.mass_after + measure_after) - (report.mass_before + measure_before)
        } else {
            report.mass_after + (measure_after - measure_before)
                - report.mass_before
                - report.exchange
        };
        StepStats::raise(&mut stats.max_conservation_defect, defect.abs());
        if let Some(w) = phi.as_mut() {
            w.refresh(&sim.field);
            let m = w.moment(&sim.field);
            if let Some(prev) = m_phi_prev {
                StepStats::raise(&mut stats.max_m_phi_increase, m - prev);
            }
            m_phi_prev = Some(m);
        }
        if k % stride == 0 || k == n_steps {
            push(&mut record, &sim, &mut phi, &mut psi);
        }
        while next_snapshot < snapshot_steps.len() && snapshot_steps[next_snapshot].0 == k {
            record.snapshots.push(snapshot(&sim));
            next_snapshot += 1;
        }
    }
    record.stats = stats;
    Ok(record)
}

fn snapshot(sim: &Simulation) -> Snapshot {
    Snapshot {
        t: sim.t,
        grid: sim.field.grid,
        values: sim.field.values.clone(),
    }
}
