//! Post-processing of run records: decay rates, limits, the asymptotic
//! profile, and the free-boundary constants.

use serde::Serialize;

use crate::correctors::{dipole, CorrectorProfile};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::quadrature::{linear_fit, unit_ball_volume};
use crate::state::{BoundaryState, DensityField, RunRecord, Snapshot, Variant};

/// Per-step tolerance for monotonicity flags.
pub const MONOTONE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    /// Log-log slope for power laws; decay rate for exponentials.
    pub exponent: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub rms_residual: f64,
    pub samples: usize,
}

fn window_samples(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if times.len() != values.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    let (lo, hi) = window;
    let tol = 1e-9 * hi.abs().max(1.0);
    let picked: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= lo - tol && **t <= hi + tol)
        .map(|(t, v)| (*t, *v))
        .collect();
    if picked.len() < 2 || !(hi > lo) {
        return Err(Error::EmptyWindow { lo, hi });
    }
    if let Some(&(t, value)) = picked.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::NonPositive { t, value });
    }
    Ok(picked)
}

/// Least-squares fit of `log y = log a + p log t`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let pts = window_samples(times, values, window)?;
    if let Some(&(t, _)) = pts.iter().find(|(t, _)| !(*t > 0.0)) {
        return Err(Error::NonPositive { t, value: t });
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (a, b, rms) = linear_fit(&xs, &ys);
    Ok(RateFit {
        exponent: b,
        prefactor: a.exp(),
        window,
        rms_residual: rms,
        samples: pts.len(),
    })
}

/// Least-squares fit of `log y = log a - λ t`; `exponent` is `λ`.
pub fn fit_exponential(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<RateFit> {
    let pts = window_samples(times, values, window)?;
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (a, b, rms) = linear_fit(&xs, &ys);
    Ok(RateFit {
        exponent: -b,
        prefactor: a.exp(),
        window,
        rms_residual: rms,
        samples: pts.len(),
    })
}

/// Window `[lo T, hi T]` from fractions of the final time.
pub fn fraction_window(record: &RunRecord, fractions: [f64; 2]) -> (f64, f64) {
    let t_end = record.times.last().copied().unwrap_or(0.0);
    (fractions[0] * t_end, fractions[1] * t_end)
}

/// Signature shared by [`fit_power_law`] and [`fit_exponential`].
pub type Fitter = fn(&[f64], &[f64], (f64, f64)) -> Result<RateFit>;

/// Exponent change when the window `[T/4, T]` is replaced by `[T/2, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowStability {
    pub wide: RateFit,
    pub narrow: RateFit,
    pub shift: f64,
    /// `shift ≤ 3 · max(rms residual)`.
    pub stable: bool,
}

pub fn window_stability(
    times: &[f64],
    values: &[f64],
    t_end: f64,
    fit: Fitter,
) -> Result<WindowStability> {
    let wide = fit(times, values, (0.25 * t_end, t_end))?;
    let narrow = fit(times, values, (0.5 * t_end, t_end))?;
    let shift = (wide.exponent - narrow.exponent).abs();
    Ok(WindowStability {
        wide,
        narrow,
        shift,
        stable: shift <= 3.0 * wide.rms_residual.max(narrow.rms_residual),
    })
}

/// Limit of the advancing coordinate.
///
/// For conserving variants this is the exact identity of the scheme
/// (`s_∞ = s(T) + M(T)`, `ℓ_∞ = ℓ(T) + M(T)`, `R_∞ = ((V + M)/ω_N)^{1/N}`).
/// On the half-line the last value is returned once the boundary has
/// stopped moving.
pub fn limit_boundary(record: &RunRecord) -> Result<f64> {
    let (Some(b), Some(&m)) = (record.boundary.last(), record.mass.last()) else {
        return Err(Error::RunTooShort("empty record".into()));
    };
    match *b {
        BoundaryState::Line1fb { s } => Ok(s + m),
        BoundaryState::LineCs { s_minus, s_plus } => Ok(s_plus - s_minus + m),
        BoundaryState::Radial { dim, volume, .. } => {
            Ok(((volume + m) / unit_ball_volume(dim)).powf(1.0 / dim as f64))
        }
        BoundaryState::HalfLine { s } => {
            let n = record.len();
            if n < 10 {
                return Err(Error::RunTooShort(format!("{n} samples")));
            }
            let k = n - n / 10 - 1;
            let dt = record.times[n - 1] - record.times[k];
            let rate = (s - record.boundary[k].measure()) / dt;
            if rate > 1e-6 * s.max(1.0) {
                return Err(Error::RunTooShort(format!(
                    "boundary still moving at rate {rate:e}"
                )));
            }
            Ok(s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentLimit {
    /// Extrapolated `M*`.
    pub m_star: f64,
    /// `M_φ⁺(T)`.
    pub last: f64,
    /// `2 M_φ⁺(T) - M_φ⁺(T/4)`, exact for `M* + B t^{-1/2}`.
    pub richardson: f64,
    /// Largest recorded increase of `M_φ⁺` between samples.
    pub max_increase: f64,
    /// `max_t |M_φ⁺ - ∫ u (s_∞ - x)| / M(t)`.
    pub cross_ratio: f64,
    /// Corrector bound `C` the ratio is compared against.
    pub bound: f64,
}

/// Limit of the weighted moment `M_φ⁺` recorded against `s_∞`.
pub fn limit_moment(
    record: &RunRecord,
    phi: &CorrectorProfile,
    s_infinity: f64,
) -> Result<MomentLimit> {
    let m_phi = record
        .m_phi
        .as_ref()
        .ok_or_else(|| Error::Inconsistent("record has no M_phi series".into()))?;
    let first = record
        .first_moment
        .as_ref()
        .ok_or_else(|| Error::Inconsistent("record has no first-moment series".into()))?;
    if let Some(anchor) = record.anchor {
        if (anchor - s_infinity).abs() > 1e-9 * s_infinity.abs().max(1.0) {
            return Err(Error::Inconsistent(format!(
                "moments anchored at {anchor}, not {s_infinity}"
            )));
        }
    }
    if m_phi.is_empty() {
        return Err(Error::RunTooShort("empty record".into()));
    }
    let mut max_increase = f64::NEG_INFINITY;
    for k in 1..m_phi.len() {
        let jump = m_phi[k] - m_phi[k - 1];
        max_increase = max_increase.max(jump);
        if jump > MONOTONE_TOL {
            return Err(Error::NotMonotone {
                name: "M_phi",
                t: record.times[k],
                jump,
            });
        }
    }
    let last = *m_phi.last().expect("nonempty");
    let t_end = *record.times.last().expect("nonempty");
    let richardson = match record.times.iter().position(|&t| t >= 0.25 * t_end - 1e-9) {
        Some(k) if t_end > 0.0 && record.times[k] > 0.0 && k + 1 < record.len() => {
            // exact for M* + B t^{-1/2} at the two sample times
            let t1 = record.times[k];
            let r = (t1 / t_end).sqrt();
            (last - r * m_phi[k]) / (1.0 - r)
        }
        _ => last,
    };
    let cross_ratio = m_phi
        .iter()
        .zip(first)
        .zip(&record.mass)
        .filter(|(_, &m)| m > 0.0)
        .map(|((a, b), m)| (a - b).abs() / m)
        .fold(0.0, f64::max);
    Ok(MomentLimit {
        m_star: if last == 0.0 { 0.0 } else { richardson },
        last,
        richardson,
        max_increase: if m_phi.len() > 1 { max_increase } else { 0.0 },
        cross_ratio,
        bound: phi.bound,
    })
}

/// `2 M* φ(x - s_∞)/(s_∞ - x) · D_q(x - s_∞, t)`.
pub fn dipole_profile(
    m_star: f64,
    phi: &CorrectorProfile,
    q: f64,
    s_infinity: f64,
    x: f64,
    t: f64,
) -> Result<f64> {
    let y = x - s_infinity;
    if y >= 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * m_star * phi.eval(y) / (-y) * dipole(q, y, t)?)
}

/// `sup_{x < S} t^{3/2}/(|x| + 1) · |u - profile|` over the nodes of a field.
pub fn profile_error(
    field: &DensityField,
    t: f64,
    m_star: f64,
    phi: &CorrectorProfile,
    q: f64,
    s_infinity: f64,
    s_cut: f64,
) -> Result<f64> {
    profile_error_on(
        &field.grid.nodes().collect::<Vec<_>>(),
        &field.values,
        t,
        m_star,
        phi,
        q,
        s_infinity,
        s_cut,
    )
}

/// [`profile_error`] for a recorded snapshot.
pub fn snapshot_profile_error(
    snap: &Snapshot,
    m_star: f64,
    phi: &CorrectorProfile,
    q: f64,
    s_infinity: f64,
    s_cut: f64,
) -> Result<f64> {
    let xs: Vec<f64> = snap.grid.nodes().collect();
    profile_error_on(&xs, &snap.values, snap.t, m_star, phi, q, s_infinity, s_cut)
}

#[allow(clippy::too_many_arguments)]
fn profile_error_on(
    xs: &[f64],
    values: &[f64],
    t: f64,
    m_star: f64,
    phi: &CorrectorProfile,
    q: f64,
    s_infinity: f64,
    s_cut: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("profile time {t}")));
    }
    if !(s_cut < s_infinity) {
        return Err(Error::InvalidParameter(format!(
            "cut {s_cut} is not below s_inf = {s_infinity}"
        )));
    }
    let lo = xs.first().copied().unwrap_or(s_cut) - s_infinity;
    if !phi.covers_side(lo, s_cut - s_infinity) {
        let (have_lo, have_hi) = phi.coverage();
        return Err(Error::ProfileTooShort {
            have_lo,
            have_hi,
            need_lo: lo,
            need_hi: s_cut - s_infinity,
        });
    }
    let scale = t.powf(1.5);
    let mut worst = 0.0_f64;
    for (&x, &u) in xs.iter().zip(values) {
        if x >= s_cut {
            break;
        }
        let target = dipole_profile(m_star, phi, q, s_infinity, x, t)?;
        worst = worst.max(scale / (x.abs() + 1.0) * (u - target).abs());
    }
    Ok(worst)
}

/// `∫_0^d ∫_{-d}^0 J(x - y) φ(y) dy dx` on the cell grid of the profile.
pub fn boundary_exchange_integral(kernel: &Kernel, phi: &CorrectorProfile) -> f64 {
    let h = kernel.step();
    let m = kernel.half_width() + 1;
    let mut acc = 0.0;
    for j in 0..m.min(phi.len()) {
        let y = phi.node(j);
        if y > 0.0 {
            continue;
        }
        let inner: f64 = (0..m)
            .map(|i| kernel.eval((i as f64 + 0.5) * h - y))
            .sum::<f64>()
            * h;
        acc += inner * phi.values[j] * h;
    }
    acc
}

/// Predicted limit of `t^{3/2} ṡ(t)`.
pub fn refined_speed_constant(kernel: &Kernel, phi: &CorrectorProfile, q: f64, m_star: f64) -> f64 {
    if m_star == 0.0 {
        return 0.0;
    }
    m_star / (2.0 * std::f64::consts::PI.sqrt() * q.powf(1.5))
        * boundary_exchange_integral(kernel, phi)
}

/// `t^{3/2} ṡ` from recorded positions, with `ṡ` the centred difference
/// quotient smoothed by a 5-sample running median.
pub fn scaled_speed(record: &RunRecord) -> Vec<(f64, f64)> {
    let pos = record.positions();
    let n = record.len();
    let mut raw = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let dt = record.times[k] - record.times[k - 1];
        if dt > 0.0 {
            let tm = 0.5 * (record.times[k] + record.times[k - 1]);
            raw.push((tm, (pos[k] - pos[k - 1]) / dt));
        }
    }
    let mut out = Vec::with_capacity(raw.len());
    for k in 2..raw.len().saturating_sub(2) {
        let mut w: Vec<f64> = raw[k - 2..=k + 2].iter().map(|p| p.1).collect();
        w.sort_by(f64::total_cmp);
        let t = raw[k].0;
        out.push((t, t.powf(1.5) * w[2]));
    }
    out
}

/// Mean of `t^{3/2} ṡ` over `window`.
pub fn measured_speed_constant(record: &RunRecord, window: (f64, f64)) -> Result<f64> {
    let pts: Vec<f64> = scaled_speed(record)
        .into_iter()
        .filter(|(t, _)| *t >= window.0 && *t <= window.1)
        .map(|p| p.1)
        .collect();
    if pts.is_empty() {
        return Err(Error::EmptyWindow {
            lo: window.0,
            hi: window.1,
        });
    }
    Ok(pts.iter().sum::<f64>() / pts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalflineGrowth {
    pub f_infinity: f64,
    pub c_star_pred: f64,
    pub c_star_meas: f64,
    /// Largest decrease of `F = M_ψ / t` between consecutive samples.
    pub f_max_decrease: f64,
}

fn intercept_in_inverse_sqrt(pts: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.0.powf(-0.5)).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    linear_fit(&xs, &ys).0
}

/// `F_∞`, `c*` predicted from `(2 C1 A - 2 F_∞)^{1/2}`, and `c*` measured
/// from `s(t)/√t`. Both limits are extrapolated linearly in `t^{-1/2}` over
/// `window`.
pub fn halfline_growth(
    record: &RunRecord,
    c1: f64,
    a: f64,
    window: (f64, f64),
) -> Result<HalflineGrowth> {
    if record.variant != Variant::HalfLine {
        return Err(Error::Incompatible(
            "halfline_growth needs a half-line record".into(),
        ));
    }
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("A = {a} must be positive")));
    }
    let m_psi = record
        .m_psi
        .as_ref()
        .ok_or_else(|| Error::Inconsistent("record has no M_psi series".into()))?;
    let f: Vec<(f64, f64)> = record
        .times
        .iter()
        .zip(m_psi)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, m)| (*t, m / t))
        .collect();
    let f_max_decrease = f.windows(2).map(|w| w[0].1 - w[1].1).fold(0.0, f64::max);
    let in_window = |p: &&(f64, f64)| p.0 >= window.0 && p.0 <= window.1;
    let fw: Vec<(f64, f64)> = f.iter().filter(in_window).copied().collect();
    let sw: Vec<(f64, f64)> = record
        .times
        .iter()
        .zip(record.positions())
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, s)| (*t, s / t.sqrt()))
        .filter(|p| p.0 >= window.0 && p.0 <= window.1)
        .collect();
    if fw.len() < 2 || sw.len() < 2 {
        return Err(Error::EmptyWindow {
            lo: window.0,
            hi: window.1,
        });
    }
    let f_infinity = intercept_in_inverse_sqrt(&fw);
    let c_star_meas = intercept_in_inverse_sqrt(&sw);
    let disc = 2.0 * c1 * a - 2.0 * f_infinity;
    if disc < 0.0 {
        return Err(Error::Inconsistent(format!(
            "2 C1 A - 2 F_inf = {disc:e} is negative"
        )));
    }
    Ok(HalflineGrowth {
        f_infinity,
        c_star_pred: disc.sqrt(),
        c_star_meas,
        f_max_decrease,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correctors::solve_phi;
    use crate::kernel::{build_kernel, second_moment, KernelKind};

    fn times() -> Vec<f64> {
        (1..=200).map(|k| k as f64).collect()
    }

    #[test]
    fn power_law_exponents() {
        let t = times();
        let y: Vec<f64> = t.iter().map(|t| 3.0 / t).collect();
        let f = fit_power_law(&t, &y, (50.0, 200.0)).unwrap();
        assert!((f.exponent + 1.0).abs() < 1e-12 && f.rms_residual < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-10);
        let y: Vec<f64> = t.iter().map(|t| t.powf(-0.5)).collect();
        assert!((fit_power_law(&t, &y, (50.0, 200.0)).unwrap().exponent + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exponential_rates() {
        let t = times();
        let y: Vec<f64> = t.iter().map(|t| (-0.3 * t).exp()).collect();
        assert!((fit_exponential(&t, &y, (10.0, 100.0)).unwrap().exponent - 0.3).abs() < 1e-12);
        let c = vec![2.0; t.len()];
        assert!(
            fit_exponential(&t, &c, (10.0, 100.0))
                .unwrap()
                .exponent
                .abs()
                < 1e-14
        );
    }

    #[test]
    fn fit_errors() {
        let t = times();
        let mut y = vec![1.0; t.len()];
        y[80] = 0.0;
        assert!(matches!(
            fit_power_law(&t, &y, (50.0, 200.0)),
            Err(Error::NonPositive { .. })
        ));
        assert!(matches!(
            fit_power_law(&t, &y, (500.0, 600.0)),
            Err(Error::EmptyWindow { .. })
        ));
    }

    #[test]
    fn exact_profile_has_zero_error() {
        let k = build_kernel(KernelKind::Triangle, 1.0, 0.05).unwrap();
        let phi = solve_phi(&k, 40.0, 1e-10).unwrap();
        let q = second_moment(&k);
        let grid = crate::state::Grid::new(-20.0, 0.05, 440).unwrap();
        let mut f = DensityField::zeros(grid, crate::state::CellGeometry::Line, None);
        let (m_star, s_inf, t) = (0.7, 2.0, 30.0);
        for i in 0..f.len() {
            f.values[i] = dipole_profile(m_star, &phi, q, s_inf, f.grid.node(i), t).unwrap();
        }
        assert_eq!(
            profile_error(&f, t, m_star, &phi, q, s_inf, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn refined_speed_is_linear_in_m_star() {
        let k = build_kernel(KernelKind::Triangle, 1.0, 0.05).unwrap();
        let phi = solve_phi(&k, 40.0, 1e-10).unwrap();
        let q = second_moment(&k);
        assert_eq!(refined_speed_constant(&k, &phi, q, 0.0), 0.0);
        let a = refined_speed_constant(&k, &phi, q, 1.0);
        let b = refined_speed_constant(&k, &phi, q, 2.0);
        assert!(a > 0.0 && (b - 2.0 * a).abs() < 1e-14);
    }

    #[test]
    fn exchange_integral_matches_fine_quadrature() {
        // φ ≈ -x + κ far away; check the double integral against a fine
        // midpoint rule using the tabulated corrector itself
        let k = build_kernel(KernelKind::Triangle, 1.0, 0.02).unwrap();
        let phi = solve_phi(&k, 40.0, 1e-10).unwrap();
        let n = 400;
        let dx = 1.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let x = (i as f64 + 0.5) * dx;
            for j in 0..n {
                let y = -(j as f64 + 0.5) * dx;
                acc += (1.0 - (x - y).abs()).max(0.0) * phi.eval(y) * dx * dx;
            }
        }
        let disc = boundary_exchange_integral(&k, &phi);
        assert!((disc - acc).abs() < 0.02 * acc, "{disc} {acc}");
    }
}
