//! Reassessment of a recorded run against the asymptotic predictions.

use std::collections::BTreeMap;

use serde::Serialize;
use stefan_core::config::ProfileChoice;
use stefan_core::correctors::{principal_eigenvalue, solve_phi, solve_psi, EigenDomain};
use stefan_core::diagnostics::{
    fit_exponential, fit_power_law, fraction_window, halfline_growth, limit_boundary, limit_moment,
    measured_speed_constant, refined_speed_constant, snapshot_profile_error, RateFit, MONOTONE_TOL,
};
use stefan_core::kernel::{corrector_constants, second_moment};
use stefan_core::state::{DensityField, RunRecord};
use stefan_core::stepper::{phi_for_grid, Simulation};
use stefan_core::{Result, ScenarioConfig, Variant};

/// Conservation defects beyond this are scheme failures.
const CONSERVATION_TOL: f64 = 1e-10;
/// Agreement required between the decay rate and the principal eigenvalue.
const EIGEN_REL_TOL: f64 = 0.1;
/// Agreement required between the two estimates of `c*`.
const CSTAR_REL_TOL: f64 = 0.1;
/// Required shrinkage of the profile error between `T/8` and `T/2`.
const PROFILE_DECAY: f64 = 0.25;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub expected: String,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatesReport {
    pub variant: Variant,
    pub window: (f64, f64),
    pub fits: BTreeMap<String, RateFit>,
    pub values: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
}

impl RatesReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn at_most(&mut self, name: &str, measured: f64, limit: f64) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            expected: format!("<= {limit:e}"),
            pass: measured <= limit,
        });
    }

    fn within(&mut self, name: &str, measured: f64, lo: f64, hi: f64) {
        self.checks.push(Check {
            name: name.into(),
            measured,
            expected: format!("in [{lo}, {hi}]"),
            pass: (lo..=hi).contains(&measured),
        });
    }

    fn relative(&mut self, name: &str, measured: f64, predicted: f64, tol: f64) {
        let rel = ((measured - predicted) / predicted).abs();
        self.checks.push(Check {
            name: name.into(),
            measured,
            expected: format!("{predicted} within {}%", tol * 100.0),
            pass: rel <= tol,
        });
    }

    fn value(&mut self, name: &str, v: f64) {
        self.values.insert(name.into(), v);
    }
}

/// Builds the report; numerical failures of the diagnostics propagate.
pub fn assess(record: &RunRecord, config: &ScenarioConfig) -> Result<RatesReport> {
    let window = fraction_window(record, config.diagnostics.fit_window);
    let mut report = RatesReport {
        variant: record.variant,
        window,
        fits: BTreeMap::new(),
        values: BTreeMap::new(),
        checks: Vec::new(),
    };
    let stats = record.stats;
    let t_end = record.times.last().copied().unwrap_or(0.0);
    if let Some(b) = record.boundary.last() {
        for (name, v) in b.components().iter().enumerate() {
            report.value(&format!("boundary_{name}"), *v);
        }
    }
    if let Some(m) = record.mass.last() {
        report.value("mass", *m);
    }
    if let Some(v) = stats.min_value {
        report.at_most("negative_part", (-v).max(0.0), 0.0);
    }
    if let Some(v) = stats.max_boundary_regression {
        report.at_most("boundary_regression", v, MONOTONE_TOL);
    }
    if let Some(v) = stats.max_conservation_defect {
        report.at_most("conservation_defect", v, CONSERVATION_TOL);
    }
    if record.variant.conserves() {
        if let Some(v) = stats.max_mass_increase {
            report.at_most("mass_increase", v, MONOTONE_TOL);
        }
    }
    let kernel = config.kernel()?;
    let tol = config.diagnostics.corrector_tol;

    match record.variant {
        Variant::Line1fb => {
            let sup = fit_power_law(&record.times, &record.sup_norm, window)?;
            let mass = fit_power_law(&record.times, &record.mass, window)?;
            let s_inf = limit_boundary(record)?;
            let gap: Vec<f64> = record.positions().iter().map(|s| s_inf - s).collect();
            let gap_fit = fit_power_law(&record.times, &gap, window)?;
            report.within("sup_u_exponent", sup.exponent, -1.15, -0.85);
            report.within("M_exponent", mass.exponent, -0.62, -0.38);
            report.within("gap_exponent", gap_fit.exponent, -0.62, -0.38);
            report.fits.insert("sup_u".into(), sup);
            report.fits.insert("M".into(), mass);
            report.fits.insert("gap".into(), gap_fit);
            report.value("s_infinity", s_inf);
            if let Some(v) = stats.max_m_phi_increase {
                report.at_most("m_phi_increase", v, MONOTONE_TOL);
            }

            let layout = config.layout()?;
            let template = DensityField::zeros(layout.grid, layout.geometry, None);
            let anchor = record.anchor.unwrap_or(s_inf);
            let weights = phi_for_grid(&kernel, &template, anchor, config.corrector_extent(), tol)?;
            let moment = limit_moment(record, &weights, anchor)?;
            report.value("M_star", moment.m_star);
            report.value("M_phi_last", moment.last);
            report.at_most("moment_cross_identity", moment.cross_ratio, moment.bound);

            let q = second_moment(&kernel);
            let need = s_inf - layout.grid.x0 + 2.0 * kernel.support();
            let phi = solve_phi(&kernel, config.corrector_extent().max(need), tol)?;
            let predicted = refined_speed_constant(&kernel, &phi, q, moment.m_star);
            let measured = measured_speed_constant(record, window)?;
            report.value("speed_constant_predicted", predicted);
            report.relative(
                "speed_constant",
                measured,
                predicted,
                config.diagnostics.rel_tol,
            );

            let s_cut = config.diagnostics.s_cut.unwrap_or(s_inf - kernel.support());
            let mut errors = Vec::new();
            for snap in record.snapshots.iter().filter(|s| s.t > 0.0) {
                let e = snapshot_profile_error(snap, moment.m_star, &phi, q, s_inf, s_cut)?;
                report.value(&format!("profile_error_t{}", snap.t), e);
                errors.push((snap.t, e));
            }
            let near = |t: f64| {
                errors
                    .iter()
                    .find(|(ts, _)| (ts - t).abs() <= 0.5 * record.dt)
                    .map(|p| p.1)
            };
            if let (Some(early), Some(late)) = (near(t_end / 8.0), near(t_end / 2.0)) {
                report.at_most("profile_error_ratio", late / early, PROFILE_DECAY);
            }
        }
        Variant::LineCs => {
            let fit = fit_exponential(&record.times, &record.sup_norm, window)?;
            let ell = limit_boundary(record)?;
            let b = record
                .boundary
                .last()
                .expect("nonempty record")
                .components();
            let mid = 0.5 * (b[0] + b[1]);
            let grid = config.layout()?.grid;
            let eig = principal_eigenvalue(EigenDomain::Interval {
                kernel: &kernel,
                lo: mid - 0.5 * ell,
                hi: mid + 0.5 * ell,
                x0: grid.x0,
                n: grid.n,
            })?;
            report.value("length_infinity", ell);
            report.value("lambda", eig.lambda);
            report.relative("decay_rate", fit.exponent, eig.lambda, EIGEN_REL_TOL);
            report.fits.insert("sup_u".into(), fit);
            report.fits.insert(
                "M".into(),
                fit_exponential(&record.times, &record.mass, window)?,
            );
        }
        Variant::HalfLine => {
            let a = config.halfline_a()?;
            let s0 = config.initial_boundary()?.position();
            let m_psi = record.m_psi.as_ref();
            let need =
                record.positions().iter().fold(s0, |m, &s| m.max(s)) + 2.0 * kernel.support();
            let psi = solve_psi(&kernel, config.corrector_extent().max(need), tol)?;
            report.value("alpha", psi.alpha);
            if a == 0.0 {
                let fit = fit_exponential(&record.times, &record.sup_norm, window)?;
                if let Some(m0) = m_psi.and_then(|m| m.first()) {
                    let bound = s0 + m0 / psi.alpha + config.grid.h;
                    let reach = record
                        .positions()
                        .iter()
                        .fold(f64::NEG_INFINITY, |m, &s| m.max(s));
                    report.at_most("localization", reach, bound);
                }
                report.checks.push(Check {
                    name: "decay_rate".into(),
                    measured: fit.exponent,
                    expected: "> 0".into(),
                    pass: fit.exponent > 0.0,
                });
                report.fits.insert("sup_u".into(), fit);
            } else {
                if let Some(v) = stats.max_mass_increase {
                    report.at_most(
                        "mass_increase",
                        v,
                        a * kernel.support() * record.dt + MONOTONE_TOL,
                    );
                }
                let (_, c1) = corrector_constants(&kernel, &psi, s0)?;
                let growth = halfline_growth(record, c1, a, window)?;
                report.value("C1", c1);
                report.value("F_infinity", growth.f_infinity);
                report.value("c_star_predicted", growth.c_star_pred);
                report.relative(
                    "c_star",
                    growth.c_star_meas,
                    growth.c_star_pred,
                    CSTAR_REL_TOL,
                );
                let trivial = config.initial.profile == ProfileChoice::Zero && s0 == 0.0;
                if trivial {
                    report.at_most("F_decrease", growth.f_max_decrease, MONOTONE_TOL);
                }
                report.fits.insert(
                    "s".into(),
                    fit_power_law(&record.times[1..], &record.positions()[1..], window)?,
                );
            }
        }
        Variant::Radial => {
            let r_inf = limit_boundary(record)?;
            report.value("R_infinity", r_inf);
            let fit = fit_exponential(&record.times, &record.sup_norm, window)?;
            let sim = Simulation::new(config)?;
            if let Some(matrix) = sim.radial_matrix() {
                let eig = principal_eigenvalue(EigenDomain::Ball {
                    matrix,
                    radius: r_inf,
                })?;
                report.value("lambda", eig.lambda);
            }
            report.fits.insert("sup_u".into(), fit);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stefan_core::{parse_config, run};

    #[test]
    fn checks_record_their_verdicts() {
        let mut r = RatesReport {
            variant: Variant::Line1fb,
            window: (0.0, 1.0),
            fits: BTreeMap::new(),
            values: BTreeMap::new(),
            checks: Vec::new(),
        };
        r.at_most("a", 1.0, 2.0);
        r.within("b", -0.9, -1.15, -0.85);
        r.relative("c", 1.05, 1.0, 0.1);
        assert!(r.passed());
        r.relative("d", 1.2, 1.0, 0.1);
        assert!(!r.passed());
        assert_eq!(r.checks.iter().filter(|c| !c.pass).count(), 1);
    }

    #[test]
    fn localized_halfline_is_assessed() {
        let config = parse_config(
            "variant = \"halfline\"\n[kernel]\nkind = \"triangle\"\nd = 1.0\n[grid]\nh = 0.1\n[time]\nt_end = 20.0\nrecord_every = 0.5\n[initial]\nprofile = \"bump\"\ncenter = 1.0\nradius = 0.5\ns0 = 1.5\n[halfline]\nA = 0.0\n",
        )
        .unwrap();
        let report = assess(&run(&config).unwrap(), &config).unwrap();
        assert!(report.passed(), "{:?}", report.checks);
        assert!(report.checks.iter().any(|c| c.name == "localization"));
    }
}
