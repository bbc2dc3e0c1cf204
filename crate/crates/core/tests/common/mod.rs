//! Scenario builders shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stefan_core::config::ProfileChoice;
use stefan_core::{parse_config, ScenarioConfig, Variant};

pub const VARIANTS: [Variant; 4] = [
    Variant::Line1fb,
    Variant::LineCs,
    Variant::HalfLine,
    Variant::Radial,
];

/// Small scenario: `d = 0.5`, `h = 0.1`, `dt = 0.05`, `T = 2`.
pub fn desk(variant: Variant) -> ScenarioConfig {
    let body = match variant {
        Variant::Line1fb => "variant = \"line1fb\"\n[initial]\nprofile = \"bump\"\ncenter = 0.0\nradius = 1.0\ns0 = 1.0\n",
        Variant::LineCs => {
            "variant = \"linecs\"\n[initial]\nprofile = \"bump\"\ncenter = 0.0\nradius = 1.0\ns0_minus = -1.0\ns0_plus = 1.0\n"
        }
        Variant::HalfLine => {
            "variant = \"halfline\"\n[initial]\nprofile = \"bump\"\ncenter = 1.0\nradius = 0.5\ns0 = 1.5\n[halfline]\nA = 0.5\n"
        }
        Variant::Radial => "variant = \"radial\"\n[initial]\nprofile = \"bump\"\nradius = 1.0\nR0 = 1.0\n[radial]\nN = 2\n",
    };
    let text = format!(
        "{body}[kernel]\nkind = \"triangle\"\nd = 0.5\n[grid]\nh = 0.1\n[time]\nt_end = 2.0\ndt = 0.05\n"
    );
    parse_config(&text).expect("desk scenario parses")
}

/// Knot coordinates of the random tables.
fn knots(variant: Variant) -> Vec<f64> {
    let (lo, hi) = match variant {
        Variant::Line1fb => (-2.0, 1.5),
        Variant::LineCs => (-1.5, 1.5),
        Variant::HalfLine => (0.0, 2.0),
        Variant::Radial => (0.0, 1.5),
    };
    let n = ((hi - lo) / 0.25_f64).round() as usize;
    (0..=n).map(|k| lo + 0.25 * k as f64).collect()
}

fn with_table(base: &ScenarioConfig, x: &[f64], u: Vec<f64>) -> ScenarioConfig {
    let mut c = base.clone();
    c.initial.profile = ProfileChoice::Table;
    c.initial.amplitude = None;
    c.initial.center = None;
    c.initial.radius = None;
    c.initial.mass = None;
    c.initial.table_x = Some(x.to_vec());
    c.initial.table_u = Some(u);
    c
}

/// A random pair with `u0 ≤ û0` at every point and `Ω0 ⊆ Ω̂0`, drawn from
/// `seed`. Both data are piecewise linear on common knots and vanish at
/// their free boundaries.
pub fn ordered_pair(variant: Variant, seed: u64) -> (ScenarioConfig, ScenarioConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = desk(variant);
    let x = knots(variant);
    let n = x.len();
    // habitat of each datum as a knot range [first, last]; the datum is
    // zero at and beyond each free end
    let (low_range, high_range) = match variant {
        Variant::Line1fb => {
            let hi = rng.gen_range(6..n);
            let lo = rng.gen_range(5..=hi);
            ((0, lo), (0, hi))
        }
        Variant::LineCs => {
            let left_hi = rng.gen_range(0..4);
            let left_lo = rng.gen_range(left_hi..5);
            let right_hi = rng.gen_range(n - 4..n);
            let right_lo = rng.gen_range(n - 6..=right_hi);
            ((left_lo, right_lo), (left_hi, right_hi))
        }
        Variant::HalfLine | Variant::Radial => {
            let hi = rng.gen_range(2..n);
            let lo = rng.gen_range(1..=hi);
            ((0, lo), (0, hi))
        }
    };
    let open_left = matches!(
        variant,
        Variant::Line1fb | Variant::HalfLine | Variant::Radial
    );
    let interior = |k: usize, (a, b): (usize, usize)| k < b && (k > a || (open_left && k == a));
    let low: Vec<f64> = (0..n)
        .map(|k| {
            if interior(k, low_range) {
                rng.gen_range(0.0..1.0)
            } else {
                0.0
            }
        })
        .collect();
    let high: Vec<f64> = (0..n)
        .map(|k| {
            if interior(k, high_range) {
                low[k] + rng.gen_range(0.0..0.5)
            } else {
                0.0
            }
        })
        .collect();

    let mut a = with_table(&base, &x, low);
    let mut b = with_table(&base, &x, high);
    match variant {
        Variant::Line1fb | Variant::HalfLine => {
            a.initial.s0 = Some(x[low_range.1]);
            b.initial.s0 = Some(x[high_range.1]);
        }
        Variant::LineCs => {
            a.initial.s0_minus = Some(x[low_range.0]);
            a.initial.s0_plus = Some(x[low_range.1]);
            b.initial.s0_minus = Some(x[high_range.0]);
            b.initial.s0_plus = Some(x[high_range.1]);
        }
        Variant::Radial => {
            a.initial.r0 = Some(x[low_range.1]);
            b.initial.r0 = Some(x[high_range.1]);
        }
    }
    if variant == Variant::HalfLine {
        let ghost = rng.gen_range(0.0..1.0);
        for c in [&mut a, &mut b] {
            c.halfline.as_mut().expect("halfline section").a = Some(ghost);
        }
    }
    (a, b)
}
