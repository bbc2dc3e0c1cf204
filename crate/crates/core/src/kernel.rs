//! Dispersal kernels and the averaging operator `f ↦ J * f`.
//!
//! A [`Kernel`] is tabulated on the simulation grid step and renormalized so
//! that its discrete weights sum to one. Every convolution built from it
//! therefore conserves the discrete total mass exactly, which is what the
//! free-boundary bookkeeping in [`crate::stepper`] relies on.
//!
//! Radial problems use a [`RadialKernelMatrix`]: the spherical average of `J`
//! between two shells, computed by Gauss quadrature in the polar angle and
//! column-normalized against the shell volumes.

use rayon::prelude::*;

use crate::correctors::CorrectorProfile;
use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, sine_power_integral, unit_ball_volume};

/// Relative tolerance used when comparing grid steps.
const STEP_TOL: f64 = 1e-9;

/// Below this much work a convolution is evaluated on one thread.
const PAR_THRESHOLD: usize = 1 << 18;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelKind {
    /// `J(r) = (1 - r/d)/d` on `[0, d]`.
    Triangle,
    /// `J(r) = 1/(2d)` on `[0, d)`. Discontinuous at `r = d`.
    Uniform,
    /// Samples of the radial profile at uniform spacing on `[0, d]`,
    /// first sample at `r = 0`, last at `r = d`.
    Table(Vec<f64>),
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Triangle => "triangle",
            KernelKind::Uniform => "uniform",
            KernelKind::Table(_) => "table",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    kind: KernelKind,
    d: f64,
    h: f64,
    /// `J(k h)` for `k = 0..=m`, scaled so that `h * (J0 + 2 Σ_{k≥1} Jk) = 1`.
    profile: Vec<f64>,
    /// Symmetric weights `w_{-m..=m}`, `w_k = h J(|k| h)`.
    weights: Vec<f64>,
}

impl Kernel {
    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn support(&self) -> f64 {
        self.d
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Stencil half-width in grid nodes.
    pub fn half_width(&self) -> usize {
        self.profile.len() - 1
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    /// The symmetric weights, index `k + m` holding `w_k`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight for an offset of `k` nodes; zero outside the stencil.
    pub fn weight(&self, k: isize) -> f64 {
        let m = self.half_width();
        let a = k.unsigned_abs();
        if a > m {
            0.0
        } else {
            self.profile[a] * self.h
        }
    }

    /// Continuous profile `J(r)` by linear interpolation of the samples.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r > self.d {
            return 0.0;
        }
        let s = r / self.h;
        let k = s.floor() as usize;
        let m = self.half_width();
        if k >= m {
            // between the last sample and d
            let last = self.profile[m];
            let tail = self.d - m as f64 * self.h;
            if tail <= 0.0 {
                return last;
            }
            let frac = (r - m as f64 * self.h) / tail;
            return match self.kind {
                KernelKind::Uniform => last,
                _ => last * (1.0 - frac),
            };
        }
        let frac = s - k as f64;
        self.profile[k] * (1.0 - frac) + self.profile[k + 1] * frac
    }

    /// The problem statement asks for a continuous kernel; the uniform one is
    /// admitted for closed-form checks only.
    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, KernelKind::Uniform)
    }

    /// True when a tabulated profile vanishes somewhere strictly inside its
    /// support. Positivity propagation is not guaranteed for such kernels.
    pub fn has_interior_zeros(&self) -> bool {
        let m = self.half_width();
        self.profile[..m].iter().any(|&v| v <= 0.0)
    }

    pub fn discrete_mass(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Tabulates and normalizes a kernel on step `h`.
pub fn build_kernel(kind: KernelKind, d: f64, h: f64) -> Result<Kernel> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!("kernel support d = {d}")));
    }
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidParameter(format!("kernel step h = {h}")));
    }
    if h > d / 4.0 * (1.0 + STEP_TOL) {
        return Err(Error::InvalidParameter(format!(
            "kernel step h = {h} exceeds d/4 = {}",
            d / 4.0
        )));
    }
    let m = (d / h + STEP_TOL).floor() as usize;
    let on_edge = ((m as f64) * h - d).abs() <= STEP_TOL * d;

    let mut profile: Vec<f64> = match &kind {
        KernelKind::Triangle => (0..=m)
            .map(|k| ((1.0 - k as f64 * h / d) / d).max(0.0))
            .collect(),
        KernelKind::Uniform => (0..=m)
            .map(|k| {
                if k == m && on_edge {
                    // midpoint of the jump
                    0.25 / d
                } else {
                    0.5 / d
                }
            })
            .collect(),
        KernelKind::Table(samples) => {
            if samples.len() < 2 {
                return Err(Error::InvalidParameter(
                    "kernel table needs at least two samples".into(),
                ));
            }
            let peak = samples.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
            if let Some(bad) = samples
                .iter()
                .find(|&&v| v < -1e-12 * peak || !v.is_finite())
            {
                return Err(Error::InvalidParameter(format!(
                    "kernel table entry {bad} is negative"
                )));
            }
            let clipped: Vec<f64> = samples.iter().map(|v| v.max(0.0)).collect();
            if clipped.iter().all(|&v| v == 0.0) {
                return Err(Error::EmptyKernelTable);
            }
            let ds = d / (clipped.len() - 1) as f64;
            (0..=m)
                .map(|k| {
                    let s = k as f64 * h / ds;
                    let i = (s.floor() as usize).min(clipped.len() - 2);
                    let f = (s - i as f64).clamp(0.0, 1.0);
                    clipped[i] * (1.0 - f) + clipped[i + 1] * f
                })
                .collect()
        }
    };

    let raw_mass = h * (profile[0] + 2.0 * profile[1..].iter().sum::<f64>());
    if !(raw_mass > 0.0) {
        return Err(Error::EmptyKernelTable);
    }
    for v in &mut profile {
        *v /= raw_mass;
    }
    let mut weights = Vec::with_capacity(2 * m + 1);
    weights.extend(profile.iter().rev().map(|v| v * h));
    weights.extend(profile[1..].iter().map(|v| v * h));
    // absorb the last rounding bit into the centre so Σw = 1 to the ulp
    let excess: f64 = weights.iter().sum::<f64>() - 1.0;
    weights[m] -= excess;
    profile[0] = weights[m] / h;

    Ok(Kernel {
        kind,
        d,
        h,
        profile,
        weights,
    })
}

/// Diffusivity `q = ½ ∫ J(ξ) ξ² dξ` of the tabulated kernel.
pub fn second_moment(kernel: &Kernel) -> f64 {
    let m = kernel.half_width() as isize;
    let h = kernel.h;
    0.5 * (-m..=m)
        .map(|k| kernel.weights[(k + m) as usize] * (k as f64 * h).powi(2))
        .sum::<f64>()
}

/// `out[i] = Σ_k w_k values[i-k]`, truncated at the array ends.
pub fn convolve_1d(kernel: &Kernel, values: &[f64], grid_step: f64) -> Result<Vec<f64>> {
    if (grid_step - kernel.h).abs() > STEP_TOL * kernel.h {
        return Err(Error::StepMismatch {
            grid: grid_step,
            kernel: kernel.h,
        });
    }
    let mut out = vec![0.0; values.len()];
    convolve_into(kernel.weights(), values, &mut out);
    Ok(out)
}

pub(crate) fn convolve_into(weights: &[f64], values: &[f64], out: &mut [f64]) {
    let n = values.len();
    debug_assert_eq!(out.len(), n);
    let m = weights.len() / 2;
    let row = |i: usize| -> f64 {
        // values[i-m ..= i+m] against w, clipped to the array
        let lo = i.saturating_sub(m);
        let hi = (i + m + 1).min(n);
        let woff = lo + m - i;
        let v = &values[lo..hi];
        let w = &weights[woff..woff + v.len()];
        v.iter().zip(w).map(|(a, b)| a * b).sum()
    };
    if n * weights.len() >= PAR_THRESHOLD {
        out.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
            let base = c * 1024;
            for (j, o) in chunk.iter_mut().enumerate() {
                *o = row(base + j);
            }
        });
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            *o = row(i);
        }
    }
}

/// The spherical average of `J` between shells on a uniform radial grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialKernelMatrix {
    dim: usize,
    h: f64,
    d: f64,
    n: usize,
    /// Row-major `K[i][j]`.
    weights: Vec<f64>,
    /// Column range `[lo, hi)` of the nonzero band in each row.
    bands: Vec<(usize, usize)>,
    volume_weights: Vec<f64>,
}

impl RadialKernelMatrix {
    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Support radius of the underlying kernel.
    pub fn support(&self) -> f64 {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    pub fn volume_weights(&self) -> &[f64] {
        &self.volume_weights
    }

    pub(crate) fn band(&self, i: usize) -> (usize, usize) {
        self.bands[i]
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.weights[i * self.n..(i + 1) * self.n]
    }
}

/// Exact volume of the dual shell `[max(0, r - h/2), r + h/2]` in `R^dim`.
pub fn shell_volume(dim: usize, r: f64, h: f64) -> f64 {
    let a = (r - 0.5 * h).max(0.0);
    let b = r + 0.5 * h;
    unit_ball_volume(dim) * (b.powi(dim as i32) - a.powi(dim as i32))
}

/// Radial reduction of `J *` on the nodes `r_i = i h`, `i < n`, in `R^dim`.
pub fn radial_reduce(kernel: &Kernel, dim: usize, n: usize) -> Result<RadialKernelMatrix> {
    if dim < 2 {
        return Err(Error::Dimension(dim));
    }
    let d = kernel.d;
    let norm = sine_power_integral(dim - 2);
    let (gx, gw) = gauss_legendre(8);
    const PANELS: usize = 8;
    let angular_average = |r: f64, rho: f64| -> f64 {
        if r == 0.0 || rho == 0.0 {
            return kernel.eval(r.max(rho));
        }
        if (r - rho).abs() >= d {
            return 0.0;
        }
        // polar angles with |r e1 - rho ω| < d
        let c = ((r * r + rho * rho - d * d) / (2.0 * r * rho)).clamp(-1.0, 1.0);
        let theta_max = c.acos();
        let width = theta_max / PANELS as f64;
        let mut acc = 0.0;
        for p in 0..PANELS {
            let a = p as f64 * width;
            for (x, w) in gx.iter().zip(&gw) {
                let th = a + 0.5 * width * (x + 1.0);
                let dist2 = r * r + rho * rho - 2.0 * r * rho * th.cos();
                let s = th.sin().powi(dim as i32 - 2);
                acc += 0.5 * width * w * kernel.eval(dist2.max(0.0).sqrt()) * s;
            }
        }
        acc / norm
    };
    build_radial(kernel, dim, n, angular_average)
}

/// The even reduction on the line: `K[i][j] = ½ (J(r_i - ρ_j) + J(r_i + ρ_j))`.
/// Used to run the radial integrator in one dimension, where it must agree
/// with the two-sided line problem on symmetric data.
pub fn radial_reduce_line(kernel: &Kernel, n: usize) -> Result<RadialKernelMatrix> {
    build_radial(kernel, 1, n, |r, rho| {
        0.5 * (kernel.eval(r - rho) + kernel.eval(r + rho))
    })
}

fn build_radial(
    kernel: &Kernel,
    dim: usize,
    n: usize,
    average: impl Fn(f64, f64) -> f64 + Sync,
) -> Result<RadialKernelMatrix> {
    let h = kernel.h;
    let d = kernel.d;
    let m = kernel.half_width() + 1;
    let volume_weights: Vec<f64> = (0..n).map(|i| shell_volume(dim, i as f64 * h, h)).collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n];
            let lo = i.saturating_sub(m);
            let hi = (i + m + 1).min(n);
            for (j, v) in row.iter_mut().enumerate().take(hi).skip(lo) {
                *v = average(i as f64 * h, j as f64 * h).max(0.0);
            }
            row
        })
        .collect();
    let mut weights: Vec<f64> = rows.into_iter().flatten().collect();
    let r_max = (n as f64 - 1.0) * h;
    for j in 0..n {
        if j as f64 * h + d > r_max + STEP_TOL * h {
            // stencil leaves the grid; left truncated like the 1D operator
            continue;
        }
        let col: f64 = (0..n).map(|i| volume_weights[i] * weights[i * n + j]).sum();
        if col > 0.0 {
            for i in 0..n {
                weights[i * n + j] /= col;
            }
        }
    }
    let bands = (0..n)
        .map(|i| {
            let row = &weights[i * n..(i + 1) * n];
            let lo = row.iter().position(|&v| v != 0.0).unwrap_or(0);
            let hi = row.iter().rposition(|&v| v != 0.0).map_or(0, |p| p + 1);
            (lo, hi.max(lo))
        })
        .collect();
    Ok(RadialKernelMatrix {
        dim,
        h,
        d,
        n,
        weights,
        bands,
        volume_weights,
    })
}

/// `out[i] = Σ_j K[i][j] values[j] vol_j`.
pub fn convolve_radial(matrix: &RadialKernelMatrix, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != matrix.n {
        return Err(Error::LengthMismatch {
            expected: matrix.n,
            got: values.len(),
        });
    }
    let mut out = vec![0.0; matrix.n];
    convolve_radial_into(matrix, values, &mut out);
    Ok(out)
}

pub(crate) fn convolve_radial_into(matrix: &RadialKernelMatrix, values: &[f64], out: &mut [f64]) {
    let vol = &matrix.volume_weights;
    for (i, o) in out.iter_mut().enumerate() {
        let (lo, hi) = matrix.band(i);
        let row = matrix.row(i);
        *o = (lo..hi).map(|j| row[j] * values[j] * vol[j]).sum();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub q: f64,
    pub c0: f64,
    pub c1: f64,
    pub d: f64,
}

/// `C(s) = ∫_{-d}^0 ∫_0^s J(x - y) ψ(x) dx dy` on the half-line cell grid
/// (ghost cells of width `h` tiling `(-d, 0)`, habitat cells `[ih, (i+1)h]`).
fn ghost_exchange_integral(kernel: &Kernel, psi: &CorrectorProfile, s: f64) -> f64 {
    let h = kernel.h;
    let m = kernel.half_width();
    let mut acc = 0.0;
    for i in 0..m {
        let lo = i as f64 * h;
        let frac = ((s - lo) / h).clamp(0.0, 1.0);
        if frac == 0.0 {
            break;
        }
        let p = psi.eval((i as f64 + 0.5) * h);
        let w: f64 = (1..=m)
            .filter(|g| i + g <= m)
            .map(|g| kernel.weight((i + g) as isize))
            .sum();
        acc += w * p * frac * h;
    }
    acc
}

/// The two ghost-exchange constants of the half-line problem.
pub fn corrector_constants(kernel: &Kernel, psi: &CorrectorProfile, s1: f64) -> Result<(f64, f64)> {
    let need = s1.max(kernel.d);
    let (lo, hi) = psi.coverage();
    if hi < need - STEP_TOL || lo > 0.5 * kernel.h + STEP_TOL {
        return Err(Error::ProfileTooShort {
            have_lo: lo,
            have_hi: hi,
            need_lo: 0.0,
            need_hi: need,
        });
    }
    if (psi.grid().h - kernel.h).abs() > STEP_TOL * kernel.h {
        return Err(Error::StepMismatch {
            grid: psi.grid().h,
            kernel: kernel.h,
        });
    }
    Ok((
        ghost_exchange_integral(kernel, psi, s1),
        ghost_exchange_integral(kernel, psi, kernel.d),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri(h: f64) -> Kernel {
        build_kernel(KernelKind::Triangle, 1.0, h).unwrap()
    }

    #[test]
    fn triangle_samples_and_mass() {
        let k = tri(0.01);
        assert!((k.profile()[0] - 1.0).abs() < 1e-12);
        assert_eq!(*k.profile().last().unwrap(), 0.0);
        assert!((k.discrete_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_samples_are_half() {
        let k = build_kernel(KernelKind::Uniform, 1.0, 0.01).unwrap();
        for v in &k.profile()[1..k.half_width()] {
            assert!((v - 0.5).abs() < 1e-12);
        }
        assert!(!k.is_continuous());
        assert!((k.discrete_mass() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn table_errors() {
        assert!(matches!(
            build_kernel(KernelKind::Table(vec![1.0, -0.5, 0.0]), 1.0, 0.1),
            Err(Error::InvalidParameter(_))
        ));
        assert_eq!(
            build_kernel(KernelKind::Table(vec![0.0, 0.0]), 1.0, 0.1),
            Err(Error::EmptyKernelTable)
        );
        assert!(build_kernel(KernelKind::Triangle, 0.0, 0.1).is_err());
        assert!(build_kernel(KernelKind::Triangle, 1.0, -0.1).is_err());
        assert!(build_kernel(KernelKind::Triangle, 1.0, 0.3).is_err());
    }

    #[test]
    fn table_with_interior_zero_is_flagged() {
        let k = build_kernel(KernelKind::Table(vec![1.0, 0.0, 1.0, 0.5, 0.0]), 1.0, 0.25).unwrap();
        assert!(k.has_interior_zeros());
        assert!(!tri(0.1).has_interior_zeros());
    }

    #[test]
    fn second_moments_match_closed_forms() {
        // ½∫ξ²(1-|ξ|) = 1/12, ½∫_{-1}^{1} ξ²/2 = 1/6
        assert!((second_moment(&tri(0.001)) - 1.0 / 12.0).abs() < 1e-6);
        let u = build_kernel(KernelKind::Uniform, 1.0, 0.001).unwrap();
        assert!((second_moment(&u) - 1.0 / 6.0).abs() < 1e-6);
    }

    #[test]
    fn second_moment_scales_quadratically() {
        for lambda in [2.0, 3.0, 0.5] {
            let a = build_kernel(KernelKind::Triangle, 1.0, 0.01).unwrap();
            let b = build_kernel(KernelKind::Triangle, lambda, 0.01 * lambda).unwrap();
            let ratio = second_moment(&b) / second_moment(&a);
            assert!((ratio - lambda * lambda).abs() < 1e-10, "{ratio}");
        }
    }

    #[test]
    fn convolution_of_half_indicator_is_half() {
        let k = tri(0.01);
        let n = 401;
        // nodes x = -2 .. 2, indicator of (-inf, 0) plus half at 0
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let x = -2.0 + i as f64 * 0.01;
                if x < -1e-12 {
                    1.0
                } else if x.abs() < 1e-12 {
                    0.5
                } else {
                    0.0
                }
            })
            .collect();
        let out = convolve_1d(&k, &vals, 0.01).unwrap();
        assert!((out[200] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn convolution_constant_spike_and_mismatch() {
        let k = tri(0.1);
        let out = convolve_1d(&k, &[2.0; 41], 0.1).unwrap();
        assert!((out[20] - 2.0).abs() < 1e-14);
        let mut spike = vec![0.0; 41];
        spike[20] = 1.0;
        let out = convolve_1d(&k, &spike, 0.1).unwrap();
        for (i, o) in out.iter().enumerate() {
            assert!((o - k.weight(i as isize - 20)).abs() < 1e-16);
        }
        assert!(matches!(
            convolve_1d(&k, &spike, 0.05),
            Err(Error::StepMismatch { .. })
        ));
    }

    #[test]
    fn radial_entries_vanish_outside_support() {
        let k = tri(0.1);
        let mat = radial_reduce(&k, 2, 40).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let e = mat.entry(i, j);
                assert!(e >= 0.0);
                if (i as f64 - j as f64).abs() * 0.1 > 1.0 + 1e-12 {
                    assert_eq!(e, 0.0);
                }
            }
        }
        assert_eq!(radial_reduce(&k, 1, 10), Err(Error::Dimension(1)));
    }

    #[test]
    fn radial_columns_are_normalized() {
        let k = tri(0.1);
        for dim in [2, 3] {
            let mat = radial_reduce(&k, dim, 40).unwrap();
            let vol = mat.volume_weights();
            for j in 0..=29 {
                let col: f64 = (0..40).map(|i| vol[i] * mat.entry(i, j)).sum();
                assert!((col - 1.0).abs() < 1e-13, "dim {dim} column {j}: {col}");
            }
        }
    }

    #[test]
    fn radial_zero_and_spike() {
        let k = tri(0.1);
        let mat = radial_reduce(&k, 2, 30).unwrap();
        assert!(convolve_radial(&mat, &[0.0; 30])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let mut spike = vec![0.0; 30];
        spike[7] = 1.0;
        let out = convolve_radial(&mat, &spike).unwrap();
        let vol = mat.volume_weights()[7];
        for (i, o) in out.iter().enumerate() {
            assert!((o - mat.entry(i, 7) * vol).abs() < 1e-16);
        }
        assert!(matches!(
            convolve_radial(&mat, &[0.0; 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn line_reduction_matches_two_sided_convolution() {
        let k = tri(0.1);
        let n = 25;
        let mat = radial_reduce_line(&k, n).unwrap();
        let half: Vec<f64> = (0..n)
            .map(|i| (1.0 - (i as f64 * 0.1 / 1.2).powi(2)).max(0.0))
            .collect();
        let full: Vec<f64> = (0..2 * n - 1)
            .map(|i| half[(i as isize - (n as isize - 1)).unsigned_abs()])
            .collect();
        let a = convolve_radial(&mat, &half).unwrap();
        let b = convolve_1d(&k, &full, 0.1).unwrap();
        for i in 0..n - 11 {
            assert!(
                (a[i] - b[n - 1 + i]).abs() < 1e-13,
                "{i}: {} vs {}",
                a[i],
                b[n - 1 + i]
            );
        }
    }
}
