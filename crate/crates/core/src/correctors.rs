//! Stationary correctors, the principal Dirichlet eigenvalue, and the dipole.
//!
//! A corrector is a discrete solution of `w = J * w` on a half-line that
//! vanishes on the complementary half-line and grows with unit slope at
//! infinity. `φ` lives on `(-∞, 0]`, `ψ` on `[0, ∞)`.
//!
//! The profile is tabulated at "depth" nodes `j = 0, 1, ...` counted away
//! from the frontier. Node `0` represents the frontier cell, of which only
//! the fraction `θ` lies inside the half-line; with `θ = 1` the nodes are the
//! cell centres `∓(j + 1/2) h`. The unknown `Ψ` solves
//! `Ψ_j = D_j Σ_k w_k Ψ_{j+k}` with `D_0 = θ`, `D_j = 1` otherwise, zero
//! beyond the frontier and a unit-slope linear extension beyond the last
//! node. The stored values are `Φ = W Ψ`, which satisfy the adjoint identity
//! `Φ = W D Φ`. For `θ = 1` the two coincide on the half-line.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{convolve_radial, Kernel, RadialKernelMatrix};
use crate::state::{BoundaryState, CellGeometry, DensityField, Grid};

/// Default truncation extent in units of the kernel support.
pub const DEFAULT_EXTENT: f64 = 40.0;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Supported on `(-∞, 0]`, slope `-1`.
    Left,
    /// Supported on `[0, ∞)`, slope `+1`.
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrectorProfile {
    pub side: Side,
    pub h: f64,
    /// Covered fraction of the frontier cell.
    pub frontier_fraction: f64,
    /// `Φ_j` at depth `j`.
    pub values: Vec<f64>,
    /// `-1` for `φ`, `+1` for `ψ`.
    pub far_slope: f64,
    /// Limit of `w(x) - far_slope · x` at infinity.
    pub offset: f64,
    /// `max |w(x) - far_slope · x|` over the tabulated nodes.
    pub bound: f64,
    /// `max |w(x) - far_slope · x - offset|` over the tabulated nodes.
    pub deviation: f64,
    /// `max |Ψ_j - D_j (W Ψ)_j|`.
    pub residual: f64,
    /// Smallest tabulated value.
    pub alpha: f64,
    /// Largest change on the inner half after doubling the extent.
    pub extent_sensitivity: f64,
}

impl CorrectorProfile {
    /// Coordinate of depth node `j`.
    pub fn node(&self, j: usize) -> f64 {
        let depth0 = (0.5 - self.frontier_fraction) * self.h;
        match self.side {
            Side::Left => depth0 - j as f64 * self.h,
            Side::Right => -depth0 + j as f64 * self.h,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Tabulated nodes as an increasing grid.
    pub fn grid(&self) -> Grid {
        let n = self.values.len();
        let x0 = match self.side {
            Side::Left => self.node(n - 1),
            Side::Right => self.node(0),
        };
        Grid { x0, h: self.h, n }
    }

    /// Range of tabulated nodes.
    pub fn coverage(&self) -> (f64, f64) {
        let g = self.grid();
        (g.x0, g.last())
    }

    /// True when `[lo, hi]` needs no extrapolation on the growing side.
    pub fn covers_side(&self, lo: f64, hi: f64) -> bool {
        let (a, b) = self.coverage();
        let tol = 1e-9 * self.h;
        match self.side {
            Side::Left => lo >= a - tol,
            Side::Right => hi <= b + tol,
        }
    }

    fn depth(&self, y: f64) -> f64 {
        match self.side {
            Side::Left => (self.node(0) - y) / self.h,
            Side::Right => (y - self.node(0)) / self.h,
        }
    }

    /// Piecewise-linear evaluation, zero beyond the frontier node and
    /// linearly extended past the last node.
    pub fn eval(&self, y: f64) -> f64 {
        let t = self.depth(y);
        if t < -1e-6 {
            return 0.0;
        }
        let t = t.max(0.0);
        let n = self.values.len();
        let last = (n - 1) as f64;
        if t >= last {
            return self.values[n - 1] + (t - last) * self.h;
        }
        let j = t.floor() as usize;
        let f = t - j as f64;
        self.values[j] * (1.0 - f) + self.values[j + 1] * f
    }
}

/// Banded matrix with `m` sub- and super-diagonals, stored by rows.
struct Band {
    n: usize,
    m: usize,
    rows: Vec<f64>,
}

impl Band {
    fn new(n: usize, m: usize) -> Self {
        Band {
            n,
            m,
            rows: vec![0.0; n * (2 * m + 1)],
        }
    }

    #[inline]
    fn at(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(c + self.m >= r && c <= r + self.m);
        let w = 2 * self.m + 1;
        &mut self.rows[r * w + c + self.m - r]
    }

    #[inline]
    fn get(&self, r: usize, c: usize) -> f64 {
        let w = 2 * self.m + 1;
        self.rows[r * w + c + self.m - r]
    }

    /// In-place LU without pivoting (the corrector matrices are
    /// diagonally dominant M-matrices).
    fn factor(mut self) -> Result<Self> {
        let (n, m) = (self.n, self.m);
        for p in 0..n {
            let piv = self.get(p, p);
            if !(piv.abs() > 0.0) {
                return Err(Error::NoConvergence {
                    what: "banded factorization",
                    iterations: p,
                    residual: piv,
                });
            }
            for r in p + 1..(p + m + 1).min(n) {
                let f = self.get(r, p) / piv;
                if f == 0.0 {
                    continue;
                }
                *self.at(r, p) = f;
                for c in p + 1..(p + m + 1).min(n) {
                    let v = self.get(p, c);
                    *self.at(r, c) -= f * v;
                }
            }
        }
        Ok(self)
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let mut y = b.to_vec();
        for r in 0..n {
            let lo = r.saturating_sub(m);
            let s: f64 = (lo..r).map(|c| self.get(r, c) * y[c]).sum();
            y[r] -= s;
        }
        for r in (0..n).rev() {
            let hi = (r + m + 1).min(n);
            let s: f64 = (r + 1..hi).map(|c| self.get(r, c) * y[c]).sum();
            y[r] = (y[r] - s) / self.get(r, r);
        }
        y
    }
}

/// `(W Ψ)_j` on depth nodes with zero beyond the frontier and the linear
/// extension past the end.
fn apply_weights(kernel: &Kernel, psi: &[f64]) -> Vec<f64> {
    let n = psi.len();
    let m = kernel.half_width() as isize;
    let h = kernel.step();
    let at = |i: isize| -> f64 {
        if i < 0 {
            0.0
        } else if (i as usize) < n {
            psi[i as usize]
        } else {
            psi[n - 1] + (i - n as isize + 1) as f64 * h
        }
    };
    (0..n as isize)
        .map(|j| (-m..=m).map(|k| kernel.weight(k) * at(j + k)).sum())
        .collect()
}

/// `Ψ_j - D_j (W Ψ)_j` written with differences, `(1 - D_j) Ψ_j - D_j Σ_{k≠0}
/// w_k (Ψ_{j+k} - Ψ_j)`. This uses `Σ w_k = 1` exactly and keeps the
/// rounding error proportional to the local increments instead of `|Ψ|`.
fn harmonic_residual(kernel: &Kernel, x: &[f64], theta: f64) -> Vec<f64> {
    let n = x.len();
    let m = kernel.half_width() as isize;
    let h = kernel.step();
    (0..n)
        .map(|j| {
            let dj = if j == 0 { theta } else { 1.0 };
            let xj = x[j];
            let mut acc = 0.0;
            for k in (-m..=m).filter(|&k| k != 0) {
                let i = j as isize + k;
                let diff = if i < 0 {
                    -xj
                } else if (i as usize) < n {
                    x[i as usize] - xj
                } else {
                    (x[n - 1] - xj) + (i - n as isize + 1) as f64 * h
                };
                acc += kernel.weight(k) * diff;
            }
            (1.0 - dj) * xj - dj * acc
        })
        .collect()
}

fn solve_dirichlet_harmonic(
    kernel: &Kernel,
    n: usize,
    theta: f64,
    tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let m = kernel.half_width();
    let h = kernel.step();
    if n <= 2 * m {
        return Err(Error::InvalidParameter(format!(
            "corrector extent of {n} nodes is shorter than two kernel widths"
        )));
    }
    let mut a = Band::new(n, m);
    let mut rhs = vec![0.0; n];
    for j in 0..n {
        let dj = if j == 0 { theta } else { 1.0 };
        *a.at(j, j) += 1.0 - dj;
        for k in (-(m as isize)..=(m as isize)).filter(|&k| k != 0) {
            let i = j as isize + k;
            let w = dj * kernel.weight(k);
            *a.at(j, j) += w;
            if i < 0 {
                continue;
            }
            if (i as usize) < n {
                *a.at(j, i as usize) -= w;
            } else {
                *a.at(j, n - 1) -= w;
                rhs[j] += w * (i - n as isize + 1) as f64 * h;
            }
        }
    }
    let lu = a.factor()?;
    let mut x = lu.solve(&rhs);
    let norm = |r: &[f64]| r.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
    let mut res = harmonic_residual(kernel, &x, theta);
    let mut rmax = norm(&res);
    let mut iterations = 0;
    while iterations < 10 {
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = lu.solve(&neg);
        let step = norm(&delta);
        x.iter_mut().zip(&delta).for_each(|(xi, di)| *xi += di);
        res = harmonic_residual(kernel, &x, theta);
        rmax = norm(&res);
        iterations += 1;
        if step <= 1e-3 * tol {
            break;
        }
    }
    if rmax > tol {
        return Err(Error::NoConvergence {
            what: "corrector solve",
            iterations,
            residual: rmax,
        });
    }
    Ok((x, rmax))
}

fn build_profile(
    kernel: &Kernel,
    extent: f64,
    theta: f64,
    tol: f64,
    side: Side,
) -> Result<CorrectorProfile> {
    let d = kernel.support();
    let h = kernel.step();
    if !(extent >= 20.0 * d) {
        return Err(Error::InvalidParameter(format!(
            "corrector extent {extent} is below 20 d = {}",
            20.0 * d
        )));
    }
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "frontier fraction {theta}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol}")));
    }
    let n = (extent / h).round() as usize;
    let (psi, residual) = solve_dirichlet_harmonic(kernel, n, theta, tol)?;
    let (psi2, _) = solve_dirichlet_harmonic(kernel, 2 * n, theta, tol)?;
    let extent_sensitivity = psi[..=n / 2]
        .iter()
        .zip(&psi2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if extent_sensitivity > 10.0 * tol {
        return Err(Error::TruncationSensitive(extent_sensitivity));
    }

    let mut values = psi.clone();
    values[0] = apply_weights(kernel, &psi)[0];

    let mut profile = CorrectorProfile {
        side,
        h,
        frontier_fraction: theta,
        values,
        far_slope: match side {
            Side::Left => -1.0,
            Side::Right => 1.0,
        },
        offset: 0.0,
        bound: 0.0,
        deviation: 0.0,
        residual,
        alpha: 0.0,
        extent_sensitivity,
    };
    let gap: Vec<f64> = (0..n)
        .map(|j| profile.values[j] - profile.far_slope * profile.node(j))
        .collect();
    profile.offset = gap[n - 1];
    profile.bound = gap.iter().fold(0.0, |a, g| a.max(g.abs()));
    profile.deviation = gap
        .iter()
        .fold(0.0, |a, g| a.max((g - profile.offset).abs()));
    profile.alpha = profile.values.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(profile)
}

/// The corrector `φ` on `(-∞, 0]`.
pub fn solve_phi(kernel: &Kernel, extent: f64, tol: f64) -> Result<CorrectorProfile> {
    build_profile(kernel, extent, 1.0, tol, Side::Left)
}

/// `φ` for a frontier that covers only the fraction `theta` of its cell.
/// These are the exact discrete weights whose moment the line scheme
/// cannot increase.
pub fn solve_phi_with_frontier(
    kernel: &Kernel,
    extent: f64,
    theta: f64,
    tol: f64,
) -> Result<CorrectorProfile> {
    build_profile(kernel, extent, theta, tol, Side::Left)
}

/// The corrector `ψ` on `[0, ∞)`; fails unless `min ψ > 0`.
pub fn solve_psi(kernel: &Kernel, extent: f64, tol: f64) -> Result<CorrectorProfile> {
    let p = build_profile(kernel, extent, 1.0, tol, Side::Right)?;
    if !(p.alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "corrector minimum {} is not positive",
            p.alpha
        )));
    }
    Ok(p)
}

/// Bounded habitat for the Dirichlet eigenproblem.
#[derive(Debug, Clone, Copy)]
pub enum EigenDomain<'a> {
    /// `(lo, hi)` on the line grid with first node `x0`.
    Interval {
        kernel: &'a Kernel,
        lo: f64,
        hi: f64,
        x0: f64,
        n: usize,
    },
    /// Ball of the given radius on the grid of `matrix`.
    Ball {
        matrix: &'a RadialKernelMatrix,
        radius: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigenpair {
    pub lambda: f64,
    pub mu: f64,
    /// Nonnegative, `sup = 1`.
    pub eigenfunction: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

type Operator<'a> = Box<dyn Fn(&[f64]) -> Vec<f64> + 'a>;

/// Smallest eigenvalue `λ = 1 - μ` of `I - D A_J` with Dirichlet exterior.
pub fn principal_eigenvalue(domain: EigenDomain<'_>) -> Result<Eigenpair> {
    let (field, boundary, apply): (DensityField, BoundaryState, Operator<'_>) = match domain {
        EigenDomain::Interval {
            kernel,
            lo,
            hi,
            x0,
            n,
        } => {
            if !(hi > lo) {
                return Err(Error::InvalidParameter(format!("interval ({lo}, {hi})")));
            }
            let grid = Grid::new(x0, kernel.step(), n)?;
            let h = kernel.step();
            let f = DensityField::zeros(grid, CellGeometry::Line, None);
            (
                f,
                BoundaryState::LineCs {
                    s_minus: lo,
                    s_plus: hi,
                },
                Box::new(move |v: &[f64]| {
                    crate::kernel::convolve_1d(kernel, v, h).expect("step checked")
                }),
            )
        }
        EigenDomain::Ball { matrix, radius } => {
            if !(radius > 0.0) {
                return Err(Error::InvalidParameter(format!("radius {radius}")));
            }
            let grid = Grid::new(0.0, matrix.step(), matrix.len())?;
            let dim = matrix.dimension();
            let f = DensityField::zeros(grid, CellGeometry::Radial { dim }, None);
            (
                f,
                BoundaryState::radial(radius, dim),
                Box::new(move |v: &[f64]| convolve_radial(matrix, v).expect("length checked")),
            )
        }
    };
    let inside: Vec<f64> = (0..field.len())
        .map(|i| field.split(i, &boundary).inside)
        .collect();
    if inside.iter().all(|&c| c == 0.0) {
        return Err(Error::InvalidParameter("domain contains no cell".into()));
    }
    let op = |v: &[f64]| -> Vec<f64> {
        apply(v)
            .into_iter()
            .zip(&inside)
            .map(|(a, c)| a * c)
            .collect()
    };
    let mut v: Vec<f64> = inside
        .iter()
        .map(|&c| if c > 0.0 { 1.0 } else { 0.0 })
        .collect();
    let max_iter = 200_000;
    let mut mu = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        let w = op(&v);
        let sup = w.iter().fold(0.0_f64, |a, &b| a.max(b));
        if !(sup > 0.0) {
            return Err(Error::NoConvergence {
                what: "power iteration",
                iterations: it,
                residual: f64::NAN,
            });
        }
        // Rayleigh-type estimate at the maximizer keeps the residual honest
        mu = sup / v.iter().fold(0.0_f64, |a, &b| a.max(b));
        let next: Vec<f64> = w.iter().map(|x| x / sup).collect();
        if it % 16 == 0 || it == max_iter {
            let check = op(&next);
            let mu_next = check.iter().fold(0.0_f64, |a, &b| a.max(b));
            residual = check
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - mu_next * b).abs())
                .fold(0.0, f64::max);
            mu = mu_next;
            v = next;
            if residual <= 1e-12 {
                return Ok(Eigenpair {
                    lambda: 1.0 - mu,
                    mu,
                    eigenfunction: v,
                    residual,
                    iterations: it,
                });
            }
            continue;
        }
        v = next;
    }
    if residual <= 1e-10 {
        return Ok(Eigenpair {
            lambda: 1.0 - mu,
            mu,
            eigenfunction: v,
            residual,
            iterations: max_iter,
        });
    }
    Err(Error::NoConvergence {
        what: "power iteration",
        iterations: max_iter,
        residual,
    })
}

/// `D_q(x, t) = -x/(2 q t) · exp(-x²/(4 q t)) / sqrt(4 π q t)`.
pub fn dipole(q: f64, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("dipole time {t}")));
    }
    if !(q > 0.0) {
        return Err(Error::InvalidParameter(format!("diffusivity {q}")));
    }
    let qt = q * t;
    Ok(-x / (2.0 * qt) * (-x * x / (4.0 * qt)).exp() / (4.0 * std::f64::consts::PI * qt).sqrt())
}
