//! Real spherical harmonics and the learnable location embedding built on
//! them.
//!
//! Basis functions are ordered by degree, then by order from `-n` to `n`:
//! `(0,0), (1,-1), (1,0), (1,1), (2,-2), ...`. The polar factor is evaluated
//! at the colatitude and the azimuthal factor at the longitude. Orders
//! `m != 0` carry a `sqrt(2)` so the real basis is orthonormal on the sphere.

use std::f64::consts::{PI, SQRT_2};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::GeoCoord;

/// Highest degree accepted by [`sh_basis`].
pub const MAX_DEGREE: usize = 8;

/// Number of basis functions up to and including degree `degree_max`.
pub fn basis_len(degree_max: usize) -> usize {
    (degree_max + 1) * (degree_max + 1)
}

/// Position of `(n, m)` in the canonical ordering.
pub fn basis_index(n: usize, m: i64) -> usize {
    n * n + (m + n as i64) as usize
}

/// Legendre polynomial `P_n(x)` by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    let (mut prev, mut cur) = (1.0, x);
    if n == 0 {
        return Ok(prev);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * cur - (kf - 1.0) * prev) / kf;
        prev = cur;
        cur = next;
    }
    Ok(cur)
}

/// Associated Legendre function `P_n^m(x)` including the Condon-Shortley
/// phase `(-1)^m`.
pub fn assoc_legendre(n: usize, m: usize, x: f64) -> Result<f64> {
    check_unit_interval(x)?;
    if m > n {
        return Err(Error::Domain(format!("order {m} exceeds degree {n}")));
    }
    Ok(assoc_legendre_with(n, m, x, ((1.0 - x) * (1.0 + x)).sqrt()))
}

/// `P_n^m` given both `x` and `s = sqrt(1 - x^2)`; passing `s` directly
/// avoids cancellation near the poles.
fn assoc_legendre_with(n: usize, m: usize, x: f64, s: f64) -> f64 {
    let mut p_mm = 1.0;
    if m > 0 {
        let mut odd = 1.0;
        for _ in 0..m {
            p_mm *= -odd * s;
            odd += 2.0;
        }
    }
    if n == m {
        return p_mm;
    }
    let mut p_prev = p_mm;
    let mut p_cur = x * (2 * m + 1) as f64 * p_mm;
    for k in (m + 2)..=n {
        let next = ((2 * k - 1) as f64 * x * p_cur - (k + m - 1) as f64 * p_prev) / (k - m) as f64;
        p_prev = p_cur;
        p_cur = next;
    }
    p_cur
}

fn check_unit_interval(x: f64) -> Result<()> {
    if x.is_finite() && x.abs() <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("argument {x} outside [-1, 1]")))
    }
}

/// `sqrt((2n+1)/(4π) · (n-m)!/(n+m)!)`
fn normalisation(n: usize, m: usize) -> f64 {
    let mut ratio = 1.0;
    for k in (n - m + 1)..=(n + m) {
        ratio /= k as f64;
    }
    ((2 * n + 1) as f64 / (4.0 * PI) * ratio).sqrt()
}

/// Real spherical harmonic of degree `n` and order `m` at `c`.
pub fn real_sh(n: usize, m: i64, c: GeoCoord) -> Result<f64> {
    let am = m.unsigned_abs() as usize;
    if am > n {
        return Err(Error::Domain(format!("|order| {am} exceeds degree {n}")));
    }
    let p = assoc_legendre_with(n, am, c.lat().sin(), c.lat().cos());
    let azimuth = match m {
        0 => 1.0,
        m if m < 0 => SQRT_2 * (am as f64 * c.lon()).sin(),
        m => SQRT_2 * (m as f64 * c.lon()).cos(),
    };
    Ok(normalisation(n, am) * p * azimuth)
}

/// All `(N+1)^2` real harmonics at one point, written into `out`.
pub fn sh_basis_into(c: GeoCoord, degree_max: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), basis_len(degree_max));
    let x = c.lat().sin();
    let s = c.lat().cos();
    // p[n][m] for 0 <= m <= n, same recurrence as `assoc_legendre`
    let dim = degree_max + 1;
    let mut p = vec![0.0; dim * dim];
    let at = |n: usize, m: usize| n * dim + m;
    p[at(0, 0)] = 1.0;
    for m in 1..dim {
        p[at(m, m)] = -((2 * m - 1) as f64) * s * p[at(m - 1, m - 1)];
    }
    for m in 0..dim {
        if m + 1 < dim {
            p[at(m + 1, m)] = x * (2 * m + 1) as f64 * p[at(m, m)];
        }
        for n in (m + 2)..dim {
            p[at(n, m)] = ((2 * n - 1) as f64 * x * p[at(n - 1, m)]
                - (n + m - 1) as f64 * p[at(n - 2, m)])
                / (n - m) as f64;
        }
    }
    for n in 0..dim {
        out[basis_index(n, 0)] = normalisation(n, 0) * p[at(n, 0)];
        for m in 1..=n {
            let scaled = SQRT_2 * normalisation(n, m) * p[at(n, m)];
            let (sin_m, cos_m) = (m as f64 * c.lon()).sin_cos();
            out[basis_index(n, -(m as i64))] = scaled * sin_m;
            out[basis_index(n, m as i64)] = scaled * cos_m;
        }
    }
}

/// All `(N+1)^2` real harmonics at one point.
pub fn sh_basis(c: GeoCoord, degree_max: usize) -> Vec<f64> {
    let mut out = vec![0.0; basis_len(degree_max)];
    sh_basis_into(c, degree_max, &mut out);
    out
}

/// Basis rows for a whole node set, one row per coordinate.
pub fn sh_basis_matrix(coords: &[GeoCoord], degree_max: usize) -> Array2<f64> {
    let len = basis_len(degree_max);
    let mut out = Array2::zeros((coords.len(), len));
    for (row, c) in out.outer_iter_mut().zip(coords) {
        let slice = row.into_slice().expect("standard layout");
        sh_basis_into(*c, degree_max, slice);
    }
    out
}

/// Learnable per-site weights multiplying the basis elementwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShCoefficients(pub Vec<f64>);

impl ShCoefficients {
    /// All-ones coefficients, so the embedding starts out equal to the basis.
    pub fn ones(degree_max: usize) -> Self {
        ShCoefficients(vec![1.0; basis_len(degree_max)])
    }

    pub fn degree_max(&self) -> Option<usize> {
        let root = (self.0.len() as f64).sqrt().round() as usize;
        (root >= 1 && root * root == self.0.len()).then(|| root - 1)
    }
}

/// `[x ; w ⊙ Y(c)]`, of length `1 + (N+1)^2`.
pub fn sh_embed(x: f64, c: GeoCoord, w: &ShCoefficients) -> Result<Vec<f64>> {
    let degree = w.degree_max().ok_or_else(|| {
        let root = (w.0.len() as f64).sqrt().floor() as usize;
        Error::Shape {
            context: "sh_embed coefficients",
            expected: root.max(1) * root.max(1),
            actual: w.0.len(),
        }
    })?;
    let basis = sh_basis(c, degree);
    let mut out = Vec::with_capacity(1 + basis.len());
    out.push(x);
    out.extend(basis.iter().zip(&w.0).map(|(y, w)| w * y));
    Ok(out)
}
