//! Floquet–Fourier–Hill spectra of the linearization about a Stokes wave.
//!
//! The perturbation `e^{i mu x} sum_j (h_j, u_j) e^{ijx}` turns the
//! linearized operator into a matrix acting on modes `-N..=N`. Mode `j`
//! owns rows `2(j+N)` (for `h`) and `2(j+N)+1` (for `u`).
//!
//! Every entry of the matrix is purely imaginary, so it is stored as `i B`
//! with `B` real. Eigenvalues of `B` are real or come in conjugate pairs,
//! which keeps stable eigenvalues exactly on the imaginary axis.

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dispersion::CollisionPoint;
use crate::error::{Error, Result};
use crate::stokes::{StokesSeries, MAX_HARMONIC};

pub const DEFAULT_MODES: usize = 32;
pub const MIN_MODES: usize = 8;
/// Instability threshold relative to the largest eigenvalue modulus on a slice.
pub const THRESHOLD_REL: f64 = 1e-15;
/// Half-width of the window in `Im lambda` that is attributed to an isola.
pub const ISOLA_WINDOW: f64 = 0.5;
/// Width in `mu` at which endpoint bisection stops.
pub const ENDPOINT_TOL: f64 = 1e-13;
/// Interior samples recorded on an isola.
pub const ISOLA_SAMPLES: usize = 64;

/// Dense matrix of the truncated operator at one Floquet exponent.
#[derive(Debug, Clone)]
pub struct OperatorAssembly {
    pub mu: f64,
    pub eps: f64,
    pub modes: usize,
    /// The operator divided by `i`.
    pub real_form: Mat<f64>,
}

impl OperatorAssembly {
    pub fn dim(&self) -> usize {
        2 * (2 * self.modes + 1)
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        Complex64::new(0.0, self.real_form[(row, col)])
    }
}

/// Every eigenvalue at one Floquet exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSlice {
    pub mu: f64,
    pub eigenvalues: Vec<Complex64>,
}

impl SpectrumSlice {
    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn threshold(&self) -> f64 {
        THRESHOLD_REL * self.max_modulus()
    }

    /// Largest real part among eigenvalues with `|Im lambda - center| < window`.
    pub fn max_real_near(&self, center: f64, window: f64) -> f64 {
        self.eigenvalues
            .iter()
            .filter(|z| (z.im - center).abs() < window)
            .fold(f64::NEG_INFINITY, |m, z| m.max(z.re))
    }
}

/// Build the operator matrix for amplitude `eps` and Floquet exponent `mu`.
pub fn assemble(series: &StokesSeries, eps: f64, mu: f64, modes: usize) -> Result<OperatorAssembly> {
    if modes < MIN_MODES {
        return Err(Error::TooFewModes { modes, min: MIN_MODES });
    }
    let alpha = series.alpha();
    let c = series.wave_speed(eps);
    let (eta, u) = series.summed_harmonics(eps);
    let big_n = modes as i64;
    let dim = 2 * (2 * modes + 1);
    let band = MAX_HARMONIC as i64;

    let mut b = Mat::<f64>::zeros(dim, dim);
    for j in -big_n..=big_n {
        let row = 2 * (j + big_n) as usize;
        let lo = (j - band).max(-big_n);
        let hi = (j + band).min(big_n);
        for jp in lo..=hi {
            let col = 2 * (jp + big_n) as usize;
            let l = j - jp;
            let lf = l as f64;
            let delta = if l == 0 { 1.0 } else { 0.0 };
            let d = mu + jp as f64;
            // -u_S' + (c - u_S)(i mu + d/dx)
            let diag = alpha * (-lf * u.get(l) + (c * delta - u.get(l)) * d);
            // -eta_S' - (1 + eta_S)(i mu + d/dx)
            let off = alpha * (-lf * eta.get(l) - (delta + eta.get(l)) * d);
            b[(row, col)] = diag;
            b[(row, col + 1)] = off;
            b[(row + 1, col + 1)] = diag;
        }
        b[(row + 1, row)] = -(alpha * (mu + j as f64)).tanh();
    }
    Ok(OperatorAssembly {
        mu,
        eps,
        modes,
        real_form: b,
    })
}

pub fn eigenvalues(assembly: &OperatorAssembly) -> Result<SpectrumSlice> {
    let eigenvalues = assembly
        .real_form
        .eigenvalues()
        .map_err(|_| Error::EigenSolve {
            mu: assembly.mu,
            modes: assembly.modes,
        })?
        .into_iter()
        .map(|z| Complex64::new(-z.im, z.re))
        .collect();
    Ok(SpectrumSlice {
        mu: assembly.mu,
        eigenvalues,
    })
}

/// Assemble and solve at a single Floquet exponent.
pub fn spectrum(series: &StokesSeries, eps: f64, mu: f64, modes: usize) -> Result<SpectrumSlice> {
    eigenvalues(&assemble(series, eps, mu, modes)?)
}

/// One slice per entry of `mu_grid`, computed in parallel and returned in grid order.
pub fn scan(series: &StokesSeries, eps: f64, mu_grid: &[f64], modes: usize) -> Result<Vec<SpectrumSlice>> {
    if let Some(&bad) = mu_grid.iter().find(|m| !(-0.5..=0.5).contains(*m)) {
        return Err(Error::InvalidInput(format!(
            "Floquet exponent {bad} outside [-1/2, 1/2]"
        )));
    }
    mu_grid.par_iter().map(|&mu| spectrum(series, eps, mu, modes)).collect()
}

/// Seed for isola extraction: a `mu` interval expected to overlap the
/// unstable one and the imaginary part the isola is centred on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolaSeed {
    pub p: i64,
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub center_im: f64,
}

impl IsolaSeed {
    /// Interval of half-width `halfwidth` around the collision exponent.
    pub fn around(collision: &CollisionPoint, halfwidth: f64) -> Self {
        Self {
            p: collision.p,
            mu_lo: collision.mu0 - halfwidth,
            mu_hi: collision.mu0 + halfwidth,
            center_im: collision.lambda0.im,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsolaPoint {
    pub mu: f64,
    pub lambda: Complex64,
}

/// Unstable Floquet interval and most unstable eigenvalue of one isola.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolaMeasurement {
    pub p: i64,
    pub eps: f64,
    pub modes: usize,
    /// `false` when no eigenvalue in the seed crossed the threshold.
    pub present: bool,
    pub floquet_lo: f64,
    pub floquet_hi: f64,
    pub mu_star: f64,
    pub lambda_star: Complex64,
    /// Threshold on `Re lambda` used to decide instability.
    pub threshold: f64,
    pub points: Vec<IsolaPoint>,
}

impl IsolaMeasurement {
    pub fn width(&self) -> f64 {
        self.floquet_hi - self.floquet_lo
    }

    pub fn growth(&self) -> f64 {
        self.lambda_star.re
    }
}

/// Growth rate of the isola at `mu` and the eigenvalue that attains it.
fn isola_growth(series: &StokesSeries, eps: f64, mu: f64, modes: usize, center: f64) -> Result<(f64, Complex64, f64)> {
    let slice = spectrum(series, eps, mu, modes)?;
    let best = slice
        .eigenvalues
        .iter()
        .filter(|z| (z.im - center).abs() < ISOLA_WINDOW)
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .unwrap_or(Complex64::new(f64::NEG_INFINITY, 0.0));
    Ok((best.re, best, slice.threshold()))
}

/// Locate the unstable interval of one isola by direct eigenvalue computation.
pub fn extract_isola(series: &StokesSeries, eps: f64, seed: &IsolaSeed, modes: usize) -> Result<IsolaMeasurement> {
    if seed.mu_lo.partial_cmp(&seed.mu_hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::InvalidInput(format!(
            "empty seed interval ({}, {})",
            seed.mu_lo, seed.mu_hi
        )));
    }
    let center = seed.center_im;
    let g = |mu: f64| isola_growth(series, eps, mu, modes, center);

    // coarse look over the seed for the largest growth
    let coarse = 33;
    let grid: Vec<f64> = (0..coarse)
        .map(|i| seed.mu_lo + (seed.mu_hi - seed.mu_lo) * i as f64 / (coarse - 1) as f64)
        .collect();
    let values: Vec<(f64, Complex64, f64)> = grid.par_iter().map(|&mu| g(mu)).collect::<Result<_>>()?;
    let threshold = values.iter().map(|v| v.2).fold(0.0, f64::max);
    let (ibest, _) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .expect("nonempty grid");

    // golden-section refinement of the maximum inside the neighbouring cells
    let step = grid[1] - grid[0];
    let (mut a, mut b) = (grid[ibest] - step, grid[ibest] + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let mut f1 = g(x1)?.0;
    let mut f2 = g(x2)?.0;
    while b - a > ENDPOINT_TOL * 10.0 {
        if f1 > f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = g(x1)?.0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = g(x2)?.0;
        }
    }
    let mu_star = 0.5 * (a + b);
    let (peak, lambda_star, _) = g(mu_star)?;

    if peak <= threshold {
        return Ok(IsolaMeasurement {
            p: seed.p,
            eps,
            modes,
            present: false,
            floquet_lo: mu_star,
            floquet_hi: mu_star,
            mu_star,
            lambda_star,
            threshold,
            points: Vec::new(),
        });
    }

    let unstable = |mu: f64| -> Result<bool> { Ok(g(mu)?.0 > threshold) };
    let reach = seed.mu_hi - seed.mu_lo;
    let (in_lo, out_lo) = bisect_edge(&unstable, mu_star, -reach)?;
    let (in_hi, out_hi) = bisect_edge(&unstable, mu_star, reach)?;
    let span = in_hi - in_lo;
    let d = |mu: f64| pair_discriminant(series, eps, mu, modes, center);
    let floquet_lo = polish_edge(&d, in_lo + 0.02 * span, out_lo - 0.02 * span)?.unwrap_or(0.5 * (in_lo + out_lo));
    let floquet_hi = polish_edge(&d, in_hi - 0.02 * span, out_hi + 0.02 * span)?.unwrap_or(0.5 * (in_hi + out_hi));

    let width = floquet_hi - floquet_lo;
    let interior: Vec<f64> = (1..=ISOLA_SAMPLES)
        .map(|i| floquet_lo + width * i as f64 / (ISOLA_SAMPLES + 1) as f64)
        .collect();
    let slices: Vec<SpectrumSlice> = interior
        .par_iter()
        .map(|&mu| spectrum(series, eps, mu, modes))
        .collect::<Result<_>>()?;
    let points = slices
        .iter()
        .flat_map(|s| {
            s.eigenvalues
                .iter()
                .filter(|z| (z.im - center).abs() < ISOLA_WINDOW && z.re.abs() > threshold)
                .map(move |&lambda| IsolaPoint { mu: s.mu, lambda })
        })
        .collect();

    Ok(IsolaMeasurement {
        p: seed.p,
        eps,
        modes,
        present: true,
        floquet_lo,
        floquet_hi,
        mu_star,
        lambda_star,
        threshold,
        points,
    })
}

/// Edge of the unstable set starting from an unstable `inside` and walking
/// by `reach` (sign gives direction) until a stable point is found. Returns
/// the final unstable and stable points.
fn bisect_edge(unstable: &dyn Fn(f64) -> Result<bool>, inside: f64, reach: f64) -> Result<(f64, f64)> {
    let mut outside = inside + reach;
    let mut grow = reach;
    while unstable(outside)? {
        grow *= 2.0;
        outside = inside + grow;
        if outside.abs() > 0.5 {
            return Err(Error::InvalidInput(
                "unstable interval reaches the Floquet boundary".into(),
            ));
        }
    }
    let (mut a, mut b) = (inside, outside);
    while (b - a).abs() > ENDPOINT_TOL {
        let mid = 0.5 * (a + b);
        if unstable(mid)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok((a, b))
}

/// `((lambda_a - lambda_b)/2)^2` for the closest pair of eigenvalues in the
/// isola window: positive while the pair is split off the axis, negative
/// once it sits on it, and smooth through the endpoint.
fn pair_discriminant(series: &StokesSeries, eps: f64, mu: f64, modes: usize, center: f64) -> Result<f64> {
    let slice = spectrum(series, eps, mu, modes)?;
    let near: Vec<Complex64> = slice
        .eigenvalues
        .into_iter()
        .filter(|z| (z.im - center).abs() < ISOLA_WINDOW)
        .collect();
    let mut best = (f64::INFINITY, Complex64::new(0.0, 0.0));
    for (i, a) in near.iter().enumerate() {
        for b in &near[i + 1..] {
            let gap = (a - b).norm();
            if gap < best.0 {
                best = (gap, (a - b) / 2.0);
            }
        }
    }
    Ok((best.1 * best.1).re)
}

/// Illinois iteration for the sign change of `d` between `inside` (`d > 0`)
/// and `outside` (`d < 0`). `None` when the signs do not bracket.
fn polish_edge(d: &dyn Fn(f64) -> Result<f64>, inside: f64, outside: f64) -> Result<Option<f64>> {
    let (mut a, mut b) = (inside, outside);
    let (mut fa, mut fb) = (d(a)?, d(b)?);
    if !(fa > 0.0 && fb < 0.0) {
        return Ok(None);
    }
    let mut side = 0;
    for _ in 0..60 {
        let c = (a * fb - b * fa) / (fb - fa);
        if (c - a).abs().min((c - b).abs()) <= f64::EPSILON * c.abs() {
            return Ok(Some(c));
        }
        let fc = d(c)?;
        if fc == 0.0 {
            return Ok(Some(c));
        }
        if fc > 0.0 {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        } else {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        }
        if (b - a).abs() <= 4.0 * f64::EPSILON * c.abs() {
            return Ok(Some(0.5 * (a + b)));
        }
    }
    Ok(Some(a - fa * (b - a) / (fb - fa)))
}
