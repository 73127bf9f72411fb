//! Order-by-order asymptotics of high-frequency isolas.
//!
//! The eigenpair is expanded as `lambda = sum lambda_k eps^k`,
//! `mu = sum mu_k eps^k`, `w = sum w_k eps^k` about a collision of the
//! zero-amplitude spectrum at modes `n` and `m`. Each `w_k` is split into two
//! cascades, one seeded by the null vector at `n` and one by the null vector
//! at `m`:
//!
//! `w_k = v^n_k + sum_j gamma_j v^m_{k-j}`.
//!
//! A cascade satisfies `(L_0 - lambda_0) v_i = sum_a (lambda_a - L_a) v_{i-a}`
//! with the resonant components removed. The removed amounts, projected onto
//! the adjoint null vectors, are the solvability conditions. They are affine
//! in the unknowns of each order, so their coefficients are read off by
//! evaluating at unit settings.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispersion::CollisionPoint;
use crate::error::{Error, Result};
use crate::stokes::{StokesSeries, MAX_ORDER};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Relative tolerance for the affine-dependence guard.
const AFFINE_TOL: f64 = 1e-10;
/// Relative tolerance for solvability of right-hand sides.
const SOLVABILITY_TOL: f64 = 1e-9;
/// Below this `S_3` is treated as zero and the degenerate branch is taken.
pub const DEGENERATE_S3: f64 = 1e-8;
/// Samples of the third-order parameter used to check fourth-order independence.
const MU3_SAMPLES: usize = 7;

pub type Block = [[Complex64; 2]; 2];

fn apply_block(b: &Block, v: [Complex64; 2]) -> [Complex64; 2] {
    [b[0][0] * v[0] + b[0][1] * v[1], b[1][0] * v[0] + b[1][1] * v[1]]
}

/// Finitely supported Fourier coefficients `(h(j), u(j))`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FourierVec2 {
    pub coeffs: BTreeMap<i64, [Complex64; 2]>,
}

impl FourierVec2 {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn single(j: i64, v: [Complex64; 2]) -> Self {
        let mut out = Self::new();
        out.add_at(j, v);
        out
    }

    pub fn get(&self, j: i64) -> [Complex64; 2] {
        self.coeffs.get(&j).copied().unwrap_or([ZERO; 2])
    }

    pub fn set(&mut self, j: i64, v: [Complex64; 2]) {
        self.coeffs.insert(j, v);
    }

    pub fn add_at(&mut self, j: i64, v: [Complex64; 2]) {
        let e = self.coeffs.entry(j).or_insert([ZERO; 2]);
        e[0] += v[0];
        e[1] += v[1];
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: Complex64, other: &FourierVec2) {
        for (&j, v) in &other.coeffs {
            self.add_at(j, [a * v[0], a * v[1]]);
        }
    }

    pub fn scaled(&self, a: Complex64) -> FourierVec2 {
        let mut out = FourierVec2::new();
        out.axpy(a, self);
        out
    }

    /// Modes carrying a coefficient above `tol` in modulus.
    pub fn support(&self, tol: f64) -> Vec<i64> {
        self.coeffs
            .iter()
            .filter(|(_, v)| v[0].norm() > tol || v[1].norm() > tol)
            .map(|(&j, _)| j)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.values().flatten().fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn distance(&self, other: &FourierVec2) -> f64 {
        let mut d = self.clone();
        d.axpy(Complex64::new(-1.0, 0.0), other);
        d.max_abs()
    }
}

/// Corrections `lambda_k`, `mu_k` indexed by order; index 0 holds the collision values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corrections {
    pub lambda: [Complex64; MAX_ORDER + 1],
    pub mu: [f64; MAX_ORDER + 1],
}

impl Corrections {
    pub fn at_collision(c: &CollisionPoint) -> Self {
        let mut lambda = [ZERO; MAX_ORDER + 1];
        let mut mu = [0.0; MAX_ORDER + 1];
        lambda[0] = c.lambda0;
        mu[0] = c.mu0;
        Self { lambda, mu }
    }
}

/// Truncated power series in `eps` through `eps^4`.
type Series5 = [f64; MAX_ORDER + 1];

fn series_mul(a: &Series5, b: &Series5) -> Series5 {
    let mut out = [0.0; MAX_ORDER + 1];
    for i in 0..=MAX_ORDER {
        for j in 0..=MAX_ORDER - i {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn series_div(a: &Series5, b: &Series5) -> Series5 {
    let mut out = [0.0; MAX_ORDER + 1];
    for k in 0..=MAX_ORDER {
        let mut s = a[k];
        for j in 1..=k {
            s -= b[j] * out[k - j];
        }
        out[k] = s / b[0];
    }
    out
}

/// Coefficients of `tanh(t0 + s(eps))` for `s` with no constant term.
fn tanh_series(t0: f64, s: &Series5) -> Series5 {
    let t = t0.tanh();
    let s3 = series_mul(&series_mul(s, s), s);
    let mut th = *s;
    for k in 0..=MAX_ORDER {
        th[k] -= s3[k] / 3.0;
    }
    let mut num = th;
    num[0] += t;
    let mut den = th.map(|x| t * x);
    den[0] += 1.0;
    series_div(&num, &den)
}

/// Entries of the order-`a` operator coupling column mode `jp` to row mode `jp + l`.
fn order_block(series: &StokesSeries, corr: &Corrections, a: usize, l: i64, jp: i64) -> Block {
    let alpha = series.alpha();
    let lf = l as f64;
    let delta = if l == 0 { 1.0 } else { 0.0 };
    let d = |c: usize| -> Complex64 {
        if c == 0 {
            I * (corr.mu[0] + jp as f64)
        } else {
            I * corr.mu[c]
        }
    };
    // c - u_S and 1 + eta_S, order by order
    let a_coef = |b: usize| -> f64 {
        if b == 0 {
            series.speed(0) * delta
        } else {
            series.speed(b) * delta - series.u_hat(b, l)
        }
    };
    let f_coef = |b: usize| -> f64 {
        if b == 0 {
            delta
        } else {
            series.eta_hat(b, l)
        }
    };
    let (u_a, eta_a) = if a == 0 {
        (0.0, 0.0)
    } else {
        (series.u_hat(a, l), series.eta_hat(a, l))
    };

    let mut diag = -I * lf * u_a;
    let mut off = -I * lf * eta_a;
    for b in 0..=a {
        diag += a_coef(b) * d(a - b);
        off -= f_coef(b) * d(a - b);
    }
    diag *= alpha;
    off *= alpha;

    let lower = if l == 0 {
        let mut s = [0.0; MAX_ORDER + 1];
        for (sc, m) in s.iter_mut().zip(&corr.mu).skip(1) {
            *sc = alpha * m;
        }
        -I * tanh_series(alpha * (corr.mu[0] + jp as f64), &s)[a]
    } else {
        ZERO
    };
    [[diag, off], [lower, diag]]
}

/// Fourier symbol of the zero-amplitude operator at mode `j`.
pub fn symbol_block(j: i64, collision: &CollisionPoint, series: &StokesSeries) -> Block {
    order_block(series, &Corrections::at_collision(collision), 0, 0, j)
}

/// Action of the order-`order` operator on a finitely supported vector.
pub fn apply_order_operator(order: usize, series: &StokesSeries, corr: &Corrections, w: &FourierVec2) -> FourierVec2 {
    let reach = order as i64;
    let mut out = FourierVec2::new();
    for (&jp, v) in &w.coeffs {
        for l in -reach..=reach {
            let b = order_block(series, corr, order, l, jp);
            let y = apply_block(&b, *v);
            if y[0] != ZERO || y[1] != ZERO {
                out.add_at(jp + l, y);
            }
        }
    }
    out
}

/// Null and adjoint-null vectors of the resonant blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantVectors {
    pub r_n: [Complex64; 2],
    pub r_m: [Complex64; 2],
    pub psi_n: [Complex64; 2],
    pub psi_m: [Complex64; 2],
}

impl ResonantVectors {
    pub fn new(c: &CollisionPoint) -> Self {
        let s = &c.setup;
        let (kn, km) = (c.kn(), c.km());
        let (wn, wm) = (s.omega(kn), s.omega(km));
        let re = |x: f64| Complex64::new(x, 0.0);
        Self {
            r_n: [re(1.0), re(wn / (s.alpha * kn))],
            r_m: [re(1.0), re(-wm / (s.alpha * km))],
            psi_n: [re(1.0), re(s.alpha * kn / wn)],
            psi_m: [re(1.0), re(-s.alpha * km / wm)],
        }
    }
}

fn inner(psi: &[Complex64; 2], v: &[Complex64; 2]) -> Complex64 {
    psi[0].conj() * v[0] + psi[1].conj() * v[1]
}

/// Solve `(L_0 - lambda_0) x = rhs` for a right-hand side with no resonant component.
///
/// At mode `n` the solution has `h(n) = 0`; at mode `m` it is the
/// minimal-norm one. The homogeneous part at `m` is carried by the caller.
pub fn solve_offresonant(rhs: &FourierVec2, collision: &CollisionPoint, series: &StokesSeries) -> Result<FourierVec2> {
    let vecs = ResonantVectors::new(collision);
    let scale = rhs.max_abs();
    for (mode, psi) in [(collision.n, vecs.psi_n), (collision.m, vecs.psi_m)] {
        let projection = inner(&psi, &rhs.get(mode)).norm();
        if projection > SOLVABILITY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::SolvabilityViolated {
                projection,
                bound: SOLVABILITY_TOL * scale,
            });
        }
    }
    let lambda0 = collision.lambda0;
    let mut out = FourierVec2::new();
    for (&j, r) in &rhs.coeffs {
        let mut b = symbol_block(j, collision, series);
        b[0][0] -= lambda0;
        b[1][1] -= lambda0;
        let x = if j == collision.n || j == collision.m {
            // rank-one block: take h = 0 from the first row
            let u = r[0] / b[0][1];
            let mut x = [ZERO, u];
            if j == collision.m {
                let rm = vecs.r_m;
                let t = inner(&rm, &x) / inner(&rm, &rm);
                x = [x[0] - t * rm[0], x[1] - t * rm[1]];
            }
            x
        } else {
            let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
            [
                (b[1][1] * r[0] - b[0][1] * r[1]) / det,
                (b[0][0] * r[1] - b[1][0] * r[0]) / det,
            ]
        };
        out.set(j, x);
    }
    Ok(out)
}

/// Affine dependence of one solvability projection on the order's unknowns,
/// together with the couplings to the other cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonantRow {
    /// Coefficient of `lambda_k`; equals 2 with the adjoint normalization.
    pub lambda_coeff: Complex64,
    /// Coefficient of `mu_k`.
    pub drift: Complex64,
    /// Value at `lambda_k = mu_k = 0`.
    pub constant: Complex64,
    /// Projection of the opposite cascade: the `gamma_0` coefficient in the
    /// `n` row, the constant term in the `m` row.
    pub coupling: Complex64,
    /// Coefficient of `gamma_{k-2}` (orders 3 and up).
    pub deferred: Complex64,
}

impl ResonantRow {
    /// Group velocity recovered from the drift coefficient.
    pub fn group_velocity(&self) -> f64 {
        (self.drift / (2.0 * I)).re
    }

    /// Drift `P` with `constant = -2i P`.
    pub fn p(&self) -> Complex64 {
        I * self.constant / 2.0
    }

    /// Coupling `S` with `coupling = i S`.
    pub fn s(&self) -> Complex64 {
        -I * self.coupling
    }

    /// Deferred coupling `T` with `deferred = i T`.
    pub fn t(&self) -> Complex64 {
        -I * self.deferred
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityCoeffs {
    pub order: usize,
    pub n: ResonantRow,
    pub m: ResonantRow,
}

/// Both cascades through the highest order solved so far.
#[derive(Debug, Clone)]
pub struct Hierarchy<'a> {
    series: &'a StokesSeries,
    pub collision: CollisionPoint,
    pub corr: Corrections,
    pub vectors: ResonantVectors,
    /// `cascades[0]` is seeded at `n`, `cascades[1]` at `m`.
    pub cascades: [Vec<FourierVec2>; 2],
}

impl<'a> Hierarchy<'a> {
    pub fn new(series: &'a StokesSeries, collision: &CollisionPoint) -> Self {
        let vectors = ResonantVectors::new(collision);
        Self {
            series,
            collision: *collision,
            corr: Corrections::at_collision(collision),
            vectors,
            cascades: [
                vec![FourierVec2::single(collision.n, vectors.r_n)],
                vec![FourierVec2::single(collision.m, vectors.r_m)],
            ],
        }
    }

    pub fn solved_order(&self) -> usize {
        self.cascades[0].len() - 1
    }

    /// `sum_{a=1..order} (lambda_a - L_a) v_{order-a}` for one cascade, with the
    /// order's own corrections replaced by trial values.
    pub fn residual(&self, seed: usize, order: usize, lambda: Complex64, mu: f64) -> FourierVec2 {
        let mut corr = self.corr;
        corr.lambda[order] = lambda;
        corr.mu[order] = mu;
        let cascade = &self.cascades[seed];
        let mut out = FourierVec2::new();
        for a in 1..=order {
            let v = &cascade[order - a];
            out.axpy(corr.lambda[a], v);
            out.axpy(
                Complex64::new(-1.0, 0.0),
                &apply_order_operator(a, self.series, &corr, v),
            );
        }
        out
    }

    /// Projection onto the adjoint null vector at `n` (`row = 0`) or `m` (`row = 1`).
    pub fn project(&self, row: usize, r: &FourierVec2) -> Complex64 {
        if row == 0 {
            inner(&self.vectors.psi_n, &r.get(self.collision.n))
        } else {
            inner(&self.vectors.psi_m, &r.get(self.collision.m))
        }
    }

    /// Projection of an already solved cascade order with the stored corrections.
    pub fn stored_projection(&self, row: usize, seed: usize, order: usize) -> Complex64 {
        if order == 0 {
            return ZERO;
        }
        let r = self.residual(seed, order, self.corr.lambda[order], self.corr.mu[order]);
        self.project(row, &r)
    }

    fn affine_row(&self, row: usize, order: usize) -> Result<(Complex64, Complex64, Complex64)> {
        let f = |l: f64, m: f64| self.project(row, &self.residual(row, order, Complex64::new(l, 0.0), m));
        let f00 = f(0.0, 0.0);
        let f10 = f(1.0, 0.0);
        let f01 = f(0.0, 1.0);
        let f11 = f(1.0, 1.0);
        let second = (f11 - f10 - f01 + f00).norm();
        let scale = 1.0f64.max(f00.norm()).max(f10.norm()).max(f01.norm());
        if second > AFFINE_TOL * scale {
            return Err(Error::NonAffine {
                order,
                residual: second,
            });
        }
        Ok((f10 - f00, f01 - f00, f00))
    }

    /// Solvability coefficients at `order`, with all lower orders solved.
    pub fn coefficients(&self, order: usize) -> Result<SolvabilityCoeffs> {
        if order == 0 || order > self.solved_order() + 1 {
            return Err(Error::InvalidInput(format!(
                "order {order} needs orders below it solved (have {})",
                self.solved_order()
            )));
        }
        let lam = self.corr.lambda[order];
        let mu = self.corr.mu[order];
        let mut rows = [None, None];
        for (row, slot) in rows.iter_mut().enumerate() {
            let (lambda_coeff, drift, constant) = self.affine_row(row, order)?;
            let other = 1 - row;
            let coupling = self.project(row, &self.residual(other, order, lam, mu));
            let deferred = if order >= 3 {
                self.stored_projection(row, 1, 2)
            } else {
                ZERO
            };
            *slot = Some(ResonantRow {
                lambda_coeff,
                drift,
                constant,
                coupling,
                deferred,
            });
        }
        Ok(SolvabilityCoeffs {
            order,
            n: rows[0].unwrap(),
            m: rows[1].unwrap(),
        })
    }

    /// Fix the corrections at `order` and solve both cascades there.
    pub fn advance(&mut self, order: usize, lambda: Complex64, mu: f64) -> Result<()> {
        if order != self.solved_order() + 1 {
            return Err(Error::InvalidInput(format!(
                "cannot solve order {order} after {}",
                self.solved_order()
            )));
        }
        self.corr.lambda[order] = lambda;
        self.corr.mu[order] = mu;
        for seed in 0..2 {
            let mut r = self.residual(seed, order, lambda, mu);
            let (n, m) = (self.collision.n, self.collision.m);
            let a_n = self.project(0, &r) / 2.0;
            let a_m = self.project(1, &r) / 2.0;
            r.add_at(n, [-a_n * self.vectors.r_n[0], -a_n * self.vectors.r_n[1]]);
            r.add_at(m, [-a_m * self.vectors.r_m[0], -a_m * self.vectors.r_m[1]]);
            let v = solve_offresonant(&r, &self.collision, self.series)?;
            self.cascades[seed].push(v);
        }
        Ok(())
    }

    /// `(L_0 - lambda_0) v` for a vector.
    pub fn apply_shifted(&self, v: &FourierVec2) -> FourierVec2 {
        let mut out = apply_order_operator(0, self.series, &self.corr, v);
        out.axpy(-self.collision.lambda0, v);
        out
    }
}

/// Solve `c_s lambda + beta_s mu + kappa_s = 0` for both rows.
fn decoupled(c: &SolvabilityCoeffs) -> Result<(Complex64, Complex64)> {
    let (n, m) = (&c.n, &c.m);
    let det = n.lambda_coeff * m.drift - m.lambda_coeff * n.drift;
    if det.norm() < 1e-14 {
        return Err(Error::DegenerateGroupVelocity(det.norm()));
    }
    let lambda = (n.drift * m.constant - m.drift * n.constant) / det;
    let mu = (m.lambda_coeff * n.constant - n.lambda_coeff * m.constant) / det;
    Ok((lambda, mu))
}

/// The coupled order: `(2 lambda + beta_n t + kappa_n)(2 lambda + beta_m t + kappa_m) = X_n X_m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledOrder {
    pub order: usize,
    pub beta_n: Complex64,
    pub beta_m: Complex64,
    pub kappa_n: Complex64,
    pub kappa_m: Complex64,
    pub x_n: Complex64,
    pub x_m: Complex64,
}

impl CoupledOrder {
    fn from_coeffs(c: &SolvabilityCoeffs) -> Self {
        Self {
            order: c.order,
            beta_n: c.n.drift,
            beta_m: c.m.drift,
            kappa_n: c.n.constant,
            kappa_m: c.m.constant,
            x_n: c.n.coupling,
            x_m: c.m.coupling,
        }
    }

    /// Both roots `lambda_k(t)`, the one with the larger real part first.
    pub fn roots(&self, t: f64) -> [Complex64; 2] {
        let a = self.beta_n * t + self.kappa_n;
        let b = self.beta_m * t + self.kappa_m;
        let half = (a - b) / 2.0;
        let disc = (half * half + self.x_n * self.x_m).sqrt();
        let mid = -(a + b) / 4.0;
        let (p, q) = (mid + disc / 2.0, mid - disc / 2.0);
        if p.re >= q.re {
            [p, q]
        } else {
            [q, p]
        }
    }

    pub fn group_velocity_gap(&self) -> f64 {
        ((self.beta_m - self.beta_n) / (2.0 * I)).re
    }

    /// `X_n X_m`; real and nonnegative at an unstable collision.
    pub fn coupling_product(&self) -> Complex64 {
        self.x_n * self.x_m
    }

    /// Centre of the unstable range of `t`.
    pub fn center(&self) -> f64 {
        let pn = (I * self.kappa_n / 2.0).re;
        let pm = (I * self.kappa_m / 2.0).re;
        (pm - pn) / self.group_velocity_gap()
    }

    /// Half-width of the unstable range of `t`.
    pub fn halfwidth(&self) -> f64 {
        self.coupling_product().re.max(0.0).sqrt() / self.group_velocity_gap().abs()
    }
}

/// Asymptotic description of one isola.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolaAsymptotics {
    pub p: i64,
    pub collision: CollisionPoint,
    /// First-order corrections as solved, before being fixed to zero.
    pub lambda1: Complex64,
    pub mu1: Complex64,
    /// Second-order corrections below the coupled order (p = 3 only).
    pub lambda2: Complex64,
    pub mu2: f64,
    pub coupled: CoupledOrder,
    /// `c_{g,1}(mu0 + n)` and `c_{g,-1}(mu0 + m)` measured from the drift coefficients.
    pub group_velocity_n: f64,
    pub group_velocity_m: f64,
    /// `S_{p,n}`, `S_{p,m}` and `S_p >= 0`.
    pub s_n: Complex64,
    pub s_m: Complex64,
    pub s_p: f64,
    pub p_n: Complex64,
    pub p_m: Complex64,
    /// Centre and half-width of the unstable range of the scaled exponent
    /// `(mu - mu0 - mu2 eps^2 - mu4 eps^4) / eps^p`.
    pub center: f64,
    pub halfwidth: f64,
    /// Fourth-order corrections (p = 3 only).
    pub lambda4: Complex64,
    pub mu4: f64,
    pub p4_n: Complex64,
    pub p4_m: Complex64,
    /// Largest change of `lambda4` across the third-order parameter range.
    pub lambda4_spread: f64,
    /// Smallest `|det / (8 Re lambda3) - 1|` style mismatch over the same samples.
    pub cramer_mismatch: f64,
    pub t3_m: Complex64,
    pub t4_m: Complex64,
    /// `lambda_{r,*} / eps^p`.
    pub growth_coeff: f64,
    /// `S_3` vanished and the degenerate branch was used.
    pub degenerate: bool,
    pub coefficients: Vec<SolvabilityCoeffs>,
}

impl IsolaAsymptotics {
    fn shift(&self, eps: f64) -> f64 {
        let e2 = eps * eps;
        self.collision.mu0 + self.mu2 * e2 + self.mu4 * e2 * e2
    }

    fn scale(&self, eps: f64) -> f64 {
        eps.powi(self.p.unsigned_abs() as i32)
    }

    /// `(lo, hi)` of the asymptotic unstable Floquet interval.
    pub fn floquet_interval(&self, eps: f64) -> (f64, f64) {
        let base = self.shift(eps);
        let s = self.scale(eps);
        (
            base + (self.center - self.halfwidth) * s,
            base + (self.center + self.halfwidth) * s,
        )
    }

    pub fn mu_star(&self, eps: f64) -> f64 {
        self.shift(eps) + self.center * self.scale(eps)
    }

    /// Eigenvalues on both branches at Floquet exponent `mu`, unstable branch first.
    pub fn lambda_at(&self, eps: f64, mu: f64) -> [Complex64; 2] {
        let s = self.scale(eps);
        let t = (mu - self.shift(eps)) / s;
        let e2 = eps * eps;
        let base = self.collision.lambda0 + self.lambda2 * e2 + self.lambda4 * e2 * e2;
        self.coupled.roots(t).map(|r| base + r * s)
    }

    pub fn lambda_star(&self, eps: f64) -> Complex64 {
        self.lambda_at(eps, self.mu_star(eps))[0]
    }

    pub fn growth(&self, eps: f64) -> f64 {
        self.growth_coeff * self.scale(eps)
    }
}

#[cfg(test)]
fn group_velocities(c: &CollisionPoint) -> (f64, f64) {
    (
        c.setup.group_velocity(crate::dispersion::Branch::Plus, c.kn()),
        c.setup.group_velocity(crate::dispersion::Branch::Minus, c.km()),
    )
}

fn check_lambda_coeff(c: &SolvabilityCoeffs) -> Result<()> {
    for row in [&c.n, &c.m] {
        let err = (row.lambda_coeff - 2.0).norm();
        if err > AFFINE_TOL {
            return Err(Error::NonAffine {
                order: c.order,
                residual: err,
            });
        }
    }
    Ok(())
}

fn first_order(h: &mut Hierarchy) -> Result<(Complex64, Complex64, SolvabilityCoeffs)> {
    let c1 = h.coefficients(1)?;
    check_lambda_coeff(&c1)?;
    let (lambda1, mu1) = decoupled(&c1)?;
    h.advance(1, ZERO, 0.0)?;
    Ok((lambda1, mu1, c1))
}

fn s_product(c: &CoupledOrder, collision: &CollisionPoint) -> f64 {
    let prod = c.coupling_product().re * collision.krein_product();
    prod.max(0.0).sqrt()
}

/// Isola asymptotics for a `p = +-2` collision through second order.
pub fn p2_asymptotics(collision: &CollisionPoint, series: &StokesSeries) -> Result<IsolaAsymptotics> {
    if collision.p.abs() != 2 {
        return Err(Error::UnsupportedOrder(collision.p));
    }
    let mut h = Hierarchy::new(series, collision);
    let (lambda1, mu1, c1) = first_order(&mut h)?;
    let c2 = h.coefficients(2)?;
    check_lambda_coeff(&c2)?;
    let coupled = CoupledOrder::from_coeffs(&c2);
    let gap = coupled.group_velocity_gap();
    if gap.abs() < 1e-10 {
        return Err(Error::DegenerateGroupVelocity(gap));
    }
    let s_p = s_product(&coupled, collision);
    if s_p < DEGENERATE_S3 {
        return Err(Error::NoInstability { p: 2 });
    }
    Ok(IsolaAsymptotics {
        p: collision.p,
        collision: *collision,
        lambda1,
        mu1,
        lambda2: ZERO,
        mu2: 0.0,
        coupled,
        group_velocity_n: c2.n.group_velocity(),
        group_velocity_m: c2.m.group_velocity(),
        s_n: c2.n.s(),
        s_m: c2.m.s(),
        s_p,
        p_n: c2.n.p(),
        p_m: c2.m.p(),
        center: coupled.center(),
        halfwidth: coupled.halfwidth(),
        lambda4: ZERO,
        mu4: 0.0,
        p4_n: ZERO,
        p4_m: ZERO,
        lambda4_spread: 0.0,
        cramer_mismatch: 0.0,
        t3_m: ZERO,
        t4_m: ZERO,
        growth_coeff: coupled.coupling_product().re.max(0.0).sqrt() / 2.0,
        degenerate: false,
        coefficients: vec![c1, c2],
    })
}

/// Fourth-order corrections at one value of the third-order parameter.
struct FourthOrder {
    lambda4: Complex64,
    mu4: f64,
    coeffs: SolvabilityCoeffs,
    cramer_det: Complex64,
    re_lambda3: f64,
}

fn fourth_order(h: &Hierarchy, coupled: &CoupledOrder, t: f64, degenerate: bool) -> Result<FourthOrder> {
    let mut h = h.clone();
    let (lambda3, gamma0) = if degenerate {
        (ZERO, Complex64::new(1.0, 0.0))
    } else {
        let l3 = coupled.roots(t)[0];
        let a_n = 2.0 * l3 + coupled.beta_n * t + coupled.kappa_n;
        (l3, -a_n / coupled.x_n)
    };
    let mu3 = if degenerate { 0.0 } else { t };
    h.advance(3, lambda3, mu3)?;
    let c4 = h.coefficients(4)?;
    check_lambda_coeff(&c4)?;
    let (n, m) = (&c4.n, &c4.m);
    let mu4c = (n.constant - m.constant) / (m.drift - n.drift);
    let mu4 = mu4c.re;

    // Cramer system for (lambda4, gamma1):
    //   2 lambda4 + X_n3 gamma1 = -(beta_n mu4 + kappa_n + gamma0 X_n4)
    //   2 gamma0 lambda4 + B_m gamma1 = -(gamma0 (beta_m mu4 + kappa_m) + X_m4)
    let x_n3 = h.stored_projection(0, 1, 3);
    let b_m = h.stored_projection(1, 1, 3);
    let e_n = n.drift * mu4 + n.constant + gamma0 * n.coupling;
    let e_m = m.drift * mu4 + m.constant + m.coupling / gamma0;
    let det = 2.0 * b_m - 2.0 * gamma0 * x_n3;
    let lambda4 = if degenerate || det.norm() < 1e-300 {
        -e_n / 2.0
    } else {
        (-e_n * b_m + x_n3 * gamma0 * e_m) / det
    };
    Ok(FourthOrder {
        lambda4,
        mu4,
        coeffs: c4,
        cramer_det: det,
        re_lambda3: lambda3.re,
    })
}

/// Isola asymptotics for a `p = +-3` collision through fourth order.
pub fn p3_asymptotics(collision: &CollisionPoint, series: &StokesSeries) -> Result<IsolaAsymptotics> {
    if collision.p.abs() != 3 {
        return Err(Error::UnsupportedOrder(collision.p));
    }
    let mut h = Hierarchy::new(series, collision);
    let (lambda1, mu1, c1) = first_order(&mut h)?;

    let c2 = h.coefficients(2)?;
    check_lambda_coeff(&c2)?;
    let (lambda2, mu2c) = decoupled(&c2)?;
    let mu2 = mu2c.re;
    h.advance(2, lambda2, mu2)?;

    let c3 = h.coefficients(3)?;
    check_lambda_coeff(&c3)?;
    let coupled = CoupledOrder::from_coeffs(&c3);
    let gap = coupled.group_velocity_gap();
    if gap.abs() < 1e-10 {
        return Err(Error::DegenerateGroupVelocity(gap));
    }
    let s_p = s_product(&coupled, collision);
    let degenerate = s_p < DEGENERATE_S3;
    let center = if degenerate { 0.0 } else { coupled.center() };
    let halfwidth = if degenerate { 0.0 } else { coupled.halfwidth() };

    let mid = fourth_order(&h, &coupled, center, degenerate)?;
    let mut lambda4_spread: f64 = 0.0;
    let mut cramer_mismatch: f64 = 0.0;
    if !degenerate {
        for i in 0..MU3_SAMPLES {
            let frac = -0.9 + 1.8 * i as f64 / (MU3_SAMPLES - 1) as f64;
            let f = fourth_order(&h, &coupled, center + frac * halfwidth, false)?;
            lambda4_spread = lambda4_spread.max((f.lambda4 - mid.lambda4).norm());
            cramer_mismatch = cramer_mismatch.max((f.cramer_det - 8.0 * f.re_lambda3).norm());
        }
    }

    let c4 = mid.coeffs;
    Ok(IsolaAsymptotics {
        p: collision.p,
        collision: *collision,
        lambda1,
        mu1,
        lambda2,
        mu2,
        coupled,
        group_velocity_n: c3.n.group_velocity(),
        group_velocity_m: c3.m.group_velocity(),
        s_n: c3.n.s(),
        s_m: c3.m.s(),
        s_p,
        p_n: c3.n.p(),
        p_m: c3.m.p(),
        center,
        halfwidth,
        lambda4: mid.lambda4,
        mu4: mid.mu4,
        p4_n: c4.n.p(),
        p4_m: c4.m.p(),
        lambda4_spread,
        cramer_mismatch,
        t3_m: c3.m.t(),
        t4_m: c4.m.t(),
        growth_coeff: if degenerate {
            0.0
        } else {
            coupled.coupling_product().re.max(0.0).sqrt() / 2.0
        },
        degenerate,
        coefficients: vec![c1, c2, c3, c4],
    })
}

/// Dispatch on `|p|`.
pub fn isola_asymptotics(collision: &CollisionPoint, series: &StokesSeries) -> Result<IsolaAsymptotics> {
    match collision.p.abs() {
        2 => p2_asymptotics(collision, series),
        3 => p3_asymptotics(collision, series),
        _ => Err(Error::UnsupportedOrder(collision.p)),
    }
}

/// Samples `(mu, lambda)` of both branches over the asymptotic unstable interval.
pub fn asymptotic_ellipse(asym: &IsolaAsymptotics, eps: f64, samples: usize) -> Vec<(f64, Complex64)> {
    let (lo, hi) = asym.floquet_interval(eps);
    if samples < 2 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(2 * samples);
    let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    for i in 0..samples {
        // cosine spacing resolves the square-root behaviour at the endpoints
        let theta = std::f64::consts::PI * i as f64 / (samples - 1) as f64;
        let mu = mid - half * theta.cos();
        let [up, down] = asym.lambda_at(eps, mu);
        out.push((mu, up));
        out.push((mu, down));
    }
    out
}

/// Sign-continued `S_p` over a sweep in `alpha`; the sign is fixed so the
/// first entry is nonnegative and flips whenever `S_{p,n}` changes sign.
pub fn signed_s_sweep(p: i64, alphas: &[f64]) -> Result<Vec<(f64, f64)>> {
    use rayon::prelude::*;
    let raw: Vec<(f64, f64, f64)> = alphas
        .par_iter()
        .map(|&alpha| {
            let setup = crate::dispersion::ModelSetup::new(alpha)?;
            let series = crate::stokes::stokes_coefficients(&setup)?;
            let c = crate::dispersion::solve_collision(p, &setup)?;
            let (s_p, s_n) = coupled_s(&c, &series)?;
            Ok((alpha, s_p, s_n))
        })
        .collect::<Result<_>>()?;
    let reference = raw.first().map(|r| r.2.signum()).unwrap_or(1.0);
    Ok(raw
        .into_iter()
        .map(|(a, s, sn)| (a, s * sn.signum() * reference))
        .collect())
}

/// `(S_p, Re S_{p,n})` at a collision, without the fourth-order stage.
pub fn coupled_s(collision: &CollisionPoint, series: &StokesSeries) -> Result<(f64, f64)> {
    let mut h = Hierarchy::new(series, collision);
    first_order(&mut h)?;
    let order = collision.p.unsigned_abs() as usize;
    if order == 3 {
        let c2 = h.coefficients(2)?;
        let (l2, m2) = decoupled(&c2)?;
        h.advance(2, l2, m2.re)?;
    } else if order != 2 {
        return Err(Error::UnsupportedOrder(collision.p));
    }
    let c = h.coefficients(order)?;
    let coupled = CoupledOrder::from_coeffs(&c);
    Ok((s_product(&coupled, collision), c.n.s().re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dispersion::{solve_collision, ModelSetup};
    use crate::stokes::stokes_coefficients;

    fn setup(alpha: f64, p: i64) -> (StokesSeries, CollisionPoint) {
        let s = ModelSetup::new(alpha).unwrap();
        (stokes_coefficients(&s).unwrap(), solve_collision(p, &s).unwrap())
    }

    #[test]
    fn tanh_series_matches_taylor() {
        let t0 = 0.7;
        let s = [0.0, 0.0, 0.3, 0.1, -0.2];
        let got = tanh_series(t0, &s);
        let sech2 = 1.0 / t0.cosh().powi(2);
        let t = t0.tanh();
        assert!((got[0] - t).abs() < 1e-15);
        assert!(got[1].abs() < 1e-15);
        assert!((got[2] - sech2 * 0.3).abs() < 1e-15);
        assert!((got[3] - sech2 * 0.1).abs() < 1e-15);
        // eps^4: sech^2 s4 - sech^2 tanh s2^2
        assert!((got[4] - (sech2 * -0.2 - sech2 * t * 0.09)).abs() < 1e-15);
    }

    #[test]
    fn symbol_blocks_resonate_only_at_n_and_m() {
        let (series, c) = setup(1.0, 2);
        let det = |j: i64| {
            let mut b = symbol_block(j, &c, &series);
            b[0][0] -= c.lambda0;
            b[1][1] -= c.lambda0;
            (b[0][0] * b[1][1] - b[0][1] * b[1][0]).norm()
        };
        assert!(det(c.n) < 1e-12);
        assert!(det(c.m) < 1e-12);
        assert!(det(c.n + 7) > 1e-6);
        for j in -40..=40 {
            if j != c.n && j != c.m {
                assert!(det(j) > 1e-6, "j={j}");
            }
        }
    }

    #[test]
    fn null_vectors() {
        let (series, c) = setup(1.0, 3);
        let v = ResonantVectors::new(&c);
        for (j, r, psi) in [(c.n, v.r_n, v.psi_n), (c.m, v.r_m, v.psi_m)] {
            let mut b = symbol_block(j, &c, &series);
            b[0][0] -= c.lambda0;
            b[1][1] -= c.lambda0;
            let y = apply_block(&b, r);
            assert!(y[0].norm() < 1e-13 && y[1].norm() < 1e-13);
            // psi^H B = 0
            let z0 = psi[0].conj() * b[0][0] + psi[1].conj() * b[1][0];
            let z1 = psi[0].conj() * b[0][1] + psi[1].conj() * b[1][1];
            assert!(z0.norm() < 1e-13 && z1.norm() < 1e-13);
            assert!((inner(&psi, &r) - 2.0).norm() < 1e-14);
        }
    }

    #[test]
    fn first_order_support() {
        let (series, c) = setup(1.0, 2);
        let h = Hierarchy::new(&series, &c);
        let mut w0 = h.cascades[0][0].clone();
        w0.axpy(Complex64::new(0.7, 0.0), &h.cascades[1][0]);
        let r = apply_order_operator(1, &series, &h.corr, &w0);
        assert_eq!(r.support(1e-14), vec![c.n - 1, c.n + 1, c.m + 1]);
        assert_eq!(c.n + 1, c.m - 1);
    }

    #[test]
    fn order_operator_is_linear() {
        let (series, c) = setup(1.0, 2);
        let h = Hierarchy::new(&series, &c);
        let corr = h.corr;
        let zero = apply_order_operator(2, &series, &corr, &FourierVec2::new());
        assert!(zero.coeffs.is_empty());
        let w1 = h.cascades[1][0].scaled(Complex64::new(1.3, 0.0));
        let w2 = h.cascades[1][0].scaled(Complex64::new(2.6, 0.0));
        let a = apply_order_operator(1, &series, &corr, &w1);
        let b = apply_order_operator(1, &series, &corr, &w2);
        assert!(b.distance(&a.scaled(Complex64::new(2.0, 0.0))) < 1e-14);
    }

    #[test]
    fn offresonant_round_trip() {
        let (series, c) = setup(1.0, 3);
        let mut h = Hierarchy::new(&series, &c);
        h.advance(1, ZERO, 0.0).unwrap();
        let c2 = h.coefficients(2).unwrap();
        let (l2, m2) = decoupled(&c2).unwrap();
        h.advance(2, l2, m2.re).unwrap();
        for seed in 0..2 {
            for order in 1..=2 {
                let mut r = h.residual(seed, order, h.corr.lambda[order], h.corr.mu[order]);
                let a_n = h.project(0, &r) / 2.0;
                let a_m = h.project(1, &r) / 2.0;
                r.add_at(c.n, [-a_n * h.vectors.r_n[0], -a_n * h.vectors.r_n[1]]);
                r.add_at(c.m, [-a_m * h.vectors.r_m[0], -a_m * h.vectors.r_m[1]]);
                let back = h.apply_shifted(&h.cascades[seed][order]);
                assert!(
                    back.distance(&r) < 1e-11 * r.max_abs().max(1.0),
                    "seed {seed} order {order}"
                );
                // normalization slot
                assert_eq!(h.cascades[seed][order].get(c.n)[0], ZERO);
            }
        }
        assert!(solve_offresonant(&FourierVec2::new(), &c, &series)
            .unwrap()
            .coeffs
            .is_empty());
    }

    #[test]
    fn rejects_resonant_rhs() {
        let (series, c) = setup(1.0, 2);
        let v = ResonantVectors::new(&c);
        let rhs = FourierVec2::single(c.n, v.r_n);
        let err = solve_offresonant(&rhs, &c, &series).unwrap_err();
        assert!(err.to_string().contains("solvability not satisfied"));
    }

    #[test]
    fn measured_group_velocities() {
        for p in [2, 3] {
            let (series, c) = setup(0.5, p);
            let mut h = Hierarchy::new(&series, &c);
            let c1 = h.coefficients(1).unwrap();
            let (gn, gm) = group_velocities(&c);
            assert!((c1.n.group_velocity() - gn).abs() < 1e-12);
            assert!((c1.m.group_velocity() - gm).abs() < 1e-12);
            h.advance(1, ZERO, 0.0).unwrap();
        }
    }

    #[test]
    fn first_order_is_trivial() {
        for &alpha in &[0.5, 1.0, 2.0] {
            for p in [2, 3] {
                let (series, c) = setup(alpha, p);
                let a = isola_asymptotics(&c, &series).unwrap();
                assert!(a.lambda1.norm() < 1e-12 && a.mu1.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn p2_product_identity() {
        let (series, c) = setup(1.0, 2);
        let a = p2_asymptotics(&c, &series).unwrap();
        let prod = a.s_n * a.s_m * c.krein_product();
        assert!(prod.re < 0.0);
        assert!(prod.im.abs() < 1e-10 * prod.norm());
        assert!(((-prod.re).sqrt() - a.s_p).abs() < 1e-12 * a.s_p);
        assert!(a.p_n.im.abs() < 1e-10 * (1.0 + a.p_n.norm()));
    }

    #[test]
    fn p3_invariants() {
        let (series, c) = setup(1.0, 3);
        let a = p3_asymptotics(&c, &series).unwrap();
        let scale = a.lambda2.norm().max(1.0);
        assert!(a.lambda2.re.abs() < 1e-10 * scale);
        assert!(a.lambda4.re.abs() < 1e-10 * a.lambda4.norm().max(1.0));
        assert!(a.t3_m.norm() < 1e-10 * a.s_m.norm().max(1.0));
        assert!(a.t4_m.norm() < 1e-10 * a.s_m.norm().max(1.0));
        assert!(a.lambda4_spread < 1e-10 * a.lambda4.norm().max(1.0));
        assert!(!a.degenerate);
    }
    #[test]
    fn p3_second_order_is_decoupled() {
        let (series, c) = setup(1.0, 3);
        let mut h = Hierarchy::new(&series, &c);
        first_order(&mut h).unwrap();
        let c2 = h.coefficients(2).unwrap();
        for row in [&c2.n, &c2.m] {
            assert!(row.coupling.norm() < 1e-10 * row.drift.norm());
        }
        let (l2, m2) = decoupled(&c2).unwrap();
        assert!(l2.re.abs() < 1e-12 * l2.norm());
        assert!(m2.im.abs() < 1e-12 * m2.norm().max(1.0));
    }

    #[test]
    fn normalization_slot_stays_zero() {
        let (series, c) = setup(0.5, 3);
        let mut h = Hierarchy::new(&series, &c);
        first_order(&mut h).unwrap();
        let (l2, m2) = decoupled(&h.coefficients(2).unwrap()).unwrap();
        h.advance(2, l2, m2.re).unwrap();
        h.advance(3, ZERO, 0.0).unwrap();
        for cascade in &h.cascades {
            for v in &cascade[1..=3] {
                assert_eq!(v.get(c.n)[0], ZERO);
            }
        }
    }
    #[test]
    fn projection_scale_cancels() {
        let (series, c) = setup(1.0, 2);
        let mut h = Hierarchy::new(&series, &c);
        first_order(&mut h).unwrap();
        let base = h.coefficients(2).unwrap();
        let k = Complex64::new(2.0 * std::f64::consts::PI, 0.7);
        h.vectors.psi_n = h.vectors.psi_n.map(|z| z * k);
        h.vectors.psi_m = h.vectors.psi_m.map(|z| z * k);
        let scaled = h.coefficients(2).unwrap();
        for (a, b) in [(&base.n, &scaled.n), (&base.m, &scaled.m)] {
            for (x, y) in [(a.drift, b.drift), (a.constant, b.constant), (a.coupling, b.coupling)] {
                let ratio_a = x / a.lambda_coeff;
                let ratio_b = y / b.lambda_coeff;
                assert!((ratio_a - ratio_b).norm() < 1e-12 * (1.0 + ratio_a.norm()));
            }
        }
    }
}
