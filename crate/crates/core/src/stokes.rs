//! Fourth-order small-amplitude Stokes waves.
//!
//! Every order is stored as a table of exponential-basis coefficients:
//! `eta_j(x) = N_{j,0} + sum_l 2 N_{j,l} cos(l x)`, so `N_{j,l}` is both the
//! tabulated coefficient and the Fourier coefficient at `+-l`. The first
//! order is `eta_1 = cos x` (`N_{1,1} = 1/2`) and `u_1 = c0 cos x`.

use serde::{Deserialize, Serialize};

use crate::dispersion::{tanhc, ModelSetup};
use crate::error::Result;

/// Highest order of the expansion in the amplitude.
pub const MAX_ORDER: usize = 4;
/// Highest harmonic present through fourth order.
pub const MAX_HARMONIC: usize = 4;
/// Above this amplitude the truncated series is outside its intended regime.
pub const EPS_SOFT_LIMIT: f64 = 0.05;

/// Harmonic tables of `eta_S`, `u_S` and the speed corrections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StokesSeries {
    pub setup: ModelSetup,
    /// `[c0, c2, c4]`.
    pub c_coeffs: [f64; 3],
    /// `eta[j][l] = N_{j,l}`; row 0 is unused.
    pub eta: [[f64; MAX_HARMONIC + 1]; MAX_ORDER + 1],
    /// `u[j][l] = U_{j,l}`; row 0 is unused.
    pub u: [[f64; MAX_HARMONIC + 1]; MAX_ORDER + 1],
}

impl StokesSeries {
    pub fn alpha(&self) -> f64 {
        self.setup.alpha
    }

    /// Coefficient of `eps^order` in the wave speed.
    pub fn speed(&self, order: usize) -> f64 {
        match order {
            0 => self.c_coeffs[0],
            2 => self.c_coeffs[1],
            4 => self.c_coeffs[2],
            _ => 0.0,
        }
    }

    /// Fourier coefficient of `eta_order` at harmonic `l`.
    pub fn eta_hat(&self, order: usize, l: i64) -> f64 {
        table_entry(&self.eta, order, l)
    }

    /// Fourier coefficient of `u_order` at harmonic `l`.
    pub fn u_hat(&self, order: usize, l: i64) -> f64 {
        table_entry(&self.u, order, l)
    }

    /// Fourier coefficients of the truncated `eta_S`, `u_S` at amplitude `eps`,
    /// indexed by harmonic `-4..=4`.
    pub fn summed_harmonics(&self, eps: f64) -> (Harmonics, Harmonics) {
        let mut eta = Harmonics::zeros(MAX_HARMONIC);
        let mut u = Harmonics::zeros(MAX_HARMONIC);
        let mut power = 1.0;
        for order in 1..=MAX_ORDER {
            power *= eps;
            for l in -(MAX_HARMONIC as i64)..=MAX_HARMONIC as i64 {
                *eta.get_mut(l) += power * self.eta_hat(order, l);
                *u.get_mut(l) += power * self.u_hat(order, l);
            }
        }
        (eta, u)
    }

    /// `c(eps) = c0 + c2 eps^2 + c4 eps^4`.
    pub fn wave_speed(&self, eps: f64) -> f64 {
        let e2 = eps * eps;
        self.c_coeffs[0] + e2 * (self.c_coeffs[1] + e2 * self.c_coeffs[2])
    }

    /// Every tabulated coefficient by name, in a fixed order.
    pub fn named_coefficients(&self) -> Vec<(String, f64)> {
        let mut out = vec![
            ("c0".to_string(), self.c_coeffs[0]),
            ("c2".to_string(), self.c_coeffs[1]),
            ("c4".to_string(), self.c_coeffs[2]),
        ];
        for (prefix, table) in [("N", &self.eta), ("U", &self.u)] {
            for (j, row) in table.iter().enumerate().skip(1) {
                for (l, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        out.push((format!("{prefix}_{j}_{l}"), v));
                    }
                }
            }
        }
        out
    }
}

fn table_entry(table: &[[f64; MAX_HARMONIC + 1]; MAX_ORDER + 1], order: usize, l: i64) -> f64 {
    let l = l.unsigned_abs() as usize;
    if order == 0 || order > MAX_ORDER || l > MAX_HARMONIC {
        0.0
    } else {
        table[order][l]
    }
}

/// Dense real Fourier coefficients on harmonics `-half..=half`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonics {
    half: usize,
    coeffs: Vec<f64>,
}

impl Harmonics {
    pub fn zeros(half: usize) -> Self {
        Self {
            half,
            coeffs: vec![0.0; 2 * half + 1],
        }
    }

    pub fn half(&self) -> usize {
        self.half
    }

    pub fn get(&self, l: i64) -> f64 {
        if l.unsigned_abs() as usize > self.half {
            0.0
        } else {
            self.coeffs[(l + self.half as i64) as usize]
        }
    }

    fn get_mut(&mut self, l: i64) -> &mut f64 {
        &mut self.coeffs[(l + self.half as i64) as usize]
    }

    fn indices(&self) -> impl Iterator<Item = i64> {
        let h = self.half as i64;
        -h..=h
    }

    pub fn convolve(&self, other: &Harmonics) -> Harmonics {
        let mut out = Harmonics::zeros(self.half + other.half);
        for a in self.indices() {
            let fa = self.get(a);
            if fa == 0.0 {
                continue;
            }
            for b in other.indices() {
                *out.get_mut(a + b) += fa * other.get(b);
            }
        }
        out
    }

    /// `sum_k weights_k * terms_k`, padded to the widest term.
    pub fn combine(terms: &[(f64, &Harmonics)]) -> Harmonics {
        let half = terms.iter().map(|(_, h)| h.half).max().unwrap_or(0);
        let mut out = Harmonics::zeros(half);
        for (w, h) in terms {
            for l in h.indices() {
                *out.get_mut(l) += w * h.get(l);
            }
        }
        out
    }

    pub fn map_multiplier(&self, f: impl Fn(i64) -> f64) -> Harmonics {
        let mut out = self.clone();
        for l in self.indices() {
            *out.get_mut(l) *= f(l);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value of the real cosine series at `x`.
    pub fn eval(&self, x: f64) -> f64 {
        let mut s = self.get(0);
        for l in 1..=self.half as i64 {
            let (a, b) = (self.get(l), self.get(-l));
            s += (a + b) * (l as f64 * x).cos();
        }
        s
    }
}

/// Closed-form Stokes coefficients through fourth order.
pub fn stokes_coefficients(setup: &ModelSetup) -> Result<StokesSeries> {
    let setup = ModelSetup::new(setup.alpha)?;
    let alpha = setup.alpha;
    let c = setup.c0;
    let s2 = c * c;
    let s4 = s2 * s2;
    let s6 = s4 * s2;
    let s8 = s4 * s4;
    let s10 = s8 * s2;
    let s12 = s6 * s6;

    // C_k^2 = tanh(alpha k)/(alpha k)
    let q2 = tanhc(2.0 * alpha);
    let q3 = tanhc(3.0 * alpha);
    let q4 = tanhc(4.0 * alpha);
    let q2_2 = q2 * q2;
    let q2_3 = q2_2 * q2;

    let d = |z2: f64| 1.0 / (s2 - z2);
    let d1 = d(1.0);
    let d2 = d(q2);
    let d3 = d(q3);
    let d4 = d(q4);

    let n20 = 3.0 * s2 * d1 / 4.0;
    let n22 = 3.0 * s2 * d2 / 8.0;
    let n33 = s2 * d2 * d3 / 16.0 * (5.0 * s2 + 4.0 * q2);
    let n40 = -3.0 * s2 * d1.powi(3) * d2 * d2 / 64.0
        * (25.0 * s8 + 4.0 * q2_2 + 2.0 * s2 * q2 * (-7.0 + 2.0 * q2) - 4.0 * s6 * (2.0 + 11.0 * q2)
            + s4 * (1.0 + 22.0 * q2 + 10.0 * q2_2));
    let n42 = s2 * d1 * d2.powi(3) * d3 / 64.0
        * (-20.0 * s8
            + 4.0 * q2_2 * q3
            + s6 * (2.0 + 31.0 * q2 + 50.0 * q3)
            + s2 * q2 * (q3 + 2.0 * q2 * (10.0 + 7.0 * q3))
            - s4 * (38.0 * q2_2 + 32.0 * q3 + q2 * (-5.0 + 37.0 * q3)));
    let n44 = s2 * d2 * d2 * d3 * d4 / 128.0
        * (35.0 * s6 - 20.0 * q2_2 * q3 + 5.0 * s4 * (4.0 * q2 + 5.0 * q3) - 4.0 * s2 * (7.0 * q2_2 + 8.0 * q2 * q3));

    let u20 = c * d1 / 4.0 * (2.0 + s2);
    let u22 = c * d2 / 8.0 * (2.0 * q2 + s2);
    let u31 = 3.0 * c * s2 * d1 * d2 / 32.0 * (1.0 - 3.0 * s2 + 2.0 * q2);
    let u33 = c * d2 * d3 / 16.0 * (s4 + 2.0 * q2 * q3 + 2.0 * s2 * (q2 + 2.0 * q3));
    let u40 = -3.0 * c * s2 * d1.powi(3) * d2 * d2 * (2.0 + s2) / 64.0
        * (2.0 * s4 * (-2.0 + 5.0 * s2) + q2 * (-3.0 + 8.0 * s2 - 17.0 * s4) + 2.0 * q2_2 * (1.0 + 2.0 * s2));
    let u44 = c * d2 * d2 * d3 * d4 / 128.0
        * (5.0 * s8 - 8.0 * q2_2 * q3 * q4
            + 2.0 * s4 * (-2.0 * q2_2 + 5.0 * q3 * q4 + 6.0 * q2 * (-q3 + q4))
            + s6 * (8.0 * q2 + 15.0 * (q3 + 2.0 * q4))
            - 4.0 * s2 * (5.0 * q2 * q3 * q4 + 3.0 * q2_2 * (q3 + 2.0 * q4)));

    let c2 = 3.0 * c * d1 * d2 / 16.0 * (s2 + 5.0 * s4 - 2.0 * q2 * (2.0 + s2));
    let c4 = 3.0 * c * d1.powi(3) * d2.powi(3) * d3 / 512.0
        * (3.0
            * s2
            * (s6 - 3.0 * s8 + 15.0 * s10 - 85.0 * s12 + s4 * q2 * (11.0 + 3.0 * s2 - 3.0 * s4 + 205.0 * s6)
                - 4.0 * s2 * q2_2 * (-2.0 + 15.0 * s2 + 3.0 * s4 + 38.0 * s6)
                - 4.0 * q2_3 * (-4.0 + 12.0 * s2 - 27.0 * s4 + s6))
            + q3 * (s6 * (-103.0 + 309.0 * s2 - 345.0 * s4 + 355.0 * s6)
                - 3.0 * s4 * q2 * (31.0 - 57.0 * s2 + 57.0 * s4 + 185.0 * s6)
                + 36.0 * s2 * q2_2 * (2.0 - 3.0 * s2 + 9.0 * s4 + 10.0 * s6)
                - 4.0 * q2_3 * (2.0 + s2) * (-2.0 + 7.0 * s2 + 13.0 * s4)));

    // harmonic-2 balance of c eta - u - eta u at fourth order
    let u42 = c * n42 + c2 * n22 - 0.5 * (u31 + u33) - n20 * u22 - n22 * u20 - 0.5 * c * n33;

    let mut eta = [[0.0; MAX_HARMONIC + 1]; MAX_ORDER + 1];
    let mut u = [[0.0; MAX_HARMONIC + 1]; MAX_ORDER + 1];
    eta[1][1] = 0.5;
    eta[2][0] = n20;
    eta[2][2] = n22;
    eta[3][3] = n33;
    eta[4][0] = n40;
    eta[4][2] = n42;
    eta[4][4] = n44;
    u[1][1] = 0.5 * c;
    u[2][0] = u20;
    u[2][2] = u22;
    u[3][1] = u31;
    u[3][3] = u33;
    u[4][0] = u40;
    u[4][2] = u42;
    u[4][4] = u44;

    Ok(StokesSeries {
        setup,
        c_coeffs: [c, c2, c4],
        eta,
        u,
    })
}

/// `(eta_S(x), u_S(x), c)` of the truncated series.
pub fn eval_wave(series: &StokesSeries, eps: f64, x: f64) -> (f64, f64, f64) {
    let (eta, u) = series.summed_harmonics(eps);
    (eta.eval(x), u.eval(x), series.wave_speed(eps))
}

/// Largest Fourier coefficient of the two travelling-wave residuals
/// `c eta - u - eta u` and `c u - K[eta] - u^2/2`.
pub fn traveling_residual(series: &StokesSeries, eps: f64) -> f64 {
    let (eta, u) = series.summed_harmonics(eps);
    let c = series.wave_speed(eps);
    let alpha = series.alpha();
    let eta_u = eta.convolve(&u);
    let u_u = u.convolve(&u);
    let k_eta = eta.map_multiplier(|l| tanhc(alpha * l as f64));
    let r1 = Harmonics::combine(&[(c, &eta), (-1.0, &u), (-1.0, &eta_u)]);
    let r2 = Harmonics::combine(&[(c, &u), (-1.0, &k_eta), (-0.5, &u_u)]);
    r1.max_abs().max(r2.max_abs())
}
