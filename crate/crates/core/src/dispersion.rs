//! Linear dispersion relation of the nondimensional system and the
//! collision condition between its two branches.
//!
//! With `z = alpha k` the relation reads
//! `omega(k) = z sqrt(tanh(z)/z)` and `Omega_sigma(k) = -alpha c0 k + sigma omega(k)`.
//! Zero-amplitude eigenvalues are `-i Omega_sigma(mu + j)`; two of them
//! collide away from the origin when `Omega_1(k) = Omega_{-1}(k + p)` for an
//! integer offset `|p| >= 2`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this `|z|` the removable singularities are evaluated by series.
const SERIES_CUTOFF: f64 = 1e-4;

/// `tanh(z)/z`, equal to 1 at the origin.
pub(crate) fn tanhc(z: f64) -> f64 {
    if z.abs() < SERIES_CUTOFF {
        let z2 = z * z;
        1.0 - z2 / 3.0 + 2.0 * z2 * z2 / 15.0
    } else {
        z.tanh() / z
    }
}

/// `z/sinh(z)`, equal to 1 at the origin.
fn zcsch(z: f64) -> f64 {
    if z.abs() < SERIES_CUTOFF {
        let z2 = z * z;
        1.0 - z2 / 6.0 + 7.0 * z2 * z2 / 360.0
    } else {
        z / z.sinh()
    }
}

/// Branch of the dispersion relation, `sigma = +1` or `sigma = -1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Plus,
    Minus,
}

impl Branch {
    pub fn sign(self) -> f64 {
        match self {
            Branch::Plus => 1.0,
            Branch::Minus => -1.0,
        }
    }

    pub fn from_sign(sigma: i32) -> Option<Self> {
        match sigma {
            1 => Some(Branch::Plus),
            -1 => Some(Branch::Minus),
            _ => None,
        }
    }
}

/// Aspect ratio and the phase speed of right-travelling waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSetup {
    pub alpha: f64,
    pub c0: f64,
}

impl ModelSetup {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::InvalidAlpha(alpha));
        }
        Ok(Self {
            alpha,
            c0: tanhc(alpha).sqrt(),
        })
    }

    /// `omega_alpha(k) = sgn(k) sqrt(alpha k tanh(alpha k))`.
    pub fn omega(&self, k: f64) -> f64 {
        let z = self.alpha * k;
        z * tanhc(z).sqrt()
    }

    /// Derivative of [`Self::omega`]; the limit at `k = 0` is `alpha`.
    pub fn omega_prime(&self, k: f64) -> f64 {
        let z = self.alpha * k;
        let sech = 1.0 / z.cosh();
        0.5 * self.alpha * (tanhc(z).sqrt() + zcsch(z).sqrt() * sech * sech.sqrt())
    }

    /// `Omega_sigma(k) = -alpha c0 k + sigma omega_alpha(k)`.
    pub fn big_omega(&self, branch: Branch, k: f64) -> f64 {
        -self.alpha * self.c0 * k + branch.sign() * self.omega(k)
    }

    /// Group velocity `Omega_sigma'(k)`.
    pub fn group_velocity(&self, branch: Branch, k: f64) -> f64 {
        -self.alpha * self.c0 + branch.sign() * self.omega_prime(k)
    }

    /// Zero-amplitude eigenvalue `-i Omega_sigma(k)`.
    pub fn zero_amplitude_eigenvalue(&self, branch: Branch, k: f64) -> Complex64 {
        Complex64::new(0.0, -self.big_omega(branch, k))
    }

    /// Collision function `F(k, p) = Omega_1(k) - Omega_{-1}(k + p)`.
    pub fn collision_function(&self, k: f64, p: f64) -> f64 {
        self.alpha * self.c0 * p + self.omega(k) + self.omega(k + p)
    }

    fn collision_slope(&self, k: f64, p: f64) -> f64 {
        self.omega_prime(k) + self.omega_prime(k + p)
    }
}

/// Zero-amplitude double eigenvalue that seeds an isola.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionPoint {
    pub setup: ModelSetup,
    /// Mode offset `m - n`.
    pub p: i64,
    /// Root of the collision condition.
    pub k: f64,
    pub mu0: f64,
    pub n: i64,
    pub m: i64,
    pub lambda0: Complex64,
    /// `|F(k, p)|` at the returned root.
    pub residual: f64,
    /// Set when `k` was a half-integer and the nearest integer was ambiguous.
    pub tie: bool,
}

impl CollisionPoint {
    /// `mu0 + n`, the wavenumber on the `sigma = +1` branch.
    pub fn kn(&self) -> f64 {
        self.mu0 + self.n as f64
    }

    /// `mu0 + m`, the wavenumber on the `sigma = -1` branch.
    pub fn km(&self) -> f64 {
        self.mu0 + self.m as f64
    }

    /// `omega(mu0 + m) omega(mu0 + n)`; positive for every collision.
    pub fn krein_product(&self) -> f64 {
        self.setup.omega(self.km()) * self.setup.omega(self.kn())
    }

    /// `c_{g,-1}(mu0 + m) - c_{g,1}(mu0 + n)`.
    pub fn group_velocity_gap(&self) -> f64 {
        self.setup.group_velocity(Branch::Minus, self.km()) - self.setup.group_velocity(Branch::Plus, self.kn())
    }
}

/// Solve `Omega_1(k) = Omega_{-1}(k + p)` for integer `|p| >= 2`.
pub fn solve_collision(p: i64, setup: &ModelSetup) -> Result<CollisionPoint> {
    if p.abs() < 2 {
        return Err(Error::NoCollision { p });
    }
    let pf = p as f64;
    let f = |k: f64| setup.collision_function(k, pf);

    // F is strictly increasing; for p >= 2 the root lies below -p, for
    // p <= -2 above -p.
    let (mut lo, mut hi) = (-pf - 1.0, -pf);
    if p < 0 {
        lo = -pf;
        hi = -pf + 1.0;
    }
    let mut offset = 1.0;
    loop {
        let (flo, fhi) = (f(lo), f(hi));
        if flo < 0.0 && fhi > 0.0 {
            break;
        }
        offset *= 2.0;
        if offset > 1e12 {
            return Err(Error::BracketNotFound { p });
        }
        if p > 0 {
            lo = -pf - offset;
        } else {
            hi = -pf + offset;
        }
    }

    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut k = 0.5 * (lo + hi);
    for _ in 0..8 {
        let fk = f(k);
        if fk == 0.0 {
            break;
        }
        let next = k - fk / setup.collision_slope(k, pf);
        if !(lo..=hi).contains(&next) || next == k {
            break;
        }
        k = next;
    }

    let floor = k.floor();
    let tie = k - floor == 0.5;
    let n = if tie { floor as i64 } else { k.round() as i64 };
    let mu0 = k - n as f64;
    Ok(CollisionPoint {
        setup: *setup,
        p,
        k,
        mu0,
        n,
        m: n + p,
        lambda0: setup.zero_amplitude_eigenvalue(Branch::Plus, k),
        residual: f(k).abs(),
        tie,
    })
}

/// Collision points for `p = -p_max..=-2` followed by `p = 2..=p_max`.
pub fn collision_ladder(p_max: i64, setup: &ModelSetup) -> Result<Vec<CollisionPoint>> {
    if p_max < 2 {
        return Err(Error::InvalidInput(format!("p_max must be at least 2, got {p_max}")));
    }
    (-p_max..=-2)
        .chain(2..=p_max)
        .map(|p| solve_collision(p, setup))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelSetup {
        ModelSetup::new(1.0).unwrap()
    }

    #[test]
    fn rejects_nonpositive_alpha() {
        assert_eq!(ModelSetup::new(0.0), Err(Error::InvalidAlpha(0.0)));
        assert!(ModelSetup::new(-1.0).is_err());
        assert!(ModelSetup::new(f64::NAN).is_err());
    }

    #[test]
    fn omega_values() {
        let s = unit();
        assert_eq!(s.omega(0.0), 0.0);
        let expected = 1f64.tanh().sqrt();
        assert!((s.omega(1.0) - expected).abs() < 1e-15);
        assert!((s.omega(1.0) - s.alpha * s.c0).abs() < 1e-15);
        assert!((s.omega(1.0) - 0.87269).abs() < 1e-5);
        assert_eq!(s.omega(-2.0), -s.omega(2.0));
    }

    #[test]
    fn omega_prime_matches_finite_difference() {
        let s = unit();
        let h = 1e-6;
        for &k in &[1.5, 2.0, -3.2, 0.3, 7.0] {
            let fd = (s.omega(k + h) - s.omega(k - h)) / (2.0 * h);
            assert!((s.omega_prime(k) - fd).abs() < 1e-8, "k={k}");
        }
        assert!(s.omega_prime(2.0) < s.alpha * s.c0);
        assert_eq!(s.omega_prime(0.0), 1.0);
        // across the series cutoff
        let a = s.omega_prime(SERIES_CUTOFF * (1.0 - 1e-9));
        let b = s.omega_prime(SERIES_CUTOFF * (1.0 + 1e-9));
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn big_omega_values() {
        let s = unit();
        assert!(s.big_omega(Branch::Plus, 1.0).abs() < 1e-15);
        assert!(s.big_omega(Branch::Plus, -1.0).abs() < 1e-15);
        let v = s.big_omega(Branch::Minus, 1.0);
        assert!((v + 2.0 * s.alpha * s.c0).abs() < 1e-15);
        assert!((v + 1.74539).abs() < 1e-5);
    }

    #[test]
    fn group_velocity_signs_and_fd() {
        let s = unit();
        assert!(s.group_velocity(Branch::Plus, 2.0) < 0.0);
        for &k in &[-10.0, -1.0, 0.0, 0.5, 3.0] {
            assert!(s.group_velocity(Branch::Minus, k) < 0.0);
        }
        let h = 1e-6;
        let fd = (s.big_omega(Branch::Plus, 2.0 + h) - s.big_omega(Branch::Plus, 2.0 - h)) / (2.0 * h);
        assert!((s.group_velocity(Branch::Plus, 2.0) - fd).abs() < 1e-8);
    }

    #[test]
    fn collision_p2_unit_alpha() {
        let s = unit();
        let c = solve_collision(2, &s).unwrap();
        assert!((c.mu0 + 0.26091).abs() < 5e-5, "mu0 = {}", c.mu0);
        assert!(c.k < -2.0);
        assert_eq!(c.m - c.n, 2);
        assert!(c.residual < 1e-13 * (1.0 + c.lambda0.norm()));
        let other = s.zero_amplitude_eigenvalue(Branch::Minus, c.km());
        assert!((c.lambda0 - other).norm() < 1e-13);
        assert!(c.lambda0.norm() > 0.1);
        assert!(c.krein_product() > 0.0);
    }

    #[test]
    fn collision_rejects_small_offsets() {
        let s = unit();
        for p in -1..=1 {
            let err = solve_collision(p, &s).unwrap_err();
            assert_eq!(err, Error::NoCollision { p });
            assert!(err.to_string().contains("no nonzero collision"));
        }
    }

    #[test]
    fn collision_p3_further_out() {
        let s = unit();
        let k2 = solve_collision(2, &s).unwrap().k;
        let k3 = solve_collision(3, &s).unwrap().k;
        assert!(k3 < k2);
        assert!(k3.abs() > 3.0);
    }

    #[test]
    fn ladder_ordering() {
        let s = unit();
        let ladder = collision_ladder(5, &s).unwrap();
        let positive: Vec<_> = ladder.iter().filter(|c| c.p > 0).collect();
        for w in positive.windows(2) {
            assert!(w[1].lambda0.im < w[0].lambda0.im);
        }
        for c in ladder.iter().filter(|c| c.p > 0) {
            let mirror = ladder.iter().find(|d| d.p == -c.p).unwrap();
            assert!((mirror.lambda0.im + c.lambda0.im).abs() < 1e-12);
            assert!((mirror.k + c.k).abs() < 1e-12);
        }
        assert!(collision_ladder(1, &s).is_err());
    }
}
