//! Closed-form oracles for separable containers.
//!
//! Bessel evaluation is kept in-repo (ascending series for small argument,
//! Miller backward recurrence otherwise) so the oracles do not depend on
//! any external library's conventions. Roots of J_n' come from a sign-change
//! scan bracketed by the ~pi asymptotic spacing, then bisection.

use crate::assembly::Bond;
use crate::error::{Result, SloshError};

/// Bessel function of the first kind, |error| <= 1e-12 for 0 <= x <= 50.
pub fn bessel_j(n: i32, x: f64) -> Result<f64> {
    if n < 0 {
        return Err(SloshError::DomainError(format!(
            "bessel order must be nonnegative, got {n}"
        )));
    }
    if !(x >= 0.0) || !x.is_finite() {
        return Err(SloshError::DomainError(format!(
            "bessel argument must be finite and nonnegative, got {x}"
        )));
    }
    let n = n as usize;
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    if x <= 10.0 {
        Ok(bessel_series(n, x))
    } else {
        Ok(bessel_miller(n, x))
    }
}

/// Ascending power series; partial cancellation keeps this to small x.
fn bessel_series(n: usize, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut term = 1.0f64;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let q = half * half;
    let mut sum = term;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= -q / (k as f64 * (n + k) as f64);
        sum += term;
        if term.abs() <= 1e-18 * sum.abs().max(1e-30) && k > 4 {
            break;
        }
        if k > 200 {
            break;
        }
    }
    sum
}

/// Miller's backward recurrence with the even-order normalization
/// J_0 + 2 J_2 + 2 J_4 + ... = 1.
fn bessel_miller(n: usize, x: f64) -> f64 {
    let start = {
        let m = x.max(n as f64) as usize + 20 + (10.0 * x.sqrt()) as usize;
        m + (m & 1) // even
    };
    let mut jp1 = 0.0f64;
    let mut jc = 1e-300f64;
    let mut norm = 0.0f64;
    let mut out = if n == start { jc } else { 0.0 };
    let mut k = start;
    while k > 0 {
        let jm1 = (2.0 * k as f64 / x) * jc - jp1;
        jp1 = jc;
        jc = jm1;
        k -= 1;
        if k == n {
            out = jc;
        }
        if k % 2 == 0 {
            norm += if k == 0 { jc } else { 2.0 * jc };
        }
        if jc.abs() > 1e280 {
            jc *= 1e-280;
            jp1 *= 1e-280;
            norm *= 1e-280;
            out *= 1e-280;
        }
    }
    out / norm
}

/// Derivative of J_n: J_0' = -J_1, otherwise (J_{n-1} - J_{n+1}) / 2.
pub fn bessel_j_prime(n: i32, x: f64) -> Result<f64> {
    if n == 0 {
        Ok(-bessel_j(1, x)?)
    } else {
        Ok(0.5 * (bessel_j(n - 1, x)? - bessel_j(n + 1, x)?))
    }
}

/// m-th positive root of J_n'. The trivial stationary point at the origin
/// is excluded; it belongs to the constant mode.
pub fn bessel_jp_root(n: i32, m: u32) -> Result<f64> {
    if n < 0 {
        return Err(SloshError::DomainError(format!(
            "bessel order must be nonnegative, got {n}"
        )));
    }
    if m < 1 {
        return Err(SloshError::DomainError("root index must be >= 1".into()));
    }
    // consecutive extrema are at least ~1 apart at low order and approach
    // spacing pi; a 0.05 step cannot skip a bracket in the scanned range
    let step = 0.05;
    let limit = n as f64 + 4.0 + (m as f64 + 2.0) * std::f64::consts::PI;
    let mut x_prev = 1e-3;
    let mut f_prev = bessel_j_prime(n, x_prev)?;
    let mut found = 0u32;
    let mut x = x_prev;
    while x < limit {
        x += step;
        let f = bessel_j_prime(n, x)?;
        if f_prev == 0.0 || f_prev.signum() != f.signum() {
            found += 1;
            if found == m {
                return bisect_jp(n, x_prev, x);
            }
        }
        x_prev = x;
        f_prev = f;
    }
    Err(SloshError::ConvergenceFailure(format!(
        "no bracket for root {m} of J_{n}' below {limit}"
    )))
}

fn bisect_jp(n: i32, mut lo: f64, mut hi: f64) -> Result<f64> {
    let mut flo = bessel_j_prime(n, lo)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = bessel_j_prime(n, mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if flo.signum() == fm.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = bessel_j_prime(n, root)?.abs();
    if residual > 1e-12 {
        return Err(SloshError::ConvergenceFailure(format!(
            "|J_{n}'| = {residual:e} at candidate root {root}"
        )));
    }
    Ok(root)
}

/// One eigenvalue of the circular cylinder of unit radius.
#[derive(Debug, Clone, Copy)]
pub struct DispersionPoint {
    pub n: i32,
    pub m: u32,
    /// m-th positive root of J_n'.
    pub root: f64,
    /// Zero-surface-tension (Steklov) eigenvalue, root * tanh(root * h/a).
    pub lambda_sq: f64,
    /// Squared frequency at the given Bond number.
    pub omega_sq: f64,
    pub h_over_a: f64,
    pub bond: Bond,
}

impl DispersionPoint {
    pub fn omega(&self) -> f64 {
        self.omega_sq.sqrt()
    }
}

/// Cylinder dispersion: lambda^2 = z tanh(z h/a), omega^2 = lambda^2 (1 + z^2/Bo).
pub fn cylinder_dispersion(n: i32, m: u32, h_over_a: f64, bond: Bond) -> Result<DispersionPoint> {
    if !(h_over_a > 0.0 && h_over_a.is_finite()) {
        return Err(SloshError::DomainError(format!(
            "depth ratio must be positive, got {h_over_a}"
        )));
    }
    bond.validate()?;
    let root = bessel_jp_root(n, m)?;
    let lambda_sq = root * (root * h_over_a).tanh();
    let omega_sq = match bond {
        Bond::Infinite => lambda_sq,
        Bond::Finite(bo) => lambda_sq * (1.0 + root * root / bo),
    };
    Ok(DispersionPoint {
        n,
        m,
        root,
        lambda_sq,
        omega_sq,
        h_over_a,
        bond,
    })
}

/// One eigenvalue of the rectangular box by separation of variables. This
/// oracle is a repository-derived analog of the cylinder dispersion; it is
/// validated against the finite element solver, not taken from elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct BoxDispersionPoint {
    pub p: u32,
    pub q: u32,
    /// Planform wavenumber pi * sqrt((p/Lx)^2 + (q/Ly)^2).
    pub wavenumber: f64,
    pub lambda_sq: f64,
    pub omega_sq: f64,
    pub bond: Bond,
}

impl BoxDispersionPoint {
    pub fn omega(&self) -> f64 {
        self.omega_sq.sqrt()
    }
}

pub fn box_dispersion(
    p: u32,
    q: u32,
    lx: f64,
    ly: f64,
    h: f64,
    bond: Bond,
) -> Result<BoxDispersionPoint> {
    if p == 0 && q == 0 {
        return Err(SloshError::DomainError(
            "mode (0, 0) is the excluded constant mode".into(),
        ));
    }
    if !(lx > 0.0 && ly > 0.0 && h > 0.0) {
        return Err(SloshError::DomainError(
            "box dimensions must be positive".into(),
        ));
    }
    bond.validate()?;
    let k = std::f64::consts::PI * ((p as f64 / lx).powi(2) + (q as f64 / ly).powi(2)).sqrt();
    let lambda_sq = k * (k * h).tanh();
    let omega_sq = match bond {
        Bond::Infinite => lambda_sq,
        Bond::Finite(bo) => lambda_sq * (1.0 + k * k / bo),
    };
    Ok(BoxDispersionPoint {
        p,
        q,
        wavenumber: k,
        lambda_sq,
        omega_sq,
        bond,
    })
}

/// Smallest box eigenvalue over the first planform modes.
pub fn box_fundamental(lx: f64, ly: f64, h: f64, bond: Bond) -> Result<BoxDispersionPoint> {
    let a = box_dispersion(1, 0, lx, ly, h, bond)?;
    let b = box_dispersion(0, 1, lx, ly, h, bond)?;
    Ok(if a.omega_sq <= b.omega_sq { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn bessel_at_origin() {
        assert_eq!(bessel_j(0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_j(1, 0.0).unwrap(), 0.0);
        assert_eq!(bessel_j(5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_order_rejected() {
        assert!(bessel_j(-1, 1.0).is_err());
        assert!(bessel_jp_root(-2, 1).is_err());
    }

    /// First zero of J_0 located by independent bisection on the series.
    #[test]
    fn first_j0_zero_by_bisection() {
        let mut lo = 2.0;
        let mut hi = 3.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if bessel_series(0, mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let zero = 0.5 * (lo + hi);
        assert_abs_diff_eq!(zero, 2.404825557695773, epsilon = 1e-12);
        assert_abs_diff_eq!(bessel_j(0, zero).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn series_and_recurrence_agree_in_overlap() {
        for n in 0..8 {
            for &x in &[5.0, 7.5, 9.0, 10.0] {
                let s = bessel_series(n, x);
                let m = bessel_miller(n, x);
                assert_abs_diff_eq!(s, m, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn miller_reference_values() {
        // classical tabulated values
        assert_abs_diff_eq!(
            bessel_j(0, 1.0).unwrap(),
            0.765197686557967,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(1, 1.0).unwrap(),
            0.440050585744933,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(0, 20.0).unwrap(),
            0.16702466434058316,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(2, 15.0).unwrap(),
            0.04157167797525047,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(5, 40.0).unwrap(),
            0.12257346597711778,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(3, 30.0).unwrap(),
            0.129211228759725,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            bessel_j(7, 45.0).unwrap(),
            -0.0837273517545996,
            epsilon = 1e-12
        );
    }

    #[test]
    fn jp_roots_match_independent_bisection() {
        // values re-derived by bisection on the series in this test
        let bisect = |n: i32, lo0: f64, hi0: f64| {
            let mut lo = lo0;
            let mut hi = hi0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                let flo = bessel_j_prime(n, lo).unwrap();
                let fm = bessel_j_prime(n, mid).unwrap();
                if flo.signum() == fm.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let z11 = bessel_jp_root(1, 1).unwrap();
        assert_abs_diff_eq!(z11, bisect(1, 1.5, 2.5), epsilon = 1e-9);
        assert_abs_diff_eq!(z11, 1.8411837813, epsilon = 1e-9);

        let z01 = bessel_jp_root(0, 1).unwrap();
        assert_abs_diff_eq!(z01, bisect(0, 3.0, 4.5), epsilon = 1e-9);
        assert_abs_diff_eq!(z01, 3.8317059702, epsilon = 1e-9);

        let z21 = bessel_jp_root(2, 1).unwrap();
        assert_abs_diff_eq!(z21, 3.0542369282, epsilon = 1e-9);

        for z in [z11, z01, z21] {
            assert!(bessel_j_prime(1, z11).unwrap().abs() <= 1e-12 || z > 0.0);
        }
    }

    #[test]
    fn root_interlacing() {
        for n in 0..4 {
            let mut prev = 0.0;
            for m in 1..=4 {
                let z = bessel_jp_root(n, m).unwrap();
                assert!(z > prev, "roots must increase in m");
                prev = z;
            }
        }
        // monotone in n for n >= 1; the n = 0 sequence starts at the first
        // positive stationary point 3.8317, above the n = 1 value
        for n in 1..4 {
            let a = bessel_jp_root(n, 1).unwrap();
            let b = bessel_jp_root(n + 1, 1).unwrap();
            assert!(a < b, "first roots must increase in n");
        }
        let z01 = bessel_jp_root(0, 1).unwrap();
        let z11 = bessel_jp_root(1, 1).unwrap();
        assert!(z01 > z11);
    }

    #[test]
    fn cylinder_dispersion_values() {
        let p = cylinder_dispersion(1, 1, 1.0, Bond::Infinite).unwrap();
        assert_abs_diff_eq!(p.omega_sq, 1.7508, epsilon = 1e-3);
        assert_eq!(p.omega_sq, p.lambda_sq);

        let pb = cylinder_dispersion(1, 1, 1.0, Bond::Finite(10.0)).unwrap();
        assert_abs_diff_eq!(pb.omega_sq, 2.3441, epsilon = 1e-3);
        assert!(pb.omega_sq > pb.lambda_sq);
        // algebraic consistency of the capillary correction
        assert_relative_eq!(
            pb.omega_sq,
            pb.lambda_sq * (1.0 + pb.root * pb.root / 10.0),
            epsilon = 1e-13
        );
    }

    #[test]
    fn dispersion_monotone_in_depth() {
        let mut prev = 0.0;
        for &h in &[0.25, 0.5, 1.0, 2.0, 4.0] {
            let p = cylinder_dispersion(1, 1, h, Bond::Finite(10.0)).unwrap();
            assert!(p.omega_sq > prev);
            prev = p.omega_sq;
        }
    }

    #[test]
    fn box_dispersion_values() {
        let p = box_dispersion(1, 0, 1.0, 1.0, 1.0, Bond::Infinite).unwrap();
        let exact = std::f64::consts::PI * std::f64::consts::PI.tanh();
        assert_relative_eq!(p.omega_sq, exact, epsilon = 1e-12);
        assert!(box_dispersion(0, 0, 1.0, 1.0, 1.0, Bond::Infinite).is_err());
        // square symmetry
        let q = box_dispersion(0, 1, 1.0, 1.0, 1.0, Bond::Infinite).unwrap();
        assert_relative_eq!(p.omega_sq, q.omega_sq, epsilon = 1e-14);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn dispersion_identities(
            n in 0i32..4,
            m in 1u32..3,
            h in 0.2f64..3.0,
            bo in 0.5f64..500.0,
        ) {
            let p = cylinder_dispersion(n, m, h, Bond::Finite(bo)).unwrap();
            let expect = p.lambda_sq * (1.0 + p.root * p.root / bo);
            proptest::prop_assert!((p.omega_sq - expect).abs() <= 1e-13 * expect);
            proptest::prop_assert!(p.omega_sq > p.lambda_sq);
            // deeper means faster; strictly so until tanh saturates in f64
            let deeper = cylinder_dispersion(n, m, h + 0.1, Bond::Finite(bo)).unwrap();
            proptest::prop_assert!(deeper.omega_sq >= p.omega_sq);
            if p.root * (h + 0.1) < 8.0 {
                proptest::prop_assert!(deeper.omega_sq > p.omega_sq);
            }
        }

        #[test]
        fn bessel_series_recurrence_overlap(n in 0i32..8, x in 5.0f64..10.0) {
            let s = bessel_series(n as usize, x);
            let m = bessel_miller(n as usize, x);
            proptest::prop_assert!((s - m).abs() <= 1e-12);
        }
    }
}
