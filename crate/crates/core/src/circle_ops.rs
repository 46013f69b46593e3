//! Hardy-space projections, the exterior Herglotz transform, polarized
//! harmonic extension, the smoothing quotient, and the jump-problem solver
//! on the circle.
//!
//! Everything here acts coefficientwise on truncated Laurent series; no
//! quadrature on the circle is involved, so the projector algebra is exact
//! by construction.

use crate::polar_series::{CircleSeries, PolarizedSeries};
use crate::{C64, Result};

/// The unique splitting `f = plus + minus` with `plus` supported on modes
/// `d >= 1` (holomorphic in the disk, vanishing at 0 after reflection) and
/// `minus` on modes `d <= 0` (holomorphic in the exterior, bounded at
/// infinity).
#[derive(Debug, Clone)]
pub struct HardySplit {
    pub plus: CircleSeries,
    pub minus: CircleSeries,
}

/// Target subspaces of the four Szegő-type projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subspace {
    /// Modes `d >= 0`.
    HTwo,
    /// Modes `d >= 1`.
    HTwoZero,
    /// Modes `d <= 0`.
    HMinus,
    /// Modes `d <= -1`.
    HMinusZero,
}

/// Coefficient partition by sign of the mode.
pub fn szego_split(f: &CircleSeries) -> HardySplit {
    HardySplit {
        plus: project(f, Subspace::HTwoZero),
        minus: project(f, Subspace::HMinus),
    }
}

/// Keep exactly the modes of the chosen subspace.
pub fn project(f: &CircleSeries, subspace: Subspace) -> CircleSeries {
    let m = f.max_mode();
    let mut out = CircleSeries::zeros(f.degree(), f.annulus().sigma);
    for d in -m..=m {
        let keep = match subspace {
            Subspace::HTwo => d >= 0,
            Subspace::HTwoZero => d >= 1,
            Subspace::HMinus => d <= 0,
            Subspace::HMinusZero => d <= -1,
        };
        if keep {
            out.set(d, f.get(d));
        }
    }
    out
}

/// Mode-0 coefficient (the mean value on the circle).
pub fn mean_on_circle(f: &CircleSeries) -> C64 {
    f.get(0)
}

/// Exterior Herglotz transform `<f> + 2 P_{H^2_{-,0}}[f]`: the unique
/// exterior-holomorphic function whose boundary real part is `f` (for
/// real-valued `f`) and whose value at infinity is real.
///
/// A non-Hermitian input still produces the same coefficient formula; a
/// warning is emitted since the boundary-value guarantee is then void.
pub fn herglotz_exterior(f: &CircleSeries) -> CircleSeries {
    let defect = f.hermitian_defect();
    if defect > 1e-8 * (1.0 + f.coeff_sup()) {
        eprintln!(
            "warning: herglotz_exterior on non-Hermitian input (defect {defect:.3e}); \
             boundary real-part identity not guaranteed"
        );
    }
    let mut out = project(f, Subspace::HMinusZero).scale(C64::new(2.0, 0.0));
    out.set(0, mean_on_circle(f));
    out
}

/// Polarization of the harmonic extension to the exterior disk:
/// `U[f](z,w) = f_plus(1/wbar) + f_minus(z)` built from the Hardy split of
/// the circle restriction. Its restriction back to the circle reproduces
/// the restriction of the input exactly (up to modes beyond the polarized
/// window, whose dropped mass is returned alongside).
pub fn harmonic_extension_polarized(a: &PolarizedSeries) -> PolarizedSeries {
    let (u, _) = harmonic_extension_with_tail(a);
    u
}

/// Same as [`harmonic_extension_polarized`], also reporting the coefficient
/// mass of restriction modes `|d| > N` that cannot be represented in the
/// polarized window.
pub fn harmonic_extension_with_tail(a: &PolarizedSeries) -> (PolarizedSeries, f64) {
    let n = a.degree() as i64;
    let split = szego_split(&a.restrict_circle());
    let mut out = PolarizedSeries::zeros(a.degree(), a.sigma());
    let mut dropped = 0.0f64;
    let m = 2 * n;
    for d in 1..=m {
        let c = split.plus.get(d);
        if c != C64::new(0.0, 0.0) {
            if d <= n {
                // mode d of f_plus evaluated at 1/wbar: coefficient of wbar^{-d}
                out.set(0, -d, c);
            } else {
                dropped += c.norm();
            }
        }
    }
    for d in -m..=0 {
        let c = split.minus.get(d);
        if c != C64::new(0.0, 0.0) {
            if d >= -n {
                out.set(d, 0, c);
            } else {
                dropped += c.norm();
            }
        }
    }
    (out, dropped)
}

/// Smoothing quotient `M[f] = (f - U[f]) / (1 - z wbar)`: the numerator
/// vanishes on the circle by construction, so Weierstrass division applies.
pub fn smoothing_quotient_m(a: &PolarizedSeries, tol: f64) -> Result<PolarizedSeries> {
    let u = harmonic_extension_polarized(a);
    a.sub(&u).weierstrass_divide(tol)
}

/// Truncated series exponential by scaling and squaring.
///
/// The argument is halved until its coefficient-l1 mass is at most 1/2, a
/// Taylor expansion is summed to machine-negligible terms, and the result is
/// squared back up. One-sided mode support (all `d >= 0` or all `d <= 0`)
/// is preserved exactly.
pub fn exp_series(f: &CircleSeries) -> CircleSeries {
    let n = f.degree();
    let sigma = f.annulus().sigma;
    let mass = f.coeff_l1();
    let s = if mass > 0.5 {
        (mass / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scaled = f.scale(C64::new((0.5f64).powi(s as i32), 0.0));
    // Taylor sum of exp(scaled).
    let mut sum = CircleSeries::constant(C64::new(1.0, 0.0), n, sigma);
    let mut term = CircleSeries::constant(C64::new(1.0, 0.0), n, sigma);
    for k in 1..200 {
        term = term.multiply(&scaled).scale(C64::new(1.0 / k as f64, 0.0));
        sum = sum.add(&term);
        if term.coeff_l1() < 1e-18 * sum.coeff_l1().max(1.0) {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.multiply(&sum);
    }
    sum
}

/// Solve the additive jump problem: returns
/// `f = C e^{-vbar} + e^{-vbar} P_{H^2_{-,0}}( e^{-u} G )`,
/// which lies in the exterior Hardy space while `e^{u + vbar} f - G` has only
/// nonnegative modes. `u` and `v` must be supported on modes `d >= 0`.
pub fn herglotz_jump_solve(
    g: &CircleSeries,
    u: &CircleSeries,
    v: &CircleSeries,
    c: C64,
) -> CircleSeries {
    let vbar = v.conj_on_circle(); // modes d <= 0
    let exp_mvbar = exp_series(&vbar.scale(C64::new(-1.0, 0.0)));
    let exp_mu = exp_series(&u.scale(C64::new(-1.0, 0.0)));
    let proj = project(&exp_mu.multiply(g), Subspace::HMinusZero);
    exp_mvbar.scale(c).add(&exp_mvbar.multiply(&proj))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polar_series::PolarizedSeries;

    const TOL: f64 = 1e-12;

    fn sample_series(n: usize) -> CircleSeries {
        let mut f = CircleSeries::zeros(n, 0.2);
        f.set(2, C64::new(1.0, 0.0));
        f.set(0, C64::new(3.0, 0.0));
        f.set(-1, C64::new(1.0, 0.0));
        f
    }

    #[test]
    fn split_by_sign() {
        let f = sample_series(4);
        let s = szego_split(&f);
        assert!((s.plus.get(2) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!(s.plus.get(0).norm() < TOL && s.plus.get(-1).norm() < TOL);
        assert!((s.minus.get(0) - C64::new(3.0, 0.0)).norm() < TOL);
        assert!((s.minus.get(-1) - C64::new(1.0, 0.0)).norm() < TOL);
        // identity f = plus + minus
        let back = s.plus.add(&s.minus);
        for d in -8..=8 {
            assert!((back.get(d) - f.get(d)).norm() < TOL);
        }
        // constant goes entirely to minus
        let c = CircleSeries::constant(C64::new(5.0, -1.0), 4, 0.2);
        let sc = szego_split(&c);
        assert!(sc.plus.coeff_sup() < TOL);
        assert!((sc.minus.get(0) - C64::new(5.0, -1.0)).norm() < TOL);
    }

    #[test]
    fn projections_examples() {
        let f = sample_series(4);
        let pm = project(&f, Subspace::HMinus);
        assert!((pm.get(0) - C64::new(3.0, 0.0)).norm() < TOL);
        assert!((pm.get(-1) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!(pm.get(2).norm() < TOL);
        let c = CircleSeries::constant(C64::new(9.0, 0.0), 4, 0.2);
        assert!(project(&c, Subspace::HMinusZero).coeff_sup() < TOL);
    }

    #[test]
    fn herglotz_cosine_and_constants() {
        let n = 4;
        // f = cos(theta) = (z + 1/z)/2 on the circle maps to 1/z.
        let mut f = CircleSeries::zeros(n, 0.2);
        f.set(1, C64::new(0.5, 0.0));
        f.set(-1, C64::new(0.5, 0.0));
        let h = herglotz_exterior(&f);
        assert!((h.get(-1) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!(h.coeff_l1() - 1.0 < TOL);
        // constants are fixed points
        let c = CircleSeries::constant(C64::new(1.0, 0.0), n, 0.2);
        let hc = herglotz_exterior(&c);
        assert!((hc.get(0) - C64::new(1.0, 0.0)).norm() < TOL);
        let half = CircleSeries::constant(C64::new(0.5f64.ln(), 0.0), n, 0.2);
        assert!((herglotz_exterior(&half).get(0).re - 0.5f64.ln()).abs() < TOL);
    }

    #[test]
    fn mean_examples() {
        let f = sample_series(4);
        assert!((mean_on_circle(&f) - C64::new(3.0, 0.0)).norm() < TOL);
        let mut z = CircleSeries::zeros(4, 0.2);
        z.set(1, C64::new(1.0, 0.0));
        assert!(mean_on_circle(&z).norm() < TOL);
    }

    #[test]
    fn harmonic_extension_cases() {
        let n = 8;
        // z wbar has boundary value 1; its extension is the constant 1.
        let a = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 1, n, 0.2);
        let u = harmonic_extension_polarized(&a);
        assert!((u.get(0, 0) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!((u.coeff_l1() - 1.0).abs() < TOL);
        // z^2 extends to 1/wbar^2
        let b = PolarizedSeries::monomial(C64::new(1.0, 0.0), 2, 0, n, 0.2);
        let ub = harmonic_extension_polarized(&b);
        assert!((ub.get(0, -2) - C64::new(1.0, 0.0)).norm() < TOL);
        // idempotence on data already of extension form
        let uu = harmonic_extension_polarized(&ub);
        assert!(uu.sub(&ub).coeff_sup() < TOL);
        // restriction consistency
        let r1 = a.restrict_circle();
        let r2 = u.restrict_circle();
        for d in -(2 * n as i64)..=2 * n as i64 {
            assert!((r1.get(d) - r2.get(d)).norm() < TOL);
        }
    }

    #[test]
    fn smoothing_quotient_cases() {
        let n = 8;
        // M[z wbar] = (z wbar - 1)/(1 - z wbar) = -1.
        let a = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 1, n, 0.2);
        let m = smoothing_quotient_m(&a, 1e-10).unwrap();
        assert!((m.get(0, 0) + C64::new(1.0, 0.0)).norm() < TOL);
        assert!((m.coeff_l1() - 1.0).abs() < TOL);
        // z-only data with nonpositive modes equals its own extension.
        let b = PolarizedSeries::monomial(C64::new(2.0, 1.0), -3, 0, n, 0.2);
        assert!(smoothing_quotient_m(&b, 1e-10).unwrap().coeff_sup() < TOL);
    }

    #[test]
    fn exp_series_matches_pointwise() {
        // degree high enough that truncating exp's infinite mode content is
        // far below the comparison tolerance
        let n = 24;
        let mut f = CircleSeries::zeros(n, 0.2);
        f.set(0, C64::new(0.3, -0.1));
        f.set(1, C64::new(0.7, 0.2));
        f.set(3, C64::new(-0.4, 0.0));
        let e = exp_series(&f);
        for a in 0..16 {
            let z = C64::from_polar(1.0, 0.39 * a as f64);
            let expect = f.eval(z).exp();
            assert!((e.eval(z) - expect).norm() < 1e-10 * expect.norm());
        }
        // one-sided support preserved
        for d in -(2 * n as i64)..0 {
            assert!(e.get(d).norm() < TOL);
        }
    }

    #[test]
    fn jump_solve_trivial_cases() {
        let n = 8;
        let zero = CircleSeries::zeros(n, 0.2);
        let mut g = CircleSeries::zeros(n, 0.2);
        g.set(-1, C64::new(1.0, 0.0));
        g.set(0, C64::new(5.0, 0.0));
        g.set(2, C64::new(1.0, 0.0));
        let f = herglotz_jump_solve(&g, &zero, &zero, C64::new(0.0, 0.0));
        assert!((f.get(-1) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!((f.coeff_l1() - 1.0).abs() < TOL);
        let f7 = herglotz_jump_solve(&zero, &zero, &zero, C64::new(7.0, 0.0));
        assert!((f7.get(0) - C64::new(7.0, 0.0)).norm() < TOL);
    }
}
