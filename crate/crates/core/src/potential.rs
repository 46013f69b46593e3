//! Droplet geometry and the circle-coordinate potential data.
//!
//! For a confining potential `Q` with droplet `S_1` and exterior conformal
//! map `phi: C \ S_1 -> exterior disk` (inverse `varphi`), everything the
//! hierarchy needs lives on an annulus around the unit circle:
//!
//! * `R(w) = Q(varphi(w)) - Re scrQ(varphi(w)) - log|w|`, vanishing to second
//!   order on the circle,
//! * its square root `Rhat` (negative inside, positive outside),
//! * the boundary Laplacian `ΔR` on the circle,
//! * the outer function `H_R` with `|H_R|^2 = pi^{-1/2} (ΔR)^{1/2}`,
//! * the division remainder `W_R` and the seed `B0 = a1 W_R/(ζ H_R)`.
//!
//! The logarithm `-1/2 log(z wbar)` inside the polarized `R` is not
//! Laurent-representable (branch cut at `z wbar = -1`); it is replaced by the
//! truncated expansion `1/2 sum_{n<=M} (1 - z wbar)^n / n`, which vanishes on
//! the circle **exactly** at coefficient level (alternating binomial sums of
//! integers), so the on-circle identities carry no truncation error. All
//! downstream series are built from the same replaced array, and pointwise
//! work (weights `e^{-2mR}`, quadrature) uses the exact closed form instead.

use crate::circle_ops::{exp_series, herglotz_exterior};
use crate::polar_series::{rho_of_sigma, CircleSeries, ContactSeries, PolarizedSeries};
use crate::{C64, Error, Result};
use std::io::BufRead;

/// Largest base scale at which the near-diagonal series expansions are
/// guaranteed to stay controlled (the contact variable `u = 1 - z*wbar`
/// must remain well inside the unit disk on the working region).
pub const MAX_SIGMA0: f64 = 0.3;

/// Built-in potential families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `Q = |z|^2` (droplet: disk of radius `1/sqrt(2)`).
    RadialGaussian,
    /// `Q = |z|^2 + t Re z^2` (droplet: ellipse), `|t| <= 0.3`.
    Elliptic { t: f64 },
}

/// Droplet geometry: the conformal maps and the bounded analytic completion
/// of `Q` along the interface.
///
/// `varphi` and `scrq` are finite Laurent series in the circle variable `w`;
/// `scrq` collects the coefficients of `scrQ(varphi(w))`.
#[derive(Debug, Clone)]
pub struct DropletGeometry {
    varphi: Vec<(i64, C64)>,
    scrq: Vec<(i64, C64)>,
    q_poly: Vec<(i64, i64, f64)>,
    phi_prime_inf: f64,
    scrq_inf: C64,
}

impl DropletGeometry {
    /// `varphi(w)` (the inverse map, exterior disk -> exterior of the droplet).
    pub fn varphi(&self, w: C64) -> C64 {
        self.varphi.iter().map(|&(k, c)| c * w.powi(k as i32)).sum()
    }

    pub fn varphi_prime(&self, w: C64) -> C64 {
        self.varphi
            .iter()
            .map(|&(k, c)| c * k as f64 * w.powi(k as i32 - 1))
            .sum()
    }

    /// `scrQ(varphi(w))` as a finite Laurent series in `w`.
    pub fn scrq_circle(&self, w: C64) -> C64 {
        self.scrq.iter().map(|&(k, c)| c * w.powi(k as i32)).sum()
    }

    /// The monomials `(j, k, c)` of `Q = sum c Re(z^j zbar^k)`, for callers
    /// that re-evaluate the potential in extended precision.
    pub fn q_terms(&self) -> &[(i64, i64, f64)] {
        &self.q_poly
    }

    /// The potential `Q` at a point of the physical plane.
    pub fn q_value(&self, z: C64) -> f64 {
        let zb = z.conj();
        self.q_poly
            .iter()
            .map(|&(j, k, c)| (c * z.powi(j as i32) * zb.powi(k as i32)).re)
            .sum()
    }

    /// `phi(z)`: the exterior conformal map, computed by inverting `varphi`
    /// (closed form for the degree-(1,-1) built-ins, Newton otherwise),
    /// always choosing the exterior branch `|w| > 1` where it exists.
    pub fn phi(&self, z: C64) -> C64 {
        // Closed form when varphi(w) = a w + b / w.
        let a = self.varphi_coeff(1);
        let b = self.varphi_coeff(-1);
        let only_ab = self
            .varphi
            .iter()
            .all(|&(k, c)| k == 1 || k == -1 || c.norm() == 0.0);
        if only_ab && a.norm() > 0.0 {
            if b.norm() == 0.0 {
                return z / a;
            }
            // a w^2 - z w + b = 0
            let disc = (z * z - 4.0 * a * b).sqrt();
            let r1 = (z + disc) / (2.0 * a);
            let r2 = (z - disc) / (2.0 * a);
            return if r1.norm() >= r2.norm() { r1 } else { r2 };
        }
        // Newton from the leading behavior w ~ z / a.
        let mut w = z / a;
        for _ in 0..60 {
            let f = self.varphi(w) - z;
            let fp = self.varphi_prime(w);
            let step = f / fp;
            w -= step;
            if step.norm() < 1e-14 * w.norm().max(1.0) {
                break;
            }
        }
        w
    }

    /// `phi'(z) = 1 / varphi'(phi(z))`.
    pub fn phi_prime(&self, z: C64) -> C64 {
        1.0 / self.varphi_prime(self.phi(z))
    }

    /// The bounded analytic completion evaluated in the physical plane.
    pub fn scrq(&self, z: C64) -> C64 {
        self.scrq_circle(self.phi(z))
    }

    pub fn phi_prime_inf(&self) -> f64 {
        self.phi_prime_inf
    }

    pub fn scrq_inf(&self) -> C64 {
        self.scrq_inf
    }

    fn varphi_coeff(&self, k: i64) -> C64 {
        self.varphi
            .iter()
            .find(|&&(kk, _)| kk == k)
            .map(|&(_, c)| c)
            .unwrap_or(C64::new(0.0, 0.0))
    }

    /// `Q(varphi(w))` for `w` near the circle.
    pub fn q_circle(&self, w: C64) -> f64 {
        self.q_value(self.varphi(w))
    }

    /// The circle-coordinate potential gap
    /// `R(w) = Q(varphi(w)) - Re scrQ(varphi(w)) - log|w|` (exact closed
    /// form; nonnegative near the circle, zero exactly on it).
    pub fn r_circle(&self, w: C64) -> f64 {
        self.q_circle(w) - self.scrq_circle(w).re - w.norm().ln()
    }

    /// Exact polarization of `R + 1/2 log(z wbar)`: the Laurent-polynomial
    /// part of the polarized potential gap, with independent unit-modulus
    /// arguments.
    pub fn r_log_subtracted(&self, z: C64, wbar: C64) -> C64 {
        // Q polarized: z -> Phi(z), zbar -> Phi*(wbar).
        let phi_z: C64 = self.varphi.iter().map(|&(k, c)| c * z.powi(k as i32)).sum();
        let phi_wb: C64 = self
            .varphi
            .iter()
            .map(|&(k, c)| c.conj() * wbar.powi(k as i32))
            .sum();
        let q: C64 = self
            .q_poly
            .iter()
            .map(|&(j, k, c)| phi_z.powi(j as i32) * phi_wb.powi(k as i32) * c)
            .sum();
        // Re scrQ polarized: (scrq(z) + conj-coefficients at wbar)/2.
        let s_z: C64 = self.scrq.iter().map(|&(k, c)| c * z.powi(k as i32)).sum();
        let s_wb: C64 = self
            .scrq
            .iter()
            .map(|&(k, c)| c.conj() * wbar.powi(k as i32))
            .sum();
        q - 0.5 * (s_z + s_wb)
    }

    /// Validate the defining identities on circle samples:
    /// `Re scrQ(varphi(e^{i a})) = Q(varphi(e^{i a}))` and `Im scrQ(inf) = 0`.
    pub fn validate(&self) -> Result<()> {
        if self.scrq_inf.im.abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "Im scrQ(infinity) = {} must vanish",
                self.scrq_inf.im
            )));
        }
        if self.phi_prime_inf <= 0.0 {
            return Err(Error::Domain(
                "phi'(infinity) must be positive".to_string(),
            ));
        }
        for i in 0..256 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 256.0;
            let w = C64::from_polar(1.0, th);
            let gap = (self.scrq_circle(w).re - self.q_circle(w)).abs();
            if gap > 1e-10 {
                return Err(Error::Domain(format!(
                    "Re scrQ != Q on the interface (defect {gap:.3e} at angle {th:.3})"
                )));
            }
            // |phi| = 1 on the interface (round trip through the maps).
            let z = self.varphi(w);
            let back = self.phi(z);
            if (back.norm() - 1.0).abs() > 1e-10 {
                return Err(Error::Domain(format!(
                    "|phi| != 1 on interface samples (got {})",
                    back.norm()
                )));
            }
        }
        Ok(())
    }
}

/// Closed-form geometry for a built-in family.
pub fn build_droplet(family: &Family) -> Result<DropletGeometry> {
    let geom = match family {
        Family::RadialGaussian => {
            let a = 1.0 / 2.0f64.sqrt();
            DropletGeometry {
                varphi: vec![(1, C64::new(a, 0.0))],
                scrq: vec![(0, C64::new(0.5, 0.0))],
                q_poly: vec![(1, 1, 1.0)],
                phi_prime_inf: 1.0 / a,
                scrq_inf: C64::new(0.5, 0.0),
            }
        }
        Family::Elliptic { t } => {
            let t = *t;
            if t.abs() > 0.3 {
                return Err(Error::Config(format!(
                    "elliptic parameter |t| = {} exceeds the Jordan-curve bound 0.3",
                    t.abs()
                )));
            }
            if t == 0.0 {
                return build_droplet(&Family::RadialGaussian);
            }
            // Ellipse droplet of Q = |z|^2 + t Re z^2:
            // varphi(w) = a w + b/w, a = 1/sqrt(2(1-t^2)), b = -t a, and
            // scrQ(varphi(w)) = 1/2 - (t/2) w^{-2}. Interface matching
            // (Re scrQ = Q on samples) is re-verified in validate().
            let a = 1.0 / (2.0 * (1.0 - t * t)).sqrt();
            let b = -t * a;
            DropletGeometry {
                varphi: vec![(1, C64::new(a, 0.0)), (-1, C64::new(b, 0.0))],
                scrq: vec![(0, C64::new(0.5, 0.0)), (-2, C64::new(-t / 2.0, 0.0))],
                q_poly: vec![(1, 1, 1.0), (2, 0, t / 2.0), (0, 2, t / 2.0)],
                phi_prime_inf: 1.0 / a,
                scrq_inf: C64::new(0.5, 0.0),
            }
        }
    };
    geom.validate()?;
    Ok(geom)
}

/// Parse a user geometry file:
/// ```text
/// # droplet
/// varphi k re im
/// scrQ k re im
/// Q j k re
/// ```
/// `varphi` lines give Laurent coefficients of the inverse map, `scrQ` lines
/// give Laurent coefficients of `scrQ(varphi(w))` in the circle variable,
/// and `Q` lines give real coefficients of `z^j zbar^k`.
pub fn read_droplet<R: BufRead>(r: &mut R) -> Result<DropletGeometry> {
    let mut header = String::new();
    r.read_line(&mut header)?;
    if header.split_whitespace().collect::<Vec<_>>() != ["#", "droplet"] {
        return Err(Error::Parse(format!("bad droplet header: {header:?}")));
    }
    let mut varphi = Vec::new();
    let mut scrq = Vec::new();
    let mut q_poly = Vec::new();
    for line in r.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = t.split_whitespace().collect();
        match f[0] {
            "varphi" | "scrQ" if f.len() == 4 => {
                let k: i64 = f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                let re: f64 = f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                let im: f64 = f[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                if f[0] == "varphi" {
                    varphi.push((k, C64::new(re, im)));
                } else {
                    scrq.push((k, C64::new(re, im)));
                }
            }
            "Q" if f.len() == 4 => {
                let j: i64 = f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                let k: i64 = f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                let re: f64 = f[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
                q_poly.push((j, k, re));
            }
            _ => return Err(Error::Parse(format!("bad droplet line: {t:?}"))),
        }
    }
    let a = varphi
        .iter()
        .find(|&&(k, _)| k == 1)
        .map(|&(_, c)| c)
        .ok_or_else(|| Error::Parse("varphi must have a degree-1 coefficient".into()))?;
    if a.im.abs() > 1e-14 || a.re <= 0.0 {
        return Err(Error::Domain(
            "leading varphi coefficient must be positive real (phi fixes infinity)".into(),
        ));
    }
    let scrq_inf = scrq
        .iter()
        .find(|&&(k, _)| k == 0)
        .map(|&(_, c)| c)
        .unwrap_or(C64::new(0.0, 0.0));
    if scrq.iter().any(|&(k, c)| k > 0 && c.norm() > 0.0) {
        return Err(Error::Domain(
            "scrQ must be a bounded exterior series (no positive powers)".into(),
        ));
    }
    let geom = DropletGeometry {
        varphi,
        scrq,
        q_poly,
        phi_prime_inf: 1.0 / a.re,
        scrq_inf,
    };
    geom.validate()?;
    Ok(geom)
}

/// Recover the polarized coefficients of a bivariate-analytic evaluator by a
/// double discrete Fourier transform over unit-modulus sampling circles.
/// A held-out reconstruction check guards against insufficient degree.
pub fn polarize<F>(evaluator: F, n: usize, sigma0: f64) -> Result<PolarizedSeries>
where
    F: Fn(C64, C64) -> C64,
{
    let p = 2 * n + 1;
    let mut samples = vec![C64::new(0.0, 0.0); p * p];
    for ip in 0..p {
        let z = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * ip as f64 / p as f64);
        for iq in 0..p {
            let wb = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * iq as f64 / p as f64);
            samples[ip * p + iq] = evaluator(z, wb);
        }
    }
    // Forward 2-D DFT (rows then columns) of size p.
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(p);
    for row in samples.chunks_exact_mut(p) {
        fft.process(row);
    }
    let mut t = vec![C64::new(0.0, 0.0); p * p];
    for i in 0..p {
        for j in 0..p {
            t[j * p + i] = samples[i * p + j];
        }
    }
    for row in t.chunks_exact_mut(p) {
        fft.process(row);
    }
    let norm = 1.0 / (p * p) as f64;
    let mut out = PolarizedSeries::zeros(n, sigma0);
    for jp in 0..p {
        let j = if jp <= n { jp as i64 } else { jp as i64 - p as i64 };
        for kp in 0..p {
            let k = if kp <= n { kp as i64 } else { kp as i64 - p as i64 };
            // Forward FFT computes sum f(x_p) e^{-2 pi i j p / P}, which is
            // exactly the coefficient extraction for e^{+i j theta} modes.
            out.set(j, k, t[kp * p + jp] * norm);
        }
    }
    // Held-out reconstruction check on off-grid points.
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..16 {
        let a = 2.0 * std::f64::consts::PI * (i as f64 + 0.318_309_886) / 16.0;
        let b = 2.0 * std::f64::consts::PI * (i as f64 * 0.618_033_988 + 0.25).fract();
        let z = C64::from_polar(1.0, a);
        let wb = C64::from_polar(1.0, b);
        let direct = evaluator(z, wb);
        worst = worst.max((direct - out.eval(z, wb)).norm());
        scale = scale.max(direct.norm());
    }
    let tol = 1e-10 * scale.max(1.0);
    if worst > tol {
        return Err(Error::InsufficientDegree { err: worst, tol });
    }
    Ok(out)
}

/// Reciprocal of a series supported on modes `d <= 0` with nonvanishing
/// value at infinity (exact power-series recursion in `u = 1/z`).
pub fn reciprocal_exterior(f: &CircleSeries) -> Result<CircleSeries> {
    let m = 2 * f.degree() as i64;
    for d in 1..=m {
        if f.get(d).norm() > 1e-13 * f.coeff_sup() {
            return Err(Error::Domain(
                "reciprocal_exterior requires modes d <= 0 only".into(),
            ));
        }
    }
    let p0 = f.get(0);
    if p0.norm() == 0.0 {
        return Err(Error::Domain(
            "reciprocal_exterior: vanishing value at infinity".into(),
        ));
    }
    let mut out = CircleSeries::zeros(f.degree(), f.annulus().sigma);
    let mut q = vec![C64::new(0.0, 0.0); (m + 1) as usize];
    q[0] = 1.0 / p0;
    for i in 1..=m as usize {
        let mut s = C64::new(0.0, 0.0);
        for j in 1..=i {
            s += f.get(-(j as i64)) * q[i - j];
        }
        q[i] = -s / p0;
    }
    for (i, &c) in q.iter().enumerate() {
        out.set(-(i as i64), c);
    }
    Ok(out)
}

/// Build a circle series from uniform samples `f(e^{2 pi i a / n_s})`.
pub fn circle_from_samples(values: &[C64], n: usize, sigma: f64) -> CircleSeries {
    let n_s = values.len();
    let mut planner = rustfft::FftPlanner::new();
    let fft = planner.plan_fft_forward(n_s);
    let mut buf = values.to_vec();
    fft.process(&mut buf);
    let mut out = CircleSeries::zeros(n, sigma);
    let m = (2 * n as i64).min(n_s as i64 / 2 - 1);
    for d in -m..=m {
        let idx = ((d + n_s as i64) % n_s as i64) as usize;
        out.set(d, buf[idx] / n_s as f64);
    }
    out
}

/// The assembled circle-coordinate data for one potential.
#[derive(Debug, Clone)]
pub struct PotentialModel {
    pub geometry: DropletGeometry,
    pub n: usize,
    pub sigma0: f64,
    /// Polarized `R` in the contact grading (the `-1/2 log(z wbar)` part is
    /// carried exactly as `1/2 sum u^n / n`).
    pub r: ContactSeries,
    /// `Rhat = -(1 - z wbar) sqrt(S)`.
    pub rhat: ContactSeries,
    /// `S = R / (1 - z wbar)^2`.
    pub s: ContactSeries,
    pub sqrt_s: ContactSeries,
    pub dbar_r: ContactSeries,
    pub dbar_rhat: ContactSeries,
    /// `ΔR` restricted to the circle (strictly positive).
    pub laplacian_r_circle: CircleSeries,
    /// Outer function (modes `d <= 0`), `|H_R|^2 = pi^{-1/2} (ΔR)^{1/2}` on the circle.
    pub h_r: CircleSeries,
    pub inv_h_r: CircleSeries,
    pub a1: f64,
    pub w_r: ContactSeries,
    pub b0: ContactSeries,
    /// `|H_R|^2` polarized: `H_R(z) conj-H_R(wbar)`.
    pub hr_abs2: ContactSeries,
    /// `conj H_R` as a function of `wbar`.
    pub hbar_r: ContactSeries,
    pub inv_hbar_r: ContactSeries,
    /// `C1 = (1 - z wbar) conj-H_R / (4 Rhat dbar-Rhat)`.
    pub c1: ContactSeries,
    /// `W_R / (ζ H_R)` (so `B0 = a1 *` this).
    pub wr_over_zeta_hr: ContactSeries,
    /// `1/(ζ H_R)` as a circle series (modes `d <= -1`).
    pub inv_zeta_hr: CircleSeries,
    /// Sup of coefficients lost to the extension depth cap during assembly
    /// (must stay at rounding level relative to the data).
    pub depth_cap_loss: f64,
}

impl PotentialModel {
    /// Assemble the full model at truncation degree `n` and base scale
    /// `sigma0`.
    pub fn build(geometry: DropletGeometry, n: usize, sigma0: f64) -> Result<Self> {
        if n < 16 {
            return Err(Error::Config(format!("N = {n} below the minimum 16")));
        }
        if !(sigma0 > 0.0 && sigma0 <= MAX_SIGMA0) {
            return Err(Error::Config(format!(
                "sigma0 = {sigma0} outside (0, {MAX_SIGMA0}] (the contact variable \
                 leaves its convergence window beyond {MAX_SIGMA0})"
            )));
        }
        let sigma_hi = (2.0 * sigma0).min(0.5);
        let div_tol = 1e-8;
        let d_max = 2 * n;
        let u_max = 2 * n;
        let mut depth_cap_loss = 0.0f64;

        // Laurent-polynomial part of R (the logarithm is subtracted in
        // closed form), converted into the contact grading. The sampling
        // DFT leaves rounding dust on far-off exponents, and the binomial
        // conversion factors would amplify it, so entries at rounding level
        // are zeroed first.
        let geom = geometry.clone();
        let mut g_polar = polarize(|z, wb| geom.r_log_subtracted(z, wb), n, sigma_hi)?;
        let floor = 1e-13 * g_polar.coeff_sup();
        let np = g_polar.degree() as i64;
        for j in -np..=np {
            for k in -np..=np {
                if g_polar.get(j, k).norm() < floor {
                    g_polar.set(j, k, C64::new(0.0, 0.0));
                }
            }
        }
        let (mut r, g_dropped) = ContactSeries::from_polarized(&g_polar, d_max, u_max);
        depth_cap_loss = depth_cap_loss.max(g_dropped);
        r = r.with_sigma(sigma_hi);

        // -1/2 log(z wbar) = 1/2 sum_{p >= 1} u^p / p, coefficient-exact in
        // the contact grading (no replacement polynomial involved).
        for p in 1..=u_max {
            let prev = r.get(0, p);
            r.set(0, p, prev + C64::new(0.5 / p as f64, 0.0));
        }

        // Second-order vanishing on the circle, then S = R / (1 - z wbar)^2
        // as an exact downward shift in the grading.
        let r_defect = r.vanishing_defect(2);
        if r_defect > div_tol {
            return Err(Error::Domain(format!(
                "polarized R does not vanish to second order on the circle \
                 (defect {r_defect:.3e})"
            )));
        }
        let s = r.div_u(2, div_tol)?;

        // sqrt(S): level 0 from pointwise square roots of the sampled circle
        // restriction (which must be positive real), higher levels from the
        // finite u-adic recursion. Rhat = -(1 - z wbar) sqrt(S).
        let sqrt_s = s.contact_sqrt().map_err(|e| match e {
            Error::Positivity(msg) => Error::Positivity(format!(
                "S on the interface (needs ΔQ > 0 on the droplet edge): {msg}"
            )),
            other => other,
        })?;
        let rhat = sqrt_s.mul_u(1).scale(C64::new(-1.0, 0.0));

        // Derivatives shrink the controlled region; the boundary Laplacian
        // restriction only needs intermediate scales.
        let dbar_r_mid = r.dbar_w(0.75 * sigma_hi)?;
        let laplacian_r_circle = dbar_r_mid.d_z(0.5 * sigma_hi)?.restrict_circle();
        let dbar_r = dbar_r_mid.with_sigma(sigma0);
        let dbar_rhat = rhat.dbar_w(sigma0)?;

        let n_s = (8 * n).max(64);
        let mut lap_vals = Vec::with_capacity(n_s);
        for a in 0..n_s {
            let th = 2.0 * std::f64::consts::PI * a as f64 / n_s as f64;
            let v = laplacian_r_circle.eval(C64::from_polar(1.0, th));
            if v.re <= 0.0 {
                return Err(Error::Positivity(format!(
                    "ΔR <= 0 on the interface (value {:.3e} at angle {th:.3})",
                    v.re
                )));
            }
            if v.im.abs() > 1e-8 * v.re {
                return Err(Error::Positivity(
                    "ΔR not real on the interface".to_string(),
                ));
            }
            lap_vals.push(v.re);
        }

        // Outer function H_R = pi^{-1/4} exp( Herglotz[log ΔR] / 4 ).
        let log_vals: Vec<C64> = lap_vals.iter().map(|&v| C64::new(v.ln(), 0.0)).collect();
        let log_lap = circle_from_samples(&log_vals, n, sigma0);
        let herg = herglotz_exterior(&log_lap).scale(C64::new(0.25, 0.0));
        let h_r = exp_series(&herg).scale(C64::new(
            std::f64::consts::PI.powf(-0.25),
            0.0,
        ));
        let h_inf = h_r.get(0);
        if h_inf.im.abs() > 1e-12 * h_inf.norm() || h_inf.re <= 0.0 {
            return Err(Error::Domain(format!(
                "H_R(infinity) = {h_inf} should be positive real"
            )));
        }
        let a1 = 1.0 / h_inf.re;
        let inv_h_r = reciprocal_exterior(&h_r)?;

        // |H_R|^2 polarized and the conjugate factors. Conjugation on the
        // circle flips mode `d` to `-d`; the anti-holomorphic embedding then
        // extends the flipped mode as `wbar^d`.
        let (hz, d_hz) = ContactSeries::from_circle_as_z(&h_r, d_max, u_max);
        let (hbar_r, d_hb) =
            ContactSeries::from_circle_as_wbar(&h_r.conj_on_circle(), d_max, u_max);
        let (inv_hbar_r, d_ihb) =
            ContactSeries::from_circle_as_wbar(&inv_h_r.conj_on_circle(), d_max, u_max);
        depth_cap_loss = depth_cap_loss.max(d_hz).max(d_hb).max(d_ihb);
        let hr_abs2 = hz.multiply(&hbar_r);

        // W_R from dbar Rhat = sqrt(pi/2) ζ |H_R|^2 + 2 W_R Rhat dbar-Rhat.
        // The denominator's circle restriction winds once around zero (a ζ
        // factor), which the sampling-based reciprocal handles directly.
        let half_pi_sqrt = (std::f64::consts::PI / 2.0).sqrt();
        let zeta_habs = hr_abs2.shift_z(1).scale(C64::new(half_pi_sqrt, 0.0));
        let numerator = dbar_rhat.sub(&zeta_habs);
        let num_div = numerator.div_u(1, 1e-6)?;
        let inv_sd = sqrt_s.multiply(&dbar_rhat).contact_inverse()?;
        let w_r = num_div.multiply(&inv_sd).scale(C64::new(-0.5, 0.0));

        // C1 = -(conj H_R) / (4 sqrt(S) dbar-Rhat).
        let c1 = hbar_r.multiply(&inv_sd).scale(C64::new(-0.25, 0.0));

        // 1/(ζ H_R) and the seed B0 = a1 W_R / (ζ H_R).
        let inv_zeta_hr = inv_h_r.shift(-1);
        let (inv_zeta_hr_contact, d_izh) =
            ContactSeries::from_circle_as_z(&inv_zeta_hr, d_max, u_max);
        depth_cap_loss = depth_cap_loss.max(d_izh);
        let wr_over_zeta_hr = w_r.multiply(&inv_zeta_hr_contact);
        let b0 = wr_over_zeta_hr.scale(C64::new(a1, 0.0));

        let data_scale = r.coeff_sup().max(h_r.coeff_sup()).max(1e-30);
        if depth_cap_loss > 1e-7 * data_scale {
            return Err(Error::Precision(format!(
                "extension depth cap dropped non-negligible coefficients \
                 (sup {depth_cap_loss:.3e} against data scale {data_scale:.3e})"
            )));
        }

        let model = Self {
            geometry,
            n,
            sigma0,
            r,
            rhat,
            s,
            sqrt_s,
            dbar_r,
            dbar_rhat,
            laplacian_r_circle,
            h_r,
            inv_h_r,
            a1,
            w_r,
            b0,
            hr_abs2,
            hbar_r,
            inv_hbar_r,
            c1,
            wr_over_zeta_hr,
            inv_zeta_hr,
            depth_cap_loss,
        };
        model.check_invariants()?;
        Ok(model)
    }

    /// The structural identities of the model, verified on samples:
    /// `Rhat^2 = R`, second-order vanishing of `R` on the circle, the
    /// boundary identities for `|H_R|^2` and `dbar Rhat`, the `W_R`
    /// reconstruction, and the diagonal sign convention.
    pub fn check_invariants(&self) -> Result<()> {
        let half = self.sigma0 / 2.0;
        let scale = self.r.sup_norm(half).max(1e-30);
        let sq = self.rhat.multiply(&self.rhat);
        let defect = sq.sub(&self.r).sup_norm(half) / scale;
        if defect > 1e-9 {
            return Err(Error::Domain(format!(
                "Rhat^2 != R (relative defect {defect:.3e})"
            )));
        }

        if self.r.vanishing_defect(2) > 1e-8 {
            return Err(Error::Domain(
                "R no longer vanishes to second order on the circle".into(),
            ));
        }

        // Diagonal signs on radii inside the working annulus.
        let rho = rho_of_sigma(self.sigma0)?;
        for &e in &[0.9f64, 0.5, -0.5, -0.9] {
            let rr = rho.powf(e);
            let z = C64::new(rr, 0.0);
            let rv = self.r.restrict_diagonal(z).re;
            if rv <= 0.0 {
                return Err(Error::Positivity(format!(
                    "R({rr:.4}) = {rv:.3e} should be positive off the circle"
                )));
            }
            let rh = self.rhat.restrict_diagonal(z).re;
            if (rr > 1.0 && rh <= 0.0) || (rr < 1.0 && rh >= 0.0) {
                return Err(Error::Positivity(format!(
                    "Rhat sign convention violated at r = {rr:.4} (value {rh:.3e})"
                )));
            }
        }

        // |H_R|^2 = pi^{-1/2} sqrt(ΔR) and dbar Rhat = sqrt(pi/2) ζ |H_R|^2
        // on the circle.
        let rt_pi = std::f64::consts::PI.sqrt();
        let dbar_rhat_circ = self.dbar_rhat.restrict_circle();
        for a in 0..256 {
            let th = 2.0 * std::f64::consts::PI * a as f64 / 256.0;
            let zt = C64::from_polar(1.0, th);
            let h = self.h_r.eval(zt);
            let lap = self.laplacian_r_circle.eval(zt).re;
            let lhs = h.norm_sqr();
            let rhs = lap.sqrt() / rt_pi;
            if (lhs - rhs).abs() > 1e-10 * rhs.max(1.0) {
                return Err(Error::Domain(format!(
                    "|H_R|^2 boundary identity defect {:.3e} at angle {th:.3}",
                    (lhs - rhs).abs()
                )));
            }
            let dv = dbar_rhat_circ.eval(zt);
            let expect = zt * (std::f64::consts::PI / 2.0).sqrt() * lhs;
            if (dv - expect).norm() > 1e-8 * expect.norm().max(1.0) {
                return Err(Error::Domain(format!(
                    "dbar Rhat boundary identity defect {:.3e}",
                    (dv - expect).norm()
                )));
            }
        }

        // a1 normalization.
        if (self.a1 * self.h_r.get(0).re - 1.0).abs() > 1e-14 {
            return Err(Error::Domain("a1 * H_R(infinity) != 1".into()));
        }

        // W_R reconstruction identity on the working annulus.
        let half_pi_sqrt = (std::f64::consts::PI / 2.0).sqrt();
        let zeta_habs = self
            .hr_abs2
            .shift_z(1)
            .scale(C64::new(half_pi_sqrt, 0.0));
        let recon = zeta_habs.add(
            &self
                .w_r
                .multiply(&self.rhat)
                .multiply(&self.dbar_rhat)
                .scale(C64::new(2.0, 0.0)),
        );
        let wd = recon.sub(&self.dbar_rhat).sup_norm(half)
            / self.dbar_rhat.sup_norm(half).max(1e-30);
        if wd > 1e-9 {
            return Err(Error::Domain(format!(
                "W_R reconstruction defect {wd:.3e}"
            )));
        }
        Ok(())
    }

    /// `c_{m,n} = phi'(infinity)^{-n-1} e^{-m scrQ(infinity)}`.
    pub fn c_constant(&self, m: u32, n_deg: u32) -> f64 {
        c_constant(&self.geometry, m, n_deg)
    }
}

/// `c_{m,n} = phi'(infinity)^{-n-1} e^{-m scrQ(infinity)}` (positive real).
pub fn c_constant(geometry: &DropletGeometry, m: u32, n_deg: u32) -> f64 {
    geometry.phi_prime_inf.powi(-(n_deg as i32) - 1)
        * (-(m as f64) * geometry.scrq_inf.re).exp()
}

impl PolarizedSeries {
    /// Multiply by `z^s` (shift the `j` index; overflowing modes dropped).
    pub fn shift_z(&self, s: i64) -> Self {
        let n = self.degree() as i64;
        let mut out = PolarizedSeries::zeros(self.degree(), self.sigma());
        for j in -n..=n {
            for k in -n..=n {
                let c = self.get(j, k);
                if c != C64::new(0.0, 0.0) {
                    out.set(j + s, k, c);
                }
            }
        }
        out
    }
}

/// Smooth one-sided ramp: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_ramp(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let g = (-1.0 / x).exp();
        let h = (-1.0 / (1.0 - x)).exp();
        g / (g + h)
    }
}

/// Radial cutoffs at base scale `sigma0`: `chi01` rises from 0 at
/// `rho(sigma0)^2` to 1 at `rho(sigma0)` (and stays 1 outward); `chi00`
/// mirrors it, falling from 1 at `1/rho(sigma0)` to 0 at `1/rho(sigma0)^2`.
/// The two-sided bump for the potential evaluation is their product, and
/// each factor is squared where a squared cutoff is required, so that
/// `|dbar chi|^2 <= C chi` holds by construction.
#[derive(Debug, Clone, Copy)]
pub struct Cutoffs {
    pub rho1: f64,
    pub rho2: f64,
}

impl Cutoffs {
    pub fn new(sigma0: f64) -> Result<Self> {
        let rho2 = rho_of_sigma(sigma0)?;
        Ok(Self {
            rho1: rho2 * rho2,
            rho2,
        })
    }

    /// Increasing factor (1 on the closed exterior disk).
    pub fn chi01(&self, r: f64) -> f64 {
        smooth_ramp((r - self.rho1) / (self.rho2 - self.rho1))
    }

    /// Decreasing factor (1 up to `1/rho2`).
    pub fn chi00(&self, r: f64) -> f64 {
        smooth_ramp((1.0 / self.rho1 - r) / (1.0 / self.rho1 - 1.0 / self.rho2))
    }

    /// Two-sided bump `chi0 = chi00 * chi01`, squared (the form used in the
    /// potential `Ψ≈` and the norm quadrature).
    pub fn chi0_sq(&self, r: f64) -> f64 {
        let c = self.chi00(r) * self.chi01(r);
        c * c
    }

    pub fn chi01_sq(&self, r: f64) -> f64 {
        let c = self.chi01(r);
        c * c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_geometry_closed_form() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let z = C64::new(2.0, 1.0);
        // phi(z) = sqrt(2) z, varphi(w) = w / sqrt(2), scrQ = 1/2.
        assert!((g.phi(z) - z * 2.0f64.sqrt()).norm() < 1e-12);
        assert!((g.varphi(z) - z / 2.0f64.sqrt()).norm() < 1e-12);
        assert!((g.scrq(z) - C64::new(0.5, 0.0)).norm() < 1e-12);
        assert!((g.phi_prime_inf() - 2.0f64.sqrt()).abs() < 1e-14);
        // R in circle coordinates: (|w|^2 - 1)/2 - log|w|.
        let w = C64::from_polar(1.2, 0.3);
        let expect = (1.44 - 1.0) / 2.0 - 1.2f64.ln();
        assert!((g.r_circle(w) - expect).abs() < 1e-12);
        assert!(g.r_circle(C64::from_polar(1.0, 2.0)).abs() < 1e-14);
    }

    #[test]
    fn elliptic_geometry_matches_interface() {
        let g = build_droplet(&Family::Elliptic { t: 0.2 }).unwrap();
        // validate() already checks Re scrQ = Q and |phi| = 1 on samples;
        // spot-check R >= 0 near the circle and = 0 on it.
        for i in 0..32 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 32.0;
            assert!(g.r_circle(C64::from_polar(1.0, th)).abs() < 1e-13);
            assert!(g.r_circle(C64::from_polar(1.1, th)) > 0.0);
            assert!(g.r_circle(C64::from_polar(0.9, th)) > 0.0);
        }
        // t beyond the Jordan bound is rejected.
        assert!(build_droplet(&Family::Elliptic { t: 0.35 }).is_err());
        // t = 0 degenerates to the radial family.
        let g0 = build_droplet(&Family::Elliptic { t: 0.0 }).unwrap();
        assert!((g0.phi_prime_inf() - 2.0f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn c_constant_examples() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        // c_m = 2^{-(m+1)/2} e^{-m/2}
        for m in [0u32, 1, 4, 16] {
            let expect = 2.0f64.powf(-((m + 1) as f64) / 2.0) * (-(m as f64) / 2.0).exp();
            assert!((c_constant(&g, m, m) - expect).abs() < 1e-14 * expect);
        }
        assert!((c_constant(&g, 0, 0) - 1.0 / 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn polarize_recovers_monomials_and_constants() {
        let f = polarize(|z, wb| z * wb, 8, 0.2).unwrap();
        assert!((f.get(1, 1) - C64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(f.coeff_l1() - 1.0 < 1e-10);
        let c = polarize(|_, _| C64::new(2.5, -0.5), 8, 0.2).unwrap();
        assert!((c.get(0, 0) - C64::new(2.5, -0.5)).norm() < 1e-12);
    }

    #[test]
    fn polarize_rejects_insufficient_degree() {
        // A function with modes beyond N = 4 cannot be reconstructed.
        let r = polarize(|z, _| z.powi(7), 4, 0.2);
        assert!(matches!(r, Err(Error::InsufficientDegree { .. })));
    }

    #[test]
    fn reciprocal_exterior_inverts() {
        let mut f = CircleSeries::zeros(6, 0.2);
        f.set(0, C64::new(2.0, 0.0));
        f.set(-1, C64::new(0.3, -0.1));
        f.set(-3, C64::new(-0.2, 0.05));
        let g = reciprocal_exterior(&f).unwrap();
        let prod = f.multiply(&g);
        assert!((prod.get(0) - C64::new(1.0, 0.0)).norm() < 1e-12);
        for d in -(2 * 6 as i64)..0 {
            // truncation tail only at the deepest modes
            if d > -10 {
                assert!(prod.get(d).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn radial_model_constants() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let model = PotentialModel::build(g, 24, 0.2).unwrap();
        // ΔR = 1/2 on the circle.
        let lap = model.laplacian_r_circle.eval(C64::new(1.0, 0.0));
        assert!((lap.re - 0.5).abs() < 1e-12);
        // H_R = (2 pi)^{-1/4}, a1 = (2 pi)^{1/4}, to 12 digits.
        let hr = model.h_r.get(0).re;
        let expect_hr = (2.0 * std::f64::consts::PI).powf(-0.25);
        assert!((hr - expect_hr).abs() < 1e-12);
        assert!((model.a1 - 1.0 / expect_hr).abs() < 1e-12);
        // S(1) = 1/4 (Taylor expansion of (q-1)/2 - log(q)/2 at q = 1).
        let s1 = model.s.restrict_circle().eval(C64::new(1.0, 0.0));
        assert!((s1.re - 0.25).abs() < 1e-8);
        // Rhat on the diagonal matches sign(r-1) sqrt(R).
        for &r in &[0.9f64, 1.1] {
            let z = C64::new(r, 0.0);
            let rv = model.geometry.r_circle(z);
            let rhat = model.rhat.restrict_diagonal(z).re;
            let expect = (r - 1.0).signum() * rv.sqrt();
            assert!((rhat - expect).abs() < 1e-8);
        }
        // B0 is finite on the working annulus.
        assert!(model.b0.sup_norm(0.1).is_finite());
    }

    #[test]
    fn elliptic_model_builds_and_checks() {
        let g = build_droplet(&Family::Elliptic { t: 0.2 }).unwrap();
        let model = PotentialModel::build(g, 32, 0.2).unwrap();
        // Nonconstant positive Laplacian with positive mean.
        let mean = model.laplacian_r_circle.get(0);
        assert!(mean.re > 0.0);
        let spread = model.laplacian_r_circle.coeff_l1() - mean.norm();
        assert!(spread > 1e-3, "elliptic ΔR should be nonconstant");
        // Boundary Laplacian agrees with direct second differences of the
        // closed-form R (independent oracle for the series pipeline).
        let h = 1e-4;
        for i in 0..8 {
            let th = 2.0 * std::f64::consts::PI * i as f64 / 8.0;
            let w = C64::from_polar(1.0, th);
            // Δ = (1/4)(d_rr + r^{-1} d_r + r^{-2} d_theta-theta) of R, via
            // 5-point stencils in polar coordinates.
            let f = |r: f64, t: f64| model.geometry.r_circle(C64::from_polar(r, t));
            let d_rr = (f(1.0 + h, th) - 2.0 * f(1.0, th) + f(1.0 - h, th)) / (h * h);
            let d_r = (f(1.0 + h, th) - f(1.0 - h, th)) / (2.0 * h);
            let d_tt = (f(1.0, th + h) - 2.0 * f(1.0, th) + f(1.0, th - h)) / (h * h);
            let lap_direct = 0.25 * (d_rr + d_r + d_tt);
            let lap_series = model.laplacian_r_circle.eval(w).re;
            assert!(
                (lap_direct - lap_series).abs() < 1e-5 * lap_series.max(1.0),
                "Laplacian mismatch at angle {th}: {lap_direct} vs {lap_series}"
            );
        }
    }

    #[test]
    fn cutoff_shape() {
        let c = Cutoffs::new(0.2).unwrap();
        assert_eq!(c.chi01(c.rho1 - 0.01), 0.0);
        assert_eq!(c.chi01(c.rho2 + 0.01), 1.0);
        assert_eq!(c.chi01(5.0), 1.0);
        assert_eq!(c.chi00(1.0), 1.0);
        assert_eq!(c.chi00(1.0 / c.rho1 + 0.1), 0.0);
        // smooth in between
        let mid = 0.5 * (c.rho1 + c.rho2);
        assert!(c.chi01(mid) > 0.0 && c.chi01(mid) < 1.0);
    }
}
