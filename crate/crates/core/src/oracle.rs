//! Ground truth by brute force: extended-precision moment matrices and monic
//! orthogonal polynomials for the inner product
//! `<f, g> = (1/pi) int f conj(g) e^{-2mQ} dxdy`, the Cauchy potential of a
//! polynomial, and comparison of the asymptotic approximation against the
//! exact polynomial over the near-boundary region where the expansion is
//! supposed to hold.
//!
//! All heavy arithmetic runs on software floats (`rug::Float`) with a
//! configurable precision, default 256 bits; complex values are plain
//! re/im pairs on top of that. Precision escalation doubles the working
//! precision up to a cap and reports failure honestly.

use crate::polar_series::CircleSeries;
use crate::potential::{c_constant, Cutoffs, DropletGeometry, PotentialModel};
use crate::{C64, Error, Result};
use rug::float::Constant;
use rug::Float;

const TAU: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// software complex numbers

#[derive(Clone, Debug)]
struct Cx {
    re: Float,
    im: Float,
}

impl Cx {
    fn zero(prec: u32) -> Self {
        Cx { re: Float::new(prec), im: Float::new(prec) }
    }

    fn prec(&self) -> u32 {
        self.re.prec()
    }

    fn add_assign(&mut self, o: &Cx) {
        self.re += &o.re;
        self.im += &o.im;
    }

    fn sub(&self, o: &Cx) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, &self.re - &o.re),
            im: Float::with_val(p, &self.im - &o.im),
        }
    }

    fn mul(&self, o: &Cx) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, &self.re * &o.re) - Float::with_val(p, &self.im * &o.im),
            im: Float::with_val(p, &self.re * &o.im) + Float::with_val(p, &self.im * &o.re),
        }
    }

    fn mul_f(&self, f: &Float) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, &self.re * f),
            im: Float::with_val(p, &self.im * f),
        }
    }

    fn conj(&self) -> Cx {
        let p = self.prec();
        Cx { re: self.re.clone(), im: Float::with_val(p, -&self.im) }
    }

    fn norm_sqr(&self) -> Float {
        let p = self.prec();
        Float::with_val(p, self.re.clone().square() + self.im.clone().square())
    }

    fn div_f(&self, f: &Float) -> Cx {
        let p = self.prec();
        Cx {
            re: Float::with_val(p, &self.re / f),
            im: Float::with_val(p, &self.im / f),
        }
    }

    fn to_c64(&self) -> C64 {
        C64::new(self.re.to_f64(), self.im.to_f64())
    }

    fn abs(&self) -> Float {
        self.norm_sqr().sqrt()
    }
}

// ---------------------------------------------------------------------------
// quadrature

/// Composite Gauss–Legendre in the radius and uniform trapezoid in the
/// angle, sized so the weighted-moment integrands are resolved below
/// `2^{-precision/2}` relative.
pub struct QuadratureScheme {
    /// Radial nodes on `(0, r_max)`, ascending.
    nodes: Vec<Float>,
    /// Matching Gauss–Legendre weights (plain `dr` weights; the `2r` of the
    /// area measure is applied by the integrators).
    weights: Vec<Float>,
    /// Angular node count (uniform grid, trapezoid = plain average).
    pub n_angle: usize,
    /// Radial truncation radius.
    pub r_max: f64,
    /// Working precision in bits.
    pub precision: u32,
}

/// Reference Gauss–Legendre nodes/weights on `[-1, 1]` by Newton iteration
/// on the Legendre recurrence.
fn gauss_legendre(np: usize, prec: u32) -> (Vec<Float>, Vec<Float>) {
    let legendre = |x: &Float| -> (Float, Float) {
        let p = x.prec();
        let mut p0 = Float::with_val(p, 1);
        let mut p1 = x.clone();
        for k in 2..=np {
            let pk = (Float::with_val(p, (2 * k - 1) as f64 * x) * &p1
                - Float::with_val(p, (k - 1) as f64 * &p0))
                / Float::with_val(p, k as f64);
            p0 = p1;
            p1 = pk;
        }
        // derivative: n (x p_n - p_{n-1}) / (x^2 - 1)
        let dp = Float::with_val(p, np as f64)
            * (Float::with_val(p, x * &p1) - &p0)
            / (Float::with_val(p, x * x) - 1.0f64);
        (p1, dp)
    };
    let mut nodes = Vec::with_capacity(np);
    let mut weights = Vec::with_capacity(np);
    for i in 0..np {
        let guess = (std::f64::consts::PI * (i as f64 + 0.75) / (np as f64 + 0.5)).cos();
        let mut x = Float::with_val(prec, guess);
        for _ in 0..12 {
            let (pv, dp) = legendre(&x);
            x -= pv / dp;
        }
        let (_, dp) = legendre(&x);
        let w = Float::with_val(prec, 2.0)
            / ((Float::with_val(prec, 1.0) - Float::with_val(prec, &x * &x))
                * dp.square());
        nodes.push(x);
        weights.push(w);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

const GL_POINTS_PER_PANEL: usize = 32;

impl QuadratureScheme {
    /// Size the scheme for moments up to degree `n_deg` of the weight
    /// `e^{-2mQ}`: the truncation radius is found by a 1-D search on the
    /// `(1 + r^2)^n` majorant of the integrand, and the panel count tracks
    /// the `1/sqrt(4m + 2n)` concentration scale of the weighted moments.
    pub fn build(geometry: &DropletGeometry, m: u32, n_deg: usize, precision: u32) -> Result<Self> {
        let r_max = Self::truncation_radius(geometry, m, n_deg, precision)?;
        let bw = ((4 * m as usize + 2 * n_deg) as f64).sqrt();
        let panels = (r_max * bw * (0.35 + precision as f64 / 700.0)).ceil() as usize;
        Self::with_panels(geometry, m, n_deg, precision, panels.max(6))
    }

    /// Same, with the radial panel count forced (used by the
    /// quadrature-doubling stability checks).
    pub fn with_panels(
        geometry: &DropletGeometry,
        m: u32,
        n_deg: usize,
        precision: u32,
        panels: usize,
    ) -> Result<Self> {
        let r_max = Self::truncation_radius(geometry, m, n_deg, precision)?;
        let (xs, ws) = gauss_legendre(GL_POINTS_PER_PANEL, precision);
        // panel geometry in working precision: the panels must tile the
        // interval exactly, not just to f64 roundoff
        let h = Float::with_val(precision, r_max) / Float::with_val(precision, panels as f64);
        let mut nodes = Vec::with_capacity(panels * GL_POINTS_PER_PANEL);
        let mut weights = Vec::with_capacity(panels * GL_POINTS_PER_PANEL);
        for p in 0..panels {
            let mid = Float::with_val(precision, &h * Float::with_val(precision, p as f64 + 0.5));
            let half = Float::with_val(precision, &h / Float::with_val(precision, 2));
            for (x, w) in xs.iter().zip(&ws) {
                nodes.push(Float::with_val(precision, &mid + Float::with_val(precision, x * &half)));
                weights.push(Float::with_val(precision, w * &half));
            }
        }
        let n_angle = (4 * n_deg + 8 * m as usize).max(256).next_power_of_two();
        Ok(QuadratureScheme { nodes, weights, n_angle, r_max, precision, })
    }

    /// Truncation radius: smallest `r` past which the tail majorant
    /// `(1+r^2)^n e^{-2m min_theta Q}` stays below `2^{-precision/2}` with a
    /// generous guard.
    fn truncation_radius(
        geometry: &DropletGeometry,
        m: u32,
        n_deg: usize,
        precision: u32,
    ) -> Result<f64> {
        let q_min = |r: f64| -> f64 {
            (0..128)
                .map(|a| geometry.q_value(C64::from_polar(r, TAU * a as f64 / 128.0)))
                .fold(f64::INFINITY, f64::min)
        };
        let target = (0.5 * precision as f64 + 60.0) * std::f64::consts::LN_2;
        let margin = |r: f64| {
            2.0 * m as f64 * q_min(r) - n_deg as f64 * (1.0 + r * r).ln() - (1.0 + r).ln()
        };
        let mut r = 0.5;
        while r < 64.0 {
            if margin(r) >= target && margin(1.25 * r) >= target && margin(2.0 * r) >= target {
                return Ok(r);
            }
            r += 0.125;
        }
        Err(Error::Domain(
            "weight tail does not decay within the search radius; the potential grows too slowly"
                .to_string(),
        ))
    }

    pub fn n_radial(&self) -> usize {
        self.nodes.len()
    }

    /// f64 snapshot of the radial rule, for the double-precision integrators.
    pub fn radial_f64(&self) -> Vec<(f64, f64)> {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(n, w)| (n.to_f64(), w.to_f64()))
            .collect()
    }
}

/// Fixed-order pairwise (tree) reduction: deterministic and cancellation-
/// friendly regardless of how the terms were produced.
pub fn pairwise_sum(v: &mut Vec<f64>) -> f64 {
    while v.len() > 1 {
        let half = v.len().div_ceil(2);
        for i in 0..v.len() / 2 {
            v[i] = v[2 * i] + v[2 * i + 1];
        }
        if v.len() % 2 == 1 {
            v[half - 1] = v[v.len() - 1];
        }
        v.truncate(half);
    }
    v.first().copied().unwrap_or(0.0)
}

// ---------------------------------------------------------------------------
// moment matrix

/// Hermitian positive-definite Gram matrix `G_{jk} = <z^j, z^k>` of the
/// monomials, stored in extended precision.
pub struct MomentMatrix {
    n_deg: usize,
    precision: u32,
    g: Vec<Cx>,
}

impl MomentMatrix {
    pub fn dim(&self) -> usize {
        self.n_deg + 1
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    fn at(&self, j: usize, k: usize) -> &Cx {
        &self.g[j * (self.n_deg + 1) + k]
    }

    pub fn entry(&self, j: usize, k: usize) -> C64 {
        self.at(j, k).to_c64()
    }

    /// Relative change against another matrix of the same shape, entrywise,
    /// measured on the `sqrt(G_jj G_kk)` scale of each entry.
    pub fn relative_distance(&self, other: &MomentMatrix) -> f64 {
        assert_eq!(self.n_deg, other.n_deg);
        let mut worst = 0.0f64;
        for j in 0..=self.n_deg {
            for k in 0..=self.n_deg {
                let scale = (self.at(j, j).re.to_f64() * self.at(k, k).re.to_f64()).sqrt();
                let d = self.at(j, k).sub(other.at(j, k)).abs().to_f64();
                worst = worst.max(d / scale);
            }
        }
        worst
    }
}

/// `G_{jk} = (1/pi) int z^j conj(z)^k e^{-2mQ} dxdy` over the truncated
/// plane. Radial direction by the scheme's Gauss–Legendre rule (with the
/// `2r` of the normalized area measure), angular direction by uniform
/// sampling folded into Fourier coefficients of the weight: since
/// `z^j conj(z)^k = r^{j+k} e^{i(j-k)theta}`, only the angular modes
/// `|d| <= n` of `e^{-2mQ(r e^{i theta})}` enter.
pub fn moment_matrix(
    geometry: &DropletGeometry,
    m: u32,
    n_deg: usize,
    quad: &QuadratureScheme,
) -> Result<MomentMatrix> {
    let p = quad.precision;
    let na = quad.n_angle;
    let dim = n_deg + 1;
    // big trig table: e^{i 2 pi k / na} for k mod na
    let pi = Float::with_val(p, Constant::Pi);
    let (cos_t, sin_t): (Vec<Float>, Vec<Float>) = (0..na)
        .map(|k| {
            let th = Float::with_val(p, 2 * k as u32) * &pi / Float::with_val(p, na as f64);
            (Float::with_val(p, th.cos_ref()), Float::with_val(p, th.sin_ref()))
        })
        .unzip();
    let q_terms = geometry.q_terms();
    let two_m = Float::with_val(p, 2 * m);

    let mut g = vec![Cx::zero(p); dim * dim];
    let mut w_ang = vec![Float::new(p); na];
    for (r, wr) in quad.nodes.iter().zip(&quad.weights) {
        // powers of r up to 2n (reused by every entry) and for the Q terms
        let deg_needed = q_terms
            .iter()
            .map(|&(j, k, _)| (j + k) as usize)
            .max()
            .unwrap_or(0)
            .max(2 * n_deg);
        let mut r_pow = Vec::with_capacity(deg_needed + 1);
        r_pow.push(Float::with_val(p, 1));
        for i in 1..=deg_needed {
            r_pow.push(Float::with_val(p, &r_pow[i - 1] * r));
        }
        // weight samples e^{-2mQ} on the angular grid
        for (a, w) in w_ang.iter_mut().enumerate() {
            let mut q = Float::new(p);
            for &(j, k, c) in q_terms {
                let idx = ((j - k) * a as i64).rem_euclid(na as i64) as usize;
                q += Float::with_val(p, &r_pow[(j + k) as usize] * &cos_t[idx])
                    * Float::with_val(p, c);
            }
            *w = Float::with_val(p, (-Float::with_val(p, &q * &two_m)).exp_ref());
        }
        // angular Fourier modes c_d = (1/na) sum_a w_a e^{i d theta_a},
        // d >= 0 (the weight is real, so c_{-d} = conj(c_d))
        let mut modes = Vec::with_capacity(n_deg + 1);
        for d in 0..=n_deg {
            let mut acc = Cx::zero(p);
            for (a, w) in w_ang.iter().enumerate() {
                let idx = (d * a).rem_euclid(na);
                acc.re += Float::with_val(p, w * &cos_t[idx]);
                acc.im += Float::with_val(p, w * &sin_t[idx]);
            }
            acc.re /= Float::with_val(p, na as f64);
            acc.im /= Float::with_val(p, na as f64);
            modes.push(acc);
        }
        // fold into the matrix: radial weight 2 r w_r
        let rad = Float::with_val(p, Float::with_val(p, 2 * r) * wr);
        for j in 0..dim {
            for k in 0..=j {
                let c = modes[j - k].mul_f(&Float::with_val(p, &rad * &r_pow[j + k]));
                g[j * dim + k].add_assign(&c);
            }
        }
    }
    // Hermitian completion (exact by construction)
    for j in 0..dim {
        for k in (j + 1)..dim {
            g[j * dim + k] = g[k * dim + j].conj();
        }
    }
    Ok(MomentMatrix { n_deg, precision: p, g })
}

// ---------------------------------------------------------------------------
// orthogonal polynomial

/// The exact monic orthogonal polynomial and its certificate numbers.
pub struct OracleResult {
    pub m: u32,
    pub n: usize,
    pub precision_bits: u32,
    /// Monic coefficients, ascending degree (extended precision).
    coeffs_hi: Vec<Cx>,
    /// f64 snapshot of the coefficients.
    pub coeffs: Vec<C64>,
    /// `||P_n||_{mQ}`.
    pub norm: f64,
    /// `max_{j<n} |<z^j, P>| / (||z^j|| ||P||)`.
    pub orth_residual: f64,
    /// Ratio of extreme Cholesky pivots (crude condition estimate).
    pub cond_estimate: f64,
}

impl OracleResult {
    /// Evaluate `P(z)` by Horner in extended precision, returned as f64.
    pub fn eval(&self, z: C64) -> C64 {
        let p = self.precision_bits;
        let zz = Cx { re: Float::with_val(p, z.re), im: Float::with_val(p, z.im) };
        let mut acc = Cx::zero(p);
        for c in self.coeffs_hi.iter().rev() {
            acc = acc.mul(&zz);
            acc.add_assign(c);
        }
        acc.to_c64()
    }
}

/// In-place Cholesky `A = L L^H` of the leading `n x n` block; returns the
/// pivots. Fails (precision escalation request) on a non-positive pivot.
fn cholesky(a: &mut [Cx], dim: usize, n: usize) -> Result<Vec<Float>> {
    let mut pivots = Vec::with_capacity(n);
    for j in 0..n {
        let mut d = a[j * dim + j].re.clone();
        for k in 0..j {
            d -= a[j * dim + k].norm_sqr();
        }
        if d <= 0 {
            return Err(Error::Precision(format!(
                "moment matrix lost positive definiteness at pivot {j}"
            )));
        }
        let l = d.sqrt();
        pivots.push(l.clone());
        for i in (j + 1)..n {
            let mut s = a[i * dim + j].clone();
            for k in 0..j {
                let t = a[i * dim + k].mul(&a[j * dim + k].conj());
                s = s.sub(&t);
            }
            a[i * dim + j] = s.div_f(&l);
        }
    }
    Ok(pivots)
}

/// Monic orthogonal polynomial of degree `n` from the Gram matrix: solve
/// the `n x n` Hermitian system `G[0..n][0..n] x = -G[0..n][n]` (conjugated
/// to coefficient form) via Cholesky, append the leading 1, and certify
/// the orthogonality residual against `2^{-precision/4}`.
pub fn monic_orthogonal_polynomial(
    matrix: &MomentMatrix,
    m: u32,
    n: usize,
) -> Result<OracleResult> {
    assert!(n <= matrix.n_deg, "matrix too small for degree {n}");
    let p = matrix.precision;
    if n == 0 {
        let one = Cx { re: Float::with_val(p, 1), im: Float::new(p) };
        let norm = matrix.at(0, 0).re.to_f64().sqrt();
        return Ok(OracleResult {
            m,
            n,
            precision_bits: p,
            coeffs_hi: vec![one],
            coeffs: vec![C64::new(1.0, 0.0)],
            norm,
            orth_residual: 0.0,
            cond_estimate: 1.0,
        });
    }
    // Orthogonality <z^j, P> = 0 for j < n reads
    // sum_k G_{jk} conj(c_k) = -G_{jn}; substitute conj(c) = -y and solve
    // the Hermitian system G y = G_{.n} by Cholesky, then map back.
    let mut a: Vec<Cx> = (0..n)
        .flat_map(|j| (0..n).map(move |k| matrix.at(j, k).clone()))
        .collect();
    let rhs: Vec<Cx> = (0..n).map(|j| matrix.at(j, n).clone()).collect();
    let pivots = cholesky(&mut a, n, n)?;
    // forward: L y = rhs
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut s = rhs[i].clone();
        for k in 0..i {
            let t = a[i * n + k].mul(&y[k]);
            s = s.sub(&t);
        }
        y.push(s.div_f(&pivots[i]));
    }
    // backward: L^H x = y
    let mut x = vec![Cx::zero(p); n];
    for i in (0..n).rev() {
        let mut s = y[i].clone();
        for k in (i + 1)..n {
            let t = a[k * n + i].conj().mul(&x[k]);
            s = s.sub(&t);
        }
        x[i] = s.div_f(&pivots[i]);
    }
    // c = -conj(y)
    let mut coeffs_hi: Vec<Cx> = x
        .iter()
        .map(|c| Cx {
            re: Float::with_val(p, -&c.re),
            im: c.im.clone(),
        })
        .collect();
    coeffs_hi.push(Cx { re: Float::with_val(p, 1), im: Float::new(p) });

    // certificates
    let norm_sq = {
        let mut s = Float::new(p);
        for j in 0..=n {
            let mut row = Cx::zero(p);
            for k in 0..=n {
                let t = matrix.at(j, k).mul(&coeffs_hi[k].conj());
                row.add_assign(&t);
            }
            // sum_j c_j * row_j is real for Hermitian G
            s += Float::with_val(p, &coeffs_hi[j].re * &row.re)
                - Float::with_val(p, &coeffs_hi[j].im * &row.im);
        }
        s
    };
    if norm_sq <= 0 {
        return Err(Error::Precision("computed norm is not positive".to_string()));
    }
    let norm_big = norm_sq.clone().sqrt();
    let mut orth_residual = 0.0f64;
    for j in 0..n {
        let mut ip = Cx::zero(p);
        for k in 0..=n {
            let t = matrix.at(j, k).mul(&coeffs_hi[k].conj());
            ip.add_assign(&t);
        }
        let scale = Float::with_val(p, matrix.at(j, j).re.clone().sqrt() * &norm_big);
        orth_residual = orth_residual.max((ip.abs() / scale).to_f64());
    }
    let tol = 2.0f64.powf(-(p as f64) / 4.0);
    if orth_residual > tol {
        return Err(Error::Precision(format!(
            "orthogonality residual {orth_residual:.3e} exceeds 2^-prec/4 = {tol:.3e}"
        )));
    }
    let cond_estimate = {
        let mx = pivots.iter().cloned().fold(Float::new(p), |a, b| a.max(&b));
        let mn = pivots.iter().skip(1).fold(pivots[0].clone(), |a, b| a.min(b));
        (mx / mn).to_f64().powi(2)
    };
    Ok(OracleResult {
        m,
        n,
        precision_bits: p,
        coeffs: coeffs_hi.iter().map(Cx::to_c64).collect(),
        coeffs_hi,
        norm: norm_big.to_f64(),
        orth_residual,
        cond_estimate,
    })
}

/// End-to-end oracle with precision escalation: build the quadrature and
/// Gram matrix at `precision` bits, solve, and on any breakdown double the
/// precision (up to 2048 bits) before giving up.
pub fn oracle_polynomial(
    geometry: &DropletGeometry,
    m: u32,
    n: usize,
    precision: u32,
) -> Result<(QuadratureScheme, MomentMatrix, OracleResult)> {
    let mut bits = precision;
    loop {
        let quad = QuadratureScheme::build(geometry, m, n, bits)?;
        let matrix = moment_matrix(geometry, m, n, &quad)?;
        match monic_orthogonal_polynomial(&matrix, m, n) {
            Ok(result) => return Ok((quad, matrix, result)),
            Err(Error::Precision(why)) => {
                if bits >= 2048 {
                    return Err(Error::Precision(format!(
                        "still failing at the 2048-bit cap: {why}"
                    )));
                }
                bits *= 2;
            }
            Err(e) => return Err(e),
        }
    }
}

// ---------------------------------------------------------------------------
// Cauchy potential

/// `Psi(z) = (1/pi) int conj(P(xi)) e^{-2mQ(xi)} / (z - xi) dxdy(xi)` by
/// double-precision quadrature on the scheme's grid. Near-grid evaluation
/// points get a locally subdivided patch; points inside the innermost cells
/// are rejected.
pub fn cauchy_potential(
    geometry: &DropletGeometry,
    m: u32,
    coeffs: &[C64],
    z: C64,
    quad: &QuadratureScheme,
) -> Result<C64> {
    let radial = quad.radial_f64();
    let na = quad.n_angle;
    let horner = |xi: C64| -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in coeffs.iter().rev() {
            acc = acc * xi + c;
        }
        acc
    };
    // cell size estimate near the evaluation point
    let cell_r = quad.r_max / quad.n_radial() as f64;
    let cell_a = TAU / na as f64 * z.norm().max(cell_r);
    let guard = 3.0 * cell_r.max(cell_a);
    let near = |xi: C64| (z - xi).norm() < guard;
    if z.norm() < 2.0 * cell_r {
        return Err(Error::Domain(
            "evaluation point sits inside the innermost quadrature cells".to_string(),
        ));
    }
    let mut re_terms = Vec::with_capacity(radial.len() * 2);
    let mut im_terms = Vec::with_capacity(radial.len() * 2);
    let mut patch = C64::new(0.0, 0.0);
    for (ri, &(r, wr)) in radial.iter().enumerate() {
        let mut row = C64::new(0.0, 0.0);
        for a in 0..na {
            let xi = C64::from_polar(r, TAU * a as f64 / na as f64);
            let weight = (-2.0 * m as f64 * geometry.q_value(xi)).exp();
            if weight == 0.0 {
                continue;
            }
            if near(xi) {
                // refine this cell on an 8x8 midpoint subgrid
                let r_lo = if ri == 0 { 0.0 } else { 0.5 * (r + radial[ri - 1].0) };
                let r_hi = if ri + 1 == radial.len() {
                    quad.r_max
                } else {
                    0.5 * (r + radial[ri + 1].0)
                };
                let th0 = TAU * (a as f64 - 0.5) / na as f64;
                let dth = TAU / na as f64;
                for i in 0..8 {
                    for k in 0..8 {
                        let rr = r_lo + (r_hi - r_lo) * (i as f64 + 0.5) / 8.0;
                        let tt = th0 + dth * (k as f64 + 0.5) / 8.0;
                        let s = C64::from_polar(rr, tt);
                        if (z - s).norm() < 1e-12 {
                            return Err(Error::Domain(
                                "evaluation point coincides with a quadrature node".to_string(),
                            ));
                        }
                        let wg = (-2.0 * m as f64 * geometry.q_value(s)).exp();
                        patch += horner(s).conj() * wg / (z - s)
                            * (2.0 * rr * (r_hi - r_lo) / 8.0 / na as f64 / 8.0 / wr.max(1e-300))
                            * wr;
                    }
                }
                continue;
            }
            row += horner(xi).conj() * weight / (z - xi);
        }
        let v = row * (2.0 * r * wr / na as f64);
        re_terms.push(v.re);
        im_terms.push(v.im);
    }
    let base = C64::new(pairwise_sum(&mut re_terms), pairwise_sum(&mut im_terms));
    Ok(base + patch)
}

/// Moments of the Cauchy potential at infinity:
/// coefficient of `z^{-k-1}` is `<., z^k>`-paired with `P`, i.e.
/// `t_k = sum_j conj(a_j) G_{kj}`; they vanish for `k < n` exactly when `P`
/// is orthogonal to all lower degrees. Returned normalized by
/// `sqrt(G_kk) ||P||` so "vanishing" is scale-free.
pub fn psi_moments(matrix: &MomentMatrix, result: &OracleResult, k_max: usize) -> Vec<f64> {
    assert!(k_max <= matrix.n_deg);
    let p = matrix.precision;
    let norm = Float::with_val(p, result.norm);
    (0..=k_max)
        .map(|k| {
            let mut t = Cx::zero(p);
            for (j, a) in result.coeffs_hi.iter().enumerate() {
                let term = a.conj().mul(matrix.at(k, j));
                t.add_assign(&term);
            }
            let scale = Float::with_val(p, matrix.at(k, k).re.clone().sqrt() * &norm);
            (t.abs() / scale).to_f64()
        })
        .collect()
}

/// Raw (unnormalized) moments for a caller-supplied coefficient vector, used
/// by the perturbation-sensitivity checks.
pub fn psi_moments_of(matrix: &MomentMatrix, coeffs: &[C64], k_max: usize) -> Vec<C64> {
    let p = matrix.precision;
    (0..=k_max)
        .map(|k| {
            let mut t = Cx::zero(p);
            for (j, a) in coeffs.iter().enumerate() {
                let ac = Cx { re: Float::with_val(p, a.re), im: Float::with_val(p, -a.im) };
                let term = ac.mul(matrix.at(k, j));
                t.add_assign(&term);
            }
            t.to_c64()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// comparison region and report

/// Sample set of the near-boundary comparison region in circle coordinates:
/// points `w` with `R(w) <= eps / (2 sqrt(m))` inside the circle (band of
/// width ~ m^{-1/4}) together with an exterior collar, all with
/// `|w| > rho(sigma0)`.
pub fn dm_region(model: &PotentialModel, m: u32, epsilon: f64) -> Vec<C64> {
    let cut = Cutoffs::new(model.sigma0).expect("valid sigma0");
    let threshold = 0.5 * epsilon / (m as f64).sqrt();
    let n_angle = 48;
    let mut points = Vec::new();
    for a in 0..n_angle {
        let th = TAU * a as f64 / n_angle as f64;
        // innermost admissible radius on this ray by bisection:
        // R decreases to 0 as r -> 1 from below
        let mut lo = cut.rho2 * (1.0 + 1e-9);
        let mut hi = 1.0;
        if model.geometry.r_circle(C64::from_polar(lo, th)) <= threshold {
            // whole collar is inside the band
            hi = lo;
        } else {
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if model.geometry.r_circle(C64::from_polar(mid, th)) > threshold {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let r_min = hi;
        for i in 0..6 {
            let r = r_min + (1.0 - r_min) * i as f64 / 6.0;
            points.push(C64::from_polar(r, th));
        }
        for i in 0..=5 {
            let r = 1.0 + 0.25 * i as f64 / 5.0;
            points.push(C64::from_polar(r, th));
        }
    }
    points
}

#[derive(Debug, Clone)]
pub struct SampleRow {
    pub z: C64,
    pub p_abs: f64,
    pub p_approx_abs: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub m: u32,
    pub n: usize,
    /// Sup over the comparison region of `|P - P~| / (c_m |phi|^m e^{m Re scrQ})`.
    pub sup_defect_dm: f64,
    /// `sqrt(m) c_m^{-2} ||chi_{1,1} P~||^2 / a1^2` (tends to 1).
    pub norm_ratio: f64,
    /// `||P - chi_{1,1} P~||_{mQ}`.
    pub l2_defect: f64,
    pub samples: Vec<SampleRow>,
}

/// `sqrt(m) c_m^{-2} ||chi_{1,1} P~||^2_{mQ} / a1^2` by double-precision
/// quadrature in circle coordinates, where the conformal Jacobians cancel:
/// the integrand is `chi^2 e^{-2mR(w)} |F(w)|^2`.
pub fn norm_ratio(model: &PotentialModel, f_approx: &CircleSeries, m: u32) -> f64 {
    let cut = Cutoffs::new(model.sigma0).expect("valid sigma0");
    // outer cutoff radius: e^{-2mR} below 1e-40 ends the integral
    let mut r_out = 1.05;
    while 2.0 * m as f64 * model.geometry.r_circle(C64::new(r_out, 0.0)) < 92.0 && r_out < 8.0 {
        r_out += 0.05;
    }
    let n_r = 3000usize;
    let n_a = 512usize;
    let h = (r_out - cut.rho1) / n_r as f64;
    let mut terms = Vec::with_capacity(n_r + 1);
    for i in 0..=n_r {
        let r = cut.rho1 + i as f64 * h;
        let chi = cut.chi01_sq(r);
        let simpson = if i == 0 || i == n_r {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        if chi == 0.0 {
            terms.push(0.0);
            continue;
        }
        let mut ang = Vec::with_capacity(n_a);
        for a in 0..n_a {
            let w = C64::from_polar(r, TAU * a as f64 / n_a as f64);
            let rr = model.geometry.r_circle(w);
            let f = f_approx.eval(w);
            ang.push((-2.0 * m as f64 * rr).exp() * f.norm_sqr());
        }
        let avg = pairwise_sum(&mut ang) / n_a as f64;
        terms.push(simpson * chi * chi * 2.0 * r * avg * h / 3.0);
    }
    let integral = pairwise_sum(&mut terms);
    (m as f64).sqrt() * integral / (model.a1 * model.a1)
}

/// Full comparison of the exact polynomial against the approximation:
/// F-scale sup defect over the comparison region, the norm ratio, and the
/// weighted L2 distance, plus the per-sample table for the report CSV.
pub fn compare(
    model: &PotentialModel,
    f_approx: &CircleSeries,
    oracle: &OracleResult,
    quad: &QuadratureScheme,
    epsilon: f64,
) -> Result<ComparisonReport> {
    let m = oracle.m;
    let cm = c_constant(&model.geometry, m, m);
    let log_cm = cm.ln();
    let region = dm_region(model, m, epsilon);
    let mut sup_defect = 0.0f64;
    let mut samples = Vec::with_capacity(region.len());
    for &w in &region {
        let z = model.geometry.varphi(w);
        let p_exact = oracle.eval(z);
        let p_approx = p_approx_at(model, f_approx, m, w, z);
        // F-scale normalization, in logs to dodge overflow
        let denom =
            (log_cm + m as f64 * (w.norm().ln() + model.geometry.scrq_circle(w).re)).exp();
        let rel = (p_exact - p_approx).norm() / denom;
        sup_defect = sup_defect.max(rel);
        samples.push(SampleRow {
            z,
            p_abs: p_exact.norm(),
            p_approx_abs: p_approx.norm(),
            rel_err: rel,
        });
    }

    // L2 defect over the scheme's grid (double precision; the integrand
    // underflows to an honest 0 deep inside the droplet)
    let cut = Cutoffs::new(model.sigma0)?;
    let radial = quad.radial_f64();
    let na = quad.n_angle.min(512);
    let mut terms = Vec::with_capacity(radial.len());
    for &(r, wr) in &radial {
        let mut ang = Vec::with_capacity(na);
        for a in 0..na {
            let z = C64::from_polar(r, TAU * a as f64 / na as f64);
            let weight = (-2.0 * m as f64 * model.geometry.q_value(z)).exp();
            if weight == 0.0 {
                ang.push(0.0);
                continue;
            }
            let w = model.geometry.phi(z);
            let chi = cut.chi01_sq(w.norm());
            let p_exact = oracle.eval(z);
            let diff = if chi == 0.0 {
                p_exact
            } else {
                p_exact - p_approx_at(model, f_approx, m, w, z) * chi
            };
            ang.push(diff.norm_sqr() * weight);
        }
        terms.push(2.0 * r * wr * pairwise_sum(&mut ang) / na as f64);
    }
    let l2_defect = pairwise_sum(&mut terms).max(0.0).sqrt();

    Ok(ComparisonReport {
        m,
        n: oracle.n,
        sup_defect_dm: sup_defect,
        norm_ratio: norm_ratio(model, f_approx, m),
        l2_defect,
        samples,
    })
}

/// `P~` at a precomputed circle coordinate `w = phi(z)`, without the collar
/// guard of the public evaluator (the L2 quadrature needs the ramp shoulder
/// just inside `rho(sigma0)`, where chi is already decaying).
fn p_approx_at(model: &PotentialModel, f_approx: &CircleSeries, m: u32, w: C64, z: C64) -> C64 {
    let cm = c_constant(&model.geometry, m, m);
    let scrq = model.geometry.scrq_circle(w);
    w.powu(m) * (scrq * m as f64).exp() * model.geometry.phi_prime(z) * f_approx.eval(w) * cm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expansion::build_expansion;
    use crate::potential::{build_droplet, Family, PotentialModel};

    #[test]
    fn radial_moments_match_gamma_integrals() {
        // m = 1, Q = |z|^2: G_kk = k!/2^{k+1}, off-diagonals vanish.
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let quad = QuadratureScheme::build(&g, 1, 6, 256).unwrap();
        let mm = moment_matrix(&g, 1, 6, &quad).unwrap();
        let mut fact = 1.0f64;
        for k in 0..=6usize {
            if k > 0 {
                fact *= k as f64;
            }
            let want = fact / 2f64.powi(k as i32 + 1);
            let got = mm.entry(k, k).re;
            assert!(
                ((got - want) / want).abs() < 1e-40,
                "G_{k}{k}: got {got:.20e}, want {want:.20e}"
            );
        }
        for j in 0..=6usize {
            for k in 0..=6usize {
                if j != k {
                    assert!(mm.entry(j, k).norm() < 1e-45);
                }
                let h = (mm.entry(j, k) - mm.entry(k, j).conj()).norm();
                assert_eq!(h, 0.0, "hermitian symmetry must be exact");
            }
        }
    }

    #[test]
    fn radial_oracle_is_the_monomial() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let (_, _, result) = oracle_polynomial(&g, 8, 8, 256).unwrap();
        for j in 0..8 {
            assert!(result.coeffs[j].norm() < 1e-30, "coeff {j}: {}", result.coeffs[j]);
        }
        assert_eq!(result.coeffs[8], C64::new(1.0, 0.0));
        // ||z^m||^2 = m! / (2m)^{m+1} at n = m = 8
        let want = (40320.0f64 / 16f64.powi(9)).sqrt();
        assert!(
            ((result.norm - want) / want).abs() < 1e-10,
            "norm {:.15e} vs {want:.15e}",
            result.norm
        );
        assert!(result.orth_residual < 2f64.powf(-64.0));
    }

    #[test]
    fn quadrature_doubling_is_stable() {
        let g = build_droplet(&Family::Elliptic { t: 0.2 }).unwrap();
        let base = QuadratureScheme::build(&g, 4, 4, 256).unwrap();
        let panels = base.n_radial() / GL_POINTS_PER_PANEL;
        let fine = QuadratureScheme::with_panels(&g, 4, 4, 256, 2 * panels).unwrap();
        let a = moment_matrix(&g, 4, 4, &base).unwrap();
        let b = moment_matrix(&g, 4, 4, &fine).unwrap();
        let d = a.relative_distance(&b);
        assert!(d <= 2f64.powf(-128.0), "doubling moved entries by {d:.3e}");
    }

    #[test]
    fn cauchy_potential_decays_for_the_oracle() {
        // true OP of degree n: first n moments vanish, so |z|^{n+1} Psi stays
        // bounded along a ray
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let (quad, _, result) = oracle_polynomial(&g, 8, 4, 192).unwrap();
        let mut scaled = Vec::new();
        for &r in &[5.0f64, 10.0, 20.0] {
            let z = C64::new(r, r / 3.0);
            let psi = cauchy_potential(&g, 8, &result.coeffs, z, &quad).unwrap();
            scaled.push(z.norm().powi(5) * psi.norm());
        }
        assert!(scaled[2] < 4.0 * scaled[0] + 1e-12, "{scaled:?}");
        // P = 1, n = 0: Psi ~ mass / z
        let mass = {
            let mm = moment_matrix(&g, 8, 0, &quad).unwrap();
            mm.entry(0, 0).re
        };
        let z = C64::new(10.0, 0.0);
        let psi = cauchy_potential(&g, 8, &[C64::new(1.0, 0.0)], z, &quad).unwrap();
        assert!((psi - mass / z).norm() < 0.02 * (mass / z).norm());
    }

    #[test]
    fn moment_identity_detects_perturbation() {
        let g = build_droplet(&Family::Elliptic { t: 0.2 }).unwrap();
        let (_, mm, result) = oracle_polynomial(&g, 16, 8, 256).unwrap();
        let vanishing = psi_moments(&mm, &result, 7);
        for (k, v) in vanishing.iter().enumerate() {
            assert!(*v < 2f64.powf(-64.0), "moment {k} = {v:.3e}");
        }
        // perturb one coefficient: the moments must light up on the same
        // normalized scale on which the oracle's vanish
        let mut bad = result.coeffs.clone();
        bad[3] += C64::new(0.01, 0.0);
        let raw = psi_moments_of(&mm, &bad, 7);
        let lit = raw
            .iter()
            .enumerate()
            .map(|(k, t)| t.norm() / (mm.entry(k, k).re.sqrt() * result.norm))
            .fold(0.0f64, f64::max);
        assert!(lit > 1e-4, "perturbed moments stayed near zero (max {lit:.3e})");
    }

    #[test]
    fn dm_region_scales_like_fourth_root() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let model = PotentialModel::build(g, 16, 0.2).unwrap();
        let width = |m: u32| {
            let pts = dm_region(&model, m, 0.5);
            let r_min = pts
                .iter()
                .map(|w| w.norm())
                .fold(f64::INFINITY, f64::min);
            1.0 - r_min
        };
        let (w1, w16) = (width(100), width(1600));
        assert!(w1 > 0.0 && w16 > 0.0);
        let ratio = w1 / w16;
        assert!((1.6..2.6).contains(&ratio), "width ratio {ratio}");
        // everything outside the closed disk is in the region
        let pts = dm_region(&model, 100, 0.5);
        assert!(pts.iter().any(|w| w.norm() > 1.2));
    }

    #[test]
    fn radial_comparison_is_exact() {
        let g = build_droplet(&Family::RadialGaussian).unwrap();
        let model = PotentialModel::build(g, 16, 0.2).unwrap();
        let m = 16u32;
        let art = build_expansion(&model, m, None).unwrap();
        let (quad, _, oracle) = oracle_polynomial(&model.geometry, m, m as usize, 192).unwrap();
        let report = compare(&model, &art.f_approx, &oracle, &quad, 0.5).unwrap();
        assert!(report.sup_defect_dm < 1e-8, "sup defect {:.3e}", report.sup_defect_dm);
        assert!(
            (report.norm_ratio - 1.0).abs() < 0.15,
            "norm ratio {} at m = {m}",
            report.norm_ratio
        );
        assert!(report.l2_defect >= 0.0 && report.l2_defect.is_finite());
    }
}
