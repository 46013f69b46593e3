//! Truncated bivariate Laurent series `sum c_{jk} z^j wbar^k` on polarized
//! annular neighborhoods of the unit circle, together with the associated
//! single-Laurent restrictions to the circle.
//!
//! A [`PolarizedSeries`] stores a dense `(2N+1) x (2N+1)` coefficient block
//! for exponents `(j,k)` in `[-N,N]^2` and remembers the scale `sigma` of the
//! annulus on which it is meant to be controlled. The scale enters only
//! through norms and derivative bookkeeping; the coefficient algebra itself
//! is exact up to truncation.

use crate::{C64, Error, Result};
use std::cell::RefCell;
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Inner radius of the polarized annulus at scale `sigma`.
///
/// The closed form `rho = 1/(sigma + sqrt(1 + sigma^2))` is the unique
/// solution in `(0,1)` of `1/rho - rho = 2 sigma`.
pub fn rho_of_sigma(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Domain(format!(
            "rho_of_sigma requires sigma in (0,1), got {sigma}"
        )));
    }
    Ok(1.0 / (sigma + sigma.hypot(1.0)))
}

/// Scale parameter together with the inner radius of its annulus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnulusSpec {
    pub sigma: f64,
    pub rho: f64,
}

impl AnnulusSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        Ok(Self {
            sigma,
            rho: rho_of_sigma(sigma)?,
        })
    }

    /// Whether `z` lies in the annulus `rho <= |z| <= 1/rho`.
    pub fn contains(&self, z: C64) -> bool {
        let r = z.norm();
        r >= self.rho && r <= 1.0 / self.rho
    }
}

/// Truncated polarized series `sum_{|j|,|k| <= N} c_{jk} z^j wbar^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarizedSeries {
    n: usize,
    sigma: f64,
    coeffs: Vec<C64>,
}

impl PolarizedSeries {
    /// Zero series of degree `n` at scale `sigma`.
    pub fn zeros(n: usize, sigma: f64) -> Self {
        let side = 2 * n + 1;
        Self {
            n,
            sigma,
            coeffs: vec![C64::new(0.0, 0.0); side * side],
        }
    }

    /// Constant series.
    pub fn constant(c: C64, n: usize, sigma: f64) -> Self {
        let mut s = Self::zeros(n, sigma);
        s.set(0, 0, c);
        s
    }

    /// Single monomial `c z^j wbar^k`.
    pub fn monomial(c: C64, j: i64, k: i64, n: usize, sigma: f64) -> Self {
        let mut s = Self::zeros(n, sigma);
        s.set(j, k, c);
        s
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Re-tag the scale (coefficients unchanged). Tightening the scale is
    /// always legitimate; loosening is the caller's responsibility.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    #[inline]
    fn idx(&self, j: i64, k: i64) -> usize {
        let side = 2 * self.n as i64 + 1;
        ((j + self.n as i64) * side + (k + self.n as i64)) as usize
    }

    /// Coefficient of `z^j wbar^k` (zero outside the stored block).
    #[inline]
    pub fn get(&self, j: i64, k: i64) -> C64 {
        let n = self.n as i64;
        if j.abs() > n || k.abs() > n {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[self.idx(j, k)]
        }
    }

    /// Set a coefficient; silently ignores out-of-range exponents so that
    /// callers folding analytic data into the truncation do not need their
    /// own bounds checks.
    #[inline]
    pub fn set(&mut self, j: i64, k: i64, c: C64) {
        let n = self.n as i64;
        if j.abs() <= n && k.abs() <= n {
            let i = self.idx(j, k);
            self.coeffs[i] = c;
        }
    }

    /// Largest coefficient magnitude.
    pub fn coeff_sup(&self) -> f64 {
        sup_nan_safe(&self.coeffs)
    }

    /// Sum of coefficient magnitudes (crude upper bound for any sup norm
    /// taken on the closed unit torus).
    pub fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "degree mismatch");
        let mut out = self.clone();
        out.sigma = self.sigma.min(other.sigma);
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n, "degree mismatch");
        let mut out = self.clone();
        out.sigma = self.sigma.min(other.sigma);
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for a in out.coeffs.iter_mut() {
            *a *= c;
        }
        out
    }

    /// Coefficients of the complex conjugate of the represented function:
    /// `conj(f)(z) = sum conj(c_{jk}) zbar^j z^k`, so the polarized
    /// coefficient at `(k,j)` is `conj(c_{jk})`.
    pub fn conj_series(&self) -> Self {
        let n = self.n as i64;
        let mut out = Self::zeros(self.n, self.sigma);
        for j in -n..=n {
            for k in -n..=n {
                out.set(k, j, self.get(j, k).conj());
            }
        }
        out
    }

    /// Termwise `d/d(wbar)`: `(j,k) -> k c_{jk}` placed at `(j, k-1)`.
    ///
    /// The Cauchy estimate for the derivative only controls the result on a
    /// strictly smaller annulus, so a strictly smaller output scale is
    /// required.
    pub fn dbar_w(&self, sigma_out: f64) -> Result<Self> {
        if sigma_out >= self.sigma {
            return Err(Error::Scale(format!(
                "dbar_w needs sigma_out < sigma ({sigma_out} >= {})",
                self.sigma
            )));
        }
        let n = self.n as i64;
        let mut out = Self::zeros(self.n, sigma_out);
        for j in -n..=n {
            for k in -n..=n {
                let c = self.get(j, k);
                if k != 0 && c != C64::new(0.0, 0.0) {
                    out.set(j, k - 1, c * k as f64);
                }
            }
        }
        Ok(out)
    }

    /// Termwise `d/dz`: `(j,k) -> j c_{jk}` placed at `(j-1, k)`.
    pub fn d_z(&self, sigma_out: f64) -> Result<Self> {
        if sigma_out >= self.sigma {
            return Err(Error::Scale(format!(
                "d_z needs sigma_out < sigma ({sigma_out} >= {})",
                self.sigma
            )));
        }
        let n = self.n as i64;
        let mut out = Self::zeros(self.n, sigma_out);
        for j in -n..=n {
            for k in -n..=n {
                let c = self.get(j, k);
                if j != 0 && c != C64::new(0.0, 0.0) {
                    out.set(j - 1, k, c * j as f64);
                }
            }
        }
        Ok(out)
    }

    /// Diagonal restriction `f(z) = f_polarized(z, z)`, i.e. evaluation with
    /// `wbar = conj(z)`. This is the defining property of the polarization.
    pub fn restrict_diagonal(&self, z: C64) -> C64 {
        self.eval(z, z.conj())
    }

    /// Evaluate with independent arguments `z` and `wbar` (Horner in both
    /// variables).
    pub fn eval(&self, z: C64, wbar: C64) -> C64 {
        let n = self.n as i64;
        // Inner Horner over k for each j, outer Horner over j.
        let mut acc = C64::new(0.0, 0.0);
        for j in (-n..=n).rev() {
            let mut row = C64::new(0.0, 0.0);
            for k in (-n..=n).rev() {
                row = row * wbar + self.get(j, k);
            }
            // row now equals sum_k c_{jk} wbar^{k+n}; fix the offset below.
            acc = acc * z + row;
        }
        // acc = sum_j z^{j+n} sum_k c_{jk} wbar^{k+n}
        let zoff = z.powi(-(n as i32));
        let woff = wbar.powi(-(n as i32));
        acc * zoff * woff
    }

    /// Restriction to the unit circle: substituting `wbar = 1/z` collapses
    /// the diagonals `j - k = d` into a single Laurent series in `z`.
    pub fn restrict_circle(&self) -> CircleSeries {
        let n = self.n as i64;
        let mut out = CircleSeries::zeros(self.n, self.sigma);
        for d in -2 * n..=2 * n {
            let mut s = C64::new(0.0, 0.0);
            // Fixed summation order (increasing j) for determinism.
            let j_lo = (-n).max(d - n);
            let j_hi = n.min(d + n);
            for j in j_lo..=j_hi {
                s += self.get(j, j - d);
            }
            out.set(d, s);
        }
        out
    }

    /// Divide by `1 - z*wbar`, assuming the series vanishes on the variety
    /// `z*wbar = 1` (equivalently: every diagonal coefficient sum is zero).
    ///
    /// The quotient satisfies `(1 - z*wbar) g = a` up to truncation and is
    /// computed by the diagonal recursion `g_{jk} = a_{jk} + g_{j-1,k-1}`,
    /// seeded at the most negative index of each diagonal. The divisibility
    /// defect is the largest diagonal sum relative to the coefficient scale;
    /// it must stay below `tol`.
    pub fn weierstrass_divide(&self, tol: f64) -> Result<Self> {
        let n = self.n as i64;
        let scale = self.coeff_sup().max(1e-300);
        let mut out = Self::zeros(self.n, self.sigma);
        let mut worst = 0.0f64;
        for d in -2 * n..=2 * n {
            let j_lo = (-n).max(d - n);
            let j_hi = n.min(d + n);
            let mut acc = C64::new(0.0, 0.0);
            for j in j_lo..=j_hi {
                acc += self.get(j, j - d);
                out.set(j, j - d, acc);
            }
            worst = worst.max(acc.norm());
        }
        let defect = worst / scale;
        if defect > tol {
            return Err(Error::NotDivisible { defect, tol });
        }
        Ok(out)
    }

    /// Divisibility defect alone (largest diagonal sum over coefficient
    /// scale), without performing the division.
    pub fn divisibility_defect(&self) -> f64 {
        let r = self.restrict_circle();
        r.coeff_sup() / self.coeff_sup().max(1e-300)
    }

    /// Product, truncated back to the common degree. Returns the truncated
    /// series and the relative tail mass that was discarded.
    pub fn multiply_with_tail(&self, other: &Self) -> (Self, f64) {
        assert_eq!(self.n, other.n, "degree mismatch");
        let n = self.n;
        let full = convolve_2d(&self.coeffs, &other.coeffs, 2 * n + 1);
        // `full` has side 4n+1 with exponents in [-2n, 2n].
        let side_f = 4 * n + 1;
        let mut out = Self::zeros(n, self.sigma.min(other.sigma));
        let mut kept = 0.0f64;
        let mut dropped = 0.0f64;
        for (i, &c) in full.iter().enumerate() {
            let j = (i / side_f) as i64 - 2 * n as i64;
            let k = (i % side_f) as i64 - 2 * n as i64;
            let mag = c.norm();
            if j.abs() <= n as i64 && k.abs() <= n as i64 {
                out.set(j, k, c);
                kept += mag;
            } else {
                dropped += mag;
            }
        }
        let tail = dropped / (kept + dropped).max(1e-300);
        (out, tail)
    }

    /// Product truncated to degree `N` (tail monitor discarded).
    pub fn multiply(&self, other: &Self) -> Self {
        self.multiply_with_tail(other).0
    }

    /// Approximate the sup of `|f|` over the polarized annulus at scale
    /// `sigma`: both variables sampled on 8 radii spanning `[rho, 1/rho]`
    /// with `4N` angles, restricted to pairs with `|z - w| < 2 sigma`.
    pub fn sup_norm(&self, sigma: f64) -> f64 {
        assert!(
            sigma <= self.sigma + 1e-12,
            "sup_norm scale {sigma} exceeds series scale {}",
            self.sigma
        );
        let rho = rho_of_sigma(sigma).expect("scale in (0,1)");
        let n = self.n;
        let n_ang = (4 * n).max(16);
        let radii: Vec<f64> = (0..8)
            .map(|i| rho.powf((7.0 - 2.0 * i as f64) / 7.0))
            .collect();

        // Partial sums b_k(z) = sum_j c_{jk} z^j for every z sample.
        let side = 2 * n + 1;
        let mut b: Vec<Vec<C64>> = Vec::with_capacity(8 * n_ang);
        let mut zs: Vec<C64> = Vec::with_capacity(8 * n_ang);
        for &r in &radii {
            for a in 0..n_ang {
                let th = 2.0 * std::f64::consts::PI * a as f64 / n_ang as f64;
                let z = C64::from_polar(r, th);
                let zpow = powers(z, n);
                let mut col = vec![C64::new(0.0, 0.0); side];
                for (ki, item) in col.iter_mut().enumerate() {
                    let k = ki as i64 - n as i64;
                    let mut s = C64::new(0.0, 0.0);
                    for j in -(n as i64)..=n as i64 {
                        let c = self.get(j, k);
                        if c != C64::new(0.0, 0.0) {
                            s += c * zpow[(j + n as i64) as usize];
                        }
                    }
                    *item = s;
                }
                b.push(col);
                zs.push(z);
            }
        }

        // wbar^k powers for every w sample (same grid).
        let mut wpows: Vec<Vec<C64>> = Vec::with_capacity(8 * n_ang);
        for &z in &zs {
            wpows.push(powers(z.conj(), n));
        }

        let mut best = 0.0f64;
        for (iz, &z) in zs.iter().enumerate() {
            let rz = radii[iz / n_ang];
            let az = iz % n_ang;
            for (irw, &rw) in radii.iter().enumerate() {
                // |z-w|^2 = rz^2 + rw^2 - 2 rz rw cos(dth) < (2 sigma)^2
                let c = (rz * rz + rw * rw - 4.0 * sigma * sigma) / (2.0 * rz * rw);
                let dmax = if c <= -1.0 {
                    std::f64::consts::PI
                } else if c >= 1.0 {
                    continue;
                } else {
                    c.acos()
                };
                let steps = ((dmax / (2.0 * std::f64::consts::PI) * n_ang as f64).ceil()
                    as usize)
                    .min(n_ang / 2);
                for da in 0..=2 * steps {
                    let aw = (az + n_ang + da) as usize - steps;
                    let aw = aw % n_ang;
                    let iw = irw * n_ang + aw;
                    let wp = &wpows[iw];
                    let bz = &b[iz];
                    let mut v = C64::new(0.0, 0.0);
                    for ki in 0..side {
                        v += bz[ki] * wp[ki];
                    }
                    let mag = v.norm();
                    if mag > best {
                        best = mag;
                    }
                }
            }
            let _ = z;
        }
        best
    }

    /// Write in the line-oriented coefficient format
    /// (`# polar N sigma` header, then `j k re im` per nonzero coefficient).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# polar {} {:.17e}", self.n, self.sigma)?;
        let n = self.n as i64;
        for j in -n..=n {
            for k in -n..=n {
                let c = self.get(j, k);
                if c != C64::new(0.0, 0.0) {
                    writeln!(w, "{} {} {:.17e} {:.17e}", j, k, c.re, c.im)?;
                }
            }
        }
        Ok(())
    }

    /// Parse the `# polar` format produced by [`write_to`](Self::write_to).
    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "#" || parts[1] != "polar" {
            return Err(Error::Parse(format!("bad polar header: {header:?}")));
        }
        let n: usize = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("degree: {e}")))?;
        let sigma: f64 = parts[3]
            .parse()
            .map_err(|e| Error::Parse(format!("sigma: {e}")))?;
        let mut out = Self::zeros(n, sigma);
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::Parse(format!("bad coefficient line: {t:?}")));
            }
            let j: i64 = f[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let k: i64 = f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let re: f64 = f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let im: f64 = f[3].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            out.set(j, k, C64::new(re, im));
        }
        Ok(out)
    }
}

/// `z^{-n}, ..., z^0, ..., z^n` as a vector of length `2n+1`.
/// Largest coefficient magnitude, with non-finite entries reported as
/// infinity instead of silently losing to `f64::max` (which ignores NaN).
fn sup_nan_safe(coeffs: &[C64]) -> f64 {
    let mut best = 0.0f64;
    for c in coeffs {
        let m = c.norm();
        if !m.is_finite() {
            return f64::INFINITY;
        }
        best = best.max(m);
    }
    best
}

fn powers(z: C64, n: usize) -> Vec<C64> {
    let mut out = vec![C64::new(1.0, 0.0); 2 * n + 1];
    let zinv = 1.0 / z;
    for i in 1..=n {
        out[n + i] = out[n + i - 1] * z;
        out[n - i] = out[n - i + 1] * zinv;
    }
    out
}

thread_local! {
    static FFT_CACHE: RefCell<HashMap<(usize, bool), Arc<dyn rustfft::Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn plan_fft(len: usize, inverse: bool) -> Arc<dyn rustfft::Fft<f64>> {
    FFT_CACHE.with(|c| {
        c.borrow_mut()
            .entry((len, inverse))
            .or_insert_with(|| {
                let mut planner = rustfft::FftPlanner::new();
                if inverse {
                    planner.plan_fft_inverse(len)
                } else {
                    planner.plan_fft_forward(len)
                }
            })
            .clone()
    })
}

fn fft_2d(data: &mut [C64], side: usize, inverse: bool) {
    let fft = plan_fft(side, inverse);
    // Rows.
    for row in data.chunks_exact_mut(side) {
        fft.process(row);
    }
    // Columns via transpose - process - transpose.
    let mut t = vec![C64::new(0.0, 0.0); side * side];
    for i in 0..side {
        for j in 0..side {
            t[j * side + i] = data[i * side + j];
        }
    }
    for row in t.chunks_exact_mut(side) {
        fft.process(row);
    }
    for i in 0..side {
        for j in 0..side {
            data[i * side + j] = t[j * side + i];
        }
    }
}

/// Full 2-D linear convolution of two `side x side` blocks via FFT.
/// Output has side `2*side - 1`.
fn convolve_2d(a: &[C64], b: &[C64], side: usize) -> Vec<C64> {
    let out_side = 2 * side - 1;
    let l = out_side.next_power_of_two();
    let mut fa = vec![C64::new(0.0, 0.0); l * l];
    let mut fb = vec![C64::new(0.0, 0.0); l * l];
    for i in 0..side {
        for j in 0..side {
            fa[i * l + j] = a[i * side + j];
            fb[i * l + j] = b[i * side + j];
        }
    }
    fft_2d(&mut fa, l, false);
    fft_2d(&mut fb, l, false);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    fft_2d(&mut fa, l, true);
    let norm = 1.0 / (l * l) as f64;
    let mut out = vec![C64::new(0.0, 0.0); out_side * out_side];
    for i in 0..out_side {
        for j in 0..out_side {
            out[i * out_side + j] = fa[i * l + j] * norm;
        }
    }
    out
}

/// Truncated Laurent series `sum_{|d| <= 2N} c_d z^d` on an annulus around
/// the unit circle (restrictions of polarized series, Hardy projections,
/// Herglotz images).
#[derive(Debug, Clone, PartialEq)]
pub struct CircleSeries {
    n: usize,
    coeffs: Vec<C64>,
    annulus: AnnulusSpec,
}

impl CircleSeries {
    pub fn zeros(n: usize, sigma: f64) -> Self {
        Self {
            n,
            coeffs: vec![C64::new(0.0, 0.0); 4 * n + 1],
            annulus: AnnulusSpec::new(sigma).expect("scale in (0,1)"),
        }
    }

    pub fn constant(c: C64, n: usize, sigma: f64) -> Self {
        let mut s = Self::zeros(n, sigma);
        s.set(0, c);
        s
    }

    /// Base degree `N`; modes run over `[-2N, 2N]`.
    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn annulus(&self) -> AnnulusSpec {
        self.annulus
    }

    pub fn max_mode(&self) -> i64 {
        2 * self.n as i64
    }

    #[inline]
    pub fn get(&self, d: i64) -> C64 {
        let m = 2 * self.n as i64;
        if d.abs() > m {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[(d + m) as usize]
        }
    }

    #[inline]
    pub fn set(&mut self, d: i64, c: C64) {
        let m = 2 * self.n as i64;
        if d.abs() <= m {
            self.coeffs[(d + m) as usize] = c;
        }
    }

    pub fn coeff_sup(&self) -> f64 {
        sup_nan_safe(&self.coeffs)
    }

    pub fn coeff_l1(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a += b;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let mut out = self.clone();
        for (a, b) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *a -= b;
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for a in out.coeffs.iter_mut() {
            *a *= c;
        }
        out
    }

    /// Coefficientwise conjugation-on-the-circle: `conj(f)` on `|z| = 1` has
    /// mode `d` equal to `conj(c_{-d})`.
    pub fn conj_on_circle(&self) -> Self {
        let m = 2 * self.n as i64;
        let mut out = Self::zeros(self.n, self.annulus.sigma);
        for d in -m..=m {
            out.set(d, self.get(-d).conj());
        }
        out
    }

    /// Shift all modes by `s` (multiplication by `z^s`); modes leaving the
    /// window are dropped.
    pub fn shift(&self, s: i64) -> Self {
        let m = 2 * self.n as i64;
        let mut out = Self::zeros(self.n, self.annulus.sigma);
        for d in -m..=m {
            let c = self.get(d);
            if c != C64::new(0.0, 0.0) {
                out.set(d + s, c);
            }
        }
        out
    }

    /// Cauchy product truncated to the mode window `[-2N, 2N]`.
    pub fn multiply(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let m = 2 * self.n as i64;
        let mut out = Self::zeros(self.n, self.annulus.sigma.min(other.annulus.sigma));
        for d in -m..=m {
            let mut s = C64::new(0.0, 0.0);
            let lo = (-m).max(d - m);
            let hi = m.min(d + m);
            for e in lo..=hi {
                let a = self.get(e);
                if a != C64::new(0.0, 0.0) {
                    s += a * other.get(d - e);
                }
            }
            out.set(d, s);
        }
        out
    }

    /// Evaluate `sum c_d z^d` (Horner from both ends).
    pub fn eval(&self, z: C64) -> C64 {
        let m = 2 * self.n as i64;
        let mut pos = C64::new(0.0, 0.0);
        for d in (1..=m).rev() {
            pos = (pos + self.get(d)) * z;
        }
        let zinv = 1.0 / z;
        let mut neg = C64::new(0.0, 0.0);
        for d in (1..=m).rev() {
            neg = (neg + self.get(-d)) * zinv;
        }
        pos + neg + self.get(0)
    }

    /// Hermitian defect: zero iff the series represents a real-valued
    /// function on the circle (`c_d = conj(c_{-d})`).
    pub fn hermitian_defect(&self) -> f64 {
        let m = 2 * self.n as i64;
        let mut worst = 0.0f64;
        for d in 0..=m {
            worst = worst.max((self.get(d) - self.get(-d).conj()).norm());
        }
        worst
    }

    /// Sup of `|f|` sampled on the circle (`4N` angles, plus offset grid).
    pub fn circle_sup(&self) -> f64 {
        let n_ang = (8 * self.n).max(32);
        let mut best = 0.0f64;
        for a in 0..n_ang {
            let th = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / n_ang as f64;
            best = best.max(self.eval(C64::from_polar(1.0, th)).norm());
        }
        best
    }

    /// Sup of `|f|` sampled over the annulus `[rho(sigma), 1/rho(sigma)]`.
    pub fn annulus_sup(&self, sigma: f64) -> f64 {
        let rho = rho_of_sigma(sigma).expect("scale in (0,1)");
        let n_ang = (4 * self.n).max(16);
        let mut best = 0.0f64;
        for i in 0..8 {
            let r = rho.powf((7.0 - 2.0 * i as f64) / 7.0);
            for a in 0..n_ang {
                let th = 2.0 * std::f64::consts::PI * a as f64 / n_ang as f64;
                best = best.max(self.eval(C64::from_polar(r, th)).norm());
            }
        }
        best
    }

    /// Embed as a polarized series: mode `d >= 0` goes to `z^d` (exponent
    /// `(d,0)`), mode `d < 0` to `wbar^{-d}`? No — this embedding is the
    /// *exterior-holomorphic* one used to re-enter projections into the
    /// polarized algebra: every mode `d` is placed as `z^d` at `(d, 0)`.
    /// Modes outside `[-N, N]` are dropped (their mass is monitored by the
    /// caller when it matters).
    pub fn polarize_as_z(&self, n: usize, sigma: f64) -> PolarizedSeries {
        let mut out = PolarizedSeries::zeros(n, sigma);
        let m = 2 * self.n as i64;
        for d in -m..=m {
            let c = self.get(d);
            if c != C64::new(0.0, 0.0) {
                out.set(d, 0, c);
            }
        }
        out
    }

    /// Write in the line-oriented `# circle N sigma` / `d re im` format.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "# circle {} {:.17e}", self.n, self.annulus.sigma)?;
        let m = 2 * self.n as i64;
        for d in -m..=m {
            let c = self.get(d);
            if c != C64::new(0.0, 0.0) {
                writeln!(w, "{} {:.17e} {:.17e}", d, c.re, c.im)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: &mut R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "#" || parts[1] != "circle" {
            return Err(Error::Parse(format!("bad circle header: {header:?}")));
        }
        let n: usize = parts[2]
            .parse()
            .map_err(|e| Error::Parse(format!("degree: {e}")))?;
        let sigma: f64 = parts[3]
            .parse()
            .map_err(|e| Error::Parse(format!("sigma: {e}")))?;
        let mut out = Self::zeros(n, sigma);
        for line in r.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = t.split_whitespace().collect();
            if f.len() != 3 {
                return Err(Error::Parse(format!("bad coefficient line: {t:?}")));
            }
            let d: i64 = f[0].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let re: f64 = f[1].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            let im: f64 = f[2].parse().map_err(|e| Error::Parse(format!("{e}")))?;
            out.set(d, C64::new(re, im));
        }
        Ok(out)
    }
}

/// Depth cap for harmonic extensions and conjugation factors expressed in
/// the contact variable. The geometric factor `(1 - u)^{+-d}` carries
/// binomial coefficients that grow combinatorially in `d`; beyond this depth
/// the entries would amplify rounding noise past what the evaluation window
/// `|u| < 1` can suppress, so deeper modes are dropped and their mass is
/// reported to the caller.
pub const CONTACT_EXT_DEPTH: usize = 32;

/// Bivariate series graded by vanishing order along the diagonal:
/// `f = sum_d z^d g_d(u)` with `u = 1 - z*wbar`.
///
/// Columns `g_d` are polynomials of degree `<= u_max` in `u`; the outer index
/// runs over `d in [-d_max, d_max]`. On the near-diagonal region where these
/// series are used, `|u|` stays well below 1, so truncation in `u` behaves
/// like a geometric tail — in contrast to plain monomial truncation, which
/// has no sup-norm control there. Restriction to the circle (`u = 0`),
/// division by `1 - z*wbar` (a shift in `u`) and the Hardy-type projections
/// all become exact index operations in this grading.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSeries {
    d_max: usize,
    u_max: usize,
    sigma: f64,
    /// Row-major `(2*d_max + 1) x (u_max + 1)`; entry `(d + d_max, n)` is the
    /// coefficient of `z^d u^n`.
    coeffs: Vec<C64>,
}

impl ContactSeries {
    pub fn zeros(d_max: usize, u_max: usize, sigma: f64) -> Self {
        assert!(d_max % 2 == 0, "d_max must be even (circle restriction needs modes +-2N)");
        Self {
            d_max,
            u_max,
            sigma,
            coeffs: vec![C64::new(0.0, 0.0); (2 * d_max + 1) * (u_max + 1)],
        }
    }

    pub fn constant(c: C64, d_max: usize, u_max: usize, sigma: f64) -> Self {
        let mut s = Self::zeros(d_max, u_max, sigma);
        s.set(0, 0, c);
        s
    }

    pub fn d_max(&self) -> usize {
        self.d_max
    }

    pub fn u_max(&self) -> usize {
        self.u_max
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    #[inline]
    fn idx(&self, d: i64, n: usize) -> usize {
        ((d + self.d_max as i64) as usize) * (self.u_max + 1) + n
    }

    #[inline]
    pub fn get(&self, d: i64, n: usize) -> C64 {
        if d.unsigned_abs() as usize > self.d_max || n > self.u_max {
            C64::new(0.0, 0.0)
        } else {
            self.coeffs[self.idx(d, n)]
        }
    }

    /// Out-of-range writes are dropped silently; callers that care about the
    /// dropped mass use [`ContactSeries::add_monitored`].
    #[inline]
    pub fn set(&mut self, d: i64, n: usize, c: C64) {
        if d.unsigned_abs() as usize <= self.d_max && n <= self.u_max {
            let i = self.idx(d, n);
            self.coeffs[i] = c;
        }
    }

    /// Adds `c` at `(d, n)` and returns `|c|` instead when the slot is out of
    /// range, so accumulation loops can track what fell off the grid.
    #[inline]
    pub fn add_monitored(&mut self, d: i64, n: usize, c: C64) -> f64 {
        if d.unsigned_abs() as usize <= self.d_max && n <= self.u_max {
            let i = self.idx(d, n);
            self.coeffs[i] += c;
            0.0
        } else {
            c.norm()
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.d_max, self.u_max), (other.d_max, other.u_max));
        let mut out = self.clone();
        out.sigma = self.sigma.min(other.sigma);
        for (x, y) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *x += y;
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.d_max, self.u_max), (other.d_max, other.u_max));
        let mut out = self.clone();
        out.sigma = self.sigma.min(other.sigma);
        for (x, y) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *x -= y;
        }
        out
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        for x in &mut out.coeffs {
            *x *= c;
        }
        out
    }

    pub fn coeff_sup(&self) -> f64 {
        sup_nan_safe(&self.coeffs)
    }

    /// FFT length that holds triple products of `d`-supports without
    /// wraparound: spans up to `6*d_max + 1`.
    fn fft_len(&self) -> usize {
        (6 * self.d_max + 2).next_power_of_two()
    }

    /// Column `g_·(n)` as a centered slice copy, length `2*d_max + 1`.
    fn column(&self, n: usize) -> Vec<C64> {
        let w = self.u_max + 1;
        (0..2 * self.d_max + 1).map(|r| self.coeffs[r * w + n]).collect()
    }

    /// Scatter a centered column of length `2*d_max + 1` into a zero-padded
    /// FFT buffer of length `l` with mode `d` at index `d mod l`.
    fn pad_column(col: &[C64], d_max: usize, l: usize) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); l];
        for (r, &c) in col.iter().enumerate() {
            let d = r as i64 - d_max as i64;
            buf[d.rem_euclid(l as i64) as usize] = c;
        }
        buf
    }

    /// Gather modes `|d| <= d_max` back out of an FFT buffer.
    fn crop_column(buf: &[C64], d_max: usize) -> Vec<C64> {
        let l = buf.len() as i64;
        (0..2 * d_max + 1)
            .map(|r| {
                let d = r as i64 - d_max as i64;
                buf[d.rem_euclid(l) as usize]
            })
            .collect()
    }

    /// Product of two contact series, truncated back to the common grid.
    ///
    /// The `d`-convolutions run in frequency space (one forward transform per
    /// `u`-column of each factor), the `u`-convolution is done per frequency,
    /// and one inverse transform per output column brings the result back.
    pub fn multiply(&self, other: &Self) -> Self {
        assert_eq!((self.d_max, self.u_max), (other.d_max, other.u_max));
        let l = self.fft_len();
        let fwd = plan_fft(l, false);
        let inv = plan_fft(l, true);
        let w = self.u_max + 1;
        let hat = |s: &Self| -> Vec<C64> {
            let mut out = vec![C64::new(0.0, 0.0); w * l];
            for n in 0..w {
                let mut buf = Self::pad_column(&s.column(n), s.d_max, l);
                fwd.process(&mut buf);
                out[n * l..(n + 1) * l].copy_from_slice(&buf);
            }
            out
        };
        let fa = hat(self);
        let fb = hat(other);
        let mut fc = vec![C64::new(0.0, 0.0); w * l];
        for n in 0..w {
            for i in 0..=n {
                let (a, b) = (&fa[i * l..(i + 1) * l], &fb[(n - i) * l..(n - i + 1) * l]);
                let c = &mut fc[n * l..(n + 1) * l];
                for k in 0..l {
                    c[k] += a[k] * b[k];
                }
            }
        }
        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma.min(other.sigma));
        let norm = 1.0 / l as f64;
        let mut buf = vec![C64::new(0.0, 0.0); l];
        for n in 0..w {
            buf.copy_from_slice(&fc[n * l..(n + 1) * l]);
            inv.process(&mut buf);
            let col = Self::crop_column(&buf, self.d_max);
            for (r, c) in col.into_iter().enumerate() {
                out.coeffs[r * w + n] = c * norm;
            }
        }
        out
    }

    /// Multiply by `u^p` (shift up in the grading). Coefficients pushed past
    /// `u_max` are dropped; on the evaluation window they are geometric-tail
    /// small by construction.
    pub fn mul_u(&self, p: usize) -> Self {
        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma);
        let w = self.u_max + 1;
        for r in 0..2 * self.d_max + 1 {
            for n in 0..w.saturating_sub(p) {
                out.coeffs[r * w + n + p] = self.coeffs[r * w + n];
            }
        }
        out
    }

    /// Largest coefficient in grading levels `n < p`, relative to the overall
    /// coefficient sup — the obstruction to division by `u^p`.
    pub fn vanishing_defect(&self, p: usize) -> f64 {
        let scale = self.coeff_sup().max(f64::MIN_POSITIVE);
        let w = self.u_max + 1;
        let mut worst = 0.0f64;
        for r in 0..2 * self.d_max + 1 {
            for n in 0..p.min(w) {
                worst = worst.max(self.coeffs[r * w + n].norm());
            }
        }
        worst / scale
    }

    /// Exact division by `(1 - z*wbar)^p`: a downward shift in the grading,
    /// valid when the series vanishes to order `p` along the diagonal.
    pub fn div_u(&self, p: usize, tol: f64) -> Result<Self> {
        let defect = self.vanishing_defect(p);
        if defect > tol {
            return Err(Error::NotDivisible { defect, tol });
        }
        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma);
        let w = self.u_max + 1;
        for r in 0..2 * self.d_max + 1 {
            for n in p..w {
                out.coeffs[r * w + n - p] = self.coeffs[r * w + n];
            }
        }
        Ok(out)
    }

    /// Multiply by `z^s`.
    pub fn shift_z(&self, s: i64) -> Self {
        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma);
        let w = self.u_max + 1;
        for r in 0..2 * self.d_max + 1 {
            let d = r as i64 - self.d_max as i64 + s;
            if d.unsigned_abs() as usize <= self.d_max {
                let rr = (d + self.d_max as i64) as usize;
                out.coeffs[rr * w..(rr + 1) * w].copy_from_slice(&self.coeffs[r * w..(r + 1) * w]);
            }
        }
        out
    }

    /// Restriction to the unit circle: `u = 0` kills every level but the
    /// first, so mode `d` of the restriction is exactly `g_d(0)`.
    pub fn restrict_circle(&self) -> CircleSeries {
        let mut cs = CircleSeries::zeros(self.d_max / 2, self.sigma);
        for d in -(self.d_max as i64)..=self.d_max as i64 {
            cs.set(d, self.get(d, 0));
        }
        cs
    }

    pub fn eval(&self, z: C64, wbar: C64) -> C64 {
        let u = C64::new(1.0, 0.0) - z * wbar;
        let pw = powers(z, self.d_max);
        let w = self.u_max + 1;
        let mut acc = C64::new(0.0, 0.0);
        for n in (0..w).rev() {
            let mut h = C64::new(0.0, 0.0);
            for r in 0..2 * self.d_max + 1 {
                h += self.coeffs[r * w + n] * pw[r];
            }
            acc = acc * u + h;
        }
        acc
    }

    pub fn restrict_diagonal(&self, z: C64) -> C64 {
        self.eval(z, z.conj())
    }

    /// Sampled sup of `|f|` over the near-diagonal region at scale `sigma`:
    /// `z, w` in the annulus `[rho, 1/rho]` with `|z - w| < 2*sigma`.
    ///
    /// For each of a few radii the angular profiles `h_n(z) = sum_d c_{dn} z^d`
    /// come out of one FFT per grading level; each `(z, w)` pair then costs a
    /// single Horner pass in `u = 1 - z*conj(w)`.
    pub fn sup_norm(&self, sigma: f64) -> f64 {
        if !self.coeff_sup().is_finite() {
            return f64::INFINITY;
        }
        let rho = match rho_of_sigma(sigma) {
            Ok(r) => r,
            Err(_) => return f64::NAN,
        };
        let n_ang = (2 * self.d_max + 1).next_power_of_two().max(512);
        let fwd = plan_fft(n_ang, false);
        let w_cols = self.u_max + 1;
        let tau = 2.0 * std::f64::consts::PI;
        let mut best = 0.0f64;
        for ri in 0..6 {
            // Geometric ladder from rho to 1/rho.
            let r = rho.powf((5.0 - 2.0 * ri as f64) / 5.0);
            let rp = powers(C64::new(r, 0.0), self.d_max);
            // profiles[n * n_ang + a] = h_n(r * e^{-i theta_a}).
            let mut profiles = vec![C64::new(0.0, 0.0); w_cols * n_ang];
            for n in 0..w_cols {
                let mut col = self.column(n);
                for (j, c) in col.iter_mut().enumerate() {
                    *c *= rp[j].re;
                }
                let mut buf = Self::pad_column(&col, self.d_max, n_ang);
                fwd.process(&mut buf);
                profiles[n * n_ang..(n + 1) * n_ang].copy_from_slice(&buf);
            }
            for a in 0..n_ang {
                let z = C64::from_polar(r, -tau * a as f64 / n_ang as f64);
                // w-offsets: the point itself plus two rings inside the
                // |z - w| < 2 sigma window.
                let mut ws = [C64::new(0.0, 0.0); 17];
                ws[0] = z;
                for j in 0..8 {
                    let dir = C64::from_polar(1.0, tau * j as f64 / 8.0);
                    ws[1 + j] = z + dir * sigma;
                    ws[9 + j] = z + dir * (2.0 * sigma * 0.999);
                }
                for &mut wq in &mut ws {
                    let mut wv = wq;
                    let m = wv.norm();
                    if m < rho {
                        wv *= rho / m;
                    } else if m > 1.0 / rho {
                        wv *= 1.0 / (rho * m);
                    }
                    if (z - wv).norm() >= 2.0 * sigma {
                        continue;
                    }
                    let u = C64::new(1.0, 0.0) - z * wv.conj();
                    let mut acc = C64::new(0.0, 0.0);
                    for n in (0..w_cols).rev() {
                        acc = acc * u + profiles[n * n_ang + a];
                    }
                    best = best.max(acc.norm());
                }
            }
        }
        best
    }

    /// `d/d wbar`. In this grading `d/d wbar (z^d g(u)) = -z^{d+1} g'(u)`.
    /// Differentiation shrinks the controlled region, so the result must be
    /// tagged with a strictly smaller scale.
    pub fn dbar_w(&self, sigma_out: f64) -> Result<Self> {
        if !(sigma_out > 0.0 && sigma_out < self.sigma) {
            return Err(Error::Scale(format!(
                "derivative needs output scale in (0, {}), got {sigma_out}",
                self.sigma
            )));
        }
        let mut out = Self::zeros(self.d_max, self.u_max, sigma_out);
        for d in -(self.d_max as i64)..=self.d_max as i64 {
            for n in 0..self.u_max {
                let c = self.get(d, n + 1);
                if c != C64::new(0.0, 0.0) {
                    out.add_monitored(d + 1, n, -((n + 1) as f64) * c);
                }
            }
        }
        Ok(out)
    }

    /// `d/dz`. With `wbar = z^{-1}(1 - u)` held fixed in the `w` slot:
    /// `d/dz (z^d g(u)) = z^{d-1} [d g(u) - (1 - u) g'(u)]`, i.e. the level-`n`
    /// output coefficient is `(d + n) g_n - (n + 1) g_{n+1}`.
    pub fn d_z(&self, sigma_out: f64) -> Result<Self> {
        if !(sigma_out > 0.0 && sigma_out < self.sigma) {
            return Err(Error::Scale(format!(
                "derivative needs output scale in (0, {}), got {sigma_out}",
                self.sigma
            )));
        }
        let mut out = Self::zeros(self.d_max, self.u_max, sigma_out);
        for d in -(self.d_max as i64)..=self.d_max as i64 {
            for n in 0..=self.u_max {
                let c = (d + n as i64) as f64 * self.get(d, n)
                    - (n + 1) as f64 * self.get(d, n + 1);
                if c != C64::new(0.0, 0.0) {
                    out.add_monitored(d - 1, n, c);
                }
            }
        }
        Ok(out)
    }

    /// Swap the two slots and conjugate coefficients: `z^d g_d(u)` maps to
    /// `wbar^d conj(g_d)(u) = z^{-d} (1 - u)^d conj(g_d)(u)` (the contact
    /// variable is invariant under the swap). Returns the result together
    /// with the sup of coefficients dropped by the depth cap.
    pub fn conj_series(&self) -> (Self, f64) {
        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma);
        let mut dropped = 0.0f64;
        for d in -(self.d_max as i64)..=self.d_max as i64 {
            let src: Vec<C64> = (0..=self.u_max).map(|n| self.get(d, n).conj()).collect();
            if src.iter().all(|c| *c == C64::new(0.0, 0.0)) {
                continue;
            }
            if d.unsigned_abs() as usize > CONTACT_EXT_DEPTH {
                dropped = dropped.max(sup_nan_safe(&src));
                continue;
            }
            let factor = one_minus_u_power(d, self.u_max);
            let prod = conv_u(&factor, &src, self.u_max);
            for (n, c) in prod.into_iter().enumerate() {
                if c != C64::new(0.0, 0.0) {
                    dropped = dropped.max(out.add_monitored(-d, n, c));
                }
            }
        }
        (out, dropped)
    }

    /// Convert from the monomial polarized form. Exponent pairs `(j, k)`
    /// become `z^{j-k} (1-u)^k` (binomial expansion); negative `k` uses the
    /// geometric series for `(1-u)^{-|k|}`. Intended for low-degree inputs
    /// (polarized potentials); `|k|` beyond the depth cap is dropped and
    /// reported.
    pub fn from_polarized(p: &PolarizedSeries, d_max: usize, u_max: usize) -> (Self, f64) {
        let mut out = Self::zeros(d_max, u_max, p.sigma());
        let mut dropped = 0.0f64;
        let np = p.degree() as i64;
        for j in -np..=np {
            for k in -np..=np {
                let c = p.get(j, k);
                if c == C64::new(0.0, 0.0) {
                    continue;
                }
                if k.unsigned_abs() as usize > CONTACT_EXT_DEPTH {
                    dropped = dropped.max(c.norm());
                    continue;
                }
                let factor = one_minus_u_power(k, u_max);
                for (n, f) in factor.into_iter().enumerate() {
                    if f != C64::new(0.0, 0.0) {
                        dropped = dropped.max(out.add_monitored(j - k, n, c * f));
                    }
                }
            }
        }
        (out, dropped)
    }

    /// Embed a circle function with every mode placed as `z^d` at level 0.
    pub fn from_circle_as_z(cs: &CircleSeries, d_max: usize, u_max: usize) -> (Self, f64) {
        let mut out = Self::zeros(d_max, u_max, cs.annulus().sigma);
        let mut dropped = 0.0f64;
        for d in -cs.max_mode()..=cs.max_mode() {
            let c = cs.get(d);
            if c != C64::new(0.0, 0.0) {
                dropped = dropped.max(out.add_monitored(d, 0, c));
            }
        }
        (out, dropped)
    }

    /// Extend a circle function anti-holomorphically: circle mode `k`
    /// (which equals `wbar^{-k}` on the circle) becomes `wbar^{-k} =
    /// z^k (1 - u)^{-k}` off it. Modes deeper than the depth cap are
    /// dropped and reported.
    pub fn from_circle_as_wbar(cs: &CircleSeries, d_max: usize, u_max: usize) -> (Self, f64) {
        let mut out = Self::zeros(d_max, u_max, cs.annulus().sigma);
        let mut dropped = 0.0f64;
        for k in -cs.max_mode()..=cs.max_mode() {
            let c = cs.get(k);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            if k.unsigned_abs() as usize > CONTACT_EXT_DEPTH {
                dropped = dropped.max(c.norm());
                continue;
            }
            let factor = one_minus_u_power(-k, u_max);
            for (n, f) in factor.into_iter().enumerate() {
                if f != C64::new(0.0, 0.0) {
                    dropped = dropped.max(out.add_monitored(k, n, c * f));
                }
            }
        }
        (out, dropped)
    }

    /// Harmonic-type extension of a circle function off the circle: modes
    /// `d <= 0` extend as `z^d` (level 0), modes `d >= 1` as `wbar^{-d} =
    /// z^d (1 - u)^{-d}` so that both halves stay bounded away from the
    /// circle in their natural directions. Positive modes beyond the depth
    /// cap are dropped; the sup of dropped coefficients is returned.
    pub fn harmonic_extension(cs: &CircleSeries, d_max: usize, u_max: usize) -> (Self, f64) {
        let mut out = Self::zeros(d_max, u_max, cs.annulus().sigma);
        let mut dropped = 0.0f64;
        for d in -cs.max_mode()..=0 {
            let c = cs.get(d);
            if c != C64::new(0.0, 0.0) {
                dropped = dropped.max(out.add_monitored(d, 0, c));
            }
        }
        for d in 1..=cs.max_mode() {
            let c = cs.get(d);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            if d as usize > CONTACT_EXT_DEPTH {
                dropped = dropped.max(c.norm());
                continue;
            }
            let factor = one_minus_u_power(-d, u_max);
            for (n, f) in factor.into_iter().enumerate() {
                dropped = dropped.max(out.add_monitored(d, n, c * f));
            }
        }
        (out, dropped)
    }

    /// `u`-adic reciprocal. The level-0 part (the circle restriction) is
    /// inverted by sampling, which handles any nonvanishing restriction
    /// regardless of winding; higher levels follow from the finite recursion
    /// `h_n = -h_0 * sum_{i=1..n} f_i h_{n-i}` — no iteration to converge.
    pub fn contact_inverse(&self) -> Result<Self> {
        self.u_adic_solve(false)
    }

    /// `u`-adic square root, for series whose circle restriction is a
    /// positive real function. Level 0 comes from pointwise square roots of
    /// the sampled restriction; level `n` from
    /// `y_n = (f_n - sum_{i=1..n-1} y_i y_{n-i}) / (2 y_0)`.
    pub fn contact_sqrt(&self) -> Result<Self> {
        self.u_adic_solve(true)
    }

    fn u_adic_solve(&self, sqrt: bool) -> Result<Self> {
        let l = self.fft_len();
        let fwd = plan_fft(l, false);
        let inv = plan_fft(l, true);
        let w = self.u_max + 1;
        let norm = 1.0 / l as f64;

        // Sample the circle restriction at l angles.
        let mut vals = Self::pad_column(&self.column(0), self.d_max, l);
        fwd.process(&mut vals);
        let vmax = sup_nan_safe(&vals);
        if !vmax.is_finite() || vmax == 0.0 {
            return Err(Error::Domain("degenerate circle restriction".into()));
        }
        let vmin = vals.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if vmin < 1e-13 * vmax {
            return Err(Error::Domain(format!(
                "circle restriction has a near-zero (min/max = {:.3e}); no bounded inverse",
                vmin / vmax
            )));
        }
        if sqrt {
            let im_sup = vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            let re_min = vals.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
            if re_min <= 0.0 || im_sup > 1e-8 * vmax {
                return Err(Error::Positivity(format!(
                    "square root needs a positive real circle restriction \
                     (min Re = {re_min:.3e}, sup |Im| = {im_sup:.3e})"
                )));
            }
        }

        // Level-0 seed and (for sqrt) the factor 1/(2 y_0), as coefficient
        // columns cropped to the grid.
        let seed_samples: Vec<C64> = vals
            .iter()
            .map(|v| if sqrt { v.sqrt() } else { C64::new(1.0, 0.0) / v })
            .collect();
        let coeffs_of = |samples: &[C64]| -> Vec<C64> {
            let mut buf = samples.to_vec();
            inv.process(&mut buf);
            for c in &mut buf {
                *c *= norm;
            }
            Self::crop_column(&buf, self.d_max)
        };
        let y0 = coeffs_of(&seed_samples);
        let mult0 = if sqrt {
            let inv2: Vec<C64> = seed_samples
                .iter()
                .map(|s| C64::new(0.5, 0.0) / s)
                .collect();
            coeffs_of(&inv2)
        } else {
            y0.clone()
        };

        // Frequency-space copies, band-limited at every step so repeated
        // products never wrap around (supports stay within 6*d_max + 1 <= l).
        let to_hat = |col: &[C64]| -> Vec<C64> {
            let mut buf = Self::pad_column(col, self.d_max, l);
            fwd.process(&mut buf);
            buf
        };
        let f_hat: Vec<Vec<C64>> = (0..w).map(|n| to_hat(&self.column(n))).collect();
        let mult0_hat = to_hat(&mult0);
        let mut y_hat: Vec<Vec<C64>> = Vec::with_capacity(w);
        y_hat.push(to_hat(&y0));

        let mut out = Self::zeros(self.d_max, self.u_max, self.sigma);
        for (r, &c) in y0.iter().enumerate() {
            out.coeffs[r * w] = c;
        }

        for n in 1..w {
            let mut acc = vec![C64::new(0.0, 0.0); l];
            if sqrt {
                acc.copy_from_slice(&f_hat[n]);
                for i in 1..n {
                    let (a, b) = (&y_hat[i], &y_hat[n - i]);
                    for k in 0..l {
                        acc[k] -= a[k] * b[k];
                    }
                }
            } else {
                for i in 1..=n {
                    let (a, b) = (&f_hat[i], &y_hat[n - i]);
                    for k in 0..l {
                        acc[k] -= a[k] * b[k];
                    }
                }
            }
            for k in 0..l {
                acc[k] *= mult0_hat[k];
            }
            inv.process(&mut acc);
            for c in &mut acc {
                *c *= norm;
            }
            let col = Self::crop_column(&acc, self.d_max);
            for (r, &c) in col.iter().enumerate() {
                out.coeffs[r * w + n] = c;
            }
            y_hat.push(to_hat(&col));
        }

        if !out.coeff_sup().is_finite() {
            return Err(Error::Precision(
                "u-adic recursion produced non-finite coefficients".into(),
            ));
        }
        Ok(out)
    }
}

/// Coefficients of `(1 - u)^k` (binomial for `k >= 0`, geometric-type series
/// for `k < 0`), truncated at `u_max`.
fn one_minus_u_power(k: i64, u_max: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); u_max + 1];
    if k >= 0 {
        let k = k as usize;
        for i in 0..=k.min(u_max) {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            out[i] = C64::new(s * binomial_f(k, i), 0.0);
        }
    } else {
        let k = (-k) as usize;
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = C64::new(binomial_f(k - 1 + i, i), 0.0);
        }
    }
    out
}

/// Truncated product of two `u`-polynomials given as coefficient slices.
fn conv_u(a: &[C64], b: &[C64], u_max: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); u_max + 1];
    for (i, &x) in a.iter().enumerate() {
        if x == C64::new(0.0, 0.0) {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            if i + j > u_max {
                break;
            }
            out[i + j] += x * y;
        }
    }
    out
}

fn binomial_f(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    let mut acc = 1.0f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn rho_closed_form_and_identity() {
        // Hand-solved case: 1/rho - rho = 3/2  =>  rho = 1/2.
        assert!((rho_of_sigma(0.75).unwrap() - 0.5).abs() < 1e-15);
        // sigma -> 0+ gives rho -> 1.
        assert!((rho_of_sigma(1e-12).unwrap() - 1.0).abs() < 1e-11);
        assert!(rho_of_sigma(0.0).is_err());
        assert!(rho_of_sigma(1.0).is_err());
    }

    #[test]
    fn rho_identity_many_sigmas() {
        // 1/rho - rho = 2 sigma to double precision on a deterministic sweep.
        for i in 1..=10_000 {
            let sigma = i as f64 / 10_001.0;
            let rho = rho_of_sigma(sigma).unwrap();
            assert!((1.0 / rho - rho - 2.0 * sigma).abs() < 1e-12 * (1.0 + 2.0 * sigma));
        }
    }

    #[test]
    fn multiply_unit_and_monomials() {
        let n = 8;
        let one = PolarizedSeries::constant(C64::new(1.0, 0.0), n, 0.2);
        let mut b = PolarizedSeries::zeros(n, 0.2);
        b.set(2, -1, C64::new(0.5, -1.5));
        b.set(-3, 0, C64::new(2.0, 0.0));
        let p = one.multiply(&b);
        for j in -(n as i64)..=n as i64 {
            for k in -(n as i64)..=n as i64 {
                assert!((p.get(j, k) - b.get(j, k)).norm() < TOL);
            }
        }
        // z * wbar -> single coefficient at (1,1).
        let z = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 0, n, 0.2);
        let w = PolarizedSeries::monomial(C64::new(1.0, 0.0), 0, 1, n, 0.2);
        let zw = z.multiply(&w);
        assert!((zw.get(1, 1) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!(zw.coeff_l1() - 1.0 < TOL);
    }

    #[test]
    fn dbar_monomials() {
        let n = 8;
        // wbar^2 -> 2 wbar
        let a = PolarizedSeries::monomial(C64::new(1.0, 0.0), 0, 2, n, 0.2);
        let d = a.dbar_w(0.1).unwrap();
        assert!((d.get(0, 1) - C64::new(2.0, 0.0)).norm() < TOL);
        assert!((d.coeff_l1() - 2.0).abs() < TOL);
        // z^3 (no wbar dependence) -> 0
        let h = PolarizedSeries::monomial(C64::new(1.0, 0.0), 3, 0, n, 0.2);
        assert!(h.dbar_w(0.1).unwrap().coeff_sup() < TOL);
        // scale must strictly shrink
        assert!(a.dbar_w(0.2).is_err());
    }

    #[test]
    fn diagonal_restriction_polarizes_modulus() {
        let n = 6;
        // zw̄ polarizes |z|^2: restriction at r e^{i theta} equals r^2.
        let a = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 1, n, 0.2);
        let z = C64::from_polar(1.1, 0.7);
        assert!((a.restrict_diagonal(z) - C64::new(1.21, 0.0)).norm() < TOL);
        let one = PolarizedSeries::constant(C64::new(1.0, 0.0), n, 0.2);
        assert!((one.restrict_diagonal(C64::new(0.93, 0.2)) - C64::new(1.0, 0.0)).norm() < TOL);
    }

    #[test]
    fn restrict_circle_collapses_diagonals() {
        let n = 6;
        let a = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 1, n, 0.2);
        let r = a.restrict_circle();
        assert!((r.get(0) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!(r.coeff_l1() - 1.0 < TOL);
        let b = PolarizedSeries::monomial(C64::new(1.0, 0.0), 2, 0, n, 0.2);
        assert!((b.restrict_circle().get(2) - C64::new(1.0, 0.0)).norm() < TOL);
    }

    #[test]
    fn weierstrass_divide_exact_cases() {
        let n = 8;
        let sigma = 0.2;
        // 1 - z wbar -> 1
        let mut a = PolarizedSeries::zeros(n, sigma);
        a.set(0, 0, C64::new(1.0, 0.0));
        a.set(1, 1, C64::new(-1.0, 0.0));
        let g = a.weierstrass_divide(1e-12).unwrap();
        assert!((g.get(0, 0) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!((g.coeff_l1() - 1.0).abs() < TOL);
        // sign case: z wbar - 1 -> -1
        let gm = a.scale(C64::new(-1.0, 0.0)).weierstrass_divide(1e-12).unwrap();
        assert!((gm.get(0, 0) + C64::new(1.0, 0.0)).norm() < TOL);
        // (1 - z wbar)(z + wbar) -> z + wbar  (multiply-back identity)
        let mut zpw = PolarizedSeries::zeros(n, sigma);
        zpw.set(1, 0, C64::new(1.0, 0.0));
        zpw.set(0, 1, C64::new(1.0, 0.0));
        let prod = a.multiply(&zpw);
        let q = prod.weierstrass_divide(1e-12).unwrap();
        assert!((q.get(1, 0) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!((q.get(0, 1) - C64::new(1.0, 0.0)).norm() < TOL);
        assert!((q.coeff_l1() - 2.0).abs() < TOL);
        // non-divisible input is rejected
        let bad = PolarizedSeries::constant(C64::new(1.0, 0.0), n, sigma);
        assert!(matches!(
            bad.weierstrass_divide(1e-12),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn sup_norm_constant_and_monomial() {
        let n = 16;
        let c = PolarizedSeries::constant(C64::new(-3.0, 4.0), n, 0.2);
        assert!((c.sup_norm(0.2) - 5.0).abs() < 1e-10);
        // sup |z| over the annulus is ~ 1/rho(sigma).
        let z = PolarizedSeries::monomial(C64::new(1.0, 0.0), 1, 0, n, 0.2);
        let sup = z.sup_norm(0.1);
        let expect = 1.0 / rho_of_sigma(0.1).unwrap();
        assert!((sup - expect).abs() < 1e-6 * expect);
        // nesting: smaller scale, no larger sup
        assert!(z.sup_norm(0.05) <= z.sup_norm(0.1) + 1e-12);
    }

    #[test]
    fn io_round_trip() {
        let n = 5;
        let mut a = PolarizedSeries::zeros(n, 0.17);
        a.set(-3, 2, C64::new(1.25e-3, -7.5));
        a.set(0, 0, C64::new(std::f64::consts::PI, 0.0));
        let mut buf = Vec::new();
        a.write_to(&mut buf).unwrap();
        let b = PolarizedSeries::read_from(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(a.degree(), b.degree());
        assert!((a.sigma() - b.sigma()).abs() < 1e-15);
        for j in -(n as i64)..=n as i64 {
            for k in -(n as i64)..=n as i64 {
                assert!((a.get(j, k) - b.get(j, k)).norm() < 1e-15);
            }
        }

        let mut c = CircleSeries::zeros(n, 0.3);
        c.set(-7, C64::new(0.5, 0.25));
        c.set(4, C64::new(-1.0, 1e-9));
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        let d = CircleSeries::read_from(&mut std::io::BufReader::new(&buf[..])).unwrap();
        assert!((c.get(-7) - d.get(-7)).norm() < 1e-15);
        assert!((c.get(4) - d.get(4)).norm() < 1e-15);
    }

    #[test]
    fn circle_eval_and_conj() {
        let n = 4;
        let mut f = CircleSeries::zeros(n, 0.2);
        f.set(2, C64::new(1.0, 0.0));
        f.set(0, C64::new(3.0, 0.0));
        f.set(-1, C64::new(0.0, 2.0));
        let z = C64::from_polar(1.0, 0.9);
        let direct = z.powi(2) + C64::new(3.0, 0.0) + C64::new(0.0, 2.0) / z;
        assert!((f.eval(z) - direct).norm() < TOL);
        let fc = f.conj_on_circle();
        assert!((fc.eval(z) - direct.conj()).norm() < TOL);
    }
}

#[cfg(test)]
mod contact_tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    /// z * wbar as a contact series: 1 - u.
    fn q_series(d_max: usize, u_max: usize, sigma: f64) -> ContactSeries {
        let mut q = ContactSeries::zeros(d_max, u_max, sigma);
        q.set(0, 0, c(1.0, 0.0));
        q.set(0, 1, c(-1.0, 0.0));
        q
    }

    /// Random-ish near-diagonal test point with |u| small.
    fn test_point() -> (C64, C64) {
        let z = C64::from_polar(1.04, 0.37);
        let w = z + c(0.03, -0.05);
        (z, w.conj())
    }

    #[test]
    fn derivatives_of_q_are_exact() {
        let q = q_series(8, 6, 0.2);
        // d/dwbar (z wbar) = z.
        let db = q.dbar_w(0.1).unwrap();
        for d in -8i64..=8 {
            for n in 0..=6 {
                let want = if d == 1 && n == 0 { 1.0 } else { 0.0 };
                assert_eq!(db.get(d, n), c(want, 0.0), "dbar at ({d},{n})");
            }
        }
        // d/dz (z wbar) = wbar = z^{-1}(1 - u).
        let dz = q.d_z(0.1).unwrap();
        assert_eq!(dz.get(-1, 0), c(1.0, 0.0));
        assert_eq!(dz.get(-1, 1), c(-1.0, 0.0));
        assert_eq!(dz.get(0, 0), c(0.0, 0.0));
    }

    #[test]
    fn eval_and_multiply_agree_pointwise() {
        let mut f = ContactSeries::zeros(8, 10, 0.2);
        f.set(2, 0, c(0.3, 0.1));
        f.set(-1, 1, c(-0.2, 0.4));
        f.set(0, 3, c(0.05, 0.0));
        let mut g = ContactSeries::zeros(8, 10, 0.2);
        g.set(1, 0, c(1.0, -0.5));
        g.set(-3, 2, c(0.7, 0.2));
        let (z, wbar) = test_point();
        let prod = f.multiply(&g);
        let want = f.eval(z, wbar) * g.eval(z, wbar);
        assert!(
            (prod.eval(z, wbar) - want).norm() < 1e-12,
            "product eval mismatch: {:?} vs {:?}",
            prod.eval(z, wbar),
            want
        );
    }

    #[test]
    fn division_by_contact_factor_is_exact_shift() {
        let mut f = ContactSeries::zeros(4, 8, 0.2);
        f.set(1, 2, c(2.0, 0.0));
        f.set(-2, 3, c(0.0, 1.0));
        let g = f.div_u(2, 1e-14).unwrap();
        assert_eq!(g.get(1, 0), c(2.0, 0.0));
        assert_eq!(g.get(-2, 1), c(0.0, 1.0));
        assert_eq!(g.mul_u(2), f);
        // A series not vanishing on the diagonal must be rejected.
        let mut bad = f.clone();
        bad.set(0, 0, c(1.0, 0.0));
        assert!(matches!(bad.div_u(1, 1e-10), Err(Error::NotDivisible { .. })));
    }

    #[test]
    fn conjugation_of_monomial_matches_binomials() {
        // conj(z^2) = wbar^2 = z^{-2}(1 - u)^2.
        let mut f = ContactSeries::zeros(8, 6, 0.2);
        f.set(2, 0, c(0.0, 1.0));
        let (g, dropped) = f.conj_series();
        assert_eq!(dropped, 0.0);
        assert_eq!(g.get(-2, 0), c(0.0, -1.0));
        assert_eq!(g.get(-2, 1), c(0.0, 2.0));
        assert_eq!(g.get(-2, 2), c(0.0, -1.0));
        // Pointwise: conj(f)(z, wbar) = conj(f(conj(wbar)... )) — check on the
        // swap identity conj(f)(z, wbar) = conj(f(conj(wbar), conj(z))).
        let (z, wbar) = test_point();
        let want = f.eval(wbar.conj(), z.conj()).conj();
        assert!((g.eval(z, wbar) - want).norm() < 1e-12);
    }

    #[test]
    fn circle_embeddings_restrict_back() {
        let mut cs = CircleSeries::zeros(4, 0.2);
        cs.set(-3, c(0.4, 0.1));
        cs.set(0, c(1.0, 0.0));
        cs.set(5, c(0.01, -0.02));
        for maker in [
            ContactSeries::from_circle_as_z,
            ContactSeries::from_circle_as_wbar,
            ContactSeries::harmonic_extension,
        ] {
            let (f, dropped) = maker(&cs, 16, 24, );
            assert_eq!(dropped, 0.0);
            let back = f.restrict_circle();
            for d in -8i64..=8 {
                assert!((back.get(d) - cs.get(d)).norm() < 1e-13, "mode {d}");
            }
        }
    }

    #[test]
    fn harmonic_extension_matches_negative_wbar_powers() {
        // Mode +3 extends as wbar^{-3}; check pointwise near the circle.
        let mut cs = CircleSeries::zeros(4, 0.2);
        cs.set(3, c(1.0, 0.0));
        let (f, dropped) = ContactSeries::harmonic_extension(&cs, 16, 48);
        assert_eq!(dropped, 0.0);
        let (z, wbar) = test_point();
        let want = wbar.powi(-3);
        assert!(
            (f.eval(z, wbar) - want).norm() < 1e-10,
            "{:?} vs {want:?}",
            f.eval(z, wbar)
        );
    }

    #[test]
    fn from_polarized_converts_mixed_monomials() {
        let mut p = PolarizedSeries::zeros(4, 0.2);
        p.set(1, 2, c(0.5, -0.3)); // z wbar^2
        p.set(-2, 0, c(0.0, 0.7)); // z^{-2}
        p.set(0, -1, c(0.2, 0.0)); // wbar^{-1}
        let (f, dropped) = ContactSeries::from_polarized(&p, 12, 24);
        assert_eq!(dropped, 0.0);
        let (z, wbar) = test_point();
        let want = c(0.5, -0.3) * z * wbar * wbar + c(0.0, 0.7) * z.powi(-2)
            + c(0.2, 0.0) / wbar;
        assert!((f.eval(z, wbar) - want).norm() < 1e-11);
    }

    #[test]
    fn u_adic_sqrt_of_radial_profile() {
        // S with g_0(n) = 1/(2(n+2)): level structure of the rotation-
        // invariant defect quotient. Hand values: y_0 = 1/2, y_1 = 1/6.
        let mut s = ContactSeries::zeros(8, 16, 0.2);
        for n in 0..=16usize {
            s.set(0, n, c(0.5 / (n as f64 + 2.0), 0.0));
        }
        let y = s.contact_sqrt().unwrap();
        assert!((y.get(0, 0) - c(0.5, 0.0)).norm() < 1e-14);
        assert!((y.get(0, 1) - c(1.0 / 6.0, 0.0)).norm() < 1e-14);
        let back = y.multiply(&y);
        assert!(back.sub(&s).coeff_sup() < 1e-13);
    }

    #[test]
    fn u_adic_inverse_round_trips() {
        // The reciprocal of 2 + 0.3 z decays like 0.15^|d|; d_max = 16 puts
        // the Laurent truncation below the assertion tolerance.
        let mut f = ContactSeries::zeros(16, 12, 0.2);
        f.set(0, 0, c(2.0, 0.0));
        f.set(1, 0, c(0.3, 0.1)); // winding-safe perturbation
        f.set(-1, 1, c(0.1, -0.2));
        f.set(0, 2, c(0.05, 0.0));
        let h = f.contact_inverse().unwrap();
        let one = f.multiply(&h);
        let mut residual = one.clone();
        residual.set(0, 0, one.get(0, 0) - c(1.0, 0.0));
        assert!(residual.coeff_sup() < 1e-12, "sup {}", residual.coeff_sup());
        // A restriction with a zero on the circle must be rejected.
        let mut bad = ContactSeries::zeros(8, 4, 0.2);
        bad.set(1, 0, c(1.0, 0.0));
        bad.set(-1, 0, c(1.0, 0.0)); // z + 1/z vanishes at +-i
        assert!(bad.contact_inverse().is_err());
    }

    #[test]
    fn inverse_handles_odd_winding() {
        // f_0 = z has winding 1; no Laurent log/sqrt exists but the
        // reciprocal is just z^{-1}.
        let mut f = ContactSeries::zeros(8, 6, 0.2);
        f.set(1, 0, c(1.0, 0.0));
        f.set(0, 1, c(0.25, 0.0));
        let h = f.contact_inverse().unwrap();
        let (z, wbar) = test_point();
        let want = 1.0 / f.eval(z, wbar);
        assert!((h.eval(z, wbar) - want).norm() < 1e-10);
    }

    #[test]
    fn sup_norm_sees_near_diagonal_values() {
        // f = u has sup close to 2 sigma * (outer radius) on the window.
        let mut f = ContactSeries::zeros(8, 6, 0.2);
        f.set(0, 1, c(1.0, 0.0));
        let sigma = 0.1;
        let sup = f.sup_norm(sigma);
        // |u| <= |1 - |z|^2| + |z||z - w|, roughly 4 sigma at the outer
        // radius of the annulus.
        assert!(sup > 1.8 * sigma && sup < 5.0 * sigma, "sup {sup}");
        // Constants are reproduced exactly.
        let g = ContactSeries::constant(c(0.0, 3.0), 8, 6, 0.2);
        assert!((g.sup_norm(sigma) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coeff_sup_flags_non_finite_entries() {
        let mut f = ContactSeries::zeros(4, 4, 0.2);
        f.set(0, 0, c(f64::NAN, 0.0));
        assert!(f.coeff_sup().is_infinite());
        let mut p = PolarizedSeries::zeros(4, 0.2);
        p.set(0, 0, c(f64::NAN, 0.0));
        assert!(p.coeff_sup().is_infinite());
    }

    #[test]
    fn shift_and_scale_compose() {
        let mut f = ContactSeries::zeros(4, 4, 0.2);
        f.set(1, 1, c(1.0, 1.0));
        let g = f.shift_z(-2).scale(c(2.0, 0.0));
        assert_eq!(g.get(-1, 1), c(2.0, 2.0));
        assert_eq!(g.coeff_sup(), f.scale(c(2.0, 0.0)).coeff_sup());
    }
}
