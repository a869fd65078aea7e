//! Scalar orthonormal wavelet filters and dyadic-grid sampling of φ and ψ.
//!
//! Filters are stored with an integer start offset; `g_k = (-1)^k h_{2o+L-1-k}`
//! shares the offset `o` of `h`, so for the usual `o = 0` both φ and ψ live on
//! `[0, L-1]`.

use std::f64::consts::SQRT_2;
use std::fmt::Write as _;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest supported Daubechies order.
pub const MAX_DAUBECHIES: usize = 10;

/// Which of the two generators of a scalar MRA.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AtomKind {
    Scaling,
    Wavelet,
}

impl AtomKind {
    pub fn symbol(self) -> &'static str {
        match self {
            AtomKind::Scaling => "phi",
            AtomKind::Wavelet => "psi",
        }
    }

    pub fn from_symbol(s: &str) -> Result<Self> {
        match s {
            "phi" | "scaling" => Ok(AtomKind::Scaling),
            "psi" | "wavelet" => Ok(AtomKind::Wavelet),
            other => Err(Error::Parameter(format!("unknown atom kind `{other}`"))),
        }
    }
}

/// Orthonormal two-scale filter pair `(h, g)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarFilter {
    name: String,
    offset: i64,
    h: Vec<f64>,
    g: Vec<f64>,
    // √2·h and √2·g, the coefficients of the two-scale relation itself
    ch: Vec<f64>,
    cg: Vec<f64>,
    vanishing_moments: usize,
}

/// Measured deviations of a filter from the orthonormal wavelet axioms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterAxioms {
    /// `|Σ h_k - √2|`
    pub sum: f64,
    /// `max_n |Σ h_k h_{k+2n} - δ_n|`
    pub orthonormality: f64,
    /// `|Σ g_k|`
    pub wavelet_sum: f64,
    /// `max_{p<N} |Σ g_k k^p|`
    pub moments: f64,
}

impl FilterAxioms {
    pub const SUM_TOL: f64 = 1e-12;
    pub const ORTHO_TOL: f64 = 1e-12;
    pub const MOMENT_TOL: f64 = 1e-10;

    pub fn holds(&self) -> bool {
        self.sum <= Self::SUM_TOL
            && self.orthonormality <= Self::ORTHO_TOL
            && self.wavelet_sum <= Self::SUM_TOL
            && self.moments <= Self::MOMENT_TOL
    }
}

impl ScalarFilter {
    /// Builds a filter from its scaling taps; the wavelet taps are derived.
    pub fn new(name: &str, offset: i64, h: Vec<f64>, vanishing_moments: usize) -> Result<Self> {
        let ch = h.iter().map(|v| v * SQRT_2).collect();
        Self::assemble(name, offset, h, ch, vanishing_moments)
    }

    /// Builds a filter from the two-scale coefficients `c = √2·h`
    /// (`φ(x) = Σ c_k φ(2x - k)`, `Σ c_k = 2`).
    pub fn from_refinement_taps(name: &str, offset: i64, c: Vec<f64>, vanishing_moments: usize) -> Result<Self> {
        let h = c.iter().map(|v| v * std::f64::consts::FRAC_1_SQRT_2).collect();
        Self::assemble(name, offset, h, c, vanishing_moments)
    }

    fn assemble(name: &str, offset: i64, h: Vec<f64>, ch: Vec<f64>, vanishing_moments: usize) -> Result<Self> {
        if h.len() < 2 || h.len() % 2 != 0 {
            return Err(Error::Parameter(format!("filter length must be even and at least 2, got {}", h.len())));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("filter taps must be finite".into()));
        }
        if vanishing_moments == 0 {
            return Err(Error::Parameter("vanishing moments must be positive".into()));
        }
        let g = mirror(offset, &h);
        let cg = mirror(offset, &ch);
        Ok(ScalarFilter { name: name.to_string(), offset, h, g, ch, cg, vanishing_moments })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    /// Two-scale coefficients `√2·h` or `√2·g`.
    pub fn refinement_taps(&self, kind: AtomKind) -> &[f64] {
        match kind {
            AtomKind::Scaling => &self.ch,
            AtomKind::Wavelet => &self.cg,
        }
    }

    pub fn taps(&self, kind: AtomKind) -> &[f64] {
        match kind {
            AtomKind::Scaling => &self.h,
            AtomKind::Wavelet => &self.g,
        }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn vanishing_moments(&self) -> usize {
        self.vanishing_moments
    }

    /// Integer support `[offset, offset + L - 1]` shared by φ and ψ.
    pub fn support(&self) -> (i64, i64) {
        (self.offset, self.offset + self.h.len() as i64 - 1)
    }

    pub fn axioms(&self) -> FilterAxioms {
        let sum = (self.h.iter().sum::<f64>() - SQRT_2).abs();
        let len = self.h.len();
        let mut orthonormality: f64 = 0.0;
        for n in 0..len / 2 {
            let shift = 2 * n;
            let acc: f64 = (0..len - shift).map(|k| self.h[k] * self.h[k + shift]).sum();
            let target = if n == 0 { 1.0 } else { 0.0 };
            orthonormality = orthonormality.max((acc - target).abs());
        }
        let wavelet_sum = self.g.iter().sum::<f64>().abs();
        let moments =
            (0..self.vanishing_moments).map(|p| self.wavelet_filter_moment(p as u32).abs()).fold(0.0, f64::max);
        FilterAxioms { sum, orthonormality, wavelet_sum, moments }
    }

    /// `Σ_k g_k k^p` over the stored taps, evaluated with error-free products
    /// and compensated summation so the result reflects the taps, not the sum.
    pub fn wavelet_filter_moment(&self, p: u32) -> f64 {
        let mut acc = Neumaier::default();
        for (q, &gk) in self.g.iter().enumerate() {
            let k = (self.offset + q as i64) as f64;
            let kp = k.powi(p as i32);
            let prod = gk * kp;
            acc.add(prod);
            acc.add(gk.mul_add(kp, -prod));
        }
        acc.value()
    }
}

// absolute index k = offset + q maps to 2o+L-1-k = o + (L-1-q)
fn mirror(offset: i64, taps: &[f64]) -> Vec<f64> {
    let len = taps.len();
    (0..len)
        .map(|q| {
            let sign = if (offset + q as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            sign * taps[len - 1 - q]
        })
        .collect()
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// The Haar filter `h = (1/√2, 1/√2)`.
pub fn haar_filter() -> ScalarFilter {
    ScalarFilter::from_refinement_taps("haar", 0, vec![1.0, 1.0], 1).expect("haar taps are valid")
}

/// Minimal-phase Daubechies filter with `n` vanishing moments and length `2n`.
pub fn daubechies_filter(n: usize) -> Result<ScalarFilter> {
    if !(1..=MAX_DAUBECHIES).contains(&n) {
        return Err(Error::Parameter(format!("Daubechies order must be in 1..={MAX_DAUBECHIES}, got {n}")));
    }
    if n == 1 {
        return Ok(haar_filter());
    }
    ScalarFilter::from_refinement_taps(&format!("db{n}"), 0, daubechies_taps(n), n)
}

/// Resolves `haar` and `db1`..`db10`.
pub fn filter_by_name(name: &str) -> Result<ScalarFilter> {
    let lower = name.to_ascii_lowercase();
    if lower == "haar" {
        return Ok(haar_filter());
    }
    if let Some(rest) = lower.strip_prefix("db") {
        if let Ok(n) = rest.parse::<usize>() {
            return daubechies_filter(n);
        }
    }
    Err(Error::Parameter(format!("unknown filter `{name}` (expected haar or db1..db10)")))
}

fn binomial(n: u64, k: u64) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn poly_eval(coeffs: &[f64], z: Complex<f64>) -> (Complex<f64>, Complex<f64>) {
    // Horner for value and derivative, coefficients in ascending order.
    let mut value = Complex::new(0.0, 0.0);
    let mut deriv = Complex::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        deriv = deriv * z + value;
        value = value * z + c;
    }
    (value, deriv)
}

fn poly_roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg];
    let mut companion = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        companion[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        companion[(i, deg - 1)] = -coeffs[i] / lead;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|&z0| {
            let mut z = z0;
            for _ in 0..8 {
                let (v, d) = poly_eval(coeffs, z);
                if d.norm() == 0.0 {
                    break;
                }
                let step = v / d;
                z -= step;
                if step.norm() <= 1e-17 * z.norm().max(1.0) {
                    break;
                }
            }
            z
        })
        .collect()
}

fn daubechies_taps(n: usize) -> Vec<f64> {
    let p: Vec<f64> = (0..n as u64).map(|k| binomial(n as u64 - 1 + k, k)).collect();
    let mut poly = vec![Complex::new(1.0, 0.0)];
    for y in poly_roots(&p) {
        let b = Complex::new(1.0, 0.0) - y * 2.0;
        let disc = (b * b - 1.0).sqrt();
        let (z1, z2) = (b + disc, b - disc);
        let z = if z1.norm() > 1.0 { z1 } else { z2 };
        poly = poly_mul(&poly, &[-z, Complex::new(1.0, 0.0)]);
    }
    for _ in 0..n {
        poly = poly_mul(&poly, &[Complex::new(1.0, 0.0), Complex::new(1.0, 0.0)]);
    }
    let re: Vec<f64> = poly.iter().map(|c| c.re).collect();
    let total: f64 = re.iter().sum();
    re.iter().map(|v| 2.0 * v / total).collect()
}

fn poly_mul(a: &[Complex<f64>], b: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let mut out = vec![Complex::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// A real function sampled on the dyadic grid of step `2^-level`, zero
/// outside `[start, start + len) · step`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    start: i64,
    level: u32,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(start: i64, level: u32, values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite sample at index {bad}")));
        }
        Ok(SampledFunction { start, level, values })
    }

    pub fn zero(level: u32) -> Self {
        SampledFunction { start: 0, level, values: Vec::new() }
    }

    /// Grid index of the first sample.
    pub fn start(&self) -> i64 {
        self.start
    }

    /// One past the grid index of the last sample.
    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn step(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Support interval in x units.
    pub fn support(&self) -> (f64, f64) {
        (self.start as f64 * self.step(), self.end() as f64 * self.step())
    }

    /// Value at grid index `idx`, zero outside the stored window.
    pub fn at(&self, idx: i64) -> f64 {
        if idx < self.start || idx >= self.end() {
            0.0
        } else {
            self.values[(idx - self.start) as usize]
        }
    }

    /// Restriction to the coarser grid of step `2^-level`.
    pub fn restrict(&self, level: u32) -> Result<SampledFunction> {
        if level > self.level {
            return Err(Error::Resolution(format!(
                "cannot restrict level {} samples to finer level {level}",
                self.level
            )));
        }
        let r = 1i64 << (self.level - level);
        let first = self.start.div_euclid(r) + i64::from(self.start.rem_euclid(r) != 0);
        let last = (self.end() - 1).div_euclid(r);
        let values = if self.values.is_empty() || last < first {
            Vec::new()
        } else {
            (first..=last).map(|c| self.at(c * r)).collect()
        };
        SampledFunction::new(first, level, values)
    }

    pub fn scaled(&self, factor: f64) -> SampledFunction {
        SampledFunction {
            start: self.start,
            level: self.level,
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# start={} step=2^-{} len={}\n", self.start, self.level, self.values.len());
        for v in &self.values {
            let _ = writeln!(out, "{v:.16e}");
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<SampledFunction> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty sampled-function file".into()))?;
        let rest = header.strip_prefix("# ").ok_or_else(|| Error::Format(format!("bad header `{header}`")))?;
        let mut start = None;
        let mut level = None;
        let mut len = None;
        for field in rest.split_whitespace() {
            let (key, value) =
                field.split_once('=').ok_or_else(|| Error::Format(format!("bad header field `{field}`")))?;
            match key {
                "start" => start = value.parse::<i64>().ok(),
                "step" => level = value.strip_prefix("2^-").and_then(|v| v.parse::<u32>().ok()),
                "len" => len = value.parse::<usize>().ok(),
                _ => return Err(Error::Format(format!("unknown header field `{key}`"))),
            }
        }
        let (start, level, len) = match (start, level, len) {
            (Some(s), Some(l), Some(n)) => (s, l, n),
            _ => return Err(Error::Format(format!("incomplete header `{header}`"))),
        };
        let values = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|e| Error::Format(format!("bad value `{l}`: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != len {
            return Err(Error::Format(format!("header declares {len} values, found {}", values.len())));
        }
        SampledFunction::new(start, level, values)
    }
}

/// Exact values of φ at the integers `offset..offset+L-1`: the fixed point of
/// the integer transfer operator normalized to unit sum.
fn integer_values(filter: &ScalarFilter) -> Vec<f64> {
    let c = filter.refinement_taps(AtomKind::Scaling);
    let n = c.len() - 1;
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let q = 2 * i as i64 - j as i64;
            if q >= 0 && (q as usize) < c.len() {
                a[(i, j)] = c[q as usize];
            }
        }
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let v = a.lu().solve(&b).expect("transfer operator has a one-dimensional fixed space");
    v.iter().copied().collect()
}

/// φ on the level-`level` grid as a raw vector starting at `offset · 2^level`.
/// Points already present on the coarser grid are copied, so every level is
/// an exact restriction of the next.
fn phi_values(filter: &ScalarFilter, level: u32) -> Vec<f64> {
    let c = filter.refinement_taps(AtomKind::Scaling);
    let span = c.len() - 1;
    let mut cur = integer_values(filter);
    for j in 1..=level {
        let len = span << j;
        let half = 1usize << (j - 1);
        let mut next = vec![0.0; len];
        for (i, slot) in next.iter_mut().enumerate() {
            if i % 2 == 0 {
                *slot = cur.get(i / 2).copied().unwrap_or(0.0);
                continue;
            }
            let mut acc = 0.0;
            for (q, &cq) in c.iter().enumerate() {
                let shift = q * half;
                if shift > i {
                    break;
                }
                if let Some(&v) = cur.get(i - shift) {
                    acc += cq * v;
                }
            }
            *slot = acc;
        }
        cur = next;
    }
    cur
}

fn psi_from_phi(filter: &ScalarFilter, phi: &[f64], level: u32) -> Vec<f64> {
    let c = filter.refinement_taps(AtomKind::Wavelet);
    let unit = 1usize << level;
    (0..phi.len())
        .map(|i| {
            let mut acc = 0.0;
            for (q, &cq) in c.iter().enumerate() {
                let shift = q * unit;
                if shift > 2 * i {
                    break;
                }
                if let Some(&v) = phi.get(2 * i - shift) {
                    acc += cq * v;
                }
            }
            acc
        })
        .collect()
}

/// Samples φ or ψ on the grid of step `2^-level` by iterating the two-scale
/// relation from the exact integer values.
pub fn refine_sample(filter: &ScalarFilter, which: AtomKind, level: u32) -> SampledFunction {
    let phi = phi_values(filter, level);
    let start = filter.offset() << level;
    let values = match which {
        AtomKind::Scaling => phi,
        AtomKind::Wavelet => psi_from_phi(filter, &phi, level),
    };
    SampledFunction::new(start, level, values).expect("cascade values are finite")
}

/// Left-endpoint quadrature of `f · g`.
pub fn quad_inner(f: &SampledFunction, g: &SampledFunction) -> Result<f64> {
    if f.level != g.level {
        return Err(Error::Resolution(format!("grid levels differ ({} vs {}); resample first", f.level, g.level)));
    }
    let lo = f.start.max(g.start);
    let hi = f.end().min(g.end());
    if hi <= lo {
        return Ok(0.0);
    }
    let a = &f.values[(lo - f.start) as usize..(hi - f.start) as usize];
    let b = &g.values[(lo - g.start) as usize..(hi - g.start) as usize];
    let acc: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok(acc * f.step())
}

/// Largest moment order accepted by [`moment`].
pub const MAX_MOMENT: u32 = 12;

/// `step · Σ x^p f(x)` over the samples.
pub fn moment(f: &SampledFunction, p: u32) -> Result<f64> {
    if p > MAX_MOMENT {
        return Err(Error::Parameter(format!("moment order {p} exceeds {MAX_MOMENT}")));
    }
    let step = f.step();
    let mut acc = Neumaier::default();
    for (i, &v) in f.values.iter().enumerate() {
        let xp = ((f.start + i as i64) as f64 * step).powi(p as i32);
        let prod = xp * v;
        acc.add(prod);
        acc.add(xp.mul_add(v, -prod));
    }
    Ok(acc.value() * step)
}

/// φ and ψ sampled once at a fixed level; dilated and translated copies are
/// cut out of these samples without re-running the cascade.
#[derive(Clone, Debug)]
pub struct AtomSampler {
    filter: ScalarFilter,
    phi: SampledFunction,
    psi: SampledFunction,
}

impl AtomSampler {
    pub fn new(filter: &ScalarFilter, level: u32) -> Self {
        let phi = refine_sample(filter, AtomKind::Scaling, level);
        let psi = SampledFunction::new(phi.start, level, psi_from_phi(filter, phi.values(), level))
            .expect("cascade values are finite");
        AtomSampler { filter: filter.clone(), phi, psi }
    }

    pub fn filter(&self) -> &ScalarFilter {
        &self.filter
    }

    /// Finest base level held by the sampler.
    pub fn level(&self) -> u32 {
        self.phi.level
    }

    /// `amplitude · atom(2^scale x - shift)` on the grid of step `2^-grid`.
    pub fn sample(&self, kind: AtomKind, scale: u32, shift: i64, amplitude: f64, grid: u32) -> Result<SampledFunction> {
        self.sample_window(kind, scale, shift, amplitude, grid, (i64::MIN, i64::MAX))
    }

    /// Like [`AtomSampler::sample`], restricted to the grid indices `window.0 .. window.1`.
    pub fn sample_window(
        &self,
        kind: AtomKind,
        scale: u32,
        shift: i64,
        amplitude: f64,
        grid: u32,
        window: (i64, i64),
    ) -> Result<SampledFunction> {
        if grid < scale {
            return Err(Error::Resolution(format!("grid level {grid} is coarser than atom scale {scale}")));
        }
        let base_level = grid - scale;
        if base_level > self.level() {
            return Err(Error::Resolution(format!(
                "grid level {grid} at scale {scale} needs base level {base_level}, sampler holds {}",
                self.level()
            )));
        }
        let base = match kind {
            AtomKind::Scaling => &self.phi,
            AtomKind::Wavelet => &self.psi,
        };
        let stride = 1usize << (self.level() - base_level);
        let count = self.filter.len() - 1;
        let len = (count << base_level) as i64;
        let start = (self.filter.offset() + shift) << base_level;
        let lo = window.0.max(start);
        let hi = window.1.min(start + len).max(lo);
        let values = ((lo - start)..(hi - start)).map(|i| amplitude * base.values[i as usize * stride]).collect();
        SampledFunction::new(lo, grid, values)
    }
}
