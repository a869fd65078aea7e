//! Matrix-valued inner product `⟨f, g⟩_* = ∫ f gᵀ` on sampled vector
//! functions, together with the small m×m matrix type it produces.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar_wavelet::SampledFunction;

/// Dense real m×m matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixM {
    m: usize,
    data: Vec<f64>,
}

impl MatrixM {
    pub fn zeros(m: usize) -> Self {
        assert!(m >= 1, "matrix order must be positive");
        MatrixM { m, data: vec![0.0; m * m] }
    }

    /// The generalized Kronecker symbol `δ I`.
    pub fn identity(m: usize) -> Self {
        let mut a = Self::zeros(m);
        for i in 0..m {
            a.data[i * m + i] = 1.0;
        }
        a
    }

    pub fn filled(m: usize, value: f64) -> Self {
        assert!(m >= 1, "matrix order must be positive");
        MatrixM { m, data: vec![value; m * m] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if m == 0 || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("rows must form a non-empty square matrix".into()));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("matrix entries must be finite".into()));
        }
        Ok(MatrixM { m, data })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.m + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.m + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.m);
        for i in 0..self.m {
            for j in 0..self.m {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &MatrixM) -> Result<MatrixM> {
        self.same_order(other)?;
        let m = self.m;
        let mut out = Self::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.data[i * m + j] = (0..m).map(|l| self.get(i, l) * other.get(l, j)).sum();
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &MatrixM) -> Result<MatrixM> {
        self.same_order(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(MatrixM { m: self.m, data })
    }

    pub fn scale(&self, factor: f64) -> MatrixM {
        MatrixM { m: self.m, data: self.data.iter().map(|v| v * factor).collect() }
    }

    /// Maximum absolute column sum.
    pub fn norm1(&self) -> f64 {
        (0..self.m).map(|j| (0..self.m).map(|i| self.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// One CSV row per matrix row, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.m {
            let row: Vec<String> = (0..self.m).map(|j| format!("{:.16e}", self.get(i, j))).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    fn same_order(&self, other: &MatrixM) -> Result<()> {
        if self.m != other.m {
            return Err(Error::Dimension(format!("matrix orders {} and {} differ", self.m, other.m)));
        }
        Ok(())
    }
}

/// Maximum absolute column sum of `a`.
pub fn norm1(a: &MatrixM) -> f64 {
    a.norm1()
}

/// Entrywise product.
pub fn hadamard(a: &MatrixM, b: &MatrixM) -> Result<MatrixM> {
    a.same_order(b)?;
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect();
    Ok(MatrixM { m: a.m, data })
}

/// A real function of d variables sampled on a dyadic grid, stored row-major
/// over the box `start[i] .. start[i] + shape[i]` (grid indices), zero outside.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledField {
    level: u32,
    start: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl SampledField {
    pub fn new(level: u32, start: Vec<i64>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if start.is_empty() || start.len() != shape.len() {
            return Err(Error::Dimension("start and shape must have the same positive length".into()));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::Dimension(format!("shape {shape:?} does not match {} values", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("sampled values must be finite".into()));
        }
        Ok(SampledField { level, start, shape, values })
    }

    pub fn zero(level: u32, dim: usize) -> Self {
        SampledField { level, start: vec![0; dim], shape: vec![0; dim], values: Vec::new() }
    }

    pub fn from_1d(f: &SampledFunction) -> Self {
        SampledField { level: f.level(), start: vec![f.start()], shape: vec![f.len()], values: f.values().to_vec() }
    }

    /// Separable product `f_1(x_1) ⋯ f_d(x_d)`.
    pub fn outer(factors: &[SampledFunction]) -> Result<Self> {
        let first = factors.first().ok_or_else(|| Error::Dimension("no factors".into()))?;
        if factors.iter().any(|f| f.level() != first.level()) {
            return Err(Error::Resolution("factors sampled at different levels".into()));
        }
        let mut values = vec![1.0];
        for f in factors {
            let mut next = Vec::with_capacity(values.len() * f.len());
            for &a in &values {
                next.extend(f.values().iter().map(|b| a * b));
            }
            values = next;
        }
        Ok(SampledField {
            level: first.level(),
            start: factors.iter().map(|f| f.start()).collect(),
            shape: factors.iter().map(|f| f.len()).collect(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn start(&self) -> &[i64] {
        &self.start
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Volume of one grid cell.
    pub fn cell(&self) -> f64 {
        (-((self.level as usize * self.dim()) as f64)).exp2()
    }

    fn end(&self, axis: usize) -> i64 {
        self.start[axis] + self.shape[axis] as i64
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.shape[a + 1];
        }
        strides
    }

    /// Value at a grid multi-index, zero outside the box.
    pub fn at(&self, idx: &[i64]) -> f64 {
        let strides = self.strides();
        let mut flat = 0;
        for a in 0..self.dim() {
            if idx[a] < self.start[a] || idx[a] >= self.end(a) {
                return 0.0;
            }
            flat += (idx[a] - self.start[a]) as usize * strides[a];
        }
        self.values[flat]
    }

    fn check_compatible(&self, other: &SampledField) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("dimensions {} and {} differ", self.dim(), other.dim())));
        }
        if self.level != other.level {
            return Err(Error::Resolution(format!("grid levels {} and {} differ", self.level, other.level)));
        }
        Ok(())
    }

    /// Left-endpoint quadrature of the product over the common box.
    pub fn inner(&self, other: &SampledField) -> Result<f64> {
        self.check_compatible(other)?;
        let d = self.dim();
        let lo: Vec<i64> = (0..d).map(|a| self.start[a].max(other.start[a])).collect();
        let hi: Vec<i64> = (0..d).map(|a| self.end(a).min(other.end(a))).collect();
        if (0..d).any(|a| hi[a] <= lo[a]) {
            return Ok(0.0);
        }
        let sa = self.strides();
        let sb = other.strides();
        let inner_len = (hi[d - 1] - lo[d - 1]) as usize;
        let outer_shape: Vec<usize> = (0..d - 1).map(|a| (hi[a] - lo[a]) as usize).collect();
        let mut counter = vec![0usize; d - 1];
        let mut acc = 0.0;
        loop {
            let mut oa = (lo[d - 1] - self.start[d - 1]) as usize;
            let mut ob = (lo[d - 1] - other.start[d - 1]) as usize;
            for a in 0..d - 1 {
                let pos = lo[a] + counter[a] as i64;
                oa += (pos - self.start[a]) as usize * sa[a];
                ob += (pos - other.start[a]) as usize * sb[a];
            }
            let x = &self.values[oa..oa + inner_len];
            let y = &other.values[ob..ob + inner_len];
            acc += x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
            // odometer over the leading axes
            let mut a = d - 1;
            loop {
                if a == 0 {
                    return Ok(acc * self.cell());
                }
                a -= 1;
                counter[a] += 1;
                if counter[a] < outer_shape[a] {
                    break;
                }
                counter[a] = 0;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.cell()).sqrt()
    }

    /// Copy of `self` over a larger box.
    pub fn padded(&self, start: &[i64], shape: &[usize]) -> Result<SampledField> {
        let d = self.dim();
        if start.len() != d || shape.len() != d {
            return Err(Error::Dimension("padding box has the wrong dimension".into()));
        }
        if self.values.is_empty() {
            return Ok(SampledField {
                level: self.level,
                start: start.to_vec(),
                shape: shape.to_vec(),
                values: vec![0.0; shape.iter().product()],
            });
        }
        for a in 0..d {
            if self.start[a] < start[a] || self.end(a) > start[a] + shape[a] as i64 {
                return Err(Error::Dimension("padding box does not contain the field".into()));
            }
        }
        let mut out = SampledField {
            level: self.level,
            start: start.to_vec(),
            shape: shape.to_vec(),
            values: vec![0.0; shape.iter().product()],
        };
        let so = out.strides();
        let ss = self.strides();
        let inner_len = self.shape[d - 1];
        let rows: usize = self.shape[..d - 1].iter().product();
        for r in 0..rows {
            let mut rem = r;
            let mut src = 0;
            let mut dst = (self.start[d - 1] - start[d - 1]) as usize;
            for a in (0..d - 1).rev() {
                let c = rem % self.shape[a];
                rem /= self.shape[a];
                src += c * ss[a];
                dst += (c + (self.start[a] - start[a]) as usize) * so[a];
            }
            out.values[dst..dst + inner_len].copy_from_slice(&self.values[src..src + inner_len]);
        }
        Ok(out)
    }

    /// `alpha · self + other` over the union box.
    pub fn axpy(&self, alpha: f64, other: &SampledField) -> Result<SampledField> {
        self.check_compatible(other)?;
        let (start, shape) = union_box(&[self, other]);
        let mut a = self.padded(&start, &shape)?;
        let b = other.padded(&start, &shape)?;
        for (x, y) in a.values.iter_mut().zip(&b.values) {
            *x = alpha * *x + y;
        }
        Ok(a)
    }

    pub fn scaled(&self, factor: f64) -> SampledField {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= factor);
        out
    }
}

fn union_box(fields: &[&SampledField]) -> (Vec<i64>, Vec<usize>) {
    let nonempty: Vec<&&SampledField> = fields.iter().filter(|f| !f.values.is_empty()).collect();
    let d = fields[0].dim();
    if nonempty.is_empty() {
        return (vec![0; d], vec![0; d]);
    }
    let start: Vec<i64> = (0..d).map(|a| nonempty.iter().map(|f| f.start[a]).min().unwrap()).collect();
    let end: Vec<i64> = (0..d).map(|a| nonempty.iter().map(|f| f.end(a)).max().unwrap()).collect();
    let shape = (0..d).map(|a| (end[a] - start[a]) as usize).collect();
    (start, shape)
}

/// m sampled channels sharing grid level, dimension and support box.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSampledFunction {
    channels: Vec<SampledField>,
}

impl VectorSampledFunction {
    /// Pads all channels to their common bounding box.
    pub fn new(channels: Vec<SampledField>) -> Result<Self> {
        let first = channels.first().ok_or_else(|| Error::Dimension("no channels".into()))?;
        for c in &channels[1..] {
            first.check_compatible(c)?;
        }
        let refs: Vec<&SampledField> = channels.iter().collect();
        let (start, shape) = union_box(&refs);
        let channels = channels.iter().map(|c| c.padded(&start, &shape)).collect::<Result<Vec<_>>>()?;
        Ok(VectorSampledFunction { channels })
    }

    pub fn from_1d(channels: &[SampledFunction]) -> Result<Self> {
        Self::new(channels.iter().map(SampledField::from_1d).collect())
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn dim(&self) -> usize {
        self.channels[0].dim()
    }

    pub fn level(&self) -> u32 {
        self.channels[0].level()
    }

    pub fn channels(&self) -> &[SampledField] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &SampledField {
        &self.channels[i]
    }

    /// `‖f‖ = (Σ_i ‖f_i‖²)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        self.channels.iter().map(|c| c.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Channel-mixing `A · f`.
    pub fn mixed(&self, a: &MatrixM) -> Result<VectorSampledFunction> {
        if a.order() != self.m() {
            return Err(Error::Dimension(format!("matrix order {} does not match {} channels", a.order(), self.m())));
        }
        let template = &self.channels[0];
        let channels = (0..self.m())
            .map(|i| {
                let mut values = vec![0.0; template.values.len()];
                for (j, c) in self.channels.iter().enumerate() {
                    let w = a.get(i, j);
                    for (v, x) in values.iter_mut().zip(&c.values) {
                        *v += w * x;
                    }
                }
                SampledField { values, ..template.clone() }
            })
            .collect();
        Ok(VectorSampledFunction { channels })
    }

    /// `alpha · self + other`, channelwise.
    pub fn axpy(&self, alpha: f64, other: &VectorSampledFunction) -> Result<VectorSampledFunction> {
        if self.m() != other.m() {
            return Err(Error::Dimension(format!("channel counts {} and {} differ", self.m(), other.m())));
        }
        let channels =
            self.channels.iter().zip(&other.channels).map(|(a, b)| a.axpy(alpha, b)).collect::<Result<Vec<_>>>()?;
        VectorSampledFunction::new(channels)
    }
}

/// `⟨f, g⟩_*`: entry `(i, j)` is the quadrature of `f_i g_j`.
pub fn star(f: &VectorSampledFunction, g: &VectorSampledFunction) -> Result<MatrixM> {
    if f.m() != g.m() {
        return Err(Error::Dimension(format!("channel counts {} and {} differ", f.m(), g.m())));
    }
    let m = f.m();
    let mut out = MatrixM::zeros(m);
    for i in 0..m {
        for j in 0..m {
            out.set(i, j, f.channels[i].inner(&g.channels[j])?);
        }
    }
    Ok(out)
}

/// `⟨f, A g⟩_*`, checked against `⟨f, g⟩_* Aᵀ`.
pub fn star_with_matrix(f: &VectorSampledFunction, a: &MatrixM, g: &VectorSampledFunction) -> Result<MatrixM> {
    let direct = star(f, &g.mixed(a)?)?;
    let factored = star(f, g)?.mul(&a.transpose())?;
    let gap = direct.sub(&factored)?.max_abs();
    let scale = 1.0_f64.max(factored.max_abs());
    if gap > 1e-12 * scale {
        return Err(Error::Consistency(format!("⟨f, Ag⟩_* and ⟨f, g⟩_* Aᵀ differ by {gap:e}")));
    }
    Ok(direct)
}
