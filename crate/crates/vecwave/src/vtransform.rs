//! Discrete analysis and synthesis of m-channel signals (d = 1) and images
//! (d = 2) with periodic boundaries. Each channel runs through a scalar
//! pyramid shaped after the vector basis; the scalar coefficients are then
//! regrouped into `m × m` matrices, one per vector family and translation.
//!
//! Subband lengths inside one family differ on a finite grid, so a matrix
//! slot is valid only when its translation lies inside the subband of its
//! column. Every scalar coefficient fills exactly one valid slot.

use std::collections::HashMap;
use std::fmt::Write as _;

use ndarray::{Array2, ArrayD, ArrayView1, Axis, IxDyn, Zip};

use crate::error::{Error, Result};
use crate::scalar_wavelet::{AtomKind, ScalarFilter};
use crate::star_product::MatrixM;
use crate::tensor_multiwavelet::enumerate_families;
use crate::vector_basis_nd::BasisND;

/// Largest accepted `log2 N`.
pub const MAX_LOG2_N: u32 = 24;

fn log2_exact(n: usize) -> Result<u32> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Shape(format!("length {n} is not a power of two")));
    }
    let s = n.trailing_zeros();
    if s > MAX_LOG2_N {
        return Err(Error::Size(format!("length 2^{s} exceeds 2^{MAX_LOG2_N}")));
    }
    Ok(s)
}

/// One periodic analysis step: `a_n = Σ h_k x_{2n+k}`, `d_n = Σ g_k x_{2n+k}`.
pub fn analysis_step(x: &[f64], h: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for i in 0..half {
        let mut sa = 0.0;
        let mut sd = 0.0;
        for k in 0..h.len() {
            let v = x[(2 * i + k) % n];
            sa += h[k] * v;
            sd += g[k] * v;
        }
        a[i] = sa;
        d[i] = sd;
    }
    (a, d)
}

/// Adjoint of [`analysis_step`].
pub fn synthesis_step(a: &[f64], d: &[f64], h: &[f64], g: &[f64]) -> Vec<f64> {
    let n = 2 * a.len();
    let mut x = vec![0.0; n];
    for i in 0..a.len() {
        for k in 0..h.len() {
            x[(2 * i + k) % n] += h[k] * a[i] + g[k] * d[i];
        }
    }
    x
}

/// Scalar pyramid of one channel: the coarsest approximation and the detail
/// bands, coarsest first.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid1D {
    pub approx: Vec<f64>,
    pub details: Vec<Vec<f64>>,
}

pub fn dwt_channel(x: &[f64], filter: &ScalarFilter, levels: u32) -> Result<Pyramid1D> {
    let s = log2_exact(x.len())?;
    if levels > s {
        return Err(Error::Parameter(format!("{levels} levels exceed log2 N = {s}")));
    }
    let mut approx = x.to_vec();
    let mut details = Vec::new();
    for _ in 0..levels {
        let (a, d) = analysis_step(&approx, filter.h(), filter.g());
        details.push(d);
        approx = a;
    }
    details.reverse();
    Ok(Pyramid1D { approx, details })
}

pub fn idwt_channel(p: &Pyramid1D, filter: &ScalarFilter) -> Result<Vec<f64>> {
    let mut x = p.approx.clone();
    for d in &p.details {
        if d.len() != x.len() {
            return Err(Error::Shape(format!("detail band of length {} after approximation {}", d.len(), x.len())));
        }
        x = synthesis_step(&x, d, filter.h(), filter.g());
    }
    Ok(x)
}

/// Separable 2D pyramid: per level the bands `(LH, HL, HH)`, where the first
/// letter is the filter along axis 0. Coarsest level first.
#[derive(Clone, Debug, PartialEq)]
pub struct Pyramid2D {
    pub approx: Array2<f64>,
    pub details: Vec<[Array2<f64>; 3]>,
}

fn split_rows(x: &Array2<f64>, f: &ScalarFilter, axis: usize) -> (Array2<f64>, Array2<f64>) {
    let (r, c) = x.dim();
    let (lr, lc) = if axis == 0 { (r / 2, c) } else { (r, c / 2) };
    let mut lo = Array2::zeros((lr, lc));
    let mut hi = Array2::zeros((lr, lc));
    let lanes = if axis == 0 { c } else { r };
    for j in 0..lanes {
        let lane: Vec<f64> = if axis == 0 { x.column(j).to_vec() } else { x.row(j).to_vec() };
        let (a, d) = analysis_step(&lane, f.h(), f.g());
        for (i, (va, vd)) in a.into_iter().zip(d).enumerate() {
            let idx = if axis == 0 { (i, j) } else { (j, i) };
            lo[idx] = va;
            hi[idx] = vd;
        }
    }
    (lo, hi)
}

fn join_rows(lo: &Array2<f64>, hi: &Array2<f64>, f: &ScalarFilter, axis: usize) -> Array2<f64> {
    let (r, c) = lo.dim();
    let (xr, xc) = if axis == 0 { (2 * r, c) } else { (r, 2 * c) };
    let mut x = Array2::zeros((xr, xc));
    let lanes = if axis == 0 { c } else { r };
    for j in 0..lanes {
        let (a, d) = if axis == 0 {
            (lo.column(j).to_vec(), hi.column(j).to_vec())
        } else {
            (lo.row(j).to_vec(), hi.row(j).to_vec())
        };
        for (i, v) in synthesis_step(&a, &d, f.h(), f.g()).into_iter().enumerate() {
            x[if axis == 0 { (i, j) } else { (j, i) }] = v;
        }
    }
    x
}

/// Standard separable periodic 2D DWT of a square image.
pub fn dwt2(x: &Array2<f64>, filter: &ScalarFilter, levels: u32) -> Result<Pyramid2D> {
    let (r, c) = x.dim();
    if r != c {
        return Err(Error::Shape(format!("image is {r}×{c}, expected square")));
    }
    let s = log2_exact(r)?;
    if levels > s {
        return Err(Error::Parameter(format!("{levels} levels exceed log2 N = {s}")));
    }
    let mut approx = x.clone();
    let mut details = Vec::new();
    for _ in 0..levels {
        let (l, h) = split_rows(&approx, filter, 0);
        let (ll, lh) = split_rows(&l, filter, 1);
        let (hl, hh) = split_rows(&h, filter, 1);
        details.push([lh, hl, hh]);
        approx = ll;
    }
    details.reverse();
    Ok(Pyramid2D { approx, details })
}

pub fn idwt2(p: &Pyramid2D, filter: &ScalarFilter) -> Result<Array2<f64>> {
    let mut x = p.approx.clone();
    for [lh, hl, hh] in &p.details {
        if lh.dim() != x.dim() || hl.dim() != x.dim() || hh.dim() != x.dim() {
            return Err(Error::Shape("detail bands do not match the approximation".into()));
        }
        let l = join_rows(&x, lh, filter, 1);
        let h = join_rows(hl, hh, filter, 1);
        x = join_rows(&l, &h, filter, 0);
    }
    Ok(x)
}

/// An m-channel signal on `[0, N)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSignal {
    d: usize,
    n: usize,
    channels: Vec<ArrayD<f64>>,
}

impl VectorSignal {
    pub fn new(channels: Vec<ArrayD<f64>>) -> Result<Self> {
        let first = channels.first().ok_or_else(|| Error::Parameter("a signal needs at least one channel".into()))?;
        let d = first.ndim();
        if !(1..=2).contains(&d) {
            return Err(Error::Dimension(format!("signals are 1D or 2D, got d = {d}")));
        }
        let n = first.shape()[0];
        log2_exact(n)?;
        for c in &channels {
            if c.shape().iter().any(|&s| s != n) || c.ndim() != d {
                return Err(Error::Shape(format!("channel shape {:?}, expected {:?}", c.shape(), vec![n; d])));
            }
        }
        Ok(VectorSignal { d, n, channels })
    }

    pub fn from_1d(channels: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(channels.into_iter().map(|c| ArrayD::from_shape_vec(IxDyn(&[c.len()]), c).unwrap()).collect())
    }

    pub fn zeros(d: usize, m: usize, n: usize) -> Result<Self> {
        Self::new(vec![ArrayD::zeros(IxDyn(&vec![n; d])); m])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.channels.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> &[ArrayD<f64>] {
        &self.channels
    }

    pub fn energy(&self) -> f64 {
        self.channels.iter().flat_map(|c| c.iter()).map(|v| v * v).sum()
    }

    pub fn max_abs_diff(&self, other: &VectorSignal) -> Result<f64> {
        if self.channels.len() != other.channels.len() || self.d != other.d || self.n != other.n {
            return Err(Error::Shape("signals differ in shape".into()));
        }
        Ok(self
            .channels
            .iter()
            .zip(&other.channels)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max))
    }

    /// `‖self - other‖ / ‖other‖` (absolute when `other` is zero).
    pub fn relative_error(&self, reference: &VectorSignal) -> Result<f64> {
        self.max_abs_diff(reference)?;
        let diff: f64 = self
            .channels
            .iter()
            .zip(&reference.channels)
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)))
            .sum();
        let norm = reference.energy();
        Ok(if norm == 0.0 { diff.sqrt() } else { (diff / norm).sqrt() })
    }

    pub fn header(&self) -> String {
        format!("VWAV1 d={} m={} n={} dtype=f64le", self.d, self.m(), self.n)
    }

    /// Header line followed by channel-major little-endian doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{}\n", self.header()).into_bytes();
        for c in &self.channels {
            for v in c.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (fields, payload) = split_header(bytes, "VWAV1")?;
        let get = |k: &str| header_field(&fields, k);
        if get("dtype")? != "f64le" {
            return Err(Error::Format("only dtype=f64le is supported".into()));
        }
        let d = parse_usize(get("d")?, "d")?;
        let m = parse_usize(get("m")?, "m")?;
        let n = parse_usize(get("n")?, "n")?;
        if !(1..=2).contains(&d) || m == 0 {
            return Err(Error::Format(format!("bad header values d={d} m={m}")));
        }
        log2_exact(n).map_err(|e| Error::Format(e.to_string()))?;
        let per = n.pow(d as u32);
        let values = decode_f64(payload, m * per)?;
        let channels =
            values.chunks(per).map(|c| ArrayD::from_shape_vec(IxDyn(&vec![n; d]), c.to_vec()).unwrap()).collect();
        Self::new(channels)
    }
}

fn split_header<'a>(bytes: &'a [u8], magic: &str) -> Result<(Vec<(String, String)>, &'a [u8])> {
    let end = bytes.iter().position(|&b| b == b'\n').ok_or_else(|| Error::Format("missing header line".into()))?;
    let line = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not UTF-8".into()))?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(magic) {
        return Err(Error::Format(format!("expected a {magic} header")));
    }
    let fields = parts
        .map(|p| {
            p.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Format(format!("bad header field `{p}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((fields, &bytes[end + 1..]))
}

fn header_field<'a>(fields: &'a [(String, String)], key: &str) -> Result<&'a str> {
    fields
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Format(format!("header lacks `{key}`")))
}

fn parse_usize(v: &str, key: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::Format(format!("`{key}={v}` is not a non-negative integer")))
}

fn decode_f64(payload: &[u8], count: usize) -> Result<Vec<f64>> {
    if payload.len() != 8 * count {
        return Err(Error::Format(format!("payload has {} bytes, expected {}", payload.len(), 8 * count)));
    }
    Ok(payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

/// Per-axis `(kind, scale)` of a subband.
pub type BandKey = Vec<(AtomKind, u32)>;

/// One subband of the vector pyramid, shared by all channels.
#[derive(Clone, Debug, PartialEq)]
pub struct BandInfo {
    /// Vector level; the base bands carry level 0 and `base = true`.
    pub level: u32,
    pub base: bool,
    pub eps: Vec<u8>,
    pub alpha: Vec<usize>,
    pub key: BandKey,
    pub shape: Vec<usize>,
}

/// One vector family at one level: matrix column `r` reads band `columns[r]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyView {
    pub name: String,
    pub family: usize,
    pub level: u32,
    pub base: bool,
    pub columns: Vec<usize>,
    /// Translations run over `[0, extent)` componentwise.
    pub extent: Vec<usize>,
}

/// Band and family structure for given `(basis, N, levels)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    d: usize,
    m: usize,
    n: usize,
    levels: u32,
    depth: u32,
    filter: ScalarFilter,
    bands: Vec<BandInfo>,
    families: Vec<FamilyView>,
}

/// Scalar depth `m(levels + 1) - 1` of a transform with `levels` vector levels.
pub fn scalar_depth(m: usize, levels: u32) -> u32 {
    m as u32 * (levels + 1) - 1
}

/// Largest number of vector levels for length `n`.
pub fn max_levels(n: usize, m: usize) -> Result<u32> {
    let s = log2_exact(n)?;
    let m = m as u32;
    if s + 1 < m {
        return Err(Error::Parameter(format!("N = {n} is too short for m = {m}")));
    }
    Ok((s + 1) / m - 1)
}

impl Layout {
    pub fn new(basis: &BasisND, n: usize, levels: u32) -> Result<Self> {
        let (d, m) = (basis.d(), basis.m());
        if !(1..=2).contains(&d) {
            return Err(Error::Dimension(format!("transforms support d ∈ {{1, 2}}, got {d}")));
        }
        let s = log2_exact(n)?;
        let depth = scalar_depth(m, levels);
        if depth > s {
            return Err(Error::Parameter(format!("{levels} levels with m = {m} need N ≥ 2^{depth}, got N = {n}")));
        }
        let n0 = n >> depth;
        let mw = basis.multiwavelet();
        let band = |level: u32, base: bool, eps: &[u8], alpha: &[usize]| {
            let key: BandKey = (0..d)
                .map(|i| {
                    let c = mw.factor(eps[i], alpha[i], level);
                    (c.kind, c.scale)
                })
                .collect();
            let shape = key.iter().map(|&(_, s)| n0 << s).collect();
            BandInfo { level, base, eps: eps.to_vec(), alpha: alpha.to_vec(), key, shape }
        };
        let fams = enumerate_families(d, m)?;
        let mut bands = Vec::new();
        for (eps, alpha) in &fams.base.members {
            bands.push(band(0, true, eps, alpha));
        }
        for t in 0..levels {
            for fam in &fams.families {
                for (eps, alpha) in &fam.members {
                    bands.push(band(t, false, eps, alpha));
                }
            }
        }
        let lookup: HashMap<(bool, u32, Vec<u8>, Vec<usize>), usize> =
            bands.iter().enumerate().map(|(i, b)| ((b.base, b.level, b.eps.clone(), b.alpha.clone()), i)).collect();
        let mut families = Vec::new();
        for (idx, fam) in basis.families().iter().enumerate() {
            let base = fam.is_scaling();
            for level in 0..if base { 1 } else { levels } {
                let columns: Vec<usize> =
                    fam.rows.iter().map(|a| lookup[&(base, level, fam.eps.clone(), a.clone())]).collect();
                let extent = (0..d).map(|i| columns.iter().map(|&c| bands[c].shape[i]).max().unwrap()).collect();
                families.push(FamilyView { name: fam.name.clone(), family: idx, level, base, columns, extent });
            }
        }
        Ok(Layout { d, m, n, levels, depth, filter: basis.filter().clone(), bands, families })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn filter(&self) -> &ScalarFilter {
        &self.filter
    }

    pub fn bands(&self) -> &[BandInfo] {
        &self.bands
    }

    pub fn families(&self) -> &[FamilyView] {
        &self.families
    }

    /// Scalar coefficients per channel.
    pub fn channel_len(&self) -> usize {
        self.bands.iter().map(|b| b.shape.iter().product::<usize>()).sum()
    }

    /// Whether slot `(k, r)` of a family is backed by a coefficient.
    pub fn slot_valid(&self, family: &FamilyView, k: &[usize], r: usize) -> bool {
        k.iter().zip(&self.bands[family.columns[r]].shape).all(|(a, b)| a < b)
    }

    fn index_map(&self) -> HashMap<BandKey, usize> {
        self.bands.iter().enumerate().map(|(i, b)| (b.key.clone(), i)).collect()
    }
}

fn analyze_axis(a: &ArrayD<f64>, ax: usize, f: &ScalarFilter) -> (ArrayD<f64>, ArrayD<f64>) {
    let mut shape = a.shape().to_vec();
    shape[ax] /= 2;
    let mut lo = ArrayD::zeros(IxDyn(&shape));
    let mut hi = ArrayD::zeros(IxDyn(&shape));
    Zip::from(a.lanes(Axis(ax))).and(lo.lanes_mut(Axis(ax))).and(hi.lanes_mut(Axis(ax))).for_each(|x, mut l, mut h| {
        let (va, vd) = analysis_step(&x.to_vec(), f.h(), f.g());
        l.assign(&ArrayView1::from(&va));
        h.assign(&ArrayView1::from(&vd));
    });
    (lo, hi)
}

fn synthesize_axis(lo: &ArrayD<f64>, hi: &ArrayD<f64>, ax: usize, f: &ScalarFilter) -> ArrayD<f64> {
    let mut shape = lo.shape().to_vec();
    shape[ax] *= 2;
    let mut x = ArrayD::zeros(IxDyn(&shape));
    Zip::from(x.lanes_mut(Axis(ax))).and(lo.lanes(Axis(ax))).and(hi.lanes(Axis(ax))).for_each(|mut out, l, h| {
        let v = synthesis_step(&l.to_vec(), &h.to_vec(), f.h(), f.g());
        out.assign(&ArrayView1::from(&v));
    });
    x
}

/// Splits `block` (keyed `key`) along each `(axis, steps)` of `plan` in turn,
/// every piece of one step feeding the next.
fn split_plan(
    block: ArrayD<f64>,
    key: BandKey,
    plan: &[(usize, u32)],
    f: &ScalarFilter,
    out: &mut Vec<(BandKey, ArrayD<f64>)>,
) {
    let Some(&(ax, steps)) = plan.first() else {
        out.push((key, block));
        return;
    };
    let s = key[ax].1;
    let mut cur = block;
    let mut details = Vec::new();
    for i in 0..steps {
        let (lo, hi) = analyze_axis(&cur, ax, f);
        details.push((s - 1 - i, hi));
        cur = lo;
    }
    let mut k = key.clone();
    k[ax] = (AtomKind::Scaling, s - steps);
    split_plan(cur, k, &plan[1..], f, out);
    for (scale, arr) in details.into_iter().rev() {
        let mut k = key.clone();
        k[ax] = (AtomKind::Wavelet, scale);
        split_plan(arr, k, &plan[1..], f, out);
    }
}

/// Inverse of [`split_plan`]: rebuilds the block keyed `key` from `bands`.
fn merge_plan(
    key: &BandKey,
    plan: &[(usize, u32)],
    f: &ScalarFilter,
    bands: &mut dyn FnMut(&BandKey) -> Result<ArrayD<f64>>,
) -> Result<ArrayD<f64>> {
    let Some(&(ax, steps)) = plan.first() else {
        return bands(key);
    };
    let s = key[ax].1;
    let mut k = key.clone();
    k[ax] = (AtomKind::Scaling, s - steps);
    let mut cur = merge_plan(&k, &plan[1..], f, bands)?;
    for scale in s - steps..s {
        k[ax] = (AtomKind::Wavelet, scale);
        let hi = merge_plan(&k, &plan[1..], f, bands)?;
        cur = synthesize_axis(&cur, &hi, ax, f);
    }
    Ok(cur)
}

/// Per-level schedule shared by analysis and synthesis.
fn level_plan(layout: &Layout, t: u32) -> (u32, u32) {
    let m = layout.m as u32;
    let lo = m * t + m - 1;
    (lo + m, lo)
}

fn conversion_plan(key: &BandKey, lo: u32, m: u32) -> Vec<(usize, u32)> {
    key.iter().enumerate().filter(|(_, &c)| c == (AtomKind::Scaling, lo)).map(|(ax, _)| (ax, m - 1)).collect()
}

fn analyze_channel(x: &ArrayD<f64>, layout: &Layout) -> Result<Vec<ArrayD<f64>>> {
    let d = layout.d;
    let m = layout.m as u32;
    let f = &layout.filter;
    let index = layout.index_map();
    let mut out: Vec<Option<ArrayD<f64>>> = vec![None; layout.bands.len()];
    let mut store = |key: BandKey, arr: ArrayD<f64>| -> Result<()> {
        let i =
            *index.get(&key).ok_or_else(|| Error::Consistency(format!("pyramid produced unexpected band {key:?}")))?;
        if out[i].replace(arr).is_some() {
            return Err(Error::Consistency(format!("band {key:?} produced twice")));
        }
        Ok(())
    };
    let mut block = x.clone();
    let mut cur = layout.depth;
    for t in (0..layout.levels).rev() {
        let (top, lo) = level_plan(layout, t);
        debug_assert_eq!(top, cur);
        let key = vec![(AtomKind::Scaling, cur); d];
        let plan: Vec<_> = (0..d).map(|ax| (ax, cur - lo)).collect();
        let mut pieces = Vec::new();
        split_plan(block, key, &plan, f, &mut pieces);
        let mut next = None;
        for (k, arr) in pieces {
            if k.iter().all(|&c| c == (AtomKind::Scaling, lo)) {
                next = Some(arr);
                continue;
            }
            let mut conv = Vec::new();
            split_plan(arr, k.clone(), &conversion_plan(&k, lo, m), f, &mut conv);
            for (k2, a2) in conv {
                store(k2, a2)?;
            }
        }
        block = next.expect("coarse block");
        cur = lo;
    }
    let mut pieces = Vec::new();
    let plan: Vec<_> = (0..d).map(|ax| (ax, cur)).collect();
    split_plan(block, vec![(AtomKind::Scaling, cur); d], &plan, f, &mut pieces);
    for (k, arr) in pieces {
        store(k, arr)?;
    }
    out.into_iter()
        .enumerate()
        .map(|(i, a)| a.ok_or_else(|| Error::Consistency(format!("band {i} was not produced"))))
        .collect()
}

fn synthesize_channel(bands: &[ArrayD<f64>], layout: &Layout) -> Result<ArrayD<f64>> {
    let d = layout.d;
    let m = layout.m as u32;
    let f = &layout.filter;
    let index = layout.index_map();
    let mut fetch = |key: &BandKey| -> Result<ArrayD<f64>> {
        index.get(key).map(|&i| bands[i].clone()).ok_or_else(|| Error::Corruption(format!("missing band {key:?}")))
    };
    let cur0 = if layout.levels == 0 { layout.depth } else { m - 1 };
    let plan: Vec<_> = (0..d).map(|ax| (ax, cur0)).collect();
    let mut block = merge_plan(&vec![(AtomKind::Scaling, cur0); d], &plan, f, &mut fetch)?;
    for t in 0..layout.levels {
        let (top, lo) = level_plan(layout, t);
        let plan: Vec<_> = (0..d).map(|ax| (ax, top - lo)).collect();
        let coarse = block;
        let mut coarse = Some(coarse);
        let mut level_bands = |key: &BandKey| -> Result<ArrayD<f64>> {
            if key.iter().all(|&c| c == (AtomKind::Scaling, lo)) {
                return coarse.take().ok_or_else(|| Error::Consistency("coarse block used twice".into()));
            }
            merge_plan(key, &conversion_plan(key, lo, m), f, &mut fetch)
        };
        block = merge_plan(&vec![(AtomKind::Scaling, top); d], &plan, f, &mut level_bands)?;
    }
    Ok(block)
}

/// Norm used by [`threshold_matrix`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixNorm {
    Frobenius,
    Norm1,
}

impl std::str::FromStr for MatrixNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frobenius" | "fro" => Ok(MatrixNorm::Frobenius),
            "norm1" | "l1" => Ok(MatrixNorm::Norm1),
            other => Err(Error::Parameter(format!("unknown norm `{other}`"))),
        }
    }
}

/// Coefficients of all channels plus the regrouping layout.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorDecomposition {
    layout: Layout,
    /// `coeffs[channel][band]`.
    coeffs: Vec<Vec<ArrayD<f64>>>,
}

pub fn analyze_vector(signal: &VectorSignal, basis: &BasisND, levels: u32) -> Result<VectorDecomposition> {
    if signal.d() != basis.d() || signal.m() != basis.m() {
        return Err(Error::Dimension(format!(
            "signal has d = {}, m = {}; basis has d = {}, m = {}",
            signal.d(),
            signal.m(),
            basis.d(),
            basis.m()
        )));
    }
    let layout = Layout::new(basis, signal.n(), levels)?;
    let coeffs = signal.channels().iter().map(|c| analyze_channel(c, &layout)).collect::<Result<_>>()?;
    Ok(VectorDecomposition { layout, coeffs })
}

pub fn synthesize_vector(dec: &VectorDecomposition) -> Result<VectorSignal> {
    dec.check()?;
    let channels = dec.coeffs.iter().map(|c| synthesize_channel(c, &dec.layout)).collect::<Result<_>>()?;
    VectorSignal::new(channels)
}

/// Zeroes every non-base matrix whose norm is below `tau`.
pub fn threshold_matrix(dec: &VectorDecomposition, tau: f64, norm: MatrixNorm) -> VectorDecomposition {
    let mut out = dec.clone();
    for fi in 0..dec.layout.families.len() {
        let fam = &dec.layout.families[fi];
        if fam.base {
            continue;
        }
        for k in box_indices(&fam.extent) {
            let (mat, _) = dec.matrix(fi, &k);
            let v = match norm {
                MatrixNorm::Frobenius => mat.frobenius(),
                MatrixNorm::Norm1 => mat.norm1(),
            };
            if v < tau {
                out.set_matrix(fi, &k, &MatrixM::zeros(dec.layout.m));
            }
        }
    }
    out
}

fn box_indices(extent: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &e in extent {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..e).map(move |i| {
                    let mut v = p.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    out
}

impl VectorDecomposition {
    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn coeffs(&self) -> &[Vec<ArrayD<f64>>] {
        &self.coeffs
    }

    /// Band `b` of channel `i`.
    pub fn band(&self, channel: usize, b: usize) -> &ArrayD<f64> {
        &self.coeffs[channel][b]
    }

    /// All-zero decomposition with the given layout.
    pub fn zeros(layout: Layout) -> Self {
        let channel: Vec<ArrayD<f64>> = layout.bands.iter().map(|b| ArrayD::zeros(IxDyn(&b.shape))).collect();
        VectorDecomposition { coeffs: vec![channel; layout.m], layout }
    }

    pub fn coefficient_count(&self) -> usize {
        self.coeffs.iter().flatten().map(|a| a.len()).sum()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().flatten().flat_map(|a| a.iter()).map(|v| v * v).sum()
    }

    /// Energy in the base families.
    pub fn base_energy(&self) -> f64 {
        self.coeffs
            .iter()
            .flat_map(|c| c.iter().zip(&self.layout.bands).filter(|(_, b)| b.base))
            .flat_map(|(a, _)| a.iter())
            .map(|v| v * v)
            .sum()
    }

    /// Matrix `C[i][r]` of family `f` at translation `k`, with the validity
    /// mask of its columns. Invalid slots read as zero.
    pub fn matrix(&self, f: usize, k: &[usize]) -> (MatrixM, Vec<bool>) {
        let fam = &self.layout.families[f];
        let m = self.layout.m;
        let mut mat = MatrixM::zeros(m);
        let mask: Vec<bool> = (0..m).map(|r| self.layout.slot_valid(fam, k, r)).collect();
        for r in 0..m {
            if mask[r] {
                for i in 0..m {
                    mat.set(i, r, self.coeffs[i][fam.columns[r]][IxDyn(k)]);
                }
            }
        }
        (mat, mask)
    }

    /// Writes the valid slots of `mat`; invalid slots are ignored.
    pub fn set_matrix(&mut self, f: usize, k: &[usize], mat: &MatrixM) {
        let fam = self.layout.families[f].clone();
        for r in 0..self.layout.m {
            if self.layout.slot_valid(&fam, k, r) {
                for i in 0..self.layout.m {
                    self.coeffs[i][fam.columns[r]][IxDyn(k)] = mat.get(i, r);
                }
            }
        }
    }

    /// Number of valid matrix slots over all families and translations.
    pub fn valid_slot_count(&self) -> usize {
        let m = self.layout.m;
        self.layout
            .families
            .iter()
            .map(|fam| {
                box_indices(&fam.extent)
                    .iter()
                    .map(|k| (0..m).filter(|&r| self.layout.slot_valid(fam, k, r)).count() * m)
                    .sum::<usize>()
            })
            .sum()
    }

    fn check(&self) -> Result<()> {
        if self.coeffs.len() != self.layout.m {
            return Err(Error::Corruption(format!("{} channels, expected {}", self.coeffs.len(), self.layout.m)));
        }
        for (i, c) in self.coeffs.iter().enumerate() {
            if c.len() != self.layout.bands.len() {
                return Err(Error::Corruption(format!(
                    "channel {i} has {} bands, expected {}",
                    c.len(),
                    self.layout.bands.len()
                )));
            }
            for (a, b) in c.iter().zip(&self.layout.bands) {
                if a.shape() != b.shape.as_slice() {
                    return Err(Error::Corruption(format!(
                        "band {:?} has shape {:?}, expected {:?}",
                        b.key,
                        a.shape(),
                        b.shape
                    )));
                }
            }
        }
        Ok(())
    }

    /// Replaces the coefficients, keeping the layout.
    pub fn with_coeffs(&self, coeffs: Vec<Vec<ArrayD<f64>>>) -> Result<Self> {
        let out = VectorDecomposition { layout: self.layout.clone(), coeffs };
        out.check()?;
        Ok(out)
    }

    /// Regrouping map, one line per scalar coefficient in payload order:
    /// `index,channel,band,position,family,level,k,row,col`.
    pub fn map_csv(&self) -> String {
        let mut slot_of: HashMap<(usize, Vec<usize>), (usize, usize)> = HashMap::new();
        for (fi, fam) in self.layout.families.iter().enumerate() {
            for (r, &b) in fam.columns.iter().enumerate() {
                for k in box_indices(&self.layout.bands[b].shape) {
                    slot_of.insert((b, k), (fi, r));
                }
            }
        }
        let mut out = String::from("index,channel,band,position,family,level,k,row,col\n");
        let mut index = 0;
        for i in 0..self.layout.m {
            for (b, band) in self.layout.bands.iter().enumerate() {
                for (pos, k) in box_indices(&band.shape).into_iter().enumerate() {
                    let (fi, r) = slot_of[&(b, k.clone())];
                    let fam = &self.layout.families[fi];
                    let ks: Vec<String> = k.iter().map(|v| v.to_string()).collect();
                    let _ = writeln!(out, "{index},{i},{b},{pos},{},{},{},{i},{r}", fam.name, fam.level, ks.join(" "));
                    index += 1;
                }
            }
        }
        out
    }

    pub fn header(&self) -> String {
        let l = &self.layout;
        format!("VWDEC1 d={} m={} n={} levels={} filter={} dtype=f64le", l.d, l.m, l.n, l.levels, l.filter.name())
    }

    /// Header line, then channel-major, band-major, row-major doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("{}\n", self.header()).into_bytes();
        for v in self.coeffs.iter().flatten().flat_map(|a| a.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Reads a decomposition written by [`VectorDecomposition::to_bytes`];
    /// `basis` supplies the matrix regrouping.
    pub fn from_bytes(bytes: &[u8], basis: &BasisND) -> Result<Self> {
        let (fields, payload) = split_header(bytes, "VWDEC1")?;
        let get = |k: &str| header_field(&fields, k);
        if get("dtype")? != "f64le" {
            return Err(Error::Format("only dtype=f64le is supported".into()));
        }
        let d = parse_usize(get("d")?, "d")?;
        let m = parse_usize(get("m")?, "m")?;
        let n = parse_usize(get("n")?, "n")?;
        let levels = parse_usize(get("levels")?, "levels")? as u32;
        if d != basis.d() || m != basis.m() || get("filter")? != basis.filter().name() {
            return Err(Error::Format(format!(
                "decomposition is for d={d} m={m} filter={}, basis is d={} m={} filter={}",
                get("filter")?,
                basis.d(),
                basis.m(),
                basis.filter().name()
            )));
        }
        let layout = Layout::new(basis, n, levels).map_err(|e| Error::Format(e.to_string()))?;
        let total = layout.m * layout.channel_len();
        if payload.len() != 8 * total {
            return Err(Error::Corruption(format!("payload has {} bytes, expected {}", payload.len(), 8 * total)));
        }
        let values = decode_f64(payload, total)?;
        let mut it = values.into_iter();
        let coeffs = (0..layout.m)
            .map(|_| {
                layout
                    .bands
                    .iter()
                    .map(|b| {
                        let len = b.shape.iter().product();
                        ArrayD::from_shape_vec(IxDyn(&b.shape), it.by_ref().take(len).collect()).unwrap()
                    })
                    .collect()
            })
            .collect();
        Ok(VectorDecomposition { layout, coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_wavelet::{daubechies_filter, filter_by_name, haar_filter};
    use crate::vector_basis_nd::build_basis_nd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(d: usize, m: usize, n: usize, seed: u64) -> VectorSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = n.pow(d as u32);
        VectorSignal::new(
            (0..m)
                .map(|_| {
                    ArrayD::from_shape_vec(IxDyn(&vec![n; d]), (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
                        .unwrap()
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn constant_has_no_detail() {
        let x = vec![3.0; 16];
        let p = dwt_channel(&x, &haar_filter(), 3).unwrap();
        assert!(p.details.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_round_trip_and_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = daubechies_filter(2).unwrap();
        let p = dwt_channel(&x, &f, 3).unwrap();
        let y = idwt_channel(&p, &f).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-12));
        let e: f64 = x.iter().map(|v| v * v).sum();
        let ec: f64 = p.approx.iter().chain(p.details.iter().flatten()).map(|v| v * v).sum();
        assert!((e - ec).abs() <= 1e-10 * e);
        assert!(matches!(dwt_channel(&x[..63], &f, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn dwt2_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((32, 32), |_| rng.gen_range(-1.0..1.0));
        let f = daubechies_filter(3).unwrap();
        let p = dwt2(&x, &f, 4).unwrap();
        let y = idwt2(&p, &f).unwrap();
        assert!(x.iter().zip(y.iter()).all(|(a, b)| (a - b).abs() <= 1e-12));
    }

    #[test]
    fn zero_signal_gives_zero_matrices() {
        let b = build_basis_nd(&haar_filter(), 1, 2).unwrap();
        let dec = analyze_vector(&VectorSignal::zeros(1, 2, 16).unwrap(), &b, 1).unwrap();
        assert_eq!(dec.energy(), 0.0);
    }

    #[test]
    fn hand_computed_haar_matrix() {
        let b = build_basis_nd(&haar_filter(), 1, 2).unwrap();
        let s = VectorSignal::from_1d(vec![vec![1.0; 8], vec![1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]]).unwrap();
        let dec = analyze_vector(&s, &b, 1).unwrap();
        let scale = 8f64.sqrt();
        let mut nonzero = 0;
        for (fi, fam) in dec.layout().families().iter().enumerate() {
            for k in box_indices(&fam.extent) {
                let (mat, _) = dec.matrix(fi, &k);
                if mat.max_abs() > 1e-14 {
                    nonzero += 1;
                    assert!(fam.base && k == vec![0]);
                    let expected = MatrixM::identity(2).scale(scale);
                    assert!(mat.sub(&expected).unwrap().max_abs() <= 1e-14);
                }
            }
        }
        assert_eq!(nonzero, 1);
    }

    #[test]
    fn census_and_bijection() {
        for (d, m, n, levels) in [(1, 2, 64, 2), (1, 3, 256, 2), (2, 2, 32, 1), (2, 3, 64, 1), (2, 1, 16, 3)] {
            let b = build_basis_nd(&haar_filter(), d, m).unwrap();
            let dec = analyze_vector(&random_signal(d, m, n, 5), &b, levels).unwrap();
            assert_eq!(dec.coefficient_count(), m * n.pow(d as u32));
            assert_eq!(dec.valid_slot_count(), m * n.pow(d as u32));
            let csv = dec.map_csv();
            let mut seen_index = std::collections::HashSet::new();
            let mut seen_slot = std::collections::HashSet::new();
            for line in csv.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                assert!(seen_index.insert(f[0].to_string()));
                assert!(seen_slot.insert((
                    f[4].to_string(),
                    f[5].to_string(),
                    f[6].to_string(),
                    f[7].to_string(),
                    f[8].to_string()
                )));
            }
            assert_eq!(seen_index.len(), m * n.pow(d as u32));
        }
    }

    #[test]
    fn round_trips() {
        for name in ["haar", "db2", "db3", "db4"] {
            let f = filter_by_name(name).unwrap();
            for m in 1..=3 {
                for (d, n) in [(1, 256), (2, 64)] {
                    let b = build_basis_nd(&f, d, m).unwrap();
                    let s = random_signal(d, m, n, 7);
                    let dec = analyze_vector(&s, &b, max_levels(n, m).unwrap()).unwrap();
                    let y = synthesize_vector(&dec).unwrap();
                    assert!(y.relative_error(&s).unwrap() <= 1e-10, "{name} m={m} d={d}");
                    assert!((dec.energy() - s.energy()).abs() <= 1e-10 * s.energy());
                }
            }
        }
    }

    #[test]
    fn m1_matches_scalar_transform_bitwise() {
        let f = daubechies_filter(2).unwrap();
        let b1 = build_basis_nd(&f, 1, 1).unwrap();
        let s = random_signal(1, 1, 64, 9);
        let dec = analyze_vector(&s, &b1, 4).unwrap();
        let x: Vec<f64> = s.channels()[0].iter().copied().collect();
        let p = dwt_channel(&x, &f, 4).unwrap();
        assert_eq!(dec.band(0, 0).as_slice().unwrap(), p.approx.as_slice());
        for t in 0..4 {
            assert_eq!(dec.band(0, t + 1).as_slice().unwrap(), p.details[t].as_slice());
        }
        let b2 = build_basis_nd(&f, 2, 1).unwrap();
        let s = random_signal(2, 1, 32, 10);
        let dec = analyze_vector(&s, &b2, 3).unwrap();
        let img = s.channels()[0].clone().into_dimensionality::<ndarray::Ix2>().unwrap();
        let p = dwt2(&img, &f, 3).unwrap();
        assert_eq!(dec.band(0, 0), &p.approx.into_dyn());
        for t in 0..3 {
            // ε order (0,1), (1,0), (1,1) is LH, HL, HH
            for o in 0..3 {
                assert_eq!(dec.band(0, 1 + 3 * t + o), &p.details[t][o].clone().into_dyn());
            }
        }
    }

    #[test]
    fn thresholding() {
        let b = build_basis_nd(&daubechies_filter(2).unwrap(), 2, 2).unwrap();
        let s = random_signal(2, 2, 32, 4);
        let dec = analyze_vector(&s, &b, 1).unwrap();
        assert_eq!(threshold_matrix(&dec, 0.0, MatrixNorm::Frobenius), dec);
        let all = threshold_matrix(&dec, f64::INFINITY, MatrixNorm::Norm1);
        assert_eq!(all.energy(), dec.base_energy());
        assert_eq!(all.base_energy(), dec.base_energy());
    }

    #[test]
    fn threshold_picks_one_of_two() {
        let b = build_basis_nd(&haar_filter(), 1, 2).unwrap();
        let layout = Layout::new(&b, 8, 1).unwrap();
        let mut dec = VectorDecomposition::zeros(layout);
        let wf = dec.layout().families().iter().position(|f| !f.base).unwrap();
        dec.set_matrix(wf, &[0], &MatrixM::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        dec.set_matrix(wf, &[1], &MatrixM::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap());
        let out = threshold_matrix(&dec, 2.0, MatrixNorm::Frobenius);
        assert_eq!(out.matrix(wf, &[0]).0.max_abs(), 0.0);
        assert_eq!(out.matrix(wf, &[1]).0, dec.matrix(wf, &[1]).0);
    }

    #[test]
    fn zero_decomposition_synthesizes_zero() {
        let b = build_basis_nd(&haar_filter(), 2, 2).unwrap();
        let dec = VectorDecomposition::zeros(Layout::new(&b, 16, 1).unwrap());
        assert_eq!(synthesize_vector(&dec).unwrap(), VectorSignal::zeros(2, 2, 16).unwrap());
    }

    #[test]
    fn corrupted_shapes_rejected() {
        let b = build_basis_nd(&haar_filter(), 1, 2).unwrap();
        let dec = analyze_vector(&random_signal(1, 2, 16, 1), &b, 1).unwrap();
        let mut coeffs = dec.coeffs().to_vec();
        coeffs[1].pop();
        assert!(matches!(dec.with_coeffs(coeffs), Err(Error::Corruption(_))));
    }

    #[test]
    fn file_round_trips() {
        let b = build_basis_nd(&daubechies_filter(2).unwrap(), 2, 2).unwrap();
        let s = random_signal(2, 2, 16, 3);
        assert_eq!(VectorSignal::from_bytes(&s.to_bytes()).unwrap(), s);
        let dec = analyze_vector(&s, &b, 1).unwrap();
        let bytes = dec.to_bytes();
        assert_eq!(VectorDecomposition::from_bytes(&bytes, &b).unwrap(), dec);
        assert!(matches!(VectorDecomposition::from_bytes(&bytes[..bytes.len() - 8], &b), Err(Error::Corruption(_))));
        let other = build_basis_nd(&haar_filter(), 2, 2).unwrap();
        assert!(matches!(VectorDecomposition::from_bytes(&bytes, &other), Err(Error::Format(_))));
        assert!(matches!(VectorSignal::from_bytes(b"VWAV1 d=1 m=1 n=3 dtype=f64le\n"), Err(Error::Format(_))));
    }
}
