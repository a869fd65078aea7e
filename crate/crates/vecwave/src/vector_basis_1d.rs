//! Univariate vector-valued basis of `L²(ℝ, ℝᵐ)` from a scalar wavelet,
//! its matrix refinement filter, and the passage to and from m-multiwavelets.
//!
//! Vector level `t` has dilation `2^m`. Channel `r` of an atom is one scalar
//! component `2^{s/2} atom(2^s x - k)` with its own scale `s`; the scaling
//! vector holds `φ@0, ψ@0, …, ψ@(m-2)` and level `t` holds
//! `ψ@(mt+m-1), …, ψ@(mt+2m-2)`.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar_wavelet::{quad_inner, AtomKind, AtomSampler, SampledFunction, ScalarFilter};
use crate::star_product::{MatrixM, VectorSampledFunction};

/// Largest channel count accepted by the constructors.
pub const MAX_CHANNELS: usize = 16;

/// One scalar channel: `amplitude · atom(2^scale x - k)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub kind: AtomKind,
    pub scale: u32,
    pub amplitude: f64,
}

impl Component {
    /// L²-normalized component, amplitude `2^{scale/2}`.
    pub fn new(kind: AtomKind, scale: u32) -> Self {
        Component { kind, scale, amplitude: (scale as f64 / 2.0).exp2() }
    }

    /// Same component moved `levels` scales finer.
    pub fn finer(self, levels: u32) -> Self {
        Component::new(self.kind, self.scale + levels).with_amplitude(self.amplitude * (levels as f64 / 2.0).exp2())
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn at(self, shift: i64) -> Placed {
        Placed { kind: self.kind, scale: self.scale, shift, amplitude: self.amplitude }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let (kind, scale) = text
            .split_once('@')
            .ok_or_else(|| Error::Format(format!("component `{text}` is not of the form kind@scale")))?;
        let scale = scale.parse::<u32>().map_err(|_| Error::Format(format!("bad scale in component `{text}`")))?;
        Ok(Component::new(AtomKind::from_symbol(kind)?, scale))
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.kind.symbol(), self.scale)
    }
}

/// A component at a concrete translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placed {
    pub kind: AtomKind,
    pub scale: u32,
    pub shift: i64,
    pub amplitude: f64,
}

impl Placed {
    pub fn sample(&self, sampler: &AtomSampler, grid: u32) -> Result<SampledFunction> {
        sampler.sample(self.kind, self.scale, self.shift, self.amplitude, grid)
    }

    /// Support in x units.
    pub fn support(&self, filter: &ScalarFilter) -> (f64, f64) {
        let (a, b) = filter.support();
        let unit = (-(self.scale as f64)).exp2();
        ((a + self.shift) as f64 * unit, (b + self.shift) as f64 * unit)
    }

    fn key(&self) -> (AtomKind, u32, i64, u64) {
        (self.kind, self.scale, self.shift, self.amplitude.to_bits())
    }
}

/// Which vector atom of a univariate basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Which1D {
    Scaling,
    Wavelet(u32),
}

/// The vector basis built from a scalar filter and a channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorBasis1D {
    filter: ScalarFilter,
    m: usize,
}

/// Builds the univariate vector basis with `m` channels.
pub fn build_vector_basis(filter: &ScalarFilter, m: usize) -> Result<VectorBasis1D> {
    if !(1..=MAX_CHANNELS).contains(&m) {
        return Err(Error::Parameter(format!("channel count must be in 1..={MAX_CHANNELS}, got {m}")));
    }
    Ok(VectorBasis1D { filter: filter.clone(), m })
}

impl VectorBasis1D {
    pub fn filter(&self) -> &ScalarFilter {
        &self.filter
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Scalar dilation factor `2^m` between vector levels.
    pub fn dilation(&self) -> u64 {
        1 << self.m
    }

    pub fn scaling_spec(&self) -> Vec<Component> {
        let mut out = vec![Component::new(AtomKind::Scaling, 0)];
        out.extend((0..self.m as u32 - 1).map(|s| Component::new(AtomKind::Wavelet, s)));
        out
    }

    pub fn wavelet_spec(&self, t: u32) -> Vec<Component> {
        let m = self.m as u32;
        (0..m).map(|r| Component::new(AtomKind::Wavelet, m * t + m - 1 + r)).collect()
    }

    pub fn components(&self, which: Which1D) -> Vec<Component> {
        match which {
            Which1D::Scaling => self.scaling_spec(),
            Which1D::Wavelet(t) => self.wavelet_spec(t),
        }
    }

    /// Checks that the scaling components and wavelet levels `0..=levels`
    /// cover the scalar spaces `V₀, W₀, …, W_{m(levels+2)-2}` once each.
    pub fn scale_coverage(&self, levels: u32) -> Result<()> {
        let m = self.m as u32;
        let top = m * levels + 2 * m - 2;
        let mut seen = vec![0u32; top as usize + 1];
        let mut phi = 0;
        let mut all = self.scaling_spec();
        for t in 0..=levels {
            all.extend(self.wavelet_spec(t));
        }
        for c in all {
            match c.kind {
                AtomKind::Scaling => phi += 1,
                AtomKind::Wavelet => {
                    let slot = seen
                        .get_mut(c.scale as usize)
                        .ok_or_else(|| Error::Consistency(format!("scale {} beyond {top}", c.scale)))?;
                    *slot += 1;
                }
            }
        }
        if phi != 1 {
            return Err(Error::Consistency(format!("{phi} scaling components instead of one")));
        }
        if let Some(s) = seen.iter().position(|&n| n != 1) {
            return Err(Error::Consistency(format!("wavelet scale {s} covered {} times", seen[s])));
        }
        Ok(())
    }

    /// Channels of the atom `which` at translation `k`.
    pub fn placed(&self, which: Which1D, k: i64) -> Vec<Placed> {
        self.components(which).into_iter().map(|c| c.at(k)).collect()
    }
}

fn sample_channels(sampler: &AtomSampler, channels: &[Placed], level: u32) -> Result<VectorSampledFunction> {
    let sampled = channels.iter().map(|p| p.sample(sampler, level)).collect::<Result<Vec<_>>>()?;
    VectorSampledFunction::from_1d(&sampled)
}

/// Samples the vector atom `which` at translation `k` on the grid `2^-level`.
pub fn sample_vector_atom(basis: &VectorBasis1D, which: Which1D, k: i64, level: u32) -> Result<VectorSampledFunction> {
    let channels = basis.placed(which, k);
    let finest = channels.iter().map(|p| p.scale).max().unwrap_or(0);
    if finest > level {
        return Err(Error::Resolution(format!(
            "component scale {finest} needs grid level at least {finest}, got {level}"
        )));
    }
    sample_channels(&AtomSampler::new(basis.filter(), level), &channels, level)
}

/// Matrix taps of `Φ(x) = 2^{m/2} Σ_k P_k Φ(2^m x - k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixFilter {
    offset: i64,
    taps: Vec<MatrixM>,
    m: usize,
}

impl MatrixFilter {
    pub fn zero(m: usize) -> Self {
        MatrixFilter { offset: 0, taps: vec![MatrixM::zeros(m)], m }
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn taps(&self) -> &[MatrixM] {
        &self.taps
    }

    pub fn tap(&self, k: i64) -> Option<&MatrixM> {
        let idx = k - self.offset;
        if idx < 0 {
            None
        } else {
            self.taps.get(idx as usize)
        }
    }

    pub fn dilation(&self) -> u64 {
        1 << self.m
    }

    /// The factor `2^{m/2}` in front of the tap sum.
    pub fn normalization(&self) -> f64 {
        (self.m as f64 / 2.0).exp2()
    }
}

/// `(outer ∘ inner)_k = Σ_n outer_n inner_{k-2n}`: first expand through
/// `outer`, then every resulting φ through `inner`.
fn compose(outer: (i64, &[f64]), inner: (i64, &[f64])) -> (i64, Vec<f64>) {
    let (oo, a) = outer;
    let (io, b) = inner;
    let mut out = vec![0.0; 2 * (a.len() - 1) + b.len()];
    for (n, &x) in a.iter().enumerate() {
        for (l, &y) in b.iter().enumerate() {
            out[2 * n + l] += x * y;
        }
    }
    (2 * oo + io, out)
}

/// Expands every scaling component through the scalar two-scale relation
/// down to `φ(2^m x - k)`; only the first column of each tap is nonzero.
pub fn matrix_refinement_filter(basis: &VectorBasis1D) -> MatrixFilter {
    let m = basis.m();
    let f = basis.filter();
    let h = (f.offset(), f.refinement_taps(AtomKind::Scaling));
    let rows: Vec<(i64, Vec<f64>)> = basis
        .scaling_spec()
        .iter()
        .map(|c| {
            let first = (f.offset(), f.refinement_taps(c.kind));
            let mut acc = (first.0, first.1.to_vec());
            for _ in 0..(m as u32 - c.scale - 1) {
                acc = compose((acc.0, &acc.1), h);
            }
            (acc.0, acc.1.iter().map(|v| v * c.amplitude).collect())
        })
        .collect();
    let offset = rows.iter().map(|r| r.0).min().unwrap_or(0);
    let end = rows.iter().map(|r| r.0 + r.1.len() as i64).max().unwrap_or(0);
    let norm = (m as f64 / 2.0).exp2();
    let mut taps = vec![MatrixM::zeros(m); (end - offset) as usize];
    for (r, (ro, coeffs)) in rows.iter().enumerate() {
        for (q, c) in coeffs.iter().enumerate() {
            taps[(ro - offset) as usize + q].set(r, 0, c / norm);
        }
    }
    MatrixFilter { offset, taps, m }
}

/// `max_x ‖Φ(x) - 2^{m/2} Σ_k P_k Φ(2^m x - k)‖₁` over the level-`level` grid.
pub fn refine_residual(basis: &VectorBasis1D, mf: &MatrixFilter, level: u32) -> Result<f64> {
    let m = basis.m();
    if mf.taps.iter().any(|t| t.order() != m) {
        return Err(Error::Dimension("matrix filter order does not match the basis".into()));
    }
    if (level as usize) < m {
        return Err(Error::Resolution(format!("refinement check needs level ≥ {m}, got {level}")));
    }
    let phi = sample_vector_atom(basis, Which1D::Scaling, 0, level)?;
    let start = phi.channel(0).start()[0];
    let len = phi.channel(0).shape()[0] as i64;
    let unit = 1i64 << level;
    let dil = 1i64 << m;
    let norm = mf.normalization();
    let k_lo = mf.offset;
    let k_hi = mf.offset + mf.taps.len() as i64;
    // x range where either side can be nonzero
    let lo = start.min((start + k_lo * unit).div_euclid(dil));
    let hi = (start + len).max((start + len + k_hi * unit).div_euclid(dil) + 1);
    let mut worst: f64 = 0.0;
    for i in lo..hi {
        let mut diff = 0.0;
        for r in 0..m {
            let mut rhs = 0.0;
            for (q, tap) in mf.taps.iter().enumerate() {
                let k = k_lo + q as i64;
                let idx = dil * i - k * unit;
                for c in 0..m {
                    let w = tap.get(r, c);
                    if w != 0.0 {
                        rhs += w * phi.channel(c).at(&[idx]);
                    }
                }
            }
            diff += (phi.channel(r).at(&[i]) - norm * rhs).abs();
        }
        worst = worst.max(diff);
    }
    Ok(worst)
}

/// m scaling functions and m mother wavelets. Level `j` of the family uses
/// each component `level_stride · j` scales finer; translations stay per
/// component.
#[derive(Clone, Debug, PartialEq)]
pub struct Multiwavelet {
    filter: ScalarFilter,
    scaling: Vec<Component>,
    wavelets: Vec<Component>,
    level_stride: u32,
}

impl Multiwavelet {
    pub fn new(
        filter: &ScalarFilter,
        scaling: Vec<Component>,
        wavelets: Vec<Component>,
        level_stride: u32,
    ) -> Result<Self> {
        if scaling.is_empty() || scaling.len() != wavelets.len() {
            return Err(Error::Dimension(format!(
                "need the same positive number of scaling functions and wavelets, got {} and {}",
                scaling.len(),
                wavelets.len()
            )));
        }
        Ok(Multiwavelet { filter: filter.clone(), scaling, wavelets, level_stride })
    }

    pub fn filter(&self) -> &ScalarFilter {
        &self.filter
    }

    pub fn m(&self) -> usize {
        self.scaling.len()
    }

    pub fn scaling(&self) -> &[Component] {
        &self.scaling
    }

    pub fn wavelets(&self) -> &[Component] {
        &self.wavelets
    }

    pub fn level_stride(&self) -> u32 {
        self.level_stride
    }

    /// `φ_α` (role 0) or `ψ_α` (role 1) at family level `j`, with `α` 1-based.
    pub fn factor(&self, role: u8, alpha: usize, level: u32) -> Component {
        let base = if role == 0 { self.scaling[alpha - 1] } else { self.wavelets[alpha - 1] };
        base.finer(self.level_stride * level)
    }
}

/// Reads the scaling components as m scaling functions and the level-0
/// wavelet components as m mother wavelets.
pub fn to_multiwavelet(basis: &VectorBasis1D) -> Multiwavelet {
    Multiwavelet {
        filter: basis.filter().clone(),
        scaling: basis.scaling_spec(),
        wavelets: basis.wavelet_spec(0),
        level_stride: basis.m() as u32,
    }
}

/// Inner products of placed components at a resolution relative to the
/// finest scale of each pair: a pair with scales `s ≤ s'` is integrated on
/// the grid `2^-(J + s')`, evaluated after the exact rescaling `u = 2^s x`.
pub struct PairIntegrator {
    sampler: AtomSampler,
    relative: u32,
    cache: HashMap<((AtomKind, u32, i64, u64), (AtomKind, u32, i64, u64)), f64>,
}

impl PairIntegrator {
    /// `max_gap` bounds the scale difference of any pair that will be asked for.
    pub fn new(filter: &ScalarFilter, relative: u32, max_gap: u32) -> Self {
        PairIntegrator { sampler: AtomSampler::new(filter, relative + max_gap), relative, cache: HashMap::new() }
    }

    pub fn relative_level(&self) -> u32 {
        self.relative
    }

    pub fn inner(&mut self, a: &Placed, b: &Placed) -> Result<f64> {
        let key = if a.key() <= b.key() { (a.key(), b.key()) } else { (b.key(), a.key()) };
        if let Some(&v) = self.cache.get(&key) {
            return Ok(v);
        }
        let f = self.sampler.filter();
        let (a0, a1) = a.support(f);
        let (b0, b1) = b.support(f);
        let value = if a1 <= b0 || b1 <= a0 {
            0.0
        } else {
            let s0 = a.scale.min(b.scale);
            let s1 = a.scale.max(b.scale);
            let grid = self.relative + s1 - s0;
            // overlap in grid indices after the rescaling u = 2^{s0} x
            let unit = (grid + s0) as f64;
            let lo = (a0.max(b0) * unit.exp2()).floor() as i64;
            let hi = (a1.min(b1) * unit.exp2()).ceil() as i64;
            let pa = Placed { scale: a.scale - s0, ..*a };
            let pb = Placed { scale: b.scale - s0, ..*b };
            let sa = self.sampler.sample_window(pa.kind, pa.scale, pa.shift, pa.amplitude, grid, (lo, hi))?;
            let sb = self.sampler.sample_window(pb.kind, pb.scale, pb.shift, pb.amplitude, grid, (lo, hi))?;
            quad_inner(&sa, &sb)? * (-(s0 as f64)).exp2()
        };
        self.cache.insert(key, value);
        Ok(value)
    }

    /// `⟨A, B⟩_*` for two vectors of placed components.
    pub fn star(&mut self, a: &[Placed], b: &[Placed]) -> Result<MatrixM> {
        if a.len() != b.len() {
            return Err(Error::Dimension(format!("channel counts {} and {} differ", a.len(), b.len())));
        }
        let m = a.len();
        let mut out = MatrixM::zeros(m);
        for i in 0..m {
            for j in 0..m {
                out.set(i, j, self.inner(&a[i], &b[j])?);
            }
        }
        Ok(out)
    }
}

/// Largest scale difference inside a set of vector atoms.
pub fn scale_gap(atoms: &[Vec<Placed>]) -> u32 {
    let scales = atoms.iter().flatten().map(|p| p.scale);
    let lo = scales.clone().min().unwrap_or(0);
    let hi = scales.max().unwrap_or(0);
    hi - lo
}

/// Deviation of one pair of atoms from star-orthonormality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairDeviation {
    pub first: usize,
    pub second: usize,
    pub deviation: f64,
}

/// `‖⟨A_a, A_b⟩_* - δ_{ab} I‖₁` for every unordered pair `a ≤ b`.
pub fn star_gram_deviations(filter: &ScalarFilter, atoms: &[Vec<Placed>], relative: u32) -> Result<Vec<PairDeviation>> {
    let mut integrator = PairIntegrator::new(filter, relative, scale_gap(atoms));
    let mut out = Vec::with_capacity(atoms.len() * (atoms.len() + 1) / 2);
    for a in 0..atoms.len() {
        for b in a..atoms.len() {
            let mut s = integrator.star(&atoms[a], &atoms[b])?;
            if a == b {
                s = s.sub(&MatrixM::identity(s.order()))?;
            }
            out.push(PairDeviation { first: a, second: b, deviation: s.norm1() });
        }
    }
    Ok(out)
}

/// Atoms of a univariate basis for `|k| ≤ k_max` and wavelet levels `t ≤ t_max`.
pub fn atom_family(basis: &VectorBasis1D, t_max: u32, k_max: i64) -> Vec<(Which1D, i64, Vec<Placed>)> {
    let mut whiches = vec![Which1D::Scaling];
    whiches.extend((0..=t_max).map(Which1D::Wavelet));
    let mut out = Vec::new();
    for w in whiches {
        for k in -k_max..=k_max {
            out.push((w, k, basis.placed(w, k)));
        }
    }
    out
}

/// Orthogonal projection of a placed component onto the span of `targets`
/// (all translations that meet it), on the absolute grid `2^-level`.
/// Returns the component and its projection over one common window.
pub fn projection(
    sampler: &AtomSampler,
    f: &Placed,
    targets: &[Component],
    level: u32,
) -> Result<(SampledFunction, SampledFunction)> {
    let filter = sampler.filter();
    let (lo_int, hi_int) = filter.support();
    let (x0, x1) = f.support(filter);
    let target = f.sample(sampler, level)?;
    let mut terms = Vec::new();
    for comp in targets {
        let unit = (comp.scale as f64).exp2();
        let k_lo = (x0 * unit).floor() as i64 - hi_int - 1;
        let k_hi = (x1 * unit).ceil() as i64 - lo_int + 1;
        for k in k_lo..=k_hi {
            let a = comp.at(k).sample(sampler, level)?;
            let c = quad_inner(&target, &a)?;
            if c != 0.0 {
                terms.push((c, a));
            }
        }
    }
    let lo = terms.iter().map(|(_, a)| a.start()).fold(target.start(), i64::min);
    let hi = terms.iter().map(|(_, a)| a.end()).fold(target.end(), i64::max);
    let approx = (lo..hi).map(|idx| terms.iter().map(|(c, a)| c * a.at(idx)).sum()).collect();
    let original = (lo..hi).map(|idx| target.at(idx)).collect();
    Ok((SampledFunction::new(lo, level, original)?, SampledFunction::new(lo, level, approx)?))
}

/// `max |f - P f|` for the projection of [`projection`].
pub fn projection_residual(sampler: &AtomSampler, f: &Placed, targets: &[Component], level: u32) -> Result<f64> {
    let (original, approx) = projection(sampler, f, targets, level)?;
    Ok(original.values().iter().zip(approx.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

/// Checks `V_j ⊂ V_{j+1}` for the dilation-2 spaces of a multiwavelet,
/// `V_j = span{φ_α at j + α's own scale, all translations}`: every scaling
/// function at level `j` must be reproduced by its projection on level `j+1`.
pub fn nesting_residual(mw: &Multiwavelet, j: u32, level: u32) -> Result<f64> {
    let next: Vec<Component> = mw.scaling().iter().map(|c| c.finer(j + 1)).collect();
    let finest = next.iter().map(|c| c.scale).max().unwrap_or(0);
    if finest > level {
        return Err(Error::Resolution(format!("nesting check needs level ≥ {finest}, got {level}")));
    }
    let sampler = AtomSampler::new(mw.filter(), level);
    let mut worst: f64 = 0.0;
    for c in mw.scaling() {
        for k in -1..=1 {
            worst = worst.max(projection_residual(&sampler, &c.finer(j).at(k), &next, level)?);
        }
    }
    Ok(worst)
}

/// Parameters of the Gram check run when assembling a vector basis from a
/// multiwavelet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GramCheck {
    pub relative_level: u32,
    pub tolerance: f64,
    pub k_max: i64,
}

impl Default for GramCheck {
    fn default() -> Self {
        GramCheck { relative_level: 8, tolerance: 1e-10, k_max: 2 }
    }
}

/// Vector basis with dilation 2 assembled from an m-multiwavelet by stacking
/// `Φ = (φ_1, …, φ_m)ᵀ` and `Ψ = (ψ_1, …, ψ_m)ᵀ`. Wavelet atoms exist on the
/// dilation-2 levels `j = level_stride · t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AssembledBasis {
    mw: Multiwavelet,
    max_deviation: f64,
}

/// Stacks the inputs into a vector basis after checking their Gram matrix.
pub fn from_multiwavelet(
    filter: &ScalarFilter,
    scaling: &[Component],
    wavelets: &[Component],
    check: GramCheck,
) -> Result<AssembledBasis> {
    let m = scaling.len();
    let mw = Multiwavelet::new(filter, scaling.to_vec(), wavelets.to_vec(), m as u32)?;
    let basis = AssembledBasis { mw, max_deviation: 0.0 };
    let mut atoms = Vec::new();
    for k in -check.k_max..=check.k_max {
        atoms.push(basis.scaling_channels(k));
        for t in 0..2 {
            atoms.push(basis.wavelet_channels(basis.mw.level_stride * t, k)?);
        }
    }
    let deviation =
        star_gram_deviations(filter, &atoms, check.relative_level)?.iter().map(|p| p.deviation).fold(0.0, f64::max);
    if !(deviation <= check.tolerance) {
        return Err(Error::NotOrthonormal { deviation, tolerance: check.tolerance });
    }
    Ok(AssembledBasis { max_deviation: deviation, ..basis })
}

impl AssembledBasis {
    pub fn multiwavelet(&self) -> &Multiwavelet {
        &self.mw
    }

    pub fn m(&self) -> usize {
        self.mw.m()
    }

    pub fn dilation(&self) -> u64 {
        2
    }

    /// Dilation-2 level step between consecutive wavelet atoms.
    pub fn level_stride(&self) -> u32 {
        self.mw.level_stride
    }

    /// Largest Gram deviation seen by the assembly check.
    pub fn gram_deviation(&self) -> f64 {
        self.max_deviation
    }

    pub fn scaling_channels(&self, k: i64) -> Vec<Placed> {
        self.mw.scaling.iter().map(|c| c.at(k)).collect()
    }

    /// `Ψ_{j,k} = (2^{j/2} ψ_α(2^j ·) at translation k)_α`.
    pub fn wavelet_channels(&self, j: u32, k: i64) -> Result<Vec<Placed>> {
        if j % self.mw.level_stride != 0 {
            return Err(Error::Parameter(format!(
                "level {j} is not a multiple of the level stride {}",
                self.mw.level_stride
            )));
        }
        Ok(self.mw.wavelets.iter().map(|c| c.finer(j).at(k)).collect())
    }

    pub fn sample(&self, channels: &[Placed], level: u32) -> Result<VectorSampledFunction> {
        sample_channels(&AtomSampler::new(self.mw.filter(), level), channels, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar_wavelet::{daubechies_filter, haar_filter};
    use crate::star_product::star;
    use std::f64::consts::SQRT_2;

    #[test]
    fn haar_two_channel_components() {
        let b = build_vector_basis(&haar_filter(), 2).unwrap();
        assert_eq!(b.dilation(), 4);
        let labels: Vec<String> = b.scaling_spec().iter().map(|c| c.to_string()).collect();
        assert_eq!(labels, ["phi@0", "psi@0"]);
        let w: Vec<u32> = (0..3).flat_map(|t| b.wavelet_spec(t)).map(|c| c.scale).collect();
        assert_eq!(w, [1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn single_channel_is_scalar_basis() {
        let b = build_vector_basis(&haar_filter(), 1).unwrap();
        assert_eq!(b.scaling_spec(), vec![Component::new(AtomKind::Scaling, 0)]);
        assert_eq!(b.wavelet_spec(3), vec![Component::new(AtomKind::Wavelet, 3)]);
        assert_eq!(b.dilation(), 2);
    }

    #[test]
    fn db2_three_channels() {
        let b = build_vector_basis(&daubechies_filter(2).unwrap(), 3).unwrap();
        let labels: Vec<String> = b.scaling_spec().iter().map(|c| c.to_string()).collect();
        assert_eq!(labels, ["phi@0", "psi@0", "psi@1"]);
        assert_eq!(b.dilation(), 8);
        assert!(build_vector_basis(&haar_filter(), 0).is_err());
    }

    #[test]
    fn coverage_is_a_partition() {
        for m in 1..=5 {
            let b = build_vector_basis(&haar_filter(), m).unwrap();
            for levels in 0..4 {
                b.scale_coverage(levels).unwrap();
            }
        }
    }

    #[test]
    fn sampled_atom_examples() {
        let b = build_vector_basis(&haar_filter(), 2).unwrap();
        let phi = sample_vector_atom(&b, Which1D::Scaling, 0, 4).unwrap();
        assert_eq!(phi.channel(0).values(), &[1.0; 16]);
        let psi: Vec<f64> = (0..16).map(|i| if i < 8 { 1.0 } else { -1.0 }).collect();
        assert_eq!(phi.channel(1).values(), psi.as_slice());

        let w = sample_vector_atom(&b, Which1D::Wavelet(0), 0, 4).unwrap();
        let c0 = w.channel(0).values();
        assert_eq!(&c0[..4], &[SQRT_2; 4]);
        assert_eq!(&c0[4..8], &[-SQRT_2; 4]);
        assert!(c0[8..].iter().all(|&v| v == 0.0));
        let c1 = w.channel(1).values();
        assert_eq!(&c1[..2], &[2.0, 2.0]);
        assert_eq!(&c1[2..4], &[-2.0, -2.0]);

        let shifted = sample_vector_atom(&b, Which1D::Scaling, 3, 4).unwrap();
        assert_eq!(shifted.channel(0).start()[0], phi.channel(0).start()[0] + 3 * 16);
        assert_eq!(shifted.channel(0).values(), phi.channel(0).values());

        assert!(matches!(sample_vector_atom(&b, Which1D::Wavelet(2), 0, 4), Err(Error::Resolution(_))));
    }

    #[test]
    fn haar_refinement_taps() {
        let b = build_vector_basis(&haar_filter(), 2).unwrap();
        let mf = matrix_refinement_filter(&b);
        assert_eq!(mf.offset(), 0);
        assert_eq!(mf.taps().len(), 4);
        let row1: Vec<f64> = mf.taps().iter().map(|t| t.get(0, 0)).collect();
        let row2: Vec<f64> = mf.taps().iter().map(|t| t.get(1, 0)).collect();
        assert_eq!(row1, [0.5; 4]);
        assert_eq!(row2, [0.5, 0.5, -0.5, -0.5]);
        assert!(mf.taps().iter().all(|t| t.get(0, 1) == 0.0 && t.get(1, 1) == 0.0));
        assert_eq!(mf.dilation(), 4);
    }

    #[test]
    fn scalar_refinement_taps() {
        let f = daubechies_filter(3).unwrap();
        let mf = matrix_refinement_filter(&build_vector_basis(&f, 1).unwrap());
        let taps: Vec<f64> = mf.taps().iter().map(|t| t.get(0, 0)).collect();
        for (a, b) in taps.iter().zip(f.h()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn refinement_residuals() {
        let haar = build_vector_basis(&haar_filter(), 2).unwrap();
        let mf = matrix_refinement_filter(&haar);
        for level in 2..=8 {
            assert!(refine_residual(&haar, &mf, level).unwrap() <= 1e-12);
        }
        let zero = refine_residual(&haar, &MatrixFilter::zero(2), 6).unwrap();
        assert_eq!(zero, 2.0);
        let db2 = build_vector_basis(&daubechies_filter(2).unwrap(), 2).unwrap();
        assert!(refine_residual(&db2, &matrix_refinement_filter(&db2), 10).unwrap() <= 1e-8);
        for m in 1..=4 {
            let b = build_vector_basis(&daubechies_filter(3).unwrap(), m).unwrap();
            assert!(refine_residual(&b, &matrix_refinement_filter(&b), 8).unwrap() <= 1e-8, "m={m}");
        }
    }

    #[test]
    fn haar_multiwavelet() {
        let mw = to_multiwavelet(&build_vector_basis(&haar_filter(), 2).unwrap());
        let s: Vec<String> = mw.scaling().iter().map(|c| c.to_string()).collect();
        let w: Vec<String> = mw.wavelets().iter().map(|c| c.to_string()).collect();
        assert_eq!(s, ["phi@0", "psi@0"]);
        assert_eq!(w, ["psi@1", "psi@2"]);
        assert_eq!(mw.wavelets()[0].amplitude, SQRT_2);
        assert_eq!(mw.wavelets()[1].amplitude, 2.0);
        let scalar = to_multiwavelet(&build_vector_basis(&haar_filter(), 1).unwrap());
        assert_eq!(scalar.scaling(), &[Component::new(AtomKind::Scaling, 0)]);
        assert_eq!(scalar.wavelets(), &[Component::new(AtomKind::Wavelet, 0)]);
    }

    #[test]
    fn multiwavelet_atoms_are_orthonormal() {
        let mw = to_multiwavelet(&build_vector_basis(&haar_filter(), 2).unwrap());
        let mut atoms = Vec::new();
        for k in -2..=2 {
            for c in mw.scaling().iter().chain(mw.wavelets()) {
                atoms.push(vec![c.at(k)]);
            }
        }
        let worst =
            star_gram_deviations(mw.filter(), &atoms, 8).unwrap().iter().map(|p| p.deviation).fold(0.0, f64::max);
        assert!(worst <= 1e-10, "{worst}");
    }

    #[test]
    fn multiwavelet_spaces_nest() {
        for m in 1..=3 {
            let mw = to_multiwavelet(&build_vector_basis(&haar_filter(), m).unwrap());
            for j in 0..3 {
                assert!(nesting_residual(&mw, j, 8).unwrap() <= 1e-12, "m={m} j={j}");
            }
        }
    }

    #[test]
    fn round_trip_through_multiwavelet() {
        let basis = build_vector_basis(&haar_filter(), 2).unwrap();
        let mw = to_multiwavelet(&basis);
        let assembled = from_multiwavelet(mw.filter(), mw.scaling(), mw.wavelets(), GramCheck::default()).unwrap();
        assert!(assembled.gram_deviation() <= 1e-10);
        for k in -2..=2 {
            assert_eq!(assembled.scaling_channels(k), basis.placed(Which1D::Scaling, k));
            for t in 0..3 {
                let j = assembled.level_stride() * t;
                assert_eq!(assembled.wavelet_channels(j, k).unwrap(), basis.placed(Which1D::Wavelet(t), k));
            }
        }
        assert!(assembled.wavelet_channels(1, 0).is_err());
    }

    #[test]
    fn scalar_haar_assembles_to_scalar_basis() {
        let f = haar_filter();
        let a = from_multiwavelet(
            &f,
            &[Component::new(AtomKind::Scaling, 0)],
            &[Component::new(AtomKind::Wavelet, 0)],
            GramCheck::default(),
        )
        .unwrap();
        assert_eq!(a.level_stride(), 1);
        assert_eq!(a.wavelet_channels(3, 1).unwrap(), vec![Component::new(AtomKind::Wavelet, 3).at(1)]);
    }

    #[test]
    fn perturbed_multiwavelet_is_rejected() {
        let f = haar_filter();
        let scaling = [Component::new(AtomKind::Scaling, 0), Component::new(AtomKind::Wavelet, 0)];
        let bent = [Component::new(AtomKind::Wavelet, 1).with_amplitude(1.5), Component::new(AtomKind::Wavelet, 2)];
        assert!(matches!(
            from_multiwavelet(&f, &scaling, &bent, GramCheck::default()),
            Err(Error::NotOrthonormal { .. })
        ));
        let overlapping = [Component::new(AtomKind::Wavelet, 0), Component::new(AtomKind::Wavelet, 2)];
        assert!(matches!(
            from_multiwavelet(&f, &scaling, &overlapping, GramCheck::default()),
            Err(Error::NotOrthonormal { .. })
        ));
    }

    #[test]
    fn pair_integrator_matches_common_grid() {
        let f = daubechies_filter(2).unwrap();
        let basis = build_vector_basis(&f, 2).unwrap();
        let mut pi = PairIntegrator::new(&f, 6, 4);
        for (w1, k1) in [(Which1D::Scaling, 0), (Which1D::Wavelet(0), 1), (Which1D::Wavelet(1), -2)] {
            for (w2, k2) in [(Which1D::Scaling, 1), (Which1D::Wavelet(0), 0), (Which1D::Wavelet(1), 3)] {
                let a = basis.placed(w1, k1);
                let b = basis.placed(w2, k2);
                let finest = a.iter().chain(&b).map(|p| p.scale).max().unwrap();
                let relative = pi.star(&a, &b).unwrap();
                // common absolute grid: every channel pair then shares J + finest;
                // only pairs with the same finest/coarsest spread agree exactly
                let level = 6 + finest;
                let sa = sample_vector_atom(&basis, w1, k1, level).unwrap();
                let sb = sample_vector_atom(&basis, w2, k2, level).unwrap();
                let common = star(&sa, &sb).unwrap();
                for i in 0..2 {
                    for j in 0..2 {
                        let pair_finest = a[i].scale.max(b[j].scale);
                        if pair_finest == finest {
                            assert!((relative.get(i, j) - common.get(i, j)).abs() <= 1e-12);
                        }
                    }
                }
            }
        }
    }
}
