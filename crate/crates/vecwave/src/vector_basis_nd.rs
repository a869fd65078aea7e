//! Vector-valued bases of `L²(ℝᵈ, ℝᵐ)`: the separable scalar atoms of an
//! m-multiwavelet are stacked m at a time, the stacking given by a partition
//! of `{1..m}^d` into blocks of size m.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar_wavelet::{filter_by_name, moment, AtomKind, AtomSampler, ScalarFilter};
use crate::star_product::{MatrixM, SampledField, VectorSampledFunction};
use crate::tensor_multiwavelet::{
    alpha_tuples, binomial, check_guard, enumerate_families, translations, MAX_DENSE_DIM,
};
use crate::vector_basis_1d::{
    build_vector_basis, to_multiwavelet, Multiwavelet, PairIntegrator, Placed, VectorBasis1D,
};

/// Ordered blocks of α tuples; block `l` holds rows `r = 1..m`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    d: usize,
    m: usize,
    blocks: Vec<Vec<Vec<usize>>>,
}

impl Partition {
    pub fn new(d: usize, m: usize, blocks: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let p = Partition { d, m, blocks };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.d, self.m);
        if d == 0 || m == 0 {
            return Err(Error::Parameter("d and m must be positive".into()));
        }
        let expected = m.pow(d as u32 - 1);
        if self.blocks.len() != expected {
            return Err(Error::Consistency(format!("{} blocks, expected m^(d-1) = {expected}", self.blocks.len())));
        }
        let mut seen = HashSet::new();
        for (l, block) in self.blocks.iter().enumerate() {
            if block.len() != m {
                return Err(Error::Consistency(format!("block {} has {} rows, expected {m}", l + 1, block.len())));
            }
            for alpha in block {
                if alpha.len() != d || alpha.iter().any(|&a| a == 0 || a > m) {
                    return Err(Error::Consistency(format!("block {} has invalid tuple {alpha:?}", l + 1)));
                }
                if !seen.insert(alpha.clone()) {
                    return Err(Error::Consistency(format!("tuple {alpha:?} appears twice")));
                }
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self) -> &[Vec<Vec<usize>>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// Latin-square partition: block β ∈ {1..m}^{d-1} has rows
/// `α = (r, β_1 + r - 1, …, β_{d-1} + r - 1)` taken cyclically in `1..=m`.
pub fn cyclic_partition(d: usize, m: usize) -> Result<Partition> {
    if d == 0 || m == 0 {
        return Err(Error::Parameter("d and m must be positive".into()));
    }
    let blocks = alpha_tuples(d - 1, m)
        .into_iter()
        .map(|beta| {
            (1..=m)
                .map(|r| {
                    let mut alpha = vec![r];
                    alpha.extend(beta.iter().map(|&b| (b + r - 2) % m + 1));
                    alpha
                })
                .collect()
        })
        .collect();
    Partition::new(d, m, blocks)
}

/// A uniformly shuffled partition (for checks that must not depend on the
/// cyclic choice).
pub fn random_partition<R: Rng>(d: usize, m: usize, rng: &mut R) -> Result<Partition> {
    if d == 0 || m == 0 {
        return Err(Error::Parameter("d and m must be positive".into()));
    }
    let mut all = alpha_tuples(d, m);
    all.shuffle(rng);
    Partition::new(d, m, all.chunks(m).map(|c| c.to_vec()).collect())
}

/// One family of vector atoms: an orientation, a block and its rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyDescriptor {
    pub name: String,
    pub eps: Vec<u8>,
    pub block: usize,
    pub rows: Vec<Vec<usize>>,
}

impl FamilyDescriptor {
    pub fn is_scaling(&self) -> bool {
        self.eps.iter().all(|&b| b == 0)
    }

    pub fn e(&self) -> usize {
        self.eps.iter().filter(|&&b| b == 1).count()
    }

    pub fn eps_bits(&self) -> String {
        self.eps.iter().map(|&b| char::from(b'0' + b)).collect()
    }

    pub fn manifest_line(&self) -> String {
        let rows: Vec<String> = self
            .rows
            .iter()
            .map(|a| format!("({})", a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
            .collect();
        format!("family={} eps={} block={} rows={}", self.name, self.eps_bits(), self.block, rows.join(";"))
    }

    /// TeX-style formula of the family, e.g.
    /// `\Psi^1_{j,k}(x,y)=(\phi_1(2^jx-k_1)\psi_1(2^jy-k_2),…)^T`.
    pub fn formula(&self) -> String {
        let d = self.eps.len();
        let vars: Vec<String> = match d {
            1 => vec!["x".into()],
            2 => vec!["x".into(), "y".into()],
            3 => vec!["x".into(), "y".into(), "z".into()],
            _ => (1..=d).map(|i| format!("x_{i}")).collect(),
        };
        let shift = |i: usize| if d == 1 { "k".to_string() } else { format!("k_{}", i + 1) };
        let scaling = self.is_scaling();
        let (symbol, index) = match self.name.find(|c: char| c.is_ascii_digit()) {
            Some(p) => (&self.name[..p], &self.name[p..]),
            None => (self.name.as_str(), ""),
        };
        let mut out = format!("\\{symbol}^{index}_");
        out.push_str(if scaling { "k" } else { "{j,k}" });
        let _ = write!(out, "({})=(", vars.join(","));
        for (r, alpha) in self.rows.iter().enumerate() {
            if r > 0 {
                out.push(',');
            }
            for i in 0..d {
                let f = if self.eps[i] == 0 { "phi" } else { "psi" };
                let arg = if scaling { vars[i].clone() } else { format!("2^j{}", vars[i]) };
                let _ = write!(out, "\\{f}_{}({arg}-{})", alpha[i], shift(i));
            }
        }
        out.push_str(")^T");
        out
    }
}

/// A vector atom: a family at level `j` and translation `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorAtomND {
    pub family: usize,
    pub level: u32,
    pub k: Vec<i64>,
}

/// The multivariate vector basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisND {
    mw: Multiwavelet,
    d: usize,
    partition: Partition,
    families: Vec<FamilyDescriptor>,
}

pub fn build_basis_nd(filter: &ScalarFilter, d: usize, m: usize) -> Result<BasisND> {
    check_guard(d, m)?;
    let mw = to_multiwavelet(&build_vector_basis(filter, m)?);
    BasisND::with_partition(mw, cyclic_partition(d, m)?)
}

impl BasisND {
    /// Catalog from a multiwavelet and any valid partition. Families are
    /// ordered by `e`, then `ε` lexicographically, then block.
    pub fn with_partition(mw: Multiwavelet, partition: Partition) -> Result<Self> {
        let (d, m) = (partition.d(), partition.m());
        check_guard(d, m)?;
        partition.validate()?;
        if mw.m() != m {
            return Err(Error::Dimension(format!("multiwavelet has {} channels, partition {m}", mw.m())));
        }
        let enumeration = enumerate_families(d, m)?;
        let mut families = Vec::new();
        let mut scaling_index = 0;
        let mut wavelet_index = 0;
        for fam in std::iter::once(&enumeration.base).chain(&enumeration.families) {
            let mut eps_seen: Vec<&Vec<u8>> = Vec::new();
            for (eps, _) in &fam.members {
                if eps_seen.last() != Some(&eps) {
                    eps_seen.push(eps);
                }
            }
            for eps in eps_seen {
                for (l, block) in partition.blocks().iter().enumerate() {
                    let name = if fam.e == 0 {
                        scaling_index += 1;
                        format!("Phi{scaling_index}")
                    } else {
                        wavelet_index += 1;
                        format!("Psi{wavelet_index}")
                    };
                    families.push(FamilyDescriptor { name, eps: eps.clone(), block: l + 1, rows: block.clone() });
                }
            }
        }
        Ok(BasisND { mw, d, partition, families })
    }

    /// The d = 1 basis of a univariate vector basis.
    pub fn from_1d(basis: &VectorBasis1D) -> Result<Self> {
        BasisND::with_partition(to_multiwavelet(basis), cyclic_partition(1, basis.m())?)
    }

    pub fn multiwavelet(&self) -> &Multiwavelet {
        &self.mw
    }

    pub fn filter(&self) -> &ScalarFilter {
        self.mw.filter()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.mw.m()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn families(&self) -> &[FamilyDescriptor] {
        &self.families
    }

    pub fn scaling_families(&self) -> impl Iterator<Item = &FamilyDescriptor> {
        self.families.iter().filter(|f| f.is_scaling())
    }

    pub fn wavelet_families(&self) -> impl Iterator<Item = &FamilyDescriptor> {
        self.families.iter().filter(|f| !f.is_scaling())
    }

    /// Number of vector families with `e` wavelet factors.
    pub fn family_count(&self, e: usize) -> usize {
        self.families.iter().filter(|f| f.e() == e).count()
    }

    /// Scalar atoms per level obtained by unstacking the `e` families.
    pub fn unstacked_count(&self, e: usize) -> usize {
        self.families.iter().filter(|f| f.e() == e).map(|f| f.rows.len()).sum()
    }

    /// Expected family count `C(d,e)·m^{d-1}`.
    pub fn expected_family_count(&self, e: usize) -> usize {
        binomial(self.d, e) * self.m().pow(self.d as u32 - 1)
    }

    /// The `m × d` univariate factors of an atom.
    pub fn factors(&self, atom: &VectorAtomND) -> Result<Vec<Vec<Placed>>> {
        let fam = self
            .families
            .get(atom.family)
            .ok_or_else(|| Error::Parameter(format!("no family with index {}", atom.family)))?;
        if atom.k.len() != self.d {
            return Err(Error::Dimension(format!("translation has {} entries, d = {}", atom.k.len(), self.d)));
        }
        if fam.is_scaling() && atom.level != 0 {
            return Err(Error::Parameter("scaling families exist only at level 0".into()));
        }
        Ok(fam
            .rows
            .iter()
            .map(|alpha| (0..self.d).map(|i| self.mw.factor(fam.eps[i], alpha[i], atom.level).at(atom.k[i])).collect())
            .collect())
    }

    /// Scaling atoms and wavelet atoms at levels `0..levels`, translations in
    /// `[-k_max, k_max]^d`.
    pub fn atoms(&self, levels: u32, k_max: i64) -> Vec<VectorAtomND> {
        let ks = translations(self.d, k_max);
        let mut out = Vec::new();
        for (idx, fam) in self.families.iter().enumerate() {
            let fam_levels = if fam.is_scaling() { 1 } else { levels };
            for level in 0..fam_levels {
                for k in &ks {
                    out.push(VectorAtomND { family: idx, level, k: k.clone() });
                }
            }
        }
        out
    }

    /// Plain-text manifest: `key=value` header lines, then one family per line.
    pub fn manifest(&self) -> String {
        let comps =
            |v: &[crate::vector_basis_1d::Component]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        let _ = writeln!(out, "vecwave-manifest=1");
        let _ = writeln!(out, "filter={}", self.filter().name());
        let _ = writeln!(out, "d={}", self.d);
        let _ = writeln!(out, "m={}", self.m());
        let _ = writeln!(out, "dilation={}", 1u64 << self.m());
        let _ = writeln!(out, "level_stride={}", self.mw.level_stride());
        let _ = writeln!(out, "scaling={}", comps(self.mw.scaling()));
        let _ = writeln!(out, "wavelets={}", comps(self.mw.wavelets()));
        let _ = writeln!(out, "families={}", self.families.len());
        for f in &self.families {
            let _ = writeln!(out, "{}", f.manifest_line());
        }
        out
    }

    /// Parses a manifest written by [`BasisND::manifest`]. The partition is
    /// read back from the scaling families.
    pub fn from_manifest(text: &str) -> Result<Self> {
        let mut header = std::collections::BTreeMap::new();
        let mut families = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with("family=") {
                families.push(parse_family(line).map_err(|e| Error::Format(format!("line {}: {e}", n + 1)))?);
            } else {
                let (k, v) =
                    line.split_once('=').ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
                header.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| header.get(k).ok_or_else(|| Error::Format(format!("manifest lacks `{k}`")));
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Format(format!("`{k}` is not a non-negative integer")))
        };
        if get("vecwave-manifest")? != "1" {
            return Err(Error::Format("unsupported manifest version".into()));
        }
        let filter = filter_by_name(get("filter")?).map_err(|e| Error::Format(e.to_string()))?;
        let (d, m) = (num("d")?, num("m")?);
        check_guard(d, m)?;
        let mut blocks = Vec::new();
        for f in families.iter().filter(|f| f.is_scaling()) {
            if f.block != blocks.len() + 1 {
                return Err(Error::Format(format!("scaling family {} out of order", f.name)));
            }
            blocks.push(f.rows.clone());
        }
        let partition = Partition::new(d, m, blocks).map_err(|e| Error::Format(e.to_string()))?;
        let mw = to_multiwavelet(&build_vector_basis(&filter, m)?);
        let basis = BasisND::with_partition(mw, partition)?;
        let consistent = basis.families == families
            && num("families")? == families.len()
            && num("dilation")? == 1usize << m
            && num("level_stride")? == basis.mw.level_stride() as usize;
        if !consistent {
            return Err(Error::Format("manifest families do not match the declared basis".into()));
        }
        Ok(basis)
    }
}

fn parse_family(line: &str) -> std::result::Result<FamilyDescriptor, String> {
    let mut name = None;
    let mut eps = None;
    let mut block = None;
    let mut rows = None;
    for field in line.split_whitespace() {
        let (k, v) = field.split_once('=').ok_or(format!("bad field `{field}`"))?;
        match k {
            "family" => name = Some(v.to_string()),
            "eps" => {
                eps = Some(
                    v.chars()
                        .map(|c| match c {
                            '0' => Ok(0u8),
                            '1' => Ok(1u8),
                            _ => Err(format!("bad ε bit `{c}`")),
                        })
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                )
            }
            "block" => block = Some(v.parse::<usize>().map_err(|_| format!("bad block `{v}`"))?),
            "rows" => {
                rows = Some(
                    v.split(';')
                        .map(|t| {
                            t.strip_prefix('(')
                                .and_then(|t| t.strip_suffix(')'))
                                .ok_or(format!("bad row `{t}`"))?
                                .split(',')
                                .map(|a| a.parse::<usize>().map_err(|_| format!("bad index `{a}`")))
                                .collect()
                        })
                        .collect::<std::result::Result<Vec<Vec<usize>>, String>>()?,
                )
            }
            _ => return Err(format!("unknown field `{k}`")),
        }
    }
    Ok(FamilyDescriptor {
        name: name.ok_or("missing family")?,
        eps: eps.ok_or("missing eps")?,
        block: block.ok_or("missing block")?,
        rows: rows.ok_or("missing rows")?,
    })
}

/// The eight families of the d = m = 2 basis, in catalog order.
pub fn planar_catalog(basis: &BasisND) -> Result<Vec<FamilyDescriptor>> {
    if basis.d() != 2 || basis.m() != 2 {
        return Err(Error::Parameter(format!("catalog needs d = m = 2, got d = {}, m = {}", basis.d(), basis.m())));
    }
    Ok(basis.families().to_vec())
}

/// Removes TeX grouping braces and whitespace, so `2^{j}x` and `2^jx` compare equal.
pub fn normalize_formula(s: &str) -> String {
    s.chars().filter(|c| !matches!(c, '{' | '}') && !c.is_whitespace()).collect()
}

/// Dense samples of a vector atom, one channel per row (d ≤ 3).
pub fn sample_vector_atom_nd(atom: &VectorAtomND, basis: &BasisND, level: u32) -> Result<VectorSampledFunction> {
    if basis.d() > MAX_DENSE_DIM {
        return Err(Error::Size(format!("dense sampling supports d ≤ {MAX_DENSE_DIM}, got {}", basis.d())));
    }
    let factors = basis.factors(atom)?;
    let finest = factors.iter().flatten().map(|p| p.scale).max().unwrap_or(0);
    if finest > level {
        return Err(Error::Resolution(format!(
            "factor scale {finest} needs grid level at least {finest}, got {level}"
        )));
    }
    let sampler = AtomSampler::new(basis.filter(), level);
    let channels = factors
        .iter()
        .map(|row| {
            let sampled = row.iter().map(|p| p.sample(&sampler, level)).collect::<Result<Vec<_>>>()?;
            SampledField::outer(&sampled)
        })
        .collect::<Result<Vec<_>>>()?;
    VectorSampledFunction::new(channels)
}

/// `⟨A, B⟩_*` with every entry a product of d univariate inner products.
pub fn star_separable(a: &[Vec<Placed>], b: &[Vec<Placed>], integrator: &mut PairIntegrator) -> Result<MatrixM> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("channel counts {} and {} differ", a.len(), b.len())));
    }
    let m = a.len();
    let mut out = MatrixM::zeros(m);
    for r in 0..m {
        for s in 0..m {
            let mut v = 1.0;
            for (p, q) in a[r].iter().zip(&b[s]) {
                v *= integrator.inner(p, q)?;
                if v == 0.0 {
                    break;
                }
            }
            out.set(r, s, v);
        }
    }
    Ok(out)
}

/// Worst star-orthonormality deviations over all pairs of `atoms`:
/// `(max ‖⟨A,A⟩_* - I‖₁, max ‖⟨A,B⟩_*‖₁ for A ≠ B)`.
pub fn nd_gram_deviation(basis: &BasisND, atoms: &[VectorAtomND], relative: u32) -> Result<(f64, f64)> {
    let factors = atoms.iter().map(|a| basis.factors(a)).collect::<Result<Vec<_>>>()?;
    let scales = factors.iter().flatten().flatten().map(|p| p.scale);
    let gap = scales.clone().max().unwrap_or(0) - scales.min().unwrap_or(0);
    let mut integrator = PairIntegrator::new(basis.filter(), relative, gap);
    let mut diag: f64 = 0.0;
    let mut off: f64 = 0.0;
    for a in 0..atoms.len() {
        for b in a..atoms.len() {
            let s = star_separable(&factors[a], &factors[b], &mut integrator)?;
            if a == b {
                diag = diag.max(s.sub(&MatrixM::identity(s.order()))?.norm1());
            } else {
                off = off.max(s.norm1());
            }
        }
    }
    Ok((diag, off))
}

/// Largest `|∫ x^p f|`, `p` below the filter's vanishing moments, over
/// every wavelet factor of every family at levels `0..levels`, `k = 0`.
/// The moments of a separable channel in a wavelet variable are products
/// with these, so this bounds every ψ-derived channel.
pub fn max_wavelet_moment(basis: &BasisND, levels: u32, grid: u32) -> Result<f64> {
    let sampler = AtomSampler::new(basis.filter(), grid);
    let mut seen = HashSet::new();
    let mut worst: f64 = 0.0;
    for atom in basis.atoms(levels, 0) {
        for p in basis.factors(&atom)?.into_iter().flatten() {
            if p.kind != AtomKind::Wavelet || !seen.insert(p.scale) {
                continue;
            }
            if p.scale > grid {
                return Err(Error::Resolution(format!(
                    "factor scale {} needs grid level at least {}, got {grid}",
                    p.scale, p.scale
                )));
            }
            let f = p.sample(&sampler, grid)?;
            for q in 0..basis.filter().vanishing_moments() as u32 {
                worst = worst.max(moment(&f, q)?.abs());
            }
        }
    }
    Ok(worst)
}
