//! Separable multiresolution of `L²(ℝᵈ)` from an m-multiwavelet: atoms
//! `Π_i ψ^{ε_i, α_i}_{j, k_i}(x_i)` with `ψ^{0,α} = φ_α`, `ψ^{1,α} = ψ_α`.

use crate::error::{Error, Result};
use crate::scalar_wavelet::{quad_inner, AtomSampler};
use crate::star_product::SampledField;
use crate::vector_basis_1d::{projection, Multiwavelet, Placed};

/// Enumeration guards.
pub const MAX_DIM: usize = 6;
pub const MAX_M: usize = 4;
/// Largest dimension for dense sampling.
pub const MAX_DENSE_DIM: usize = 3;
/// Largest atom list accepted by [`gram_matrix`].
pub const MAX_GRAM: usize = 512;

/// One separable atom.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TensorAtom {
    pub level: u32,
    pub k: Vec<i64>,
    pub eps: Vec<u8>,
    pub alpha: Vec<usize>,
}

impl TensorAtom {
    pub fn new(level: u32, k: Vec<i64>, eps: Vec<u8>, alpha: Vec<usize>) -> Result<Self> {
        let d = k.len();
        if d == 0 || eps.len() != d || alpha.len() != d {
            return Err(Error::Dimension("k, ε and α must have the same positive length".into()));
        }
        if eps.iter().any(|&b| b > 1) || alpha.contains(&0) {
            return Err(Error::Parameter("ε must be bits and α must be 1-based".into()));
        }
        if level > 0 && eps.iter().all(|&b| b == 0) {
            return Err(Error::Parameter("ε = 0 atoms exist only at the base level".into()));
        }
        Ok(TensorAtom { level, k, eps, alpha })
    }

    pub fn dim(&self) -> usize {
        self.k.len()
    }

    /// Number of wavelet factors.
    pub fn e(&self) -> usize {
        self.eps.iter().filter(|&&b| b == 1).count()
    }

    /// The d univariate factors.
    pub fn factors(&self, mw: &Multiwavelet) -> Result<Vec<Placed>> {
        if self.alpha.iter().any(|&a| a > mw.m()) {
            return Err(Error::Parameter(format!("α index exceeds m = {}", mw.m())));
        }
        Ok((0..self.dim()).map(|i| mw.factor(self.eps[i], self.alpha[i], self.level).at(self.k[i])).collect())
    }

    /// Ordering key `(level, e, ε, α, k)`.
    pub fn sort_key(&self) -> (u32, usize, Vec<u8>, Vec<usize>, Vec<i64>) {
        (self.level, self.e(), self.eps.clone(), self.alpha.clone(), self.k.clone())
    }
}

/// All `(ε, α)` shapes with exactly `e` wavelet factors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubbandFamily {
    pub e: usize,
    pub members: Vec<(Vec<u8>, Vec<usize>)>,
}

/// Base family (`e = 0`) and the wavelet families `e = 1..=d`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyEnumeration {
    pub d: usize,
    pub m: usize,
    pub base: SubbandFamily,
    pub families: Vec<SubbandFamily>,
}

impl FamilyEnumeration {
    pub fn total_shapes(&self) -> usize {
        self.base.members.len() + self.families.iter().map(|f| f.members.len()).sum::<usize>()
    }

    /// CSV listing `e,eps,alpha`, one line per member.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("e,eps,alpha\n");
        for fam in std::iter::once(&self.base).chain(&self.families) {
            for (eps, alpha) in &fam.members {
                let bits: String = eps.iter().map(|b| char::from(b'0' + b)).collect();
                let a: Vec<String> = alpha.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("{},{},{}\n", fam.e, bits, a.join(" ")));
            }
        }
        out
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// ε vectors with exactly `e` ones, in lexicographic order.
pub fn eps_vectors(d: usize, e: usize) -> Vec<Vec<u8>> {
    (0..1usize << d)
        .map(|bits| (0..d).map(|i| ((bits >> (d - 1 - i)) & 1) as u8).collect::<Vec<u8>>())
        .filter(|v| v.iter().filter(|&&b| b == 1).count() == e)
        .collect()
}

/// All α ∈ {1..m}^d in lexicographic order.
pub fn alpha_tuples(d: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (1..=m).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

pub(crate) fn check_guard(d: usize, m: usize) -> Result<()> {
    if d == 0 || m == 0 {
        return Err(Error::Parameter("d and m must be positive".into()));
    }
    if d > MAX_DIM || m > MAX_M {
        return Err(Error::Size(format!("d = {d}, m = {m} exceeds the enumeration guard d ≤ {MAX_DIM}, m ≤ {MAX_M}")));
    }
    Ok(())
}

/// Enumerates the `(2m)^d` atom shapes grouped by `e`.
pub fn enumerate_families(d: usize, m: usize) -> Result<FamilyEnumeration> {
    check_guard(d, m)?;
    let alphas = alpha_tuples(d, m);
    let family = |e: usize| SubbandFamily {
        e,
        members: eps_vectors(d, e)
            .into_iter()
            .flat_map(|eps| alphas.iter().map(move |a| (eps.clone(), a.clone())))
            .collect(),
    };
    Ok(FamilyEnumeration { d, m, base: family(0), families: (1..=d).map(family).collect() })
}

/// Atoms of the first `levels` levels with translations in `-k_max..=k_max`
/// per axis, ordered by [`TensorAtom::sort_key`].
pub fn enumerate_atoms(d: usize, m: usize, levels: u32, k_max: i64) -> Result<Vec<TensorAtom>> {
    let fams = enumerate_families(d, m)?;
    let ks = translations(d, k_max);
    let mut out = Vec::new();
    for (eps, alpha) in &fams.base.members {
        for k in &ks {
            out.push(TensorAtom { level: 0, k: k.clone(), eps: eps.clone(), alpha: alpha.clone() });
        }
    }
    for level in 0..levels {
        for fam in &fams.families {
            for (eps, alpha) in &fam.members {
                for k in &ks {
                    out.push(TensorAtom { level, k: k.clone(), eps: eps.clone(), alpha: alpha.clone() });
                }
            }
        }
    }
    out.sort_by_key(TensorAtom::sort_key);
    Ok(out)
}

/// All integer vectors in `[-k_max, k_max]^d`, lexicographic.
pub fn translations(d: usize, k_max: i64) -> Vec<Vec<i64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-k_max..=k_max).map(move |k| {
                    let mut v = p.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

fn check_resolution(factors: &[Placed], level: u32) -> Result<()> {
    let finest = factors.iter().map(|p| p.scale).max().unwrap_or(0);
    if finest > level {
        return Err(Error::Resolution(format!(
            "factor scale {finest} needs grid level at least {finest}, got {level}"
        )));
    }
    Ok(())
}

/// Dense samples of a separable atom (d ≤ 3).
pub fn sample_tensor_atom(atom: &TensorAtom, mw: &Multiwavelet, level: u32) -> Result<SampledField> {
    sample_with(&AtomSampler::new(mw.filter(), level), atom, mw, level)
}

fn sample_with(sampler: &AtomSampler, atom: &TensorAtom, mw: &Multiwavelet, level: u32) -> Result<SampledField> {
    if atom.dim() > MAX_DENSE_DIM {
        return Err(Error::Size(format!("dense sampling supports d ≤ {MAX_DENSE_DIM}, got {}", atom.dim())));
    }
    let factors = atom.factors(mw)?;
    check_resolution(&factors, level)?;
    let sampled = factors.iter().map(|p| p.sample(sampler, level)).collect::<Result<Vec<_>>>()?;
    SampledField::outer(&sampled)
}

/// Pairwise dense-quadrature inner products of `atoms`.
pub fn gram_matrix(atoms: &[TensorAtom], mw: &Multiwavelet, level: u32) -> Result<Vec<Vec<f64>>> {
    if atoms.len() > MAX_GRAM {
        return Err(Error::Size(format!("Gram matrix limited to {MAX_GRAM} atoms, got {}", atoms.len())));
    }
    let sampler = AtomSampler::new(mw.filter(), level);
    let fields = atoms.iter().map(|a| sample_with(&sampler, a, mw, level)).collect::<Result<Vec<_>>>()?;
    let n = atoms.len();
    let mut g = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a..n {
            let v = fields[a].inner(&fields[b])?;
            g[a][b] = v;
            g[b][a] = v;
        }
    }
    Ok(g)
}

/// Inner product as the product of the d univariate quadratures.
pub fn separable_inner(a: &TensorAtom, b: &TensorAtom, mw: &Multiwavelet, level: u32) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!("dimensions {} and {} differ", a.dim(), b.dim())));
    }
    let sampler = AtomSampler::new(mw.filter(), level);
    let fa = a.factors(mw)?;
    let fb = b.factors(mw)?;
    check_resolution(&fa, level)?;
    check_resolution(&fb, level)?;
    let mut acc = 1.0;
    for (p, q) in fa.iter().zip(&fb) {
        acc *= quad_inner(&p.sample(&sampler, level)?, &q.sample(&sampler, level)?)?;
    }
    Ok(acc)
}

/// Checks that every base atom at level `j` lies in the span of the base
/// atoms at level `j + 1`: the largest pointwise gap between the atom and
/// its projection (d ≤ 3, translations `k = 0`).
pub fn tensor_nesting_residual(mw: &Multiwavelet, d: usize, j: u32, level: u32) -> Result<f64> {
    check_guard(d, mw.m())?;
    if d > MAX_DENSE_DIM {
        return Err(Error::Size(format!("nesting check supports d ≤ {MAX_DENSE_DIM}, got {d}")));
    }
    let next: Vec<_> = (1..=mw.m()).map(|a| mw.factor(0, a, j + 1)).collect();
    let finest = next.iter().map(|c| c.scale).max().unwrap_or(0);
    if finest > level {
        return Err(Error::Resolution(format!("nesting check needs level ≥ {finest}, got {level}")));
    }
    let sampler = AtomSampler::new(mw.filter(), level);
    let mut per_alpha = Vec::new();
    for a in 1..=mw.m() {
        per_alpha.push(projection(&sampler, &mw.factor(0, a, j).at(0), &next, level)?);
    }
    let mut worst: f64 = 0.0;
    for alpha in alpha_tuples(d, mw.m()) {
        let originals: Vec<_> = alpha.iter().map(|&a| per_alpha[a - 1].0.clone()).collect();
        let approx: Vec<_> = alpha.iter().map(|&a| per_alpha[a - 1].1.clone()).collect();
        let f = SampledField::outer(&originals)?;
        let p = SampledField::outer(&approx)?;
        let gap = f.values().iter().zip(p.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(gap);
    }
    Ok(worst)
}
