//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::f64::consts::SQRT_2;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::{ArrayD, Ix2, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vecwave::scalar_wavelet::{daubechies_filter, filter_by_name, haar_filter, SampledFunction, ScalarFilter};
use vecwave::star_product::{hadamard, star, SampledField, VectorSampledFunction};
use vecwave::tensor_multiwavelet::enumerate_families;
use vecwave::vector_basis_1d::{
    atom_family, build_vector_basis, matrix_refinement_filter, refine_residual, star_gram_deviations, PairDeviation,
};
use vecwave::vector_basis_nd::{
    build_basis_nd, max_wavelet_moment, nd_gram_deviation, planar_catalog, random_partition, sample_vector_atom_nd,
    BasisND,
};
use vecwave::vtransform::{analyze_vector, dwt2, dwt_channel, max_levels, synthesize_vector, VectorSignal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn all_filters() -> Vec<ScalarFilter> {
    let mut v = vec![haar_filter()];
    v.extend((2..=10).map(|n| daubechies_filter(n).unwrap()));
    v
}

fn criterion_1() -> Outcome {
    let mut worst = (0.0f64, 0.0f64, 0.0f64);
    let mut failing = Vec::new();
    for f in all_filters() {
        let h = f.h();
        let sum = (h.iter().sum::<f64>() - SQRT_2).abs();
        let mut ortho: f64 = 0.0;
        for n in 0..h.len() {
            let s: f64 = (0..h.len() - 2 * n.min(h.len() / 2)).map(|k| h[k] * h[k + 2 * n]).sum();
            if 2 * n < h.len() {
                ortho = ortho.max((s - if n == 0 { 1.0 } else { 0.0 }).abs());
            }
        }
        let moments = (0..f.vanishing_moments() as u32).map(|p| f.wavelet_filter_moment(p).abs()).fold(0.0, f64::max);
        worst = (worst.0.max(sum), worst.1.max(ortho), worst.2.max(moments));
        if sum > 1e-12 || ortho > 1e-12 || moments > 1e-10 {
            failing.push(format!("{} (moment {moments:.1e})", f.name()));
        }
    }
    let detail = format!(
        "max |Σh-√2| {:.1e}, max orthonormality {:.1e}, max |Σg k^p| {:.1e}{}",
        worst.0,
        worst.1,
        worst.2,
        if failing.is_empty() { String::new() } else { format!("; over tolerance: {}", failing.join(", ")) }
    );
    outcome(failing.is_empty(), detail)
}

fn gram_pairs(filter: &ScalarFilter, m: usize, relative: u32) -> Vec<PairDeviation> {
    let basis = build_vector_basis(filter, m).unwrap();
    let atoms: Vec<_> = atom_family(&basis, 2, 4).into_iter().map(|(_, _, a)| a).collect();
    star_gram_deviations(filter, &atoms, relative).unwrap()
}

fn max_dev(p: &[PairDeviation]) -> f64 {
    p.iter().map(|p| p.deviation).fold(0.0, f64::max)
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [2, 3] {
        let dev = max_dev(&gram_pairs(&haar_filter(), m, 8));
        pass &= dev <= 1e-10;
        parts.push(format!("haar m={m} {dev:.1e}"));
    }
    for n in 2..=4 {
        let f = daubechies_filter(n).unwrap();
        for m in [2, 3] {
            let j8 = gram_pairs(&f, m, 8);
            let j10 = gram_pairs(&f, m, 10);
            let j12 = gram_pairs(&f, m, 12);
            let dev10 = max_dev(&j10);
            let violations = j8
                .iter()
                .zip(&j12)
                .filter(|(a, b)| !(a.deviation == 0.0 && b.deviation == 0.0) && b.deviation >= a.deviation)
                .count();
            pass &= dev10 <= 1e-3 && violations == 0;
            parts.push(format!("db{n} m={m} J10 {dev10:.1e} non-decreasing {violations}/{}", j8.len()));
        }
    }
    outcome(pass, parts.join("; "))
}

fn criterion_3() -> Outcome {
    let haar = build_vector_basis(&haar_filter(), 2).unwrap();
    let r_haar = refine_residual(&haar, &matrix_refinement_filter(&haar), 6).unwrap();
    let db2 = build_vector_basis(&daubechies_filter(2).unwrap(), 2).unwrap();
    let r_db2 = refine_residual(&db2, &matrix_refinement_filter(&db2), 10).unwrap();
    outcome(r_haar <= 1e-12 && r_db2 <= 1e-8, format!("haar J=6 {r_haar:.1e}, db2 J=10 {r_db2:.1e}"))
}

fn random_step(rng: &mut ChaCha8Rng, level: u32) -> SampledFunction {
    let start = rng.gen_range(-8..8);
    let len = rng.gen_range(1..16);
    SampledFunction::new(start, level, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let level = rng.gen_range(0..4);
        let mut fs: Vec<SampledFunction> = (0..8).map(|_| random_step(&mut rng, level)).collect();
        let [f1, f2, g1, g2, r1, r2, u1, u2] = std::array::from_fn(|_| fs.remove(0));
        let h = VectorSampledFunction::new(vec![
            SampledField::outer(&[f1.clone(), g1.clone()]).unwrap(),
            SampledField::outer(&[f2.clone(), g2.clone()]).unwrap(),
        ])
        .unwrap();
        let k = VectorSampledFunction::new(vec![
            SampledField::outer(&[r1.clone(), u1.clone()]).unwrap(),
            SampledField::outer(&[r2.clone(), u2.clone()]).unwrap(),
        ])
        .unwrap();
        let lhs = star(&h, &k).unwrap();
        let fx = VectorSampledFunction::from_1d(&[f1, f2]).unwrap();
        let rx = VectorSampledFunction::from_1d(&[r1, r2]).unwrap();
        let gy = VectorSampledFunction::from_1d(&[g1, g2]).unwrap();
        let uy = VectorSampledFunction::from_1d(&[u1, u2]).unwrap();
        let rhs = hadamard(&star(&fx, &rx).unwrap(), &star(&gy, &uy).unwrap()).unwrap();
        worst = worst.max(lhs.sub(&rhs).unwrap().max_abs());
    }
    outcome(worst <= 1e-12, format!("100 pairs, max entry gap {worst:.1e}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut ratio = [0.0f64; 2];
    for (slot, m) in [2usize, 3].into_iter().enumerate() {
        for _ in 0..100 {
            let level = rng.gen_range(0..4);
            let f = VectorSampledFunction::from_1d(&(0..m).map(|_| random_step(&mut rng, level)).collect::<Vec<_>>())
                .unwrap();
            let g = VectorSampledFunction::from_1d(&(0..m).map(|_| random_step(&mut rng, level)).collect::<Vec<_>>())
                .unwrap();
            let bound = f.l2_norm() * g.l2_norm();
            if bound > 0.0 {
                ratio[slot] = ratio[slot].max(star(&f, &g).unwrap().norm1() / bound);
            }
        }
    }
    outcome(
        ratio[0] <= 4.0 && ratio[1] <= 9.0,
        format!("max norm1/(‖f‖‖g‖): m=2 {:.3} (bound 4), m=3 {:.3} (bound 9)", ratio[0], ratio[1]),
    )
}

fn choose(n: usize, k: usize) -> usize {
    let fact = |x: usize| (1..=x).product::<usize>();
    fact(n) / (fact(k) * fact(n - k))
}

fn criterion_6() -> Outcome {
    let mut mismatches = 0;
    for d in 1..=4 {
        for m in 1..=3 {
            let f = enumerate_families(d, m).unwrap();
            let md = m.pow(d as u32);
            mismatches += usize::from(f.base.members.len() != md);
            for fam in &f.families {
                mismatches += usize::from(fam.members.len() != choose(d, fam.e) * md);
            }
            mismatches += usize::from(f.total_shapes() != (2 * m).pow(d as u32));
        }
    }
    outcome(mismatches == 0, format!("d ≤ 4, m ≤ 3: {mismatches} mismatches"))
}

const CATALOG: [&str; 8] = [
    r"\Phi^1_k(x,y)=(\phi_1(x-k_1)\phi_1(y-k_2),\phi_2(x-k_1)\phi_2(y-k_2))^T",
    r"\Phi^2_k(x,y)=(\phi_1(x-k_1)\phi_2(y-k_2),\phi_2(x-k_1)\phi_1(y-k_2))^T",
    r"\Psi^1_{j,k}(x,y)=(\phi_1(2^jx-k_1)\psi_1(2^jy-k_2),\phi_2(2^jx-k_1)\psi_2(2^jy-k_2))^T",
    r"\Psi^2_{j,k}(x,y)=(\phi_1(2^jx-k_1)\psi_2(2^jy-k_2),\phi_2(2^jx-k_1)\psi_1(2^jy-k_2))^T",
    r"\Psi^3_{j,k}(x,y)=(\psi_1(2^jx-k_1)\phi_1(2^jy-k_2),\psi_2(2^jx-k_1)\phi_2(2^jy-k_2))^T",
    r"\Psi^4_{j,k}(x,y)=(\psi_1(2^jx-k_1)\phi_2(2^jy-k_2),\psi_2(2^jx-k_1)\phi_1(2^jy-k_2))^T",
    r"\Psi^5_{j,k}(x,y)=(\psi_1(2^{j}x-k_1)\psi_1(2^{j}y-k_2),\psi_2(2^{j}x-k_1)\psi_2(2^{j}y-k_2))^T",
    r"\Psi^6_{j,k}(x,y)=(\psi_1(2^{j}x-k_1)\psi_2(2^{j}y-k_2),\psi_2(2^{j}x-k_1)\psi_1(2^{j}y-k_2))^T",
];

fn strip(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace() && *c != '{' && *c != '}').collect()
}

fn criterion_7() -> Outcome {
    let mut mismatches = 0;
    for d in 1..=3 {
        for m in 1..=3 {
            let b = build_basis_nd(&haar_filter(), d, m).unwrap();
            for e in 0..=d {
                mismatches += usize::from(b.family_count(e) != choose(d, e) * m.pow(d as u32 - 1));
            }
        }
    }
    let cat = planar_catalog(&build_basis_nd(&haar_filter(), 2, 2).unwrap()).unwrap();
    let scaling = cat.iter().filter(|f| f.is_scaling()).count();
    let formulas = cat.iter().zip(CATALOG).filter(|(f, s)| strip(&f.formula()) == strip(s)).count();
    outcome(
        mismatches == 0 && cat.len() == 8 && scaling == 2 && formulas == 8,
        format!(
            "count mismatches {mismatches}; catalog {scaling} scaling + {} wavelet; formulas matching {formulas}/8",
            cat.len() - scaling
        ),
    )
}

fn criterion_8() -> Outcome {
    let base = build_basis_nd(&haar_filter(), 2, 2).unwrap();
    let atoms = base.atoms(3, 2);
    let (diag, off) = nd_gram_deviation(&base, &atoms, 8).unwrap();
    let mut worst = diag.max(off);
    // dense quadrature on a spread of pairs as an independent check
    let mut dense_gap: f64 = 0.0;
    for a in atoms.iter().step_by(41) {
        for b in atoms.iter().step_by(67) {
            let s = star(&sample_vector_atom_nd(a, &base, 8).unwrap(), &sample_vector_atom_nd(b, &base, 8).unwrap())
                .unwrap();
            let target = if a == b {
                vecwave::star_product::MatrixM::identity(2)
            } else {
                vecwave::star_product::MatrixM::zeros(2)
            };
            dense_gap = dense_gap.max(s.sub(&target).unwrap().norm1());
        }
    }
    worst = worst.max(dense_gap);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut random_worst: f64 = 0.0;
    for _ in 0..5 {
        let p = random_partition(2, 2, &mut rng).unwrap();
        let b = BasisND::with_partition(base.multiwavelet().clone(), p).unwrap();
        let (d, o) = nd_gram_deviation(&b, &b.atoms(3, 2), 8).unwrap();
        random_worst = random_worst.max(d.max(o));
    }
    outcome(
        worst <= 1e-10 && random_worst <= 1e-10,
        format!(
            "{} atoms, cyclic {worst:.1e} (dense spot check {dense_gap:.1e}), 5 random partitions {random_worst:.1e}",
            atoms.len()
        ),
    )
}

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

struct PrStats {
    worst_rt: f64,
    worst_energy: f64,
    bitwise: bool,
}

fn pr_sweep() -> PrStats {
    let mut stats = PrStats { worst_rt: 0.0, worst_energy: 0.0, bitwise: true };
    for name in ["haar", "db2", "db3", "db4"] {
        let f = filter_by_name(name).unwrap();
        for m in 1..=3 {
            for (d, n) in [(1, 256), (2, 64)] {
                let basis = build_basis_nd(&f, d, m).unwrap();
                let s = random_signal(d, m, n, (m * 10 + d) as u64);
                let levels = max_levels(n, m).unwrap();
                let dec = analyze_vector(&s, &basis, levels).unwrap();
                let back = synthesize_vector(&dec).unwrap();
                stats.worst_rt = stats.worst_rt.max(back.relative_error(&s).unwrap());
                stats.worst_energy = stats.worst_energy.max((dec.energy() - s.energy()).abs() / s.energy());
                if m == 1 {
                    stats.bitwise &= matches_scalar(&dec, &s, &f, levels);
                }
            }
        }
    }
    stats
}

fn matches_scalar(
    dec: &vecwave::vtransform::VectorDecomposition,
    s: &VectorSignal,
    f: &ScalarFilter,
    levels: u32,
) -> bool {
    let x = &s.channels()[0];
    if s.d() == 1 {
        let p = dwt_channel(&x.iter().copied().collect::<Vec<_>>(), f, levels).unwrap();
        let same =
            |a: &ArrayD<f64>, b: &[f64]| a.iter().zip(b).all(|(u, v)| u.to_bits() == v.to_bits()) && a.len() == b.len();
        same(dec.band(0, 0), &p.approx) && (0..levels as usize).all(|t| same(dec.band(0, t + 1), &p.details[t]))
    } else {
        let p = dwt2(&x.clone().into_dimensionality::<Ix2>().unwrap(), f, levels).unwrap();
        let same = |a: &ArrayD<f64>, b: &ndarray::Array2<f64>| {
            a.shape() == b.shape() && a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits())
        };
        same(dec.band(0, 0), &p.approx)
            && (0..levels as usize).all(|t| (0..3).all(|o| same(dec.band(0, 1 + 3 * t + o), &p.details[t][o])))
    }
}

fn criterion_9(stats: &PrStats) -> Outcome {
    outcome(
        stats.worst_rt <= 1e-10 && stats.bitwise,
        format!(
            "max relative round-trip error {:.1e}; m=1 bitwise equal to scalar DWT: {}",
            stats.worst_rt, stats.bitwise
        ),
    )
}

fn criterion_10(stats: &PrStats) -> Outcome {
    outcome(stats.worst_energy <= 1e-10, format!("max relative energy gap {:.1e}", stats.worst_energy))
}

fn criterion_11() -> Outcome {
    let mut worst_db: f64 = 0.0;
    let mut haar_max: f64 = 0.0;
    for m in 1..=3 {
        for d in 1..=2 {
            haar_max = haar_max.max(max_wavelet_moment(&build_basis_nd(&haar_filter(), d, m).unwrap(), 3, 12).unwrap());
            for n in 2..=10 {
                let b = build_basis_nd(&daubechies_filter(n).unwrap(), d, m).unwrap();
                worst_db = worst_db.max(max_wavelet_moment(&b, 3, 12).unwrap());
            }
        }
    }
    outcome(
        worst_db <= 1e-6 && haar_max == 0.0,
        format!("DB2..DB10 max |moment| {worst_db:.1e} at J=12; Haar p=0 max {haar_max:e}"),
    )
}

fn run_cli(args: &[&str], dir: &Path) -> (i32, Vec<u8>) {
    let out = Command::new(env!("CARGO_BIN_EXE_vecwave"))
        .args(args)
        .current_dir(dir)
        .env_remove("VECWAVE_J")
        .output()
        .expect("run vecwave");
    (out.status.code().unwrap_or(-1), out.stdout)
}

fn criterion_12() -> Outcome {
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let dir = tempfile::tempdir().unwrap();
    let manifest = golden.join("haar_d2_m2.manifest");
    let manifest = manifest.to_str().unwrap();
    let mut runs = Vec::new();
    for i in 0..2 {
        let report = format!("report{i}.csv");
        let phi = format!("phi{i}.svg");
        let psi5 = format!("psi5_{i}.svg");
        let c1 = run_cli(&["verify", "--manifest", manifest, "--j", "8", "--report", &report], dir.path()).0;
        let c2 = run_cli(&["plot", "--filter", "haar", "--atom", "phi", "--j", "4", "-o", &phi], dir.path()).0;
        let c3 = run_cli(&["plot", "--manifest", manifest, "--family", "Psi5", "--j", "4", "-o", &psi5], dir.path()).0;
        let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap_or_default();
        runs.push(((c1, c2, c3), read(&report), read(&phi), read(&psi5)));
    }
    let read_golden = |p: &str| std::fs::read(golden.join(p)).unwrap();
    let identical = runs[0] == runs[1];
    let exit_ok = runs[0].0 == (0, 0, 0);
    let golden_ok = runs[0].1 == read_golden("verify_haar_d2_m2_j8.csv")
        && runs[0].2 == read_golden("plot_haar_phi_j4.svg")
        && runs[0].3 == read_golden("plot_haar_psi5_j4.svg");
    outcome(
        identical && exit_ok && golden_ok,
        format!("two runs identical: {identical}; exit codes zero: {exit_ok}; equal to golden files: {golden_ok}"),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, run: &dyn Fn() -> Outcome| {
        let t = Instant::now();
        let o = run();
        let secs = t.elapsed().as_secs_f64();
        println!("criterion {n:>2} {name:<34} {} ({secs:.1}s) {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failures += 1;
        }
    };
    report(1, "filter axioms", &criterion_1);
    report(2, "1D star-orthonormality", &criterion_2);
    report(3, "refinement equation", &criterion_3);
    report(4, "Hadamard identity", &criterion_4);
    report(5, "star-product norm bound", &criterion_5);
    report(6, "separable family counts", &criterion_6);
    report(7, "vector family counts and catalog", &criterion_7);
    report(8, "2D star-orthonormality", &criterion_8);
    let stats = pr_sweep();
    report(9, "perfect reconstruction", &|| criterion_9(&stats));
    report(10, "energy conservation", &|| criterion_10(&stats));
    report(11, "vanishing moments", &criterion_11);
    report(12, "CLI determinism", &criterion_12);
    if failures > 0 {
        println!("{failures} of 12 criteria failed");
        std::process::exit(1);
    }
    println!("all 12 criteria passed");
}
