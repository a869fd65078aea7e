//! Command line front end: `build`, `verify`, `transform`, `plot`, `sample`.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad input or usage.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar_wavelet::{filter_by_name, AtomKind, AtomSampler, SampledFunction};
use crate::star_product::SampledField;
use crate::tensor_multiwavelet::{binomial, enumerate_families};
use crate::vector_basis_1d::{
    atom_family, build_vector_basis, matrix_refinement_filter, refine_residual, star_gram_deviations, Component,
    VectorBasis1D,
};
use crate::vector_basis_nd::{
    build_basis_nd, max_wavelet_moment, nd_gram_deviation, sample_vector_atom_nd, BasisND, VectorAtomND,
};
use crate::vtransform::{
    analyze_vector, max_levels, synthesize_vector, threshold_matrix, MatrixNorm, VectorDecomposition, VectorSignal,
};

/// Grid level used when neither `--j` nor `VECWAVE_J` is given.
pub const DEFAULT_J: u32 = 10;
pub const ENV_J: &str = "VECWAVE_J";

#[derive(Parser, Debug)]
#[command(name = "vecwave", version, about = "Vector-valued wavelet bases: build, verify, transform, plot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write the family manifest of a basis.
    Build(BuildArgs),
    /// Run the numerical checks on a manifest and write a CSV report.
    Verify(VerifyArgs),
    /// Forward or inverse vector transform of a VWAV1 / VWDEC1 file.
    Transform(TransformArgs),
    /// Render an atom or a sampled function as SVG.
    Plot(PlotArgs),
    /// Write samples of a scalar atom or a d = 1 vector-atom channel as CSV.
    Sample(SampleArgs),
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub filter: String,
    #[arg(long)]
    pub d: usize,
    #[arg(long)]
    pub m: usize,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    /// Tight tolerances for bases with exact quadrature (Haar).
    Exact,
    /// Tolerances matching the sampling error of Daubechies atoms.
    Sampled,
}

/// Tolerances of a verification profile.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub gram: f64,
    pub refinement: f64,
    pub moments: f64,
}

impl Profile {
    pub fn tolerances(self) -> Tolerances {
        match self {
            Profile::Exact => Tolerances { gram: 1e-10, refinement: 1e-12, moments: 1e-12 },
            Profile::Sampled => Tolerances { gram: 1e-3, refinement: 1e-8, moments: 1e-6 },
        }
    }
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Grid level; overrides VECWAVE_J.
    #[arg(long)]
    pub j: Option<u32>,
    #[arg(long, value_enum, default_value_t = Profile::Exact)]
    pub profile: Profile,
    /// Report file; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TransformArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Vector levels; the largest that fits when absent.
    #[arg(long)]
    pub levels: Option<u32>,
    /// Zero detail matrices whose norm is below this value (`inf` allowed).
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value = "frobenius")]
    pub norm: String,
    /// Reconstruct a signal from a decomposition file.
    #[arg(long)]
    pub inverse: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// A sampled-function CSV to plot.
    #[arg(long, conflicts_with_all = ["manifest", "filter"])]
    pub sampled: Option<PathBuf>,
    /// Plot a channel of a vector atom of this manifest.
    #[arg(long, requires = "family")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    /// 1-based channel.
    #[arg(long, default_value_t = 1)]
    pub channel: usize,
    #[arg(long, default_value_t = 0)]
    pub level: u32,
    /// Plot a scalar atom of this filter.
    #[arg(long, conflicts_with = "manifest")]
    pub filter: Option<String>,
    /// `phi`, `psi` or a component such as `psi@2`.
    #[arg(long, default_value = "phi")]
    pub atom: String,
    #[arg(long)]
    pub j: Option<u32>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long, conflicts_with = "manifest")]
    pub filter: Option<String>,
    #[arg(long, default_value = "phi")]
    pub atom: String,
    #[arg(long, default_value_t = 0)]
    pub shift: i64,
    #[arg(long, requires = "family")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub channel: usize,
    #[arg(long, default_value_t = 0)]
    pub level: u32,
    #[arg(long)]
    pub j: Option<u32>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

/// `--j`, then `VECWAVE_J`, then [`DEFAULT_J`].
pub fn resolve_j(flag: Option<u32>) -> Result<u32> {
    if let Some(j) = flag {
        return Ok(j);
    }
    match std::env::var(ENV_J) {
        Ok(v) => v.trim().parse().map_err(|_| Error::Parameter(format!("{ENV_J}={v} is not a grid level"))),
        Err(_) => Ok(DEFAULT_J),
    }
}

/// Parses and runs a command line, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Build(a) => cmd_build(&a).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a).map(|r| if r.passed() { 0 } else { 1 }),
        Command::Transform(a) => cmd_transform(&a).map(|_| 0),
        Command::Plot(a) => cmd_plot(&a).map(|_| 0),
        Command::Sample(a) => cmd_sample(&a).map(|_| 0),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn write_out(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes)?;
        }
    }
    Ok(())
}

fn read_manifest(path: &Path) -> Result<BasisND> {
    let text = fs::read_to_string(path)?;
    BasisND::from_manifest(&text)
}

pub fn cmd_build(a: &BuildArgs) -> Result<()> {
    let filter = filter_by_name(&a.filter)?;
    let basis = build_basis_nd(&filter, a.d, a.m)?;
    write_out(a.out.as_deref(), basis.manifest().as_bytes())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub measured: Option<f64>,
    pub tolerance: f64,
    pub status: Status,
}

/// Outcome of `verify`.
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

/// Float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl VerifyReport {
    fn push(&mut self, name: &str, measured: Option<f64>, tolerance: f64) {
        let status = match measured {
            None => Status::Skip,
            Some(v) if v <= tolerance => Status::Pass,
            Some(_) => Status::Fail,
        };
        self.rows.push(CheckRow { name: name.to_string(), measured, tolerance, status });
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status != Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,measured,tolerance,status\n");
        for r in &self.rows {
            let measured = r.measured.map(format_float).unwrap_or_else(|| "nan".into());
            let status = match r.status {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Skip => "skip",
            };
            let _ = writeln!(out, "{},{measured},{},{status}", r.name, format_float(r.tolerance));
        }
        out
    }

    pub fn summary(&self) -> String {
        let count = |s: Status| self.rows.iter().filter(|r| r.status == s).count();
        let failed: Vec<&str> =
            self.rows.iter().filter(|r| r.status == Status::Fail).map(|r| r.name.as_str()).collect();
        let mut s = format!(
            "{} checks: {} passed, {} failed, {} skipped",
            self.rows.len(),
            count(Status::Pass),
            count(Status::Fail),
            count(Status::Skip)
        );
        if !failed.is_empty() {
            let _ = write!(s, " (failed: {})", failed.join(", "));
        }
        s
    }
}

/// Vector atoms above which the multivariate Gram check is skipped.
const MAX_GRAM_ATOMS: usize = 2000;
const FILTER_SUM_TOL: f64 = 1e-12;
const FILTER_ORTHO_TOL: f64 = 1e-12;
const FILTER_MOMENT_TOL: f64 = 1e-10;
const ROUND_TRIP_TOL: f64 = 1e-10;

fn random_signal(d: usize, m: usize, n: usize) -> Result<VectorSignal> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let len = n.pow(d as u32);
    VectorSignal::new(
        (0..m)
            .map(|_| {
                ndarray::ArrayD::from_shape_vec(
                    ndarray::IxDyn(&vec![n; d]),
                    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect(),
    )
}

/// All checks on one basis at grid level `j`.
pub fn verify_basis(basis: &BasisND, j: u32, profile: Profile) -> Result<VerifyReport> {
    let tol = profile.tolerances();
    let filter = basis.filter();
    let (d, m) = (basis.d(), basis.m());
    let mut report = VerifyReport { rows: Vec::new() };

    let enumeration = enumerate_families(d, m)?;
    let mut shape_gap = enumeration.total_shapes().abs_diff((2 * m).pow(d as u32));
    shape_gap += enumeration.base.members.len().abs_diff(m.pow(d as u32));
    for fam in &enumeration.families {
        shape_gap += fam.members.len().abs_diff(binomial(d, fam.e) * m.pow(d as u32));
    }
    report.push("counts.shapes", Some(shape_gap as f64), 0.0);
    let family_gap: usize = (0..=d).map(|e| basis.family_count(e).abs_diff(basis.expected_family_count(e))).sum();
    report.push("counts.families", Some(family_gap as f64), 0.0);
    report.push("partition", Some(if basis.partition().validate().is_ok() { 0.0 } else { 1.0 }), 0.0);

    let ax = filter.axioms();
    report.push("filter.sum", Some(ax.sum), FILTER_SUM_TOL);
    report.push("filter.orthonormality", Some(ax.orthonormality), FILTER_ORTHO_TOL);
    report.push("filter.wavelet_moments", Some(ax.moments), FILTER_MOMENT_TOL);

    let basis1d: VectorBasis1D = build_vector_basis(filter, m)?;
    let atoms: Vec<_> = atom_family(&basis1d, 1, 2).into_iter().map(|(_, _, a)| a).collect();
    let gram1d = star_gram_deviations(filter, &atoms, j)?.iter().map(|p| p.deviation).fold(0.0, f64::max);
    report.push("gram.1d", Some(gram1d), tol.gram);

    let k_max = if d <= 2 { 1 } else { 0 };
    let nd_atoms = basis.atoms(2, k_max);
    let gram_nd = if nd_atoms.len() <= MAX_GRAM_ATOMS {
        let (diag, off) = nd_gram_deviation(basis, &nd_atoms, j)?;
        Some(diag.max(off))
    } else {
        None
    };
    report.push("gram.nd", gram_nd, tol.gram);

    let mf = matrix_refinement_filter(&basis1d);
    report.push("refinement", Some(refine_residual(&basis1d, &mf, j)?), tol.refinement);
    report.push("moments.sampled", Some(max_wavelet_moment(basis, 2, j)?), tol.moments);

    let (rt, energy) = if d <= 2 {
        let n = if d == 1 { 256 } else { 64 };
        let signal = random_signal(d, m, n)?;
        let dec = analyze_vector(&signal, basis, max_levels(n, m)?)?;
        let back = synthesize_vector(&dec)?;
        let e = signal.energy();
        (Some(back.relative_error(&signal)?), Some((dec.energy() - e).abs() / e))
    } else {
        (None, None)
    };
    report.push("reconstruction", rt, ROUND_TRIP_TOL);
    report.push("energy", energy, ROUND_TRIP_TOL);

    report.rows.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(report)
}

pub fn cmd_verify(a: &VerifyArgs) -> Result<VerifyReport> {
    let basis = read_manifest(&a.manifest)?;
    let j = resolve_j(a.j)?;
    let report = verify_basis(&basis, j, a.profile)?;
    write_out(a.report.as_deref(), report.to_csv().as_bytes())?;
    eprintln!("{}", report.summary());
    Ok(report)
}

pub fn cmd_transform(a: &TransformArgs) -> Result<()> {
    let basis = read_manifest(&a.manifest)?;
    let bytes = fs::read(&a.input)?;
    if a.inverse {
        let dec = VectorDecomposition::from_bytes(&bytes, &basis)?;
        let signal = synthesize_vector(&dec)?;
        return write_out(Some(&a.output), &signal.to_bytes());
    }
    let signal = VectorSignal::from_bytes(&bytes)?;
    if signal.d() != basis.d() || signal.m() != basis.m() {
        return Err(Error::Format(format!(
            "signal header has d={} m={}, manifest has d={} m={}",
            signal.d(),
            signal.m(),
            basis.d(),
            basis.m()
        )));
    }
    let levels = match a.levels {
        Some(l) => l,
        None => max_levels(signal.n(), basis.m())?,
    };
    let mut dec = analyze_vector(&signal, &basis, levels)?;
    if let Some(tau) = a.threshold {
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::Parameter(format!("threshold must be ≥ 0, got {tau}")));
        }
        dec = threshold_matrix(&dec, tau, a.norm.parse::<MatrixNorm>()?);
    }
    write_out(Some(&a.output), &dec.to_bytes())?;
    let mut map = a.output.clone().into_os_string();
    map.push(".map.csv");
    fs::write(PathBuf::from(map), dec.map_csv())?;
    Ok(())
}

fn find_family(basis: &BasisND, name: &str) -> Result<usize> {
    basis
        .families()
        .iter()
        .position(|f| f.name == name)
        .ok_or_else(|| Error::Parameter(format!("no family named `{name}`")))
}

fn scalar_component(atom: &str) -> Result<Component> {
    if atom.contains('@') {
        Component::parse(atom)
    } else {
        Ok(Component::new(AtomKind::from_symbol(atom)?, 0))
    }
}

/// One channel of a vector atom, sampled at level `j`.
fn atom_channel(basis: &BasisND, family: &str, channel: usize, level: u32, j: u32) -> Result<SampledField> {
    if basis.d() > 2 {
        return Err(Error::Feature(format!("plotting and sampling support d ≤ 2, got d = {}", basis.d())));
    }
    let fi = find_family(basis, family)?;
    let level = if basis.families()[fi].is_scaling() { 0 } else { level };
    if channel == 0 || channel > basis.m() {
        return Err(Error::Parameter(format!("channel must be in 1..={}", basis.m())));
    }
    let atom = VectorAtomND { family: fi, level, k: vec![0; basis.d()] };
    Ok(sample_vector_atom_nd(&atom, basis, j)?.channel(channel - 1).clone())
}

fn field_to_1d(f: &SampledField) -> Result<SampledFunction> {
    SampledFunction::new(f.start()[0], f.level(), f.values().to_vec())
}

pub fn cmd_plot(a: &PlotArgs) -> Result<()> {
    let j = resolve_j(a.j)?;
    let svg = if let Some(path) = &a.sampled {
        svg_1d(&SampledFunction::from_csv(&fs::read_to_string(path)?)?, &path.display().to_string())
    } else if let Some(path) = &a.manifest {
        let basis = read_manifest(path)?;
        let family = a.family.as_deref().unwrap_or_default();
        let field = atom_channel(&basis, family, a.channel, a.level, j)?;
        let title = format!("{family} channel {} ({})", a.channel, basis.filter().name());
        if basis.d() == 1 {
            svg_1d(&field_to_1d(&field)?, &title)
        } else {
            svg_2d(&field, &title)?
        }
    } else if let Some(name) = &a.filter {
        let filter = filter_by_name(name)?;
        let c = scalar_component(&a.atom)?;
        let f = c.at(0).sample(&AtomSampler::new(&filter, j), j)?;
        svg_1d(&f, &format!("{} {c}", filter.name()))
    } else {
        return Err(Error::Parameter("plot needs --sampled, --manifest or --filter".into()));
    };
    fs::write(&a.output, svg)?;
    Ok(())
}

pub fn cmd_sample(a: &SampleArgs) -> Result<()> {
    let j = resolve_j(a.j)?;
    let f = if let Some(path) = &a.manifest {
        let basis = read_manifest(path)?;
        if basis.d() != 1 {
            return Err(Error::Feature("sample writes d = 1 channels; use plot for d = 2".into()));
        }
        field_to_1d(&atom_channel(&basis, a.family.as_deref().unwrap_or_default(), a.channel, a.level, j)?)?
    } else if let Some(name) = &a.filter {
        let filter = filter_by_name(name)?;
        let c = scalar_component(&a.atom)?;
        c.at(a.shift).sample(&AtomSampler::new(&filter, j), j)?
    } else {
        return Err(Error::Parameter("sample needs --filter or --manifest".into()));
    };
    write_out(a.output.as_deref(), f.to_csv().as_bytes())
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 320.0;
const MARGIN: f64 = 20.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Step plot: one horizontal segment per sample, joined by vertical risers.
pub fn svg_1d(f: &SampledFunction, title: &str) -> String {
    let (x0, x1) = f.support();
    let (lo, hi) = f.values().iter().fold((0.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let span_y = if hi > lo { hi - lo } else { 1.0 };
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| MARGIN + (x - x0) / span_x * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - lo) / span_y * (HEIGHT - 2.0 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let _ = writeln!(
        out,
        r##"<line x1="{:.3}" y1="{:.3}" x2="{:.3}" y2="{:.3}" stroke="#999" stroke-width="0.5"/>"##,
        MARGIN,
        py(0.0),
        WIDTH - MARGIN,
        py(0.0)
    );
    let mut d = String::new();
    let step = f.step();
    for (i, &v) in f.values().iter().enumerate() {
        let xa = px(x0 + i as f64 * step);
        let xb = px(x0 + (i + 1) as f64 * step);
        if i == 0 {
            let _ = write!(d, "M{xa:.3} {:.3}", py(v));
        } else {
            let _ = write!(d, " V{:.3}", py(v));
        }
        let _ = write!(d, " H{xb:.3}");
    }
    let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="black" stroke-width="1"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{MARGIN}" y="14" font-family="monospace" font-size="11">support [{x0}, {x1}]</text>"#
    );
    out.push_str("</svg>\n");
    out
}

/// Gray raster, one rectangle per run of equal gray in a row; white is the
/// largest value, black the smallest. Axis 0 runs left to right.
pub fn svg_2d(f: &SampledField, title: &str) -> Result<String> {
    if f.dim() != 2 {
        return Err(Error::Feature(format!("raster plots need d = 2, got d = {}", f.dim())));
    }
    let (nx, ny) = (f.shape()[0], f.shape()[1]);
    let (lo, hi) = f.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let gray = |v: f64| if hi > lo { ((v - lo) / (hi - lo) * 255.0).round() as u8 } else { 128 };
    let cell = ((WIDTH - 2.0 * MARGIN) / nx.max(ny) as f64).min(HEIGHT * 2.0);
    let (w, h) = (2.0 * MARGIN + cell * nx as f64, 2.0 * MARGIN + cell * ny as f64);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.3}" height="{h:.3}" viewBox="0 0 {w:.3} {h:.3}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    // rows of the picture are axis 1, drawn top down from its largest index
    for iy in 0..ny {
        let mut ix = 0;
        while ix < nx {
            let g = gray(f.values()[ix * ny + iy]);
            let mut end = ix + 1;
            while end < nx && gray(f.values()[end * ny + iy]) == g {
                end += 1;
            }
            let _ = writeln!(
                out,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="rgb({g},{g},{g})"/>"#,
                MARGIN + cell * ix as f64,
                MARGIN + cell * (ny - 1 - iy) as f64,
                cell * (end - ix) as f64,
                cell
            );
            ix = end;
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}
