//! Command-line front end: `check`, `spectral`, `deform`, `conserved`, `centroaffine`.
//!
//! Exit codes: 0 when every gated residual is within tolerance, 1 on a residual
//! failure, 2 on an input error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::Vector4;

use crate::centroaffine::{adapted_conserved_check, decompose, gauss_curvature, CentroAffineImmersion, IMMERSION_KEYS};
use crate::connection::{curvature, envelope_checks};
use crate::conserved::{build_from_potential, conservation_residual_canonical, theorem1_residuals};
use crate::deform::{affine_chart, deform_surface, write_affine_chart, write_surface};
use crate::error::{Error, Result};
use crate::fields::io::{parse_assignments, Assignments};
use crate::fields::Grid;
use crate::wilczynski::{
    build_connection, compatibility_residual, lie_quadric_metric, moebius_flat_residuals, spectral_connection,
    split_lie_quadric, CmfSign, Route, SpectralFamily, WilczynskiData, COEFFICIENT_KEYS,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "mobius-flat", version, about = "Checks and deforms Möbius-flat surfaces in RP^3")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// Pass threshold for the gated residuals (defaults depend on the command).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Sample the inputs and differentiate with a stencil of this order instead of exactly.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(2..=4))]
    order: Option<u8>,
    /// Directory for surface and chart files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Sign convention of the gamma a_x term in the first Möbius-flat equation.
    #[arg(long, global = true, value_enum, default_value_t = SignArg::Intro)]
    sign: SignArg,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compatibility, Lie-quadric envelope and Möbius-flat residuals.
    Check { input: PathBuf },
    /// Curvature of the spectral family for each t, by both constructions.
    Spectral {
        input: PathBuf,
        #[arg(long = "t", value_delimiter = ',', allow_hyphen_values = true, required = true)]
        t: Vec<f64>,
    },
    /// Integrates the deformed frame system and reads the coefficients back.
    Deform {
        input: PathBuf,
        #[arg(long = "t", allow_hyphen_values = true)]
        t: f64,
    },
    /// Flat-metric equations for alpha and conservation of the quadratic quantity it builds.
    Conserved { input: PathBuf },
    /// Centro-affine metric, curvature and Chebyshev form of an immersion r1, r2, r3.
    Centroaffine { input: PathBuf },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SignArg {
    Intro,
    Derived,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Kv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Check,
    Spectral,
    Deform,
    Conserved,
    Centroaffine,
}

/// Validated run settings.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub input: PathBuf,
    pub command: CommandKind,
    pub t_list: Vec<f64>,
    pub tol: f64,
    pub out_dir: Option<PathBuf>,
    pub stencil: Option<usize>,
    pub sign: CmfSign,
    pub format: Format,
}

impl RunConfig {
    fn from_args(args: Args) -> Result<Self> {
        let (command, input, t_list) = match args.command {
            Command::Check { input } => (CommandKind::Check, input, vec![]),
            Command::Spectral { input, t } => (CommandKind::Spectral, input, t),
            Command::Deform { input, t } => (CommandKind::Deform, input, vec![t]),
            Command::Conserved { input } => (CommandKind::Conserved, input, vec![]),
            Command::Centroaffine { input } => (CommandKind::Centroaffine, input, vec![]),
        };
        if matches!(command, CommandKind::Spectral | CommandKind::Deform) && t_list.is_empty() {
            return Err(Error::Invalid("--t needs at least one value".into()));
        }
        if t_list.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("--t values must be finite".into()));
        }
        let tol = args.tol.unwrap_or(match command {
            CommandKind::Deform | CommandKind::Centroaffine => 1e-6,
            _ => 1e-8,
        });
        if !(tol > 0.0) {
            return Err(Error::Invalid("--tol must be positive".into()));
        }
        Ok(Self {
            input,
            command,
            t_list,
            tol,
            out_dir: args.out,
            stencil: args.order.map(usize::from),
            sign: match args.sign {
                SignArg::Intro => CmfSign::Intro,
                SignArg::Derived => CmfSign::Derived,
            },
            format: args.format,
        })
    }
}

/// One report line; `pass` is `None` for informational values.
#[derive(Clone, Debug)]
struct Line {
    key: String,
    label: String,
    value: String,
    pass: Option<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct Report {
    lines: Vec<Line>,
}

impl Report {
    fn gate(&mut self, key: &str, label: &str, value: f64, tol: f64) {
        self.lines.push(Line { key: key.into(), label: label.into(), value: fmt_num(value), pass: Some(value <= tol) });
    }

    fn info(&mut self, key: &str, label: &str, value: impl Into<String>) {
        self.lines.push(Line { key: key.into(), label: label.into(), value: value.into(), pass: None });
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass != Some(false))
    }

    pub fn render(&self, format: Format) -> String {
        let mut s = String::new();
        for l in &self.lines {
            match format {
                Format::Kv => writeln!(s, "{} = {}", l.key, l.value),
                Format::Text => {
                    let mark = match l.pass {
                        Some(true) => "  ok",
                        Some(false) => "  FAIL",
                        None => "",
                    };
                    writeln!(s, "{:<34} {}{mark}", l.label, l.value)
                }
            }
            .expect("string write");
        }
        if format == Format::Text {
            s.push_str(if self.passed() { "result: pass\n" } else { "result: FAIL\n" });
        }
        s
    }
}

fn fmt_num(v: f64) -> String {
    format!("{v:.6e}")
}

/// Output of one invocation.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn input_error_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::MissingKey(_)
        | Error::InvalidGrid(_)
        | Error::GridTooSmall(_)
        | Error::GridMismatch
        | Error::NonFinite { .. }
        | Error::Invalid(_)
        | Error::Io(_) => EXIT_INPUT,
        _ => EXIT_FAIL,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
            let text = e.render().to_string();
            return if code == EXIT_PASS {
                Outcome { code, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, stdout: String::new(), stderr: text }
            };
        }
    };
    let result = RunConfig::from_args(args).and_then(|cfg| execute(&cfg).map(|r| (r, cfg.format)));
    match result {
        Ok((report, format)) => Outcome {
            code: if report.passed() { EXIT_PASS } else { EXIT_FAIL },
            stdout: report.render(format),
            stderr: String::new(),
        },
        Err(e) => Outcome { code: input_error_code(&e), stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Report> {
    let text = fs::read_to_string(&cfg.input)?;
    match cfg.command {
        CommandKind::Centroaffine => {
            let a = parse_assignments(&text, &IMMERSION_KEYS)?;
            cmd_centroaffine(cfg, &load_immersion(&a, cfg.stencil)?)
        }
        kind => {
            let a = parse_assignments(&text, &COEFFICIENT_KEYS)?;
            let w = load_data(&a, cfg.stencil)?;
            match kind {
                CommandKind::Check => cmd_check(cfg, &w),
                CommandKind::Spectral => cmd_spectral(cfg, &w),
                CommandKind::Deform => cmd_deform(cfg, &w),
                _ => cmd_conserved(cfg, &w),
            }
        }
    }
}

fn load_data(a: &Assignments, stencil: Option<usize>) -> Result<WilczynskiData> {
    let w = WilczynskiData::from_assignments(a, Grid::default_unit())?;
    let Some(p) = stencil else { return Ok(w) };
    let s = |f: &crate::fields::ScalarField| f.to_sampled(p);
    let opt = |f: &Option<crate::fields::ScalarField>| f.as_ref().map(s).transpose();
    Ok(WilczynskiData {
        beta: s(&w.beta)?,
        gamma: s(&w.gamma)?,
        v: s(&w.v)?,
        w: s(&w.w)?,
        a: opt(&w.a)?,
        b: opt(&w.b)?,
        alpha: opt(&w.alpha)?,
    })
}

fn load_immersion(a: &Assignments, stencil: Option<usize>) -> Result<CentroAffineImmersion> {
    let imm = CentroAffineImmersion::from_assignments(a, Grid::default_unit())?;
    match stencil {
        None => Ok(imm),
        Some(p) => Ok(CentroAffineImmersion::new(imm.r.to_sampled(p)?)),
    }
}

pub fn cmd_check(cfg: &RunConfig, w: &WilczynskiData) -> Result<Report> {
    let tol = cfg.tol;
    let mut r = Report::default();
    r.gate("compatibility", "compatibility (Gauss-Codazzi)", compatibility_residual(w), tol);
    let (_, n) = split_lie_quadric(w);
    let env = envelope_checks(&build_connection(w), &n, &lie_quadric_metric(w), tol)?;
    r.gate("envelope.null", "quadric null on the surface", env.null_residual, tol);
    r.gate("envelope.filtration", "contact filtration", env.filtration_residual, tol);
    r.gate("envelope.trace", "unimodular trace", env.trace_residual, tol);
    r.info("envelope.kernel_rank_max", "kernel rank of N (max)", env.max_kernel_rank().to_string());
    r.info("envelope.d_curvature", "curvature of D", fmt_num(env.dg_curvature));
    match moebius_flat_residuals(w, cfg.sign) {
        Ok(m) => {
            r.gate("moebius_a", "moebius flat (a)", m.r_a, tol);
            r.gate("moebius_b", "moebius flat (b)", m.r_b, tol);
            r.gate("moebius_c", "moebius flat (c)", m.r_c, tol);
            r.gate("classical", "classical condition", m.r_classical, tol);
        }
        Err(Error::MissingKey(_)) => r.info("moebius", "moebius flat", "skipped (no a, b)"),
        Err(e) => return Err(e),
    }
    Ok(r)
}

pub fn cmd_spectral(cfg: &RunConfig, w: &WilczynskiData) -> Result<Report> {
    let mut r = Report::default();
    let family = SpectralFamily::new(w);
    for &t in &cfg.t_list {
        let ins = spectral_connection(w, t, Route::Insertion);
        let asm = family.at(t);
        r.gate(&format!("curvature[t={t}]"), &format!("curvature at t = {t}"), curvature(&ins)?.residual_norm(), cfg.tol);
        r.gate(
            &format!("assembled_curvature[t={t}]"),
            &format!("assembled curvature at t = {t}"),
            curvature(&asm)?.residual_norm(),
            cfg.tol,
        );
        r.gate(&format!("route_gap[t={t}]"), &format!("route agreement at t = {t}"), (&ins - &asm).residual_norm(), cfg.tol);
    }
    Ok(r)
}

pub fn cmd_deform(cfg: &RunConfig, w: &WilczynskiData) -> Result<Report> {
    let t = cfg.t_list[0];
    let res = deform_surface(w, t)?;
    let mut r = Report::default();
    r.info("t", "t", t.to_string());
    r.gate("path_residual", "path independence", res.path_residual, cfg.tol);
    let e = &res.extracted;
    for (key, f) in [("beta", &e.beta), ("gamma", &e.gamma), ("V", &e.v), ("W", &e.w)] {
        r.info(&format!("extracted.{key}"), &format!("extracted {key} (mean)"), fmt_num(f.mean()));
    }
    r.gate("coefficient_error", "extracted vs deformed coefficients", res.coefficient_error, cfg.tol);
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    let surface = dir.join("surface.txt");
    write_surface(fs::File::create(&surface)?, &res.surface_lift)?;
    r.info("surface_file", "surface file", display(&surface));
    match affine_chart(&res.surface_lift, &Vector4::new(1.0, 0.0, 0.0, 0.0)) {
        Ok(chart) => {
            let path = dir.join("chart.txt");
            write_affine_chart(fs::File::create(&path)?, res.surface_lift.grid(), &chart)?;
            r.info("chart_file", "affine chart file", display(&path));
        }
        Err(_) => r.info("chart_file", "affine chart file", "skipped (surface meets sigma_1 = 0)"),
    }
    Ok(r)
}

fn display(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

pub fn cmd_conserved(cfg: &RunConfig, w: &WilczynskiData) -> Result<Report> {
    let alpha = w.alpha.as_ref().ok_or_else(|| Error::MissingKey("alpha".into()))?;
    let mut r = Report::default();
    let t1 = theorem1_residuals(alpha, w)?;
    let names = [
        ("flat_metric.beta_y", "beta_y = 2 alpha_xx"),
        ("flat_metric.gamma_x", "gamma_x = 2 alpha_yy"),
        ("flat_metric.V", "V = 2(beta alpha_y + alpha_x^2)"),
        ("flat_metric.W", "W = 2(gamma alpha_x + alpha_y^2)"),
        ("flat_metric.unit", "beta gamma - 4 alpha_x alpha_y = 1"),
    ];
    for ((key, label), v) in names.iter().zip(t1.as_array()) {
        r.gate(key, label, v, cfg.tol);
    }
    let q = build_from_potential(alpha, w)?;
    let c = conservation_residual_canonical(&q, w)?;
    r.gate("conservation", "conservation (all powers of t)", c.max(), cfg.tol);
    r.info("conservation.reduced", "conservation (reduced system)", fmt_num(c.reduced_max()));
    Ok(r)
}

pub fn cmd_centroaffine(cfg: &RunConfig, imm: &CentroAffineImmersion) -> Result<Report> {
    let data = decompose(imm)?;
    let mut r = Report::default();
    for (key, (i, j)) in [("g11", (0, 0)), ("g12", (0, 1)), ("g22", (1, 1))] {
        let e = data.g.entry(i, j);
        let mean = e.mean();
        let spread = e.values().iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
        r.info(&format!("metric.{key}"), &format!("metric {key} (mean)"), fmt_num(mean));
        r.info(&format!("metric.{key}.spread"), &format!("metric {key} (spread)"), fmt_num(spread));
    }
    let k = gauss_curvature(&data.g)?.residual_norm();
    let cheb = data.chebyshev[0].residual_norm().max(data.chebyshev[1].residual_norm());
    r.info("curvature", "Gaussian curvature (max)", fmt_num(k));
    r.info("flat", "flat metric", (k <= cfg.tol).to_string());
    r.info("chebyshev", "Chebyshev form (max)", fmt_num(cheb));
    r.info("affine_sphere", "proper affine sphere", (cheb <= cfg.tol).to_string());
    r.gate("cubic_symmetry", "cubic form symmetry", data.symmetry_residual(), cfg.tol);
    match adapted_conserved_check(imm) {
        Ok(v) => r.gate("adapted_conservation", "adapted conserved quantity", v, cfg.tol),
        Err(Error::EllipticMetric) => r.info("adapted_conservation", "adapted conserved quantity", "skipped (elliptic metric)"),
        Err(e) => return Err(e),
    }
    Ok(r)
}
