use clap::{Args, Parser, Subcommand, ValueEnum};
use johnkit::curve::{carrot_concat, carrot_reroute, cigar_from_two_carrots, Polyline};
use johnkit::decomposition::{decompose, SceneConfig};
use johnkit::io::{curve_from_json, load_domain, write_mask};
use johnkit::john::{john_point, optimal_john, JohnGraph};
use johnkit::limits::{lsc_experiment, parse_neighborhood, SequenceScenario};
use johnkit::report::{canonical_json, Envelope, VERSION};
use johnkit::{ConvexGauge, Error, GridSpec, P2};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INVALID: u8 = 2;
const EXIT_DISCONNECTED: u8 = 3;
const EXIT_FAILED: u8 = 4;
const EXIT_R_MAX: u8 = 5;

#[derive(Parser)]
#[command(name = "johnkit", version, about = "John constants, Hausdorff limits and cover decompositions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize, Clone)]
struct Global {
    /// Gauge preset (euclidean:<k>, linf, l1) or a JSON file with "vertices".
    #[arg(long, global = true, default_value = "euclidean:64")]
    gauge: String,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Seed for sampled verifications; scene files may set their own.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "JOHNKIT_THREADS")]
    #[serde(skip)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// John(Ω) of a domain, with its center and witness.
    John(JohnArgs),
    /// J(x, Ω; x0) between two points.
    JohnPoint(JohnPointArgs),
    /// Lower-semicontinuity experiment from a scenario file.
    Lsc(FileArgs),
    /// Cover decomposition of a scene file.
    Decompose(FileArgs),
    /// Carrot surgery certificate on curve files.
    Verify(VerifyArgs),
    /// Constants of the gauge.
    GaugeInfo,
}

#[derive(Args, Serialize)]
struct DomainArgs {
    /// `.pgm` mask with a `.json` sidecar, or a polygon `.json`.
    #[arg(long)]
    domain: PathBuf,
    /// Spacing used to sample a polygon.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long, default_value_t = 8)]
    neighborhood: u8,
    /// Absolute tolerance of the J binary search.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Serialize)]
struct JohnArgs {
    #[command(flatten)]
    #[serde(flatten)]
    domain: DomainArgs,
}

#[derive(Args, Serialize)]
struct JohnPointArgs {
    #[command(flatten)]
    #[serde(flatten)]
    domain: DomainArgs,
    /// Start point `x,y`.
    #[arg(long, value_parser = parse_point)]
    x: [f64; 2],
    /// Center point `x,y`.
    #[arg(long, value_parser = parse_point)]
    x0: [f64; 2],
}

#[derive(Args, Serialize)]
struct FileArgs {
    /// Scenario or scene TOML.
    path: PathBuf,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Surgery {
    Reroute,
    Concat,
    Cigar,
}

#[derive(Args, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum)]
    kind: Surgery,
    /// First curve JSON.
    #[arg(long)]
    curve: PathBuf,
    /// Second curve JSON (concat, cigar).
    #[arg(long)]
    curve2: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    /// Second constant (concat).
    #[arg(long)]
    j2: Option<f64>,
    /// Point `x,y` (reroute: z, concat: w).
    #[arg(long, value_parser = parse_point)]
    point: Option<[f64; 2]>,
    /// Cells per side of the raster.
    #[arg(long, default_value_t = 128)]
    cells: usize,
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let (a, b) = s.split_once(',').ok_or("expected x,y")?;
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| e.to_string());
    Ok([p(a)?, p(b)?])
}

enum Failure {
    Lib(Error),
    Io(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Run = std::result::Result<(), Failure>;

fn load_gauge(spec: &str) -> johnkit::Result<ConvexGauge> {
    if spec.ends_with(".json") {
        let text = std::fs::read_to_string(spec).map_err(|e| Error::Invalid(format!("{spec}: {e}")))?;
        ConvexGauge::from_json(&text)
    } else {
        ConvexGauge::parse(spec)
    }
}

fn write_report<C: Serialize, R: Serialize>(g: &Global, name: &str, command: &str, config: &C, result: &R) -> Run {
    std::fs::create_dir_all(&g.out)?;
    let env = Envelope {
        command,
        config,
        seed: g.seed.unwrap_or(0),
        version: VERSION,
        result,
    };
    std::fs::write(g.out.join(name), canonical_json(&env))?;
    Ok(())
}

#[derive(Serialize)]
struct Resolved<'a, A: Serialize> {
    #[serde(flatten)]
    global: &'a Global,
    #[serde(flatten)]
    args: &'a A,
}

fn graph(d: &DomainArgs, g: &ConvexGauge) -> johnkit::Result<JohnGraph> {
    let dom = load_domain(&d.domain, d.h)?;
    JohnGraph::new(&dom, g, parse_neighborhood(d.neighborhood)?)
}

#[derive(Serialize)]
struct JohnParams {
    #[serde(rename = "tol_J")]
    tol_j: f64,
    neighborhood: u8,
    h: f64,
}

#[derive(Serialize)]
struct JohnReport {
    value: f64,
    clamped: f64,
    center: [usize; 2],
    center_point: [f64; 2],
    worst: [usize; 2],
    witness: Vec<[usize; 2]>,
    profile: Vec<johnkit::john::VertexRatio>,
    r_omega: f64,
    exhaustive: bool,
    params: JohnParams,
}

fn cmd_john(gl: &Global, a: &JohnArgs) -> Run {
    let g = load_gauge(&gl.gauge)?;
    let gr = graph(&a.domain, &g)?;
    let opt = optimal_john(&gr)?;
    let cert = john_point(&gr, opt.worst_x, opt.center, a.domain.tol)?;
    let grid = gr.dom.grid;
    let c = grid.center_of(opt.center);
    let report = JohnReport {
        value: opt.value,
        clamped: opt.value.max(1.0),
        center: grid.coords(opt.center).into(),
        center_point: [c.x, c.y],
        worst: grid.coords(opt.worst_x).into(),
        witness: cert.witness.clone(),
        profile: cert.per_vertex.clone(),
        r_omega: opt.r_omega,
        exhaustive: opt.exhaustive,
        params: JohnParams {
            tol_j: cert.tol_j,
            neighborhood: a.domain.neighborhood,
            h: grid.h,
        },
    };
    write_report(gl, "john.json", "john", &Resolved { global: gl, args: a }, &report)?;
    println!("John = {} at ({}, {})", opt.value, c.x, c.y);
    Ok(())
}

fn cmd_john_point(gl: &Global, a: &JohnPointArgs) -> Run {
    let g = load_gauge(&gl.gauge)?;
    let gr = graph(&a.domain, &g)?;
    let grid = gr.dom.grid;
    let cell = |p: [f64; 2]| {
        grid.cell_of(p.into())
            .ok_or_else(|| Error::Invalid(format!("({}, {}) is off the grid", p[0], p[1])))
    };
    let cert = john_point(&gr, cell(a.x)?, cell(a.x0)?, a.domain.tol)?;
    write_report(gl, "john_point.json", "john-point", &Resolved { global: gl, args: a }, &cert)?;
    println!("J = {}", cert.value);
    Ok(())
}

fn read_text(p: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(p).map_err(|e| Failure::Lib(Error::Invalid(format!("{}: {e}", p.display()))))
}

fn cmd_lsc(gl: &Global, a: &FileArgs) -> Run {
    let s = SequenceScenario::from_toml(&read_text(&a.path)?)?;
    let report = lsc_experiment(&s)?;
    std::fs::create_dir_all(&gl.out)?;
    std::fs::write(gl.out.join(format!("{}.csv", s.name)), report.csv())?;
    write_report(gl, &format!("{}.json", s.name), "lsc", &s, &report)?;
    println!("{}: min John {} limit {:?} status {}", s.name, report.min_john, report.limit_john, report.status);
    if report.status != "ok" {
        return Err(Failure::Check(format!("lsc: {}", report.status)));
    }
    Ok(())
}

fn cmd_decompose(gl: &Global, a: &FileArgs) -> Run {
    let g = load_gauge(&gl.gauge)?;
    let cfg = SceneConfig::from_toml(&read_text(&a.path)?)?;
    let seed = gl.seed.or(cfg.seed).unwrap_or(0);
    let (dec, report) = decompose(&cfg, &g, seed)?;
    let dir = gl.out.join(&cfg.name);
    std::fs::create_dir_all(&dir)?;
    for f in &dec.families {
        for (p, &li) in f.pieces.iter().zip(&f.level_indices) {
            let grid = dec.scene.levels[li].grid;
            write_mask(&dir.join(format!("w_{}_r{}.pgm", f.index, p.r)), &grid, &p.mask)?;
        }
    }
    std::fs::write(dir.join("volumes.csv"), report.volume_csv())?;
    let gl = Global {
        out: dir,
        seed: Some(seed),
        ..gl.clone()
    };
    write_report(&gl, "report.json", "decompose", &cfg, &report)?;
    println!("{}: N = {}, {} families, {} failures", cfg.name, report.n, report.families_total, report.failures.len());
    if !report.passed {
        for f in &report.failures {
            eprintln!("  {f}");
        }
        return Err(Failure::Check("verification failed".into()));
    }
    Ok(())
}

fn raster_for(g: &ConvexGauge, curves: &[&Polyline], points: &[P2], j: f64, cells: usize) -> johnkit::Result<GridSpec> {
    let mut lo = P2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = P2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    let mut reach: f64 = 0.0;
    for c in curves {
        for &v in c.vertices() {
            lo = P2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = P2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        reach = reach.max(c.total_length(g) / j * g.outer_radius());
    }
    for &p in points {
        lo = P2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = P2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let side = (hi.x - lo.x).max(hi.y - lo.y) + 2.0 * reach;
    let h = side / (cells.max(2) - 1) as f64;
    let mid = (lo + hi) * 0.5;
    let half = 0.5 * (cells - 1) as f64 * h;
    GridSpec::new(mid - P2::new(half, half), h, cells, cells)
}

#[derive(Serialize)]
struct SurgeryReport<C: Serialize> {
    curve: Polyline,
    certificate: C,
    passed: bool,
}

fn cmd_verify(gl: &Global, a: &VerifyArgs) -> Run {
    let g = load_gauge(&gl.gauge)?;
    let load = |p: &Path| -> Result<Polyline, Failure> { Ok(curve_from_json(&read_text(p)?)?) };
    let c1 = load(&a.curve)?;
    let second = || -> Result<Polyline, Failure> {
        let p = a.curve2.as_ref().ok_or_else(|| Failure::Lib(Error::Invalid("--curve2 is required".into())))?;
        load(p)
    };
    let point = || -> Result<P2, Failure> {
        a.point
            .map(P2::from)
            .ok_or_else(|| Failure::Lib(Error::Invalid("--point is required".into())))
    };
    let cfg = Resolved { global: gl, args: a };
    let passed = match a.kind {
        Surgery::Reroute => {
            let z = point()?;
            let grid = raster_for(&g, &[&c1], &[z], a.j, a.cells)?;
            let (curve, cert) = carrot_reroute(&g, &c1, a.j, z, &grid)?;
            let passed = cert.lengths_ok && cert.inclusion.holds;
            let r = SurgeryReport { curve, certificate: cert, passed };
            write_report(gl, "verify.json", "verify", &cfg, &r)?;
            passed
        }
        Surgery::Concat => {
            let c2 = second()?;
            let w = point()?;
            let j2 = a.j2.unwrap_or(a.j);
            let grid = raster_for(&g, &[&c1, &c2], &[w], a.j, a.cells)?;
            let (curve, cert) = carrot_concat(&g, &c1, &c2, a.j, j2, w, &grid)?;
            let passed = cert.inclusion.holds;
            let r = SurgeryReport { curve, certificate: cert, passed };
            write_report(gl, "verify.json", "verify", &cfg, &r)?;
            passed
        }
        Surgery::Cigar => {
            let c2 = second()?;
            let grid = raster_for(&g, &[&c1, &c2], &[], a.j, a.cells)?;
            let (a_pt, _, cert) = cigar_from_two_carrots(&g, &c1, &c2, a.j, &grid)?;
            let scale = c1.total_length(&g).max(c2.total_length(&g));
            let passed = cert.inclusion.holds && cert.identity_residual <= 1e-6 * scale;
            let r = SurgeryReport {
                curve: Polyline::new(vec![a_pt])?,
                certificate: cert,
                passed,
            };
            write_report(gl, "verify.json", "verify", &cfg, &r)?;
            passed
        }
    };
    println!("certificate {}", if passed { "holds" } else { "fails" });
    if !passed {
        return Err(Failure::Check("certificate fails".into()));
    }
    Ok(())
}

#[derive(Serialize)]
struct GaugeInfo {
    label: String,
    vertices: Vec<[f64; 2]>,
    asymmetry_constant: f64,
    outer_radius: f64,
    inner_radius: f64,
    euclidean: bool,
}

fn cmd_gauge_info(gl: &Global) -> Run {
    let g = load_gauge(&gl.gauge)?;
    let info = GaugeInfo {
        label: g.label(),
        vertices: g.vertices().iter().map(|v| [v.x, v.y]).collect(),
        asymmetry_constant: g.asymmetry_constant(),
        outer_radius: g.outer_radius(),
        inner_radius: g.inner_radius(),
        euclidean: g.is_euclidean(),
    };
    print!("{}", canonical_json(&info));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        // only fails when a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let gl = &cli.global;
    let run = match &cli.command {
        Command::John(a) => cmd_john(gl, a),
        Command::JohnPoint(a) => cmd_john_point(gl, a),
        Command::Lsc(a) => cmd_lsc(gl, a),
        Command::Decompose(a) => cmd_decompose(gl, a),
        Command::Verify(a) => cmd_verify(gl, a),
        Command::GaugeInfo => cmd_gauge_info(gl),
    };
    match run {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Disconnected => EXIT_DISCONNECTED,
                Error::IncreaseRMax(_) => EXIT_R_MAX,
                _ => EXIT_INVALID,
            })
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Check(e)) => {
            eprintln!("{e}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
