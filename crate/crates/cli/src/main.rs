use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bladetrap::bem::SolveOptions;
use bladetrap::geometry::{build_trap, write_soup};
use bladetrap::scenario::{parse_scenario, run, Analysis, BasisCache, RunOptions, Scenario};
use clap::{Args, Parser, Subcommand};

/// Field solves and trap analyses for the four-blade linear trap.
#[derive(Parser)]
#[command(name = "bladetrap", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file for the trap, drive and analysis settings (defaults
    /// otherwise).
    #[arg(short, long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Basis cache directory (default: <output>/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Blade distance override in micrometres.
    #[arg(long)]
    d_um: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Mesh the trap and write the triangle soup.
    BuildMesh {
        #[command(flatten)]
        common: Common,
    },
    /// Solve (or load) the electrode basis into the cache.
    SolveBasis {
        #[command(flatten)]
        common: Common,
    },
    /// Numerical-aperture curves and the critical distance.
    Na {
        #[command(flatten)]
        common: Common,
    },
    /// Minimum, frequencies, depths and principal axes at the operating point.
    Analyze {
        #[command(flatten)]
        common: Common,
    },
    /// rf-only frequencies and depths against the blade distance.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Blade distances in micrometres, comma separated.
        #[arg(long, value_delimiter = ',')]
        values_um: Vec<f64>,
    },
    /// Rod and dc-offset response matrix and the y-only voltage ratio.
    Compensate {
        #[command(flatten)]
        common: Common,
    },
    /// Tilt or radial translation of one blade.
    Misalign {
        #[command(flatten)]
        common: Common,
        /// Tilt angle in degrees.
        #[arg(long, conflicts_with = "shift_um")]
        tilt_deg: Option<f64>,
        /// Radial shifts r - d/2 in micrometres, comma separated.
        #[arg(long, value_delimiter = ',')]
        shift_um: Vec<f64>,
    },
    /// Boundary-element against finite-difference check on a simplified trap.
    Xcheck {
        #[command(flatten)]
        common: Common,
    },
    /// Run every analysis of a scenario file.
    Run {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = match &common.scenario {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_scenario(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => Scenario::default(),
    };
    if let Some(d) = common.d_um {
        s.trap.blade_distance = d * 1e-6;
    }
    s.validate()?;
    Ok(s)
}

/// Runs one analysis and prints its summary, if it has one.
fn single(common: &Common, mut s: Scenario, a: Analysis) -> Result<i32> {
    s.analyses = vec![a];
    let output = common
        .output
        .clone()
        .or_else(|| s.output.clone())
        .unwrap_or_else(|| PathBuf::from("bladetrap-out"));
    let mut opts = RunOptions::for_scenario(&s, Some(output))?;
    if let Some(c) = &common.cache {
        opts.cache = Some(c.clone());
    }
    let summary = run(&s, &opts)?;
    let o = &summary.outcomes[0];
    match &o.result {
        Ok(files) => {
            for f in files {
                let path = opts.output.join(f);
                if f.ends_with("summary.txt") || f.ends_with(".tsv") && files.len() == 1 {
                    print!("{}", std::fs::read_to_string(&path)?);
                }
                eprintln!("wrote {}", path.display());
            }
        }
        Err(e) => eprintln!("{a} failed: {e}"),
    }
    Ok(summary.exit_code())
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::BuildMesh { common } => {
            let s = load(&common)?;
            let mesh = build_trap(&s.trap, &s.mesh)?;
            let path = common.output.clone().unwrap_or_else(|| PathBuf::from("trap.soup"));
            std::fs::write(&path, write_soup(&mesh))?;
            println!("panels {}", mesh.len());
            println!("mesh_sha256 {}", mesh.hash_hex());
            eprintln!("wrote {}", path.display());
            Ok(0)
        }
        Command::SolveBasis { common } => {
            let s = load(&common)?;
            let dir = common
                .cache
                .clone()
                .or_else(|| s.cache.clone())
                .unwrap_or_else(|| PathBuf::from("bladetrap-out/cache"));
            let cache = BasisCache::new(Some(dir), SolveOptions::default());
            let mesh = build_trap(&s.trap, &s.mesh)?;
            let path = cache.path_for(&mesh).expect("cache directory set");
            let basis = cache.get(mesh)?;
            let d = &basis.diagnostics;
            println!("panels {}", basis.mesh().len());
            println!("residual {:e}", d.residual);
            println!("basis {}", path.display());
            Ok(0)
        }
        Command::Na { common } => single(&common, load(&common)?, Analysis::NaCurves),
        Command::Analyze { common } => single(&common, load(&common)?, Analysis::TotalReport),
        Command::Sweep { common, values_um } => {
            let mut s = load(&common)?;
            if !values_um.is_empty() {
                s.d_sweep = values_um.iter().map(|v| v * 1e-6).collect();
            }
            single(&common, s, Analysis::DSweep)
        }
        Command::Compensate { common } => single(&common, load(&common)?, Analysis::Compensation),
        Command::Misalign { common, tilt_deg, shift_um } => {
            let mut s = load(&common)?;
            if !shift_um.is_empty() {
                s.translation.shifts = shift_um.iter().map(|v| v * 1e-6).collect();
                single(&common, s, Analysis::TranslationStudy)
            } else {
                if let Some(t) = tilt_deg {
                    s.tilt.angle = t.to_radians();
                }
                single(&common, s, Analysis::TiltStudy)
            }
        }
        Command::Xcheck { common } => single(&common, load(&common)?, Analysis::SolverXcheck),
        Command::Run { scenario, output, cache } => {
            let text = std::fs::read_to_string(&scenario).with_context(|| format!("reading {}", scenario.display()))?;
            let s = parse_scenario(&text).with_context(|| format!("parsing {}", scenario.display()))?;
            let output = output.or_else(|| s.output.clone()).unwrap_or_else(|| default_output(&scenario));
            let mut opts = RunOptions::for_scenario(&s, Some(output))?;
            if cache.is_some() {
                opts.cache = cache;
            }
            let summary = run(&s, &opts)?;
            for o in &summary.outcomes {
                match &o.result {
                    Ok(_) => println!("{} ok {:.1} s", o.analysis, o.seconds),
                    Err(e) => println!("{} FAILED {:.1} s: {e}", o.analysis, o.seconds),
                }
            }
            eprintln!("manifest {}", summary.manifest.display());
            Ok(summary.exit_code())
        }
    }
}

fn default_output(scenario: &Path) -> PathBuf {
    let stem = scenario.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    PathBuf::from(format!("{stem}-out"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
