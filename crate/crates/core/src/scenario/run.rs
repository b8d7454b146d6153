//! Executes the analyses of a scenario and publishes their outputs.
//!
//! Each analysis renders its files in memory, writes them to a private
//! temporary directory and renames it into place. A manifest at the top of
//! the output directory lists every artifact with its SHA-256.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use super::{Analysis, Scenario};
use crate::analysis::{find_minimum, rf_null_track, trap_report, MinimumOptions, ReportOptions, TrapReport};
use crate::bem::{container, solve_basis, BasisSet, SolveOptions};
use crate::compensation::{refine_y_only_ratio, response_matrix};
use crate::contour::{contour_lines, emit_contours, Field2};
use crate::error::{Error, Result};
use crate::fdm::{compare_solvers, fdm_solve, FdmOptions, SimplifiedTrap};
use crate::format::{fmt_f64, Table};
use crate::geometry::{build_trap, ElectrodeMesh, Misalignment, TrapSpec};
use crate::optics::{critical_distance, na_curves, numerical_apertures, CHAMBER_NA};
use crate::potential::{sample_grid, write_grid, GridKind, PotentialGrid, TrapModel, VoltageSet};

type V3 = Vector3<f64>;

/// Largest grid an analysis may sample.
const MAX_GRID_SAMPLES: usize = 4_000_000;

/// Seed for minimum searches; the nulls sit a micrometre or two above the
/// axis.
const SEED: V3 = V3::new(0.0, 1.4e-6, 0.0);

/// Solved bases keyed by mesh hash, in memory and optionally on disk.
/// Files are published by rename, so concurrent readers only ever see
/// complete containers.
pub struct BasisCache {
    dir: Option<PathBuf>,
    options: SolveOptions,
    memo: Mutex<HashMap<[u8; 32], Arc<BasisSet>>>,
}

impl BasisCache {
    pub fn new(dir: Option<PathBuf>, options: SolveOptions) -> Self {
        BasisCache {
            dir,
            options,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn path_for(&self, mesh: &ElectrodeMesh) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{}.basis", mesh.hash_hex())))
    }

    pub fn get(&self, mesh: ElectrodeMesh) -> Result<Arc<BasisSet>> {
        let key = mesh.content_hash();
        if let Some(b) = self.memo.lock().unwrap().get(&key) {
            return Ok(b.clone());
        }
        let mesh = Arc::new(mesh);
        let path = self.path_for(&mesh);
        let cached = path.as_ref().and_then(|p| std::fs::read(p).ok()).and_then(|bytes| {
            container::load(&bytes, mesh.clone())
                .map_err(|e| log::warn!("ignoring cached basis {}: {e}", path.as_ref().unwrap().display()))
                .ok()
        });
        let basis = match cached {
            Some(b) => {
                log::info!("basis {} loaded from cache", &mesh.hash_hex()[..12]);
                b
            }
            None => {
                let t = Instant::now();
                let b = solve_basis(mesh.clone(), &self.options)?;
                log::info!("basis {} solved ({} panels, {:.1} s)", &mesh.hash_hex()[..12], mesh.len(), t.elapsed().as_secs_f64());
                if let Some(p) = &path {
                    container::save_atomic(&b, p)?;
                }
                b
            }
        };
        let basis = Arc::new(basis);
        self.memo.lock().unwrap().insert(key, basis.clone());
        Ok(basis)
    }

    /// Basis of the full trap for `spec` at the scenario's mesh density.
    fn trap(&self, spec: &TrapSpec, s: &Scenario) -> Result<Arc<BasisSet>> {
        self.get(build_trap(spec, &s.mesh)?)
    }
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub output: PathBuf,
    /// Basis cache directory; `None` keeps bases in memory only.
    pub cache: Option<PathBuf>,
    pub solve: SolveOptions,
}

impl RunOptions {
    /// Output and cache from the scenario, the cache defaulting to
    /// `<output>/cache`.
    pub fn for_scenario(s: &Scenario, output: Option<PathBuf>) -> Result<Self> {
        let output = output
            .or_else(|| s.output.clone())
            .ok_or_else(|| Error::InvalidArgument("no output directory given".into()))?;
        let cache = s.cache.clone().unwrap_or_else(|| output.join("cache"));
        Ok(RunOptions {
            output,
            cache: Some(cache),
            solve: SolveOptions::default(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct AnalysisOutcome {
    pub analysis: Analysis,
    /// Relative paths of the published files, or the failure message.
    pub result: std::result::Result<Vec<String>, String>,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    pub outcomes: Vec<AnalysisOutcome>,
    pub manifest: PathBuf,
}

impl RunSummary {
    pub fn failed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_err()).count()
    }

    /// 0 when every analysis succeeded, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failed() == 0 {
            0
        } else {
            2
        }
    }
}

type Files = Vec<(String, String)>;

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn publish(root: &Path, dir: &str, files: &Files) -> Result<()> {
    let tmp = root.join(format!(".{dir}.partial-{}", std::process::id()));
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp)?;
    }
    std::fs::create_dir_all(&tmp)?;
    for (name, body) in files {
        std::fs::write(tmp.join(name), body)?;
    }
    let dest = root.join(dir);
    if dest.exists() {
        std::fs::remove_dir_all(&dest)?;
    }
    std::fs::rename(&tmp, &dest)?;
    Ok(())
}

/// Runs every requested analysis in order. A failing analysis is recorded
/// and the others still run.
pub fn run(s: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    std::fs::create_dir_all(&opts.output)?;
    let cache = BasisCache::new(opts.cache.clone(), opts.solve.clone());
    let mut outcomes = Vec::new();
    for &a in &s.analyses {
        let t = Instant::now();
        log::info!("running {a}");
        let rendered = render(a, s, &cache);
        let seconds = t.elapsed().as_secs_f64();
        let result = match rendered {
            Ok(files) => {
                publish(&opts.output, &a.dir(), &files)?;
                Ok(files.iter().map(|f| format!("{}/{}", a.dir(), f.0)).collect())
            }
            Err(e) => {
                log::error!("{a} failed: {e}");
                publish(&opts.output, &a.dir(), &vec![("error.txt".into(), format!("{e}\n"))])?;
                Err(e.to_string())
            }
        };
        outcomes.push(AnalysisOutcome {
            analysis: a,
            result,
            seconds,
        });
    }
    let mut m = String::from("# bladetrap-manifest v1\n");
    let _ = writeln!(m, "version {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "inputs_sha256 {}", sha_hex(s.describe().as_bytes()));
    for o in &outcomes {
        let status = if o.result.is_ok() { "ok" } else { "failed" };
        let _ = writeln!(m, "analysis {} {status} seconds {:.3}", o.analysis, o.seconds);
    }
    for o in &outcomes {
        let names = match &o.result {
            Ok(names) => names.clone(),
            Err(_) => vec![format!("{}/error.txt", o.analysis.dir())],
        };
        for n in names {
            let bytes = std::fs::read(opts.output.join(&n))?;
            let _ = writeln!(m, "artifact {} {n}", sha_hex(&bytes));
        }
    }
    let manifest = opts.output.join("manifest.txt");
    std::fs::write(&manifest, m)?;
    Ok(RunSummary { outcomes, manifest })
}

fn render(a: Analysis, s: &Scenario, cache: &BasisCache) -> Result<Files> {
    match a {
        Analysis::NaCurves => na(s),
        Analysis::PseudoGrid => pseudo_grid(s, cache),
        Analysis::TotalReport => total_report(s, cache),
        Analysis::DSweep => d_sweep(s, cache),
        Analysis::Compensation => compensation(s, cache),
        Analysis::TiltStudy => tilt_study(s, cache),
        Analysis::TranslationStudy => translation_study(s, cache),
        Analysis::NullTrack => null_track(s, cache),
        Analysis::SolverXcheck => solver_xcheck(s, cache),
    }
}

fn rf_voltages(s: &Scenario) -> VoltageSet {
    VoltageSet {
        rf_omega: s.voltages.rf_omega,
        ..VoltageSet::rf_only(s.voltages.rf_amplitude)
    }
}

fn model(basis: Arc<BasisSet>, v: VoltageSet, s: &Scenario) -> Result<TrapModel> {
    Ok(TrapModel::new(basis, v, s.ion)?.with_region(V3::zeros(), 30e-6))
}

fn um(v: f64) -> f64 {
    v * 1e6
}

fn na(s: &Scenario) -> Result<Files> {
    let mut t = Table::new([
        "d_um", "na_x_1", "na_x_2", "na_y_1", "na_y_2", "na_rod", "na_x_pos", "na_x_neg", "na_y",
    ]);
    for (d, r) in na_curves(&s.trap, s.na.d_min, s.na.d_max, s.na.points)? {
        t.push(vec![
            um(d),
            r.na_x_1,
            r.na_x_2,
            r.na_y_1,
            r.na_y_2,
            r.na_rod,
            r.effective_na_x_pos,
            r.effective_na_x_neg,
            r.effective_na_y,
        ]);
    }
    let r = numerical_apertures(&s.trap)?;
    let mut sum = String::new();
    let _ = writeln!(sum, "critical_distance_um {:.4}", um(critical_distance(&s.trap)?));
    let _ = writeln!(sum, "d_um {:.4}", um(s.trap.blade_distance));
    let _ = writeln!(sum, "na_x_pos {:.4} limited_by {}", r.effective_na_x_pos, r.limit_x_pos);
    let _ = writeln!(sum, "na_x_neg {:.4} limited_by {}", r.effective_na_x_neg, r.limit_x_neg);
    let _ = writeln!(sum, "na_y {:.4} limited_by {}", r.effective_na_y, r.limit_y);
    let _ = writeln!(sum, "na_rod {:.4}", r.na_rod);
    let _ = writeln!(sum, "chamber_na {CHAMBER_NA:.2}");
    Ok(vec![("na_curves.tsv".into(), t.write()), ("summary.txt".into(), sum)])
}

/// Contour polylines of one z slice of `grid`, levels above its minimum.
fn slice_contours(grid: &PotentialGrid, levels: &[f64]) -> String {
    let values = grid.slice_z(0);
    let floor = values.iter().copied().filter(|v| !v.is_nan()).fold(f64::INFINITY, f64::min);
    let field = Field2 {
        origin: [grid.origin[0], grid.origin[1]],
        spacing: [grid.spacing[0], grid.spacing[1]],
        nx: grid.counts[0],
        ny: grid.counts[1],
        values: values.iter().map(|v| v - floor).collect(),
    };
    let lines: Vec<_> = levels.iter().map(|&l| (l, contour_lines(&field, l))).collect();
    format!("# floor {} {}\n{}", fmt_f64(floor), grid.kind.unit(), emit_contours(&lines))
}

fn xy_slice(m: &TrapModel, kind: GridKind, center: [f64; 2], z: f64, half: f64, step: f64) -> Result<PotentialGrid> {
    let n = (half / step).round();
    let h = n * step;
    sample_grid(
        m,
        [center[0] - h, center[1] - h, z],
        [center[0] + h, center[1] + h, z],
        [step; 3],
        kind,
        MAX_GRID_SAMPLES,
    )
}

fn pseudo_grid(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let m = model(cache.trap(&s.trap, s)?, s.voltages.clone(), s)?;
    let g = &s.grid;
    let grid = xy_slice(&m, g.kind, [0.0, 0.0], g.z, g.half_width, g.step)?;
    let mut sum = String::new();
    if let Some((p, v)) = grid.minimum() {
        let _ = writeln!(sum, "grid_minimum_um {:.4} {:.4} {:.4}", um(p[0]), um(p[1]), um(p[2]));
        let _ = writeln!(sum, "grid_minimum_{} {}", g.kind.unit(), fmt_f64(v));
    }
    Ok(vec![
        ("grid.txt".into(), write_grid(&grid)),
        ("contours.txt".into(), slice_contours(&grid, &g.levels)),
        ("summary.txt".into(), sum),
    ])
}

/// Transverse report of the rf pseudopotential alone.
fn rf_report(m: &TrapModel) -> Result<TrapReport> {
    let mut o = ReportOptions::default();
    o.minimum.axes = [true, true, false];
    trap_report(m, V3::zeros(), &o)
}

fn total_report(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let basis = cache.trap(&s.trap, s)?;
    let rf = model(basis, rf_voltages(s), s)?;
    let rf_rep = rf_report(&rf)?;
    let full = rf.with_voltages(s.voltages.clone())?;
    let rep = trap_report(&full, SEED, &ReportOptions::default())?;
    let modes = Table::new(["axis", "freq_MHz", "curvature_eV_per_m2", "fit_residual_eV"]);
    let mut modes = modes.with_meta("axes", "0=x 1=y 2=z");
    for (a, f) in rep.fits.iter().enumerate() {
        modes.push(vec![a as f64, f.frequency() * 1e-6, f.curvature, f.residual]);
    }
    let mut sum = String::from("[rf_only]\n");
    let _ = write!(sum, "{rf_rep}");
    sum.push_str("[total]\n");
    let _ = write!(sum, "{rep}");
    Ok(vec![("summary.txt".into(), sum), ("frequencies.tsv".into(), modes.write())])
}

fn d_sweep(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let mut t = Table::new([
        "d_um", "freq_x_MHz", "freq_y_MHz", "depth_x_eV", "depth_y_eV", "null_x_um", "null_y_um",
    ])
    .with_meta("voltages", format!("rf_only V_rf={}", fmt_f64(s.voltages.rf_amplitude)));
    for &d in &s.d_sweep {
        let spec = s.trap.clone().with_blade_distance(d);
        let m = model(cache.trap(&spec, s)?, rf_voltages(s), s)?;
        let r = rf_report(&m)?;
        t.push(vec![
            um(d),
            r.fits[0].frequency() * 1e-6,
            r.fits[1].frequency() * 1e-6,
            r.depths[0].depth(),
            r.depths[1].depth(),
            um(r.minimum.x),
            um(r.minimum.y),
        ]);
    }
    Ok(vec![("d_sweep.tsv".into(), t.write())])
}

fn compensation(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let c = &s.compensation;
    let base = if c.with_dc { s.voltages.clone() } else { rf_voltages(s) };
    let m = model(cache.trap(&s.trap, s)?, base, s)?;
    let resp = response_matrix(&m, SEED, &c.rod, &c.dc_offset)?;
    let naive = resp.y_only_ratio();
    let dvs: Vec<f64> = c.dc_offset.iter().copied().filter(|&v| v != 0.0).collect();
    let refined = refine_y_only_ratio(&m, resp.base, &dvs, naive, c.tolerance)?;
    let sweep = |fit: &crate::compensation::SweepFit, name: &str| {
        let mut t = Table::new([name, "x_um", "y_um"]);
        for (v, p) in &fit.points {
            t.push(vec![*v, um(p.x), um(p.y)]);
        }
        t.write()
    };
    let mut locus = Table::new(["dv_dc_V", "v_rod_V", "x_um", "y_um", "residual_x_nm", "iterations"]);
    for p in &refined.locus {
        locus.push(vec![
            p.dv_dc,
            p.v_rod,
            um(p.minimum.x),
            um(p.minimum.y),
            p.residual_x * 1e9,
            p.iterations as f64,
        ]);
    }
    let mut sum = resp.to_string();
    let _ = writeln!(sum, "naive_ratio {naive:.4}");
    let _ = writeln!(sum, "refined_ratio {:.4}", refined.ratio);
    let _ = writeln!(sum, "locus_y_slope_um_per_V {:.4}", refined.y_slope * 1e6);
    let _ = writeln!(sum, "locus_max_residual_x_nm {:.3}", refined.max_residual_x() * 1e9);
    Ok(vec![
        ("rod_sweep.tsv".into(), sweep(&resp.rod, "v_rod_V")),
        ("dc_sweep.tsv".into(), sweep(&resp.dc, "dv_dc_V")),
        ("locus.tsv".into(), locus.write()),
        ("summary.txt".into(), sum),
    ])
}

fn track_table(track: &crate::analysis::NullTrack) -> String {
    let mut t = Table::new(["z_mm", "x_um", "y_um"]);
    if let Some((z, why)) = &track.stopped {
        t = t.with_meta("stopped", format!("z={} {why}", fmt_f64(*z)));
    }
    let mut pts = track.points.clone();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    for p in pts {
        t.push(vec![p[0] * 1e3, um(p[1]), um(p[2])]);
    }
    t.write()
}

fn tilt_study(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let ts = &s.tilt;
    let spec = s.trap.clone().with_misalignment(ts.blade, Misalignment::tilt(ts.angle));
    let rf = model(cache.trap(&spec, s)?, rf_voltages(s), s)?;
    let f = rf.energy_fn(GridKind::Pseudo);
    let track = rf_null_track(&f, SEED, &ts.track.zs(), ts.track.max_jump, &MinimumOptions::transverse());
    let mut files: Files = vec![("null_track.tsv".into(), track_table(&track))];
    for (i, &z) in ts.z.iter().enumerate() {
        let c = find_minimum(&f, V3::new(SEED.x, SEED.y, z), &MinimumOptions::transverse())
            .map(|m| [m.point.x, m.point.y])
            .unwrap_or([0.0, 0.0]);
        let grid = xy_slice(&rf, GridKind::Pseudo, c, z, ts.half_width, ts.step)?;
        files.push((format!("slice_{i}_grid.txt"), write_grid(&grid)));
        files.push((format!("slice_{i}_contours.txt"), slice_contours(&grid, &ts.levels)));
    }
    let tilted = rf.with_voltages(s.voltages.clone())?;
    let rep = trap_report(&tilted, SEED, &ReportOptions::default())?;
    let nominal = model(cache.trap(&s.trap, s)?, s.voltages.clone(), s)?;
    let nominal_min = find_minimum(&nominal.energy_fn(GridKind::Total), SEED, &ReportOptions::default().minimum)?;
    let mut sum = String::new();
    let _ = writeln!(sum, "blade {} tilt_deg {:.4}", ts.blade.name(), ts.angle.to_degrees());
    for (i, z) in ts.z.iter().enumerate() {
        let _ = writeln!(sum, "slice_{i}_z_mm {:.4}", z * 1e3);
    }
    let n = nominal_min.point;
    let _ = writeln!(sum, "nominal_minimum_um {:.4} {:.4} {:.4}", um(n.x), um(n.y), um(n.z));
    let d = rep.minimum - n;
    let _ = writeln!(sum, "minimum_shift_um {:.4} {:.4} {:.4}", um(d.x), um(d.y), um(d.z));
    let _ = write!(sum, "{rep}");
    files.push(("summary.txt".into(), sum));
    Ok(files)
}

fn translation_study(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let ts = &s.translation;
    let mut t = Table::new(["shift_um", "r_um", "null_x_um", "null_y_um"]).with_meta("blade", ts.blade.name());
    for &shift in &ts.shifts {
        let spec = s
            .trap
            .clone()
            .with_misalignment(ts.blade, Misalignment::radial_shift(ts.blade, s.trap.blade_angle, shift));
        let rf = model(cache.trap(&spec, s)?, rf_voltages(s), s)?;
        let m = find_minimum(&rf.energy_fn(GridKind::Pseudo), SEED, &MinimumOptions::transverse())?;
        t.push(vec![um(shift), um(0.5 * s.trap.blade_distance + shift), um(m.point.x), um(m.point.y)]);
    }
    Ok(vec![("translation.tsv".into(), t.write())])
}

fn null_track(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let rf = model(cache.trap(&s.trap, s)?, rf_voltages(s), s)?;
    let f = rf.energy_fn(GridKind::Pseudo);
    let track = rf_null_track(&f, SEED, &s.track.zs(), s.track.max_jump, &MinimumOptions::transverse());
    Ok(vec![("null_track.tsv".into(), track_table(&track))])
}

fn solver_xcheck(s: &Scenario, cache: &BasisCache) -> Result<Files> {
    let x = &s.xcheck;
    let trap = SimplifiedTrap::default();
    let basis = cache.get(trap.mesh(x.bar_mesh, x.box_mesh)?)?;
    let voxels = trap.voxels(x.fdm_step)?;
    let bars = SimplifiedTrap::bars();
    let drives = [vec![(bars[0].0, 1.0), (bars[1].0, 1.0)], vec![(bars[2].0, 1.0)]];
    let probes: Vec<[f64; 3]> = (0..125)
        .map(|k| {
            let c = |i: usize| -100e-6 + 50e-6 * i as f64;
            [c(k % 5), c((k / 5) % 5), c(k / 25)]
        })
        .collect();
    let mut t = Table::new([
        "drive", "rms_relative", "max_relative", "rms_x_line_V", "rms_y_line_V", "rms_z_line_V", "fdm_sweeps",
    ])
    .with_meta("drives", "0=rf_pair 1=one_dc_bar");
    for (k, drive) in drives.iter().enumerate() {
        let bem = basis.charge_set(std::slice::from_ref(drive))?;
        let fdm = fdm_solve(&voxels, drive, &FdmOptions::default())?;
        let a: Vec<_> = probes.iter().map(|&p| (p, bem.potential(&V3::from(p))[0])).collect();
        let b = probes
            .iter()
            .map(|&p| fdm.potential(&V3::from(p)).map(|v| (p, v)))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidArgument("probe outside the voxel box".into()))?;
        let c = compare_solvers(&a, &b)?;
        t.push(vec![
            k as f64,
            c.rms_relative,
            c.max_relative,
            c.per_axis[0],
            c.per_axis[1],
            c.per_axis[2],
            fdm.sweeps as f64,
        ]);
    }
    Ok(vec![("xcheck.tsv".into(), t.write())])
}
