//! End-to-end acceptance checks, one test per criterion.
//!
//! Every test prints its individual checks followed by a single
//! `criterion N (...): PASS` or `FAIL` line. Run with
//! `cargo test --test acceptance -- --nocapture --test-threads 1` to see
//! them in order. Solved bases are kept under the cargo target tmpdir, so
//! only the first run pays for the boundary-element solves.

use std::f64::consts::PI;
use std::fmt::Display;
use std::path::PathBuf;
use std::sync::{Arc, LazyLock, Mutex};

use bladetrap::analysis::{
    find_minimum, harmonic_fit, principal_axes, rf_null_track, trap_report, MinimumOptions, ReportOptions, TrapReport,
};
use bladetrap::bem::{solve_basis, BasisSet, SolveOptions};
use bladetrap::compensation::{refine_y_only_ratio, response_matrix, rod_response, stray_field_displacement};
use bladetrap::fdm::{compare_solvers, fdm_solve, FdmOptions, SimplifiedTrap};
use bladetrap::geometry::primitives::{icosphere, rectangle};
use bladetrap::geometry::{build_trap, Blade, ElectrodeId, ElectrodeMesh, MeshDensity, Misalignment, TrapSpec};
use bladetrap::optics::{critical_distance, numerical_apertures, rod_na};
use bladetrap::potential::{pseudopotential_energy, Component, GridKind, IonSpecies, TrapModel, VoltageSet, DEFAULT_RF_OMEGA};
use bladetrap::scenario::{run, Analysis, BasisCache, RunOptions, Scenario};
use bladetrap::units::{BOLTZMANN, ELEMENTARY_CHARGE, EPSILON_0};
use nalgebra::{Matrix2, Vector2, Vector3};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

type V3 = Vector3<f64>;

/// Minimum searches start here; the nulls sit a micrometre or two above the
/// axis.
const SEED: V3 = V3::new(0.0, 1.4e-6, 0.0);

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("bases")
}

static CACHE: LazyLock<BasisCache> = LazyLock::new(|| BasisCache::new(Some(cache_dir()), SolveOptions::default()));

/// Tests run on parallel threads; one dense solve at a time keeps the
/// memory bounded.
static SOLVING: Mutex<()> = Mutex::new(());

fn basis(spec: &TrapSpec, density: &MeshDensity) -> Arc<BasisSet> {
    let _one_at_a_time = SOLVING.lock().unwrap_or_else(|e| e.into_inner());
    CACHE.get(build_trap(spec, density).unwrap()).unwrap()
}

fn nominal() -> Arc<BasisSet> {
    basis(&TrapSpec::default(), &MeshDensity::default())
}

fn model(b: Arc<BasisSet>, v: VoltageSet) -> TrapModel {
    TrapModel::new(b, v, IonSpecies::yb171()).unwrap().with_region(V3::zeros(), 30e-6)
}

fn rf_null(m: &TrapModel, seed: V3) -> V3 {
    find_minimum(&m.energy_fn(GridKind::Pseudo), seed, &MinimumOptions { tolerance: 1e-9, ..MinimumOptions::transverse() })
        .unwrap()
        .point
}

/// Transverse report of the rf pseudopotential alone.
fn rf_report(m: &TrapModel) -> TrapReport {
    let mut o = ReportOptions::default();
    o.minimum.axes = [true, true, false];
    trap_report(m, V3::zeros(), &o).unwrap()
}

struct Criterion {
    number: u32,
    title: &'static str,
    checks: Vec<(bool, String)>,
}

impl Criterion {
    fn new(number: u32, title: &'static str) -> Self {
        Criterion {
            number,
            title,
            checks: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.checks.push((ok, what.into()));
    }

    /// |got - want| <= tol |want|.
    fn rel(&mut self, name: impl Display, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol * want.abs();
        self.check(ok, format!("{name}: {got:.4} vs {want} within {}%", tol * 100.0));
    }

    /// |got - want| <= tol.
    fn abs(&mut self, name: impl Display, got: f64, want: f64, tol: f64) {
        let ok = (got - want).abs() <= tol;
        self.check(ok, format!("{name}: {got:.4} vs {want} within {tol}"));
    }

    fn finish(self) {
        for (ok, what) in &self.checks {
            println!("    {} {what}", if *ok { "ok  " } else { "FAIL" });
        }
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.0).map(|c| c.1.as_str()).collect();
        let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
        println!("criterion {} ({}): {verdict}", self.number, self.title);
        assert!(failed.is_empty(), "criterion {} failed: {}", self.number, failed.join("; "));
    }
}

#[test]
fn criterion_1_numerical_apertures() {
    let mut c = Criterion::new(1, "numerical apertures");
    let spec = TrapSpec::default();
    let d0 = 2.0 * spec.taper_length * spec.tip_width / (spec.blade_thickness - spec.tip_width);
    c.abs("critical distance d0 (um)", critical_distance(&spec).unwrap() * 1e6, d0 * 1e6, 1e-9);
    c.abs("critical distance against 400 um", d0 * 1e6, 400.0, 1e-9);
    for (d, na_x, na_y) in [(300e-6, 0.77, 0.35), (500e-6, 0.80, 0.39)] {
        let r = numerical_apertures(&spec.clone().with_blade_distance(d)).unwrap();
        c.abs(format!("NA_x at d = {:.0} um", d * 1e6), r.effective_na_x_pos, na_x, 0.01);
        c.abs(format!("NA_y at d = {:.0} um", d * 1e6), r.effective_na_y, na_y, 0.01);
    }
    c.abs("rod NA", rod_na(&spec).unwrap(), 0.46, 0.02);
    c.finish();
}

#[test]
fn criterion_2_pseudopotential_closure() {
    let mut c = Criterion::new(2, "pseudopotential closure");
    let ion = IonSpecies::yb171();
    let phi = pseudopotential_energy(59.8, &ion, DEFAULT_RF_OMEGA);
    c.rel("phi_rf (neV)", phi / ELEMENTARY_CHARGE * 1e9, 25.2, 0.005);
    c.rel("T_axial (uK)", 2.0 * phi / BOLTZMANN * 1e6, 585.0, 0.005);
    c.finish();
}

fn sphere_capacitance_error() -> f64 {
    let a = 1e-3;
    let panels = icosphere(V3::zeros(), a, 3, 0);
    let mesh = ElectrodeMesh::new(vec![ElectrodeId::Aux(1)], panels, vec![]).unwrap();
    let basis = solve_basis(Arc::new(mesh), &SolveOptions::default()).unwrap();
    let exact = 4.0 * PI * EPSILON_0 * a;
    (basis.capacitance_matrix()[0][0] - exact) / exact
}

fn parallel_plate_error() -> f64 {
    let (side, gap) = (10e-3, 1e-3);
    let u = V3::new(side, 0.0, 0.0);
    let v = V3::new(0.0, side, 0.0);
    let corner = V3::new(-0.5 * side, -0.5 * side, 0.0);
    let mut panels = rectangle(corner + V3::new(0.0, 0.0, 0.5 * gap), u, v, 40, 40, 0);
    panels.extend(rectangle(corner - V3::new(0.0, 0.0, 0.5 * gap), u, v, 40, 40, 1));
    let mesh = ElectrodeMesh::new(vec![ElectrodeId::Aux(1), ElectrodeId::Aux(2)], panels, vec![]).unwrap();
    let basis = solve_basis(Arc::new(mesh), &SolveOptions::default()).unwrap();
    let set = basis.charge_set(&[vec![(ElectrodeId::Aux(1), 1.0)]]).unwrap();
    let e = set.field(&V3::zeros())[0];
    (-e.z - 1.0 / gap) * gap
}

#[test]
fn criterion_3_solver_validation() {
    let mut c = Criterion::new(3, "solver validation");
    let e = sphere_capacitance_error();
    c.check(e.abs() < 0.01, format!("sphere capacitance error {:.3}% (limit 1%)", 100.0 * e));
    let e = parallel_plate_error();
    c.check(e.abs() < 0.02, format!("parallel-plate field error {:.3}% (limit 2%)", 100.0 * e));

    let trap = SimplifiedTrap::default();
    let bem = {
        let _one_at_a_time = SOLVING.lock().unwrap_or_else(|e| e.into_inner());
        solve_basis(Arc::new(trap.mesh(100e-6, 200e-6).unwrap()), &SolveOptions::default()).unwrap()
    };
    let voxels = trap.voxels(25e-6).unwrap();
    let bars = SimplifiedTrap::bars();
    let probes: Vec<[f64; 3]> = (0..125)
        .map(|k| {
            let at = |i: usize| -100e-6 + 50e-6 * i as f64;
            [at(k % 5), at((k / 5) % 5), at(k / 25)]
        })
        .collect();
    for (name, drive) in [
        ("rf pair", vec![(bars[0].0, 1.0), (bars[1].0, 1.0)]),
        ("one dc bar", vec![(bars[2].0, 1.0)]),
    ] {
        let set = bem.charge_set(std::slice::from_ref(&drive)).unwrap();
        let fdm = fdm_solve(&voxels, &drive, &FdmOptions::default()).unwrap();
        let a: Vec<_> = probes.iter().map(|&p| (p, set.potential(&V3::from(p))[0])).collect();
        let b: Vec<_> = probes.iter().map(|&p| (p, fdm.potential(&V3::from(p)).unwrap())).collect();
        let cmp = compare_solvers(&a, &b).unwrap();
        c.check(
            cmp.rms_relative <= 0.03,
            format!("BEM against FDM, {name}: rms {:.3}% (limit 3%)", 100.0 * cmp.rms_relative),
        );
    }

    // central potentials and fields of each electrode group under mesh doubling
    let spec = TrapSpec::default();
    let coarse = nominal();
    let fine = basis(&spec, &MeshDensity::default().refined(2.0));
    let v = VoltageSet::operating_point().with_rods(1.0);
    let groups = [Component::Rf, Component::Dc, Component::Rod];
    let drives: Vec<_> = groups.iter().map(|&g| v.weights(g)).collect();
    let a = coarse.charge_set(&drives).unwrap();
    let b = fine.charge_set(&drives).unwrap();
    let probes: Vec<V3> = std::iter::once(V3::zeros())
        .chain((0..3).flat_map(|k| [1.0, -1.0].map(|s| s * 20e-6 * V3::ith(k, 1.0))))
        .collect();
    for (g, name) in ["rf", "dc", "rods"].iter().enumerate() {
        let (pa, pb) = (a.potential(&V3::zeros())[g], b.potential(&V3::zeros())[g]);
        let drift = ((pb - pa) / pa).abs();
        c.check(drift < 0.01, format!("{name} potential at the origin drifts {:.4}% (limit 1%)", 100.0 * drift));
        let scale = probes.iter().map(|p| a.field(p)[g].norm()).fold(0.0, f64::max);
        let worst = probes.iter().map(|p| (b.field(p)[g] - a.field(p)[g]).norm()).fold(0.0, f64::max);
        c.check(
            worst < 0.01 * scale,
            format!("{name} field within 20 um drifts {:.4}% of its scale (limit 1%)", 100.0 * worst / scale),
        );
    }
    c.check(true, format!("panels {} -> {}", coarse.mesh().len(), fine.mesh().len()));
    c.finish();
}

#[test]
fn criterion_4_operating_point() {
    let mut c = Criterion::new(4, "operating point");
    let rf = model(nominal(), VoltageSet::rf_only(600.0));
    let null = rf_null(&rf, V3::zeros());
    c.abs("rf null x (um)", null.x * 1e6, 0.0, 0.3);
    c.abs("rf null y (um)", null.y * 1e6, 1.4, 0.3);
    c.check(null.y > 0.0, format!("rf null shifted toward +y ({:.3} um)", null.y * 1e6));

    let full = rf.with_voltages(VoltageSet::operating_point()).unwrap();
    let r = trap_report(&full, SEED, &ReportOptions::default()).unwrap();
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        c.rel(format!("freq_{name} (MHz)"), r.fits[a].frequency() * 1e-6, [3.2, 3.1, 1.1][a], 0.10);
    }
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        c.rel(format!("depth_{name} (eV)"), r.depths[a].depth(), [6.1, 34.0, 9.1][a], 0.20);
    }
    for (a, name) in ["x", "y", "z"].iter().enumerate() {
        c.abs(format!("minimum {name} (um)"), r.minimum[a] * 1e6, [0.2, 1.6, 0.0][a], 0.5);
    }
    c.finish();
}

#[test]
fn criterion_5_blade_distance_sweep() {
    let mut c = Criterion::new(5, "blade-distance sweep");
    let ds = [400e-6, 500e-6, 600e-6, 800e-6, 1e-3];
    let rows: Vec<[f64; 4]> = ds
        .iter()
        .map(|&d| {
            let b = basis(&TrapSpec::default().with_blade_distance(d), &MeshDensity::default());
            let r = rf_report(&model(b, VoltageSet::rf_only(600.0)));
            let row = [
                r.fits[0].frequency() * 1e-6,
                r.fits[1].frequency() * 1e-6,
                r.depths[0].depth(),
                r.depths[1].depth(),
            ];
            c.check(true, format!("d = {:.0} um: freq {:.3}/{:.3} MHz, depth {:.2}/{:.2} eV", d * 1e6, row[0], row[1], row[2], row[3]));
            row
        })
        .collect();
    for (k, name) in ["freq_x", "freq_y", "depth_x", "depth_y"].iter().enumerate() {
        let decreasing = rows.windows(2).all(|w| w[1][k] < w[0][k]);
        c.check(decreasing, format!("{name} decreases monotonically with d"));
    }
    for (k, name) in ["freq_x", "freq_y"].iter().enumerate() {
        c.rel(format!("{name} at 400 um (MHz)"), rows[0][k], 5.2, 0.15);
        c.rel(format!("{name} at 1 mm (MHz)"), rows[4][k], 0.7, 0.15);
    }
    c.finish();
}

#[test]
fn criterion_6_compensation() {
    let mut c = Criterion::new(6, "compensation");
    // rf drive with every dc segment and rod grounded
    let m = model(nominal(), VoltageSet::rf_only(600.0));
    let rods = [-100.0, -50.0, 0.0, 50.0, 100.0];
    let dcs = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let resp = response_matrix(&m, SEED, &rods, &dcs).unwrap();
    c.rel("rod slope x (nm/V)", resp.matrix[(0, 0)] * 1e9, 45.3, 0.15);
    let (sy, uy) = (resp.matrix[(1, 0)], resp.uncertainty[(1, 0)]);
    c.check(
        sy.abs() <= 2.0 * uy,
        format!("rod slope y {:.3} nm/V within twice its uncertainty {:.3} nm/V", sy * 1e9, uy * 1e9),
    );
    // +ΔV on the x>0, y>0 blade pushes a positive ion toward -x, -y; the
    // reference slopes and ratio are quoted with the opposite sign of ΔV
    let flip = -1.0;
    c.rel("dc slope x (um/V)", flip * resp.matrix[(0, 1)] * 1e6, 2.64, 0.15);
    c.rel("dc slope y (um/V)", flip * resp.matrix[(1, 1)] * 1e6, 2.66, 0.15);
    let naive = resp.y_only_ratio();
    let refined = refine_y_only_ratio(&m, resp.base, &[-2.0, -1.0, 1.0, 2.0], naive, 10e-9).unwrap();
    let ratio = flip * refined.ratio;
    c.check(
        (-62.0..=-57.0).contains(&ratio),
        format!("refined ratio {ratio:.3} in [-62, -57]"),
    );
    c.check(
        refined.ratio.abs() > naive.abs(),
        format!("|refined| {:.3} > |naive| {:.3}", refined.ratio.abs(), naive.abs()),
    );
    let worst = refined.max_residual_x();
    c.check(worst <= 200e-9, format!("locus residual x {:.1} nm (limit 200 nm)", worst * 1e9));
    c.finish();
}

#[test]
fn criterion_7_misalignment() {
    let mut c = Criterion::new(7, "misalignment");
    let spec = TrapSpec::default().with_misalignment(Blade::Rf1, Misalignment::tilt(1.5f64.to_radians()));
    let rf = model(basis(&spec, &MeshDensity::default()), VoltageSet::rf_only(600.0));
    let zs: Vec<f64> = (-10..=10).map(|k| k as f64 * 1e-3).collect();
    let track = rf_null_track(&rf.energy_fn(GridKind::Pseudo), SEED, &zs, 100e-6, &MinimumOptions::transverse());
    c.check(
        track.stopped.is_none() && track.points.len() == zs.len(),
        format!("null track covers z = -10..10 mm ({} points)", track.points.len()),
    );
    let mut pts = track.points.clone();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    c.check(
        first[1] < 0.0 && first[2] > 0.0,
        format!("null at z = {:.0} mm: ({:.3}, {:.3}) um in x<0, y>0", first[0] * 1e3, first[1] * 1e6, first[2] * 1e6),
    );
    c.check(
        last[1] > 0.0 && last[2] < 0.0,
        format!("null at z = {:.0} mm: ({:.3}, {:.3}) um in x>0, y<0", last[0] * 1e3, last[1] * 1e6, last[2] * 1e6),
    );
    c.check(
        pts.windows(2).all(|w| w[1][1] > w[0][1] && w[1][2] < w[0][2]),
        "null x rises and y falls monotonically along z",
    );

    let nominal_min = find_minimum(
        &model(nominal(), VoltageSet::operating_point()).energy_fn(GridKind::Total),
        SEED,
        &ReportOptions::default().minimum,
    )
    .unwrap()
    .point;
    let tilted = rf.with_voltages(VoltageSet::operating_point()).unwrap();
    let r = trap_report(&tilted, SEED, &ReportOptions::default()).unwrap();
    c.abs("minimum z-shift (um)", (r.minimum.z - nominal_min.z) * 1e6, 0.5, 0.5);
    c.rel("E_rf,z at the minimum (V/m)", r.micromotion.field, 59.8, 0.20);

    let shifted = |s: f64| {
        let spec = TrapSpec::default().with_misalignment(Blade::Rf1, Misalignment::radial_shift(Blade::Rf1, spec.blade_angle, s));
        rf_null(&model(basis(&spec, &MeshDensity::default()), VoltageSet::rf_only(600.0)), SEED)
    };
    let n0 = rf_null(&model(nominal(), VoltageSet::rf_only(600.0)), SEED);
    let (out, inn) = (shifted(200e-6) - n0, shifted(-200e-6) - n0);
    for (a, name) in ["x", "y"].iter().enumerate() {
        c.check(
            out[a] * inn[a] < 0.0,
            format!(
                "translation flips the null {name} shift: {:+.3} um at +200 um, {:+.3} um at -200 um",
                out[a] * 1e6,
                inn[a] * 1e6
            ),
        );
    }
    c.finish();
}

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs a property and records the outcome.
fn property<S: Strategy>(
    c: &mut Criterion,
    name: &str,
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) {
    match runner(cases).run(&strategy, test) {
        Ok(()) => c.check(true, format!("{name} ({cases} cases)")),
        Err(e) => c.check(false, format!("{name}: {e}")),
    }
}

fn point(radius: f64) -> impl Strategy<Value = V3> {
    (-radius..radius, -radius..radius, -radius..radius).prop_map(|(x, y, z)| V3::new(x, y, z))
}

fn voltages() -> impl Strategy<Value = VoltageSet> {
    (-1000.0..1000.0, prop::array::uniform5(-50.0..50.0f64), -200.0..200.0)
        .prop_map(|(rf, seg, rod)| VoltageSet::rf_only(rf).with_segments(seg).with_rods(rod))
}

fn combine(a: f64, v: &VoltageSet, b: f64, w: &VoltageSet) -> VoltageSet {
    let mut out = VoltageSet::rf_only(a * v.rf_amplitude + b * w.rf_amplitude);
    for (id, x) in &v.dc {
        out.dc.insert(*id, a * x + b * w.dc.get(id).copied().unwrap_or(0.0));
    }
    out.rods = std::array::from_fn(|k| a * v.rods[k] + b * w.rods[k]);
    out
}

/// Sum of the absolute per-electrode contributions to one component.
fn magnitude(b: &BasisSet, v: &VoltageSet, which: Component, r: &V3) -> f64 {
    let amplitude = if which == Component::Rf { v.rf_amplitude.abs() } else { 1.0 };
    let terms: Vec<_> = v.weights(which).into_iter().map(|(id, x)| vec![(id, x)]).collect();
    amplitude * b.charge_set(&terms).unwrap().potential(r).iter().map(|p| p.abs()).sum::<f64>()
}

fn close(got: f64, want: f64, tol: f64) -> Result<(), TestCaseError> {
    prop_assert!((got - want).abs() <= tol, "{got:e} vs {want:e} (tolerance {tol:e})");
    Ok(())
}

/// Fits and reports in the same tables from two runs of one scenario.
fn reproducible_run() -> Result<(), String> {
    let mut s = Scenario {
        analyses: vec![Analysis::NaCurves, Analysis::PseudoGrid, Analysis::NullTrack],
        ..Scenario::default()
    };
    s.grid.half_width = 5e-6;
    s.grid.step = 0.5e-6;
    s.track.z_min = -1e-3;
    s.track.z_max = 1e-3;
    s.track.step = 0.5e-3;
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut listings = Vec::new();
    for d in &dirs {
        let opts = RunOptions {
            output: d.path().to_path_buf(),
            cache: Some(cache_dir()),
            solve: SolveOptions::default(),
        };
        let summary = {
            let _one_at_a_time = SOLVING.lock().unwrap_or_else(|e| e.into_inner());
            run(&s, &opts).map_err(|e| e.to_string())?
        };
        if summary.failed() > 0 {
            return Err(format!("{} analyses failed", summary.failed()));
        }
        let mut files = Vec::new();
        for o in &summary.outcomes {
            for name in o.result.as_ref().unwrap() {
                files.push((name.clone(), std::fs::read(d.path().join(name)).unwrap()));
            }
        }
        let manifest = std::fs::read_to_string(&summary.manifest).unwrap();
        // run times are the only non-reproducible manifest entries
        let stable: Vec<String> = manifest.lines().filter(|l| !l.starts_with("analysis ")).map(String::from).collect();
        listings.push((files, stable));
    }
    if listings[0].0.is_empty() {
        return Err("no tables written".into());
    }
    if listings[0] != listings[1] {
        return Err("outputs differ between runs".into());
    }
    Ok(())
}

#[test]
fn criterion_8_properties() {
    let mut c = Criterion::new(8, "property suites");
    let b = nominal();
    let base = model(b.clone(), VoltageSet::operating_point());
    let ion = IonSpecies::yb171();

    property(&mut c, "superposition of voltage sets", 24, (voltages(), voltages(), -3.0..3.0, -3.0..3.0, point(20e-6)), |(v, w, a, k, r)| {
        let (mv, mw) = (base.with_voltages(v.clone()).unwrap(), base.with_voltages(w.clone()).unwrap());
        let mc = base.with_voltages(combine(a, &v, k, &w)).unwrap();
        for which in [Component::Rf, Component::Static] {
            let (pv, pw) = (mv.potential(&r, which).unwrap(), mw.potential(&r, which).unwrap());
            // the sums cancel, so round-off follows the electrode terms
            let scale = a.abs() * magnitude(&b, &v, which, &r) + k.abs() * magnitude(&b, &w, which, &r);
            close(mc.potential(&r, which).unwrap(), a * pv + k * pw, 1e-12 * scale.max(1e-300))?;
        }
        Ok(())
    });

    property(&mut c, "pseudopotential quadratic in V_rf and even in its sign", 24, (50.0..1000.0, point(20e-6)), |(v, r): (f64, V3)| {
        let at = |amp: f64| base.with_voltages(VoltageSet::rf_only(amp)).unwrap().pseudopotential(&r).unwrap();
        let p = at(v);
        close(at(2.0 * v), 4.0 * p, 1e-12 * 4.0 * p)?;
        close(at(-v), p, 1e-12 * p)
    });

    property(&mut c, "field equals the potential gradient", 16, point(20e-6), |r| {
        prop_assume!(r.norm() > 5e-6);
        let h = 10e-9;
        for which in [Component::Rf, Component::Static] {
            let e = base.field(&r, which).unwrap();
            let fd = V3::from_fn(|k, _| {
                let dr = V3::ith(k, h);
                -(base.potential(&(r + dr), which).unwrap() - base.potential(&(r - dr), which).unwrap()) / (2.0 * h)
            });
            prop_assert!((fd - e).norm() <= 1e-4 * e.norm(), "{which:?}: {fd:?} vs {e:?}");
        }
        Ok(())
    });

    property(&mut c, "potential is harmonic at 1 um spacing", 16, point(20e-6), |r| {
        let h = 1e-6;
        for which in [Component::Rf, Component::Static] {
            let p = |q: V3| base.potential(&q, which).unwrap();
            let sum: f64 = (0..3).map(|k| p(r + V3::ith(k, h)) + p(r - V3::ith(k, h))).sum();
            let lap = sum - 6.0 * p(r);
            prop_assert!(lap.abs() <= 1e-3 * p(r).abs(), "{which:?}: h^2 laplacian {lap:e} at potential {:e}", p(r));
        }
        Ok(())
    });

    property(&mut c, "E_z vanishes on the mirror plane", 16, (-20e-6..20e-6, -20e-6..20e-6), |(x, y): (f64, f64)| {
        let r = V3::new(x, y, 0.0);
        prop_assume!(r.norm() > 2e-6);
        for which in [Component::Rf, Component::Static] {
            let e = base.field(&r, which).unwrap();
            prop_assert!(e.z.abs() <= 1e-6 * e.norm(), "{which:?}: E = {e:?}");
        }
        Ok(())
    });

    property(&mut c, "uniform field displaces a harmonic minimum by qE/(m w^2)", 32, (1e6..2e7, 1e6..2e7, -100.0..100.0, -100.0..100.0), |(wx, wy, ex, ey): (f64, f64, f64, f64)| {
        let k = [wx * wx * ion.mass / ELEMENTARY_CHARGE, wy * wy * ion.mass / ELEMENTARY_CHARGE];
        // eV: 0.5 k r^2 - E.r, plus a stiff z confinement
        let f = move |r: &V3| 0.5 * (k[0] * r.x * r.x + k[1] * r.y * r.y + k[0] * r.z * r.z) - ex * r.x - ey * r.y;
        let m = find_minimum(&f, V3::zeros(), &MinimumOptions { tolerance: 1e-12, ..Default::default() }).unwrap();
        let want = stray_field_displacement([ex, ey], [wx, wy], &ion);
        close(m.point.x, want[0], 1e-6 * want[0].abs() + 1e-12)?;
        close(m.point.y, want[1], 1e-6 * want[1].abs() + 1e-12)
    });

    property(&mut c, "fits recover synthetic quadratics", 32, (0.0..PI, 1e8..1e10, 1e8..1e10, -1e3..1e3, -5e-6..5e-6), |(zeta, k1, k2, a0, s0): (f64, f64, f64, f64, f64)| {
        let (soft, stiff) = (k1.min(k2), k1.max(k2) * 1.5);
        let u = Vector2::new(zeta.cos(), zeta.sin());
        let rot = Matrix2::new(u.x, -u.y, u.y, u.x);
        let hess = rot * Matrix2::new(soft, 0.0, 0.0, stiff) * rot.transpose();
        let f = move |r: &V3| {
            let q = Vector2::new(r.x - s0, r.y);
            a0 + 0.5 * (q.transpose() * hess * q)[0]
        };
        let fit = harmonic_fit(&f, V3::zeros(), V3::x(), 20e-6, 41, ion.mass).unwrap();
        let cx = 0.5 * hess[(0, 0)];
        close(fit.curvature, cx, 1e-9 * cx)?;
        close(fit.offset, s0, 1e-9 * 20e-6)?;
        close(fit.omega, (2.0 * cx * ELEMENTARY_CHARGE / ion.mass).sqrt(), 1e-9 * fit.omega)?;
        let axes = principal_axes(&f, V3::new(s0, 0.0, 0.0), 1e-6).unwrap();
        let got = axes.zeta.unwrap();
        let want = zeta.to_degrees() % 180.0;
        let diff = (got - want).abs();
        prop_assert!(diff.min(180.0 - diff) < 1e-4, "zeta {got} vs {want}");
        Ok(())
    });

    // the rod response agrees with the linear-response prediction H^-1 E
    let rf = model(b.clone(), VoltageSet::rf_only(600.0));
    let null = rf_null(&rf, SEED);
    let fit = rod_response(&rf, null, &[-100.0, -50.0, 0.0, 50.0, 100.0]).unwrap();
    let e = rf.with_voltages(VoltageSet::rf_only(0.0).with_rods(1.0)).unwrap().field(&null, Component::Rod).unwrap();
    let h = principal_axes(&rf.energy_fn(GridKind::Pseudo), null, 1e-6).unwrap().hessian;
    let predicted = h.lu().solve(&Vector2::new(e.x, e.y)).unwrap();
    c.rel("rod slope x against H^-1 E (nm/V)", fit.slope[0] * 1e9, predicted.x * 1e9, 0.02);

    match reproducible_run() {
        Ok(()) => c.check(true, "scenario outputs are byte-identical across runs"),
        Err(e) => c.check(false, format!("scenario reproducibility: {e}")),
    }
    c.finish();
}
