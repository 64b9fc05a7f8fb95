//! Monte Carlo error study: every run shares one scene and one trajectory between the
//! two layouts, and every method's mean absolute pose error is averaged over runs.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ekf::FilterTuning;
use crate::error::{Error, Result};
use crate::geometry::{project, world_to_camera_k, CameraRig, Intrinsics, Pose, RigSpec};
use crate::pipeline::{
    known_structure_seeds, orthographic_seeds, pose_error_report, run_nonoverlap_sequence,
    run_stereo_sequence, ErrorRow, Method, PipelineConfig, PoseEstimateSeries, RunSettings,
};
use crate::simulate::{gen_world, render_sequence, SimConfig, Trajectory, World};

/// Focal length of the default simulated cameras (pixels).
pub const DEFAULT_FOCAL_PX: f64 = 500.0;
pub const DEFAULT_WIDTH: u32 = 640;
pub const DEFAULT_HEIGHT: u32 = 480;
/// Runs where some camera sees fewer points than this at frame 0 are not used.
pub const MIN_VISIBLE_POINTS: usize = 100;

pub fn default_intrinsics() -> Intrinsics {
    Intrinsics::centered(DEFAULT_FOCAL_PX, DEFAULT_WIDTH, DEFAULT_HEIGHT)
        .expect("default intrinsics are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RigsConfig {
    pub overlapping: RigSpec,
    pub non_overlapping: RigSpec,
}

impl Default for RigsConfig {
    fn default() -> Self {
        Self {
            overlapping: CameraRig::default_overlapping(default_intrinsics()).to_spec(),
            non_overlapping: CameraRig::default_non_overlapping(default_intrinsics()).to_spec(),
        }
    }
}

/// Contents of a harness config file. Every block is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub rigs: RigsConfig,
    pub tuning: FilterTuning,
    pub pipeline: PipelineConfig,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        self.tuning.validate()?;
        self.pipeline.validate()?;
        self.rigs()?;
        Ok(())
    }

    /// The overlapping and the non-overlapping rig.
    pub fn rigs(&self) -> Result<(CameraRig, CameraRig)> {
        let overlap = self.rigs.overlapping.build()?;
        let nonoverlap = self.rigs.non_overlapping.build()?;
        if overlap.layout != crate::geometry::Layout::Overlapping
            || nonoverlap.layout != crate::geometry::Layout::NonOverlapping
        {
            return Err(Error::Config("rigs: layouts do not match their blocks".into()));
        }
        if overlap.len() != 4 || nonoverlap.len() != 4 {
            return Err(Error::Config("rigs: both rigs need four cameras".into()));
        }
        Ok((overlap, nonoverlap))
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            tuning: self.tuning,
            pipeline: self.pipeline,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }
}

/// Knobs of one harness invocation that are not part of the experiment itself.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessOptions {
    pub methods: Vec<Method>,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    /// Seed monocular structure at the true depths instead of the constant-depth plane.
    pub ideal_init: bool,
    /// Replace every run's random trajectory by constant per-frame increments.
    pub scripted_step: Option<Pose>,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            threads: None,
            ideal_init: false,
            scripted_step: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ReportRow {
    pub fn new(method: Method, e: &ErrorRow) -> Self {
        Self {
            method: method.to_string(),
            tx: e[0],
            ty: e[1],
            tz: e[2],
            alpha: e[3],
            beta: e[4],
            gamma: e[5],
        }
    }

    pub fn errors(&self) -> ErrorRow {
        [self.tx, self.ty, self.tz, self.alpha, self.beta, self.gamma]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidRun {
    pub run: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub runs: usize,
    pub valid_runs: usize,
    pub frames: usize,
    pub wall_time_s: f64,
    pub invalid_runs: Vec<InvalidRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
    pub metadata: ReportMetadata,
}

impl ExperimentReport {
    pub fn row(&self, method: Method) -> Option<&ReportRow> {
        let name = method.to_string();
        self.rows.iter().find(|r| r.method == name)
    }

    /// `method,tx,ty,tz,alpha,beta,gamma`, shortest round-trip decimal form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        write_report_rows(writer, &self.rows)
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self).map_err(|e| Error::Io(e.to_string()))
    }
}

pub fn write_report_rows<W: Write>(writer: W, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    w.write_record(["method", "tx", "ty", "tz", "alpha", "beta", "gamma"])
        .map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(reader: R, path: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(reader);
    r.deserialize::<ReportRow>()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_string(),
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

/// All series one run produces for the requested methods.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub truth: Vec<Pose>,
    pub series: Vec<PoseEstimateSeries>,
}

fn check_visibility(world: &World, rig: &CameraRig, name: &str) -> std::result::Result<(), String> {
    let origin = Pose::identity();
    for (k, cam) in rig.cameras().iter().enumerate() {
        let visible = world
            .scene
            .iter()
            .filter(|p| {
                world_to_camera_k(&origin, rig, k, &p.position)
                    .and_then(|c| project(&c, &cam.intrinsics))
                    .is_ok_and(|px| cam.intrinsics.contains(&px))
            })
            .count();
        if visible < MIN_VISIBLE_POINTS {
            return Err(format!("{name} camera {} sees only {visible} points", k + 1));
        }
    }
    Ok(())
}

/// Rig tags keep the two layouts' noise streams independent.
const OVERLAP_TAG: u8 = 0;
const NONOVERLAP_TAG: u8 = 1;

/// Simulates and estimates one run. `Err` carries the reason the run is unusable.
pub fn simulate_run(
    cfg: &ExperimentConfig,
    rigs: &(CameraRig, CameraRig),
    opts: &HarnessOptions,
    run: usize,
) -> std::result::Result<RunOutput, String> {
    let (overlap, nonoverlap) = rigs;
    let sim = &cfg.sim;
    let settings = cfg.settings();
    let mut world = gen_world(sim, run as u64).map_err(|e| e.to_string())?;
    if let Some(step) = &opts.scripted_step {
        world.trajectory = Trajectory::constant_velocity(sim.n_frames, step);
    }
    let wants = |m: Method| opts.methods.contains(&m);
    let mut series = Vec::new();

    let stereo = wants(Method::FourCameras) || wants(Method::TwoCameras);
    let mono = opts.methods.iter().any(|m| !m.is_stereo());
    if stereo {
        check_visibility(&world, overlap, "overlapping")?;
    }
    if mono {
        check_visibility(&world, nonoverlap, "non-overlapping")?;
    }
    let fail = |m: &str, e: Error| format!("{m}: {e}");

    if stereo {
        let seq = render_sequence(&world.scene, &world.trajectory, overlap, sim.noise_sigma, sim.seed, run as u64, OVERLAP_TAG)
            .map_err(|e| e.to_string())?;
        if wants(Method::FourCameras) {
            series.push(run_stereo_sequence(&seq, overlap, &settings).map_err(|e| fail("4cameras", e))?);
        }
        if wants(Method::TwoCameras) {
            let front = overlap.subset(&[0, 1]).map_err(|e| e.to_string())?;
            series.push(
                run_stereo_sequence(&seq.select_cameras(&[0, 1]), &front, &settings)
                    .map_err(|e| fail("2cameras", e))?,
            );
        }
    }
    if mono {
        let seq = render_sequence(&world.scene, &world.trajectory, nonoverlap, sim.noise_sigma, sim.seed, run as u64, NONOVERLAP_TAG)
            .map_err(|e| e.to_string())?;
        let seeds = if opts.ideal_init {
            known_structure_seeds(nonoverlap, &world.scene, cfg.pipeline.init_depth).map_err(|e| e.to_string())?
        } else {
            orthographic_seeds(cfg.pipeline.init_depth)
        };
        let all = run_nonoverlap_sequence(&seq, nonoverlap, &settings, &seeds).map_err(|e| fail("non-overlapping", e))?;
        series.extend(all.into_iter().filter(|s| wants(s.method)));
    }
    Ok(RunOutput {
        truth: world.trajectory.poses,
        series,
    })
}

/// Error rows for one run, frame 0 excluded, in the order of `methods`.
pub fn run_errors(output: &RunOutput, methods: &[Method]) -> Result<Vec<ErrorRow>> {
    methods
        .iter()
        .map(|m| {
            let s = output
                .series
                .iter()
                .find(|s| s.method == *m)
                .ok_or_else(|| Error::Config(format!("method {m} was not run")))?;
            let skip = 1.min(s.poses.len());
            pose_error_report(&s.poses[skip..], &output.truth[skip..])
        })
        .collect()
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs the whole study. Runs execute in parallel; the reduction is ordered by run
/// index, so the report does not depend on the thread count.
pub fn monte_carlo(cfg: &ExperimentConfig, opts: &HarnessOptions) -> Result<ExperimentReport> {
    cfg.validate()?;
    if opts.methods.is_empty() {
        return Err(Error::Config("no methods requested".into()));
    }
    let rigs = cfg.rigs()?;
    let started = Instant::now();
    let n_runs = cfg.sim.n_runs;

    let per_run: Vec<std::result::Result<Vec<ErrorRow>, String>> = in_pool(opts.threads, || {
        (0..n_runs)
            .into_par_iter()
            .map(|run| {
                let out = simulate_run(cfg, &rigs, opts, run)?;
                run_errors(&out, &opts.methods).map_err(|e| e.to_string())
            })
            .collect()
    })?;

    let mut sums = vec![[0.0; 6]; opts.methods.len()];
    let mut valid = 0usize;
    let mut invalid_runs = Vec::new();
    for (run, result) in per_run.into_iter().enumerate() {
        match result {
            Ok(rows) => {
                valid += 1;
                for (acc, row) in sums.iter_mut().zip(&rows) {
                    for (a, v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
            }
            Err(reason) => {
                log::warn!("run {run} skipped: {reason}");
                invalid_runs.push(InvalidRun { run, reason });
            }
        }
    }
    if valid == 0 {
        return Err(Error::NoValidRuns(n_runs));
    }
    let rows = opts
        .methods
        .iter()
        .zip(&sums)
        .map(|(m, s)| ReportRow::new(*m, &s.map(|v| v / valid as f64)))
        .collect();
    Ok(ExperimentReport {
        rows,
        metadata: ReportMetadata {
            config_hash: cfg.hash(),
            seed: cfg.sim.seed,
            runs: n_runs,
            valid_runs: valid,
            frames: cfg.sim.n_frames,
            wall_time_s: started.elapsed().as_secs_f64(),
            invalid_runs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(runs: usize, frames: usize) -> ExperimentConfig {
        ExperimentConfig {
            sim: SimConfig {
                n_runs: runs,
                n_frames: frames,
                ..SimConfig::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn report_csv_round_trips_exactly() {
        let rows = vec![
            ReportRow::new(Method::FourCameras, &[0.1 + 0.2, 1.0 / 3.0, 1e-300, 5e-324, 0.0, 2.5]),
            ReportRow::new(Method::Rc, &[std::f64::consts::PI, 1e17, 123.456, 7e-5, 0.000_1, 9.999]),
        ];
        let mut buf = Vec::new();
        write_report_rows(&mut buf, &rows).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("method,tx,ty,tz,alpha,beta,gamma\n"));
        assert_eq!(read_report_csv(buf.as_slice(), "mem").unwrap(), rows);
    }

    #[test]
    fn config_defaults_and_unknown_fields() {
        let cfg = ExperimentConfig::from_json_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg = ExperimentConfig::from_json_str(r#"{"sim": {"n_runs": 3}}"#).unwrap();
        assert_eq!(cfg.sim.n_runs, 3);
        assert_eq!(cfg.sim.n_points, SimConfig::default().n_points);
        assert!(matches!(ExperimentConfig::from_json_str(r#"{"sim": {"bogus": 1}}"#), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_json_str(r#"{"sim": {"shell_inner": 2.0}}"#), Err(Error::Config(_))));
        assert_ne!(cfg.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn thread_count_does_not_change_the_report() {
        let cfg = small(3, 12);
        let one = monte_carlo(&cfg, &HarnessOptions { threads: Some(1), ..Default::default() }).unwrap();
        let four = monte_carlo(&cfg, &HarnessOptions { threads: Some(4), ..Default::default() }).unwrap();
        assert_eq!(one.rows, four.rows);
        assert_eq!(one.metadata.valid_runs, 3);
        assert!(one.rows.iter().all(|r| r.errors().iter().all(|v| *v >= 0.0)));
    }

    #[test]
    fn noiseless_ideal_init_scripted_motion_is_accurate_for_every_method() {
        let mut cfg = small(1, 100);
        cfg.sim.noise_sigma = 0.0;
        let opts = HarnessOptions {
            ideal_init: true,
            scripted_step: Some(Pose::new(
                nalgebra::Vector3::new(0.0012, -0.001, 0.0015),
                nalgebra::Vector3::new(0.004, -0.003, 0.005),
            )),
            ..Default::default()
        };
        let report = monte_carlo(&cfg, &opts).unwrap();
        assert_eq!(report.metadata.valid_runs, 1);
        for row in &report.rows {
            assert!(row.errors().iter().all(|e| *e < 1e-4), "{row:?}");
        }
    }

    #[test]
    fn no_valid_runs_is_an_error() {
        let mut cfg = small(2, 5);
        cfg.sim.n_points = 10;
        assert_eq!(monte_carlo(&cfg, &HarnessOptions::default()), Err(Error::NoValidRuns(2)));
    }

    #[test]
    fn requested_methods_only() {
        let cfg = small(1, 6);
        let opts = HarnessOptions { methods: vec![Method::Cam(3), Method::TwoCameras], ..Default::default() };
        let report = monte_carlo(&cfg, &opts).unwrap();
        let names: Vec<_> = report.rows.iter().map(|r| r.method.as_str()).collect();
        assert_eq!(names, ["cam3", "2cameras"]);
    }
}
