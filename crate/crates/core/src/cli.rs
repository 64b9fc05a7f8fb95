//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for bad input (arguments, files, configs), 2 when the
//! estimation itself fails.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::geometry::{CameraRig, Pose};
use crate::harness::{monte_carlo, ExperimentConfig, HarnessOptions};
use crate::observations::Sequence;
use crate::pipeline::{
    orthographic_seeds, pose_error_report, read_poses_csv, run_nonoverlap_sequence,
    run_stereo_sequence, write_diagnostics_jsonl, write_poses_csv, Method, PoseEstimateSeries,
};
use crate::selftest;
use crate::simulate::{gen_world, render_sequence, SimConfig};

#[derive(Debug, Parser)]
#[command(name = "rigpose", version, about = "Multi-camera rig ego-motion estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LayoutArg {
    Stereo,
    Nonoverlap,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the Monte Carlo error study and write a per-method report.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Report CSV (`method,tx,ty,tz,alpha,beta,gamma`); printed to stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Report plus run metadata as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Comma-separated subset of 4cameras,2cameras,cam1,cam2,cam3,cam4,RC.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        threads: Option<usize>,
        /// Start from the full-size study (1,500 runs, 10,000 points).
        #[arg(long)]
        full_scale: bool,
        /// Seed monocular structure at the true depths.
        #[arg(long)]
        ideal_init: bool,
    },
    /// Estimate poses from a recorded tracks file.
    RunTracks {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        rig: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth poses (poses CSV); prints the per-method error report.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Per-frame diagnostics as JSON lines.
        #[arg(long)]
        diag: Option<PathBuf>,
        /// Harness config supplying the tuning and pipeline blocks.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Write one simulated run as rig, tracks and truth files.
    Export {
        #[arg(long, value_enum)]
        layout: LayoutArg,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        rig_out: PathBuf,
        #[arg(long)]
        tracks_out: PathBuf,
        #[arg(long)]
        truth_out: PathBuf,
    },
    /// Run the noiseless oracles and print their residuals.
    Selftest,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                1
            } else {
                2
            }
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>, full_scale: bool) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if full_scale && path.is_none() {
        cfg.sim = SimConfig::full_scale();
    }
    Ok(cfg)
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Simulate {
            config,
            runs,
            frames,
            seed,
            out,
            json,
            methods,
            threads,
            full_scale,
            ideal_init,
        } => {
            let mut cfg = load_config(config.as_deref(), full_scale)?;
            if let Some(r) = runs {
                cfg.sim.n_runs = r;
            }
            if let Some(f) = frames {
                cfg.sim.n_frames = f;
            }
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            let methods = match methods {
                Some(list) => list.iter().map(|m| m.parse()).collect::<Result<Vec<Method>>>()?,
                None => Method::ALL.to_vec(),
            };
            let opts = HarnessOptions {
                methods,
                threads,
                ideal_init,
                scripted_step: None,
            };
            let report = monte_carlo(&cfg, &opts)?;
            match out {
                Some(p) => {
                    let mut w = create(&p)?;
                    report.write_csv(&mut w)?;
                    w.flush()?;
                }
                None => report.write_csv(std::io::stdout().lock())?,
            }
            if let Some(p) = json {
                let mut w = create(&p)?;
                report.write_json(&mut w)?;
                w.flush()?;
            }
            eprintln!(
                "{} of {} runs valid, {:.1} s",
                report.metadata.valid_runs, report.metadata.runs, report.metadata.wall_time_s
            );
            Ok(0)
        }
        Command::RunTracks {
            layout,
            rig,
            tracks,
            out,
            truth,
            diag,
            config,
        } => {
            let cfg = load_config(config.as_deref(), false)?;
            let rig = CameraRig::load(&rig)?;
            let seq = Sequence::read_csv(open(&tracks)?, rig.len(), &tracks.display().to_string())?;
            let truth = match truth {
                Some(p) => Some(read_truth(&p)?),
                None => None,
            };
            let series = run_layout(layout.into(), &seq, &rig, &cfg)?;
            let named: Vec<(String, &[Pose])> = series
                .iter()
                .map(|s| (s.method.to_string(), s.poses.as_slice()))
                .collect();
            let mut w = create(&out)?;
            write_poses_csv(&mut w, &named)?;
            w.flush()?;
            if let Some(p) = diag {
                let mut w = create(&p)?;
                for s in &series {
                    write_diagnostics_jsonl(&mut w, &s.diagnostics)?;
                }
                w.flush()?;
            }
            if let Some(truth) = truth {
                println!("method,tx,ty,tz,alpha,beta,gamma");
                for s in &series {
                    let row = pose_error_report(&s.poses, &truth)?;
                    let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                    println!("{},{}", s.method, cells.join(","));
                }
            }
            Ok(0)
        }
        Command::Export {
            layout,
            config,
            run,
            frames,
            seed,
            rig_out,
            tracks_out,
            truth_out,
        } => {
            let mut cfg = load_config(config.as_deref(), false)?;
            if let Some(f) = frames {
                cfg.sim.n_frames = f;
            }
            if let Some(s) = seed {
                cfg.sim.seed = s;
            }
            cfg.validate()?;
            let (overlap, nonoverlap) = cfg.rigs()?;
            let (rig, tag) = match layout {
                LayoutArg::Stereo => (overlap, 0),
                LayoutArg::Nonoverlap => (nonoverlap, 1),
            };
            let world = gen_world(&cfg.sim, run as u64)?;
            let seq = render_sequence(
                &world.scene,
                &world.trajectory,
                &rig,
                cfg.sim.noise_sigma,
                cfg.sim.seed,
                run as u64,
                tag,
            )?;
            std::fs::write(&rig_out, rig.to_json_string())
                .map_err(|e| Error::Io(format!("{}: {e}", rig_out.display())))?;
            let mut w = create(&tracks_out)?;
            seq.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&truth_out)?;
            write_poses_csv(&mut w, &[("truth".to_string(), world.trajectory.poses.as_slice())])?;
            w.flush()?;
            Ok(0)
        }
        Command::Selftest => {
            let results = selftest::run_all()?;
            let mut all = true;
            for r in &results {
                let status = if r.passed() { "ok" } else { "FAIL" };
                println!("{:<30} residual {:.3e}  tolerance {:.0e}  {status}", r.name, r.residual, r.tolerance);
                all &= r.passed();
            }
            Ok(if all { 0 } else { 2 })
        }
    }
}

/// Runs the estimator for `layout`; the non-overlapping layout seeds structure on the
/// configured constant-depth plane.
pub fn run_layout(
    layout: LayoutKind,
    seq: &Sequence,
    rig: &CameraRig,
    cfg: &ExperimentConfig,
) -> Result<Vec<PoseEstimateSeries>> {
    let settings = cfg.settings();
    match layout {
        LayoutKind::Stereo => Ok(vec![run_stereo_sequence(seq, rig, &settings)?]),
        LayoutKind::NonOverlapping => run_nonoverlap_sequence(
            seq,
            rig,
            &settings,
            &orthographic_seeds(cfg.pipeline.init_depth),
        ),
    }
}

/// Which estimator a tracks file is fed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayoutKind {
    Stereo,
    NonOverlapping,
}

impl From<LayoutArg> for LayoutKind {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::Stereo => LayoutKind::Stereo,
            LayoutArg::Nonoverlap => LayoutKind::NonOverlapping,
        }
    }
}

fn read_truth(path: &Path) -> Result<Vec<Pose>> {
    let mut all = read_poses_csv(open(path)?, &path.display().to_string())?;
    match all.len() {
        1 => Ok(all.remove(0).1),
        n => Err(Error::Parse {
            path: path.display().to_string(),
            line: 0,
            message: format!("expected poses of exactly one method, found {n}"),
        }),
    }
}
