use nalgebra::Vector3;
use rigpose::ekf::{pose_predict, pose_update, FilterTuning, Measurement, PoseFilterState};
use rigpose::geometry::{CameraRig, Pose};
use rigpose::harness::{default_intrinsics, ExperimentConfig};
use rigpose::observations::Sequence;
use rigpose::pipeline::{
    orthographic_seeds, run_nonoverlap_sequence, RunSettings,
};
use rigpose::simulate::{gen_world, render_sequence, SimConfig, Trajectory};
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Pose filter fed exact structure: only pixel noise and the motion model remain, so
/// the normalized innovation squared should follow its chi-square law.
fn filter_nis_fraction(trajectory: &[Pose], runs: u64) -> (usize, usize) {
    let cfg = SimConfig::default();
    let rig = CameraRig::default_overlapping(default_intrinsics());
    let tuning = FilterTuning::default();
    let mut inside = 0;
    let mut total = 0;
    for run in 0..runs {
        let world = gen_world(&cfg, run).unwrap();
        let scene = &world.scene;
        let seq = render_sequence(&world.scene, &Trajectory { poses: trajectory.to_vec() }, &rig, cfg.noise_sigma, cfg.seed, run, 0).unwrap();
        let mut state = PoseFilterState::new(&trajectory[1], &(trajectory[1].to_vector() - trajectory[0].to_vector()), &tuning);
        for (j, frame) in seq.frames.iter().enumerate().skip(2) {
            let predicted = pose_predict(&state);
            let batch: Vec<Measurement> = (0..rig.len())
                .flat_map(|k| {
                    frame.camera(k).iter().map(move |o| Measurement {
                        camera: k,
                        feature: o.feature,
                        pixel: o.pixel,
                        structure: scene[o.feature as usize].position,
                    })
                })
                .collect();
            let upd = pose_update(&predicted, &batch, &rig).unwrap();
            state = upd.state;
            if j >= 10 {
                let chi = ChiSquared::new(upd.dof as f64).unwrap();
                total += 1;
                if (chi.inverse_cdf(0.025)..=chi.inverse_cdf(0.975)).contains(&upd.nis) {
                    inside += 1;
                }
            }
        }
    }
    (inside, total)
}

#[test]
fn filter_innovations_match_the_noise_model_on_smooth_motion() {
    let step = Pose::new(Vector3::new(0.0012, -0.001, 0.0015), Vector3::new(0.004, -0.003, 0.005));
    let traj = Trajectory::constant_velocity(100, &step);
    let (inside, total) = filter_nis_fraction(&traj.poses, 3);
    assert!(inside as f64 >= 0.9 * total as f64, "{inside} of {total} frames inside the band");
}

#[test]
fn tracks_file_round_trip_reproduces_in_process_poses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::default();
    for (layout, tag) in [(rigpose::cli::LayoutKind::Stereo, 0u8), (rigpose::cli::LayoutKind::NonOverlapping, 1)] {
        let (overlap, nonoverlap) = cfg.rigs().unwrap();
        let rig = if tag == 0 { overlap } else { nonoverlap };
        let world = gen_world(&cfg.sim, 2).unwrap();
        let seq = render_sequence(&world.scene, &world.trajectory, &rig, cfg.sim.noise_sigma, cfg.sim.seed, 2, tag).unwrap();

        let path = dir.path().join("tracks.csv");
        seq.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
        let rig_path = dir.path().join("rig.json");
        std::fs::write(&rig_path, rig.to_json_string()).unwrap();
        let rig_back = CameraRig::load(&rig_path).unwrap();
        let seq_back = Sequence::read_csv(std::fs::File::open(&path).unwrap(), rig_back.len(), "tracks.csv").unwrap();
        assert_eq!(seq_back, seq);

        let direct = rigpose::cli::run_layout(layout, &seq, &rig, &cfg).unwrap();
        let replay = rigpose::cli::run_layout(layout, &seq_back, &rig_back, &cfg).unwrap();
        assert_eq!(direct.len(), replay.len());
        for (a, b) in direct.iter().zip(&replay) {
            for (p, q) in a.poses.iter().zip(&b.poses) {
                assert!((p.to_vector() - q.to_vector()).amax() <= 1e-12);
            }
        }
    }
}

#[test]
fn rc_rotation_ignores_camera_labels() {
    // Swapping two side cameras (and their tracks) leaves the fused rotation unchanged.
    let cfg = SimConfig::default();
    let rig = CameraRig::default_non_overlapping(default_intrinsics());
    let world = gen_world(&cfg, 1).unwrap();
    let seq = render_sequence(&world.scene, &world.trajectory, &rig, cfg.noise_sigma, cfg.seed, 1, 1).unwrap();
    let settings = RunSettings::default();
    let seeds = orthographic_seeds(1.0);
    let original = run_nonoverlap_sequence(&seq, &rig, &settings, &seeds).unwrap();

    let order = [0, 3, 2, 1];
    let swapped_rig = rig.subset(&order).unwrap();
    let swapped_seq = seq.select_cameras(&order);
    let swapped = run_nonoverlap_sequence(&swapped_seq, &swapped_rig, &settings, &seeds).unwrap();
    for (a, b) in original[4].poses.iter().zip(&swapped[4].poses) {
        assert!((a.angles - b.angles).amax() < 1e-12);
    }
}
