use super::*;
use crate::fixtures::{front_camera, reference_from_poses, standard_humanoid, standing_q};

fn reference() -> ReferenceTrajectory {
    let body = standard_humanoid();
    let mut poses = vec![standing_q(&body); 3];
    poses[1][0] = 0.25;
    poses[2][2] = -0.125;
    reference_from_poses(&body, &front_camera(), 30.0, &poses)
}

#[test]
fn trajectory_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let r = reference();
    let states: Vec<SimState<f64>> =
        (0..3).map(|i| SimState { q: vec![0.1 * i as f64 + 1.0 / 3.0; 62], qd: vec![-1e-17; 48] }).collect();
    let f = TrajectoryFile::with_states(&r, &states).unwrap();
    write_trajectory(&path, &f).unwrap();
    let back = read_trajectory(&path).unwrap();
    assert_eq!(back, f);
    assert_eq!(back.reference(), r);
    assert_eq!(back.states().unwrap(), states);
}

#[test]
fn states_are_optional() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    write_trajectory(&path, &TrajectoryFile::from_reference(&reference())).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(!text.contains("\"state\""));
    assert!(read_trajectory(&path).unwrap().states().is_none());
}

#[test]
fn controls_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let init = SimState { q: vec![0.5; 62], qd: vec![0.0; 48] };
    let c = ControlTrajectory { fps: 25.0, targets: vec![vec![0.25; 64]; 4], residual: vec![] };
    write_controls(&path, &ControlsFile::new(&init, &c)).unwrap();
    let back = read_controls(&path).unwrap();
    assert_eq!(back.controls(), c);
    assert_eq!(back.initial_state.to_state(), init);
}

#[test]
fn wrong_format_or_version_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.json");
    let mut f = TrajectoryFile::from_reference(&reference());
    f.version = 7;
    write_trajectory(&path, &f).unwrap();
    match read_trajectory(&path) {
        Err(Error::Parse { msg, .. }) => assert!(msg.contains("version 7"), "{msg}"),
        other => panic!("{other:?}"),
    }
    f.version = VERSION;
    f.format = CONTROLS_FORMAT.into();
    write_trajectory(&path, &f).unwrap();
    assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
    std::fs::write(&path, "{not json").unwrap();
    assert!(matches!(read_trajectory(&path), Err(Error::Parse { .. })));
    assert!(matches!(read_trajectory(&dir.path().join("missing.json")), Err(Error::Read { .. })));
}

#[test]
fn csv_writers_have_headers_and_rows() {
    let m = MetricReport { mpjpe_g: Some(1.5), mpjpe: Some(2.0), mpjpe_pa: Some(0.5), mpjpe_2d: None, tv_acc: 3.0, foot_skate: 0.0 };
    let text = metrics_csv(&[("rec".into(), m.clone())]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# physmotion-metrics 1");
    assert_eq!(lines[1], "comparison,metric,value");
    assert_eq!(lines[2], "rec,mpjpe_g_mm,1.5");
    assert_eq!(lines.len(), 2 + 5);
    assert!(metrics_text(&[("rec".into(), m)]).contains("[rec]"));

    let pf = per_frame_csv(&[("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0]), ("c".into(), vec![f64::NAN, 5.0])]);
    assert_eq!(pf.lines().skip(1).collect::<Vec<_>>(), ["frame,a,b,c", "0,1,3,", "1,2,,5"]);

    let lt = loss_trace_csv(&[(0, vec![2.0, 1.0]), (1, vec![4.0])]);
    assert_eq!(lt.lines().skip(1).collect::<Vec<_>>(), ["window,iterate,loss", "0,0,2", "0,1,1", "1,0,4"]);
}
