use std::path::Path;
use std::process::{Command, Output};

fn layersim(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_layersim"))
        .args(args)
        .current_dir(dir)
        .env("LAYERSIM_THREADS", "2")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn pipeline_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("cfg.json"),
        r#"{"scene": {"frames": 8}, "train": {"max_steps": 6, "learning_rate": 0.001}, "eval": {"rollout_steps": 4}}"#,
    )
    .unwrap();

    let o = layersim(&["gen-data", "--config", "cfg.json", "--out", "data", "--count", "3", "--seed", "4"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(layersnet::lseq::list_dir(&d.join("data")).unwrap().len(), 3);

    let o = layersim(&["train", "--data", "data", "--config", "cfg.json", "--out", "m.lnpk", "--seed", "2"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(d.join("m.lnpk.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(
        lines.next().unwrap(),
        "step,epoch,sequence,frame,noise_steps,mse,normal,body_collision,garment_collision,total,wall_s"
    );
    assert_eq!(lines.count(), 6);

    let o = layersim(&["eval", "--ckpt", "m.lnpk", "--data", "data", "--report", "r.csv", "--config", "cfg.json"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = std::fs::read_to_string(d.join("r.csv")).unwrap();
    assert!(report.starts_with("sequence_id,euclid_err_m,coll_body_pct,coll_garment_pct\n"));
    assert_eq!(report.lines().count(), 4);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("windy") && stdout.contains("calm"));

    let o = layersim(&["rollout", "--ckpt", "m.lnpk", "--seq", "data/seq_0000.lseq", "--out", "p.lseq", "--steps", "3"], d);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pred = layersnet::lseq::read(&d.join("p.lseq")).unwrap();
    assert_eq!(pred.len(), 5);

    let o = layersim(&["export-obj", "--seq", "p.lseq", "--frame", "4", "--out", "f.obj"], d);
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(d.join("f.obj")).unwrap().starts_with("v "));

    // Usage errors.
    assert_eq!(code(&layersim(&["no-such-command"], d)), 1);
    assert_eq!(code(&layersim(&["export-obj", "--seq", "p.lseq"], d)), 1);
    assert_eq!(code(&layersim(&["export-obj", "--seq", "p.lseq", "--frame", "99", "--out", "g.obj"], d)), 1);
    assert_eq!(code(&layersim(&["train", "--data", "missing", "--out", "x.lnpk"], d)), 1);

    // Validation errors.
    std::fs::write(d.join("bad.json"), r#"{"scene": {"bogus": 1}}"#).unwrap();
    assert_eq!(code(&layersim(&["gen-data", "--config", "bad.json", "--out", "x"], d)), 2);
    std::fs::write(d.join("junk.lseq"), b"LSEQjunk").unwrap();
    assert_eq!(code(&layersim(&["export-obj", "--seq", "junk.lseq", "--frame", "0", "--out", "g.obj"], d)), 2);
    std::fs::write(d.join("junk.lnpk"), b"nope").unwrap();
    assert_eq!(code(&layersim(&["eval", "--ckpt", "junk.lnpk", "--data", "data", "--report", "q.csv"], d)), 2);
}

#[test]
fn gradcheck_and_verify_pass() {
    let dir = tempfile::tempdir().unwrap();
    let o = layersim(&["gradcheck"], dir.path());
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.contains("dec.lift") && out.contains("layer0.lift") && out.contains("max_rel_err"));
    let o = layersim(&["verify", "--quick"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(!String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn generation_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"scene": {"frames": 4}}"#).unwrap();
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = Command::new(env!("CARGO_BIN_EXE_layersim"))
            .args(["gen-data", "--config", "cfg.json", "--out", out, "--count", "3", "--seed", "9"])
            .current_dir(d)
            .env("LAYERSIM_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success());
    }
    for i in 0..3 {
        let name = format!("seq_{i:04}.lseq");
        assert_eq!(std::fs::read(d.join("a").join(&name)).unwrap(), std::fs::read(d.join("b").join(&name)).unwrap());
    }
}
