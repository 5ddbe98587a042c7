use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn genctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_genctl")).args(args).output().expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn fails(out: &Output) -> String {
    assert!(!out.status.success(), "expected failure, got success");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &[&str] = &[
    "--set",
    "net.n_hidden=8",
    "--set",
    "train.steps_per_cycle=2",
    "--set",
    "train.batch_size=8",
    "--set",
    "train.episodes_per_cycle=2",
    "--set",
    "descent.steps=3",
    "--set",
    "env.max_steps=40",
];

fn train_tiny(dir: &Path) {
    let out_dir = dir.display().to_string();
    let mut args = vec!["train", "--budget", "4", "--seed", "3", "--out", &out_dir];
    args.extend_from_slice(TINY);
    args.extend_from_slice(&["--set", "checkpoint_every=1"]);
    ok(&genctl(&args));
}

#[test]
fn train_writes_outputs_and_replays_from_its_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    train_tiny(&first);
    for name in ["curve.csv", "summary.txt", "manifest.txt", "checkpoint.bin", "checkpoint-cycle0001.bin"] {
        assert!(first.join(name).is_file(), "{name} missing");
    }
    let curve = fs::read_to_string(first.join("curve.csv")).unwrap();
    assert!(curve.starts_with("episode,reward,cycle,loss_mean\n"));
    assert_eq!(curve.lines().count(), 5);
    let manifest = fs::read_to_string(first.join("manifest.txt")).unwrap();
    assert!(manifest.contains("net.n_hidden = 8"));
    assert!(manifest.contains("seed = 3"));
    assert!(manifest.contains("hash = "));
    assert!(manifest.contains("artifact_version = "));

    let second = tmp.path().join("second");
    let manifest_path = first.join("manifest.txt").display().to_string();
    let second_dir = second.display().to_string();
    ok(&genctl(&["train", "--config", &manifest_path, "--out", &second_dir]));
    assert_eq!(fs::read(first.join("curve.csv")).unwrap(), fs::read(second.join("curve.csv")).unwrap());
    let a = genctl::checkpoint::load(&first.join("checkpoint.bin")).unwrap();
    let b = genctl::checkpoint::load(&second.join("checkpoint.bin")).unwrap();
    assert_eq!(a.params.fingerprint(), b.params.fingerprint());
    assert_eq!(a.hash, b.hash);
}

#[test]
fn eval_and_transfer_run_from_a_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    train_tiny(tmp.path());
    let ckpt = tmp.path().join("checkpoint.bin").display().to_string();

    let eval_dir = tmp.path().join("eval").display().to_string();
    let stdout = ok(&genctl(&["eval", "--checkpoint", &ckpt, "--episodes", "3", "--out", &eval_dir]));
    assert_eq!(stdout.lines().filter(|l| l.starts_with("episode")).count(), 3);
    let csv = fs::read_to_string(tmp.path().join("eval/eval.csv")).unwrap();
    assert!(csv.starts_with("episode,hold_time,terminal,mean_tracking_error\n"));
    assert_eq!(csv.lines().count(), 4);

    let transfer_dir = tmp.path().join("transfer").display().to_string();
    ok(&genctl(&[
        "transfer",
        "--checkpoint",
        &ckpt,
        "--amplitude",
        "0.5",
        "--period",
        "100",
        "--set",
        "transfer.trials=2",
        "--set",
        "transfer.max_steps=30",
        "--out",
        &transfer_dir,
    ]));
    let csv = fs::read_to_string(tmp.path().join("transfer/transfer.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("A,T,trial,hold_time,mean_tracking_error"));
    assert_eq!(lines.filter(|l| l.starts_with("0.5,100,")).count(), 2);

    let err = fails(&genctl(&["eval", "--checkpoint", &ckpt, "--n-latent", "5"]));
    assert!(err.contains("checkpoint"), "{err}");
}

#[test]
fn invalid_configuration_is_rejected_with_the_key() {
    let err = fails(&genctl(&["train", "--alpha", "-1"]));
    assert!(err.contains("descent.alpha"), "{err}");
    assert!(err.contains("-1"), "{err}");

    let err = fails(&genctl(&["train", "--set", "net.n_latnet=3"]));
    assert!(err.contains("net.n_latnet"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("bad.conf");
    fs::write(&file, "# comment\nnet.sigma = 0.1\ntrain.batch_size = lots\n").unwrap();
    let err = fails(&genctl(&["train", "--config", &file.display().to_string()]));
    assert!(err.contains("train.batch_size"), "{err}");
    assert!(err.contains("line 3"), "{err}");

    let err = fails(&genctl(&["eval", "--checkpoint", "/nonexistent/ckpt.bin"]));
    assert!(err.contains("/nonexistent/ckpt.bin"), "{err}");
}

#[test]
fn sweep_writes_one_row_per_value_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().display().to_string();
    let mut args = vec![
        "sweep",
        "--grid",
        "net.n_latent=2,3",
        "--seeds",
        "0,1",
        "--out",
        &dir,
        "--set",
        "env.max_steps=10",
        "--set",
        "descent.steps=1",
        "--set",
        "train.steps_per_cycle=1",
        "--set",
        "train.batch_size=4",
    ];
    args.extend_from_slice(&["--set", "net.n_hidden=4"]);
    ok(&genctl(&args));
    let csv = fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "param,value,seed,mean_reward_125");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("net.n_latent,2,0,"));
}

#[test]
fn gradcheck_passes() {
    let stdout = ok(&genctl(&["gradcheck", "--graphs", "20"]));
    assert!(stdout.contains("all 21 gradient checks"), "{stdout}");
}

#[test]
fn serve_fails_fast_on_a_busy_port() {
    let tmp = tempfile::tempdir().unwrap();
    train_tiny(tmp.path());
    let ckpt = tmp.path().join("checkpoint.bin").display().to_string();
    let holder = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = holder.local_addr().unwrap().port().to_string();
    let err = fails(&genctl(&["serve", "--checkpoint", &ckpt, "--port", &port]));
    assert!(err.contains("cannot bind"), "{err}");
    let err = fails(&genctl(&["serve", "--checkpoint", &ckpt, "--port", &port, "--speed", "0"]));
    assert!(err.contains("--speed"), "{err}");
}
