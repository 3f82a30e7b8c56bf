use std::path::PathBuf;
use std::process::{Command, Output};

const HEADER: &str = "algo,workload,n,m,seed,total_ops,ops_per_access,peak_aug_bits";

fn bstsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bstsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bstsim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, contents).unwrap();
    p
}

#[test]
fn run_prints_header_and_one_row() {
    let o = bstsim(&["run", "splay", "sequential", "n=64", "m=200", "seed=3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], HEADER);
    assert_eq!(lines.len(), 2);
    let row: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&row[..5], &["splay", "sequential", "64", "200", "3"]);
    let total: u64 = row[5].parse().unwrap();
    assert!(total > 0);
}

#[test]
fn output_is_deterministic_per_seed() {
    let args = ["run", "--algo", "splay,combine:splay+mtr", "--workload", "uniform", "--n", "64,128", "--seed", "1,2", "--m", "300"];
    let a = bstsim(&args);
    let b = bstsim(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 1 + 2 * 2 * 2);
    let c = bstsim(&["run", "splay", "uniform", "n=64", "m=300", "seed=7"]);
    let d = bstsim(&["run", "splay", "uniform", "n=64", "m=300", "seed=8"]);
    assert_ne!(c.stdout, d.stdout);
}

#[test]
fn header_is_written_even_when_runs_fail() {
    let o = bstsim(&["run", "splay", "file(/nonexistent/bstsim/input)", "n=16"]);
    assert_ne!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with(HEADER));
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["run", "nosuchalgo"][..],
        &["run", "splay", "--config", "Q=1"],
        &["run", "splay", "--config", "C=1"],
        &["run", "combine:splay"],
        &["run", "splay", "n=0"],
        &["run", "splay", "uniform", "extra"],
    ] {
        assert_eq!(bstsim(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn csv_file_and_initial_tree() {
    let tree = scratch("tree.txt", "2(1,4(3,5))");
    let csv = std::env::temp_dir().join(format!("bstsim-cli-{}-out.csv", std::process::id()));
    let o = bstsim(&[
        "run",
        "mtr",
        "sequential",
        "m=20",
        "--initial-tree",
        tree.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--check-invariants",
        "every-op",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(o.stdout.is_empty());
    let written = std::fs::read_to_string(&csv).unwrap();
    let row = written.lines().nth(1).unwrap();
    assert!(row.starts_with("mtr,sequential,5,20,0,"), "{row}");

    let bad = scratch("bad.txt", "2(1,5(3,6))");
    let o = bstsim(&["run", "mtr", "--initial-tree", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = bstsim(&["run", "mtr", "n=6", "--initial-tree", tree.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dump_buffers_goes_to_stderr() {
    let o = bstsim(&["run", "combine:splay+balanced", "uniform", "n=32", "m=100", "--dump-buffers"]);
    assert_eq!(o.status.code(), Some(0));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("phase I"), "{err}");
    assert_eq!(stdout(&o).lines().count(), 2);
}

#[test]
fn replay_matches_reference() {
    let tree = scratch("replay-tree.txt", "2(1,3)");
    let trace = scratch("trace.txt", "# finger op\n0 L\n0 T\n0 R\n1 R\n");
    let o = bstsim(&["replay", trace.to_str().unwrap(), "--initial-tree", tree.to_str().unwrap(), "--fingers", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.contains("operations: 4"), "{out}");
    assert!(out.contains("reference cost: 4"), "{out}");

    let illegal = scratch("illegal.txt", "0 P\n");
    let o = bstsim(&["replay", illegal.to_str().unwrap(), "--n", "7"]);
    assert_eq!(o.status.code(), Some(1));

    let garbled = scratch("garbled.txt", "0 X\n");
    let o = bstsim(&["replay", garbled.to_str().unwrap(), "--n", "7"]);
    assert_eq!(o.status.code(), Some(2));

    let o = bstsim(&["replay", trace.to_str().unwrap(), "--n", "7", "--fingers", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn verify_leftify_passes() {
    let o = bstsim(&["verify", "--suite", "leftify,deque"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(out.contains("leftify: pass"));
    assert!(out.contains("deque-vs-oracle: pass"));
    assert!(!out.contains("mf-vs-reference"));
}
