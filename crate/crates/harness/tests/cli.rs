use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const RMP: &str = "\
process.kind = rmp
process.samples = 20000
modulator.kind = lindley
modulator.service = exp:2
modulator.arrival_rate = 1
";

fn rmbp(args: &[&str], dir: &Path, threads: Option<usize>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rmbp"));
    cmd.args(args).current_dir(dir);
    if let Some(t) = threads {
        cmd.env("RAYON_NUM_THREADS", t.to_string());
    }
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn syntax_error_names_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.cfg", "process.kind = rmp\n# comment\nmodulator.kind iid\n");
    let o = rmbp(&["simulate", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn unknown_key_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.cfg", &format!("{RMP}analysis.colour = blue\n"));
    let o = rmbp(&["simulate", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unknown key `analysis.colour`"), "{}", stderr(&o));
}

#[test]
fn undefined_offspring_state_names_the_state() {
    let dir = TempDir::new().unwrap();
    let text = "\
process.kind = rmbp
modulator.kind = iid
modulator.values = 1, 2
modulator.probs = 0.6, 0.4
offspring.state.0 = poisson:0.6
offspring.state.1 = poisson:1.5
offspring.state.3 = poisson:1
";
    let cfg = write(dir.path(), "bad.cfg", text);
    let o = rmbp(&["simulate", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("offspring.state.3") && e.contains("state 3 is not defined"), "{e}");
}

#[test]
fn missing_file_and_unknown_preset() {
    let dir = TempDir::new().unwrap();
    let o = rmbp(&["simulate", "no-such.cfg"], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    let o = rmbp(&["reproduce", "figure9"], dir.path(), None);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("figure9"));
}

#[test]
fn positive_drift_is_an_engine_error() {
    let dir = TempDir::new().unwrap();
    let text = "\
process.kind = rmp
modulator.kind = iid
modulator.values = 2, 0.9
modulator.probs = 0.5, 0.5
";
    let cfg = write(dir.path(), "up.cfg", text);
    let o = rmbp(&["simulate", &cfg], dir.path(), None);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-negative drift"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "mm1.cfg", RMP);
    let a = rmbp(&["simulate", &cfg, "--seed", "7", "--out", "a"], dir.path(), Some(1));
    let b = rmbp(&["simulate", &cfg, "--seed", "7", "--out", "b"], dir.path(), Some(3));
    assert!(a.status.success() && b.status.success(), "{}", stderr(&a));
    let ca = std::fs::read(dir.path().join("a_ccdf.csv")).unwrap();
    let cb = std::fs::read(dir.path().join("b_ccdf.csv")).unwrap();
    assert_eq!(ca, cb);
    let text = String::from_utf8(ca).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# config_hash=") && header.contains("seed=7") && header.contains("version=0.1.0"));
    assert_eq!(lines.next(), Some("x,ccdf,fit"));
    assert_eq!(text.lines().count(), 202);

    let summary = std::fs::read_to_string(dir.path().join("a_summary.txt")).unwrap();
    assert!(summary.lines().all(|l| l.contains('=')));
    assert!(summary.contains("seed=7\n") && summary.contains("alpha_star_stderr=exact\n"));

    let c = rmbp(&["simulate", &cfg, "--seed", "8", "--out", "c"], dir.path(), None);
    assert!(c.status.success());
    assert_ne!(std::fs::read(dir.path().join("c_ccdf.csv")).unwrap(), std::fs::read(dir.path().join("a_ccdf.csv")).unwrap());
}

#[test]
fn alpha_of_a_markov_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "m.cfg", "process.preset = example3\n");
    let o = rmbp(&["alpha", &cfg], dir.path(), None);
    assert!(o.status.success());
    let out = stdout(&o);
    let a: f64 = out.lines().next().unwrap().strip_prefix("alpha_star=").unwrap().parse().unwrap();
    let closed = (0.9f64.ln() - 0.7f64.ln()) / 2f64.ln();
    assert!((a - closed).abs() < 1e-8);

    let cfg = write(dir.path(), "c.cfg", "process.preset = contraction\n");
    let o = rmbp(&["alpha", &cfg], dir.path(), None);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("alpha_star=none"));
}

#[test]
fn tailfit_reads_simulate_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "mm1.cfg", &format!("{RMP}output.prefix = run\n"));
    assert!(rmbp(&["simulate", &cfg], dir.path(), None).status.success());
    let o = rmbp(&["tailfit", "run_ccdf.csv", "--lo", "2", "--hi", "50"], dir.path(), None);
    assert!(o.status.success(), "{}", stderr(&o));
    let slope: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("slope="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((slope + 1.0).abs() < 0.1, "{slope}");
}

#[test]
fn constant_of_a_stopped_product() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.cfg", "process.preset = stopped\nprocess.samples = 20000\n");
    let o = rmbp(&["constant", &cfg], dir.path(), None);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let c: f64 = out.lines().find_map(|l| l.strip_prefix("mg1_stop=")).unwrap().parse().unwrap();
    assert!((c - 0.5).abs() < 1e-6, "{c}");
    assert!(out.contains("mg1_stop_stderr=exact"));
}
