use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bdaepi(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdaepi")).args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr:\n{}", String::from_utf8_lossy(&out.stderr));
}

const CONFIG: &str = "\
model = sir
emission = binomial
population = 40
data = sim/data.csv
seed = 11
sim.initial = 36, 4, 0
sim.beta = 0.02
sim.mu = 0.4
sim.rho = 0.7
sim.start = 0
sim.end = 12
sim.every = 1
iterations = 60
burn_in = 10
thin = 10
subjects_per_iter = 5
chains = 2
prior.beta.shape = 2
prior.beta.rate = 100
prior.mu.shape = 2
prior.mu.rate = 5
prior.rho.a = 2
prior.rho.b = 2
prior.p0.alpha = 9, 1, 0.1
init.beta = 0.02
init.mu = 0.4
init.rho = 0.7
init.p0 = 0.899, 0.1, 0.001
";

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.conf"), CONFIG).unwrap();
    ok(&bdaepi(&["simulate", "--config", "run.conf", "--out", "sim"], dir.path()));
    dir
}

#[test]
fn simulate_fit_summarize_diag() {
    let dir = setup();
    let d = dir.path();
    let data = fs::read_to_string(d.join("sim/data.csv")).unwrap();
    assert_eq!(data.lines().count(), 1 + 13);
    assert!(d.join("sim/truth.csv").exists());
    assert!(d.join("sim/truth_history.txt").exists());

    ok(&bdaepi(&["fit", "--config", "run.conf", "--out", "fit"], d));
    for c in 0..2 {
        let draws = fs::read_to_string(d.join(format!("fit/chain{c}_draws.csv"))).unwrap();
        assert!(draws.starts_with("iteration,logpost,beta"));
        assert_eq!(draws.lines().count(), 1 + 60);
        let snaps = fs::read_to_string(d.join(format!("fit/chain{c}_snapshots.txt"))).unwrap();
        assert_eq!(snaps.lines().filter(|l| l.starts_with("H,")).count(), 5);
    }
    let latent = fs::read_to_string(d.join("fit/latent.csv")).unwrap();
    assert!(latent.lines().count() > 13);
    assert!(fs::read_to_string(d.join("fit/summary.txt")).unwrap().contains("R0"));

    let out = bdaepi(
        &["summarize", "--times", "0,6,12", "--out", "grid.csv", "fit/chain0_snapshots.txt", "fit/chain1_snapshots.txt"],
        d,
    );
    ok(&out);
    let grid = fs::read_to_string(d.join("grid.csv")).unwrap();
    // Header plus three times for each of the three compartments.
    assert_eq!(grid.lines().count(), 1 + 9);

    let out = bdaepi(&["diag", "--burn-in", "10", "fit/chain0_draws.csv", "fit/chain1_draws.csv"], d);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.lines().next().unwrap().starts_with("file,column,mean"));
    assert!(text.contains(",beta,"));
}

#[test]
fn fit_is_reproducible() {
    let dir = setup();
    let d = dir.path();
    ok(&bdaepi(&["fit", "--config", "run.conf", "--chains", "1", "--out", "a"], d));
    ok(&bdaepi(&["fit", "--config", "run.conf", "--chains", "1", "--out", "b"], d));
    let a = fs::read_to_string(d.join("a/chain0_draws.csv")).unwrap();
    let b = fs::read_to_string(d.join("b/chain0_draws.csv")).unwrap();
    assert_eq!(a, b);
    ok(&bdaepi(&["fit", "--config", "run.conf", "--chains", "1", "--seed", "12", "--out", "c"], d));
    assert_ne!(a, fs::read_to_string(d.join("c/chain0_draws.csv")).unwrap());
}

#[test]
fn bad_input_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("typo.conf"), CONFIG.replace("iterations", "iteratons")).unwrap();
    let out = bdaepi(&["fit", "--config", "typo.conf", "--out", "x"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteratons"));

    fs::write(d.join("run.conf"), CONFIG).unwrap();
    let out = bdaepi(&["fit", "--config", "run.conf", "--out", "x"], d);
    assert!(!out.status.success(), "missing data file must fail");

    fs::create_dir(d.join("sim")).unwrap();
    fs::write(d.join("sim/data.csv"), "time,count\n0,3\n1,999\n").unwrap();
    let out = bdaepi(&["fit", "--config", "run.conf", "--out", "x"], d);
    assert!(!out.status.success(), "count above the population must fail");

    let out = bdaepi(&["diag", "nope.csv"], d);
    assert!(!out.status.success());
}
