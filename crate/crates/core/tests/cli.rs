use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multiscale-mle"))
}

fn run(cmd: &str, config: &Path, out: &Path) -> i32 {
    bin()
        .args([cmd, "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

fn header(file: &Path) -> String {
    fs::read_to_string(file).unwrap().lines().next().unwrap().to_string()
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let f = dir.join("exp.cfg");
    fs::write(&f, body).unwrap();
    f
}

#[test]
fn simulate_writes_path_meta_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "entry = LangevinHighFriction\nepsilon = 0.1\nT = 1\n");
    assert_eq!(run("simulate", &cfg, &tmp.path().join("a")), 0);
    let csv = fs::read_to_string(tmp.path().join("a/path.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,y"));
    // dt = ε²/100 = 1e-4, so T/dt rows
    assert_eq!(lines.count(), 10_000);
    let meta = fs::read_to_string(tmp.path().join("a/path.meta")).unwrap();
    assert!(meta.contains("model = LangevinHighFriction"));
    assert!(meta.contains("seed = 1"));
    let manifest = fs::read_to_string(tmp.path().join("a/simulate_manifest.txt")).unwrap();
    assert!(manifest.contains("version = "));
    assert!(manifest.contains("replicate_seeds = "));

    assert_eq!(run("simulate", &cfg, &tmp.path().join("b")), 0);
    assert_eq!(
        fs::read(tmp.path().join("a/path.csv")).unwrap(),
        fs::read(tmp.path().join("b/path.csv")).unwrap()
    );
}

#[test]
fn csv_headers_are_stable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "entry = MultiscalePotential1D\np_coeffs = 1\nepsilon = 0.2\nT = 5\nreplicates = 2\ne_inf_sign = +1\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("sweep", &cfg, &out), 0);
    assert_eq!(
        header(&out.join("sweep.csv")),
        "alpha,delta,theta_hat_mean,theta_hat_se,n_replicates"
    );
    assert_eq!(
        header(&out.join("sweep_modified.csv")),
        "alpha,delta,theta_hat_mean,theta_hat_se,n_replicates"
    );
    let rows = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().starts_with("0.0000000000000000e0,"));
    assert_eq!(rows.lines().count(), 1 + 1 + 3);

    assert_eq!(run("limits", &cfg, &out), 0);
    assert_eq!(header(&out.join("limits.csv")), "theta,coarse_limit,full_limit");
    assert_eq!(header(&out.join("limits_argmax.csv")), "function,argmax,value,at_boundary");

    let code = run("bias", &cfg, &out);
    assert!(code == 0 || code == 4);
    assert_eq!(
        header(&out.join("bias.csv")),
        "theta,coarse_limit,e_inf_formula_magnitude,e_inf_simulated,sign_agreement"
    );

    assert_eq!(run("estimate", &cfg, &out), 0);
    assert_eq!(
        header(&out.join("estimates.csv")),
        "replicate,seed,alpha,delta,method,theta_hat,degenerate,at_boundary"
    );
}

#[test]
fn limits_reports_argmaxes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "entry = MultiscalePotential1D\np_coeffs = 1\ne_inf_sign = +1\n",
    );
    let out = tmp.path().join("o");
    assert_eq!(run("limits", &cfg, &out), 0);
    let text = fs::read_to_string(out.join("limits_argmax.csv")).unwrap();
    let argmax = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((argmax("coarse_limit") - 1.0).abs() < 1e-5);
    assert!((argmax("full_limit") - 1.6029).abs() < 1e-3);

    let cfg = write_cfg(tmp.path(), "entry = LangevinHighFriction\n");
    assert_eq!(run("limits", &cfg, &out), 0);
    let text = fs::read_to_string(out.join("limits_argmax.csv")).unwrap();
    let full = text.lines().find(|l| l.starts_with("full_limit")).unwrap();
    let fields: Vec<&str> = full.split(',').collect();
    assert!(fields[1].parse::<f64>().unwrap() < 1.0);
    assert_eq!(fields[3], "1");
}

#[test]
fn flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "entry = AvgOuModulated\nT = 5\nreplicates = 2\nalphas = 0.5\n");
    let out = tmp.path().join("o");
    let status = bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed", "99", "--replicates", "3"])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest = fs::read_to_string(out.join("sweep_manifest.txt")).unwrap();
    assert!(manifest.contains("base_seed = 99"));
    assert!(manifest.contains("replicates = 3"));
    let rows = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(rows.lines().nth(1).unwrap().ends_with(",3"));
}

#[test]
fn manifest_reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "entry = LangevinHighFriction\nepsilon = 0.2\nT = 10\nreplicates = 3\nbase_seed = 5\n",
    );
    for cmd in ["sweep", "estimate", "bias"] {
        let a = tmp.path().join(format!("{cmd}_a"));
        let b = tmp.path().join(format!("{cmd}_b"));
        let c1 = run(cmd, &cfg, &a);
        let c2 = run(cmd, &a.join(format!("{cmd}_manifest.txt")), &b);
        assert_eq!(c1, c2);
        for entry in fs::read_dir(&a).unwrap() {
            let name = entry.unwrap().file_name();
            if name.to_string_lossy().ends_with(".csv") {
                assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
            }
        }
    }
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let bad = write_cfg(tmp.path(), "entry = Nowhere\n");
    assert_eq!(run("simulate", &bad, &out), 2);
    let bad = write_cfg(tmp.path(), "entry = AvgOuModulated\nalphas = 1.5\n");
    assert_eq!(run("sweep", &bad, &out), 2);
    let bad = write_cfg(tmp.path(), "entry = MultiscalePotential1D\n");
    assert_eq!(run("limits", &bad, &out), 2);
    assert_eq!(run("simulate", &tmp.path().join("missing.cfg"), &out), 2);
    // No closed-form bias under averaging; the simulated column is noise.
    let avg = write_cfg(tmp.path(), "entry = AvgOuModulated\nT = 20\nreplicates = 4\n");
    assert!(matches!(run("bias", &avg, &out), 0 | 4));
    let text = fs::read_to_string(out.join("bias.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0.0000000000000000e0")));
}
