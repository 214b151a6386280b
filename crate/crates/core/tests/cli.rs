use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isslyap"))
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> i32 {
    bin()
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--quiet")
        .args(extra)
        .status()
        .unwrap()
        .code()
        .unwrap()
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn equivalence_on_stable_scalar_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"equivalence\"\n[system]\nexemplar = \"scalar\"\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 0);
    let table = fs::read_to_string(out.join("equivalence.csv")).unwrap();
    for item in ["ii", "iii", "iv", "v", "i"] {
        assert!(
            table
                .lines()
                .any(|l| l.starts_with(&format!("{item},")) && l.contains(",pass,")),
            "{item}"
        );
    }
    let manifest: toml::Table = toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["run"]["exit_code"].as_integer(), Some(0));
}

#[test]
fn undersized_gain_is_falsified() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"falsify-iss\"\n[system]\nexemplar = \"scalar\"\n[candidate]\nbeta_m = 1.0\nbeta_lambda = 1.0\ngain = 0.5\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 2);
    let cex = fs::read_to_string(out.join("counterexample.csv")).unwrap();
    assert!(cex.lines().nth(1).unwrap().contains("const"), "{cex}");
    assert!(out.join("counterexample_input.csv").exists());
}

#[test]
fn missing_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&tmp.path().join("absent.toml"), &tmp.path().join("out"), &[]), 1);
}

#[test]
fn invalid_gamma_exits_one_with_reason() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"build-lyap\"\n[system]\nexemplar = \"scalar\"\ncertificate = [1.0, 1.0]\n[lyapunov]\ngamma = 1.5\n",
    );
    let out = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma = 1.5") && err.contains("strictly below"), "{err}");
}

#[test]
fn identical_configs_give_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"verify-ugas\"\nseed = 3\n[system]\nexemplar = \"scalar\"\n[grids]\nhorizon = 12.0\nn_random = 4\n[candidate]\nbeta_m = 1.0\nbeta_lambda = 1.0\ngain = 1.0\n",
    );
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let ca = run(&cfg, &a, &["--jobs", "1"]);
    let cb = run(&cfg, &b, &["--jobs", "3"]);
    assert_eq!(ca, cb);
    assert_eq!(csv_bytes(&a), csv_bytes(&b));
    assert_eq!(
        fs::read(a.join("manifest.toml")).unwrap(),
        fs::read(b.join("manifest.toml")).unwrap()
    );
}

#[test]
fn manifest_alone_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"estimate-iss\"\n[system]\nexemplar = \"jordan2\"\n[grids]\nx0_radii = [1.0]\nn_directions = 2\ninput_levels = [0.5, 1.0]\n",
    );
    let first = tmp.path().join("first");
    let code = run(&cfg, &first, &["--seed", "11"]);
    let manifest: toml::Table = toml::from_str(&fs::read_to_string(first.join("manifest.toml")).unwrap()).unwrap();
    let echoed = toml::to_string(manifest["config"].as_table().unwrap()).unwrap();
    let replay_cfg = write_config(tmp.path(), "replay.toml", &echoed);
    let second = tmp.path().join("second");
    assert_eq!(run(&replay_cfg, &second, &[]), code);
    assert_eq!(csv_bytes(&first), csv_bytes(&second));
    assert_eq!(manifest["run"]["seed"].as_integer(), Some(11));
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.toml", "[system]\nexemplar = \"scalar\"\n");
    let status = bin()
        .arg("--config")
        .arg(&cfg)
        .arg("--quiet")
        .env("ISSLYAP_OUT", tmp.path().join("root"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(tmp.path().join("root/simulate/trajectory.csv").exists());
}

#[test]
fn unstable_equivalence_stops_at_zero_input_item() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"equivalence\"\n[system]\nexemplar = \"scalar\"\na = 1.0\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &[]), 2);
    assert!(out.join("divergence.csv").exists());
}

#[test]
fn max_form_is_selected_from_the_candidate() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "task = \"falsify-iss\"\n[system]\nexemplar = \"scalar\"\n[candidate]\nbeta_m = 2.0\nbeta_lambda = 1.0\ngain = 2.0\nform = \"max\"\n";
    let doubled = write_config(tmp.path(), "doubled.toml", text);
    assert_eq!(run(&doubled, &tmp.path().join("a"), &[]), 0);
    let tight = write_config(tmp.path(), "tight.toml", &text.replace("2.0", "1.0"));
    assert_eq!(run(&tight, &tmp.path().join("b"), &[]), 2);
    let sum = write_config(
        tmp.path(),
        "sum.toml",
        &text.replace("2.0", "1.0").replace("form = \"max\"\n", ""),
    );
    assert_eq!(run(&sum, &tmp.path().join("c"), &[]), 0);
}

#[test]
fn resynthesis_flag_overrides_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.toml",
        "task = \"verify-ugas\"\n[system]\nexemplar = \"scalar\"\n[grids]\nhorizon = 12.0\nn_random = 2\n",
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&cfg, &out, &["--resynthesize", "3"]), 0);
    let manifest: toml::Table = toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["resynthesize"].as_integer(), Some(3));
    assert_eq!(manifest["results"]["resyntheses"].as_float(), Some(0.0));
}
