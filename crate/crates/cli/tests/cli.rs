use std::path::PathBuf;
use std::process::{Command, Output};

fn pasvs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pasvs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("pasvs-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

const SMALL_SWEEP: &str = r#"{
  "schema_version": 1,
  "label": "demo",
  "quantity": "sensitivity",
  "fixed": {"alpha": 2.0, "r": 0.5},
  "sweep": {"param": "phi", "start": 0.05, "stop": 0.5, "count": 4},
  "m_list": [0, 1],
  "loss": [0.0, 0.1]
}"#;

#[test]
fn limits_prints_benchmarks() {
    let o = pasvs(&["limits", "--nbar", "8"]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "nbar_total,sql,hl,sub_hl,shl\n\
         8.00000000000e0,3.53553390593e-1,1.25000000000e-1,4.41941738242e-2,1.56250000000e-2\n"
    );
}

#[test]
fn match_energy_solves_squeezing() {
    let o = pasvs(&["match-energy", "--m", "1", "--nbar-b", "4"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    // 3 sinh^2 r + 1 = 4
    let r: f64 = row[2].parse().unwrap();
    assert!((r - 1f64.asinh()).abs() < 1e-9, "{r}");
}

#[test]
fn request_errors_exit_with_one() {
    for args in [
        &["figure", "6"][..],
        &["figure", "1"],
        &["limits", "--nbar", "0"],
        &["match-energy", "--m", "2", "--nbar-b", "1"],
        &["sweep", "--config", "/nonexistent/pasvs.json"],
    ] {
        let o = pasvs(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(stderr(&o).starts_with("error"), "{args:?}");
        assert!(o.stdout.is_empty(), "{args:?}");
    }
}

#[test]
fn unknown_config_key_is_reported_with_its_path() {
    let cfg = scratch("unknown.json");
    std::fs::write(&cfg, SMALL_SWEEP.replace("\"label\"", "\"gamma_mode\": \"scan\", \"label\"")).unwrap();
    let o = pasvs(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("SchemaViolation") && err.contains("$.gamma_mode"), "{err}");
}

#[test]
fn sweep_writes_csv_to_file() {
    let cfg = scratch("small.json");
    let out = scratch("small.csv");
    std::fs::write(&cfg, SMALL_SWEEP).unwrap();
    let o = pasvs(&["sweep", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&out).unwrap();
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(body[0].starts_with("label,loss,alpha,r,m,phi,"));
    assert!(body[0].ends_with(",sensitivity,error"), "{}", body[0]);
    assert_eq!(body.len(), 1 + 2 * 4 * 2);
    assert!(body[1..].iter().all(|row| row.starts_with("demo,") && row.ends_with(',')));
}

#[test]
fn figure_output_is_byte_reproducible() {
    let one = pasvs(&["--threads", "1", "figure", "7"]);
    let many = pasvs(&["--threads", "4", "figure", "7"]);
    assert!(one.status.success() && many.status.success());
    assert!(!one.stdout.is_empty());
    assert_eq!(one.stdout, many.stdout);
    assert!(stdout(&one).contains("# figure=7"));
}
