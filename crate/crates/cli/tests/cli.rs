use std::path::{Path, PathBuf};
use std::process::Command;

use nessedp_cli::{
    emit_plotdata, parse_config_str, run_experiment, CliError, ExperimentKind, Overrides, PlotSpec, ResultTable, SystemSpec,
};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn parse(text: &str) -> nessedp_cli::Result<nessedp_cli::ExperimentConfig> {
    parse_config_str(text, Some("test"), &Overrides::default())
}

fn nessedp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nessedp")).args(args).output().expect("binary runs")
}

fn column(csv_text: &str, name: &str) -> Vec<String> {
    let mut rd = csv::Reader::from_reader(csv_text.as_bytes());
    let j = rd.headers().unwrap().iter().position(|h| h == name).expect("column present");
    rd.records().map(|r| r.unwrap()[j].to_string()).collect()
}

#[test]
fn minimal_quadratic_config_fills_defaults() {
    let cfg = parse("[system]\ntype = \"quadratic\"\n").unwrap();
    assert_eq!(cfg.t_final, 1.0);
    assert_eq!(cfg.tol, 1e-8);
    assert_eq!(cfg.seed, 42);
    assert!(matches!(cfg.system, SystemSpec::Quadratic(_)));
}

#[test]
fn eps_must_strictly_decrease() {
    let err = parse("eps = [0.1, 0.2]\n[system]\ntype = \"quadratic\"\n").unwrap_err();
    match err {
        CliError::Validation { field, constraint } => {
            assert_eq!(field, "eps");
            assert_eq!(constraint, "strictly decreasing");
        }
        other => panic!("expected a validation error, got {other}"),
    }
    assert!(parse("eps = [0.1, 0.1]\n[system]\ntype = \"quadratic\"\n").is_err());
}

#[test]
fn parse_errors_carry_line_and_column() {
    let text = "name = \"x\"\n[system]\ntype = = \"quadratic\"\n";
    match parse(text).unwrap_err() {
        CliError::Parse { line, column, .. } => {
            assert_eq!(line, 3);
            assert!(column >= 1);
        }
        other => panic!("expected a parse error, got {other}"),
    }
    match parse("[system]\ntype = \"quadratic\"\nbogus = 1\n").unwrap_err() {
        CliError::Parse { line, .. } => assert_eq!(line, 3),
        other => panic!("expected a schema error with position, got {other}"),
    }
}

#[test]
fn coefficient_tables_are_resolved() {
    let ok = "[system]\ntype = \"membrane\"\nstructure = \"otto\"\na = 1.0\nb = 0.0\n\
              k = { left = 1.0, membrane = \"table:t\", right = 1.0 }\n[tables.t]\npoints = [[-1.0, 1.0], [1.0, 2.0]]\n";
    assert!(parse(ok).is_ok());
    let missing = ok.replace("table:t", "table:u");
    match parse(&missing).unwrap_err() {
        CliError::Validation { field, constraint } => {
            assert_eq!(field, "system.k.membrane");
            assert!(constraint.contains("unknown table `u`"));
        }
        other => panic!("expected a validation error, got {other}"),
    }
}

#[test]
fn four_species_kappa_eff_at_zero_is_two() {
    let cfg = parse(
        "levels = [1.0]\ntol = 1e-6\n[system]\ntype = \"reactions\"\nkappa1 = 1.0\nkappa2 = 2.0\nequilibria = [1.0, 1.0, 1.0, 1.0]\n",
    )
    .unwrap();
    let rep = run_experiment(&cfg, ExperimentKind::Reaction).unwrap();
    // kappa1 kappa2 a* / (kappa1 a* + kappa2 a) at a = 0.
    let (k1, k2, a_star) = (1.0, 2.0, 1.0);
    let oracle = k1 * k2 * a_star / (k1 * a_star);
    assert_eq!(rep.metrics["kappa_eff_at_zero"], oracle);
    assert_eq!(oracle, 2.0);
    assert!(rep.passed());
}

#[test]
fn verify_edi_on_quadratic_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = nessedp(&[
        "verify-edi",
        "--config",
        configs_dir().join("quadratic-edi.toml").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv_text = std::fs::read_to_string(dir.path().join("quadratic-edi.csv")).unwrap();
    let residuals = column(&csv_text, "residual");
    assert!(!residuals.is_empty());
    for r in residuals {
        assert!(r.parse::<f64>().unwrap().abs() <= 1e-8, "residual {r}");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("quadratic-edi.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn converge_on_reactions_has_first_order() {
    let text = std::fs::read_to_string(configs_dir().join("reactions-converge.toml")).unwrap();
    let cfg = parse(&text).unwrap();
    let rep = run_experiment(&cfg, ExperimentKind::Converge).unwrap();
    let t = rep.primary();
    assert_eq!(t.columns, ["eps", "sup_error", "order"]);
    let orders: Vec<f64> = t.column("order").unwrap().iter().filter_map(|c| c.as_f64()).collect();
    assert_eq!(orders.len(), cfg.eps.len() - 1);
    for p in orders {
        assert!((p - 1.0).abs() <= 0.3, "order {p}");
    }
    assert!(rep.passed());
}

#[test]
fn sorption_sigma_one_matches_closed_forms() {
    let text = std::fs::read_to_string(configs_dir().join("membrane-sorption.toml")).unwrap();
    let cfg = parse(&text).unwrap();
    let rep = run_experiment(&cfg, ExperimentKind::Membrane).unwrap();
    let t = rep.primary();
    let get = |name: &str| t.column(name).unwrap()[0].as_f64().unwrap();
    let (a, b, k) = (1.0f64, 2.0f64, 2.0f64);
    let sigma = (a.sqrt() * b / k).sqrt();
    assert_eq!(get("sigma"), 1.0);
    let m_eff = (k / a) * sigma / (2.0 * sigma).sinh();
    let m_pm = (b / a.sqrt()) * sigma.tanh() / sigma;
    for (name, want) in [("k_eff", k / (2.0 * a)), ("m_eff", m_eff), ("m_minus", m_pm), ("m_plus", m_pm), ("h_k", k / 2.0)] {
        let got = get(name);
        assert!((got - want).abs() <= 1e-8 * want.abs().max(1.0), "{name}: {got} vs {want}");
    }
    assert!(rep.passed());
}

#[test]
fn plot_panels_select_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = ResultTable::new("errors", &["eps", "error", "order"]);
    t.push(vec![0.1.into(), 0.02.into(), 1.0.into()]);
    let path = emit_plotdata(&t, &PlotSpec::new("error", None, "eps", &["error"]), dir.path(), "run").unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), "eps,error\n1e-1,2e-2\n");

    let empty = ResultTable::new("snapshot", &["x", "u_eps", "u_limit"]);
    let spec = PlotSpec::new("snapshot", None, "x", &["u_eps", "u_limit"]);
    let path = emit_plotdata(&empty, &spec, dir.path(), "run").unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap(), "x,u_eps,u_limit\n");

    let missing = PlotSpec::new("bad", None, "x", &["u_exact"]);
    assert!(matches!(emit_plotdata(&empty, &missing, dir.path(), "run"), Err(CliError::MissingColumn(c)) if c == "u_exact"));
}

#[test]
fn identical_config_and_seed_give_identical_csv() {
    let config = configs_dir().join("quadratic-reduce.toml");
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &runs {
        let out = nessedp(&["reduce", "--config", config.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    assert_eq!(read(&runs[0], "quadratic-reduce.csv"), read(&runs[1], "quadratic-reduce.csv"));
    let hash = |d: &tempfile::TempDir| -> String {
        let v: serde_json::Value = serde_json::from_slice(&read(d, "quadratic-reduce.summary.json")).unwrap();
        v["config_hash"].as_str().unwrap().to_string()
    };
    assert_eq!(hash(&runs[0]), hash(&runs[1]));
}

#[test]
fn overrides_change_the_hash_and_the_samples() {
    let text = std::fs::read_to_string(configs_dir().join("quadratic-reduce.toml")).unwrap();
    let base = parse(&text).unwrap();
    let seeded = parse_config_str(
        &text,
        Some("test"),
        &Overrides {
            seed: Some(7),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(seeded.seed, 7);
    assert_ne!(base.hash(), seeded.hash());
    let a = run_experiment(&base, ExperimentKind::Reduce).unwrap();
    let b = run_experiment(&seeded, ExperimentKind::Reduce).unwrap();
    assert_ne!(a.primary().rows, b.primary().rows);
}

#[test]
fn exit_status_encodes_the_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs_dir().join("quadratic-reduce.toml");
    let config = config.to_str().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let failing = nessedp(&["reduce", "--config", config, "--out", out_dir, "--tol", "1e-300"]);
    assert_eq!(failing.status.code(), Some(1));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "eps = [0.1, 0.5]\n[system]\ntype = \"quadratic\"\n").unwrap();
    let err = nessedp(&["reduce", "--config", bad.to_str().unwrap(), "--out", out_dir]);
    assert_eq!(err.status.code(), Some(2));
    let report: serde_json::Value = serde_json::from_slice(&err.stderr).unwrap();
    assert_eq!(report["error"], "validation");
    assert_eq!(report["field"], "eps");

    let mismatch = nessedp(&["simulate", "--config", config, "--out", out_dir]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn shipped_configs_pass() {
    let dir = tempfile::tempdir().unwrap();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    entries.sort();
    assert!(entries.len() >= 10);
    for path in entries {
        let text = std::fs::read_to_string(&path).unwrap();
        let kind = parse_config_str(&text, None, &Overrides::default())
            .unwrap()
            .kind
            .map_or("simulate".to_string(), |k| k.to_string());
        let out = Command::new(env!("CARGO_BIN_EXE_nessedp"))
            .args(["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), &kind])
            .env("NESSEDP_THREADS", "2")
            .output()
            .unwrap();
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}: {}{}",
            path.display(),
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
}
