use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_salesim");

const SMALL: &str = r#"
[data.generator]
pool_size = 1200

[world]
k = 5

[collection]
days = 15

[simulation]
horizon_days = 40
leads_per_day = 25

[experiment]
runs = 2
axes = ["collection"]
"#;

fn salesim(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("spawn salesim")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn staged_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), SMALL).unwrap();
    let c = ["--config", "cfg.toml"];

    let out = ok(&salesim(d, &[&["generate", "--out", "pool.csv"][..], &c].concat()));
    assert!(out.contains("pool.csv"));
    assert!(d.join("pool.schema").exists());

    ok(&salesim(d, &[&["fit-world", "--out", "world.json"][..], &c].concat()));
    ok(&salesim(
        d,
        &[&["collect", "--world", "world.json", "--collection", "random", "--out", "logged.json"][..], &c].concat(),
    ));
    let sim = ok(&salesim(
        d,
        &[
            &["simulate", "--world", "world.json", "--logged", "logged.json", "--policy", "lin_ucb"][..],
            &["--out", "run.log"],
            &c,
        ]
        .concat(),
    ));
    assert!(sim.starts_with("lin_ucb: R(T) = "), "{sim}");

    let verify = ok(&salesim(d, &["verify", "run.log"]));
    assert!(verify.starts_with("ok: 1000 events"), "{verify}");

    // Flip one observed flag: the recount no longer matches.
    let log = std::fs::read_to_string(d.join("run.log")).unwrap();
    let tampered = match log.find(",1\n") {
        Some(i) => format!("{}{}{}", &log[..i], ",0\n", &log[i + 3..]),
        None => log.replacen(",0\n", ",1\n", 1),
    };
    std::fs::write(d.join("bad.log"), tampered).unwrap();
    let bad = salesim(d, &["verify", "bad.log"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).starts_with("FAILED"));
}

#[test]
fn experiment_and_report_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.toml"), SMALL).unwrap();
    let table = ok(&salesim(d, &["experiment", "--config", "cfg.toml", "--out", "res", "--workers", "1"]));
    assert!(table.starts_with("# lift % vs rule_based"), "{table}");
    for f in ["config.toml", "lift_table.csv", "plot_data.csv", "report.json", "lift_plot.svg"] {
        assert!(d.join("res").join(f).exists(), "missing {f}");
    }
    let saved = std::fs::read(d.join("res/lift_table.csv")).unwrap();
    assert_eq!(saved, table.as_bytes());

    ok(&salesim(d, &["report", "res/report.json", "--out", "again"]));
    assert_eq!(std::fs::read(d.join("again/lift_table.csv")).unwrap(), saved);
    assert_eq!(
        std::fs::read(d.join("again/plot_data.csv")).unwrap(),
        std::fs::read(d.join("res/plot_data.csv")).unwrap()
    );

    // The saved config reproduces the results; only the recorded out_dir differs.
    ok(&salesim(d, &["experiment", "--config", "res/config.toml", "--out", "res2"]));
    for f in ["lift_table.csv", "plot_data.csv", "lift_plot.svg"] {
        assert_eq!(std::fs::read(d.join("res2").join(f)).unwrap(), std::fs::read(d.join("res").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.toml"), "[world]\nclusters = 3\n").unwrap();
    let out = salesim(d, &["fit-world", "--config", "bad.toml", "--out", "w.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("clusters"));

    let out = salesim(d, &["verify", "missing.log"]);
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(d.join("junk.log"), "not a log\n").unwrap();
    assert_eq!(salesim(d, &["verify", "junk.log"]).status.code(), Some(1));

    assert_eq!(salesim(d, &["simulate", "--out", "x"]).status.code(), Some(2));
}
