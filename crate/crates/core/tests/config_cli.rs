use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use proptest::prelude::*;

use wbanmac::config::KEYS;
use wbanmac::SimConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wbanmac"))
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn wbanmac");
    assert!(
        out.status.success(),
        "wbanmac failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn config_text() -> impl Strategy<Value = String> {
    (
        prop_oneof![Just("ADP"), Just("ADP2"), Just("MVDR")],
        any::<u32>(),
        1u32..12,
        1u64..5_000,
        (1u32..=32, 1u32..=32),
        any::<bool>(),
        1u64..200_000,
        prop_oneof![Just("cbr"), Just("poisson"), Just("none")],
        0.0f64..1.0,
        prop::collection::vec((0u64..100_000, 1u32..4, any::<bool>()), 0..4),
    )
        .prop_map(|(proto, seed, nodes, stop, (a, b), adaptive, t_pi, pattern, cv, script)| {
            let script: Vec<String> = script
                .iter()
                .map(|(t, n, u)| format!("{t}:{}:{}", n.min(&nodes), if *u { "urgent" } else { "normal" }))
                .collect();
            format!(
                "# generated\nprotocol = {proto}\nseed = {seed}\nnodes = {nodes}\nstop_delivered = {stop}\n\
                 cw_max = {}\ncw_urgent = {}\ncw_urgent_adaptive = {adaptive}\nt_pi_ms = {}\n\
                 urgent_pattern = {pattern}\ncv_threshold = {:.3}\nscript = {}\n",
                a.max(b),
                a.min(b),
                t_pi as f64 / 1000.0,
                cv + 0.01,
                script.join(";"),
            )
        })
}

proptest! {
    #[test]
    fn echo_round_trips(text in config_text()) {
        let cfg = SimConfig::parse_str(&text, "gen").unwrap();
        let echoed = cfg.echo();
        let again = SimConfig::parse_str(&echoed, "echo").unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(echoed, again.echo());
    }
}

#[test]
fn echo_lists_every_key_once() {
    let echo = SimConfig::default().echo();
    let keys: Vec<&str> = echo.lines().map(|l| l.split(" = ").next().unwrap()).collect();
    assert_eq!(keys.len(), KEYS.len());
    for (k, _) in KEYS {
        assert_eq!(keys.iter().filter(|x| *x == k).count(), 1, "{k}");
    }
}

#[test]
fn config_errors_name_the_line() {
    let err = SimConfig::parse_str("seed = 1\n\n# ok\nbogus = 3\n", "x.cfg").unwrap_err().to_string();
    assert!(err.starts_with("x.cfg:4:"), "{err}");
    assert!(err.contains("bogus"), "{err}");
    let err = SimConfig::parse_str("seed 1\n", "y.cfg").unwrap_err().to_string();
    assert!(err.starts_with("y.cfg:1:"), "{err}");
    let err = SimConfig::parse_str("t_pi_ms = -3\n", "z.cfg").unwrap_err().to_string();
    assert!(err.contains("t_pi_ms"), "{err}");
}

fn write_cfg(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn simulate_writes_results_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seed = 3\nstop_delivered = 25\n");
    let out = dir.path().join("out");
    run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).args([
        "--seeds",
        "2",
        "--intervals",
        "5,10",
        "--protocols",
        "ADP,ADP2",
        "--parallel",
        "2",
    ]));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[0].starts_with("protocol,"));
    assert!(lines[1..].iter().all(|l| l.contains(",ok,")));

    let echo = fs::read_to_string(out.join("config.echo")).unwrap();
    assert!(echo.contains("stop_delivered = 25"));

    for p in ["ADP", "ADP2"] {
        for pr in ["urgent", "normal"] {
            for m in ["energy", "delay"] {
                let tsv = fs::read_to_string(out.join("series").join(format!("{p}_{pr}_{m}.tsv"))).unwrap();
                let rows: Vec<&str> = tsv.lines().collect();
                assert_eq!(rows[0], "interval_s\tmean\tmin\tmax");
                assert_eq!(rows.len(), 3, "{p} {pr} {m}: {tsv}");
            }
        }
    }

    // plotdata rebuilds the same series from the CSV
    let again = dir.path().join("again");
    run(bin().args(["plotdata", "--csv"]).arg(out.join("results.csv")).arg("--out").arg(&again));
    let a = fs::read(out.join("series/ADP2_urgent_delay.tsv")).unwrap();
    let b = fs::read(again.join("series/ADP2_urgent_delay.tsv")).unwrap();
    assert_eq!(a, b);

    // resume keeps finished rows and adds the missing seed
    run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out).args([
        "--seeds",
        "3",
        "--intervals",
        "5,10",
        "--protocols",
        "ADP,ADP2",
        "--resume",
    ]));
    let resumed = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(resumed.lines().count(), 1 + 2 * 2 * 3);
    for l in &lines[1..] {
        assert!(resumed.contains(l), "lost row {l}");
    }
}

#[test]
fn simulate_rejects_unknown_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "seed = 1\nbananas = 2\n");
    let out = bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(":2:") && err.contains("bananas"), "{err}");
}

#[test]
fn trace_prints_tab_separated_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "protocol = ADP\nnodes = 1\nurgent_pattern = none\nnormal_pattern = none\ncw_max = 1\ncw_urgent = 1\n\
         script = 0:1:normal\nstop_delivered = 1\n",
    );
    let arrivals = dir.path().join("arrivals.csv");
    let out = run(bin().args(["trace", "--config"]).arg(&cfg).arg("--frames").arg("--arrivals").arg(&arrivals));
    let text = String::from_utf8(out.stdout).unwrap();
    let frames: Vec<Vec<&str>> =
        text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split('\t').collect()).collect();
    assert_eq!(frames[0], ["time_us", "kind", "src", "dst", "priority", "outcome"]);
    let kinds: Vec<&str> = frames[1..].iter().map(|f| f[1]).collect();
    // the run stops on the delivery itself, before the ack goes out
    assert_eq!(kinds, ["STROBE", "EA", "DATA"]);
    assert_eq!(frames[1][0], "7000");
    assert!(frames.iter().all(|f| f.len() == 6));

    let csv = fs::read_to_string(&arrivals).unwrap();
    assert_eq!(csv.lines().collect::<Vec<_>>(), ["time_us,node,priority,packet_id", "0,1,normal,0"]);
}
