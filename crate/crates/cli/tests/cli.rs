use std::path::Path;
use std::process::{Command, Output};

fn irrisim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irrisim"))
        .args(args)
        .output()
        .unwrap()
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn default_simulation_commands_alternate() {
    let tmp = tempfile::tempdir().unwrap();
    let out = irrisim(&["simulate", "--out", out_arg(tmp.path())]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cmds = read(tmp.path().join("commands.csv"));
    let actions: Vec<&str> = cmds
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert!(actions.len() >= 4);
    assert_eq!(actions[0], "OPEN");
    assert!(actions.windows(2).all(|w| w[0] != w[1]));
    for f in [
        "events.csv",
        "events.bin",
        "rates.csv",
        "calibration.txt",
        "network.toml",
        "energy.txt",
        "manifest.toml",
    ] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let bin = std::fs::metadata(tmp.path().join("events.bin"))
        .unwrap()
        .len();
    let csv_rows = read(tmp.path().join("events.csv")).lines().count() as u64 - 1;
    assert_eq!(bin, 12 * csv_rows);
}

#[test]
fn empty_series_succeeds_with_empty_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("empty.csv");
    std::fs::write(&input, "timestamp_iso8601,smp_kpa\n").unwrap();
    let out_dir = tmp.path().join("o");
    let out = irrisim(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_arg(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read(out_dir.join("commands.csv")), "t_iso8601,action\n");
    assert_eq!(read(out_dir.join("events.csv")), "neuron_id,t_us\n");
}

#[test]
fn bad_csv_is_a_data_error_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("bad.csv");
    std::fs::write(
        &input,
        "timestamp_iso8601,smp_kpa\n2023-07-01T00:00:00Z,-40\n2023-07-01T00:15:00Z,oops\n",
    )
    .unwrap();
    let out = irrisim(&[
        "simulate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out_arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.csv:3:"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(
        irrisim(&["simulate", "--no-such-flag"]).status.code(),
        Some(1)
    );
    assert_eq!(irrisim(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(irrisim(&["synth", "--crop", "pear"]).status.code(), Some(1));
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        irrisim(&["synth", "--stride", "0", "--out", out_arg(tmp.path())])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(irrisim(&["--help"]).status.code(), Some(0));
}

#[test]
fn fi_curves_are_monotone_with_disjoint_bands() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(
        irrisim(&["fi-curve", "--out", out_arg(tmp.path())])
            .status
            .code(),
        Some(0)
    );
    let mut onsets = Vec::new();
    for b in 0..3 {
        let text = read(tmp.path().join(format!("fi_enc{b}.csv")));
        let rows: Vec<(f64, f64)> = text
            .lines()
            .skip(1)
            .map(|l| {
                let (a, r) = l.split_once(',').unwrap();
                (a.parse().unwrap(), r.parse().unwrap())
            })
            .collect();
        assert_eq!(rows[0], (0.0, 0.0));
        assert!(
            rows.windows(2).all(|w| w[1].1 >= w[0].1),
            "enc{b} not monotone"
        );
        onsets.push(rows.iter().find(|r| r.1 > 10.0).unwrap().0);
    }
    assert!(onsets[0] < onsets[1] && onsets[1] < onsets[2], "{onsets:?}");
}

#[test]
fn self_comparison_has_zero_latency() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    assert_eq!(
        irrisim(&["synth", "--seed", "2", "--out", out_arg(&s)])
            .status
            .code(),
        Some(0)
    );
    let e = tmp.path().join("e");
    let input = s.join("smp.csv");
    let out = irrisim(&[
        "evaluate",
        "--input",
        input.to_str().unwrap(),
        "--self-compare",
        "--out",
        out_arg(&e),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let summary = read(e.join("eval_summary.txt"));
    assert!(
        summary.contains("missed = 0") && summary.contains("latency_max = 0"),
        "{summary}"
    );

    let missing = tmp.path().join("nope.csv");
    let out = irrisim(&[
        "evaluate",
        "--input",
        input.to_str().unwrap(),
        "--commands",
        missing.to_str().unwrap(),
        "--out",
        out_arg(&e),
    ]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn power_of_empty_log_is_zero_and_budget_is_split() {
    let tmp = tempfile::tempdir().unwrap();
    let events = tmp.path().join("events.csv");
    std::fs::write(&events, "neuron_id,t_us\n").unwrap();
    let net = tmp.path().join("net.toml");
    std::fs::write(&net, "").unwrap();
    let o = tmp.path().join("o");
    let out = irrisim(&[
        "power",
        "--events",
        events.to_str().unwrap(),
        "--network",
        net.to_str().unwrap(),
        "--out",
        out_arg(&o),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(read(o.join("energy.txt")).contains("energy_uwh = 0.000000000"));
    let budget = read(o.join("budget.csv"));
    assert!(budget.starts_with("window,duration_s,spikes,energy_pj,energy_uwh\nresting,"));
    assert!(budget.contains("\nactive,") && budget.contains("\ntotal,"));
}

#[test]
fn energy_constants_can_be_overridden() {
    let tmp = tempfile::tempdir().unwrap();
    let out = irrisim(&[
        "power",
        "--e-pulse",
        "0",
        "--e-br",
        "0",
        "--out",
        out_arg(tmp.path()),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let manifest = read(tmp.path().join("manifest.toml"));
    assert!(manifest.contains("e_pulse_pj = 0") && manifest.contains("e_br_pj = 0"));
}

#[test]
fn divergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    assert_eq!(
        irrisim(&["simulate", "--out", out_arg(&a)]).status.code(),
        Some(0)
    );
    // unbounded positive feedback with a threshold above the divergence cap
    let mut n = 0;
    let cfg: String = read(a.join("manifest.toml"))
        .lines()
        .map(|l| {
            if l.starts_with("i_spike_threshold") {
                n += 1;
                if n >= 2 {
                    return "i_spike_threshold = 1e7\ni_a = 3.0".to_string();
                }
            }
            if n >= 1 && l.starts_with("i_a =") && l != "i_a = 0.0" {
                return String::new();
            }
            l.to_string()
        })
        .collect::<Vec<_>>()
        .join("\n");
    let path = tmp.path().join("div.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = irrisim(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out_arg(&tmp.path().join("b")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn large_seeds_survive_the_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let seed = u64::MAX.to_string();
    assert_eq!(
        irrisim(&["synth", "--seed", &seed, "--out", out_arg(&a)])
            .status
            .code(),
        Some(0)
    );
    let b = tmp.path().join("b");
    let m = a.join("manifest.toml");
    assert_eq!(
        irrisim(&[
            "synth",
            "--config",
            m.to_str().unwrap(),
            "--out",
            out_arg(&b)
        ])
        .status
        .code(),
        Some(0)
    );
    assert_eq!(read(a.join("smp.csv")), read(b.join("smp.csv")));
    assert_eq!(read(a.join("manifest.toml")), read(b.join("manifest.toml")));
}

#[test]
fn custom_crop_comes_from_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(
        &cfg,
        "crop = \"custom\"\n[profile]\nname = \"citrus\"\nth_on = -40.0\nth_off = -20.0\nsmp_floor = -100.0\nsmp_ceil = 0.0\n",
    )
    .unwrap();
    let out = irrisim(&[
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_arg(tmp.path()),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(read(tmp.path().join("manifest.toml")).contains("name = \"citrus\""));
}
