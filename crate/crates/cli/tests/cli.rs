use std::process::{Command, Output};

use markov_oftrl::game::toy_game;
use markov_oftrl_cli::gamefile::save_game;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_markov-oftrl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn checkpoints(csv: &str) -> Vec<usize> {
    let mut out: Vec<usize> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap().parse().unwrap())
        .collect();
    out.dedup();
    out
}

#[test]
fn ce_run_reports_power_of_two_checkpoints() {
    let o = bin(&["run", "--game", "toy", "--algo", "ce_smooth", "--T", "4096", "--eta", "0.2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = stdout(&o);
    assert_eq!(csv.lines().next().unwrap(), "algo,game,eta_mode,eta,T_checkpoint,player,metric,value");
    let expected: Vec<usize> = (0..=12).map(|k| 1 << k).collect();
    assert_eq!(checkpoints(&csv), expected);
    for metric in ["gap_exact", "gap_upper", "gap_lower", "gap_reported", "gap_times_T"] {
        assert!(csv.contains(&format!(",max,{metric},")), "missing {metric}");
    }
    // Certified values are per player only.
    assert!(csv.contains(",2,value_certified,") && !csv.contains(",max,value_certified,"));
    assert!(csv.lines().nth(1).unwrap().starts_with("ce_smooth,toy,constant,0.2,1,1,"));
}

#[test]
fn stage_run_summary_lists_boundaries() {
    let o = bin(&["run", "--algo", "cce_stage", "--T", "16", "--eta", "theory"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("stage ends: 2, 5, 9, 15, 16"), "{}", stderr(&o));
    assert!(!stdout(&o).contains("gap_exact"));
}

#[test]
fn zero_iterations_is_a_usage_error() {
    let o = bin(&["run", "--algo", "ce_smooth", "--T", "0"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("T must be at least 1"), "{}", stderr(&o));
    let o = bin(&["run", "--algo", "nope", "--T", "4"]);
    assert!(!o.status.success());
    let o = bin(&["run", "--algo", "ce_smooth", "--T", "4", "--eta", "-1"]);
    assert!(!o.status.success());
}

#[test]
fn game_file_and_out_path() {
    let dir = tempfile::tempdir().unwrap();
    let game = dir.path().join("toy.json");
    std::fs::write(&game, save_game(&toy_game())).unwrap();
    let out = dir.path().join("run.csv");
    let args = ["--algo", "cce_smooth", "--T", "32", "--checkpoints", "8,32", "--diagnostics"];
    let o = bin(&[&["run", "--game", game.to_str().unwrap(), "--out", out.to_str().unwrap()][..], &args].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());
    let from_file = std::fs::read_to_string(&out).unwrap();
    assert_eq!(checkpoints(&from_file), [8, 32]);
    assert!(from_file.contains(",swapreg_max,"));

    // Same game, built in: identical rows apart from the game column.
    let o = bin(&[&["run", "--game", "toy"][..], &args].concat());
    let builtin = stdout(&o);
    let strip = |csv: &str| -> Vec<String> {
        csv.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(1);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip(&from_file), strip(&builtin));
}

#[test]
fn broken_game_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\"players\": 2}").unwrap();
    let o = bin(&["run", "--game", path.to_str().unwrap(), "--algo", "ce_smooth", "--T", "4"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad.json"), "{}", stderr(&o));
    let o = bin(&["run", "--game", "/nonexistent/game.json", "--algo", "ce_smooth", "--T", "4"]);
    assert!(!o.status.success());
}

#[test]
fn accept_subset() {
    let o = bin(&["accept", "--only", "schedules"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2, "{out}");
    assert!(lines[0].starts_with("PASS schedules"));
    assert!(!bin(&["accept", "--only", "unknown"]).status.success());
    let listed = stdout(&bin(&["accept", "--list"]));
    assert!(listed.lines().any(|l| l.starts_with("oracle")));
}
