use std::path::{Path, PathBuf};

use qosgrid_core::{dump_scenario, load_scenario, parse_scenario, run, PolicyId, Scenario};

fn shipped() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

#[test]
fn shipped_scenarios_round_trip() {
    let files = shipped();
    assert!(files.len() >= 2);
    for path in files {
        let s = load_scenario(&path).unwrap();
        let again = parse_scenario(&dump_scenario(&s), &path).unwrap();
        assert_eq!(s, again, "{}", path.display());
    }
}

#[test]
fn every_policy_finishes_shipped_workloads() {
    for path in shipped() {
        let s = load_scenario(&path).unwrap();
        for policy in PolicyId::ALL {
            let m = run(&Scenario { policy, ..s.clone() }).unwrap();
            assert!(m.all_completed(), "{} under {policy}", path.display());
            assert!(m.end_time <= s.horizon);
            let attempts: u64 = m.nodes.iter().map(|n| n.attempts).sum();
            let tasks: usize = s.jobs.iter().map(|j| j.tasks.len()).sum();
            assert!(attempts >= tasks as u64);
        }
    }
}
