#![allow(dead_code)]

use std::path::PathBuf;
use std::process::{Command, Output};

use eccola_deploy::scenario;

pub struct Workdir {
    pub dir: tempfile::TempDir,
}

impl Workdir {
    /// A temporary directory holding the reference CSV files.
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("round0.csv"), scenario::ROUND0_CSV).unwrap();
        std::fs::write(dir.path().join("round1.csv"), scenario::ROUND1_CSV).unwrap();
        std::fs::write(dir.path().join("scores.csv"), scenario::SCORES_CSV).unwrap();
        Workdir { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn session(&self) -> PathBuf {
        self.path("session.json")
    }

    /// Runs `eccola --session <session.json> <args>` inside the directory.
    pub fn eccola(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_eccola"))
            .current_dir(self.dir.path())
            .arg("--session")
            .arg(self.session())
            .args(args)
            .output()
            .unwrap()
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Setup steps up to an open round 0 with four registered stakeholders.
pub fn setup_steps() -> Vec<Vec<&'static str>> {
    let mut steps = vec![vec!["init", "--session-id", "demo", "--facilitator", "fac"]];
    for (id, name, role) in [
        ("s1", "Ana", "product manager"),
        ("s2", "Ben", "developer"),
        ("s3", "Chi", "compliance"),
        ("s4", "Dee", "corporate risk management"),
    ] {
        steps.push(vec!["add-stakeholder", "--id", id, "--name", name, "--role", role]);
    }
    steps.push(vec!["open-round"]);
    steps
}

/// The full walkthrough from `init` to a `sufficient` verdict.
pub fn walkthrough_steps() -> Vec<Vec<&'static str>> {
    let mut steps = setup_steps();
    steps.extend([
        vec!["import-allocations", "--round", "0", "--csv", "round0.csv"],
        vec!["close-round", "--round", "0"],
        vec!["picture", "--kind", "target", "--format", "svg", "--out", "target.svg"],
        vec!["trigger", "register", "--id", "ai-act", "--description", "AI act obligations", "--category", "regulation"],
        vec!["sprint", "--id", "sprint-1", "--cards", "8,12", "--justification", "data pipeline hardening"],
        vec!["trigger", "fire", "--id", "ai-act"],
        vec!["open-round", "--trigger", "ai-act"],
        vec!["import-allocations", "--round", "1", "--csv", "round1.csv"],
        vec!["close-round", "--round", "1"],
        vec!["begin-assessment"],
        vec!["import-scores", "--csv", "scores.csv"],
        vec!["picture", "--kind", "outcome", "--format", "svg", "--out", "chart.svg"],
        vec!["delta"],
        vec!["verdict", "--outcome", "sufficient", "--rationale", "coverage targets met"],
        vec!["status"],
        vec!["audit"],
    ]);
    steps
}

