#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

pub fn alice() -> Command {
    Command::new(env!("CARGO_BIN_EXE_alice"))
}

pub fn run_alice(args: &[&str]) -> Output {
    alice().args(args).output().expect("spawn alice")
}

pub fn synth(out: &Path, extra: &[&str]) {
    let mut args = vec!["synth-gen", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run_alice(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

/// `alice serve` on an ephemeral port.
pub struct Served {
    child: Child,
    pub base: String,
    agent: ureq::Agent,
}

impl Served {
    pub fn spawn(data_dir: &Path, dataset_root: Option<&Path>) -> Self {
        let mut cmd = alice();
        cmd.args(["serve", "--bind", "127.0.0.1:0", "--data-dir", data_dir.to_str().unwrap()]);
        if let Some(root) = dataset_root {
            cmd.args(["--dataset-root", root.to_str().unwrap()]);
        }
        let mut child = cmd.stdout(Stdio::piped()).stderr(Stdio::null()).spawn().expect("spawn alice serve");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let base = line.trim().strip_prefix("listening on ").expect("listening banner").to_string();
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self { child, base, agent }
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        let mut resp = self.agent.get(&format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body.to_string())
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }

    /// SIGKILL, no graceful shutdown.
    pub fn crash(mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

impl Drop for Served {
    fn drop(&mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}
