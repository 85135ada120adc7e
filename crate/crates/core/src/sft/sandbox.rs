//! Execution-based verification of code candidates. The host side spawns a
//! runner process per candidate and reads back exactly one verdict line.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Candidate, CandidateSet, SftError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictStatus {
    Pass,
    Fail,
    Timeout,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SandboxVerdict {
    pub status: VerdictStatus,
    pub tests_run: u32,
    pub tests_passed: u32,
    pub duration_ms: u64,
    pub stderr_tail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxLimits {
    pub time_limit_ms: u64,
    #[serde(default)]
    pub memory_limit_mb: Option<u64>,
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            time_limit_ms: 10_000,
            memory_limit_mb: None,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum VerdictWireError {
    #[error("runner printed no verdict")]
    Empty,
    #[error("runner printed {0} lines; expected exactly one verdict line")]
    ExtraOutput(usize),
    #[error("malformed verdict: {0}")]
    Malformed(String),
    #[error("inconsistent verdict: {0}")]
    Inconsistent(&'static str),
}

/// Parses runner stdout. It must hold exactly one line, a JSON object with
/// exactly the verdict fields, and the fields must agree with each other.
pub fn parse_verdict_wire(
    stdout: &str,
    time_limit_ms: Option<u64>,
) -> Result<SandboxVerdict, VerdictWireError> {
    let lines: Vec<&str> = stdout.lines().filter(|l| !l.trim().is_empty()).collect();
    let line = match lines.as_slice() {
        [] => return Err(VerdictWireError::Empty),
        [one] => one.trim(),
        many => return Err(VerdictWireError::ExtraOutput(many.len())),
    };
    let v: SandboxVerdict =
        serde_json::from_str(line).map_err(|e| VerdictWireError::Malformed(e.to_string()))?;
    if v.tests_passed > v.tests_run {
        return Err(VerdictWireError::Inconsistent("tests_passed exceeds tests_run"));
    }
    let all_passed = v.tests_run > 0 && v.tests_passed == v.tests_run;
    if (v.status == VerdictStatus::Pass) != all_passed {
        return Err(VerdictWireError::Inconsistent(
            "status pass must coincide with all of at least one test passing",
        ));
    }
    if let (VerdictStatus::Timeout, Some(limit)) = (v.status, time_limit_ms) {
        if v.duration_ms < limit {
            return Err(VerdictWireError::Inconsistent("timeout reported before the limit"));
        }
    }
    Ok(v)
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("failed to start runner {program:?}: {source}")]
    Spawn {
        program: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("sandbox i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("runner failed with {status}: {stderr}")]
    Harness { status: String, stderr: String },
    #[error(transparent)]
    Wire(#[from] VerdictWireError),
}

pub trait SandboxExecutor: Send + Sync {
    fn run(&self, code: &str, tests: &str, limits: &SandboxLimits) -> Result<SandboxVerdict, SandboxError>;
}

impl<F> SandboxExecutor for F
where
    F: Fn(&str, &str, &SandboxLimits) -> Result<SandboxVerdict, SandboxError> + Send + Sync,
{
    fn run(&self, code: &str, tests: &str, limits: &SandboxLimits) -> Result<SandboxVerdict, SandboxError> {
        self(code, tests, limits)
    }
}

/// Spawns `<command...> <code_path> <tests_path> --time-limit-ms N
/// [--memory-limit-mb M]` in a fresh temporary directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessExecutor {
    /// Program followed by fixed leading arguments, e.g. `["python3", "runner.py"]`.
    pub command: Vec<String>,
    /// Extra wall-clock allowance before the host kills a runner that
    /// ignores its own limit.
    #[serde(default = "default_grace_ms")]
    pub grace_ms: u64,
}

fn default_grace_ms() -> u64 {
    5_000
}

fn tail(s: &str, max: usize) -> String {
    let start = s.len().saturating_sub(max);
    let start = (start..=s.len()).find(|&i| s.is_char_boundary(i)).unwrap_or(s.len());
    s[start..].to_string()
}

impl ProcessExecutor {
    pub fn new<I, S>(command: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ProcessExecutor {
            command: command.into_iter().map(Into::into).collect(),
            grace_ms: default_grace_ms(),
        }
    }
}

impl SandboxExecutor for ProcessExecutor {
    fn run(&self, code: &str, tests: &str, limits: &SandboxLimits) -> Result<SandboxVerdict, SandboxError> {
        let (program, lead) = self.command.split_first().ok_or_else(|| SandboxError::Spawn {
            program: PathBuf::new(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty runner command"),
        })?;
        let dir = tempfile::Builder::new().prefix("curate-sbx-").tempdir()?;
        let code_path = dir.path().join("candidate.py");
        let tests_path = dir.path().join("tests.py");
        std::fs::write(&code_path, code)?;
        std::fs::write(&tests_path, tests)?;

        let mut cmd = Command::new(program);
        cmd.args(lead)
            .arg(&code_path)
            .arg(&tests_path)
            .arg("--time-limit-ms")
            .arg(limits.time_limit_ms.to_string());
        if let Some(mb) = limits.memory_limit_mb {
            cmd.arg("--memory-limit-mb").arg(mb.to_string());
        }
        // Own process group, so the watchdog can take down anything the
        // runner spawned along with it.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
        let mut child = cmd
            .current_dir(dir.path())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|source| SandboxError::Spawn {
                program: program.into(),
                source,
            })?;

        let mut out = child.stdout.take().expect("piped");
        let mut err = child.stderr.take().expect("piped");
        let out_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = out.read_to_string(&mut s);
            s
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = err.read_to_string(&mut s);
            s
        });

        let start = Instant::now();
        let deadline = Duration::from_millis(limits.time_limit_ms + self.grace_ms);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break Some(status);
            }
            if start.elapsed() > deadline {
                kill_group(&child);
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        match status {
            None => Ok(SandboxVerdict {
                status: VerdictStatus::Timeout,
                tests_run: 0,
                tests_passed: 0,
                duration_ms: start.elapsed().as_millis() as u64,
                stderr_tail: tail(&format!("{stderr}\nrunner killed by host watchdog"), 2000),
            }),
            Some(s) if !s.success() => Err(SandboxError::Harness {
                status: s.to_string(),
                stderr: tail(&stderr, 2000),
            }),
            Some(_) => Ok(parse_verdict_wire(&stdout, Some(limits.time_limit_ms))?),
        }
    }
}

#[cfg(unix)]
fn kill_group(child: &std::process::Child) {
    // SAFETY: plain syscall on a process group we created; failure is harmless.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
}

#[cfg(not(unix))]
fn kill_group(_: &std::process::Child) {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeRejection {
    pub kept: Vec<Candidate>,
    pub kept_indices: Vec<usize>,
    /// One per candidate, in candidate order.
    pub verdicts: Vec<SandboxVerdict>,
}

/// Keeps candidates whose verdict is `pass`. Runs execute in parallel; a
/// runner that cannot be started or breaks protocol is an error, not a
/// candidate failure.
pub fn rejection_sample_code(
    cands: &CandidateSet,
    tests: &str,
    executor: &dyn SandboxExecutor,
    limits: &SandboxLimits,
) -> Result<CodeRejection, SftError> {
    let verdicts = cands
        .candidates
        .par_iter()
        .map(|c| executor.run(&c.text, tests, limits))
        .collect::<Result<Vec<_>, _>>()?;
    let kept_indices: Vec<usize> = verdicts
        .iter()
        .enumerate()
        .filter(|(_, v)| v.status == VerdictStatus::Pass)
        .map(|(i, _)| i)
        .collect();
    Ok(CodeRejection {
        kept: kept_indices.iter().map(|&i| cands.candidates[i].clone()).collect(),
        kept_indices,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(status: &str, run: u32, passed: u32, ms: u64) -> String {
        format!(
            r#"{{"status":"{status}","tests_run":{run},"tests_passed":{passed},"duration_ms":{ms},"stderr_tail":""}}"#
        )
    }

    #[test]
    fn strict_wire_parsing() {
        assert_eq!(parse_verdict_wire(&line("pass", 3, 3, 12), None).unwrap().tests_passed, 3);
        assert_eq!(
            parse_verdict_wire(&format!("\n{}\n", line("fail", 3, 1, 5)), None).unwrap().status,
            VerdictStatus::Fail
        );
        assert_eq!(parse_verdict_wire("", None), Err(VerdictWireError::Empty));
        let two = format!("hello\n{}", line("pass", 1, 1, 1));
        assert_eq!(parse_verdict_wire(&two, None), Err(VerdictWireError::ExtraOutput(2)));
        assert!(matches!(
            parse_verdict_wire(r#"{"status":"pass","tests_run":1,"tests_passed":1,"duration_ms":1}"#, None),
            Err(VerdictWireError::Malformed(_))
        ));
        let extra = r#"{"status":"pass","tests_run":1,"tests_passed":1,"duration_ms":1,"stderr_tail":"","x":1}"#;
        assert!(matches!(parse_verdict_wire(extra, None), Err(VerdictWireError::Malformed(_))));
        assert!(matches!(
            parse_verdict_wire(&line("skipped", 1, 1, 1), None),
            Err(VerdictWireError::Malformed(_))
        ));
        assert!(matches!(parse_verdict_wire(&line("pass", 0, 0, 1), None), Err(VerdictWireError::Inconsistent(_))));
        assert!(matches!(parse_verdict_wire(&line("fail", 2, 2, 1), None), Err(VerdictWireError::Inconsistent(_))));
        assert!(matches!(parse_verdict_wire(&line("fail", 2, 3, 1), None), Err(VerdictWireError::Inconsistent(_))));
        assert!(matches!(
            parse_verdict_wire(&line("timeout", 0, 0, 900), Some(1000)),
            Err(VerdictWireError::Inconsistent(_))
        ));
        assert!(parse_verdict_wire(&line("timeout", 0, 0, 1000), Some(1000)).is_ok());
    }

    fn set(texts: &[&str]) -> CandidateSet {
        CandidateSet {
            instruction_id: "p".into(),
            candidates: texts
                .iter()
                .map(|t| Candidate {
                    text: t.to_string(),
                    ..Candidate::default()
                })
                .collect(),
            rewards: None,
        }
    }

    /// Pretends "sleep" never finishes and "raise2" fails from test 2 on.
    fn mock(code: &str, _tests: &str, limits: &SandboxLimits) -> Result<SandboxVerdict, SandboxError> {
        let v = |status, passed, ms| SandboxVerdict {
            status,
            tests_run: 3,
            tests_passed: passed,
            duration_ms: ms,
            stderr_tail: String::new(),
        };
        Ok(match code {
            "sleep" => SandboxVerdict {
                tests_run: 0,
                ..v(VerdictStatus::Timeout, 0, limits.time_limit_ms)
            },
            "raise2" => v(VerdictStatus::Fail, 1, 3),
            _ => v(VerdictStatus::Pass, 3, 2),
        })
    }

    #[test]
    fn keeps_only_passing() {
        let r = rejection_sample_code(
            &set(&["good", "sleep", "raise2", "good too"]),
            "tests",
            &mock,
            &SandboxLimits::default(),
        )
        .unwrap();
        assert_eq!(r.kept_indices, [0, 3]);
        assert_eq!(r.verdicts[1].status, VerdictStatus::Timeout);
        assert_eq!(r.verdicts[2].tests_passed, 1);
    }

    #[test]
    fn spawn_failure_is_an_error() {
        let exec = ProcessExecutor::new(["/nonexistent/runner"]);
        let e = rejection_sample_code(&set(&["x"]), "t", &exec, &SandboxLimits::default()).unwrap_err();
        assert!(matches!(e, SftError::Sandbox(SandboxError::Spawn { .. })));
    }

    #[test]
    fn tail_respects_char_boundaries() {
        assert_eq!(tail("héllo", 4), "llo");
        assert_eq!(tail("ab", 10), "ab");
    }
}
