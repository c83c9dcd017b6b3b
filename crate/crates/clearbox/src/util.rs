//! Small filesystem and subprocess helpers shared across modules.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

/// Write through a temp file in the target directory and rename over the
/// destination, so interrupted runs never leave partial files behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".clearbox-tmp-")
        .tempfile_in(dir)?;
    std::io::Write::write_all(&mut tmp, bytes)?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Process-wide cap on concurrent external subprocesses, on top of the
/// image-level worker count. 0 means uncapped.
static EXTERNAL_PROC_LIMIT: Mutex<usize> = Mutex::new(0);
static EXTERNAL_PROCS_RUNNING: Mutex<usize> = Mutex::new(0);
static EXTERNAL_PROC_FREED: Condvar = Condvar::new();

/// Set the subprocess cap for subsequent external stages and detector
/// commands (0 = uncapped).
pub fn set_external_process_limit(limit: usize) {
    *EXTERNAL_PROC_LIMIT.lock().unwrap() = limit;
}

struct ProcSlot;

impl ProcSlot {
    fn acquire() -> Option<ProcSlot> {
        let limit = *EXTERNAL_PROC_LIMIT.lock().unwrap();
        if limit == 0 {
            return None;
        }
        let mut running = EXTERNAL_PROCS_RUNNING.lock().unwrap();
        while *running >= limit {
            running = EXTERNAL_PROC_FREED.wait(running).unwrap();
        }
        *running += 1;
        Some(ProcSlot)
    }
}

impl Drop for ProcSlot {
    fn drop(&mut self) {
        *EXTERNAL_PROCS_RUNNING.lock().unwrap() -= 1;
        EXTERNAL_PROC_FREED.notify_one();
    }
}

/// Run a shell command, killing it at the deadline. The caller's
/// environment passes through unchanged; `extra_env` adds to it.
pub(crate) fn run_shell_with_timeout(
    cmd: &str,
    timeout: Duration,
    extra_env: &[(&str, &str)],
) -> Result<()> {
    let _slot = ProcSlot::acquire();
    let mut command = Command::new("sh");
    command.arg("-c").arg(cmd);
    for (key, value) in extra_env {
        command.env(key, value);
    }
    let mut child = command
        .spawn()
        .map_err(|e| Error::External(format!("failed to spawn {cmd:?}: {e}")))?;
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                if status.success() {
                    return Ok(());
                }
                return Err(Error::External(format!("{cmd:?} exited with {status}")));
            }
            Ok(None) => {
                if Instant::now() >= deadline {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::External(format!(
                        "{cmd:?} timed out after {}s",
                        timeout.as_secs()
                    )));
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(Error::External(format!("wait on {cmd:?} failed: {e}"))),
        }
    }
}
