//! Acceptance run for the service contract: one PASS/FAIL line.
//!
//! Built with `harness = false` so the report is always printed; exits
//! non-zero on failure.

mod common;

use std::process::ExitCode;
use std::time::Duration;

use common::service::*;
use common::*;

fn replay_check(rt: &tokio::runtime::Runtime) -> Result<String, String> {
    let (_a, first) = fresh_bundle();
    let (_b, second) = fresh_bundle();
    let recorded = rt.block_on(replay(&first));
    let replayed = rt.block_on(replay(&second));
    let script = session(&first);
    if recorded.len() != replayed.len() {
        return Err(format!("{} recorded vs {} replayed responses", recorded.len(), replayed.len()));
    }
    for (i, (a, b)) in recorded.iter().zip(&replayed).enumerate() {
        if a != b {
            return Err(format!("{} {} differs on replay", script[i].0, script[i].1));
        }
    }
    let writes = recorded.iter().filter(|(s, _)| s.as_u16() == 201).count();
    let rejected = recorded.iter().filter(|(s, _)| s.is_client_error()).count();
    Ok(format!("{} requests, {writes} writes, {rejected} rejections identical", recorded.len()))
}

fn crash_check() -> Result<String, String> {
    let (_d, root) = fresh_bundle();
    let rounds = 3;
    crash_and_recover(&root, rounds)?;
    Ok(format!("{rounds} crashes after append, no record lost or duplicated"))
}

fn latency_check(rt: &tokio::runtime::Runtime) -> Result<String, String> {
    let (_d, root) = fresh_bundle();
    inflate(&root, 5000);
    let app = app(&root);
    let times = rt.block_on(search_latencies(&app, 300))?;
    let p95 = percentile(&times, 95);
    let line = format!("5000-candidate search p50 {:.2?}, p95 {p95:.2?}", percentile(&times, 50));
    if p95 < Duration::from_millis(100) {
        Ok(line)
    } else {
        Err(line)
    }
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let results = [replay_check(&rt), crash_check(), latency_check(&rt)];
    let ok = results.iter().all(Result::is_ok);
    let notes: Vec<&str> = results.iter().filter_map(|r| r.as_ref().ok().map(String::as_str)).collect();
    println!("{} service contract ({})", if ok { "PASS" } else { "FAIL" }, notes.join("; "));
    for e in results.iter().filter_map(|r| r.as_ref().err()) {
        println!("    failed: {e}");
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
