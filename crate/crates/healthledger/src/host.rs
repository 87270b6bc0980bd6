//! Process-level resource gauges. They describe the machine running the
//! simulation, not the simulated nodes, and are not comparable across hosts.

use std::fs;

use serde::Serialize;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HostGauges {
    pub peak_rss_kib: Option<u64>,
    pub cpu_time_ns: Option<u64>,
    pub comparable_across_machines: bool,
}

/// Reads Linux procfs; fields are `None` where it is unavailable.
pub fn sample() -> HostGauges {
    HostGauges { peak_rss_kib: peak_rss_kib(), cpu_time_ns: cpu_time_ns(), comparable_across_machines: false }
}

fn peak_rss_kib() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

/// CPU time summed over the process's live threads.
fn cpu_time_ns() -> Option<u64> {
    let mut total = 0u64;
    for task in fs::read_dir("/proc/self/task").ok()?.flatten() {
        let sched = fs::read_to_string(task.path().join("schedstat")).ok()?;
        total += sched.split_whitespace().next()?.parse::<u64>().ok()?;
    }
    Some(total)
}
