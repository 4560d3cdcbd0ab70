use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use super::runner::{PlanResult, PointResult};
use super::HarnessError;
use crate::timestats::Histogram;

pub const NO_CHANNEL_HEADING: &str = "No timing covert channel detected";

/// Human-readable duration for ns values (`10 ms`, `10 µs`, `1500 ns`).
pub(crate) fn fmt_ns(ns: u64) -> String {
    const UNITS: [(u64, &str); 3] = [(1_000_000_000, "s"), (1_000_000, "ms"), (1_000, "µs")];
    for (scale, unit) in UNITS {
        if ns >= scale && ns.is_multiple_of(scale) {
            return format!("{} {unit}", ns / scale);
        }
    }
    format!("{ns} ns")
}

fn fmt_p(p: f64) -> String {
    if p == 0.0 || p == 1.0 {
        format!("{p}")
    } else {
        format!("{p:.3e}")
    }
}

/// Smallest tested enforced switch duration at and above which no complete
/// grid point is feasible, or `None` when no channel was found or no tested
/// padding closes it.
pub fn mitigation(result: &PlanResult) -> Option<u64> {
    result.feasible_points().next()?;
    let durations: BTreeSet<u64> = result.points.iter().map(|p| p.point.switch_duration).collect();
    durations.into_iter().find(|&d| {
        result
            .points
            .iter()
            .filter(|p| p.point.switch_duration >= d)
            .all(|p| p.feasible() == Some(false))
    })
}

pub fn render_report(result: &PlanResult) -> String {
    let mut out = String::new();
    let complete = result.points.iter().filter(|p| p.is_complete()).count();
    let feasible: Vec<&PointResult> = result.feasible_points().collect();

    let _ = writeln!(out, "# Timing covert channel assessment\n");
    let _ = writeln!(out, "- plan digest: `{}`", result.plan_digest);
    let _ = writeln!(out, "- toolkit version: {}", result.toolkit_version);
    let _ = writeln!(
        out,
        "- grid points: {} ({} assessed), {} repetitions each, alpha = {}",
        result.points.len(),
        complete,
        result.repetitions,
        result.alpha
    );
    let _ = writeln!(
        out,
        "- runs: {} executed, {} reused, {} failed",
        result.executed_runs,
        result.reused_runs,
        result.failed_runs.len()
    );
    if result.partial {
        let _ = writeln!(
            out,
            "- status: PARTIAL, {} grid point(s) incomplete",
            result.points.len() - complete
        );
    } else {
        let _ = writeln!(out, "- status: complete");
    }

    let _ = writeln!(out, "\n## Findings\n");
    if feasible.is_empty() {
        let _ = writeln!(out, "### {NO_CHANNEL_HEADING}\n");
        let _ = writeln!(
            out,
            "No assessed grid point showed a statistically significant difference between \
             runs with and without the attack (alpha = {}).",
            result.alpha
        );
    } else {
        let _ = writeln!(
            out,
            "A timing covert channel is feasible at {} of {} assessed grid point(s):\n",
            feasible.len(),
            complete
        );
        for p in &feasible {
            let g = &p.point;
            let v = p.verdict.as_ref().expect("feasible implies a verdict");
            let _ = writeln!(
                out,
                "- switch duration {}, tick frequency {}/s, {} benign board(s), N = {}: \
                 mean shift {:.1} ticks, max p = {}",
                fmt_ns(g.switch_duration),
                g.tick_frequency,
                g.benign_boards,
                g.speed_exponent,
                v.mean_shift_ticks,
                fmt_p(v.max_p())
            );
        }
        let _ = writeln!(out);
        match mitigation(result) {
            Some(d) => {
                let _ = writeln!(
                    out,
                    "**Mitigation:** enforce a context switch duration of at least {} ({d} ns); \
                     no tested configuration at or above this padding leaks.",
                    fmt_ns(d)
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "**Mitigation:** no tested switch duration closes the channel; test longer padding."
                );
            }
        }
    }

    let _ = writeln!(out, "\n## Grid\n");
    let _ = writeln!(
        out,
        "| # | switch duration | tick freq | benign | N | feasible | reproducible | min p | max p | mean shift (ticks) |"
    );
    let _ = writeln!(out, "|---|---|---|---|---|---|---|---|---|---|");
    for p in &result.points {
        let g = &p.point;
        let cols = match &p.verdict {
            Some(v) => format!(
                "{} | {} | {} | {} | {:.1}",
                if v.feasible { "**yes**" } else { "no" },
                if v.reproducible { "yes" } else { "no" },
                fmt_p(v.min_p()),
                fmt_p(v.max_p()),
                v.mean_shift_ticks
            ),
            None => "INCOMPLETE | | | | ".to_string(),
        };
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {cols} |",
            g.index,
            fmt_ns(g.switch_duration),
            g.tick_frequency,
            g.benign_boards,
            g.speed_exponent
        );
    }

    let incomplete: Vec<&PointResult> = result.points.iter().filter(|p| !p.is_complete()).collect();
    if !incomplete.is_empty() {
        let _ = writeln!(out, "\n## Incomplete grid points\n");
        for p in incomplete {
            let _ = writeln!(out, "- `{}`: {}", p.point.key(), p.errors.join("; "));
        }
    }
    let _ = writeln!(
        out,
        "\nHistogram data per grid point: `histograms/<point>.csv` (columns bin_lo, bin_hi, without, with)."
    );
    out
}

/// Plot-ready histogram of a point's pooled no-attack and attack deltas over
/// a shared range. `None` when the point has no samples at all.
pub fn histogram_csv(point: &PointResult, bins: usize) -> Option<String> {
    let without: Vec<u64> = point.without_attack.iter().flat_map(|t| t.deltas()).collect();
    let with: Vec<u64> = point.with_attack.iter().flat_map(|t| t.deltas()).collect();
    let all = without.iter().chain(&with);
    let lo = *all.clone().min()?;
    let hi = *all.max()?;
    let h0 = Histogram::with_range(&without, bins, lo, hi);
    let h1 = Histogram::with_range(&with, bins, lo, hi);
    let mut out = String::from("bin_lo,bin_hi,without,with\n");
    for i in 0..h0.counts.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            h0.edges[i],
            h0.edges[i + 1],
            h0.counts[i],
            h1.counts[i]
        );
    }
    Some(out)
}

/// Writes `report.md` and the histogram files into `dir`.
pub fn write_report(result: &PlanResult, dir: &Path, bins: usize) -> Result<(), HarnessError> {
    let hist_dir = dir.join(super::store::HISTOGRAM_DIR);
    std::fs::create_dir_all(&hist_dir).map_err(|e| HarnessError::io(&hist_dir, e))?;
    for p in &result.points {
        if let Some(csv) = histogram_csv(p, bins) {
            let path = hist_dir.join(format!("{}.csv", p.point.key()));
            std::fs::write(&path, csv).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    let path = dir.join(super::store::REPORT);
    std::fs::write(&path, render_report(result)).map_err(|e| HarnessError::io(&path, e))
}
