//! Text and machine-readable rendering of reports.

use std::path::Path;

use clap::ValueEnum;

use deltapack::codec::RatioEntry;
use deltapack::harness::RetentionRow;
use deltapack::pipeline::{CompressedDelta, RatioReport, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    JsonLines,
}

pub fn print_compress_line(
    format: &Format,
    archive: &CompressedDelta,
    report: &RatioReport,
    path: &Path,
) {
    match format {
        Format::Text => {
            let task = &archive.manifest.task;
            println!(
                "{}: gamma {:.4}, overall sparsity {:.4}, {:.4} bits/param ({:.1}x) -> {}",
                task.name,
                task.gamma,
                task.overall_sparsity,
                report.realized_bits_per_parameter,
                report.realized_ratio,
                path.display()
            );
        }
        Format::JsonLines => {
            let line = serde_json::json!({
                "task": archive.manifest.task.name,
                "archive": path.display().to_string(),
                "gamma": archive.manifest.task.gamma,
                "overall_sparsity": archive.manifest.task.overall_sparsity,
                "realized_bits_per_parameter": report.realized_bits_per_parameter,
                "realized_ratio": report.realized_ratio,
            });
            println!("{line}");
        }
    }
}

pub fn print_stats(format: &Format, report: &RatioReport) {
    match format {
        Format::Text => {
            println!(
                "task {}  gamma {:.4}  overall sparsity {:.4}  value bits {}",
                report.task, report.gamma, report.overall_sparsity, report.value_bits
            );
            if let Some(t) = &report.theoretical {
                println!(
                    "theoretical: H_geo {:.4}  H_comp {:.4} bits/param  CR {:.1}x  index-free {:.1}x",
                    t.h_geo, t.h_comp, t.compression_ratio, t.index_free_ratio
                );
            }
            println!(
                "realized:    {:.4} bits/param  CR {:.1}x",
                report.realized_bits_per_parameter, report.realized_ratio
            );
            println!("re-encoded under each scheme:");
            for m in &report.schemes {
                println!(
                    "  {:10} {:.4} bits/param  {:.1}x",
                    m.scheme.as_str(),
                    m.bits_per_parameter,
                    m.compression_ratio
                );
            }
            println!(
                "{:<24} {:>10} {:>12} {:>6} {:>9} {:>9} {:>10}",
                "layer", "params", "variance", "group", "sparsity", "density", "bits/param"
            );
            for l in &report.layers {
                println!(
                    "{:<24} {:>10} {:>12.3e} {:>6} {:>9.4} {:>9.4} {:>10.4}",
                    l.name,
                    l.count,
                    l.variance,
                    format!("{:?}", l.group).to_lowercase(),
                    l.sparsity,
                    l.realized_density,
                    l.bits_per_parameter
                );
            }
        }
        Format::JsonLines => {
            println!("{}", serde_json::to_string(report).expect("serializable"));
        }
    }
}

pub fn print_verify(format: &Format, report: &VerifyReport) {
    match format {
        Format::Text => {
            for c in &report.checks {
                println!(
                    "[{}] {:<26} {:<24} {}",
                    if c.passed { "pass" } else { "FAIL" },
                    c.check,
                    c.layer.as_deref().unwrap_or("-"),
                    c.detail
                );
            }
            println!(
                "verify {}: {}",
                report.task,
                if report.passed { "PASS" } else { "FAIL" }
            );
        }
        Format::JsonLines => {
            for c in &report.checks {
                println!("{}", serde_json::to_string(c).expect("serializable"));
            }
            let line = serde_json::json!({ "task": report.task, "passed": report.passed });
            println!("{line}");
        }
    }
}

pub fn print_ratio(format: &Format, entries: &[RatioEntry]) {
    match format {
        Format::Text => {
            println!(
                "{:>9} {:>5} {:>9} {:>9} {:>8} {:>12} {:>12}",
                "sparsity", "bits", "H_geo", "H_comp", "CR", "idx-free b/p", "idx-free CR"
            );
            for e in entries {
                println!(
                    "{:>9.4} {:>5} {:>9.4} {:>9.4} {:>7.1}x {:>12.4} {:>11.1}x",
                    e.sparsity,
                    e.value_bits,
                    e.h_geo,
                    e.h_comp,
                    e.compression_ratio,
                    e.index_free_bits,
                    e.index_free_ratio
                );
            }
        }
        Format::JsonLines => {
            for e in entries {
                println!("{}", serde_json::to_string(e).expect("serializable"));
            }
        }
    }
}

pub fn print_retention(format: &Format, rows: &[RetentionRow]) {
    match format {
        Format::Text => {
            println!(
                "{:>9} {:>6} {:>9} {:>10} {:>12} {:>9} {:>8}",
                "sparsity", "bits", "baseline", "acc(orig)", "acc(compr)", "gap(pts)", "ratio"
            );
            for r in rows {
                println!(
                    "{:>9.4} {:>6} {:>9} {:>10.4} {:>12.4} {:>9.2} {:>7.1}x",
                    r.sparsity,
                    r.bits.map_or("none".to_string(), |b| b.to_string()),
                    if r.single_group { "yes" } else { "no" },
                    r.accuracy_original,
                    r.accuracy_compressed,
                    r.retention_gap * 100.0,
                    r.realized_compression_ratio
                );
            }
        }
        Format::JsonLines => {
            for r in rows {
                println!("{}", serde_json::to_string(r).expect("serializable"));
            }
        }
    }
}
