//! Batch runs over a directory: one CSV row per program and memory model.
//!
//! Workers take (file, model) jobs from a shared counter and each runs the
//! whole pipeline on its own; rows travel over a channel to the single
//! thread that owns the CSV writer, so they appear in completion order.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use anyhow::Context;
use wmbmc_core::check::{analyse, check_analysis, CheckConfig};
use wmbmc_core::frontend::parse;
use wmbmc_core::memmodel::MemoryModel;
use wmbmc_core::solve::Backend;
use wmbmc_sat::{exploration_efficacy, Efficacy};

use crate::{timeout, BenchArgs, Failure, EXIT_SAFE};

pub const HEADER: [&str; 11] = [
    "file",
    "mm",
    "verdict",
    "time_s",
    "k_events",
    "match_vars",
    "clauses",
    "decisions",
    "propagations",
    "conflicts",
    "rho",
];

fn programs(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("cannot read directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "litmus"))
        .collect();
    files.sort();
    Ok(files)
}

/// One row, or `None` when the file cannot be read or parsed (reported on
/// stderr and skipped).
fn run_one(path: &Path, name: &str, mm: MemoryModel, base: &CheckConfig) -> Option<Vec<String>> {
    let src = match std::fs::read_to_string(path) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("skipping {name}: {e}");
            return None;
        }
    };
    let ast = match parse(&src) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("skipping {name}: {e}");
            return None;
        }
    };
    let cfg = CheckConfig { mm, ..base.clone() };
    let start = std::time::Instant::now();
    let outcome = analyse(&ast, &cfg).and_then(|a| Ok((check_analysis(&a, &cfg)?, a)));
    let time = format!("{:.6}", start.elapsed().as_secs_f64());
    let mut row = vec![name.to_string(), mm.to_string()];
    match outcome {
        Ok((report, analysis)) => {
            row.push(report.verdict.to_string());
            row.push(time);
            row.push(analysis.ssa.k().to_string());
            row.push(analysis.matches.pairs.len().to_string());
            row.push(report.encoding.map_or(0, |e| e.clauses).to_string());
            match &report.solve {
                Some(s) => {
                    row.push(s.decisions.to_string());
                    row.push(s.propagations.to_string());
                    row.push(s.conflicts.to_string());
                    row.push(match exploration_efficacy(s) {
                        // full precision, so the ratio can be recomputed exactly
                        Efficacy::Ratio(r) => format!("{r}"),
                        Efficacy::Undefined => "NA".into(),
                    });
                }
                None => row.extend(["0", "0", "0", "NA"].map(String::from)),
            }
        }
        Err(e) => {
            eprintln!("{name} under {mm}: {e}");
            row.push("ERROR".into());
            row.push(time);
            row.extend(["", "", "", "", "", "", ""].map(String::from));
        }
    }
    Some(row)
}

pub fn run(args: BenchArgs) -> Result<u8, Failure> {
    let files = programs(&args.dir)?;
    let base = CheckConfig {
        mm: MemoryModel::Sc,
        unwind: args.unwind,
        value_bits: args.value_bits,
        timeout: timeout(args.timeout)?,
        backend: Backend::Internal,
        seed: args.seed,
    };
    let jobs: Vec<(PathBuf, MemoryModel)> =
        files.iter().flat_map(|f| args.mm.iter().map(move |&mm| (f.clone(), mm))).collect();
    let mut writer = csv::Writer::from_path(&args.csv).with_context(|| format!("cannot write {}", args.csv.display()))?;
    writer.write_record(HEADER)?;

    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Vec<String>>();
    let written = std::thread::scope(|scope| -> anyhow::Result<usize> {
        for _ in 0..args.jobs.max(1) {
            let tx = tx.clone();
            let (next, jobs, base) = (&next, &jobs, &base);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((path, mm)) = jobs.get(i) else { break };
                let name = path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into());
                if let Some(row) = run_one(path, &name, *mm, base) {
                    if tx.send(row).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);
        let mut n = 0;
        for row in rx {
            writer.write_record(&row)?;
            writer.flush()?;
            n += 1;
        }
        Ok(n)
    })?;
    writer.flush()?;
    eprintln!("{written} rows written to {}", args.csv.display());
    Ok(EXIT_SAFE)
}
