use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};

use mscv::data::{load_dataset, save_manifest, Dataset, Payload};
use mscv::experiments::config::synth_spec_from_table;
use mscv::experiments::report::load_results;
use mscv::experiments::{emit_reports, run, summarize, ExperimentConfig};
use mscv::harmonize::{deduplicate, drop_unlabeled, map_dataset, merge_dataset, MappingTable};
use mscv::synth::generate_to_dir;
use mscv::tables::{validate_against_reference, ReferenceCounts};
use mscv::{Error, ErrorKind};

#[derive(Parser)]
#[command(name = "mscv", version, about = "Cross-validation reliability on multi-source data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol described by a TOML config and write reports.
    Run {
        config: PathBuf,
        /// Report directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Load a manifest and every payload it references; print per-source counts.
    Validate {
        manifest: PathBuf,
        /// Compare label counts with a reference table (`builtin` for the shipped one).
        #[arg(long)]
        reference: Option<String>,
    },
    /// Generate a synthetic dataset from a TOML spec (or `preset = "..."`).
    Gen {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a summary of a results.json; optionally re-emit its CSV reports.
    Report {
        results: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Map labels to SNOMED CT, drop unlabeled records and exact duplicates.
    Harmonize {
        manifest: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
        /// Mapping table CSV; the shipped table is used otherwise.
        #[arg(long)]
        mapping: Option<PathBuf>,
        /// Labels are already SNOMED CT codes; apply merge rules only.
        #[arg(long)]
        snomed: bool,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.kind() {
        ErrorKind::Config => 2,
        ErrorKind::Data | ErrorKind::Io => 3,
        ErrorKind::Internal => 1,
    }
}

/// Failures reading a config file count as config errors.
fn as_config(e: Error) -> Error {
    match e {
        Error::Io { .. } | Error::Manifest { .. } => Error::Config(e.to_string()),
        other => other,
    }
}

fn cmd_run(config: &Path, out: Option<PathBuf>) -> mscv::Result<()> {
    let cfg = ExperimentConfig::load(config).map_err(as_config)?;
    let outdir = out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("results"));
    info!("running {} (seed {})", cfg.protocol.name(), cfg.seed);
    let result = run(&cfg)?;
    for w in &result.warnings {
        warn!("{w}");
    }
    let files = emit_reports(&result, &outdir)?;
    print!("{}", summarize(&result));
    println!("wrote {} files to {}", files.len(), outdir.display());
    Ok(())
}

fn cmd_validate(manifest: &Path, reference: Option<String>) -> mscv::Result<()> {
    let ds = load_dataset(manifest)?;
    println!("{} records, {} labels, {} sources", ds.len(), ds.label_space().len(), ds.sources().len());
    let counts = ds.label_counts_by_source();
    for (src, n) in ds.sources().counts() {
        let positives: usize = counts.get(src).map_or(0, |c| c.values().sum());
        println!("  {src}: {n} records, {positives} label assignments");
    }
    if let Some(r) = reference {
        let reference = if r == "builtin" { ReferenceCounts::builtin() } else { ReferenceCounts::load(&r)? };
        let report = validate_against_reference(&ds, &reference);
        if report.is_clean() {
            println!("label counts match the reference");
        } else {
            for d in &report.diffs {
                println!("  count differs: {} in {}: expected {}, observed {}", d.label, d.source, d.expected, d.observed);
            }
            for s in &report.missing_sources {
                println!("  reference source missing from data: {s}");
            }
            for s in &report.extra_sources {
                println!("  source not in reference: {s}");
            }
        }
    }
    Ok(())
}

fn cmd_gen(config: &Path, out: &Path) -> mscv::Result<()> {
    let text = std::fs::read_to_string(config).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", config.display())))?;
    let spec = synth_spec_from_table(table, 0)?;
    let manifest = generate_to_dir(&spec, out)?;
    println!("wrote {} records to {}", spec.total_records(), manifest.display());
    Ok(())
}

fn cmd_report(results: &Path, out: Option<PathBuf>) -> mscv::Result<()> {
    let result = load_results(results)?;
    print!("{}", summarize(&result));
    if let Some(out) = out {
        let files = emit_reports(&result, &out)?;
        println!("wrote {} files to {}", files.len(), out.display());
    }
    Ok(())
}

/// Payload paths become absolute so the new manifest can live anywhere.
fn absolute_payloads(ds: &Dataset) -> mscv::Result<Dataset> {
    let absolute = |p: &Path| {
        let p = ds.resolve(p);
        std::path::absolute(&p).map_err(|e| Error::io(p, e))
    };
    let records = ds
        .records()
        .iter()
        .map(|r| {
            let mut r = r.clone();
            match &mut r.payload {
                Payload::Signal(s) => s.path = absolute(&s.path)?,
                Payload::Features { path: Some(p), .. } => *p = absolute(p)?,
                Payload::Features { path: None, .. } => {}
            }
            Ok(r)
        })
        .collect::<mscv::Result<_>>()?;
    ds.with_records(records)
}

fn cmd_harmonize(manifest: &Path, out: &Path, mapping: Option<PathBuf>, snomed: bool) -> mscv::Result<()> {
    let table = match mapping {
        Some(p) => MappingTable::load(p).map_err(as_config)?,
        None => MappingTable::default_table(),
    };
    let ds = load_dataset(manifest)?;
    let mapped = if snomed {
        merge_dataset(&ds, &table)?
    } else {
        let (mapped, report) = map_dataset(&ds, &table)?;
        for (code, n) in &report.unmapped {
            warn!("unmapped code `{code}` on {n} records");
        }
        mapped
    };
    let (labeled, dropped) = drop_unlabeled(&mapped)?;
    let (deduped, dups) = deduplicate(&labeled)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_manifest(&absolute_payloads(&deduped)?, out)?;
    println!(
        "{} records in, {} without labels dropped, {} exact duplicates removed, {} metadata-only duplicates kept; {} written to {}",
        ds.len(),
        dropped,
        dups.exact_duplicates(),
        dups.metadata_only(),
        deduped.len(),
        out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out),
        Command::Validate { manifest, reference } => cmd_validate(&manifest, reference),
        Command::Gen { config, out } => cmd_gen(&config, &out),
        Command::Report { results, out } => cmd_report(&results, out),
        Command::Harmonize { manifest, out, mapping, snomed } => cmd_harmonize(&manifest, &out, mapping, snomed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
