use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gmil::commands;
use gmil::config::{parse_fold_mode, RunConfig};
use gmil::graph::GraphKind;
use gmil::{Error, ErrorClass};

/// Graph-based multiple instance learning on patch-feature slides.
#[derive(Parser)]
#[command(name = "gmil", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-center dataset.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build one graph per slide and dump edge lists and node features.
    BuildGraphs {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// bag, patch, region-local, region-global or centroid.
        #[arg(long)]
        graph: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate the configured model.
    Cv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// shuffled or by-center; overrides cv.mode.
        #[arg(long)]
        fold_mode: Option<String>,
        /// Train an intervention head after each fold.
        #[arg(long)]
        with_intervention: bool,
        /// Fit region-global clustering on every slide, test folds included.
        #[arg(long)]
        allow_global_fit: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the attention heatmap of one slide as CSV and PGM.
    Heatmap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        slide: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cluster bag embeddings and report their purity against slide labels.
    Purity {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print every configuration key with its default.
    ConfigKeys,
}

fn run(command: Command) -> gmil::Result<()> {
    match command {
        Command::Synth { config, out } => {
            let m = commands::cmd_synth(&RunConfig::load(config)?, &out)?;
            println!("wrote {} slides to {}", m.len(), out.display());
        }
        Command::BuildGraphs { config, manifest, graph, out } => {
            let kind: GraphKind = graph.parse()?;
            let n = commands::cmd_build_graphs(&RunConfig::load(config)?, &manifest, kind, &out)?;
            println!("wrote {n} {kind} graphs to {}", out.display());
        }
        Command::Cv { config, manifest, fold_mode, with_intervention, allow_global_fit, out } => {
            let mut cfg = RunConfig::load(config)?;
            if let Some(mode) = fold_mode {
                cfg.fold_mode = parse_fold_mode(&mode)?;
            }
            cfg.with_intervention |= with_intervention;
            cfg.allow_global_fit |= allow_global_fit;
            let report = commands::cmd_cv(&cfg, &manifest, &out)?;
            print!("{}", report.table());
        }
        Command::Heatmap { config, checkpoint, slide, out } => {
            let h = commands::cmd_heatmap(&RunConfig::load(config)?, &checkpoint, &slide, &out)?;
            println!("wrote {}x{} heatmap to {}", h.height, h.width, out.display());
        }
        Command::Purity { config, checkpoint, manifest, k, out } => {
            let r = commands::cmd_purity(&RunConfig::load(config)?, &checkpoint, &manifest, k, &out)?;
            print!("{}", r.to_text());
        }
        Command::ConfigKeys => print!("{}", RunConfig::reference()),
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Data => 2,
        ErrorClass::Internal => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments");
            eprintln!("gmil: {}", line.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gmil: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
