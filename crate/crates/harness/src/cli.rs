//! The `vantage` command line: scene generation, mapping, dataset
//! generation, training, evaluation, and report rendering. Every stage
//! re-derives its world state from the master seed, so stages compose
//! without passing scene files between them.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use vantage_learn::Arch;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::evaluate::{evaluate, write_report, write_timing};
use crate::gen::gen_split;
use crate::manifest::RunManifest;
use crate::report::{render, render_to_file, ReportFormat};
use crate::seeds::Split;
use crate::training::{arch_name, build_corpus, train_arch};
use crate::world::{build_bundle, scene_id};

/// Default master seed for every stage when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 7240;

#[derive(Debug, Parser)]
#[command(
    name = "vantage",
    version,
    about = "Active viewpoint selection benchmark: synthetic scenes, a PnP \
             localization oracle, and policy evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration JSON; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; every stream in every stage derives from it.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Run directory where artifacts are written.
    #[arg(long, default_value = "runs/default")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn splits(self) -> Vec<Split> {
        match self {
            SplitArg::Train => vec![Split::Train],
            SplitArg::Test => vec![Split::Test],
            SplitArg::All => vec![Split::Train, Split::Test],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    Mlp,
    Vpt,
    All,
}

impl ArchArg {
    fn archs(self) -> Vec<Arch> {
        match self {
            ArchArg::Mlp => vec![Arch::Mlp],
            ArchArg::Vpt => vec![Arch::Vpt],
            ArchArg::All => vec![Arch::Mlp, Arch::Vpt],
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one procedural scene and write its JSON description.
    GenScene {
        #[command(flatten)]
        common: Common,
        /// Which split the scene belongs to.
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        /// Scene index within the split.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Run the head-height mapping pass over a scene and write the
    /// landmark map.
    Map {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SplitArg::Train)]
        split: SplitArg,
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Sweep every waypoint's candidate views through the localization
    /// oracle and write dataset shards.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Which split(s) to generate.
        #[arg(long, value_enum, default_value_t = SplitArg::All)]
        split: SplitArg,
    },
    /// Train viewpoint scorers on the generated train split.
    Train {
        #[command(flatten)]
        common: Common,
        /// Which architecture(s) to train.
        #[arg(long, value_enum, default_value_t = ArchArg::All)]
        arch: ArchArg,
    },
    /// Evaluate the configured policies on the test scenes and write the
    /// evaluation report.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Render a previously computed evaluation report.
    Report {
        #[command(flatten)]
        common: Common,
        /// Output format: markdown, csv, or json.
        #[arg(long, default_value = "markdown")]
        format: String,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::GenScene { common, .. }
            | Command::Map { common, .. }
            | Command::GenData { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common }
            | Command::Report { common, .. } => common,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::GenScene { .. } => "gen-scene",
            Command::Map { .. } => "map",
            Command::GenData { .. } => "gen-data",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Report { .. } => "report",
        }
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn single_split(arg: SplitArg, stage: &str) -> Result<Split> {
    match arg {
        SplitArg::Train => Ok(Split::Train),
        SplitArg::Test => Ok(Split::Test),
        SplitArg::All => Err(HarnessError::InvalidConfig(format!(
            "{stage} works on one scene; pass --split train or --split test"
        ))),
    }
}

fn check_index(cfg: &ExperimentConfig, split: Split, index: usize) -> Result<()> {
    let count = match split {
        Split::Train => cfg.train_scene_count,
        Split::Test => cfg.test_scene_count,
    };
    if index >= count {
        return Err(HarnessError::InvalidConfig(format!(
            "scene index {index} out of range: the {split} split has {count} scenes"
        )));
    }
    Ok(())
}

fn write_artifact(out_dir: &Path, rel: &str, text: String) -> Result<String> {
    let path = out_dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(rel.to_string())
}

fn relative_to(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

/// Execute one parsed command. Returns the list of artifacts written
/// (relative to the run directory), which also lands in the manifest.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let common = cli.command.common();
    let cfg = load_config(common)?;
    let master = common.seed;
    let out = common.out.clone();
    std::fs::create_dir_all(&out)?;

    let mut artifacts: Vec<String> = Vec::new();
    match &cli.command {
        Command::GenScene { split, index, .. } => {
            let split = single_split(*split, "gen-scene")?;
            check_index(&cfg, split, *index)?;
            let seed = crate::seeds::scene_seed(master, split, *index);
            let scene = vantage_core::scene::gen_scene(&cfg.scene, seed)?;
            let id = scene_id(split, *index);
            let rel = format!("scenes/{id}.scene.json");
            artifacts.push(write_artifact(&out, &rel, scene.to_json()?)?);
            println!(
                "scene {id}: {} landmarks, {} occluders -> {rel}",
                scene.landmarks.len(),
                scene.occluders.len()
            );
        }
        Command::Map { split, index, .. } => {
            let split = single_split(*split, "map")?;
            check_index(&cfg, split, *index)?;
            let bundle = build_bundle(&cfg, master, split, *index)?;
            let scene_rel = format!("scenes/{}.scene.json", bundle.id);
            let map_rel = format!("scenes/{}.map.json", bundle.id);
            artifacts.push(write_artifact(&out, &scene_rel, bundle.scene.to_json()?)?);
            artifacts.push(write_artifact(&out, &map_rel, bundle.map.to_json()?)?);
            println!(
                "scene {}: mapped {} of {} landmarks over {} mapping poses -> {map_rel}",
                bundle.id,
                bundle.map.landmarks.len(),
                bundle.scene.landmarks.len(),
                bundle.map.mapping_poses.len()
            );
        }
        Command::GenData { split, .. } => {
            let data_dir = out.join("data");
            for split in split.splits() {
                let outcomes = gen_split(&cfg, master, split, &data_dir)?;
                let reused = outcomes.iter().filter(|o| o.reused).count();
                let records: u64 = outcomes.iter().map(|o| o.meta.record_count).sum();
                println!(
                    "{split}: {} shards ({reused} reused), {records} records",
                    outcomes.len()
                );
                for o in &outcomes {
                    artifacts.push(format!("data/{split}/{}", o.meta.data_file));
                    artifacts.push(format!("data/{split}/{}.json", o.meta.scene_id));
                }
            }
        }
        Command::Train { arch, .. } => {
            let corpus = build_corpus(&cfg, master, &out.join("data"))?;
            println!(
                "corpus: {} balanced examples ({} positive)",
                corpus.labels.len(),
                corpus.labels.iter().filter(|&&l| l).count()
            );
            for arch in arch.archs() {
                let (path, report) = train_arch(&cfg, master, arch, &corpus, &out)?;
                println!(
                    "{}: best val accuracy {:.4} at epoch {} ({} train / {} val) -> {}",
                    arch_name(arch),
                    report.best_val_accuracy,
                    report.best_epoch,
                    report.n_train,
                    report.n_val,
                    relative_to(&path, &out)
                );
                artifacts.push(relative_to(&path, &out));
                artifacts.push(format!("models/{}_train_report.json", arch_name(arch)));
            }
        }
        Command::Eval { .. } => {
            let report = evaluate(&cfg, master, &out)?;
            let report_path = write_report(&report, &out)?;
            let timing_path = write_timing(&report, &out)?;
            artifacts.push(relative_to(&report_path, &out));
            artifacts.push(relative_to(&timing_path, &out));
            println!("{}", render(&report, ReportFormat::Markdown)?);
        }
        Command::Report { format, .. } => {
            let format: ReportFormat = format.parse()?;
            let report_path = out.join("eval_report.json");
            let text = std::fs::read_to_string(&report_path).map_err(|_| {
                HarnessError::InvalidConfig(format!(
                    "no evaluation report at {}; run eval first",
                    report_path.display()
                ))
            })?;
            let report: crate::evaluate::EvalReport = serde_json::from_str(&text)?;
            if report.config_hash != cfg.hash() {
                return Err(HarnessError::InvalidConfig(
                    "the stored report was produced with a different config".into(),
                ));
            }
            let path = render_to_file(&report, format, &out)?;
            artifacts.push(relative_to(&path, &out));
            print!("{}", render(&report, format)?);
        }
    }

    let manifest = RunManifest::new(cli.command.name(), master, cfg.hash(), artifacts.clone());
    manifest.save(&out)?;
    Ok(artifacts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_the_documented_surface() {
        let cli = Cli::parse_from([
            "vantage", "gen-data", "--config", "c.json", "--seed", "9", "--out", "runs/x",
            "--split", "train",
        ]);
        assert_eq!(cli.command.name(), "gen-data");
        assert_eq!(cli.command.common().seed, 9);
        assert_eq!(cli.command.common().out, PathBuf::from("runs/x"));

        let cli = Cli::parse_from(["vantage", "train", "--arch", "vpt"]);
        match cli.command {
            Command::Train { arch, .. } => assert_eq!(arch, ArchArg::Vpt),
            other => panic!("parsed {other:?}"),
        }
        assert_eq!(cli.command.common().seed, DEFAULT_SEED);

        let cli = Cli::parse_from(["vantage", "report", "--format", "csv"]);
        match cli.command {
            Command::Report { ref format, .. } => assert_eq!(format, "csv"),
            ref other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn gen_scene_rejects_out_of_range_index_and_all_split() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cli = Cli::parse_from([
            "vantage", "gen-scene", "--out", out.to_str().unwrap(), "--index", "99",
        ]);
        assert!(matches!(run(&cli), Err(HarnessError::InvalidConfig(_))));
        let cli = Cli::parse_from([
            "vantage", "gen-scene", "--out", out.to_str().unwrap(), "--split", "all",
        ]);
        assert!(matches!(run(&cli), Err(HarnessError::InvalidConfig(_))));
    }

    #[test]
    fn missing_config_file_is_a_config_error() {
        let cli = Cli::parse_from(["vantage", "eval", "--config", "/nonexistent/cfg.json"]);
        let err = run(&cli).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
