use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use gridsynth::config::Config;
use gridsynth::ingest::{generate_scenario, load_scenario, write_scenario, GenerateOptions, RoadStyle, Scenario, ScenarioPaths};
use gridsynth::mapping::LinkAssignment;
use gridsynth::partition::augment;
use gridsynth::pipeline::{self as pl, Artifacts, PartitionArtifact};
use gridsynth::powerflow::compare;
use gridsynth::secondary::SecondaryNetwork;
use gridsynth::{Error, Result};

#[derive(Parser)]
#[command(name = "gridsynth", version, about = "Synthesize radial distribution networks from road, substation and residence data")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Directory holding roads.csv, substations.csv and residences.csv.
    #[arg(long)]
    scenario: PathBuf,
    /// Run directory for stage artifacts.
    #[arg(long)]
    out: PathBuf,
    /// TOML file of settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a setting, e.g. `--set lambda=30`. Repeatable; wins over
    /// the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn load(&self) -> Result<(Scenario, Config, Artifacts)> {
        let cfg = Config::load(self.config.as_deref(), &self.overrides)?;
        let scenario = load_scenario(&ScenarioPaths::in_dir(&self.scenario))?;
        Ok((scenario, cfg, Artifacts::new(&self.out)?))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic scenario.
    GenScenario {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n_res: usize,
        #[arg(long, default_value_t = 3)]
        n_sub: usize,
        #[arg(long, default_value_t = 2.0)]
        extent_km: f64,
        #[arg(long, default_value = "grid")]
        style: RoadStyle,
        #[arg(long)]
        grid_k: Option<usize>,
    },
    /// Map residences to their nearest road link.
    Map(Common),
    /// Solve the secondary network of every link.
    Secondary(Common),
    /// Voronoi cells and communities on the augmented road graph.
    Partition(Common),
    /// Solve every community's primary network and stitch the result.
    Primary(Common),
    /// Power flow on the stitched network.
    Powerflow(Common),
    /// All stages in order.
    Pipeline(Common),
    /// Compare residence voltages of two network GeoJSON files.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Report file; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenScenario {
            out,
            seed,
            n_res,
            n_sub,
            extent_km,
            style,
            grid_k,
        } => {
            let opts = GenerateOptions {
                seed,
                n_res,
                n_sub,
                extent_km,
                style,
                grid_k,
                ..GenerateOptions::default()
            };
            let s = generate_scenario(&opts)?;
            std::fs::create_dir_all(&out)?;
            write_scenario(&s, &ScenarioPaths::in_dir(&out))?;
            info!("wrote {} residences, {} links to {}", s.residences.len(), s.roads.links.len(), out.display());
        }
        Cmd::Map(c) => {
            let (s, cfg, art) = c.load()?;
            pl::write_mapping(&art, &pl::stage_map(&s, &cfg)?)?;
        }
        Cmd::Secondary(c) => {
            let (s, cfg, art) = c.load()?;
            let a: LinkAssignment = art.read_json(Artifacts::MAPPING)?;
            art.write_json(Artifacts::SECONDARY, &pl::stage_secondary(&s, &a, &cfg)?)?;
        }
        Cmd::Partition(c) => {
            let (s, cfg, art) = c.load()?;
            let sec: Vec<SecondaryNetwork> = art.read_json(Artifacts::SECONDARY)?;
            let (g, p) = pl::stage_partition(&s, &sec, &cfg)?;
            pl::write_partition(&art, &g, &p)?;
        }
        Cmd::Primary(c) => {
            let (s, cfg, art) = c.load()?;
            let sec: Vec<SecondaryNetwork> = art.read_json(Artifacts::SECONDARY)?;
            let pa: PartitionArtifact = art.read_json(Artifacts::PARTITION)?;
            if pa.graph != augment(&s.roads, &sec)? {
                return Err(Error::Validation("partition artifact does not match the secondary networks".into()));
            }
            let (sols, net) = pl::stage_primary(&s, &sec, &pa.graph, &pa.partition, &cfg)?;
            art.write_json(Artifacts::PRIMARY, &sols)?;
            pl::write_network(&art, &net)?;
        }
        Cmd::Powerflow(c) => {
            let cfg = Config::load(c.config.as_deref(), &c.overrides)?;
            let art = Artifacts::new(&c.out)?;
            let mut net = pl::read_network(&art.path(Artifacts::NETWORK))?;
            let (sol, rep) = pl::stage_powerflow(&mut net, &cfg)?;
            pl::write_powerflow(&art, &net, &sol, &rep)?;
            pl::write_network(&art, &net)?;
            report(&rep);
        }
        Cmd::Pipeline(c) => {
            let (s, cfg, art) = c.load()?;
            let out = pl::run_and_write(&s, &cfg, &art)?;
            report(&out.report);
        }
        Cmd::Compare { a, b, out } => {
            let rep = compare(&pl::read_network(&a)?, &pl::read_network(&b)?)?;
            let text = serde_json::to_string_pretty(&rep)?;
            match out {
                Some(p) => write_text(&p, &text)?,
                None => print_stdout(&text)?,
            }
        }
    }
    Ok(())
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    Ok(std::fs::write(p, text)?)
}

/// Prints to stdout, treating a closed pipe (`| head`) as success.
fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn report(rep: &gridsynth::powerflow::OperationalReport) {
    println!(
        "voltage {:.4}..{:.4} pu, max loading {:.3}, {} violations",
        rep.min_voltage_pu,
        rep.max_voltage_pu,
        rep.max_loading,
        rep.violations.len()
    );
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
