//! pnrec: reconstruction experiments for piecewise-constant doping /
//! conductivity profiles and the discrete lattice identification model.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pnrec_core::config::{preset, ExperimentConfig, Method};
use pnrec_core::elliptic::{forward_trace, EllipticProblem, FaceCoefficients};
use pnrec_core::error::Error;
use pnrec_core::experiment::{
    lattice_from_config, lattice_measurements_csv, phantom_from_config, run_experiment,
    synthesize_levelset_datum, synthesize_lk_dataset, unit_source_voltage, write_pgm_string,
    MethodOutput,
};
use pnrec_core::lattice::{write_lattice_string, LatticeLayout};
use pnrec_core::mesh::{read_field, write_field, BoundarySpec, Grid};
use pnrec_core::metrics::quality_metrics;
use pnrec_core::sparse::SolverKind;

#[derive(Parser)]
#[command(name = "pnrec", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (flat key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a named preset instead of the defaults.
    #[arg(long)]
    preset: Option<String>,
    /// Override one config key (repeatable); overrides win over --config.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides the output_dir key).
    #[arg(short, long)]
    out_dir: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.preset {
            Some(name) => preset(name)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)?;
            let file_cfg = ExperimentConfig::parse(&text)?;
            // file settings replace the preset/default baseline wholesale
            cfg = file_cfg;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(dir) = &self.out_dir {
            cfg.output_dir = Some(dir.display().to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem for the configured phantom and write the
    /// boundary trace and solution field.
    Forward(ConfigArgs),
    /// Synthesize the measurement dataset (with noise if configured).
    Synthesize(ConfigArgs),
    /// Run a reconstruction (level set or Landweber-Kaczmarz).
    Reconstruct {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Reconstruction method.
        #[arg(long, value_parser = ["levelset", "lk"])]
        method: Option<String>,
    },
    /// Lattice model commands.
    #[command(subcommand)]
    Lattice(LatticeCommand),
    /// Compare a reconstructed field against a truth field.
    Metrics {
        /// Reconstructed field file.
        #[arg(long)]
        rec: PathBuf,
        /// Ground-truth field file.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Print a named preset configuration.
    Preset {
        /// One of the preset names.
        name: String,
    },
}

#[derive(Subcommand)]
enum LatticeCommand {
    /// Solve the lattice system for the sweep detectors and dump the
    /// measurements.
    Solve(ConfigArgs),
    /// Run the diagonal-sweep recovery end to end.
    Recover(ConfigArgs),
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Error> {
    let dir = PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| "out".into()));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write(path: &Path, content: &str) -> Result<(), Error> {
    fs::write(path, content)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn trace_csv(grid: &Grid, trace: &[f64]) -> String {
    let mut s = String::from("i,x,value\n");
    for (i, v) in trace.iter().enumerate() {
        s.push_str(&format!("{},{:.12e},{:.12e}\n", i, grid.x(i), v));
    }
    s
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Forward(args) => {
            let cfg = args.resolve()?;
            let grid = Grid::new(cfg.nx, cfg.ny)?;
            let spec = BoundarySpec::source_top_measure_bottom();
            let phantom = phantom_from_config(&cfg)?;
            let gamma = phantom.gamma_field(grid)?;
            let u = unit_source_voltage(grid, &spec);
            let faces = phantom
                .face_coefficients(grid)
                .unwrap_or(FaceCoefficients::FromNodes);
            let p = EllipticProblem::new(gamma.clone(), spec, u).with_faces(faces);
            let fwd = forward_trace(&p, 1e-10, SolverKind::Auto)?;
            let dir = out_dir(&cfg)?;
            write(&dir.join("trace.csv"), &trace_csv(&grid, &fwd.trace))?;
            write_field(&fwd.u, &dir.join("solution.field"))?;
            write_field(&gamma, &dir.join("gamma_truth.field"))?;
            println!("wrote {}", dir.join("solution.field").display());
            println!("wrote {}", dir.join("gamma_truth.field").display());
            Ok(())
        }
        Command::Synthesize(args) => {
            let cfg = args.resolve()?;
            let dir = out_dir(&cfg)?;
            let grid = Grid::new(cfg.nx, cfg.ny)?;
            match cfg.method {
                Method::Lk => {
                    let (dataset, gamma_truth) = synthesize_lk_dataset(&cfg)?;
                    for (j, t) in dataset.traces.iter().enumerate() {
                        write(
                            &dir.join(format!("trace_{}.csv", j + 1)),
                            &trace_csv(&grid, t),
                        )?;
                    }
                    write_field(&gamma_truth, &dir.join("gamma_truth.field"))?;
                    write(&dir.join("delta.txt"), &format!("{:.12e}\n", dataset.delta))?;
                }
                _ => {
                    let setup = synthesize_levelset_datum(&cfg)?;
                    write(&dir.join("trace.csv"), &trace_csv(&grid, &setup.datum.y_delta))?;
                    write_field(&setup.gamma_truth, &dir.join("gamma_truth.field"))?;
                    write(&dir.join("delta.txt"), &format!("{:.12e}\n", setup.datum.delta))?;
                }
            }
            write(&dir.join("config.txt"), &cfg.serialize())?;
            Ok(())
        }
        Command::Reconstruct { cfg: args, method } => {
            let mut cfg = args.resolve()?;
            if let Some(m) = method {
                cfg.set("method", &m)?;
            }
            if cfg.method == Method::Lattice {
                return Err(Error::InvalidConfig(
                    "use `pnrec lattice recover` for the lattice model".into(),
                ));
            }
            let report = run_experiment(&cfg)?;
            let dir = out_dir(&cfg)?;
            write(&dir.join("history.csv"), &report.history_csv)?;
            write(&dir.join("summary.txt"), &report.summary)?;
            if let Some(f) = &report.final_gamma {
                write_field(f, &dir.join("final.field"))?;
            }
            if let Some(f) = &report.final_projected {
                write(&dir.join("final.pgm"), &write_pgm_string(f))?;
            }
            if let Some(f) = &report.gamma_truth {
                write(&dir.join("truth.pgm"), &write_pgm_string(f))?;
            }
            print!("{}", report.summary);
            Ok(())
        }
        Command::Lattice(sub) => match sub {
            LatticeCommand::Solve(args) => {
                let cfg = args.resolve()?;
                let l = lattice_from_config(&cfg)?;
                let layout = LatticeLayout::default();
                let detectors: Vec<(usize, usize)> =
                    (1..=cfg.p_prime).map(|k| (l.n + 1, l.n + 1 - k)).collect();
                let csv = lattice_measurements_csv(&l, &layout, &detectors)?;
                let dir = out_dir(&cfg)?;
                write(&dir.join("measurements.csv"), &csv)?;
                write(&dir.join("lattice.txt"), &write_lattice_string(&l))?;
                Ok(())
            }
            LatticeCommand::Recover(args) => {
                let mut cfg = args.resolve()?;
                cfg.set("method", "lattice")?;
                cfg.validate()?;
                let report = run_experiment(&cfg)?;
                let dir = out_dir(&cfg)?;
                write(&dir.join("recovery.csv"), &report.history_csv)?;
                write(&dir.join("summary.txt"), &report.summary)?;
                if let MethodOutput::Lattice { truth, .. } = &report.output {
                    write(&dir.join("lattice.txt"), &write_lattice_string(truth))?;
                }
                print!("{}", report.summary);
                Ok(())
            }
        },
        Command::Metrics { rec, truth } => {
            let rec = read_field(&rec)?;
            let truth = read_field(&truth)?;
            let m = quality_metrics(&rec, &truth)?;
            println!("misclassified_fraction = {:.12e}", m.misclassified);
            println!("l2_rel = {:.12e}", m.l2_rel);
            println!("jaccard = {:.12e}", m.jaccard);
            Ok(())
        }
        Command::Preset { name } => {
            let cfg = preset(&name)?;
            print!("{}", cfg.serialize());
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) | Error::InvalidInput(_) | Error::Parse(_)
        | Error::GridMismatch(_) => 2,
        Error::GenericityFailure { .. } => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
