//! Command-line front end: single optimization runs with trace export,
//! Monte-Carlo sweeps, gradient audits, brute-force cross-checks and plot
//! re-rendering.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fdris_core::channel::derivative::ArrayId;
use fdris_core::channel::ScenarioRealization;
use fdris_core::harness::{
    ResultTable, SweepSpec, Variant, load_config, load_sweep, realization_seed, run_cell,
    run_sweep, write_failures_csv, write_plot_svg, write_snapshot, write_trace_csv,
};
use fdris_core::metrics;
use fdris_core::metrics::RateReport;
use fdris_core::oracle;
use fdris_core::scenario::ScenarioConfig;
use fdris_core::subproblems::combiner::update_combiner;
use fdris_core::subproblems::gradients::{phase_gradients, position_gradients};
use fdris_core::subproblems::power::update_power;

#[derive(Parser)]
#[command(
    name = "fdris",
    version,
    about = "Sum-rate optimization for a full-duplex link with repositionable \
             antennas and surface elements"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario configuration file (TOML); takes precedence over --profile.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Built-in scenario profile used when no --config is given.
    #[arg(long, global = true, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,

    /// Random seed: the run seed for `run`, the seed base for `sweep`,
    /// the probe seed for `gradcheck`/`oracle`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Variant selection (comma-separated). `run` takes exactly one;
    /// `sweep` replaces the spec's variant list.
    #[arg(long, global = true, value_delimiter = ',')]
    variant: Vec<String>,

    /// Output directory; the FDRIS_OUT_DIR environment variable overrides
    /// the default.
    #[arg(long, global = true, env = "FDRIS_OUT_DIR", default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Small arrays and few paths; seconds per run.
    Desk,
    /// Full-scale arrays matching the reference figures; minutes per run.
    Paper,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization and export trace.csv, state.toml and report.csv.
    Run,
    /// Run a Monte-Carlo sweep and export results.csv and plot.svg.
    Sweep {
        /// Sweep specification file (TOML).
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Built-in sweep (ris-elements, si-residual, power-bs, duplex).
        #[arg(long)]
        preset: Option<String>,
        /// Override the number of channel realizations per cell.
        #[arg(long)]
        realizations: Option<usize>,
    },
    /// Compare analytic rate gradients against central finite differences.
    Gradcheck {
        /// Random operating points per gradient block.
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Compare closed-form block updates against brute-force references.
    Oracle,
    /// Re-render the SVG plot from a results CSV.
    Plot {
        /// Results CSV produced by `sweep`.
        #[arg(long)]
        input: PathBuf,
        /// Plot title; defaults to "<parameter> sweep".
        #[arg(long)]
        title: Option<String>,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run => cmd_run(&cli),
        Command::Sweep {
            spec,
            preset,
            realizations,
        } => cmd_sweep(&cli, spec.as_deref(), preset.as_deref(), *realizations),
        Command::Gradcheck { probes } => cmd_gradcheck(&cli, *probes),
        Command::Oracle => cmd_oracle(&cli),
        Command::Plot { input, title } => cmd_plot(&cli, input, title.as_deref()),
    }
}

/// Base scenario from --config or --profile.
fn base_config(cli: &Cli) -> Result<ScenarioConfig> {
    match &cli.config {
        Some(path) => Ok(load_config(path)?),
        None => Ok(match cli.profile {
            Profile::Desk => ScenarioConfig::desk(),
            Profile::Paper => ScenarioConfig::paper(),
        }),
    }
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    names
        .iter()
        .map(|name| name.parse::<Variant>().map_err(Into::into))
        .collect()
}

fn ensure_out_dir(cli: &Cli) -> Result<&Path> {
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("cannot create output directory {}", cli.out_dir.display()))?;
    Ok(&cli.out_dir)
}

fn cmd_run(cli: &Cli) -> Result<()> {
    let cfg = base_config(cli)?;
    let variant = match parse_variants(&cli.variant)?.as_slice() {
        [] => Variant::MaMe,
        [one] => *one,
        many => bail!("run takes one variant, got {}", many.len()),
    };
    let seed = cli.seed.unwrap_or(1);
    let out_dir = ensure_out_dir(cli)?;

    let out = run_cell(&cfg, variant, seed).context("optimization failed")?;
    write_trace_csv(&out.trace, &out_dir.join("trace.csv"))?;
    write_snapshot(&out.state, &out_dir.join("state.toml"))?;
    write_report_csv(&out.report, &out_dir.join("report.csv"))?;

    println!(
        "variant {} seed {}: {} iterations, converged = {}",
        variant.name(),
        seed,
        out.trace.iterations_run(),
        out.trace.converged
    );
    println!(
        "reported rate {:.4} bits/s/Hz (DL {:.4}, UL {:.4}); feasible = {}",
        out.sum_rate_bps_hz(),
        out.dl_rate_bps_hz,
        out.ul_rate_bps_hz,
        out.report.feasibility.all()
    );
    println!(
        "wrote {}, state.toml, report.csv",
        out_dir.join("trace.csv").display()
    );
    Ok(())
}

fn write_report_csv(report: &RateReport, path: &Path) -> Result<()> {
    let mut text = RateReport::CSV_HEADER.join(",");
    text.push('\n');
    text.push_str(&report.csv_record().join(","));
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_sweep(
    cli: &Cli,
    spec_path: Option<&Path>,
    preset: Option<&str>,
    realizations: Option<usize>,
) -> Result<()> {
    let mut spec: SweepSpec = match (spec_path, preset) {
        (Some(path), None) => load_sweep(path)?,
        (None, name) => SweepSpec::preset(name.unwrap_or("ris-elements"), base_config(cli)?)?,
        (Some(_), Some(_)) => unreachable!("clap rejects --spec with --preset"),
    };
    if let Some(path) = &cli.config {
        spec.base = load_config(path)?;
    }
    if let Some(seed) = cli.seed {
        spec.seed_base = seed;
    }
    if !cli.variant.is_empty() {
        spec.variants = parse_variants(&cli.variant)?;
    }
    if let Some(n) = realizations {
        spec.realizations = n;
    }
    spec.validate()?;
    let out_dir = ensure_out_dir(cli)?;

    let cells = spec.values.len() * spec.variants.len() * spec.realizations;
    println!(
        "sweeping {} over {:?} for {} variants × {} realizations ({} runs)",
        spec.parameter.name(),
        spec.values,
        spec.variants.len(),
        spec.realizations,
        cells
    );
    let table = run_sweep(&spec)?;

    table.write_csv(&out_dir.join("results.csv"))?;
    write_plot_svg(
        &table,
        &format!("{} sweep", spec.parameter.name()),
        &out_dir.join("plot.svg"),
    )?;
    if !table.failures.is_empty() {
        write_failures_csv(&table.failures, &out_dir.join("failures.csv"))?;
        eprintln!(
            "{} of {} runs failed; see failures.csv",
            table.failures.len(),
            cells
        );
    }

    println!("variant      value        mean R_sum   ± stderr   converged");
    for a in table.aggregate() {
        println!(
            "{:<12} {:<12} {:>10.4}   ± {:<8.4} {:>5}/{}",
            a.variant.name(),
            format!("{}", a.value),
            a.mean_sum_rate_bps_hz,
            a.stderr_sum_rate_bps_hz,
            a.converged_runs,
            a.runs
        );
    }
    println!(
        "wrote {} and plot.svg",
        out_dir.join("results.csv").display()
    );
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, probes: usize) -> Result<()> {
    let cfg = base_config(cli)?;
    let seed = cli.seed.unwrap_or(1);
    let fd_phase_step = 1e-6;
    let fd_pos_step = 1e-8;

    let mut worst = [("phases", 0.0_f64), ("tx", 0.0), ("rx", 0.0), ("ris", 0.0)];
    for probe in 0..probes {
        let (real, ch, st) = oracle::random_point(&cfg, realization_seed(seed, probe));
        let analytic = phase_gradients(&cfg, &ch, &st)?.d_rate;
        let fd = oracle::fd_phase_gradient(&cfg, &ch, &st, fd_phase_step)?;
        worst[0].1 = worst[0].1.max(oracle::relative_gradient_error(&analytic, &fd));
        for (slot, array) in [(1, ArrayId::Tx), (2, ArrayId::Rx), (3, ArrayId::Ris)] {
            let analytic = position_gradients(&cfg, &real, &ch, &st, array)?.d_rate;
            let fd = oracle::fd_position_gradient(&cfg, &real, &st, array, fd_pos_step)?;
            worst[slot].1 = worst[slot]
                .1
                .max(oracle::relative_gradient_error(&analytic, &fd));
        }
    }

    println!("max relative gradient error over {probes} random operating points:");
    for (name, err) in worst {
        println!("  {name:<7} {err:.3e}");
    }
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    if max > 1e-4 {
        bail!("gradient mismatch: worst relative error {max:.3e} exceeds 1e-4");
    }
    println!("analytic gradients agree with finite differences");
    Ok(())
}

fn cmd_oracle(cli: &Cli) -> Result<()> {
    let cfg = base_config(cli)?;
    let seed = cli.seed.unwrap_or(1);

    println!("combiner: closed form vs. random search and power iteration");
    for probe in 0..3 {
        let (_real, ch, mut st) = oracle::random_point(&cfg, realization_seed(seed, probe));
        let searched = oracle::best_combiner_sinr_by_search(&cfg, &ch, &st, 2000, seed)?;
        let reference = oracle::power_iteration_combiner(&cfg, &ch, &st, 400)?;
        update_combiner(&cfg, &ch, &mut st)?;
        let closed = metrics::sinr_ul(&cfg, &ch, &st)?;
        let angle = oracle::subspace_angle_rad(&st.combiner, &reference);
        println!(
            "  probe {probe}: SINR closed {closed:.6e}, search {searched:.6e}, \
             angle to power-iteration reference {angle:.2e} rad"
        );
        if closed < searched * (1.0 - 1e-9) {
            bail!("closed-form combiner lost to random search on probe {probe}");
        }
    }

    println!("uplink power: closed form vs. 10000-point grid");
    for probe in 0..3 {
        let (_real, ch, mut st) = oracle::random_point(&cfg, realization_seed(seed, 100 + probe));
        let grid = oracle::best_power_on_grid(&cfg, &ch, &st, 10_000)?;
        update_power(&cfg, &ch, &mut st)?;
        match grid {
            Some(grid) => println!(
                "  probe {probe}: closed {:.6e} W, grid {:.6e} W, |Δ| = {:.2e} W",
                st.ul_power_w,
                grid,
                (st.ul_power_w - grid).abs()
            ),
            None => println!(
                "  probe {probe}: no power meets both rate floors (closed form falls back to {:.6e} W)",
                st.ul_power_w
            ),
        }
    }

    println!("single-element landscape: joint optimization vs. exhaustive scan");
    let benign = oracle::single_element_scenario();
    let real = ScenarioRealization::sample(&benign, seed);
    let init = fdris_core::ao::initialize(&benign, &real, seed);
    let scan = oracle::scan_single_element(&benign, &real, &init, 41, 64)?;
    let mut mask = fdris_core::ao::VariantMask::none();
    mask.move_ris = true;
    mask.optimize_phases = true;
    mask.update_combiner = true;
    let run = fdris_core::ao::run(&benign, &real, mask, seed)?;
    let sca = run.trace.final_rate();
    println!(
        "  scan best {:.6} bits/s/Hz at ({:.4}, {:.4}) m phase {:.4} rad; \
         optimizer {:.6} bits/s/Hz ({} iterations)",
        scan.best_rate,
        scan.best_position[0],
        scan.best_position[1],
        scan.best_phase_rad,
        sca,
        run.trace.iterations_run()
    );
    Ok(())
}

fn cmd_plot(cli: &Cli, input: &Path, title: Option<&str>) -> Result<()> {
    let table = ResultTable::read_csv(input)?;
    if table.rows.is_empty() {
        bail!("{} holds no rows", input.display());
    }
    let title = title
        .map(str::to_string)
        .unwrap_or_else(|| format!("{} sweep", table.rows[0].parameter.name()));
    let out_dir = ensure_out_dir(cli)?;
    let path = out_dir.join("plot.svg");
    write_plot_svg(&table, &title, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
