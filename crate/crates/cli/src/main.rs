use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use causalspace::analysis::{hierarchy, order_hierarchy_dot, order_hierarchy_json, report, to_sorted_json, SpaceReport};
use causalspace::causaltope::{build_equations, dump_system, DumpFormat};
use causalspace::checkpoint::write_hsets;
use causalspace::enumerator::{FinderOptions, Outcome, SaveOptions, SpaceFinder};
use causalspace::orders::order_hierarchy;
use causalspace::{HistorySet, Space};

const STATE_DIR_ENV: &str = "CAUSALSPACE_STATE_DIR";

#[derive(Parser, Debug)]
#[command(name = "causalspace", version, about = "Enumerate and analyse causally complete spaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Search for all causally complete spaces from scratch.
    Enumerate(SearchArgs),
    /// Continue a search from a saved state.
    Resume(SearchArgs),
    /// Report on one space, given by class id, bitvector or history list.
    Classify(ClassifyArgs),
    /// Export the refinement hierarchy of equivalence classes.
    Hierarchy(ExportArgs),
    /// Export the equation system of a space's causaltope.
    Causaltope(CausaltopeArgs),
    /// Export the hierarchy of causal orders.
    Orders(ExportArgs),
}

#[derive(Args, Debug)]
struct SearchArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    events: u8,
    /// Search state file; defaults to a file in $CAUSALSPACE_STATE_DIR.
    #[arg(long)]
    state: Option<PathBuf>,
    /// Save the state after this many new classes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    save_period: Option<u64>,
    /// Print a status line after this many new classes.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    update_period: Option<u64>,
    /// Where to write the class representatives; defaults to a file in
    /// $CAUSALSPACE_STATE_DIR.
    #[arg(long)]
    classes: Option<PathBuf>,
    #[arg(long)]
    parallel: bool,
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Csv,
    Pgm,
    Text,
}

#[derive(Args, Debug)]
struct Target {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    events: u8,
    /// Equivalence class id.
    #[arg(long = "class", group = "target")]
    class_id: Option<usize>,
    /// Space as a decimal bitvector.
    #[arg(long, group = "target")]
    bits: Option<String>,
    /// Space as a history list, e.g. "[A/0, A/1, <A/1,B/0>]".
    #[arg(long, group = "target")]
    space: Option<String>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CausaltopeArgs {
    #[command(flatten)]
    target: Target,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=4))]
    events: u8,
    #[arg(long, value_enum, default_value_t = Format::Dot)]
    format: Format,
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn state_dir() -> Option<PathBuf> {
    std::env::var_os(STATE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn default_in_state_dir(explicit: &Option<PathBuf>, name: String) -> Option<PathBuf> {
    explicit.clone().or_else(|| state_dir().map(|d| d.join(name)))
}

fn write_artifact(path: &Option<PathBuf>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn unsupported(format: Format, what: &str) -> anyhow::Error {
    anyhow!(causalspace::Error::InvalidArgument(format!("format {format:?} is not available for {what}")))
}

fn run_search(args: &SearchArgs, resume: bool) -> Result<()> {
    let n = args.events as usize;
    let state = default_in_state_dir(&args.state, format!("search-{n}.state"));
    let classes = default_in_state_dir(&args.classes, format!("classes-{n}.hsets"));
    if let Some(dir) = state_dir() {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let opts = FinderOptions {
        verbose: !args.quiet,
        update_period: args.update_period,
        save: state.clone().map(|path| SaveOptions { path, save_period: args.save_period, backup: true }),
        toplevel_opt_depth: None,
    };
    let mut finder = SpaceFinder::new(n, opts)?;
    if resume {
        let path = state.as_deref().ok_or_else(|| {
            anyhow!(causalspace::Error::InvalidArgument(format!("resume needs --state or ${STATE_DIR_ENV}")))
        })?;
        finder.load_state(path).with_context(|| format!("loading {}", path.display()))?;
    } else {
        finder.blank_state();
    }
    let outcome = if args.parallel { finder.find_eq_classes_parallel()? } else { finder.find_eq_classes()? };
    if outcome == Outcome::Interrupted {
        bail!("search interrupted");
    }
    if let Some(path) = &classes {
        let reps = finder.eq_classes();
        let mut buf = Vec::new();
        write_hsets(&mut buf, &reps)?;
        fs::write(path, buf).with_context(|| format!("writing {}", path.display()))?;
    }
    if args.quiet {
        println!("Found {} spaces in {} equivalence classes.", finder.num_spaces(), finder.num_eq_classes());
    }
    Ok(())
}

fn resolve(target: &Target) -> Result<Space> {
    let n = target.events as usize;
    if let Some(id) = target.class_id {
        let h = hierarchy(n)?;
        let node = h.node(id).ok_or_else(|| {
            causalspace::Error::InvalidArgument(format!("no equivalence class {id} on {n} events"))
        })?;
        return Ok(node.representative_space().clone());
    }
    if let Some(b) = &target.bits {
        let bits: HistorySet =
            b.parse().map_err(|_| causalspace::Error::InvalidArgument(format!("'{b}' is not a decimal bitvector")))?;
        return Ok(Space::from_bits_n(n, &bits)?);
    }
    if let Some(s) = &target.space {
        let space: Space = s.parse()?;
        if space.event_count() != n || space.events() != causalspace::encoding::first_events(n) {
            bail!(causalspace::Error::InvalidArgument(format!("space must use exactly the first {n} events")));
        }
        return Ok(space);
    }
    bail!(causalspace::Error::InvalidArgument("give one of --class, --bits or --space".into()))
}

fn list(xs: &[usize]) -> String {
    if xs.is_empty() {
        "none".into()
    } else {
        xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
    }
}

fn report_text(r: &SpaceReport) -> String {
    let mut s = String::new();
    let mut line = |t: String| {
        s.push_str(&t);
        s.push('\n');
    };
    match (r.class_id, r.class_size) {
        (Some(c), Some(z)) => line(format!("class {c} ({z} spaces)")),
        _ => line("class unknown".into()),
    }
    line(format!("space {}", r.space));
    line(format!("bits {}", r.bits));
    match &r.induced_by {
        Some(o) => line(format!("induced by {o}")),
        None => {
            for od in &r.order_coarsenings {
                let kind = if od.definite { "definite" } else { "indefinite" };
                line(format!("refines {kind} order {}", od.order));
                for d in &od.differences {
                    let names = |es: &[causalspace::EventId]| {
                        es.iter().map(|e| e.to_string()).collect::<Vec<_>>().join(",")
                    };
                    let hs = d.histories.iter().map(|h| format!("<{h}>")).collect::<Vec<_>>().join(" ");
                    line(format!(
                        "  outputs {{{}}} independent of {{{}}} given {{{}}} in {hs}",
                        names(&d.outputs),
                        names(&d.independent_of),
                        names(&d.given)
                    ));
                }
            }
        }
    }
    line(format!("tight {}", r.is_tight));
    for id in &r.identifications {
        let hs = id.histories.iter().map(|h| format!("<{h}>")).collect::<Vec<_>>().join(" ");
        line(format!("  identified at {}: {hs}", id.event));
    }
    match r.novel_causal_functions {
        Some(x) => line(format!("causal functions {} ({x} novel)", r.causal_functions)),
        None => line(format!("causal functions {}", r.causal_functions)),
    }
    line(format!("closest refinements {}", list(&r.closest_refinements)));
    line(format!("closest coarsenings {}", list(&r.closest_coarsenings)));
    if let Some(j) = r.is_join {
        line(format!("join of refinements {j}"));
    }
    if let Some(m) = r.is_meet {
        line(format!("meet of coarsenings {m}"));
    }
    line(format!(
        "causaltope dimension {} ({} of {} equations independent)",
        r.causaltope_dim, r.independent_equations, r.equations
    ));
    if let Some(d) = r.meet_dim_deficit {
        line(format!("meet of coarsening causaltopes has dimension {}", r.causaltope_dim as i64 + d));
    }
    if let Some(g) = &r.refinement_dim_gap {
        line(format!("dimension gap {} over refinements {}", g.gap, list(&g.classes)));
    }
    s
}

fn classify(args: &ClassifyArgs) -> Result<()> {
    let space = resolve(&args.target)?;
    let h = hierarchy(args.target.events as usize)?;
    let r = report(&space, h)?;
    let text = match args.format {
        Format::Json => to_sorted_json(&r),
        Format::Text => report_text(&r),
        f => return Err(unsupported(f, "classify")),
    };
    write_artifact(&args.output, text.as_bytes())
}

fn export_hierarchy(args: &ExportArgs) -> Result<()> {
    if args.events > 3 {
        bail!(causalspace::Error::Capacity("hierarchies are built for at most 3 events".into()));
    }
    let h = hierarchy(args.events as usize)?;
    let text = match args.format {
        Format::Dot => h.to_dot(),
        Format::Json => h.to_json(),
        f => return Err(unsupported(f, "hierarchy")),
    };
    write_artifact(&args.output, text.as_bytes())
}

fn export_causaltope(args: &CausaltopeArgs) -> Result<()> {
    let space = resolve(&args.target)?;
    let sys = build_equations(&space)?;
    let bytes = match args.format {
        Format::Csv => dump_system(&sys, DumpFormat::Csv),
        Format::Pgm => dump_system(&sys, DumpFormat::Pgm),
        Format::Text => {
            let rank = sys.rank();
            format!(
                "equations {}\nindependent {}\ndimension {}\n",
                sys.len(),
                rank,
                sys.num_columns() - rank - 1
            )
            .into_bytes()
        }
        f => return Err(unsupported(f, "causaltope")),
    };
    write_artifact(&args.output, &bytes)
}

fn export_orders(args: &ExportArgs) -> Result<()> {
    let h = order_hierarchy(args.events as usize)?;
    let text = match args.format {
        Format::Dot => order_hierarchy_dot(&h),
        Format::Json => order_hierarchy_json(&h),
        Format::Text => h.orders.iter().map(|o| format!("{o}\n")).collect(),
        f => return Err(unsupported(f, "orders")),
    };
    write_artifact(&args.output, text.as_bytes())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<causalspace::Error>() {
        Some(causalspace::Error::InvalidArgument(_)) => 2,
        Some(causalspace::Error::Corrupt(_)) => 3,
        Some(causalspace::Error::Io(_)) => 4,
        _ if err.downcast_ref::<std::io::Error>().is_some() => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Enumerate(a) => run_search(a, false),
        Command::Resume(a) => run_search(a, true),
        Command::Classify(a) => classify(a),
        Command::Hierarchy(a) => export_hierarchy(a),
        Command::Causaltope(a) => export_causaltope(a),
        Command::Orders(a) => export_orders(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
