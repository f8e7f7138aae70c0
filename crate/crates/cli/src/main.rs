use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use scm_profile::dictionary::{DimensionScheme, SchemeId, StereotypeDictionary};
use scm_profile::evaluation::{accuracy, predict_directions, Cutoff, EvaluationOptions};
use scm_profile::polar::{build_space, project_term, PolarSpace};
use scm_profile::profile::{
    build_profile, layer_sweep, template_contexts, GroupsFile, LayerSweep, Profile, ProfileOptions,
    SweepEvaluation, DEFAULT_ALPHA, DEFAULT_COVERAGE_FLOOR, DEFAULT_TEMPLATES,
};
use scm_profile::render::{render_layer_curves, render_profile, ChartStyle, ProfileChartSpec};
use scm_profile::stats::TTestKind;
use scm_profile::store::{ContextFilter, ContextSource, EmbeddingStore, LayerSelector};
use scm_profile::synth::{self, SynthSpec};
use scm_profile::{Error, Result, VERSION};
use serde::Serialize;

/// Stereotype-dimension projection, evaluation and bias profiles for
/// contextual embedding stores.
#[derive(Parser, Debug)]
#[command(name = "scm-profile", version, about)]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a polar space from the seed poles of a dictionary.
    BuildSpace(BuildSpaceArgs),
    /// Project terms into a saved space.
    Project(ProjectArgs),
    /// Direction-prediction accuracy on the extended dictionary.
    Evaluate(EvaluateArgs),
    /// Group bias profile with per-dimension t-tests.
    Profile(ProfileArgs),
    /// Per-layer group differences (and optionally accuracy).
    Layers(LayersArgs),
    /// Write a synthetic embedding store from a spec.
    Synth(SynthArgs),
    /// Render a saved profile or layer sweep as SVG.
    Render(RenderArgs),
    /// Expand templates into a context examples CSV.
    Contexts(ContextsArgs),
}

#[derive(Args, Debug)]
struct ContextArgs {
    /// `all` (mean over layers) or a single layer index.
    #[arg(long, default_value = "all")]
    layers: LayerSelector,

    /// Only use contexts from these sources (comma separated).
    #[arg(long, value_delimiter = ',')]
    sources: Vec<ContextSource>,
}

impl ContextArgs {
    fn filter(&self) -> ContextFilter {
        if self.sources.is_empty() {
            ContextFilter::any()
        } else {
            ContextFilter::sources(self.sources.iter().copied())
        }
    }
}

#[derive(Args, Debug)]
struct BuildSpaceArgs {
    /// Embedding store directory.
    #[arg(long)]
    store: PathBuf,
    /// Dictionary CSV; its seed tier defines the poles.
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "7d")]
    scheme: SchemeId,
    #[command(flatten)]
    context: ContextArgs,
    /// Output space file.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the build report here (it is always printed).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[command(flatten)]
    context: ContextArgs,
    /// File with one term per line.
    #[arg(long)]
    terms_file: Option<PathBuf>,
    /// Output CSV; stdout when absent.
    #[arg(short, long)]
    out: Option<PathBuf>,
    terms: Vec<String>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Dictionary CSV with the extended (full) tier.
    #[arg(long)]
    dict: PathBuf,
    /// Seed dictionary, when the seed tier lives in a separate file.
    #[arg(long)]
    seed_dict: Option<PathBuf>,
    #[arg(long, default_value = "zero")]
    cutoff: Cutoff,
    /// Keep extended terms that are also seed terms.
    #[arg(long)]
    allow_seed_overlap: bool,
    #[command(flatten)]
    context: ContextArgs,
    /// Accuracy CSV.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TestArgs {
    /// Per-dimension significance level.
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value = "welch", value_parser = parse_test)]
    test: TTestKind,
    /// Divide alpha by the number of dimensions.
    #[arg(long)]
    bonferroni: bool,
    /// Warn when fewer than this fraction of a population resolves.
    #[arg(long, default_value_t = DEFAULT_COVERAGE_FLOOR)]
    coverage_floor: f64,
}

impl TestArgs {
    fn options(&self, filter: ContextFilter) -> ProfileOptions {
        ProfileOptions {
            alpha: self.alpha,
            coverage_floor: self.coverage_floor,
            test: self.test,
            bonferroni: self.bonferroni,
            filter,
        }
    }
}

#[derive(Args, Debug)]
struct ProfileArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Groups file (populations, comparisons, overlays).
    #[arg(long)]
    groups: PathBuf,
    #[command(flatten)]
    context: ContextArgs,
    #[command(flatten)]
    test: TestArgs,
    /// Profile JSON.
    #[arg(short, long)]
    out: PathBuf,
    /// Also render the first comparison next to the profile.
    #[arg(long)]
    render: Option<ChartStyle>,
}

#[derive(Args, Debug)]
struct LayersArgs {
    #[arg(long)]
    store: PathBuf,
    /// Dictionary CSV; seed poles are rebuilt at every layer.
    #[arg(long)]
    dict: PathBuf,
    #[arg(long, default_value = "2d")]
    scheme: SchemeId,
    #[arg(long)]
    groups: PathBuf,
    /// Only use contexts from these sources (comma separated).
    #[arg(long, value_delimiter = ',')]
    sources: Vec<ContextSource>,
    #[command(flatten)]
    test: TestArgs,
    /// Also evaluate the extended tier of `--dict` at every layer.
    #[arg(long)]
    evaluate: bool,
    #[arg(long, default_value = "zero")]
    cutoff: Cutoff,
    /// Sweep JSON.
    #[arg(short, long)]
    out: PathBuf,
    /// Also write the curves as SVG next to the sweep.
    #[arg(long)]
    render: bool,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Dictionary to generate poles for; a placeholder dictionary with the
    /// published pole sizes otherwise.
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Populations to generate; the gendered term lists otherwise.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// Write the dictionary that was used.
    #[arg(long)]
    dict_out: Option<PathBuf>,
    /// Write the groups file that was used.
    #[arg(long)]
    groups_out: Option<PathBuf>,
    /// Output store directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// Profile JSON to chart.
    #[arg(long, conflicts_with = "sweep", required_unless_present = "sweep")]
    profile: Option<PathBuf>,
    /// Layer sweep JSON to chart.
    #[arg(long)]
    sweep: Option<PathBuf>,
    /// Which comparison of the profile.
    #[arg(long, default_value_t = 0)]
    comparison: usize,
    #[arg(long, default_value = "paired_bars")]
    style: ChartStyle,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ContextsArgs {
    /// File with one term per line.
    #[arg(long, conflicts_with = "groups", required_unless_present = "groups")]
    terms_file: Option<PathBuf>,
    /// Take the terms of every population in a groups file.
    #[arg(long)]
    groups: Option<PathBuf>,
    /// File with one template per line, each with one `[X]` placeholder.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(short, long)]
    out: PathBuf,
}

fn parse_test(s: &str) -> std::result::Result<TTestKind, String> {
    match s {
        "welch" => Ok(TTestKind::Welch),
        "student" => Ok(TTestKind::Student),
        other => Err(format!("unknown test `{other}` (expected welch or student)")),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn require_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn sources_label(filter: &ContextFilter) -> String {
    match &filter.sources {
        None => "any".into(),
        Some(s) => s.iter().map(|c| c.name()).collect::<Vec<_>>().join("+"),
    }
}

#[derive(Serialize)]
struct BuildReport<'a> {
    space: String,
    scheme: SchemeId,
    h: usize,
    dim: usize,
    condition_number: f64,
    solver: scm_profile::polar::Solver,
    coverage_fraction: f64,
    metadata: &'a scm_profile::polar::SpaceMetadata,
}

fn cmd_build_space(args: &BuildSpaceArgs) -> Result<()> {
    let store = EmbeddingStore::open(&args.store)?;
    let dict = StereotypeDictionary::load(&args.dict, None)?;
    let scheme = DimensionScheme::new(args.scheme);
    let space = build_space(&store, &dict, &scheme, args.context.layers, &args.context.filter())?;
    space.save(&args.out)?;
    let report = BuildReport {
        space: args.out.display().to_string(),
        scheme: args.scheme,
        h: space.h(),
        dim: space.dim(),
        condition_number: space.condition_number(),
        solver: space.solver(),
        coverage_fraction: space.metadata.coverage_fraction(),
        metadata: &space.metadata,
    };
    let text = to_json(&report);
    if let Some(path) = &args.report {
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_project(args: &ProjectArgs) -> Result<()> {
    let space = PolarSpace::load(&args.space)?;
    let store = EmbeddingStore::open(&args.store)?;
    let mut terms = args.terms.clone();
    if let Some(path) = &args.terms_file {
        terms.extend(read_lines(path)?);
    }
    if terms.is_empty() {
        return Err(Error::Validation("no terms given".into()));
    }
    let filter = args.context.filter();
    let mut out = String::new();
    let _ = writeln!(out, "# model={}", store.model_label());
    let _ = writeln!(out, "# scheme={}", space.scheme().id);
    let _ = writeln!(out, "# layers={}", args.context.layers);
    let _ = writeln!(out, "# sources={}", sources_label(&filter));
    let _ = writeln!(out, "# tool_version={VERSION}");
    let _ = writeln!(out, "term,contexts,{}", space.scheme().axis_names().join(","));
    let mut missing = 0;
    for term in &terms {
        match project_term(&space, &store, term, args.context.layers, &filter) {
            Ok(p) => {
                let coords: Vec<String> = p.coordinates.iter().map(f64::to_string).collect();
                let _ = writeln!(out, "{},{},{}", p.term, p.contexts, coords.join(","));
            }
            Err(Error::MissingTerm(t)) => {
                log::warn!("`{t}` has no records under the selected layers/contexts");
                missing += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if missing == terms.len() {
        return Err(Error::MissingTerm(terms.join(", ")));
    }
    match &args.out {
        Some(path) => write_text(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn load_merged_dict(dict: &Path, seed: Option<&Path>) -> Result<StereotypeDictionary> {
    let main = StereotypeDictionary::load(dict, None)?;
    let Some(seed) = seed else { return Ok(main) };
    let seed = StereotypeDictionary::load(seed, Some(scm_profile::Tier::Seed))?;
    let mut entries = seed.entries;
    entries.extend(main.entries);
    StereotypeDictionary::from_entries(main.label, entries)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let space = PolarSpace::load(&args.space)?;
    let store = EmbeddingStore::open(&args.store)?;
    let dict = load_merged_dict(&args.dict, args.seed_dict.as_deref())?;
    let options = EvaluationOptions {
        cutoff: args.cutoff,
        allow_seed_overlap: args.allow_seed_overlap,
        filter: args.context.filter(),
    };
    let set = predict_directions(&space, &store, &dict, args.context.layers, &options)?;
    let report = accuracy(&set);
    if report.empty {
        log::warn!("no extended-tier term could be evaluated; the report is empty");
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("model".to_string(), store.model_label().to_string());
    provenance.insert("scheme".into(), space.scheme().id.to_string());
    provenance.insert("layers".into(), args.context.layers.to_string());
    provenance.insert("sources".into(), sources_label(&options.filter));
    provenance.insert("pole_dictionary".into(), space.metadata.dictionary_label.clone());
    provenance.insert("dictionary".into(), dict.label.clone());
    provenance.insert("cutoff".into(), args.cutoff.to_string());
    provenance.insert("allow_seed_overlap".into(), args.allow_seed_overlap.to_string());
    provenance.insert("empty".into(), report.empty.to_string());
    provenance.insert("tool_version".into(), VERSION.into());
    for (i, w) in report.warnings.iter().enumerate() {
        provenance.insert(format!("warning_{i}"), w.replace('\n', " "));
    }
    report.write_csv(&args.out, &provenance)?;
    print!("{}", report.to_csv());
    Ok(())
}

fn svg_path(out: &Path) -> PathBuf {
    out.with_extension("svg")
}

fn cmd_profile(args: &ProfileArgs) -> Result<()> {
    require_alpha(args.test.alpha)?;
    let space = PolarSpace::load(&args.space)?;
    let store = EmbeddingStore::open(&args.store)?;
    let groups = GroupsFile::load(&args.groups)?;
    let options = args.test.options(args.context.filter());
    let profile = build_profile(&space, &store, &groups, args.context.layers, &options)?;
    profile.save(&args.out)?;
    if let Some(style) = args.render {
        let chart = ProfileChartSpec::from_profile(&profile, 0, style)?;
        write_text(&svg_path(&args.out), &render_profile(&chart)?)?;
    }
    for c in &profile.comparisons {
        for d in &c.dimensions {
            match &d.stats {
                Some(s) => println!(
                    "{} vs {} {}: t={:.4} p={:.4}{}",
                    c.population_a,
                    c.population_b,
                    d.axis,
                    s.t_statistic,
                    s.p_value,
                    if s.significant { " *" } else { "" }
                ),
                None => println!(
                    "{} vs {} {}: excluded ({})",
                    c.population_a,
                    c.population_b,
                    d.axis,
                    d.excluded.as_deref().unwrap_or("")
                ),
            }
        }
    }
    Ok(())
}

fn sweep_metadata(sweep: &LayerSweep) -> Vec<(String, String)> {
    vec![
        ("model".into(), sweep.model_label.clone()),
        ("scheme".into(), sweep.scheme.to_string()),
        ("dictionary".into(), sweep.dictionary_label.clone()),
        ("layer_count".into(), sweep.layer_count.to_string()),
        ("tool_version".into(), sweep.tool_version.clone()),
    ]
}

fn sweep_svg(sweep: &LayerSweep) -> Result<String> {
    let title = format!("Group differences across layers ({}, {})", sweep.model_label, sweep.scheme);
    render_layer_curves(&sweep.curves, &title, &sweep_metadata(sweep))
}

fn cmd_layers(args: &LayersArgs) -> Result<()> {
    require_alpha(args.test.alpha)?;
    let store = EmbeddingStore::open(&args.store)?;
    let dict = StereotypeDictionary::load(&args.dict, None)?;
    let groups = GroupsFile::load(&args.groups)?;
    let scheme = DimensionScheme::new(args.scheme);
    let filter = if args.sources.is_empty() {
        ContextFilter::any()
    } else {
        ContextFilter::sources(args.sources.iter().copied())
    };
    let options = args.test.options(filter.clone());
    let evaluation = args.evaluate.then_some(SweepEvaluation {
        full_dict: &dict,
        options: EvaluationOptions {
            cutoff: args.cutoff,
            allow_seed_overlap: false,
            filter,
        },
    });
    let sweep = layer_sweep(&store, &dict, &scheme, &groups, &options, evaluation.as_ref())?;
    sweep.save(&args.out)?;
    for e in &sweep.errors {
        log::warn!("layer {}: {}", e.layer, e.message);
    }
    if args.render {
        write_text(&svg_path(&args.out), &sweep_svg(&sweep)?)?;
    }
    println!(
        "{} layers, {} curves, {} failed layers",
        sweep.layer_count,
        sweep.curves.len(),
        sweep.errors.len()
    );
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = SynthSpec::load(&args.spec)?;
    let dict = match &args.dict {
        Some(path) => StereotypeDictionary::load(path, None)?,
        None => synth::synthetic_dictionary(
            "synthetic-reference",
            &synth::REFERENCE_SEED_POLE_SIZES,
            &synth::REFERENCE_FULL_POLE_SIZES,
        ),
    };
    let groups = match &args.groups {
        Some(path) => GroupsFile::load(path)?,
        None => GroupsFile::gendered_terms(),
    };
    let n = synth::generate_store(&spec, &dict, &groups, &args.out)?;
    if let Some(path) = &args.dict_out {
        dict.write_csv(path)?;
    }
    if let Some(path) = &args.groups_out {
        groups.save(path)?;
    }
    println!("wrote {n} records to {}", args.out.display());
    Ok(())
}

fn cmd_render(args: &RenderArgs) -> Result<()> {
    let svg = if let Some(path) = &args.profile {
        let profile = Profile::load(path)?;
        render_profile(&ProfileChartSpec::from_profile(&profile, args.comparison, args.style)?)?
    } else {
        let path = args.sweep.as_ref().expect("clap requires --profile or --sweep");
        sweep_svg(&LayerSweep::load(path)?)?
    };
    write_text(&args.out, &svg)
}

fn cmd_contexts(args: &ContextsArgs) -> Result<()> {
    let terms = match (&args.terms_file, &args.groups) {
        (Some(path), _) => read_lines(path)?,
        (None, Some(path)) => {
            let groups = GroupsFile::load(path)?;
            let mut terms: Vec<String> = groups.populations.iter().flat_map(|p| p.terms.clone()).collect();
            terms.extend(groups.overlays.iter().map(|o| o.term.clone()));
            terms
        }
        (None, None) => unreachable!("clap requires --terms-file or --groups"),
    };
    let templates = match &args.templates {
        Some(path) => read_lines(path)?,
        None => DEFAULT_TEMPLATES.iter().map(|t| t.to_string()).collect(),
    };
    let expansion = template_contexts(&terms, &templates)?;
    expansion.write_csv(&args.out)?;
    println!("wrote {} examples", expansion.examples.len());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::BuildSpace(a) => cmd_build_space(a),
        Command::Project(a) => cmd_project(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Profile(a) => cmd_profile(a),
        Command::Layers(a) => cmd_layers(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Render(a) => cmd_render(a),
        Command::Contexts(a) => cmd_contexts(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
