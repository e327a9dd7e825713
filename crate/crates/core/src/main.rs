use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use sbm_meta::dataset::{load_csv, load_monks, CsvOptions, Dataset, LabelColumn};
use sbm_meta::distance::DistanceKind;
use sbm_meta::eval::{evaluate, leave_one_out, EvalReport};
use sbm_meta::knn::{ModelSpec, NeighborTies};
use sbm_meta::metasearch::{
    ensemble_predict, meta_search, pool_from_trace, select_model_sequence, Channel, Decision, SearchConfig,
    SearchTrace, Weighting,
};
use sbm_meta::optimize::{FeatureSearch, GridSearch, QuantizedSearch, WeightStart};
use sbm_meta::suites::{run_suite, Suite};
use sbm_meta::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_TOLERANCE: u8 = 3;

/// k-NN model-space meta-search: evaluation, search, ensembles and reproduction suites.
#[derive(Parser, Debug)]
#[command(name = "sbm-meta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Leave-one-out report on the training set, plus a test report when given.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Level-wise meta-search from the reference model.
    Search {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Meta-search, then best-first selection of a majority-voting model sequence.
    Sequence {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
    /// Run a scripted experiment and compare it with the published numbers.
    Reproduce {
        suite: SuiteArg,
        /// Directory holding the UCI data files.
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        out: OutputArgs,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SuiteArg {
    Monks1,
    Monks2,
    Monks3,
    Ionosphere,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Monks1 => Suite::Monks1,
            SuiteArg::Monks2 => Suite::Monks2,
            SuiteArg::Monks3 => Suite::Monks3,
            SuiteArg::Ionosphere => Suite::Ionosphere,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    #[default]
    Csv,
    Monks,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Training file.
    #[arg(long)]
    train: PathBuf,
    /// Test file, reported only.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// CSV label column: `last`, a 0-based index, or a header name.
    #[arg(long, default_value = "last")]
    label: String,
    /// CSV files start with a header row.
    #[arg(long)]
    header: bool,
    /// Cut train and test from the training file: first N_TRAIN rows, next N_TEST rows.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["N_TRAIN", "N_TEST"])]
    split: Option<Vec<usize>>,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// Number of neighbors.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value = "euclidean", value_parser = parse_kind)]
    distance: DistanceKind,
    /// Minkowski exponent; overrides the exponent of --distance when given.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    alpha: Option<u8>,
    /// One weight per feature, comma-separated (default all 1).
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// 1-based features to keep, comma-separated (default all).
    #[arg(long, value_delimiter = ',')]
    mask: Option<Vec<usize>>,
    /// Neighbors tied with the k-th distance: include them all, or keep exactly k.
    #[arg(long, default_value = "include", value_parser = parse_ties)]
    ties: NeighborTies,
}

#[derive(Args, Debug, Serialize)]
struct SearchArgs {
    /// Enabled channels, in tie-break order.
    #[arg(long, value_delimiter = ',', default_value = "k,distance,features,weights", value_parser = parse_channel)]
    channels: Vec<Channel>,
    /// Minimum LOO accuracy gain (fraction) a level must exceed.
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Inclusive k range searched by the k channel.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1, 10], value_names = ["K1", "K2"])]
    k_range: Vec<usize>,
    /// Candidate distance kinds.
    #[arg(long, value_delimiter = ',', default_value = "manhattan,euclidean,chebyshev,camberra", value_parser = parse_kind)]
    kinds: Vec<DistanceKind>,
    #[arg(long, value_enum, default_value_t = FeatureSearchArg::BestFirst)]
    feature_search: FeatureSearchArg,
    #[arg(long, value_enum, default_value_t = WeightingArg::Quantized)]
    weighting: WeightingArg,
    #[arg(long, value_enum, default_value_t = GridSearchArg::BestFirst)]
    grid_search: GridSearchArg,
    #[arg(long, value_enum, default_value_t = WeightStartArg::Zero)]
    weight_start: WeightStartArg,
    /// Quantization step of the weight grid.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Best-first searches stop after this many expansions without a new best.
    #[arg(long, default_value_t = sbm_meta::optimize::DEFAULT_STALE)]
    stale: usize,
    /// LOO evaluations allowed to the simplex.
    #[arg(long, default_value_t = 1000)]
    budget: usize,
    /// Stop after this many accepted levels.
    #[arg(long)]
    max_levels: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FeatureSearchArg {
    BestFirst,
    Greedy,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum WeightingArg {
    Quantized,
    Simplex,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum GridSearchArg {
    BestFirst,
    HillClimb,
    Cyclic,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum WeightStartArg {
    Zero,
    Reference,
}

#[derive(Args, Debug, Serialize)]
struct OutputArgs {
    /// Also write the JSON report (JSON lines for search traces) to this file.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_kind(s: &str) -> Result<DistanceKind, String> {
    s.parse()
}

fn parse_ties(s: &str) -> Result<NeighborTies, String> {
    s.parse()
}

fn parse_channel(s: &str) -> Result<Channel, String> {
    s.parse()
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidModel(_) | Error::EmptyRange(..) | Error::KTooLarge { .. } => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Eval { data, model, out } => cmd_eval(&cli, data, model, out),
        Command::Search {
            data,
            model,
            search,
            out,
        } => cmd_search(&cli, data, model, search, out),
        Command::Sequence {
            data,
            model,
            search,
            out,
        } => cmd_sequence(&cli, data, model, search, out),
        Command::Reproduce {
            suite,
            data_dir,
            model,
            search,
            out,
        } => cmd_reproduce(&cli, (*suite).into(), data_dir, model, search, out),
    }
}

/// Effective configuration echoed into every output.
fn config_echo(cli: &Cli) -> serde_json::Value {
    let (name, body) = match &cli.command {
        Command::Eval { data, model, out } => ("eval", json!({"data": data, "model": model, "output": out.output})),
        Command::Search {
            data,
            model,
            search,
            out,
        } => (
            "search",
            json!({"data": data, "model": model, "search": search, "output": out.output}),
        ),
        Command::Sequence {
            data,
            model,
            search,
            out,
        } => (
            "sequence",
            json!({"data": data, "model": model, "search": search, "output": out.output}),
        ),
        Command::Reproduce {
            suite,
            data_dir,
            model,
            search,
            out,
        } => (
            "reproduce",
            json!({"suite": suite, "data_dir": data_dir, "model": model, "search": search, "output": out.output}),
        ),
    };
    json!({"command": name, "config": body})
}

fn load(data: &DataArgs) -> Result<(Dataset, Option<Dataset>), Failure> {
    let label: LabelColumn = data.label.parse().expect("label parsing is infallible");
    let options = CsvOptions::default().with_header(data.header).with_label(label.clone());
    let read = |path: &Path, options: &CsvOptions| match data.format {
        Format::Csv => load_csv(path, options),
        Format::Monks => load_monks(path),
    };
    let train = read(&data.train, &options)?;
    let (train, test) = match (&data.split, &data.test) {
        (Some(_), Some(_)) => return Err(usage("--split and --test are mutually exclusive")),
        (Some(split), None) => {
            let s = train.split(split[0], split[1])?;
            if s.unused > 0 {
                eprintln!("note: {} rows of {} left out of the split", s.unused, data.train.display());
            }
            (s.partition.train, Some(s.partition.test))
        }
        (None, Some(path)) => {
            let matching = CsvOptions::matching(&train).with_header(data.header).with_label(label);
            let test = read(path, &matching)?;
            (train, Some(test))
        }
        (None, None) => (train, None),
    };
    Ok((train, test))
}

fn build_model(args: &ModelArgs, n_features: usize) -> Result<ModelSpec, Failure> {
    let mut kind = args.distance;
    if let Some(a) = args.alpha {
        kind = if a == 1 {
            DistanceKind::MANHATTAN
        } else {
            DistanceKind::EUCLIDEAN
        };
    }
    let mut model = ModelSpec::reference(n_features)
        .with_k(args.k)
        .with_kind(kind)
        .with_ties(args.ties);
    if let Some(w) = &args.weights {
        if w.len() != n_features {
            return Err(usage(format!("--weights has {} values for {n_features} features", w.len())));
        }
        model = model.with_full_weights(w);
    }
    if let Some(keep) = &args.mask {
        if let Some(&bad) = keep.iter().find(|&&f| f == 0 || f > n_features) {
            return Err(usage(format!("--mask feature {bad} outside 1..={n_features}")));
        }
        for f in model.active_features() {
            if !keep.contains(&(f + 1)) {
                model = model.without_feature(f);
            }
        }
    }
    model.validate(n_features)?;
    Ok(model)
}

fn search_config(args: &SearchArgs, reference: ModelSpec) -> Result<SearchConfig, Failure> {
    if args.channels.is_empty() {
        return Err(usage("--channels needs at least one channel"));
    }
    let features = match args.feature_search {
        FeatureSearchArg::BestFirst => FeatureSearch::BestFirst { stale: args.stale },
        FeatureSearchArg::Greedy => FeatureSearch::Greedy,
    };
    let search = match args.grid_search {
        GridSearchArg::BestFirst => GridSearch::BestFirst { stale: args.stale },
        GridSearchArg::HillClimb => GridSearch::HillClimb,
        GridSearchArg::Cyclic => GridSearch::Cyclic,
    };
    let start = match args.weight_start {
        WeightStartArg::Zero => WeightStart::Zero,
        WeightStartArg::Reference => WeightStart::Reference,
    };
    let weighting = match args.weighting {
        WeightingArg::Quantized => Weighting::Quantized(QuantizedSearch {
            step: args.step,
            search,
            start,
        }),
        WeightingArg::Simplex => Weighting::Simplex { budget: args.budget },
    };
    Ok(SearchConfig {
        channels: args.channels.clone(),
        epsilon: args.epsilon,
        k_range: (args.k_range[0], args.k_range[1]),
        kinds: args.kinds.clone(),
        features,
        weighting,
        reference: Some(reference),
        max_levels: args.max_levels,
    })
}

fn write_output(out: &OutputArgs, contents: &str) -> Result<(), Failure> {
    if let Some(path) = &out.output {
        fs::write(path, contents).map_err(|source| {
            Failure::from(Error::Io {
                path: path.clone(),
                source,
            })
        })?;
    }
    Ok(())
}

fn print_report(title: &str, report: &EvalReport, class_names: &[String]) {
    println!("{title}: {report}");
    println!("confusion (rows true, columns predicted; {}):", class_names.join(" "));
    print!("{}", report.confusion);
}

fn describe(model: &ModelSpec) -> String {
    let kept: Vec<String> = model.active_features().iter().map(|f| (f + 1).to_string()).collect();
    let weights: Vec<String> = model.distance.weights.iter().map(|w| format!("{w}")).collect();
    format!(
        "k={} distance={} features=[{}] weights=[{}] ties={:?}",
        model.k,
        model.kind(),
        kept.join(","),
        weights.join(","),
        model.ties
    )
}

fn cmd_eval(cli: &Cli, data: &DataArgs, model: &ModelArgs, out: &OutputArgs) -> Outcome {
    let config = config_echo(cli);
    let (train, test) = load(data)?;
    let model = build_model(model, train.n_features())?;
    println!("config: {config}");
    println!("model: {}", describe(&model));
    let loo = leave_one_out(&model, &train)?;
    print_report("train (leave-one-out)", &loo, train.class_names());
    let test_report = test.as_ref().map(|t| evaluate(&model, &train, t)).transpose()?;
    if let Some(r) = &test_report {
        print_report("test", r, train.class_names());
    }
    let doc = json!({
        "config": config,
        "train": loo.summary(),
        "test": test_report.map(|r| r.summary()),
    });
    write_output(out, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;
    Ok(0)
}

fn print_trace(trace: &SearchTrace) {
    for level in &trace.levels {
        let test = level
            .reference_test
            .as_ref()
            .map(|t| format!(" test {:.1}%", 100.0 * t.accuracy))
            .unwrap_or_default();
        println!(
            "level {}: reference train {:.1}% ({}){test}",
            level.index + 1,
            100.0 * level.reference_score,
            level.reference_correct
        );
        for c in &level.candidates {
            let test = c
                .test
                .as_ref()
                .map(|t| format!(" test {:.1}% ({}/{})", 100.0 * t.accuracy, t.correct, t.total))
                .unwrap_or_default();
            println!(
                "  {:9} train {:.1}% ({}){test} evals {}  {}",
                c.channel.name(),
                100.0 * c.result.train_score,
                c.result.correct,
                c.result.evaluations,
                describe(&c.result.model)
            );
        }
        match &level.decision {
            Decision::Accepted { channel, .. } => println!("  accepted {channel}"),
            Decision::Stopped { reason } => println!("  stopped: {reason:?}"),
        }
    }
    println!("LOO evaluations: {}", trace.evaluations);
}

fn cmd_search(cli: &Cli, data: &DataArgs, model: &ModelArgs, search: &SearchArgs, out: &OutputArgs) -> Outcome {
    let config = config_echo(cli);
    let (train, test) = load(data)?;
    let reference = build_model(model, train.n_features())?;
    let search = search_config(search, reference)?;
    let (model, trace) = meta_search(&train, &search, test.as_ref())?;
    println!("config: {config}");
    print_trace(&trace);
    println!("final model: {}", describe(&model));
    let loo = leave_one_out(&model, &train)?;
    print_report("final train (leave-one-out)", &loo, train.class_names());
    if let Some(t) = &test {
        print_report("final test", &evaluate(&model, &train, t)?, train.class_names());
    }
    let mut lines = serde_json::to_string(&config).expect("config serializes") + "\n";
    lines.push_str(&trace.to_json_lines());
    lines.push_str(&(serde_json::to_string(&json!({"record": "final", "model": model})).expect("model serializes") + "\n"));
    write_output(out, &lines)?;
    Ok(0)
}

fn cmd_sequence(cli: &Cli, data: &DataArgs, model: &ModelArgs, search: &SearchArgs, out: &OutputArgs) -> Outcome {
    let config = config_echo(cli);
    let (train, test) = load(data)?;
    let reference = build_model(model, train.n_features())?;
    let search_config = search_config(search, reference)?;
    let (_, trace) = meta_search(&train, &search_config, None)?;
    let pool = pool_from_trace(&trace, &train)?;
    let seq = select_model_sequence(&pool, train.labels(), search.epsilon)?;
    println!("config: {config}");
    println!("pool: {} models from the search trace", pool.len());
    for (i, m) in seq.members.iter().enumerate() {
        println!("  member {}: {}", i + 1, describe(m));
    }
    println!(
        "combined LOO accuracy: {:.1}% ({} members)",
        100.0 * seq.combined_score,
        seq.members.len()
    );
    let test_score = match &test {
        Some(t) => {
            let correct = (0..t.len())
                .map(|r| Ok(ensemble_predict(&seq, &train, t.row(r))?.winner == t.label(r)))
                .collect::<Result<Vec<bool>, Error>>()?
                .into_iter()
                .filter(|&ok| ok)
                .count();
            println!("ensemble test: {:.1}% ({correct}/{})", 100.0 * correct as f64 / t.len() as f64, t.len());
            Some(json!({"correct": correct, "total": t.len()}))
        }
        None => None,
    };
    let doc = json!({"config": config, "sequence": seq, "test": test_score});
    write_output(out, &(serde_json::to_string_pretty(&doc).expect("sequence serializes") + "\n"))?;
    Ok(0)
}

fn cmd_reproduce(
    cli: &Cli,
    suite: Suite,
    data_dir: &Path,
    model: &ModelArgs,
    search: &SearchArgs,
    out: &OutputArgs,
) -> Outcome {
    let config = config_echo(cli);
    let n_features = match suite {
        Suite::Ionosphere => 34,
        _ => 6,
    };
    let reference = build_model(model, n_features)?;
    let search = search_config(search, reference)?;
    let report = run_suite(suite, data_dir, &search)?;
    println!("config: {config}");
    if report.unused_rows > 0 {
        println!("note: {} data rows outside the train/test split", report.unused_rows);
    }
    print_trace(&report.trace);
    println!("{report}");
    let doc = json!({"config": config, "report": report});
    write_output(out, &(serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"))?;
    Ok(if report.passed() { 0 } else { EXIT_TOLERANCE })
}
