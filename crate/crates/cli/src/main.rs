mod config;
mod report;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};
use slicewise_core::metrics::ACCURACY;
use slicewise_core::subgroups::DEFAULT_MIN_SIZE;
use slicewise_core::{
    counterfactual_neighbors, find_similar, rank_suggestions_ordered, Audit, Error as CoreError,
    ExportDocument, MetricRegistry, SimilarQuery, SortOrder, SubgroupSpec,
};
use slicewise_server::payload::{
    CounterfactualEntry, Counterfactuals, GroupSummary, SimilarEntry, SimilarResponse,
};
use slicewise_server::ServerConfig;

use config::DataArgs;

#[derive(Parser)]
#[command(
    name = "slicewise",
    version,
    about = "Intersectional audits of binary classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a labelled dataset and report the worst-performing subgroups.
    Audit(AuditArgs),
    /// Groups similar to a predicate group, and its counterfactual neighbors.
    Similar(SimilarArgs),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(clap::Args)]
struct AuditArgs {
    input: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated metrics to report (default: all).
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    #[arg(long, default_value = ACCURACY)]
    sort: String,
    /// Highest values of the sort metric first.
    #[arg(long)]
    descending: bool,
    #[arg(long, default_value_t = DEFAULT_MIN_SIZE)]
    min_size: u64,
    /// Rows shown in the summary table.
    #[arg(long, default_value_t = 10)]
    top: usize,
    /// Where to write the export document.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the export document to stdout instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct SimilarArgs {
    input: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Source group as `feature=value,feature=value`.
    #[arg(long)]
    group: String,
    #[arg(long, default_value_t = 1)]
    radius: usize,
    /// Metric the counterfactual neighbors are ranked by.
    #[arg(long, default_value = ACCURACY)]
    metric: String,
    /// Order the similar groups by this metric instead of distance.
    #[arg(long)]
    sort: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MIN_SIZE)]
    min_size: u64,
    #[arg(long, default_value_t = 10)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(clap::Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = 3600)]
    idle_timeout_secs: u64,
    #[arg(long, default_value_t = 512)]
    max_upload_mb: usize,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Audit(args) => audit(args),
        Command::Similar(args) => similar(args),
        Command::Serve(args) => serve(args),
    }
}

fn load(input: &Path, data: &DataArgs) -> Result<(Audit, String)> {
    let (ingest, cluster) = data.resolve()?;
    let bytes = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    let dataset_id = hex::encode(Sha256::digest(&bytes));
    let audit = Audit::load(&bytes[..], &ingest, &cluster, MetricRegistry::standard()).map_err(
        |e| match e {
            CoreError::Malformed {
                line: Some(line),
                message,
            } => anyhow!("{}:{line}: {message}", input.display()),
            e => anyhow!("{}: {e}", input.display()),
        },
    )?;
    Ok((audit, dataset_id))
}

fn selected_metrics(
    registry: &MetricRegistry,
    metrics: Option<Vec<String>>,
) -> Result<Vec<String>> {
    let metrics = metrics.unwrap_or_else(|| registry.ids().map(String::from).collect());
    for m in &metrics {
        registry.check(m)?;
    }
    Ok(metrics)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn audit(args: AuditArgs) -> Result<()> {
    let registry = MetricRegistry::standard();
    registry.check(&args.sort)?;
    let metrics = selected_metrics(&registry, args.metrics)?;
    let (audit, dataset_id) = load(&args.input, &args.data)?;

    let order = if args.descending {
        SortOrder::Descending
    } else {
        SortOrder::Ascending
    };
    let ranked = rank_suggestions_ordered(
        audit.suggestions.groups.iter().collect(),
        &args.sort,
        order,
        args.min_size,
        &audit.registry,
    )?;
    let mut doc = ExportDocument::new(dataset_id, ranked.iter().copied(), &audit.schema);
    for g in &mut doc.groups {
        g.metrics = g.metrics.select(&metrics);
    }
    if let Some(out) = &args.out {
        write_json(out, &doc)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!(
            "{}",
            report::audit_table(&audit, &ranked, &args.sort, &metrics, args.top)
        );
    }
    Ok(())
}

/// Splits `f=v,f=v`. A comma not followed by `name=` belongs to the value,
/// so bin labels such as `[18, 25)` survive.
fn parse_group(raw: &str) -> Result<Vec<(String, String)>> {
    let mut parts: Vec<String> = Vec::new();
    for piece in raw.split(',') {
        match parts.last_mut() {
            Some(last) if !piece.contains('=') => {
                last.push(',');
                last.push_str(piece);
            }
            _ => parts.push(piece.to_string()),
        }
    }
    parts
        .iter()
        .map(|p| {
            let (f, v) = p
                .split_once('=')
                .ok_or_else(|| anyhow!("bad group term `{p}`, expected feature=value"))?;
            Ok((f.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

fn similar(args: SimilarArgs) -> Result<()> {
    let registry = MetricRegistry::standard();
    registry.check(&args.metric)?;
    if let Some(s) = &args.sort {
        registry.check(s)?;
    }
    let pairs = parse_group(&args.group)?;
    if pairs.is_empty() {
        bail!("--group needs at least one feature=value");
    }
    let (audit, _) = load(&args.input, &args.data)?;
    let spec = SubgroupSpec::predicate(&audit.schema, &pairs)?;
    let source = audit.materialize(&spec);
    let metrics: Vec<String> = audit.registry.ids().map(String::from).collect();

    let mut universe = vec![&source];
    universe.extend(audit.suggestions.groups.iter());
    let results = find_similar(
        &SimilarQuery {
            source: source.id(),
            sort_metric: args.sort.as_deref(),
            min_size: args.min_size,
            limit: Some(args.limit),
        },
        &universe,
        &audit.schema,
        &audit.registry,
    )?;
    let neighbors = counterfactual_neighbors(
        &spec,
        args.radius,
        &args.metric,
        &audit.table,
        &audit.schema,
        &audit.registry,
    )?;

    let response = SimilarResponse {
        source: GroupSummary::new(&source, &audit.schema, &metrics),
        similar: results
            .into_iter()
            .map(|r| {
                let g = universe.iter().find(|g| g.id() == r.candidate).unwrap();
                SimilarEntry {
                    group: GroupSummary::new(g, &audit.schema, &metrics),
                    distance: r.distance,
                    per_feature: r.per_feature,
                    most_divergent_feature: r.most_divergent_feature,
                    counterfactual_delta: r.counterfactual_delta,
                }
            })
            .collect(),
        counterfactuals: Some(Counterfactuals {
            metric: args.metric.clone(),
            radius: args.radius,
            neighbors: neighbors
                .iter()
                .map(|n| CounterfactualEntry::new(n, &audit.schema, &metrics))
                .collect(),
        }),
    };
    if let Some(out) = &args.out {
        write_json(out, &response)?;
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&response)?);
    } else {
        print!("{}", report::similar_table(&response, &args.metric));
    }
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    tracing_subscriber::fmt()
        .with_max_level(tracing_subscriber::filter::LevelFilter::INFO)
        .init();
    let config = ServerConfig {
        idle_timeout: Duration::from_secs(args.idle_timeout_secs),
        max_upload_bytes: args.max_upload_mb * 1024 * 1024,
    };
    tokio::runtime::Runtime::new()?
        .block_on(slicewise_server::serve(args.addr, config))
        .with_context(|| format!("serving on {}", args.addr))
}
