//! Plain-text tables for the terminal.

use std::fmt::Write;

use slicewise_core::suggest::DominantFeature;
use slicewise_core::{Audit, DominantFeatureRanking, MaterializedGroup, MetricValue};
use slicewise_server::payload::SimilarResponse;

fn fmt_metric(v: MetricValue) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.3}"))
}

fn dominant_text(top: &[DominantFeature]) -> String {
    top.iter()
        .map(|d| format!("{}={} ({:.0}%)", d.feature, d.value, d.fraction * 100.0))
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn audit_table(
    audit: &Audit,
    ranked: &[&MaterializedGroup],
    sort: &str,
    metrics: &[String],
    top: usize,
) -> String {
    let mut out = String::new();
    let averages = audit.dataset_averages();
    let _ = writeln!(
        out,
        "{} rows ({} dropped), {} features, k = {}",
        audit.row_count(),
        audit.dropped_rows,
        audit.schema.len(),
        audit.suggestions.config.k
    );
    let _ = writeln!(
        out,
        "dataset {sort} = {}; {} suggested groups, sorted by {sort}\n",
        fmt_metric(averages.get(sort)),
        ranked.len()
    );
    let mut header = format!("{:>4}  {:<16}  {:>7}", "#", "id", "size");
    for m in metrics {
        let _ = write!(header, "  {m:>11}");
    }
    let _ = writeln!(out, "{header}  dominant features");
    for (i, g) in ranked.iter().take(top).enumerate() {
        let mut line = format!("{:>4}  {:<16}  {:>7}", i + 1, g.id(), g.size());
        for m in metrics {
            let _ = write!(line, "  {:>11}", fmt_metric(g.metric(m)));
        }
        let dom = DominantFeatureRanking::compute(&g.distribution, &audit.schema)
            .map(|r| dominant_text(r.top(3)))
            .unwrap_or_default();
        let _ = writeln!(out, "{line}  {dom}");
    }
    out
}

pub fn similar_table(res: &SimilarResponse, metric: &str) -> String {
    let mut out = String::new();
    let src = &res.source;
    let _ = writeln!(
        out,
        "{} [{}] size {}, {metric} {}\n",
        src.name,
        src.id,
        src.size,
        fmt_metric(src.metrics.get(metric))
    );
    let _ = writeln!(out, "similar groups");
    let _ = writeln!(
        out,
        "{:>9}  {:<16}  {:>7}  {:>9}  most divergent",
        "distance", "id", "size", metric
    );
    for s in &res.similar {
        let _ = writeln!(
            out,
            "{:>9.4}  {:<16}  {:>7}  {:>9}  {}",
            s.distance,
            s.group.id,
            s.group.size,
            fmt_metric(s.group.metrics.get(metric)),
            s.most_divergent_feature
        );
    }
    if let Some(cf) = &res.counterfactuals {
        let _ = writeln!(out, "\ncounterfactual neighbors (radius {})", cf.radius);
        let _ = writeln!(out, "{:>9}  {:>9}  {:>7}  change", metric, "delta", "size");
        for n in &cf.neighbors {
            let change = n
                .delta
                .iter()
                .map(|c| {
                    format!(
                        "{}: {} -> {}",
                        c.feature,
                        c.from.as_deref().unwrap_or("*"),
                        c.to.as_deref().unwrap_or("*")
                    )
                })
                .collect::<Vec<_>>()
                .join("; ");
            let _ = writeln!(
                out,
                "{:>9}  {:>9}  {:>7}  {change}",
                fmt_metric(n.metric_value),
                fmt_metric(n.metric_delta),
                n.group.size
            );
        }
    }
    out
}
