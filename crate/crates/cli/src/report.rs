//! Markdown summary of one or more result records.

use std::fmt::Write as _;

use crate::record::{format_real, Check, ResultRecord};

/// Rows of each table copied into the appendix.
pub const APPENDIX_ROWS: usize = 40;

fn status(c: &Check) -> &'static str {
    match (c.enabled, c.passed, c.exploratory) {
        (false, _, _) => "skipped",
        (true, true, _) => "pass",
        (true, false, true) => "fail (exploratory)",
        (true, false, false) => "FAIL",
    }
}

fn failing(c: &Check) -> bool {
    c.enabled && !c.passed
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), format_real)
}

/// One section per checked topic, failing topics and failing checks first,
/// followed by a CSV appendix of the numeric tables.
pub fn emit_report(records: &[ResultRecord]) -> String {
    let mut out = String::from("# pinlab report\n\n");
    let overall = records.iter().all(|r| r.passed);
    let _ = writeln!(
        out,
        "Records: {}. Overall status: {}.\n",
        records.len(),
        if overall { "PASS" } else { "FAIL" }
    );

    let mut topics: Vec<(String, Vec<(&ResultRecord, &Check)>)> = Vec::new();
    for r in records {
        for c in &r.checks {
            match topics.iter_mut().find(|(t, _)| *t == c.topic) {
                Some((_, list)) => list.push((r, c)),
                None => topics.push((c.topic.clone(), vec![(r, c)])),
            }
        }
    }
    for (_, list) in &mut topics {
        list.sort_by_key(|(_, c)| !failing(c));
    }
    topics.sort_by_key(|(_, list)| !list.iter().any(|(_, c)| failing(c)));

    let failures: Vec<&Check> = topics
        .iter()
        .flat_map(|(_, l)| l.iter().map(|(_, c)| *c))
        .filter(|c| failing(c))
        .collect();
    if !failures.is_empty() {
        out.push_str("Failing checks:\n\n");
        for c in failures {
            let _ = writeln!(out, "- `{}` ({}): {}", c.name, status(c), c.detail);
        }
        out.push('\n');
    }

    for (topic, list) in &topics {
        let _ = writeln!(out, "## {topic}\n");
        out.push_str("| check | command | status | measured | expected | margin | detail |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for (r, c) in list {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} | {} |",
                c.name,
                r.command,
                status(c),
                num(c.measured),
                num(c.reference),
                num(c.margin),
                c.detail.replace('|', "\\|")
            );
        }
        out.push('\n');
    }

    let tables: Vec<_> = records
        .iter()
        .flat_map(|r| r.outputs.iter().map(move |t| (r, t)))
        .collect();
    if !tables.is_empty() {
        out.push_str("## Appendix: numeric tables\n\n");
        for (r, t) in tables {
            let _ = writeln!(out, "### {} / {}\n", r.command, t.file_name());
            let mut head = t.clone();
            head.rows.truncate(APPENDIX_ROWS);
            out.push_str("```csv\n");
            out.push_str(&head.to_csv());
            out.push_str("```\n");
            if t.rows.len() > APPENDIX_ROWS {
                let _ = writeln!(out, "\n({} of {} rows shown)", APPENDIX_ROWS, t.rows.len());
            }
            out.push('\n');
        }
    }
    out
}
