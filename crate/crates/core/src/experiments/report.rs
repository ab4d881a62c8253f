//! Text renderings of an experiment report.

use std::fmt::Write as _;

use super::{ExperimentReport, LiftSummary};

fn one_decimal(x: f64) -> String {
    let s = format!("{x:.1}");
    if s == "-0.0" {
        "0.0".into()
    } else {
        s
    }
}

fn csv_line(fields: &[String]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(fields).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

fn policies(report: &ExperimentReport) -> Vec<String> {
    report.spec.policies.iter().map(|p| p.label()).collect()
}

fn find<'a>(report: &'a ExperimentReport, cell: usize, policy: &str) -> Option<&'a LiftSummary> {
    report.cells.get(cell)?.summaries.iter().find(|s| s.policy == policy)
}

/// Delimited lift table: one sub-table per varied axis, rows = policies,
/// cells = `[CI low, CI high]`.
pub fn emit_table(report: &ExperimentReport) -> String {
    let spec = &report.spec;
    let mut out = format!(
        "# lift % vs rule_based; {} lifts; {} 95% CI; runs={}; seed={}\n",
        spec.pairing, spec.ci_method, spec.runs, spec.base_seed
    );
    for (t, table) in report.tables.iter().enumerate() {
        let letter = (b'a' + (t % 26) as u8) as char;
        let _ = writeln!(out, "# ({letter}) {}", table.axis.title());
        let mut header = vec!["policy".to_string()];
        header.extend(table.columns.iter().map(|(label, _)| label.clone()));
        out.push_str(&csv_line(&header));
        for policy in policies(report) {
            let mut row = vec![policy.clone()];
            for (_, cell) in &table.columns {
                row.push(match find(report, *cell, &policy) {
                    Some(s) => format!("[{}, {}]", one_decimal(s.ci_low), one_decimal(s.ci_high)),
                    None => "NA".into(),
                });
            }
            out.push_str(&csv_line(&row));
        }
    }
    out
}

/// Machine-readable series, one row per (axis, scenario, policy).
pub fn emit_plot_data(report: &ExperimentReport) -> String {
    let mut out = String::from("axis,scenario,policy,mean,ci_low,ci_high,runs,dropped\n");
    for table in &report.tables {
        for (label, cell) in &table.columns {
            for policy in policies(report) {
                if let Some(s) = find(report, *cell, &policy) {
                    out.push_str(&csv_line(&[
                        table.axis.as_str().into(),
                        label.clone(),
                        policy,
                        s.mean.to_string(),
                        s.ci_low.to_string(),
                        s.ci_high.to_string(),
                        s.runs.to_string(),
                        s.dropped.to_string(),
                    ]));
                }
            }
        }
    }
    out
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#9c755f",
];

/// Grouped bar chart with 95% error bars, one panel per axis.
pub fn emit_svg(report: &ExperimentReport) -> String {
    let names = policies(report);
    let panel_w = 360.0;
    let panel_h = 260.0;
    let (top, left, bottom) = (40.0, 50.0, 50.0);
    let width = left + panel_w * report.tables.len().max(1) as f64 + 20.0;
    let height = top + panel_h + bottom + 18.0 * names.len() as f64;

    let mut lo: f64 = 0.0;
    let mut hi: f64 = 0.0;
    for c in &report.cells {
        for s in &c.summaries {
            lo = lo.min(s.ci_low);
            hi = hi.max(s.ci_high);
        }
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let y = |v: f64| top + panel_h * (hi - v) / (hi - lo);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (t, table) in report.tables.iter().enumerate() {
        let x0 = left + panel_w * t as f64;
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
            x0 + panel_w / 2.0,
            table.axis.title()
        );
        let _ = writeln!(
            out,
            r##"<line x1="{x0:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="#333"/>"##,
            y(0.0),
            x0 + panel_w - 10.0,
            y(0.0)
        );
        let groups = table.columns.len().max(1) as f64;
        let group_w = (panel_w - 10.0) / groups;
        let bar_w = group_w * 0.8 / names.len().max(1) as f64;
        for (g, (label, cell)) in table.columns.iter().enumerate() {
            let gx = x0 + group_w * g as f64 + group_w * 0.1;
            let _ = writeln!(
                out,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{label}</text>"#,
                gx + group_w * 0.4,
                top + panel_h + 16.0
            );
            for (p, name) in names.iter().enumerate() {
                let Some(s) = find(report, *cell, name) else { continue };
                let bx = gx + bar_w * p as f64;
                let (y_top, y_bot) = (y(s.mean.max(0.0)), y(s.mean.min(0.0)));
                let cx = bx + bar_w / 2.0;
                let _ = writeln!(
                    out,
                    r#"<rect x="{bx:.1}" y="{y_top:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                    bar_w * 0.9,
                    (y_bot - y_top).max(0.5),
                    PALETTE[p % PALETTE.len()]
                );
                let _ = writeln!(
                    out,
                    r##"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="#000"/>"##,
                    y(s.ci_high),
                    y(s.ci_low)
                );
            }
        }
    }
    let _ = writeln!(
        out,
        r#"<text x="12" y="{:.1}" transform="rotate(-90 12 {:.1})" text-anchor="middle">lift % (95% CI)</text>"#,
        top + panel_h / 2.0,
        top + panel_h / 2.0
    );
    for (p, name) in names.iter().enumerate() {
        let ly = top + panel_h + bottom + 18.0 * p as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{left:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{ly:.1}">{name}</text>"#,
            ly - 9.0,
            PALETTE[p % PALETTE.len()],
            left + 16.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{CellReport, ExperimentSpec};
    use crate::policies::{PolicyKind, PolicySpec};

    fn report(lifts: &[(f64, f64, f64)]) -> ExperimentReport {
        let spec = ExperimentSpec {
            axes: vec![crate::experiments::Axis::Collection],
            policies: vec![PolicySpec::new(PolicyKind::RuleBased), PolicySpec::new(PolicyKind::LinUcb)],
            runs: 2,
            ..ExperimentSpec::default()
        };
        let cells = spec
            .cells()
            .into_iter()
            .zip(lifts)
            .map(|(cell, &(m, l, h))| CellReport {
                cell,
                summaries: vec![
                    LiftSummary {
                        policy: "rule_based".into(),
                        mean: 0.0,
                        ci_low: 0.0,
                        ci_high: 0.0,
                        runs: 2,
                        dropped: 0,
                    },
                    LiftSummary {
                        policy: "lin_ucb".into(),
                        mean: m,
                        ci_low: l,
                        ci_high: h,
                        runs: 2,
                        dropped: 0,
                    },
                ],
                runs: vec![],
                failed_runs: 0,
            })
            .collect();
        ExperimentReport {
            format: "salesim-experiment".into(),
            version: 1,
            run_seeds: spec.run_seeds(),
            tables: spec.tables(),
            spec,
            config: None,
            cells,
            failures: vec![],
        }
    }

    #[test]
    fn table_shape_and_baseline_row() {
        let r = report(&[(1.0, 0.5, 1.5), (2.0, 1.0, 3.0), (-0.01, -0.04, 0.02)]);
        let t = emit_table(&r);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[1], "# (a) Varying data collection");
        assert_eq!(lines[2], "policy,observational,partial,random");
        assert_eq!(lines[3], r#"rule_based,"[0.0, 0.0]","[0.0, 0.0]","[0.0, 0.0]""#);
        assert_eq!(lines[4], r#"lin_ucb,"[0.5, 1.5]","[1.0, 3.0]","[0.0, 0.0]""#);
    }

    #[test]
    fn empty_report_is_header_only() {
        let mut r = report(&[]);
        r.tables.clear();
        assert_eq!(emit_table(&r).lines().count(), 1);
        assert_eq!(emit_plot_data(&r).lines().count(), 1);
    }

    #[test]
    fn plot_rows_and_bounds() {
        let r = report(&[(1.0, 0.5, 1.5), (2.0, 1.0, 3.0), (0.0, -1.0, 1.0)]);
        let p = emit_plot_data(&r);
        assert_eq!(p.lines().count(), 1 + 3 * 2);
        for line in p.lines().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let (m, l, h): (f64, f64, f64) = (f[3].parse().unwrap(), f[4].parse().unwrap(), f[5].parse().unwrap());
            assert!(l <= m && m <= h);
        }
        assert_eq!(emit_svg(&r), emit_svg(&r));
        assert!(emit_svg(&r).starts_with("<svg"));
    }
}
