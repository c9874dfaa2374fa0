use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use packing_core::training::EvalStats;

pub const REPORT_SCHEMA: &str = "packbench-report";
pub const REPORT_VERSION: u32 = 1;

/// One subset's results, pooled over seeds. Utilizations are fractions;
/// the text table shows them as percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub subset: String,
    pub mode: String,
    pub agent: String,
    pub seeds: usize,
    pub episodes: usize,
    pub uti: f64,
    pub uti_half_width: f64,
    pub num: f64,
    /// Present for adaptation reports.
    pub uti_adapted: Option<f64>,
    pub num_adapted: Option<f64>,
    pub delta_uti: Option<f64>,
}

impl ReportRow {
    /// Pools per-seed statistics over the same instance set.
    pub fn pooled(subset: &str, mode: &str, agent: &str, per_seed: &[EvalStats]) -> Self {
        let utis: Vec<f64> = per_seed.iter().flat_map(|s| s.utis.iter().copied()).collect();
        let nums: Vec<usize> = per_seed.iter().flat_map(|s| s.nums.iter().copied()).collect();
        let all = EvalStats::from_results(utis, nums);
        Self {
            subset: subset.into(),
            mode: mode.into(),
            agent: agent.into(),
            seeds: per_seed.len(),
            episodes: all.n,
            uti: all.mean_uti,
            uti_half_width: all.uti_half_width,
            num: all.mean_num,
            uti_adapted: None,
            num_adapted: None,
            delta_uti: None,
        }
    }

    pub fn with_adapted(mut self, adapted: &ReportRow) -> Self {
        self.uti_adapted = Some(adapted.uti);
        self.num_adapted = Some(adapted.num);
        self.delta_uti = Some(adapted.uti - self.uti);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub version: u32,
    pub rows: Vec<ReportRow>,
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Self { schema: REPORT_SCHEMA.into(), version: REPORT_VERSION, rows }
    }

    pub fn to_table(&self) -> String {
        let adapt = self.rows.iter().any(|r| r.delta_uti.is_some());
        let mut header = vec!["Subset", "Mode", "Agent", "Seeds", "Uti(%)", "±", "Num"];
        if adapt {
            header.extend(["Uti adapted(%)", "Num adapted", "ΔUti(%)"]);
        }
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![
                    r.subset.clone(),
                    r.mode.clone(),
                    r.agent.clone(),
                    r.seeds.to_string(),
                    pct(r.uti),
                    pct(r.uti_half_width),
                    format!("{:.1}", r.num),
                ];
                if adapt {
                    cells.push(r.uti_adapted.map(pct).unwrap_or_default());
                    cells.push(r.num_adapted.map(|n| format!("{n:.1}")).unwrap_or_default());
                    cells.push(r.delta_uti.map(|d| format!("{:+.1}", 100.0 * d)).unwrap_or_default());
                }
                cells
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| body.iter().map(|row| row[i].chars().count()).chain([header[i].chars().count()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        let line = |cells: Vec<&str>, out: &mut String| {
            let padded: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let pad = widths[i] - c.chars().count();
                    if i < 3 { format!("{c}{}", " ".repeat(pad)) } else { format!("{}{c}", " ".repeat(pad)) }
                })
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(header.clone(), &mut out);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(rule.iter().map(String::as_str).collect(), &mut out);
        for row in &body {
            line(row.iter().map(String::as_str).collect(), &mut out);
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("subset,mode,agent,seeds,episodes,uti,uti_half_width,num,uti_adapted,num_adapted,delta_uti\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.subset,
                r.mode,
                r.agent,
                r.seeds,
                r.episodes,
                r.uti,
                r.uti_half_width,
                r.num,
                opt(r.uti_adapted),
                opt(r.num_adapted),
                opt(r.delta_uti)
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(utis: &[f64]) -> EvalStats {
        EvalStats::from_results(utis.to_vec(), vec![3; utis.len()])
    }

    #[test]
    fn full_containers_report_one_hundred_percent() {
        let row = ReportRow::pooled("Default", "discrete", "policy", &[stats(&[1.0, 1.0])]);
        let t = EvalReport::new(vec![row]).to_table();
        assert!(t.lines().nth(2).unwrap().contains("100.0"), "{t}");
    }

    #[test]
    fn delta_is_difference_of_means() {
        let base = ReportRow::pooled("OOD", "discrete", "policy", &[stats(&[0.5, 0.7]), stats(&[0.6, 0.6])]);
        let adapted = ReportRow::pooled("OOD", "discrete", "policy", &[stats(&[0.7, 0.7]), stats(&[0.6, 0.8])]);
        let row = base.clone().with_adapted(&adapted);
        assert_eq!(row.seeds, 2);
        assert_eq!(row.delta_uti, Some(adapted.uti - base.uti));
        let report = EvalReport::new(vec![row]);
        assert!(report.to_table().contains("+10.0"));
        assert_eq!(report.to_csv().lines().count(), 2);
        let back: EvalReport = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(back, report);
    }
}
