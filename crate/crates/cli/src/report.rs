use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::data::Condition;

/// Row order of the comparison table.
pub const COMPARISONS: [(Condition, Condition); 6] = [
    (Condition::Face, Condition::FaceBg),
    (Condition::Face, Condition::EntireFrame),
    (Condition::Face, Condition::Background),
    (Condition::Background, Condition::FaceBg),
    (Condition::Background, Condition::EntireFrame),
    (Condition::FaceBg, Condition::EntireFrame),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub condition: String,
    pub videos: usize,
    pub mean_trait_rho: f64,
    /// `None` where a trait's correlation is undefined (constant column).
    pub per_trait_rho: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub first: String,
    pub second: String,
    pub z_obs: Option<f64>,
    pub p: Option<f64>,
    pub significant: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub confounded: bool,
    pub split_verdict: String,
    pub shared_source_videos: usize,
    pub alpha: f64,
    pub num_models: usize,
    pub alpha_corrected: f64,
    pub conditions: Vec<ConditionResult>,
    pub comparisons: Vec<ComparisonRow>,
    pub sigma: BTreeMap<String, f64>,
}

pub const WATERMARK: &str = "CONFOUNDED: training and testing share source videos; these results do not measure generalisation";

fn label(name: &str) -> &str {
    match name.parse::<Condition>() {
        Ok(c) => c.label(),
        Err(_) => name,
    }
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.confounded {
            writeln!(s, "{WATERMARK}\n").unwrap();
        }
        writeln!(
            s,
            "split verdict: {} ({} shared source videos)\n",
            self.split_verdict, self.shared_source_videos
        )
        .unwrap();
        writeln!(
            s,
            "{:<14} {:>6} {:>9} {:>8} {:>8} {:>8} {:>8} {:>8}",
            "condition", "videos", "mean rho", "O", "C", "E", "A", "N"
        )
        .unwrap();
        for c in &self.conditions {
            write!(s, "{:<14} {:>6} {:>9.4}", label(&c.condition), c.videos, c.mean_trait_rho).unwrap();
            for t in ["o", "c", "e", "a", "n_bar"] {
                match c.per_trait_rho.get(t).copied().flatten() {
                    Some(r) => write!(s, " {r:>8.4}").unwrap(),
                    None => write!(s, " {:>8}", "-").unwrap(),
                }
            }
            s.push('\n');
        }
        writeln!(s, "\n{:<28} {:>8} {:>10}", "comparison", "z_obs", "p").unwrap();
        for r in &self.comparisons {
            let star = if r.significant == Some(true) { " *" } else { "" };
            let name = format!("{} vs. {}{star}", label(&r.first), label(&r.second));
            match (r.z_obs, r.p) {
                (Some(z), Some(p)) => writeln!(s, "{name:<28} {z:>8.2} {p:>10.2e}").unwrap(),
                _ => writeln!(s, "{name:<28} {:>8} {:>10}", "-", "-").unwrap(),
            }
        }
        writeln!(
            s,
            "* p < alpha / m = {} / {} = {:.4}",
            self.alpha, self.num_models, self.alpha_corrected
        )
        .unwrap();
        if !self.sigma.is_empty() {
            let parts: Vec<String> = self.sigma.iter().map(|(k, v)| format!("{k} {v:.1}")).collect();
            writeln!(s, "sigma: {}", parts.join(", ")).unwrap();
        }
        s
    }
}
