//! Consolidation of run artifacts. Nothing is recomputed: estimates of runs
//! that differ only in their seed are pooled by inverse-variance weighting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use serde::Serialize;

use crate::artifact::{Artifact, Estimate};
use crate::config::hash_text;

#[derive(Clone, Debug, Serialize)]
pub struct Pooled {
    pub name: String,
    pub value: f64,
    pub stderr: f64,
    pub ci: [f64; 2],
    pub runs: usize,
    pub count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct Group {
    pub command: String,
    /// Config keys shared by the group, seed excluded.
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<String>,
    pub artifacts: Vec<String>,
    pub estimates: Vec<Pooled>,
    pub verdicts: Vec<Option<String>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Mismatch {
    pub command: String,
    /// Keys whose values differ between the groups.
    pub keys: Vec<String>,
    pub groups: Vec<usize>,
    pub note: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub inputs: Vec<String>,
    pub groups: Vec<Group>,
    pub mismatches: Vec<Mismatch>,
}

/// Inverse-variance pooling. Exact values (zero stderr) pool only with
/// equal exact values.
pub fn pool(name: &str, ests: &[&Estimate]) -> Pooled {
    let count = ests.iter().map(|e| e.count).sum();
    let runs = ests.len();
    let (value, stderr) = if ests.iter().any(|e| e.stderr == 0.0) {
        let v = ests.iter().map(|e| e.value).sum::<f64>() / runs as f64;
        let spread = ests.iter().map(|e| (e.value - v).abs()).fold(0.0, f64::max);
        (v, spread)
    } else {
        let w: f64 = ests.iter().map(|e| 1.0 / (e.stderr * e.stderr)).sum();
        (ests.iter().map(|e| e.value / (e.stderr * e.stderr)).sum::<f64>() / w, w.sqrt().recip())
    };
    Pooled { name: name.to_string(), value, stderr, ci: [value - 1.96 * stderr, value + 1.96 * stderr], runs, count }
}

fn collect_paths(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == "json"))
                .filter(|q| !q.file_name().unwrap().to_string_lossy().starts_with("report-"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        bail!("report needs at least one artifact");
    }
    Ok(out)
}

/// Reads and checks the artifacts; a config hash that does not match the
/// embedded config is an error.
pub fn build(inputs: &[PathBuf]) -> Result<Report> {
    let paths = collect_paths(inputs)?;
    let mut arts = Vec::new();
    for p in &paths {
        let a = Artifact::read(p)?;
        let actual = a.embedded_config().hash();
        if actual != a.config_hash {
            bail!("{}: claimed config hash {} does not match the embedded config ({actual})", p.display(), a.config_hash);
        }
        arts.push((p.display().to_string(), a));
    }
    let mut keyed: BTreeMap<(String, BTreeMap<String, String>), Vec<usize>> = BTreeMap::new();
    for (i, (_, a)) in arts.iter().enumerate() {
        let mut cfg = a.config.clone();
        cfg.remove("seed");
        keyed.entry((a.command.clone(), cfg)).or_default().push(i);
    }
    let mut groups = Vec::new();
    for ((command, config), members) in keyed {
        let mut names: Vec<String> = Vec::new();
        for &i in &members {
            for e in &arts[i].1.estimates {
                if !names.contains(&e.name) {
                    names.push(e.name.clone());
                }
            }
        }
        let estimates = names
            .iter()
            .map(|n| {
                let es: Vec<&Estimate> = members.iter().filter_map(|&i| arts[i].1.estimates.iter().find(|e| &e.name == n)).collect();
                pool(n, &es)
            })
            .collect();
        groups.push(Group {
            command,
            config,
            seeds: members.iter().map(|&i| arts[i].1.config.get("seed").cloned().unwrap_or_default()).collect(),
            artifacts: members.iter().map(|&i| arts[i].0.clone()).collect(),
            estimates,
            verdicts: members.iter().map(|&i| arts[i].1.verdict.clone()).collect(),
        });
    }
    let mut mismatches = Vec::new();
    let mut by_command: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_command.entry(g.command.as_str()).or_default().push(i);
    }
    for (command, idx) in by_command {
        if idx.len() < 2 {
            continue;
        }
        let keys: Vec<String> = groups[idx[0]]
            .config
            .keys()
            .filter(|k| idx.iter().any(|&j| groups[j].config.get(*k) != groups[idx[0]].config.get(*k)))
            .cloned()
            .collect();
        let note = if keys.iter().any(|k| k == "beta") {
            "beta differs: refused to pool, listed separately".to_string()
        } else {
            "configs differ beyond the seed: not pooled".to_string()
        };
        mismatches.push(Mismatch { command: command.to_string(), keys, groups: idx, note });
    }
    Ok(Report { inputs: arts.into_iter().map(|a| a.0).collect(), groups, mismatches })
}

pub fn summary(r: &Report) -> String {
    let mut s = String::new();
    for (i, g) in r.groups.iter().enumerate() {
        let _ = writeln!(s, "[{i}] {} ({} run{}, seeds {})", g.command, g.seeds.len(), if g.seeds.len() == 1 { "" } else { "s" }, g.seeds.join(","));
        for e in &g.estimates {
            let _ = writeln!(s, "    {:<32} {:>14.6e} +- {:<12.4e} [{:.6e}, {:.6e}]", e.name, e.value, e.stderr, e.ci[0], e.ci[1]);
        }
        for v in g.verdicts.iter().flatten() {
            let _ = writeln!(s, "    verdict: {v}");
        }
    }
    for m in &r.mismatches {
        let groups: Vec<String> = m.groups.iter().map(|g| g.to_string()).collect();
        let _ = writeln!(s, "mismatch in {}: keys {} across groups {}; {}", m.command, m.keys.join(","), groups.join(","), m.note);
    }
    s
}

/// Writes `report-<hash>.json` and `.txt` into `out`.
pub fn write(r: &Report, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    let v = serde_json::to_value(r)?;
    let json = serde_json::to_string_pretty(&v)? + "\n";
    let stem = format!("report-{}", &hash_text(&json)[..12]);
    let a = out.join(format!("{stem}.json"));
    let b = out.join(format!("{stem}.txt"));
    std::fs::write(&a, json)?;
    std::fs::write(&b, summary(r))?;
    Ok(vec![a, b])
}
