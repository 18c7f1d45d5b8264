//! CSV and markdown comparison tables.

use std::path::{Path, PathBuf};

use crate::error::{input, io_err, Result};

use super::EvalRow;

/// Architecture grouping used by the markdown table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Block {
    Traditional,
    StateOfTheArt,
    VitBackbone,
}

impl Block {
    pub fn of(variant: &str) -> Self {
        match variant {
            "cnn" | "resnet" => Block::Traditional,
            v if v.starts_with("transcrowd") => Block::StateOfTheArt,
            _ => Block::VitBackbone,
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Block::Traditional => "Traditional",
            Block::StateOfTheArt => "State of the art",
            Block::VitBackbone => "ViT backbones",
        }
    }
}

pub fn write_csv(rows: &[EvalRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Vec<EvalRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<EvalRow>, csv::Error>>()?)
}

/// Means over rows sharing `(model, variant, dataset)`, in first-seen order.
/// Rows that stand alone come back unchanged.
pub fn aggregate(rows: &[EvalRow]) -> Vec<EvalRow> {
    let mut groups: Vec<Vec<&EvalRow>> = Vec::new();
    for r in rows {
        let key = |x: &EvalRow| (x.model.clone(), x.variant.clone(), x.dataset.clone());
        match groups.iter_mut().find(|g| key(g[0]) == key(r)) {
            Some(g) => g.push(r),
            None => groups.push(vec![r]),
        }
    }
    groups
        .into_iter()
        .map(|g| {
            if g.len() == 1 {
                return g[0].clone();
            }
            let n = g.len() as f64;
            let mean = |f: fn(&EvalRow) -> f64| g.iter().map(|r| f(r)).sum::<f64>() / n;
            EvalRow {
                mae: mean(|r| r.mae),
                rmse: mean(|r| r.rmse),
                ms_per_image: mean(|r| r.ms_per_image),
                mae_rounded: mean(|r| r.mae_rounded),
                seed: None,
                ..g[0].clone()
            }
        })
        .collect()
}

/// Indices of the best and second-best (lowest) values, ties to the earlier row.
fn podium(values: &[Option<f64>]) -> (Option<usize>, Option<usize>) {
    let mut ranked: Vec<(usize, f64)> = values.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    (ranked.first().map(|r| r.0), ranked.get(1).map(|r| r.0))
}

/// Models as rows, datasets as MAE/RMSE column pairs, grouped by block, with
/// the best value per column in bold and the runner-up underlined.
pub fn markdown_table(rows: &[EvalRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(input("no rows to report"));
    }
    let rows = aggregate(rows);
    let mut datasets: Vec<&str> = Vec::new();
    let mut models: Vec<(&str, &str, f64, u64)> = Vec::new();
    for r in &rows {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
        if !models.iter().any(|m| m.0 == r.model && m.1 == r.variant) {
            models.push((&r.model, &r.variant, r.flops, r.params));
        }
    }
    // Stable sort keeps first-seen order inside each block.
    models.sort_by_key(|m| Block::of(m.1));
    let cell = |m: &(&str, &str, f64, u64), d: &str| {
        rows.iter().find(|r| r.model == m.0 && r.variant == m.1 && r.dataset == d)
    };
    let mut columns: Vec<Vec<Option<f64>>> = Vec::new();
    for d in &datasets {
        columns.push(models.iter().map(|m| cell(m, d).map(|r| r.mae)).collect());
        columns.push(models.iter().map(|m| cell(m, d).map(|r| r.rmse)).collect());
    }
    let marks: Vec<_> = columns.iter().map(|c| podium(c)).collect();

    let mut out = String::from("| Model | Params (e6) |");
    for d in &datasets {
        out.push_str(&format!(" {d} MAE | {d} RMSE |"));
    }
    out.push_str(" FLOPs (e8) |\n|---|---:|");
    out.push_str(&"---:|".repeat(2 * datasets.len()));
    out.push_str("---:|\n");
    let mut block = None;
    for (i, m) in models.iter().enumerate() {
        let b = Block::of(m.1);
        if block != Some(b) {
            out.push_str(&format!("| *{}* |{}\n", b.title(), " |".repeat(2 * datasets.len() + 2)));
            block = Some(b);
        }
        out.push_str(&format!("| {} | {:.2} |", m.0, m.3 as f64 / 1e6));
        for (col, (best, second)) in columns.iter().zip(&marks) {
            match col[i] {
                Some(v) if *best == Some(i) => out.push_str(&format!(" **{v:.2}** |")),
                Some(v) if *second == Some(i) => out.push_str(&format!(" <u>{v:.2}</u> |")),
                Some(v) => out.push_str(&format!(" {v:.2} |")),
                None => out.push_str(" - |"),
            }
        }
        out.push_str(&format!(" {:.2} |\n", m.2 / 1e8));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub markdown: PathBuf,
}

/// Writes `results.csv` (every row, plus seed means where a group has
/// several seeds) and `results.md`.
pub fn emit_report(rows: &[EvalRow], dir: &Path) -> Result<ReportFiles> {
    let table = markdown_table(rows)?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut all = rows.to_vec();
    let singles = aggregate(rows);
    all.extend(singles.into_iter().filter(|r| r.seed.is_none() && !rows.contains(r)));
    let files = ReportFiles { csv: dir.join("results.csv"), markdown: dir.join("results.md") };
    write_csv(&all, &files.csv)?;
    std::fs::write(&files.markdown, table).map_err(io_err(&files.markdown))?;
    Ok(files)
}
