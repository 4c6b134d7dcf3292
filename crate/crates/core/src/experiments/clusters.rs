use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::report::{fmt3, to_csv, Report, Table};
use super::Context;
use crate::embedding::{distance, project_2d, EmbeddingSpace};
use crate::error::Result;
use crate::plot::{scatter_svg, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub env_id: usize,
    pub x: f64,
    pub y: f64,
    pub key_x: i32,
    pub key_y: i32,
    pub door_x: i32,
    pub door_y: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub attribute: String,
    /// Mean inter-group over mean intra-group distance; `None` when either
    /// mean is undefined or the intra-group mean is zero.
    pub ratio: Option<f64>,
    pub inter: f64,
    pub intra: f64,
}

/// Cluster-separation ratio of the grouping `group[env_id]`.
pub fn separation_ratio(space: &EmbeddingSpace, group: &BTreeMap<usize, i32>, attribute: &str) -> Separation {
    let ids: Vec<usize> = group.keys().copied().collect();
    let (mut inter, mut n_inter, mut intra, mut n_intra) = (0.0, 0usize, 0.0, 0usize);
    for (i, &a) in ids.iter().enumerate() {
        for &b in &ids[i + 1..] {
            let (Ok(va), Ok(vb)) = (space.vector(a), space.vector(b)) else {
                continue;
            };
            let d = distance(va, vb);
            if group[&a] == group[&b] {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let inter = if n_inter > 0 { inter / n_inter as f64 } else { f64::NAN };
    let intra = if n_intra > 0 { intra / n_intra as f64 } else { f64::NAN };
    let ratio = (inter.is_finite() && intra.is_finite() && intra > 0.0).then(|| inter / intra);
    Separation {
        attribute: attribute.to_string(),
        ratio,
        inter,
        intra,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Report {
    pub projection: Vec<ProjectionRow>,
    pub separations: Vec<Separation>,
}

impl Exp1Report {
    pub fn ratio(&self, attribute: &str) -> Option<f64> {
        self.separations.iter().find(|s| s.attribute == attribute).and_then(|s| s.ratio)
    }

    pub fn projection_csv(&self) -> Result<String> {
        to_csv(&self.projection)
    }

    /// Scatter plot of the projection, coloured by door row.
    pub fn svg(&self) -> String {
        let points: Vec<Point> = self
            .projection
            .iter()
            .map(|r| Point {
                id: r.env_id,
                x: r.x,
                y: r.y,
                class: r.door_y,
                label: format!("env {} key ({}, {}) door row {}", r.env_id, r.key_x, r.key_y, r.door_y),
            })
            .collect();
        scatter_svg(&points, "Environment embeddings (PCA)", "door row")
    }

    /// Writes the results, the summary, the projection CSV and the plot.
    pub fn write_all(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut paths = super::write_report(self, dir)?;
        let proj = dir.join("exp1_projection.csv");
        fs::write(&proj, self.projection_csv()?)?;
        let svg = dir.join("exp1_projection.svg");
        fs::write(&svg, self.svg())?;
        paths.extend([proj, svg]);
        Ok(paths)
    }
}

pub fn run_exp1(ctx: &Context) -> Result<Exp1Report> {
    let proj = project_2d(&ctx.space)?;
    let projection = ctx
        .catalog
        .environments
        .iter()
        .map(|e| {
            let (x, y) = proj[&e.env_id];
            ProjectionRow {
                env_id: e.env_id,
                x,
                y,
                key_x: e.key.x,
                key_y: e.key.y,
                door_x: e.door.x,
                door_y: e.door.y,
            }
        })
        .collect();
    let attrs: [(&str, fn(&crate::gridworld::Environment) -> i32); 3] =
        [("door_row", |e| e.door.y), ("key_x", |e| e.key.x), ("key_y", |e| e.key.y)];
    let separations = attrs
        .iter()
        .map(|(name, f)| {
            let group = ctx.catalog.environments.iter().map(|e| (e.env_id, f(e))).collect();
            separation_ratio(&ctx.space, &group, name)
        })
        .collect();
    Ok(Exp1Report {
        projection,
        separations,
    })
}

impl Report for Exp1Report {
    fn id(&self) -> u8 {
        1
    }

    fn csv(&self) -> Result<String> {
        to_csv(&self.separations)
    }

    fn summary(&self) -> serde_json::Value {
        serde_json::json!({
            "experiment": 1,
            "environments": self.projection.len(),
            "separation": self.separations,
        })
    }

    fn table(&self) -> Table {
        let mut t = Table::new("Experiment 1: cluster separation (inter / intra mean distance)", &["attribute", "inter", "intra", "ratio"]);
        for s in &self.separations {
            t.row(vec![
                s.attribute.clone(),
                fmt3(s.inter),
                fmt3(s.intra),
                s.ratio.map_or_else(|| "degenerate".to_string(), fmt3),
            ]);
        }
        t
    }
}
