//! Artifact formats and the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use gfflab_core::clusters::ClusterPartition;
use gfflab_core::fps::{InterfaceCurve, MetricSubset};
use gfflab_core::gff::FieldSample;
use gfflab_core::soups::{SoupSample, TrajectoryKind};
use serde::Serialize;

use crate::error::{Error, Result};

/// Output directory that records every file written to it.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    written: Vec<String>,
}

impl Artifacts {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Artifacts { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn written(&self) -> &[String] {
        &self.written
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.path(name);
        fs::write(&p, content).map_err(|e| Error::io(&p, e))?;
        self.written.push(name.to_string());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name);
        let mut w = csv::Writer::from_path(&p)?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&p, e))?;
        self.written.push(name.to_string());
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldRow {
    pub vertex_id: usize,
    pub x: f64,
    pub y: f64,
    pub value: f64,
}

pub fn field_rows(field: &FieldSample) -> Vec<FieldRow> {
    let pos = field.network().positions();
    (0..field.values().len())
        .map(|v| {
            let [x, y] = pos.map_or([f64::NAN, f64::NAN], |p| p[v]);
            FieldRow { vertex_id: v, x, y, value: field.get(v) }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub traj_id: usize,
    pub kind: &'static str,
    pub step_index: usize,
    pub vertex_id: usize,
    pub holding_time: f64,
}

pub fn trajectory_rows(soup: &SoupSample) -> Vec<TrajectoryRow> {
    let mut rows = Vec::new();
    for (id, t) in soup.trajectories.iter().enumerate() {
        let kind = match t.kind {
            TrajectoryKind::Loop => "loop",
            TrajectoryKind::Excursion => "excursion",
        };
        for (step, (&v, &h)) in t.vertices.iter().zip(&t.holding).enumerate() {
            rows.push(TrajectoryRow { traj_id: id, kind, step_index: step, vertex_id: v, holding_time: h });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterRow {
    pub cluster_id: usize,
    pub trajectory_id: usize,
}

pub fn cluster_rows(p: &ClusterPartition) -> Vec<ClusterRow> {
    let mut rows = Vec::new();
    for (cid, c) in p.clusters().iter().enumerate() {
        for &t in &c.trajectories {
            rows.push(ClusterRow { cluster_id: cid, trajectory_id: t });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeIntervals {
    pub edge_id: usize,
    pub intervals: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetDump {
    pub vertices: Vec<usize>,
    pub edges: Vec<EdgeIntervals>,
}

/// Vertices and closed edge intervals, expressed on base edges for refined networks.
pub fn subset_dump(set: &MetricSubset) -> SubsetDump {
    let net = set.network();
    let vertices = (0..net.vertex_count()).filter(|&v| set.contains_vertex(v)).collect();
    let mut edges: Vec<EdgeIntervals> = Vec::new();
    for e in (0..net.edge_count()).filter(|&e| set.contains_edge(e)) {
        let (id, iv) = match net.edge_origin(e) {
            Some(o) => (o.base_edge, [o.t0, o.t1]),
            None => (e, [0.0, 1.0]),
        };
        match edges.last_mut() {
            Some(last) if last.edge_id == id => match last.intervals.last_mut() {
                Some(prev) if prev[1] == iv[0] => prev[1] = iv[1],
                _ => last.intervals.push(iv),
            },
            _ => edges.push(EdgeIntervals { edge_id: id, intervals: vec![iv] }),
        }
    }
    SubsetDump { vertices, edges }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualEdgeRow {
    pub step: usize,
    pub from_i: i64,
    pub from_j: i64,
    pub to_i: i64,
    pub to_j: i64,
}

pub fn interface_rows(curve: &InterfaceCurve) -> Vec<DualEdgeRow> {
    curve
        .dual_edges()
        .enumerate()
        .map(|(step, (f, g))| DualEdgeRow { step, from_i: f[0], from_j: f[1], to_i: g[0], to_j: g[1] })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use gfflab_core::refine::refine;
    use std::sync::Arc;

    #[test]
    fn refined_subset_merges_intervals() {
        let net = crate::netspec::NetworkSource::Bundled("p3".into()).build().unwrap();
        let r = refine(&net, 2);
        let rn = r.network().clone();
        let mut edges = vec![false; rn.edge_count()];
        // first three quarters of base edge 0, all of base edge 1
        edges[0] = true;
        edges[1] = true;
        edges[2] = true;
        edges[4..8].fill(true);
        let set = MetricSubset::new(Arc::clone(&rn), vec![false; rn.vertex_count()], edges);
        let d = subset_dump(&set);
        assert_eq!(d.edges.len(), 2);
        assert_eq!(d.edges[0].intervals, vec![[0.0, 0.75]]);
        assert_eq!(d.edges[1].intervals, vec![[0.0, 1.0]]);
        assert!(d.vertices.contains(&0) && d.vertices.contains(&2));
    }
}
